//! Acceptance checks. Every test writes one `criterion N ...: PASS|FAIL`
//! line straight to stderr (bypassing capture) before asserting, so a full
//! run prints the whole tally even when some criteria fail.
//!
//! Tests take a global lock: the timing budgets assume nothing else runs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use simrepr::dataset::{record_episodes, render_samples, Manifest, ReprOptions};
use simrepr::edge::{canny, CannyParams, EdgeMask};
use simrepr::featmap::{channel_mean, extract, normalize};
use simrepr::metrics::{intervention_count, velocity_decrease, EvalLog, NEAR_PEDESTRIAN_DISTANCE};
use simrepr::net::{
    prediction_loss, train, train_step, AdamParams, Batch, Checkpoint, EpochLog, LossParams, ModelInfo, Network, NetworkDef, Role, Sample,
    TrainConfig, TrainState,
};
use simrepr::noise::{border_mask, edge_noise, NoiseParams};
use simrepr::policy::{NetworkPolicy, Observer};
use simrepr::repr::{build_bundle, RawObservation};
use simrepr::semantic::{rasterize, CategoryMap};
use simrepr::sim::episode::generate_episodes;
use simrepr::sim::scene::{test_corridor, train_corridor};
use simrepr::sim::{evaluate, Action, CameraIntrinsics, DirectionCommand, EpisodeConfig, EvalConfig, Expert, Policy, Scene, StepContext};
use simrepr::{BBox, DepthImage, Detection, Network64, ReprBundle, ReprKind, RiskCategory, RngStream};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: usize, title: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n:>2} {title}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} {title}: {detail}");
}

fn median(v: &[usize]) -> f64 {
    let mut s = v.to_vec();
    s.sort_unstable();
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2] as f64
    } else {
        (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
    }
}

#[test]
fn c01_edge_noise_statistics() {
    let _g = serial();
    let t = Instant::now();
    let (w, h) = (400, 300);
    let img = DepthImage::filled(w, h, 1.4).unwrap();
    let params = NoiseParams { xi_min: 1.0, xi_max: 1.0, ..NoiseParams::default() };
    let out = edge_noise(&img, &EdgeMask::full(w, h), &params, &RngStream::new(11)).unwrap();
    let elapsed = t.elapsed();
    let n = out.data().len() as f64;
    let mean = out.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = out.data().iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    let pass = (0.00301..=0.00319).contains(&std) && (mean - 1.4).abs() <= 1e-4 && elapsed < Duration::from_secs(1);
    report(1, "edge noise statistics", pass, &format!("n={n} std={std:.6} mean={mean:.6} in {:.3}s", elapsed.as_secs_f64()));
}

#[test]
fn c02_border_mask() {
    let _g = serial();
    let t = Instant::now();
    let (w, h) = (640usize, 480usize);
    let params = NoiseParams::default();
    let (bx, by) = (89, 100);
    let img = DepthImage::filled(w, h, 2.0).unwrap();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let (mut zeroed, mut near) = (0usize, 0usize);
    let mut identity = true;
    for seed in 0..100 {
        let out = border_mask(&img, 0.1, &params, &RngStream::new(seed)).unwrap();
        let mut count = 0;
        for (i, &v) in out.data().iter().enumerate() {
            if v == 0.0 {
                count += 1;
                let (x, y) = (i % w, i / w);
                if x < bx || x >= w - bx || y < by || y >= h - by {
                    near += 1;
                }
            }
        }
        zeroed += count;
        let frac = count as f64 / (w * h) as f64;
        lo = lo.min(frac);
        hi = hi.max(frac);
        identity &= border_mask(&img, 0.0, &params, &RngStream::new(seed)).unwrap() == img;
    }
    let elapsed = t.elapsed();
    let border = near as f64 / zeroed as f64;
    let pass = lo >= 0.095 && hi <= 0.100 && border >= 0.999 && identity && elapsed < Duration::from_secs(5);
    report(
        2,
        "border mask",
        pass,
        &format!(
            "zeroed fraction per seed in [{lo:.4}, {hi:.4}], near border {:.4}%, r=0 identity {identity}, {:.2}s",
            100.0 * border,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c03_canny_oracle() {
    let _g = serial();
    let (w, h) = (64usize, 48usize);
    let params = CannyParams::default();
    let flat = canny(&DepthImage::filled(w, h, 1.5).unwrap(), &params).unwrap().count();
    let step = 32;
    let data = (0..h).flat_map(|_| (0..w).map(move |x| if x < step { 1.0 } else { 2.0 })).collect();
    let mask = canny(&DepthImage::new(w, h, data).unwrap(), &params).unwrap();
    let mut stray = 0;
    let mut rows = vec![false; h];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                // the step lies between columns step-1 and step
                if x + 2 < step || x > step + 1 {
                    stray += 1;
                }
                rows[y] = true;
            }
        }
    }
    let interior = 1..h - 1;
    let marked = interior.clone().filter(|&y| rows[y]).count();
    let cover = marked as f64 / interior.len() as f64;
    let pass = flat == 0 && stray == 0 && cover >= 0.95;
    report(3, "canny oracle", pass, &format!("flat edges {flat}, stray edges {stray}, interior rows marked {:.1}%", 100.0 * cover));
}

#[test]
fn c04_rasterizer_properties() {
    let _g = serial();
    let t = Instant::now();
    let (w, h) = (64usize, 48usize);
    let map = CategoryMap::default();
    let mut rng = RngStream::new(4).rng();
    let (mut perm_bad, mut max_bad, mut support_bad) = (0, 0, 0);
    for _ in 0..1000 {
        let n = rng.random_range(0..8);
        let mut dets: Vec<Detection> = (0..n)
            .map(|_| {
                let x0 = rng.random_range(0..w as u32);
                let y0 = rng.random_range(0..h as u32);
                let x1 = rng.random_range(x0 + 1..=w as u32);
                let y1 = rng.random_range(y0 + 1..=h as u32);
                Detection {
                    class_name: "thing".into(),
                    category: RiskCategory::new(rng.random_range(1..=6)).unwrap(),
                    bbox: BBox::new(x0, y0, x1, y1),
                }
            })
            .collect();
        let img = rasterize(&dets, w, h, &map).unwrap();
        dets.shuffle(&mut rng);
        if rasterize(&dets, w, h, &map).unwrap() != img {
            perm_bad += 1;
        }
        for y in 0..h as u32 {
            for x in 0..w as u32 {
                let covering: Vec<u8> = dets
                    .iter()
                    .filter(|d| d.bbox.x_min <= x && x < d.bbox.x_max && d.bbox.y_min <= y && y < d.bbox.y_max)
                    .map(|d| map.intensity(d.category))
                    .collect();
                let v = img.get(x as usize, y as usize);
                if v != covering.iter().copied().max().unwrap_or(0) {
                    max_bad += 1;
                }
                if (v != 0) != !covering.is_empty() {
                    support_bad += 1;
                }
            }
        }
    }
    let elapsed = t.elapsed();
    let pass = perm_bad == 0 && max_bad == 0 && support_bad == 0 && elapsed < Duration::from_secs(5);
    report(
        4,
        "rasterizer properties",
        pass,
        &format!(
            "1000 sets: permutation mismatches {perm_bad}, max-rule pixel errors {max_bad}, support errors {support_bad}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Mean squared action error plus gamma times the squared dense weights,
/// written out from the definition.
fn oracle_loss(net: &Network64, out: &[f64], targets: &[f64], gamma: f64) -> f64 {
    let n = out.len() / 2;
    let mut pred = 0.0;
    for s in 0..n {
        pred += (out[2 * s] - targets[2 * s]).powi(2) + (out[2 * s + 1] - targets[2 * s + 1]).powi(2);
    }
    let reg: f64 = net
        .blocks()
        .iter()
        .filter(|b| b.role == Role::DenseWeight)
        .map(|b| net.params()[b.range()].iter().map(|w| w * w).sum::<f64>())
        .sum();
    pred / n as f64 + gamma * reg
}

#[test]
fn c05_gradient_check() {
    let _g = serial();
    let t = Instant::now();
    let def = NetworkDef::miniature_dual();
    let mut net = Network64::init(&def, &mut RngStream::new(51).rng()).unwrap();
    let mut rng = RngStream::new(52).rng();
    for b in net.blocks().to_vec() {
        if matches!(b.role, Role::ConvBias | Role::DenseBias) {
            for v in &mut net.params_mut()[b.range()] {
                *v = rng.random_range(0.0..0.1);
            }
        }
    }
    let n = 3;
    let primary: Vec<f64> = (0..n * def.primary_len()).map(|_| rng.random()).collect();
    let semantic: Vec<f64> = (0..n * def.semantic_len()).map(|_| rng.random()).collect();
    let mut commands = vec![0.0; n * 4];
    for s in 0..n {
        commands[s * 4 + rng.random_range(0..4)] = 1.0;
    }
    let targets: Vec<f64> = (0..n).flat_map(|_| [rng.random::<f64>(), rng.random_range(-1.0..1.0)]).collect();
    let gamma = 1e-3;
    let mask_seed = RngStream::new(53);
    let batch = |_: ()| Batch { size: n, primary: &primary, semantic: Some(&semantic), commands: &commands };

    let cache = net.forward_train(&batch(()), &mut mask_seed.rng()).unwrap();
    let (_, d_out) = prediction_loss(cache.output(), &targets, 1.0);
    let mut grad = net.backward(&cache, &d_out).unwrap().grad;
    net.add_regularizer_grad(&mut grad, gamma);

    let blocks = net.blocks().to_vec();
    let mut picks = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        let k = 200 / blocks.len() + usize::from(i < 200 % blocks.len());
        picks.extend((0..k).map(|_| b.offset + rng.random_range(0..b.len())));
    }
    let roles: std::collections::BTreeSet<_> = blocks.iter().map(|b| format!("{:?}", b.role)).collect();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for &i in &picks {
        let orig = net.params()[i];
        let mut at = |v: f64| {
            net.params_mut()[i] = v;
            let c = net.forward_train(&batch(()), &mut mask_seed.rng()).unwrap();
            oracle_loss(&net, c.output(), &targets, gamma)
        };
        let numeric = (at(orig + eps) - at(orig - eps)) / (2.0 * eps);
        net.params_mut()[i] = orig;
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    let elapsed = t.elapsed();
    let pass = picks.len() == 200 && worst < 1e-4 && elapsed < Duration::from_secs(60);
    report(
        5,
        "gradient check",
        pass,
        &format!(
            "{} params over {} blocks ({}), max relative error {worst:.2e}, {:.2}s",
            picks.len(),
            blocks.len(),
            roles.into_iter().collect::<Vec<_>>().join("/"),
            elapsed.as_secs_f64()
        ),
    );
}

const RENDER: (usize, usize) = (128, 96);
const INPUT: (usize, usize) = (64, 48);

fn camera() -> CameraIntrinsics {
    CameraIntrinsics::with_size(RENDER.0, RENDER.1)
}

fn options(kind: ReprKind, seed: u64) -> ReprOptions {
    ReprOptions { kind, noise: NoiseParams::default(), seed, size: INPUT, map: CategoryMap::default() }
}

fn record(scene: &Scene, episodes: usize, steps: usize, seed: u64) -> Manifest {
    let cfg = EpisodeConfig { steps, camera: camera(), ..EpisodeConfig::default() };
    let eps = generate_episodes(scene, &cfg, &CategoryMap::default(), episodes, &RngStream::new(seed)).unwrap();
    record_episodes(None, scene, seed, &cfg, &eps).unwrap()
}

#[test]
fn c06_overfit_one_batch() {
    let _g = serial();
    let scene = train_corridor();
    let manifest = record(&scene, 10, 20, 6);
    let kind = ReprKind::DepthNoiseDet;
    let samples: Vec<Sample> = render_samples(&scene, &manifest, &options(kind, 6)).unwrap().into_iter().step_by(5).take(40).collect();
    let def = NetworkDef::compact(kind);
    let adam = AdamParams::default();
    let rng = RngStream::new(6).named("train");
    let mut state = TrainState::<f32>::new(&def, adam, &rng).unwrap();
    let idx: Vec<usize> = (0..samples.len()).collect();
    let mut dropout = rng.named("dropout").rng();
    let loss = LossParams::default();
    let mut last = f64::NAN;
    for _ in 0..500 {
        last = train_step(&mut state.network, &mut state.adam, &samples, &idx, &loss, &mut dropout).unwrap().1;
    }
    let mut eval = 0.0;
    for s in &samples {
        let [v, w] = state.network.predict(&s.primary, s.semantic.as_deref(), s.command).unwrap();
        eval += (v - f64::from(s.target[0])).powi(2) + loss.lambda * (w - f64::from(s.target[1])).powi(2);
    }
    eval /= samples.len() as f64;
    let pass = samples.len() == 40 && last < 1e-3;
    report(
        6,
        "overfit one batch",
        pass,
        &format!(
            "40 records, 500 Adam steps at lr {}: prediction loss {last:.3e} (dropout {}), {eval:.3e} in inference mode",
            adam.lr, def.dropout
        ),
    );
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const DATA_SEED: u64 = 2024;
const EVAL_SEED: u64 = 7;

struct Corpus {
    scene: Scene,
    manifest: Manifest,
    elapsed: Duration,
}

fn corpus() -> &'static Corpus {
    static C: OnceLock<Corpus> = OnceLock::new();
    C.get_or_init(|| {
        let t = Instant::now();
        let scene = train_corridor();
        let manifest = record(&scene, 200, 20, DATA_SEED);
        Corpus { scene, manifest, elapsed: t.elapsed() }
    })
}

struct Trained {
    checkpoint: Checkpoint,
    logs: Vec<EpochLog>,
}

fn info(kind: ReprKind, seed: u64, cfg: TrainConfig) -> ModelInfo {
    ModelInfo { kind, noise: NoiseParams::default(), camera: camera(), train: cfg, seed }
}

fn train_model(kind: ReprKind, seed: u64) -> Trained {
    let c = corpus();
    let samples = render_samples(&c.scene, &c.manifest, &options(kind, seed)).unwrap();
    let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
    let (state, logs) = train::<f32>(&samples, &NetworkDef::compact(kind), &cfg, &RngStream::new(seed).named("train")).unwrap();
    Trained { checkpoint: Checkpoint::from_state(info(kind, seed, cfg), &state), logs }
}

fn untrained(kind: ReprKind, seed: u64) -> Checkpoint {
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let state = TrainState::<f32>::new(&NetworkDef::compact(kind), cfg.adam, &RngStream::new(seed).named("train")).unwrap();
    Checkpoint::from_state(info(kind, seed, cfg), &state)
}

/// One trial per test route, seeded the way `simrepr eval` seeds them.
fn eval_routes(ck: &Checkpoint, observe: Option<ReprKind>) -> Vec<EvalLog> {
    let scene = test_corridor();
    scene
        .routes
        .iter()
        .map(|route| {
            let env = RngStream::new(EVAL_SEED).named("eval").named(&route.name).substream(0);
            let mut policy = NetworkPolicy::from_checkpoint(ck, CategoryMap::default(), env.named("observation"));
            if let Some(k) = observe {
                policy.observer.kind = k;
            }
            evaluate(&mut policy, &scene, route, &EvalConfig::default(), &env, 0).unwrap()
        })
        .collect()
}

fn interventions(logs: &[EvalLog]) -> Vec<usize> {
    logs.iter().map(intervention_count).collect()
}

struct Behavior {
    trained: Vec<Trained>,
    trained_logs: Vec<Vec<EvalLog>>,
    untrained_logs: Vec<Vec<EvalLog>>,
    elapsed: Duration,
}

fn behavior() -> &'static Behavior {
    static B: OnceLock<Behavior> = OnceLock::new();
    B.get_or_init(|| {
        let t = Instant::now();
        let kind = ReprKind::DepthNoiseDet;
        let trained: Vec<Trained> = SEEDS.iter().map(|&s| train_model(kind, s)).collect();
        let trained_logs = trained.iter().map(|m| eval_routes(&m.checkpoint, None)).collect();
        let untrained_logs = SEEDS.iter().map(|&s| eval_routes(&untrained(kind, s), None)).collect();
        Behavior { trained, trained_logs, untrained_logs, elapsed: corpus().elapsed + t.elapsed() }
    })
}

#[test]
fn c07_end_to_end_behavior() {
    let _g = serial();
    let b = behavior();
    let totals = |runs: &[Vec<EvalLog>]| runs.iter().map(|l| interventions(l).iter().sum()).collect::<Vec<usize>>();
    let (tr, un) = (totals(&b.trained_logs), totals(&b.untrained_logs));
    let decreases: Vec<f64> = b.trained_logs.iter().flatten().filter_map(|l| velocity_decrease(l, NEAR_PEDESTRIAN_DISTANCE).ok()).collect();
    let vd = decreases.iter().sum::<f64>() / decreases.len().max(1) as f64;
    let losses: Vec<String> =
        b.trained.iter().map(|m| format!("{:.3}->{:.3}", m.logs[0].prediction_loss, m.logs.last().unwrap().prediction_loss)).collect();
    let pass = median(&tr) < median(&un) && !decreases.is_empty() && vd > 0.0 && b.elapsed <= Duration::from_secs(30 * 60);
    report(
        7,
        "end-to-end behavior",
        pass,
        &format!(
            "interventions per seed trained {tr:?} (median {}) vs untrained {un:?} (median {}); velocity decrease {vd:.1}% over {} pedestrian runs; losses [{}]; {:.1} min",
            median(&tr),
            median(&un),
            decreases.len(),
            losses.join(" "),
            b.elapsed.as_secs_f64() / 60.0
        ),
    );
}

#[test]
fn c08_noise_matters() {
    let _g = serial();
    let mut wins = 0;
    let mut rows = Vec::new();
    for &seed in &SEEDS {
        let clean = train_model(ReprKind::Depth, seed);
        let noisy = train_model(ReprKind::DepthNoise, seed);
        let observe = Some(ReprKind::DepthNoise);
        let c = median(&interventions(&eval_routes(&clean.checkpoint, observe)));
        let n = median(&interventions(&eval_routes(&noisy.checkpoint, observe)));
        wins += usize::from(c >= n);
        rows.push(format!("seed {seed}: Depth {c} vs DepthNoise {n}"));
    }
    report(
        8,
        "noise matters",
        wins >= 4,
        &format!("median route interventions on noisy observations, {}; Depth >= DepthNoise in {wins}/5", rows.join(", ")),
    );
}

/// Drives the expert and keeps raw observations that show a pedestrian.
struct Recorder {
    expert: Expert,
    observer: Observer,
    every: usize,
    frames: Vec<(RawObservation, DirectionCommand)>,
}

impl Policy for Recorder {
    fn act(&mut self, ctx: &StepContext<'_>) -> simrepr::Result<Action> {
        if ctx.step.is_multiple_of(self.every) {
            let raw = self.observer.raw(ctx.scene, ctx.pedestrians, &ctx.state.pose);
            if raw.detections.iter().any(|d| d.class_name == "person") {
                self.frames.push((raw, ctx.command));
            }
        }
        Policy::act(&mut self.expert, ctx)
    }

    fn reset(&mut self) {
        Policy::reset(&mut self.expert)
    }
}

fn pedestrian_frames() -> Vec<(RawObservation, DirectionCommand)> {
    let scene = test_corridor();
    let observer = Observer {
        kind: ReprKind::DepthNoiseDet,
        noise: NoiseParams::default(),
        camera: camera(),
        size: INPUT,
        map: CategoryMap::default(),
    };
    let mut rec = Recorder { expert: Expert::default(), observer, every: 5, frames: Vec::new() };
    for route in &scene.routes {
        let env = RngStream::new(EVAL_SEED).named("eval").named(&route.name).substream(0);
        evaluate(&mut rec, &scene, route, &EvalConfig::default(), &env, 0).unwrap();
    }
    rec.frames
}

/// Whether the mean response inside the pedestrian boxes beats the rest.
fn responds_inside(net: &Network<f32>, bundle: &ReprBundle, raw: &RawObservation, cmd: DirectionCommand) -> Option<bool> {
    let (mean, w, h) = channel_mean(net, bundle, cmd, 1, None).unwrap();
    let boxes: Vec<BBox> = raw.detections.iter().filter(|d| d.class_name == "person").map(|d| d.bbox.scaled(RENDER, (w, h))).collect();
    let (mut inside, mut outside) = ((0.0, 0usize), (0.0, 0usize));
    for y in 0..h {
        for x in 0..w {
            let hit = boxes.iter().any(|b| b.contains(x as u32, y as u32));
            let acc = if hit { &mut inside } else { &mut outside };
            acc.0 += mean[y * w + x];
            acc.1 += 1;
        }
    }
    (inside.1 > 0 && outside.1 > 0).then(|| inside.0 / inside.1 as f64 > outside.0 / outside.1 as f64)
}

#[test]
fn c09_feature_maps() {
    let _g = serial();
    let b = behavior();
    let net = &b.trained[0].checkpoint.network;
    let def = net.def().clone();
    let frames = pedestrian_frames();
    let map = CategoryMap::default();
    let noise = NoiseParams::default();
    let probe = build_bundle(ReprKind::DepthNoiseDet, &frames[0].0, INPUT, &noise, &map, &RngStream::new(9)).unwrap();

    let mut shape_ok = true;
    for (e, enc) in [&def.encoder1, def.encoder2.as_ref().unwrap()].into_iter().enumerate() {
        let dims = enc.conv_dims(def.height, def.width);
        for (layer, &(_, h, w)) in dims.iter().enumerate() {
            let m = extract(net, &probe, DirectionCommand::MoveForward, e, Some(layer)).unwrap();
            shape_ok &= m.dims() == (w, h);
        }
        shape_ok &= extract(net, &probe, DirectionCommand::MoveForward, e, Some(dims.len())).is_err();
    }
    let small = probe.resize_nearest(32, 24).unwrap();
    shape_ok &= extract(net, &small, DirectionCommand::MoveForward, 0, None).is_err();

    let fresh = Network::<f32>::init(&def, &mut RngStream::new(90).rng()).unwrap();
    let blank = ReprBundle::new(
        ReprKind::DepthNoiseDet,
        simrepr::PrimaryImage::Depth(DepthImage::filled(INPUT.0, INPUT.1, 0.0).unwrap()),
        Some(simrepr::GrayImage::zeros(INPUT.0, INPUT.1).unwrap()),
    )
    .unwrap();
    let mut constant_ok = true;
    for e in 0..2 {
        let m = extract(&fresh, &blank, DirectionCommand::MoveForward, e, None).unwrap();
        constant_ok &= m.data().iter().all(|&v| v == m.data()[0]);
    }
    constant_ok &= normalize(&[0.7; 12], 4, 3).unwrap().data().iter().all(|&v| v == 0);

    let mut per_model = Vec::new();
    let (mut hits, mut total) = (0usize, 0usize);
    for m in &b.trained {
        let ck = &m.checkpoint;
        let (mut h, mut n) = (0, 0);
        for (i, (raw, cmd)) in frames.iter().enumerate() {
            let stream = RngStream::new(ck.info.seed).named("featmap").substream(i as u64);
            let bundle = build_bundle(ck.info.kind, raw, INPUT, &noise, &map, &stream).unwrap();
            if let Some(inside) = responds_inside(&ck.network, &bundle, raw, *cmd) {
                h += usize::from(inside);
                n += 1;
            }
        }
        per_model.push(format!("{:.0}%", 100.0 * h as f64 / n.max(1) as f64));
        hits += h;
        total += n;
    }
    let frac = hits as f64 / total.max(1) as f64;
    let pass = shape_ok && constant_ok && total > 0 && frac >= 0.8;
    report(
        9,
        "feature maps",
        pass,
        &format!(
            "shape contract {shape_ok}, constant input {constant_ok}; inside > outside on {hits}/{total} frames ({:.1}%), per model [{}]",
            100.0 * frac,
            per_model.join(" ")
        ),
    );
}

#[test]
fn c10_inference_budget() {
    let _g = serial();
    let kind = ReprKind::DepthNoiseDet;
    let def = NetworkDef::reference(kind);
    assert_eq!((def.width, def.height), (256, 192));
    let net = Network::<f32>::init(&def, &mut RngStream::new(10).rng()).unwrap();
    let mut rng = RngStream::new(11).rng();
    let p: Vec<f32> = (0..def.primary_len()).map(|_| rng.random()).collect();
    let s: Vec<f32> = (0..def.semantic_len()).map(|_| rng.random()).collect();
    net.predict(&p, Some(&s), DirectionCommand::MoveForward).unwrap();
    let frames = 30;
    let t = Instant::now();
    for _ in 0..frames {
        net.predict(&p, Some(&s), DirectionCommand::MoveForward).unwrap();
    }
    let ms = t.elapsed().as_secs_f64() * 1000.0 / frames as f64;
    report(10, "inference budget", ms < 50.0, &format!("{ms:.1} ms/frame at 256x192, dual encoder"));
}

fn run_cli(workers: usize, root: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_simrepr"))
        .args(args)
        .current_dir(root)
        .env("SIMREPR_WORKERS", workers.to_string())
        .output()
        .unwrap();
    assert!(out.status.success(), "simrepr {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

/// Runs every seeded subcommand in a fresh directory; returns the files
/// written and the stdout of each command.
fn pipeline(workers: usize) -> (BTreeMap<String, Vec<u8>>, Vec<String>) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let steps: [&[&str]; 8] = [
        &[
            "render",
            "--scene",
            "train_corridor",
            "--episodes",
            "3",
            "--steps",
            "12",
            "--seed",
            "7",
            "--width",
            "128",
            "--height",
            "96",
            "--out",
            "data",
        ],
        &[
            "augment",
            "--manifest",
            "data/manifest.jsonl",
            "--kind",
            "DepthNoiseDet",
            "--seed",
            "3",
            "--width",
            "64",
            "--height",
            "48",
            "--out",
            "aug",
        ],
        &["augment", "--manifest", "data/manifest.jsonl", "--kind", "RgbNoise", "--seed", "3", "--out", "aug_rgb"],
        &[
            "train",
            "--dataset",
            "data/manifest.jsonl",
            "--kind",
            "DepthNoiseDet",
            "--preset",
            "compact",
            "--epochs",
            "2",
            "--seed",
            "5",
            "--out-checkpoint",
            "model.ckpt",
        ],
        &[
            "eval",
            "--checkpoint",
            "model.ckpt",
            "--scene",
            "test_corridor",
            "--route",
            "r3_north_loop",
            "--trials",
            "2",
            "--seed",
            "9",
            "--out",
            "eval",
        ],
        &["eval", "--expert", "--scene", "test_corridor", "--route", "r1_center_north", "--seed", "9", "--out", "expert"],
        &[
            "featmap",
            "--checkpoint",
            "model.ckpt",
            "--manifest",
            "data/manifest.jsonl",
            "--limit",
            "4",
            "--seed",
            "4",
            "--palette",
            "viridis",
            "--out",
            "maps",
        ],
        &["summarize", "eval/logs/r3_north_loop_000.jsonl", "eval/logs/r3_north_loop_001.jsonl", "model.log"],
    ];
    let stdout = steps.iter().map(|args| run_cli(workers, root, args)).collect();
    (tree(root), stdout)
}

#[test]
fn c11_determinism() {
    let _g = serial();
    let (files_a, out_a) = pipeline(1);
    let (files_b, out_b) = pipeline(1);
    let (files_c, out_c) = pipeline(2);
    let differing = |x: &BTreeMap<String, Vec<u8>>| {
        files_a.keys().chain(x.keys()).filter(|k| files_a.get(*k) != x.get(*k)).cloned().collect::<std::collections::BTreeSet<_>>()
    };
    let (rerun, workers) = (differing(&files_b), differing(&files_c));
    let pass = rerun.is_empty() && workers.is_empty() && out_a == out_b && out_a == out_c;
    report(
        11,
        "determinism",
        pass,
        &format!(
            "{} files from render/augment/train/eval/featmap/summarize; differing on rerun {rerun:?}, across worker counts {workers:?}, stdout equal {}",
            files_a.len(),
            out_a == out_b && out_a == out_c
        ),
    );
}
