use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde_json::{json, Value};

use simrepr::dataset::{self, load_samples, read_manifest, write_bundle, Manifest, ReprOptions};
use simrepr::featmap::{extract, recolor};
use simrepr::metrics::{report_from, summarize_run, EvalLog, Report};
use simrepr::net::{self, AdamParams, Checkpoint, EpochLog, LossParams, ModelInfo, NetworkDef, TrainConfig, TrainState};
use simrepr::noise::NoiseParams;
use simrepr::policy::NetworkPolicy;
use simrepr::semantic::CategoryMap;
use simrepr::sim::{evaluate, generate_episodes, CameraIntrinsics, EpisodeConfig, EvalConfig, Expert, Policy, Scene};
use simrepr::{ReprKind, RngStream};

use crate::config::{read_struct, ConfigFile, Resolver};
use crate::Failure;

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::runtime(format!("{}: {e}", path.display()))
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn parse_kind(s: &str) -> Result<ReprKind, Failure> {
    s.parse().map_err(|e: simrepr::Error| Failure::usage(e.to_string()))
}

/// `--noise-config` file, else the config file's `[noise]` table, else defaults.
fn noise_params(flag: Option<&Path>, file: &ConfigFile) -> Result<NoiseParams, Failure> {
    let noise = match (flag, file.section("noise")?) {
        (Some(p), _) => {
            eprintln!("config noise: {} (flag)", p.display());
            read_struct(p)?
        }
        (None, Some(t)) => {
            eprintln!("config noise: [noise] (config)");
            toml::Value::Table(t.clone()).try_into().map_err(|e| Failure::usage(format!("config noise: {e}")))?
        }
        (None, None) => {
            eprintln!("config noise: built-in (default)");
            NoiseParams::default()
        }
    };
    noise.validate()?;
    Ok(noise)
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Built-in scene name or scene JSON file.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Control steps per episode.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    recovery_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Output directory; receives `manifest.jsonl` and `images/`.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn render(a: RenderArgs, file: &ConfigFile) -> Result<Value, Failure> {
    let mut r = Resolver::new(file, "render")?;
    let defaults = EpisodeConfig::default();
    let scene_name: String = r.get("scene", a.scene, "train_corridor".into())?;
    let episodes = r.get("episodes", a.episodes, 10)?;
    let steps = r.get("steps", a.steps, defaults.steps)?;
    let recovery_fraction = r.get("recovery-fraction", a.recovery_fraction, defaults.recovery_fraction)?;
    let seed = r.get("seed", a.seed, 0)?;
    let width = r.get("width", a.width, defaults.camera.width)?;
    let height = r.get("height", a.height, defaults.camera.height)?;
    let out: String = r.require("out", a.out.map(|p| p.display().to_string()))?;
    r.print();
    let out = PathBuf::from(out);
    let cfg = EpisodeConfig { steps, recovery_fraction, camera: CameraIntrinsics::with_size(width, height), ..defaults };
    cfg.validate()?;
    let scene = Scene::resolve(&scene_name)?;
    let map = CategoryMap::default();
    let eps = generate_episodes(&scene, &cfg, &map, episodes, &RngStream::new(seed))?;
    std::fs::create_dir_all(&out).map_err(io_at(&out))?;
    let manifest = dataset::record_episodes(Some(&out), &scene, seed, &cfg, &eps)?;
    let path = out.join("manifest.jsonl");
    manifest.save(&path)?;
    Ok(json!({ "episodes": episodes, "records": manifest.records.len(), "manifest": path }))
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// One of Rgb, RgbNoise, Depth, DepthNoise, SegFc, SegPsp, DepthDet, DepthNoiseDet.
    #[arg(long)]
    kind: Option<String>,
    /// Noise parameters (TOML or JSON).
    #[arg(long)]
    noise_config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output size; defaults to the render size.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn augment(a: AugmentArgs, file: &ConfigFile) -> Result<Value, Failure> {
    let mut r = Resolver::new(file, "augment")?;
    let manifest_path = PathBuf::from(r.require::<String>("manifest", a.manifest.map(|p| p.display().to_string()))?);
    let kind = parse_kind(&r.require::<String>("kind", a.kind)?)?;
    let seed = r.get("seed", a.seed, 0)?;
    let width = r.optional("width", a.width)?;
    let height = r.optional("height", a.height)?;
    let out = PathBuf::from(r.require::<String>("out", a.out.map(|p| p.display().to_string()))?);
    r.print();
    let noise = noise_params(a.noise_config.as_deref(), file)?;
    let manifest = read_manifest(&manifest_path)?;
    let cam = manifest.header.config.camera;
    let size = (width.unwrap_or(cam.width), height.unwrap_or(cam.height));
    let opts = ReprOptions { kind, noise, seed, size, map: CategoryMap::default() };
    let root = manifest_root(&manifest_path);
    std::fs::create_dir_all(&out).map_err(io_at(&out))?;
    let index_path = out.join("index.jsonl");
    let mut index = BufWriter::new(File::create(&index_path).map_err(io_at(&index_path))?);
    writeln!(
        index,
        "{}",
        json!({ "format": "simrepr-augment", "version": 1, "kind": kind, "seed": seed, "width": size.0, "height": size.1, "noise": noise })
    )?;
    let n = manifest.records.len();
    for start in (0..n).step_by(256) {
        let items = dataset::materialize_with(&manifest.records, start..(start + 256).min(n), |rec| dataset::load_raw(&root, rec), &opts)?;
        let files = items
            .par_iter()
            .map(|it| {
                let rec = &manifest.records[it.index];
                write_bundle(&it.bundle, &out, &format!("e{:05}_s{:04}", rec.episode, rec.step))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (it, f) in items.iter().zip(files) {
            writeln!(index, "{}", json!({ "index": it.index, "files": f, "command": it.command, "action": it.action }))?;
        }
    }
    index.flush()?;
    Ok(json!({ "kind": kind, "records": n, "out": out }))
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Manifest written by `render`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// `single` or `dual` encoder.
    #[arg(long)]
    arch: Option<String>,
    /// Representation kind; defaults to DepthNoiseDet (dual) or DepthNoise (single).
    #[arg(long)]
    kind: Option<String>,
    /// Network size: `reference` (256x192) or `compact` (64x48).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_config: Option<PathBuf>,
    #[arg(long)]
    out_checkpoint: Option<PathBuf>,
    /// Per-epoch JSON lines; defaults to the checkpoint path with a `.log` extension.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Continue from `--out-checkpoint` if it exists.
    #[arg(long)]
    resume: bool,
}

pub fn train(a: TrainArgs, file: &ConfigFile) -> Result<Value, Failure> {
    let mut r = Resolver::new(file, "train")?;
    let dataset_path = PathBuf::from(r.require::<String>("dataset", a.dataset.map(|p| p.display().to_string()))?);
    let arch: String = r.get("arch", a.arch, "dual".into())?;
    let dual = match arch.as_str() {
        "dual" => true,
        "single" => false,
        other => return Err(Failure::usage(format!("--arch must be single or dual, got `{other}`"))),
    };
    let default_kind = if dual { "DepthNoiseDet" } else { "DepthNoise" };
    let kind = parse_kind(&r.get::<String>("kind", a.kind, default_kind.into())?)?;
    if kind.has_semantic() != dual {
        return Err(Failure::usage(format!("kind {kind} does not fit the {arch} architecture")));
    }
    let preset: String = r.get("preset", a.preset, "reference".into())?;
    let def = match preset.as_str() {
        "reference" => NetworkDef::reference(kind),
        "compact" => NetworkDef::compact(kind),
        other => return Err(Failure::usage(format!("--preset must be reference or compact, got `{other}`"))),
    };
    let defaults = TrainConfig::default();
    let epochs = r.get("epochs", a.epochs, defaults.epochs)?;
    let batch_size = r.get("batch-size", a.batch_size, defaults.batch_size)?;
    let lr = r.get("lr", a.lr, defaults.adam.lr)?;
    let seed = r.get("seed", a.seed, 0)?;
    let ck_path = PathBuf::from(r.require::<String>("out-checkpoint", a.out_checkpoint.map(|p| p.display().to_string()))?);
    let log_path = a.log.unwrap_or_else(|| ck_path.with_extension("log"));
    r.print();
    if batch_size == 0 || !(lr > 0.0 && lr.is_finite()) {
        return Err(Failure::usage("batch size and learning rate must be positive"));
    }
    let noise = noise_params(a.noise_config.as_deref(), file)?;
    let cfg = TrainConfig { epochs, batch_size, adam: AdamParams { lr, ..defaults.adam }, loss: LossParams::default() };
    let manifest: Manifest = read_manifest(&dataset_path)?;
    let info = ModelInfo { kind, noise, camera: manifest.header.config.camera, train: cfg, seed };

    let rng = RngStream::new(seed).named("train");
    let resumed = a.resume && ck_path.exists();
    let mut state = if resumed {
        let ck = Checkpoint::load(&ck_path)?;
        if ck.info.kind != kind || ck.info.seed != seed || ck.info.noise != noise || ck.network.def() != &def {
            return Err(Failure::usage("checkpoint does not match the requested kind, seed, noise or network"));
        }
        ck.into_state(cfg.adam)
    } else {
        TrainState::new(&def, cfg.adam, &rng)?
    };
    let opts = ReprOptions { kind, noise, seed, size: (def.width, def.height), map: CategoryMap::default() };
    let samples = load_samples(&manifest, &manifest_root(&dataset_path), &opts)?;
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(resumed)
        .write(true)
        .truncate(!resumed)
        .open(&log_path)
        .map_err(io_at(&log_path))?;
    let logs = net::resume(&mut state, &samples, &cfg, &rng, |l: &EpochLog, s| {
        let line = serde_json::to_string(l).expect("log serializes");
        println!("{line}");
        writeln!(log, "{line}")?;
        Checkpoint::from_state(info.clone(), s).save(&ck_path)
    })?;
    if logs.is_empty() && !ck_path.exists() {
        Checkpoint::from_state(info.clone(), &state).save(&ck_path)?;
    }
    Ok(json!({
        "checkpoint": ck_path,
        "epochs_completed": state.epochs_completed,
        "records": samples.len(),
        "final_loss": logs.last().map(|l| l.loss),
    }))
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, conflicts_with = "expert")]
    checkpoint: Option<PathBuf>,
    /// Drive with the scripted expert instead of a network.
    #[arg(long)]
    expert: bool,
    #[arg(long)]
    scene: Option<String>,
    /// Route name, or `all`.
    #[arg(long)]
    route: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Observe with this kind instead of the one the model was trained on.
    #[arg(long)]
    observe_kind: Option<String>,
    /// Time limit as a multiple of the route's minimum driving time.
    #[arg(long)]
    time_factor: Option<f64>,
    /// Directory for per-trial logs and the report.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval(a: EvalArgs, file: &ConfigFile) -> Result<Value, Failure> {
    let mut r = Resolver::new(file, "eval")?;
    let scene_name: String = r.get("scene", a.scene, "test_corridor".into())?;
    let route_name: String = r.get("route", a.route, "all".into())?;
    let trials = r.get("trials", a.trials, 1)?;
    let seed = r.get("seed", a.seed, 0)?;
    let defaults = EvalConfig::default();
    let time_factor = r.get("time-factor", a.time_factor, defaults.time_factor)?;
    let observe = r.optional::<String>("observe-kind", a.observe_kind)?;
    let out = r.optional::<String>("out", a.out.map(|p| p.display().to_string()))?.map(PathBuf::from);
    let ck_path = if a.expert { None } else { Some(r.require::<String>("checkpoint", a.checkpoint.map(|p| p.display().to_string()))?) };
    r.print();
    if trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }
    if !(time_factor > 0.0) {
        return Err(Failure::usage("--time-factor must be positive"));
    }
    let scene = Scene::resolve(&scene_name)?;
    let routes: Vec<_> = if route_name == "all" { scene.routes.iter().collect() } else { vec![scene.route(&route_name)?] };
    let ck = ck_path.map(|p| Checkpoint::load(Path::new(&p))).transpose()?;
    let observe = observe.map(|k| parse_kind(&k)).transpose()?;
    if let (Some(k), Some(ck)) = (observe, &ck) {
        if k.has_semantic() != ck.info.kind.has_semantic() || k.primary_channels() != ck.info.kind.primary_channels() {
            return Err(Failure::usage(format!("cannot observe with {k} for a {} model", ck.info.kind)));
        }
    }
    let cfg = EvalConfig { time_factor, ..defaults };
    let jobs: Vec<(usize, usize)> = (0..routes.len()).flat_map(|ri| (0..trials).map(move |t| (ri, t))).collect();
    let logs = jobs
        .par_iter()
        .map(|&(ri, t)| {
            let route = routes[ri];
            let env = RngStream::new(seed).named("eval").named(&route.name).substream(t as u64);
            let mut policy: Box<dyn Policy> = match &ck {
                Some(ck) => {
                    let mut p = NetworkPolicy::from_checkpoint(ck, CategoryMap::default(), env.named("observation"));
                    if let Some(k) = observe {
                        p.observer.kind = k;
                    }
                    Box::new(p)
                }
                None => Box::new(Expert::default()),
            };
            evaluate(policy.as_mut(), &scene, route, &cfg, &env, t)
        })
        .collect::<Result<Vec<EvalLog>, _>>()?;
    let report = report_from(logs.iter().map(|l| summarize_run(&format!("{}/{}", l.route, l.trial), l)).collect());
    print!("{}", report.table());
    if let Some(out) = &out {
        let dir = out.join("logs");
        std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
        for l in &logs {
            let p = dir.join(format!("{}_{:03}.jsonl", l.route, l.trial));
            std::fs::write(&p, l.to_jsonl()).map_err(io_at(&p))?;
        }
        std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report).expect("report serializes"))?;
        std::fs::write(out.join("report.txt"), report.table())?;
    }
    Ok(json!({
        "runs": logs.len(),
        "mean_interventions": report.mean_interventions,
        "mean_time_min": report.mean_time_min,
        "mean_velocity_decrease": report.mean_velocity_decrease,
    }))
}

#[derive(Args, Debug)]
pub struct FeatmapArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Conv layer; defaults to the middle of the stack.
    #[arg(long)]
    layer: Option<usize>,
    /// Encoder: 0 primary, 1 detection image. Defaults to the last one.
    #[arg(long)]
    encoder: Option<usize>,
    /// `gray` or `viridis`.
    #[arg(long)]
    palette: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Only the first N records.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn featmap(a: FeatmapArgs, file: &ConfigFile) -> Result<Value, Failure> {
    let mut r = Resolver::new(file, "featmap")?;
    let ck_path = PathBuf::from(r.require::<String>("checkpoint", a.checkpoint.map(|p| p.display().to_string()))?);
    let manifest_path = PathBuf::from(r.require::<String>("manifest", a.manifest.map(|p| p.display().to_string()))?);
    let layer = r.optional("layer", a.layer)?;
    let encoder = r.optional("encoder", a.encoder)?;
    let palette: String = r.get("palette", a.palette, "gray".into())?;
    let seed = r.get("seed", a.seed, 0)?;
    let limit = r.optional("limit", a.limit)?;
    let out = PathBuf::from(r.require::<String>("out", a.out.map(|p| p.display().to_string()))?);
    r.print();
    simrepr::featmap::palette_color(&palette, 0)?;
    let ck = Checkpoint::load(&ck_path)?;
    let def = ck.network.def();
    let encoder = encoder.unwrap_or(if def.is_dual() { 1 } else { 0 });
    let n_conv = ck.network.conv_layers(encoder).ok_or_else(|| Failure::usage(format!("network has no encoder {encoder}")))?;
    if layer.is_some_and(|l| l >= n_conv) {
        return Err(Failure::usage(format!("--layer must be below {n_conv}")));
    }
    let manifest = read_manifest(&manifest_path)?;
    let n = limit.map_or(manifest.records.len(), |l| l.min(manifest.records.len()));
    let opts = ReprOptions { kind: ck.info.kind, noise: ck.info.noise, seed, size: (def.width, def.height), map: CategoryMap::default() };
    let root = manifest_root(&manifest_path);
    std::fs::create_dir_all(&out).map_err(io_at(&out))?;
    for start in (0..n).step_by(256) {
        let items = dataset::materialize_with(&manifest.records, start..(start + 256).min(n), |rec| dataset::load_raw(&root, rec), &opts)?;
        items.par_iter().try_for_each(|it| -> Result<(), simrepr::Error> {
            let rec = &manifest.records[it.index];
            let map = extract(&ck.network, &it.bundle, rec.command, encoder, layer)?;
            dataset::write_rgb_png(&recolor(&map, &palette)?, &out.join(format!("e{:05}_s{:04}.png", rec.episode, rec.step)))
        })?;
    }
    Ok(json!({ "images": n, "encoder": encoder, "layer": layer.unwrap_or(n_conv / 2), "out": out }))
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    /// Evaluation log files (`eval --out`) or training logs (`train --log`).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

pub fn summarize(a: SummarizeArgs, _file: &ConfigFile) -> Result<Value, Failure> {
    let mut evals = Vec::new();
    let mut epochs: Vec<EpochLog> = Vec::new();
    for p in &a.inputs {
        let text = std::fs::read_to_string(p).map_err(io_at(p))?;
        if let Ok(l) = EvalLog::from_jsonl(&text) {
            evals.push(summarize_run(&format!("{}/{}", l.route, l.trial), &l));
            continue;
        }
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e = serde_json::from_str(line)
                .map_err(|e| Failure::usage(format!("{}:{}: neither an evaluation log nor a training log: {e}", p.display(), i + 1)))?;
            epochs.push(e);
        }
    }
    let mut out = serde_json::Map::new();
    if !evals.is_empty() {
        let report: Report = report_from(evals);
        print!("{}", report.table());
        out.insert("runs".into(), json!(report.runs.len()));
        out.insert("mean_interventions".into(), json!(report.mean_interventions));
        out.insert("mean_time_min".into(), json!(report.mean_time_min));
        out.insert("mean_velocity_decrease".into(), json!(report.mean_velocity_decrease));
    }
    if !epochs.is_empty() {
        println!("{:>6} | {:>12} | {:>15}", "Epoch", "Loss", "Prediction loss");
        for e in &epochs {
            println!("{:>6} | {:>12.6} | {:>15.6}", e.epoch, e.loss, e.prediction_loss);
        }
        out.insert("epochs".into(), json!(epochs.len()));
        out.insert("final_loss".into(), json!(epochs.last().map(|e| e.loss)));
    }
    Ok(Value::Object(out))
}
