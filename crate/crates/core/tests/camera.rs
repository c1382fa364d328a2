use simrepr::sim::camera::Label;
use simrepr::sim::episode::sample_normal_start;
use simrepr::sim::scene::{test_corridor, train_corridor};
use simrepr::sim::{render, CameraIntrinsics, Crowd, Footprint, Pose, Scene, Vec2};
use simrepr::RngStream;

const STEP: f64 = 0.004;

fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a - o).cross(b - o)
}

/// Fraction `s` along `p0 -> p1` where it crosses segment `a b`, if it does.
fn crossing(p0: Vec2, p1: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let (d0, d1) = (cross(a, b, p0), cross(a, b, p1));
    if d0 * d1 > 0.0 || d0 == d1 {
        return None;
    }
    let s = d0 / (d0 - d1);
    let p = p0 + (p1 - p0) * s;
    let along = (p - a).dot(b - a) / (b - a).dot(b - a);
    (0.0..=1.0).contains(&along).then_some(s)
}

/// Marches the 3-D pixel ray in small steps of planar depth and reports the
/// first solid it enters.
fn march(scene: &Scene, peds: &[Vec2], origin: Vec2, dir: Vec2, slope: f64, cam: &CameraIntrinsics) -> (f64, Label) {
    let height = |t: f64| cam.mount_height - slope * t;
    let mut prev = origin;
    let n = (cam.max_range / STEP).ceil() as usize;
    for k in 1..=n {
        let t = k as f64 * STEP;
        let p = origin + dir * t;
        let z = height(t);
        let mut hit: Option<(f64, Label)> = None;
        let mut take = |tt: f64, l: Label| {
            if hit.is_none_or(|(h, _)| tt < h) {
                hit = Some((tt, l));
            }
        };
        for (i, w) in scene.walls.iter().enumerate() {
            if let Some(s) = crossing(prev, p, w.a, w.b) {
                let tt = t - STEP + s * STEP;
                if (0.0..=w.height).contains(&height(tt)) {
                    take(tt, Label::Wall(i as u32));
                }
            }
        }
        for (i, o) in scene.obstacles.iter().enumerate() {
            let inside = match o.footprint {
                Footprint::Box { center, half } => (p.x - center.x).abs() <= half.x && (p.y - center.y).abs() <= half.y,
                Footprint::Cylinder { center, radius } => p.dist(center) <= radius,
            };
            if inside && (0.0..=o.height).contains(&z) {
                take(t, Label::Obstacle(i as u32));
            }
        }
        for (i, (def, &c)) in scene.pedestrians.iter().zip(peds).enumerate() {
            if p.dist(c) <= def.radius && (0.0..=def.height).contains(&z) {
                take(t, Label::Pedestrian(i as u32));
            }
        }
        if scene.floor && z <= 0.0 {
            take(cam.mount_height / slope, Label::Floor);
        }
        if let Some(h) = hit {
            return h;
        }
        prev = p;
    }
    (0.0, Label::Empty)
}

fn check(scene: &Scene, seed: u64) -> (usize, usize, f64) {
    let cam = CameraIntrinsics::with_size(32, 24);
    let mut rng = RngStream::new(seed).rng();
    let crowd = Crowd::randomized(scene, &mut rng);
    let peds = crowd.positions(scene);
    let pose: Pose = sample_normal_start(scene, &peds, &mut rng).unwrap();
    let frame = render(scene, &peds, &pose, &cam);
    let (mut label_miss, mut pixels, mut worst) = (0, 0, 0.0f64);
    for row in 0..cam.height {
        for col in 0..cam.width {
            let (t, label) = march(scene, &peds, pose.position(), cam.column_dir(&pose, col), cam.row_slope(row), &cam);
            pixels += 1;
            if frame.label(col, row) != label {
                label_miss += 1;
                continue;
            }
            worst = worst.max((f64::from(frame.depth.get(col, row)) - t).abs());
        }
    }
    (label_miss, pixels, worst)
}

#[test]
fn render_matches_ray_marching() {
    let (mut miss, mut total, mut worst) = (0, 0, 0.0f64);
    for (scene, seeds) in [(train_corridor(), 0..4), (test_corridor(), 10..14)] {
        for seed in seeds {
            let (m, n, w) = check(&scene, seed);
            miss += m;
            total += n;
            worst = worst.max(w);
        }
    }
    // label disagreements only at grazing silhouettes, a few pixels at most
    assert!(miss * 100 <= total, "{miss} of {total} labels differ");
    assert!(worst <= 2.0 * STEP, "depth error {worst}");
}
