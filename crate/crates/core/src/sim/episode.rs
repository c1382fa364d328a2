//! Expert data collection: seeded episodes with normal and recovery starts.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::{render, CameraIntrinsics, Frame, MIN_DETECTION_PIXELS};
use super::expert::{branches, is_intersection, Expert, ExpertParams, Navigator};
use super::geometry::{closest_on_segment, Vec2};
use super::robot::{Action, DirectionCommand, Pose, RobotState};
use super::scene::{Scene, Thing, ROBOT_RADIUS};
use super::world::{clearance, collides, Crowd};
use crate::error::{Error, Result};
use crate::image::Detection;
use crate::rng::RngStream;
use crate::semantic::CategoryMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub steps: usize,
    /// Share of episodes that start next to an obstacle or wall.
    pub recovery_fraction: f64,
    /// Largest gap between robot and geometry at a recovery start, meters.
    pub recovery_gap: f64,
    /// Probability that an episode contains one stop segment.
    pub stop_probability: f64,
    pub stop_steps: usize,
    pub camera: CameraIntrinsics,
    pub expert: ExpertParams,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            recovery_fraction: 0.2,
            recovery_gap: 0.1,
            stop_probability: 0.2,
            stop_steps: 8,
            camera: CameraIntrinsics::default(),
            expert: ExpertParams::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.recovery_fraction) {
            return Err(Error::OutOfRange { what: "recovery fraction", value: self.recovery_fraction });
        }
        if !(0.0..=1.0).contains(&self.stop_probability) {
            return Err(Error::OutOfRange { what: "stop probability", value: self.stop_probability });
        }
        if !(self.recovery_gap >= 0.0) {
            return Err(Error::OutOfRange { what: "recovery gap", value: self.recovery_gap });
        }
        self.camera.validate()
    }
}

/// One control step: the state before acting and what the expert did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub pose: Pose,
    pub pedestrians: Vec<Vec2>,
    pub command: DirectionCommand,
    pub action: Action,
    pub detections: Vec<Detection>,
}

impl StepRecord {
    pub fn render(&self, scene: &Scene, cam: &CameraIntrinsics) -> Frame {
        render(scene, &self.pedestrians, &self.pose, cam)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub index: usize,
    pub recovery: bool,
    /// Gap between the robot and the nearest static geometry at the start.
    pub start_gap: f64,
    /// The rollout ended early on a collision.
    pub truncated: bool,
    pub records: Vec<StepRecord>,
}

/// Exactly `round(fraction * n)` recovery episodes at seeded positions.
pub fn recovery_flags(n: usize, fraction: f64, rng: &RngStream) -> Vec<bool> {
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut flags: Vec<bool> = (0..n).map(|i| i < k).collect();
    flags.shuffle(&mut rng.rng());
    flags
}

fn random_corridor_point<R: Rng>(scene: &Scene, lateral: f64, rng: &mut R) -> (Vec2, Vec2) {
    let e = scene.edges[rng.random_range(0..scene.edges.len())];
    let (a, b) = if rng.random_bool(0.5) { (scene.nodes[e[0]], scene.nodes[e[1]]) } else { (scene.nodes[e[1]], scene.nodes[e[0]]) };
    let dir = (b - a).normalized();
    let len = a.dist(b);
    let s = rng.random_range(0.5..(len - 0.5).max(0.51));
    let off = if lateral > 0.0 { rng.random_range(-lateral..lateral) } else { 0.0 };
    (a + dir * s + dir.perp() * off, dir)
}

/// Collision-free start near a corridor centerline, roughly aligned with it.
pub fn sample_normal_start<R: Rng>(scene: &Scene, pedestrians: &[Vec2], rng: &mut R) -> Result<Pose> {
    for _ in 0..10_000 {
        let (p, dir) = random_corridor_point(scene, 0.3, rng);
        if clearance(scene, pedestrians, p).0 < ROBOT_RADIUS + 0.15 {
            continue;
        }
        let theta = dir.angle() + rng.random_range(-0.25..0.25);
        return Ok(Pose::new(p.x, p.y, theta));
    }
    Err(Error::InvalidValue(format!("scene `{}`: no free start pose found", scene.name)))
}

fn closest_static_point(scene: &Scene, thing: Thing, p: Vec2) -> Vec2 {
    match thing {
        Thing::Wall(i) => closest_on_segment(p, scene.walls[i].a, scene.walls[i].b),
        Thing::Obstacle(i) => scene.obstacles[i].footprint.closest_point(p),
        Thing::Pedestrian(_) => unreachable!("static query"),
    }
}

/// Start touching or nearly touching an obstacle or wall (gap in
/// `[0, max_gap]`), facing roughly toward it.
pub fn sample_recovery_start<R: Rng>(scene: &Scene, pedestrians: &[Vec2], max_gap: f64, rng: &mut R) -> Result<(Pose, f64)> {
    let half = scene.corridor_width / 2.0;
    for _ in 0..10_000 {
        let q = if !scene.obstacles.is_empty() && rng.random_bool(0.5) {
            let o = &scene.obstacles[rng.random_range(0..scene.obstacles.len())];
            let probe = o.footprint.center() + Vec2::from_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)) * 2.0;
            o.footprint.closest_point(probe)
        } else {
            let (p, _) = random_corridor_point(scene, half - ROBOT_RADIUS, rng);
            match scene.static_clearance(p) {
                (_, Some(thing)) => closest_static_point(scene, thing, p),
                _ => continue,
            }
        };
        let gap = if max_gap > 0.0 { rng.random_range(0.0..=max_gap) } else { 0.0 };
        // the nearest corridor-centerline direction gives the free side
        let toward_free = {
            let mut best = (f64::INFINITY, Vec2::default());
            for e in &scene.edges {
                let c = closest_on_segment(q, scene.nodes[e[0]], scene.nodes[e[1]]);
                let d = c.dist(q);
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        };
        let n = (toward_free - q).normalized();
        if n.norm() == 0.0 {
            continue;
        }
        let c = q + n * (ROBOT_RADIUS + gap);
        let (d, _) = scene.static_clearance(c);
        if d < ROBOT_RADIUS || d > ROBOT_RADIUS + max_gap + 1e-9 || scene.centerline_distance(c) > half {
            continue;
        }
        if clearance(scene, pedestrians, c).0 < ROBOT_RADIUS.min(d) {
            continue;
        }
        let theta = (q - c).angle() + rng.random_range(-std::f64::consts::FRAC_PI_3..std::f64::consts::FRAC_PI_3);
        return Ok((Pose::new(c.x, c.y, theta), d - ROBOT_RADIUS));
    }
    Err(Error::InvalidValue(format!("scene `{}`: no recovery start found", scene.name)))
}

/// Rolls out the expert from a seeded start. Commands are `forward` except
/// for a random branch command before each intersection and an optional
/// stop segment.
pub fn generate_episode(
    scene: &Scene,
    cfg: &EpisodeConfig,
    map: &CategoryMap,
    index: usize,
    recovery: bool,
    rng: &RngStream,
) -> Result<Episode> {
    cfg.validate()?;
    let mut crowd = Crowd::randomized(scene, &mut rng.named("crowd").rng());
    let peds = crowd.positions(scene);
    let mut start_rng = rng.named("start").rng();
    let (pose, start_gap) = if recovery {
        sample_recovery_start(scene, &peds, cfg.recovery_gap, &mut start_rng)?
    } else {
        let pose = sample_normal_start(scene, &peds, &mut start_rng)?;
        (pose, scene.static_clearance(pose.position()).0 - ROBOT_RADIUS)
    };
    let mut cmd_rng = rng.named("command").rng();
    let stop_at = if cmd_rng.random_bool(cfg.stop_probability) && cfg.steps > 0 {
        Some(cmd_rng.random_range(0..=cfg.steps.saturating_sub(cfg.stop_steps)))
    } else {
        None
    };
    let mut state = RobotState::at(pose);
    let mut expert = Expert::with_navigator(cfg.expert, Navigator::locate(scene, &pose)?);
    let mut branch_cmd: Option<DirectionCommand> = None;
    let mut records = Vec::with_capacity(cfg.steps);
    let mut truncated = false;
    for step in 0..cfg.steps {
        let peds = crowd.positions(scene);
        let p = state.pose.position();
        let nav = *expert.navigator().expect("navigator is set");
        if branch_cmd.is_none() && nav.approaching(scene, p, &cfg.expert) {
            let options = branches(scene, nav.from, nav.to);
            branch_cmd = Some(if is_intersection(scene, nav.to) {
                options[cmd_rng.random_range(0..options.len())].1
            } else {
                DirectionCommand::MoveForward
            });
        }
        let stopping = stop_at.is_some_and(|s| step >= s && step < s + cfg.stop_steps);
        let command = if stopping { DirectionCommand::Stop } else { branch_cmd.unwrap_or(DirectionCommand::MoveForward) };
        let action = expert.act(scene, &peds, &state, command)?;
        if expert.navigator().map(|n| n.from) != Some(nav.from) {
            branch_cmd = None;
        }
        let frame = render(scene, &peds, &state.pose, &cfg.camera);
        records.push(StepRecord {
            step,
            pose: state.pose,
            pedestrians: peds,
            command,
            action,
            detections: frame.detections(scene, map, MIN_DETECTION_PIXELS),
        });
        state.step(action);
        crowd.step(scene, state.pose.position());
        if collides(scene, &crowd.positions(scene), state.pose.position()) {
            truncated = true;
            break;
        }
    }
    Ok(Episode { index, recovery, start_gap, truncated, records })
}

/// `n` episodes on per-episode substreams, generated in parallel.
pub fn generate_episodes(scene: &Scene, cfg: &EpisodeConfig, map: &CategoryMap, n: usize, rng: &RngStream) -> Result<Vec<Episode>> {
    cfg.validate()?;
    let flags = recovery_flags(n, cfg.recovery_fraction, &rng.named("recovery"));
    let episodes = rng.named("episode");
    (0..n).into_par_iter().map(|i| generate_episode(scene, cfg, map, i, flags[i], &episodes.substream(i as u64))).collect()
}
