//! Dynamic state shared by rollouts: pedestrian clocks and collision queries.

use rand::Rng;

use super::geometry::Vec2;
use super::robot::DT;
use super::scene::{Scene, Thing, ROBOT_RADIUS};

/// Extra gap kept in front of a pedestrian before it waits for the robot.
pub const PEDESTRIAN_YIELD_GAP: f64 = 0.6;

/// Walking clocks of the scene's pedestrians.
#[derive(Debug, Clone, PartialEq)]
pub struct Crowd {
    taus: Vec<f64>,
}

impl Crowd {
    pub fn new(scene: &Scene) -> Self {
        Self { taus: vec![0.0; scene.pedestrians.len()] }
    }

    pub fn from_taus(taus: Vec<f64>) -> Self {
        Self { taus }
    }

    /// Every pedestrian starts at a uniformly random point of its cycle.
    pub fn randomized<R: Rng>(scene: &Scene, rng: &mut R) -> Self {
        Self { taus: scene.pedestrians.iter().map(|p| rng.random_range(0.0..p.period())).collect() }
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn positions(&self, scene: &Scene) -> Vec<Vec2> {
        scene.pedestrians.iter().zip(&self.taus).map(|(p, &t)| p.pose_at(t).0).collect()
    }

    /// Advances every pedestrian one control period. A pedestrian waits
    /// while the robot stands in its walking lane just ahead of it.
    pub fn step(&mut self, scene: &Scene, robot: Vec2) {
        for (def, tau) in scene.pedestrians.iter().zip(&mut self.taus) {
            let (p, dir) = def.pose_at(*tau);
            let rel = robot - p;
            let ahead = rel.dot(dir);
            let lateral = dir.cross(rel).abs();
            let reach = def.radius + ROBOT_RADIUS;
            let blocked = ahead > 0.0 && ahead < reach + PEDESTRIAN_YIELD_GAP && lateral < reach + 0.1;
            if !blocked {
                *tau += DT;
            }
        }
    }
}

/// Distance from `p` to the nearest surface, pedestrians included.
pub fn clearance(scene: &Scene, pedestrians: &[Vec2], p: Vec2) -> (f64, Option<Thing>) {
    let mut best = scene.static_clearance(p);
    for (i, (def, &c)) in scene.pedestrians.iter().zip(pedestrians).enumerate() {
        let d = (c.dist(p) - def.radius).max(0.0);
        if d < best.0 {
            best = (d, Some(Thing::Pedestrian(i)));
        }
    }
    best
}

/// Whether a robot centered at `p` overlaps anything.
pub fn collides(scene: &Scene, pedestrians: &[Vec2], p: Vec2) -> bool {
    clearance(scene, pedestrians, p).0 < ROBOT_RADIUS
}
