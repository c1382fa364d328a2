//! Scripted expert: pure pursuit along the corridor graph with command-driven
//! branch selection and a linear slowdown near obstacles and pedestrians.

use serde::{Deserialize, Serialize};

use super::geometry::{closest_on_segment, ray_segment, wrap_angle, Vec2};
use super::robot::{Action, DirectionCommand, Pose, RobotState, OMEGA_MAX, V_MAX};
use super::scene::{Scene, ROBOT_RADIUS};
use super::world::collides;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertParams {
    pub lookahead: f64,
    /// Distance to the upcoming node at which the branch is chosen.
    pub decision_radius: f64,
    pub steer_gain: f64,
    /// Heading error above which the robot turns in place.
    pub turn_in_place: f64,
    /// Obstacle distance below which the speed starts dropping.
    pub slowdown_distance: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self { lookahead: 1.0, decision_radius: 2.5, steer_gain: 1.5, turn_in_place: 60f64.to_radians(), slowdown_distance: 2.0 }
    }
}

/// Classifies the turn `from -> via -> to`.
pub fn turn_command(scene: &Scene, from: usize, via: usize, to: usize) -> DirectionCommand {
    let din = (scene.nodes[via] - scene.nodes[from]).normalized();
    let dout = (scene.nodes[to] - scene.nodes[via]).normalized();
    let angle = din.cross(dout).atan2(din.dot(dout));
    if angle.abs() < std::f64::consts::FRAC_PI_4 {
        DirectionCommand::MoveForward
    } else if angle > 0.0 {
        DirectionCommand::TurnLeft
    } else {
        DirectionCommand::TurnRight
    }
}

/// Branches leaving `via` when arriving from `from`, with their commands.
pub fn branches(scene: &Scene, from: usize, via: usize) -> Vec<(usize, DirectionCommand)> {
    let mut out: Vec<_> = scene.neighbors(via).into_iter().filter(|&n| n != from).map(|n| (n, turn_command(scene, from, via, n))).collect();
    if out.is_empty() {
        out.push((from, DirectionCommand::MoveForward));
    }
    out
}

/// Whether a command choice exists at `via` (an intersection, not a bend).
pub fn is_intersection(scene: &Scene, via: usize) -> bool {
    scene.degree(via) >= 3
}

/// Position on the corridor graph: traveling the edge `from -> to`, with the
/// branch after `to` once decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Navigator {
    pub from: usize,
    pub to: usize,
    pub next: Option<usize>,
}

impl Navigator {
    pub fn on_edge(from: usize, to: usize) -> Self {
        Self { from, to, next: None }
    }

    /// Nearest edge, preferring the one best aligned with the heading, and
    /// oriented along it.
    pub fn locate(scene: &Scene, pose: &Pose) -> Result<Self> {
        let p = pose.position();
        let h = pose.heading();
        let dists: Vec<f64> = scene.edges.iter().map(|e| closest_on_segment(p, scene.nodes[e[0]], scene.nodes[e[1]]).dist(p)).collect();
        let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return Err(Error::InvalidValue(format!("scene `{}` has no navigation graph", scene.name)));
        }
        let mut best: Option<(f64, Navigator)> = None;
        for (e, &d) in scene.edges.iter().zip(&dists) {
            if d > min + 0.3 {
                continue;
            }
            let dir = (scene.nodes[e[1]] - scene.nodes[e[0]]).normalized();
            let along = h.dot(dir);
            let nav = if along >= 0.0 { Navigator::on_edge(e[0], e[1]) } else { Navigator::on_edge(e[1], e[0]) };
            if best.as_ref().is_none_or(|(s, _)| along.abs() > *s) {
                best = Some((along.abs(), nav));
            }
        }
        Ok(best.expect("at least one edge is within range").1)
    }

    /// Whether the robot is close enough to `to` for a branch decision.
    pub fn approaching(&self, scene: &Scene, p: Vec2, params: &ExpertParams) -> bool {
        self.next.is_none() && p.dist(scene.nodes[self.to]) < params.decision_radius
    }

    /// Chooses the branch for `cmd` when approaching a node and moves onto
    /// the next edge once the robot has entered it.
    pub fn update(&mut self, scene: &Scene, p: Vec2, cmd: DirectionCommand, params: &ExpertParams) {
        if cmd != DirectionCommand::Stop && self.approaching(scene, p, params) {
            let options = branches(scene, self.from, self.to);
            let pick = options
                .iter()
                .find(|(_, c)| *c == cmd)
                .or_else(|| if options.len() == 1 { options.first() } else { None })
                .or_else(|| options.iter().find(|(_, c)| *c == DirectionCommand::MoveForward))
                .unwrap_or(&options[0]);
            self.next = Some(pick.0);
        }
        if let Some(next) = self.next {
            // entered the next edge once it is nearer than the current one
            let (a, b) = (scene.nodes[self.to], scene.nodes[next]);
            let s = (p - a).dot((b - a).normalized());
            let d_out = closest_on_segment(p, a, b).dist(p);
            let d_in = closest_on_segment(p, scene.nodes[self.from], a).dist(p);
            if s > 0.0 && d_out < d_in {
                *self = Navigator::on_edge(self.to, next);
            }
        }
    }

    fn path(&self, scene: &Scene) -> Vec<Vec2> {
        let mut pts = vec![scene.nodes[self.from], scene.nodes[self.to]];
        match self.next {
            Some(n) => pts.push(scene.nodes[n]),
            None => {
                // keep pursuing straight through until a branch is chosen
                let a = scene.nodes[self.from];
                let b = scene.nodes[self.to];
                pts.push(b + (b - a).normalized() * 2.0);
            }
        }
        pts
    }

    /// Pure-pursuit target: `lookahead` meters along the path past the
    /// closest path point.
    pub fn target(&self, scene: &Scene, p: Vec2, lookahead: f64) -> Vec2 {
        let pts = self.path(scene);
        let mut best = (f64::INFINITY, 0usize, pts[0]);
        for (k, w) in pts.windows(2).enumerate() {
            let q = closest_on_segment(p, w[0], w[1]);
            let d = q.dist(p);
            if d <= best.0 + 1e-9 {
                best = (d, k, q);
            }
        }
        let (_, mut k, mut q) = best;
        let mut rest = lookahead;
        loop {
            let end = pts[k + 1];
            let seg = q.dist(end);
            if rest <= seg {
                return q + (end - q).normalized() * rest;
            }
            rest -= seg;
            k += 1;
            q = end;
            if k + 1 >= pts.len() {
                return end;
            }
        }
    }
}

/// Distance along the heading to the nearest static surface in the robot's
/// lane, sampled with five parallel rays across its width.
fn lane_distance(scene: &Scene, pose: &Pose, max: f64) -> f64 {
    let h = pose.heading();
    let left = h.perp();
    let mut best = max;
    for off in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let o = pose.position() + left * (off * (ROBOT_RADIUS + 0.05));
        for w in &scene.walls {
            if let Some(t) = ray_segment(o, h, w.a, w.b) {
                best = best.min(t);
            }
        }
        for ob in &scene.obstacles {
            if let Some((t, _)) = ob.footprint.ray_span(o, h) {
                best = best.min(t);
            }
        }
    }
    best
}

/// Nearest pedestrian surface in the front half-plane.
fn pedestrian_distance(scene: &Scene, pedestrians: &[Vec2], pose: &Pose, max: f64) -> f64 {
    scene
        .pedestrians
        .iter()
        .zip(pedestrians)
        .filter(|(_, &c)| pose.to_local(c).x > 0.0)
        .map(|(def, &c)| c.dist(pose.position()) - def.radius)
        .fold(max, f64::min)
}

/// Speed scale: 1 beyond the slowdown distance, 0 at contact.
pub fn slowdown(distance: f64, params: &ExpertParams) -> f64 {
    ((distance - ROBOT_RADIUS) / (params.slowdown_distance - ROBOT_RADIUS)).clamp(0.0, 1.0)
}

/// Stateful expert controller.
#[derive(Debug, Clone, PartialEq)]
pub struct Expert {
    pub params: ExpertParams,
    nav: Option<Navigator>,
}

impl Default for Expert {
    fn default() -> Self {
        Self::new(ExpertParams::default())
    }
}

impl Expert {
    pub fn new(params: ExpertParams) -> Self {
        Self { params, nav: None }
    }

    pub fn with_navigator(params: ExpertParams, nav: Navigator) -> Self {
        Self { params, nav: Some(nav) }
    }

    pub fn navigator(&self) -> Option<&Navigator> {
        self.nav.as_ref()
    }

    pub fn reset(&mut self) {
        self.nav = None;
    }

    pub fn act(&mut self, scene: &Scene, pedestrians: &[Vec2], state: &RobotState, cmd: DirectionCommand) -> Result<Action> {
        let p = state.pose.position();
        let params = self.params;
        let nav = match self.nav.as_mut() {
            Some(n) => n,
            None => self.nav.insert(Navigator::locate(scene, &state.pose)?),
        };
        nav.update(scene, p, cmd, &params);
        if cmd == DirectionCommand::Stop {
            return Ok(Action::ZERO);
        }
        let target = nav.target(scene, p, params.lookahead);
        let local = state.pose.to_local(target);
        let err = wrap_angle(local.y.atan2(local.x));
        let omega = (params.steer_gain * err).clamp(-OMEGA_MAX, OMEGA_MAX);
        if err.abs() > params.turn_in_place {
            return Ok(Action::new(0.0, omega));
        }
        let turn = if err.abs() <= 10f64.to_radians() {
            1.0
        } else {
            1.0 - 0.75 * (err.abs() - 10f64.to_radians()) / (params.turn_in_place - 10f64.to_radians())
        };
        let reach = params.slowdown_distance;
        let d = lane_distance(scene, &state.pose, reach).min(pedestrian_distance(scene, pedestrians, &state.pose, reach));
        let mut action = Action::new(V_MAX * turn * slowdown(d, &params), omega);
        let mut probe = *state;
        probe.step(action);
        if collides(scene, pedestrians, probe.pose.position()) {
            action.v = 0.0;
        }
        Ok(action)
    }
}

/// Stateless expert: locates itself on the graph from the pose alone.
pub fn expert_policy(scene: &Scene, pedestrians: &[Vec2], state: &RobotState, cmd: DirectionCommand) -> Result<Action> {
    Expert::default().act(scene, pedestrians, state, cmd)
}
