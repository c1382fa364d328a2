//! Closed-loop route evaluation with interventions and resets.

use serde::{Deserialize, Serialize};

use super::expert::{is_intersection, turn_command, Expert, ExpertParams};
use super::geometry::{closest_on_segment, Vec2};
use super::robot::{Action, DirectionCommand, Pose, RobotState, DT, V_MAX};
use super::scene::{RouteDef, Scene, ROBOT_RADIUS};
use super::world::{collides, Crowd};
use crate::error::{Error, Result};
use crate::metrics::{EvalLog, EvalStep};
use crate::rng::RngStream;

/// What a policy sees at each control step.
pub struct StepContext<'a> {
    pub scene: &'a Scene,
    pub pedestrians: &'a [Vec2],
    pub state: &'a RobotState,
    pub command: DirectionCommand,
    pub step: usize,
}

pub trait Policy {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action>;

    /// Called after every intervention reset.
    fn reset(&mut self) {}
}

impl Policy for Expert {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action> {
        Expert::act(self, ctx.scene, ctx.pedestrians, ctx.state, ctx.command)
    }

    fn reset(&mut self) {
        Expert::reset(self)
    }
}

/// Never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&mut self, _: &StepContext<'_>) -> Result<Action> {
        Ok(Action::ZERO)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Time limit as a multiple of the route length at full speed, plus slack.
    pub time_factor: f64,
    pub time_slack: f64,
    pub stuck_seconds: f64,
    pub stuck_distance: f64,
    /// Distance moved back along the traveled path after an intervention.
    pub reset_backoff: f64,
    pub goal_tolerance: f64,
    /// Distance from the route beyond which the robot has taken a wrong turn.
    pub off_route_distance: f64,
    /// Field of view used to decide whether a pedestrian is in view.
    pub hfov: f64,
    pub expert: ExpertParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            time_factor: 3.0,
            time_slack: 30.0,
            stuck_seconds: 5.0,
            stuck_distance: 0.05,
            reset_backoff: 0.5,
            goal_tolerance: 0.6,
            off_route_distance: 2.0,
            hfov: 57f64.to_radians(),
            expert: ExpertParams::default(),
        }
    }
}

/// Issues commands along a route of graph nodes and tracks progress.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteTracker {
    nodes: Vec<usize>,
    seg: usize,
}

impl RouteTracker {
    pub fn new(scene: &Scene, route: &RouteDef) -> Result<Self> {
        if route.nodes.len() < 2 || route.nodes.iter().any(|&n| n >= scene.nodes.len()) {
            return Err(Error::InvalidValue(format!("route `{}` is not a node path", route.name)));
        }
        for w in route.nodes.windows(2) {
            if !scene.has_edge(w[0], w[1]) {
                return Err(Error::InvalidValue(format!("route `{}` uses missing edge {:?}", route.name, w)));
            }
        }
        Ok(Self { nodes: route.nodes.clone(), seg: 0 })
    }

    pub fn segment(&self) -> usize {
        self.seg
    }

    fn points(&self, scene: &Scene, k: usize) -> (Vec2, Vec2) {
        (scene.nodes[self.nodes[k]], scene.nodes[self.nodes[k + 1]])
    }

    pub fn length(&self, scene: &Scene) -> f64 {
        (0..self.nodes.len() - 1)
            .map(|k| {
                let (a, b) = self.points(scene, k);
                a.dist(b)
            })
            .sum()
    }

    pub fn start_pose(&self, scene: &Scene) -> Pose {
        let (a, b) = self.points(scene, 0);
        let dir = (b - a).normalized();
        let p = a + dir * 0.5;
        Pose::new(p.x, p.y, dir.angle())
    }

    pub fn command(&self, scene: &Scene, p: Vec2, params: &ExpertParams) -> DirectionCommand {
        let k = self.seg + 1;
        if k + 1 < self.nodes.len() {
            let via = self.nodes[k];
            if is_intersection(scene, via) && p.dist(scene.nodes[via]) < params.decision_radius {
                return turn_command(scene, self.nodes[k - 1], via, self.nodes[k + 1]);
            }
        }
        DirectionCommand::MoveForward
    }

    pub fn update(&mut self, scene: &Scene, p: Vec2) {
        while self.seg + 2 < self.nodes.len() {
            let (a0, a) = self.points(scene, self.seg);
            let (_, b) = self.points(scene, self.seg + 1);
            let s = (p - a).dot((b - a).normalized());
            let d_out = closest_on_segment(p, a, b).dist(p);
            let d_in = closest_on_segment(p, a0, a).dist(p);
            if s > 0.0 && d_out < d_in {
                self.seg += 1;
            } else {
                break;
            }
        }
    }

    /// Distance to the current and next route segments.
    pub fn distance(&self, scene: &Scene, p: Vec2) -> f64 {
        (self.seg..(self.seg + 2).min(self.nodes.len() - 1))
            .map(|k| {
                let (a, b) = self.points(scene, k);
                closest_on_segment(p, a, b).dist(p)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Heading of the route segment closest to `p` among current and next.
    pub fn heading_near(&self, scene: &Scene, p: Vec2) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for k in self.seg..(self.seg + 2).min(self.nodes.len() - 1) {
            let (a, b) = self.points(scene, k);
            let d = closest_on_segment(p, a, b).dist(p);
            if d < best.0 {
                best = (d, (b - a).angle());
            }
        }
        best.1
    }

    /// Closest point on the current segment.
    pub fn project(&self, scene: &Scene, p: Vec2) -> Vec2 {
        let (a, b) = self.points(scene, self.seg);
        closest_on_segment(p, a, b)
    }

    pub fn done(&self, scene: &Scene, p: Vec2, tolerance: f64) -> bool {
        self.seg + 2 == self.nodes.len() && p.dist(scene.nodes[*self.nodes.last().unwrap()]) < tolerance
    }
}

/// Nearest pedestrian center distance and whether it lies in the field of view.
fn nearest_pedestrian(pedestrians: &[Vec2], pose: &Pose, hfov: f64) -> (Option<f64>, bool) {
    let mut best: Option<(f64, bool)> = None;
    for &c in pedestrians {
        let d = c.dist(pose.position());
        if best.is_none_or(|b| d < b.0) {
            let local = pose.to_local(c);
            let in_view = local.x > 0.0 && local.y.atan2(local.x).abs() <= hfov / 2.0;
            best = Some((d, in_view));
        }
    }
    best.map_or((None, false), |(d, v)| (Some(d), v))
}

/// Pose after backing off `backoff` meters along the traveled path, facing
/// along the route, and not overlapping anything.
fn reset_pose(scene: &Scene, pedestrians: &[Vec2], history: &mut Vec<Pose>, tracker: &RouteTracker, cfg: &EvalConfig) -> Pose {
    let half = scene.corridor_width / 2.0 - ROBOT_RADIUS;
    let mut walked = 0.0;
    let mut k = history.len() - 1;
    while k > 0 {
        walked += history[k].position().dist(history[k - 1].position());
        k -= 1;
        let p = history[k].position();
        if walked >= cfg.reset_backoff && tracker.distance(scene, p) <= half && !collides(scene, pedestrians, p) {
            history.truncate(k + 1);
            let pose = Pose::new(p.x, p.y, tracker.heading_near(scene, p));
            *history.last_mut().unwrap() = pose;
            return pose;
        }
    }
    // nothing suitable behind: put the robot back on the route centerline
    let here = history.last().unwrap().position();
    let q = tracker.project(scene, here);
    let pose = Pose::new(q.x, q.y, tracker.heading_near(scene, q));
    history.clear();
    history.push(pose);
    pose
}

/// Drives `policy` along `route`. Collisions, stalls and wrong turns are
/// interventions: the robot is put back and the run continues until the
/// goal or the time limit.
pub fn evaluate(
    policy: &mut dyn Policy,
    scene: &Scene,
    route: &RouteDef,
    cfg: &EvalConfig,
    rng: &RngStream,
    trial: usize,
) -> Result<EvalLog> {
    let mut tracker = RouteTracker::new(scene, route)?;
    let mut crowd = Crowd::randomized(scene, &mut rng.named("crowd").rng());
    let mut state = RobotState::at(tracker.start_pose(scene));
    let limit = tracker.length(scene) / V_MAX * cfg.time_factor + cfg.time_slack;
    let max_steps = (limit / DT).ceil() as usize;
    let stuck_steps = (cfg.stuck_seconds / DT).round() as usize;
    let mut history = vec![state.pose];
    let mut since_reset = 0usize;
    let mut steps = Vec::new();
    let mut completed = false;
    policy.reset();
    for k in 0..max_steps {
        let peds = crowd.positions(scene);
        let p = state.pose.position();
        let command = tracker.command(scene, p, &cfg.expert);
        let action = policy.act(&StepContext { scene, pedestrians: &peds, state: &state, command, step: k })?.clamped();
        state.step(action);
        crowd.step(scene, state.pose.position());
        let peds = crowd.positions(scene);
        let p = state.pose.position();
        tracker.update(scene, p);
        history.push(state.pose);
        since_reset += 1;
        let collision = collides(scene, &peds, p);
        let stuck =
            !collision && since_reset >= stuck_steps && history[history.len() - 1 - stuck_steps].position().dist(p) < cfg.stuck_distance;
        let off_route = !collision && !stuck && tracker.distance(scene, p) > cfg.off_route_distance;
        let (pedestrian_distance, pedestrian_in_view) = nearest_pedestrian(&peds, &state.pose, cfg.hfov);
        steps.push(EvalStep {
            t: (k + 1) as f64 * DT,
            pose: state.pose,
            v: action.v,
            omega: action.omega,
            command,
            pedestrian_distance,
            pedestrian_in_view,
            collision,
            stuck,
            off_route,
        });
        if collision || stuck || off_route {
            let pose = reset_pose(scene, &peds, &mut history, &tracker, cfg);
            state = RobotState::at(pose);
            since_reset = 0;
            history.clear();
            history.push(pose);
            policy.reset();
        }
        if tracker.done(scene, state.pose.position(), cfg.goal_tolerance) {
            completed = true;
            break;
        }
    }
    let completion_time = steps.last().map_or(0.0, |s| s.t);
    Ok(EvalLog { scene: scene.name.clone(), route: route.name.clone(), trial, steps, completed, completion_time })
}
