//! 2.5-D indoor corridor simulator: scenes, a pinhole depth camera, an
//! expert controller and episode generation / closed-loop evaluation.

pub mod camera;
pub mod episode;
pub mod eval;
pub mod expert;
pub mod geometry;
pub mod robot;
pub mod scene;
pub mod world;

pub use camera::{ground_truth_detections, render, render_depth, CameraIntrinsics, Frame, Label};
pub use episode::{generate_episode, generate_episodes, Episode, EpisodeConfig, StepRecord};
pub use eval::{evaluate, EvalConfig, Policy, RouteTracker, StepContext, ZeroPolicy};
pub use expert::{expert_policy, Expert, ExpertParams, Navigator};
pub use geometry::Vec2;
pub use robot::{Action, DirectionCommand, Pose, RobotState, DT, OMEGA_MAX, V_MAX};
pub use scene::{Footprint, Obstacle, PedestrianDef, RouteDef, Scene, Thing, Wall, ROBOT_RADIUS};
pub use world::Crowd;
