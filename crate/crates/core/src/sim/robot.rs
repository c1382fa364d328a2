use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::geometry::{wrap_angle, Vec2};
use crate::error::Error;

/// Control period in seconds.
pub const DT: f64 = 0.1;
/// Linear speed limit, m/s.
pub const V_MAX: f64 = 0.6;
/// Angular speed limit, rad/s.
pub const OMEGA_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    /// Expresses a world point in the robot frame (x forward, y left).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let d = p - self.position();
        let h = self.heading();
        Vec2::new(d.dot(h), h.cross(d))
    }
}

/// Physical velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub v: f64,
    pub omega: f64,
}

impl Action {
    pub const ZERO: Action = Action { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn clamped(self) -> Self {
        Self { v: self.v.clamp(-V_MAX, V_MAX), omega: self.omega.clamp(-OMEGA_MAX, OMEGA_MAX) }
    }

    /// `[v / V_MAX, omega / OMEGA_MAX]`, clamped to `[0, 1] x [-1, 1]`.
    pub fn normalized(self) -> [f64; 2] {
        [(self.v / V_MAX).clamp(0.0, 1.0), (self.omega / OMEGA_MAX).clamp(-1.0, 1.0)]
    }

    pub fn from_normalized(v: f64, omega: f64) -> Self {
        Self { v: v.clamp(0.0, 1.0) * V_MAX, omega: omega.clamp(-1.0, 1.0) * OMEGA_MAX }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub v: f64,
    pub omega: f64,
}

impl RobotState {
    pub fn at(pose: Pose) -> Self {
        Self { pose, v: 0.0, omega: 0.0 }
    }

    /// Applies `action` (clamped to the limits) for one control period of
    /// kinematic unicycle motion.
    pub fn step(&mut self, action: Action) {
        let a = action.clamped();
        self.v = a.v;
        self.omega = a.omega;
        let mid = self.pose.theta + 0.5 * a.omega * DT;
        self.pose.x += a.v * DT * mid.cos();
        self.pose.y += a.v * DT * mid.sin();
        self.pose.theta = wrap_angle(self.pose.theta + a.omega * DT);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionCommand {
    #[serde(rename = "forward")]
    MoveForward,
    #[serde(rename = "left")]
    TurnLeft,
    #[serde(rename = "right")]
    TurnRight,
    Stop,
}

impl DirectionCommand {
    pub const ALL: [DirectionCommand; 4] =
        [DirectionCommand::MoveForward, DirectionCommand::TurnLeft, DirectionCommand::TurnRight, DirectionCommand::Stop];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [f32; 4] {
        let mut v = [0.0; 4];
        v[self.index()] = 1.0;
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            DirectionCommand::MoveForward => "forward",
            DirectionCommand::TurnLeft => "left",
            DirectionCommand::TurnRight => "right",
            DirectionCommand::Stop => "stop",
        }
    }
}

impl fmt::Display for DirectionCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DirectionCommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "forward" | "moveforward" => Ok(DirectionCommand::MoveForward),
            "left" | "turnleft" => Ok(DirectionCommand::TurnLeft),
            "right" | "turnright" => Ok(DirectionCommand::TurnRight),
            "stop" => Ok(DirectionCommand::Stop),
            _ => Err(Error::Unknown { kind: "command", name: s.to_string() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_encoding() {
        for (i, c) in DirectionCommand::ALL.iter().enumerate() {
            let v = c.one_hot();
            assert_eq!(v.iter().sum::<f32>(), 1.0);
            assert_eq!(v[i], 1.0);
            assert_eq!(c.name().parse::<DirectionCommand>().unwrap(), *c);
        }
        assert_eq!(serde_json::to_string(&DirectionCommand::TurnLeft).unwrap(), "\"left\"");
    }

    #[test]
    fn step_respects_limits() {
        let mut s = RobotState::at(Pose::default());
        s.step(Action::new(5.0, -9.0));
        assert_eq!(s.v, V_MAX);
        assert_eq!(s.omega, -OMEGA_MAX);
        let mut s = RobotState::at(Pose::default());
        for _ in 0..10 {
            s.step(Action::new(0.5, 0.0));
        }
        assert!((s.pose.x - 0.5).abs() < 1e-12 && s.pose.y.abs() < 1e-12);
    }

    #[test]
    fn normalization_roundtrip() {
        let a = Action::new(0.3, -0.5);
        let [v, w] = a.normalized();
        assert_eq!(Action::from_normalized(v, w), a);
    }

    #[test]
    fn local_frame() {
        let p = Pose::new(1.0, 1.0, std::f64::consts::FRAC_PI_2);
        let l = p.to_local(Vec2::new(1.0, 3.0));
        assert!((l.x - 2.0).abs() < 1e-12 && l.y.abs() < 1e-12);
        let l = p.to_local(Vec2::new(0.0, 1.0));
        assert!(l.x.abs() < 1e-12 && (l.y - 1.0).abs() < 1e-12);
    }
}
