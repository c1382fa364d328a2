//! Evaluation indicators: interventions, route time and the velocity
//! decrease near pedestrians.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{DirectionCommand, Pose};

/// Intervention flags closer than this are one event.
pub const REFRACTORY_SECONDS: f64 = 2.0;
/// Pedestrians nearer than this (and in view) count as "nearby".
pub const NEAR_PEDESTRIAN_DISTANCE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStep {
    pub t: f64,
    pub pose: Pose,
    pub v: f64,
    pub omega: f64,
    pub command: DirectionCommand,
    /// Center distance to the nearest pedestrian, if the scene has any.
    pub pedestrian_distance: Option<f64>,
    /// Whether that pedestrian is inside the camera's field of view.
    #[serde(default)]
    pub pedestrian_in_view: bool,
    pub collision: bool,
    pub stuck: bool,
    /// Left the route corridor (wrong turn) and had to be put back.
    #[serde(default)]
    pub off_route: bool,
}

impl EvalStep {
    pub fn intervention(&self) -> bool {
        self.collision || self.stuck || self.off_route
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLog {
    pub scene: String,
    pub route: String,
    pub trial: usize,
    pub steps: Vec<EvalStep>,
    pub completed: bool,
    /// Seconds until the goal was reached, or until the time limit.
    pub completion_time: f64,
}

impl EvalLog {
    pub fn validate(&self) -> Result<()> {
        for w in self.steps.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidValue(format!("eval log time not increasing at t = {}", w[1].t)));
            }
        }
        Ok(())
    }

    /// One JSON object per line: a header, then every step.
    pub fn to_jsonl(&self) -> String {
        let header = serde_json::json!({
            "scene": self.scene,
            "route": self.route,
            "trial": self.trial,
            "completed": self.completed,
            "completion_time": self.completion_time,
            "steps": self.steps.len(),
        });
        let mut out = header.to_string();
        out.push('\n');
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("step serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            scene: String,
            route: String,
            trial: usize,
            completed: bool,
            completion_time: f64,
        }
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let h: Header = serde_json::from_str(lines.next().ok_or_else(|| Error::InvalidValue("empty eval log".into()))?)?;
        let steps = lines.map(serde_json::from_str).collect::<std::result::Result<Vec<EvalStep>, _>>()?;
        let log =
            EvalLog { scene: h.scene, route: h.route, trial: h.trial, steps, completed: h.completed, completion_time: h.completion_time };
        log.validate()?;
        Ok(log)
    }
}

/// Intervention events: flagged steps, merging flags that follow a counted
/// event by less than [`REFRACTORY_SECONDS`].
pub fn intervention_count(log: &EvalLog) -> usize {
    let mut count = 0;
    let mut last = f64::NEG_INFINITY;
    for s in log.steps.iter().filter(|s| s.intervention()) {
        if s.t - last >= REFRACTORY_SECONDS - 1e-9 {
            count += 1;
            last = s.t;
        }
    }
    count
}

/// Percentage drop of the mean linear velocity with a pedestrian in view
/// within `near_dist`, relative to steps with no pedestrian that close.
/// Steps commanded to stop are excluded.
pub fn velocity_decrease(log: &EvalLog, near_dist: f64) -> Result<f64> {
    let (mut near, mut n_near, mut far, mut n_far) = (0.0, 0usize, 0.0, 0usize);
    for s in log.steps.iter().filter(|s| s.command != DirectionCommand::Stop) {
        match s.pedestrian_distance {
            Some(d) if d <= near_dist => {
                if s.pedestrian_in_view {
                    near += s.v;
                    n_near += 1;
                }
            }
            _ => {
                far += s.v;
                n_far += 1;
            }
        }
    }
    if n_near == 0 || n_far == 0 {
        return Err(Error::InsufficientData(format!("velocity decrease needs near and far steps (near {n_near}, far {n_far})")));
    }
    let far_mean = far / n_far as f64;
    if far_mean == 0.0 {
        return Err(Error::InsufficientData("no motion away from pedestrians".into()));
    }
    Ok(100.0 * (1.0 - (near / n_near as f64) / far_mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub interventions: usize,
    pub time_min: f64,
    pub velocity_decrease: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunSummary>,
    pub mean_interventions: f64,
    pub mean_time_min: f64,
    /// Mean over runs where the decrease is defined.
    pub mean_velocity_decrease: Option<f64>,
}

pub fn summarize_run(label: &str, log: &EvalLog) -> RunSummary {
    RunSummary {
        label: label.to_string(),
        interventions: intervention_count(log),
        time_min: log.completion_time / 60.0,
        velocity_decrease: velocity_decrease(log, NEAR_PEDESTRIAN_DISTANCE).ok(),
    }
}

pub fn summarize(runs: &[EvalLog]) -> Result<Report> {
    if runs.is_empty() {
        return Err(Error::InsufficientData("no runs to summarize".into()));
    }
    let runs: Vec<RunSummary> = runs.iter().map(|l| summarize_run(&format!("{}/{}", l.route, l.trial), l)).collect();
    Ok(report_from(runs))
}

pub fn report_from(runs: Vec<RunSummary>) -> Report {
    let n = runs.len().max(1) as f64;
    let vd: Vec<f64> = runs.iter().filter_map(|r| r.velocity_decrease).collect();
    Report {
        mean_interventions: runs.iter().map(|r| r.interventions as f64).sum::<f64>() / n,
        mean_time_min: runs.iter().map(|r| r.time_min).sum::<f64>() / n,
        mean_velocity_decrease: (!vd.is_empty()).then(|| vd.iter().sum::<f64>() / vd.len() as f64),
        runs,
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}%"))
}

impl Report {
    /// Plain-text table: one row per run, then the mean row.
    pub fn table(&self) -> String {
        let width = self.runs.iter().map(|r| r.label.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$} | {:>13} | {:>10} | {:>13}", "Run", "Interventions", "Time (min)", "Vel. decrease");
        let _ = writeln!(out, "{}", "-".repeat(width + 46));
        for r in &self.runs {
            let _ =
                writeln!(out, "{:<width$} | {:>13} | {:>10.2} | {:>13}", r.label, r.interventions, r.time_min, pct(r.velocity_decrease));
        }
        let _ = writeln!(
            out,
            "{:<width$} | {:>13.2} | {:>10.2} | {:>13}",
            "mean",
            self.mean_interventions,
            self.mean_time_min,
            pct(self.mean_velocity_decrease)
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(t: f64, v: f64, ped: Option<f64>, collision: bool) -> EvalStep {
        EvalStep {
            t,
            pose: Pose::default(),
            v,
            omega: 0.0,
            command: DirectionCommand::MoveForward,
            pedestrian_distance: ped,
            pedestrian_in_view: true,
            collision,
            stuck: false,
            off_route: false,
        }
    }

    fn log(steps: Vec<EvalStep>) -> EvalLog {
        EvalLog { scene: "s".into(), route: "r".into(), trial: 0, steps, completed: true, completion_time: 60.0 }
    }

    #[test]
    fn refractory_dedup() {
        let l = log(vec![step(1.0, 0.0, None, true), step(1.5, 0.0, None, true)]);
        assert_eq!(intervention_count(&l), 1);
        let l = log(vec![step(1.0, 0.0, None, true), step(3.5, 0.0, None, true), step(6.0, 0.0, None, true)]);
        assert_eq!(intervention_count(&l), 3);
        let l = log((1..50).map(|k| step(k as f64 * 0.1, 0.6, None, false)).collect());
        assert_eq!(intervention_count(&l), 0);
    }

    #[test]
    fn velocity_decrease_by_hand() {
        let l = log(vec![step(0.1, 0.3, Some(2.0), false), step(0.2, 0.6, None, false), step(0.3, 0.6, Some(5.0), false)]);
        assert!((velocity_decrease(&l, 3.0).unwrap() - 50.0).abs() < 1e-12);
        let l = log(vec![step(0.1, 0.4, Some(2.0), false), step(0.2, 0.4, None, false)]);
        assert_eq!(velocity_decrease(&l, 3.0).unwrap(), 0.0);
        let l = log(vec![step(0.1, 0.4, None, false)]);
        assert!(matches!(velocity_decrease(&l, 3.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn summary_means() {
        let a = log(vec![step(1.0, 0.0, None, true)]);
        let b = log(vec![step(1.0, 0.0, None, true), step(4.0, 0.0, None, true), step(7.0, 0.0, None, true)]);
        let r = summarize(&[a.clone(), b]).unwrap();
        assert_eq!(r.mean_interventions, 2.0);
        let single = summarize(&[a]).unwrap();
        assert_eq!(single.mean_interventions, 1.0);
        assert_eq!(single.mean_time_min, 1.0);
        let t = r.table();
        assert!(t.contains("Interventions") && t.contains("Time (min)") && t.contains("Vel. decrease"));
    }

    #[test]
    fn jsonl_roundtrip() {
        let l = log(vec![step(0.1, 0.3, Some(2.0), false), step(0.2, 0.6, None, true)]);
        assert_eq!(EvalLog::from_jsonl(&l.to_jsonl()).unwrap(), l);
    }
}
