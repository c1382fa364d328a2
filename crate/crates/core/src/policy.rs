//! Closed-loop driving with a trained network.

use crate::error::Result;
use crate::featmap::network_inputs;
use crate::image::{ReprBundle, ReprKind};
use crate::net::{Checkpoint, Network};
use crate::noise::NoiseParams;
use crate::repr::{build_bundle, quantize_mm, RawObservation};
use crate::rng::RngStream;
use crate::semantic::CategoryMap;
use crate::sim::camera::MIN_DETECTION_PIXELS;
use crate::sim::{render, Action, CameraIntrinsics, Policy, Pose, Scene, StepContext, Vec2};

/// Renders the simulator view and builds an observation the way the
/// training data was built.
#[derive(Debug, Clone)]
pub struct Observer {
    pub kind: ReprKind,
    pub noise: NoiseParams,
    pub camera: CameraIntrinsics,
    pub size: (usize, usize),
    pub map: CategoryMap,
}

impl Observer {
    pub fn raw(&self, scene: &Scene, peds: &[Vec2], pose: &Pose) -> RawObservation {
        let frame = render(scene, peds, pose, &self.camera);
        RawObservation {
            depth: quantize_mm(&frame.depth),
            class_ids: frame.class_ids(scene),
            detections: frame.detections(scene, &self.map, MIN_DETECTION_PIXELS),
        }
    }

    pub fn observe(&self, scene: &Scene, peds: &[Vec2], pose: &Pose, rng: &RngStream) -> Result<ReprBundle> {
        build_bundle(self.kind, &self.raw(scene, peds, pose), self.size, &self.noise, &self.map, rng)
    }
}

pub struct NetworkPolicy {
    pub network: Network<f32>,
    pub observer: Observer,
    rng: RngStream,
    frames: u64,
}

impl NetworkPolicy {
    /// Observation noise for frame `i` comes from `rng.substream(i)`.
    pub fn new(network: Network<f32>, observer: Observer, rng: RngStream) -> Self {
        Self { network, observer, rng, frames: 0 }
    }

    /// Observes with the representation and noise the checkpoint was trained on.
    pub fn from_checkpoint(ck: &Checkpoint, map: CategoryMap, rng: RngStream) -> Self {
        let def = ck.network.def();
        let observer = Observer { kind: ck.info.kind, noise: ck.info.noise, camera: ck.info.camera, size: (def.width, def.height), map };
        Self::new(ck.network.clone(), observer, rng)
    }
}

impl Policy for NetworkPolicy {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action> {
        let stream = self.rng.substream(self.frames);
        self.frames += 1;
        let bundle = self.observer.observe(ctx.scene, ctx.pedestrians, &ctx.state.pose, &stream)?;
        let (p, s) = network_inputs(&self.network, &bundle)?;
        let [v, w] = self.network.predict(&p, s.as_deref(), ctx.command)?;
        Ok(Action::from_normalized(v, w))
    }
}
