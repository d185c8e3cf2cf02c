//! Deterministic inputs for the benchmarks.

use std::sync::Arc;

use actloc::backends::{OracleBackend, OracleParams, SegmentBackend, WindowKey};
use actloc::dataset::{generate_scene, SceneAnnotation, SynthSpec};
use actloc::{ImageU8, LabelSet, Plane, ProbMap};

/// A smooth plane with several bumps, values in [0, 1].
pub fn bumpy_plane(side: usize) -> Plane {
    let s = side as f32;
    let data = (0..side * side)
        .map(|i| {
            let (x, y) = ((i % side) as f32 / s, (i / side) as f32 / s);
            let v = (x * 17.0).sin() * (y * 11.0).cos() + 0.5 * (x * 5.0 + y * 7.0).sin();
            (v * 0.25 + 0.5).clamp(0.0, 1.0)
        })
        .collect();
    Plane::new(side, side, data).expect("valid plane")
}

/// Label map of `side`x`side` pixels with stripes and blocks of 4 labels.
pub fn blocky_labels(side: usize) -> Vec<u16> {
    (0..side * side).map(|i| (((i % side) / 7 + (i / side) / 5) % 4) as u16).collect()
}

/// One synthetic scene and the oracle backends used to segment it.
pub struct Scene {
    pub image: ImageU8,
    pub annotation: SceneAnnotation,
    pub labels: Arc<LabelSet>,
    pub coarse: OracleBackend,
    pub fine: OracleBackend,
}

impl Scene {
    pub fn new(side: usize) -> Self {
        let spec = SynthSpec { side, ..SynthSpec::default() };
        let (image, annotation) = generate_scene(&spec, 0).expect("scene");
        let labels = Arc::new(LabelSet::with_objects(&spec.object_labels()).expect("labels"));
        let coarse = OracleBackend::new(OracleParams::coarse_default(), labels.clone(), 7, "coarse").expect("oracle");
        let fine = OracleBackend::new(OracleParams::fine_default(), labels.clone(), 7, "fine").expect("oracle");
        Scene { image, annotation, labels, coarse, fine }
    }

    pub fn coarse_map(&self) -> ProbMap {
        self.coarse
            .segment(&self.image, Some(&self.annotation), &WindowKey::full(self.annotation.id.clone()))
            .expect("coarse map")
    }
}
