//! Datasets: on-disk layout, file formats and the synthetic generator.
//!
//! A data directory holds `meta.json` (class names and object labels),
//! `images/<id>.ppm` and `annotations/<id>.json`. Samples are ordered by id;
//! even positions form the training split, odd positions the test split.

pub mod annotation;
pub mod fpm;
pub mod pnm;
pub mod synth;

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use annotation::{ObjectAnnotation, SceneAnnotation};
pub use synth::{generate_scene, SynthSpec};

use crate::error::{Error, Result};
use crate::image::ImageU8;
use crate::probmap::LabelSet;

/// Writes via a temporary sibling and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub classes: Vec<String>,
    pub object_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: ImageU8,
    pub annotation: SceneAnnotation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    All,
}

impl Split {
    pub fn includes(self, position: usize) -> bool {
        match self {
            Split::Train => position.is_multiple_of(2),
            Split::Test => position % 2 == 1,
            Split::All => true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub labels: Arc<LabelSet>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, mut samples: Vec<Sample>) -> Result<Self> {
        if meta.classes.len() < 2 {
            return Err(Error::contract("a dataset needs at least two classes"));
        }
        let labels = Arc::new(LabelSet::with_objects(&meta.object_labels)?);
        samples.sort_by(|a, b| a.annotation.id.cmp(&b.annotation.id));
        for s in &samples {
            let a = &s.annotation;
            if !meta.classes.contains(&a.class) {
                return Err(Error::contract(format!("{}: unknown class `{}`", a.id, a.class)));
            }
            for o in &a.objects {
                labels.object_index(&o.label)?;
            }
        }
        Ok(Self {
            meta,
            labels,
            samples,
        })
    }

    /// Generates the full synthetic set in parallel.
    pub fn synthesize(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let samples = (0..spec.len())
            .into_par_iter()
            .map(|i| generate_scene(spec, i).map(|(image, annotation)| Sample { image, annotation }))
            .collect::<Result<Vec<_>>>()?;
        let meta = DatasetMeta {
            classes: spec.class_names(),
            object_labels: spec.object_labels(),
            synth: Some(spec.clone()),
        };
        Self::new(meta, samples)
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.meta
            .classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::contract(format!("unknown class `{name}`")))
    }

    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(i, _)| split.includes(*i))
            .map(|(_, s)| s)
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("meta.json"), serde_json::to_string_pretty(&self.meta)?.as_bytes())?;
        self.samples.par_iter().try_for_each(|s| {
            let id = &s.annotation.id;
            pnm::write(&dir.join("images").join(format!("{id}.ppm")), &s.image)?;
            write_atomic(
                &dir.join("annotations").join(format!("{id}.json")),
                s.annotation.to_json()?.as_bytes(),
            )
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        let ann_dir = dir.join("annotations");
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&ann_dir).map_err(|e| Error::io(&ann_dir, e))? {
            let entry = entry.map_err(|e| Error::io(&ann_dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".json") {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        let samples = ids
            .par_iter()
            .map(|id| {
                let ap = ann_dir.join(format!("{id}.json"));
                let text = std::fs::read_to_string(&ap).map_err(|e| Error::io(&ap, e))?;
                let annotation = SceneAnnotation::from_json(&text)?;
                let image = pnm::read(&dir.join("images").join(format!("{id}.ppm")))?;
                Ok(Sample { image, annotation })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(meta, samples)
    }
}
