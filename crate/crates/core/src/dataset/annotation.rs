//! Scene annotations and their JSON encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::probmap::LabelSet;
use crate::region::{RegionMask, Source};

pub const SCHEMA_VERSION: u32 = 1;

/// One delineated object: label name plus mask over its tight box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectAnnotation {
    pub label: String,
    pub bbox: BBox,
    pub mask: Vec<bool>,
}

impl ObjectAnnotation {
    pub fn new(label: impl Into<String>, bbox: BBox, mask: Vec<bool>) -> Result<Self> {
        let label = label.into();
        // round-trip through RegionMask to enforce nonempty + tight
        let region = RegionMask::from_mask(bbox, &mask, 0, Source::GroundTruth)?;
        if region.bbox() != bbox {
            return Err(Error::contract(format!(
                "object `{label}` box {bbox} is not tight (tight box {})",
                region.bbox()
            )));
        }
        Ok(Self { label, bbox, mask })
    }

    pub fn from_region(label: impl Into<String>, region: &RegionMask) -> Self {
        Self {
            label: label.into(),
            bbox: region.bbox(),
            mask: region.mask().to_vec(),
        }
    }

    /// Resolves the label against `labels`.
    pub fn region(&self, labels: &LabelSet) -> Result<RegionMask> {
        let channel = labels.object_index(&self.label)?;
        RegionMask::from_mask(self.bbox, &self.mask, channel, Source::GroundTruth)
    }

    pub fn area(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Ground truth for one image. `objects[0]`, when present, is the action object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneAnnotation {
    pub id: String,
    pub class: String,
    pub face: Option<BBox>,
    pub hands: Vec<BBox>,
    pub objects: Vec<ObjectAnnotation>,
}

impl SceneAnnotation {
    pub fn empty(id: impl Into<String>, class: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            class: class.into(),
            face: None,
            hands: Vec::new(),
            objects: Vec::new(),
        }
    }

    pub fn action_object(&self) -> Option<&ObjectAnnotation> {
        self.objects.first()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&AnnotationJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: AnnotationJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct AnnotationJson {
    asv: u32,
    id: String,
    class: String,
    face: Option<BBox>,
    #[serde(default)]
    hands: Vec<BBox>,
    #[serde(default)]
    objects: Vec<ObjectJson>,
}

#[derive(Serialize, Deserialize)]
struct ObjectJson {
    label: String,
    bbox: BBox,
    mask_rle: Vec<u32>,
}

impl From<&SceneAnnotation> for AnnotationJson {
    fn from(a: &SceneAnnotation) -> Self {
        Self {
            asv: SCHEMA_VERSION,
            id: a.id.clone(),
            class: a.class.clone(),
            face: a.face,
            hands: a.hands.clone(),
            objects: a
                .objects
                .iter()
                .map(|o| ObjectJson {
                    label: o.label.clone(),
                    bbox: o.bbox,
                    mask_rle: rle_encode(&o.mask),
                })
                .collect(),
        }
    }
}

impl TryFrom<AnnotationJson> for SceneAnnotation {
    type Error = Error;

    fn try_from(raw: AnnotationJson) -> Result<Self> {
        if raw.asv != SCHEMA_VERSION {
            return Err(Error::parse(0, format!("unsupported annotation schema asv={}", raw.asv)));
        }
        if raw.id.is_empty() {
            return Err(Error::parse(0, "annotation id is empty"));
        }
        let objects = raw
            .objects
            .into_iter()
            .map(|o| {
                let mask = rle_decode(&o.mask_rle, o.bbox.area() as usize)?;
                ObjectAnnotation::new(o.label, o.bbox, mask)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            id: raw.id,
            class: raw.class,
            face: raw.face,
            hands: raw.hands,
            objects,
        })
    }
}

/// Alternating run lengths, starting with a (possibly zero) run of `false`.
pub fn rle_encode(mask: &[bool]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &m in mask {
        if m != current {
            runs.push(run);
            run = 0;
            current = m;
        }
        run += 1;
    }
    runs.push(run);
    runs
}

pub fn rle_decode(runs: &[u32], len: usize) -> Result<Vec<bool>> {
    let total: u64 = runs.iter().map(|&r| u64::from(r)).sum();
    if total != len as u64 {
        return Err(Error::parse(
            0,
            format!("mask run lengths sum to {total}, expected {len}"),
        ));
    }
    let mut mask = Vec::with_capacity(len);
    for (i, &r) in runs.iter().enumerate() {
        mask.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    Ok(mask)
}
