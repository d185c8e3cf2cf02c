//! Label sets and dense per-pixel probability maps.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::image::resample;

pub const BG: &str = "bg";
pub const FACE: &str = "face";
pub const HAND: &str = "hand";

/// Tolerance on a pixel's channel sum before renormalization is refused.
pub const RENORM_TOLERANCE: f64 = 1e-3;
/// Sums closer than this to one are left untouched.
pub const SUM_EPS: f64 = 1e-6;

/// Ordered label names: background at index 0, one face, one hand, and k >= 1 objects.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
    face: usize,
    hand: usize,
    objects: Vec<usize>,
}

impl LabelSet {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::contract("empty label name"));
            }
            if names[..i].contains(n) {
                return Err(Error::contract(format!("duplicate label `{n}`")));
            }
        }
        if names.first().map(String::as_str) != Some(BG) {
            return Err(Error::contract("label 0 must be `bg`"));
        }
        let find = |want: &str| {
            names
                .iter()
                .position(|n| n == want)
                .ok_or_else(|| Error::contract(format!("label set lacks `{want}`")))
        };
        let face = find(FACE)?;
        let hand = find(HAND)?;
        let objects: Vec<usize> = (1..names.len()).filter(|&i| i != face && i != hand).collect();
        if objects.is_empty() {
            return Err(Error::contract("label set needs at least one object label"));
        }
        Ok(Self {
            names,
            face,
            hand,
            objects,
        })
    }

    /// `bg, face, hand` followed by the given object labels.
    pub fn with_objects<S: AsRef<str>>(objects: &[S]) -> Result<Self> {
        let mut names = vec![BG.to_string(), FACE.to_string(), HAND.to_string()];
        names.extend(objects.iter().map(|s| s.as_ref().to_string()));
        Self::new(&names)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn face(&self) -> usize {
        self.face
    }

    pub fn hand(&self) -> usize {
        self.hand
    }

    /// Channel indices of the object labels, ascending.
    pub fn objects(&self) -> &[usize] {
        &self.objects
    }

    pub fn is_object(&self, idx: usize) -> bool {
        idx != 0 && idx != self.face && idx != self.hand && idx < self.names.len()
    }

    pub fn object_index(&self, name: &str) -> Result<usize> {
        match self.index(name) {
            Some(i) if self.is_object(i) => Ok(i),
            _ => Err(Error::contract(format!("unknown object label `{name}`"))),
        }
    }
}

/// Row-major single-channel float grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::contract("plane data length mismatch"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, v: f32) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }
}

/// Per-pixel label distribution, channel-innermost: index `(y * width + x) * L + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    labels: Arc<LabelSet>,
    data: Vec<f32>,
}

impl ProbMap {
    /// Validates and renormalizes. Pixels whose sum is off by more than
    /// [`RENORM_TOLERANCE`] are rejected.
    pub fn new(width: usize, height: usize, labels: Arc<LabelSet>, mut data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, &labels, &data)?;
        let l = labels.len();
        for (i, px) in data.chunks_exact_mut(l).enumerate() {
            let mut sum = 0.0f64;
            for &v in px.iter() {
                if !v.is_finite() || !(-1e-6..=1.0 + 1e-6).contains(&v) {
                    return Err(Error::NotNormalized {
                        x: i % width,
                        y: i / width,
                        sum: f64::from(v),
                    });
                }
                sum += f64::from(v);
            }
            if (sum - 1.0).abs() > RENORM_TOLERANCE {
                return Err(Error::NotNormalized {
                    x: i % width,
                    y: i / width,
                    sum,
                });
            }
            normalize_pixel(px, sum);
        }
        Ok(Self {
            width,
            height,
            labels,
            data,
        })
    }

    /// Normalizes arbitrary non-negative per-pixel weights. A pixel with zero
    /// total mass becomes background.
    pub fn from_weights(width: usize, height: usize, labels: Arc<LabelSet>, mut data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, &labels, &data)?;
        for px in data.chunks_exact_mut(labels.len()) {
            let mut sum = 0.0f64;
            for v in px.iter_mut() {
                if !v.is_finite() {
                    return Err(Error::contract("non-finite probability weight"));
                }
                *v = v.max(0.0);
                sum += f64::from(*v);
            }
            if sum <= 0.0 {
                px.fill(0.0);
                px[0] = 1.0;
            } else {
                normalize_pixel(px, sum);
            }
        }
        Ok(Self {
            width,
            height,
            labels,
            data,
        })
    }

    /// One-hot map from a per-pixel label index map.
    pub fn one_hot(width: usize, height: usize, labels: Arc<LabelSet>, label_map: &[u16]) -> Result<Self> {
        if label_map.len() != width * height {
            return Err(Error::contract("label map length mismatch"));
        }
        let l = labels.len();
        let mut data = vec![0.0f32; width * height * l];
        for (i, &c) in label_map.iter().enumerate() {
            if c as usize >= l {
                return Err(Error::contract(format!("label index {c} out of range")));
            }
            data[i * l + c as usize] = 1.0;
        }
        Ok(Self {
            width,
            height,
            labels,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &Arc<LabelSet> {
        &self.labels
    }

    #[inline]
    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn bounds(&self) -> BBox {
        BBox::full(self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.labels.len() + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let l = self.labels.len();
        let i = (y * self.width + x) * l;
        &self.data[i..i + l]
    }

    pub fn channel(&self, c: usize) -> Plane {
        let l = self.labels.len();
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(l).copied().collect(),
        }
    }

    /// Crops and resamples bilinearly; output renormalized per pixel.
    pub fn crop_resize(&self, src: &BBox, dst_w: usize, dst_h: usize) -> Result<ProbMap> {
        let data = resample(
            &self.data,
            self.width,
            self.height,
            self.labels.len(),
            src,
            dst_w,
            dst_h,
            f64::from,
            |v| v as f32,
        )?;
        ProbMap::from_weights(dst_w, dst_h, self.labels.clone(), data)
    }
}

fn check_dims(width: usize, height: usize, labels: &LabelSet, data: &[f32]) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::contract("probability map dimensions must be positive"));
    }
    if data.len() != width * height * labels.len() {
        return Err(Error::contract(format!(
            "probability map data length {} != {width}x{height}x{}",
            data.len(),
            labels.len()
        )));
    }
    Ok(())
}

fn normalize_pixel(px: &mut [f32], sum: f64) {
    if (sum - 1.0).abs() <= SUM_EPS {
        return;
    }
    for v in px.iter_mut() {
        *v = (f64::from(*v) / sum).clamp(0.0, 1.0) as f32;
    }
}
