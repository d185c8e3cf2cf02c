//! One-vs-all linear SVMs scored by the maximum over candidates, and the
//! model bundle file.
//!
//! Bundle layout (little-endian): `ASM1`, u32 class count, u32 feature
//! length, class names (u16 length + UTF-8), f32 lambda, 3 x f32 dataset
//! mean, u32 ranker length, ranker weights and bias as f32, then per class
//! the weight vector and bias as f32, and finally the u64 FNV-1a checksum of
//! the feature-layout descriptor.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::write_atomic;
use crate::error::{Error, Result};
use crate::ranking::{RankerModel, RankerParams};
use crate::seed::derive_seed;
use crate::solver;

pub const MAGIC: &[u8; 4] = b"ASM1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { lambda: 1e-3, epochs: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub classes: Vec<String>,
    pub weights: Vec<Vec<f32>>,
    pub biases: Vec<f32>,
    pub lambda: f64,
    pub mean: [f32; 3],
    pub layout_checksum: u64,
}

impl ClassifierModel {
    pub fn feature_len(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn check_len(&self, f: &[f32]) -> Result<()> {
        if f.len() != self.feature_len() {
            return Err(Error::contract(format!(
                "feature length {} does not match model ({})",
                f.len(),
                self.feature_len()
            )));
        }
        Ok(())
    }

    /// `W_c . f + b_c`.
    pub fn decision(&self, class: usize, f: &[f32]) -> f64 {
        let dot: f64 = self.weights[class].iter().zip(f).map(|(&w, &x)| f64::from(w) * f64::from(x)).sum();
        dot + f64::from(self.biases[class])
    }
}

/// Trains one binary SVM per class on `features` with class indices `labels`.
pub fn train_classifier(
    features: &[Vec<f32>],
    labels: &[usize],
    classes: &[String],
    params: &SvmParams,
    mean: [f32; 3],
    layout_checksum: u64,
) -> Result<ClassifierModel> {
    if classes.len() < 2 {
        return Err(Error::contract(format!("classifier needs at least 2 classes, got {}", classes.len())));
    }
    if !(params.lambda > 0.0) || params.epochs == 0 {
        return Err(Error::contract(format!("invalid svm params {params:?}")));
    }
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::contract(format!("{} feature rows for {} labels", features.len(), labels.len())));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::contract("feature rows differ in length"));
    }
    for (c, name) in classes.iter().enumerate() {
        if !labels.contains(&c) {
            return Err(Error::contract(format!("class {name} has no training samples")));
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
        return Err(Error::contract(format!("label index {bad} out of range")));
    }
    if features.iter().all(|f| f == &features[0]) {
        log::warn!("all {} training feature vectors are identical", features.len());
    }
    let solved: Vec<Vec<f64>> = classes
        .par_iter()
        .enumerate()
        .map(|(c, name)| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            let seed = derive_seed(params.seed, &["svm", name]);
            solver::train_svm(features, &y, params.lambda, params.epochs, seed)
        })
        .collect();
    Ok(ClassifierModel {
        classes: classes.to_vec(),
        weights: solved.iter().map(|w| w[..d].iter().map(|&v| v as f32).collect()).collect(),
        biases: solved.iter().map(|w| w[d] as f32).collect(),
        lambda: params.lambda,
        mean,
        layout_checksum,
    })
}

/// Per-class image scores: the maximum decision value over candidates, with
/// the index of the candidate attaining it (first on ties).
pub fn score_image(model: &ClassifierModel, candidates: &[Vec<f32>]) -> Result<(Vec<f64>, Vec<usize>)> {
    if candidates.is_empty() {
        return Err(Error::contract("scoring needs at least one candidate"));
    }
    for f in candidates {
        model.check_len(f)?;
    }
    let mut scores = Vec::with_capacity(model.num_classes());
    let mut best = Vec::with_capacity(model.num_classes());
    for c in 0..model.num_classes() {
        let (i, s) = candidates
            .iter()
            .map(|f| model.decision(c, f))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
        scores.push(s);
        best.push(i);
    }
    Ok((scores, best))
}

/// Index of the largest score; ties go to the lowest index.
pub fn predict(scores: &[f64]) -> usize {
    scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc })
        .0
}

/// Classifier plus the candidate ranker it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub classifier: ClassifierModel,
    pub ranker: RankerModel,
}

impl ModelBundle {
    pub fn encode(&self) -> Vec<u8> {
        let c = &self.classifier;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(c.classes.len() as u32).to_le_bytes());
        out.extend_from_slice(&(c.feature_len() as u32).to_le_bytes());
        for name in &c.classes {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        out.extend_from_slice(&(c.lambda as f32).to_le_bytes());
        for m in c.mean {
            out.extend_from_slice(&m.to_le_bytes());
        }
        out.extend_from_slice(&(self.ranker.weights.len() as u32).to_le_bytes());
        for w in self.ranker.weights.iter().chain([&self.ranker.bias]) {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for (w, b) in c.weights.iter().zip(&c.biases) {
            for v in w.iter().chain([b]) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&c.layout_checksum.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::parse(0, "bad magic, expected ASM1"));
        }
        let n = r.u32("class count")? as usize;
        let d = r.u32("feature length")? as usize;
        let mut classes = Vec::with_capacity(n);
        for _ in 0..n {
            let len = usize::from(r.u16("name length")?);
            let at = r.pos;
            let name = std::str::from_utf8(r.take(len, "class name")?)
                .map_err(|_| Error::parse(at, "class name is not UTF-8"))?;
            classes.push(name.to_string());
        }
        let lambda = f64::from(r.f32("lambda")?);
        let mean = [r.f32("mean")?, r.f32("mean")?, r.f32("mean")?];
        let rl = r.u32("ranker length")? as usize;
        let ranker_weights = r.f32s(rl, "ranker weights")?;
        let ranker_bias = r.f32("ranker bias")?;
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        for _ in 0..n {
            weights.push(r.f32s(d, "class weights")?);
            biases.push(r.f32("class bias")?);
        }
        let layout_checksum = u64::from_le_bytes(r.take(8, "checksum")?.try_into().expect("8 bytes"));
        if r.pos != bytes.len() {
            return Err(Error::parse(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if n < 2 {
            return Err(Error::parse(4, format!("bundle has {n} classes, need at least 2")));
        }
        Ok(ModelBundle {
            classifier: ClassifierModel { classes, weights, biases, lambda, mean, layout_checksum },
            ranker: RankerModel { weights: ranker_weights, bias: ranker_bias, params: RankerParams::default() },
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let left = self.bytes.len() - self.pos;
        if left < n {
            return Err(Error::parse(
                self.pos,
                format!("truncated {what}: expected {n} bytes, found {left}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::parse(self.pos, "length overflow"))?, what)?;
        Ok(raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
    }
}
