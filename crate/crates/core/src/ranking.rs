//! Candidate scoring by a linear epsilon-insensitive regressor over context
//! features, and top-q pruning.

use serde::{Deserialize, Serialize};

use crate::context::ContextFeature;
use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::region::{RegionMask, Source};
use crate::solver;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankerParams {
    pub epsilon: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RankerParams {
    fn default() -> Self {
        RankerParams { epsilon: 0.1, lambda: 1e-3, epochs: 200, seed: 0 }
    }
}

impl RankerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !(self.lambda > 0.0) || self.epochs == 0 {
            return Err(Error::contract(format!("invalid ranker params {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerModel {
    pub weights: Vec<f32>,
    pub bias: f32,
    pub params: RankerParams,
}

impl RankerModel {
    pub fn score(&self, feature: &ContextFeature) -> Result<f64> {
        if feature.0.len() != self.weights.len() {
            return Err(Error::contract(format!(
                "context feature length {} does not match ranker ({})",
                feature.0.len(),
                self.weights.len()
            )));
        }
        let dot: f64 = self.weights.iter().zip(&feature.0).map(|(&w, &x)| f64::from(w) * f64::from(x)).sum();
        Ok(dot + f64::from(self.bias))
    }
}

pub fn train_ranker(samples: &[(ContextFeature, f64)], params: &RankerParams) -> Result<RankerModel> {
    params.validate()?;
    if samples.len() < 2 {
        return Err(Error::contract(format!("ranker needs at least 2 samples, got {}", samples.len())));
    }
    let d = samples[0].0 .0.len();
    if let Some((f, _)) = samples.iter().find(|(f, _)| f.0.len() != d) {
        return Err(Error::contract(format!("context feature lengths differ: {} vs {d}", f.0.len())));
    }
    if let Some((_, t)) = samples.iter().find(|(_, t)| !(0.0..=1.0).contains(t)) {
        return Err(Error::contract(format!("ranker target {t} outside [0,1]")));
    }
    let x: Vec<Vec<f32>> = samples.iter().map(|(f, _)| f.0.clone()).collect();
    let y: Vec<f64> = samples.iter().map(|(_, t)| *t).collect();
    let w = solver::train_svr(&x, &y, params.epsilon, params.lambda, params.epochs, params.seed);
    Ok(RankerModel { weights: w[..d].iter().map(|&v| v as f32).collect(), bias: w[d] as f32, params: *params })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub region: RegionMask,
    pub score: f64,
    /// Position in the input candidate list; `None` for the fallback.
    pub index: Option<usize>,
}

impl Ranked {
    pub fn is_fallback(&self) -> bool {
        self.index.is_none()
    }
}

/// Order by descending score, then larger area, then lower channel. Returns
/// the first `min(q, n)` positions.
pub fn rank_order(scores: &[f64], areas: &[usize], channels: &[usize], q: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(areas[b].cmp(&areas[a]))
            .then(channels[a].cmp(&channels[b]))
            .then(a.cmp(&b))
    });
    idx.truncate(q);
    idx
}

/// Whole-image region used when no candidate exists, tagged with the first
/// object channel.
pub fn fallback_region(width: usize, height: usize, channel: usize) -> RegionMask {
    RegionMask::solid(BBox::full(width, height), channel, Source::Fallback)
}

pub fn rank_and_prune(
    candidates: &[(RegionMask, ContextFeature)],
    model: &RankerModel,
    q: usize,
    fallback: impl FnOnce() -> RegionMask,
) -> Result<Vec<Ranked>> {
    if q == 0 {
        return Err(Error::contract("q must be at least 1"));
    }
    if candidates.is_empty() {
        return Ok(vec![Ranked { region: fallback(), score: 0.0, index: None }]);
    }
    let scores = candidates.iter().map(|(_, f)| model.score(f)).collect::<Result<Vec<_>>>()?;
    let areas: Vec<usize> = candidates.iter().map(|(r, _)| r.area()).collect();
    let channels: Vec<usize> = candidates.iter().map(|(r, _)| r.channel()).collect();
    Ok(rank_order(&scores, &areas, &channels, q)
        .into_iter()
        .map(|i| Ranked { region: candidates[i].0.clone(), score: scores[i], index: Some(i) })
        .collect())
}
