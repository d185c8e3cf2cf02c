//! Candidate object regions from a probability map: connected components
//! of the argmax labelling, plus Otsu-thresholded per-channel components that
//! contain one of the channel's strongest peaks.

use serde::{Deserialize, Serialize};

use crate::coarse2fine::local_maxima;
use crate::error::{Error, Result};
use crate::geom::bbox_iou;
use crate::probmap::{Plane, ProbMap};
use crate::region::{RegionMask, Source};

/// Label value marking pixels whose winner is not an object.
pub const NOT_OBJECT: u16 = u16::MAX;

/// Connectivity is always 8.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateParams {
    /// Peaks kept per object channel.
    pub l: usize,
    /// Minimum separation of those peaks.
    pub p: f64,
    pub min_region_area: usize,
    pub dedup_iou: f64,
}

impl Default for CandidateParams {
    fn default() -> Self {
        Self {
            l: 5,
            p: 20.0,
            min_region_area: 9,
            dedup_iou: 0.9,
        }
    }
}

impl CandidateParams {
    pub fn validate(&self) -> Result<()> {
        if self.l < 1 || self.min_region_area < 1 {
            return Err(Error::contract("l and min_region_area must be >= 1"));
        }
        if !(self.dedup_iou > 0.0 && self.dedup_iou <= 1.0) {
            return Err(Error::contract("dedup_iou must be in (0, 1]"));
        }
        if !(self.p >= 1.0) {
            return Err(Error::contract("peak separation must be >= 1"));
        }
        Ok(())
    }
}

/// Argmax over all channels (lowest index wins ties); non-object winners
/// become [`NOT_OBJECT`].
pub fn pred_map(map: &ProbMap) -> Vec<u16> {
    let labels = map.labels();
    map.data()
        .chunks_exact(map.num_labels())
        .map(|px| {
            let mut best = 0;
            for c in 1..px.len() {
                if px[c] > px[best] {
                    best = c;
                }
            }
            if labels.is_object(best) {
                best as u16
            } else {
                NOT_OBJECT
            }
        })
        .collect()
}

struct DisjointSet(Vec<u32>);

impl DisjointSet {
    fn find(&mut self, mut a: u32) -> u32 {
        while self.0[a as usize] != a {
            let up = self.0[self.0[a as usize] as usize];
            self.0[a as usize] = up;
            a = up;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi as usize] = lo;
        }
    }
}

/// Two-pass 8-connected labelling of equal-valued pixels; `NOT_OBJECT`
/// pixels are background. Components are returned in order of their first
/// pixel in row-major order, pixels row-major.
pub fn label_components(values: &[u16], width: usize, height: usize) -> Vec<(u16, Vec<(usize, usize)>)> {
    const NONE: u32 = u32::MAX;
    let mut provisional = vec![NONE; values.len()];
    let mut sets = DisjointSet(Vec::new());
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let v = values[i];
            if v == NOT_OBJECT {
                continue;
            }
            let mut assigned = NONE;
            let neighbors = [
                (x > 0).then(|| i - 1),
                (y > 0 && x > 0).then(|| i - width - 1),
                (y > 0).then(|| i - width),
                (y > 0 && x + 1 < width).then(|| i - width + 1),
            ];
            for n in neighbors.into_iter().flatten() {
                if values[n] == v {
                    let ln = provisional[n];
                    if assigned == NONE {
                        assigned = ln;
                    } else {
                        sets.union(assigned, ln);
                    }
                }
            }
            if assigned == NONE {
                assigned = sets.0.len() as u32;
                sets.0.push(assigned);
            }
            provisional[i] = assigned;
        }
    }
    let mut slot = vec![NONE; sets.0.len()];
    let mut comps: Vec<(u16, Vec<(usize, usize)>)> = Vec::new();
    for (i, &p) in provisional.iter().enumerate() {
        if p == NONE {
            continue;
        }
        let root = sets.find(p) as usize;
        if slot[root] == NONE {
            slot[root] = comps.len() as u32;
            comps.push((values[i], Vec::new()));
        }
        comps[slot[root] as usize].1.push((i % width, i / width));
    }
    comps
}

/// Object regions of a [`pred_map`] labelling, dropping small components.
pub fn connected_components(labelmap: &[u16], width: usize, height: usize, min_area: usize) -> Result<Vec<RegionMask>> {
    if labelmap.len() != width * height {
        return Err(Error::contract("label map length mismatch"));
    }
    label_components(labelmap, width, height)
        .into_iter()
        .filter(|(_, px)| px.len() >= min_area)
        .map(|(c, px)| RegionMask::from_pixels(&px, c as usize, Source::Pred))
        .collect()
}

/// Histogram bin of a value in `[0, 1]`: bin `k` holds `(k/256, (k+1)/256]`,
/// with zero in bin 0.
#[inline]
fn otsu_bin(v: f32) -> usize {
    ((f64::from(v) * 256.0).ceil() as i64 - 1).clamp(0, 255) as usize
}

/// Between-class variance of splitting after bin `k`, up to the constant
/// factor `1/N^2`: `(n1*S0 - n0*S1)^2 / (n0*n1)` with bin-index sums `S`.
#[derive(Clone, Copy)]
struct Split {
    num: u128,
    den: u128,
}

impl Split {
    fn gt(&self, other: &Split) -> bool {
        match (self.num.checked_mul(other.den), other.num.checked_mul(self.den)) {
            (Some(a), Some(b)) => a > b,
            _ => self.num as f64 / self.den as f64 > other.num as f64 / other.den as f64,
        }
    }
}

/// Otsu threshold over 256 bins on `[0, 1]`. Foreground is `v > threshold`.
/// Ties go to the lowest threshold; a grid with a single occupied bin returns
/// its maximum value (empty foreground).
pub fn otsu_threshold(grid: &Plane) -> Result<f32> {
    if grid.data.is_empty() {
        return Err(Error::contract("otsu on empty grid"));
    }
    let mut hist = [0u64; 256];
    for &v in &grid.data {
        hist[otsu_bin(v)] += 1;
    }
    let n: u64 = grid.data.len() as u64;
    let total: u64 = hist.iter().enumerate().map(|(k, &h)| k as u64 * h).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(usize, Split)> = None;
    for (k, &h) in hist.iter().enumerate().take(255) {
        n0 += h;
        s0 += k as u64 * h;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = total - s0;
        let diff = (i128::from(n1) * i128::from(s0) - i128::from(n0) * i128::from(s1)).unsigned_abs();
        let cand = Split {
            num: diff * diff,
            den: u128::from(n0) * u128::from(n1),
        };
        if cand.num > 0 && best.as_ref().is_none_or(|(_, b)| cand.gt(b)) {
            best = Some((k, cand));
        }
    }
    Ok(match best {
        Some((k, _)) => (k + 1) as f32 / 256.0,
        None => grid.data.iter().copied().fold(f32::MIN, f32::max),
    })
}

/// Per object channel: Otsu foreground components that contain at least one
/// of the channel's top-`l` peaks.
pub fn maxima_regions(map: &ProbMap, params: &CandidateParams) -> Result<Vec<RegionMask>> {
    params.validate()?;
    let (w, h) = (map.width(), map.height());
    let mut out = Vec::new();
    for &c in map.labels().objects() {
        let plane = map.channel(c);
        let peaks = local_maxima(&plane, params.l, params.p, 0.0);
        let t = otsu_threshold(&plane)?;
        let fg: Vec<u16> = plane.data.iter().map(|&v| if v > t { 1 } else { NOT_OBJECT }).collect();
        for (_, px) in label_components(&fg, w, h) {
            if px.len() < params.min_region_area {
                continue;
            }
            let region = RegionMask::from_pixels(&px, c, Source::Maxima)?;
            if peaks.iter().any(|pk| region.contains(pk.x as i64, pk.y as i64)) {
                out.push(region);
            }
        }
    }
    Ok(out)
}

/// Union with same-channel deduplication: of two regions whose boxes overlap
/// by IoU >= `dedup_iou`, the larger mask survives (predicted regions win
/// ties). Survivors keep their input order, predicted regions first.
pub fn candidate_union(pred: Vec<RegionMask>, maxima: Vec<RegionMask>, params: &CandidateParams) -> Vec<RegionMask> {
    let all: Vec<RegionMask> = pred.into_iter().chain(maxima).collect();
    let areas: Vec<usize> = all.iter().map(RegionMask::area).collect();
    let mut order: Vec<usize> = (0..all.len()).collect();
    // pred precedes maxima in `all`, so index order settles equal areas
    order.sort_by(|&a, &b| areas[b].cmp(&areas[a]).then(a.cmp(&b)));
    let mut keep = vec![false; all.len()];
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let clash = kept.iter().any(|&j| {
            all[j].channel() == all[i].channel() && bbox_iou(&all[j].bbox(), &all[i].bbox()) >= params.dedup_iou
        });
        if !clash {
            keep[i] = true;
            kept.push(i);
        }
    }
    all.into_iter().zip(keep).filter_map(|(r, k)| k.then_some(r)).collect()
}

/// `R = R_pred ∪ R_m` for one map.
pub fn generate(map: &ProbMap, params: &CandidateParams) -> Result<Vec<RegionMask>> {
    params.validate()?;
    let labels = pred_map(map);
    let pred = connected_components(&labels, map.width(), map.height(), params.min_region_area)?;
    let maxima = maxima_regions(map, params)?;
    Ok(candidate_union(pred, maxima, params))
}
