//! Grid-pooled context around a candidate region.
//!
//! Short-range context pools the candidate box scaled by 3 about its center;
//! long-range context pools a box one third of the image in each dimension
//! with the same center. Both use a 5x5 grid of per-channel means.

use crate::error::Result;
use crate::geom::{centered_box, scale_unclipped, BBox};
use crate::probmap::ProbMap;
use crate::region::RegionMask;

pub const GRID: usize = 5;
pub const SHORT_SCALE: f64 = 3.0;

/// `short ∥ long`, each `5 x 5 x L` with cells row-major and channels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextFeature(pub Vec<f32>);

impl ContextFeature {
    pub fn len_for(num_labels: usize) -> usize {
        2 * GRID * GRID * num_labels
    }
}

/// Cell edges `start + round(j * side / 5)`, `j = 0..=5`.
fn edges(start: i64, side: i64) -> [i64; GRID + 1] {
    std::array::from_fn(|j| start + ((j as i64 * side) as f64 / GRID as f64).round() as i64)
}

/// Mean of each channel over each grid cell, counting only in-image pixels.
/// Cells with no in-image pixels are zero.
pub fn grid_pool(map: &ProbMap, b: &BBox) -> Vec<f32> {
    let l = map.num_labels();
    let xs = edges(b.x0, b.width());
    let ys = edges(b.y0, b.height());
    let (w, h) = (map.width() as i64, map.height() as i64);
    let mut out = vec![0.0f32; GRID * GRID * l];
    let mut acc = vec![0.0f64; l];
    for r in 0..GRID {
        let (y0, y1) = (ys[r].max(0), ys[r + 1].min(h));
        for c in 0..GRID {
            let (x0, x1) = (xs[c].max(0), xs[c + 1].min(w));
            if y0 >= y1 || x0 >= x1 {
                continue;
            }
            acc.fill(0.0);
            for y in y0..y1 {
                for x in x0..x1 {
                    for (a, &v) in acc.iter_mut().zip(map.pixel(x as usize, y as usize)) {
                        *a += f64::from(v);
                    }
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            let cell = &mut out[(r * GRID + c) * l..(r * GRID + c + 1) * l];
            for (o, a) in cell.iter_mut().zip(&acc) {
                *o = (a / n) as f32;
            }
        }
    }
    out
}

pub fn short_box(region: &RegionMask) -> Result<BBox> {
    scale_unclipped(&region.bbox(), SHORT_SCALE)
}

pub fn long_box(map: &ProbMap, region: &RegionMask) -> BBox {
    let (cx, cy) = region.bbox().center();
    let w = ((map.width() as f64 / 3.0).round() as i64).max(1);
    let h = ((map.height() as f64 / 3.0).round() as i64).max(1);
    centered_box(cx, cy, w, h)
}

pub fn short_context(map: &ProbMap, region: &RegionMask) -> Result<Vec<f32>> {
    Ok(grid_pool(map, &short_box(region)?))
}

pub fn long_context(map: &ProbMap, region: &RegionMask) -> Vec<f32> {
    grid_pool(map, &long_box(map, region))
}

pub fn context_feature(map: &ProbMap, region: &RegionMask) -> Result<ContextFeature> {
    let mut f = short_context(map, region)?;
    f.extend(long_context(map, region));
    Ok(ContextFeature(f))
}
