//! Coarse-to-fine refinement: run the fine backend on upscaled subwindows
//! centered on the strongest object evidence of the coarse map and average
//! overlapping results back into image coordinates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{SegmentBackend, WindowKey};
use crate::dataset::SceneAnnotation;
use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::image::ImageU8;
use crate::probmap::{Plane, ProbMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    /// Maximum number of subwindows.
    pub m: usize,
    /// Minimum distance between window centers, in pixels.
    pub p: f64,
    /// Window side as a fraction of the longer image side.
    pub window_side_fraction: f64,
    /// Side the window crop is upscaled to before the fine pass.
    pub fine_input_side: usize,
    /// Peaks at or below this value never open a window.
    pub min_peak_value: f32,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            m: 5,
            p: 20.0,
            window_side_fraction: 1.0 / 3.0,
            fine_input_side: 224,
            min_peak_value: 0.01,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::contract("m must be >= 1"));
        }
        if !(self.p >= 1.0) {
            return Err(Error::contract("p must be >= 1"));
        }
        if !(self.window_side_fraction > 0.0 && self.window_side_fraction <= 1.0) {
            return Err(Error::contract("window side fraction must be in (0, 1]"));
        }
        if self.fine_input_side < 32 {
            return Err(Error::contract("fine input side must be >= 32"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub x: usize,
    pub y: usize,
    pub value: f32,
}

/// Greedy peak picking: visit pixels by descending value (row-major on
/// ties), accept a pixel when it is at least `p` away from every accepted
/// one, stop after `m`. Values `<= min_value` are never accepted.
pub fn local_maxima(grid: &Plane, m: usize, p: f64, min_value: f32) -> Vec<Peak> {
    let mut order: Vec<usize> = (0..grid.data.len())
        .filter(|&i| grid.data[i] > min_value)
        .collect();
    order.sort_by(|&a, &b| grid.data[b].total_cmp(&grid.data[a]).then(a.cmp(&b)));
    let p2 = p * p;
    let mut out: Vec<Peak> = Vec::with_capacity(m);
    for i in order {
        if out.len() >= m {
            break;
        }
        let (x, y) = (i % grid.width, i / grid.width);
        let far = out.iter().all(|q| {
            let dx = q.x as f64 - x as f64;
            let dy = q.y as f64 - y as f64;
            dx * dx + dy * dy >= p2
        });
        if far {
            out.push(Peak {
                x,
                y,
                value: grid.data[i],
            });
        }
    }
    out
}

/// Square windows of side `round(fraction * max(W, H))` around each peak,
/// shifted (never shrunk) to lie inside the image. A side exceeding an image
/// dimension is cut to that dimension.
pub fn make_subwindows(peaks: &[Peak], width: usize, height: usize, params: &RefineParams) -> Vec<BBox> {
    let side = ((params.window_side_fraction * width.max(height) as f64).round() as i64).max(1);
    let (sw, sh) = (side.min(width as i64), side.min(height as i64));
    peaks
        .iter()
        .map(|pk| {
            let x0 = (pk.x as i64 - sw / 2).clamp(0, width as i64 - sw);
            let y0 = (pk.y as i64 - sh / 2).clamp(0, height as i64 - sh);
            BBox {
                x0,
                y0,
                x1: x0 + sw,
                y1: y0 + sh,
            }
        })
        .collect()
}

/// Per-pixel maximum over the object channels.
pub fn object_evidence(map: &ProbMap) -> Plane {
    let objects = map.labels().objects();
    let data = map
        .data()
        .chunks_exact(map.num_labels())
        .map(|px| objects.iter().map(|&c| px[c]).fold(0.0f32, f32::max))
        .collect();
    Plane {
        width: map.width(),
        height: map.height(),
        data,
    }
}

#[derive(Clone, Debug)]
pub struct Refined {
    pub map: ProbMap,
    pub peaks: Vec<Peak>,
    pub windows: Vec<BBox>,
}

/// Upscaled crop dimensions: the longer side becomes `target`.
fn fine_dims(win: &BBox, target: usize) -> (usize, usize) {
    let (w, h) = (win.width() as f64, win.height() as f64);
    let s = target as f64 / w.max(h);
    (((w * s).round() as usize).max(1), ((h * s).round() as usize).max(1))
}

/// Produces the refined map. Covered pixels take the mean of every covering
/// window's fine output (resampled to window size); uncovered pixels keep the
/// coarse values.
pub fn refine(
    image: &ImageU8,
    annotation: Option<&SceneAnnotation>,
    image_id: &str,
    coarse: &ProbMap,
    fine: &dyn SegmentBackend,
    params: &RefineParams,
) -> Result<Refined> {
    params.validate()?;
    let (w, h) = (image.width(), image.height());
    if coarse.width() != w || coarse.height() != h {
        return Err(Error::contract(format!(
            "coarse map {}x{} does not match image {w}x{h}",
            coarse.width(),
            coarse.height()
        )));
    }
    let peaks = local_maxima(&object_evidence(coarse), params.m, params.p, params.min_peak_value);
    let windows = make_subwindows(&peaks, w, h, params);

    let outputs = windows
        .par_iter()
        .map(|win| {
            let key = WindowKey::window(image_id, *win);
            let wrap = |e: Error| Error::Window {
                window: key.to_string(),
                source: Box::new(e),
            };
            let (cw, ch) = fine_dims(win, params.fine_input_side);
            let crop = image.crop_resize(win, cw, ch).map_err(wrap)?;
            let out = fine.segment(&crop, annotation, &key).map_err(wrap)?;
            if out.labels().names() != coarse.labels().names() {
                return Err(wrap(Error::contract("fine backend label set differs from coarse")));
            }
            out.crop_resize(&out.bounds(), win.width() as usize, win.height() as usize)
                .map_err(wrap)
        })
        .collect::<Result<Vec<_>>>()?;

    let l = coarse.num_labels();
    let mut sum = vec![0.0f64; w * h * l];
    let mut count = vec![0u32; w * h];
    for (win, out) in windows.iter().zip(&outputs) {
        let ww = win.width() as usize;
        for (j, row) in out.data().chunks_exact(ww * l).enumerate() {
            let y = win.y0 as usize + j;
            for (i, px) in row.chunks_exact(l).enumerate() {
                let idx = y * w + win.x0 as usize + i;
                count[idx] += 1;
                for (s, &v) in sum[idx * l..(idx + 1) * l].iter_mut().zip(px) {
                    *s += f64::from(v);
                }
            }
        }
    }
    let mut data = coarse.data().to_vec();
    for (idx, &n) in count.iter().enumerate() {
        if n > 0 {
            for c in 0..l {
                data[idx * l + c] = (sum[idx * l + c] / f64::from(n)) as f32;
            }
        }
    }
    let map = ProbMap::from_weights(w, h, coarse.labels().clone(), data)?;
    Ok(Refined { map, peaks, windows })
}
