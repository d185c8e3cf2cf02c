//! 8-bit images and bilinear resampling.

use crate::error::{Error, Result};
use crate::geom::BBox;

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::contract(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::contract(format!(
                "image data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: &[u8]) -> Result<Self> {
        let channels = value.len();
        let data = value.iter().copied().cycle().take(width * height * channels).collect();
        Self::new(width, height, channels, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn bounds(&self) -> BBox {
        BBox::full(self.width, self.height)
    }

    /// Converts to 3 channels, replicating gray.
    pub fn to_rgb(&self) -> ImageU8 {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        ImageU8 {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Crops `src` and resamples it to `dst_w x dst_h` with bilinear interpolation.
    pub fn crop_resize(&self, src: &BBox, dst_w: usize, dst_h: usize) -> Result<ImageU8> {
        let data = resample(
            &self.data,
            self.width,
            self.height,
            self.channels,
            src,
            dst_w,
            dst_h,
            |v| v as f64,
            |v| v.round().clamp(0.0, 255.0) as u8,
        )?;
        ImageU8::new(dst_w, dst_h, self.channels, data)
    }

    /// Plain crop, no resampling.
    pub fn crop(&self, src: &BBox) -> Result<ImageU8> {
        self.crop_resize(src, src.width().max(0) as usize, src.height().max(0) as usize)
    }
}

/// Bilinear sampling positions along one axis: `(i0, i1, frac)` per destination index.
///
/// Pixel centers are aligned (`s = (d + 0.5) * src / dst - 0.5`) and samples are
/// clamped to the source span.
pub(crate) fn axis_taps(start: usize, len: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = len as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(len - 1);
            (start + i0, start + i1, s - i0 as f64)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn resample<T: Copy>(
    data: &[T],
    width: usize,
    height: usize,
    channels: usize,
    src: &BBox,
    dst_w: usize,
    dst_h: usize,
    load: impl Fn(T) -> f64,
    store: impl Fn(f64) -> T,
) -> Result<Vec<T>> {
    if dst_w == 0 || dst_h == 0 {
        return Err(Error::contract("resize target dimensions must be positive"));
    }
    if src.x0 < 0 || src.y0 < 0 || src.x1 > width as i64 || src.y1 > height as i64 || src.area() <= 0
    {
        return Err(Error::contract(format!(
            "crop {src} outside {width}x{height} image"
        )));
    }
    let (sx, sy) = (src.x0 as usize, src.y0 as usize);
    let (sw, sh) = (src.width() as usize, src.height() as usize);
    let mut out = Vec::with_capacity(dst_w * dst_h * channels);
    if sw == dst_w && sh == dst_h {
        for y in sy..sy + sh {
            let row = (y * width + sx) * channels;
            out.extend_from_slice(&data[row..row + sw * channels]);
        }
        return Ok(out);
    }
    let xs = axis_taps(sx, sw, dst_w);
    let ys = axis_taps(sy, sh, dst_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..channels {
                let at = |x: usize, y: usize| load(data[(y * width + x) * channels + c]);
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bot = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                out.push(store(top * (1.0 - fy) + bot * fy));
            }
        }
    }
    Ok(out)
}
