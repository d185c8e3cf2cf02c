//! Binary-mask regions with their tight bounding boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::BBox;

/// Where a region came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Pred,
    Maxima,
    GroundTruth,
    /// Whole-image stand-in used when no candidate exists.
    Fallback,
}

/// A nonempty binary mask stored over its tight bounding box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMask {
    bbox: BBox,
    mask: Vec<bool>,
    channel: usize,
    source: Source,
}

impl RegionMask {
    /// Builds a region from a mask laid over `frame`; the box is tightened to the mask.
    pub fn from_mask(frame: BBox, mask: &[bool], channel: usize, source: Source) -> Result<Self> {
        let (w, h) = (frame.width() as usize, frame.height() as usize);
        if mask.len() != w * h {
            return Err(Error::contract("mask length does not match its frame"));
        }
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..h {
            for x in 0..w {
                if mask[y * w + x] {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        if x0 == usize::MAX {
            return Err(Error::contract("region mask is empty"));
        }
        let tw = x1 - x0;
        let mut tight = Vec::with_capacity(tw * (y1 - y0));
        for y in y0..y1 {
            tight.extend_from_slice(&mask[y * w + x0..y * w + x1]);
        }
        Ok(Self {
            bbox: BBox {
                x0: frame.x0 + x0 as i64,
                y0: frame.y0 + y0 as i64,
                x1: frame.x0 + x1 as i64,
                y1: frame.y0 + y1 as i64,
            },
            mask: tight,
            channel,
            source,
        })
    }

    /// Builds a region from absolute pixel coordinates.
    pub fn from_pixels(pixels: &[(usize, usize)], channel: usize, source: Source) -> Result<Self> {
        let Some(&(fx, fy)) = pixels.first() else {
            return Err(Error::contract("region mask is empty"));
        };
        let (mut x0, mut y0, mut x1, mut y1) = (fx, fy, fx + 1, fy + 1);
        for &(x, y) in pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
        }
        let w = x1 - x0;
        let mut mask = vec![false; w * (y1 - y0)];
        for &(x, y) in pixels {
            mask[(y - y0) * w + (x - x0)] = true;
        }
        Ok(Self {
            bbox: BBox::new(x0 as i64, y0 as i64, x1 as i64, y1 as i64)?,
            mask,
            channel,
            source,
        })
    }

    /// Full-box region.
    pub fn solid(bbox: BBox, channel: usize, source: Source) -> Self {
        Self {
            mask: vec![true; bbox.area() as usize],
            bbox,
            channel,
            source,
        }
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn channel(&self) -> usize {
        self.channel
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }

    pub fn area(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Membership test in absolute coordinates.
    pub fn contains(&self, x: i64, y: i64) -> bool {
        if !self.bbox.contains(x, y) {
            return false;
        }
        let w = self.bbox.width();
        self.mask[((y - self.bbox.y0) * w + (x - self.bbox.x0)) as usize]
    }

    /// Absolute coordinates of every mask pixel, row-major.
    pub fn pixels(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let w = self.bbox.width();
        let (x0, y0) = (self.bbox.x0, self.bbox.y0);
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(i, _)| (x0 + i as i64 % w, y0 + i as i64 / w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tight_box_from_frame() {
        let frame = BBox::new(10, 20, 14, 23).unwrap();
        #[rustfmt::skip]
        let mask = [
            false, false, false, false,
            false, true,  true,  false,
            false, false, true,  false,
        ];
        let r = RegionMask::from_mask(frame, &mask, 3, Source::Pred).unwrap();
        assert_eq!(r.bbox(), BBox::new(11, 21, 13, 23).unwrap());
        assert_eq!(r.area(), 3);
        assert!(r.contains(12, 22));
        assert!(!r.contains(11, 22));
        let px: Vec<_> = r.pixels().collect();
        assert_eq!(px, vec![(11, 21), (12, 21), (12, 22)]);
        let again = RegionMask::from_pixels(&[(11, 21), (12, 21), (12, 22)], 3, Source::Pred).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn empty_mask_rejected() {
        let frame = BBox::new(0, 0, 2, 2).unwrap();
        assert!(RegionMask::from_mask(frame, &[false; 4], 3, Source::Pred).is_err());
        assert!(RegionMask::from_pixels(&[], 3, Source::Pred).is_err());
    }
}
