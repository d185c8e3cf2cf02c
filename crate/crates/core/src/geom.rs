//! Half-open integer pixel rectangles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box `[x0, x1) x [y0, y1)` in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[i64; 4]", try_from = "[i64; 4]")]
pub struct BBox {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl BBox {
    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::contract(format!(
                "empty box [{x0},{y0},{x1},{y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Whole-image box for `width x height`.
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width as i64,
            y1: height as i64,
        }
    }

    #[inline]
    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    #[inline]
    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    #[inline]
    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    /// Center in continuous coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.x0 + self.x1) as f64 / 2.0,
            (self.y0 + self.y1) as f64 / 2.0,
        )
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x0 < x1 && y0 < y1).then_some(BBox { x0, y0, x1, y1 })
    }

    /// Intersection with `[0, width) x [0, height)`.
    pub fn clip(&self, width: usize, height: usize) -> Option<BBox> {
        self.intersect(&BBox::full(width, height))
    }

    pub fn to_array(self) -> [i64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

impl From<BBox> for [i64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl TryFrom<[i64; 4]> for BBox {
    type Error = Error;

    fn try_from(a: [i64; 4]) -> Result<Self> {
        BBox::new(a[0], a[1], a[2], a[3])
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{},{},{})", self.x0, self.y0, self.x1, self.y1)
    }
}

/// Intersection over union by pixel area. Disjoint boxes give 0.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersect(b).map_or(0, |i| i.area());
    let union = a.area() + b.area() - inter;
    if union <= 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Scale a box about its center, round to integer pixels and clip to `width x height`.
///
/// A box that collapses after clipping is replaced by the nearest 1x1 box
/// inside the image.
pub fn scale_bbox(b: &BBox, factor: f64, width: usize, height: usize) -> Result<BBox> {
    let scaled = scale_unclipped(b, factor)?;
    if let Some(clipped) = scaled.clip(width, height) {
        return Ok(clipped);
    }
    let (cx, cy) = b.center();
    let x = (cx.floor() as i64).clamp(0, width as i64 - 1);
    let y = (cy.floor() as i64).clamp(0, height as i64 - 1);
    Ok(BBox {
        x0: x,
        y0: y,
        x1: x + 1,
        y1: y + 1,
    })
}

/// Center-preserving scale without clipping. Sides are at least one pixel.
pub fn scale_unclipped(b: &BBox, factor: f64) -> Result<BBox> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::contract(format!("scale factor must be > 0, got {factor}")));
    }
    let (cx, cy) = b.center();
    let w = ((b.width() as f64 * factor).round() as i64).max(1);
    let h = ((b.height() as f64 * factor).round() as i64).max(1);
    Ok(centered_box(cx, cy, w, h))
}

/// Box of integer size `w x h` whose center is as close as possible to `(cx, cy)`.
pub fn centered_box(cx: f64, cy: f64, w: i64, h: i64) -> BBox {
    let x0 = (cx - w as f64 / 2.0).round() as i64;
    let y0 = (cy - h as f64 / 2.0).round() as i64;
    BBox {
        x0,
        y0,
        x1: x0 + w,
        y1: y0 + h,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: i64, y0: i64, x1: i64, y1: i64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    /// Counts pixels of the 30x30 grid covered by each box.
    fn pixel_iou(a: &BBox, b: &BBox, side: i64) -> f64 {
        let (mut inter, mut union) = (0, 0);
        for y in 0..side {
            for x in 0..side {
                let (ia, ib) = (a.contains(x, y), b.contains(x, y));
                inter += (ia && ib) as i64;
                union += (ia || ib) as i64;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_examples() {
        let a = bx(0, 0, 10, 10);
        assert_eq!(bbox_iou(&a, &a), 1.0);
        assert_eq!(bbox_iou(&a, &bx(20, 20, 30, 30)), 0.0);
        let b = bx(0, 0, 10, 20);
        assert_eq!(pixel_iou(&a, &b, 30), 0.5);
        assert_eq!(bbox_iou(&a, &b), 0.5);
    }

    #[test]
    fn scale_examples() {
        let b = bx(10, 10, 20, 20);
        assert_eq!(scale_bbox(&b, 1.0, 100, 100).unwrap(), b);
        assert_eq!(scale_bbox(&b, 3.0, 100, 100).unwrap(), bx(0, 0, 30, 30));
        assert_eq!(scale_bbox(&bx(0, 0, 4, 4), 3.0, 8, 8).unwrap(), bx(0, 0, 8, 8));
        assert!(scale_bbox(&b, 0.0, 100, 100).is_err());
    }

    #[test]
    fn scale_degenerate_after_clip() {
        // entirely outside after scaling is impossible for in-image boxes, but
        // boxes given outside the image collapse to the nearest pixel
        let b = bx(200, 200, 210, 210);
        assert_eq!(scale_bbox(&b, 1.0, 50, 40).unwrap(), bx(49, 39, 50, 40));
    }

    #[test]
    fn empty_box_rejected() {
        assert!(BBox::new(3, 0, 3, 5).is_err());
        assert!(serde_json::from_str::<BBox>("[0,0,0,4]").is_err());
        assert_eq!(serde_json::to_string(&bx(1, 2, 3, 4)).unwrap(), "[1,2,3,4]");
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0i64..40, 0i64..40, 1i64..30, 1i64..30).prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded(a in arb_box(), b in arb_box()) {
            let ab = bbox_iou(&a, &b);
            prop_assert_eq!(ab, bbox_iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(bbox_iou(&a, &a), 1.0);
            prop_assert!((ab - pixel_iou(&a, &b, 80)).abs() < 1e-12);
        }

        #[test]
        fn unit_scale_is_identity(a in arb_box()) {
            prop_assert_eq!(scale_bbox(&a, 1.0, 100, 100).unwrap(), a);
        }
    }
}
