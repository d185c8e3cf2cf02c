//! Synthetic face-related-action scenes.
//!
//! Every scene has a textured background, an elliptical face, one or two hand
//! blobs and a single action object whose shape family is determined by the
//! action class. Face and hand layout is class-independent, so the class can
//! only be read off the object's shape. Clutter shapes drawn from all families
//! are scattered away from the person and are not annotated.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::annotation::{ObjectAnnotation, SceneAnnotation};
use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::image::ImageU8;
use crate::seed::derive_seed;

/// Class name, object label, shape family.
const FAMILIES: &[(&str, &str, Shape)] = &[
    ("drinking", "cup", Shape::Ring),
    ("smoking", "cigarette", Shape::Stick),
    ("blowing_bubbles", "wand", Shape::DiskStick),
    ("brushing_teeth", "toothbrush", Shape::Ell),
    ("phoning", "phone", Shape::Bar),
    ("class_5", "cross", Shape::Cross),
    ("class_6", "triangle", Shape::Triangle),
    ("class_7", "disk", Shape::Disk),
];

pub const MAX_CLASSES: usize = 8;

/// Palette shared by objects of every class.
const OBJECT_COLORS: &[[u8; 3]] = &[[40, 40, 70], [75, 30, 30], [30, 65, 35], [25, 25, 25]];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Stick,
    DiskStick,
    Bar,
    Ell,
    Ring,
    Cross,
    Triangle,
    Disk,
}

impl Shape {
    /// Base orientation in radians.
    fn orientation(self) -> f64 {
        match self {
            Shape::Stick => PI / 5.0,
            Shape::DiskStick => -PI / 6.0,
            Shape::Ell => PI / 10.0,
            _ => 0.0,
        }
    }

    /// Membership in shape-local coordinates, nominally within `[-1, 1]^2`.
    fn contains(self, u: f64, v: f64) -> bool {
        let r2 = u * u + v * v;
        match self {
            Shape::Stick => v.abs() <= 0.22 && u.abs() <= 1.0,
            Shape::DiskStick => {
                (u - 0.45).powi(2) + v * v <= 0.3 || (v.abs() <= 0.16 && (-1.0..=0.2).contains(&u))
            }
            Shape::Bar => u.abs() <= 0.55 && v.abs() <= 1.0,
            Shape::Ell => {
                (v.abs() <= 0.2 && u.abs() <= 1.0) || ((0.45..=1.0).contains(&u) && (-0.2..=0.75).contains(&v))
            }
            Shape::Ring => (0.3..=1.0).contains(&r2),
            Shape::Cross => (u.abs() <= 0.22 && v.abs() <= 1.0) || (v.abs() <= 0.22 && u.abs() <= 1.0),
            Shape::Triangle => (-0.8..=0.9).contains(&v) && u.abs() <= (0.9 - v) * 0.55,
            Shape::Disk => r2 <= 1.0,
        }
    }
}

/// Generator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub side: usize,
    pub per_class: usize,
    pub seed: u64,
    /// Number of unannotated distractor shapes.
    pub clutter: usize,
    /// Object extent range as fractions of the image side.
    pub size_min: f64,
    pub size_max: f64,
    /// Half-width of the uniform orientation jitter, radians.
    #[serde(default = "default_rotation_jitter")]
    pub rotation_jitter: f64,
}

fn default_rotation_jitter() -> f64 {
    0.8
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 5,
            side: 128,
            per_class: 40,
            seed: 7,
            clutter: 2,
            size_min: 0.12,
            size_max: 0.20,
            rotation_jitter: default_rotation_jitter(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.classes > MAX_CLASSES {
            return Err(Error::contract(format!(
                "class count must be in 2..={MAX_CLASSES}, got {}",
                self.classes
            )));
        }
        if self.side < 64 {
            return Err(Error::contract("image side must be at least 64"));
        }
        if !(self.size_min > 0.0 && self.size_min <= self.size_max && self.size_max <= 0.5) {
            return Err(Error::contract("object size range must satisfy 0 < min <= max <= 0.5"));
        }
        if !(0.0..=PI).contains(&self.rotation_jitter) {
            return Err(Error::contract("rotation jitter must be in [0, pi]"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.classes * self.per_class
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_names(&self) -> Vec<String> {
        FAMILIES[..self.classes].iter().map(|f| f.0.to_string()).collect()
    }

    pub fn object_labels(&self) -> Vec<String> {
        FAMILIES[..self.classes].iter().map(|f| f.1.to_string()).collect()
    }

    /// Class of scene `index`. Consecutive even/odd indices share a class so
    /// the parity split is balanced.
    pub fn class_of(&self, index: usize) -> usize {
        (index / 2) % self.classes
    }

    pub fn image_id(index: usize) -> String {
        format!("s{index:05}")
    }
}

struct Canvas {
    img: ImageU8,
    side: usize,
}

impl Canvas {
    fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.img.pixel_mut(x, y).copy_from_slice(&rgb);
    }

    /// Paints an axis-aligned ellipse; returns the painted pixels' tight box.
    fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, rgb: [u8; 3]) -> Option<BBox> {
        let mut pixels = Vec::new();
        let (x0, x1) = span(cx - rx, cx + rx, self.side);
        let (y0, y1) = span(cy - ry, cy + ry, self.side);
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    self.put(x, y, rgb);
                    pixels.push((x, y));
                }
            }
        }
        tight(&pixels)
    }
}

fn span(lo: f64, hi: f64, side: usize) -> (usize, usize) {
    let a = lo.floor().max(0.0) as usize;
    let b = (hi.ceil().max(0.0) as usize).min(side);
    (a.min(side), b)
}

fn tight(pixels: &[(usize, usize)]) -> Option<BBox> {
    let &(fx, fy) = pixels.first()?;
    let mut b = BBox {
        x0: fx as i64,
        y0: fy as i64,
        x1: fx as i64 + 1,
        y1: fy as i64 + 1,
    };
    for &(x, y) in pixels {
        b.x0 = b.x0.min(x as i64);
        b.y0 = b.y0.min(y as i64);
        b.x1 = b.x1.max(x as i64 + 1);
        b.y1 = b.y1.max(y as i64 + 1);
    }
    Some(b)
}

/// Rasterized shape: pixels covered within the image.
struct Placed {
    pixels: Vec<(usize, usize)>,
    bbox: BBox,
}

fn rasterize(shape: Shape, cx: f64, cy: f64, extent: f64, angle: f64, side: usize) -> Option<Placed> {
    let h = extent / 2.0;
    let reach = h * 1.5;
    let (x0, x1) = span(cx - reach, cx + reach, side);
    let (y0, y1) = span(cy - reach, cy + reach, side);
    let (s, c) = angle.sin_cos();
    let mut pixels = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let u = (dx * c + dy * s) / h;
            let v = (-dx * s + dy * c) / h;
            if shape.contains(u, v) {
                pixels.push((x, y));
            }
        }
    }
    let bbox = tight(&pixels)?;
    Some(Placed { pixels, bbox })
}

fn jitter(rng: &mut ChaCha8Rng, base: [u8; 3], amp: i32) -> [u8; 3] {
    base.map(|v| (v as i32 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8)
}

fn object_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    let base = OBJECT_COLORS[rng.random_range(0..OBJECT_COLORS.len())];
    jitter(rng, base, 6)
}

fn paint_background(rng: &mut ChaCha8Rng, side: usize) -> ImageU8 {
    let base = [
        rng.random_range(115..=165) as f64,
        rng.random_range(115..=165) as f64,
        rng.random_range(115..=165) as f64,
    ];
    // value noise: random lattice, bilinear in between
    const CELLS: usize = 8;
    let lattice: Vec<f64> = (0..(CELLS + 1) * (CELLS + 1))
        .map(|_| rng.random_range(-12.0..12.0))
        .collect();
    let mut data = Vec::with_capacity(side * side * 3);
    let step = side as f64 / CELLS as f64;
    for y in 0..side {
        for x in 0..side {
            let gx = x as f64 / step;
            let gy = y as f64 / step;
            let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
            let (fx, fy) = (gx - ix as f64, gy - iy as f64);
            let at = |i: usize, j: usize| lattice[j.min(CELLS) * (CELLS + 1) + i.min(CELLS)];
            let n = at(ix, iy) * (1.0 - fx) * (1.0 - fy)
                + at(ix + 1, iy) * fx * (1.0 - fy)
                + at(ix, iy + 1) * (1.0 - fx) * fy
                + at(ix + 1, iy + 1) * fx * fy;
            for b in base {
                data.push((b + n).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageU8::new(side, side, 3, data).expect("background dimensions")
}

/// Renders scene `index`. Deterministic in `(spec.seed, index)`.
pub fn generate_scene(spec: &SynthSpec, index: usize) -> Result<(ImageU8, SceneAnnotation)> {
    spec.validate()?;
    let side = spec.side;
    let s = side as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &["synth", &index.to_string()]));
    let class = spec.class_of(index);
    let (class_name, object_label, shape) = FAMILIES[class];

    let mut canvas = Canvas {
        img: paint_background(&mut rng, side),
        side,
    };

    let skin = jitter(&mut rng, [205, 165, 135], 15);
    let fcx = rng.random_range(0.38..0.62) * s;
    let fcy = rng.random_range(0.28..0.42) * s;
    let frx = rng.random_range(0.10..0.13) * s;
    let fry = frx * rng.random_range(1.15..1.3);
    let face = canvas.ellipse(fcx, fcy, frx, fry, skin);

    let hand_count = rng.random_range(1..=2usize);
    let mut hands = Vec::new();
    let mut hand_centers = Vec::new();
    let first_side = if rng.random::<bool>() { 1.0 } else { -1.0 };
    for h in 0..hand_count {
        let dir = if h == 0 { first_side } else { -first_side };
        let hx = fcx + dir * rng.random_range(0.12..0.22) * s;
        let hy = fcy + fry + rng.random_range(0.0..0.08) * s;
        let r = rng.random_range(0.045..0.06) * s;
        let hand_rgb = jitter(&mut rng, skin, 8);
        if let Some(b) = canvas.ellipse(hx, hy, r, r * 1.2, hand_rgb) {
            hands.push(b);
            hand_centers.push((hx, hy));
        }
    }

    // action object: at the mouth or held in the first hand
    let extent = rng.random_range(spec.size_min..=spec.size_max) * s;
    let angle = shape.orientation() + rng.random_range(-spec.rotation_jitter..=spec.rotation_jitter);
    let (ax, ay) = if hand_centers.is_empty() || rng.random::<bool>() {
        (fcx + rng.random_range(-0.3..0.3) * frx, fcy + 0.75 * fry)
    } else {
        hand_centers[0]
    };
    let margin = extent * 0.75 + 1.0;
    let ocx = (ax + rng.random_range(-0.15..0.15) * extent).clamp(margin, s - margin);
    let ocy = (ay + rng.random_range(0.0..0.3) * extent).clamp(margin, s - margin);
    let color = object_color(&mut rng);
    let placed = rasterize(shape, ocx, ocy, extent, angle, side)
        .ok_or_else(|| Error::contract("object rasterized to nothing"))?;

    // clutter first so the action object is never painted over
    let mut keep_out: Vec<BBox> = Vec::new();
    if let Some(f) = face {
        let (cx, cy) = f.center();
        keep_out.push(crate::geom::centered_box(cx, cy, f.width() * 2, f.height() * 2));
    }
    keep_out.extend(hands.iter().copied());
    keep_out.push(placed.bbox);
    for _ in 0..spec.clutter {
        for _attempt in 0..50 {
            let fam = FAMILIES[rng.random_range(0..spec.classes)].2;
            let e = rng.random_range(spec.size_min..=spec.size_max) * s;
            let m = e * 0.75 + 1.0;
            let cx = rng.random_range(m..s - m);
            let cy = rng.random_range(m..s - m);
            let a = fam.orientation() + rng.random_range(-spec.rotation_jitter..=spec.rotation_jitter);
            let Some(d) = rasterize(fam, cx, cy, e, a, side) else { continue };
            let grown = BBox {
                x0: d.bbox.x0 - 2,
                y0: d.bbox.y0 - 2,
                x1: d.bbox.x1 + 2,
                y1: d.bbox.y1 + 2,
            };
            if keep_out.iter().any(|k| k.intersect(&grown).is_some()) {
                continue;
            }
            let rgb = object_color(&mut rng);
            for &(x, y) in &d.pixels {
                canvas.put(x, y, rgb);
            }
            keep_out.push(grown);
            break;
        }
    }

    for &(x, y) in &placed.pixels {
        canvas.put(x, y, color);
    }
    let w = placed.bbox.width() as usize;
    let mut mask = vec![false; placed.bbox.area() as usize];
    for &(x, y) in &placed.pixels {
        mask[(y - placed.bbox.y0 as usize) * w + (x - placed.bbox.x0 as usize)] = true;
    }

    let annotation = SceneAnnotation {
        id: SynthSpec::image_id(index),
        class: class_name.to_string(),
        face,
        hands,
        objects: vec![ObjectAnnotation::new(object_label, placed.bbox, mask)?],
    };
    Ok((canvas.img, annotation))
}
