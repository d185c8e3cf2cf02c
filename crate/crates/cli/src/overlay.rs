//! PPM overlays of ranked regions.

use actloc::ranking::Ranked;
use actloc::{BBox, ImageU8, ProbMap};

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
];
const FACE_COLOR: [u8; 3] = [255, 225, 25];
const MAX_ALPHA: f32 = 0.65;

pub fn color(channel: usize) -> [u8; 3] {
    PALETTE[channel % PALETTE.len()]
}

fn outline(img: &mut ImageU8, b: &BBox, c: [u8; 3]) {
    let Some(b) = b.clip(img.width(), img.height()) else { return };
    let (x0, y0, x1, y1) = (b.x0 as usize, b.y0 as usize, b.x1 as usize - 1, b.y1 as usize - 1);
    for x in x0..=x1 {
        img.pixel_mut(x, y0).copy_from_slice(&c);
        img.pixel_mut(x, y1).copy_from_slice(&c);
    }
    for y in y0..=y1 {
        img.pixel_mut(x0, y).copy_from_slice(&c);
        img.pixel_mut(x1, y).copy_from_slice(&c);
    }
}

/// Regions are drawn lowest rank first, each mask pixel tinted with its
/// label color at an opacity proportional to that label's probability.
pub fn render(image: &ImageU8, map: &ProbMap, top: &[Ranked], face: Option<&BBox>) -> actloc::Result<ImageU8> {
    let mut img = image.to_rgb();
    let (w, h) = (img.width() as i64, img.height() as i64);
    for r in top.iter().rev() {
        let ch = r.region.channel();
        let c = color(ch);
        for (x, y) in r.region.pixels() {
            if x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            let a = MAX_ALPHA * map.get(x, y, ch).clamp(0.0, 1.0);
            let px = img.pixel_mut(x, y);
            for k in 0..3 {
                px[k] = ((1.0 - a) * px[k] as f32 + a * c[k] as f32).round() as u8;
            }
        }
        outline(&mut img, &r.region.bbox(), c);
    }
    if let Some(f) = face {
        outline(&mut img, f, FACE_COLOR);
    }
    Ok(img)
}
