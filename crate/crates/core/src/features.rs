//! Per-candidate classification features.
//!
//! A feature vector is the concatenation of named blocks in a fixed order:
//! global appearance `G`, coarse and fine network scores `C` and `F`, face
//! appearance `Face`, then the object appearance of the box crop `O` and of
//! the masked crop `MO`. Ablations zero whole blocks.

use std::fmt;
use std::path::PathBuf;
use std::process::Command;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{pnm, SceneAnnotation};
use crate::error::{Error, Result};
use crate::geom::{scale_bbox, BBox};
use crate::image::ImageU8;
use crate::probmap::ProbMap;
use crate::region::RegionMask;
use crate::seed::fnv1a;

pub const THUMB_SIDE: usize = 16;
pub const HIST_BINS: usize = 32;
pub const BUILTIN_DIM: usize = THUMB_SIDE * THUMB_SIDE + 3 * HIST_BINS;
pub const FACE_SCALE: f64 = 2.0;

/// Maps an image crop to a fixed-length appearance vector.
pub trait AppearanceExtractor: Send + Sync {
    fn dim(&self) -> usize;
    fn extract(&self, image: &ImageU8) -> Result<Vec<f32>>;
    /// Identifies the extractor in the feature-layout checksum.
    fn name(&self) -> String;
}

/// 16x16 gray thumbnail plus per-channel 32-bin histograms.
#[derive(Clone, Copy, Debug, Default)]
pub struct BuiltinExtractor;

impl AppearanceExtractor for BuiltinExtractor {
    fn dim(&self) -> usize {
        BUILTIN_DIM
    }

    fn extract(&self, image: &ImageU8) -> Result<Vec<f32>> {
        let rgb = image.to_rgb();
        let thumb = rgb.crop_resize(&rgb.bounds(), THUMB_SIDE, THUMB_SIDE)?;
        let mut out = Vec::with_capacity(BUILTIN_DIM);
        out.extend(
            thumb
                .data()
                .chunks_exact(3)
                .map(|p| (u32::from(p[0]) + u32::from(p[1]) + u32::from(p[2])) as f32 / (3.0 * 255.0)),
        );
        let mut hist = [[0u32; HIST_BINS]; 3];
        for p in rgb.data().chunks_exact(3) {
            for c in 0..3 {
                hist[c][usize::from(p[c]) * HIST_BINS / 256] += 1;
            }
        }
        let n = (rgb.width() * rgb.height()) as f32;
        out.extend(hist.iter().flatten().map(|&h| h as f32 / n));
        Ok(out)
    }

    fn name(&self) -> String {
        "builtin".into()
    }
}

/// Runs `program args.. <crop.ppm> <out.f32>` and reads back `dim`
/// little-endian f32 values.
#[derive(Clone, Debug)]
pub struct ExternalExtractor {
    pub program: String,
    pub args: Vec<String>,
    pub dim: usize,
}

impl AppearanceExtractor for ExternalExtractor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, image: &ImageU8) -> Result<Vec<f32>> {
        let dir = std::env::temp_dir().join(format!(
            "actloc-ext-{}-{:016x}",
            std::process::id(),
            fnv1a(image.data()) ^ rayon::current_thread_index().unwrap_or(0) as u64
        ));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let crop = dir.join("crop.ppm");
        let out = dir.join("features.f32");
        let result = (|| {
            pnm::write(&crop, image)?;
            let status = Command::new(&self.program)
                .args(&self.args)
                .arg(&crop)
                .arg(&out)
                .status()
                .map_err(|e| Error::io(PathBuf::from(&self.program), e))?;
            if !status.success() {
                return Err(Error::contract(format!("external extractor {} failed: {status}", self.program)));
            }
            let bytes = std::fs::read(&out).map_err(|e| Error::io(&out, e))?;
            if bytes.len() != 4 * self.dim {
                return Err(Error::parse(
                    bytes.len().min(4 * self.dim),
                    format!("extractor output: expected {} bytes, found {}", 4 * self.dim, bytes.len()),
                ));
            }
            Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
        })();
        let _ = std::fs::remove_dir_all(&dir);
        result
    }

    fn name(&self) -> String {
        format!("external:{}:{}", self.dim, self.program)
    }
}

/// `builtin` or `external:DIM:PROGRAM [ARGS..]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractorSpec {
    Builtin,
    External { dim: usize, command: Vec<String> },
}

impl ExtractorSpec {
    pub fn build(&self) -> Arc<dyn AppearanceExtractor> {
        match self {
            ExtractorSpec::Builtin => Arc::new(BuiltinExtractor),
            ExtractorSpec::External { dim, command } => Arc::new(ExternalExtractor {
                program: command[0].clone(),
                args: command[1..].to_vec(),
                dim: *dim,
            }),
        }
    }
}

impl FromStr for ExtractorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "builtin" {
            return Ok(ExtractorSpec::Builtin);
        }
        let bad = || Error::contract(format!("bad extractor spec {s:?}; expected builtin or external:DIM:COMMAND"));
        let rest = s.strip_prefix("external:").ok_or_else(bad)?;
        let (dim, cmd) = rest.split_once(':').ok_or_else(bad)?;
        let dim: usize = dim.parse().map_err(|_| bad())?;
        let command: Vec<String> = cmd.split_whitespace().map(String::from).collect();
        if dim == 0 || command.is_empty() {
            return Err(bad());
        }
        Ok(ExtractorSpec::External { dim, command })
    }
}

impl fmt::Display for ExtractorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractorSpec::Builtin => write!(f, "builtin"),
            ExtractorSpec::External { dim, command } => write!(f, "external:{dim}:{}", command.join(" ")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    G,
    C,
    F,
    Face,
    O,
    MO,
}

impl Block {
    pub const ALL: [Block; 6] = [Block::G, Block::C, Block::F, Block::Face, Block::O, Block::MO];

    pub fn name(self) -> &'static str {
        match self {
            Block::G => "G",
            Block::C => "C",
            Block::F => "F",
            Block::Face => "Face",
            Block::O => "O",
            Block::MO => "MO",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// A subset of blocks. Parsed from `+`/`,`-separated names, where `Obj`
/// stands for `O` and `MO` together and `All` for every block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockSet(u8);

impl BlockSet {
    pub const EMPTY: BlockSet = BlockSet(0);
    pub const ALL: BlockSet = BlockSet(0b11_1111);

    pub fn of(blocks: &[Block]) -> Self {
        BlockSet(blocks.iter().fold(0, |acc, b| acc | b.bit()))
    }

    pub fn contains(self, b: Block) -> bool {
        self.0 & b.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: BlockSet) -> BlockSet {
        BlockSet(self.0 | other.0)
    }

    pub fn without(self, other: BlockSet) -> BlockSet {
        BlockSet(self.0 & !other.0)
    }

    pub fn blocks(self) -> impl Iterator<Item = Block> {
        Block::ALL.into_iter().filter(move |b| self.contains(*b))
    }
}

impl FromStr for BlockSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = BlockSet::EMPTY;
        for tok in s.split(['+', ',']).map(str::trim).filter(|t| !t.is_empty()) {
            let part = match tok {
                "All" => BlockSet::ALL,
                "Obj" => BlockSet::of(&[Block::O, Block::MO]),
                _ => match Block::ALL.into_iter().find(|b| b.name() == tok) {
                    Some(b) => BlockSet::of(&[b]),
                    None => return Err(Error::contract(format!("unknown feature block {tok:?}"))),
                },
            };
            set = set.union(part);
        }
        Ok(set)
    }
}

impl fmt::Display for BlockSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == BlockSet::ALL {
            return write!(f, "All");
        }
        let both = self.contains(Block::O) && self.contains(Block::MO);
        let mut names: Vec<&str> = self.blocks().filter(|b| !(both && matches!(b, Block::O | Block::MO))).map(Block::name).collect();
        if both {
            names.push("Obj");
        }
        write!(f, "{}", names.join("+"))
    }
}

/// Block order and lengths of a feature vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    blocks: Vec<(Block, usize)>,
    extractor: String,
}

impl FeatureLayout {
    pub fn new(appearance_dim: usize, num_labels: usize, extractor: impl Into<String>) -> Self {
        let blocks = Block::ALL
            .into_iter()
            .map(|b| (b, if matches!(b, Block::C | Block::F) { num_labels } else { appearance_dim }))
            .collect();
        FeatureLayout { blocks, extractor: extractor.into() }
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|(_, n)| n).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index range of `block` within the vector.
    pub fn range(&self, block: Block) -> std::ops::Range<usize> {
        let mut start = 0;
        for &(b, n) in &self.blocks {
            if b == block {
                return start..start + n;
            }
            start += n;
        }
        unreachable!("every block is in the layout")
    }

    /// e.g. `G:352|C:8|F:8|Face:352|O:352|MO:352|builtin`.
    pub fn descriptor(&self) -> String {
        let mut parts: Vec<String> = self.blocks.iter().map(|(b, n)| format!("{}:{n}", b.name())).collect();
        parts.push(self.extractor.clone());
        parts.join("|")
    }

    pub fn checksum(&self) -> u64 {
        fnv1a(self.descriptor().as_bytes())
    }

    /// Zeroes every block not in `keep`.
    pub fn mask(&self, keep: BlockSet, v: &mut [f32]) -> Result<()> {
        if keep.is_empty() {
            return Err(Error::contract("feature mask keeps no blocks"));
        }
        if v.len() != self.len() {
            return Err(Error::contract(format!("feature length {} does not match layout {}", v.len(), self.len())));
        }
        for &(b, _) in &self.blocks {
            if !keep.contains(b) {
                v[self.range(b)].fill(0.0);
            }
        }
        Ok(())
    }
}

/// Per-channel maximum over all pixels.
pub fn global_net_scores(map: &ProbMap) -> Vec<f32> {
    let l = map.num_labels();
    let mut out = vec![0.0f32; l];
    for px in map.data().chunks_exact(l) {
        for (o, &v) in out.iter_mut().zip(px) {
            *o = o.max(v);
        }
    }
    out
}

/// Crops to the region's box and replaces out-of-mask pixels by `mean`.
pub fn masked_crop(image: &ImageU8, region: &RegionMask, mean: [f32; 3]) -> Result<ImageU8> {
    let rgb = image.to_rgb();
    let b = region
        .bbox()
        .clip(rgb.width(), rgb.height())
        .ok_or_else(|| Error::contract(format!("region {} lies outside the image", region.bbox())))?;
    if !region.pixels().any(|(x, y)| b.contains(x, y)) {
        return Err(Error::contract(format!("region mask {} is empty inside the image", region.bbox())));
    }
    let mut crop = rgb.crop(&b)?;
    let fill = mean.map(|m| m.round().clamp(0.0, 255.0) as u8);
    for y in 0..crop.height() {
        for x in 0..crop.width() {
            if !region.contains(b.x0 + x as i64, b.y0 + y as i64) {
                crop.pixel_mut(x, y).copy_from_slice(&fill);
            }
        }
    }
    Ok(crop)
}

/// The annotated face box scaled by 2 about its center; `(whole image, true)`
/// when no face is annotated.
pub fn face_region(annotation: &SceneAnnotation, width: usize, height: usize) -> Result<(BBox, bool)> {
    match &annotation.face {
        Some(f) => Ok((scale_bbox(f, FACE_SCALE, width, height)?, false)),
        None => Ok((BBox::full(width, height), true)),
    }
}

/// Per-channel mean pixel value (0..255) over a set of images.
pub fn dataset_mean<'a>(images: impl IntoIterator<Item = &'a ImageU8>) -> [f32; 3] {
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for img in images {
        let rgb = img.to_rgb();
        for p in rgb.data().chunks_exact(3) {
            for c in 0..3 {
                sum[c] += u64::from(p[c]);
            }
        }
        n += (rgb.width() * rgb.height()) as u64;
    }
    if n == 0 {
        return [0.0; 3];
    }
    sum.map(|s| (s as f64 / n as f64) as f32)
}

/// The candidate-independent part of an image's features.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFeatures {
    pub global: Vec<f32>,
    pub coarse: Vec<f32>,
    pub fine: Vec<f32>,
    pub face: Vec<f32>,
    pub face_fallback: bool,
}

impl ImageFeatures {
    /// `coarse`/`fine` may be `None` when those blocks are not used; they are
    /// then zero-filled.
    pub fn compute(
        image: &ImageU8,
        maps: Option<(&ProbMap, &ProbMap)>,
        num_labels: usize,
        face_box: (BBox, bool),
        extractor: &dyn AppearanceExtractor,
    ) -> Result<Self> {
        let (coarse, fine) = match maps {
            Some((c, f)) => (global_net_scores(c), global_net_scores(f)),
            None => (vec![0.0; num_labels], vec![0.0; num_labels]),
        };
        Ok(ImageFeatures {
            global: extractor.extract(image)?,
            coarse,
            fine,
            face: extractor.extract(&image.crop(&face_box.0)?)?,
            face_fallback: face_box.1,
        })
    }

    /// Concatenates the image blocks with a candidate's object blocks.
    pub fn assemble(
        &self,
        image: &ImageU8,
        region: &RegionMask,
        extractor: &dyn AppearanceExtractor,
        mean: [f32; 3],
        layout: &FeatureLayout,
    ) -> Result<Vec<f32>> {
        let b = region
            .bbox()
            .clip(image.width(), image.height())
            .ok_or_else(|| Error::contract(format!("region {} lies outside the image", region.bbox())))?;
        let boxed = extractor.extract(&image.crop(&b)?)?;
        let masked = extractor.extract(&masked_crop(image, region, mean)?)?;
        let mut v = Vec::with_capacity(layout.len());
        for part in [&self.global, &self.coarse, &self.fine, &self.face, &boxed, &masked] {
            v.extend_from_slice(part);
        }
        if v.len() != layout.len() {
            return Err(Error::contract(format!("assembled {} features, layout expects {}", v.len(), layout.len())));
        }
        Ok(v)
    }
}

/// One-shot assembly of a single candidate's feature vector.
#[allow(clippy::too_many_arguments)]
pub fn assemble_features(
    image: &ImageU8,
    coarse: &ProbMap,
    fine: &ProbMap,
    face_box: (BBox, bool),
    region: &RegionMask,
    extractor: &dyn AppearanceExtractor,
    mean: [f32; 3],
) -> Result<Vec<f32>> {
    let layout = FeatureLayout::new(extractor.dim(), coarse.num_labels(), extractor.name());
    ImageFeatures::compute(image, Some((coarse, fine)), coarse.num_labels(), face_box, extractor)?
        .assemble(image, region, extractor, mean, &layout)
}
