//! Segmentation backends: anything that turns an image (or an upscaled
//! subwindow of one) into a probability map.
//!
//! Two concrete backends exist. The file backend replays maps exported by
//! external models. The oracle backend renders the ground-truth annotation and
//! degrades it with blur, a coarse output stride, label confusion and
//! Gaussian noise, standing in for the coarse and fine networks.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{fpm, SceneAnnotation};
use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::image::ImageU8;
use crate::probmap::{LabelSet, ProbMap};
use crate::seed::derive_seed;

/// Identifies the image region a map was computed for.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WindowKey {
    pub image_id: String,
    /// `None` is the whole image.
    pub window: Option<BBox>,
}

impl WindowKey {
    pub fn full(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            window: None,
        }
    }

    pub fn window(image_id: impl Into<String>, window: BBox) -> Self {
        Self {
            image_id: image_id.into(),
            window: Some(window),
        }
    }
}

impl std::fmt::Display for WindowKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.window {
            None => write!(f, "{}/full", self.image_id),
            Some(b) => write!(f, "{}/{b}", self.image_id),
        }
    }
}

/// A segmentation network stand-in.
pub trait SegmentBackend: Send + Sync {
    fn labels(&self) -> &Arc<LabelSet>;

    /// Maps `image` (the full image, or the resampled crop of `key.window`)
    /// to a probability map of the same dimensions.
    fn segment(&self, image: &ImageU8, annotation: Option<&SceneAnnotation>, key: &WindowKey) -> Result<ProbMap>;
}

/// Degradation knobs of the oracle backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    /// Noise standard deviation in probability units.
    pub sigma: f64,
    /// Box-blur radius in pixels of the backend's input.
    pub blur: usize,
    /// Output stride: block-mean downsample, nearest upsample.
    pub stride: usize,
    /// Probability that an object is rendered under a wrong object label.
    #[serde(default)]
    pub confusion: f64,
}

impl OracleParams {
    pub fn noiseless() -> Self {
        Self {
            sigma: 0.0,
            blur: 0,
            stride: 1,
            confusion: 0.0,
        }
    }

    pub fn coarse_default() -> Self {
        Self {
            sigma: 0.05,
            blur: 6,
            stride: 8,
            confusion: 0.3,
        }
    }

    pub fn fine_default() -> Self {
        Self {
            sigma: 0.05,
            blur: 1,
            stride: 1,
            confusion: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::contract("oracle sigma must be >= 0"));
        }
        if self.stride < 1 {
            return Err(Error::contract("oracle stride must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.confusion) {
            return Err(Error::contract("oracle confusion must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Declarative backend choice, parsed from `file:<dir>` or
/// `oracle[:sigma=..,blur=..,stride=..,confusion=..]`.
#[derive(Clone, Debug, PartialEq)]
pub enum SegBackendSpec {
    File { dir: PathBuf },
    Oracle(OracleParams),
}

impl SegBackendSpec {
    /// Instantiates the backend; `stream` separates the noise streams of
    /// different backends sharing one seed.
    pub fn build(&self, labels: Arc<LabelSet>, seed: u64, stream: &str) -> Result<Arc<dyn SegmentBackend>> {
        Ok(match self {
            SegBackendSpec::File { dir } => Arc::new(FileBackend::new(dir.clone(), labels)),
            SegBackendSpec::Oracle(p) => Arc::new(OracleBackend::new(p.clone(), labels, seed, stream)?),
        })
    }
}

impl FromStr for SegBackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(dir) = s.strip_prefix("file:") {
            if dir.is_empty() {
                return Err(Error::contract("file backend needs a directory"));
            }
            return Ok(SegBackendSpec::File { dir: dir.into() });
        }
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut p = match kind {
            "oracle" | "oracle-fine" => OracleParams::fine_default(),
            "oracle-coarse" => OracleParams::coarse_default(),
            "oracle-exact" => OracleParams::noiseless(),
            _ => return Err(Error::contract(format!("unknown backend `{s}`"))),
        };
        for kv in rest.split(',').filter(|t| !t.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::contract(format!("expected key=value, got `{kv}`")))?;
            let bad = || Error::contract(format!("bad value for `{k}`: `{v}`"));
            match k {
                "sigma" => p.sigma = v.parse().map_err(|_| bad())?,
                "blur" => p.blur = v.parse().map_err(|_| bad())?,
                "stride" => p.stride = v.parse().map_err(|_| bad())?,
                "confusion" => p.confusion = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::contract(format!("unknown oracle option `{k}`"))),
            }
        }
        p.validate()?;
        Ok(SegBackendSpec::Oracle(p))
    }
}

impl std::fmt::Display for SegBackendSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SegBackendSpec::File { dir } => write!(f, "file:{}", dir.display()),
            SegBackendSpec::Oracle(p) => write!(
                f,
                "oracle:sigma={},blur={},stride={},confusion={}",
                p.sigma, p.blur, p.stride, p.confusion
            ),
        }
    }
}

/// Replays stored `.fpm` maps, one file per window key.
pub struct FileBackend {
    dir: PathBuf,
    labels: Arc<LabelSet>,
}

impl FileBackend {
    pub fn new(dir: PathBuf, labels: Arc<LabelSet>) -> Self {
        Self { dir, labels }
    }
}

impl SegmentBackend for FileBackend {
    fn labels(&self) -> &Arc<LabelSet> {
        &self.labels
    }

    fn segment(&self, image: &ImageU8, _annotation: Option<&SceneAnnotation>, key: &WindowKey) -> Result<ProbMap> {
        let path = fpm::path_for(&self.dir, &key.image_id, key.window.as_ref());
        if !path.exists() {
            return Err(Error::MissingMap {
                key: key.to_string(),
                path,
            });
        }
        let map = fpm::read(&path)?;
        if map.labels().names() != self.labels.names() {
            return Err(Error::parse(16, format!("{}: label set differs from the pipeline's", path.display())));
        }
        if map.width() != image.width() || map.height() != image.height() {
            return Err(Error::contract(format!(
                "{}: stored map is {}x{}, input is {}x{}",
                path.display(),
                map.width(),
                map.height(),
                image.width(),
                image.height()
            )));
        }
        Ok(map)
    }
}

/// Renders ground truth and degrades it.
pub struct OracleBackend {
    params: OracleParams,
    labels: Arc<LabelSet>,
    seed: u64,
    stream: String,
}

impl OracleBackend {
    pub fn new(params: OracleParams, labels: Arc<LabelSet>, seed: u64, stream: &str) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            labels,
            seed,
            stream: stream.to_string(),
        })
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    /// Object labels after applying label confusion. Depends only on the seed
    /// and image id, so every window of an image agrees.
    fn confused(&self, annotation: &SceneAnnotation) -> Result<SceneAnnotation> {
        let mut out = annotation.clone();
        if self.params.confusion <= 0.0 {
            return Ok(out);
        }
        let objects = self.labels.objects();
        if objects.len() < 2 {
            return Ok(out);
        }
        for (i, o) in out.objects.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                self.seed,
                &[&self.stream, "confusion", &annotation.id, &i.to_string()],
            ));
            if rng.random::<f64>() < self.params.confusion {
                let own = self.labels.object_index(&o.label)?;
                let others: Vec<usize> = objects.iter().copied().filter(|&c| c != own).collect();
                let pick = others[rng.random_range(0..others.len())];
                o.label = self.labels.name(pick).to_string();
            }
        }
        Ok(out)
    }
}

impl SegmentBackend for OracleBackend {
    fn labels(&self) -> &Arc<LabelSet> {
        &self.labels
    }

    fn segment(&self, image: &ImageU8, annotation: Option<&SceneAnnotation>, key: &WindowKey) -> Result<ProbMap> {
        let annotation = annotation
            .ok_or_else(|| Error::contract(format!("oracle backend needs an annotation for {key}")))?;
        let annotation = self.confused(annotation)?;
        let (w, h) = (image.width(), image.height());
        let frame = key.window.unwrap_or_else(|| BBox::full(w, h));
        if frame.area() <= 0 {
            return Err(Error::contract(format!("empty window for {key}")));
        }
        let (fw, fh) = (frame.width() as usize, frame.height() as usize);

        // ground truth over the frame at source resolution, nearest-sampled to the input
        let shifted = shift_annotation(&annotation, -frame.x0, -frame.y0);
        let gt = render_groundtruth(&shifted, fw, fh, &self.labels)?;
        let labels_at: Vec<u16> = if (fw, fh) == (w, h) {
            gt
        } else {
            let xs: Vec<usize> = (0..w).map(|i| ((i as f64 + 0.5) * fw as f64 / w as f64) as usize).collect();
            let ys: Vec<usize> = (0..h).map(|j| ((j as f64 + 0.5) * fh as f64 / h as f64) as usize).collect();
            ys.iter()
                .flat_map(|&sy| xs.iter().map(move |&sx| (sx.min(fw - 1), sy.min(fh - 1))))
                .map(|(sx, sy)| gt[sy * fw + sx])
                .collect()
        };

        let l = self.labels.len();
        let mut data = vec![0.0f32; w * h * l];
        for (i, &c) in labels_at.iter().enumerate() {
            data[i * l + c as usize] = 1.0;
        }
        if self.params.blur > 0 {
            box_blur(&mut data, w, h, l, self.params.blur);
        }
        if self.params.stride > 1 {
            block_stride(&mut data, w, h, l, self.params.stride);
        }
        if self.params.sigma > 0.0 {
            let window = key.window.map_or_else(|| "full".to_string(), |b| b.to_string());
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                self.seed,
                &[&self.stream, "noise", &key.image_id, &window],
            ));
            let normal = Normal::new(0.0f64, self.params.sigma).expect("sigma validated");
            for v in data.iter_mut() {
                *v = (f64::from(*v) + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
            }
        }
        ProbMap::from_weights(w, h, self.labels.clone(), data)
    }
}

fn shift_annotation(a: &SceneAnnotation, dx: i64, dy: i64) -> SceneAnnotation {
    let mv = |b: BBox| BBox {
        x0: b.x0 + dx,
        y0: b.y0 + dy,
        x1: b.x1 + dx,
        y1: b.y1 + dy,
    };
    let mut out = a.clone();
    out.face = a.face.map(mv);
    out.hands = a.hands.iter().copied().map(mv).collect();
    for o in &mut out.objects {
        o.bbox = mv(o.bbox);
    }
    out
}

/// Per-pixel label indices: background, then face box, hand boxes, and
/// object masks on top, in annotation order. Geometry is clipped to the frame.
pub fn render_groundtruth(annotation: &SceneAnnotation, width: usize, height: usize, labels: &LabelSet) -> Result<Vec<u16>> {
    let mut map = vec![0u16; width * height];
    let mut fill = |b: &BBox, c: usize| {
        if let Some(b) = b.clip(width, height) {
            for y in b.y0..b.y1 {
                for x in b.x0..b.x1 {
                    map[y as usize * width + x as usize] = c as u16;
                }
            }
        }
    };
    if let Some(f) = &annotation.face {
        fill(f, labels.face());
    }
    for hb in &annotation.hands {
        fill(hb, labels.hand());
    }
    for o in &annotation.objects {
        let c = labels.object_index(&o.label)? as u16;
        let bw = o.bbox.width();
        for (i, _) in o.mask.iter().enumerate().filter(|(_, &m)| m) {
            let x = o.bbox.x0 + i as i64 % bw;
            let y = o.bbox.y0 + i as i64 / bw;
            if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                map[y as usize * width + x as usize] = c;
            }
        }
    }
    Ok(map)
}

/// Separable mean filter over `(2r+1)^2`, averaging only in-image pixels.
fn box_blur(data: &mut [f32], w: usize, h: usize, l: usize, r: usize) {
    let mut tmp = vec![0.0f32; data.len()];
    let mut prefix = vec![0.0f64; w.max(h) + 1];
    for y in 0..h {
        for c in 0..l {
            for x in 0..w {
                prefix[x + 1] = prefix[x] + f64::from(data[(y * w + x) * l + c]);
            }
            for x in 0..w {
                let (a, b) = (x.saturating_sub(r), (x + r + 1).min(w));
                tmp[(y * w + x) * l + c] = ((prefix[b] - prefix[a]) / (b - a) as f64) as f32;
            }
        }
    }
    for x in 0..w {
        for c in 0..l {
            for y in 0..h {
                prefix[y + 1] = prefix[y] + f64::from(tmp[(y * w + x) * l + c]);
            }
            for y in 0..h {
                let (a, b) = (y.saturating_sub(r), (y + r + 1).min(h));
                data[(y * w + x) * l + c] = ((prefix[b] - prefix[a]) / (b - a) as f64) as f32;
            }
        }
    }
}

/// Replaces each `s x s` block (partial at the edges) by its mean.
fn block_stride(data: &mut [f32], w: usize, h: usize, l: usize, s: usize) {
    let mut mean = vec![0.0f64; l];
    for by in (0..h).step_by(s) {
        for bx in (0..w).step_by(s) {
            let (ey, ex) = ((by + s).min(h), (bx + s).min(w));
            mean.fill(0.0);
            for y in by..ey {
                for x in bx..ex {
                    for (c, m) in mean.iter_mut().enumerate() {
                        *m += f64::from(data[(y * w + x) * l + c]);
                    }
                }
            }
            let n = ((ey - by) * (ex - bx)) as f64;
            for y in by..ey {
                for x in bx..ex {
                    for (c, m) in mean.iter().enumerate() {
                        data[(y * w + x) * l + c] = (m / n) as f32;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_scene, ObjectAnnotation, SynthSpec};

    fn scene() -> (ImageU8, SceneAnnotation, Arc<LabelSet>) {
        let spec = SynthSpec::default();
        let (img, ann) = generate_scene(&spec, 4).unwrap();
        let labels = Arc::new(LabelSet::with_objects(&spec.object_labels()).unwrap());
        (img, ann, labels)
    }

    fn argmax(px: &[f32]) -> usize {
        let mut best = 0;
        for (c, &v) in px.iter().enumerate() {
            if v > px[best] {
                best = c;
            }
        }
        best
    }

    fn sums_ok(p: &ProbMap) -> bool {
        p.data()
            .chunks(p.num_labels())
            .all(|px| (px.iter().map(|&v| f64::from(v)).sum::<f64>() - 1.0).abs() <= 1e-6)
    }

    #[test]
    fn render_empty_is_background() {
        let labels = LabelSet::with_objects(&["cup"]).unwrap();
        let a = SceneAnnotation::empty("x", "drinking");
        assert!(render_groundtruth(&a, 7, 5, &labels).unwrap().iter().all(|&c| c == 0));
    }

    #[test]
    fn render_paint_order() {
        let labels = LabelSet::with_objects(&["cup"]).unwrap();
        let mut a = SceneAnnotation::empty("x", "drinking");
        a.face = Some(BBox::new(0, 0, 6, 6).unwrap());
        a.hands.push(BBox::new(4, 4, 8, 8).unwrap());
        let obj = ObjectAnnotation::new("cup", BBox::new(3, 3, 5, 5).unwrap(), vec![true; 4]).unwrap();
        a.objects.push(obj);
        let m = render_groundtruth(&a, 10, 10, &labels).unwrap();
        let at = |x: usize, y: usize| m[y * 10 + x];
        assert_eq!(at(0, 0), 1);
        assert_eq!(at(5, 5), 2);
        assert_eq!(at(3, 3), 3);
        assert_eq!(at(4, 4), 3);
        assert_eq!(m.iter().filter(|&&c| c == 3).count(), 4);
        assert_eq!(at(9, 9), 0);

        a.objects[0].label = "phone".into();
        assert!(render_groundtruth(&a, 10, 10, &labels).is_err());
    }

    #[test]
    fn noiseless_oracle_is_one_hot_ground_truth() {
        let (img, ann, labels) = scene();
        let b = OracleBackend::new(OracleParams::noiseless(), labels.clone(), 1, "t").unwrap();
        let p = b.segment(&img, Some(&ann), &WindowKey::full(&ann.id)).unwrap();
        let gt = render_groundtruth(&ann, img.width(), img.height(), &labels).unwrap();
        for y in 0..img.height() {
            for x in 0..img.width() {
                let px = p.pixel(x, y);
                assert_eq!(argmax(px), gt[y * img.width() + x] as usize);
                assert!(px.iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }

    #[test]
    fn degraded_oracle_conserves_mass_and_is_deterministic() {
        let (img, ann, labels) = scene();
        for params in [OracleParams::coarse_default(), OracleParams::fine_default()] {
            let b = OracleBackend::new(params, labels.clone(), 11, "t").unwrap();
            let key = WindowKey::full(&ann.id);
            let p = b.segment(&img, Some(&ann), &key).unwrap();
            assert!(sums_ok(&p));
            assert_eq!(p, b.segment(&img, Some(&ann), &key).unwrap());
        }
    }

    #[test]
    fn stride_blocks_are_constant_before_noise() {
        let (img, ann, labels) = scene();
        let params = OracleParams {
            sigma: 0.0,
            blur: 3,
            stride: 8,
            confusion: 0.0,
        };
        let b = OracleBackend::new(params, labels, 0, "t").unwrap();
        let p = b.segment(&img, Some(&ann), &WindowKey::full(&ann.id)).unwrap();
        for y in 0..img.height() {
            for x in 0..img.width() {
                assert_eq!(p.pixel(x, y), p.pixel(x / 8 * 8, y / 8 * 8));
            }
        }
        assert!(sums_ok(&p));
    }

    #[test]
    fn windowed_oracle_matches_full_render() {
        let (img, ann, labels) = scene();
        let b = OracleBackend::new(OracleParams::noiseless(), labels.clone(), 0, "t").unwrap();
        let win = BBox::new(30, 20, 70, 60).unwrap();
        let crop = img.crop_resize(&win, 80, 80).unwrap();
        let p = b.segment(&crop, Some(&ann), &WindowKey::window(&ann.id, win)).unwrap();
        let gt = render_groundtruth(&ann, img.width(), img.height(), &labels).unwrap();
        for j in 0..80 {
            for i in 0..80 {
                let (sx, sy) = (30 + i / 2, 20 + j / 2);
                assert_eq!(argmax(p.pixel(i, j)), gt[sy * img.width() + sx] as usize);
            }
        }
    }

    #[test]
    fn oracle_requires_annotation() {
        let (img, _, labels) = scene();
        let b = OracleBackend::new(OracleParams::noiseless(), labels, 0, "t").unwrap();
        assert!(matches!(b.segment(&img, None, &WindowKey::full("a")), Err(Error::Contract(_))));
    }

    #[test]
    fn confusion_relabels_consistently() {
        let (img, ann, labels) = scene();
        let params = OracleParams {
            confusion: 1.0,
            ..OracleParams::noiseless()
        };
        let b = OracleBackend::new(params, labels.clone(), 3, "t").unwrap();
        let p = b.segment(&img, Some(&ann), &WindowKey::full(&ann.id)).unwrap();
        let own = labels.object_index(&ann.objects[0].label).unwrap();
        let (cx, cy) = ann.objects[0].region(&labels).unwrap().pixels().next().unwrap();
        let got = argmax(p.pixel(cx as usize, cy as usize));
        assert!(labels.is_object(got) && got != own);
    }

    #[test]
    fn file_backend_roundtrip_and_missing_key() {
        let (img, ann, labels) = scene();
        let dir = tempfile::tempdir().unwrap();
        let oracle = OracleBackend::new(OracleParams::coarse_default(), labels.clone(), 5, "t").unwrap();
        let key = WindowKey::full(&ann.id);
        let p = oracle.segment(&img, Some(&ann), &key).unwrap();
        fpm::write(&fpm::path_for(dir.path(), &ann.id, None), &p).unwrap();
        let fb = FileBackend::new(dir.path().to_path_buf(), labels);
        let q = fb.segment(&img, None, &key).unwrap();
        assert!(p.data().iter().zip(q.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let missing = WindowKey::window(&ann.id, BBox::new(0, 0, 5, 5).unwrap());
        let err = fb.segment(&img, None, &missing).unwrap_err();
        assert!(err.to_string().contains("s00004/[0,0,5,5)"), "{err}");
    }

    #[test]
    fn spec_strings() {
        let s: SegBackendSpec = "oracle:sigma=0.1,blur=2,stride=4".parse().unwrap();
        assert_eq!(
            s,
            SegBackendSpec::Oracle(OracleParams {
                sigma: 0.1,
                blur: 2,
                stride: 4,
                confusion: 0.0
            })
        );
        assert_eq!(s.to_string().parse::<SegBackendSpec>().unwrap(), s);
        assert!("oracle:stride=0".parse::<SegBackendSpec>().is_err());
        assert!("oracle:sigma=-1".parse::<SegBackendSpec>().is_err());
        assert!("gpu".parse::<SegBackendSpec>().is_err());
        assert_eq!(
            "file:maps/c".parse::<SegBackendSpec>().unwrap(),
            SegBackendSpec::File { dir: "maps/c".into() }
        );
    }
}
