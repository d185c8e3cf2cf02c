//! Per-image flow and the training/inference drivers built on it.
//!
//! An image is segmented by the coarse backend, refined on subwindows by the
//! fine backend, and candidate regions with their context features are taken
//! from the chosen map. Training fits the ranker on every candidate plus the
//! ground-truth regions, then the classifier on features of the ground-truth
//! action object. Inference scores the top-q ranked candidates.

use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{SegBackendSpec, SegmentBackend, WindowKey};
use crate::candidates::{self, CandidateParams};
use crate::classifier::{self, ClassifierModel, ModelBundle, SvmParams};
use crate::coarse2fine::{refine, Peak, RefineParams};
use crate::context::{context_feature, ContextFeature};
use crate::dataset::{Sample, SceneAnnotation};
use crate::error::{Error, Result};
use crate::features::{dataset_mean, face_region, AppearanceExtractor, BlockSet, FeatureLayout, ImageFeatures};
use crate::geom::{bbox_iou, BBox};
use crate::probmap::{LabelSet, ProbMap};
use crate::ranking::{self, rank_and_prune, Ranked, RankerModel, RankerParams};
use crate::region::RegionMask;
use crate::seed::derive_seed;

/// Which map candidates and their context come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapChoice {
    Coarse,
    Fine,
}

impl FromStr for MapChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(MapChoice::Coarse),
            "fine" => Ok(MapChoice::Fine),
            _ => Err(Error::contract(format!("unknown map {s:?}; expected coarse or fine"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub refine: RefineParams,
    pub candidates: CandidateParams,
    pub q: usize,
    pub candidate_map: MapChoice,
    pub ranker: RankerParams,
    pub svm: SvmParams,
    pub seed: u64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            refine: RefineParams::default(),
            candidates: CandidateParams::default(),
            q: 3,
            candidate_map: MapChoice::Fine,
            ranker: RankerParams::default(),
            svm: SvmParams::default(),
            seed: 7,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        self.refine.validate()?;
        self.candidates.validate()?;
        self.ranker.validate()?;
        if self.q == 0 {
            return Err(Error::contract("q must be at least 1"));
        }
        Ok(())
    }

    fn ranker_params(&self) -> RankerParams {
        RankerParams { seed: derive_seed(self.seed, &["ranker"]), ..self.ranker }
    }

    fn svm_params(&self) -> SvmParams {
        SvmParams { seed: derive_seed(self.seed, &["svm"]), ..self.svm }
    }
}

#[derive(Clone)]
pub struct Backends {
    pub coarse: Arc<dyn SegmentBackend>,
    pub fine: Arc<dyn SegmentBackend>,
}

impl Backends {
    pub fn build(coarse: &SegBackendSpec, fine: &SegBackendSpec, labels: &Arc<LabelSet>, seed: u64) -> Result<Self> {
        Ok(Backends { coarse: coarse.build(labels.clone(), seed, "coarse")?, fine: fine.build(labels.clone(), seed, "fine")? })
    }
}

/// Everything the pipeline derives from one image before ranking.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub id: String,
    pub coarse: ProbMap,
    pub fine: ProbMap,
    pub peaks: Vec<Peak>,
    pub windows: Vec<BBox>,
    pub candidates: Vec<(RegionMask, ContextFeature)>,
    pub map_choice: MapChoice,
}

impl Analysis {
    pub fn candidate_map(&self) -> &ProbMap {
        match self.map_choice {
            MapChoice::Coarse => &self.coarse,
            MapChoice::Fine => &self.fine,
        }
    }
}

/// Candidates of `map` paired with their context features.
pub fn propose(map: &ProbMap, params: &CandidateParams) -> Result<Vec<(RegionMask, ContextFeature)>> {
    candidates::generate(map, params)?
        .into_iter()
        .map(|r| {
            let f = context_feature(map, &r)?;
            Ok((r, f))
        })
        .collect()
}

pub fn analyze(sample: &Sample, backends: &Backends, params: &PipelineParams) -> Result<Analysis> {
    let id = &sample.annotation.id;
    let ann = Some(&sample.annotation);
    let coarse = backends.coarse.segment(&sample.image, ann, &WindowKey::full(id.as_str()))?;
    let refined = refine(&sample.image, ann, id, &coarse, backends.fine.as_ref(), &params.refine)?;
    let map = match params.candidate_map {
        MapChoice::Coarse => &coarse,
        MapChoice::Fine => &refined.map,
    };
    let candidates = propose(map, &params.candidates)?;
    Ok(Analysis {
        id: id.clone(),
        coarse,
        fine: refined.map,
        peaks: refined.peaks,
        windows: refined.windows,
        candidates,
        map_choice: params.candidate_map,
    })
}

/// Analyzes samples in parallel; output order follows the input.
pub fn analyze_all(samples: &[&Sample], backends: &Backends, params: &PipelineParams) -> Result<Vec<Analysis>> {
    samples.par_iter().map(|s| analyze(s, backends, params)).collect()
}

/// Largest box IoU between `region` and any annotated object.
pub fn overlap_target(region: &RegionMask, annotation: &SceneAnnotation) -> f64 {
    annotation.objects.iter().map(|o| bbox_iou(&region.bbox(), &o.bbox)).fold(0.0, f64::max)
}

/// Regression samples of one image: every candidate and every ground-truth
/// object region, each with its best IoU against the ground truth.
pub fn ranker_samples(analysis: &Analysis, annotation: &SceneAnnotation) -> Result<Vec<(ContextFeature, f64)>> {
    let map = analysis.candidate_map();
    let mut out: Vec<(ContextFeature, f64)> =
        analysis.candidates.iter().map(|(r, f)| (f.clone(), overlap_target(r, annotation))).collect();
    for o in &annotation.objects {
        let r = o.region(map.labels())?;
        out.push((context_feature(map, &r)?, overlap_target(&r, annotation)));
    }
    Ok(out)
}

pub fn train_ranker(analyses: &[Analysis], samples: &[&Sample], params: &PipelineParams) -> Result<RankerModel> {
    let mut data = Vec::new();
    for (a, s) in analyses.iter().zip(samples) {
        data.extend(ranker_samples(a, &s.annotation)?);
    }
    ranking::train_ranker(&data, &params.ranker_params())
}

/// Top-q candidates of an analyzed image, or the whole-image fallback.
pub fn ranked(analysis: &Analysis, ranker: &RankerModel, q: usize) -> Result<Vec<Ranked>> {
    let labels = analysis.candidate_map().labels();
    let (w, h) = (analysis.coarse.width(), analysis.coarse.height());
    rank_and_prune(&analysis.candidates, ranker, q, || ranking::fallback_region(w, h, labels.objects()[0]))
}

/// Feature rows of one image, one per region.
pub fn image_rows(
    sample: &Sample,
    maps: Option<(&ProbMap, &ProbMap)>,
    regions: &[RegionMask],
    labels: &LabelSet,
    extractor: &dyn AppearanceExtractor,
    mean: [f32; 3],
) -> Result<Vec<Vec<f32>>> {
    let (w, h) = (sample.image.width(), sample.image.height());
    let layout = FeatureLayout::new(extractor.dim(), labels.len(), extractor.name());
    let face = face_region(&sample.annotation, w, h)?;
    let img = ImageFeatures::compute(&sample.image, maps, labels.len(), face, extractor)?;
    regions.iter().map(|r| img.assemble(&sample.image, r, extractor, mean, &layout)).collect()
}

/// The ground-truth action object; errors when the image has none.
pub fn action_region(sample: &Sample, labels: &LabelSet) -> Result<RegionMask> {
    sample
        .annotation
        .action_object()
        .ok_or_else(|| Error::contract(format!("{}: no annotated action object", sample.annotation.id)))?
        .region(labels)
}

/// Feature rows and class indices used for classifier training.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub rows: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
    pub mean: [f32; 3],
}

/// Training rows from the ground-truth action object of each sample.
pub fn training_set(
    samples: &[&Sample],
    analyses: Option<&[Analysis]>,
    classes: &[String],
    labels: &LabelSet,
    extractor: &dyn AppearanceExtractor,
) -> Result<TrainingSet> {
    let mean = dataset_mean(samples.iter().map(|s| &s.image));
    let rows = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let maps = analyses.map(|a| (&a[i].coarse, &a[i].fine));
            let r = action_region(s, labels)?;
            Ok(image_rows(s, maps, &[r], labels, extractor, mean)?.remove(0))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = samples
        .iter()
        .map(|s| {
            classes
                .iter()
                .position(|c| *c == s.annotation.class)
                .ok_or_else(|| Error::contract(format!("{}: unknown class {}", s.annotation.id, s.annotation.class)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet { rows, labels, mean })
}

/// Trains a classifier on `set` with all blocks outside `keep` zeroed.
pub fn train_masked(
    set: &TrainingSet,
    layout: &FeatureLayout,
    keep: BlockSet,
    classes: &[String],
    params: &PipelineParams,
) -> Result<ClassifierModel> {
    let rows = set
        .rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            layout.mask(keep, &mut r)?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    classifier::train_classifier(&rows, &set.labels, classes, &params.svm_params(), set.mean, layout.checksum())
}

/// Full training on `samples`.
pub fn train(
    samples: &[&Sample],
    classes: &[String],
    labels: &Arc<LabelSet>,
    backends: &Backends,
    extractor: &dyn AppearanceExtractor,
    keep: BlockSet,
    params: &PipelineParams,
) -> Result<ModelBundle> {
    params.validate()?;
    let analyses = analyze_all(samples, backends, params)?;
    let ranker = train_ranker(&analyses, samples, params)?;
    let set = training_set(samples, Some(&analyses), classes, labels, extractor)?;
    let layout = FeatureLayout::new(extractor.dim(), labels.len(), extractor.name());
    let classifier = train_masked(&set, &layout, keep, classes, params)?;
    Ok(ModelBundle { classifier, ranker })
}

/// The inference result for one image.
#[derive(Clone, Debug)]
pub struct Inference {
    pub id: String,
    pub ranked: Vec<Ranked>,
    pub rows: Vec<Vec<f32>>,
    pub scores: Vec<f64>,
    /// Per class, the position in `ranked` of the candidate that scored best.
    pub best: Vec<usize>,
    pub predicted: usize,
}

/// Ranks an analyzed image's candidates and scores the top q.
pub fn infer(
    sample: &Sample,
    analysis: &Analysis,
    bundle: &ModelBundle,
    extractor: &dyn AppearanceExtractor,
    q: usize,
) -> Result<Inference> {
    let labels = analysis.coarse.labels();
    let layout = FeatureLayout::new(extractor.dim(), labels.len(), extractor.name());
    if layout.checksum() != bundle.classifier.layout_checksum {
        return Err(Error::contract(format!(
            "model was trained with a different feature layout (this run: {})",
            layout.descriptor()
        )));
    }
    let ranked = ranked(analysis, &bundle.ranker, q)?;
    let regions: Vec<RegionMask> = ranked.iter().map(|r| r.region.clone()).collect();
    let rows = image_rows(
        sample,
        Some((&analysis.coarse, &analysis.fine)),
        &regions,
        labels,
        extractor,
        bundle.classifier.mean,
    )?;
    let (scores, best) = classifier::score_image(&bundle.classifier, &rows)?;
    let predicted = classifier::predict(&scores);
    Ok(Inference { id: analysis.id.clone(), ranked, rows, scores, best, predicted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::OracleParams;
    use crate::dataset::{Dataset, Split, SynthSpec};
    use crate::features::BuiltinExtractor;

    fn small() -> Dataset {
        Dataset::synthesize(&SynthSpec { per_class: 4, side: 96, ..Default::default() }).unwrap()
    }

    fn exact(labels: &Arc<LabelSet>) -> Backends {
        let s = SegBackendSpec::Oracle(OracleParams::noiseless());
        Backends::build(&s, &s, labels, 1).unwrap()
    }

    #[test]
    fn noiseless_analysis_finds_the_object() {
        let d = small();
        let b = exact(&d.labels);
        for s in &d.samples {
            let a = analyze(s, &b, &PipelineParams::default()).unwrap();
            let best = a.candidates.iter().map(|(r, _)| overlap_target(r, &s.annotation)).fold(0.0, f64::max);
            assert!(best >= 0.5, "{}: best IoU {best}", s.annotation.id);
        }
    }

    #[test]
    fn ranker_samples_include_ground_truth() {
        let d = small();
        let s = &d.samples[0];
        let a = analyze(s, &exact(&d.labels), &PipelineParams::default()).unwrap();
        let rs = ranker_samples(&a, &s.annotation).unwrap();
        assert_eq!(rs.len(), a.candidates.len() + s.annotation.objects.len());
        assert_eq!(rs.last().unwrap().1, 1.0);
        assert!(rs.iter().all(|(f, _)| f.0.len() == ContextFeature::len_for(d.labels.len())));
    }

    #[test]
    fn train_then_infer() {
        let d = small();
        let b = exact(&d.labels);
        let params = PipelineParams::default();
        let train_samples = d.split(Split::Train);
        let bundle = train(&train_samples, &d.meta.classes, &d.labels, &b, &BuiltinExtractor, BlockSet::ALL, &params).unwrap();
        assert_eq!(bundle.classifier.feature_len(), 4 * 352 + 2 * d.labels.len());
        let s = d.split(Split::Test)[0];
        let a = analyze(s, &b, &params).unwrap();
        let inf = infer(s, &a, &bundle, &BuiltinExtractor, 3).unwrap();
        assert!(!inf.ranked.is_empty() && inf.ranked.len() <= 3);
        assert_eq!(inf.rows.len(), inf.ranked.len());
        assert_eq!(inf.scores.len(), d.meta.classes.len());
    }
}
