//! Average precision, evaluation reports, and the ablation and oracle-study
//! harnesses.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{score_image, ModelBundle};
use crate::dataset::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::features::{AppearanceExtractor, Block, BlockSet, FeatureLayout};
use crate::pipeline::{
    action_region, analyze_all, image_rows, infer, overlap_target, ranked, train_masked, train_ranker, training_set,
    Analysis, Backends, PipelineParams,
};

pub const AP_VARIANT: &str = "all-points";
pub const HIT_IOU: f64 = 0.5;

/// All-points average precision: mean over positives of the precision at
/// their rank. Scores sort descending with ties kept in input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::contract(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::contract("average precision needs at least one positive"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: String,
    /// `None` when the split has no positive for the class.
    pub ap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub name: String,
    /// Blocks kept by this row.
    pub blocks: String,
    pub per_class: Vec<ClassAp>,
    pub map: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub images: usize,
    /// Fraction whose top-ranked candidate overlaps the ground truth by IoU >= 0.5.
    pub top1_hit_rate: f64,
    /// Fraction with any such candidate.
    pub union_hit_rate: f64,
    pub fallback_images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: String,
    pub ap_variant: String,
    pub seed: u64,
    pub train_images: usize,
    pub test_images: usize,
    pub settings: serde_json::Value,
    pub rows: Vec<RowResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub localization: Option<Localization>,
}

impl EvalReport {
    pub fn row(&self, name: &str) -> Option<&RowResult> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Aligned columns: one line per row, one column per class.
    pub fn to_table(&self) -> String {
        let classes: Vec<&str> = self
            .rows
            .first()
            .map(|r| r.per_class.iter().map(|c| c.class.as_str()).collect())
            .unwrap_or_default();
        let mut header: Vec<String> = vec!["row".into(), "blocks".into()];
        header.extend(classes.iter().map(|c| c.to_string()));
        header.extend(["mAP".into(), "acc".into()]);
        let mut lines: Vec<Vec<String>> = vec![header];
        for r in &self.rows {
            let mut line = vec![r.name.clone(), r.blocks.clone()];
            line.extend(r.per_class.iter().map(|c| c.ap.map_or("-".into(), |v| format!("{v:.3}"))));
            line.push(format!("{:.3}", r.map));
            line.push(format!("{:.3}", r.accuracy));
            lines.push(line);
        }
        let widths: Vec<usize> =
            (0..lines[0].len()).map(|j| lines.iter().map(|l| l[j].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(j, c)| if j < 2 { format!("{c:<w$}", w = widths[j]) } else { format!("{c:>w$}", w = widths[j]) })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        if let Some(loc) = &self.localization {
            let _ = writeln!(
                out,
                "localization over {} images: top-1 {:.3}, any candidate {:.3}, fallbacks {}",
                loc.images, loc.top1_hit_rate, loc.union_hit_rate, loc.fallback_images
            );
        }
        out
    }
}

/// Per-class AP, mean AP over classes with positives, and accuracy.
pub fn score_row(
    name: &str,
    keep: BlockSet,
    classes: &[String],
    scores: &[Vec<f64>],
    truth: &[usize],
) -> Result<RowResult> {
    let mut per_class = Vec::with_capacity(classes.len());
    for (c, class) in classes.iter().enumerate() {
        let labels: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let ap = if labels.contains(&true) {
            let s: Vec<f64> = scores.iter().map(|row| row[c]).collect();
            Some(average_precision(&s, &labels)?)
        } else {
            None
        };
        per_class.push(ClassAp { class: class.clone(), ap });
    }
    let aps: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
    if aps.is_empty() {
        return Err(Error::contract("no class has a positive test image"));
    }
    let correct = scores.iter().zip(truth).filter(|(s, &t)| crate::classifier::predict(s) == t).count();
    Ok(RowResult {
        name: name.to_string(),
        blocks: keep.to_string(),
        per_class,
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        accuracy: correct as f64 / truth.len() as f64,
    })
}

fn class_indices(dataset: &Dataset, samples: &[&Sample]) -> Result<Vec<usize>> {
    samples.iter().map(|s| dataset.class_index(&s.annotation.class)).collect()
}

fn nonempty(dataset: &Dataset, split: Split) -> Result<Vec<&Sample>> {
    let s = dataset.split(split);
    if s.is_empty() {
        return Err(Error::contract(format!("the {split:?} split is empty")));
    }
    Ok(s)
}

fn localization(analyses: &[Analysis], samples: &[&Sample], ranked_top: &[RegionHit]) -> Localization {
    let n = samples.len();
    let union = analyses
        .iter()
        .zip(samples)
        .filter(|(a, s)| a.candidates.iter().any(|(r, _)| overlap_target(r, &s.annotation) >= HIT_IOU))
        .count();
    let top1 = ranked_top.iter().filter(|h| h.iou >= HIT_IOU).count();
    Localization {
        images: n,
        top1_hit_rate: top1 as f64 / n as f64,
        union_hit_rate: union as f64 / n as f64,
        fallback_images: ranked_top.iter().filter(|h| h.fallback).count(),
    }
}

struct RegionHit {
    iou: f64,
    fallback: bool,
}

/// An ablation row: display name and kept blocks.
pub type Row = (String, BlockSet);

/// `Full` followed by one row per removed block group.
pub fn ablation_rows(removals: &[BlockSet]) -> Vec<Row> {
    let mut rows = vec![("Full".to_string(), BlockSet::ALL)];
    for &r in removals {
        rows.push((format!("-{r}"), BlockSet::ALL.without(r)));
    }
    rows
}

/// The standard single-block removals `G, Face, C, F, Obj`.
pub fn standard_removals() -> Vec<BlockSet> {
    vec![
        BlockSet::of(&[Block::G]),
        BlockSet::of(&[Block::Face]),
        BlockSet::of(&[Block::C]),
        BlockSet::of(&[Block::F]),
        BlockSet::of(&[Block::O, Block::MO]),
    ]
}

/// Trains on the train split and evaluates the full pipeline on the test
/// split once per row, retraining the classifier with that row's blocks.
pub fn evaluate(
    dataset: &Dataset,
    backends: &Backends,
    extractor: &dyn AppearanceExtractor,
    params: &PipelineParams,
    rows: &[Row],
    settings: serde_json::Value,
) -> Result<EvalReport> {
    params.validate()?;
    if rows.is_empty() {
        return Err(Error::contract("no evaluation rows"));
    }
    if let Some((name, _)) = rows.iter().find(|(_, k)| k.is_empty()) {
        return Err(Error::contract(format!("row {name} removes every feature block")));
    }
    let train = nonempty(dataset, Split::Train)?;
    let test = nonempty(dataset, Split::Test)?;
    let classes = &dataset.meta.classes;
    let labels = &dataset.labels;
    let layout = FeatureLayout::new(extractor.dim(), labels.len(), extractor.name());

    let train_an = analyze_all(&train, backends, params)?;
    let ranker = train_ranker(&train_an, &train, params)?;
    let set = training_set(&train, Some(&train_an), classes, labels, extractor)?;
    drop(train_an);

    let test_an = analyze_all(&test, backends, params)?;
    let prepared = test
        .par_iter()
        .zip(&test_an)
        .map(|(s, a)| {
            let top = ranked(a, &ranker, params.q)?;
            let regions: Vec<_> = top.iter().map(|r| r.region.clone()).collect();
            let rows = image_rows(s, Some((&a.coarse, &a.fine)), &regions, labels, extractor, set.mean)?;
            let hit = RegionHit { iou: overlap_target(&top[0].region, &s.annotation), fallback: top[0].is_fallback() };
            Ok((rows, hit))
        })
        .collect::<Result<Vec<_>>>()?;
    let hits: Vec<RegionHit> = prepared.iter().map(|(_, h)| RegionHit { iou: h.iou, fallback: h.fallback }).collect();
    let loc = localization(&test_an, &test, &hits);
    let truth = class_indices(dataset, &test)?;

    let mut results = Vec::with_capacity(rows.len());
    for (name, keep) in rows {
        let model = train_masked(&set, &layout, *keep, classes, params)?;
        let scores = prepared
            .iter()
            .map(|(cands, _)| {
                let masked = cands
                    .iter()
                    .map(|r| {
                        let mut r = r.clone();
                        layout.mask(*keep, &mut r)?;
                        Ok(r)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(score_image(&model, &masked)?.0)
            })
            .collect::<Result<Vec<_>>>()?;
        results.push(score_row(name, *keep, classes, &scores, &truth)?);
    }
    Ok(EvalReport {
        kind: "pipeline".into(),
        ap_variant: AP_VARIANT.into(),
        seed: params.seed,
        train_images: train.len(),
        test_images: test.len(),
        settings,
        rows: results,
        localization: Some(loc),
    })
}

/// Evaluates a trained bundle on one split without retraining.
pub fn evaluate_bundle(
    dataset: &Dataset,
    split: Split,
    backends: &Backends,
    extractor: &dyn AppearanceExtractor,
    bundle: &ModelBundle,
    params: &PipelineParams,
    settings: serde_json::Value,
) -> Result<EvalReport> {
    let test = nonempty(dataset, split)?;
    if bundle.classifier.classes != dataset.meta.classes {
        return Err(Error::contract("model classes differ from the dataset's"));
    }
    let analyses = analyze_all(&test, backends, params)?;
    let inferred = test
        .par_iter()
        .zip(&analyses)
        .map(|(s, a)| infer(s, a, bundle, extractor, params.q))
        .collect::<Result<Vec<_>>>()?;
    let hits: Vec<RegionHit> = inferred
        .iter()
        .zip(&test)
        .map(|(i, s)| RegionHit { iou: overlap_target(&i.ranked[0].region, &s.annotation), fallback: i.ranked[0].is_fallback() })
        .collect();
    let loc = localization(&analyses, &test, &hits);
    let truth = class_indices(dataset, &test)?;
    let scores: Vec<Vec<f64>> = inferred.into_iter().map(|i| i.scores).collect();
    let row = score_row("model", BlockSet::ALL, &dataset.meta.classes, &scores, &truth)?;
    Ok(EvalReport {
        kind: "model".into(),
        ap_variant: AP_VARIANT.into(),
        seed: params.seed,
        train_images: 0,
        test_images: test.len(),
        settings,
        rows: vec![row],
        localization: Some(loc),
    })
}

/// Feature regimes of the oracle study.
pub fn oracle_regimes() -> Vec<Row> {
    [
        ("G", "G"),
        ("Face", "Face"),
        ("O", "O"),
        ("MO", "MO"),
        ("G+Face+O", "G+Face+O"),
        ("All", "G+Face+O+MO"),
        ("G+Obj", "G+O+MO"),
    ]
    .into_iter()
    .map(|(n, b)| (n.to_string(), b.parse().expect("valid block names")))
    .collect()
}

/// Classification with ground-truth object regions at train and test time,
/// one retrained classifier per regime.
pub fn oracle_study(
    dataset: &Dataset,
    extractor: &dyn AppearanceExtractor,
    params: &PipelineParams,
    settings: serde_json::Value,
) -> Result<EvalReport> {
    if dataset.samples.len() < 2 {
        return Err(Error::contract("the oracle study needs a train and a test image"));
    }
    let train = nonempty(dataset, Split::Train)?;
    let test = nonempty(dataset, Split::Test)?;
    let classes = &dataset.meta.classes;
    let labels = &dataset.labels;
    let layout = FeatureLayout::new(extractor.dim(), labels.len(), extractor.name());
    let set = training_set(&train, None, classes, labels, extractor)?;
    let test_rows = test
        .par_iter()
        .map(|s| Ok(image_rows(s, None, &[action_region(s, labels)?], labels, extractor, set.mean)?.remove(0)))
        .collect::<Result<Vec<_>>>()?;
    let truth = class_indices(dataset, &test)?;
    let mut results = Vec::new();
    for (name, keep) in oracle_regimes() {
        let model = train_masked(&set, &layout, keep, classes, params)?;
        let scores = test_rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                layout.mask(keep, &mut r)?;
                Ok(score_image(&model, &[r])?.0)
            })
            .collect::<Result<Vec<_>>>()?;
        results.push(score_row(&name, keep, classes, &scores, &truth)?);
    }
    Ok(EvalReport {
        kind: "oracle-study".into(),
        ap_variant: AP_VARIANT.into(),
        seed: params.seed,
        train_images: train.len(),
        test_images: test.len(),
        settings,
        rows: results,
        localization: None,
    })
}
