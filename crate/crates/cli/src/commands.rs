//! Subcommand implementations.

use std::sync::{Arc, Mutex};

use actloc::backends::{SegmentBackend, WindowKey};
use actloc::classifier::ModelBundle;
use actloc::dataset::{fpm, pnm, write_atomic, Dataset, Sample, SceneAnnotation, Split, SynthSpec};
use actloc::eval::{ablation_rows, evaluate, evaluate_bundle, oracle_study, standard_removals, EvalReport};
use actloc::features::{face_region, BlockSet};
use actloc::pipeline::{self, analyze, Analysis, Backends};
use actloc::ranking::{fallback_region, Ranked};
use actloc::{ImageU8, LabelSet, ProbMap};
use clap::Args;
use log::info;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::overlay;
use crate::CliError;

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Image side in pixels.
    #[arg(long)]
    pub side: Option<usize>,
    /// Unannotated distractor shapes per image.
    #[arg(long)]
    pub clutter: Option<usize>,
    #[arg(long)]
    pub size_min: Option<f64>,
    #[arg(long)]
    pub size_max: Option<f64>,
    /// Orientation jitter half-width in radians.
    #[arg(long)]
    pub rotation_jitter: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// `train`, `test` or `all`.
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Comma-separated image ids; overrides --split.
    #[arg(long)]
    pub ids: Option<String>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Train and test on ground-truth object regions with one row per feature regime.
    #[arg(long)]
    pub oracle_study: bool,
}

pub fn synth(cfg: &RunConfig, a: &SynthArgs) -> Result<(), CliError> {
    let out = cfg.out()?;
    let d = SynthSpec::default();
    let spec = SynthSpec {
        classes: a.classes.unwrap_or(d.classes),
        side: a.side.unwrap_or(d.side),
        per_class: a.per_class.unwrap_or(d.per_class),
        seed: cfg.params.seed,
        clutter: a.clutter.unwrap_or(d.clutter),
        size_min: a.size_min.unwrap_or(d.size_min),
        size_max: a.size_max.unwrap_or(d.size_max),
        rotation_jitter: a.rotation_jitter.unwrap_or(d.rotation_jitter),
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = Dataset::synthesize(&spec)?;
    ds.save(out)?;
    println!("wrote {} images of {} classes to {}", ds.samples.len(), ds.meta.classes.len(), out.display());
    Ok(())
}

fn load(cfg: &RunConfig) -> Result<(Dataset, Backends), CliError> {
    let ds = Dataset::load(cfg.data()?)?;
    let backends = Backends::build(&cfg.coarse, &cfg.fine, &ds.labels, cfg.params.seed)?;
    info!("loaded {} images from {}", ds.samples.len(), cfg.data()?.display());
    Ok((ds, backends))
}

fn select<'a>(ds: &'a Dataset, a: &SplitArgs) -> Result<Vec<&'a Sample>, CliError> {
    if let Some(ids) = &a.ids {
        return ids
            .split(',')
            .map(|id| {
                ds.samples
                    .iter()
                    .find(|s| s.annotation.id == id)
                    .ok_or_else(|| CliError::Usage(format!("no image with id `{id}`")))
            })
            .collect();
    }
    let split = match a.split.as_str() {
        "train" => Split::Train,
        "test" => Split::Test,
        "all" => Split::All,
        other => return Err(CliError::Usage(format!("--split: unknown split `{other}`"))),
    };
    Ok(ds.split(split))
}

/// Passes calls through and keeps every map the inner backend returns.
struct Recorder {
    inner: Arc<dyn SegmentBackend>,
    seen: Mutex<Vec<(WindowKey, ProbMap)>>,
}

impl SegmentBackend for Recorder {
    fn labels(&self) -> &Arc<LabelSet> {
        self.inner.labels()
    }

    fn segment(&self, image: &ImageU8, annotation: Option<&SceneAnnotation>, key: &WindowKey) -> actloc::Result<ProbMap> {
        let map = self.inner.segment(image, annotation, key)?;
        self.seen.lock().expect("recorder lock").push((key.clone(), map.clone()));
        Ok(map)
    }
}

/// Layout: `coarse/<id>__full.fpm`, `fine/<id>__<x0>_<y0>_<x1>_<y1>.fpm` (raw
/// fine-network window outputs) and `refined/<id>__full.fpm`. The first two
/// directories replay through `file:` backends.
pub fn segment(cfg: &RunConfig, a: &SplitArgs) -> Result<(), CliError> {
    let out = cfg.out()?;
    let (ds, backends) = load(cfg)?;
    let samples = select(&ds, a)?;
    let windows: usize = samples
        .par_iter()
        .map(|s| {
            let rec = Arc::new(Recorder { inner: backends.fine.clone(), seen: Mutex::new(Vec::new()) });
            let b = Backends { coarse: backends.coarse.clone(), fine: rec.clone() };
            let an = analyze(s, &b, &cfg.params)?;
            fpm::write(&fpm::path_for(&out.join("coarse"), &an.id, None), &an.coarse)?;
            fpm::write(&fpm::path_for(&out.join("refined"), &an.id, None), &an.fine)?;
            let seen = std::mem::take(&mut *rec.seen.lock().expect("recorder lock"));
            for (key, map) in &seen {
                fpm::write(&fpm::path_for(&out.join("fine"), &key.image_id, key.window.as_ref()), map)?;
            }
            Ok(seen.len())
        })
        .collect::<actloc::Result<Vec<_>>>()?
        .into_iter()
        .sum();
    println!("segmented {} images ({windows} fine windows) into {}", samples.len(), out.display());
    Ok(())
}

fn load_bundle(cfg: &RunConfig, ds: &Dataset) -> Result<ModelBundle, CliError> {
    let bundle = ModelBundle::read(cfg.model()?)?;
    if bundle.classifier.classes != ds.meta.classes {
        return Err(actloc::Error::contract("model classes differ from the dataset's").into());
    }
    Ok(bundle)
}

/// Top-q regions: ranked when a model is available, otherwise in proposal order.
fn top_regions(an: &Analysis, bundle: Option<&ModelBundle>, q: usize) -> actloc::Result<Vec<Ranked>> {
    if let Some(b) = bundle {
        return pipeline::ranked(an, &b.ranker, q);
    }
    if an.candidates.is_empty() {
        let labels = an.coarse.labels();
        let region = fallback_region(an.coarse.width(), an.coarse.height(), labels.objects()[0]);
        return Ok(vec![Ranked { region, score: 0.0, index: None }]);
    }
    Ok(an.candidates.iter().take(q).enumerate().map(|(i, (r, _))| Ranked { region: r.clone(), score: 0.0, index: Some(i) }).collect())
}

fn region_json(r: &actloc::RegionMask, labels: &LabelSet) -> serde_json::Value {
    serde_json::json!({
        "bbox": r.bbox().to_array(),
        "label": labels.name(r.channel()),
        "source": r.source(),
        "area": r.area(),
    })
}

/// One JSON file per image: peaks, windows, every candidate, the top q and,
/// with `--model`, ranking scores and class scores.
pub fn pipeline(cfg: &RunConfig, a: &SplitArgs) -> Result<(), CliError> {
    let out = cfg.out()?;
    let (ds, backends) = load(cfg)?;
    let bundle = cfg.model.as_ref().map(|_| load_bundle(cfg, &ds)).transpose()?;
    let extractor = cfg.extractor.build();
    let samples = select(&ds, a)?;
    samples.par_iter().try_for_each(|s| -> actloc::Result<()> {
        let an = analyze(s, &backends, &cfg.params)?;
        let labels = an.coarse.labels().clone();
        let candidates = an
            .candidates
            .iter()
            .enumerate()
            .map(|(i, (r, ctx))| {
                let mut v = region_json(r, &labels);
                v["index"] = i.into();
                if let Some(b) = &bundle {
                    v["rank_score"] = b.ranker.score(ctx)?.into();
                }
                Ok(v)
            })
            .collect::<actloc::Result<Vec<_>>>()?;
        let mut doc = serde_json::json!({
            "id": an.id,
            "width": s.image.width(),
            "height": s.image.height(),
            "candidate_map": an.map_choice,
            "peaks": an.peaks.iter().map(|p| serde_json::json!({"x": p.x, "y": p.y, "value": p.value})).collect::<Vec<_>>(),
            "windows": an.windows.iter().map(|w| w.to_array()).collect::<Vec<_>>(),
            "candidates": candidates,
        });
        let top = match &bundle {
            Some(b) => {
                let inf = pipeline::infer(s, &an, b, extractor.as_ref(), cfg.params.q)?;
                let classes = &b.classifier.classes;
                doc["class_scores"] = classes.iter().cloned().zip(inf.scores.iter().map(|&v| serde_json::Value::from(v))).collect::<serde_json::Map<_, _>>().into();
                doc["best_region"] = classes.iter().cloned().zip(inf.best.iter().map(|&v| serde_json::Value::from(v))).collect::<serde_json::Map<_, _>>().into();
                doc["predicted"] = classes[inf.predicted].clone().into();
                inf.ranked
            }
            None => top_regions(&an, None, cfg.params.q)?,
        };
        doc["top"] = top
            .iter()
            .map(|r| {
                let mut v = region_json(&r.region, &labels);
                v["candidate"] = r.index.into();
                if bundle.is_some() && !r.is_fallback() {
                    v["rank_score"] = r.score.into();
                }
                v
            })
            .collect::<Vec<_>>()
            .into();
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        write_atomic(&out.join(format!("{}.json", an.id)), text.as_bytes())
    })?;
    println!("wrote {} candidate files to {}", samples.len(), out.display());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.model()?;
    let (ds, backends) = load(cfg)?;
    let keep = match &cfg.ablate {
        Some(s) => BlockSet::ALL.without(s.parse::<BlockSet>()?),
        None => BlockSet::ALL,
    };
    let extractor = cfg.extractor.build();
    let train = ds.split(Split::Train);
    let bundle =
        pipeline::train(&train, &ds.meta.classes, &ds.labels, &backends, extractor.as_ref(), keep, &cfg.params)?;
    bundle.write(model)?;
    println!("trained on {} images ({keep}); model written to {}", train.len(), model.display());
    Ok(())
}

fn emit(cfg: &RunConfig, report: &EvalReport) -> Result<(), CliError> {
    let table = report.to_table();
    if let Some(out) = &cfg.out {
        write_atomic(&out.join("report.json"), report.to_json()?.as_bytes())?;
        write_atomic(&out.join("report.txt"), table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let (ds, backends) = load(cfg)?;
    let bundle = load_bundle(cfg, &ds)?;
    let extractor = cfg.extractor.build();
    let report = evaluate_bundle(&ds, Split::Test, &backends, extractor.as_ref(), &bundle, &cfg.params, cfg.summary())?;
    emit(cfg, &report)
}

pub fn ablate(cfg: &RunConfig, a: &AblateArgs) -> Result<(), CliError> {
    let extractor = cfg.extractor.build();
    let report = if a.oracle_study {
        let ds = Dataset::load(cfg.data()?)?;
        oracle_study(&ds, extractor.as_ref(), &cfg.params, cfg.summary())?
    } else {
        let (ds, backends) = load(cfg)?;
        let removals = match &cfg.ablate {
            Some(s) => s.split(',').map(|t| t.trim().parse::<BlockSet>()).collect::<actloc::Result<Vec<_>>>()?,
            None => standard_removals(),
        };
        evaluate(&ds, &backends, extractor.as_ref(), &cfg.params, &ablation_rows(&removals), cfg.summary())?
    };
    emit(cfg, &report)
}

/// `<out>/<id>.ppm`: top-q regions tinted per label, face box outlined.
pub fn visualize(cfg: &RunConfig, a: &SplitArgs) -> Result<(), CliError> {
    let out = cfg.out()?;
    let (ds, backends) = load(cfg)?;
    let bundle = cfg.model.as_ref().map(|_| load_bundle(cfg, &ds)).transpose()?;
    let samples = select(&ds, a)?;
    let fallbacks = samples
        .par_iter()
        .map(|s| -> actloc::Result<bool> {
            let an = analyze(s, &backends, &cfg.params)?;
            let top = top_regions(&an, bundle.as_ref(), cfg.params.q)?;
            let (w, h) = (s.image.width(), s.image.height());
            let face = match face_region(&s.annotation, w, h)? {
                (b, false) => Some(b),
                (_, true) => None,
            };
            let img = overlay::render(&s.image, an.candidate_map(), &top, face.as_ref())?;
            pnm::write(&out.join(format!("{}.ppm", an.id)), &img)?;
            Ok(top[0].is_fallback())
        })
        .collect::<actloc::Result<Vec<_>>>()?;
    let n_fallback = fallbacks.iter().filter(|f| **f).count();
    println!("wrote {} overlays to {} ({n_fallback} whole-image fallbacks)", samples.len(), out.display());
    Ok(())
}
