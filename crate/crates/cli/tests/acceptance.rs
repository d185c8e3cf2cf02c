//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::VecDeque;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use actloc::backends::{OracleBackend, OracleParams, SegBackendSpec, SegmentBackend, WindowKey};
use actloc::candidates::{connected_components, label_components, otsu_threshold, NOT_OBJECT};
use actloc::classifier::{score_image, ClassifierModel};
use actloc::coarse2fine::{local_maxima, refine, RefineParams};
use actloc::context::grid_pool;
use actloc::dataset::{Dataset, SceneAnnotation, SynthSpec};
use actloc::eval::{ablation_rows, average_precision, evaluate, oracle_study, standard_removals, EvalReport};
use actloc::features::BuiltinExtractor;
use actloc::pipeline::{analyze_all, ranked, train_ranker, Backends, PipelineParams};
use actloc::{bbox_iou, BBox, ImageU8, LabelSet, Plane, ProbMap};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const LOCALIZATION_BUDGET: Duration = Duration::from_secs(180);
const TOP1_MIN: f64 = 0.95;
const UNION_MIN: f64 = 0.99;
const CONSERVATION_TOL: f64 = 1e-6;
const GRID_POOL_TOL: f64 = 1e-6;
const AP_TOL: f64 = 1e-12;
const G_OBJ_MARGIN: f64 = 0.10;

type Check = fn() -> Result<String, String>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xacce_0000 + tag)
}

// ---------------------------------------------------------------- oracles

fn otsu_reference(hist: &[u64; 256]) -> Option<usize> {
    let n: u64 = hist.iter().sum();
    let center = |k: usize| (k as f64 + 0.5) / 256.0;
    let mut vars = Vec::with_capacity(255);
    for t in 0..255 {
        let (n0, m0) = (0..=t).fold((0u64, 0.0), |(c, s), k| (c + hist[k], s + hist[k] as f64 * center(k)));
        let (n1, m1) = (t + 1..256).fold((0u64, 0.0), |(c, s), k| (c + hist[k], s + hist[k] as f64 * center(k)));
        if n0 == 0 || n1 == 0 {
            vars.push(0.0);
            continue;
        }
        let d = m0 / n0 as f64 - m1 / n1 as f64;
        vars.push(n0 as f64 * n1 as f64 * d * d / (n as f64 * n as f64));
    }
    let max = vars.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return None;
    }
    vars.iter().position(|&v| v >= max * (1.0 - 1e-12))
}

fn check_otsu() -> Result<String, String> {
    let mut r = rng(1);
    for trial in 0..1000 {
        let mut hist = [0u64; 256];
        let support = match trial % 4 {
            0 => 1,
            1 => r.random_range(2..6),
            _ => r.random_range(2..=256),
        };
        for _ in 0..support {
            hist[r.random_range(0..256)] += r.random_range(1..500);
        }
        let mut data = Vec::new();
        for (k, &h) in hist.iter().enumerate() {
            data.extend(std::iter::repeat_n((k as f32 + 0.5) / 256.0, h as usize));
        }
        data.shuffle(&mut r);
        let n = data.len();
        let plane = Plane::new(n, 1, data.clone()).unwrap();
        let got = otsu_threshold(&plane).unwrap();
        let want = match otsu_reference(&hist) {
            Some(t) => (t + 1) as f32 / 256.0,
            None => data.iter().copied().fold(f32::MIN, f32::max),
        };
        if got != want {
            return Err(format!("trial {trial}: threshold {got} != reference {want}"));
        }
    }
    Ok("1000 histograms".into())
}

fn flood_components(values: &[u16], w: usize, h: usize) -> Vec<(u16, Vec<(usize, usize)>)> {
    let mut seen = vec![false; values.len()];
    let mut out = Vec::new();
    for start in 0..values.len() {
        if seen[start] || values[start] == NOT_OBJECT {
            continue;
        }
        let v = values[start];
        let mut pixels = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            pixels.push((x as usize, y as usize));
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && values[j] == v {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        pixels.sort_by_key(|&(x, y)| (y, x));
        out.push((v, pixels));
    }
    out
}

fn check_components() -> Result<String, String> {
    let mut r = rng(2);
    for trial in 0..500 {
        let (w, h) = (r.random_range(1..=64), r.random_range(1..=64));
        let palette: Vec<u16> = vec![NOT_OBJECT, 3, 4, 5][..r.random_range(2..=4)].to_vec();
        let stickiness = r.random_range(0.0..0.9);
        let mut values = vec![NOT_OBJECT; w * h];
        for i in 0..w * h {
            values[i] = if i > 0 && r.random_bool(stickiness) {
                values[if r.random_bool(0.5) && i >= w { i - w } else { i - 1 }]
            } else {
                palette[r.random_range(0..palette.len())]
            };
        }
        let got = label_components(&values, w, h);
        let want = flood_components(&values, w, h);
        if got != want {
            return Err(format!("trial {trial} ({w}x{h}): {} components vs {}", got.len(), want.len()));
        }
        let regions = connected_components(&values, w, h, 1).map_err(|e| e.to_string())?;
        let areas: Vec<usize> = regions.iter().map(|r| r.area()).collect();
        let want_areas: Vec<usize> = want.iter().map(|(_, p)| p.len()).collect();
        if areas != want_areas {
            return Err(format!("trial {trial}: region areas differ"));
        }
    }
    Ok("500 label maps".into())
}

fn brute_maxima(g: &Plane, m: usize, p: f64, min_value: f32) -> Vec<(usize, usize)> {
    let mut taken: Vec<(usize, usize)> = Vec::new();
    while taken.len() < m {
        let mut best: Option<(usize, usize, f32)> = None;
        for y in 0..g.height {
            for x in 0..g.width {
                let v = g.get(x, y);
                if v <= min_value || taken.contains(&(x, y)) {
                    continue;
                }
                let far = taken.iter().all(|&(a, b)| {
                    let (dx, dy) = (a as f64 - x as f64, b as f64 - y as f64);
                    (dx * dx + dy * dy).sqrt() >= p
                });
                if far && best.is_none_or(|(_, _, bv)| v > bv) {
                    best = Some((x, y, v));
                }
            }
        }
        match best {
            Some((x, y, _)) => taken.push((x, y)),
            None => break,
        }
    }
    taken
}

fn check_maxima() -> Result<String, String> {
    let mut r = rng(3);
    for trial in 0..500 {
        let (w, h) = (r.random_range(1..=50), r.random_range(1..=50));
        let levels = r.random_range(2..20) as f32;
        let data: Vec<f32> = (0..w * h).map(|_| (r.random_range(0.0..levels)).floor() / levels).collect();
        let g = Plane::new(w, h, data).unwrap();
        let (m, p) = (r.random_range(1..9), r.random_range(1.0..15.0));
        let min_value = if trial % 2 == 0 { 0.0 } else { r.random_range(0.0..0.5) };
        let got: Vec<_> = local_maxima(&g, m, p, min_value).iter().map(|q| (q.x, q.y)).collect();
        let want = brute_maxima(&g, m, p, min_value);
        if got != want {
            return Err(format!("trial {trial}: {got:?} != {want:?}"));
        }
    }
    Ok("500 grids".into())
}

fn random_map(r: &mut ChaCha8Rng, w: usize, h: usize, objects: usize) -> ProbMap {
    let names: Vec<String> = (0..objects).map(|i| format!("obj{i}")).collect();
    let labels = Arc::new(LabelSet::with_objects(&names).unwrap());
    let data = (0..w * h * labels.len()).map(|_| r.random_range(0.0..1.0f32)).collect();
    ProbMap::from_weights(w, h, labels, data).unwrap()
}

fn pool_reference(map: &ProbMap, b: &BBox) -> Vec<f64> {
    let l = map.num_labels();
    // round(j * side / 5), halves up, in integer arithmetic
    let edge = |start: i64, side: i64, j: i64| start + (2 * j * side + 5).div_euclid(10);
    let mut sums = vec![0.0f64; 25 * l];
    let mut counts = [0usize; 25];
    for y in 0..map.height() as i64 {
        for x in 0..map.width() as i64 {
            let col = (0..5).find(|&c| edge(b.x0, b.width(), c) <= x && x < edge(b.x0, b.width(), c + 1));
            let row = (0..5).find(|&c| edge(b.y0, b.height(), c) <= y && y < edge(b.y0, b.height(), c + 1));
            if let (Some(c), Some(rw)) = (col, row) {
                let cell = (rw * 5 + c) as usize;
                counts[cell] += 1;
                for (k, &v) in map.pixel(x as usize, y as usize).iter().enumerate() {
                    sums[cell * l + k] += f64::from(v);
                }
            }
        }
    }
    sums.iter().enumerate().map(|(i, s)| if counts[i / l] == 0 { 0.0 } else { s / counts[i / l] as f64 }).collect()
}

fn check_grid_pool() -> Result<String, String> {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for trial in 0..500 {
        let (w, h) = (r.random_range(1..40), r.random_range(1..40));
        let objects = r.random_range(1..4);
        let map = random_map(&mut r, w, h, objects);
        let x0 = r.random_range(-10..w as i64);
        let y0 = r.random_range(-10..h as i64);
        let b = BBox::new(x0, y0, x0 + r.random_range(1..w as i64 + 12), y0 + r.random_range(1..h as i64 + 12)).unwrap();
        let got = grid_pool(&map, &b);
        let want = pool_reference(&map, &b);
        for (g, wv) in got.iter().zip(&want) {
            worst = worst.max((f64::from(*g) - wv).abs());
        }
        if worst > GRID_POOL_TOL {
            return Err(format!("trial {trial}: deviation {worst:.2e} on box {b}"));
        }
    }
    Ok(format!("500 pairs, max deviation {worst:.1e}"))
}

fn ap_reference(scores: &[f64], labels: &[bool]) -> f64 {
    let rank = |i: usize| 1 + (0..scores.len()).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count();
    let positives: Vec<usize> = (0..scores.len()).filter(|&i| labels[i]).collect();
    let sum: f64 = positives
        .iter()
        .map(|&i| {
            let k = rank(i);
            positives.iter().filter(|&&j| rank(j) <= k).count() as f64 / k as f64
        })
        .sum();
    sum / positives.len() as f64
}

fn check_ap() -> Result<String, String> {
    let mut r = rng(5);
    for trial in 0..1000 {
        let n = r.random_range(1..=20);
        let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
        labels[r.random_range(0..n)] = true;
        let coarse = trial % 2 == 0;
        let scores: Vec<f64> =
            (0..n).map(|_| if coarse { r.random_range(0..4) as f64 } else { r.random_range(-1.0..1.0) }).collect();
        let got = average_precision(&scores, &labels).map_err(|e| e.to_string())?;
        let want = ap_reference(&scores, &labels);
        if (got - want).abs() > AP_TOL {
            return Err(format!("trial {trial}: AP {got} != {want}"));
        }
    }
    Ok("1000 instances".into())
}

fn oracle_equivalences() -> Outcome {
    let start = Instant::now();
    let checks: [(&str, Check); 5] = [
        ("otsu", check_otsu),
        ("components", check_components),
        ("local_maxima", check_maxima),
        ("grid_pool", check_grid_pool),
        ("AP", check_ap),
    ];
    let mut parts = Vec::new();
    for (name, f) in checks {
        match f() {
            Ok(d) => parts.push(format!("{name} {d}")),
            Err(e) => return outcome(false, format!("{name}: {e}")),
        }
    }
    let t = start.elapsed();
    outcome(t < ORACLE_BUDGET, format!("{}; {:.1}s (limit 60s)", parts.join(", "), t.as_secs_f64()))
}

// ------------------------------------------------- classification rule

fn score_rule() -> Outcome {
    let mut r = rng(6);
    for trial in 0..1000 {
        let (n, d) = (r.random_range(2..6), r.random_range(1..30));
        let model = ClassifierModel {
            classes: (0..n).map(|i| format!("c{i}")).collect(),
            weights: (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0f32)).collect()).collect(),
            biases: (0..n).map(|_| r.random_range(-1.0..1.0f32)).collect(),
            lambda: 1e-3,
            mean: [0.0; 3],
            layout_checksum: 0,
        };
        let q = r.random_range(1..7);
        let mut cands: Vec<Vec<f32>> = (0..q).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0f32)).collect()).collect();
        let (base, _) = score_image(&model, &cands).unwrap();

        let mut perm = cands.clone();
        perm.shuffle(&mut r);
        if score_image(&model, &perm).unwrap().0 != base {
            return outcome(false, format!("trial {trial}: permutation changed the scores"));
        }
        let extra: Vec<f32> = (0..d).map(|_| r.random_range(-2.0..2.0f32)).collect();
        cands.push(extra);
        let (more, _) = score_image(&model, &cands).unwrap();
        if more.iter().zip(&base).any(|(m, b)| m < b) {
            return outcome(false, format!("trial {trial}: adding a candidate lowered a score"));
        }
        let single = &cands[..1];
        let (one, _) = score_image(&model, single).unwrap();
        for c in 0..n {
            let mut dot = 0.0f64;
            for (w, x) in model.weights[c].iter().zip(&single[0]) {
                dot += f64::from(*w) * f64::from(*x);
            }
            if one[c] != dot + f64::from(model.biases[c]) {
                return outcome(false, format!("trial {trial}: q=1 score is not the dot product"));
            }
        }
    }
    outcome(true, "1000 instances: permutation invariance, max-monotonicity, q=1 dot product")
}

// ----------------------------------------------------- map-level checks

fn max_sum_error(map: &ProbMap) -> f64 {
    map.data()
        .chunks_exact(map.num_labels())
        .map(|px| (px.iter().map(|&v| f64::from(v)).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn conservation(ds: &Dataset) -> Outcome {
    let presets = [
        OracleParams::coarse_default(),
        OracleParams::fine_default(),
        OracleParams::noiseless(),
        OracleParams { confusion: 0.5, ..OracleParams::coarse_default() },
    ];
    let mut r = rng(7);
    let (mut worst, mut maps) = (0.0f64, 0usize);
    for (pi, p) in presets.iter().enumerate() {
        let coarse = OracleBackend::new(p.clone(), ds.labels.clone(), 7, "coarse").unwrap();
        let fine = OracleBackend::new(OracleParams::fine_default(), ds.labels.clone(), 7, "fine").unwrap();
        for s in ds.samples.iter().skip(pi).step_by(20) {
            let id = &s.annotation.id;
            let m = coarse.segment(&s.image, Some(&s.annotation), &WindowKey::full(id.clone())).unwrap();
            let refined = refine(&s.image, Some(&s.annotation), id, &m, &fine, &RefineParams::default()).unwrap();
            worst = worst.max(max_sum_error(&m)).max(max_sum_error(&refined.map));
            maps += 2;
            for _ in 0..5 {
                let (w, h) = (m.width() as i64, m.height() as i64);
                let x0 = r.random_range(0..w - 1);
                let y0 = r.random_range(0..h - 1);
                let b = BBox::new(x0, y0, r.random_range(x0 + 1..=w), r.random_range(y0 + 1..=h)).unwrap();
                let c = m.crop_resize(&b, r.random_range(1..200), r.random_range(1..200)).unwrap();
                worst = worst.max(max_sum_error(&c));
                maps += 1;
            }
        }
    }
    outcome(worst <= CONSERVATION_TOL, format!("{maps} maps (oracle, refine, crop_resize), max |sum-1| {worst:.1e}"))
}

/// Fine backend that returns the coarse map cropped to the window.
struct CoarseCrop {
    labels: Arc<LabelSet>,
    coarse: ProbMap,
    native: bool,
}

impl SegmentBackend for CoarseCrop {
    fn labels(&self) -> &Arc<LabelSet> {
        &self.labels
    }

    fn segment(&self, image: &ImageU8, _: Option<&SceneAnnotation>, key: &WindowKey) -> actloc::Result<ProbMap> {
        let win = key.window.expect("window key");
        if self.native {
            self.coarse.crop_resize(&win, win.width() as usize, win.height() as usize)
        } else {
            self.coarse.crop_resize(&win, image.width(), image.height())
        }
    }
}

fn refine_identity(ds: &Dataset) -> Outcome {
    let coarse_backend = OracleBackend::new(OracleParams::coarse_default(), ds.labels.clone(), 7, "coarse").unwrap();
    let (mut images, mut windows) = (0, 0);
    for s in ds.samples.iter().step_by(10) {
        let id = &s.annotation.id;
        let coarse = coarse_backend.segment(&s.image, Some(&s.annotation), &WindowKey::full(id.clone())).unwrap();
        // Window side is round(128 / 3) = 43; the second run feeds the fine
        // pass crops at exactly that size so no resampling happens.
        for (native, params) in [
            (true, RefineParams::default()),
            (false, RefineParams { fine_input_side: 43, ..RefineParams::default() }),
        ] {
            let stub = CoarseCrop { labels: ds.labels.clone(), coarse: coarse.clone(), native };
            let out = refine(&s.image, None, id, &coarse, &stub, &params).unwrap();
            if out.map.data() != coarse.data() {
                return outcome(false, format!("{id}: refined map differs from the coarse map"));
            }
            windows += out.windows.len();
        }
        images += 1;
    }
    outcome(windows > 0, format!("{images} images, {windows} windows, bit-exact"))
}

// ------------------------------------------------------- system checks

fn localization(ds: &Dataset) -> Outcome {
    let start = Instant::now();
    let params = PipelineParams::default();
    let coarse = SegBackendSpec::Oracle(OracleParams::coarse_default());
    let fine = SegBackendSpec::Oracle(OracleParams::fine_default());
    let backends = Backends::build(&coarse, &fine, &ds.labels, params.seed).unwrap();
    let train = ds.split(actloc::dataset::Split::Train);
    let test = ds.split(actloc::dataset::Split::Test);
    let train_an = analyze_all(&train, &backends, &params).unwrap();
    let ranker = train_ranker(&train_an, &train, &params).unwrap();
    let test_an = analyze_all(&test, &backends, &params).unwrap();
    let (mut top1, mut union) = (0usize, 0usize);
    for (s, a) in test.iter().zip(&test_an) {
        let gt = s.annotation.action_object().expect("synthetic images have an action object").bbox;
        let hit = |b: &BBox| bbox_iou(b, &gt) >= 0.5;
        if hit(&ranked(a, &ranker, params.q).unwrap()[0].region.bbox()) {
            top1 += 1;
        }
        if a.candidates.iter().any(|(r, _)| hit(&r.bbox())) {
            union += 1;
        }
    }
    let n = test.len() as f64;
    let (t1, un) = (top1 as f64 / n, union as f64 / n);
    let t = start.elapsed();
    outcome(
        t1 >= TOP1_MIN && un >= UNION_MIN && t < LOCALIZATION_BUDGET,
        format!(
            "{} test images: top-1 {t1:.3} (min {TOP1_MIN}), union {un:.3} (min {UNION_MIN}); {:.1}s (limit 180s)",
            test.len(),
            t.as_secs_f64()
        ),
    )
}

fn map_of(report: &EvalReport, row: &str) -> f64 {
    report.row(row).unwrap_or_else(|| panic!("row {row} missing")).map
}

fn table1(ds: &Dataset) -> Outcome {
    let report = oracle_study(ds, &BuiltinExtractor, &PipelineParams::default(), serde_json::Value::Null).unwrap();
    let m = |r| map_of(&report, r);
    let singles = ["G", "Face", "O", "MO"].map(m);
    let best_single = singles.iter().copied().fold(f64::MIN, f64::max);
    let pass = m("MO") >= m("O") && m("All") >= best_single && m("G+Obj") - m("G") >= G_OBJ_MARGIN;
    outcome(
        pass,
        format!(
            "G {:.4}, Face {:.4}, O {:.4}, MO {:.4}, All {:.4}, G+Obj {:.4}; G+Obj - G = {:.3} (min {G_OBJ_MARGIN})",
            singles[0],
            singles[1],
            singles[2],
            singles[3],
            m("All"),
            m("G+Obj"),
            m("G+Obj") - m("G")
        ),
    )
}

fn table2(ds: &Dataset) -> Outcome {
    let params = PipelineParams::default();
    let coarse = OracleParams::coarse_default();
    assert_eq!((coarse.stride, coarse.blur), (8, 6), "degraded coarse backend");
    let backends = Backends::build(
        &SegBackendSpec::Oracle(coarse),
        &SegBackendSpec::Oracle(OracleParams::fine_default()),
        &ds.labels,
        params.seed,
    )
    .unwrap();
    let rows = ablation_rows(&standard_removals());
    let report = evaluate(ds, &backends, &BuiltinExtractor, &params, &rows, serde_json::Value::Null).unwrap();
    let full = map_of(&report, "Full");
    let drops: Vec<(String, f64)> =
        report.rows.iter().filter(|r| r.name != "Full").map(|r| (r.name.clone(), full - r.map)).collect();
    let f_drop = drops.iter().find(|(n, _)| n == "-F").expect("-F row").1;
    let pass = drops.iter().all(|(n, d)| n == "-F" || *d < f_drop);
    let listed: Vec<String> = drops.iter().map(|(n, d)| format!("{n} {d:+.4}")).collect();
    outcome(pass, format!("Full {full:.4}; drops {}", listed.join(", ")))
}

fn run_chain(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_actloc")).args(args).current_dir(dir).output().unwrap();
        assert!(out.status.success(), "actloc {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    let files = ["--backend-coarse", "file:maps/coarse", "--backend-fine", "file:maps/fine"];
    run(&["synth", "--out", "data", "--per-class", "12", "--seed", "7"]);
    run(&["segment", "--data", "data", "--out", "maps"]);
    run(&[&["train", "--data", "data", "--model", "model.asm"][..], &files].concat());
    run(&[&["eval", "--data", "data", "--model", "model.asm", "--out", "eval"][..], &files].concat());
    (std::fs::read(dir.join("eval/report.json")).unwrap(), std::fs::read(dir.join("model.asm")).unwrap())
}

fn determinism() -> Outcome {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    std::fs::create_dir(&a).unwrap();
    std::fs::create_dir(&b).unwrap();
    let (ra, ma) = run_chain(&a);
    let (rb, mb) = run_chain(&b);
    outcome(
        ra == rb && ma == mb,
        format!("report {} bytes identical: {}; bundle {} bytes identical: {}", ra.len(), ra == rb, ma.len(), ma == mb),
    )
}

fn main() {
    let ds = Dataset::synthesize(&SynthSpec::default()).expect("standard synthetic benchmark");
    #[allow(clippy::type_complexity)]
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("oracle equivalences", Box::new(oracle_equivalences)),
        ("classification rule properties", Box::new(score_rule)),
        ("probability conservation", Box::new(|| conservation(&ds))),
        ("coarse-to-fine identity", Box::new(|| refine_identity(&ds))),
        ("localization", Box::new(|| localization(&ds))),
        ("oracle study ordering", Box::new(|| table1(&ds))),
        ("fine-block ablation", Box::new(|| table2(&ds))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
