//! Experiment configuration, execution and reporting.
//!
//! An experiment generates a seeded phantom dataset, splits it into training
//! and validation cases, trains one net per (loss mode, seed), segments the
//! validation cases by sliding-window inference and reports per-case metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{evaluate_case, MetricsRecord};
use crate::harness::{segment, train, EpochRecord, LossMode, StepRecord, TinyConvNet, TrainConfig};
use crate::phantoms::{generate_dataset_with, Jitter, PhantomSpec, Sample};
use crate::pipeline::io::{read_volume, slice_image, write_volume};
use crate::pipeline::preprocess::{zscore_normalize, IntensityWindow};
use crate::volume::BinaryMask;

pub const CSV_HEADER: &str = "case_id,mode,seed,dice,hd95_mm,asd_mm";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Window the 5th..95th percentile of the pooled training foreground
    /// onto [0, 1], applied identically to every case.
    #[default]
    Percentile,
    /// Per-volume z-score.
    Zscore,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub phantom: PhantomSpec,
    pub jitter: Jitter,
    pub n_train: usize,
    pub n_val: usize,
    pub dataset_seed: u64,
    pub normalization: Normalization,
    /// Base training configuration; `mode` and `seed` are overridden per run.
    pub train: TrainConfig,
    pub modes: Vec<LossMode>,
    pub seeds: Vec<u64>,
    /// Candidate λ2 values for `dice+be`. The value with the best mean
    /// validation Dice is reported; empty means `train.weights.lambda2`.
    pub lambda2_grid: Vec<f64>,
    pub save_predictions: bool,
    pub export_slices: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            phantom: PhantomSpec::default(),
            jitter: Jitter::default(),
            n_train: 20,
            n_val: 8,
            dataset_seed: 42,
            normalization: Normalization::default(),
            train: TrainConfig::default(),
            modes: vec![LossMode::Dice, LossMode::DiceBe],
            seeds: vec![1, 2, 3],
            lambda2_grid: Vec::new(),
            save_predictions: true,
            export_slices: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_train == 0 || self.n_val == 0 {
            return bad("n_train and n_val must be >= 1".into());
        }
        if self.modes.is_empty() || self.seeds.is_empty() {
            return bad("modes and seeds must be nonempty".into());
        }
        for (i, m) in self.modes.iter().enumerate() {
            if self.modes[..i].contains(m) {
                return bad(format!("mode {m} listed twice"));
            }
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return bad(format!("seed {s} listed twice"));
            }
        }
        if let Some(l) = self.lambda2_grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return bad(format!("lambda2_grid value {l} must be finite and >= 0"));
        }
        self.phantom.validate()?;
        self.train.validate()?;
        let dims = self.phantom.dims;
        for (name, size) in [("patch_size", self.train.patch_size), ("window_size", self.train.window_size)] {
            if size.iter().zip(&dims).any(|(s, d)| s > d) {
                return bad(format!("train.{name} {size:?} exceeds phantom dims {dims:?}"));
            }
        }
        Ok(())
    }

    /// λ2 values to try for `mode`.
    pub fn lambda2_candidates(&self, mode: LossMode) -> Vec<f64> {
        if mode == LossMode::DiceBe && !self.lambda2_grid.is_empty() {
            self.lambda2_grid.clone()
        } else {
            vec![self.train.weights.lambda2]
        }
    }

    pub fn run_config(&self, mode: LossMode, seed: u64, lambda2: f64) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.mode = mode;
        cfg.seed = seed;
        cfg.weights.lambda2 = lambda2;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub id: String,
    pub sample: Sample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<Case>,
    pub val: Vec<Case>,
    pub window: Option<IntensityWindow>,
}

pub fn case_id(index: usize) -> String {
    format!("phantom{index:03}")
}

/// Raw phantoms with a seeded train/validation split, before normalization.
pub fn generate_split(config: &ExperimentConfig) -> Result<(Vec<Case>, Vec<Case>)> {
    let n = config.n_train + config.n_val;
    let samples = generate_dataset_with(n, &config.phantom, config.dataset_seed, &config.jitter)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.dataset_seed);
    // phantom i uses stream i; the split takes one no sample can reach
    rng.set_stream(u64::MAX);
    order.shuffle(&mut rng);
    let (train_idx, val_idx) = order.split_at(config.n_train);
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter()
            .map(|i| Case {
                id: case_id(i),
                sample: samples[i].clone(),
            })
            .collect::<Vec<_>>()
    };
    Ok((pick(train_idx), pick(val_idx)))
}

pub fn prepare_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let (mut train, mut val) = generate_split(config)?;
    let window = match config.normalization {
        Normalization::Percentile => {
            let w = IntensityWindow::from_foreground(
                train.iter().map(|c| (&c.sample.image, &c.sample.mask)),
                5.0,
                95.0,
            )?;
            for c in train.iter_mut().chain(val.iter_mut()) {
                c.sample.image = w.apply(&c.sample.image);
            }
            Some(w)
        }
        Normalization::Zscore => {
            for c in train.iter_mut().chain(val.iter_mut()) {
                c.sample.image = zscore_normalize(&c.sample.image)?;
            }
            None
        }
        Normalization::None => None,
    };
    Ok(Dataset { train, val, window })
}

/// One row of the per-case CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub case_id: String,
    pub mode: LossMode,
    pub seed: u64,
    pub dice: f64,
    pub hd95_mm: f64,
    pub asd_mm: f64,
}

impl CaseRow {
    fn from_metrics(m: &MetricsRecord, mode: LossMode, seed: u64) -> Self {
        CaseRow {
            case_id: m.case_id.clone(),
            mode,
            seed,
            dice: m.dice,
            hd95_mm: m.hausdorff95_mm,
            asd_mm: m.avg_surface_dist_mm,
        }
    }
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningEntry {
    pub lambda2: f64,
    pub dice: f64,
    pub asd_mm: f64,
    pub hd95_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: LossMode,
    /// λ2 used for the reported rows (only meaningful for `dice+be`).
    pub lambda2: f64,
    pub cases: usize,
    pub dice: Stat,
    pub asd_mm: Stat,
    pub hd95_mm: Stat,
    /// Mean validation metrics per λ2 candidate, when more than one was tried.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tuning: Vec<TuningEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: LossMode,
    pub seed: u64,
    pub lambda2: f64,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub normalization_window: Option<IntensityWindow>,
    pub train_cases: Vec<String>,
    pub val_cases: Vec<String>,
    pub modes: Vec<ModeSummary>,
    /// Sorted by mode, seed, then case id.
    pub rows: Vec<CaseRow>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn summary(&self, mode: LossMode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }
}

pub fn rows_to_csv(rows: &[CaseRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6}",
            r.case_id, r.mode, r.seed, r.dice, r.hd95_mm, r.asd_mm
        )
        .unwrap();
    }
    out
}

fn sort_rows(rows: &mut [CaseRow]) {
    rows.sort_by(|a, b| (a.mode, a.seed, &a.case_id).cmp(&(b.mode, b.seed, &b.case_id)));
}

/// Per-mode summaries from a flat row list.
pub fn summarize(rows: &[CaseRow], lambda2: &BTreeMap<LossMode, f64>) -> Vec<ModeSummary> {
    let mut by_mode: BTreeMap<LossMode, Vec<&CaseRow>> = BTreeMap::new();
    for r in rows {
        by_mode.entry(r.mode).or_default().push(r);
    }
    by_mode
        .into_iter()
        .map(|(mode, rs)| {
            let col = |f: fn(&CaseRow) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            ModeSummary {
                mode,
                lambda2: lambda2.get(&mode).copied().unwrap_or(f64::NAN),
                cases: rs.len(),
                dice: Stat::of(&col(|r| r.dice)),
                asd_mm: Stat::of(&col(|r| r.asd_mm)),
                hd95_mm: Stat::of(&col(|r| r.hd95_mm)),
                tuning: Vec::new(),
            }
        })
        .collect()
}

/// A trained run kept in memory for writing artifacts.
#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub mode: LossMode,
    pub seed: u64,
    pub lambda2: f64,
    pub net: TinyConvNet,
    pub predictions: Vec<(String, BinaryMask)>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub dataset: Dataset,
    pub runs: Vec<TrainedRun>,
}

fn predict_cases(net: &TinyConvNet, cases: &[Case], cfg: &TrainConfig) -> Result<Vec<(String, BinaryMask)>> {
    cases
        .iter()
        .map(|c| Ok((c.id.clone(), segment(net, &c.sample.image, cfg.window_size, cfg.window_overlap)?)))
        .collect()
}

fn score(predictions: &[(String, BinaryMask)], cases: &[Case]) -> Result<Vec<MetricsRecord>> {
    predictions
        .iter()
        .zip(cases)
        .map(|((id, pred), case)| evaluate_case(id.clone(), pred, &case.sample.mask))
        .collect()
}

/// Runs every configured (mode, seed) pair. Output depends only on `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let dataset = prepare_dataset(config)?;
    let train_samples: Vec<Sample> = dataset.train.iter().map(|c| c.sample.clone()).collect();

    let mut rows = Vec::new();
    let mut run_records = Vec::new();
    let mut trained = Vec::new();
    let mut chosen = BTreeMap::new();
    let mut tuning_tables = BTreeMap::new();

    for &mode in &config.modes {
        let candidates = config.lambda2_candidates(mode);
        let mut best: Option<(f64, f64, Vec<(TrainedRun, Vec<MetricsRecord>, RunRecord)>)> = None;
        let mut tuning = Vec::new();
        for &lambda2 in &candidates {
            let mut runs = Vec::new();
            for &seed in &config.seeds {
                let cfg = config.run_config(mode, seed, lambda2);
                let outcome = train(&train_samples, &[], &cfg)?;
                let predictions = predict_cases(&outcome.net, &dataset.val, &cfg)?;
                let metrics = score(&predictions, &dataset.val)?;
                let record = RunRecord {
                    mode,
                    seed,
                    lambda2,
                    steps: outcome.history.steps,
                    epochs: outcome.history.epochs,
                };
                let run = TrainedRun {
                    mode,
                    seed,
                    lambda2,
                    net: outcome.net,
                    predictions,
                };
                runs.push((run, metrics, record));
            }
            let all: Vec<&MetricsRecord> = runs.iter().flat_map(|r| &r.1).collect();
            let mean = |f: fn(&MetricsRecord) -> f64| all.iter().map(|m| f(m)).sum::<f64>() / all.len() as f64;
            let dice = mean(|m| m.dice);
            tuning.push(TuningEntry {
                lambda2,
                dice,
                asd_mm: mean(|m| m.avg_surface_dist_mm),
                hd95_mm: mean(|m| m.hausdorff95_mm),
            });
            // strict improvement only, so ties keep the earlier candidate
            if best.as_ref().is_none_or(|b| dice > b.0) {
                best = Some((dice, lambda2, runs));
            }
        }
        let (_, lambda2, runs) = best.expect("at least one candidate");
        chosen.insert(mode, lambda2);
        if candidates.len() > 1 {
            tuning_tables.insert(mode, tuning);
        }
        for (run, metrics, record) in runs {
            rows.extend(metrics.iter().map(|m| CaseRow::from_metrics(m, mode, run.seed)));
            run_records.push(record);
            trained.push(run);
        }
    }
    sort_rows(&mut rows);
    let mut modes = summarize(&rows, &chosen);
    for m in &mut modes {
        m.tuning = tuning_tables.remove(&m.mode).unwrap_or_default();
    }
    let report = ExperimentReport {
        config: config.clone(),
        normalization_window: dataset.window,
        train_cases: dataset.train.iter().map(|c| c.id.clone()).collect(),
        val_cases: dataset.val.iter().map(|c| c.id.clone()).collect(),
        modes,
        rows,
        runs: run_records,
    };
    Ok(ExperimentOutcome {
        report,
        dataset,
        runs: trained,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn run_name(mode: LossMode, seed: u64) -> String {
    format!("{mode}_seed{seed}")
}

fn parse_run_name(name: &str) -> Option<(LossMode, u64)> {
    let (mode, seed) = name.rsplit_once("_seed")?;
    Some((mode.parse().ok()?, seed.parse().ok()?))
}

/// Ground-truth masks and normalized images of validation cases under `out/data`.
pub fn write_cases(out: &Path, cases: &[Case]) -> Result<Vec<PathBuf>> {
    let dir = out.join("data");
    create_dir(&dir)?;
    let mut written = Vec::new();
    for c in cases {
        let image = dir.join(format!("{}_image.vol3", c.id));
        let mask = dir.join(format!("{}_mask.vol3", c.id));
        write_volume(&image, &c.sample.image)?;
        write_volume(&mask, &c.sample.mask)?;
        written.extend([image, mask]);
    }
    Ok(written)
}

fn write_predictions(out: &Path, runs: &[TrainedRun]) -> Result<()> {
    for run in runs {
        let dir = out.join("predictions").join(run_name(run.mode, run.seed));
        create_dir(&dir)?;
        for (id, mask) in &run.predictions {
            write_volume(dir.join(format!("{id}.vol3")), mask)?;
        }
    }
    Ok(())
}

/// Writes `report.json`, `metrics.csv`, `models/*.json` and, when
/// configured, predictions, validation data and PGM slices.
pub fn write_outcome(outcome: &ExperimentOutcome, out: &Path) -> Result<()> {
    create_dir(out)?;
    let report = &outcome.report;
    write_text(&out.join("report.json"), &serde_json::to_string_pretty(report)?)?;
    write_text(&out.join("metrics.csv"), &report.to_csv())?;
    let models = out.join("models");
    create_dir(&models)?;
    for run in &outcome.runs {
        let path = models.join(format!("{}.json", run_name(run.mode, run.seed)));
        write_text(&path, &serde_json::to_string(&run.net)?)?;
    }
    if report.config.save_predictions {
        write_cases(out, &outcome.dataset.val)?;
        write_predictions(out, &outcome.runs)?;
    }
    if report.config.export_slices {
        let dir = out.join("slices");
        create_dir(&dir)?;
        if let Some(case) = outcome.dataset.val.first() {
            let z = case.sample.image.dims().2 / 2;
            slice_image(&case.sample.image, z, false)?.write_pgm(dir.join(format!("{}_image.pgm", case.id)))?;
            slice_image(&case.sample.mask, z, false)?.write_pgm(dir.join(format!("{}_truth.pgm", case.id)))?;
            for run in &outcome.runs {
                if let Some((id, pred)) = run.predictions.first() {
                    let name = format!("{id}_{}.pgm", run_name(run.mode, run.seed));
                    slice_image(pred, z, false)?.write_pgm(dir.join(name))?;
                }
            }
        }
    }
    Ok(())
}

/// Writes every raw phantom (image and mask) plus `split.json`.
pub fn export_dataset(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let (train, val) = generate_split(config)?;
    let mut all: Vec<Case> = train.iter().chain(&val).cloned().collect();
    all.sort_by(|a, b| a.id.cmp(&b.id));
    let mut written = write_cases(out, &all)?;
    let split = serde_json::json!({
        "train": train.iter().map(|c| &c.id).collect::<Vec<_>>(),
        "val": val.iter().map(|c| &c.id).collect::<Vec<_>>(),
    });
    let path = out.join("split.json");
    write_text(&path, &serde_json::to_string_pretty(&split)?)?;
    written.push(path);
    Ok(written)
}

/// Re-runs validation inference with the nets saved in `out/models`,
/// writing fresh predictions and `metrics.csv`.
pub fn evaluate_saved(config: &ExperimentConfig, out: &Path) -> Result<Vec<CaseRow>> {
    config.validate()?;
    let dataset = prepare_dataset(config)?;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &mode in &config.modes {
        for &seed in &config.seeds {
            let path = out.join("models").join(format!("{}.json", run_name(mode, seed)));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let net: TinyConvNet = serde_json::from_str(&text)?;
            let net = TinyConvNet::from_params(net.hidden(), net.params().to_vec())?;
            let cfg = config.run_config(mode, seed, config.train.weights.lambda2);
            let predictions = predict_cases(&net, &dataset.val, &cfg)?;
            for m in score(&predictions, &dataset.val)? {
                rows.push(CaseRow::from_metrics(&m, mode, seed));
            }
            runs.push(TrainedRun {
                mode,
                seed,
                lambda2: cfg.weights.lambda2,
                net,
                predictions,
            });
        }
    }
    sort_rows(&mut rows);
    write_cases(out, &dataset.val)?;
    write_predictions(out, &runs)?;
    write_text(&out.join("metrics.csv"), &rows_to_csv(&rows))?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedReport {
    pub modes: Vec<ModeSummary>,
    pub rows: Vec<CaseRow>,
}

/// Recomputes metrics from `out/predictions/<mode>_seed<seed>/<case>.vol3`
/// against `out/data/<case>_mask.vol3` and rewrites `metrics.csv` and
/// `summary.json`. No inference is run.
pub fn rederive_report(out: &Path) -> Result<DerivedReport> {
    let pred_root = out.join("predictions");
    let entries = fs::read_dir(&pred_root).map_err(|e| Error::io(&pred_root, e))?;
    let mut rows = Vec::new();
    let mut truths: BTreeMap<String, BinaryMask> = BTreeMap::new();
    let mut run_dirs: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&pred_root, err)))
        .collect::<Result<_>>()?;
    run_dirs.sort();
    for dir in run_dirs.into_iter().filter(|p| p.is_dir()) {
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let (mode, seed) = parse_run_name(&name)
            .ok_or_else(|| Error::Config(format!("unrecognized prediction directory {name:?}")))?;
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&dir, err)))
            .collect::<Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e == "vol3"));
        files.sort();
        for file in files {
            let id = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            if !truths.contains_key(&id) {
                let truth = BinaryMask::from_volume(read_volume(out.join("data").join(format!("{id}_mask.vol3")))?)?;
                truths.insert(id.clone(), truth);
            }
            let pred = BinaryMask::from_volume(read_volume(&file)?)?;
            let m = evaluate_case(id.clone(), &pred, &truths[&id])?;
            rows.push(CaseRow::from_metrics(&m, mode, seed));
        }
    }
    sort_rows(&mut rows);
    let modes = summarize(&rows, &BTreeMap::new());
    write_text(&out.join("metrics.csv"), &rows_to_csv(&rows))?;
    let derived = DerivedReport { modes, rows };
    write_text(&out.join("summary.json"), &serde_json::to_string_pretty(&derived)?)?;
    Ok(derived)
}
