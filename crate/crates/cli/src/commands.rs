//! The five subcommands. Each writes its artifacts into an output directory
//! and returns a summary for the caller to print.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hift_core::checkpoint;
use hift_core::gradcheck::{self, GradCheckReport};
use hift_core::labels::LabelMode;
use hift_core::metrics::{MetricCurve, OpeReport};
use hift_core::model::Model;
use hift_core::sequence::{self, Sequence, GROUNDTRUTH_FILE};
use hift_core::synth::gen_suite;
use hift_core::tracker::Tracker;
use hift_core::train::{self, loss_endpoints, StepLog, LOSS_CSV_HEADER};
use hift_core::transformer::Variant;
use hift_core::{BBox, HiftError};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const CONFIG_ECHO: &str = "config.echo";
pub const CHECKPOINT: &str = "checkpoint.hift";
pub const LOSS_CSV: &str = "loss.csv";
pub const RESULTS: &str = "results.txt";
pub const METRICS_CSV: &str = "metrics.csv";
pub const PRECISION_CSV: &str = "precision.csv";
pub const SUCCESS_CSV: &str = "success.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const FAILURE_DUMP: &str = "failure.txt";
pub const TRACKS_DIR: &str = "tracks";
pub const SCORES_DIR: &str = "scores";

/// Steps averaged at each end of the loss log when reporting the loss drop.
pub const LOSS_HEAD: usize = 10;
pub const LOSS_TAIL: usize = 100;

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Creates the run directory and echoes the effective configuration into it.
pub fn prepare_out(out: &Path, cfg: &RunConfig) -> CliResult<()> {
    create_dir(out)?;
    write(&out.join(CONFIG_ECHO), &cfg.to_ini())
}

/// Runs `f` on a dedicated pool of `jobs` threads.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}

pub fn gradcheck(cfg: &RunConfig, jobs: usize) -> CliResult<Vec<GradCheckReport>> {
    let seeds: Vec<u64> = (0..cfg.gradcheck.seeds).map(|i| cfg.seed + i).collect();
    let reports = with_jobs(jobs, || {
        seeds
            .par_iter()
            .map(|&s| gradcheck::run(&cfg.gradcheck_config(s)))
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(reports)
}

/// Turns failed groups into an error naming every offending parameter.
pub fn gradcheck_verdict(reports: &[GradCheckReport]) -> CliResult<()> {
    let mut failed: Vec<String> = Vec::new();
    for r in reports {
        for g in r.failures() {
            failed.push(format!("{} (seed {}, rel err {:.3e})", g.name, r.seed, g.max_rel_err));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(failed.join(", ")))
    }
}

/// Sequences under `dir`, one per subdirectory, in name order.
pub fn load_sequences(dir: &Path) -> CliResult<Vec<Sequence>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(HiftError::Contract(format!("no sequence directories in {}", dir.display())).into());
    }
    Ok(dirs.iter().map(|d| Sequence::load(d)).collect::<Result<Vec<_>, _>>()?)
}

pub fn training_data(cfg: &RunConfig, data: Option<&Path>) -> CliResult<Vec<Sequence>> {
    match data {
        Some(dir) => load_sequences(dir),
        None => Ok(gen_suite(
            cfg.synth.train_sequences,
            cfg.synth.train_seed,
            cfg.synth.train_difficulty,
            cfg.synth.frames,
        )?),
    }
}

pub fn eval_data(cfg: &RunConfig) -> CliResult<Vec<Sequence>> {
    Ok(gen_suite(
        cfg.synth.eval_sequences,
        cfg.synth.eval_seed,
        cfg.synth.eval_difficulty,
        cfg.synth.frames,
    )?)
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub logs: Vec<StepLog>,
    /// Mean loss over the first and last few steps.
    pub initial: f64,
    pub last: f64,
    pub checkpoint: PathBuf,
}

impl TrainSummary {
    pub fn ratio(&self) -> f64 {
        self.last / self.initial
    }
}

fn loss_csv(logs: &[StepLog]) -> String {
    let mut s = format!("{LOSS_CSV_HEADER}\n");
    for l in logs {
        let _ = writeln!(s, "{}", l.csv_row());
    }
    s
}

/// Trains a fresh model and writes `loss.csv` and `checkpoint.hift`. A
/// non-finite loss aborts the run and leaves `failure.txt` behind.
pub fn train_model(cfg: &RunConfig, data: &[Sequence], out: &Path) -> CliResult<(Model, TrainSummary)> {
    create_dir(out)?;
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    let tc = cfg.train_config();
    let mut seen = Vec::with_capacity(tc.steps);
    let result = train::train(&mut model, data, &tc, |l| {
        if l.step % 100 == 0 || l.step + 1 == tc.steps {
            log::info!(
                "step {:>5} lr {:.5} loss {:.4} (cls1 {:.4} cls2 {:.4} loc {:.4})",
                l.step,
                l.lr,
                l.loss,
                l.cls1,
                l.cls2,
                l.loc
            );
        }
        seen.push(*l);
    });
    write(&out.join(LOSS_CSV), &loss_csv(&seen))?;
    let logs = match result {
        Ok(logs) => logs,
        Err(e) => {
            write(&out.join(FAILURE_DUMP), &format!("{e}\n"))?;
            return Err(e.into());
        }
    };
    let path = out.join(CHECKPOINT);
    checkpoint::save(&model.params, &path)?;
    let (initial, last) = loss_endpoints(&logs, LOSS_HEAD, LOSS_TAIL)
        .ok_or_else(|| CliError::Config("train.steps must be positive".into()))?;
    Ok((
        model,
        TrainSummary {
            logs,
            initial,
            last,
            checkpoint: path,
        },
    ))
}

pub fn cmd_train(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> CliResult<TrainSummary> {
    prepare_out(out, cfg)?;
    let data = training_data(cfg, data)?;
    Ok(train_model(cfg, &data, out)?.1)
}

/// A model shaped by `cfg` carrying the weights stored at `path`.
pub fn load_model(cfg: &RunConfig, path: &Path) -> CliResult<Model> {
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    let stored = checkpoint::load(path)?;
    model.params.load_values(&stored)?;
    Ok(model)
}

fn scores_csv(scores: &[f64], width: usize) -> String {
    let mut s = String::new();
    for row in scores.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

/// Tracks one sequence from its first ground-truth box and writes
/// `results.txt` (and per-frame fused score maps) into `dir`.
pub fn track_sequence(
    cfg: &RunConfig,
    model: &Model,
    seq: &Sequence,
    dir: &Path,
    dump_scores: bool,
) -> CliResult<Vec<BBox>> {
    let init = seq
        .groundtruth
        .first()
        .ok_or_else(|| HiftError::Contract(format!("sequence {:?} has no ground truth for frame 0", seq.name)))?;
    create_dir(dir)?;
    let tracker = Tracker::new(model, cfg.tracker.clone())?;
    let width = model.geometry().width;
    let mut dumps = Vec::new();
    let boxes = tracker.run(&seq.frames, init, |i, scores| {
        if dump_scores {
            dumps.push((i, scores_csv(scores, width)));
        }
    })?;
    sequence::write_boxes(&dir.join(RESULTS), &boxes)?;
    if dump_scores {
        let sd = dir.join(SCORES_DIR);
        create_dir(&sd)?;
        for (i, text) in dumps {
            write(&sd.join(format!("frame_{:05}.csv", i + 1)), &text)?;
        }
    }
    Ok(boxes)
}

/// Tracks either one sequence directory (results in `out/results.txt`) or
/// the configured synthetic evaluation suite (results and ground truth in
/// `out/tracks/<name>/`). Returns the directories holding results.
pub fn cmd_track(
    cfg: &RunConfig,
    checkpoint: &Path,
    sequence_dir: Option<&Path>,
    dump_scores: bool,
    jobs: usize,
    out: &Path,
) -> CliResult<Vec<PathBuf>> {
    prepare_out(out, cfg)?;
    let model = load_model(cfg, checkpoint)?;
    if let Some(dir) = sequence_dir {
        let seq = Sequence::load(dir)?;
        track_sequence(cfg, &model, &seq, out, dump_scores)?;
        return Ok(vec![out.to_path_buf()]);
    }
    let suite = eval_data(cfg)?;
    track_suite(cfg, &model, &suite, &out.join(TRACKS_DIR), dump_scores, jobs)
}

pub fn track_suite(
    cfg: &RunConfig,
    model: &Model,
    suite: &[Sequence],
    root: &Path,
    dump_scores: bool,
    jobs: usize,
) -> CliResult<Vec<PathBuf>> {
    with_jobs(jobs, || {
        suite
            .par_iter()
            .map(|seq| {
                let dir = root.join(&seq.name);
                track_sequence(cfg, model, seq, &dir, dump_scores)?;
                sequence::write_boxes(&dir.join(GROUNDTRUTH_FILE), &seq.groundtruth)?;
                Ok(dir)
            })
            .collect::<CliResult<Vec<_>>>()
    })?
}

#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub per_sequence: Vec<(String, OpeReport)>,
    pub overall: OpeReport,
}

fn evaluate_pair(results: &Path, groundtruth: &Path) -> CliResult<OpeReport> {
    let preds = sequence::read_boxes(results)?;
    let gts = sequence::read_boxes(groundtruth)?;
    Ok(OpeReport::evaluate(&preds, &gts)?)
}

/// Scores tracking output against ground truth.
///
/// `results` is either a results file or a directory whose subdirectories
/// each hold a `results.txt`. Ground truth defaults to the `groundtruth.txt`
/// beside each results file; `groundtruth` overrides it with a file or with a
/// directory of per-sequence subdirectories. Writes `metrics.csv`,
/// `precision.csv` and `success.csv`.
pub fn cmd_eval(results: &Path, groundtruth: Option<&Path>, out: &Path) -> CliResult<EvalSummary> {
    create_dir(out)?;
    let per_sequence = if results.is_file() {
        let gt = match groundtruth {
            Some(g) => g.to_path_buf(),
            None => results.with_file_name(GROUNDTRUTH_FILE),
        };
        let name = results
            .parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sequence".into());
        vec![(name, evaluate_pair(results, &gt)?)]
    } else {
        let mut dirs: Vec<PathBuf> = fs::read_dir(results)
            .map_err(|e| CliError::io(results, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(RESULTS).is_file())
            .collect();
        dirs.sort();
        if dirs.is_empty() {
            return Err(HiftError::Contract(format!("no {RESULTS} files under {}", results.display())).into());
        }
        dirs.iter()
            .map(|d| {
                let name = d
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let gt = match groundtruth {
                    Some(g) => g.join(&name).join(GROUNDTRUTH_FILE),
                    None => d.join(GROUNDTRUTH_FILE),
                };
                Ok((name, evaluate_pair(&d.join(RESULTS), &gt)?))
            })
            .collect::<CliResult<Vec<_>>>()?
    };
    let reports: Vec<OpeReport> = per_sequence.iter().map(|(_, r)| r.clone()).collect();
    let overall = OpeReport::aggregate(&reports)?;

    let mut csv = String::from("sequence,precision@20,success_auc\n");
    for (name, r) in &per_sequence {
        let _ = writeln!(csv, "{name},{},{}", r.precision_at_20, r.success_auc);
    }
    let _ = writeln!(csv, "overall,{},{}", overall.precision_at_20, overall.success_auc);
    write(&out.join(METRICS_CSV), &csv)?;
    write(&out.join(PRECISION_CSV), &overall.precision.to_csv())?;
    write(&out.join(SUCCESS_CSV), &overall.success.to_csv())?;
    Ok(EvalSummary { per_sequence, overall })
}

/// One row of the component ablation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblationVariant {
    pub name: &'static str,
    pub slug: &'static str,
    pub variant: Variant,
    pub decoder_pe: bool,
    pub labels: LabelMode,
    /// Published `(precision, success)` for reference only.
    pub published: (f64, f64),
}

pub const ABLATION_VARIANTS: [AblationVariant; 6] = [
    AblationVariant {
        name: "Baseline",
        slug: "baseline",
        variant: Variant::None,
        decoder_pe: false,
        labels: LabelMode::Circular,
        published: (0.611, 0.463),
    },
    AblationVariant {
        name: "Baseline+OT",
        slug: "baseline_ot",
        variant: Variant::Ot,
        decoder_pe: false,
        labels: LabelMode::Circular,
        published: (0.597, 0.446),
    },
    AblationVariant {
        name: "Baseline+FT",
        slug: "baseline_ft",
        variant: Variant::Ft,
        decoder_pe: false,
        labels: LabelMode::Circular,
        published: (0.675, 0.496),
    },
    AblationVariant {
        name: "Baseline+HFT+PE",
        slug: "baseline_hft_pe",
        variant: Variant::Hft,
        decoder_pe: true,
        labels: LabelMode::Circular,
        published: (0.689, 0.523),
    },
    AblationVariant {
        name: "Baseline+HFT+RL",
        slug: "baseline_hft_rl",
        variant: Variant::Hft,
        decoder_pe: false,
        labels: LabelMode::Rectangle,
        published: (0.629, 0.486),
    },
    AblationVariant {
        name: "Baseline+HFT",
        slug: "baseline_hft",
        variant: Variant::Hft,
        decoder_pe: false,
        labels: LabelMode::Circular,
        published: (0.763, 0.566),
    },
];

#[derive(Clone, Debug, PartialEq)]
pub enum AblationOutcome {
    Done {
        precision: f64,
        success: f64,
        final_loss: f64,
    },
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub outcome: AblationOutcome,
}

impl AblationVariant {
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.model.transformer.variant = self.variant;
        cfg.model.transformer.decoder_pe = self.decoder_pe;
        cfg.train.labels.mode = self.labels;
        cfg.train.steps = base.ablate.steps;
        cfg
    }
}

fn run_variant(
    v: &AblationVariant,
    base: &RunConfig,
    train_set: &[Sequence],
    eval_set: &[Sequence],
    out: &Path,
) -> CliResult<AblationOutcome> {
    let cfg = v.apply(base);
    let dir = out.join(v.slug);
    prepare_out(&dir, &cfg)?;
    let (model, summary) = train_model(&cfg, train_set, &dir)?;
    if !summary.last.is_finite() {
        return Err(HiftError::Numerical(format!("final loss {}", summary.last)).into());
    }
    track_suite(&cfg, &model, eval_set, &dir.join(TRACKS_DIR), false, 1)?;
    let eval = cmd_eval(&dir.join(TRACKS_DIR), None, &dir)?;
    Ok(AblationOutcome::Done {
        precision: eval.overall.precision_at_20,
        success: eval.overall.success_auc,
        final_loss: summary.last,
    })
}

/// Trains and evaluates every ablation variant under identical data, seeds
/// and budgets. A variant that fails numerically is reported as such and the
/// others still run.
pub fn cmd_ablate(cfg: &RunConfig, jobs: usize, out: &Path) -> CliResult<Vec<AblationRow>> {
    prepare_out(out, cfg)?;
    let train_set = training_data(cfg, None)?;
    let eval_set = eval_data(cfg)?;
    let rows = with_jobs(jobs, || {
        ABLATION_VARIANTS
            .par_iter()
            .map(|v| {
                let outcome = match run_variant(v, cfg, &train_set, &eval_set, out) {
                    Ok(o) => Ok(o),
                    Err(CliError::Core(HiftError::Numerical(msg))) => Ok(AblationOutcome::Failed(msg)),
                    Err(e) => Err(e),
                };
                outcome.map(|outcome| AblationRow { variant: *v, outcome })
            })
            .collect::<CliResult<Vec<_>>>()
    })??;
    write(&out.join(ABLATION_CSV), &ablation_csv(&rows))?;
    Ok(rows)
}

fn pct(value: f64, base: f64) -> String {
    let d = 100.0 * (value - base) / base;
    if d.is_finite() {
        format!("{d:.2}")
    } else {
        "n/a".into()
    }
}

/// CSV with measured scores, their change relative to the baseline row, and
/// the published numbers for reference.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let base = rows
        .iter()
        .find_map(|r| match (r.variant.variant, r.variant.decoder_pe, &r.outcome) {
            (Variant::None, _, AblationOutcome::Done { precision, success, .. }) => Some((*precision, *success)),
            _ => None,
        });
    let mut s = String::from(
        "variant,precision@20,success_auc,delta_precision_pct,delta_success_pct,final_loss,status,published_precision_not_reproducible,published_success_not_reproducible\n",
    );
    for r in rows {
        let (p, q) = r.variant.published;
        match &r.outcome {
            AblationOutcome::Done {
                precision,
                success,
                final_loss,
            } => {
                let (dp, ds) = match base {
                    Some((bp, bs)) => (pct(*precision, bp), pct(*success, bs)),
                    None => ("n/a".into(), "n/a".into()),
                };
                let _ = writeln!(
                    s,
                    "{},{precision:.4},{success:.4},{dp},{ds},{final_loss:.6},ok,{p},{q}",
                    r.variant.name
                );
            }
            AblationOutcome::Failed(msg) => {
                let reason = msg.replace([',', '\n'], " ");
                let _ = writeln!(s, "{},,,,,,FAILED: {reason},{p},{q}", r.variant.name);
            }
        }
    }
    s
}

/// Human-readable rendering of the ablation table.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<18} {:>9} {:>9} {:>9} {:>9}   {:>14}",
        "variant", "prec@20", "AUC", "dPrec%", "dAUC%", "published*"
    );
    let csv = ablation_csv(rows);
    for (r, line) in rows.iter().zip(csv.lines().skip(1)) {
        let f: Vec<&str> = line.split(',').collect();
        let (p, q) = r.variant.published;
        match &r.outcome {
            AblationOutcome::Done { .. } => {
                let _ = writeln!(
                    s,
                    "{:<18} {:>9} {:>9} {:>9} {:>9}   {:>6} / {:<6}",
                    f[0], f[1], f[2], f[3], f[4], p, q
                );
            }
            AblationOutcome::Failed(msg) => {
                let _ = writeln!(s, "{:<18} FAILED ({msg})   {p} / {q}", f[0]);
            }
        }
    }
    s.push_str("* published UAV20L ablation figures; not reproducible at desk scale and shown for orientation only\n");
    s
}

pub fn curve_summary(c: &MetricCurve) -> String {
    c.thresholds
        .iter()
        .zip(&c.scores)
        .map(|(t, v)| format!("{t}:{v:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}
