//! Dataset files, run configuration, result artifacts, and the runners
//! behind the `sbh` command-line interface.
//!
//! Input CSVs carry a header with a `time` column (non-negative reals), a
//! `status` column (0 = censored, 1 = event), and any number of numeric
//! covariate columns, kept in file order; both special columns are matched
//! case-insensitively.  A run writes its artifacts into one directory:
//!
//! * `result.json` — the full run report (versioned schema);
//! * `profile.csv` — per-step cross-validation profiles, long format;
//! * `trajectory.csv` — per-step box bounds and supports;
//! * `traces.csv` — covariate usage and importance, long format;
//! * `km_curves.csv` — in-box / out-of-box Kaplan-Meier breakpoints;
//! * `rules.txt` — decision rules in canonical text form;
//! * `dataset.csv` + `truth.json` — simulated data and its ground truth;
//! * `error.json` — written instead of the above when a run fails.
//!
//! Conventions: CSV floats carry 17 significant digits so that reading a
//! written file reproduces every value bit for bit; JSON uses `null` both
//! for a box face that was never peeled (the box is unbounded there) and
//! for a statistic that is undefined at a step (its companion count or
//! flag says why).  Reports never depend on thread count, and the worker
//! pool size is deliberately left out of the resolved configuration, so
//! reruns with the same seed are byte-identical.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::ser::Serializer;
use serde::Serialize;

use crate::cv::{
    permutation_pvalues, replicated_cv, select_optimal_length, CvConfig, CvResult, OptCriterion,
    PermutationResult, StatsMode, Technique,
};
use crate::data::{Columns, SurvivalData};
use crate::error::{Error, Result};
use crate::peel::{
    coverage_loop, trace_statistics, BoxBounds, CoverageResult, DirectedSide, PeelConfig,
    PeelCriterion, PeelMode, PeelSide, StepRecord, Trajectory,
};
use crate::sim::{generate, GroundTruth, ModelId, SimModelSpec};
use crate::survival::{build_risk_table, kaplan_meier};

/// Version tag of the `result.json` / `truth.json` layout.
pub const SCHEMA_VERSION: &str = "1";

// ── Float formatting ─────────────────────────────────────────────────────

/// Formats a float for CSV artifacts with 17 significant digits, enough to
/// reproduce the value exactly when parsed back.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.16e}")
    }
}

/// `Some(v)` for finite values, `None` otherwise; JSON reports use this to
/// turn unbounded faces and undefined statistics into `null`.
fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn opt_finite(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

// ── Dataset files ────────────────────────────────────────────────────────

/// Reads a survival data set from a headered CSV file.
///
/// Requires `time` and `status` columns (case-insensitive); every other
/// column is a covariate.  Any malformed cell fails the load with the
/// 1-based data row and the column name.
pub fn load_csv(path: &Path) -> Result<SurvivalData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;

    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut time_col = None;
    let mut status_col = None;
    let mut covariate_cols: Vec<(usize, String)> = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        match name.to_ascii_lowercase().as_str() {
            "time" => {
                if time_col.replace(idx).is_some() {
                    return Err(Error::Schema("duplicate 'time' column".into()));
                }
            }
            "status" => {
                if status_col.replace(idx).is_some() {
                    return Err(Error::Schema("duplicate 'status' column".into()));
                }
            }
            _ => covariate_cols.push((idx, name.clone())),
        }
    }
    let time_col = time_col.ok_or_else(|| Error::Schema("missing 'time' column".into()))?;
    let status_col = status_col.ok_or_else(|| Error::Schema("missing 'status' column".into()))?;
    if covariate_cols.is_empty() {
        return Err(Error::Schema(
            "no covariate columns besides 'time' and 'status'".into(),
        ));
    }
    let mut seen = HashSet::new();
    for (_, name) in &covariate_cols {
        if !seen.insert(name.to_ascii_lowercase()) {
            return Err(Error::Schema(format!("duplicate column '{name}'")));
        }
    }

    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut covariates = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        let cell = |col: usize, column: &str| -> Result<f64> {
            let raw = record.get(col).ok_or_else(|| Error::Parse {
                row,
                column: column.into(),
                reason: "missing field".into(),
            })?;
            if raw.is_empty() {
                return Err(Error::Parse {
                    row,
                    column: column.into(),
                    reason: "empty field".into(),
                });
            }
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: column.into(),
                reason: format!("'{raw}' is not a number"),
            })
        };

        let t = cell(time_col, "time")?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Parse {
                row,
                column: "time".into(),
                reason: format!("expected a finite non-negative time, got {t}"),
            });
        }
        let s = cell(status_col, "status")?;
        let event = match s {
            v if v == 0.0 => false,
            v if v == 1.0 => true,
            v => {
                return Err(Error::Parse {
                    row,
                    column: "status".into(),
                    reason: format!("expected 0 or 1, got {v}"),
                });
            }
        };
        times.push(t);
        events.push(event);
        for (col, name) in &covariate_cols {
            let v = cell(*col, name)?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.clone(),
                    reason: format!("expected a finite number, got {v}"),
                });
            }
            covariates.push(v);
        }
    }

    let names: Vec<String> = covariate_cols.into_iter().map(|(_, n)| n).collect();
    SurvivalData::new(times, events, covariates, names)
}

/// Writes a data set to CSV in the same schema `load_csv` reads.
pub fn write_dataset_csv(path: &Path, data: &SurvivalData) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["time".to_string(), "status".to_string()];
    header.extend(data.names().iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = Vec::with_capacity(2 + data.p());
        rec.push(fmt_float(data.times()[i]));
        rec.push(if data.events()[i] { "1" } else { "0" }.to_string());
        rec.extend(data.row(i).iter().map(|&v| fmt_float(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// ── Run configuration ────────────────────────────────────────────────────

fn criterion_name(c: PeelCriterion) -> &'static str {
    match c {
        PeelCriterion::Lrt => "lrt",
        PeelCriterion::Chs => "chs",
        PeelCriterion::Lhr => "lhr",
    }
}

fn opt_name(o: OptCriterion) -> &'static str {
    match o {
        OptCriterion::Lhr => "lhr",
        OptCriterion::Lrt => "lrt",
        OptCriterion::Cer => "cer",
    }
}

fn technique_name(t: Technique) -> &'static str {
    match t {
        Technique::Averaged => "averaged",
        Technique::Combined => "combined",
        Technique::None => "none",
    }
}

fn side_name(s: PeelSide) -> &'static str {
    match s {
        PeelSide::Lower => "lower",
        PeelSide::Upper => "upper",
    }
}

fn direction_name(d: DirectedSide) -> &'static str {
    match d {
        DirectedSide::Free => "free",
        DirectedSide::KeepHigh => "high",
        DirectedSide::KeepLow => "low",
    }
}

/// Parses a peeling criterion name (`lrt`, `chs`, `lhr`).
pub fn parse_criterion(s: &str) -> Result<PeelCriterion> {
    match s.to_ascii_lowercase().as_str() {
        "lrt" => Ok(PeelCriterion::Lrt),
        "chs" => Ok(PeelCriterion::Chs),
        "lhr" => Ok(PeelCriterion::Lhr),
        _ => Err(Error::InvalidConfig(format!(
            "unknown criterion '{s}' (expected lrt, chs, or lhr)"
        ))),
    }
}

/// Parses a length-selection criterion name (`lhr`, `lrt`, `cer`).
pub fn parse_opt(s: &str) -> Result<OptCriterion> {
    match s.to_ascii_lowercase().as_str() {
        "lhr" => Ok(OptCriterion::Lhr),
        "lrt" => Ok(OptCriterion::Lrt),
        "cer" => Ok(OptCriterion::Cer),
        _ => Err(Error::InvalidConfig(format!(
            "unknown optimization criterion '{s}' (expected lhr, lrt, or cer)"
        ))),
    }
}

/// Parses a cross-validation technique name (`averaged`, `combined`, `none`).
pub fn parse_technique(s: &str) -> Result<Technique> {
    match s.to_ascii_lowercase().as_str() {
        "averaged" => Ok(Technique::Averaged),
        "combined" => Ok(Technique::Combined),
        "none" => Ok(Technique::None),
        _ => Err(Error::InvalidConfig(format!(
            "unknown technique '{s}' (expected averaged, combined, or none)"
        ))),
    }
}

fn ser_criterion<S: Serializer>(v: &PeelCriterion, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(criterion_name(*v))
}

fn ser_opt<S: Serializer>(v: &OptCriterion, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(opt_name(*v))
}

fn ser_technique<S: Serializer>(v: &Technique, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(technique_name(*v))
}

/// Fully resolved run configuration, echoed into every artifact for
/// provenance.  Exactly one of `input` / `model` names the data source.
///
/// The worker-pool size is deliberately not part of this record: results
/// do not depend on it, and keeping it out makes reruns byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    /// Path of an input CSV, or `None` when the data are simulated.
    pub input: Option<String>,
    /// Simulation model identifier (`1`, `1b`, `2`, `3`, `4`), if any.
    pub model: Option<String>,
    /// Simulated sample size (resolved from the model default if unset).
    pub n: Option<usize>,
    /// Simulated dimension (resolved from the model default if unset).
    pub p: Option<usize>,
    /// Target censoring fraction for simulated data.
    pub censoring: Option<f64>,
    /// Covariate scale of the high-dimensional simulation model.
    pub sigma: Option<f64>,
    /// Peeling fraction per step.
    pub alpha0: f64,
    /// Minimal box support.
    pub beta0: f64,
    #[serde(serialize_with = "ser_criterion")]
    pub criterion: PeelCriterion,
    /// Profile statistic used to select the trajectory length.
    #[serde(serialize_with = "ser_opt")]
    pub opt: OptCriterion,
    #[serde(serialize_with = "ser_technique")]
    pub technique: Technique,
    /// Cross-validation folds (K).
    pub folds: usize,
    /// Cross-validation replicates (B).
    pub replicates: usize,
    /// Permutations for significance testing (A).
    pub permutations: usize,
    /// Number of boxes the coverage loop may discover (M).
    pub coverage: usize,
    /// Whether bottom-up pasting refines each fitted box.
    pub paste: bool,
    /// Resolved peeling directions as a comma-separated `high`/`low`/`free`
    /// list, or `None` for free peeling.
    pub directed: Option<String>,
    /// Whether length selection applies the one-standard-error rule.
    pub one_se: bool,
    /// Optional cap on the number of peels.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            input: None,
            model: None,
            n: None,
            p: None,
            censoring: None,
            sigma: None,
            alpha0: 0.10,
            beta0: 0.05,
            criterion: PeelCriterion::Lrt,
            opt: OptCriterion::Lrt,
            technique: Technique::Combined,
            folds: 5,
            replicates: 16,
            permutations: 256,
            coverage: 1,
            paste: false,
            directed: None,
            one_se: false,
            max_steps: None,
            seed: 42,
        }
    }
}

impl RunConfig {
    /// Builds the simulation spec for `model`, filling unset knobs with the
    /// model defaults and writing the resolved values back for provenance.
    fn resolve_sim_spec(&mut self) -> Result<SimModelSpec> {
        let model: ModelId = self
            .model
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("no --model given".into()))?
            .parse()?;
        let mut spec = SimModelSpec::defaults(model, self.seed);
        if let Some(n) = self.n {
            spec.n = n;
        }
        if let Some(p) = self.p {
            spec.p = p;
        }
        if let Some(c) = self.censoring {
            spec.censoring = c;
        }
        if let Some(s) = self.sigma {
            spec.sigma = s;
        }
        spec.validate()?;
        self.model = Some(model.as_str().to_string());
        self.n = Some(spec.n);
        self.p = Some(spec.p);
        self.censoring = Some(spec.censoring);
        self.sigma = Some(spec.sigma);
        Ok(spec)
    }

    /// Loads or simulates the data source; exactly one of `input` / `model`
    /// must be set.  Simulated sources return their ground truth.
    fn acquire_data(&mut self) -> Result<(SurvivalData, Option<GroundTruth>)> {
        match (self.input.clone(), self.model.is_some()) {
            (Some(path), false) => Ok((load_csv(Path::new(&path))?, None)),
            (None, true) => {
                let spec = self.resolve_sim_spec()?;
                let (data, truth) = generate(&spec)?;
                Ok((data, Some(truth)))
            }
            (Some(_), true) => Err(Error::InvalidConfig(
                "choose one data source: --input or --model, not both".into(),
            )),
            (None, false) => Err(Error::InvalidConfig(
                "no data source: pass --input <csv> or --model <id>".into(),
            )),
        }
    }

    /// Resolves the `directed` specification into per-covariate peeling
    /// sides: either `auto` (signs of the generating model's coefficients;
    /// needs a simulated source) or a comma-separated `high`/`low`/`free`
    /// list with one entry per covariate.
    fn resolve_directed(
        &mut self,
        truth: Option<&GroundTruth>,
        p: usize,
    ) -> Result<Option<Vec<DirectedSide>>> {
        let Some(spec) = self.directed.clone() else {
            return Ok(None);
        };
        let sides = if spec.eq_ignore_ascii_case("auto") {
            truth
                .ok_or_else(|| {
                    Error::InvalidConfig(
                        "--directed auto derives directions from simulation \
                         coefficients and needs --model"
                            .into(),
                    )
                })?
                .directed_sides()
        } else {
            spec.split(',')
                .map(|tok| match tok.trim().to_ascii_lowercase().as_str() {
                    "high" => Ok(DirectedSide::KeepHigh),
                    "low" => Ok(DirectedSide::KeepLow),
                    "free" => Ok(DirectedSide::Free),
                    other => Err(Error::InvalidConfig(format!(
                        "unknown direction '{other}' (expected high, low, or free)"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?
        };
        if sides.len() != p {
            return Err(Error::InvalidConfig(format!(
                "--directed lists {} directions for {} covariates",
                sides.len(),
                p
            )));
        }
        self.directed = Some(
            sides
                .iter()
                .map(|&d| direction_name(d))
                .collect::<Vec<_>>()
                .join(","),
        );
        Ok(Some(sides))
    }

    fn peel_config(&self, sides: Option<Vec<DirectedSide>>) -> PeelConfig {
        PeelConfig {
            alpha0: self.alpha0,
            beta0: self.beta0,
            criterion: self.criterion,
            pasting: self.paste,
            mode: match sides {
                Some(s) => PeelMode::Directed(s),
                None => PeelMode::Free,
            },
            max_steps: self.max_steps,
        }
    }

    fn cv_config(&self, sides: Option<Vec<DirectedSide>>) -> CvConfig {
        CvConfig {
            peel: self.peel_config(sides),
            technique: self.technique,
            folds: self.folds,
            replicates: self.replicates,
            seed: self.seed,
        }
    }
}

// ── Report types (result.json) ───────────────────────────────────────────

/// Top-level run report, written as `result.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: String,
    /// Which subcommand produced this report.
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub data: DataSummary,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutation: Option<PermutationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub n: usize,
    pub p: usize,
    pub n_events: usize,
    pub covariate_names: Vec<String>,
}

impl DataSummary {
    fn of(data: &SurvivalData) -> DataSummary {
        DataSummary {
            n: data.n(),
            p: data.p(),
            n_events: data.event_count(),
            covariate_names: data.names().to_vec(),
        }
    }
}

/// Coverage-loop result: one trajectory per discovered box.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub requested_boxes: usize,
    pub boxes: Vec<TrajectoryReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryReport {
    /// 1-based box index in coverage order.
    pub index: usize,
    /// Observations still active (not covered by earlier boxes).
    pub n_active: usize,
    /// True when the active remainder had no events to peel against.
    pub empty: bool,
    pub steps: Vec<StepReport>,
    pub paste_steps: Vec<StepReport>,
    /// Decision rule of the final box in canonical text form.
    pub rule: String,
    /// 0-based rows of the active observations inside the final box.
    pub members: Vec<usize>,
}

/// One box of a trajectory with its end-point statistics.  `null` bounds
/// mean the face was never peeled; `null` statistics are undefined at the
/// step (no events on one side, a degenerate split, or — for the hazard
/// ratio — complete separation, flagged by `lhr_separated`).
#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub support: f64,
    pub n_in: usize,
    pub peeled_covariate: Option<String>,
    pub peeled_side: Option<String>,
    pub peeled_bound: Option<f64>,
    pub criterion_value: f64,
    pub rate: Option<f64>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    pub lhr: Option<f64>,
    pub lhr_separated: bool,
    pub lrt: Option<f64>,
    pub cer: Option<f64>,
    pub meft: Option<f64>,
    pub mefp: Option<f64>,
}

impl StepReport {
    fn from_record(rec: &StepRecord, names: &[String]) -> StepReport {
        let ep = rec.end_points.as_ref();
        StepReport {
            step: rec.step,
            support: rec.support,
            n_in: rec.n_in,
            peeled_covariate: rec.peeled_covariate.map(|j| names[j].clone()),
            peeled_side: rec.peeled_side.map(|s| side_name(s).to_string()),
            peeled_bound: opt_finite(rec.peeled_bound),
            criterion_value: rec.criterion_value,
            rate: opt_finite(rec.rate),
            lower: rec.bounds.lower.iter().map(|&v| finite(v)).collect(),
            upper: rec.bounds.upper.iter().map(|&v| finite(v)).collect(),
            lhr: ep.and_then(|e| opt_finite(e.lhr)),
            lhr_separated: ep.is_some_and(|e| e.lhr_separated),
            lrt: ep.and_then(|e| opt_finite(e.lrt)),
            cer: ep.and_then(|e| opt_finite(e.cer)),
            meft: ep.and_then(|e| opt_finite(e.meft)),
            mefp: ep.and_then(|e| opt_finite(e.mefp)),
        }
    }
}

/// Mean, standard error, and contributor count of one profiled statistic
/// at one step; `n == 0` explains a `null` mean.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StatProfile {
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvStepReport {
    pub step: usize,
    pub n_in: StatProfile,
    pub support: StatProfile,
    pub meft: StatProfile,
    pub mefp: StatProfile,
    pub lhr: StatProfile,
    pub lrt: StatProfile,
    pub cer: StatProfile,
}

/// One face of a replicate-averaged box; `null` bounds mean every
/// contributing replicate left the face unbounded, `null` standard errors
/// mean fewer than two replicates bounded it.
#[derive(Debug, Clone, Serialize)]
pub struct FaceReport {
    pub covariate: String,
    pub lower: Option<f64>,
    pub lower_se: Option<f64>,
    pub upper: Option<f64>,
    pub upper_se: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvBoxReport {
    pub step: usize,
    pub faces: Vec<FaceReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariateUsage {
    pub covariate: String,
    /// Fraction of all peel steps that moved this covariate.
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariateTrace {
    pub covariate: String,
    /// Signed cumulative importance at steps `0..=length`.
    pub values: Vec<f64>,
}

/// Replicated cross-validation result with the selected trajectory length.
#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    #[serde(serialize_with = "ser_technique")]
    pub technique: Technique,
    /// Profile length: ceiling of the mean replicate trajectory length.
    pub length: usize,
    /// Selected number of peels under the optimization criterion.
    pub optimal_length: usize,
    #[serde(serialize_with = "ser_opt")]
    pub opt_criterion: OptCriterion,
    pub one_se: bool,
    /// True when the profile was too flat to favor any length.
    pub selection_flat: bool,
    pub steps: Vec<CvStepReport>,
    pub boxes: Vec<CvBoxReport>,
    /// Canonical rule of the averaged box at the optimal length, with
    /// standard errors.
    pub rule: String,
    /// Membership of every observation in that box.
    pub optimal_membership: Vec<bool>,
    /// Per-step agreement between averaged-box membership and the majority
    /// vote over replicate boxes (fraction of observations).
    pub membership_agreement: Vec<f64>,
    pub replicate_lengths: Vec<usize>,
    /// Covariates peeled at least once, in index order.
    pub usage: Vec<CovariateUsage>,
    /// Importance traces of those covariates.
    pub importance: Vec<CovariateTrace>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PermStepReport {
    pub step: usize,
    pub pvalue: f64,
    /// True when no permutation reached the observed value, so `pvalue` is
    /// only the resolution bound of the permutation count.
    pub below_resolution: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PermutationReport {
    pub permutations: usize,
    pub steps: Vec<PermStepReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    /// File name of the written data set.
    pub dataset: String,
    /// File name of the ground-truth sidecar.
    pub truth: String,
    pub n_events: usize,
    /// Calibrated censoring horizon, when censoring is active.
    pub censor_horizon: Option<f64>,
    /// Faces of the planted high-risk box, when the model has one.
    pub planted_box: Option<Vec<FaceReport>>,
    /// Observations inside the planted box.
    pub planted_count: Option<usize>,
}

/// Ground-truth sidecar of a simulated data set, written as `truth.json`.
/// `null` censoring times mean censoring was disabled.
#[derive(Debug, Clone, Serialize)]
pub struct TruthRecord {
    pub schema_version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Regression coefficients, including drawn ones.
    pub coefficients: Vec<f64>,
    pub censor_horizon: Option<f64>,
    pub true_times: Vec<f64>,
    pub censor_times: Vec<Option<f64>>,
    pub planted_box: Option<Vec<FaceReport>>,
    pub planted_membership: Option<Vec<bool>>,
}

fn face_reports(bounds: &BoxBounds, names: &[String]) -> Vec<FaceReport> {
    (0..bounds.p())
        .map(|j| FaceReport {
            covariate: names[j].clone(),
            lower: finite(bounds.lower[j]),
            lower_se: None,
            upper: finite(bounds.upper[j]),
            upper_se: None,
        })
        .collect()
}

// ── Rule text ────────────────────────────────────────────────────────────

/// Renders a box as a conjunctive rule: `name >= v` / `name <= v` for each
/// bounded face, covariates in index order, joined by ` & `.  A box with
/// no bounded face is the universal rule.
pub fn rule_text(bounds: &BoxBounds, names: &[String]) -> String {
    let mut parts = Vec::new();
    for j in 0..bounds.p() {
        if bounds.lower[j].is_finite() {
            parts.push(format!("{} >= {}", names[j], bounds.lower[j]));
        }
        if bounds.upper[j].is_finite() {
            parts.push(format!("{} <= {}", names[j], bounds.upper[j]));
        }
    }
    if parts.is_empty() {
        "TRUE (no covariate restricted)".into()
    } else {
        parts.join(" & ")
    }
}

/// Like [`rule_text`], with a `(se ...)` annotation on every face whose
/// replicate standard error is known.
fn averaged_rule_text(
    bounds: &BoxBounds,
    lower_se: &[Option<f64>],
    upper_se: &[Option<f64>],
    names: &[String],
) -> String {
    let mut parts = Vec::new();
    let annotate = |bound: f64, se: Option<f64>| match se {
        Some(se) => format!("{bound} (se {se})"),
        None => format!("{bound}"),
    };
    for j in 0..bounds.p() {
        if bounds.lower[j].is_finite() {
            parts.push(format!(
                "{} >= {}",
                names[j],
                annotate(bounds.lower[j], lower_se[j])
            ));
        }
        if bounds.upper[j].is_finite() {
            parts.push(format!(
                "{} <= {}",
                names[j],
                annotate(bounds.upper[j], upper_se[j])
            ));
        }
    }
    if parts.is_empty() {
        "TRUE (no covariate restricted)".into()
    } else {
        parts.join(" & ")
    }
}

// ── Artifact tables ──────────────────────────────────────────────────────

/// A rectangular artifact, written as one CSV file.
#[derive(Debug, Clone)]
pub struct Table {
    /// File name inside the output directory.
    pub name: &'static str,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(path)
    }
}

fn dataset_table(data: &SurvivalData) -> Table {
    let mut headers = vec!["time".to_string(), "status".to_string()];
    headers.extend(data.names().iter().cloned());
    let rows = (0..data.n())
        .map(|i| {
            let mut row = Vec::with_capacity(2 + data.p());
            row.push(fmt_float(data.times()[i]));
            row.push(if data.events()[i] { "1" } else { "0" }.to_string());
            row.extend(data.row(i).iter().map(|&v| fmt_float(v)));
            row
        })
        .collect();
    Table {
        name: "dataset.csv",
        headers,
        rows,
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(fmt_float).unwrap_or_default()
}

fn bound_cell(v: f64) -> String {
    if v.is_finite() {
        fmt_float(v)
    } else {
        String::new()
    }
}

/// Long-format profile: one row per step and statistic, with the mean,
/// standard error, and number of contributing replicates.  Permutation
/// p-values append as a `pvalue` statistic whose `n` is the permutation
/// count.
fn profile_table(cv: &CvResult, perm: Option<&PermutationResult>) -> Table {
    let headers = ["step", "statistic", "mean", "se", "n"]
        .map(str::to_string)
        .to_vec();
    let mut rows = Vec::new();
    let stats: [(&str, &crate::cv::CvProfile); 7] = [
        ("support", &cv.support),
        ("n_in", &cv.n_in),
        ("meft", &cv.meft),
        ("mefp", &cv.mefp),
        ("lhr", &cv.lhr),
        ("lrt", &cv.lrt),
        ("cer", &cv.cer),
    ];
    for l in 0..=cv.length {
        for (name, profile) in &stats {
            rows.push(vec![
                l.to_string(),
                name.to_string(),
                opt_cell(profile.mean[l]),
                opt_cell(profile.se[l]),
                profile.count[l].to_string(),
            ]);
        }
        if let Some(perm) = perm {
            rows.push(vec![
                l.to_string(),
                "pvalue".to_string(),
                fmt_float(perm.pvalues[l]),
                String::new(),
                perm.permutations.to_string(),
            ]);
        }
    }
    Table {
        name: "profile.csv",
        headers,
        rows,
    }
}

fn trajectory_headers(names: &[String]) -> Vec<String> {
    let mut headers = ["box", "step", "phase", "support", "n_in"]
        .map(str::to_string)
        .to_vec();
    for name in names {
        headers.push(format!("{name}_lower"));
        headers.push(format!("{name}_upper"));
    }
    headers
}

fn trajectory_row(
    box_index: usize,
    phase: &str,
    step: usize,
    support: Option<f64>,
    n_in: Option<f64>,
    bounds: &BoxBounds,
) -> Vec<String> {
    let mut row = vec![
        box_index.to_string(),
        step.to_string(),
        phase.to_string(),
        opt_cell(support),
        opt_cell(n_in),
    ];
    for j in 0..bounds.p() {
        row.push(bound_cell(bounds.lower[j]));
        row.push(bound_cell(bounds.upper[j]));
    }
    row
}

/// Per-step box bounds of every fitted trajectory, one column pair per
/// covariate; empty cells are unbounded faces.
fn fit_trajectory_table(cov: &CoverageResult, names: &[String]) -> Table {
    let mut rows = Vec::new();
    for (m, traj) in cov.trajectories.iter().enumerate() {
        for rec in &traj.steps {
            rows.push(trajectory_row(
                m + 1,
                "peel",
                rec.step,
                Some(rec.support),
                Some(rec.n_in as f64),
                &rec.bounds,
            ));
        }
        for rec in &traj.paste_steps {
            rows.push(trajectory_row(
                m + 1,
                "paste",
                rec.step,
                Some(rec.support),
                Some(rec.n_in as f64),
                &rec.bounds,
            ));
        }
    }
    Table {
        name: "trajectory.csv",
        headers: trajectory_headers(names),
        rows,
    }
}

fn cv_trajectory_table(cv: &CvResult, names: &[String]) -> Table {
    let rows = (0..=cv.length)
        .map(|l| {
            trajectory_row(
                1,
                "average",
                l,
                cv.support.mean[l],
                cv.n_in.mean[l],
                &cv.boxes[l].bounds,
            )
        })
        .collect();
    Table {
        name: "trajectory.csv",
        headers: trajectory_headers(names),
        rows,
    }
}

const TRACE_HEADERS: [&str; 5] = ["kind", "box", "step", "covariate", "value"];

/// Covariate usage and importance in long format.  `usage` rows carry one
/// value per covariate (fraction of peels that moved it; the step cell is
/// empty); `importance` rows trace the signed cumulative fraction of each
/// used covariate's range peeled through each step.
fn fit_traces_table(cov: &CoverageResult, names: &[String]) -> Table {
    let mut rows = Vec::new();
    for (m, traj) in cov.trajectories.iter().enumerate() {
        if traj.empty {
            continue;
        }
        let traces = trace_statistics(traj);
        let peels = traj.peel_count();
        let mut counts = vec![0usize; names.len()];
        for used in traces.usage.iter().flatten() {
            counts[*used] += 1;
        }
        for (j, name) in names.iter().enumerate() {
            if counts[j] == 0 {
                continue;
            }
            rows.push(vec![
                "usage".to_string(),
                (m + 1).to_string(),
                String::new(),
                name.clone(),
                fmt_float(counts[j] as f64 / peels.max(1) as f64),
            ]);
        }
        for (l, row) in traces.importance.iter().enumerate() {
            for (j, name) in names.iter().enumerate() {
                if counts[j] == 0 {
                    continue;
                }
                rows.push(vec![
                    "importance".to_string(),
                    (m + 1).to_string(),
                    l.to_string(),
                    name.clone(),
                    fmt_float(row[j]),
                ]);
            }
        }
    }
    Table {
        name: "traces.csv",
        headers: TRACE_HEADERS.map(str::to_string).to_vec(),
        rows,
    }
}

fn cv_traces_table(cv: &CvResult, names: &[String]) -> Table {
    let mut rows = Vec::new();
    let used: Vec<usize> = (0..names.len()).filter(|&j| cv.usage[j] > 0.0).collect();
    for &j in &used {
        rows.push(vec![
            "usage".to_string(),
            "1".to_string(),
            String::new(),
            names[j].clone(),
            fmt_float(cv.usage[j]),
        ]);
    }
    for (l, row) in cv.importance.iter().enumerate() {
        for &j in &used {
            rows.push(vec![
                "importance".to_string(),
                "1".to_string(),
                l.to_string(),
                names[j].clone(),
                fmt_float(row[j]),
            ]);
        }
    }
    Table {
        name: "traces.csv",
        headers: TRACE_HEADERS.map(str::to_string).to_vec(),
        rows,
    }
}

/// Appends the Kaplan-Meier breakpoints of one group, starting every curve
/// at `(0, 1)`.  Groups without observations are skipped.
fn km_rows(
    rows: &mut Vec<Vec<String>>,
    data: &SurvivalData,
    mask: &[bool],
    box_index: usize,
    step: usize,
    group: &str,
) {
    if !mask.iter().any(|&b| b) {
        return;
    }
    let Ok(table) = build_risk_table(data, Some(mask)) else {
        return;
    };
    let curve = kaplan_meier(&table);
    let prefix = [box_index.to_string(), step.to_string(), group.to_string()];
    let mut push = |t: f64, s: f64| {
        let mut row = prefix.to_vec();
        row.push(fmt_float(t));
        row.push(fmt_float(s));
        rows.push(row);
    };
    push(0.0, 1.0);
    for (t, s) in curve.times.iter().zip(&curve.values) {
        push(*t, *s);
    }
}

const KM_HEADERS: [&str; 5] = ["box", "step", "group", "time", "survival"];

/// In-box / out-of-box survival curves per peel step of every trajectory,
/// evaluated on that trajectory's active observations.
fn fit_km_table(cov: &CoverageResult, data: &SurvivalData, cols: &Columns) -> Table {
    let mut rows = Vec::new();
    for (m, traj) in cov.trajectories.iter().enumerate() {
        if traj.empty {
            continue;
        }
        let mut active = vec![false; data.n()];
        for &i in &traj.active {
            active[i] = true;
        }
        for rec in &traj.steps {
            let in_mask: Vec<bool> = (0..data.n())
                .map(|i| active[i] && rec.bounds.contains(cols, i))
                .collect();
            let out_mask: Vec<bool> = (0..data.n())
                .map(|i| active[i] && !in_mask[i])
                .collect();
            km_rows(&mut rows, data, &in_mask, m + 1, rec.step, "in");
            km_rows(&mut rows, data, &out_mask, m + 1, rec.step, "out");
        }
    }
    Table {
        name: "km_curves.csv",
        headers: KM_HEADERS.map(str::to_string).to_vec(),
        rows,
    }
}

/// In-box / out-of-box survival curves per step of the averaged boxes,
/// evaluated on the full data.
fn cv_km_table(cv: &CvResult, data: &SurvivalData) -> Table {
    let mut rows = Vec::new();
    for (l, members) in cv.membership.iter().enumerate() {
        let out_mask: Vec<bool> = members.iter().map(|&b| !b).collect();
        km_rows(&mut rows, data, members, 1, l, "in");
        km_rows(&mut rows, data, &out_mask, 1, l, "out");
    }
    Table {
        name: "km_curves.csv",
        headers: KM_HEADERS.map(str::to_string).to_vec(),
        rows,
    }
}

// ── Runners ──────────────────────────────────────────────────────────────

/// Everything a finished run produced: the JSON report, the plot-ready
/// tables, the rule text, and (for simulation runs) the ground truth.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub tables: Vec<Table>,
    pub rules: Option<String>,
    pub truth: Option<TruthRecord>,
}

fn fit_report(cov: &CoverageResult, names: &[String]) -> FitReport {
    let boxes = cov
        .trajectories
        .iter()
        .enumerate()
        .map(|(m, traj)| trajectory_report(m + 1, traj, names))
        .collect();
    FitReport {
        requested_boxes: 0, // filled by the caller
        boxes,
    }
}

fn trajectory_report(index: usize, traj: &Trajectory, names: &[String]) -> TrajectoryReport {
    TrajectoryReport {
        index,
        n_active: traj.n_active,
        empty: traj.empty,
        steps: traj
            .steps
            .iter()
            .map(|rec| StepReport::from_record(rec, names))
            .collect(),
        paste_steps: traj
            .paste_steps
            .iter()
            .map(|rec| StepReport::from_record(rec, names))
            .collect(),
        rule: rule_text(&traj.final_box().clipped_to(&traj.envelope), names),
        members: traj.final_members.clone(),
    }
}

/// Runs the coverage loop on the configured data source and reports every
/// discovered box with its full peeling trajectory.
pub fn run_fit(mut config: RunConfig) -> Result<RunOutput> {
    let (data, truth) = config.acquire_data()?;
    let cols = Columns::from_data(&data);
    let sides = config.resolve_directed(truth.as_ref(), data.p())?;
    let peel = config.peel_config(sides);
    peel.validate(data.p())?;

    let mut cov = coverage_loop(&data, &cols, &peel, config.coverage)?;
    for traj in &mut cov.trajectories {
        traj.compute_end_points(&data, &cols);
    }

    let mut warnings = Vec::new();
    if cov.trajectories.len() < config.coverage {
        warnings.push(format!(
            "coverage stopped after {} of {} boxes: the active remainder \
             had nothing left to peel",
            cov.trajectories.len(),
            config.coverage
        ));
    }

    let names = data.names().to_vec();
    let mut fit = fit_report(&cov, &names);
    fit.requested_boxes = config.coverage;
    let rules = fit
        .boxes
        .iter()
        .map(|b| {
            format!(
                "# box {}: support={} n_in={} peels={}\n{}\n",
                b.index,
                b.steps.last().map_or(0.0, |s| s.support),
                b.members.len(),
                b.steps.len().saturating_sub(1),
                b.rule
            )
        })
        .collect::<Vec<_>>()
        .join("\n");

    let tables = vec![
        fit_trajectory_table(&cov, &names),
        fit_traces_table(&cov, &names),
        fit_km_table(&cov, &data, &cols),
    ];
    let report = Report {
        schema_version: SCHEMA_VERSION.to_string(),
        command: "fit".to_string(),
        seed: config.seed,
        data: DataSummary::of(&data),
        config,
        warnings,
        fit: Some(fit),
        cv: None,
        permutation: None,
        simulation: None,
    };
    Ok(RunOutput {
        report,
        tables,
        rules: Some(rules),
        truth: None,
    })
}

fn cv_report(cv: &CvResult, config: &RunConfig, names: &[String]) -> (CvReport, usize) {
    let selection = select_optimal_length(cv, config.opt, config.one_se);
    let stat = |p: &crate::cv::CvProfile, l: usize| StatProfile {
        mean: opt_finite(p.mean[l]),
        se: opt_finite(p.se[l]),
        n: p.count[l],
    };
    let steps = (0..=cv.length)
        .map(|l| CvStepReport {
            step: l,
            n_in: stat(&cv.n_in, l),
            support: stat(&cv.support, l),
            meft: stat(&cv.meft, l),
            mefp: stat(&cv.mefp, l),
            lhr: stat(&cv.lhr, l),
            lrt: stat(&cv.lrt, l),
            cer: stat(&cv.cer, l),
        })
        .collect();
    let boxes = cv
        .boxes
        .iter()
        .enumerate()
        .map(|(l, avg)| {
            let mut faces = face_reports(&avg.bounds, names);
            for (j, face) in faces.iter_mut().enumerate() {
                face.lower_se = opt_finite(avg.lower_se[j]);
                face.upper_se = opt_finite(avg.upper_se[j]);
            }
            CvBoxReport { step: l, faces }
        })
        .collect();
    let optimal = &cv.boxes[selection.step];
    let rule = averaged_rule_text(
        &optimal.bounds,
        &optimal.lower_se,
        &optimal.upper_se,
        names,
    );
    let usage: Vec<CovariateUsage> = (0..names.len())
        .filter(|&j| cv.usage[j] > 0.0)
        .map(|j| CovariateUsage {
            covariate: names[j].clone(),
            fraction: cv.usage[j],
        })
        .collect();
    let importance = usage
        .iter()
        .map(|u| u.covariate.clone())
        .collect::<Vec<_>>()
        .into_iter()
        .map(|name| {
            let j = names.iter().position(|n| *n == name).unwrap();
            CovariateTrace {
                covariate: name,
                values: cv.importance.iter().map(|row| row[j]).collect(),
            }
        })
        .collect();

    let report = CvReport {
        technique: config.technique,
        length: cv.length,
        optimal_length: selection.step,
        opt_criterion: config.opt,
        one_se: config.one_se,
        selection_flat: selection.flat,
        steps,
        boxes,
        rule,
        optimal_membership: cv.membership[selection.step].clone(),
        membership_agreement: cv.membership_agreement.clone(),
        replicate_lengths: cv.replicate_lengths.clone(),
        usage,
        importance,
    };
    (report, selection.step)
}

fn cv_rules_text(report: &CvReport, config: &RunConfig) -> String {
    let step = &report.steps[report.optimal_length];
    format!(
        "# optimal length {} of {} (technique={}, opt={}, one_se={}): \
         support={} n_in={}\n{}\n",
        report.optimal_length,
        report.length,
        technique_name(config.technique),
        opt_name(config.opt),
        config.one_se,
        step.support.mean.map_or_else(|| "-".into(), |v| v.to_string()),
        step.n_in.mean.map_or_else(|| "-".into(), |v| v.to_string()),
        report.rule
    )
}

fn run_cv_inner(
    config: &mut RunConfig,
) -> Result<(SurvivalData, Columns, CvConfig, CvResult)> {
    let (data, truth) = config.acquire_data()?;
    let cols = Columns::from_data(&data);
    let sides = config.resolve_directed(truth.as_ref(), data.p())?;
    let cv_cfg = config.cv_config(sides);
    let result = replicated_cv(&data, &cols, &cv_cfg, StatsMode::Full)?;
    Ok((data, cols, cv_cfg, result))
}

/// Runs replicated cross-validation and reports the tuning profiles, the
/// averaged boxes, and the selected trajectory length.
pub fn run_cv(mut config: RunConfig) -> Result<RunOutput> {
    let (data, _, _, result) = run_cv_inner(&mut config)?;
    let names = data.names().to_vec();
    let (cv, _) = cv_report(&result, &config, &names);
    let rules = cv_rules_text(&cv, &config);
    let tables = vec![
        profile_table(&result, None),
        cv_trajectory_table(&result, &names),
        cv_traces_table(&result, &names),
        cv_km_table(&result, &data),
    ];
    let report = Report {
        schema_version: SCHEMA_VERSION.to_string(),
        command: "cv".to_string(),
        seed: config.seed,
        data: DataSummary::of(&data),
        warnings: result.warnings.clone(),
        config,
        fit: None,
        cv: Some(cv),
        permutation: None,
        simulation: None,
    };
    Ok(RunOutput {
        report,
        tables,
        rules: Some(rules),
        truth: None,
    })
}

/// Runs replicated cross-validation and then estimates permutation
/// p-values for every step of its log-rank profile.  The embedded
/// cross-validation section is identical to what `run_cv` reports for the
/// same configuration.
pub fn run_permtest(mut config: RunConfig) -> Result<RunOutput> {
    let (data, cols, cv_cfg, result) = run_cv_inner(&mut config)?;
    let perm = permutation_pvalues(&data, &cols, &cv_cfg, config.permutations, &result)?;
    let names = data.names().to_vec();
    let (cv, _) = cv_report(&result, &config, &names);
    let rules = cv_rules_text(&cv, &config);
    let perm_report = PermutationReport {
        permutations: perm.permutations,
        steps: (0..=result.length)
            .map(|l| PermStepReport {
                step: l,
                pvalue: perm.pvalues[l],
                below_resolution: perm.below_resolution[l],
            })
            .collect(),
    };
    let tables = vec![
        profile_table(&result, Some(&perm)),
        cv_trajectory_table(&result, &names),
        cv_traces_table(&result, &names),
        cv_km_table(&result, &data),
    ];
    let report = Report {
        schema_version: SCHEMA_VERSION.to_string(),
        command: "permtest".to_string(),
        seed: config.seed,
        data: DataSummary::of(&data),
        warnings: result.warnings.clone(),
        config,
        fit: None,
        cv: Some(cv),
        permutation: Some(perm_report),
        simulation: None,
    };
    Ok(RunOutput {
        report,
        tables,
        rules: Some(rules),
        truth: None,
    })
}

/// Draws a data set from one of the simulation models and reports it
/// together with its ground truth.
pub fn run_simulate(mut config: RunConfig) -> Result<RunOutput> {
    if config.input.is_some() {
        return Err(Error::InvalidConfig(
            "simulate draws its own data; --input does not apply".into(),
        ));
    }
    if config.model.is_none() {
        return Err(Error::InvalidConfig("simulate needs --model".into()));
    }
    let spec = config.resolve_sim_spec()?;
    let (data, truth) = generate(&spec)?;
    let names = data.names().to_vec();

    let planted_faces = truth.planted_box.as_ref().map(|b| face_reports(b, &names));
    let planted_count = truth
        .planted_membership
        .as_ref()
        .map(|m| m.iter().filter(|&&b| b).count());
    let simulation = SimulationReport {
        dataset: "dataset.csv".to_string(),
        truth: "truth.json".to_string(),
        n_events: data.event_count(),
        censor_horizon: truth.censor_horizon,
        planted_box: planted_faces.clone(),
        planted_count,
    };
    let truth_record = TruthRecord {
        schema_version: SCHEMA_VERSION.to_string(),
        seed: config.seed,
        config: config.clone(),
        coefficients: truth.coefficients.clone(),
        censor_horizon: truth.censor_horizon,
        true_times: truth.true_times.clone(),
        censor_times: truth.censor_times.iter().map(|&t| finite(t)).collect(),
        planted_box: planted_faces,
        planted_membership: truth.planted_membership.clone(),
    };
    let report = Report {
        schema_version: SCHEMA_VERSION.to_string(),
        command: "simulate".to_string(),
        seed: config.seed,
        data: DataSummary::of(&data),
        config,
        warnings: Vec::new(),
        fit: None,
        cv: None,
        permutation: None,
        simulation: Some(simulation),
    };
    Ok(RunOutput {
        report,
        tables: vec![dataset_table(&data)],
        rules: None,
        truth: Some(truth_record),
    })
}

// ── Artifact writing ─────────────────────────────────────────────────────

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Writes all artifacts of a run into `dir` (created if needed) and
/// returns the paths written.
pub fn write_artifacts(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let result_path = dir.join("result.json");
    fs::write(&result_path, to_pretty_json(&out.report)?)?;
    written.push(result_path);

    for table in &out.tables {
        written.push(table.write(dir)?);
    }
    if let Some(rules) = &out.rules {
        let path = dir.join("rules.txt");
        fs::write(&path, rules)?;
        written.push(path);
    }
    if let Some(truth) = &out.truth {
        let path = dir.join("truth.json");
        fs::write(&path, to_pretty_json(truth)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `error.json` describing a failed run; the command-line interface
/// calls this before a nonzero exit.
pub fn write_error_record(dir: &Path, err: &Error) -> PathBuf {
    #[derive(Serialize)]
    struct ErrorRecord<'a> {
        schema_version: &'a str,
        error: &'a str,
        message: String,
    }
    let record = ErrorRecord {
        schema_version: SCHEMA_VERSION,
        error: err.code(),
        message: err.to_string(),
    };
    let path = dir.join("error.json");
    // Failing to record the error must not mask it.
    let _ = fs::create_dir_all(dir);
    if let Ok(text) = to_pretty_json(&record) {
        let _ = fs::write(&path, text);
    }
    path
}
