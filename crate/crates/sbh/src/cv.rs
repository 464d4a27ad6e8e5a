//! Replicated cross-validation for trajectory tuning.
//!
//! A peeling trajectory fit and evaluated on the same data overstates how
//! risky its boxes are.  This module grows trajectories on training folds
//! and scores the boxes on the held-out folds, either by pooling held-out
//! memberships across folds into one split per step (the combining
//! technique) or by averaging per-fold held-out statistics (the averaging
//! technique).  Whole cross-validation runs are replicated over independent
//! fold assignments; profile means and standard errors across replicates
//! feed the choice of trajectory length, and re-running the entire
//! pipeline on outcome-permuted data calibrates significance.
//!
//! Within cross-validation, fold trajectories are grown without pasting:
//! pasting is a refinement of the final refit, while the profiles exist to
//! pick a peel depth.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Columns, SurvivalData};
use crate::error::{Error, Result};
use crate::peel::{
    end_points_for_mask, peel_trajectory, trace_statistics, BoxBounds, EndPoints, PeelConfig,
    Trajectory,
};
use crate::seed::{derive_seed, Domain};
use crate::survival::log_rank_raw;

// ── Configuration ────────────────────────────────────────────────────────

/// How held-out folds are turned into per-step statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Technique {
    /// Per-fold held-out statistics, averaged across folds.
    Averaged,
    /// Held-out memberships pooled across folds, statistics computed once
    /// on the pooled split.
    Combined,
    /// No cross-validation: resubstitution statistics of one trajectory on
    /// the full data (deterministic; replicates are identical).
    None,
}

/// Profile used to pick the trajectory length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptCriterion {
    /// Maximize the cross-validated log-hazard ratio.
    Lhr,
    /// Maximize the cross-validated log-rank statistic.
    Lrt,
    /// Minimize the cross-validated concordance error.
    Cer,
}

/// Which statistics a cross-validation run computes.  Permutation reruns
/// only need the log-rank profile, and the concordance error in particular
/// is quadratic in the fold size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsMode {
    Full,
    LrtOnly,
}

/// Cross-validation configuration on top of a peeling configuration.
#[derive(Debug, Clone)]
pub struct CvConfig {
    pub peel: PeelConfig,
    pub technique: Technique,
    /// Number of folds `K`.
    pub folds: usize,
    /// Number of replicated cross-validation runs `B`.
    pub replicates: usize,
    pub seed: u64,
}

impl CvConfig {
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        self.peel.validate(p)?;
        if self.technique != Technique::None {
            if self.folds < 2 {
                return Err(Error::InvalidConfig(format!(
                    "need at least 2 folds, got {}",
                    self.folds
                )));
            }
            if self.folds > n {
                return Err(Error::InvalidConfig(format!(
                    "{} folds exceed {} observations",
                    self.folds, n
                )));
            }
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("need at least 1 replicate".into()));
        }
        Ok(())
    }
}

// ── Fold assignment ──────────────────────────────────────────────────────

/// A `K`-fold partition of the observations.
#[derive(Debug, Clone)]
pub struct FoldAssignment {
    /// Fold id (0-based) per observation.
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub warnings: Vec<String>,
}

impl FoldAssignment {
    /// Training mask of one fold (everything outside it).
    pub fn train_mask(&self, fold: usize) -> Vec<bool> {
        self.fold_of.iter().map(|&f| f != fold).collect()
    }

    /// Row indices of one fold's held-out split.
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }
}

/// Assigns observations to `k` folds, stratified by event status: events
/// and censored observations are shuffled separately and dealt round-robin
/// from a random starting fold, so fold sizes differ by at most one and so
/// do per-fold event counts.
pub fn stratified_kfold(
    events: &[bool],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FoldAssignment> {
    let n = events.len();
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!(
            "{k} folds exceed {n} observations"
        )));
    }
    let mut event_rows: Vec<usize> = (0..n).filter(|&i| events[i]).collect();
    let mut censored_rows: Vec<usize> = (0..n).filter(|&i| !events[i]).collect();
    event_rows.shuffle(rng);
    censored_rows.shuffle(rng);

    let mut warnings = Vec::new();
    if !event_rows.is_empty() && event_rows.len() < k {
        warnings.push(format!(
            "only {} events for {} folds; some held-out splits have none",
            event_rows.len(),
            k
        ));
    }
    if !censored_rows.is_empty() && censored_rows.len() < k {
        warnings.push(format!(
            "only {} censored observations for {} folds",
            censored_rows.len(),
            k
        ));
    }

    // One dealing counter across both strata keeps total fold sizes within
    // one of each other while each stratum stays balanced on its own.
    let mut fold_of = vec![0usize; n];
    let mut next = rng.gen_range(0..k);
    for &i in event_rows.iter().chain(censored_rows.iter()) {
        fold_of[i] = next;
        next = (next + 1) % k;
    }
    Ok(FoldAssignment {
        fold_of,
        k,
        warnings,
    })
}

// ── Per-step summaries ───────────────────────────────────────────────────

/// Held-out statistics of one trajectory step.  `None` marks a statistic
/// that was undefined on the split (degenerate variance, empty group, ...).
#[derive(Debug, Clone, Copy, Default)]
pub struct StepSummary {
    pub support: Option<f64>,
    /// Expected in-box count on the full-data scale.
    pub n_in: Option<f64>,
    pub lhr: Option<f64>,
    /// Squared standardized log-rank value — the chi-square scale.  Tuning
    /// profiles live on this scale so that fold averages accumulate
    /// magnitude of separation rather than letting opposite-signed folds
    /// cancel; the signed value remains available on the trajectory itself.
    pub lrt: Option<f64>,
    pub cer: Option<f64>,
    pub meft: Option<f64>,
    pub mefp: Option<f64>,
}

impl StepSummary {
    fn from_end_points(ep: &EndPoints) -> StepSummary {
        StepSummary {
            support: None,
            n_in: None,
            lhr: ep.lhr,
            lrt: ep.lrt,
            cer: ep.cer,
            meft: ep.meft,
            mefp: ep.mefp,
        }
    }
}

/// Split statistics with the step-0 convention only at step 0: deeper steps
/// whose box still holds the whole split have no out-group to contrast
/// against, and their ratio statistics stay undefined rather than zero.
fn split_stats(
    times: &[f64],
    events: &[bool],
    mask: &[bool],
    step: usize,
    mode: StatsMode,
) -> StepSummary {
    let n = mask.len();
    let n_in = mask.iter().filter(|&&b| b).count();
    match mode {
        StatsMode::LrtOnly => {
            let lrt = if n_in == n {
                if step == 0 {
                    Some(0.0)
                } else {
                    None
                }
            } else if n_in == 0 {
                None
            } else {
                log_rank_raw(times, events, mask).ok().map(|z| z * z)
            };
            StepSummary {
                lrt,
                ..StepSummary::default()
            }
        }
        StatsMode::Full => {
            let ep = end_points_for_mask(times, events, mask);
            let mut s = StepSummary::from_end_points(&ep);
            s.lrt = s.lrt.map(|z| z * z);
            if n_in == n && step > 0 {
                // No out-group: keep the curve end points, drop the
                // contrast statistics.
                s.lhr = None;
                s.lrt = None;
                s.cer = None;
            }
            s
        }
    }
}

// ── Replicates ───────────────────────────────────────────────────────────

/// One cross-validation run: fold assignment, per-fold trajectories, and
/// cross-validated step summaries up to the shortest fold trajectory.
#[derive(Debug, Clone)]
pub struct ReplicateResult {
    /// Usable trajectory length: the minimum peel count across folds.
    pub length: usize,
    /// Summaries for steps `0..=length`.
    pub steps: Vec<StepSummary>,
    /// Per-step box on the full-data scale: the fold-averaged trained box
    /// (averaging technique), the circumscription of the pooled held-out
    /// members (combining technique), or the trained box itself (no
    /// cross-validation).
    pub boxes: Vec<BoxBounds>,
    pub fold_lengths: Vec<usize>,
    /// Peel-step count per covariate, across all fold trajectories in full.
    pub covariate_peels: Vec<usize>,
    /// Total peel steps across fold trajectories.
    pub total_peels: usize,
    /// Fold-averaged signed covariate importance, `importance[l][j]` for
    /// steps `0..=length`.
    pub importance: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Usage counts and fold-averaged importance of a set of trajectories,
/// truncated at `length` for the importance rows (all contributing
/// trajectories reach it).
fn usage_and_importance(
    trajectories: &[Trajectory],
    p: usize,
    length: usize,
) -> (Vec<usize>, usize, Vec<Vec<f64>>) {
    let mut covariate_peels = vec![0usize; p];
    let mut total_peels = 0usize;
    let traces: Vec<_> = trajectories.iter().map(trace_statistics).collect();
    for t in &traces {
        for used in t.usage.iter().flatten() {
            covariate_peels[*used] += 1;
            total_peels += 1;
        }
    }
    let mut importance = Vec::with_capacity(length + 1);
    for l in 0..=length {
        let mut row = vec![0.0; p];
        for t in &traces {
            for (j, v) in t.importance[l].iter().enumerate() {
                row[j] += v / traces.len() as f64;
            }
        }
        importance.push(row);
    }
    (covariate_peels, total_peels, importance)
}

/// Runs one cross-validation replicate with the given fold-assignment rng.
pub fn run_replicate(
    data: &SurvivalData,
    cols: &Columns,
    config: &CvConfig,
    mode: StatsMode,
    rng: &mut ChaCha8Rng,
) -> Result<ReplicateResult> {
    config.validate(data.n(), data.p())?;
    let mut peel = config.peel.clone();
    peel.pasting = false;

    if config.technique == Technique::None {
        return resubstitution_replicate(data, cols, &peel, mode);
    }

    let folds = stratified_kfold(data.events(), config.folds, rng)?;
    let mut warnings = folds.warnings.clone();
    let mut trajectories: Vec<Trajectory> = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let train = folds.train_mask(f);
        let traj = peel_trajectory(data, cols, Some(&train), &peel)?;
        if traj.empty {
            warnings.push(format!("fold {f}: training split has no events"));
        }
        trajectories.push(traj);
    }
    let fold_lengths: Vec<usize> = trajectories.iter().map(|t| t.peel_count()).collect();
    let length = fold_lengths.iter().copied().min().unwrap_or(0);
    let (covariate_peels, total_peels, importance) =
        usage_and_importance(&trajectories, data.p(), length);

    let test_rows: Vec<Vec<usize>> = (0..folds.k).map(|f| folds.test_rows(f)).collect();
    let mut steps = Vec::with_capacity(length + 1);
    let mut boxes = Vec::with_capacity(length + 1);
    for l in 0..=length {
        match config.technique {
            Technique::Combined => {
                let (summary, bounds) =
                    combined_step(data, cols, &trajectories, &test_rows, l, mode);
                steps.push(summary);
                boxes.push(bounds);
            }
            Technique::Averaged => {
                let (summary, bounds) =
                    averaged_step(data, cols, &trajectories, &test_rows, l, mode);
                steps.push(summary);
                boxes.push(bounds);
            }
            Technique::None => unreachable!(),
        }
    }
    Ok(ReplicateResult {
        length,
        steps,
        boxes,
        fold_lengths,
        covariate_peels,
        total_peels,
        importance,
        warnings,
    })
}

fn resubstitution_replicate(
    data: &SurvivalData,
    cols: &Columns,
    peel: &PeelConfig,
    mode: StatsMode,
) -> Result<ReplicateResult> {
    let traj = peel_trajectory(data, cols, None, peel)?;
    let n = data.n();
    let mut steps = Vec::with_capacity(traj.steps.len());
    let mut boxes = Vec::with_capacity(traj.steps.len());
    for rec in &traj.steps {
        let mask: Vec<bool> = (0..n).map(|i| rec.bounds.contains(cols, i)).collect();
        let mut s = split_stats(data.times(), data.events(), &mask, rec.step, mode);
        s.support = Some(rec.support);
        s.n_in = Some(rec.n_in as f64);
        steps.push(s);
        boxes.push(rec.bounds.clone());
    }
    let length = traj.peel_count();
    let (covariate_peels, total_peels, importance) =
        usage_and_importance(std::slice::from_ref(&traj), data.p(), length);
    Ok(ReplicateResult {
        length,
        steps,
        boxes,
        fold_lengths: vec![length],
        covariate_peels,
        total_peels,
        importance,
        warnings: Vec::new(),
    })
}

/// Pools held-out memberships of step `l` into one split over all rows.
fn combined_step(
    data: &SurvivalData,
    cols: &Columns,
    trajectories: &[Trajectory],
    test_rows: &[Vec<usize>],
    l: usize,
    mode: StatsMode,
) -> (StepSummary, BoxBounds) {
    let n = data.n();
    let p = data.p();
    // Held-out membership is scored against the rule box: only faces the
    // peeling actually moved constrain new data.  Scoring against the
    // training hull instead would require falling inside the observed
    // training range on every covariate, which empties the box as the
    // dimension grows.
    let mut membership = vec![false; n];
    for (traj, rows) in trajectories.iter().zip(test_rows) {
        let bounds = &traj.steps[l].bounds;
        for &i in rows {
            if bounds.contains(cols, i) {
                membership[i] = true;
            }
        }
    }
    let n_in = membership.iter().filter(|&&b| b).count();
    let mut summary = split_stats(data.times(), data.events(), &membership, l, mode);
    summary.support = Some(n_in as f64 / n as f64);
    summary.n_in = Some(n_in as f64);

    // The box reported for the pooled split circumscribes its members, so
    // every face is an observed value even where no fold peeled.
    let mut bounds = BoxBounds {
        lower: vec![f64::INFINITY; p],
        upper: vec![f64::NEG_INFINITY; p],
    };
    if n_in == 0 {
        return (summary, BoxBounds::unbounded(p));
    }
    for i in 0..n {
        if !membership[i] {
            continue;
        }
        for j in 0..p {
            let v = cols.col(j)[i];
            if v < bounds.lower[j] {
                bounds.lower[j] = v;
            }
            if v > bounds.upper[j] {
                bounds.upper[j] = v;
            }
        }
    }
    (summary, bounds)
}

/// Averages per-fold held-out statistics of step `l`; each statistic uses
/// the folds where it is defined.
fn averaged_step(
    data: &SurvivalData,
    cols: &Columns,
    trajectories: &[Trajectory],
    test_rows: &[Vec<usize>],
    l: usize,
    mode: StatsMode,
) -> (StepSummary, BoxBounds) {
    let mut support = Vec::new();
    let mut lhr = Vec::new();
    let mut lrt = Vec::new();
    let mut cer = Vec::new();
    let mut meft = Vec::new();
    let mut mefp = Vec::new();
    for (traj, rows) in trajectories.iter().zip(test_rows) {
        // Rule-box scoring, as in `combined_step`.
        let times: Vec<f64> = rows.iter().map(|&i| data.times()[i]).collect();
        let events: Vec<bool> = rows.iter().map(|&i| data.events()[i]).collect();
        let bounds = &traj.steps[l].bounds;
        let mask: Vec<bool> = rows.iter().map(|&i| bounds.contains(cols, i)).collect();
        let n_in = mask.iter().filter(|&&b| b).count();
        support.push(n_in as f64 / rows.len() as f64);
        let s = split_stats(&times, &events, &mask, l, mode);
        push_if(&mut lhr, s.lhr);
        push_if(&mut lrt, s.lrt);
        push_if(&mut cer, s.cer);
        push_if(&mut meft, s.meft);
        push_if(&mut mefp, s.mefp);
    }
    let mean_support = mean(&support);
    let summary = StepSummary {
        support: mean_support,
        n_in: mean_support.map(|s| s * data.n() as f64),
        lhr: mean(&lhr),
        lrt: mean(&lrt),
        cer: mean(&cer),
        meft: mean(&meft),
        mefp: mean(&mefp),
    };
    // The reported per-step box averages the fold hulls, so every face is
    // an observed value even where no fold peeled.
    let hulls: Vec<&BoxBounds> = trajectories.iter().map(|t| t.hull_at(l)).collect();
    (summary, average_boxes(&hulls, &hulls).bounds)
}

fn push_if(acc: &mut Vec<f64>, v: Option<f64>) {
    if let Some(v) = v {
        acc.push(v);
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn se(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let var =
        values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    Some((var / values.len() as f64).sqrt())
}

// ── Box averaging ────────────────────────────────────────────────────────

/// A face-averaged box with per-face standard errors across contributors.
#[derive(Debug, Clone)]
pub struct AveragedBox {
    /// Mean edges; a face stays unbounded only when no contributor peeled
    /// it (contributors that left a face unbounded fill in with their data
    /// envelope).
    pub bounds: BoxBounds,
    pub lower_se: Vec<Option<f64>>,
    pub upper_se: Vec<Option<f64>>,
}

/// Face-wise mean of boxes.  For each face: if every contributor left it
/// unbounded the mean face is unbounded; otherwise unbounded contributions
/// are replaced by the contributor's envelope face and averaged in.
fn average_boxes(boxes: &[&BoxBounds], envelopes: &[&BoxBounds]) -> AveragedBox {
    let p = boxes[0].p();
    let mut lower = vec![f64::NEG_INFINITY; p];
    let mut upper = vec![f64::INFINITY; p];
    let mut lower_se = vec![None; p];
    let mut upper_se = vec![None; p];
    for j in 0..p {
        let lows: Vec<f64> = boxes
            .iter()
            .zip(envelopes)
            .map(|(b, e)| {
                if b.lower[j].is_finite() {
                    b.lower[j]
                } else {
                    e.lower[j]
                }
            })
            .collect();
        if boxes.iter().any(|b| b.lower[j].is_finite()) {
            lower[j] = mean(&lows).unwrap();
            lower_se[j] = se(&lows);
        }
        let highs: Vec<f64> = boxes
            .iter()
            .zip(envelopes)
            .map(|(b, e)| {
                if b.upper[j].is_finite() {
                    b.upper[j]
                } else {
                    e.upper[j]
                }
            })
            .collect();
        if boxes.iter().any(|b| b.upper[j].is_finite()) {
            upper[j] = mean(&highs).unwrap();
            upper_se[j] = se(&highs);
        }
    }
    AveragedBox {
        bounds: BoxBounds { lower, upper },
        lower_se,
        upper_se,
    }
}

// ── Replicated cross-validation ──────────────────────────────────────────

/// Mean, standard error, and contributor count of one statistic along the
/// trajectory profile.
#[derive(Debug, Clone, Default)]
pub struct CvProfile {
    pub mean: Vec<Option<f64>>,
    pub se: Vec<Option<f64>>,
    pub count: Vec<usize>,
}

impl CvProfile {
    fn from_columns(columns: Vec<Vec<f64>>) -> CvProfile {
        CvProfile {
            mean: columns.iter().map(|c| mean(c)).collect(),
            se: columns.iter().map(|c| se(c)).collect(),
            count: columns.iter().map(|c| c.len()).collect(),
        }
    }
}

/// Replicated cross-validation result: per-step profiles over steps
/// `0..=length`, averaged boxes, and the membership they induce.
#[derive(Debug, Clone)]
pub struct CvResult {
    /// Reported trajectory length: ceiling of the mean replicate length.
    pub length: usize,
    pub support: CvProfile,
    pub n_in: CvProfile,
    pub lhr: CvProfile,
    /// Chi-square-scale log-rank tuning profile (see [`StepSummary::lrt`]).
    pub lrt: CvProfile,
    pub cer: CvProfile,
    pub meft: CvProfile,
    pub mefp: CvProfile,
    /// Replicate-averaged box per step.
    pub boxes: Vec<AveragedBox>,
    /// Membership of the full data in the averaged box, per step.
    pub membership: Vec<Vec<bool>>,
    /// Agreement between averaged-box membership and the majority vote of
    /// replicate-box memberships, per step (fraction of rows).
    pub membership_agreement: Vec<f64>,
    pub replicate_lengths: Vec<usize>,
    /// Fraction of all peel steps (over every fold trajectory of every
    /// replicate) that moved each covariate.
    pub usage: Vec<f64>,
    /// Replicate-averaged signed covariate importance per step.
    pub importance: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Runs `B` independent cross-validation replicates (in parallel, but with
/// per-replicate seeds derived from the master seed, so results do not
/// depend on scheduling) and aggregates profiles, boxes, and memberships.
pub fn replicated_cv(
    data: &SurvivalData,
    cols: &Columns,
    config: &CvConfig,
    mode: StatsMode,
) -> Result<CvResult> {
    config.validate(data.n(), data.p())?;
    let b = config.replicates;
    let replicates: Vec<Result<ReplicateResult>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.seed, Domain::Replicate, i as u64));
            run_replicate(data, cols, config, mode, &mut rng)
        })
        .collect();
    let replicates: Vec<ReplicateResult> =
        replicates.into_iter().collect::<Result<Vec<_>>>()?;

    let replicate_lengths: Vec<usize> = replicates.iter().map(|r| r.length).collect();
    let length = ceil_mean_length(&replicate_lengths);

    let column = |field: fn(&StepSummary) -> Option<f64>| -> Vec<Vec<f64>> {
        (0..=length)
            .map(|l| {
                replicates
                    .iter()
                    .filter_map(|r| r.steps.get(l).and_then(field))
                    .collect()
            })
            .collect()
    };
    let support = CvProfile::from_columns(column(|s| s.support));
    let n_in = CvProfile::from_columns(column(|s| s.n_in));
    let lhr = CvProfile::from_columns(column(|s| s.lhr));
    let lrt = CvProfile::from_columns(column(|s| s.lrt));
    let cer = CvProfile::from_columns(column(|s| s.cer));
    let meft = CvProfile::from_columns(column(|s| s.meft));
    let mefp = CvProfile::from_columns(column(|s| s.mefp));

    // Box averaging across replicates; replicate boxes already live on the
    // full-data scale, so the shared envelope fills unbounded faces.
    let n = data.n();
    let p = data.p();
    let envelope = data_envelope(cols, n, p);
    let mut boxes = Vec::with_capacity(length + 1);
    let mut membership = Vec::with_capacity(length + 1);
    let mut membership_agreement = Vec::with_capacity(length + 1);
    for l in 0..=length {
        let contributing: Vec<&BoxBounds> = replicates
            .iter()
            .filter_map(|r| r.boxes.get(l))
            .collect();
        let envelopes: Vec<&BoxBounds> = contributing.iter().map(|_| &envelope).collect();
        let avg = average_boxes(&contributing, &envelopes);
        let member: Vec<bool> = (0..n).map(|i| avg.bounds.contains(cols, i)).collect();
        // Majority vote across contributing replicate boxes, as a
        // consistency check on the averaged-box membership.
        let quorum = contributing.len().div_ceil(2);
        let mut agree = 0usize;
        for i in 0..n {
            let votes = contributing.iter().filter(|b| b.contains(cols, i)).count();
            if (votes >= quorum) == member[i] {
                agree += 1;
            }
        }
        membership_agreement.push(agree as f64 / n as f64);
        membership.push(member);
        boxes.push(avg);
    }

    // Usage pools peel counts over every fold trajectory of every
    // replicate; importance averages over the replicates that reach a step.
    let total_peels: usize = replicates.iter().map(|r| r.total_peels).sum();
    let usage: Vec<f64> = (0..p)
        .map(|j| {
            if total_peels == 0 {
                0.0
            } else {
                replicates.iter().map(|r| r.covariate_peels[j]).sum::<usize>() as f64
                    / total_peels as f64
            }
        })
        .collect();
    let mut importance = Vec::with_capacity(length + 1);
    for l in 0..=length {
        let rows: Vec<&Vec<f64>> = replicates
            .iter()
            .filter_map(|r| r.importance.get(l))
            .collect();
        let mut row = vec![0.0; p];
        if !rows.is_empty() {
            for contrib in &rows {
                for j in 0..p {
                    row[j] += contrib[j] / rows.len() as f64;
                }
            }
        }
        importance.push(row);
    }

    let mut warnings: Vec<String> = Vec::new();
    for r in &replicates {
        for w in &r.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
    }
    if let Some(min_agree) = membership_agreement.iter().cloned().reduce(f64::min) {
        if min_agree < 0.9 {
            warnings.push(format!(
                "averaged-box membership disagrees with the replicate majority vote on {:.0}% of rows at the worst step",
                (1.0 - min_agree) * 100.0
            ));
        }
    }

    Ok(CvResult {
        length,
        support,
        n_in,
        lhr,
        lrt,
        cer,
        meft,
        mefp,
        boxes,
        membership,
        membership_agreement,
        replicate_lengths,
        usage,
        importance,
        warnings,
    })
}

fn data_envelope(cols: &Columns, n: usize, p: usize) -> BoxBounds {
    let mut lower = vec![f64::INFINITY; p];
    let mut upper = vec![f64::NEG_INFINITY; p];
    for j in 0..p {
        for i in 0..n {
            let v = cols.col(j)[i];
            if v < lower[j] {
                lower[j] = v;
            }
            if v > upper[j] {
                upper[j] = v;
            }
        }
    }
    BoxBounds { lower, upper }
}

/// Reported length across replicates: the ceiling of the mean, so a long
/// replicate can extend the profile while short replicates simply stop
/// contributing to the deep steps.
fn ceil_mean_length(lengths: &[usize]) -> usize {
    if lengths.is_empty() {
        return 0;
    }
    let m = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
    m.ceil() as usize
}

// ── Length selection ─────────────────────────────────────────────────────

/// Outcome of trajectory-length selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub step: usize,
    /// The profile was effectively flat (range below 1e-6), so the chosen
    /// step is arbitrary.
    pub flat: bool,
}

/// Picks the optimal trajectory length from a cross-validated profile:
/// argmax of the log-hazard-ratio or log-rank profile, argmin of the
/// concordance error, over steps `1..=length` (step 0 is the unpeeled box
/// and never a candidate).  Ties break to the smallest step.  With
/// `one_se`, the smallest step whose mean lies within one standard error of
/// the optimum is chosen instead.
pub fn select_optimal_length(result: &CvResult, opt: OptCriterion, one_se: bool) -> Selection {
    let profile = match opt {
        OptCriterion::Lhr => &result.lhr,
        OptCriterion::Lrt => &result.lrt,
        OptCriterion::Cer => &result.cer,
    };
    let maximize = !matches!(opt, OptCriterion::Cer);
    let mut best: Option<(usize, f64)> = None;
    for l in 1..profile.mean.len() {
        if let Some(v) = profile.mean[l] {
            let better = match best {
                None => true,
                Some((_, bv)) => {
                    if maximize {
                        v > bv
                    } else {
                        v < bv
                    }
                }
            };
            if better {
                best = Some((l, v));
            }
        }
    }
    let Some((best_step, best_value)) = best else {
        return Selection {
            step: 0,
            flat: true,
        };
    };
    let defined: Vec<f64> = profile.mean[1..].iter().filter_map(|v| *v).collect();
    let range = defined.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - defined.iter().cloned().fold(f64::INFINITY, f64::min);
    let flat = range < 1e-6;

    let mut step = best_step;
    if one_se {
        if let Some(se) = profile.se[best_step] {
            for l in 1..=best_step {
                let Some(v) = profile.mean[l] else { continue };
                let within = if maximize {
                    v >= best_value - se
                } else {
                    v <= best_value + se
                };
                if within {
                    step = l;
                    break;
                }
            }
        }
    }
    Selection { step, flat }
}

// ── Permutation significance ─────────────────────────────────────────────

/// Permutation p-values of the cross-validated log-rank profile.
#[derive(Debug, Clone)]
pub struct PermutationResult {
    /// One p-value per step `0..=length` of the observed profile; step 0 is
    /// 1 by construction.
    pub pvalues: Vec<f64>,
    /// Marks steps where no permutation reached the observed value, so the
    /// p-value is only bounded by the resolution `1/A`.
    pub below_resolution: Vec<bool>,
    /// Number of permutations.
    pub permutations: usize,
}

/// Estimates, for each step of the observed profile, how often a full
/// pipeline re-run on outcome-permuted data reaches an equally large
/// cross-validated log-rank value.
///
/// Each permutation shuffles the (time, event) pairs against the covariate
/// rows -- the null keeps the survival distribution but severs its link to
/// covariate space -- and replays the *entire* replicated cross-validation
/// with its own derived seed.  Permuted runs whose trajectories stop short
/// of a step count as reaching it, which can only inflate the p-value.
pub fn permutation_pvalues(
    data: &SurvivalData,
    cols: &Columns,
    config: &CvConfig,
    permutations: usize,
    observed: &CvResult,
) -> Result<PermutationResult> {
    if permutations == 0 {
        return Err(Error::InvalidConfig(
            "need at least 1 permutation".into(),
        ));
    }
    config.validate(data.n(), data.p())?;
    let observed_lrt: Vec<Option<f64>> = observed.lrt.mean.clone();
    let length = observed.length;

    let profiles: Vec<Result<Vec<Option<f64>>>> = (0..permutations)
        .into_par_iter()
        .map(|a| {
            let seed = derive_seed(config.seed, Domain::Permutation, a as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..data.n()).collect();
            perm.shuffle(&mut rng);
            // Permutation moves the outcome pairs only, so the covariate
            // columns can be shared with the observed run.
            let permuted = data.permute_outcomes(&perm)?;
            let mut cfg = config.clone();
            cfg.seed = seed;
            let cv = replicated_cv(&permuted, cols, &cfg, StatsMode::LrtOnly)?;
            Ok(cv.lrt.mean)
        })
        .collect();

    let mut exceed = vec![0usize; length + 1];
    for profile in profiles {
        let profile = profile?;
        for l in 1..=length {
            let Some(obs) = observed_lrt.get(l).and_then(|v| *v) else {
                continue;
            };
            // A missing permuted value counts as reaching the observed one.
            let reached = match profile.get(l).and_then(|v| *v) {
                Some(v) => v >= obs,
                None => true,
            };
            if reached {
                exceed[l] += 1;
            }
        }
    }

    let mut pvalues = vec![1.0; length + 1];
    let mut below = vec![false; length + 1];
    for l in 1..=length {
        if observed_lrt.get(l).and_then(|v| *v).is_none() {
            continue;
        }
        if exceed[l] == 0 {
            pvalues[l] = 1.0 / permutations as f64;
            below[l] = true;
        } else {
            pvalues[l] = exceed[l] as f64 / permutations as f64;
        }
    }
    Ok(PermutationResult {
        pvalues,
        below_resolution: below,
        permutations,
    })
}

// ── Tests ────────────────────────────────────────────────────────────────
