//! Patient box peeling.
//!
//! A box is an axis-aligned hyper-rectangle of covariate space.  Starting
//! from the maximal box (everything), each peel step removes a thin slab --
//! the `alpha0` quantile of the active in-box values -- from one face of one
//! covariate, choosing the face whose removal maximizes the rate of change
//! of a survival criterion per unit of support given up.  Peeling stops
//! before the in-box fraction of the active data would drop below `beta0`,
//! giving a trajectory of nested boxes.  Optional bottom-up pasting then
//! re-admits profitable slabs, and an outer coverage loop removes a finished
//! box from the data and hunts again, yielding a disjunctive rule.
//!
//! Quantile convention: with `k` active in-box values sorted ascending, a
//! lower-side peel removes the `ceil(alpha0 * k)` smallest observations and
//! the new bound is the smallest surviving value -- always an order
//! statistic of the data, never an interpolated cut.  Upper-side peels are
//! the mirror image.  Ties at the bound stay inside the box, so a peel on a
//! heavily tied covariate may remove fewer observations than the nominal
//! quantile, or none at all (such candidates are ineligible).

use crate::data::{Columns, SurvivalData};
use crate::error::{Error, Result};
use crate::survival::{
    build_risk_table_raw, concordance_error_raw, cox_lhr_raw, kaplan_meier, km_end_points,
    log_rank_raw, StepCurve,
};

// ── Boxes ────────────────────────────────────────────────────────────────

/// Axis-aligned box, the unit of decision rules.  Faces never peeled are
/// unbounded (`-inf` / `+inf`), so the starting box contains every possible
/// observation, not merely those seen so far.  Membership is closed:
/// `lower[j] <= x_j <= upper[j]` for every covariate `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    /// The maximal box over `p` covariates.
    pub fn unbounded(p: usize) -> Self {
        BoxBounds {
            lower: vec![f64::NEG_INFINITY; p],
            upper: vec![f64::INFINITY; p],
        }
    }

    pub fn p(&self) -> usize {
        self.lower.len()
    }

    /// Whether the covariate row `x` lies inside the box.
    pub fn contains_row(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    /// Whether row `i` of the column view lies inside the box.
    pub fn contains(&self, cols: &Columns, i: usize) -> bool {
        (0..self.p()).all(|j| {
            let v = cols.col(j)[i];
            self.lower[j] <= v && v <= self.upper[j]
        })
    }

    /// True when neither face of covariate `j` has been moved.
    pub fn face_untouched(&self, j: usize) -> bool {
        self.lower[j] == f64::NEG_INFINITY && self.upper[j] == f64::INFINITY
    }

    /// Bounds with unbounded faces replaced by the envelope's, for display.
    pub fn clipped_to(&self, envelope: &BoxBounds) -> BoxBounds {
        BoxBounds {
            lower: self
                .lower
                .iter()
                .zip(&envelope.lower)
                .map(|(v, e)| if v.is_finite() { *v } else { *e })
                .collect(),
            upper: self
                .upper
                .iter()
                .zip(&envelope.upper)
                .map(|(v, e)| if v.is_finite() { *v } else { *e })
                .collect(),
        }
    }
}

// ── Configuration ────────────────────────────────────────────────────────

/// Survival criterion steering the peeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeelCriterion {
    /// Signed log-rank statistic of in-box versus out-of-box.
    Lrt,
    /// In-box cumulative-hazard mass; its step values are exactly the
    /// integer in-box event counts.
    Chs,
    /// Cox log-hazard ratio of the in-box indicator.
    Lhr,
}

/// Which face of a covariate a peel removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeelSide {
    /// Raise the lower bound (remove the smallest values).
    Lower,
    /// Lower the upper bound (remove the largest values).
    Upper,
}

/// Per-covariate constraint in directed mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectedSide {
    /// Both faces may be peeled.
    Free,
    /// High values are believed risky: only the lower face may be peeled.
    KeepHigh,
    /// Low values are believed risky: only the upper face may be peeled.
    KeepLow,
}

/// Free peeling offers both faces of every covariate; directed peeling
/// restricts each covariate to a user-supplied side.
#[derive(Debug, Clone, PartialEq)]
pub enum PeelMode {
    Free,
    Directed(Vec<DirectedSide>),
}

impl PeelMode {
    fn allows(&self, covariate: usize, side: PeelSide) -> bool {
        match self {
            PeelMode::Free => true,
            PeelMode::Directed(table) => match table[covariate] {
                DirectedSide::Free => true,
                DirectedSide::KeepHigh => side == PeelSide::Lower,
                DirectedSide::KeepLow => side == PeelSide::Upper,
            },
        }
    }
}

/// Peeling configuration.
#[derive(Debug, Clone)]
pub struct PeelConfig {
    /// Fraction of the in-box observations a single peel removes.
    pub alpha0: f64,
    /// Minimal in-box fraction of the active data; peeling stops before
    /// crossing it.
    pub beta0: f64,
    pub criterion: PeelCriterion,
    /// Bottom-up pasting after the peel loop.
    pub pasting: bool,
    pub mode: PeelMode,
    /// Optional cap on the number of peels; the trajectory bound
    /// `ceil(log beta0 / log(1 - alpha0))` always applies on top.
    pub max_steps: Option<usize>,
}

impl Default for PeelConfig {
    fn default() -> Self {
        PeelConfig {
            alpha0: 0.10,
            beta0: 0.05,
            criterion: PeelCriterion::Lrt,
            pasting: false,
            mode: PeelMode::Free,
            max_steps: None,
        }
    }
}

impl PeelConfig {
    /// Validates parameter ranges against a data set with `p` covariates.
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha0 must lie in (0, 1), got {}",
                self.alpha0
            )));
        }
        if !(self.beta0 > 0.0 && self.beta0 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta0 must lie in (0, 1), got {}",
                self.beta0
            )));
        }
        if let PeelMode::Directed(table) = &self.mode {
            if table.len() != p {
                return Err(Error::InvalidConfig(format!(
                    "directed side table has {} entries for {} covariates",
                    table.len(),
                    p
                )));
            }
        }
        if let Some(m) = self.max_steps {
            if m > self.trajectory_bound() {
                return Err(Error::InvalidConfig(format!(
                    "max_steps {} exceeds the trajectory bound {}",
                    m,
                    self.trajectory_bound()
                )));
            }
        }
        Ok(())
    }

    /// Upper bound on any trajectory length: each peel removes at least an
    /// `alpha0` fraction (up to ties), so support falls below `beta0` after
    /// at most `ceil(log beta0 / log(1 - alpha0))` peels.  Enforced as a
    /// hard cap so tie-heavy data cannot peel forever.
    pub fn trajectory_bound(&self) -> usize {
        (self.beta0.ln() / (1.0 - self.alpha0).ln()).ceil() as usize
    }
}

// ── Step records and trajectories ────────────────────────────────────────

/// End-point statistics of one box against the active complement.  Fields
/// are `None` when the underlying statistic is undefined on that split
/// (degenerate variance, no orderable pairs, ...).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndPoints {
    /// Cox log-hazard ratio of in-box versus out-of-box.
    pub lhr: Option<f64>,
    /// Whether the log-hazard ratio is a separation clamp.
    pub lhr_separated: bool,
    /// Signed log-rank statistic.
    pub lrt: Option<f64>,
    /// Concordance error of the in-box indicator as a risk score.
    pub cer: Option<f64>,
    /// Maximal event-free time of the in-box survival curve.
    pub meft: Option<f64>,
    /// Event-free probability at `meft`.
    pub mefp: Option<f64>,
}

impl EndPoints {
    /// Step-0 conventions: a single all-inclusive group has no contrast, so
    /// the ratio statistics are 0, the indicator carries no ordering
    /// information (error 1), and the curve end points are those of the
    /// whole sample.
    pub fn step_zero(meft: f64, mefp: f64) -> Self {
        EndPoints {
            lhr: Some(0.0),
            lhr_separated: false,
            lrt: Some(0.0),
            cer: Some(1.0),
            meft: Some(meft),
            mefp: Some(mefp),
        }
    }
}

/// One step of a peeling trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 0 for the unpeeled starting box, then 1, 2, ...
    pub step: usize,
    pub bounds: BoxBounds,
    /// Tight envelope of the in-box observations: peeled faces sit exactly
    /// at their cut (ties stay inside, so the order statistic survives) and
    /// untouched faces at the observed extremes.  Membership in the hull
    /// and in `bounds` is identical on the data the box was grown on; the
    /// hull exists for reporting, so every face of a published box is an
    /// observed value, while new data is still scored against `bounds`
    /// (requiring the observed range on every untouched covariate would
    /// empty the box as the dimension grows).
    pub hull: BoxBounds,
    /// In-box fraction of the active data.
    pub support: f64,
    /// In-box observation count.
    pub n_in: usize,
    /// Covariate whose face moved at this step (`None` at step 0).
    pub peeled_covariate: Option<usize>,
    pub peeled_side: Option<PeelSide>,
    /// The new bound value (an order statistic of the active values).
    pub peeled_bound: Option<f64>,
    /// Criterion value `z(l)` of the in-box group at this step.
    pub criterion_value: f64,
    /// Rate `(z(l) - z(l-1)) / mass change` that selected this step.
    pub rate: Option<f64>,
    /// Filled by [`Trajectory::compute_end_points`]; `None` until then.
    pub end_points: Option<EndPoints>,
}

/// A peeling trajectory: the nested box sequence grown on one active set.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Peel steps, index 0 being the starting box.  Supports are strictly
    /// decreasing from step 1 on.
    pub steps: Vec<StepRecord>,
    /// Paste refinements applied after the peel loop, in order.  Supports
    /// increase along pastes, so they are kept apart from the peel steps.
    pub paste_steps: Vec<StepRecord>,
    /// True when the active set had no events and nothing could be peeled.
    pub empty: bool,
    /// Number of active observations the trajectory was grown on.
    pub n_active: usize,
    /// Row indices (into the full data) of the active observations.
    pub active: Vec<usize>,
    /// Finite envelope (min/max) of the active data, for display and for
    /// covariate-importance ranges.
    pub envelope: BoxBounds,
    /// Row indices inside the final box (after pasting, if any).
    pub final_members: Vec<usize>,
}

impl Trajectory {
    /// Number of peels (excluding the starting box).
    pub fn peel_count(&self) -> usize {
        self.steps.len() - 1
    }

    /// Box at peel step `l`.
    pub fn box_at(&self, l: usize) -> &BoxBounds {
        &self.steps[l].bounds
    }

    /// In-box data hull at peel step `l` (see [`StepRecord::hull`]).
    pub fn hull_at(&self, l: usize) -> &BoxBounds {
        &self.steps[l].hull
    }

    /// The final box: the last paste refinement if pasting ran, else the
    /// last peel step.
    pub fn final_box(&self) -> &BoxBounds {
        self.paste_steps
            .last()
            .map(|s| &s.bounds)
            .unwrap_or_else(|| &self.steps.last().unwrap().bounds)
    }

    /// Fills `end_points` on every step (peels and pastes) by evaluating
    /// each box against the active complement of `data`.
    pub fn compute_end_points(&mut self, data: &SurvivalData, cols: &Columns) {
        let view = View::build(data, cols, &self.active);
        let steps = self.steps.iter_mut().chain(self.paste_steps.iter_mut());
        for rec in steps {
            let mask: Vec<bool> = (0..view.idx.len())
                .map(|q| rec.bounds.contains(cols, view.idx[q]))
                .collect();
            rec.end_points = Some(end_points_for_mask(&view.times, &view.events, &mask));
        }
    }
}

// ── Active views ─────────────────────────────────────────────────────────

/// Gathered arrays of the active subset a trajectory operates on.
struct View<'a> {
    times: Vec<f64>,
    events: Vec<bool>,
    /// Active row indices into the full data.
    idx: Vec<usize>,
    cols: &'a Columns,
    n_events: usize,
}

impl<'a> View<'a> {
    fn build(data: &SurvivalData, cols: &'a Columns, active: &[usize]) -> View<'a> {
        let times: Vec<f64> = active.iter().map(|&i| data.times()[i]).collect();
        let events: Vec<bool> = active.iter().map(|&i| data.events()[i]).collect();
        let n_events = events.iter().filter(|&&e| e).count();
        View {
            times,
            events,
            idx: active.to_vec(),
            cols,
            n_events,
        }
    }

    fn n(&self) -> usize {
        self.idx.len()
    }

    fn value(&self, pos: usize, j: usize) -> f64 {
        self.cols.col(j)[self.idx[pos]]
    }

    fn envelope(&self, p: usize) -> BoxBounds {
        let mut lower = vec![f64::INFINITY; p];
        let mut upper = vec![f64::NEG_INFINITY; p];
        for j in 0..p {
            for q in 0..self.n() {
                let v = self.value(q, j);
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

    /// Envelope of the in-box subset.  Recomputed in full after every step:
    /// removing a slab on one covariate can retract the extremes of any
    /// other covariate, not just the peeled one.
    fn hull(&self, in_mask: &[bool], p: usize) -> BoxBounds {
        let mut lower = vec![f64::INFINITY; p];
        let mut upper = vec![f64::NEG_INFINITY; p];
        for j in 0..p {
            for q in 0..self.n() {
                if !in_mask[q] {
                    continue;
                }
                let v = self.value(q, j);
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

    /// Criterion value of a membership mask; step 0 (all in) is defined as
    /// 0 for the contrast statistics and the event count for the
    /// cumulative-hazard criterion.
    fn criterion(&self, mask: &[bool], criterion: PeelCriterion) -> Result<f64> {
        let n_in = mask.iter().filter(|&&b| b).count();
        match criterion {
            PeelCriterion::Chs => {
                Ok((0..self.n()).filter(|&q| mask[q] && self.events[q]).count() as f64)
            }
            PeelCriterion::Lrt => {
                if n_in == self.n() {
                    return Ok(0.0);
                }
                log_rank_raw(&self.times, &self.events, mask)
            }
            PeelCriterion::Lhr => {
                if n_in == self.n() {
                    return Ok(0.0);
                }
                cox_lhr_raw(&self.times, &self.events, mask).map(|fit| fit.eta)
            }
        }
    }
}

fn mask_to_indices(active: Option<&[bool]>, n: usize) -> Result<Vec<usize>> {
    match active {
        None => Ok((0..n).collect()),
        Some(mask) => {
            if mask.len() != n {
                return Err(Error::InvalidInput(format!(
                    "active mask has {} entries, expected {}",
                    mask.len(),
                    n
                )));
            }
            Ok((0..n).filter(|&i| mask[i]).collect())
        }
    }
}

// ── Candidates ───────────────────────────────────────────────────────────

/// A feasible peel: covariate, face, the resulting bound (an order statistic
/// of the active in-box values), and how many observations it removes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeelCandidate {
    pub covariate: usize,
    pub side: PeelSide,
    pub bound: f64,
    pub removed: usize,
}

/// Number of observations a quantile peel targets among `k`.
fn peel_count(alpha0: f64, k: usize) -> usize {
    // The epsilon guards against float noise pushing an exact integer
    // product just above itself.
    ((alpha0 * k as f64 - 1e-9).ceil() as usize).max(1)
}

/// Enumerates eligible peel candidates for the in-box subset of `data`.
///
/// `in_box[i]` marks the rows currently inside the box (within the active
/// set; excluded rows must be `false`).  Candidates that would remove no
/// observation (tied values), remove every observation, or leave the box
/// without events are dropped.  Order: ascending covariate, lower side
/// before upper.
pub fn candidate_peels(
    data: &SurvivalData,
    cols: &Columns,
    in_box: &[bool],
    config: &PeelConfig,
) -> Result<Vec<PeelCandidate>> {
    if in_box.len() != data.n() {
        return Err(Error::InvalidInput(format!(
            "in_box mask has {} entries, expected {}",
            in_box.len(),
            data.n()
        )));
    }
    config.validate(data.p())?;
    let idx: Vec<usize> = (0..data.n()).filter(|&i| in_box[i]).collect();
    let view = View::build(data, cols, &idx);
    let mask = vec![true; idx.len()];
    Ok(enumerate_candidates(&view, &mask, config))
}

fn enumerate_candidates(view: &View, in_mask: &[bool], config: &PeelConfig) -> Vec<PeelCandidate> {
    let p = view.cols.p();
    let positions: Vec<usize> = (0..view.n()).filter(|&q| in_mask[q]).collect();
    let k = positions.len();
    if k < 2 {
        return Vec::new();
    }
    let r = peel_count(config.alpha0, k);
    if r >= k {
        return Vec::new();
    }
    let events_in = positions.iter().filter(|&&q| view.events[q]).count();

    let mut out = Vec::new();
    let mut values: Vec<f64> = Vec::with_capacity(k);
    for j in 0..p {
        values.clear();
        values.extend(positions.iter().map(|&q| view.value(q, j)));
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for side in [PeelSide::Lower, PeelSide::Upper] {
            if !config.mode.allows(j, side) {
                continue;
            }
            let bound = match side {
                PeelSide::Lower => values[r],
                PeelSide::Upper => values[k - 1 - r],
            };
            let removed = match side {
                PeelSide::Lower => values.partition_point(|&v| v < bound),
                PeelSide::Upper => k - values.partition_point(|&v| v <= bound),
            };
            if removed == 0 || removed >= k {
                continue;
            }
            let removed_events = positions
                .iter()
                .filter(|&&q| {
                    view.events[q]
                        && match side {
                            PeelSide::Lower => view.value(q, j) < bound,
                            PeelSide::Upper => view.value(q, j) > bound,
                        }
                })
                .count();
            if removed_events >= events_in {
                // The peel would leave the box without events.
                continue;
            }
            out.push(PeelCandidate {
                covariate: j,
                side,
                bound,
                removed,
            });
        }
    }
    out
}

// ── Step selection ───────────────────────────────────────────────────────

/// A selected peel with its bookkeeping.
#[derive(Debug, Clone)]
pub struct ChosenPeel {
    pub candidate: PeelCandidate,
    /// Criterion value of the box after the peel.
    pub criterion_value: f64,
    /// Rate that won the selection.
    pub rate: f64,
    /// Support (of the active set) after the peel.
    pub support: f64,
    pub n_in: usize,
}

struct InternalChoice {
    candidate: PeelCandidate,
    removed_positions: Vec<usize>,
    z_new: f64,
    rate: f64,
}

fn select_peel(
    view: &View,
    in_mask: &[bool],
    z_prev: f64,
    config: &PeelConfig,
) -> Option<InternalChoice> {
    let candidates = enumerate_candidates(view, in_mask, config);
    let n_active = view.n() as f64;
    let mut best: Option<InternalChoice> = None;
    let mut cand_mask = vec![false; view.n()];
    for cand in candidates {
        cand_mask.copy_from_slice(in_mask);
        let mut removed_positions = Vec::with_capacity(cand.removed);
        for q in 0..view.n() {
            if !in_mask[q] {
                continue;
            }
            let v = view.value(q, cand.covariate);
            let removed = match cand.side {
                PeelSide::Lower => v < cand.bound,
                PeelSide::Upper => v > cand.bound,
            };
            if removed {
                cand_mask[q] = false;
                removed_positions.push(q);
            }
        }
        let z_new = match view.criterion(&cand_mask, config.criterion) {
            Ok(z) => z,
            Err(_) => continue, // degenerate split: candidate not scoreable
        };
        let delta_beta = removed_positions.len() as f64 / n_active;
        let rate = (z_new - z_prev) / delta_beta;
        // Strictly-greater keeps the first of tied rates: candidates are
        // enumerated by ascending covariate with lower before upper, which
        // is the tie-break order.
        if best.as_ref().map(|b| rate > b.rate).unwrap_or(true) {
            best = Some(InternalChoice {
                candidate: cand,
                removed_positions,
                z_new,
                rate,
            });
        }
    }
    best
}

/// Evaluates every candidate peel of the current box and returns the
/// rate-maximizing one, or `None` when no candidate is scoreable.
///
/// `in_box` marks the current in-box rows within the active set given by
/// `active`; `z_prev` is the criterion value of the current box.  The
/// support floor is *not* applied here -- the trajectory loop owns stopping.
pub fn peel_step(
    data: &SurvivalData,
    cols: &Columns,
    active: Option<&[bool]>,
    in_box: &[bool],
    z_prev: f64,
    config: &PeelConfig,
) -> Result<Option<ChosenPeel>> {
    config.validate(data.p())?;
    let idx = mask_to_indices(active, data.n())?;
    let view = View::build(data, cols, &idx);
    let in_mask: Vec<bool> = idx.iter().map(|&i| in_box[i]).collect();
    let n_in = in_mask.iter().filter(|&&b| b).count();
    Ok(select_peel(&view, &in_mask, z_prev, config).map(|c| {
        let n_new = n_in - c.removed_positions.len();
        ChosenPeel {
            candidate: c.candidate,
            criterion_value: c.z_new,
            rate: c.rate,
            support: n_new as f64 / view.n() as f64,
            n_in: n_new,
        }
    }))
}

// ── Trajectories ─────────────────────────────────────────────────────────

/// Grows a full peeling trajectory on the active subset of `data`
/// (`active = None` means all rows).
///
/// The loop stops when no eligible candidate remains, when the selected
/// peel would drive support strictly below `beta0`, or at the trajectory
/// bound.  If `config.pasting` is set, bottom-up pasting then re-admits
/// slabs while the criterion keeps increasing.  An active set without
/// events yields a step-0-only trajectory flagged `empty`.
pub fn peel_trajectory(
    data: &SurvivalData,
    cols: &Columns,
    active: Option<&[bool]>,
    config: &PeelConfig,
) -> Result<Trajectory> {
    config.validate(data.p())?;
    let idx = mask_to_indices(active, data.n())?;
    if idx.is_empty() {
        return Err(Error::InvalidInput("active set is empty".into()));
    }
    let view = View::build(data, cols, &idx);
    let p = data.p();
    let envelope = view.envelope(p);
    let n_active = view.n();

    let mut in_mask = vec![true; n_active];
    let z0 = view
        .criterion(&in_mask, config.criterion)
        .expect("step-0 criterion is total");
    let mut steps = vec![StepRecord {
        step: 0,
        bounds: BoxBounds::unbounded(p),
        hull: envelope.clone(),
        support: 1.0,
        n_in: n_active,
        peeled_covariate: None,
        peeled_side: None,
        peeled_bound: None,
        criterion_value: z0,
        rate: None,
        end_points: None,
    }];

    if view.n_events == 0 {
        return Ok(Trajectory {
            steps,
            paste_steps: Vec::new(),
            empty: true,
            n_active,
            active: idx.clone(),
            envelope,
            final_members: idx,
        });
    }

    let cap = config
        .max_steps
        .unwrap_or(usize::MAX)
        .min(config.trajectory_bound());
    let mut bounds = BoxBounds::unbounded(p);
    let mut n_in = n_active;
    let mut z_prev = z0;

    while steps.len() - 1 < cap {
        let choice = match select_peel(&view, &in_mask, z_prev, config) {
            Some(c) => c,
            None => break,
        };
        let n_new = n_in - choice.removed_positions.len();
        let support = n_new as f64 / n_active as f64;
        if support < config.beta0 - 1e-12 {
            break; // the peel would violate the support floor
        }
        for &q in &choice.removed_positions {
            in_mask[q] = false;
        }
        n_in = n_new;
        match choice.candidate.side {
            PeelSide::Lower => bounds.lower[choice.candidate.covariate] = choice.candidate.bound,
            PeelSide::Upper => bounds.upper[choice.candidate.covariate] = choice.candidate.bound,
        }
        z_prev = choice.z_new;
        steps.push(StepRecord {
            step: steps.len(),
            bounds: bounds.clone(),
            hull: view.hull(&in_mask, p),
            support,
            n_in,
            peeled_covariate: Some(choice.candidate.covariate),
            peeled_side: Some(choice.candidate.side),
            peeled_bound: Some(choice.candidate.bound),
            criterion_value: choice.z_new,
            rate: Some(choice.rate),
            end_points: None,
        });
    }

    let mut paste_steps = Vec::new();
    if config.pasting {
        let mut step_no = steps.len();
        while let Some(paste) = select_paste(&view, &mut in_mask, &mut bounds, z_prev, config) {
            n_in = paste.n_in;
            z_prev = paste.criterion_value;
            paste_steps.push(StepRecord {
                step: step_no,
                bounds: bounds.clone(),
                hull: view.hull(&in_mask, p),
                support: paste.support,
                n_in,
                peeled_covariate: Some(paste.candidate.covariate),
                peeled_side: Some(paste.candidate.side),
                peeled_bound: Some(paste.candidate.bound),
                criterion_value: paste.criterion_value,
                rate: Some(paste.rate),
                end_points: None,
            });
            step_no += 1;
        }
    }

    let final_members: Vec<usize> = (0..n_active)
        .filter(|&q| in_mask[q])
        .map(|q| idx[q])
        .collect();
    Ok(Trajectory {
        steps,
        paste_steps,
        empty: false,
        n_active,
        active: idx,
        envelope,
        final_members,
    })
}

// ── Pasting ──────────────────────────────────────────────────────────────

/// Attempts one bottom-up paste on the box `in_box` describes: for each
/// finite face, the `alpha0` quantile slab of excluded active observations
/// nearest the face is scored, and the best expansion is returned if its
/// criterion rate is strictly positive.  Returns `Ok(None)` when the box is
/// maximal or no expansion increases the criterion.
///
/// With the cumulative-hazard criterion any slab containing an event
/// qualifies (the count can only grow), so pasting is most informative with
/// the log-rank or log-hazard-ratio criteria.
pub fn paste_step(
    data: &SurvivalData,
    cols: &Columns,
    active: Option<&[bool]>,
    in_box: &[bool],
    bounds: &BoxBounds,
    z_current: f64,
    config: &PeelConfig,
) -> Result<Option<ChosenPeel>> {
    config.validate(data.p())?;
    let idx = mask_to_indices(active, data.n())?;
    let view = View::build(data, cols, &idx);
    let mut in_mask: Vec<bool> = idx.iter().map(|&i| in_box[i]).collect();
    let mut b = bounds.clone();
    Ok(select_paste(&view, &mut in_mask, &mut b, z_current, config))
}

fn select_paste(
    view: &View,
    in_mask: &mut Vec<bool>,
    bounds: &mut BoxBounds,
    z_current: f64,
    config: &PeelConfig,
) -> Option<ChosenPeel> {
    let n_active = view.n();
    let n_in = in_mask.iter().filter(|&&b| b).count();
    if n_in == 0 {
        return None;
    }
    let slab = peel_count(config.alpha0, n_in);
    let p = bounds.p();

    struct Best {
        candidate: PeelCandidate,
        admitted: Vec<usize>,
        z_new: f64,
        rate: f64,
    }
    let mut best: Option<Best> = None;
    let mut cand_mask = vec![false; n_active];

    for j in 0..p {
        for side in [PeelSide::Lower, PeelSide::Upper] {
            let face = match side {
                PeelSide::Lower => bounds.lower[j],
                PeelSide::Upper => bounds.upper[j],
            };
            if !face.is_finite() {
                continue; // face never peeled: nothing lies beyond it
            }
            // Excluded active points that would re-enter if only this face
            // moved: inside every other face, beyond this one.
            let mut beyond: Vec<(f64, usize)> = Vec::new();
            'points: for q in 0..n_active {
                if in_mask[q] {
                    continue;
                }
                let v = view.value(q, j);
                let outside_this = match side {
                    PeelSide::Lower => v < face,
                    PeelSide::Upper => v > face,
                };
                if !outside_this {
                    continue;
                }
                for jj in 0..p {
                    if jj == j {
                        continue;
                    }
                    let w = view.value(q, jj);
                    if w < bounds.lower[jj] || w > bounds.upper[jj] {
                        continue 'points;
                    }
                }
                beyond.push((v, q));
            }
            if beyond.is_empty() {
                continue;
            }
            // Nearest-the-face ordering.
            match side {
                PeelSide::Lower => {
                    beyond.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                }
                PeelSide::Upper => {
                    beyond.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                }
            }
            let take = slab.min(beyond.len());
            let new_bound = beyond[take - 1].0;
            // Ties at the new bound are admitted with it (closed box).
            let admitted: Vec<usize> = beyond
                .iter()
                .filter(|(v, _)| match side {
                    PeelSide::Lower => *v >= new_bound,
                    PeelSide::Upper => *v <= new_bound,
                })
                .map(|&(_, q)| q)
                .collect();
            cand_mask.copy_from_slice(in_mask);
            for &q in &admitted {
                cand_mask[q] = true;
            }
            let z_new = match view.criterion(&cand_mask, config.criterion) {
                Ok(z) => z,
                Err(_) => continue,
            };
            let delta_beta = admitted.len() as f64 / n_active as f64;
            let rate = (z_new - z_current) / delta_beta;
            if rate > 0.0 && best.as_ref().map(|b| rate > b.rate).unwrap_or(true) {
                best = Some(Best {
                    candidate: PeelCandidate {
                        covariate: j,
                        side,
                        bound: new_bound,
                        removed: admitted.len(),
                    },
                    admitted,
                    z_new,
                    rate,
                });
            }
        }
    }

    best.map(|b| {
        for &q in &b.admitted {
            in_mask[q] = true;
        }
        match b.candidate.side {
            PeelSide::Lower => bounds.lower[b.candidate.covariate] = b.candidate.bound,
            PeelSide::Upper => bounds.upper[b.candidate.covariate] = b.candidate.bound,
        }
        let n_new = n_in + b.admitted.len();
        ChosenPeel {
            candidate: b.candidate,
            criterion_value: b.z_new,
            rate: b.rate,
            support: n_new as f64 / n_active as f64,
            n_in: n_new,
        }
    })
}

// ── Coverage loop ────────────────────────────────────────────────────────

/// Result of the outer coverage loop: one trajectory per discovered box,
/// each grown on the data left over by its predecessors.
#[derive(Debug, Clone)]
pub struct CoverageResult {
    pub trajectories: Vec<Trajectory>,
}

impl CoverageResult {
    /// Final boxes, one per coverage round.
    pub fn final_boxes(&self) -> Vec<&BoxBounds> {
        self.trajectories.iter().map(|t| t.final_box()).collect()
    }

    /// Whether any box of the disjunction contains the covariate row.
    pub fn rule_contains(&self, x: &[f64]) -> bool {
        self.trajectories
            .iter()
            .any(|t| t.final_box().contains_row(x))
    }
}

/// Runs up to `max_boxes` coverage rounds: grow a trajectory, remove its
/// final box members, repeat on the remainder.  Stops early when the
/// remaining support (relative to the full data) is at most `beta0`, when
/// the remainder has no events, or when a round cannot peel at all.
pub fn coverage_loop(
    data: &SurvivalData,
    cols: &Columns,
    config: &PeelConfig,
    max_boxes: usize,
) -> Result<CoverageResult> {
    if max_boxes == 0 {
        return Err(Error::InvalidConfig("max_boxes must be at least 1".into()));
    }
    let n = data.n();
    let mut active = vec![true; n];
    let mut trajectories = Vec::new();
    for _ in 0..max_boxes {
        let remaining: usize = active.iter().filter(|&&a| a).count();
        if remaining == 0 || (remaining as f64 / n as f64) <= config.beta0 {
            break;
        }
        let remaining_events = (0..n).filter(|&i| active[i] && data.events()[i]).count();
        if remaining_events == 0 {
            break;
        }
        let traj = peel_trajectory(data, cols, Some(&active), config)?;
        let made_progress = traj.peel_count() > 0;
        for &i in &traj.final_members {
            active[i] = false;
        }
        trajectories.push(traj);
        if !made_progress {
            break;
        }
    }
    Ok(CoverageResult { trajectories })
}

// ── Traces ───────────────────────────────────────────────────────────────

/// Covariate usage and importance along a trajectory.
#[derive(Debug, Clone)]
pub struct Traces {
    /// Peeled covariate per step (`None` at step 0).
    pub usage: Vec<Option<usize>>,
    /// `importance[l][j]`: signed cumulative fraction of covariate `j`'s
    /// active range peeled through step `l`; positive for lower-side peels,
    /// negative for upper-side.  Unused covariates stay at zero.
    pub importance: Vec<Vec<f64>>,
}

/// Computes usage and importance traces of a trajectory's peel steps.
pub fn trace_statistics(traj: &Trajectory) -> Traces {
    let p = traj.envelope.p();
    let range: Vec<f64> = (0..p)
        .map(|j| traj.envelope.upper[j] - traj.envelope.lower[j])
        .collect();
    let mut usage = Vec::with_capacity(traj.steps.len());
    let mut importance = Vec::with_capacity(traj.steps.len());
    let mut current = vec![0.0; p];
    let mut prev_bounds = BoxBounds::unbounded(p);
    for rec in &traj.steps {
        usage.push(rec.peeled_covariate);
        if let (Some(j), Some(side)) = (rec.peeled_covariate, rec.peeled_side) {
            if range[j] > 0.0 {
                let moved = match side {
                    PeelSide::Lower => {
                        let from = if prev_bounds.lower[j].is_finite() {
                            prev_bounds.lower[j]
                        } else {
                            traj.envelope.lower[j]
                        };
                        (rec.bounds.lower[j] - from) / range[j]
                    }
                    PeelSide::Upper => {
                        let from = if prev_bounds.upper[j].is_finite() {
                            prev_bounds.upper[j]
                        } else {
                            traj.envelope.upper[j]
                        };
                        -((from - rec.bounds.upper[j]) / range[j])
                    }
                };
                current[j] += moved;
            }
        }
        importance.push(current.clone());
        prev_bounds = rec.bounds.clone();
    }
    Traces { usage, importance }
}

// ── End points ───────────────────────────────────────────────────────────

/// End-point statistics of a membership split, with the step-0 convention
/// when the out-of-box side is empty.
pub(crate) fn end_points_for_mask(times: &[f64], events: &[bool], mask: &[bool]) -> EndPoints {
    let n = times.len();
    let n_in = mask.iter().filter(|&&b| b).count();
    let in_times: Vec<f64> = (0..n).filter(|&q| mask[q]).map(|q| times[q]).collect();
    let in_events: Vec<bool> = (0..n).filter(|&q| mask[q]).map(|q| events[q]).collect();
    let km_limits = |ts: &[f64], es: &[bool]| -> (Option<f64>, Option<f64>) {
        if ts.is_empty() {
            return (None, None);
        }
        let curve = match build_risk_table_raw(ts, es, None) {
            Ok(table) => kaplan_meier(&table),
            Err(_) => StepCurve::flat(ts.iter().cloned().fold(f64::MIN, f64::max)),
        };
        let ep = km_end_points(&curve, None, None);
        (Some(ep.time), Some(ep.prob))
    };

    if n_in == n {
        let (meft, mefp) = km_limits(&in_times, &in_events);
        return EndPoints {
            meft,
            mefp,
            ..EndPoints::step_zero(0.0, 1.0)
        };
    }
    if n_in == 0 {
        return EndPoints {
            lhr: None,
            lhr_separated: false,
            lrt: None,
            cer: None,
            meft: None,
            mefp: None,
        };
    }

    let (lhr, lhr_separated) = match cox_lhr_raw(times, events, mask) {
        Ok(fit) => (Some(fit.eta), fit.separated),
        Err(_) => (None, false),
    };
    let lrt = log_rank_raw(times, events, mask).ok();
    let scores: Vec<f64> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let cer = concordance_error_raw(times, events, &scores).ok();
    let (meft, mefp) = km_limits(&in_times, &in_events);
    EndPoints {
        lhr,
        lhr_separated,
        lrt,
        cer,
        meft,
        mefp,
    }
}

// ── Tests ────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurvivalData;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn one_covariate(times: &[f64], events: &[bool], x: &[f64]) -> (SurvivalData, Columns) {
        let d = SurvivalData::with_default_names(
            times.to_vec(),
            events.to_vec(),
            x.to_vec(),
            1,
        )
        .unwrap();
        let c = Columns::from_data(&d);
        (d, c)
    }

    fn config(criterion: PeelCriterion) -> PeelConfig {
        PeelConfig {
            criterion,
            ..PeelConfig::default()
        }
    }

    fn random_data(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (SurvivalData, Columns) {
        let times: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.75)).collect();
        let covs: Vec<f64> = (0..n * p).map(|_| rng.gen::<f64>()).collect();
        let d = SurvivalData::with_default_names(times, events, covs, p).unwrap();
        let c = Columns::from_data(&d);
        (d, c)
    }

    // ── candidates ───────────────────────────────────────────────────

    #[test]
    fn ten_uniform_points_two_candidates_removing_one_each() {
        let x: Vec<f64> = (1..=10).map(|v| v as f64 / 10.0).collect();
        let times: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let (d, c) = one_covariate(&times, &[true; 10], &x);
        let cands =
            candidate_peels(&d, &c, &[true; 10], &config(PeelCriterion::Lrt)).unwrap();
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[0].side, PeelSide::Lower);
        assert_eq!(cands[0].removed, 1);
        assert_abs_diff_eq!(cands[0].bound, 0.2);
        assert_eq!(cands[1].side, PeelSide::Upper);
        assert_eq!(cands[1].removed, 1);
        assert_abs_diff_eq!(cands[1].bound, 0.9);
    }

    #[test]
    fn constant_covariate_yields_no_candidates() {
        let times: Vec<f64> = (1..=8).map(|v| v as f64).collect();
        let (d, c) = one_covariate(&times, &[true; 8], &[3.0; 8]);
        let cands =
            candidate_peels(&d, &c, &[true; 8], &config(PeelCriterion::Lrt)).unwrap();
        assert!(cands.is_empty());
    }

    #[test]
    fn directed_mode_restricts_sides() {
        let n = 20;
        let mut covs = Vec::new();
        for i in 0..n {
            covs.push(i as f64);
            covs.push((i * 7 % n) as f64);
        }
        let times: Vec<f64> = (1..=n).map(|v| v as f64).collect();
        let d = SurvivalData::with_default_names(times, vec![true; n], covs, 2).unwrap();
        let c = Columns::from_data(&d);
        let cfg = PeelConfig {
            mode: PeelMode::Directed(vec![DirectedSide::KeepHigh, DirectedSide::Free]),
            ..config(PeelCriterion::Lrt)
        };
        let cands = candidate_peels(&d, &c, &vec![true; n], &cfg).unwrap();
        let sides: Vec<(usize, PeelSide)> =
            cands.iter().map(|c| (c.covariate, c.side)).collect();
        assert_eq!(
            sides,
            vec![
                (0, PeelSide::Lower),
                (1, PeelSide::Lower),
                (1, PeelSide::Upper)
            ]
        );
    }

    #[test]
    fn peel_that_would_leave_no_events_is_excluded() {
        // Only the observation with the smallest x has an event, so the
        // lower-side peel (which would remove it) is ineligible.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let events = [true, false, false, false, false];
        let times = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (d, c) = one_covariate(&times, &events, &x);
        let cfg = PeelConfig {
            alpha0: 0.2,
            ..config(PeelCriterion::Chs)
        };
        let cands = candidate_peels(&d, &c, &[true; 5], &cfg).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].side, PeelSide::Upper);
    }

    // ── step selection ───────────────────────────────────────────────

    #[test]
    fn peel_step_removes_the_low_risk_face() {
        // High x means early event: the box should keep high x, so the
        // winning peel removes the lower tail.
        let n = 20;
        let x: Vec<f64> = (1..=n).map(|v| v as f64).collect();
        let times: Vec<f64> = (1..=n).rev().map(|v| v as f64).collect();
        let (d, c) = one_covariate(&times, &vec![true; n], &x);
        let chosen = peel_step(
            &d,
            &c,
            None,
            &vec![true; n],
            0.0,
            &config(PeelCriterion::Lrt),
        )
        .unwrap()
        .unwrap();
        assert_eq!(chosen.candidate.side, PeelSide::Lower);
        assert!(chosen.rate > 0.0);
        assert_eq!(chosen.n_in, n - 2); // ceil(0.1 * 20) = 2 removed
    }

    #[test]
    fn exact_rate_ties_pick_the_lowest_covariate_and_lower_side() {
        // Covariate 2 duplicates covariate 1, so every rate ties exactly.
        let n = 10;
        let mut covs = Vec::new();
        for i in 0..n {
            let v = (i + 1) as f64;
            covs.push(v);
            covs.push(v);
        }
        let times: Vec<f64> = (1..=n).rev().map(|v| v as f64).collect();
        let d =
            SurvivalData::with_default_names(times, vec![true; n], covs, 2).unwrap();
        let c = Columns::from_data(&d);
        let chosen = peel_step(
            &d,
            &c,
            None,
            &vec![true; n],
            0.0,
            &config(PeelCriterion::Lrt),
        )
        .unwrap()
        .unwrap();
        assert_eq!(chosen.candidate.covariate, 0);
        assert_eq!(chosen.candidate.side, PeelSide::Lower);
    }

    // ── trajectories ─────────────────────────────────────────────────

    #[test]
    fn trajectory_supports_decrease_boxes_nest_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(30..120);
            let p = rng.gen_range(1..4);
            let (d, c) = random_data(&mut rng, n, p);
            let alpha0 = [0.05, 0.1, 0.2][rng.gen_range(0..3)];
            let beta0 = [0.05, 0.1, 0.2][rng.gen_range(0..3)];
            let cfg = PeelConfig {
                alpha0,
                beta0,
                ..config(PeelCriterion::Lrt)
            };
            let traj = peel_trajectory(&d, &c, None, &cfg).unwrap();
            assert!(traj.peel_count() <= cfg.trajectory_bound());
            let mut prev_support = f64::INFINITY;
            for (l, rec) in traj.steps.iter().enumerate() {
                assert_eq!(rec.step, l);
                assert!(rec.support < prev_support || l == 0);
                prev_support = rec.support;
                assert!(rec.support >= cfg.beta0 - 1e-12);
                if l > 0 {
                    let prev = &traj.steps[l - 1].bounds;
                    for j in 0..p {
                        assert!(rec.bounds.lower[j] >= prev.lower[j]);
                        assert!(rec.bounds.upper[j] <= prev.upper[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn chs_criterion_values_are_in_box_event_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (d, c) = random_data(&mut rng, 80, 2);
        let traj = peel_trajectory(&d, &c, None, &config(PeelCriterion::Chs)).unwrap();
        assert!(traj.peel_count() > 0);
        for rec in &traj.steps {
            let count = (0..d.n())
                .filter(|&i| rec.bounds.contains(&c, i) && d.events()[i])
                .count() as f64;
            assert_eq!(rec.criterion_value, count);
            assert_eq!(rec.criterion_value.fract(), 0.0);
        }
    }

    #[test]
    fn trajectory_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (d, c) = random_data(&mut rng, 60, 3);
        let cfg = config(PeelCriterion::Lrt);
        let a = peel_trajectory(&d, &c, None, &cfg).unwrap();
        let b = peel_trajectory(&d, &c, None, &cfg).unwrap();
        assert_eq!(a.steps.len(), b.steps.len());
        for (ra, rb) in a.steps.iter().zip(&b.steps) {
            assert_eq!(ra.bounds, rb.bounds);
            assert_eq!(ra.criterion_value, rb.criterion_value);
            assert_eq!(ra.peeled_covariate, rb.peeled_covariate);
        }
    }

    #[test]
    fn forced_single_face_trajectory_matches_hand_iteration() {
        // One covariate, keep-high: every step has exactly one candidate, so
        // the whole trajectory is forced and can be replayed by hand.
        let n = 30;
        let x: Vec<f64> = (1..=n).map(|v| v as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let times: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let (d, c) = one_covariate(&times, &vec![true; n], &x);
        let cfg = PeelConfig {
            alpha0: 0.1,
            beta0: 0.2,
            mode: PeelMode::Directed(vec![DirectedSide::KeepHigh]),
            ..config(PeelCriterion::Lrt)
        };
        let traj = peel_trajectory(&d, &c, None, &cfg).unwrap();

        // Hand replay: sorted values, remove ceil(0.1 k) smallest while the
        // remainder keeps at least 20% of 30 = 6 observations.
        let mut remaining: Vec<f64> = x.clone();
        let mut expect_bounds = Vec::new();
        loop {
            let k = remaining.len();
            let r = ((0.1 * k as f64) - 1e-9).ceil().max(1.0) as usize;
            if k - r < 6 {
                break;
            }
            remaining.drain(..r);
            expect_bounds.push(remaining[0]);
        }
        let got: Vec<f64> = traj.steps[1..]
            .iter()
            .map(|s| s.bounds.lower[0])
            .collect();
        assert_eq!(got, expect_bounds);
        let final_support = traj.steps.last().unwrap().support;
        assert!(final_support >= 0.2);
        // One more forced peel would cross the floor.
        let k = traj.steps.last().unwrap().n_in;
        let r = ((0.1 * k as f64) - 1e-9).ceil().max(1.0) as usize;
        assert!(((k - r) as f64) / 30.0 < 0.2);
    }

    #[test]
    fn eventless_active_set_gives_flagged_step_zero_trajectory() {
        let (d, c) = one_covariate(
            &[1.0, 2.0, 3.0],
            &[false, false, false],
            &[1.0, 2.0, 3.0],
        );
        let traj = peel_trajectory(&d, &c, None, &config(PeelCriterion::Lrt)).unwrap();
        assert!(traj.empty);
        assert_eq!(traj.steps.len(), 1);
        assert_eq!(traj.steps[0].support, 1.0);
    }

    #[test]
    fn end_points_fill_with_conventions_at_step_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (d, c) = random_data(&mut rng, 50, 2);
        let mut traj = peel_trajectory(&d, &c, None, &config(PeelCriterion::Lrt)).unwrap();
        traj.compute_end_points(&d, &c);
        let ep0 = traj.steps[0].end_points.unwrap();
        assert_eq!(ep0.lhr, Some(0.0));
        assert_eq!(ep0.lrt, Some(0.0));
        assert_eq!(ep0.cer, Some(1.0));
        assert!(ep0.meft.is_some());
        for rec in &traj.steps[1..] {
            let ep = rec.end_points.unwrap();
            // Later steps compare two nonempty groups.
            assert!(ep.lhr.is_some());
            assert!(ep.meft.is_some());
        }
    }

    // ── pasting ──────────────────────────────────────────────────────

    #[test]
    fn paste_on_maximal_box_is_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (d, c) = random_data(&mut rng, 30, 2);
        let full = BoxBounds::unbounded(2);
        let out = paste_step(
            &d,
            &c,
            None,
            &vec![true; 30],
            &full,
            0.0,
            &config(PeelCriterion::Lrt),
        )
        .unwrap();
        assert!(out.is_none());
    }

    #[test]
    fn paste_readmits_profitable_slab() {
        // With the event-count criterion, re-admitting any slab that holds
        // events increases the criterion, so a peeled trajectory pastes back.
        let n = 20;
        let x: Vec<f64> = (1..=n).map(|v| v as f64).collect();
        let times: Vec<f64> = (1..=n).rev().map(|v| v as f64).collect();
        let (d, c) = one_covariate(&times, &vec![true; n], &x);
        let cfg = PeelConfig {
            beta0: 0.3,
            pasting: true,
            mode: PeelMode::Directed(vec![DirectedSide::KeepHigh]),
            ..config(PeelCriterion::Chs)
        };
        let traj = peel_trajectory(&d, &c, None, &cfg).unwrap();
        assert!(!traj.paste_steps.is_empty());
        let last_peel = traj.steps.last().unwrap();
        let last_paste = traj.paste_steps.last().unwrap();
        assert!(last_paste.support > last_peel.support);
        assert!(last_paste.criterion_value > last_peel.criterion_value);
        // Final members match the final box.
        for &i in &traj.final_members {
            assert!(traj.final_box().contains(&c, i));
        }
    }

    #[test]
    fn unprofitable_paste_is_rejected() {
        // The excluded slab is all censored with late times; with the
        // log-rank criterion re-admitting it can only dilute the box.
        let x = [1.0, 2.0, 3.0, 4.0, 10.0, 11.0, 12.0, 13.0];
        let times = [50.0, 60.0, 55.0, 55.0, 1.0, 2.0, 3.0, 4.0];
        let events = [false, false, false, false, true, true, true, true];
        let (d, c) = one_covariate(&times, &events, &x);
        // Box holds the high-x early-event group.
        let bounds = BoxBounds {
            lower: vec![10.0],
            upper: vec![f64::INFINITY],
        };
        let in_box = [false, false, false, false, true, true, true, true];
        let z = log_rank_raw(&times, &events, &in_box).unwrap();
        let out = paste_step(
            &d,
            &c,
            None,
            &in_box,
            &bounds,
            z,
            &config(PeelCriterion::Lrt),
        )
        .unwrap();
        assert!(out.is_none());
    }

    // ── coverage ─────────────────────────────────────────────────────

    #[test]
    fn single_round_coverage_equals_plain_trajectory() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let (d, c) = random_data(&mut rng, 60, 2);
        let cfg = config(PeelCriterion::Lrt);
        let cov = coverage_loop(&d, &c, &cfg, 1).unwrap();
        let traj = peel_trajectory(&d, &c, None, &cfg).unwrap();
        assert_eq!(cov.trajectories.len(), 1);
        assert_eq!(cov.trajectories[0].final_box(), traj.final_box());
    }

    #[test]
    fn second_box_excludes_first_box_members() {
        // Two separated clusters on x with distinct risk profiles.
        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut x = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for i in 0..40 {
            if i < 20 {
                x.push(10.0 + (i as f64) / 20.0);
                times.push(0.1 + 0.05 * rng.gen::<f64>());
            } else {
                x.push((i - 20) as f64 / 20.0);
                times.push(5.0 + rng.gen::<f64>());
            }
            events.push(true);
        }
        let (d, c) = one_covariate(&times, &events, &x);
        let cfg = PeelConfig {
            beta0: 0.2,
            ..config(PeelCriterion::Lrt)
        };
        let cov = coverage_loop(&d, &c, &cfg, 2).unwrap();
        assert_eq!(cov.trajectories.len(), 2);
        let first: std::collections::HashSet<usize> =
            cov.trajectories[0].final_members.iter().cloned().collect();
        for i in &cov.trajectories[1].final_members {
            assert!(!first.contains(i), "box 2 re-used member {i}");
        }
        // The first box captures the early-event cluster.
        assert!(cov.trajectories[0]
            .final_members
            .iter()
            .all(|&i| x[i] >= 10.0));
    }

    #[test]
    fn coverage_stops_when_exhausted() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (d, c) = random_data(&mut rng, 30, 1);
        let cfg = PeelConfig {
            beta0: 0.4,
            ..config(PeelCriterion::Lrt)
        };
        let cov = coverage_loop(&d, &c, &cfg, 10).unwrap();
        assert!(cov.trajectories.len() < 10);
    }

    // ── traces ───────────────────────────────────────────────────────

    #[test]
    fn traces_track_usage_and_signed_importance() {
        let n = 30;
        let mut covs = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for i in 0..n {
            covs.push((i + 1) as f64);
            covs.push(rng.gen::<f64>()); // noise covariate
        }
        let times: Vec<f64> = (1..=n).rev().map(|v| v as f64).collect();
        let d = SurvivalData::with_default_names(times, vec![true; n], covs, 2).unwrap();
        let c = Columns::from_data(&d);
        let cfg = PeelConfig {
            beta0: 0.3,
            mode: PeelMode::Directed(vec![DirectedSide::KeepHigh, DirectedSide::KeepHigh]),
            ..config(PeelCriterion::Lrt)
        };
        let traj = peel_trajectory(&d, &c, None, &cfg).unwrap();
        let traces = trace_statistics(&traj);
        assert_eq!(traces.usage[0], None);
        assert_eq!(traces.usage.len(), traj.steps.len());
        // x1 drives the risk; its importance must be positive (lower-side
        // peels) and nondecreasing.
        let mut prev = 0.0;
        let mut x1_used = false;
        for (l, imp) in traces.importance.iter().enumerate() {
            assert!(imp[0] >= prev - 1e-12);
            prev = imp[0];
            if traces.usage[l] == Some(0) {
                x1_used = true;
            }
        }
        assert!(x1_used);
        // A covariate never peeled keeps zero importance.
        if traces.usage.iter().all(|u| *u != Some(1)) {
            assert!(traces.importance.iter().all(|imp| imp[1] == 0.0));
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = PeelConfig {
            alpha0: 0.0,
            ..PeelConfig::default()
        };
        assert!(cfg.validate(1).is_err());
        let cfg = PeelConfig {
            beta0: 1.0,
            ..PeelConfig::default()
        };
        assert!(cfg.validate(1).is_err());
        let cfg = PeelConfig {
            mode: PeelMode::Directed(vec![DirectedSide::Free]),
            ..PeelConfig::default()
        };
        assert!(cfg.validate(2).is_err());
        let cfg = PeelConfig {
            max_steps: Some(99),
            ..PeelConfig::default()
        };
        assert!(cfg.validate(1).is_err());
        assert_eq!(PeelConfig::default().trajectory_bound(), 29);
    }
}
