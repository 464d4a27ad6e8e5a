//! Survival estimators and two-group test statistics.
//!
//! Everything here is built from one primitive: the risk table, which lists
//! the distinct event times of a sample together with death and at-risk
//! counts (optionally split by a binary group such as in-box / out-of-box).
//! On top of it sit the Kaplan-Meier and Nelson-Aalen estimators, the signed
//! log-rank statistic, an in-box cumulative-hazard summary, a one-covariate
//! Cox model for the box log-hazard ratio, Harrell's concordance error, and
//! end points of a survival curve.
//!
//! Conventions used throughout:
//! * censored observations remain in the risk set at their own time
//!   (at risk at `t` means observed time `>= t`);
//! * the log-rank statistic is signed, positive when the in-box group has an
//!   excess of events (higher risk inside the box);
//! * a risk score orders predicted risk, higher score = predicted shorter
//!   survival.

use crate::data::SurvivalData;
use crate::error::{Error, Result};

// ── Risk tables ──────────────────────────────────────────────────────────

/// Per-group death/at-risk splits of a [`RiskTable`], group 1 being the
/// in-box (membership `true`) group.
#[derive(Debug, Clone)]
pub struct GroupSplit {
    /// Deaths in group 1 at each distinct event time.
    pub deaths_in: Vec<u32>,
    /// Group-1 members at risk at each distinct event time.
    pub at_risk_in: Vec<u32>,
}

/// Distinct event times of a sample with death and at-risk counts.
#[derive(Debug, Clone)]
pub struct RiskTable {
    /// Strictly increasing distinct event times.
    pub event_times: Vec<f64>,
    /// Deaths at each event time (all groups pooled).
    pub deaths: Vec<u32>,
    /// Observations at risk at each event time (observed time `>= t`).
    pub at_risk: Vec<u32>,
    /// Optional in-box/out-of-box split of the counts.
    pub group: Option<GroupSplit>,
    /// Number of observations the table was built from.
    pub n: usize,
    /// Total number of events.
    pub total_events: u32,
    /// Largest observed time (event or censored).
    pub max_time: f64,
}

impl RiskTable {
    /// Deaths outside the box at event time index `h` (grouped tables only).
    pub fn deaths_out(&self, h: usize) -> u32 {
        let g = self.group.as_ref().expect("ungrouped risk table");
        self.deaths[h] - g.deaths_in[h]
    }

    /// Out-of-box members at risk at event time index `h`.
    pub fn at_risk_out(&self, h: usize) -> u32 {
        let g = self.group.as_ref().expect("ungrouped risk table");
        self.at_risk[h] - g.at_risk_in[h]
    }
}

/// Builds the risk table of `data`, optionally split by a binary membership.
///
/// Errors with [`Error::NoEvents`] if every observation is censored, and
/// with [`Error::InvalidInput`] if `membership` has the wrong length.
pub fn build_risk_table(data: &SurvivalData, membership: Option<&[bool]>) -> Result<RiskTable> {
    build_risk_table_raw(data.times(), data.events(), membership)
}

/// Slice-based risk table construction; `build_risk_table` delegates here and
/// the peeling engine calls it directly on its active views.
pub(crate) fn build_risk_table_raw(
    times: &[f64],
    events: &[bool],
    membership: Option<&[bool]>,
) -> Result<RiskTable> {
    let n = times.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if let Some(m) = membership {
        if m.len() != n {
            return Err(Error::InvalidInput(format!(
                "membership has {} entries, expected {}",
                m.len(),
                n
            )));
        }
    }

    // Sort observation indices by time; ties keep input order (irrelevant to
    // the counts, which only depend on values).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());

    let mut event_times = Vec::new();
    let mut deaths = Vec::new();
    let mut at_risk = Vec::new();
    let mut deaths_in = Vec::new();
    let mut at_risk_in = Vec::new();

    // Walk distinct time values; everybody with an index at or past the
    // current walk position is at risk.
    let mut pos = 0;
    let mut in_risk: u32 = membership
        .map(|m| m.iter().filter(|&&b| b).count() as u32)
        .unwrap_or(0);
    let mut risk: u32 = n as u32;
    while pos < n {
        let t = times[order[pos]];
        let mut d: u32 = 0;
        let mut d_in: u32 = 0;
        let mut leaving: u32 = 0;
        let mut leaving_in: u32 = 0;
        let mut q = pos;
        while q < n && times[order[q]] == t {
            let i = order[q];
            if events[i] {
                d += 1;
                if membership.map(|m| m[i]).unwrap_or(false) {
                    d_in += 1;
                }
            }
            leaving += 1;
            if membership.map(|m| m[i]).unwrap_or(false) {
                leaving_in += 1;
            }
            q += 1;
        }
        if d > 0 {
            event_times.push(t);
            deaths.push(d);
            at_risk.push(risk);
            if membership.is_some() {
                deaths_in.push(d_in);
                at_risk_in.push(in_risk);
            }
        }
        risk -= leaving;
        in_risk -= leaving_in;
        pos = q;
    }

    if event_times.is_empty() {
        return Err(Error::NoEvents);
    }
    let total_events = deaths.iter().sum();
    Ok(RiskTable {
        event_times,
        deaths,
        at_risk,
        group: membership.map(|_| GroupSplit {
            deaths_in,
            at_risk_in,
        }),
        n,
        total_events,
        max_time: times[order[n - 1]],
    })
}

// ── Survival and hazard curves ───────────────────────────────────────────

/// A right-continuous step function `t -> value`, nonincreasing for survival
/// curves.  `values[k]` applies on `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepCurve {
    /// A curve flat at 1 up to `max_time` (sample with no events).
    pub fn flat(max_time: f64) -> StepCurve {
        StepCurve {
            times: vec![0.0, max_time],
            values: vec![1.0, 1.0],
        }
    }

    /// Value at `t` (right-continuous lookup; 1.0 before the first
    /// breakpoint of a survival curve).
    pub fn value_at(&self, t: f64) -> f64 {
        let mut v = self.values[0];
        for (bt, bv) in self.times.iter().zip(&self.values) {
            if *bt <= t {
                v = *bv;
            } else {
                break;
            }
        }
        if t < self.times[0] {
            1.0
        } else {
            v
        }
    }

    /// Final (time, value) point of the curve.
    pub fn last(&self) -> (f64, f64) {
        (
            *self.times.last().unwrap(),
            *self.values.last().unwrap(),
        )
    }
}

/// Kaplan-Meier product-limit estimate from a risk table.
///
/// The curve starts at `(0, 1)`, drops at each event time, and carries its
/// final value out to the largest observed time so that the end points of
/// the follow-up appear on the curve even when the last observation is
/// censored.
pub fn kaplan_meier(table: &RiskTable) -> StepCurve {
    let mut times = Vec::with_capacity(table.event_times.len() + 2);
    let mut values = Vec::with_capacity(table.event_times.len() + 2);
    if table.event_times[0] > 0.0 {
        times.push(0.0);
        values.push(1.0);
    }
    let mut s = 1.0;
    for h in 0..table.event_times.len() {
        s *= 1.0 - table.deaths[h] as f64 / table.at_risk[h] as f64;
        times.push(table.event_times[h]);
        values.push(s);
    }
    if table.max_time > *times.last().unwrap() {
        times.push(table.max_time);
        values.push(s);
    }
    StepCurve { times, values }
}

/// Nelson-Aalen cumulative hazard estimate from a risk table: a nondecreasing
/// step function starting at `(0, 0)`.
pub fn nelson_aalen(table: &RiskTable) -> StepCurve {
    let mut times = Vec::with_capacity(table.event_times.len() + 1);
    let mut values = Vec::with_capacity(table.event_times.len() + 1);
    if table.event_times[0] > 0.0 {
        times.push(0.0);
        values.push(0.0);
    }
    let mut h_cum = 0.0;
    for h in 0..table.event_times.len() {
        h_cum += table.deaths[h] as f64 / table.at_risk[h] as f64;
        times.push(table.event_times[h]);
        values.push(h_cum);
    }
    if table.max_time > *times.last().unwrap() {
        times.push(table.max_time);
        values.push(h_cum);
    }
    StepCurve { times, values }
}

// ── Log-rank statistic ───────────────────────────────────────────────────

/// Signed standardized log-rank statistic comparing the in-box group
/// (`membership[i] == true`) against the rest of the sample.
///
/// Positive values mean an excess of observed events inside the box.  At
/// each distinct event time `h` the observed-minus-expected in-box deaths
/// accumulate in the numerator and the hypergeometric variance in the
/// denominator; times where only one observation is at risk contribute no
/// variance.
pub fn log_rank_statistic(data: &SurvivalData, membership: &[bool]) -> Result<f64> {
    log_rank_raw(data.times(), data.events(), membership)
}

pub(crate) fn log_rank_raw(times: &[f64], events: &[bool], membership: &[bool]) -> Result<f64> {
    let n_in = membership.iter().filter(|&&b| b).count();
    if n_in == 0 || n_in == membership.len() {
        return Err(Error::InvalidInput(
            "log-rank needs both a nonempty in-box and out-of-box group".into(),
        ));
    }
    let table = build_risk_table_raw(times, events, Some(membership))?;
    let split = table.group.as_ref().unwrap();
    let mut num = 0.0;
    let mut var = 0.0;
    for h in 0..table.event_times.len() {
        let d = table.deaths[h] as f64;
        let n = table.at_risk[h] as f64;
        let d_in = split.deaths_in[h] as f64;
        let n_in = split.at_risk_in[h] as f64;
        num += d_in - n_in * d / n;
        if table.at_risk[h] > 1 {
            var += n_in * (d / n) * (1.0 - n_in / n) * ((n - d) / (n - 1.0));
        }
    }
    if var <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok(num / var.sqrt())
}

// ── Cumulative-hazard summary ────────────────────────────────────────────

/// Sum over in-box observations of the in-box Nelson-Aalen cumulative hazard
/// evaluated at each observation's own time.
///
/// Grouping the double summation by event time makes each term
/// `deaths_h * #{in-box obs with time >= t_h} / at_risk_h`; because the
/// at-risk count *is* that cardinality, every term is an exact integer and
/// the total equals the in-box event count exactly.  The count of
/// observations at or beyond each event time is recomputed here by an
/// independent scan rather than read back from the risk table, so the
/// identity is a property the data must actually satisfy, not a tautology.
pub fn chs_statistic(data: &SurvivalData, membership: &[bool]) -> Result<f64> {
    if membership.len() != data.n() {
        return Err(Error::InvalidInput(format!(
            "membership has {} entries, expected {}",
            membership.len(),
            data.n()
        )));
    }
    let times: Vec<f64> = data
        .times()
        .iter()
        .zip(membership)
        .filter(|(_, &m)| m)
        .map(|(&t, _)| t)
        .collect();
    let events: Vec<bool> = data
        .events()
        .iter()
        .zip(membership)
        .filter(|(_, &m)| m)
        .map(|(&e, _)| e)
        .collect();
    Ok(chs_raw(&times, &events))
}

pub(crate) fn chs_raw(times: &[f64], events: &[bool]) -> f64 {
    if times.is_empty() || !events.iter().any(|&e| e) {
        return 0.0;
    }
    let table = build_risk_table_raw(times, events, None).expect("events present");
    let mut sorted: Vec<f64> = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut exact: u64 = 0;
    let mut rest = 0.0;
    for h in 0..table.event_times.len() {
        let t = table.event_times[h];
        // Independent count of observations with time >= t.
        let below = sorted.partition_point(|&y| y < t);
        let count = (sorted.len() - below) as u64;
        let num = table.deaths[h] as u64 * count;
        let den = table.at_risk[h] as u64;
        if num % den == 0 {
            exact += num / den;
        } else {
            rest += num as f64 / den as f64;
        }
    }
    exact as f64 + rest
}

// ── Cox log-hazard ratio ─────────────────────────────────────────────────

/// Largest absolute log-hazard ratio reported; estimates beyond it are
/// clamped and flagged as separated (monotone likelihood).
pub const LHR_CLAMP: f64 = 10.0;

/// Result of the one-covariate Cox fit on a box membership indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxLhr {
    /// Estimated log-hazard ratio of in-box versus out-of-box.
    pub eta: f64,
    /// True when the likelihood is monotone (a group without events or
    /// complete separation of event histories) and `eta` is a clamp.
    pub separated: bool,
}

/// Fits a Cox proportional-hazards model with the in-box indicator as its
/// single covariate and returns the log-hazard ratio.
///
/// Ties are handled with the Breslow approximation.  Newton iterations start
/// from zero with step-halving, stop when the absolute score drops below
/// `1e-8`, and give up after 50 iterations.  If one group carries no events
/// the likelihood is monotone and the clamp `+/-10` is returned with the
/// `separated` flag set.
pub fn cox_lhr(data: &SurvivalData, membership: &[bool]) -> Result<CoxLhr> {
    cox_lhr_raw(data.times(), data.events(), membership)
}

pub(crate) fn cox_lhr_raw(times: &[f64], events: &[bool], membership: &[bool]) -> Result<CoxLhr> {
    let n_in = membership.iter().filter(|&&b| b).count();
    if n_in == 0 || n_in == membership.len() {
        return Err(Error::InvalidInput(
            "log-hazard ratio needs both a nonempty in-box and out-of-box group".into(),
        ));
    }
    let table = build_risk_table_raw(times, events, Some(membership))?;
    let split = table.group.as_ref().unwrap();
    let events_in: u32 = split.deaths_in.iter().sum();
    if events_in == 0 {
        return Ok(CoxLhr {
            eta: -LHR_CLAMP,
            separated: true,
        });
    }
    if events_in == table.total_events {
        return Ok(CoxLhr {
            eta: LHR_CLAMP,
            separated: true,
        });
    }

    // Breslow partial log-likelihood restricted to the indicator covariate.
    let loglik = |eta: f64| -> f64 {
        let e = eta.exp();
        let mut ll = 0.0;
        for h in 0..table.event_times.len() {
            let d = table.deaths[h] as f64;
            let d_in = split.deaths_in[h] as f64;
            let n_in = split.at_risk_in[h] as f64;
            let n_out = table.at_risk[h] as f64 - n_in;
            ll += eta * d_in - d * (n_in * e + n_out).ln();
        }
        ll
    };
    let score_info = |eta: f64| -> (f64, f64) {
        let e = eta.exp();
        let mut u = 0.0;
        let mut info = 0.0;
        for h in 0..table.event_times.len() {
            let d = table.deaths[h] as f64;
            let d_in = split.deaths_in[h] as f64;
            let n_in = split.at_risk_in[h] as f64;
            let n_out = table.at_risk[h] as f64 - n_in;
            let denom = n_in * e + n_out;
            if denom <= 0.0 {
                continue;
            }
            let w = n_in * e / denom;
            u += d_in - d * w;
            info += d * w * (1.0 - w);
        }
        (u, info)
    };

    let mut eta: f64 = 0.0;
    let mut ll = loglik(eta);
    for _ in 0..50 {
        let (u, info) = score_info(eta);
        if u.abs() < 1e-8 {
            return Ok(CoxLhr {
                eta,
                separated: false,
            });
        }
        if info <= 0.0 {
            // Flat information with nonzero score: monotone likelihood.
            return Ok(CoxLhr {
                eta: LHR_CLAMP.copysign(u),
                separated: true,
            });
        }
        let mut step = u / info;
        // Step-halving: never accept a move that lowers the likelihood.
        let mut next = eta + step;
        let mut next_ll = loglik(next);
        let mut halvings = 0;
        while next_ll < ll && halvings < 30 {
            step *= 0.5;
            next = eta + step;
            next_ll = loglik(next);
            halvings += 1;
        }
        eta = next;
        ll = next_ll;
        if eta.abs() >= LHR_CLAMP {
            return Ok(CoxLhr {
                eta: LHR_CLAMP.copysign(eta),
                separated: true,
            });
        }
    }
    Ok(CoxLhr {
        eta,
        separated: false,
    })
}

// ── Concordance error ────────────────────────────────────────────────────

/// Harrell concordance error rate `1 - C` of a risk score against observed
/// survival.
///
/// A pair is permissible when its ordering is identifiable: the earlier
/// observed time carries an event, or the times tie with exactly one event
/// (the event is taken to precede the censoring).  A permissible pair is
/// concordant when the demonstrably shorter survivor has the higher risk
/// score; tied scores count one half.  Pairs tied in time with two events
/// (order unknowable) or with no event are skipped.
pub fn concordance_error_rate(data: &SurvivalData, risk_scores: &[f64]) -> Result<f64> {
    concordance_error_raw(data.times(), data.events(), risk_scores)
}

pub(crate) fn concordance_error_raw(
    times: &[f64],
    events: &[bool],
    risk_scores: &[f64],
) -> Result<f64> {
    let n = times.len();
    if risk_scores.len() != n {
        return Err(Error::InvalidInput(format!(
            "risk scores have {} entries, expected {}",
            risk_scores.len(),
            n
        )));
    }
    let mut permissible: u64 = 0;
    let mut credit = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            // Order the pair so `a` is the demonstrably shorter survivor.
            let (a, b) = if times[i] < times[j] {
                (i, j)
            } else if times[j] < times[i] {
                (j, i)
            } else {
                // Tied times: identifiable only when exactly one has the
                // event, which then precedes the censoring.
                match (events[i], events[j]) {
                    (true, false) => (i, j),
                    (false, true) => (j, i),
                    _ => continue,
                }
            };
            if !events[a] {
                continue;
            }
            permissible += 1;
            if risk_scores[a] > risk_scores[b] {
                credit += 1.0;
            } else if risk_scores[a] == risk_scores[b] {
                credit += 0.5;
            }
        }
    }
    if permissible == 0 {
        return Err(Error::NoPermissiblePairs);
    }
    Ok(1.0 - credit / permissible as f64)
}

// ── Curve end points ─────────────────────────────────────────────────────

/// End point of a survival curve: the time/probability pair where follow-up
/// runs out, or where a requested horizon is met.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmEndPoints {
    /// Event-free time: horizon time if one was met, else the maximal
    /// (last observed) time on the curve.
    pub time: f64,
    /// Event-free probability: curve value at `time`.
    pub prob: f64,
    /// True when `time`/`prob` are the maximal end points (follow-up limit)
    /// rather than a met horizon.
    pub is_limit: bool,
}

/// Reads the end points of a survival curve.
///
/// Without horizons this returns the maximal event-free time (last
/// breakpoint, even when the final observation is censored) and the curve
/// value there, flagged as the follow-up limit.  A `horizon_time` within
/// follow-up yields the exact event-free probability at that time; a
/// `horizon_prob` the curve reaches yields the exact event-free time of that
/// probability.  Unreachable horizons fall back to the limit end points.
pub fn km_end_points(
    curve: &StepCurve,
    horizon_time: Option<f64>,
    horizon_prob: Option<f64>,
) -> KmEndPoints {
    let (t_max, p_last) = curve.last();
    if let Some(ht) = horizon_time {
        if ht <= t_max {
            return KmEndPoints {
                time: ht,
                prob: curve.value_at(ht),
                is_limit: false,
            };
        }
    }
    if let Some(hp) = horizon_prob {
        for (t, v) in curve.times.iter().zip(&curve.values) {
            if *v <= hp {
                return KmEndPoints {
                    time: *t,
                    prob: *v,
                    is_limit: false,
                };
            }
        }
    }
    KmEndPoints {
        time: t_max,
        prob: p_last,
        is_limit: true,
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

    fn data(times: &[f64], events: &[bool], p: usize) -> SurvivalData {
        let n = times.len();
        SurvivalData::with_default_names(
            times.to_vec(),
            events.to_vec(),
            vec![0.0; n * p],
            p,
        )
        .unwrap()
    }

    // Random right-censored sample with occasional tied times.
    fn random_sample(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
        let times: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    // Lattice times to force ties.
                    rng.gen_range(1..=5) as f64
                } else {
                    -rng.gen::<f64>().max(1e-12).ln()
                }
            })
            .collect();
        let events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        (times, events)
    }

    // ── risk table ───────────────────────────────────────────────────

    #[test]
    fn risk_table_distinct_times_with_censoring() {
        // times [1, 2, 2, 3], third observation censored.
        let d = data(&[1.0, 2.0, 2.0, 3.0], &[true, true, false, true], 1);
        let t = build_risk_table(&d, None).unwrap();
        assert_eq!(t.event_times, vec![1.0, 2.0, 3.0]);
        assert_eq!(t.deaths, vec![1, 1, 1]);
        assert_eq!(t.at_risk, vec![4, 3, 1]);
        assert_eq!(t.total_events, 3);
        assert_eq!(t.max_time, 3.0);
    }

    #[test]
    fn risk_table_censored_share_event_time() {
        // A censored observation at an event time stays at risk there.
        let d = data(&[1.0, 1.0, 2.0], &[true, false, true], 1);
        let t = build_risk_table(&d, None).unwrap();
        assert_eq!(t.event_times, vec![1.0, 2.0]);
        assert_eq!(t.at_risk, vec![3, 1]);
        assert_eq!(t.deaths, vec![1, 1]);
    }

    #[test]
    fn risk_table_grouped_counts() {
        // group = [in, in, out, out], times [1,2,3,4], all events.
        let d = data(&[1.0, 2.0, 3.0, 4.0], &[true; 4], 1);
        let m = [true, true, false, false];
        let t = build_risk_table(&d, Some(&m)).unwrap();
        let g = t.group.as_ref().unwrap();
        assert_eq!(g.at_risk_in, vec![2, 1, 0, 0]);
        assert_eq!(g.deaths_in, vec![1, 1, 0, 0]);
        assert_eq!(t.deaths_out(0), 0);
        assert_eq!(t.at_risk_out(2), 2);
        // Pooled counts are the group sums.
        for h in 0..t.event_times.len() {
            assert_eq!(t.deaths[h], g.deaths_in[h] + t.deaths_out(h));
            assert_eq!(t.at_risk[h], g.at_risk_in[h] + t.at_risk_out(h));
        }
    }

    #[test]
    fn risk_table_all_censored_errors() {
        let d = data(&[1.0, 2.0], &[false, false], 1);
        assert!(matches!(
            build_risk_table(&d, None),
            Err(Error::NoEvents)
        ));
    }

    // ── Kaplan-Meier ─────────────────────────────────────────────────

    #[test]
    fn km_single_event_no_censoring() {
        let d = data(&[2.0], &[true], 1);
        let t = build_risk_table(&d, None).unwrap();
        let km = kaplan_meier(&t);
        assert_eq!(km.times, vec![0.0, 2.0]);
        assert_eq!(km.values, vec![1.0, 0.0]);
    }

    #[test]
    fn km_known_product() {
        // times [1,2,3,4], events [1,1,0,1]:
        // S(1)=3/4, S(2)=1/2, S(4)=0; censoring at 3 shrinks the risk set.
        let d = data(&[1.0, 2.0, 3.0, 4.0], &[true, true, false, true], 1);
        let km = kaplan_meier(&build_risk_table(&d, None).unwrap());
        assert_eq!(km.times, vec![0.0, 1.0, 2.0, 4.0]);
        assert_abs_diff_eq!(km.values[1], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(km.values[2], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(km.values[3], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn km_trailing_censoring_extends_curve() {
        // Last observation censored after the last event: the curve carries
        // its final value out to that time.
        let d = data(&[1.0, 2.0, 5.0], &[true, true, false], 1);
        let km = kaplan_meier(&build_risk_table(&d, None).unwrap());
        let (t_last, p_last) = km.last();
        assert_eq!(t_last, 5.0);
        assert_abs_diff_eq!(p_last, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn km_matches_empirical_survival_without_censoring() {
        // With no censoring the product-limit estimate is the empirical
        // survival function.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(2..40);
            let times: Vec<f64> = (0..n).map(|_| rng.gen_range(1..10) as f64).collect();
            let events = vec![true; n];
            let d = data(&times, &events, 1);
            let km = kaplan_meier(&build_risk_table(&d, None).unwrap());
            for (t, v) in km.times.iter().zip(&km.values) {
                let frac = times.iter().filter(|&&y| y > *t).count() as f64 / n as f64;
                assert_abs_diff_eq!(*v, frac, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn km_monotone_nonincreasing_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (times, mut events) = random_sample(&mut rng, 30);
            events[0] = true;
            let d = data(&times, &events, 1);
            let km = kaplan_meier(&build_risk_table(&d, None).unwrap());
            let mut prev = 1.0;
            for v in &km.values {
                assert!(*v <= prev + 1e-15);
                assert!((0.0..=1.0).contains(v));
                prev = *v;
            }
            for w in km.times.windows(2) {
                assert!(w[0] < w[1]);
            }
        }
    }

    // ── Nelson-Aalen ─────────────────────────────────────────────────

    #[test]
    fn nelson_aalen_known_sums() {
        let d = data(&[1.0, 2.0, 3.0], &[true, true, true], 1);
        let na = nelson_aalen(&build_risk_table(&d, None).unwrap());
        assert_eq!(na.times, vec![0.0, 1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(na.values[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(na.values[2], 1.0 / 3.0 + 1.0 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(na.values[3], 1.0 / 3.0 + 1.0 / 2.0 + 1.0, epsilon = 1e-15);
    }

    #[test]
    fn exp_neg_hazard_dominates_km() {
        // exp(-H(t)) >= S(t) pointwise.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let (times, mut events) = random_sample(&mut rng, 25);
            events[0] = true;
            let d = data(&times, &events, 1);
            let table = build_risk_table(&d, None).unwrap();
            let km = kaplan_meier(&table);
            let na = nelson_aalen(&table);
            for (t, s) in km.times.iter().zip(&km.values) {
                let h = na.value_at(*t);
                // value_at returns 1.0 before the first breakpoint; NA curves
                // start at 0, so look it up only at or past 0.
                let h = if *t < na.times[0] { 0.0 } else { h };
                assert!((-h).exp() >= s - 1e-12);
            }
        }
    }

    // ── log-rank ─────────────────────────────────────────────────────

    #[test]
    fn log_rank_hand_case() {
        // In-box {1, 2} all events, out-box {3, 4} all events:
        // numerator 7/6, variance 17/36.
        let d = data(&[1.0, 2.0, 3.0, 4.0], &[true; 4], 1);
        let m = [true, true, false, false];
        let x = log_rank_statistic(&d, &m).unwrap();
        let expect = (7.0 / 6.0) / (17.0f64 / 36.0).sqrt();
        assert_abs_diff_eq!(x, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(x, 1.6977, epsilon = 5e-5);
    }

    #[test]
    fn log_rank_sign_follows_risk_direction() {
        // Events early inside the box -> positive statistic.
        let d = data(
            &[1.0, 2.0, 3.0, 10.0, 11.0, 12.0],
            &[true, true, true, true, true, true],
            1,
        );
        let in_first = [true, true, true, false, false, false];
        let x = log_rank_statistic(&d, &in_first).unwrap();
        assert!(x > 0.0);
        // Swapping the labels flips the sign exactly.
        let out_first: Vec<bool> = in_first.iter().map(|b| !b).collect();
        let y = log_rank_statistic(&d, &out_first).unwrap();
        assert_abs_diff_eq!(x, -y, epsilon = 1e-12);
    }

    #[test]
    fn log_rank_antisymmetry_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.gen_range(4..40);
            let (times, mut events) = random_sample(&mut rng, n);
            events[0] = true;
            events[1] = true;
            let mut m: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            m[0] = true;
            m[1] = false;
            let d = data(&times, &events, 1);
            let flipped: Vec<bool> = m.iter().map(|b| !b).collect();
            match (
                log_rank_statistic(&d, &m),
                log_rank_statistic(&d, &flipped),
            ) {
                (Ok(a), Ok(b)) => assert_abs_diff_eq!(a, -b, epsilon = 1e-10),
                (Err(_), Err(_)) => {}
                (a, b) => panic!("asymmetric outcome: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn log_rank_identical_groups_zero() {
        // Two copies of the same event history in each group.
        let d = data(&[1.0, 1.0, 2.0, 2.0], &[true, true, true, true], 1);
        let m = [true, false, true, false];
        let x = log_rank_statistic(&d, &m).unwrap();
        assert_abs_diff_eq!(x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn log_rank_degenerate_and_empty_group_errors() {
        // Single event, only one subject at risk -> zero variance.
        let d = data(&[1.0, 2.0], &[false, true], 1);
        assert!(matches!(
            log_rank_statistic(&d, &[true, false]),
            Err(Error::DegenerateVariance)
        ));
        let d = data(&[1.0, 2.0], &[true, true], 1);
        assert!(matches!(
            log_rank_statistic(&d, &[true, true]),
            Err(Error::InvalidInput(_))
        ));
    }

    // Independent oracle: per-event-time 2x2 hypergeometric tables built by
    // filtering, not by the production single-pass accumulation.
    pub(crate) fn log_rank_oracle(times: &[f64], events: &[bool], membership: &[bool]) -> Option<f64> {
        let mut event_times: Vec<f64> = times
            .iter()
            .zip(events)
            .filter(|(_, &e)| e)
            .map(|(&t, _)| t)
            .collect();
        event_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        event_times.dedup();
        let mut num = 0.0;
        let mut var = 0.0;
        for &t in &event_times {
            let at_risk: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= t).collect();
            let n = at_risk.len() as f64;
            let d = at_risk
                .iter()
                .filter(|&&i| events[i] && times[i] == t)
                .count() as f64;
            let n1 = at_risk.iter().filter(|&&i| membership[i]).count() as f64;
            let d1 = at_risk
                .iter()
                .filter(|&&i| membership[i] && events[i] && times[i] == t)
                .count() as f64;
            num += d1 - n1 * d / n;
            if n > 1.0 {
                var += (d * (n - d) / (n - 1.0)) * (n1 / n) * (1.0 - n1 / n);
            }
        }
        if var <= 0.0 {
            None
        } else {
            Some(num / var.sqrt())
        }
    }

    #[test]
    fn log_rank_matches_hypergeometric_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut checked = 0;
        for _ in 0..300 {
            let n = rng.gen_range(4..=50);
            let (times, events) = random_sample(&mut rng, n);
            let m: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            if m.iter().all(|&b| b) || !m.iter().any(|&b| b) {
                continue;
            }
            let d = data(&times, &events, 1);
            match (log_rank_statistic(&d, &m), log_rank_oracle(&times, &events, &m)) {
                (Ok(a), Some(b)) => {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-10);
                    checked += 1;
                }
                (Err(_), None) => {}
                (Ok(a), None) => panic!("statistic {a} where oracle is degenerate"),
                (Err(e), Some(b)) => {
                    if !matches!(e, Error::NoEvents) {
                        panic!("error {e} where oracle gives {b}");
                    }
                }
            }
        }
        assert!(checked > 150, "only {checked} comparisons ran");
    }

    // ── cumulative-hazard summary ────────────────────────────────────

    #[test]
    fn chs_equals_event_count_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let n = rng.gen_range(1..60);
            let (times, events) = random_sample(&mut rng, n);
            let m: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
            let d = data(&times, &events, 1);
            let stat = chs_statistic(&d, &m).unwrap();
            let count = (0..n).filter(|&i| m[i] && events[i]).count() as f64;
            assert_eq!(stat, count, "summation must equal the event count exactly");
        }
    }

    #[test]
    fn chs_naive_double_sum_agrees() {
        // Naive per-observation evaluation of the in-box Nelson-Aalen curve.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let n = rng.gen_range(2..40);
            let (times, events) = random_sample(&mut rng, n);
            let m: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
            let in_times: Vec<f64> = (0..n).filter(|&i| m[i]).map(|i| times[i]).collect();
            let in_events: Vec<bool> = (0..n).filter(|&i| m[i]).map(|i| events[i]).collect();
            let naive = if in_times.is_empty() || !in_events.iter().any(|&e| e) {
                0.0
            } else {
                let d = data(&in_times, &in_events, 1);
                let na = nelson_aalen(&build_risk_table(&d, None).unwrap());
                in_times.iter().map(|&t| na.value_at(t)).sum()
            };
            let d = data(&times, &events, 1);
            let stat = chs_statistic(&d, &m).unwrap();
            assert_abs_diff_eq!(stat, naive, epsilon = 1e-9);
        }
    }

    #[test]
    fn chs_all_censored_in_box_is_zero() {
        let d = data(&[1.0, 2.0, 3.0], &[false, false, true], 1);
        let m = [true, true, false];
        assert_eq!(chs_statistic(&d, &m).unwrap(), 0.0);
    }

    // ── Cox log-hazard ratio ─────────────────────────────────────────

    #[test]
    fn cox_identical_histories_zero() {
        let d = data(&[1.0, 1.0, 2.0, 2.0], &[true; 4], 1);
        let fit = cox_lhr(&d, &[true, false, true, false]).unwrap();
        assert_abs_diff_eq!(fit.eta, 0.0, epsilon = 1e-6);
        assert!(!fit.separated);
    }

    #[test]
    fn cox_separation_clamps() {
        // All in-box events strictly before any out-box event while the
        // out-box group is still at risk: monotone likelihood.
        let d = data(&[1.0, 2.0, 10.0, 20.0], &[true; 4], 1);
        let fit = cox_lhr(&d, &[true, true, false, false]).unwrap();
        assert_eq!(fit.eta, LHR_CLAMP);
        assert!(fit.separated);
        // And the mirror image.
        let fit = cox_lhr(&d, &[false, false, true, true]).unwrap();
        assert_eq!(fit.eta, -LHR_CLAMP);
        assert!(fit.separated);
    }

    #[test]
    fn cox_eventless_group_flagged() {
        let d = data(&[1.0, 2.0, 3.0, 4.0], &[false, false, true, true], 1);
        let fit = cox_lhr(&d, &[true, true, false, false]).unwrap();
        assert_eq!(fit.eta, -LHR_CLAMP);
        assert!(fit.separated);
    }

    // Grid-search oracle over the Breslow partial likelihood.
    pub(crate) fn cox_grid_oracle(times: &[f64], events: &[bool], membership: &[bool]) -> f64 {
        let table = build_risk_table_raw(times, events, Some(membership)).unwrap();
        let split = table.group.as_ref().unwrap();
        let ll = |eta: f64| -> f64 {
            let e = eta.exp();
            let mut v = 0.0;
            for h in 0..table.event_times.len() {
                let d = table.deaths[h] as f64;
                let d_in = split.deaths_in[h] as f64;
                let n_in = split.at_risk_in[h] as f64;
                let n_out = table.at_risk[h] as f64 - n_in;
                v += eta * d_in - d * (n_in * e + n_out).ln();
            }
            v
        };
        let mut best = -LHR_CLAMP;
        let mut best_ll = f64::NEG_INFINITY;
        let steps = (2.0 * LHR_CLAMP / 1e-3) as usize;
        for k in 0..=steps {
            let eta = -LHR_CLAMP + k as f64 * 1e-3;
            let v = ll(eta);
            if v > best_ll {
                best_ll = v;
                best = eta;
            }
        }
        best
    }

    #[test]
    fn cox_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut checked = 0;
        while checked < 40 {
            let n = rng.gen_range(6..=50);
            let (times, events) = random_sample(&mut rng, n);
            let m: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let n_in = m.iter().filter(|&&b| b).count();
            if n_in == 0 || n_in == n || !events.iter().any(|&e| e) {
                continue;
            }
            let d = data(&times, &events, 1);
            let fit = cox_lhr(&d, &m).unwrap();
            if fit.separated {
                continue;
            }
            let grid = cox_grid_oracle(&times, &events, &m);
            assert_abs_diff_eq!(fit.eta, grid, epsilon = 2e-3);
            checked += 1;
        }
    }

    #[test]
    fn cox_estimate_is_local_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..30 {
            let n = rng.gen_range(8..=40);
            let (times, events) = random_sample(&mut rng, n);
            let m: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
            if !events.iter().any(|&e| e) {
                continue;
            }
            let d = data(&times, &events, 1);
            let fit = match cox_lhr(&d, &m) {
                Ok(f) if !f.separated => f,
                _ => continue,
            };
            let table = build_risk_table_raw(&times, &events, Some(&m)).unwrap();
            let split = table.group.as_ref().unwrap();
            let ll = |eta: f64| -> f64 {
                let e = eta.exp();
                let mut v = 0.0;
                for h in 0..table.event_times.len() {
                    let d_h = table.deaths[h] as f64;
                    let d_in = split.deaths_in[h] as f64;
                    let n_in = split.at_risk_in[h] as f64;
                    let n_out = table.at_risk[h] as f64 - n_in;
                    v += eta * d_in - d_h * (n_in * e + n_out).ln();
                }
                v
            };
            assert!(ll(fit.eta) >= ll(fit.eta + 1e-3) - 1e-12);
            assert!(ll(fit.eta) >= ll(fit.eta - 1e-3) - 1e-12);
        }
    }

    // ── concordance ──────────────────────────────────────────────────

    #[test]
    fn concordance_perfect_ordering() {
        // Scores perfectly anti-ordered with uncensored distinct times.
        let d = data(&[1.0, 2.0, 3.0, 4.0], &[true; 4], 1);
        let scores = [4.0, 3.0, 2.0, 1.0];
        assert_abs_diff_eq!(
            concordance_error_rate(&d, &scores).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn concordance_constant_score_half() {
        let d = data(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, true], 1);
        assert_abs_diff_eq!(
            concordance_error_rate(&d, &[5.0; 4]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn concordance_reversal_complements() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let n = rng.gen_range(4..30);
            let (times, mut events) = random_sample(&mut rng, n);
            events[0] = true;
            let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let d = data(&times, &events, 1);
            let a = concordance_error_rate(&d, &scores).unwrap();
            let b = concordance_error_rate(&d, &neg).unwrap();
            assert_abs_diff_eq!(a, 1.0 - b, epsilon = 1e-12);
        }
    }

    #[test]
    fn concordance_random_scores_near_half() {
        // Independent scores and times: CER concentrates near 0.5.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 200;
        let times: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let d = data(&times, &events, 1);
        let cer = concordance_error_rate(&d, &scores).unwrap();
        assert!((cer - 0.5).abs() < 0.06, "cer = {cer}");

        // Independent pair-enumeration oracle over explicitly listed pairs.
        let mut permissible = 0u64;
        let mut credit = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let identifiable = (times[i] < times[j] && events[i])
                    || (times[i] == times[j] && events[i] && !events[j]);
                if !identifiable {
                    continue;
                }
                permissible += 1;
                if scores[i] > scores[j] {
                    credit += 1.0;
                } else if scores[i] == scores[j] {
                    credit += 0.5;
                }
            }
        }
        let oracle = 1.0 - credit / permissible as f64;
        assert_abs_diff_eq!(cer, oracle, epsilon = 1e-12);
    }

    #[test]
    fn concordance_no_permissible_pairs_errors() {
        let d = data(&[1.0, 2.0], &[false, false], 1);
        assert!(matches!(
            concordance_error_rate(&d, &[1.0, 2.0]),
            Err(Error::NoPermissiblePairs)
        ));
    }

    // ── end points ───────────────────────────────────────────────────

    #[test]
    fn end_points_follow_up_limit() {
        let curve = StepCurve {
            times: vec![0.0, 1.0, 3.0],
            values: vec![1.0, 0.6, 0.37],
        };
        let ep = km_end_points(&curve, None, None);
        assert_eq!(ep.time, 3.0);
        assert_eq!(ep.prob, 0.37);
        assert!(ep.is_limit);
    }

    #[test]
    fn end_points_flat_curve() {
        let curve = StepCurve::flat(4.0);
        let ep = km_end_points(&curve, None, None);
        assert_eq!(ep.time, 4.0);
        assert_eq!(ep.prob, 1.0);
        assert!(ep.is_limit);
    }

    #[test]
    fn end_points_probability_horizon() {
        let curve = StepCurve {
            times: vec![0.0, 2.0],
            values: vec![1.0, 0.4],
        };
        let ep = km_end_points(&curve, None, Some(0.5));
        assert_eq!(ep.time, 2.0);
        assert_eq!(ep.prob, 0.4);
        assert!(!ep.is_limit);
    }

    #[test]
    fn end_points_time_horizon_and_fallback() {
        let curve = StepCurve {
            times: vec![0.0, 1.0, 3.0],
            values: vec![1.0, 0.6, 0.37],
        };
        let ep = km_end_points(&curve, Some(2.0), None);
        assert_eq!(ep.time, 2.0);
        assert_eq!(ep.prob, 0.6);
        assert!(!ep.is_limit);
        // Horizon beyond follow-up falls back to the limit end points.
        let ep = km_end_points(&curve, Some(99.0), None);
        assert!(ep.is_limit);
        assert_eq!(ep.time, 3.0);
        // Unreachable probability horizon likewise.
        let ep = km_end_points(&curve, None, Some(0.1));
        assert!(ep.is_limit);
        assert_eq!(ep.prob, 0.37);
    }
}
