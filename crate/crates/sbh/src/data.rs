//! Right-censored survival data.
//!
//! A data set couples an observed follow-up time and an event indicator with
//! a row of covariates per observation.  Covariate columns are named so that
//! decision rules can be printed in terms of the input schema.

use crate::error::{Error, Result};

/// A right-censored survival data set of `n` observations over `p` covariates.
///
/// `events[i] == true` means the event was observed at `times[i]`;
/// `false` means observation `i` was censored at `times[i]`.
#[derive(Debug, Clone)]
pub struct SurvivalData {
    times: Vec<f64>,
    events: Vec<bool>,
    /// Row-major `n x p` covariate matrix.
    covariates: Vec<f64>,
    names: Vec<String>,
    n: usize,
    p: usize,
}

impl SurvivalData {
    /// Builds a data set, validating shapes and values.
    ///
    /// Times must be finite and non-negative, covariates finite, and
    /// `covariates.len() == times.len() * names.len()`.
    pub fn new(
        times: Vec<f64>,
        events: Vec<bool>,
        covariates: Vec<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = times.len();
        let p = names.len();
        if events.len() != n {
            return Err(Error::InvalidInput(format!(
                "times has {} entries but events has {}",
                n,
                events.len()
            )));
        }
        if covariates.len() != n * p {
            return Err(Error::InvalidInput(format!(
                "covariate matrix has {} entries, expected {} ({} rows x {} columns)",
                covariates.len(),
                n * p,
                n,
                p
            )));
        }
        if n == 0 {
            return Err(Error::InvalidInput("data set is empty".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "time {} at row {} is not a finite non-negative number",
                    t,
                    i + 1
                )));
            }
        }
        for (idx, &v) in covariates.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "covariate value at row {}, column {} is not finite",
                    idx / p + 1,
                    idx % p + 1
                )));
            }
        }
        Ok(SurvivalData {
            times,
            events,
            covariates,
            names,
            n,
            p,
        })
    }

    /// Builds a data set with default covariate names `x1..xp`.
    pub fn with_default_names(
        times: Vec<f64>,
        events: Vec<bool>,
        covariates: Vec<f64>,
        p: usize,
    ) -> Result<Self> {
        let names = default_names(p);
        Self::new(times, events, covariates, names)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    /// Total number of observed events.
    pub fn event_count(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Covariate value of observation `i` on covariate `j`.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.covariates[i * self.p + j]
    }

    /// Row `i` of the covariate matrix.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    /// Copies covariate column `j` into a fresh vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i, j)).collect()
    }

    /// Returns a copy of this data set with times and event indicators
    /// permuted by `perm` while covariate rows keep their original order.
    /// `perm[i]` is the source row whose (time, event) pair lands at row `i`.
    pub fn permute_outcomes(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "permutation has {} entries, expected {}",
                perm.len(),
                self.n
            )));
        }
        let times = perm.iter().map(|&s| self.times[s]).collect();
        let events = perm.iter().map(|&s| self.events[s]).collect();
        Ok(SurvivalData {
            times,
            events,
            covariates: self.covariates.clone(),
            names: self.names.clone(),
            n: self.n,
            p: self.p,
        })
    }
}

/// Column-major copy of the covariate matrix, used by the peeling engine for
/// cache-friendly per-covariate scans.
#[derive(Debug, Clone)]
pub struct Columns {
    cols: Vec<Vec<f64>>,
}

impl Columns {
    pub fn from_data(data: &SurvivalData) -> Self {
        Columns {
            cols: (0..data.p()).map(|j| data.column(j)).collect(),
        }
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    pub fn p(&self) -> usize {
        self.cols.len()
    }
}

/// Default covariate names `x1..xp`.
pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}
