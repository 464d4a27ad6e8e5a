//! Synthetic survival data generators.
//!
//! Five benchmark models share one mechanism: covariates are drawn i.i.d.
//! (uniform on the cube, or centered normals in the high-dimensional
//! model), each observation gets an exponential event time with rate
//! `exp(eta(x))`, and censoring times are uniform on `(0, v)` with `v`
//! calibrated so that a requested fraction of observations comes out
//! censored.  Ground truth (true event and censoring times, drawn
//! coefficients, planted membership) is returned alongside the observed
//! data so recovered boxes can be scored against what was planted.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::SurvivalData;
use crate::error::{Error, Result};
use crate::peel::{BoxBounds, DirectedSide};
use crate::seed::{derive_seed, Domain};

/// Benchmark model family.
///
/// * `M1` — saturated: n=250, p=3, uniform covariates, coefficients
///   `[12, -15, -5]`.
/// * `M1b` — planted box: as `M1` inside the region
///   `[0.7,1] x [0,0.2] x [0,0.4]`; outside it the regression value is an
///   independent `U(0,1)` draw.
/// * `M2` — unsaturated: coefficients `[12, -15, 0]`, the third covariate
///   pure noise.
/// * `M3` — noise: all coefficients zero, times independent of covariates.
/// * `M4` — high-dimensional: n=100, p=1000, normal covariates, the first
///   100 coefficients drawn from `U(-1, 1)`, the rest zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    M1,
    M1b,
    M2,
    M3,
    M4,
}

impl ModelId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::M1 => "1",
            ModelId::M1b => "1b",
            ModelId::M2 => "2",
            ModelId::M3 => "3",
            ModelId::M4 => "4",
        }
    }
}

impl std::str::FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<ModelId> {
        match s {
            "1" => Ok(ModelId::M1),
            "1b" => Ok(ModelId::M1b),
            "2" => Ok(ModelId::M2),
            "3" => Ok(ModelId::M3),
            "4" => Ok(ModelId::M4),
            other => Err(Error::InvalidConfig(format!(
                "unknown model '{other}' (expected 1, 1b, 2, 3, or 4)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Specification of one simulated dataset.
#[derive(Debug, Clone)]
pub struct SimModelSpec {
    pub model: ModelId,
    pub n: usize,
    pub p: usize,
    /// Target censoring fraction; 0 disables censoring entirely.
    pub censoring: f64,
    /// Standard deviation of the normal covariate law (high-dimensional
    /// model only).
    pub sigma: f64,
    pub seed: u64,
}

impl SimModelSpec {
    /// The model's published dimensions with censoring fraction 0.5.
    pub fn defaults(model: ModelId, seed: u64) -> SimModelSpec {
        let (n, p) = match model {
            ModelId::M4 => (100, 1000),
            _ => (250, 3),
        };
        SimModelSpec {
            model,
            n,
            p,
            censoring: 0.5,
            sigma: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if self.model != ModelId::M4 && self.p != 3 {
            return Err(Error::InvalidConfig(format!(
                "model {} is defined on p=3 covariates, got {}",
                self.model, self.p
            )));
        }
        if self.model == ModelId::M4 && self.p == 0 {
            return Err(Error::InvalidConfig("p must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.censoring) {
            return Err(Error::InvalidConfig(format!(
                "censoring fraction must lie in [0, 1), got {}",
                self.censoring
            )));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidConfig("sigma must be positive".into()));
        }
        Ok(())
    }

    fn planted_box(&self) -> Option<BoxBounds> {
        match self.model {
            ModelId::M1b => Some(BoxBounds {
                lower: vec![0.7, 0.0, 0.0],
                upper: vec![1.0, 0.2, 0.4],
            }),
            _ => None,
        }
    }
}

/// What the generator knew and the analyst has to rediscover.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Uncensored event times `T_i`.
    pub true_times: Vec<f64>,
    /// Censoring times `C_i` (`+inf` when censoring is disabled).
    pub censor_times: Vec<f64>,
    /// Regression coefficients, including drawn ones.
    pub coefficients: Vec<f64>,
    /// Calibrated censoring horizon `v`, when censoring is active.
    pub censor_horizon: Option<f64>,
    /// The planted high-risk box, when the model has one.
    pub planted_box: Option<BoxBounds>,
    /// Membership of each observation in the planted box.
    pub planted_membership: Option<Vec<bool>>,
}

impl GroundTruth {
    /// Peeling directions implied by the coefficient signs: a positive
    /// coefficient makes high values risky (keep them, peel from below),
    /// a negative one the reverse, and a zero coefficient has no
    /// direction.
    pub fn directed_sides(&self) -> Vec<DirectedSide> {
        self.coefficients
            .iter()
            .map(|&c| {
                if c > 0.0 {
                    DirectedSide::KeepHigh
                } else if c < 0.0 {
                    DirectedSide::KeepLow
                } else {
                    DirectedSide::Free
                }
            })
            .collect()
    }
}

/// Generates one dataset with its ground truth.
///
/// The draw order is fixed — coefficients, covariates (row by row), the
/// per-observation out-of-region regression draws, event times, then
/// censoring times — so identical specs produce identical datasets
/// bit for bit.
pub fn generate(spec: &SimModelSpec) -> Result<(SurvivalData, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, Domain::Simulation, 0));
    let n = spec.n;
    let p = spec.p;

    let coefficients: Vec<f64> = match spec.model {
        ModelId::M1 | ModelId::M1b => vec![12.0, -15.0, -5.0],
        ModelId::M2 => vec![12.0, -15.0, 0.0],
        ModelId::M3 => vec![0.0; 3],
        ModelId::M4 => {
            let nonzero = p.min(100);
            let mut c: Vec<f64> = (0..nonzero).map(|_| rng.gen_range(-1.0..1.0)).collect();
            c.resize(p, 0.0);
            c
        }
    };

    let mut covariates = Vec::with_capacity(n * p);
    match spec.model {
        ModelId::M4 => {
            let law = Normal::new(0.0, spec.sigma)
                .map_err(|e| Error::InvalidConfig(format!("normal law: {e}")))?;
            for _ in 0..n * p {
                covariates.push(law.sample(&mut rng));
            }
        }
        _ => {
            for _ in 0..n * p {
                covariates.push(rng.gen::<f64>());
            }
        }
    }

    // One uniform regression draw per observation, used only where the
    // planted-box model puts an observation outside the region.
    let outside_draws: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();

    let planted_box = spec.planted_box();
    let planted_membership = planted_box.as_ref().map(|b| {
        (0..n)
            .map(|i| b.contains_row(&covariates[i * p..(i + 1) * p]))
            .collect::<Vec<bool>>()
    });

    let hazards: Vec<f64> = (0..n)
        .map(|i| {
            let linear: f64 = (0..p)
                .map(|j| coefficients[j] * covariates[i * p + j])
                .sum();
            let eta = match &planted_membership {
                Some(member) if !member[i] => outside_draws[i],
                _ => linear,
            };
            eta.exp()
        })
        .collect();

    let true_times: Vec<f64> = hazards
        .iter()
        .map(|&lambda| {
            let u: f64 = rng.gen();
            -(1.0 - u).ln() / lambda
        })
        .collect();

    let (censor_times, censor_horizon) = if spec.censoring == 0.0 {
        (vec![f64::INFINITY; n], None)
    } else {
        let v = calibrate_censoring(&hazards, spec.censoring)?;
        let c: Vec<f64> = (0..n).map(|_| v * rng.gen::<f64>()).collect();
        (c, Some(v))
    };

    let times: Vec<f64> = true_times
        .iter()
        .zip(&censor_times)
        .map(|(&t, &c)| t.min(c))
        .collect();
    let events: Vec<bool> = true_times
        .iter()
        .zip(&censor_times)
        .map(|(&t, &c)| t <= c)
        .collect();

    let data = SurvivalData::with_default_names(times, events, covariates, p)?;
    let truth = GroundTruth {
        true_times,
        censor_times,
        coefficients,
        censor_horizon,
        planted_box,
        planted_membership,
    };
    Ok((data, truth))
}

/// Solves for the censoring horizon `v` such that the expected censored
/// fraction under `C ~ U(0, v)` against per-observation exponential event
/// times equals `pi`.
///
/// For one observation with rate `lambda`, `P(C < T) =
/// (1 - exp(-lambda v)) / (lambda v)`; the mean over observations is
/// strictly decreasing in `v` from 1 toward 0, so bisection on a doubling
/// bracket converges to the unique root (relative tolerance 1e-4).
pub fn calibrate_censoring(hazards: &[f64], pi: f64) -> Result<f64> {
    if hazards.is_empty() || hazards.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput(
            "hazards must be positive and finite".into(),
        ));
    }
    if !(0.0 < pi && pi < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "censoring fraction must lie in (0, 1), got {pi}"
        )));
    }
    let censored_fraction = |v: f64| -> f64 {
        hazards
            .iter()
            .map(|&l| {
                let x = l * v;
                // (1 - e^-x)/x, stable near 0 where it tends to 1.
                if x < 1e-8 {
                    1.0 - x / 2.0
                } else {
                    -(-x).exp_m1() / x
                }
            })
            .sum::<f64>()
            / hazards.len() as f64
    };
    let mut lo = 0.0_f64; // censored fraction -> 1
    let mut hi = 1.0_f64;
    let mut doubling = 0;
    while censored_fraction(hi) > pi {
        hi *= 2.0;
        doubling += 1;
        if doubling > 200 {
            return Err(Error::CalibrationFailure(format!(
                "could not bracket censoring fraction {pi}"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored_fraction(mid) > pi {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-4 * hi.max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fraction of positions where the predicted membership disagrees with the
/// true one.
pub fn misclassification_rate(predicted: &[bool], truth: &[bool]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::InvalidInput(format!(
            "membership vectors must share a positive length, got {} and {}",
            predicted.len(),
            truth.len()
        )));
    }
    let miss = predicted
        .iter()
        .zip(truth)
        .filter(|(a, b)| a != b)
        .count();
    Ok(miss as f64 / predicted.len() as f64)
}
