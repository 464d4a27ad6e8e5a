//! Tuning the trajectory length by replicated cross-validation: each
//! replicate re-splits the data into stratified folds, peels on every
//! training set, and scores the held-out observations; profiles are then
//! averaged over replicates and the length with the best held-out
//! log-rank value wins.
//!
//! Run with: cargo run --example cross_validate

use sbh::cv::{replicated_cv, select_optimal_length, CvConfig, OptCriterion, StatsMode, Technique};
use sbh::peel::PeelConfig;
use sbh::sim::{generate, ModelId, SimModelSpec};
use sbh::Columns;

fn main() -> sbh::Result<()> {
    // Two informative covariates out of three; the third is noise.
    let spec = SimModelSpec::defaults(ModelId::M2, 42);
    let (data, _) = generate(&spec)?;
    let cols = Columns::from_data(&data);

    let config = CvConfig {
        peel: PeelConfig::default(),
        technique: Technique::Combined,
        folds: 5,
        replicates: 8,
        seed: 42,
    };
    let result = replicated_cv(&data, &cols, &config, StatsMode::Full)?;

    println!("step  support   n_in   log-rank chi2 (se) CER (se)       reps");
    let fmt = |mean: Option<f64>, se: Option<f64>| match (mean, se) {
        (Some(m), Some(s)) => format!("{m:8.3} ({s:.3})"),
        (Some(m), None) => format!("{m:8.3}    -   "),
        _ => "     -         ".to_string(),
    };
    for l in 0..=result.length {
        println!(
            "{:4}  {:7.3}  {:5.1}  {}  {}  {:4}",
            l,
            result.support.mean[l].unwrap_or(f64::NAN),
            result.n_in.mean[l].unwrap_or(f64::NAN),
            fmt(result.lrt.mean[l], result.lrt.se[l]),
            fmt(result.cer.mean[l], result.cer.se[l]),
            result.lrt.count[l],
        );
    }

    for (opt, label) in [
        (OptCriterion::Lrt, "log-rank"),
        (OptCriterion::Cer, "concordance error"),
    ] {
        let pick = select_optimal_length(&result, opt, false);
        let pick_1se = select_optimal_length(&result, opt, true);
        println!(
            "{label}: optimal length {} (one-SE rule picks {}, flat profile: {})",
            pick.step, pick_1se.step, pick.flat
        );
    }

    // Which covariates did the fold trajectories actually move?
    for (j, name) in data.names().iter().enumerate() {
        if result.usage[j] > 0.0 {
            println!(
                "{name}: moved by {:.1}% of all peels",
                100.0 * result.usage[j]
            );
        }
    }
    let agreement = result
        .membership_agreement
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    println!("worst per-step membership agreement across replicates: {agreement:.3}");
    Ok(())
}
