//! Survival estimation on a small hand-made cohort: the Kaplan-Meier and
//! Nelson-Aalen curves, the log-rank contrast between two groups, the Cox
//! log-hazard ratio, the concordance error of a risk score, and the curve
//! end points that summarize follow-up.
//!
//! Run with: cargo run --example kaplan_meier_basics

use sbh::survival::{
    build_risk_table, chs_statistic, concordance_error_rate, cox_lhr, kaplan_meier, km_end_points,
    log_rank_statistic, nelson_aalen,
};
use sbh::SurvivalData;

fn main() -> sbh::Result<()> {
    // Twelve observations, two covariates (a biomarker and a dose); status
    // 0 means the follow-up ended without the event.
    let times = vec![
        2.0, 3.0, 3.0, 4.0, 5.5, 6.0, 7.0, 8.5, 9.0, 10.0, 11.0, 12.0,
    ];
    let events = vec![
        true, true, false, true, true, false, true, true, false, true, false, false,
    ];
    let covariates = vec![
        8.1, 0.5, 3.5, 1.5, 7.9, 0.5, 6.5, 1.0, 2.9, 1.5, 5.1, 0.5, 7.2, 1.0, 4.2, 1.5, 3.7,
        0.5, 5.9, 1.0, 2.6, 1.5, 4.8, 1.0,
    ];
    let data = SurvivalData::new(
        times,
        events,
        covariates,
        vec!["biomarker".into(), "dose".into()],
    )?;

    // Whole-cohort survival curve.
    let table = build_risk_table(&data, None)?;
    let km = kaplan_meier(&table);
    println!("Kaplan-Meier breakpoints (time, survival):");
    for (t, s) in km.times.iter().zip(&km.values) {
        println!("  {t:5.1}  {s:.4}");
    }
    let na = nelson_aalen(&table);
    println!(
        "cumulative hazard reaches {:.4} at t={:.1}",
        na.values.last().unwrap(),
        na.times.last().unwrap()
    );

    // Where follow-up ends: the last observed event and the survival
    // probability left there.
    let end = km_end_points(&km, None, None);
    println!(
        "follow-up end point: t={:.1}, S={:.4} (censored tail: {})",
        end.time, end.prob, end.is_limit
    );

    // Contrast high-biomarker observations against the rest.
    let membership: Vec<bool> = (0..data.n()).map(|i| data.value(i, 0) >= 5.0).collect();
    println!(
        "high-biomarker group: log-rank z = {:+.4}, in-group hazard mass = {:.4}",
        log_rank_statistic(&data, &membership)?,
        chs_statistic(&data, &membership)?
    );
    let fit = cox_lhr(&data, &membership)?;
    println!(
        "two-group Cox log-hazard ratio = {:+.4} (separated: {})",
        fit.eta, fit.separated
    );

    // Score observations by the biomarker and ask how often that ordering
    // disagrees with the observed outcomes.
    let scores: Vec<f64> = (0..data.n()).map(|i| data.value(i, 0)).collect();
    println!(
        "concordance error of the biomarker score = {:.4}",
        concordance_error_rate(&data, &scores)?
    );
    Ok(())
}
