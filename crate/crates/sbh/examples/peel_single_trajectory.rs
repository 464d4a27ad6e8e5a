//! One full peeling trajectory on simulated data: a high-risk region is
//! planted through the hazard (large positive coefficient on x1, negative
//! on x2 and x3), and patient peeling shaves 10% quantile slabs off the
//! box face that improves the log-rank statistic fastest per unit of
//! support given up.
//!
//! Run with: cargo run --example peel_single_trajectory

use sbh::io::rule_text;
use sbh::peel::{peel_trajectory, PeelConfig, PeelSide};
use sbh::sim::{generate, ModelId, SimModelSpec};
use sbh::Columns;

fn main() -> sbh::Result<()> {
    let spec = SimModelSpec::defaults(ModelId::M1, 7);
    let (data, _truth) = generate(&spec)?;
    let cols = Columns::from_data(&data);

    let config = PeelConfig::default(); // alpha0 = 0.10, beta0 = 0.05, log-rank
    println!(
        "peeling {} observations, at most {} steps before support falls below {}",
        data.n(),
        config.trajectory_bound(),
        config.beta0
    );

    let mut traj = peel_trajectory(&data, &cols, None, &config)?;
    traj.compute_end_points(&data, &cols);

    println!("step  support  n_in  peeled face           log-rank      LHR      CER");
    for rec in &traj.steps {
        let peeled = match (rec.peeled_covariate, rec.peeled_side) {
            (Some(j), Some(side)) => {
                let arrow = match side {
                    PeelSide::Lower => ">=",
                    PeelSide::Upper => "<=",
                };
                format!("{} {} {:.3}", data.names()[j], arrow, rec.peeled_bound.unwrap())
            }
            _ => "(start)".to_string(),
        };
        let ep = rec.end_points.as_ref().unwrap();
        let fmt = |v: Option<f64>| match v {
            Some(v) => format!("{v:8.3}"),
            None => "       -".to_string(),
        };
        println!(
            "{:4}  {:7.3}  {:4}  {:<20} {} {} {}",
            rec.step,
            rec.support,
            rec.n_in,
            peeled,
            fmt(ep.lrt),
            fmt(ep.lhr),
            fmt(ep.cer),
        );
    }
    println!(
        "final rule: {}",
        rule_text(&traj.final_box().clipped_to(&traj.envelope), data.names())
    );
    Ok(())
}
