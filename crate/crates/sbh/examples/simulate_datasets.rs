//! The built-in benchmark generators: exponential survival times driven by
//! a log-linear hazard, censoring times calibrated so that a target
//! fraction of observations is censored, and (for one model) a planted
//! box where the hazard jumps.
//!
//! Run with: cargo run --example simulate_datasets

use sbh::io::{rule_text, write_dataset_csv};
use sbh::sim::{generate, ModelId, SimModelSpec};

fn main() -> sbh::Result<()> {
    for model in [ModelId::M1, ModelId::M1b, ModelId::M2, ModelId::M3, ModelId::M4] {
        let spec = SimModelSpec::defaults(model, 5);
        let (data, truth) = generate(&spec)?;
        let censored = data.n() - data.event_count();
        println!(
            "model {:>2}: n={:4} p={:4}, {:3} censored (target fraction {:.2}), horizon v={:.4}",
            model,
            data.n(),
            data.p(),
            censored,
            spec.censoring,
            truth.censor_horizon.unwrap_or(f64::NAN)
        );
        if let Some(planted) = &truth.planted_box {
            let members = truth
                .planted_membership
                .as_ref()
                .map(|m| m.iter().filter(|&&b| b).count())
                .unwrap_or(0);
            println!(
                "          planted box {} holds {} observations",
                rule_text(planted, data.names()),
                members
            );
        }
        let informative = truth.coefficients.iter().filter(|&&c| c != 0.0).count();
        println!("          {} of {} coefficients are nonzero", informative, data.p());
    }

    // Datasets round-trip through the CSV schema the command-line tool
    // reads (17 significant digits per value).
    let dir = std::env::temp_dir();
    let path = dir.join("sbh_example_model2.csv");
    let (data, _) = generate(&SimModelSpec::defaults(ModelId::M2, 5))?;
    write_dataset_csv(&path, &data)?;
    println!("wrote {}", path.display());
    Ok(())
}
