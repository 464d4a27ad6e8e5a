//! The coverage loop: peel a box, set its members aside, and peel the
//! remainder again, producing a disjunction of conjunctive rules.  Pasting
//! is switched on so each trajectory ends with a bottom-up refinement
//! pass that re-admits slabs peeled too eagerly.
//!
//! Run with: cargo run --example coverage_rules

use sbh::io::rule_text;
use sbh::peel::{coverage_loop, PeelConfig};
use sbh::sim::{generate, ModelId, SimModelSpec};
use sbh::Columns;

fn main() -> sbh::Result<()> {
    // A planted box: the hazard jumps by e^2 inside
    // [0.7, 1.0] x [0.0, 0.2] x [0.0, 0.4].
    let spec = SimModelSpec::defaults(ModelId::M1b, 11);
    let (data, truth) = generate(&spec)?;
    let cols = Columns::from_data(&data);

    let config = PeelConfig {
        pasting: true,
        ..PeelConfig::default()
    };
    let result = coverage_loop(&data, &cols, &config, 3)?;

    for (m, traj) in result.trajectories.iter().enumerate() {
        let peels = traj.peel_count();
        let pastes = traj.paste_steps.len();
        println!(
            "box {}: grown on {} active observations, {} peels, {} pastes, {} members",
            m + 1,
            traj.n_active,
            peels,
            pastes,
            traj.final_members.len()
        );
        println!(
            "  rule: {}",
            rule_text(&traj.final_box().clipped_to(&traj.envelope), data.names())
        );
    }

    // How much of the planted membership did the disjunction of all boxes
    // recover?
    let planted = truth.planted_membership.as_ref().unwrap();
    let mut hit = 0;
    let mut claimed = 0;
    for i in 0..data.n() {
        let inside = result.rule_contains(data.row(i));
        claimed += inside as usize;
        hit += (inside && planted[i]) as usize;
    }
    let planted_total = planted.iter().filter(|&&b| b).count();
    println!(
        "rule claims {} observations; {} of the {} planted members are among them",
        claimed, hit, planted_total
    );
    Ok(())
}
