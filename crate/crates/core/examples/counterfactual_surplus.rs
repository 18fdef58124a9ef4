//! Counterfactual bounds in the entry game. Total surplus under median
//! restrictions has an upper endpoint that keeps growing with the latent
//! truncation; expected profit given entry under variance restrictions
//! settles to a two-sided interval.

use idbounds::augment::{augment, theta_tilde_interval};
use idbounds::models::entry::{
    build_entry_counterfactual, build_entry_model, simulate_entry_data, AffineMap, CfCase, CfTarget,
    EntryGameConfig, MomentVariant, Selection, ShockLaw,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let identity = CfCase::ShiftX {
        maps: vec![AffineMap::identity(1), AffineMap::identity(1)],
    };

    let cfg = EntryGameConfig::default();
    let theta0 = cfg.theta0();
    let data = simulate_entry_data(&cfg, &theta0, 32, Selection::FirstLex, &ShockLaw::default())?;
    let base = build_entry_model(&cfg)?;
    let aug = augment(&base, &build_entry_counterfactual(&cfg, &identity, CfTarget::TotalSurplus)?)?;
    for m in [5.0, 10.0, 20.0] {
        let t = std::time::Instant::now();
        let b = theta_tilde_interval(&aug, &data, &theta0, Some(m))?;
        println!(
            "surplus M = {m}: [{}, {}] -> next [{:?}, {:?}] growing ({}, {}) {:.1}s",
            b.lower, b.upper, b.lower_next, b.upper_next, b.lower_growing, b.upper_growing,
            t.elapsed().as_secs_f64()
        );
    }

    let cfg = EntryGameConfig {
        variant: MomentVariant::UncorrVariance,
        latent_step: 0.5,
        ..Default::default()
    };
    let theta0 = cfg.theta0();
    let data = simulate_entry_data(&cfg, &theta0, 32, Selection::FirstLex, &ShockLaw::default())?;
    let base = build_entry_model(&cfg)?;
    let aug = augment(&base, &build_entry_counterfactual(&cfg, &identity, CfTarget::ProfitGivenEntry(0))?)?;
    for m in [5.0, 10.0] {
        let t = std::time::Instant::now();
        let b = theta_tilde_interval(&aug, &data, &theta0, Some(m))?;
        println!(
            "profit M = {m}: [{}, {}] -> next [{:?}, {:?}] {:.1}s",
            b.lower, b.upper, b.lower_next, b.upper_next,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
