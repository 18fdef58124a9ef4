//! Two-firm entry game with median restrictions: simulate markets under
//! two equilibrium selection rules and scan the parameter box.

use idbounds::models::entry::{build_entry_model, simulate_entry_data, EntryGameConfig, Selection, ShockLaw};
use idbounds::scan::{evaluate_theta, scan, set_summary, Membership, ScanOptions, SetSummary};
use idbounds::support::PreparedGrid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EntryGameConfig::default();
    let theta0 = cfg.theta0();
    let model = build_entry_model(&cfg)?;
    let thetas = model.params.grid();
    for selection in [Selection::FirstLex, Selection::Random(11)] {
        // 2 covariate values × 4² shock pairs, each combination once
        let data = simulate_entry_data(&cfg, &theta0, 32, selection, &ShockLaw::default())?;
        let prepared = PreparedGrid::new(&model, model.latent.default_truncation())?;
        let v0 = evaluate_theta(&model, &prepared, &data, 0, &theta0, &Default::default())?;
        println!("{selection:?}: theta0 member_lp = {}, member_sf = {}", v0.member_lp, v0.member_sf);
        let r = scan(&model, &data, &thetas, &ScanOptions::default())?;
        println!(
            "  {} points in {:.1}s: {} lp members, {} disagreements",
            r.verdicts.len(),
            r.timing.total_secs,
            r.members_lp().count(),
            r.disagreements.len()
        );
        for c in 0..model.params.dim() {
            if let SetSummary::Hull { lower, upper, .. } = set_summary(&r, c, Membership::Lp) {
                println!("  coordinate {c}: [{lower}, {upper}]");
            }
        }
    }
    Ok(())
}
