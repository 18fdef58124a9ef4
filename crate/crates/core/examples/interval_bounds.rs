//! Proper interval regression on the default synthetic design: scan the
//! parameter box, compare both membership tests and print the projections.

use idbounds::models::interval::{bracket_means, build_interval_model, simulate_interval_data, IntervalRegConfig, NoiseLaw};
use idbounds::scan::{scan, set_summary, Membership, ScanOptions, SetSummary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = IntervalRegConfig::default();
    let data = simulate_interval_data(&cfg, &[0.5, 0.25], 300, &NoiseLaw::Degenerate(0.0), 7)?;
    let (lo, hi, w) = bracket_means(&data);
    println!("E y_lo = {lo}, E y_hi = {hi}, E w = {w}");

    let model = build_interval_model(&cfg)?;
    let thetas = model.params.grid();
    let report = scan(&model, &data, &thetas, &ScanOptions::default())?;
    println!(
        "{} points in {:.1}s, {} lp members, {} sf members, {} disagreements",
        report.verdicts.len(),
        report.timing.total_secs,
        report.members_lp().count(),
        report.members_sf().count(),
        report.disagreements.len()
    );
    for c in 0..2 {
        if let SetSummary::Hull { lower, upper, .. } = set_summary(&report, c, Membership::Lp) {
            println!("coordinate {c}: [{lower}, {upper}]");
        }
    }
    Ok(())
}
