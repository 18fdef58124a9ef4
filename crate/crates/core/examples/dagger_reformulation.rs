//! Interval restriction moved from the support into a moment. The
//! support-function test stops seeing it, the LP oracle does not.

use idbounds::models::interval::{build_interval_model, simulate_interval_data, Formulation, IntervalRegConfig, NoiseLaw};
use idbounds::scan::{scan, ScanOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = IntervalRegConfig::default();
    let data = simulate_interval_data(&cfg, &[0.5, 0.25], 300, &NoiseLaw::Degenerate(0.0), 7)?;
    let proper = build_interval_model(&cfg)?;
    let dagger = build_interval_model(&cfg.clone().with_formulation(Formulation::Dagger))?;
    let thetas = proper.params.grid();
    let base = scan(&proper, &data, &thetas, &ScanOptions::default())?;
    for m in [5.0, 10.0, 20.0] {
        let opts = ScanOptions {
            sweep: false,
            ..ScanOptions::at(m)
        };
        let r = scan(&dagger, &data, &thetas, &opts)?;
        let same = r
            .verdicts
            .iter()
            .zip(&base.verdicts)
            .filter(|(a, b)| a.member_lp == b.member_lp)
            .count();
        let min_crit = r.verdicts.iter().map(|v| v.criterion_value).fold(f64::INFINITY, f64::min);
        println!(
            "M = {m}: sf members {}/{}, lp members {}, lp agrees with proper at {same}, min criterion {min_crit:e}, {:.1}s",
            r.members_sf().count(),
            r.verdicts.len(),
            r.members_lp().count(),
            r.timing.total_secs
        );
    }
    Ok(())
}
