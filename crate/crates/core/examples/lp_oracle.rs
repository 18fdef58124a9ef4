//! The exact oracle on a tiny interval model: build the violation LP at one
//! parameter value, dump it, solve it and read off the selection.

use idbounds::lp::{min_violation, solve, violation_program, write_tableau, SolverOptions};
use idbounds::models::interval::{build_interval_model, simulate_interval_data, IntervalRegConfig, NoiseLaw};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = IntervalRegConfig {
        w_support: vec![0.0, 1.0],
        latent_bound: 2.0,
        latent_step: 0.5,
        ..Default::default()
    };
    let data = simulate_interval_data(&cfg, &[0.5, 0.25], 2, &NoiseLaw::Degenerate(0.0), 0)?;
    let model = build_interval_model(&cfg)?;
    let grid = model.default_grid()?;

    for theta in [[0.5, 0.25], [1.5, 0.0]] {
        let lp = violation_program(&model, &grid, &data, &theta)?;
        println!("theta = {theta:?}: {} rows, {} columns", lp.n_rows, lp.n_cols);
        if theta[0] == 0.5 {
            print!("{}", write_tableau(&lp));
        }
        let out = solve(&lp, &SolverOptions::default())?;
        println!(
            "  {:?} objective {:e}, duality gap {:e}, residual {:e}",
            out.status,
            out.objective,
            out.duality_gap(&lp),
            lp.residual(&out.solution)
        );
        let v = min_violation(&model, &grid, &data, &theta)?;
        println!("  member = {} (violation {:e} vs tolerance {:e})", v.is_member(), v.value, v.tolerances.lp);
        for m in &v.selection {
            println!("    atom {} -> u = {:?} with mass {}", m.atom, grid.point(m.grid_index), m.mass);
        }
    }
    Ok(())
}
