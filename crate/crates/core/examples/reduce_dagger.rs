//! Finds the reducing direction of the dagger interval model, builds the
//! reduced model and checks that both give the same member set.

use idbounds::lp::min_violation;
use idbounds::models::interval::{build_interval_model, simulate_interval_data, Formulation, IntervalRegConfig, NoiseLaw};
use idbounds::reduce::{find_reducing_direction, reduce_model};
use idbounds::support::gmm_residual;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = IntervalRegConfig::default().with_formulation(Formulation::Dagger);
    let data = simulate_interval_data(&cfg, &[0.5, 0.25], 300, &NoiseLaw::Degenerate(0.0), 7)?;
    let model = build_interval_model(&cfg)?;
    let grid = model.default_grid()?;
    let theta = [0.5, 0.25];
    let cert = find_reducing_direction(&model, &grid, &data, &theta, &Default::default())?
        .ok_or("no reducing direction")?;
    println!("direction {:?}, value {:e}", cert.direction.as_slice(), cert.achieved_value);
    let reduced = reduce_model(&model, &cert)?;
    println!("appended z-only moment at theta: {:?}", gmm_residual(&reduced, &data, &theta)?);
    let (mut same, mut members) = (0, 0);
    let thetas = model.params.grid();
    for t in &thetas {
        let a = min_violation(&model, &grid, &data, t)?.is_member();
        let b = min_violation(&reduced, &grid, &data, t)?.is_member();
        same += usize::from(a == b);
        members += usize::from(a);
    }
    println!("{same}/{} points agree, {members} members", thetas.len());
    Ok(())
}
