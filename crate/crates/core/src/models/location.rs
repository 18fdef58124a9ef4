//! Complete location/scale model: the latent equals the observation, so
//! every section is a single grid node and the model is ordinary GMM.
//!
//! `z` scalar on the latent grid, `θ = (mean, second moment)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AxisBounds, DiscreteDistribution, LatentDomain, ModelSpec, MomentSpec, ObservedAtom, ParameterBox,
    SupportPredicate,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocationConfig {
    pub latent_bound: f64,
    pub latent_step: f64,
    /// Moments read `z` directly (`dim_r2 = 0`) instead of the latent.
    pub pure_gmm: bool,
    pub theta_lower: [f64; 2],
    pub theta_upper: [f64; 2],
    pub theta_resolution: [usize; 2],
}

impl Default for LocationConfig {
    fn default() -> Self {
        Self {
            latent_bound: 2.0,
            latent_step: 0.25,
            pure_gmm: false,
            theta_lower: [-1.0, 0.0],
            theta_upper: [1.0, 2.0],
            theta_resolution: [21, 21],
        }
    }
}

pub fn build_location_model(cfg: &LocationConfig) -> Result<ModelSpec> {
    if !(cfg.latent_bound > 0.0 && cfg.latent_step > 0.0) {
        return Err(Error::Config("latent bound and step must be positive".into()));
    }
    let ppd = (2.0 * cfg.latent_bound / cfg.latent_step).round() as usize + 1;
    let b = cfg.latent_bound;
    let latent = LatentDomain::new(vec![AxisBounds::finite(-b, b)], b, ppd)?;
    let moments = if cfg.pure_gmm {
        MomentSpec::new(
            2,
            0,
            |z, t, o| {
                o[0] = z[0] - t[0];
                o[1] = z[0] * z[0] - t[1];
            },
            |_, _, _, _| {},
        )?
    } else {
        MomentSpec::latent_only(2, |u, _, t, o| {
            o[0] = u[0] - t[0];
            o[1] = u[0] * u[0] - t[1];
        })?
    };
    Ok(ModelSpec {
        label: if cfg.pure_gmm { "location_gmm" } else { "location" }.into(),
        latent: latent.into(),
        z_dim: 1,
        support: SupportPredicate::new(|u, z, _| (u[0] - z[0]).abs() <= 1e-9),
        moments,
        params: ParameterBox::new(cfg.theta_lower.to_vec(), cfg.theta_upper.to_vec(), cfg.theta_resolution.to_vec())?,
    })
}

/// Equal-weight distribution on the given support points.
pub fn location_data(points: &[f64]) -> Result<DiscreteDistribution> {
    let w = 1.0 / points.len().max(1) as f64;
    DiscreteDistribution::from_weighted(points.iter().map(|&p| (vec![p], w)).collect())
}

/// `(E z, E z²)`.
pub fn location_moments(data: &DiscreteDistribution) -> (f64, f64) {
    (data.expect(|z| z[0]), data.expect(|z| z[0] * z[0]))
}

pub fn atoms(points: &[(f64, f64)]) -> Result<DiscreteDistribution> {
    DiscreteDistribution::new(points.iter().map(|&(z, weight)| ObservedAtom { z: vec![z], weight }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::section;

    #[test]
    fn singleton_sections() {
        let m = build_location_model(&LocationConfig::default()).unwrap();
        let g = m.default_grid().unwrap();
        for p in g.points() {
            assert_eq!(section(&m, &g, &[p[0]], &[0.0, 1.0]).unwrap().len(), 1);
        }
    }
}
