//! Interval-censored regression `Y* = α + βW + ε` with `Y*` observed only
//! through a bracket `[Y_lo, Y_hi]`.
//!
//! Observed `z = (y_lo, y_hi, w)`, parameter `θ = (α, β)`. The proper form
//! confines the latent `u = Y*` to the bracket; the dagger form leaves `u`
//! unrestricted and adds the bracket indicator as a third moment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AxisBounds, DiscreteDistribution, LatentDomain, ModelSpec, MomentSpec, ParameterBox, SupportPredicate,
};

/// Slack on bracket membership so grid nodes that equal an endpoint up to
/// rounding count as inside.
pub const BRACKET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Proper,
    Dagger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntervalRegConfig {
    pub w_support: Vec<f64>,
    /// Distance of the bracket below and above `Y*`.
    pub halfwidths: (f64, f64),
    pub formulation: Formulation,
    /// Latent box half-width (proper) or default truncation (dagger).
    pub latent_bound: f64,
    pub latent_step: f64,
    pub theta_lower: [f64; 2],
    pub theta_upper: [f64; 2],
    pub theta_resolution: [usize; 2],
}

impl Default for IntervalRegConfig {
    fn default() -> Self {
        Self {
            w_support: vec![-1.0, 0.0, 1.0],
            halfwidths: (0.3, 0.4),
            formulation: Formulation::Proper,
            latent_bound: 5.0,
            latent_step: 0.05,
            theta_lower: [-2.0, -2.0],
            theta_upper: [2.0, 2.0],
            theta_resolution: [41, 41],
        }
    }
}

impl IntervalRegConfig {
    pub fn with_formulation(mut self, f: Formulation) -> Self {
        self.formulation = f;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_support.is_empty() || self.w_support.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("w_support must be a nonempty list of finite values".into()));
        }
        let (lo, hi) = self.halfwidths;
        if !(lo >= 0.0 && hi >= 0.0) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config("interval halfwidths must be nonnegative".into()));
        }
        if !(self.latent_bound > 0.0) || !(self.latent_step > 0.0) || self.latent_step > self.latent_bound {
            return Err(Error::Config("latent bound and step must be positive, step ≤ bound".into()));
        }
        Ok(())
    }

    pub fn points_per_dim(&self) -> usize {
        (2.0 * self.latent_bound / self.latent_step).round() as usize + 1
    }
}

fn in_bracket(u: f64, z: &[f64]) -> bool {
    u >= z[0] - BRACKET_TOL && u <= z[1] + BRACKET_TOL
}

pub fn build_interval_model(cfg: &IntervalRegConfig) -> Result<ModelSpec> {
    cfg.validate()?;
    let b = cfg.latent_bound;
    let ppd = cfg.points_per_dim();
    let params = ParameterBox::new(cfg.theta_lower.to_vec(), cfg.theta_upper.to_vec(), cfg.theta_resolution.to_vec())?;
    let residual = |u: &[f64], z: &[f64], t: &[f64]| u[0] - t[0] - t[1] * z[2];
    Ok(match cfg.formulation {
        Formulation::Proper => ModelSpec {
            label: "interval_proper".into(),
            latent: LatentDomain::new(vec![AxisBounds::finite(-b, b)], b, ppd)?.into(),
            z_dim: 3,
            support: SupportPredicate::new(|u, z, _| in_bracket(u[0], z)),
            moments: MomentSpec::latent_only(2, move |u, z, t, o| {
                let e = residual(u, z, t);
                o[0] = e;
                o[1] = z[2] * e;
            })?,
            params,
        },
        Formulation::Dagger => ModelSpec {
            label: "interval_dagger".into(),
            latent: LatentDomain::new(vec![AxisBounds::unbounded()], b, ppd)?.into(),
            z_dim: 3,
            support: SupportPredicate::whole_space(),
            moments: MomentSpec::latent_only(3, move |u, z, t, o| {
                let e = residual(u, z, t);
                o[0] = e;
                o[1] = z[2] * e;
                o[2] = if in_bracket(u[0], z) { 0.0 } else { -1.0 };
            })?,
            params,
        },
    })
}

/// Law of the regression error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    Degenerate(f64),
    /// Equal-weight discrete law, assigned round-robin so that frequencies
    /// are exact when `n` is a multiple of `|w_support| · |values|`.
    Discrete(Vec<f64>),
    Normal { sd: f64 },
}

impl Default for NoiseLaw {
    fn default() -> Self {
        NoiseLaw::Degenerate(0.0)
    }
}

/// Draws `n` observations. `w` cycles through the support, so every value
/// appears equally often when `n` is a multiple of its size.
pub fn simulate_interval_data(
    cfg: &IntervalRegConfig,
    theta0: &[f64],
    n: usize,
    noise: &NoiseLaw,
    seed: u64,
) -> Result<DiscreteDistribution> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    if theta0.len() != 2 {
        return Err(Error::Dimension(format!("theta0 has length {}, expected 2", theta0.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = match noise {
        NoiseLaw::Normal { sd } => {
            Some(Normal::new(0.0, *sd).map_err(|e| Error::Config(format!("noise law: {e}")))?)
        }
        _ => None,
    };
    if let NoiseLaw::Discrete(v) = noise {
        if v.is_empty() {
            return Err(Error::Config("discrete noise law needs at least one value".into()));
        }
    }
    let k = cfg.w_support.len();
    let (below, above) = cfg.halfwidths;
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let w = cfg.w_support[i % k];
            let eps = match noise {
                NoiseLaw::Degenerate(c) => *c,
                NoiseLaw::Discrete(v) => v[(i / k) % v.len()],
                NoiseLaw::Normal { .. } => normal.as_ref().map_or(0.0, |d| d.sample(&mut rng)),
            };
            let y = theta0[0] + theta0[1] * w + eps;
            vec![y - below, y + above, w]
        })
        .collect();
    DiscreteDistribution::from_samples(&samples)
}

/// `(E y_lo, E y_hi, E w)` under `data`.
pub fn bracket_means(data: &DiscreteDistribution) -> (f64, f64, f64) {
    (data.expect(|z| z[0]), data.expect(|z| z[1]), data.expect(|z| z[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, moment_image, section};

    #[test]
    fn proper_section_and_image() {
        let cfg = IntervalRegConfig {
            latent_step: 0.5,
            ..Default::default()
        };
        let m = build_interval_model(&cfg).unwrap();
        let g = m.default_grid().unwrap();
        let s = section(&m, &g, &[0.0, 1.0, 1.0], &[0.0, 0.0]).unwrap();
        let us: Vec<f64> = s.iter().map(|&i| g.point(i)[0]).collect();
        assert_eq!(us, vec![0.0, 0.5, 1.0]);
        let img = moment_image(&m, &g, &[0.0, 1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(img.values, vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn dagger_indicator_and_support() {
        let cfg = IntervalRegConfig {
            latent_step: 0.5,
            formulation: Formulation::Dagger,
            ..Default::default()
        };
        let m = build_interval_model(&cfg).unwrap();
        let g = m.default_grid().unwrap();
        let z = [0.0, 1.0, 1.0];
        assert_eq!(section(&m, &g, &z, &[0.0, 0.0]).unwrap().len(), g.len());
        let img = moment_image(&m, &g, &z, &[0.0, 0.0]).unwrap();
        for (k, &i) in img.indices.iter().enumerate() {
            let u = g.point(i)[0];
            let inside = (0.0..=1.0).contains(&u);
            assert_eq!(img.row(k)[2], if inside { 0.0 } else { -1.0 });
        }
        assert!(m.latent.has_unbounded());
        let _ = build_grid;
    }

    #[test]
    fn default_design_bracket_means() {
        let cfg = IntervalRegConfig::default();
        let f = simulate_interval_data(&cfg, &[0.5, 0.25], 300, &NoiseLaw::Degenerate(0.0), 1).unwrap();
        let (lo, hi, w) = bracket_means(&f);
        assert!((lo - 0.2).abs() < 1e-12 && (hi - 0.9).abs() < 1e-12 && w.abs() < 1e-12);
        assert_eq!(f.len(), 3);
        assert!(simulate_interval_data(&cfg, &[0.5, 0.25], 0, &NoiseLaw::Degenerate(0.0), 1).is_err());
    }
}
