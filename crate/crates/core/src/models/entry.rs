//! Complete-information entry game with pure-strategy Nash equilibrium
//! support and median, symmetry or variance moment restrictions.
//!
//! Firm `j` earns `y_j (x'α − Δ_j · #rivals entering + u_j)`; staying out
//! pays zero. All firms share the market covariate `x`. Observed
//! `z = (x, y_0, .., y_{n-1})`, parameter `θ = (α, Δ, τ)` with `τ` present
//! only for the variance variant.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augment::{CfPoint, CounterfactualSpec, OutcomeDomain, TargetDefinition};
use crate::error::{Error, Result};
use crate::model::{
    AxisBounds, DiscreteDistribution, LatentDomain, ModelSpec, MomentSpec, ParameterBox, SupportPredicate,
};

/// Slack on best-response inequalities. Only enlarges the equilibrium set,
/// so existence survives rounding.
pub const NE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentVariant {
    Median,
    MedianPlusSymmetric,
    UncorrVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntryGameConfig {
    pub n_firms: usize,
    /// Support of the market covariate (same length `k` for every entry).
    pub x_support: Vec<Vec<f64>>,
    /// Data-generating values, used by the simulator.
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    pub variant: MomentVariant,
    pub tau: Vec<f64>,
    /// Revenue variance per firm, scaled by `τ_j` in the variance moment.
    pub revenue_variance: Vec<f64>,
    pub latent_bound: f64,
    pub latent_step: f64,
    pub alpha_range: (f64, f64),
    pub delta_range: (f64, f64),
    pub tau_range: (f64, f64),
    pub resolution: usize,
    pub tau_resolution: usize,
}

impl Default for EntryGameConfig {
    fn default() -> Self {
        Self {
            n_firms: 2,
            x_support: vec![vec![-1.0], vec![1.0]],
            alpha: vec![0.4],
            delta: vec![1.0, 1.0],
            variant: MomentVariant::Median,
            tau: vec![0.5, 0.5],
            revenue_variance: vec![2.5, 2.5],
            latent_bound: 5.0,
            latent_step: 0.25,
            alpha_range: (-0.5, 1.4),
            delta_range: (0.0, 1.9),
            tau_range: (0.5, 0.5),
            resolution: 20,
            tau_resolution: 1,
        }
    }
}

impl EntryGameConfig {
    pub fn k(&self) -> usize {
        self.x_support.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_firms;
        if !(2..=3).contains(&n) {
            return Err(Error::Config(format!("n_firms must be 2 or 3, got {n}")));
        }
        let k = self.k();
        if k == 0 || self.x_support.iter().any(|x| x.len() != k || x.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("x_support must list finite covariate vectors of one length".into()));
        }
        if self.alpha.len() != k {
            return Err(Error::Config(format!("alpha has length {}, covariates have {k}", self.alpha.len())));
        }
        if self.delta.len() != n || self.delta.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::Config("delta needs one nonnegative value per firm".into()));
        }
        if self.variant == MomentVariant::UncorrVariance {
            if self.tau.len() != n || self.tau.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(Error::Config("tau needs one value in [0, 1] per firm".into()));
            }
            if self.revenue_variance.len() != n || self.revenue_variance.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::Config("revenue_variance needs one positive value per firm".into()));
            }
            if !(0.0 <= self.tau_range.0 && self.tau_range.0 <= self.tau_range.1 && self.tau_range.1 <= 1.0) {
                return Err(Error::Config("tau_range must lie inside [0, 1]".into()));
            }
        }
        if self.delta_range.0 < 0.0 {
            return Err(Error::Config("delta_range must be nonnegative".into()));
        }
        if !(self.latent_bound > 0.0 && self.latent_step > 0.0 && self.latent_step <= self.latent_bound) {
            return Err(Error::Config("latent bound and step must be positive, step ≤ bound".into()));
        }
        Ok(())
    }

    /// Number of parameters: `k + n` (+ `n` for the variance variant).
    pub fn theta_dim(&self) -> usize {
        let n = self.n_firms;
        self.k() + n + if self.variant == MomentVariant::UncorrVariance { n } else { 0 }
    }

    /// `(α, Δ, τ)` assembled from the data-generating fields.
    pub fn theta0(&self) -> Vec<f64> {
        let mut t = self.alpha.clone();
        t.extend_from_slice(&self.delta);
        if self.variant == MomentVariant::UncorrVariance {
            t.extend_from_slice(&self.tau);
        }
        t
    }

    pub fn points_per_dim(&self) -> usize {
        (2.0 * self.latent_bound / self.latent_step).round() as usize + 1
    }

    pub fn latent_domain(&self, dim: usize) -> Result<LatentDomain> {
        LatentDomain::uniform(dim, AxisBounds::unbounded(), self.latent_bound, self.points_per_dim())
    }

    pub fn parameter_box(&self) -> Result<ParameterBox> {
        let (k, n) = (self.k(), self.n_firms);
        let mut lo = vec![self.alpha_range.0; k];
        let mut hi = vec![self.alpha_range.1; k];
        let mut res = vec![self.resolution; k];
        lo.extend(std::iter::repeat(self.delta_range.0).take(n));
        hi.extend(std::iter::repeat(self.delta_range.1).take(n));
        res.extend(std::iter::repeat(self.resolution).take(n));
        if self.variant == MomentVariant::UncorrVariance {
            lo.extend(std::iter::repeat(self.tau_range.0).take(n));
            hi.extend(std::iter::repeat(self.tau_range.1).take(n));
            res.extend(std::iter::repeat(self.tau_resolution).take(n));
        }
        ParameterBox::new(lo, hi, res)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Whether `y` is a pure equilibrium given per-firm payoff index, rivalry
/// effect and shock.
pub fn is_pure_ne(index: &[f64], delta: &[f64], u: &[f64], y: &[bool]) -> bool {
    let entrants = y.iter().filter(|&&e| e).count();
    (0..y.len()).all(|j| {
        let rivals = (entrants - usize::from(y[j])) as f64;
        let v = index[j] - delta[j] * rivals + u[j];
        if y[j] {
            v >= -NE_TOL
        } else {
            v <= NE_TOL
        }
    })
}

fn profile(bits: usize, n: usize) -> Vec<bool> {
    (0..n).map(|j| bits >> (n - 1 - j) & 1 == 1).collect()
}

/// All pure equilibria in lexicographic order, first firm most significant.
pub fn ne_profiles(index: &[f64], delta: &[f64], u: &[f64]) -> Vec<Vec<u8>> {
    let n = index.len();
    (0..1usize << n)
        .map(|b| profile(b, n))
        .filter(|y| is_pure_ne(index, delta, u, y))
        .map(|y| y.into_iter().map(u8::from).collect())
        .collect()
}

/// Pure equilibria of the baseline game at covariate `x`, shocks `u` and
/// `θ = (α, Δ, ..)`.
pub fn enumerate_pure_ne(x: &[f64], u: &[f64], theta: &[f64], n_firms: usize) -> Vec<Vec<u8>> {
    let k = x.len();
    let xa = dot(x, &theta[..k]);
    ne_profiles(&vec![xa; n_firms], &theta[k..k + n_firms], u)
}

pub fn build_entry_model(cfg: &EntryGameConfig) -> Result<ModelSpec> {
    cfg.validate()?;
    let (n, k) = (cfg.n_firms, cfg.k());
    let instruments = 1 + k;
    let support = SupportPredicate::new(move |u, z, t| {
        let xa = dot(&z[..k], &t[..k]);
        let mut y = [false; MAX_CF_FIRMS];
        for (j, v) in z[k..k + n].iter().enumerate() {
            y[j] = *v > 0.5;
        }
        is_pure_ne(&[xa; MAX_CF_FIRMS][..n], &t[k..k + n], u, &y[..n])
    });
    let inst = move |z: &[f64], i: usize| if i == 0 { 1.0 } else { z[i - 1] };
    let (dim, sigma2) = match cfg.variant {
        MomentVariant::Median => (n * instruments, None),
        MomentVariant::MedianPlusSymmetric => (n * instruments * (1 + n), None),
        MomentVariant::UncorrVariance => (n * (instruments + 1), Some(cfg.revenue_variance.clone())),
    };
    let variant = cfg.variant;
    let r2 = move |u: &[f64], z: &[f64], t: &[f64], o: &mut [f64]| {
        let mut r = 0;
        match variant {
            MomentVariant::Median | MomentVariant::MedianPlusSymmetric => {
                for j in 0..n {
                    let m = if u[j] <= 0.0 { 0.5 } else { -0.5 };
                    for i in 0..instruments {
                        o[r] = inst(z, i) * m;
                        r += 1;
                    }
                }
                if variant == MomentVariant::MedianPlusSymmetric {
                    let xa = dot(&z[..k], &t[..k]);
                    for j in 0..n {
                        for s in 0..n {
                            let c = -xa + t[k + j] * s as f64;
                            let m = f64::from(u8::from(u[j] >= c)) - f64::from(u8::from(u[j] <= -c));
                            for i in 0..instruments {
                                o[r] = inst(z, i) * m;
                                r += 1;
                            }
                        }
                    }
                }
            }
            MomentVariant::UncorrVariance => {
                let sigma2 = sigma2.as_deref().unwrap_or(&[]);
                for j in 0..n {
                    for i in 0..instruments {
                        o[r] = inst(z, i) * u[j];
                        r += 1;
                    }
                    o[r] = u[j] * u[j] - t[k + n + j] * sigma2[j];
                    r += 1;
                }
            }
        }
    };
    let label = match cfg.variant {
        MomentVariant::Median => "entry_median",
        MomentVariant::MedianPlusSymmetric => "entry_symmetric",
        MomentVariant::UncorrVariance => "entry_variance",
    };
    Ok(ModelSpec {
        label: label.into(),
        latent: cfg.latent_domain(n)?.into(),
        z_dim: k + n,
        support,
        moments: MomentSpec::latent_only(dim, r2)?,
        params: cfg.parameter_box()?,
    })
}

/// Equilibrium selection used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    FirstLex,
    Random(u64),
}

/// Law of the shocks, independent across firms and of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockLaw {
    /// Equal weights on each value, assigned so that every
    /// `(x, u_0, .., u_{n-1})` combination appears equally often when the
    /// market count is a multiple of the number of combinations.
    Discrete(Vec<f64>),
    Degenerate(Vec<f64>),
    Normal { sd: f64, seed: u64 },
}

impl Default for ShockLaw {
    fn default() -> Self {
        ShockLaw::Discrete(vec![-1.5, -0.5, 0.5, 1.5])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<u8>,
}

pub fn simulate_entry_markets(
    cfg: &EntryGameConfig,
    theta0: &[f64],
    n_markets: usize,
    selection: Selection,
    law: &ShockLaw,
) -> Result<Vec<Market>> {
    cfg.validate()?;
    if n_markets == 0 {
        return Err(Error::Config("n_markets must be positive".into()));
    }
    let (n, k) = (cfg.n_firms, cfg.k());
    if theta0.len() < k + n {
        return Err(Error::Dimension(format!("theta0 has length {}, expected at least {}", theta0.len(), k + n)));
    }
    if theta0[k..k + n].iter().any(|d| *d < 0.0) {
        return Err(Error::Config("rivalry effects must be nonnegative".into()));
    }
    let nx = cfg.x_support.len();
    let mut shock_rng = match law {
        ShockLaw::Normal { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let normal = match law {
        ShockLaw::Normal { sd, .. } => Some(Normal::new(0.0, *sd).map_err(|e| Error::Config(format!("shock law: {e}")))?),
        _ => None,
    };
    match law {
        ShockLaw::Discrete(v) if v.is_empty() => return Err(Error::Config("discrete shock law is empty".into())),
        ShockLaw::Degenerate(v) if v.len() != n => {
            return Err(Error::Config(format!("degenerate shock needs {n} values")))
        }
        _ => {}
    }
    let mut select_rng = match selection {
        Selection::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Selection::FirstLex => None,
    };
    let mut markets = Vec::with_capacity(n_markets);
    for m in 0..n_markets {
        let x = cfg.x_support[m % nx].clone();
        let mut rest = m / nx;
        let u: Vec<f64> = match law {
            ShockLaw::Discrete(v) => (0..n)
                .map(|_| {
                    let val = v[rest % v.len()];
                    rest /= v.len();
                    val
                })
                .collect(),
            ShockLaw::Degenerate(v) => v.clone(),
            ShockLaw::Normal { .. } => {
                let (d, rng) = (normal.as_ref().unwrap(), shock_rng.as_mut().unwrap());
                (0..n).map(|_| d.sample(rng)).collect()
            }
        };
        let eq = enumerate_pure_ne(&x, &u, theta0, n);
        assert!(!eq.is_empty(), "no pure equilibrium with nonnegative rivalry effects");
        let y = match select_rng.as_mut() {
            None => eq[0].clone(),
            Some(rng) => eq.choose(rng).cloned().unwrap_or_default(),
        };
        markets.push(Market { x, u, y });
    }
    Ok(markets)
}

/// Empirical distribution of `(x, y)` across simulated markets.
pub fn simulate_entry_data(
    cfg: &EntryGameConfig,
    theta0: &[f64],
    n_markets: usize,
    selection: Selection,
    law: &ShockLaw,
) -> Result<DiscreteDistribution> {
    let markets = simulate_entry_markets(cfg, theta0, n_markets, selection, law)?;
    let samples: Vec<Vec<f64>> = markets
        .iter()
        .map(|m| {
            let mut z = m.x.clone();
            z.extend(m.y.iter().map(|&v| f64::from(v)));
            z
        })
        .collect();
    DiscreteDistribution::from_samples(&samples)
}

/// `φ(x) = scale · x + shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineMap {
    pub scale: f64,
    pub shift: Vec<f64>,
}

impl AffineMap {
    pub fn identity(k: usize) -> Self {
        Self {
            scale: 1.0,
            shift: vec![0.0; k],
        }
    }

    fn apply_dot(&self, x: &[f64], alpha: &[f64]) -> f64 {
        x.iter().zip(&self.shift).zip(alpha).map(|((x, s), a)| (self.scale * x + s) * a).sum()
    }
}

/// Rivalry effect of an added competitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMap {
    Mean,
    Min,
    Max,
    Value(f64),
}

impl DeltaMap {
    fn apply(&self, d: &[f64]) -> f64 {
        match *self {
            DeltaMap::Mean => d.iter().sum::<f64>() / d.len() as f64,
            DeltaMap::Min => d.iter().copied().fold(f64::INFINITY, f64::min),
            DeltaMap::Max => d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            DeltaMap::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfCase {
    /// Each firm's covariate passes through its own affine map.
    ShiftX { maps: Vec<AffineMap> },
    /// All firms merge into one that inherits the largest covariate and
    /// the largest shock.
    Merger,
    /// An extra potential entrant with its own gridded shock.
    NewCompetitor { x_map: AffineMap, delta_map: DeltaMap },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfTarget {
    ExpectedEntrants,
    ProbUnserved,
    TotalSurplus,
    /// Expected profit of firm `j` given that it enters (ratio type).
    ProfitGivenEntry(usize),
}

impl CfTarget {
    pub fn label(&self) -> String {
        match self {
            CfTarget::ExpectedEntrants => "expected_entrants".into(),
            CfTarget::ProbUnserved => "prob_unserved".into(),
            CfTarget::TotalSurplus => "total_surplus".into(),
            CfTarget::ProfitGivenEntry(j) => format!("profit_given_entry_{j}"),
        }
    }
}

const MAX_CF_FIRMS: usize = 4;

/// Counterfactual game primitives at one point: payoff index, rivalry
/// effect and shock per counterfactual firm.
#[derive(Debug, Clone)]
struct CfGame {
    case: CfCase,
    n: usize,
    k: usize,
}

struct Primitives {
    n: usize,
    index: [f64; MAX_CF_FIRMS],
    delta: [f64; MAX_CF_FIRMS],
    u: [f64; MAX_CF_FIRMS],
}

impl CfGame {
    fn n_cf(&self) -> usize {
        match self.case {
            CfCase::ShiftX { .. } => self.n,
            CfCase::Merger => 1,
            CfCase::NewCompetitor { .. } => self.n + 1,
        }
    }

    fn primitives(&self, p: &CfPoint) -> Primitives {
        let (n, k) = (self.n, self.k);
        let x = &p.z[..k];
        let alpha = &p.theta[..k];
        let delta = &p.theta[k..k + n];
        let mut out = Primitives {
            n: self.n_cf(),
            index: [0.0; MAX_CF_FIRMS],
            delta: [0.0; MAX_CF_FIRMS],
            u: [0.0; MAX_CF_FIRMS],
        };
        match &self.case {
            CfCase::ShiftX { maps } => {
                for j in 0..n {
                    out.index[j] = maps[j].apply_dot(x, alpha);
                    out.delta[j] = delta[j];
                    out.u[j] = p.u[j];
                }
            }
            CfCase::Merger => {
                // x is shared, so the largest covariate is x itself
                out.index[0] = dot(x, alpha);
                out.u[0] = p.u[..n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            CfCase::NewCompetitor { x_map, delta_map } => {
                let xa = dot(x, alpha);
                for j in 0..n {
                    out.index[j] = xa;
                    out.delta[j] = delta[j];
                    out.u[j] = p.u[j];
                }
                out.index[n] = x_map.apply_dot(x, alpha);
                out.delta[n] = delta_map.apply(delta);
                out.u[n] = p.u_cf[0];
            }
        }
        out
    }
}

impl Primitives {
    fn is_ne(&self, y_cf: &[f64]) -> bool {
        let mut y = [false; MAX_CF_FIRMS];
        for (j, v) in y_cf.iter().enumerate() {
            y[j] = *v > 0.5;
        }
        is_pure_ne(&self.index[..self.n], &self.delta[..self.n], &self.u[..self.n], &y[..self.n])
    }

    fn profit(&self, y_cf: &[f64], j: usize) -> f64 {
        let entrants: f64 = y_cf.iter().sum();
        y_cf[j] * (self.index[j] - self.delta[j] * (entrants - y_cf[j]) + self.u[j])
    }
}

/// Counterfactual specification for the entry game. Counterfactual
/// outcomes range over all entry profiles of the modified game; the
/// correspondence is its pure equilibrium set.
pub fn build_entry_counterfactual(cfg: &EntryGameConfig, case: &CfCase, target: CfTarget) -> Result<CounterfactualSpec> {
    cfg.validate()?;
    let (n, k) = (cfg.n_firms, cfg.k());
    match case {
        CfCase::ShiftX { maps } => {
            if maps.len() != n || maps.iter().any(|m| m.shift.len() != k) {
                return Err(Error::Config(format!("shift_x needs {n} maps with {k}-dimensional shifts")));
            }
        }
        CfCase::NewCompetitor { x_map, delta_map } => {
            if x_map.shift.len() != k {
                return Err(Error::Config(format!("x_map shift must have length {k}")));
            }
            if let DeltaMap::Value(v) = delta_map {
                if *v < 0.0 {
                    return Err(Error::Config("new competitor rivalry effect must be nonnegative".into()));
                }
            }
        }
        CfCase::Merger => {}
    }
    let game = CfGame { case: case.clone(), n, k };
    let n_cf = game.n_cf();
    let outcomes = (0..1usize << n_cf)
        .map(|b| profile(b, n_cf).into_iter().map(|e| f64::from(u8::from(e))).collect())
        .collect();
    let cf_latent = match case {
        CfCase::NewCompetitor { .. } => Some(cfg.latent_domain(1)?),
        _ => None,
    };
    let r_tilde: Option<(usize, Arc<crate::augment::CfVectorFn>)> = match case {
        CfCase::NewCompetitor { .. } => Some((
            1 + k,
            Arc::new(move |p: &CfPoint, o: &mut [f64]| {
                let m = if p.u_cf[0] <= 0.0 { 0.5 } else { -0.5 };
                o[0] = m;
                for i in 0..k {
                    o[1 + i] = p.z[i] * m;
                }
            }),
        )),
        _ => None,
    };
    let g = game.clone();
    let correspondence = Arc::new(move |p: &CfPoint| g.primitives(p).is_ne(p.y_cf));
    let (target_def, lo, hi, res) = match target {
        CfTarget::ExpectedEntrants => (
            TargetDefinition::Mean(Arc::new(|p: &CfPoint| p.y_cf.iter().sum())),
            0.0,
            n_cf as f64,
            10 * n_cf + 1,
        ),
        CfTarget::ProbUnserved => (
            TargetDefinition::Mean(Arc::new(|p: &CfPoint| f64::from(u8::from(p.y_cf.iter().all(|&v| v < 0.5))))),
            0.0,
            1.0,
            21,
        ),
        CfTarget::TotalSurplus => {
            let g = game.clone();
            (
                TargetDefinition::Mean(Arc::new(move |p: &CfPoint| {
                    let pr = g.primitives(p);
                    (0..pr.n).map(|j| pr.profit(p.y_cf, j)).sum()
                })),
                -50.0,
                50.0,
                101,
            )
        }
        CfTarget::ProfitGivenEntry(j) => {
            if j >= n_cf {
                return Err(Error::Config(format!("firm {j} does not exist in the counterfactual game")));
            }
            let g = game.clone();
            (
                TargetDefinition::Ratio {
                    g: Arc::new(move |p: &CfPoint| g.primitives(p).profit(p.y_cf, j)),
                    h: Arc::new(move |p: &CfPoint| p.y_cf[j]),
                },
                -50.0,
                50.0,
                101,
            )
        }
    };
    let label = match case {
        CfCase::ShiftX { .. } => "shift_x",
        CfCase::Merger => "merger",
        CfCase::NewCompetitor { .. } => "new_competitor",
    };
    Ok(CounterfactualSpec {
        label: format!("{label}/{}", target.label()),
        outcomes: OutcomeDomain::Discrete(outcomes),
        cf_latent,
        correspondence,
        r_tilde,
        target: target_def,
        theta_tilde_box: ParameterBox::new(vec![lo], vec![hi], vec![res])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::section;

    #[test]
    fn equilibria_small_cases() {
        let t = [0.0, 1.0, 1.0];
        assert_eq!(enumerate_pure_ne(&[1.0], &[0.5, 0.5], &t, 2), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(enumerate_pure_ne(&[1.0], &[-1.0, -1.0], &[0.0, 0.7, 2.0], 2), vec![vec![0, 0]]);
        assert_eq!(enumerate_pure_ne(&[1.0], &[1.0, 1.0], &[0.0, 0.0, 0.0], 2), vec![vec![1, 1]]);
    }

    #[test]
    fn section_matches_best_responses() {
        let cfg = EntryGameConfig {
            latent_bound: 3.0,
            latent_step: 0.5,
            ..Default::default()
        };
        let m = build_entry_model(&cfg).unwrap();
        let g = m.default_grid().unwrap();
        // x'α = 0, Δ = (1, 1), y = (1, 0)
        let s = section(&m, &g, &[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0]).unwrap();
        let expected: Vec<usize> = (0..g.len())
            .filter(|&i| {
                let u = g.point(i);
                u[0] >= 0.0 && u[1] <= 1.0
            })
            .collect();
        assert_eq!(s, expected);
    }

    #[test]
    fn moment_dimensions() {
        let mut cfg = EntryGameConfig::default();
        assert_eq!(build_entry_model(&cfg).unwrap().moments.dim_r2(), 4);
        cfg.variant = MomentVariant::MedianPlusSymmetric;
        assert_eq!(build_entry_model(&cfg).unwrap().moments.dim_r2(), 4 + 8);
        cfg.variant = MomentVariant::UncorrVariance;
        let m = build_entry_model(&cfg).unwrap();
        assert_eq!((m.moments.dim_r1(), m.moments.dim_r2(), m.params.dim()), (0, 6, 5));
    }

    #[test]
    fn degenerate_shocks_keep_everyone_out() {
        let cfg = EntryGameConfig::default();
        let f = simulate_entry_data(&cfg, &[0.0, 1.0, 1.0], 10, Selection::FirstLex, &ShockLaw::Degenerate(vec![-10.0, -10.0]))
            .unwrap();
        assert!(f.atoms().iter().all(|a| a.z[1] == 0.0 && a.z[2] == 0.0));
        assert!(simulate_entry_data(&cfg, &[0.0, 1.0, 1.0], 0, Selection::FirstLex, &ShockLaw::default()).is_err());
    }

    #[test]
    fn merger_is_single_valued_off_knife_edge() {
        let cfg = EntryGameConfig::default();
        let cf = build_entry_counterfactual(&cfg, &CfCase::Merger, CfTarget::ExpectedEntrants).unwrap();
        let OutcomeDomain::Discrete(ys) = &cf.outcomes else { panic!() };
        let theta = [0.4, 1.0, 1.0];
        for u0 in [-1.5, -0.4, 0.0, 0.5] {
            for u1 in [-2.0, -0.4, 1.0] {
                let u = [u0, u1];
                let z = [1.0, 0.0, 0.0];
                let count = ys
                    .iter()
                    .filter(|y| (cf.correspondence)(&CfPoint { y_cf: y, u_cf: &[], z: &z, u: &u, theta: &theta }))
                    .count();
                let knife = (0.4f64 + u0.max(u1)).abs() < 1e-12;
                assert_eq!(count, if knife { 2 } else { 1 }, "u = {u:?}");
            }
        }
    }
}
