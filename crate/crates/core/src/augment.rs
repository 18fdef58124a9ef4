//! Counterfactual augmentation: a baseline model plus a counterfactual
//! outcome correspondence and a defining moment for the target parameter,
//! stacked into one model over the latent `(u, ỹ, ũ)` and parameter
//! `(θ, θ̃)`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{
    functional_bounds, min_violation, min_violation_with, optimize_functional, BoundsResult, ExtraRows,
    ScalarFn, Sense,
};
use crate::model::{
    DiscreteDistribution, LatentDomain, LatentFactor, LatentGrid, LatentSpace, ModelSpec, MomentSpec, FinitePoints,
    ParameterBox, SupportPredicate,
};
use crate::support::GROW_TOL;

/// Arguments of every counterfactual primitive.
#[derive(Debug, Clone, Copy)]
pub struct CfPoint<'a> {
    pub y_cf: &'a [f64],
    pub u_cf: &'a [f64],
    pub z: &'a [f64],
    pub u: &'a [f64],
    pub theta: &'a [f64],
}

pub type CfPredicateFn = dyn Fn(&CfPoint) -> bool + Send + Sync;
pub type CfScalarFn = dyn Fn(&CfPoint) -> f64 + Send + Sync;
pub type CfVectorFn = dyn Fn(&CfPoint, &mut [f64]) + Send + Sync;

#[derive(Debug, Clone)]
pub enum OutcomeDomain {
    /// Enumerated exactly.
    Discrete(Vec<Vec<f64>>),
    /// Gridded like any latent box.
    Continuous(LatentDomain),
}

impl OutcomeDomain {
    fn factor(&self) -> Result<LatentFactor> {
        Ok(match self {
            OutcomeDomain::Discrete(v) => LatentFactor::Finite(FinitePoints::new(v.clone())?),
            OutcomeDomain::Continuous(d) => LatentFactor::Box(d.clone()),
        })
    }
}

/// How `θ̃` is defined through its moment `E m̃ = 0`.
#[derive(Clone)]
pub enum TargetDefinition {
    /// `m̃ = g − θ̃`.
    Mean(Arc<CfScalarFn>),
    /// `m̃ = g − θ̃·h`.
    Ratio { g: Arc<CfScalarFn>, h: Arc<CfScalarFn> },
    /// Quantile-type targets. Rejected by `augment`.
    Quantile,
}

impl fmt::Debug for TargetDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetDefinition::Mean(_) => "Mean",
            TargetDefinition::Ratio { .. } => "Ratio",
            TargetDefinition::Quantile => "Quantile",
        })
    }
}

#[derive(Clone)]
pub struct CounterfactualSpec {
    pub label: String,
    pub outcomes: OutcomeDomain,
    pub cf_latent: Option<LatentDomain>,
    pub correspondence: Arc<CfPredicateFn>,
    /// Supplementary moments on the counterfactual latent.
    pub r_tilde: Option<(usize, Arc<CfVectorFn>)>,
    pub target: TargetDefinition,
    pub theta_tilde_box: ParameterBox,
}

impl fmt::Debug for CounterfactualSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CounterfactualSpec")
            .field("label", &self.label)
            .field("outcomes", &self.outcomes)
            .field("cf_latent", &self.cf_latent)
            .field("r_tilde_dim", &self.r_tilde.as_ref().map(|r| r.0))
            .field("target", &self.target)
            .field("theta_tilde_box", &self.theta_tilde_box)
            .finish()
    }
}

/// Where each role sits inside the augmented coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedLayout {
    pub u: Range<usize>,
    pub y_cf: Range<usize>,
    pub u_cf: Range<usize>,
    pub theta: Range<usize>,
    pub theta_tilde: usize,
    /// Ranges inside the r2 block of the augmented model.
    pub r2_base: Range<usize>,
    pub r_tilde: Range<usize>,
    pub m_tilde: usize,
}

impl AugmentedLayout {
    fn split<'a>(&self, up: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        (&up[self.u.clone()], &up[self.y_cf.clone()], &up[self.u_cf.clone()])
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedModel {
    /// Full model over `(θ, θ̃)` with `m̃` appended to r2.
    pub model: ModelSpec,
    /// Same latent and support, baseline parameter only, without `m̃`.
    /// Functional bounds on `θ̃` run on this model.
    pub restriction: ModelSpec,
    pub layout: AugmentedLayout,
    pub spec: CounterfactualSpec,
}

/// Builds the augmented model. Nonemptiness of the correspondence depends
/// on data and θ, so it is checked separately by [`check_nonempty`].
pub fn augment(base: &ModelSpec, cf: &CounterfactualSpec) -> Result<AugmentedModel> {
    if matches!(cf.target, TargetDefinition::Quantile) {
        return Err(Error::NotSupported(
            "quantile-type counterfactual parameters (production-function example)".into(),
        ));
    }
    if cf.theta_tilde_box.dim() != 1 {
        return Err(Error::NotSupported("only scalar counterfactual parameters are supported".into()));
    }
    let du = base.latent.dim();
    let mut factors: Vec<LatentFactor> = base.latent.factors().to_vec();
    let outcome = cf.outcomes.factor()?;
    let dy = match &outcome {
        LatentFactor::Finite(p) => p.dim(),
        LatentFactor::Box(d) => d.dim(),
    };
    factors.push(outcome);
    let duc = cf.cf_latent.as_ref().map_or(0, LatentDomain::dim);
    if let Some(d) = &cf.cf_latent {
        factors.push(LatentFactor::Box(d.clone()));
    }
    let latent = LatentSpace::new(factors)?;

    let p = base.params.dim();
    let d1 = base.moments.dim_r1();
    let d2 = base.moments.dim_r2();
    let dt = cf.r_tilde.as_ref().map_or(0, |r| r.0);
    let layout = AugmentedLayout {
        u: 0..du,
        y_cf: du..du + dy,
        u_cf: du + dy..du + dy + duc,
        theta: 0..p,
        theta_tilde: p,
        r2_base: 0..d2,
        r_tilde: d2..d2 + dt,
        m_tilde: d2 + dt,
    };

    let support = {
        let base_support = base.support.clone();
        let corr = cf.correspondence.clone();
        let lay = layout.clone();
        move |up: &[f64], z: &[f64], t: &[f64]| {
            let (u, y_cf, u_cf) = lay.split(up);
            let theta = &t[..p];
            base_support.contains(u, z, theta) && corr(&CfPoint { y_cf, u_cf, z, u, theta })
        }
    };
    let r1 = {
        let m = base.moments.clone();
        move |z: &[f64], t: &[f64], o: &mut [f64]| m.eval_r1(z, &t[..p], o)
    };
    let r2_restricted = {
        let m = base.moments.clone();
        let lay = layout.clone();
        let rt = cf.r_tilde.clone();
        move |up: &[f64], z: &[f64], t: &[f64], o: &mut [f64]| {
            let (u, y_cf, u_cf) = lay.split(up);
            let theta = &t[..p];
            m.eval_r2(u, z, theta, &mut o[..d2]);
            if let Some((_, f)) = &rt {
                f(&CfPoint { y_cf, u_cf, z, u, theta }, &mut o[d2..d2 + dt]);
            }
        }
    };
    let target = cf.target.clone();
    let r2_full = {
        let inner = r2_restricted.clone();
        let lay = layout.clone();
        move |up: &[f64], z: &[f64], t: &[f64], o: &mut [f64]| {
            inner(up, z, t, &mut o[..d2 + dt]);
            let (u, y_cf, u_cf) = lay.split(up);
            let pt = CfPoint { y_cf, u_cf, z, u, theta: &t[..p] };
            let tt = t[p];
            o[d2 + dt] = match &target {
                TargetDefinition::Mean(g) => g(&pt) - tt,
                TargetDefinition::Ratio { g, h } => g(&pt) - tt * h(&pt),
                TargetDefinition::Quantile => f64::NAN,
            };
        }
    };

    let support = SupportPredicate::new(support);
    let restriction = ModelSpec {
        label: format!("{}+{}/restriction", base.label, cf.label),
        latent: latent.clone(),
        z_dim: base.z_dim,
        support: support.clone(),
        moments: MomentSpec::new(d1, d2 + dt, r1.clone(), r2_restricted)?,
        params: base.params.clone(),
    };
    let model = ModelSpec {
        label: format!("{}+{}", base.label, cf.label),
        latent,
        z_dim: base.z_dim,
        support,
        moments: MomentSpec::new(d1, d2 + dt + 1, r1, r2_full)?,
        params: base.params.product(&cf.theta_tilde_box),
    };
    Ok(AugmentedModel {
        model,
        restriction,
        layout,
        spec: cf.clone(),
    })
}

/// Grid of the counterfactual block `(ỹ, ũ)` alone at `truncation`.
fn cf_grid(cf: &CounterfactualSpec, truncation: f64) -> Result<LatentGrid> {
    let mut factors = vec![cf.outcomes.factor()?];
    if let Some(d) = &cf.cf_latent {
        factors.push(LatentFactor::Box(d.clone()));
    }
    LatentSpace::new(factors)?.grid(truncation)
}

/// Checks that for every atom, θ and baseline-admissible grid point `u`
/// some counterfactual grid point satisfies the correspondence. Reports the
/// first witness otherwise.
pub fn check_nonempty(
    aug: &AugmentedModel,
    base: &ModelSpec,
    data: &DiscreteDistribution,
    thetas: &[Vec<f64>],
    truncation: f64,
) -> Result<()> {
    let ugrid = base.grid(truncation)?;
    let cgrid = cf_grid(&aug.spec, truncation)?;
    let dy = aug.layout.y_cf.len();
    let corr = &aug.spec.correspondence;
    for theta in thetas {
        for atom in data.atoms() {
            let z = &atom.z;
            for u in ugrid.points() {
                if !base.support.contains(u, z, theta) {
                    continue;
                }
                let found = cgrid.points().any(|c| {
                    corr(&CfPoint {
                        y_cf: &c[..dy],
                        u_cf: &c[dy..],
                        z,
                        u,
                        theta,
                    })
                });
                if !found {
                    return Err(Error::NonemptyCorrespondenceViolated {
                        z: z.clone(),
                        u: u.to_vec(),
                        theta: theta.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Baseline-θ coordinates of augmented member points, first-seen order,
/// duplicates removed.
pub fn project_theta<'a>(members: impl IntoIterator<Item = &'a [f64]>, layout: &AugmentedLayout) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for t in members {
        let b = t[layout.theta.clone()].to_vec();
        if !out.contains(&b) {
            out.push(b);
        }
    }
    out
}

fn lift(layout: &AugmentedLayout, f: Arc<CfScalarFn>) -> ScalarFn {
    let lay = layout.clone();
    Arc::new(move |up: &[f64], z: &[f64], theta: &[f64]| {
        let (u, y_cf, u_cf) = lay.split(up);
        f(&CfPoint { y_cf, u_cf, z, u, theta })
    })
}

/// Relative width at which ratio bisection stops.
pub const RATIO_TOL: f64 = 1e-6;

/// Interval of `θ̃` consistent with the augmented model at baseline `θ`.
/// Mean targets take two functional LPs; ratio targets bisect each endpoint
/// inside `theta_tilde_box` with an LP feasibility check per candidate.
pub fn theta_tilde_interval(
    aug: &AugmentedModel,
    data: &DiscreteDistribution,
    theta: &[f64],
    truncation: Option<f64>,
) -> Result<BoundsResult> {
    let m = truncation.unwrap_or_else(|| aug.restriction.latent.default_truncation());
    let grid = aug.restriction.grid(m)?;
    match &aug.spec.target {
        TargetDefinition::Mean(g) => {
            let g = lift(&aug.layout, g.clone());
            functional_bounds(&aug.restriction, &grid, data, theta, &g, None)
        }
        TargetDefinition::Ratio { g, h } => {
            let g = lift(&aug.layout, g.clone());
            let h = lift(&aug.layout, h.clone());
            let (lower, upper) = ratio_interval(aug, &grid, data, theta, &g, &h)?;
            let mut res = BoundsResult {
                lower,
                upper,
                truncation: m,
                lower_next: None,
                upper_next: None,
                lower_growing: false,
                upper_growing: false,
            };
            if aug.restriction.latent.has_unbounded() {
                let next = aug.restriction.grid(2.0 * m)?;
                let (lo2, hi2) = ratio_interval(aug, &next, data, theta, &g, &h)?;
                res.lower_next = Some(lo2);
                res.upper_next = Some(hi2);
                res.lower_growing = lower - lo2 > GROW_TOL * (1.0 + lower.abs());
                res.upper_growing = hi2 - upper > GROW_TOL * (1.0 + upper.abs());
            }
            Ok(res)
        }
        TargetDefinition::Quantile => Err(Error::NotSupported("quantile-type counterfactual parameters".into())),
    }
}

fn ratio_interval(
    aug: &AugmentedModel,
    grid: &LatentGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
    g: &ScalarFn,
    h: &ScalarFn,
) -> Result<(f64, f64)> {
    let model = &aug.restriction;
    let base = min_violation(model, grid, data, theta)?;
    if !base.is_member() {
        return Err(Error::EmptyInterval(format!(
            "baseline parameter is outside the identified set (violation {:e})",
            base.value
        )));
    }
    let hmin = optimize_functional(model, grid, data, theta, h, None, Sense::Minimize)?;
    if hmin.value <= hmin.tolerances.lp {
        return Err(Error::RatioDegenerate {
            min_denominator: hmin.value,
        });
    }
    // seed inside the feasible set: the ratio under the h-minimizing selection
    let mut eg = 0.0;
    for mass in &hmin.selection {
        let z = &data.atoms()[mass.atom].z;
        eg += mass.mass * g(grid.point(mass.grid_index), z, theta);
    }
    let t0 = eg / hmin.value;

    let feasible = |t: f64| -> Result<bool> {
        let (g, h) = (g.clone(), h.clone());
        let extra = ExtraRows::new(1, move |u, z, th, o| o[0] = g(u, z, th) - t * h(u, z, th));
        Ok(min_violation_with(model, grid, data, theta, Some(&extra))?.is_member())
    };
    let bx = &aug.spec.theta_tilde_box;
    let (a, b) = (bx.lower()[0], bx.upper()[0]);
    let t0 = t0.clamp(a, b);
    if !feasible(t0)? {
        return Err(Error::NumericalInstability(format!(
            "ratio seed {t0} failed its own feasibility check"
        )));
    }
    let endpoint = |outer: f64| -> Result<f64> {
        if feasible(outer)? {
            return Ok(outer);
        }
        let (mut inside, mut out) = (t0, outer);
        while (out - inside).abs() > RATIO_TOL * (1.0 + inside.abs()) {
            let mid = 0.5 * (inside + out);
            if feasible(mid)? {
                inside = mid;
            } else {
                out = mid;
            }
        }
        Ok(inside)
    };
    let lo = endpoint(a)?;
    let hi = endpoint(b)?;
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AxisBounds, ObservedAtom};

    /// Baseline: scalar latent on [-1, 1] step 0.5, no restrictions beyond
    /// a trivial r2.
    fn base() -> ModelSpec {
        let d = LatentDomain::new(vec![AxisBounds::finite(-1.0, 1.0)], 1.0, 5).unwrap();
        ModelSpec {
            label: "toy".into(),
            latent: d.into(),
            z_dim: 1,
            support: SupportPredicate::new(|u, z, _| (u[0] - z[0]).abs() < 1e-9),
            moments: MomentSpec::latent_only(1, |u, _, t, o| o[0] = u[0] - t[0]).unwrap(),
            params: ParameterBox::new(vec![-1.0], vec![1.0], vec![5]).unwrap(),
        }
    }

    fn data() -> DiscreteDistribution {
        DiscreteDistribution::new(vec![
            ObservedAtom { z: vec![-0.5], weight: 0.5 },
            ObservedAtom { z: vec![0.5], weight: 0.5 },
        ])
        .unwrap()
    }

    /// ỹ ∈ {0, 1} free, target E ỹ.
    fn free_binary(target: TargetDefinition) -> CounterfactualSpec {
        CounterfactualSpec {
            label: "free".into(),
            outcomes: OutcomeDomain::Discrete(vec![vec![0.0], vec![1.0]]),
            cf_latent: None,
            correspondence: Arc::new(|_| true),
            r_tilde: None,
            target,
            theta_tilde_box: ParameterBox::new(vec![-2.0], vec![2.0], vec![41]).unwrap(),
        }
    }

    #[test]
    fn dimensions_and_quantile_rejection() {
        let b = base();
        let cf = free_binary(TargetDefinition::Mean(Arc::new(|p| p.y_cf[0])));
        let a = augment(&b, &cf).unwrap();
        assert_eq!(a.model.moments.dim(), b.moments.dim() + 1);
        assert_eq!(a.model.latent.dim(), 2);
        assert_eq!(a.model.params.dim(), 2);
        let q = free_binary(TargetDefinition::Quantile);
        assert!(matches!(augment(&b, &q), Err(Error::NotSupported(_))));
    }

    #[test]
    fn mean_and_ratio_intervals() {
        let b = base();
        let a = augment(&b, &free_binary(TargetDefinition::Mean(Arc::new(|p| p.y_cf[0])))).unwrap();
        let r = theta_tilde_interval(&a, &data(), &[0.0], None).unwrap();
        assert!(r.lower.abs() < 1e-9 && (r.upper - 1.0).abs() < 1e-9, "{r:?}");

        // E[u ỹ]/E[ỹ] with ỹ = 1 forced where u > 0: ratio is u = 0.5.
        let mut cf = free_binary(TargetDefinition::Ratio {
            g: Arc::new(|p| p.u[0] * p.y_cf[0]),
            h: Arc::new(|p| p.y_cf[0]),
        });
        cf.correspondence = Arc::new(|p| p.u[0] < 0.0 || p.y_cf[0] == 1.0);
        let a = augment(&b, &cf).unwrap();
        let r = theta_tilde_interval(&a, &data(), &[0.0], None).unwrap();
        // mass on y=1 at u=0.5 is 0.5, optional extra mass at u=-0.5 up to 0.5
        assert!((r.upper - 0.5).abs() < 1e-5 && r.lower.abs() < 1e-5, "{r:?}");

        let cf = free_binary(TargetDefinition::Ratio {
            g: Arc::new(|p| p.y_cf[0]),
            h: Arc::new(|p| p.y_cf[0]),
        });
        let a = augment(&b, &cf).unwrap();
        assert!(matches!(
            theta_tilde_interval(&a, &data(), &[0.0], None),
            Err(Error::RatioDegenerate { .. })
        ));
    }

    #[test]
    fn empty_correspondence_witness() {
        let b = base();
        let mut cf = free_binary(TargetDefinition::Mean(Arc::new(|p| p.y_cf[0])));
        cf.correspondence = Arc::new(|p| p.u[0] < 0.0);
        let a = augment(&b, &cf).unwrap();
        match check_nonempty(&a, &b, &data(), &[vec![0.0]], 1.0) {
            Err(Error::NonemptyCorrespondenceViolated { z, u, .. }) => {
                assert_eq!(z, vec![0.5]);
                assert_eq!(u, vec![0.5]);
            }
            other => panic!("{other:?}"),
        }
    }
}
