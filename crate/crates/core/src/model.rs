//! Model abstraction and latent-space discretization.
//!
//! A model is a support predicate `Γ(θ)` over (latent `u`, observed `z`)
//! together with a moment function `r = (r1, r2)`, where `r1` depends on `z`
//! only and `r2` carries every coordinate that reads `u`. Latent spaces are
//! discretized into tensor grids; unbounded axes are truncated at a radius
//! `M` and the points on the truncated faces are flagged.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One end of a latent axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Finite(f64),
    Unbounded,
}

impl Bound {
    pub fn is_finite(self) -> bool {
        matches!(self, Bound::Finite(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBounds {
    pub lower: Bound,
    pub upper: Bound,
}

impl AxisBounds {
    pub fn finite(lower: f64, upper: f64) -> Self {
        Self {
            lower: Bound::Finite(lower),
            upper: Bound::Finite(upper),
        }
    }

    pub fn unbounded() -> Self {
        Self {
            lower: Bound::Unbounded,
            upper: Bound::Unbounded,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    fn truncated(&self, truncation: f64) -> (f64, f64) {
        let lo = match self.lower {
            Bound::Finite(v) => v,
            Bound::Unbounded => -truncation,
        };
        let hi = match self.upper {
            Bound::Finite(v) => v,
            Bound::Unbounded => truncation,
        };
        (lo, hi)
    }
}

/// Box-shaped latent domain with a uniform grid resolution.
///
/// `points_per_dim` is the node count per axis at `default_truncation`. The
/// grid step of every axis is fixed by that pair, so a larger truncation adds
/// nodes at the same spacing and the grid at `2M` contains the grid at `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDomain {
    axes: Vec<AxisBounds>,
    default_truncation: f64,
    points_per_dim: usize,
}

#[derive(Debug, Clone)]
struct AxisNodes {
    values: Vec<f64>,
    /// Grid integer of each node, relative to the default-truncation origin.
    ks: Vec<i64>,
    lower_truncated: bool,
    upper_truncated: bool,
}

impl LatentDomain {
    pub fn new(axes: Vec<AxisBounds>, default_truncation: f64, points_per_dim: usize) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Config("latent domain needs at least one axis".into()));
        }
        if !(default_truncation > 0.0) || !default_truncation.is_finite() {
            return Err(Error::Config(format!(
                "default truncation must be positive, got {default_truncation}"
            )));
        }
        if points_per_dim < 2 {
            return Err(Error::Config("points_per_dim must be at least 2".into()));
        }
        for (i, ax) in axes.iter().enumerate() {
            for b in [ax.lower, ax.upper] {
                if let Bound::Finite(v) = b {
                    if !v.is_finite() {
                        return Err(Error::Config(format!("axis {i}: bound must be finite")));
                    }
                }
            }
            let (lo, hi) = ax.truncated(default_truncation);
            if !(lo < hi) {
                return Err(Error::Config(format!(
                    "axis {i}: empty box [{lo}, {hi}] at default truncation"
                )));
            }
        }
        Ok(Self {
            axes,
            default_truncation,
            points_per_dim,
        })
    }

    /// Uniform box with the same bounds on every axis.
    pub fn uniform(dim: usize, axis: AxisBounds, default_truncation: f64, points_per_dim: usize) -> Result<Self> {
        Self::new(vec![axis; dim], default_truncation, points_per_dim)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[AxisBounds] {
        &self.axes
    }

    pub fn default_truncation(&self) -> f64 {
        self.default_truncation
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    pub fn has_unbounded(&self) -> bool {
        self.axes.iter().any(|a| !a.is_bounded())
    }

    /// Grid spacing of an axis.
    pub fn step(&self, axis: usize) -> f64 {
        let (lo, hi) = self.axes[axis].truncated(self.default_truncation);
        (hi - lo) / (self.points_per_dim - 1) as f64
    }

    fn axis_nodes(&self, axis: usize, truncation: f64) -> Result<AxisNodes> {
        let ax = self.axes[axis];
        let (lo_def, hi_def) = ax.truncated(self.default_truncation);
        let denom = (self.points_per_dim - 1) as f64;
        let span = hi_def - lo_def;
        let (lo_m, hi_m) = ax.truncated(truncation);
        let k_min = if ax.lower.is_finite() {
            0
        } else {
            ((lo_m - lo_def) * denom / span - 1e-9).ceil() as i64
        };
        let k_max = if ax.upper.is_finite() {
            self.points_per_dim as i64 - 1
        } else {
            ((hi_m - lo_def) * denom / span + 1e-9).floor() as i64
        };
        if k_max - k_min < 1 {
            return Err(Error::Config(format!(
                "axis {axis}: truncation {truncation} leaves fewer than two grid nodes"
            )));
        }
        let ks: Vec<i64> = (k_min..=k_max).collect();
        // (lo·n + k·span)/n keeps node values identical across truncations and
        // across boxes sharing the same rational grid.
        let values = ks
            .iter()
            .map(|&k| (lo_def * denom + k as f64 * span) / denom)
            .collect();
        Ok(AxisNodes {
            values,
            ks,
            lower_truncated: !ax.lower.is_finite(),
            upper_truncated: !ax.upper.is_finite(),
        })
    }
}

/// Finite list of latent points, one factor of a product latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinitePoints {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl FinitePoints {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Config("finite latent factor needs at least one point".into()))?;
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Config("finite latent points must share a positive dimension".into()));
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LatentFactor {
    Box(LatentDomain),
    Finite(FinitePoints),
}

impl LatentFactor {
    fn dim(&self) -> usize {
        match self {
            LatentFactor::Box(d) => d.dim(),
            LatentFactor::Finite(f) => f.dim(),
        }
    }
}

/// Product of latent factors. Ordinary models have a single box factor;
/// augmented models append counterfactual outcomes and latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSpace {
    factors: Vec<LatentFactor>,
}

impl From<LatentDomain> for LatentSpace {
    fn from(d: LatentDomain) -> Self {
        Self {
            factors: vec![LatentFactor::Box(d)],
        }
    }
}

/// Grid nodes for one coordinate at the outer truncation, with membership
/// and face flags relative to the inner truncation.
struct CoordNodes {
    values: Vec<f64>,
    inner: Vec<bool>,
    inner_face: Vec<bool>,
    outer_face: Vec<bool>,
}

impl LatentSpace {
    pub fn new(factors: Vec<LatentFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Config("latent space needs at least one factor".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[LatentFactor] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(LatentFactor::dim).sum()
    }

    pub fn has_unbounded(&self) -> bool {
        self.factors.iter().any(|f| match f {
            LatentFactor::Box(d) => d.has_unbounded(),
            LatentFactor::Finite(_) => false,
        })
    }

    /// Per coordinate: whether the lower and upper ends are truncated.
    pub fn truncated_ends(&self) -> Vec<(bool, bool)> {
        let mut out = Vec::with_capacity(self.dim());
        for f in &self.factors {
            match f {
                LatentFactor::Box(d) => {
                    out.extend(d.axes().iter().map(|a| (!a.lower.is_finite(), !a.upper.is_finite())))
                }
                LatentFactor::Finite(p) => out.extend(std::iter::repeat((false, false)).take(p.dim())),
            }
        }
        out
    }

    /// Default truncation of the first box factor (1.0 if there is none).
    pub fn default_truncation(&self) -> f64 {
        self.factors
            .iter()
            .find_map(|f| match f {
                LatentFactor::Box(d) => Some(d.default_truncation()),
                LatentFactor::Finite(_) => None,
            })
            .unwrap_or(1.0)
    }

    pub fn grid(&self, truncation: f64) -> Result<LatentGrid> {
        Ok(self.nested_grid_between(truncation, truncation)?.inner_grid())
    }

    /// Grid at `2·truncation` with the points of the grid at `truncation`
    /// marked, so support values at both radii come out of one pass.
    pub fn nested_grid(&self, truncation: f64) -> Result<NestedGrid> {
        self.nested_grid_between(truncation, 2.0 * truncation)
    }

    fn nested_grid_between(&self, inner: f64, outer: f64) -> Result<NestedGrid> {
        if !(inner > 0.0) || !inner.is_finite() {
            return Err(Error::Config(format!("truncation must be positive, got {inner}")));
        }
        // Each factor becomes a list of "blocks" (points) with flags.
        struct Block {
            coords: Vec<f64>,
            inner: bool,
            inner_face: bool,
            outer_face: bool,
        }
        let mut factor_blocks: Vec<Vec<Block>> = Vec::with_capacity(self.factors.len());
        for factor in &self.factors {
            match factor {
                LatentFactor::Finite(f) => factor_blocks.push(
                    f.points
                        .iter()
                        .map(|p| Block {
                            coords: p.clone(),
                            inner: true,
                            inner_face: false,
                            outer_face: false,
                        })
                        .collect(),
                ),
                LatentFactor::Box(d) => {
                    let mut coords_nodes = Vec::with_capacity(d.dim());
                    for axis in 0..d.dim() {
                        let outer_nodes = d.axis_nodes(axis, outer)?;
                        let inner_nodes = d.axis_nodes(axis, inner)?;
                        let (kin_lo, kin_hi) = (inner_nodes.ks[0], *inner_nodes.ks.last().unwrap());
                        let (kout_lo, kout_hi) = (outer_nodes.ks[0], *outer_nodes.ks.last().unwrap());
                        let mut cn = CoordNodes {
                            values: outer_nodes.values.clone(),
                            inner: Vec::new(),
                            inner_face: Vec::new(),
                            outer_face: Vec::new(),
                        };
                        for &k in &outer_nodes.ks {
                            cn.inner.push(k >= kin_lo && k <= kin_hi);
                            cn.inner_face.push(
                                (inner_nodes.lower_truncated && k == kin_lo)
                                    || (inner_nodes.upper_truncated && k == kin_hi),
                            );
                            cn.outer_face.push(
                                (outer_nodes.lower_truncated && k == kout_lo)
                                    || (outer_nodes.upper_truncated && k == kout_hi),
                            );
                        }
                        coords_nodes.push(cn);
                    }
                    let mut blocks = vec![Block {
                        coords: Vec::new(),
                        inner: true,
                        inner_face: false,
                        outer_face: false,
                    }];
                    for cn in &coords_nodes {
                        let mut next = Vec::with_capacity(blocks.len() * cn.values.len());
                        for b in &blocks {
                            for (i, &v) in cn.values.iter().enumerate() {
                                let mut coords = b.coords.clone();
                                coords.push(v);
                                next.push(Block {
                                    coords,
                                    inner: b.inner && cn.inner[i],
                                    inner_face: b.inner_face || cn.inner_face[i],
                                    outer_face: b.outer_face || cn.outer_face[i],
                                });
                            }
                        }
                        blocks = next;
                    }
                    factor_blocks.push(blocks);
                }
            }
        }

        let dim = self.dim();
        let total: usize = factor_blocks.iter().map(Vec::len).product();
        let mut points = Vec::with_capacity(total * dim);
        let mut outer_boundary = Vec::with_capacity(total);
        let mut inner_mask = Vec::with_capacity(total);
        let mut inner_boundary = Vec::with_capacity(total);
        let mut idx = vec![0usize; factor_blocks.len()];
        for _ in 0..total {
            let (mut ins, mut inf, mut outf) = (true, false, false);
            for (f, &i) in idx.iter().enumerate() {
                let b = &factor_blocks[f][i];
                points.extend_from_slice(&b.coords);
                ins &= b.inner;
                inf |= b.inner_face;
                outf |= b.outer_face;
            }
            outer_boundary.push(outf);
            inner_mask.push(ins);
            inner_boundary.push(ins && inf);
            // odometer, last factor fastest
            for f in (0..idx.len()).rev() {
                idx[f] += 1;
                if idx[f] < factor_blocks[f].len() {
                    break;
                }
                idx[f] = 0;
            }
        }
        let mut inner_index = Vec::with_capacity(total);
        let mut next = 0usize;
        for &m in &inner_mask {
            if m {
                inner_index.push(Some(next));
                next += 1;
            } else {
                inner_index.push(None);
            }
        }
        Ok(NestedGrid {
            outer: LatentGrid {
                dim,
                points,
                boundary: outer_boundary,
                truncation: outer,
            },
            inner_truncation: inner,
            inner_mask,
            inner_boundary,
            inner_index,
        })
    }
}

/// Finite set of latent points at a given truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    dim: usize,
    points: Vec<f64>,
    boundary: Vec<bool>,
    truncation: f64,
}

impl LatentGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// Grid built from explicit points, mostly for tests and custom
    /// discretizations. All points are treated as interior.
    pub fn from_points(points: Vec<Vec<f64>>, truncation: f64) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Config("grid points must share a positive dimension".into()));
        }
        let n = points.len();
        Ok(Self {
            dim,
            points: points.into_iter().flatten().collect(),
            boundary: vec![false; n],
            truncation,
        })
    }
}

/// Outer grid at `2M` plus the embedding of the grid at `M`.
#[derive(Debug, Clone)]
pub struct NestedGrid {
    pub outer: LatentGrid,
    pub inner_truncation: f64,
    /// Outer point belongs to the grid at `M`.
    pub inner_mask: Vec<bool>,
    /// Outer point lies on a truncated face of the grid at `M`.
    pub inner_boundary: Vec<bool>,
    /// Index of the outer point inside the grid at `M`.
    pub inner_index: Vec<Option<usize>>,
}

impl NestedGrid {
    pub fn inner_grid(&self) -> LatentGrid {
        let dim = self.outer.dim;
        let mut points = Vec::new();
        let mut boundary = Vec::new();
        for (i, p) in self.outer.points().enumerate() {
            if self.inner_mask[i] {
                points.extend_from_slice(p);
                boundary.push(self.inner_boundary[i]);
            }
        }
        LatentGrid {
            dim,
            points,
            boundary,
            truncation: self.inner_truncation,
        }
    }
}

/// Tensor-product grid of a latent domain at the given truncation radius.
pub fn build_grid(latent: &LatentDomain, truncation: f64) -> Result<LatentGrid> {
    LatentSpace::from(latent.clone()).grid(truncation)
}

/// One observed atom `z` with its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedAtom {
    pub z: Vec<f64>,
    pub weight: f64,
}

/// Finite distribution of the observed variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    atoms: Vec<ObservedAtom>,
}

impl DiscreteDistribution {
    pub const WEIGHT_TOLERANCE: f64 = 1e-12;

    pub fn new(atoms: Vec<ObservedAtom>) -> Result<Self> {
        let dim = atoms
            .first()
            .map(|a| a.z.len())
            .ok_or_else(|| Error::Config("distribution needs at least one atom".into()))?;
        let mut total = 0.0;
        for (i, a) in atoms.iter().enumerate() {
            if a.z.len() != dim {
                return Err(Error::Dimension(format!(
                    "atom {i} has dimension {}, expected {dim}",
                    a.z.len()
                )));
            }
            if !(a.weight > 0.0 && a.weight <= 1.0) {
                return Err(Error::Config(format!("atom {i} has weight {} outside (0,1]", a.weight)));
            }
            if a.z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("atom {i} has a non-finite coordinate")));
            }
            total += a.weight;
        }
        if (total - 1.0).abs() > Self::WEIGHT_TOLERANCE {
            return Err(Error::Config(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { atoms })
    }

    /// Normalizes positive weights to sum to one.
    pub fn from_weighted(points: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let total: f64 = points.iter().map(|(_, w)| *w).sum();
        if !(total > 0.0) {
            return Err(Error::Config("total weight must be positive".into()));
        }
        Self::new(
            points
                .into_iter()
                .map(|(z, w)| ObservedAtom { z, weight: w / total })
                .collect(),
        )
    }

    /// Empirical distribution of a sample. Identical rows are merged and the
    /// atoms are sorted lexicographically.
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("empty sample".into()));
        }
        let mut sorted: Vec<&Vec<f64>> = samples.iter().collect();
        sorted.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let n = samples.len() as f64;
        let mut out: Vec<(Vec<f64>, usize)> = Vec::new();
        for s in sorted {
            match out.last_mut() {
                Some((z, c)) if z == s => *c += 1,
                _ => out.push((s.clone(), 1)),
            }
        }
        let atoms: Vec<ObservedAtom> = out
            .into_iter()
            .map(|(z, c)| ObservedAtom {
                z,
                weight: c as f64 / n,
            })
            .collect();
        // Rounding of c/n may leave the sum a few ulps off one.
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        Self::new(
            atoms
                .into_iter()
                .map(|a| ObservedAtom {
                    weight: a.weight / total,
                    z: a.z,
                })
                .collect(),
        )
    }

    pub fn atoms(&self) -> &[ObservedAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn z_dim(&self) -> usize {
        self.atoms[0].z.len()
    }

    /// `E_F[f(z)]`.
    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(&a.z)).sum()
    }
}

pub type PredicateFn = dyn Fn(&[f64], &[f64], &[f64]) -> bool + Send + Sync;
pub type ZMomentFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;
pub type LatentMomentFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Membership test `(u, z, θ) ∈ Γ(θ)`. Must be pure.
#[derive(Clone)]
pub struct SupportPredicate(Arc<PredicateFn>);

impl SupportPredicate {
    pub fn new(f: impl Fn(&[f64], &[f64], &[f64]) -> bool + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn whole_space() -> Self {
        Self::new(|_, _, _| true)
    }

    pub fn contains(&self, u: &[f64], z: &[f64], theta: &[f64]) -> bool {
        (self.0)(u, z, theta)
    }
}

impl fmt::Debug for SupportPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SupportPredicate(..)")
    }
}

/// Partitioned moment function `r = (r1(z, θ), r2(u, z, θ))`.
#[derive(Clone)]
pub struct MomentSpec {
    dim_r1: usize,
    dim_r2: usize,
    r1: Arc<ZMomentFn>,
    r2: Arc<LatentMomentFn>,
}

impl MomentSpec {
    pub fn new(
        dim_r1: usize,
        dim_r2: usize,
        r1: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        r2: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim_r1 + dim_r2 == 0 {
            return Err(Error::Config("moment function needs at least one coordinate".into()));
        }
        Ok(Self {
            dim_r1,
            dim_r2,
            r1: Arc::new(r1),
            r2: Arc::new(r2),
        })
    }

    /// Moments that all depend on the latent variable.
    pub fn latent_only(
        dim_r2: usize,
        r2: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(0, dim_r2, |_, _, _| {}, r2)
    }

    pub fn dim_r1(&self) -> usize {
        self.dim_r1
    }

    pub fn dim_r2(&self) -> usize {
        self.dim_r2
    }

    pub fn dim(&self) -> usize {
        self.dim_r1 + self.dim_r2
    }

    pub fn eval_r1(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        (self.r1)(z, theta, out)
    }

    pub fn eval_r2(&self, u: &[f64], z: &[f64], theta: &[f64], out: &mut [f64]) {
        (self.r2)(u, z, theta, out)
    }
}

impl fmt::Debug for MomentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MomentSpec")
            .field("dim_r1", &self.dim_r1)
            .field("dim_r2", &self.dim_r2)
            .finish_non_exhaustive()
    }
}

/// Finite parameter box with a per-axis grid resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || upper.len() != d || resolution.len() != d {
            return Err(Error::Config("parameter box bounds and resolution must share a positive length".into()));
        }
        for i in 0..d {
            if !lower[i].is_finite() || !upper[i].is_finite() || lower[i] > upper[i] {
                return Err(Error::Config(format!(
                    "parameter axis {i}: invalid bounds [{}, {}]",
                    lower[i], upper[i]
                )));
            }
            if resolution[i] == 0 {
                return Err(Error::Config(format!("parameter axis {i}: resolution must be >= 1")));
            }
        }
        Ok(Self {
            lower,
            upper,
            resolution,
        })
    }

    /// A degenerate box holding a single point.
    pub fn point(theta: &[f64]) -> Result<Self> {
        Self::new(theta.to_vec(), theta.to_vec(), vec![1; theta.len()])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    /// Node `i` of axis `axis`. A resolution of one yields the midpoint.
    pub fn node(&self, axis: usize, i: usize) -> f64 {
        let n = self.resolution[axis];
        let (lo, hi) = (self.lower[axis], self.upper[axis]);
        if n == 1 {
            return 0.5 * (lo + hi);
        }
        if i + 1 == n {
            return hi;
        }
        let d = (n - 1) as f64;
        (lo * (d - i as f64) + hi * i as f64) / d
    }

    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        (0..self.resolution[axis]).map(|i| self.node(axis, i)).collect()
    }

    pub fn grid_len(&self) -> usize {
        self.resolution.iter().product()
    }

    /// All grid points, last axis varying fastest.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|a| self.axis_nodes(a)).collect();
        let mut out = Vec::with_capacity(self.grid_len());
        let mut idx = vec![0usize; self.dim()];
        for _ in 0..self.grid_len() {
            out.push(idx.iter().enumerate().map(|(a, &i)| axes[a][i]).collect());
            for a in (0..idx.len()).rev() {
                idx[a] += 1;
                if idx[a] < self.resolution[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }

    /// Cartesian product with another box (used for `θ' = (θ, θ̃)`).
    pub fn product(&self, other: &ParameterBox) -> ParameterBox {
        let cat = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<_>>();
        ParameterBox {
            lower: cat(&self.lower, &other.lower),
            upper: cat(&self.upper, &other.upper),
            resolution: self.resolution.iter().chain(&other.resolution).copied().collect(),
        }
    }
}

/// An incomplete model `(Γ, r)` with its latent discretization and
/// parameter box.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub label: String,
    pub latent: LatentSpace,
    pub z_dim: usize,
    pub support: SupportPredicate,
    pub moments: MomentSpec,
    pub params: ParameterBox,
}

impl ModelSpec {
    pub fn grid(&self, truncation: f64) -> Result<LatentGrid> {
        self.latent.grid(truncation)
    }

    pub fn default_grid(&self) -> Result<LatentGrid> {
        self.grid(self.latent.default_truncation())
    }

    pub fn check_inputs(&self, grid: &LatentGrid, z: &[f64], theta: &[f64]) -> Result<()> {
        if z.len() != self.z_dim {
            return Err(Error::Dimension(format!("z has length {}, model expects {}", z.len(), self.z_dim)));
        }
        if theta.len() != self.params.dim() {
            return Err(Error::Dimension(format!(
                "theta has length {}, model expects {}",
                theta.len(),
                self.params.dim()
            )));
        }
        if grid.dim() != self.latent.dim() {
            return Err(Error::Dimension(format!(
                "grid has dimension {}, latent space has {}",
                grid.dim(),
                self.latent.dim()
            )));
        }
        Ok(())
    }

    pub fn check_distribution(&self, data: &DiscreteDistribution) -> Result<()> {
        if data.z_dim() != self.z_dim {
            return Err(Error::Dimension(format!(
                "data has z dimension {}, model expects {}",
                data.z_dim(),
                self.z_dim
            )));
        }
        Ok(())
    }
}

/// Indices of the grid points in the section `Γ(z; θ)`, in grid order.
pub fn section(model: &ModelSpec, grid: &LatentGrid, z: &[f64], theta: &[f64]) -> Result<Vec<usize>> {
    model.check_inputs(grid, z, theta)?;
    let out: Vec<usize> = grid
        .points()
        .enumerate()
        .filter(|(_, u)| model.support.contains(u, z, theta))
        .map(|(i, _)| i)
        .collect();
    if out.is_empty() {
        return Err(Error::EmptySection { atom: None });
    }
    Ok(out)
}

/// The discretized moment image of the `u`-dependent block: `r2` at every
/// section point.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentImage {
    pub dim: usize,
    pub indices: Vec<usize>,
    /// Row-major `len × dim` moment values.
    pub values: Vec<f64>,
    pub boundary: Vec<bool>,
}

impl MomentImage {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], bool)> {
        (0..self.len()).map(move |i| (self.row(i), self.boundary[i]))
    }
}

/// `r2` evaluated on the section. With `dim_r2 = 0` every entry is the
/// empty vector, so the image still has one entry per section point.
pub fn moment_image(model: &ModelSpec, grid: &LatentGrid, z: &[f64], theta: &[f64]) -> Result<MomentImage> {
    let indices = section(model, grid, z, theta)?;
    let dim = model.moments.dim_r2();
    let mut values = vec![0.0; indices.len() * dim];
    let mut boundary = Vec::with_capacity(indices.len());
    for (row, &i) in indices.iter().enumerate() {
        let out = &mut values[row * dim..(row + 1) * dim];
        model.moments.eval_r2(grid.point(i), z, theta, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteMoment { point: i });
        }
        boundary.push(grid.boundary_mask()[i]);
    }
    Ok(MomentImage {
        dim,
        indices,
        values,
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(ppd: usize, trunc: f64) -> LatentDomain {
        LatentDomain::new(vec![AxisBounds::unbounded()], trunc, ppd).unwrap()
    }

    #[test]
    fn unbounded_line_grid() {
        let g = build_grid(&line(5, 5.0), 5.0).unwrap();
        let pts: Vec<f64> = g.points().map(|p| p[0]).collect();
        assert_eq!(pts, vec![-5.0, -2.5, 0.0, 2.5, 5.0]);
        assert_eq!(g.boundary_mask(), &[true, false, false, false, true]);
    }

    #[test]
    fn finite_box_ignores_truncation() {
        let d = LatentDomain::new(vec![AxisBounds::finite(0.0, 1.0)], 3.0, 5).unwrap();
        let g = build_grid(&d, 5.0).unwrap();
        let pts: Vec<f64> = g.points().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(g.boundary_mask().iter().all(|b| !b));
    }

    #[test]
    fn mixed_product_grid() {
        let d = LatentDomain::new(vec![AxisBounds::finite(0.0, 1.0), AxisBounds::unbounded()], 2.0, 3).unwrap();
        let g = build_grid(&d, 2.0).unwrap();
        assert_eq!(g.len(), 9);
        for (i, p) in g.points().enumerate() {
            assert_eq!(g.boundary_mask()[i], p[1].abs() == 2.0);
        }
        assert_eq!(g.boundary_mask().iter().filter(|b| **b).count(), 6);
    }

    #[test]
    fn rejects_nonpositive_truncation() {
        assert!(matches!(build_grid(&line(5, 5.0), 0.0), Err(Error::Config(_))));
        assert!(matches!(build_grid(&line(5, 5.0), -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn doubling_truncation_gives_superset() {
        let d = line(201, 5.0);
        let small = build_grid(&d, 5.0).unwrap();
        let big = build_grid(&d, 10.0).unwrap();
        assert_eq!(big.len(), 401);
        let bigset: Vec<f64> = big.points().map(|p| p[0]).collect();
        for p in small.points() {
            assert!(bigset.iter().any(|&q| q.to_bits() == p[0].to_bits()), "{} missing", p[0]);
        }
        // node values agree with a finite box on the same rational grid
        let fin = LatentDomain::new(vec![AxisBounds::finite(-5.0, 5.0)], 5.0, 201).unwrap();
        let fg = build_grid(&fin, 5.0).unwrap();
        for (a, b) in fg.points().zip(small.points()) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
        }
    }

    #[test]
    fn nested_inner_matches_direct_grid() {
        let d = LatentDomain::new(vec![AxisBounds::unbounded(), AxisBounds::finite(0.0, 1.0)], 2.0, 5).unwrap();
        let space = LatentSpace::from(d);
        let nested = space.nested_grid(2.0).unwrap();
        assert_eq!(nested.inner_grid(), space.grid(2.0).unwrap());
        assert_eq!(nested.outer, space.grid(4.0).unwrap());
    }

    #[test]
    fn section_whole_box_and_empty() {
        let d = line(5, 5.0);
        let g = build_grid(&d, 5.0).unwrap();
        let moments = MomentSpec::latent_only(1, |u, _, _, o| o[0] = u[0]).unwrap();
        let mut model = ModelSpec {
            label: "t".into(),
            latent: d.into(),
            z_dim: 1,
            support: SupportPredicate::whole_space(),
            moments,
            params: ParameterBox::point(&[0.0]).unwrap(),
        };
        assert_eq!(section(&model, &g, &[0.0], &[0.0]).unwrap(), vec![0, 1, 2, 3, 4]);
        model.support = SupportPredicate::new(|_, _, _| false);
        assert!(matches!(section(&model, &g, &[0.0], &[0.0]), Err(Error::EmptySection { .. })));
    }

    #[test]
    fn non_finite_moment_rejected() {
        let d = line(5, 5.0);
        let g = build_grid(&d, 5.0).unwrap();
        let model = ModelSpec {
            label: "t".into(),
            latent: d.into(),
            z_dim: 1,
            support: SupportPredicate::whole_space(),
            moments: MomentSpec::latent_only(1, |u, _, _, o| o[0] = 1.0 / u[0]).unwrap(),
            params: ParameterBox::point(&[0.0]).unwrap(),
        };
        assert!(matches!(
            moment_image(&model, &g, &[0.0], &[0.0]),
            Err(Error::NonFiniteMoment { point: 2 })
        ));
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![]).is_err());
        let bad = vec![
            ObservedAtom { z: vec![0.0], weight: 0.5 },
            ObservedAtom { z: vec![1.0], weight: 0.4 },
        ];
        assert!(DiscreteDistribution::new(bad).is_err());
        let f = DiscreteDistribution::from_samples(&[vec![1.0], vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.atoms()[0].z, vec![0.0]);
        assert!((f.atoms()[1].weight - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn parameter_box_grid() {
        let b = ParameterBox::new(vec![-2.0, 0.0], vec![2.0, 1.0], vec![41, 1]).unwrap();
        let g = b.grid();
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], vec![-2.0, 0.5]);
        assert_eq!(g[20][0], 0.0);
        assert_eq!(g[40][0], 2.0);
    }
}
