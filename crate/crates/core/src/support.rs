//! Support function of the discretized moment image and the sphere
//! criterion built on it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{moment_image, DiscreteDistribution, LatentGrid, ModelSpec, MomentImage, NestedGrid};
use crate::sphere::{self, dot, norm};

/// Unit vector over the `r2` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Normalizes `v`. Fails on zero or non-finite input.
    pub fn new(mut v: Vec<f64>) -> Result<Self> {
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) || !sphere::normalize(&mut v) {
            return Err(Error::Config("direction must be a finite nonzero vector".into()));
        }
        Ok(Self(v))
    }

    pub fn axis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportValue {
    pub value: f64,
    pub attained_at: usize,
    pub boundary_attained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedSupport {
    pub value: f64,
    /// F-weight of atoms whose maximizer lies on a truncation face.
    pub boundary_fraction: f64,
}

/// Decision thresholds derived from the largest moment magnitude seen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub scale: f64,
    pub eq: f64,
    pub crit: f64,
    pub lp: f64,
    pub red: f64,
}

impl Tolerances {
    pub fn from_scale(scale: f64) -> Self {
        let s = 1.0 + scale.abs();
        Self {
            scale,
            eq: 1e-9 * s,
            crit: 1e-7 * s,
            lp: 1e-8 * s,
            red: 1e-7 * s,
        }
    }
}

fn check_direction(model: &ModelSpec, lambda: &Direction) -> Result<()> {
    if lambda.dim() != model.moments.dim_r2() {
        return Err(Error::Dimension(format!(
            "direction has length {}, r2 has {}",
            lambda.dim(),
            model.moments.dim_r2()
        )));
    }
    Ok(())
}

/// `max λ'r2(u, z, θ)` over the section, lowest grid index on ties.
pub fn support_function(
    model: &ModelSpec,
    grid: &LatentGrid,
    z: &[f64],
    theta: &[f64],
    lambda: &Direction,
) -> Result<SupportValue> {
    check_direction(model, lambda)?;
    let img = moment_image(model, grid, z, theta)?;
    Ok(support_over_image(&img, lambda.as_slice()))
}

/// `max_k λ'v_k` over the rows of `img` for any `λ`, unit or not. Ties go
/// to the lowest grid index.
pub fn support_over_image(img: &MomentImage, lambda: &[f64]) -> SupportValue {
    let mut best = SupportValue {
        value: f64::NEG_INFINITY,
        attained_at: img.indices[0],
        boundary_attained: img.boundary[0],
    };
    for (k, &idx) in img.indices.iter().enumerate() {
        let v = dot(lambda, img.row(k));
        if v > best.value {
            best = SupportValue {
                value: v,
                attained_at: idx,
                boundary_attained: img.boundary[k],
            };
        }
    }
    best
}

/// `E_F γ(λ, Z; θ)` with the boundary-attainment fraction.
pub fn expected_support(
    model: &ModelSpec,
    grid: &LatentGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
    lambda: &Direction,
) -> Result<ExpectedSupport> {
    model.check_distribution(data)?;
    let mut value = 0.0;
    let mut boundary_fraction = 0.0;
    for (i, atom) in data.atoms().iter().enumerate() {
        let sv = support_function(model, grid, &atom.z, theta, lambda).map_err(|e| match e {
            Error::EmptySection { .. } => Error::EmptySection { atom: Some(i) },
            e => e,
        })?;
        value += atom.weight * sv.value;
        if sv.boundary_attained {
            boundary_fraction += atom.weight;
        }
    }
    Ok(ExpectedSupport {
        value,
        boundary_fraction,
    })
}

/// Relative growth threshold of the truncation-doubling test.
pub const GROW_TOL: f64 = 0.01;

fn grows(small: f64, large: f64, tol: f64) -> bool {
    large - small > tol * (1.0 + small.abs())
}

/// Doubling test: does `E_F γ(λ)` grow by more than 1% when the truncation
/// goes from `M` to `2M`? Always false when every latent axis is bounded.
pub fn detect_divergence(
    model: &ModelSpec,
    data: &DiscreteDistribution,
    theta: &[f64],
    lambda: &Direction,
    truncation: f64,
) -> Result<bool> {
    check_direction(model, lambda)?;
    let m0 = model.latent.default_truncation();
    if !(truncation >= m0 * (1.0 - 1e-12)) {
        return Err(Error::Config(format!(
            "divergence test needs truncation >= {m0}, got {truncation}"
        )));
    }
    if !model.latent.has_unbounded() {
        return Ok(false);
    }
    let small = expected_support(model, &model.grid(truncation)?, data, theta, lambda)?;
    let large = expected_support(model, &model.grid(2.0 * truncation)?, data, theta, lambda)?;
    Ok(grows(small.value, large.value, GROW_TOL))
}

/// `E_F r1(Z; θ)`.
pub fn gmm_residual(model: &ModelSpec, data: &DiscreteDistribution, theta: &[f64]) -> Result<Vec<f64>> {
    model.check_distribution(data)?;
    let d = model.moments.dim_r1();
    let mut out = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for atom in data.atoms() {
        model.moments.eval_r1(&atom.z, theta, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o += atom.weight * b;
        }
    }
    Ok(out)
}

/// Per-atom deduplicated moment rows.
///
/// Rows `[0, n_inner)` come from the grid at `M`, rows
/// `[n_inner, n_inner + n_outer)` are the extra points of the grid at `2M`,
/// and the remaining rows are far probes: points of the `M` grid lying on a
/// truncated face, pushed out along the truncated coordinates by `2^k`.
#[derive(Debug, Clone)]
pub(crate) struct AtomImage {
    pub weight: f64,
    pub rows: Vec<f64>,
    pub n_inner: usize,
    pub n_outer: usize,
}

impl AtomImage {
    pub fn n_rows(&self, dim: usize) -> usize {
        if dim == 0 {
            self.n_inner
        } else {
            self.rows.len() / dim
        }
    }

    pub fn row(&self, dim: usize, k: usize) -> &[f64] {
        &self.rows[k * dim..(k + 1) * dim]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ImageTable {
    pub dim: usize,
    pub atoms: Vec<AtomImage>,
    pub r1_residual: Vec<f64>,
    pub scale: f64,
    pub truncation: f64,
    pub unbounded: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TableOptions {
    /// Also tabulate the grid at `2M` and the far probes.
    pub growth_rows: bool,
    pub far_levels: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Evaluation {
    pub at_m: f64,
    pub at_2m: f64,
    pub far: f64,
}

fn row_key(v: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 give the same support value
    v.iter().map(|x| if *x == 0.0 { 0 } else { x.to_bits() }).collect()
}

impl ImageTable {
    pub fn build(
        model: &ModelSpec,
        grid: &LatentGrid,
        data: &DiscreteDistribution,
        theta: &[f64],
        opts: TableOptions,
    ) -> Result<Self> {
        Self::build_with(model, grid, None, data, theta, opts)
    }

    /// `build` with the nested `M`/`2M` grid supplied by the caller.
    pub fn build_with(
        model: &ModelSpec,
        grid: &LatentGrid,
        nested_grid: Option<&NestedGrid>,
        data: &DiscreteDistribution,
        theta: &[f64],
        opts: TableOptions,
    ) -> Result<Self> {
        model.check_distribution(data)?;
        if let Some(atom) = data.atoms().first() {
            model.check_inputs(grid, &atom.z, theta)?;
        }
        let dim = model.moments.dim_r2();
        let unbounded = model.latent.has_unbounded();
        let growth = opts.growth_rows && unbounded;
        // (points, inner index, inner boundary) for the outer grid
        let owned;
        let identity: Vec<Option<usize>>;
        let (points_grid, inner_index, inner_boundary): (&LatentGrid, &[Option<usize>], &[bool]) = if growth {
            let nested = match nested_grid {
                Some(n) => n,
                None => {
                    owned = model.latent.nested_grid(grid.truncation())?;
                    &owned
                }
            };
            if nested.inner_mask.iter().filter(|m| **m).count() != grid.len() {
                return Err(Error::Dimension(
                    "grid does not match the model latent space at its truncation".into(),
                ));
            }
            (&nested.outer, &nested.inner_index, &nested.inner_boundary)
        } else {
            identity = (0..grid.len()).map(Some).collect();
            (grid, &identity, grid.boundary_mask())
        };

        let ends = model.latent.truncated_ends();
        let (mut cmin, mut cmax) = (vec![f64::INFINITY; grid.dim()], vec![f64::NEG_INFINITY; grid.dim()]);
        for p in grid.points() {
            for c in 0..p.len() {
                cmin[c] = cmin[c].min(p[c]);
                cmax[c] = cmax[c].max(p[c]);
            }
        }

        let mut scale: f64 = 0.0;
        let r1_dim = model.moments.dim_r1();
        let mut r1_residual = vec![0.0; r1_dim];
        let mut r1_buf = vec![0.0; r1_dim];
        let mut buf = vec![0.0; dim];
        let mut atoms = Vec::with_capacity(data.len());
        for (ai, atom) in data.atoms().iter().enumerate() {
            let z = &atom.z;
            model.moments.eval_r1(z, theta, &mut r1_buf);
            for (k, v) in r1_buf.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteMoment { point: 0 });
                }
                scale = scale.max(v.abs());
                r1_residual[k] += atom.weight * v;
            }
            let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
            let mut inner_rows = Vec::new();
            let mut grid_index = Vec::new();
            let mut outer_rows = Vec::new();
            let mut n_outer = 0usize;
            let mut boundary_points = Vec::new();
            // Inner points first so their rows win the deduplication.
            for pass_inner in [true, false] {
                for (pi, u) in points_grid.points().enumerate() {
                    if inner_index[pi].is_some() != pass_inner || (!pass_inner && dim == 0) {
                        continue;
                    }
                    if !model.support.contains(u, z, theta) {
                        continue;
                    }
                    model.moments.eval_r2(u, z, theta, &mut buf);
                    if let Some(ii) = inner_index[pi] {
                        if buf.iter().any(|v| !v.is_finite()) {
                            return Err(Error::NonFiniteMoment { point: ii });
                        }
                        for v in &buf {
                            scale = scale.max(v.abs());
                        }
                        if growth && inner_boundary[pi] {
                            boundary_points.push(u.to_vec());
                        }
                        if dim == 0 {
                            if grid_index.is_empty() {
                                grid_index.push(ii);
                            }
                            continue;
                        }
                        let key = row_key(&buf);
                        if !seen.contains_key(&key) {
                            seen.insert(key, grid_index.len());
                            inner_rows.extend_from_slice(&buf);
                            grid_index.push(ii);
                        }
                    } else {
                        if buf.iter().any(|v| !v.is_finite()) {
                            continue;
                        }
                        let key = row_key(&buf);
                        if !seen.contains_key(&key) {
                            seen.insert(key, usize::MAX);
                            outer_rows.extend_from_slice(&buf);
                            n_outer += 1;
                        }
                    }
                }
            }
            if grid_index.is_empty() {
                return Err(Error::EmptySection { atom: Some(ai) });
            }
            let mut rows = inner_rows;
            let n_inner = grid_index.len();
            rows.extend_from_slice(&outer_rows);
            if growth && dim > 0 {
                let mut probe = vec![0.0; grid.dim()];
                for u in &boundary_points {
                    let mut factor = 1.0;
                    for _ in 0..opts.far_levels {
                        factor *= 2.0;
                        for c in 0..u.len() {
                            let on_face = (ends[c].0 && u[c] <= cmin[c]) || (ends[c].1 && u[c] >= cmax[c]);
                            probe[c] = if on_face { u[c] * factor } else { u[c] };
                        }
                        if !model.support.contains(&probe, z, theta) {
                            continue;
                        }
                        model.moments.eval_r2(&probe, z, theta, &mut buf);
                        if buf.iter().any(|v| !v.is_finite()) {
                            continue;
                        }
                        let key = row_key(&buf);
                        if !seen.contains_key(&key) {
                            seen.insert(key, usize::MAX);
                            rows.extend_from_slice(&buf);
                        }
                    }
                }
            }
            atoms.push(AtomImage {
                weight: atom.weight,
                rows,
                n_inner,
                n_outer,
            });
        }
        Ok(Self {
            dim,
            atoms,
            r1_residual,
            scale,
            truncation: grid.truncation(),
            unbounded: growth,
        })
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances::from_scale(self.scale)
    }

    pub fn evaluate(&self, lambda: &[f64]) -> Evaluation {
        let d = self.dim;
        let (mut at_m, mut at_2m, mut far) = (0.0, 0.0, 0.0);
        for a in &self.atoms {
            let n = a.n_rows(d);
            let mut best_m = f64::NEG_INFINITY;
            let mut best_2m = f64::NEG_INFINITY;
            let mut best_far = f64::NEG_INFINITY;
            for k in 0..n {
                let v = dot(lambda, a.row(d, k));
                if k < a.n_inner {
                    best_m = best_m.max(v);
                } else if k < a.n_inner + a.n_outer {
                    best_2m = best_2m.max(v);
                } else {
                    best_far = best_far.max(v);
                }
            }
            best_2m = best_2m.max(best_m);
            best_far = best_far.max(best_2m);
            at_m += a.weight * best_m;
            at_2m += a.weight * best_2m;
            far += a.weight * best_far;
        }
        Evaluation { at_m, at_2m, far }
    }

    /// `argmin_{p ∈ P} <x, p>` over `P = Σ w_i conv(R_i)` at truncation `M`.
    fn lmo(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for a in &self.atoms {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for k in 0..a.n_inner {
                let v = dot(x, a.row(d, k));
                if v < best {
                    best = v;
                    arg = k;
                }
            }
            for (o, r) in out.iter_mut().zip(a.row(d, arg)) {
                *o += a.weight * r;
            }
        }
        out
    }
}

/// Options for the sphere search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionOptions {
    pub restarts: usize,
    /// Number of quasi-uniform samples; `None` picks the default for the
    /// dimension of `r2`.
    pub sphere_samples: Option<usize>,
    pub grow_tol: f64,
    /// Far-probe doublings used, on top of the `M`/`2M` test, to exclude
    /// directions whose support keeps growing past `2M`. Zero disables.
    pub far_levels: usize,
    /// Run the min-norm-point polish after the local search.
    pub polish: bool,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            sphere_samples: None,
            grow_tol: GROW_TOL,
            far_levels: 40,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub start_value: f64,
    pub end_value: f64,
    pub evaluations: usize,
    pub final_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionDiagnostics {
    pub restarts: Vec<RestartTrace>,
    pub evaluations: usize,
    /// Distance from the origin to the discretized Aumann expectation at
    /// truncation `M`, from the min-norm-point polish.
    pub min_norm_distance: Option<f64>,
    pub polish_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    /// Minimum of `E_F γ` over the non-divergent probed directions; `+∞`
    /// when every probed direction diverges.
    pub value: f64,
    pub argmin: Direction,
    pub infinite_directions_sampled: usize,
    pub diagnostics: CriterionDiagnostics,
    pub gmm_residual: Vec<f64>,
    pub tolerances: Tolerances,
    pub truncation: f64,
}

impl CriterionResult {
    pub fn gmm_residual_norm(&self) -> f64 {
        self.gmm_residual.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖E_F r1‖_∞ ≤ ε_eq` and `value ≥ −ε_crit`.
    pub fn is_member(&self) -> bool {
        self.gmm_residual_norm() <= self.tolerances.eq && self.value >= -self.tolerances.crit
    }
}

/// Latent grid at `M` together with its nested `2M` grid, built once and
/// reused across parameter values.
#[derive(Debug, Clone)]
pub struct PreparedGrid {
    pub grid: LatentGrid,
    pub nested: Option<NestedGrid>,
}

impl PreparedGrid {
    pub fn new(model: &ModelSpec, truncation: f64) -> Result<Self> {
        if model.latent.has_unbounded() {
            let nested = model.latent.nested_grid(truncation)?;
            Ok(Self {
                grid: nested.inner_grid(),
                nested: Some(nested),
            })
        } else {
            Ok(Self {
                grid: model.grid(truncation)?,
                nested: None,
            })
        }
    }
}

/// Approximates `inf_{‖λ‖=1} E_F γ(λ, Z; θ)` over non-divergent directions.
pub fn criterion(
    model: &ModelSpec,
    grid: &LatentGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
    opts: &CriterionOptions,
) -> Result<CriterionResult> {
    criterion_inner(model, grid, None, data, theta, opts)
}

/// `criterion` on a prepared grid.
pub fn criterion_prepared(
    model: &ModelSpec,
    prepared: &PreparedGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
    opts: &CriterionOptions,
) -> Result<CriterionResult> {
    criterion_inner(model, &prepared.grid, prepared.nested.as_ref(), data, theta, opts)
}

fn criterion_inner(
    model: &ModelSpec,
    grid: &LatentGrid,
    nested: Option<&NestedGrid>,
    data: &DiscreteDistribution,
    theta: &[f64],
    opts: &CriterionOptions,
) -> Result<CriterionResult> {
    if model.moments.dim_r2() == 0 {
        return Err(Error::Dimension(
            "criterion needs a latent moment block; use the gmm residual for dim_r2 = 0".into(),
        ));
    }
    let table = ImageTable::build_with(
        model,
        grid,
        nested,
        data,
        theta,
        TableOptions {
            growth_rows: true,
            far_levels: opts.far_levels,
        },
    )?;
    Ok(minimize_over_sphere(&table, opts, None))
}

/// How a probed direction is scored.
pub(crate) struct Probe {
    pub value: f64,
    pub divergent: bool,
}

pub(crate) fn probe(table: &ImageTable, lambda: &[f64], grow_tol: f64) -> Probe {
    let e = table.evaluate(lambda);
    let divergent = table.unbounded && (grows(e.at_m, e.at_2m, grow_tol) || grows(e.at_m, e.far, grow_tol));
    Probe {
        value: e.at_m,
        divergent,
    }
}

/// Sphere search shared by the criterion and the reduction search. With
/// `stop_below` set, the scan returns at the first sample whose value is at
/// most that threshold.
pub(crate) fn minimize_over_sphere(table: &ImageTable, opts: &CriterionOptions, stop_below: Option<f64>) -> CriterionResult {
    let d = table.dim;
    let n = opts.sphere_samples.unwrap_or_else(|| sphere::default_samples(d));
    let samples = sphere::sphere_sample(d, n);
    let tol = table.tolerances();
    let mut evaluations = 0usize;
    let mut infinite = 0usize;
    let mut scored: Vec<(f64, usize)> = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |best: &mut Option<(f64, Vec<f64>)>, v: f64, dir: &[f64]| {
        if best.as_ref().map_or(true, |(b, _)| v < *b) {
            *best = Some((v, dir.to_vec()));
        }
    };
    for (i, s) in samples.iter().enumerate() {
        let p = probe(table, s, opts.grow_tol);
        evaluations += 1;
        if p.divergent {
            infinite += 1;
            continue;
        }
        if let Some(stop) = stop_below {
            if p.value <= stop {
                return CriterionResult {
                    value: p.value,
                    argmin: Direction(s.clone()),
                    infinite_directions_sampled: infinite,
                    diagnostics: CriterionDiagnostics {
                        restarts: Vec::new(),
                        evaluations,
                        min_norm_distance: None,
                        polish_value: None,
                    },
                    gmm_residual: table.r1_residual.clone(),
                    tolerances: tol,
                    truncation: table.truncation,
                };
            }
        }
        scored.push((p.value, i));
        consider(&mut best, p.value, s);
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut traces = Vec::new();
    if d > 1 {
        for &(v0, i) in scored.iter().take(opts.restarts) {
            let (dir, v, evals, step) = pattern_search(table, &samples[i], v0, opts.grow_tol);
            evaluations += evals;
            traces.push(RestartTrace {
                start_value: v0,
                end_value: v,
                evaluations: evals,
                final_step: step,
            });
            consider(&mut best, v, &dir);
        }
    }

    let mut min_norm_distance = None;
    let mut polish_value = None;
    if opts.polish && d > 0 {
        let iterates = min_norm_point(table);
        if let Some(last) = iterates.last() {
            min_norm_distance = Some(norm(last));
        }
        // Latest iterates first: the final one is the exact separating
        // direction when it is admissible.
        for x in iterates.iter().rev() {
            let nx = norm(x);
            if !(nx > 1e-300) {
                continue;
            }
            let dir: Vec<f64> = x.iter().map(|v| -v / nx).collect();
            let p = probe(table, &dir, opts.grow_tol);
            evaluations += 1;
            if !p.divergent {
                polish_value = Some(p.value);
                consider(&mut best, p.value, &dir);
                break;
            }
        }
    }

    let (value, argmin) = match best {
        Some((v, dir)) => (v, dir),
        None => (f64::INFINITY, samples[0].clone()),
    };
    CriterionResult {
        value,
        argmin: Direction(argmin),
        infinite_directions_sampled: infinite,
        diagnostics: CriterionDiagnostics {
            restarts: traces,
            evaluations,
            min_norm_distance,
            polish_value,
        },
        gmm_residual: table.r1_residual.clone(),
        tolerances: tol,
        truncation: table.truncation,
    }
}

const MAX_PATTERN_EVALS: usize = 20_000;

/// Coordinate pattern search on the sphere with step halving.
fn pattern_search(table: &ImageTable, start: &[f64], start_value: f64, grow_tol: f64) -> (Vec<f64>, f64, usize, f64) {
    let d = start.len();
    let mut x = start.to_vec();
    let mut fx = start_value;
    let mut step = 0.5;
    let mut evals = 0;
    let mut cand = vec![0.0; d];
    while step >= 1e-6 && evals < MAX_PATTERN_EVALS {
        let mut improved = false;
        'coords: for i in 0..d {
            for s in [1.0, -1.0] {
                cand.copy_from_slice(&x);
                cand[i] += s * step;
                if !sphere::normalize(&mut cand) {
                    continue;
                }
                let p = probe(table, &cand, grow_tol);
                evals += 1;
                if !p.divergent && p.value < fx {
                    x.copy_from_slice(&cand);
                    fx = p.value;
                    improved = true;
                    break 'coords;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx, evals, step)
}

/// Wolfe's min-norm-point method on `P = Σ w_i conv(R_i)` at truncation
/// `M`. Returns the sequence of major iterates.
fn min_norm_point(table: &ImageTable) -> Vec<Vec<f64>> {
    let d = table.dim;
    let mut start = vec![0.0; d];
    for a in &table.atoms {
        for (s, r) in start.iter_mut().zip(a.row(d, 0)) {
            *s += a.weight * r;
        }
    }
    let mut corral: Vec<Vec<f64>> = vec![start];
    let mut weights = vec![1.0];
    let mut iterates = Vec::new();
    let combine = |corral: &[Vec<f64>], w: &[f64]| {
        let mut x = vec![0.0; d];
        for (p, &wj) in corral.iter().zip(w) {
            for (xi, pi) in x.iter_mut().zip(p) {
                *xi += wj * pi;
            }
        }
        x
    };
    let mut x = combine(&corral, &weights);
    for _ in 0..1000 {
        iterates.push(x.clone());
        let xx = dot(&x, &x);
        if xx < 1e-300 {
            break;
        }
        let v = table.lmo(&x);
        let max_sq = corral.iter().map(|p| dot(p, p)).fold(dot(&v, &v), f64::max);
        if xx - dot(&x, &v) <= 1e-13 * max_sq.max(1e-300) {
            break;
        }
        if corral.iter().any(|p| p == &v) {
            break;
        }
        corral.push(v);
        weights.push(0.0);
        loop {
            let Some(alpha) = affine_min_norm(&corral) else {
                // affinely dependent corral; keep the last good iterate
                return iterates;
            };
            if alpha.iter().all(|a| *a > 1e-12) {
                weights = alpha;
                break;
            }
            let mut t = 1.0f64;
            for (w, a) in weights.iter().zip(&alpha) {
                if *a <= 1e-12 && w - a > 0.0 {
                    t = t.min(w / (w - a));
                }
            }
            for (w, a) in weights.iter_mut().zip(&alpha) {
                *w = (1.0 - t) * *w + t * a;
            }
            let mut k = 0;
            while k < weights.len() {
                if weights[k] <= 1e-12 {
                    weights.remove(k);
                    corral.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
            if corral.len() == 1 {
                weights = vec![1.0];
                break;
            }
        }
        x = combine(&corral, &weights);
    }
    iterates
}

/// Weights (summing to one) of the min-norm point of the affine hull.
fn affine_min_norm(points: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = points.len();
    let m = n + 1;
    let mut a = vec![0.0; m * (m + 1)];
    let idx = |r: usize, c: usize| r * (m + 1) + c;
    for i in 0..n {
        for j in 0..n {
            a[idx(i, j)] = dot(&points[i], &points[j]);
        }
        a[idx(i, n)] = 1.0;
        a[idx(n, i)] = 1.0;
    }
    a[idx(n, m)] = 1.0;
    let scale = (0..n).map(|i| a[idx(i, i)]).fold(1.0, f64::max);
    for col in 0..m {
        let piv = (col..m).max_by(|&r, &s| a[idx(r, col)].abs().total_cmp(&a[idx(s, col)].abs()))?;
        if a[idx(piv, col)].abs() < 1e-14 * scale {
            return None;
        }
        if piv != col {
            for c in 0..=m {
                a.swap(idx(piv, c), idx(col, c));
            }
        }
        let p = a[idx(col, col)];
        for r in 0..m {
            if r != col {
                let f = a[idx(r, col)] / p;
                if f != 0.0 {
                    for c in col..=m {
                        a[idx(r, c)] -= f * a[idx(col, c)];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[idx(i, m)] / a[idx(i, i)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AxisBounds, LatentDomain, MomentSpec, ObservedAtom, ParameterBox, SupportPredicate};

    fn point_model(values: Vec<Vec<f64>>) -> (ModelSpec, LatentGrid, DiscreteDistribution) {
        // latent grid {0, 1, ..}; the support picks u equal to the atom's z
        let n = values.len();
        let dim = values[0].len();
        let latent = LatentDomain::new(vec![AxisBounds::finite(0.0, (n - 1).max(1) as f64)], 1.0, n.max(2)).unwrap();
        let grid = latent.clone();
        let moments = MomentSpec::latent_only(dim, move |u, _, _, o| {
            o.copy_from_slice(&values[u[0] as usize]);
        })
        .unwrap();
        let model = ModelSpec {
            label: "points".into(),
            latent: latent.into(),
            z_dim: 1,
            support: SupportPredicate::new(|u, z, _| u[0] == z[0]),
            moments,
            params: ParameterBox::point(&[0.0]).unwrap(),
        };
        let g = crate::model::build_grid(&grid, 1.0).unwrap();
        let data = DiscreteDistribution::new(
            (0..n)
                .map(|i| ObservedAtom {
                    z: vec![i as f64],
                    weight: 1.0 / n as f64,
                })
                .collect(),
        )
        .unwrap();
        (model, g, data)
    }

    #[test]
    fn complete_model_criterion_is_minus_norm() {
        let (model, grid, data) = point_model(vec![vec![1.0, 2.0], vec![3.0, -1.0]]);
        let res = criterion(&model, &grid, &data, &[0.0], &CriterionOptions::default()).unwrap();
        // E r2 = (2, 0.5)
        let n = (4.0f64 + 0.25).sqrt();
        assert!((res.value + n).abs() < 1e-9, "{}", res.value);
        assert!((res.argmin.as_slice()[0] + 2.0 / n).abs() < 1e-6);
        assert!(!res.is_member());
    }

    #[test]
    fn two_atom_expectation() {
        let (model, grid, data) = point_model(vec![vec![0.0], vec![1.0]]);
        let e = expected_support(&model, &grid, &data, &[0.0], &Direction::axis(1, 0)).unwrap();
        assert_eq!(e.value, 0.5);
    }

    #[test]
    fn min_norm_point_distance() {
        // P = conv{(1,1),(3,1)} shifted: distance from origin is 1.4142
        let t = ImageTable {
            dim: 2,
            atoms: vec![AtomImage {
                weight: 1.0,
                rows: vec![1.0, 1.0, 3.0, 1.0, 1.0, 3.0],
                n_inner: 3,
                n_outer: 0,
            }],
            r1_residual: vec![],
            scale: 3.0,
            truncation: 1.0,
            unbounded: false,
        };
        let it = min_norm_point(&t);
        assert!((norm(it.last().unwrap()) - 2f64.sqrt()).abs() < 1e-12);
        let res = minimize_over_sphere(&t, &CriterionOptions::default(), None);
        assert!((res.value + 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_r2() {
        let latent = LatentDomain::new(vec![AxisBounds::finite(0.0, 1.0)], 1.0, 3).unwrap();
        let model = ModelSpec {
            label: "gmm".into(),
            latent: latent.clone().into(),
            z_dim: 1,
            support: SupportPredicate::whole_space(),
            moments: MomentSpec::new(1, 0, |z, t, o| o[0] = z[0] - t[0], |_, _, _, _| {}).unwrap(),
            params: ParameterBox::point(&[1.0]).unwrap(),
        };
        let grid = crate::model::build_grid(&latent, 1.0).unwrap();
        let data = DiscreteDistribution::new(vec![ObservedAtom { z: vec![3.0], weight: 1.0 }]).unwrap();
        assert!(matches!(
            criterion(&model, &grid, &data, &[1.0], &CriterionOptions::default()),
            Err(Error::Dimension(_))
        ));
        assert_eq!(gmm_residual(&model, &data, &[1.0]).unwrap(), vec![2.0]);
    }
}
