//! Exact LP oracle over latent selections on a finite grid.
//!
//! Variables are masses `p[i, k]` for each observed atom `i` and admissible
//! grid point `k`. Each atom's masses sum to its weight; moment rows carry
//! slack pairs so the L1 violation of `E_H r = 0` can be minimized.

pub mod simplex;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use simplex::{solve, write_tableau, LinearProgram, LpOutcome, LpStatus, Sense, SolverOptions};

use crate::error::{Error, Result};
use crate::model::{DiscreteDistribution, LatentGrid, ModelSpec};
use crate::support::{Tolerances, GROW_TOL};

/// Scalar function of `(u, z, θ)`.
pub type ScalarFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync>;

/// Additional `u`-dependent moment equalities appended to the baseline rows.
#[derive(Clone)]
pub struct ExtraRows {
    pub dim: usize,
    pub f: Arc<crate::model::LatentMomentFn>,
}

impl ExtraRows {
    pub fn new(dim: usize, f: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { dim, f: Arc::new(f) }
    }
}

impl std::fmt::Debug for ExtraRows {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ExtraRows({})", self.dim)
    }
}

/// Mass placed on one grid point for one atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mass {
    pub atom: usize,
    pub grid_index: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Minimal `‖E_H r‖_1` over admissible selections.
    pub value: f64,
    pub selection: Vec<Mass>,
    pub tolerances: Tolerances,
    pub gmm_residual: Vec<f64>,
    pub duality_gap: f64,
    pub iterations: usize,
}

impl Violation {
    pub fn is_member(&self) -> bool {
        self.value <= self.tolerances.lp
    }
}

/// One column per distinct moment vector, with the grid points that
/// minimize and maximize an optional objective.
struct Column {
    values: Vec<f64>,
    first: usize,
    arg_min: usize,
    g_min: f64,
    arg_max: usize,
    g_max: f64,
}

struct Columns {
    dim: usize,
    atoms: Vec<Vec<Column>>,
    r1_residual: Vec<f64>,
    scale: f64,
}

fn build_columns(
    model: &ModelSpec,
    grid: &LatentGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
    extra: Option<&ExtraRows>,
    g: Option<&ScalarFn>,
) -> Result<Columns> {
    model.check_distribution(data)?;
    if let Some(a) = data.atoms().first() {
        model.check_inputs(grid, &a.z, theta)?;
    }
    let d2 = model.moments.dim_r2();
    let de = extra.map_or(0, |e| e.dim);
    let dim = d2 + de;
    let d1 = model.moments.dim_r1();
    let mut r1_residual = vec![0.0; d1];
    let mut r1 = vec![0.0; d1];
    let mut scale: f64 = 0.0;
    let mut buf = vec![0.0; dim];
    let mut atoms = Vec::with_capacity(data.len());
    for (ai, atom) in data.atoms().iter().enumerate() {
        let z = &atom.z;
        model.moments.eval_r1(z, theta, &mut r1);
        for (k, v) in r1.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteMoment { point: 0 });
            }
            scale = scale.max(v.abs());
            r1_residual[k] += atom.weight * v;
        }
        let mut cols: Vec<Column> = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for (pi, u) in grid.points().enumerate() {
            if !model.support.contains(u, z, theta) {
                continue;
            }
            model.moments.eval_r2(u, z, theta, &mut buf[..d2]);
            if let Some(e) = extra {
                (e.f)(u, z, theta, &mut buf[d2..]);
            }
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteMoment { point: pi });
            }
            let gv = match g {
                Some(g) => {
                    let v = g(u, z, theta);
                    if !v.is_finite() {
                        return Err(Error::NonFiniteMoment { point: pi });
                    }
                    v
                }
                None => 0.0,
            };
            for v in &buf {
                scale = scale.max(v.abs());
            }
            let key: Vec<u64> = buf.iter().map(|x| if *x == 0.0 { 0 } else { x.to_bits() }).collect();
            match index.get(&key) {
                Some(&c) => {
                    let col = &mut cols[c];
                    if gv < col.g_min {
                        col.g_min = gv;
                        col.arg_min = pi;
                    }
                    if gv > col.g_max {
                        col.g_max = gv;
                        col.arg_max = pi;
                    }
                }
                None => {
                    index.insert(key, cols.len());
                    cols.push(Column {
                        values: buf.clone(),
                        first: pi,
                        arg_min: pi,
                        g_min: gv,
                        arg_max: pi,
                        g_max: gv,
                    });
                }
            }
        }
        if cols.is_empty() {
            return Err(Error::EmptySection { atom: Some(ai) });
        }
        atoms.push(cols);
    }
    Ok(Columns {
        dim,
        atoms,
        r1_residual,
        scale,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pick {
    First,
    MinG,
    MaxG,
}

/// Layout: atom rows, then r1 rows, then r2 (+ extra) rows, then an
/// optional budget row. Columns: masses, then slack pairs, then the budget
/// slack.
struct Assembled {
    lp: LinearProgram,
    mass_cols: Vec<(usize, usize)>,
}

fn assemble(
    cols: &Columns,
    data: &DiscreteDistribution,
    sense: Sense,
    pick: Pick,
    slack_cost: f64,
    budget: Option<f64>,
) -> Assembled {
    let na = data.len();
    let d1 = cols.r1_residual.len();
    let dm = d1 + cols.dim;
    let m = na + dm + usize::from(budget.is_some());
    let mut lp = LinearProgram::new(m, sense);
    for (i, a) in data.atoms().iter().enumerate() {
        lp.b[i] = a.weight;
    }
    for k in 0..d1 {
        lp.b[na + k] = -cols.r1_residual[k];
    }
    let mut mass_cols = Vec::new();
    let mut col = vec![0.0; m];
    for (i, atom_cols) in cols.atoms.iter().enumerate() {
        for c in atom_cols {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[i] = 1.0;
            col[na + d1..na + dm].copy_from_slice(&c.values);
            let (arg, cost) = match pick {
                Pick::First => (c.first, 0.0),
                Pick::MinG => (c.arg_min, c.g_min),
                Pick::MaxG => (c.arg_max, c.g_max),
            };
            lp.push_column(cost, &col);
            mass_cols.push((i, arg));
        }
    }
    for k in 0..dm {
        for s in [1.0, -1.0] {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[na + k] = s;
            if budget.is_some() {
                col[m - 1] = 1.0;
            }
            lp.push_column(slack_cost, &col);
        }
    }
    if let Some(eps) = budget {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[m - 1] = 1.0;
        lp.push_column(0.0, &col);
        lp.b[m - 1] = eps;
    }
    Assembled { lp, mass_cols }
}

fn selection(asm: &Assembled, x: &[f64]) -> Vec<Mass> {
    asm.mass_cols
        .iter()
        .zip(x)
        .filter(|(_, m)| **m > 0.0)
        .map(|(&(atom, grid_index), &mass)| Mass { atom, grid_index, mass })
        .collect()
}

/// Minimal L1 violation of the moment equalities over admissible
/// selections on `grid`.
pub fn min_violation(
    model: &ModelSpec,
    grid: &LatentGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
) -> Result<Violation> {
    min_violation_with(model, grid, data, theta, None)
}

/// `min_violation` with additional moment rows.
pub fn min_violation_with(
    model: &ModelSpec,
    grid: &LatentGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
    extra: Option<&ExtraRows>,
) -> Result<Violation> {
    let cols = build_columns(model, grid, data, theta, extra, None)?;
    let asm = assemble(&cols, data, Sense::Minimize, Pick::First, 1.0, None);
    let out = solve(&asm.lp, &SolverOptions::default())?;
    match out.status {
        LpStatus::Optimal => {}
        s => {
            return Err(Error::NumericalInstability(format!(
                "violation LP reported {s:?}, which its structure rules out"
            )))
        }
    }
    Ok(Violation {
        value: out.objective.max(0.0),
        selection: selection(&asm, &out.solution),
        tolerances: Tolerances::from_scale(cols.scale),
        gmm_residual: cols.r1_residual.clone(),
        duality_gap: out.duality_gap(&asm.lp),
        iterations: out.iterations,
    })
}

/// The LP behind `min_violation`, for inspection or export.
pub fn violation_program(
    model: &ModelSpec,
    grid: &LatentGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
) -> Result<LinearProgram> {
    let cols = build_columns(model, grid, data, theta, None, None)?;
    Ok(assemble(&cols, data, Sense::Minimize, Pick::First, 1.0, None).lp)
}

/// Optimum of `E_H g` over selections whose L1 moment violation is within
/// the membership tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalOptimum {
    pub value: f64,
    pub selection: Vec<Mass>,
    pub tolerances: Tolerances,
    pub duality_gap: f64,
}

pub fn optimize_functional(
    model: &ModelSpec,
    grid: &LatentGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
    g: &ScalarFn,
    extra: Option<&ExtraRows>,
    sense: Sense,
) -> Result<FunctionalOptimum> {
    let cols = build_columns(model, grid, data, theta, extra, Some(g))?;
    optimize_columns(&cols, data, sense)
}

fn optimize_columns(cols: &Columns, data: &DiscreteDistribution, sense: Sense) -> Result<FunctionalOptimum> {
    let tolerances = Tolerances::from_scale(cols.scale);
    let pick = match sense {
        Sense::Minimize => Pick::MinG,
        Sense::Maximize => Pick::MaxG,
    };
    let asm = assemble(cols, data, sense, pick, 0.0, Some(tolerances.lp));
    let out = solve(&asm.lp, &SolverOptions::default())?;
    match out.status {
        LpStatus::Optimal => Ok(FunctionalOptimum {
            value: out.objective,
            selection: selection(&asm, &out.solution),
            tolerances,
            duality_gap: out.duality_gap(&asm.lp),
        }),
        LpStatus::Infeasible => Err(Error::EmptyInterval(
            "no admissible selection satisfies the moment restrictions".into(),
        )),
        LpStatus::Unbounded => Err(Error::NumericalInstability(
            "bounded functional LP reported unbounded".into(),
        )),
    }
}

/// Interval of `E_H g` with truncation-growth flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsResult {
    pub lower: f64,
    pub upper: f64,
    pub truncation: f64,
    /// Endpoints re-solved at twice the truncation (unbounded latents only).
    pub lower_next: Option<f64>,
    pub upper_next: Option<f64>,
    pub lower_growing: bool,
    pub upper_growing: bool,
}

impl BoundsResult {
    pub fn is_two_sided(&self) -> bool {
        !self.lower_growing && !self.upper_growing
    }
}

fn interval_at(
    model: &ModelSpec,
    grid: &LatentGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
    g: &ScalarFn,
    extra: Option<&ExtraRows>,
) -> Result<(f64, f64)> {
    let cols = build_columns(model, grid, data, theta, extra, Some(g))?;
    let lo = optimize_columns(&cols, data, Sense::Minimize)?.value;
    let hi = optimize_columns(&cols, data, Sense::Maximize)?.value;
    Ok((lo, hi.max(lo)))
}

/// `[min E_H g, max E_H g]` over admissible selections satisfying the
/// moment rows (and `extra`) on `grid`. When the model has unbounded latent
/// axes the pair is re-solved at twice the truncation and each endpoint is
/// flagged as growing if it moved outward by more than 1%.
pub fn functional_bounds(
    model: &ModelSpec,
    grid: &LatentGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
    g: &ScalarFn,
    extra: Option<&ExtraRows>,
) -> Result<BoundsResult> {
    let (lower, upper) = interval_at(model, grid, data, theta, g, extra)?;
    let mut res = BoundsResult {
        lower,
        upper,
        truncation: grid.truncation(),
        lower_next: None,
        upper_next: None,
        lower_growing: false,
        upper_growing: false,
    };
    if model.latent.has_unbounded() {
        let next = model.grid(2.0 * grid.truncation())?;
        let (lo2, hi2) = interval_at(model, &next, data, theta, g, extra)?;
        res.lower_next = Some(lo2);
        res.upper_next = Some(hi2);
        res.lower_growing = lower - lo2 > GROW_TOL * (1.0 + lower.abs());
        res.upper_growing = hi2 - upper > GROW_TOL * (1.0 + upper.abs());
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, AxisBounds, LatentDomain, MomentSpec, ObservedAtom, ParameterBox, SupportPredicate};

    /// Interval model with scalar latent on [-5, 5] step 0.5, u ∈ [z0, z1].
    fn interval_model() -> (ModelSpec, LatentGrid) {
        let d = LatentDomain::new(vec![AxisBounds::finite(-5.0, 5.0)], 5.0, 21).unwrap();
        let grid = build_grid(&d, 5.0).unwrap();
        let model = ModelSpec {
            label: "iv".into(),
            latent: d.into(),
            z_dim: 3,
            support: SupportPredicate::new(|u, z, _| u[0] >= z[0] - 1e-9 && u[0] <= z[1] + 1e-9),
            moments: MomentSpec::latent_only(2, |u, z, t, o| {
                let e = u[0] - t[0] - t[1] * z[2];
                o[0] = e;
                o[1] = z[2] * e;
            })
            .unwrap(),
            params: ParameterBox::new(vec![-5.0, -5.0], vec![5.0, 5.0], vec![11, 11]).unwrap(),
        };
        (model, grid)
    }

    fn unit_interval_data() -> DiscreteDistribution {
        DiscreteDistribution::new(vec![ObservedAtom { z: vec![0.0, 1.0, 1.0], weight: 1.0 }]).unwrap()
    }

    #[test]
    fn feasible_midpoint() {
        let (m, g) = interval_model();
        let v = min_violation(&m, &g, &unit_interval_data(), &[0.5, 0.0]).unwrap();
        assert!(v.is_member(), "{}", v.value);
        assert!(v.duality_gap < 1e-9);
    }

    #[test]
    fn far_theta_violation() {
        let (m, g) = interval_model();
        let v = min_violation(&m, &g, &unit_interval_data(), &[5.0, 0.0]).unwrap();
        // u ≤ 1, so |E[u − 5]| ≥ 4 on both moment rows
        assert!(v.value >= 8.0 - 1e-9, "{}", v.value);
        assert!(!v.is_member());
    }

    #[test]
    fn elementary_bounds_on_mean() {
        let (m, g) = interval_model();
        // no pinning: drop the moment rows by using a model with r2 empty
        let free = ModelSpec {
            moments: MomentSpec::new(1, 0, |_, _, o| o[0] = 0.0, |_, _, _, _| {}).unwrap(),
            ..m
        };
        let data = DiscreteDistribution::new(vec![
            ObservedAtom { z: vec![0.0, 1.0, 1.0], weight: 0.5 },
            ObservedAtom { z: vec![-1.0, 0.5, 0.0], weight: 0.5 },
        ])
        .unwrap();
        let gu: ScalarFn = Arc::new(|u, _, _| u[0]);
        let b = functional_bounds(&free, &g, &data, &[0.0, 0.0], &gu, None).unwrap();
        assert!((b.lower + 0.5).abs() < 1e-12 && (b.upper - 0.75).abs() < 1e-12);
        let one: ScalarFn = Arc::new(|_, _, _| 1.0);
        let b = functional_bounds(&free, &g, &data, &[0.0, 0.0], &one, None).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-12 && (b.upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_interval_outside_set() {
        let (m, g) = interval_model();
        let gu: ScalarFn = Arc::new(|u, _, _| u[0]);
        let r = functional_bounds(&m, &g, &unit_interval_data(), &[5.0, 0.0], &gu, None);
        assert!(matches!(r, Err(Error::EmptyInterval(_))));
    }
}
