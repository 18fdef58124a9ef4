//! Reducing directions: a latent moment direction whose expected support
//! value is zero at `θ`, and the reduced model that tightens the support to
//! its argmax set and rotates the remaining moments.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::min_violation;
use crate::model::{DiscreteDistribution, LatentGrid, ModelSpec, MomentSpec, SupportPredicate};
use crate::sphere::dot;
use crate::support::{minimize_over_sphere, CriterionOptions, Direction, ImageTable, TableOptions, Tolerances};

/// Relative tolerance of the equality that defines the tightened support.
pub const EQUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionCertificate {
    pub direction: Direction,
    pub achieved_value: f64,
    /// Orthonormal completion of `direction` to a basis of the r2 space.
    pub completion: Vec<Vec<f64>>,
    pub truncation: f64,
    pub tolerances: Tolerances,
}

impl ReductionCertificate {
    /// Smallest singular value over largest of the basis `(λ̃, completion)`.
    pub fn inverse_condition(&self) -> f64 {
        let mut rows = vec![self.direction.as_slice().to_vec()];
        rows.extend(self.completion.iter().cloned());
        let (lo, hi) = singular_range(&rows);
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }
}

/// Extreme singular values of a square matrix via the eigenvalues of
/// `A Aᵀ` (Jacobi rotations; dimensions here are small).
fn singular_range(rows: &[Vec<f64>]) -> (f64, f64) {
    let n = rows.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            g[i][j] = dot(&rows[i], &rows[j]);
        }
    }
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += g[p][q] * g[p][q];
                if g[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (g[q][q] - g[p][p]) / (2.0 * g[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (gkp, gkq) = (g[k][p], g[k][q]);
                    g[k][p] = c * gkp - s * gkq;
                    g[k][q] = s * gkp + c * gkq;
                }
                for k in 0..n {
                    let (gpk, gqk) = (g[p][k], g[q][k]);
                    g[p][k] = c * gpk - s * gqk;
                    g[q][k] = s * gpk + c * gqk;
                }
            }
        }
        if off < 1e-30 {
            break;
        }
    }
    let eig: Vec<f64> = (0..n).map(|i| g[i][i].max(0.0).sqrt()).collect();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(0.0, f64::max);
    (lo, hi)
}

/// Gram–Schmidt of the standard basis against `v`.
pub fn complete_basis(v: &[f64]) -> Vec<Vec<f64>> {
    let d = v.len();
    let mut family: Vec<Vec<f64>> = vec![v.to_vec()];
    for i in 0..d {
        if family.len() == d {
            break;
        }
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        for f in &family {
            let c = dot(&e, f);
            for (x, y) in e.iter_mut().zip(f) {
                *x -= c * y;
            }
        }
        let n = dot(&e, &e).sqrt();
        if n > 1e-8 {
            e.iter_mut().for_each(|x| *x /= n);
            family.push(e);
        }
    }
    family.split_off(1)
}

/// Searches the sphere for a non-divergent direction with
/// `|E_F γ(λ)| ≤ ε_red`. Returns the first sample meeting the threshold,
/// otherwise the best refined direction if it qualifies.
pub fn find_reducing_direction(
    model: &ModelSpec,
    grid: &LatentGrid,
    data: &DiscreteDistribution,
    theta: &[f64],
    opts: &CriterionOptions,
) -> Result<Option<ReductionCertificate>> {
    if model.moments.dim_r2() == 0 {
        return Err(Error::Dimension("reduction needs a latent moment block".into()));
    }
    let table = ImageTable::build(
        model,
        grid,
        data,
        theta,
        TableOptions {
            growth_rows: true,
            far_levels: opts.far_levels,
        },
    )?;
    let tol = table.tolerances();
    let res = minimize_over_sphere(&table, opts, Some(tol.red));
    if !res.value.is_finite() || res.value.abs() > tol.red {
        return Ok(None);
    }
    let completion = complete_basis(res.argmin.as_slice());
    Ok(Some(ReductionCertificate {
        direction: res.argmin,
        achieved_value: res.value,
        completion,
        truncation: grid.truncation(),
        tolerances: tol,
    }))
}

fn bits(v: &[f64]) -> impl Iterator<Item = u64> + '_ {
    v.iter().map(|x| if *x == 0.0 { 0 } else { x.to_bits() })
}

/// `γ(λ̃, z; θ)` on the certificate grid, memoized by `(z, θ)`.
struct SupportCache {
    model: ModelSpec,
    grid: LatentGrid,
    direction: Vec<f64>,
    values: Mutex<HashMap<Vec<u64>, f64>>,
}

impl SupportCache {
    fn value(&self, z: &[f64], theta: &[f64]) -> f64 {
        let key: Vec<u64> = bits(z).chain(bits(theta)).collect();
        if let Some(v) = self.values.lock().unwrap().get(&key) {
            return *v;
        }
        let d = self.model.moments.dim_r2();
        let mut buf = vec![0.0; d];
        let mut best = f64::NEG_INFINITY;
        for u in self.grid.points() {
            if self.model.support.contains(u, z, theta) {
                self.model.moments.eval_r2(u, z, theta, &mut buf);
                best = best.max(dot(&self.direction, &buf));
            }
        }
        self.values.lock().unwrap().insert(key, best);
        best
    }
}

/// Reduced model: the support additionally pins `λ̃'r2` to its maximum over
/// the section, `γ(λ̃, z; θ)` joins the z-only block, and the completion
/// directions rotate `r2`. Support values come from the grid at the
/// certificate's truncation. A section emptied by the tightening surfaces
/// later as `EmptySection`.
pub fn reduce_model(model: &ModelSpec, cert: &ReductionCertificate) -> Result<ModelSpec> {
    let d2 = model.moments.dim_r2();
    if cert.direction.dim() != d2 || cert.completion.len() + 1 != d2 {
        return Err(Error::Dimension(format!(
            "certificate spans {} directions, model has {d2} latent moments",
            cert.completion.len() + 1
        )));
    }
    if cert.inverse_condition() < 1e-8 {
        return Err(Error::NumericalInstability("reduction basis is numerically singular".into()));
    }
    let cache = Arc::new(SupportCache {
        model: model.clone(),
        grid: model.grid(cert.truncation)?,
        direction: cert.direction.as_slice().to_vec(),
        values: Mutex::new(HashMap::new()),
    });
    let support = {
        let (base, m, c, lambda) = (model.support.clone(), model.moments.clone(), cache.clone(), cache.direction.clone());
        SupportPredicate::new(move |u, z, t| {
            if !base.contains(u, z, t) {
                return false;
            }
            let mut buf = [0.0; 16];
            let mut heap;
            let r: &mut [f64] = if d2 <= 16 {
                &mut buf[..d2]
            } else {
                heap = vec![0.0; d2];
                &mut heap
            };
            m.eval_r2(u, z, t, r);
            let g = c.value(z, t);
            let v = dot(&lambda, r);
            (v - g).abs() <= EQUALITY_TOL * (1.0 + g.abs().max(v.abs()))
        })
    };
    let d1 = model.moments.dim_r1();
    let r1 = {
        let (m, c) = (model.moments.clone(), cache.clone());
        move |z: &[f64], t: &[f64], o: &mut [f64]| {
            m.eval_r1(z, t, &mut o[..d1]);
            o[d1] = c.value(z, t);
        }
    };
    let completion = cert.completion.clone();
    let r2 = {
        let m = model.moments.clone();
        move |u: &[f64], z: &[f64], t: &[f64], o: &mut [f64]| {
            let mut full = vec![0.0; d2];
            m.eval_r2(u, z, t, &mut full);
            for (k, c) in completion.iter().enumerate() {
                o[k] = dot(c, &full);
            }
        }
    };
    Ok(ModelSpec {
        label: format!("{}/reduced", model.label),
        latent: model.latent.clone(),
        z_dim: model.z_dim,
        support,
        moments: MomentSpec::new(d1 + 1, d2 - 1, r1, r2)?,
        params: model.params.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionEntry {
    pub theta_index: usize,
    pub theta: Vec<f64>,
    pub distribution: String,
    /// Some grid neighbour of the point is outside the member set.
    pub on_boundary: bool,
    pub certificate: Option<ReductionCertificate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrreducibilityReport {
    /// Grid-level diagnostic over a finite family of distributions. Finding
    /// no direction does not prove irreducibility.
    pub note: String,
    pub vacuous: bool,
    pub entries: Vec<ReductionEntry>,
    pub reducible: usize,
    pub not_reducible: usize,
}

/// For each distribution in `family` and each LP-member point of the
/// parameter grid, searches for a reducing direction.
pub fn irreducibility_report(
    model: &ModelSpec,
    truncation: f64,
    family: &[(String, DiscreteDistribution)],
    opts: &CriterionOptions,
) -> Result<IrreducibilityReport> {
    let note = "grid-level diagnostic over the supplied distributions; absence of a reducing direction \
                is not a proof of irreducibility"
        .to_string();
    if model.moments.dim_r2() == 0 {
        return Ok(IrreducibilityReport {
            note,
            vacuous: true,
            entries: Vec::new(),
            reducible: 0,
            not_reducible: 0,
        });
    }
    let grid = model.grid(truncation)?;
    let thetas = model.params.grid();
    let mut entries = Vec::new();
    for (label, data) in family {
        let member: Vec<bool> = thetas
            .par_iter()
            .map(|t| min_violation(model, &grid, data, t).map(|v| v.is_member()).unwrap_or(false))
            .collect();
        let idx: Vec<usize> = (0..thetas.len()).filter(|&i| member[i]).collect();
        let found: Vec<ReductionEntry> = idx
            .par_iter()
            .map(|&i| {
                let res = find_reducing_direction(model, &grid, data, &thetas[i], opts);
                let (certificate, error) = match res {
                    Ok(c) => (c, None),
                    Err(e) => (None, Some(e.to_string())),
                };
                ReductionEntry {
                    theta_index: i,
                    theta: thetas[i].clone(),
                    distribution: label.clone(),
                    on_boundary: on_boundary(model, &member, i),
                    certificate,
                    error,
                }
            })
            .collect();
        entries.extend(found);
    }
    let reducible = entries.iter().filter(|e| e.certificate.is_some()).count();
    Ok(IrreducibilityReport {
        note,
        vacuous: false,
        not_reducible: entries.len() - reducible,
        reducible,
        entries,
    })
}

fn on_boundary(model: &ModelSpec, member: &[bool], i: usize) -> bool {
    let res = model.params.resolution();
    let mut coords = vec![0usize; res.len()];
    let mut rest = i;
    for a in (0..res.len()).rev() {
        coords[a] = rest % res[a];
        rest /= res[a];
    }
    let index = |c: &[usize]| c.iter().zip(res).fold(0, |acc, (x, r)| acc * r + x);
    for a in 0..res.len() {
        for step in [-1i64, 1] {
            let n = coords[a] as i64 + step;
            if n < 0 || n >= res[a] as i64 {
                return true;
            }
            let mut c = coords.clone();
            c[a] = n as usize;
            if !member[index(&c)] {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_is_orthonormal() {
        let v = [0.0, 0.0, 1.0];
        let c = complete_basis(&v);
        assert_eq!(c, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let v = [0.6, 0.8];
        let c = complete_basis(&v);
        assert_eq!(c.len(), 1);
        assert!(dot(&c[0], &v).abs() < 1e-15 && (dot(&c[0], &c[0]) - 1.0).abs() < 1e-15);
        let (lo, hi) = singular_range(&[v.to_vec(), c[0].clone()]);
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_values_of_diagonal() {
        let (lo, hi) = singular_range(&[vec![2.0, 0.0], vec![0.0, 0.5]]);
        assert!((lo - 0.5).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
    }
}
