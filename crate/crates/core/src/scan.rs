//! Parameter-grid sweeps running both membership tests at every point.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::min_violation;
use crate::model::{DiscreteDistribution, ModelSpec};
use crate::support::{criterion_prepared, gmm_residual, CriterionOptions, PreparedGrid, Tolerances};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub index: usize,
    pub theta: Vec<f64>,
    pub gmm_residual_norm: f64,
    pub criterion_value: f64,
    /// Empty when the model has no latent moment block.
    pub criterion_argmin: Vec<f64>,
    pub lp_violation: f64,
    pub member_sf: bool,
    pub member_lp: bool,
    pub truncation: f64,
    pub divergent_direction_count: usize,
    pub tolerances: Option<Tolerances>,
    pub error: Option<String>,
}

impl Verdict {
    pub fn disagrees(&self) -> bool {
        self.error.is_none() && self.member_sf != self.member_lp
    }

    fn failed(index: usize, theta: &[f64], truncation: f64, err: &Error) -> Self {
        Self {
            index,
            theta: theta.to_vec(),
            gmm_residual_norm: f64::NAN,
            criterion_value: f64::NAN,
            criterion_argmin: Vec::new(),
            lp_violation: f64::NAN,
            member_sf: false,
            member_lp: false,
            truncation,
            divergent_direction_count: 0,
            tolerances: None,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub truncation: f64,
    pub criterion_value: f64,
    pub lp_violation: f64,
    pub member_sf: bool,
    pub member_lp: bool,
    pub divergent_direction_count: usize,
    pub error: Option<String>,
}

/// Re-evaluation of one parameter point over the truncation list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub index: usize,
    pub theta: Vec<f64>,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTiming {
    pub total_secs: f64,
    pub points: usize,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub verdicts: Vec<Verdict>,
    /// Indices where the two membership tests disagree.
    pub disagreements: Vec<usize>,
    pub sweeps: Vec<Sweep>,
    /// False when any point failed, e.g. on an empty section.
    pub complete: bool,
    pub timing: ScanTiming,
}

impl ScanReport {
    pub fn errors(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| v.error.is_some())
    }

    pub fn members_lp(&self) -> impl Iterator<Item = &[f64]> {
        self.verdicts.iter().filter(|v| v.member_lp).map(|v| v.theta.as_slice())
    }

    pub fn members_sf(&self) -> impl Iterator<Item = &[f64]> {
        self.verdicts.iter().filter(|v| v.member_sf).map(|v| v.theta.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanOptions {
    /// Truncation radii, smallest first. Empty means the model default.
    pub truncations: Vec<f64>,
    pub criterion: CriterionOptions,
    /// Re-evaluate disagreeing or divergent points at the larger radii.
    pub sweep: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            truncations: Vec::new(),
            criterion: CriterionOptions::default(),
            sweep: true,
        }
    }
}

impl ScanOptions {
    pub fn at(truncation: f64) -> Self {
        Self {
            truncations: vec![truncation],
            ..Default::default()
        }
    }

    fn radii(&self, model: &ModelSpec) -> Vec<f64> {
        if self.truncations.is_empty() {
            vec![model.latent.default_truncation()]
        } else {
            let mut t = self.truncations.clone();
            t.sort_by(f64::total_cmp);
            t.dedup();
            t
        }
    }
}

/// Both membership tests at one parameter point.
pub fn evaluate_theta(
    model: &ModelSpec,
    prepared: &PreparedGrid,
    data: &DiscreteDistribution,
    index: usize,
    theta: &[f64],
    opts: &CriterionOptions,
) -> Result<Verdict> {
    let lp = min_violation(model, &prepared.grid, data, theta)?;
    let truncation = prepared.grid.truncation();
    if model.moments.dim_r2() == 0 {
        let r1 = gmm_residual(model, data, theta)?;
        let norm = r1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = lp.tolerances;
        return Ok(Verdict {
            index,
            theta: theta.to_vec(),
            gmm_residual_norm: norm,
            criterion_value: 0.0,
            criterion_argmin: Vec::new(),
            lp_violation: lp.value,
            member_sf: norm <= tol.eq,
            member_lp: lp.is_member(),
            truncation,
            divergent_direction_count: 0,
            tolerances: Some(tol),
            error: None,
        });
    }
    let cr = criterion_prepared(model, prepared, data, theta, opts)?;
    Ok(Verdict {
        index,
        theta: theta.to_vec(),
        gmm_residual_norm: cr.gmm_residual_norm(),
        criterion_value: cr.value,
        criterion_argmin: cr.argmin.as_slice().to_vec(),
        lp_violation: lp.value,
        member_sf: cr.is_member(),
        member_lp: lp.is_member(),
        truncation,
        divergent_direction_count: cr.infinite_directions_sampled,
        tolerances: Some(cr.tolerances),
        error: None,
    })
}

fn verdict_or_error(
    model: &ModelSpec,
    prepared: &PreparedGrid,
    data: &DiscreteDistribution,
    index: usize,
    theta: &[f64],
    opts: &CriterionOptions,
) -> Verdict {
    evaluate_theta(model, prepared, data, index, theta, opts)
        .unwrap_or_else(|e| Verdict::failed(index, theta, prepared.grid.truncation(), &e))
}

/// Runs both tests at every parameter point at the smallest truncation and
/// sweeps flagged points over the larger ones. Per-point failures are
/// recorded in the verdict and mark the report incomplete.
pub fn scan(
    model: &ModelSpec,
    data: &DiscreteDistribution,
    thetas: &[Vec<f64>],
    opts: &ScanOptions,
) -> Result<ScanReport> {
    let start = Instant::now();
    model.check_distribution(data)?;
    if let Some(t) = thetas.iter().find(|t| t.len() != model.params.dim()) {
        return Err(Error::Dimension(format!(
            "parameter point has length {}, model expects {}",
            t.len(),
            model.params.dim()
        )));
    }
    let radii = opts.radii(model);
    let first = PreparedGrid::new(model, radii[0])?;
    let verdicts: Vec<Verdict> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, t)| verdict_or_error(model, &first, data, i, t, &opts.criterion))
        .collect();

    let flagged: Vec<usize> = verdicts
        .iter()
        .filter(|v| v.disagrees() || v.divergent_direction_count > 0)
        .map(|v| v.index)
        .collect();
    let mut sweeps: Vec<Sweep> = flagged
        .iter()
        .map(|&i| Sweep {
            index: i,
            theta: thetas[i].clone(),
            points: vec![sweep_point(&verdicts[i])],
        })
        .collect();
    if opts.sweep && !flagged.is_empty() {
        for &m in &radii[1..] {
            let prepared = PreparedGrid::new(model, m)?;
            let next: Vec<Verdict> = flagged
                .par_iter()
                .map(|&i| verdict_or_error(model, &prepared, data, i, &thetas[i], &opts.criterion))
                .collect();
            for (s, v) in sweeps.iter_mut().zip(&next) {
                s.points.push(sweep_point(v));
            }
        }
    }
    let disagreements = verdicts.iter().filter(|v| v.disagrees()).map(|v| v.index).collect();
    let complete = verdicts.iter().all(|v| v.error.is_none());
    Ok(ScanReport {
        disagreements,
        sweeps,
        complete,
        timing: ScanTiming {
            total_secs: start.elapsed().as_secs_f64(),
            points: verdicts.len(),
            threads: rayon::current_num_threads(),
        },
        verdicts,
    })
}

fn sweep_point(v: &Verdict) -> SweepPoint {
    SweepPoint {
        truncation: v.truncation,
        criterion_value: v.criterion_value,
        lp_violation: v.lp_violation,
        member_sf: v.member_sf,
        member_lp: v.member_lp,
        divergent_direction_count: v.divergent_direction_count,
        error: v.error.clone(),
    }
}

/// Which membership column a summary reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Lp,
    Sf,
}

/// Projection of the member set onto one coordinate. The hull is an outer
/// description; `members` is the exact list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetSummary {
    Empty,
    Hull {
        coordinate: usize,
        lower: f64,
        upper: f64,
        members: Vec<Vec<f64>>,
    },
}

pub fn set_summary(report: &ScanReport, coordinate: usize, membership: Membership) -> SetSummary {
    let members: Vec<Vec<f64>> = report
        .verdicts
        .iter()
        .filter(|v| match membership {
            Membership::Lp => v.member_lp,
            Membership::Sf => v.member_sf,
        })
        .map(|v| v.theta.clone())
        .collect();
    if members.is_empty() {
        return SetSummary::Empty;
    }
    let (lower, upper) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
        (lo.min(t[coordinate]), hi.max(t[coordinate]))
    });
    SetSummary::Hull {
        coordinate,
        lower,
        upper,
        members,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::location::{build_location_model, location_data, LocationConfig};

    #[test]
    fn empty_grid_gives_empty_report() {
        let m = build_location_model(&LocationConfig::default()).unwrap();
        let f = location_data(&[0.0, 1.0]).unwrap();
        let r = scan(&m, &f, &[], &ScanOptions::default()).unwrap();
        assert!(r.verdicts.is_empty() && r.complete);
        assert_eq!(set_summary(&r, 0, Membership::Lp), SetSummary::Empty);
    }

    #[test]
    fn complete_model_single_member() {
        let m = build_location_model(&LocationConfig::default()).unwrap();
        // mean 0.5, second moment 0.5
        let f = location_data(&[0.0, 1.0]).unwrap();
        let thetas = m.params.grid();
        let r = scan(&m, &f, &thetas, &ScanOptions::default()).unwrap();
        assert!(r.disagreements.is_empty());
        let members: Vec<&[f64]> = r.members_lp().collect();
        assert_eq!(members.len(), 1);
        assert!((members[0][0] - 0.5).abs() < 1e-12 && (members[0][1] - 0.5).abs() < 1e-12);
        match set_summary(&r, 0, Membership::Sf) {
            SetSummary::Hull { lower, upper, .. } => assert!(lower == upper),
            SetSummary::Empty => panic!(),
        }
    }

    #[test]
    fn pure_gmm_path() {
        let cfg = LocationConfig {
            pure_gmm: true,
            ..Default::default()
        };
        let m = build_location_model(&cfg).unwrap();
        let f = location_data(&[0.0, 1.0]).unwrap();
        let r = scan(&m, &f, &m.params.grid(), &ScanOptions::default()).unwrap();
        assert!(r.disagreements.is_empty());
        assert_eq!(r.members_lp().count(), 1);
    }

    #[test]
    fn empty_section_marks_incomplete() {
        let m = build_location_model(&LocationConfig::default()).unwrap();
        let f = location_data(&[0.1]).unwrap();
        let r = scan(&m, &f, &[vec![0.0, 0.0]], &ScanOptions::default()).unwrap();
        assert!(!r.complete);
        assert!(r.verdicts[0].error.as_deref().unwrap().contains("empty section"));
    }
}
