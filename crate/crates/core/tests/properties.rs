use std::collections::HashSet;
use std::sync::Arc;

use idbounds::augment::augment;
use idbounds::lp::{functional_bounds, min_violation, ScalarFn};
use idbounds::model::{section, DiscreteDistribution, LatentGrid, ModelSpec, ObservedAtom};
use idbounds::models::entry::{
    build_entry_counterfactual, build_entry_model, enumerate_pure_ne, AffineMap, CfCase, CfTarget, EntryGameConfig,
};
use idbounds::models::interval::{build_interval_model, simulate_interval_data, Formulation, IntervalRegConfig, NoiseLaw};
use idbounds::reduce::{find_reducing_direction, reduce_model};
use idbounds::support::{criterion, expected_support, Direction};
use proptest::prelude::*;

fn interval(f: Formulation) -> ModelSpec {
    build_interval_model(&IntervalRegConfig {
        formulation: f,
        latent_step: 0.25,
        ..Default::default()
    })
    .unwrap()
}

fn small_entry() -> EntryGameConfig {
    EntryGameConfig {
        latent_step: 0.5,
        resolution: 4,
        ..Default::default()
    }
}

fn design() -> DiscreteDistribution {
    simulate_interval_data(&IntervalRegConfig::default(), &[0.5, 0.25], 300, &NoiseLaw::Degenerate(0.0), 7).unwrap()
}

fn key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| v.to_bits()).collect()
}

fn point_set(grid: &LatentGrid, idx: &[usize]) -> HashSet<Vec<u64>> {
    idx.iter().map(|&i| key(grid.point(i))).collect()
}

fn theta2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 2)
}

fn unit(d: usize) -> impl Strategy<Value = Direction> {
    prop::collection::vec(-1.0..1.0f64, d)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|v| Direction::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn directions_have_unit_norm(v in prop::collection::vec(-1e3..1e3f64, 1..6)) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-9));
        let d = Direction::new(v).unwrap();
        let n: f64 = d.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sections_grow_with_the_grid(
        x in prop::sample::select(vec![0.0, 1.0]),
        y in prop::sample::select(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
        a in -1.0..1.0f64,
        d in 0.0..2.0f64,
    ) {
        let cfg = small_entry();
        let model = build_entry_model(&cfg).unwrap();
        let m = model.latent.default_truncation();
        let (g1, g2) = (model.grid(m).unwrap(), model.grid(2.0 * m).unwrap());
        let z = [x, y[0], y[1]];
        let theta = [a, d, d];
        let s1 = point_set(&g1, &section(&model, &g1, &z, &theta).unwrap());
        let s2 = point_set(&g2, &section(&model, &g2, &z, &theta).unwrap());
        prop_assert!(s1.is_subset(&s2));
    }

    #[test]
    fn violation_does_not_increase_with_the_grid(theta in theta2()) {
        let model = interval(Formulation::Dagger);
        let data = design();
        let m = model.latent.default_truncation();
        let v1 = min_violation(&model, &model.grid(m).unwrap(), &data, &theta).unwrap();
        let v2 = min_violation(&model, &model.grid(2.0 * m).unwrap(), &data, &theta).unwrap();
        prop_assert!(v2.value <= v1.value + 1e-8 * (1.0 + v1.value.abs()));
    }

    #[test]
    fn functional_bounds_are_ordered(a in 0.2..0.8f64, b in 0.0..0.5f64) {
        let model = interval(Formulation::Proper);
        let grid = model.default_grid().unwrap();
        let g: ScalarFn = Arc::new(|u: &[f64], _: &[f64], _: &[f64]| u[0] * u[0]);
        // points off the identified set have no interval at all
        if let Ok(r) = functional_bounds(&model, &grid, &design(), &[a, b], &g, None) {
            prop_assert!(r.lower <= r.upper + 1e-9);
        }
    }

    #[test]
    fn atom_order_is_irrelevant(theta in theta2(), lambda in unit(2), seed in any::<u64>()) {
        let model = interval(Formulation::Proper);
        let grid = model.default_grid().unwrap();
        let data = design();
        let mut atoms: Vec<ObservedAtom> = data.atoms().to_vec();
        let n = atoms.len();
        for i in (1..n).rev() {
            atoms.swap(i, (seed.rotate_left(i as u32) % (i as u64 + 1)) as usize);
        }
        let shuffled = DiscreteDistribution::new(atoms).unwrap();
        let (a, b) = (
            min_violation(&model, &grid, &data, &theta).unwrap(),
            min_violation(&model, &grid, &shuffled, &theta).unwrap(),
        );
        prop_assert!((a.value - b.value).abs() <= 1e-9);
        let (a, b) = (
            expected_support(&model, &grid, &data, &theta, &lambda).unwrap(),
            expected_support(&model, &grid, &shuffled, &theta, &lambda).unwrap(),
        );
        prop_assert!((a.value - b.value).abs() <= 1e-12 * (1.0 + a.value.abs()));
    }

    #[test]
    fn criterion_is_deterministic_and_below_probed_directions(theta in theta2(), lambda in unit(2)) {
        let model = interval(Formulation::Proper);
        let grid = model.default_grid().unwrap();
        let data = design();
        let c1 = criterion(&model, &grid, &data, &theta, &Default::default()).unwrap();
        let c2 = criterion(&model, &grid, &data, &theta, &Default::default()).unwrap();
        prop_assert_eq!(c1.value.to_bits(), c2.value.to_bits());
        prop_assert_eq!(c1.argmin.as_slice(), c2.argmin.as_slice());
        let e = expected_support(&model, &grid, &data, &theta, &lambda).unwrap();
        prop_assert!(c1.value <= e.value + c1.tolerances.crit);
    }

    #[test]
    fn equilibria_always_exist(
        n in 2usize..=4,
        x in -3.0..3.0f64,
        alpha in -3.0..3.0f64,
        deltas in prop::collection::vec(0.0..4.0f64, 4),
        u in prop::collection::vec(-6.0..6.0f64, 4),
    ) {
        let mut theta = vec![alpha];
        theta.extend_from_slice(&deltas[..n]);
        prop_assert!(!enumerate_pure_ne(&[x], &u[..n], &theta, n).is_empty());
    }

    #[test]
    fn augmented_support_sits_over_the_baseline(
        x in prop::sample::select(vec![0.0, 1.0]),
        y in prop::sample::select(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
        shift in -1.0..1.0f64,
        a in -1.0..1.0f64,
        d in 0.0..2.0f64,
        tt in 0.0..1.0f64,
    ) {
        let cfg = small_entry();
        let base = build_entry_model(&cfg).unwrap();
        let case = CfCase::ShiftX { maps: vec![AffineMap { scale: 1.0, shift: vec![shift] }; 2] };
        let aug = augment(&base, &build_entry_counterfactual(&cfg, &case, CfTarget::ProbUnserved).unwrap()).unwrap();
        let l = &aug.layout;
        prop_assert_eq!(aug.model.params.dim(), base.params.dim() + 1);
        prop_assert_eq!(aug.model.moments.dim_r1(), base.moments.dim_r1());
        prop_assert_eq!(aug.model.moments.dim_r2(), base.moments.dim_r2() + l.r_tilde.len() + 1);
        prop_assert_eq!(aug.model.latent.dim(), base.latent.dim() + l.y_cf.len() + l.u_cf.len());

        let m = base.latent.default_truncation();
        let (bg, ag) = (base.grid(m).unwrap(), aug.model.grid(m).unwrap());
        let z = [x, y[0], y[1]];
        let theta = [a, d, d];
        let mut at = theta.to_vec();
        at.insert(l.theta_tilde, tt);
        let base_sec = point_set(&bg, &section(&base, &bg, &z, &theta).unwrap());
        for i in section(&aug.model, &ag, &z, &at).unwrap() {
            prop_assert!(base_sec.contains(&key(&ag.point(i)[l.u.clone()])));
        }
    }

    #[test]
    fn reduced_sections_are_subsets(a in 0.2..0.8f64, b in 0.0..0.5f64) {
        let model = interval(Formulation::Dagger);
        let grid = model.default_grid().unwrap();
        let data = design();
        let theta = [a, b];
        if let Some(cert) = find_reducing_direction(&model, &grid, &data, &theta, &Default::default()).unwrap() {
            let reduced = reduce_model(&model, &cert).unwrap();
            for atom in data.atoms() {
                let r: HashSet<usize> = section(&reduced, &grid, &atom.z, &theta).unwrap().into_iter().collect();
                let o: HashSet<usize> = section(&model, &grid, &atom.z, &theta).unwrap().into_iter().collect();
                prop_assert!(r.is_subset(&o));
            }
        }
    }
}
