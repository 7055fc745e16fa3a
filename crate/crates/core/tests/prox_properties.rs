mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use rmda::regularizers::RegularizerKind;
use rmda::{GroupPartition, Regularizer};

#[test]
fn matches_radial_oracle() {
    for (k, kind) in ALL_KINDS.into_iter().enumerate() {
        let gap = prox_oracle_gap(kind, 2_000, 7 + k as u64);
        assert!(gap <= 1e-8, "{kind:?}: objective gap {gap:e}");
    }
}

#[test]
fn convex_kinds_are_nonexpansive() {
    for (k, kind) in ALL_KINDS.into_iter().enumerate().filter(|(_, k)| is_convex(*k)) {
        let ratio = nonexpansive_ratio(kind, 2_000, 70 + k as u64);
        assert!(ratio <= 1.0 + 1e-12, "{kind:?}: ratio {ratio}");
    }
}

#[test]
fn zero_weight_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let dim = rng.random_range(1..10);
        let p = GroupPartition::contiguous(dim, rng.random_range(1..=dim)).unwrap();
        let v: Vec<f64> = (0..dim).map(|_| 3.0 * normal(&mut rng)).collect();
        let tau = rng.random_range(0.01..0.99);
        let regs = [
            Regularizer::L1 { lambda: 0.0 },
            Regularizer::GroupLasso { lambda: 0.0, partition: p.clone() },
            Regularizer::SparseGroupLasso { lambda_l1: 0.0, lambda_group: 0.0, partition: p.clone() },
            Regularizer::GroupMcp { lambda: 0.0, omega: 2.0, partition: p.clone() },
            Regularizer::L1GroupMcp { lambda_l1: 0.0, lambda_group: 0.0, omega: 2.0, partition: p.clone() },
        ];
        for reg in regs {
            assert_eq!(reg.prox(&v, tau).unwrap(), v, "{reg:?}");
        }
    }
}

#[test]
fn group_lasso_zeros_exactly_below_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..2_000 {
        let inst = random_instance(RegularizerKind::GroupLasso, &mut rng);
        let Regularizer::GroupLasso { lambda, partition } = &inst.reg else { unreachable!() };
        let u = inst.reg.prox(&inst.v, inst.tau).unwrap();
        for (idx, wg) in partition.iter() {
            let norm = idx.iter().map(|&i| inst.v[i] * inst.v[i]).sum::<f64>().sqrt();
            let zero = idx.iter().all(|&i| u[i] == 0.0);
            assert_eq!(zero, norm <= inst.tau * lambda * wg, "norm {norm} threshold {}", inst.tau * lambda * wg);
        }
    }
}

#[test]
fn prox_does_not_increase_the_composite_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in ALL_KINDS {
        for _ in 0..2_000 {
            let inst = random_instance(kind, &mut rng);
            let u = inst.reg.prox(&inst.v, inst.tau).unwrap();
            let at_u = prox_objective(&inst, &u);
            let at_v = inst.tau * psi(&inst.reg, &inst.v);
            assert!(at_u <= at_v + 1e-12 * (1.0 + at_v.abs()), "{kind:?}: {at_u} > {at_v}");
        }
    }
}

#[test]
fn ungrouped_coordinates_pass_through() {
    let p = GroupPartition::new(4, vec![vec![0, 2]], vec![1.0]).unwrap();
    let v = [0.1, -5.0, 0.05, 7.0];
    for reg in [
        Regularizer::GroupLasso { lambda: 10.0, partition: p.clone() },
        Regularizer::SparseGroupLasso { lambda_l1: 10.0, lambda_group: 10.0, partition: p.clone() },
        Regularizer::GroupMcp { lambda: 10.0, omega: 3.0, partition: p.clone() },
        Regularizer::L1GroupMcp { lambda_l1: 10.0, lambda_group: 10.0, omega: 3.0, partition: p.clone() },
    ] {
        let u = reg.prox(&v, 1.0).unwrap();
        assert_eq!(u, vec![0.0, -5.0, 0.0, 7.0], "{reg:?}");
    }
}
