//! Independent reference computations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the proximal maps or the
//! gradients under test except to obtain the value being checked.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rmda::models::ModelSpec;
use rmda::optimizers::RmdaState;
use rmda::regularizers::RegularizerKind;
use rmda::{GroupPartition, ParamVector, Regularizer, Schedule};

pub const ALL_KINDS: [RegularizerKind; 7] = [
    RegularizerKind::None,
    RegularizerKind::L1,
    RegularizerKind::GroupLasso,
    RegularizerKind::SparseGroupLasso,
    RegularizerKind::GroupMcp,
    RegularizerKind::L1GroupMcp,
    RegularizerKind::BoxIndicator,
];

pub fn is_convex(kind: RegularizerKind) -> bool {
    !matches!(kind, RegularizerKind::GroupMcp | RegularizerKind::L1GroupMcp)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Random prox problem `argmin_u ||u - v||^2 / 2 + tau psi(u)`.
#[derive(Debug, Clone)]
pub struct ProxInstance {
    pub reg: Regularizer,
    pub v: Vec<f64>,
    pub tau: f64,
}

fn random_partition(rng: &mut ChaCha8Rng, dim: usize) -> GroupPartition {
    let k = rng.random_range(1..=dim.min(4));
    let mut groups = vec![Vec::new(); k];
    for i in 0..dim {
        if rng.random_bool(0.15) {
            continue;
        }
        groups[rng.random_range(0..k)].push(i);
    }
    groups.retain(|g| !g.is_empty());
    if groups.is_empty() {
        groups.push(vec![0]);
    }
    if rng.random_bool(0.5) {
        GroupPartition::with_size_weights(dim, groups).unwrap()
    } else {
        let weights = groups.iter().map(|_| rng.random_range(0.5..3.0)).collect();
        GroupPartition::new(dim, groups, weights).unwrap()
    }
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let scale = [0.01, 0.3, 1.0, 5.0][rng.random_range(0..4)];
    (0..dim).map(|_| if rng.random_bool(0.05) { 0.0 } else { scale * normal(rng) }).collect()
}

/// Uniform on `[0, hi)`, exactly zero 5% of the time.
fn maybe_zero(rng: &mut ChaCha8Rng, hi: f64) -> f64 {
    if rng.random_bool(0.05) {
        0.0
    } else {
        rng.random_range(0.0..hi)
    }
}

pub fn random_instance(kind: RegularizerKind, rng: &mut ChaCha8Rng) -> ProxInstance {
    let dim = rng.random_range(1..=12);
    let partition = random_partition(rng, dim);
    let mut tau = rng.random_range(0.01..2.0);
    let lambda = maybe_zero(rng, 2.0);
    let lambda_l1 = maybe_zero(rng, 1.0);
    let reg = match kind {
        RegularizerKind::None => Regularizer::None,
        RegularizerKind::L1 => Regularizer::L1 { lambda },
        RegularizerKind::GroupLasso => Regularizer::GroupLasso { lambda, partition },
        RegularizerKind::SparseGroupLasso => Regularizer::SparseGroupLasso { lambda_l1, lambda_group: lambda, partition },
        RegularizerKind::GroupMcp | RegularizerKind::L1GroupMcp => {
            let omega = rng.random_range(1.01..6.0);
            let min_w = partition.weights().iter().copied().fold(f64::INFINITY, f64::min);
            tau = rng.random_range(0.01..0.99) * (omega * min_w).min(2.0);
            if kind == RegularizerKind::GroupMcp {
                Regularizer::GroupMcp { lambda, omega, partition }
            } else {
                Regularizer::L1GroupMcp { lambda_l1, lambda_group: lambda, omega, partition }
            }
        }
        RegularizerKind::BoxIndicator => {
            let lo = rng.random_range(-2.0..1.0);
            let hi = if rng.random_bool(0.1) { lo } else { lo + rng.random_range(0.0..2.0) };
            Regularizer::BoxIndicator { lo, hi }
        }
    };
    ProxInstance { v: random_vector(rng, dim), reg, tau }
}

fn scalar_mcp(r: f64, lambda: f64, omega: f64) -> f64 {
    if r <= lambda * omega {
        lambda * r - r * r / (2.0 * omega)
    } else {
        lambda * lambda * omega / 2.0
    }
}

/// Radial penalty `phi(rho)` of one group and the ℓ1 weight on its coordinates.
fn group_terms(reg: &Regularizer, wg: f64) -> (Box<dyn Fn(f64) -> f64 + '_>, f64) {
    match reg {
        Regularizer::GroupLasso { lambda, .. } => (Box::new(move |r| lambda * wg * r), 0.0),
        Regularizer::SparseGroupLasso { lambda_l1, lambda_group, .. } => {
            (Box::new(move |r| lambda_group * wg * r), *lambda_l1)
        }
        Regularizer::GroupMcp { lambda, omega, .. } => {
            (Box::new(move |r| scalar_mcp(r, lambda * wg, omega * wg)), 0.0)
        }
        Regularizer::L1GroupMcp { lambda_l1, lambda_group, omega, .. } => {
            (Box::new(move |r| scalar_mcp(r, lambda_group * wg, omega * wg)), *lambda_l1)
        }
        _ => unreachable!("not a group regularizer"),
    }
}

/// `psi(u)` written out from the definitions.
pub fn psi(reg: &Regularizer, u: &[f64]) -> f64 {
    match reg {
        Regularizer::None => 0.0,
        Regularizer::L1 { lambda } => lambda * u.iter().map(|x| x.abs()).sum::<f64>(),
        Regularizer::BoxIndicator { lo, hi } => {
            if u.iter().all(|x| *lo <= *x && *x <= *hi) {
                0.0
            } else {
                f64::INFINITY
            }
        }
        _ => {
            let p = reg.partition().unwrap();
            let mut total = 0.0;
            for (idx, &wg) in p.groups().iter().zip(p.weights()) {
                let (phi, l1) = group_terms(reg, wg);
                let ug: Vec<f64> = idx.iter().map(|&i| u[i]).collect();
                total += phi(l2(&ug)) + l1 * ug.iter().map(|x| x.abs()).sum::<f64>();
            }
            total
        }
    }
}

pub fn prox_objective(inst: &ProxInstance, u: &[f64]) -> f64 {
    0.5 * dist(u, &inst.v).powi(2) + inst.tau * psi(&inst.reg, u)
}

/// Minimum of `h` on `[a, b]`: a 2001-point grid, then golden-section search
/// on the bracket around the best grid point.
pub fn minimize_1d(h: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const GRID: usize = 2001;
    if b <= a {
        return h(a);
    }
    let step = (b - a) / (GRID - 1) as f64;
    let at = |k: usize| if k == GRID - 1 { b } else { a + k as f64 * step };
    let (mut best_k, mut best) = (0, h(a));
    for k in 1..GRID {
        let f = h(at(k));
        if f < best {
            best = f;
            best_k = k;
        }
    }
    let (mut lo, mut hi) = (at(best_k.saturating_sub(1)), at((best_k + 1).min(GRID - 1)));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (h(x1), h(x2));
    for _ in 0..200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = h(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = h(x2);
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
    }
    best.min(f1).min(f2).min(h(lo)).min(h(hi))
}

/// Minimal prox objective by radial 1-D minimization, computed without the
/// implementation: per coordinate for ℓ1 and the box, per group along the
/// ray through `v_g` (through the soft-thresholded `v_g` when an ℓ1 part is
/// present) otherwise. Ungrouped coordinates of group kinds contribute zero.
pub fn oracle_min(inst: &ProxInstance) -> f64 {
    let v = &inst.v;
    let tau = inst.tau;
    match &inst.reg {
        Regularizer::None => 0.0,
        Regularizer::L1 { lambda } => v
            .iter()
            .map(|&x| minimize_1d(|r| 0.5 * (r - x.abs()).powi(2) + tau * lambda * r, 0.0, x.abs()))
            .sum(),
        Regularizer::BoxIndicator { lo, hi } => {
            v.iter().map(|&x| minimize_1d(|u| 0.5 * (u - x).powi(2), *lo, *hi)).sum()
        }
        reg => {
            let p = reg.partition().unwrap();
            let mut total = 0.0;
            for (idx, &wg) in p.groups().iter().zip(p.weights()) {
                let (phi, l1) = group_terms(reg, wg);
                let vg: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
                let th = tau * l1;
                let s: Vec<f64> = vg.iter().map(|&x| x.signum() * (x.abs() - th).max(0.0)).collect();
                let s_norm = l2(&s);
                if s_norm == 0.0 {
                    total += 0.5 * l2(&vg).powi(2);
                    continue;
                }
                let dir: Vec<f64> = s.iter().map(|x| x / s_norm).collect();
                let dir_l1: f64 = dir.iter().map(|x| x.abs()).sum();
                let h = |rho: f64| {
                    let sq: f64 = dir.iter().zip(&vg).map(|(d, x)| (rho * d - x).powi(2)).sum();
                    0.5 * sq + tau * (l1 * rho * dir_l1 + phi(rho))
                };
                total += minimize_1d(h, 0.0, l2(&vg));
            }
            total
        }
    }
}

/// Worst `|F(prox) - F_oracle|` over `n` random instances of `kind`.
pub fn prox_oracle_gap(kind: RegularizerKind, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let inst = random_instance(kind, &mut rng);
        let u = inst.reg.prox(&inst.v, inst.tau).unwrap();
        let gap = (prox_objective(&inst, &u) - oracle_min(&inst)).abs();
        worst = worst.max(if gap.is_nan() { f64::INFINITY } else { gap });
    }
    worst
}

/// Worst `||P(a) - P(b)|| / ||a - b||` over `n` random pairs.
pub fn nonexpansive_ratio(kind: RegularizerKind, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let inst = random_instance(kind, &mut rng);
        let b = random_vector(&mut rng, inst.v.len());
        let d = dist(&inst.v, &b);
        if d == 0.0 {
            continue;
        }
        let pa = inst.reg.prox(&inst.v, inst.tau).unwrap();
        let pb = inst.reg.prox(&b, inst.tau).unwrap();
        worst = worst.max(dist(&pa, &pb) / d);
    }
    worst
}

/// Small random instance of each model kind.
pub fn random_model(kind: usize, rng: &mut ChaCha8Rng) -> ModelSpec {
    match kind {
        0 => ModelSpec::LogisticRegression { in_dim: rng.random_range(1..=6), classes: rng.random_range(2..=4) },
        1 => {
            let mut widths = vec![rng.random_range(1..=5)];
            for _ in 0..rng.random_range(1..=2) {
                widths.push(rng.random_range(2..=5));
            }
            widths.push(rng.random_range(2..=4));
            ModelSpec::Mlp { widths }
        }
        _ => {
            let height = rng.random_range(3..=6);
            let width = rng.random_range(3..=6);
            ModelSpec::TinyConvNet {
                channels: rng.random_range(1..=2),
                height,
                width,
                filters: rng.random_range(1..=3),
                kernel_h: rng.random_range(1..=3.min(height)),
                kernel_w: rng.random_range(1..=3.min(width)),
                classes: rng.random_range(2..=3),
            }
        }
    }
}

/// Worst relative error `||g - g_fd|| / max(||g||, ||g_fd||, 1e-8)` of the
/// analytic minibatch gradient against central differences with step `h`.
pub fn gradient_check(kind: usize, instances: usize, h: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let spec = random_model(kind, &mut rng);
        let dim = spec.param_count();
        // fan-in scaled weights keep the softmax away from saturation, where
        // the gradient sinks below the round-off of the difference quotient
        let w = spec.init(rng.random()).unwrap().into_values();
        let batch = rng.random_range(1..=3);
        let inputs: Vec<f64> = (0..batch * spec.in_dim()).map(|_| normal(&mut rng)).collect();
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..spec.classes())).collect();
        let (_, g) = spec.loss_and_grad(&w, &inputs, &labels).unwrap();
        let mut fd = vec![0.0; dim];
        let mut wp = w.clone();
        for i in 0..dim {
            wp[i] = w[i] + h;
            let up = spec.loss(&wp, &inputs, &labels).unwrap();
            wp[i] = w[i] - h;
            let down = spec.loss(&wp, &inputs, &labels).unwrap();
            wp[i] = w[i];
            fd[i] = (up - down) / (2.0 * h);
        }
        let err = dist(&g, &fd) / l2(&g).max(l2(&fd)).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

/// Runs RMDA with `W~` pinned to `W* = (a, ..., a)` by a degenerate box and
/// constant momentum `c`, returning the worst relative deviation of
/// `||W^t - W*||` from `(1 - c)^t ||W^0 - W*||` for `t <= steps`.
pub fn contraction_error(a: f64, c: f64, steps: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 20;
    let w0: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
    let target = vec![a; dim];
    let d0 = dist(&w0, &target);
    let reg = Regularizer::BoxIndicator { lo: a, hi: a };
    let mut state =
        RmdaState::new(ParamVector::from_vec(w0).unwrap(), reg, Schedule::constant(0.1), Schedule::constant(c)).unwrap();
    let mut worst = 0.0f64;
    for t in 1..=steps {
        let g: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
        state.step(&g, 0).unwrap();
        let expected = (1.0 - c).powi(t as i32) * d0;
        let got = dist(state.w().values(), &target);
        worst = worst.max((got - expected).abs() / expected);
    }
    worst
}
