//! Randomized battery of the matrix identities the convergence proof
//! relies on, plus equivalence checks between observer variants.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{scene_signal, Matrix3xX, SceneWeights, VectorScene};
use crate::matrix_lie::{
    exp_so3, frobenius_inner, hat, lambda_max_sym, lambda_min_sym, random_rotation_from, skew, sym, Matrix3,
    Rotation3, Vector3,
};
use crate::observers::{
    base_derivative, diag_form_derivative, linear_form_derivative, quad_form_derivative, time_varying_derivative,
    Gains, ObserverState,
};

pub const LEMMA_TOLERANCE: f64 = 1e-12;
pub const REDUCTION_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Identity,
    Reduction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub kind: CheckKind,
    pub name: &'static str,
    pub samples: usize,
    /// Largest violation seen; `0` means the relation held exactly.
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfCheckOptions {
    pub seed: u64,
    pub samples: usize,
    pub rotation_pairs: usize,
    /// Replace the hat map with its mirror image, to show the battery
    /// catches a wrong-handed implementation.
    pub perturb_hat: bool,
}

impl Default for SelfCheckOptions {
    fn default() -> Self {
        Self {
            seed: 0x5e1f,
            samples: 1000,
            rotation_pairs: 100_000,
            perturb_hat: false,
        }
    }
}

fn check(kind: CheckKind, name: &'static str, samples: usize, max_error: f64, tolerance: f64) -> CheckResult {
    CheckResult {
        kind,
        name,
        samples,
        max_error,
        tolerance,
        passed: max_error <= tolerance,
    }
}

fn rand_matrix(rng: &mut ChaCha8Rng) -> Matrix3 {
    Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

fn rand_vector(rng: &mut ChaCha8Rng) -> Vector3 {
    Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

/// The seven identities, in order.
pub fn identity_checks(options: &SelfCheckOptions) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let n = options.samples;
    let hat_map = |v: &Vector3| if options.perturb_hat { -hat(v) } else { hat(v) };
    let id = CheckKind::Identity;
    let mut out = Vec::with_capacity(7);

    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let r = random_rotation_from(&mut rng);
        let (a, b) = (rand_matrix(&mut rng), rand_matrix(&mut rng));
        let plain = frobenius_inner(&a, &b);
        worst = worst
            .max((frobenius_inner(&(r.matrix() * a), &(r.matrix() * b)) - plain).abs())
            .max((frobenius_inner(&(a * r.matrix()), &(b * r.matrix())) - plain).abs());
    }
    out.push(check(id, "1: <RA,RB> = <A,B> = <AR,BR>", n, worst, LEMMA_TOLERANCE));

    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (a, b) = (rand_matrix(&mut rng), rand_matrix(&mut rng));
        let ata = a.transpose() * a;
        let ab = a * b;
        let value = frobenius_inner(&ab, &ab);
        let norm2 = b.norm_squared();
        worst = worst
            .max(lambda_min_sym(&ata) * norm2 - value)
            .max(value - lambda_max_sym(&ata) * norm2);
    }
    out.push(check(id, "2: lmin(A'A)|B|^2 <= <AB,AB> <= lmax(A'A)|B|^2", n, worst, LEMMA_TOLERANCE));

    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (x, y) = (rand_vector(&mut rng), rand_vector(&mut rng));
        worst = worst.max((frobenius_inner(&hat_map(&x), &hat_map(&y)) - 2.0 * x.dot(&y)).abs());
    }
    out.push(check(id, "3: <hat x, hat y> = 2 <x,y>", n, worst, LEMMA_TOLERANCE));

    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let a = rand_matrix(&mut rng);
        worst = worst.max((a.norm_squared() - sym(&a).norm_squared() - skew(&a).norm_squared()).abs());
    }
    out.push(check(id, "4: |A|^2 = |Sym A|^2 + |Skew A|^2", n, worst, LEMMA_TOLERANCE));

    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (a, b) = (rand_matrix(&mut rng), rand_matrix(&mut rng));
        worst = worst.max((a * b).norm() - a.norm() * b.norm());
    }
    out.push(check(id, "5: |AB| <= |A||B|", n, worst, LEMMA_TOLERANCE));

    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (x, y) = (rand_vector(&mut rng), rand_vector(&mut rng));
        worst = worst.max((hat_map(&x.cross(&y)) - (y * x.transpose() - x * y.transpose())).norm());
    }
    out.push(check(id, "6: x cross y = vee(y x' - x y')", n, worst, LEMMA_TOLERANCE));

    let bound = 2.0 * SQRT_2;
    let mut worst: f64 = 0.0;
    for _ in 0..options.rotation_pairs {
        let (r1, r2) = (random_rotation_from(&mut rng), random_rotation_from(&mut rng));
        worst = worst.max((r1.matrix() - r2.matrix()).norm() - bound);
    }
    let half_turn = (Rotation3::identity().matrix() - exp_so3(&Vector3::new(0.0, 0.0, PI)).matrix()).norm();
    worst = worst.max((half_turn - bound).abs());
    out.push(check(id, "7: |R1 - R2| <= 2 sqrt 2, attained at a half-turn", options.rotation_pairs, worst, LEMMA_TOLERANCE));
    out
}

fn random_directions(rng: &mut ChaCha8Rng, m: usize) -> Matrix3xX {
    let mut s = Matrix3xX::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    for mut c in s.column_iter_mut() {
        c.normalize_mut();
    }
    s
}

fn derivative_gap(x: (Matrix3, Vector3), y: (Matrix3, Vector3)) -> f64 {
    (x.0 - y.0).norm().max((x.1 - y.1).norm())
}

/// Vector-measurement forms against the base observer with doubled `k_I`,
/// the quadratic form with diagonal and `SW` substitutions, and the
/// time-varying form with `Ġ = 0`.
pub fn reduction_checks(options: &SelfCheckOptions) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x7265_6475);
    let n = options.samples;
    let red = CheckKind::Reduction;
    let mut worst = [0.0f64; 6];
    let mut counted = [0usize; 6];
    let mut tried = 0;
    while counted[0] < n && tried < 10 * n {
        tried += 1;
        let m = rng.random_range(3..=6);
        let s = random_directions(&mut rng, m);
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..2.0)).collect();
        let Ok(diag) = VectorScene::new(s.clone(), SceneWeights::Diagonal(w.clone())) else {
            continue;
        };
        let r = random_rotation_from(&mut rng);
        let body = r.matrix().transpose() * &s;
        let state = ObserverState::new(rand_matrix(&mut rng) * 3.0, rand_vector(&mut rng));
        let omega_m = rand_vector(&mut rng);
        let gains = Gains::new(rng.random_range(0.1..5.0), rng.random_range(0.1..5.0)).unwrap();
        let doubled = Gains::new(gains.kp(), 2.0 * gains.ki()).unwrap();

        let g = *diag.gain();
        let a = scene_signal(&diag, &body);
        let base = base_derivative(&state, &a, &omega_m, &doubled);
        let d = diag_form_derivative(&state, &diag, &body, &omega_m, &gains).unwrap();
        worst[0] = worst[0].max(derivative_gap(d, base));
        counted[0] += 1;

        let quad_from_diag = diag.to_quadratic().unwrap();
        let q = quad_form_derivative(&state, &quad_from_diag, &body, &omega_m, &gains).unwrap();
        worst[1] = worst[1].max(derivative_gap(q, d));
        counted[1] += 1;

        let wq = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        if let Ok(quad) = VectorScene::new(s.clone(), SceneWeights::Quadratic(wq)) {
            let base_q = base_derivative(&state, &scene_signal(&quad, &body), &omega_m, &doubled);
            let q = quad_form_derivative(&state, &quad, &body, &omega_m, &gains).unwrap();
            worst[2] = worst[2].max(derivative_gap(q, base_q));
            counted[2] += 1;
            let linear = quad.to_linear();
            let l = linear_form_derivative(&state, &linear, &body, &omega_m, &gains).unwrap();
            worst[3] = worst[3].max(derivative_gap(l, q));
            counted[3] += 1;
        }

        let wl = Matrix3xX::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        if let Ok(linear) = VectorScene::new(s.clone(), SceneWeights::Linear(wl)) {
            let base_l = base_derivative(&state, &scene_signal(&linear, &body), &omega_m, &doubled);
            let l = linear_form_derivative(&state, &linear, &body, &omega_m, &gains).unwrap();
            worst[4] = worst[4].max(derivative_gap(l, base_l));
            counted[4] += 1;
        }

        let tv = time_varying_derivative(&state, &a, &omega_m, &g, &Matrix3::zeros(), &gains).unwrap();
        let plain = base_derivative(&state, &a, &omega_m, &gains);
        // Ġ = 0 must reproduce the base observer bit for bit.
        worst[5] = worst[5].max(if tv == plain { 0.0 } else { derivative_gap(tv, plain).max(f64::MIN_POSITIVE) });
        counted[5] += 1;
    }
    vec![
        check(red, "diagonal form = base with 2 k_I", counted[0], worst[0], REDUCTION_TOLERANCE),
        check(red, "quadratic form with diagonal W = diagonal form", counted[1], worst[1], REDUCTION_TOLERANCE),
        check(red, "quadratic form = base with 2 k_I", counted[2], worst[2], REDUCTION_TOLERANCE),
        check(red, "linear form with W -> SW = quadratic form", counted[3], worst[3], REDUCTION_TOLERANCE),
        check(red, "linear form = base with 2 k_I", counted[4], worst[4], REDUCTION_TOLERANCE),
        check(red, "time-varying form with dG/dt = 0 = base", counted[5], worst[5], 0.0),
    ]
}

/// Identity battery followed by the reduction checks.
pub fn run_selfcheck(options: &SelfCheckOptions) -> Vec<CheckResult> {
    let mut out = identity_checks(options);
    out.extend(reduction_checks(options));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> SelfCheckOptions {
        SelfCheckOptions {
            samples: 200,
            rotation_pairs: 2000,
            ..SelfCheckOptions::default()
        }
    }

    #[test]
    fn clean_battery_passes() {
        let results = run_selfcheck(&quick());
        assert_eq!(results.iter().filter(|r| r.kind == CheckKind::Identity).count(), 7);
        for r in &results {
            assert!(r.passed, "{r:?}");
            assert!(r.samples > 0);
        }
    }

    #[test]
    fn mirrored_hat_fails_cross_product_identity() {
        let results = identity_checks(&SelfCheckOptions { perturb_hat: true, ..quick() });
        let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        assert_eq!(failed.len(), 1);
        assert!(failed[0].starts_with("6:"));
    }
}
