//! Exponential-convergence certificate for the base observer.
//!
//! For a gain matrix `G`, gains `(k_P, k_I)` and signal bounds
//! `B = max(B_Ω, B_b)` this computes a feasible cross-term weight `ε`, the
//! three quadratic forms bounding
//!
//! ```text
//! V(E_A, e_b) = ½‖E_A‖² + (1/k_I)‖e_b‖² + ε⟨E_A, A hat(e_b)⟩
//! ```
//!
//! from below, above and along the flow, and from them the rates `α`, `β`,
//! `a = β/2` and the prefactor `C` of
//! `‖E_A(t)‖ + ‖e_b(t)‖ ≤ C (‖E_A(0)‖ + ‖e_b(0)‖) e^{−a t}`.

use std::f64::consts::SQRT_2;

use nalgebra::Matrix2;
use serde::Serialize;
use thiserror::Error;

use crate::harness::RunRecord;
use crate::matrix_lie::{frobenius_inner, hat, lambda_min_sym, skew, skew_vee, Matrix3, Vector3};
use crate::observers::Gains;

/// Multiplicative slack of [`verify_decay`] for integration error.
pub const DECAY_SLACK: f64 = 1e-3;
/// Error sums below this are integration noise and pass [`verify_decay`]
/// regardless of the bound.
pub const NORM_FLOOR: f64 = 1e-10;
/// `V` counterpart of [`NORM_FLOOR`].
pub const V_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("infeasible ε = {epsilon:e}: quadratic forms are not positive definite")]
    InfeasibleEpsilon { epsilon: f64 },
    #[error("gain matrix is singular: λ_min(GᵀG) = {0:e}")]
    SingularGain(f64),
    #[error("signal bounds must be finite and non-negative (B_Ω = {b_omega}, B_b = {b_bias})")]
    InvalidBounds { b_omega: f64, b_bias: f64 },
}

/// `B_Ω ≥ sup ‖Ω(t)‖`, `B_b ≥ ‖b‖`, `B = max(B_Ω, B_b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalBounds {
    b_omega: f64,
    b_bias: f64,
}

impl SignalBounds {
    pub fn new(b_omega: f64, b_bias: f64) -> Result<Self, CertificateError> {
        if !(b_omega >= 0.0 && b_bias >= 0.0 && b_omega.is_finite() && b_bias.is_finite()) {
            return Err(CertificateError::InvalidBounds { b_omega, b_bias });
        }
        Ok(Self { b_omega, b_bias })
    }

    pub fn b_omega(&self) -> f64 {
        self.b_omega
    }

    pub fn b_bias(&self) -> f64 {
        self.b_bias
    }

    pub fn b(&self) -> f64 {
        self.b_omega.max(self.b_bias)
    }
}

/// `E_A = A − Ā`, `e_b = b − b̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorState {
    pub e_a: Matrix3,
    pub e_b: Vector3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovCertificate {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub c: f64,
    pub lambda_min_gtg: f64,
    /// Frobenius norm of `G`.
    pub norm_g: f64,
    pub kp: f64,
    pub ki: f64,
    pub b_omega: f64,
    pub b_bias: f64,
    pub b: f64,
    /// Norm-equivalence constants of `√V₁` against the 1-norm.
    pub c_lo: f64,
    pub c_hi: f64,
}

impl LyapunovCertificate {
    pub fn gains(&self) -> Gains {
        Gains::new(self.kp, self.ki).expect("certificate gains are positive")
    }

    pub fn forms(&self) -> QuadraticForms {
        QuadraticForms::new(self.epsilon, self.norm_g, self.lambda_min_gtg, &self.gains(), self.b)
    }
}

/// The two strict upper bounds on `ε`.
pub fn epsilon_bounds(g: &Matrix3, gains: &Gains, bounds: &SignalBounds) -> (f64, f64) {
    let norm_g = g.norm();
    let lambda = lambda_min_sym(&(g.transpose() * g));
    let (kp, ki) = (gains.kp(), gains.ki());
    let first = 1.0 / (norm_g * ki.sqrt());
    let second = 4.0 * kp * lambda / (norm_g.powi(2) * (4.0 * ki * lambda + (kp + 3.0 * SQRT_2 * bounds.b()).powi(2)));
    (first, second)
}

/// Half the smaller of the two strict upper bounds.
pub fn compute_epsilon(g: &Matrix3, gains: &Gains, bounds: &SignalBounds) -> f64 {
    let (first, second) = epsilon_bounds(g, gains, bounds);
    0.5 * first.min(second)
}

/// Coefficient matrices of `V₁`, `V₂`, `V₃` as quadratic forms in
/// `(‖E_A‖, ‖e_b‖)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticForms {
    pub m1: Matrix2<f64>,
    pub m2: Matrix2<f64>,
    pub m3: Matrix2<f64>,
}

impl QuadraticForms {
    pub fn new(epsilon: f64, norm_g: f64, lambda_min_gtg: f64, gains: &Gains, b: f64) -> Self {
        let (kp, ki) = (gains.kp(), gains.ki());
        let cross = SQRT_2 * epsilon * norm_g / 2.0;
        let m1 = Matrix2::new(0.5, -cross, -cross, 1.0 / ki);
        let m2 = Matrix2::new(0.5, cross, cross, 1.0 / ki);
        let cross3 = -epsilon * (SQRT_2 * kp + 6.0 * b) * norm_g / 2.0;
        let m3 = Matrix2::new(
            kp - epsilon * ki * norm_g.powi(2),
            cross3,
            cross3,
            2.0 * epsilon * lambda_min_gtg,
        );
        Self { m1, m2, m3 }
    }

    /// `(V₁, V₂, V₃)` at `(x₁, x₂)`.
    pub fn evaluate(&self, x1: f64, x2: f64) -> (f64, f64, f64) {
        let q = |m: &Matrix2<f64>| m[(0, 0)] * x1 * x1 + 2.0 * m[(0, 1)] * x1 * x2 + m[(1, 1)] * x2 * x2;
        (q(&self.m1), q(&self.m2), q(&self.m3))
    }
}

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix.
pub fn sym2_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let radius = (0.25 * (m[(0, 0)] - m[(1, 1)]).powi(2) + m[(0, 1)].powi(2)).sqrt();
    (mean - radius, mean + radius)
}

/// `(V₁, V₂, V₃)` at `(‖E_A‖, ‖e_b‖) = (n_ea, n_eb)`.
pub fn quadratic_forms(n_ea: f64, n_eb: f64, cert: &LyapunovCertificate) -> (f64, f64, f64) {
    cert.forms().evaluate(n_ea, n_eb)
}

/// `α = λ_max(M₂)/λ_min(M₁)` and `β = λ_min(M₃)/λ_max(M₂)`.
pub fn certificate_rates(forms: &QuadraticForms, epsilon: f64) -> Result<(f64, f64), CertificateError> {
    let (min1, _) = sym2_eigenvalues(&forms.m1);
    let (_, max2) = sym2_eigenvalues(&forms.m2);
    let (min3, _) = sym2_eigenvalues(&forms.m3);
    if !(min1 > 0.0 && min3 > 0.0) {
        return Err(CertificateError::InfeasibleEpsilon { epsilon });
    }
    Ok((max2 / min1, min3 / max2))
}

/// Tight constants `c_lo ≤ √V₁(x)/‖x‖₁ ≤ c_hi` over `x ≥ 0`.
///
/// `V₁` restricted to the simplex `x₁ + x₂ = 1` is a convex quadratic in
/// `x₁`, so the minimum is at the clamped vertex and the maximum at an end.
pub fn simplex_norm_constants(m1: &Matrix2<f64>) -> (f64, f64) {
    let (a, b, d) = (m1[(0, 0)], m1[(0, 1)], m1[(1, 1)]);
    // V₁(t, 1−t) = p t² + q t + r
    let p = a - 2.0 * b + d;
    let q = 2.0 * b - 2.0 * d;
    let r = d;
    let f = |t: f64| (p * t + q) * t + r;
    let vertex = if p > 0.0 { (-q / (2.0 * p)).clamp(0.0, 1.0) } else { 0.0 };
    let lo = f(vertex).min(f(0.0)).min(f(1.0));
    let hi = f(0.0).max(f(1.0));
    (lo.max(0.0).sqrt(), hi.sqrt())
}

/// `C = √α · c_hi / c_lo`, together with `(c_lo, c_hi)`.
pub fn prefactor_c(forms: &QuadraticForms, alpha: f64, epsilon: f64) -> Result<(f64, f64, f64), CertificateError> {
    let (min1, _) = sym2_eigenvalues(&forms.m1);
    if !(min1 > 0.0) {
        return Err(CertificateError::InfeasibleEpsilon { epsilon });
    }
    let (c_lo, c_hi) = simplex_norm_constants(&forms.m1);
    Ok((alpha.sqrt() * c_hi / c_lo, c_lo, c_hi))
}

/// Builds the certificate with the default `ε` from [`compute_epsilon`].
pub fn certify(g: &Matrix3, gains: &Gains, bounds: &SignalBounds) -> Result<LyapunovCertificate, CertificateError> {
    certify_with_epsilon(g, gains, bounds, compute_epsilon(g, gains, bounds))
}

pub fn certify_with_epsilon(
    g: &Matrix3,
    gains: &Gains,
    bounds: &SignalBounds,
    epsilon: f64,
) -> Result<LyapunovCertificate, CertificateError> {
    let lambda = lambda_min_sym(&(g.transpose() * g));
    if !(lambda > 0.0) {
        return Err(CertificateError::SingularGain(lambda));
    }
    let norm_g = g.norm();
    let forms = QuadraticForms::new(epsilon, norm_g, lambda, gains, bounds.b());
    let (alpha, beta) = certificate_rates(&forms, epsilon)?;
    let (c, c_lo, c_hi) = prefactor_c(&forms, alpha, epsilon)?;
    Ok(LyapunovCertificate {
        epsilon,
        alpha,
        beta,
        a: beta / 2.0,
        c,
        lambda_min_gtg: lambda,
        norm_g,
        kp: gains.kp(),
        ki: gains.ki(),
        b_omega: bounds.b_omega(),
        b_bias: bounds.b_bias(),
        b: bounds.b(),
        c_lo,
        c_hi,
    })
}

/// `V = ½‖E_A‖² + (1/k_I)‖e_b‖² + ε⟨E_A, A hat(e_b)⟩`.
pub fn lyapunov_value(err: &ErrorState, a: &Matrix3, cert: &LyapunovCertificate) -> f64 {
    0.5 * err.e_a.norm_squared()
        + err.e_b.norm_squared() / cert.ki
        + cert.epsilon * frobenius_inner(&err.e_a, &(a * hat(&err.e_b)))
}

/// `dV/dt` along the exact error dynamics
///
/// ```text
/// Ė_A = E_A (hat Ω + hat b) − A hat(e_b) − k_P E_A
/// ė_b = k_I vee(Skew(AᵀE_A)),   Ȧ = A hat Ω
/// ```
pub fn lyapunov_rate(
    err: &ErrorState,
    a: &Matrix3,
    omega: &Vector3,
    bias: &Vector3,
    cert: &LyapunovCertificate,
) -> f64 {
    let (kp, ki, eps) = (cert.kp, cert.ki, cert.epsilon);
    let e_b_hat = hat(&err.e_b);
    let e_a_dot = err.e_a * hat(&(omega + bias)) - a * e_b_hat - err.e_a * kp;
    let e_b_dot = skew_vee(&(a.transpose() * err.e_a)) * ki;
    let a_dot = a * hat(omega);
    frobenius_inner(&err.e_a, &e_a_dot)
        + 2.0 / ki * err.e_b.dot(&e_b_dot)
        + eps
            * (frobenius_inner(&e_a_dot, &(a * e_b_hat))
                + frobenius_inner(&err.e_a, &(a_dot * e_b_hat))
                + frobenius_inner(&err.e_a, &(a * skew(&(a.transpose() * err.e_a)) * ki)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayBound {
    /// `V(t) ≤ V(0) e^{−βt}`.
    Lyapunov,
    /// `‖E_A‖ + ‖e_b‖ ≤ C (‖E_A(0)‖ + ‖e_b(0)‖) e^{−at}`.
    ErrorNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayViolation {
    pub index: usize,
    pub t: f64,
    pub bound: DecayBound,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub passed: bool,
    pub samples_checked: usize,
    pub first_violation: Option<DecayViolation>,
    /// Largest `V(t) / (V(0) e^{−βt})`.
    pub max_v_ratio: f64,
    /// Largest `(‖E_A‖+‖e_b‖) / (C (‖E_A(0)‖+‖e_b(0)‖) e^{−at})`.
    pub max_norm_ratio: f64,
}

/// One point of a trajectory as seen by [`verify_decay_samples`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySample {
    pub t: f64,
    pub v: f64,
    /// `‖E_A‖ + ‖e_b‖`.
    pub error_sum: f64,
}

/// Checks both exponential bounds at every sample, with
/// [`DECAY_SLACK`] multiplicative slack.
pub fn verify_decay_samples(samples: &[DecaySample], cert: &LyapunovCertificate) -> DecayReport {
    let mut report = DecayReport {
        passed: true,
        samples_checked: samples.len(),
        first_violation: None,
        max_v_ratio: 0.0,
        max_norm_ratio: 0.0,
    };
    let Some(first) = samples.first() else {
        return report;
    };
    let (t0, v0, n0) = (first.t, first.v, first.error_sum);
    for (index, s) in samples.iter().enumerate() {
        let dt = s.t - t0;
        let v_limit = v0 * (-cert.beta * dt).exp();
        let n_limit = cert.c * n0 * (-cert.a * dt).exp();
        let checks = [
            (DecayBound::Lyapunov, s.v, v_limit, V_FLOOR),
            (DecayBound::ErrorNorm, s.error_sum, n_limit, NORM_FLOOR),
        ];
        for (bound, value, limit, floor) in checks {
            let ratio = if limit > 0.0 {
                value / limit
            } else if value <= floor {
                0.0
            } else {
                f64::INFINITY
            };
            match bound {
                DecayBound::Lyapunov => report.max_v_ratio = report.max_v_ratio.max(ratio),
                DecayBound::ErrorNorm => report.max_norm_ratio = report.max_norm_ratio.max(ratio),
            }
            let ok = value <= limit * (1.0 + DECAY_SLACK) || value <= floor;
            if !ok || !value.is_finite() {
                report.passed = false;
                report.first_violation.get_or_insert(DecayViolation {
                    index,
                    t: s.t,
                    bound,
                    value,
                    limit,
                });
            }
        }
    }
    report
}

/// [`verify_decay_samples`] over a run's `V` and error-sum series.
pub fn verify_decay(run: &RunRecord, cert: &LyapunovCertificate) -> DecayReport {
    let samples: Vec<DecaySample> = run
        .samples
        .iter()
        .map(|s| DecaySample {
            t: s.t,
            v: s.v,
            error_sum: s.e_a + s.e_b,
        })
        .collect();
    verify_decay_samples(&samples, cert)
}
