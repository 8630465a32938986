//! The matrix-space observer family and the Mahony baseline.
//!
//! Every observer is a pure state-derivative function. The state
//! `(Ā, b̄) ∈ ℝ³ˣ³ × ℝ³` is never constrained to SO(3); the rotation factor
//! is only extracted for reporting, by [`attitude_estimate`].
//!
//! The vector-measurement forms (linear, quadratic, diagonal) write the bias
//! law as `−k_I Σ cᵢ × (Āᵀwᵢ)`. That is the base law with gain `2·k_I`, so
//! [`ObserverVariant::base_equivalent_gains`] doubles `k_I` when a
//! certificate is computed for them.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dynamics::{scene_signal, Matrix3xX, SceneForm, SceneWeights, VectorScene};
use crate::matrix_lie::{hat, polar_rotation_factor, skew_vee, Matrix3, Rotation3, Vector3, POLAR_DET_FLOOR};

/// Tolerance on `R̂ᵀR̂ = I` for the Mahony state.
pub const MAHONY_MANIFOLD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObserverError {
    #[error("gains must be positive (k_P = {kp}, k_I = {ki})")]
    NonPositiveGains { kp: f64, ki: f64 },
    #[error("inverse variant requires invertible A (|det A| = {0:e})")]
    SingularSignal(f64),
    #[error("time-varying variant requires invertible G (|det G| = {0:e})")]
    SingularGain(f64),
    #[error("observer expects a {expected:?} scene, got {found:?}")]
    WrongForm { expected: SceneForm, found: SceneForm },
    #[error("{measured} body vectors for a scene of {expected} directions")]
    DimensionMismatch { expected: usize, measured: usize },
    #[error("Mahony state is off SO(3): ‖R̂ᵀR̂ − I‖ = {0:e}")]
    OffManifold(f64),
}

/// Estimate `(Ā, b̄)` of `(A, b)`; `b̄` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverState {
    pub a_bar: Matrix3,
    pub b_bar: Vector3,
}

impl ObserverState {
    pub fn new(a_bar: Matrix3, b_bar: Vector3) -> Self {
        Self { a_bar, b_bar }
    }

    pub fn is_finite(&self) -> bool {
        self.a_bar.iter().chain(self.b_bar.iter()).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    kp: f64,
    ki: f64,
}

impl Gains {
    pub fn new(kp: f64, ki: f64) -> Result<Self, ObserverError> {
        if !(kp > 0.0 && ki > 0.0 && kp.is_finite() && ki.is_finite()) {
            return Err(ObserverError::NonPositiveGains { kp, ki });
        }
        Ok(Self { kp, ki })
    }

    pub fn kp(&self) -> f64 {
        self.kp
    }

    pub fn ki(&self) -> f64 {
        self.ki
    }
}

/// Which member of the family a run integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObserverVariant {
    Base,
    GIdentity,
    Inverse,
    TimeVarying,
    LinearForm,
    QuadForm,
    DiagForm,
    MahonyBaseline,
}

impl ObserverVariant {
    pub const ALL: [ObserverVariant; 8] = [
        Self::Base,
        Self::GIdentity,
        Self::Inverse,
        Self::TimeVarying,
        Self::LinearForm,
        Self::QuadForm,
        Self::DiagForm,
        Self::MahonyBaseline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::GIdentity => "g_identity",
            Self::Inverse => "inverse",
            Self::TimeVarying => "time_varying",
            Self::LinearForm => "linear_form",
            Self::QuadForm => "quad_form",
            Self::DiagForm => "diag_form",
            Self::MahonyBaseline => "mahony_baseline",
        }
    }

    /// Scene form a vector-measurement variant consumes.
    pub fn scene_form(&self) -> Option<SceneForm> {
        match self {
            Self::LinearForm => Some(SceneForm::Linear),
            Self::QuadForm => Some(SceneForm::Quadratic),
            Self::DiagForm | Self::MahonyBaseline => Some(SceneForm::Diagonal),
            _ => None,
        }
    }

    /// Gains of the base observer this variant coincides with, for variants
    /// the exponential certificate covers.
    pub fn base_equivalent_gains(&self, gains: Gains) -> Option<Gains> {
        match self {
            Self::Base | Self::GIdentity => Some(gains),
            Self::LinearForm | Self::QuadForm | Self::DiagForm => Some(Gains {
                kp: gains.kp,
                ki: 2.0 * gains.ki,
            }),
            Self::Inverse | Self::TimeVarying | Self::MahonyBaseline => None,
        }
    }
}

impl fmt::Display for ObserverVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObserverVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown observer variant `{s}`"))
    }
}

/// `Ā hat(Ω_m) − A hat(b̄) + k_P (A − Ā)`, shared by the whole family.
fn a_bar_rate(state: &ObserverState, a: &Matrix3, omega_m: &Vector3, kp: f64) -> Matrix3 {
    state.a_bar * hat(omega_m) - a * hat(&state.b_bar) + (a - state.a_bar) * kp
}

/// Base observer:
/// `Ā' = Ā hat(Ω_m) − A hat(b̄) + k_P (A − Ā)`, `b̄' = k_I vee(Skew(AᵀĀ))`.
pub fn base_derivative(state: &ObserverState, a: &Matrix3, omega_m: &Vector3, gains: &Gains) -> (Matrix3, Vector3) {
    (
        a_bar_rate(state, a, omega_m, gains.kp),
        skew_vee(&(a.transpose() * state.a_bar)) * gains.ki,
    )
}

/// Same `Ā` law as the base observer; `b̄' = k_I vee(Skew(A⁻¹Ā))`.
pub fn inverse_variant_derivative(
    state: &ObserverState,
    a: &Matrix3,
    omega_m: &Vector3,
    gains: &Gains,
) -> Result<(Matrix3, Vector3), ObserverError> {
    let det = a.determinant();
    let a_inv = a
        .try_inverse()
        .filter(|_| det.abs() > POLAR_DET_FLOOR)
        .ok_or(ObserverError::SingularSignal(det.abs()))?;
    Ok((
        a_bar_rate(state, a, omega_m, gains.kp),
        skew_vee(&(a_inv * state.a_bar)) * gains.ki,
    ))
}

/// Base observer plus the feed-forward term `Ġ G⁻¹ A` for a time-varying `G`.
pub fn time_varying_derivative(
    state: &ObserverState,
    a: &Matrix3,
    omega_m: &Vector3,
    g: &Matrix3,
    g_dot: &Matrix3,
    gains: &Gains,
) -> Result<(Matrix3, Vector3), ObserverError> {
    let det = g.determinant();
    let g_inv = g
        .try_inverse()
        .filter(|_| det.abs() > POLAR_DET_FLOOR)
        .ok_or(ObserverError::SingularGain(det.abs()))?;
    let (a_rate, b_rate) = base_derivative(state, a, omega_m, gains);
    Ok((a_rate + g_dot * g_inv * a, b_rate))
}

fn check_scene(scene: &VectorScene, body: &Matrix3xX, expected: SceneForm) -> Result<(), ObserverError> {
    if scene.form() != expected {
        return Err(ObserverError::WrongForm {
            expected,
            found: scene.form(),
        });
    }
    if body.ncols() != scene.len() {
        return Err(ObserverError::DimensionMismatch {
            expected: scene.len(),
            measured: body.ncols(),
        });
    }
    Ok(())
}

/// Linear weights `W` (3×m): `A = W Cᵀ`, `b̄' = −k_I Σᵢ cᵢ × (Āᵀwᵢ)`.
pub fn linear_form_derivative(
    state: &ObserverState,
    scene: &VectorScene,
    body: &Matrix3xX,
    omega_m: &Vector3,
    gains: &Gains,
) -> Result<(Matrix3, Vector3), ObserverError> {
    check_scene(scene, body, SceneForm::Linear)?;
    let SceneWeights::Linear(w) = scene.weights() else {
        unreachable!()
    };
    let a = scene_signal(scene, body);
    let mut sum = Vector3::zeros();
    for (c, wi) in body.column_iter().zip(w.column_iter()) {
        sum += c.cross(&(state.a_bar.transpose() * wi));
    }
    Ok((a_bar_rate(state, &a, omega_m, gains.kp), -sum * gains.ki))
}

/// Quadratic weights `W` (m×m): `A = S W Cᵀ`,
/// `b̄' = −k_I Σᵢ Σⱼ wᵢⱼ cⱼ × (Āᵀsᵢ)`.
pub fn quad_form_derivative(
    state: &ObserverState,
    scene: &VectorScene,
    body: &Matrix3xX,
    omega_m: &Vector3,
    gains: &Gains,
) -> Result<(Matrix3, Vector3), ObserverError> {
    check_scene(scene, body, SceneForm::Quadratic)?;
    let SceneWeights::Quadratic(w) = scene.weights() else {
        unreachable!()
    };
    let a = scene_signal(scene, body);
    let mut sum = Vector3::zeros();
    for (i, s) in scene.directions().column_iter().enumerate() {
        let projected = state.a_bar.transpose() * s;
        for (j, c) in body.column_iter().enumerate() {
            sum += c.cross(&projected) * w[(i, j)];
        }
    }
    Ok((a_bar_rate(state, &a, omega_m, gains.kp), -sum * gains.ki))
}

/// Diagonal weights: `A = Σ wᵢ sᵢcᵢᵀ`, `b̄' = −k_I Σᵢ wᵢ cᵢ × (Āᵀsᵢ)`.
pub fn diag_form_derivative(
    state: &ObserverState,
    scene: &VectorScene,
    body: &Matrix3xX,
    omega_m: &Vector3,
    gains: &Gains,
) -> Result<(Matrix3, Vector3), ObserverError> {
    check_scene(scene, body, SceneForm::Diagonal)?;
    let a = scene_signal(scene, body);
    let sum = weighted_cross_sum(scene, body, &state.a_bar);
    Ok((a_bar_rate(state, &a, omega_m, gains.kp), -sum * gains.ki))
}

/// `Σᵢ wᵢ cᵢ × (Mᵀsᵢ)` over a diagonal-weight scene.
fn weighted_cross_sum(scene: &VectorScene, body: &Matrix3xX, m: &Matrix3) -> Vector3 {
    let SceneWeights::Diagonal(w) = scene.weights() else {
        unreachable!()
    };
    scene
        .directions()
        .column_iter()
        .zip(body.column_iter())
        .zip(w)
        .map(|((s, c), wi)| c.cross(&(m.transpose() * s)) * *wi)
        .sum()
}

/// Attitude and bias estimate of the Mahony explicit complementary filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MahonyState {
    r_hat: Matrix3,
    pub b_hat: Vector3,
}

impl MahonyState {
    pub fn new(r_hat: Matrix3, b_hat: Vector3) -> Result<Self, ObserverError> {
        let state = Self { r_hat, b_hat };
        state.check_manifold()?;
        Ok(state)
    }

    pub fn from_rotation(r_hat: Rotation3, b_hat: Vector3) -> Self {
        Self {
            r_hat: r_hat.into_inner(),
            b_hat,
        }
    }

    pub fn r_hat(&self) -> &Matrix3 {
        &self.r_hat
    }

    fn check_manifold(&self) -> Result<(), ObserverError> {
        let deviation = (self.r_hat.transpose() * self.r_hat - Matrix3::identity()).norm();
        if !(deviation <= MAHONY_MANIFOLD_TOLERANCE && self.r_hat.determinant() > 0.0) {
            return Err(ObserverError::OffManifold(deviation));
        }
        Ok(())
    }
}

/// Innovation `σ = Σᵢ wᵢ cᵢ × (R̂ᵀsᵢ)`.
pub fn mahony_innovation(r_hat: &Matrix3, scene: &VectorScene, body: &Matrix3xX) -> Result<Vector3, ObserverError> {
    check_scene(scene, body, SceneForm::Diagonal)?;
    Ok(weighted_cross_sum(scene, body, r_hat))
}

/// Unchecked Mahony rate, evaluated on intermediate integrator stages that
/// are allowed to leave SO(3).
pub(crate) fn mahony_rate(
    r_hat: &Matrix3,
    b_hat: &Vector3,
    scene: &VectorScene,
    body: &Matrix3xX,
    omega_m: &Vector3,
    gains: &Gains,
) -> Result<(Matrix3, Vector3), ObserverError> {
    let sigma = mahony_innovation(r_hat, scene, body)?;
    Ok((r_hat * hat(&(omega_m - b_hat + sigma * gains.kp)), -sigma * gains.ki))
}

/// Explicit complementary filter with bias:
/// `R̂' = R̂ hat(Ω_m − b̂ + k_P σ)`, `b̂' = −k_I σ`.
pub fn mahony_derivative(
    state: &MahonyState,
    scene: &VectorScene,
    body: &Matrix3xX,
    omega_m: &Vector3,
    gains: &Gains,
) -> Result<(Matrix3, Vector3), ObserverError> {
    state.check_manifold()?;
    mahony_rate(&state.r_hat, &state.b_hat, scene, body, omega_m, gains)
}

/// Raw attitude estimate `G⁻¹Ā` and, when `det(G⁻¹Ā) > 1e-12`, its polar
/// rotation factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeEstimate {
    pub raw: Matrix3,
    pub rotation: Option<Rotation3>,
}

pub fn attitude_estimate(state: &ObserverState, g: &Matrix3) -> Result<AttitudeEstimate, ObserverError> {
    let det = g.determinant();
    let g_inv = g
        .try_inverse()
        .filter(|_| det.abs() > POLAR_DET_FLOOR)
        .ok_or(ObserverError::SingularGain(det.abs()))?;
    let raw = g_inv * state.a_bar;
    let rotation = if raw.determinant() > POLAR_DET_FLOOR {
        polar_rotation_factor(&raw).ok()
    } else {
        None
    };
    Ok(AttitudeEstimate { raw, rotation })
}
