//! Fixed-step co-integration of truth and observer, error metrics, rate
//! fits, Monte Carlo globality studies and the Mahony comparison.
//!
//! Truth attitude `R`, and the observer state are advanced together by one
//! classical RK4 step of the composite system. Deterministic signals are
//! evaluated at the RK4 stage times; random perturbations (gyro noise,
//! vector noise) are drawn once per step and held over it. After each step
//! the truth attitude, and the Mahony estimate when present, are projected
//! back to SO(3); the matrix-space observer state never is.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{
    measure_gyro, perturb_body_vectors, scene_signal, AngularVelocityProfile, DynamicsError, GyroModel,
    MatrixSignalModel, SceneForm, TrueState, VectorScene,
};
use crate::lyapunov::{
    certify, lyapunov_value, verify_decay, CertificateError, DecayReport, ErrorState, LyapunovCertificate,
    SignalBounds,
};
use crate::matrix_lie::{hat, polar_rotation_factor, LieError, Matrix3, Rotation3, Vector3, POLAR_DET_FLOOR};
use crate::observers::{
    attitude_estimate, base_derivative, diag_form_derivative, inverse_variant_derivative, linear_form_derivative,
    mahony_rate, quad_form_derivative, time_varying_derivative, Gains, MahonyState, ObserverError,
    ObserverState, ObserverVariant,
};

pub const DEFAULT_STEP: f64 = 0.02;
pub const MAX_STEP: f64 = 0.1;
/// A trial has converged when its final `‖E_A‖ + ‖e_b‖` is below this.
pub const CONVERGENCE_THRESHOLD: f64 = 1e-6;
/// Tail rate fits use samples whose error sum lies in this window.
pub const RATE_WINDOW: (f64, f64) = (1e-10, 1e-2);
/// Samples at or below this are excluded from any rate fit.
pub const FIT_FLOOR: f64 = 1e-12;
pub const MIN_FIT_SAMPLES: usize = 10;
pub const TRUTH_DRIFT_LIMIT: f64 = 1e-10;
/// Largest possible `‖R₁ − R₂‖` between rotations, plus slack.
pub const ATTITUDE_ERROR_CEILING: f64 = 2.0 * std::f64::consts::SQRT_2 + 1e-9;
/// Bias overshoots closer than this are reported as a tie.
pub const OVERSHOOT_TIE: f64 = 1e-9;
pub const COMPARISON_THRESHOLDS: [f64; 4] = [1.0, 0.1, 0.01, 1e-4];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("run diverged at t = {t}: non-finite state")]
    Divergence { t: f64 },
    #[error("insufficient decay data: {0} positive samples, need {MIN_FIT_SAMPLES}")]
    InsufficientDecayData(usize),
    #[error("comparison configs do not share {0}")]
    Mismatch(&'static str),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// Where the observer's measurement comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalSource {
    /// `A = G(t) R` measured directly.
    Matrix(MatrixSignalModel),
    /// Body-frame directions `C = RᵀS`, optionally perturbed.
    Scene { scene: VectorScene, noise_std: f64 },
}

impl SignalSource {
    /// `G` at time `t`.
    pub fn gain(&self, t: f64) -> Matrix3 {
        match self {
            Self::Matrix(model) => model.gain(t),
            Self::Scene { scene, .. } => *scene.gain(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Self::Matrix(model) => model.is_constant(),
            Self::Scene { .. } => true,
        }
    }

    fn has_noise(&self) -> bool {
        matches!(self, Self::Scene { noise_std, .. } if *noise_std > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialEstimate {
    /// `(Ā(0), b̄(0))` for the matrix-space family.
    Matrix(ObserverState),
    /// `(R̂(0), b̂(0))` for the Mahony baseline.
    Mahony(MahonyState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Seconds.
    pub duration: f64,
    /// Seconds.
    pub step: f64,
    pub profile: AngularVelocityProfile,
    /// Carries the true bias `b`.
    pub gyro: GyroModel,
    pub signal: SignalSource,
    pub variant: ObserverVariant,
    pub gains: Gains,
    pub initial_attitude: Rotation3,
    pub initial_estimate: InitialEstimate,
    /// Seed for measurement-vector noise.
    pub seed: u64,
}

impl RunConfig {
    /// Number of integration steps.
    pub fn steps(&self) -> Result<usize, HarnessError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.step > 0.0 && self.step <= MAX_STEP) {
            return Err(HarnessError::InvalidConfig(format!(
                "step must lie in (0, {MAX_STEP}] s, got {}",
                self.step
            )));
        }
        let n = (self.duration / self.step).round();
        if (n * self.step - self.duration).abs() > 1e-9 * self.duration.max(1.0) || n < 1.0 {
            return Err(HarnessError::InvalidConfig(format!(
                "duration {} is not a whole number of {} s steps",
                self.duration, self.step
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let steps = self.steps()?;
        self.profile.validate()?;
        if !self.gyro.bias.iter().all(|x| x.is_finite()) || !(self.gyro.noise_std >= 0.0) {
            return Err(HarnessError::InvalidConfig("gyro bias and noise must be finite, noise ≥ 0".into()));
        }
        let invalid = |msg: String| Err(HarnessError::InvalidConfig(msg));
        let variant = self.variant;
        match (&self.initial_estimate, variant) {
            (InitialEstimate::Mahony(_), ObserverVariant::MahonyBaseline) => {}
            (InitialEstimate::Matrix(state), v) if v != ObserverVariant::MahonyBaseline => {
                if !state.is_finite() {
                    return invalid("initial estimate must be finite".into());
                }
            }
            (_, v) => return invalid(format!("initial estimate does not match variant `{v}`")),
        }
        if let Some(form) = variant.scene_form() {
            match &self.signal {
                SignalSource::Scene { scene, .. } if scene.form() == form => {}
                _ => return invalid(format!("variant `{variant}` needs a {form:?} vector scene")),
            }
        }
        if let SignalSource::Scene { noise_std, .. } = &self.signal {
            if !(*noise_std >= 0.0 && noise_std.is_finite()) {
                return invalid("vector noise must be finite and ≥ 0".into());
            }
        }
        match variant {
            ObserverVariant::GIdentity => {
                let off = (self.signal.gain(0.0) - Matrix3::identity()).norm();
                if !self.signal.is_constant() || off > 1e-12 {
                    return invalid("variant `g_identity` needs G = I".into());
                }
            }
            ObserverVariant::Base | ObserverVariant::Inverse if !self.signal.is_constant() => {
                return invalid(format!("variant `{variant}` needs a constant G; use `time_varying`"));
            }
            _ => {}
        }
        if let SignalSource::Matrix(model) = &self.signal {
            if !model.is_constant() {
                model.check_bounds((0..=steps).map(|k| k as f64 * self.step))?;
            }
        }
        Ok(())
    }

    /// Certificate for variants it covers under a constant `G`.
    pub fn certificate(&self) -> Result<Option<LyapunovCertificate>, HarnessError> {
        let Some(gains) = self.variant.base_equivalent_gains(self.gains) else {
            return Ok(None);
        };
        if !self.signal.is_constant() {
            return Ok(None);
        }
        let bounds = SignalBounds::new(self.profile.bound(), self.gyro.bias.norm())?;
        Ok(Some(certify(&self.signal.gain(0.0), &gains, &bounds)?))
    }
}

/// One row of a run. For the Mahony baseline `a_bar`, `b_bar` hold
/// `R̂`, `b̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// `‖A − Ā‖`.
    pub e_a: f64,
    /// `‖b − b̄‖`.
    pub e_b: f64,
    /// `‖R − G⁻¹Ā‖`.
    pub e_r: f64,
    /// `‖R − polar(G⁻¹Ā)‖`; NaN while `det(G⁻¹Ā) ≤ 1e-12`.
    pub e_r_polar: f64,
    /// Lyapunov value; NaN without a certificate.
    pub v: f64,
    /// `V(0) e^{−βt}`; NaN without a certificate.
    pub v_bound: f64,
    pub attitude: Matrix3,
    pub a_bar: Matrix3,
    pub b_bar: Vector3,
}

impl Sample {
    pub fn error_sum(&self) -> f64 {
        self.e_a + self.e_b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    pub certificate: Option<LyapunovCertificate>,
    pub samples: Vec<Sample>,
    /// Largest `‖RᵀR − I‖` after projection.
    pub max_truth_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub e_a: f64,
    pub e_b: f64,
    pub e_r: f64,
}

/// `(‖A − Ā‖, ‖b − b̄‖, ‖R − G⁻¹Ā‖)` with `A = G R`.
pub fn error_metrics(truth: &TrueState, est: &ObserverState, g: &Matrix3) -> Result<ErrorMetrics, HarnessError> {
    let estimate = attitude_estimate(est, g)?;
    let r = truth.attitude.matrix();
    Ok(ErrorMetrics {
        e_a: (g * r - est.a_bar).norm(),
        e_b: (truth.bias - est.b_bar).norm(),
        e_r: (r - estimate.raw).norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Composite {
    truth: Matrix3,
    m: Matrix3,
    v: Vector3,
}

impl Composite {
    fn axpy(&self, h: f64, k: &Composite) -> Composite {
        Composite {
            truth: self.truth + k.truth * h,
            m: self.m + k.m * h,
            v: self.v + k.v * h,
        }
    }

    fn is_finite(&self) -> bool {
        self.truth.iter().chain(self.m.iter()).chain(self.v.iter()).all(|x| x.is_finite())
    }
}

fn composite_rate(cfg: &RunConfig, t: f64, x: &Composite, sample: u64) -> Result<Composite, HarnessError> {
    use ObserverVariant as V;
    let omega = cfg.profile.omega(t);
    let omega_m = measure_gyro(&cfg.gyro, &omega, sample);
    let state = ObserverState::new(x.m, x.v);
    let gains = &cfg.gains;
    let (m, v) = match &cfg.signal {
        SignalSource::Matrix(model) => {
            let g = model.gain(t);
            let a = g * x.truth;
            match cfg.variant {
                V::Base | V::GIdentity => base_derivative(&state, &a, &omega_m, gains),
                V::Inverse => inverse_variant_derivative(&state, &a, &omega_m, gains)?,
                V::TimeVarying => time_varying_derivative(&state, &a, &omega_m, &g, &model.gain_rate(t), gains)?,
                v => unreachable!("`{v}` rejected by validation"),
            }
        }
        SignalSource::Scene { scene, noise_std } => {
            let body = perturb_body_vectors(&(x.truth.transpose() * scene.directions()), *noise_std, cfg.seed, sample);
            match cfg.variant {
                V::Base | V::GIdentity => base_derivative(&state, &scene_signal(scene, &body), &omega_m, gains),
                V::Inverse => inverse_variant_derivative(&state, &scene_signal(scene, &body), &omega_m, gains)?,
                V::TimeVarying => {
                    let a = scene_signal(scene, &body);
                    time_varying_derivative(&state, &a, &omega_m, scene.gain(), &Matrix3::zeros(), gains)?
                }
                V::LinearForm => linear_form_derivative(&state, scene, &body, &omega_m, gains)?,
                V::QuadForm => quad_form_derivative(&state, scene, &body, &omega_m, gains)?,
                V::DiagForm => diag_form_derivative(&state, scene, &body, &omega_m, gains)?,
                V::MahonyBaseline => mahony_rate(&x.m, &x.v, scene, &body, &omega_m, gains)?,
            }
        }
    };
    Ok(Composite {
        truth: x.truth * hat(&omega),
        m,
        v,
    })
}

fn rk4_step(cfg: &RunConfig, t: f64, x: &Composite, sample: u64) -> Result<Composite, HarnessError> {
    let h = cfg.step;
    let k1 = composite_rate(cfg, t, x, sample)?;
    let k2 = composite_rate(cfg, t + h / 2.0, &x.axpy(h / 2.0, &k1), sample)?;
    let k3 = composite_rate(cfg, t + h / 2.0, &x.axpy(h / 2.0, &k2), sample)?;
    let k4 = composite_rate(cfg, t + h, &x.axpy(h, &k3), sample)?;
    Ok(Composite {
        truth: x.truth + (k1.truth + (k2.truth + k3.truth) * 2.0 + k4.truth) * (h / 6.0),
        m: x.m + (k1.m + (k2.m + k3.m) * 2.0 + k4.m) * (h / 6.0),
        v: x.v + (k1.v + (k2.v + k3.v) * 2.0 + k4.v) * (h / 6.0),
    })
}

struct Sampler<'a> {
    cfg: &'a RunConfig,
    certificate: Option<LyapunovCertificate>,
    v0: f64,
}

impl Sampler<'_> {
    fn sample(&mut self, t: f64, x: &Composite) -> Result<Sample, HarnessError> {
        let g = self.cfg.signal.gain(t);
        let a = g * x.truth;
        let bias = self.cfg.gyro.bias;
        let (a_bar, e_r, e_r_polar) = match self.cfg.variant {
            ObserverVariant::MahonyBaseline => {
                let e = (x.truth - x.m).norm();
                (g * x.m, e, e)
            }
            _ => {
                let estimate = attitude_estimate(&ObserverState::new(x.m, x.v), &g)?;
                let polar = estimate
                    .rotation
                    .map_or(f64::NAN, |r| (x.truth - r.matrix()).norm());
                (x.m, (x.truth - estimate.raw).norm(), polar)
            }
        };
        let err = ErrorState {
            e_a: a - a_bar,
            e_b: bias - x.v,
        };
        let (v, v_bound) = match &self.certificate {
            Some(cert) => {
                let v = lyapunov_value(&err, &a, cert);
                if t == 0.0 {
                    self.v0 = v;
                }
                (v, self.v0 * (-cert.beta * t).exp())
            }
            None => (f64::NAN, f64::NAN),
        };
        Ok(Sample {
            t,
            e_a: err.e_a.norm(),
            e_b: err.e_b.norm(),
            e_r,
            e_r_polar,
            v,
            v_bound,
            attitude: x.truth,
            a_bar: x.m,
            b_bar: x.v,
        })
    }
}

/// Integrates truth and observer over the configured grid, sampling every
/// step.
pub fn integrate_run(config: &RunConfig) -> Result<RunRecord, HarnessError> {
    config.validate()?;
    let steps = config.steps()?;
    let certificate = config.certificate()?;
    let (m0, v0) = match config.initial_estimate {
        InitialEstimate::Matrix(s) => (s.a_bar, s.b_bar),
        InitialEstimate::Mahony(s) => (*s.r_hat(), s.b_hat),
    };
    let mut x = Composite {
        truth: *config.initial_attitude.matrix(),
        m: m0,
        v: v0,
    };
    let mut sampler = Sampler {
        cfg: config,
        certificate,
        v0: f64::NAN,
    };
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(sampler.sample(0.0, &x)?);
    let mut max_truth_drift: f64 = 0.0;
    for k in 0..steps {
        let t = k as f64 * config.step;
        let t_next = (k + 1) as f64 * config.step;
        let mut next = rk4_step(config, t, &x, k as u64)?;
        if !next.is_finite() {
            return Err(HarnessError::Divergence { t: t_next });
        }
        next.truth = Rotation3::reproject(&next.truth)?.into_inner();
        if config.variant == ObserverVariant::MahonyBaseline {
            next.m = Rotation3::reproject(&next.m)?.into_inner();
        }
        max_truth_drift = max_truth_drift.max((next.truth.transpose() * next.truth - Matrix3::identity()).norm());
        x = next;
        samples.push(sampler.sample(t_next, &x)?);
    }
    Ok(RunRecord {
        config: config.clone(),
        certificate,
        samples,
        max_truth_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub c_fit: f64,
    /// 1/s.
    pub a_fit: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    /// RMS of the residual of `ln y` about the fitted line.
    pub residual_rms: f64,
}

/// Least-squares fit of `ln y = ln C − a t` over samples with
/// `y > 1e-12`.
pub fn fit_exponential_rate(t: &[f64], y: &[f64]) -> Result<RateFit, HarnessError> {
    let points: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(t, y)| t.is_finite() && y.is_finite() && **y > FIT_FLOOR)
        .map(|(t, y)| (*t, y.ln()))
        .collect();
    let n = points.len();
    if n < MIN_FIT_SAMPLES {
        return Err(HarnessError::InsufficientDecayData(n));
    }
    let nf = n as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_l = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let stt: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let stl: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_l)).sum();
    let slope = if stt > 0.0 { stl / stt } else { 0.0 };
    let intercept = mean_l - slope * mean_t;
    let residual_rms = (points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / nf)
        .sqrt();
    Ok(RateFit {
        c_fit: intercept.exp(),
        a_fit: -slope,
        t_start: points[0].0,
        t_end: points[n - 1].0,
        samples: n,
        residual_rms,
    })
}

impl RunRecord {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("a run has at least one sample")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn error_sums(&self) -> Vec<f64> {
        self.samples.iter().map(Sample::error_sum).collect()
    }

    /// Rate fit of `‖E_A‖ + ‖e_b‖` over the tail that stays inside
    /// [`RATE_WINDOW`] after the last excursion above it.
    pub fn tail_fit(&self) -> Result<RateFit, HarnessError> {
        let (lo, hi) = RATE_WINDOW;
        let start = self
            .samples
            .iter()
            .rposition(|s| !(s.error_sum() <= hi))
            .map_or(0, |i| i + 1);
        let (t, y): (Vec<f64>, Vec<f64>) = self.samples[start..]
            .iter()
            .filter(|s| s.error_sum() >= lo)
            .map(|s| (s.t, s.error_sum()))
            .unzip();
        fit_exponential_rate(&t, &y)
    }

    pub fn decay_report(&self) -> Option<DecayReport> {
        self.certificate.as_ref().map(|cert| verify_decay(self, cert))
    }

    pub fn max_polar_error(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.e_r_polar)
            .filter(|e| e.is_finite())
            .fold(0.0, f64::max)
    }

    pub fn max_bias_error(&self) -> f64 {
        self.samples.iter().map(|s| s.e_b).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> RunSummary {
        let last = self.final_sample();
        let (tail_fit, tail_fit_error) = match self.tail_fit() {
            Ok(fit) => (Some(fit), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let decay = self.decay_report();
        let max_polar_error = self.max_polar_error();
        let passed = decay.as_ref().is_none_or(|d| d.passed)
            && self.max_truth_drift < TRUTH_DRIFT_LIMIT
            && max_polar_error <= ATTITUDE_ERROR_CEILING;
        RunSummary {
            variant: self.config.variant.name(),
            duration: self.config.duration,
            step: self.config.step,
            samples: self.samples.len(),
            final_e_a: last.e_a,
            final_e_b: last.e_b,
            final_e_r: last.e_r,
            final_e_r_polar: last.e_r_polar,
            max_bias_error: self.max_bias_error(),
            max_polar_error,
            max_truth_drift: self.max_truth_drift,
            converged: last.error_sum() < CONVERGENCE_THRESHOLD,
            convergence_threshold: CONVERGENCE_THRESHOLD,
            rate_window: RATE_WINDOW,
            certificate: self.certificate,
            tail_fit,
            tail_fit_error,
            decay,
            passed,
        }
    }
}

/// Structured outcome of a single run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub variant: &'static str,
    pub duration: f64,
    pub step: f64,
    pub samples: usize,
    pub final_e_a: f64,
    pub final_e_b: f64,
    pub final_e_r: f64,
    pub final_e_r_polar: f64,
    pub max_bias_error: f64,
    pub max_polar_error: f64,
    pub max_truth_drift: f64,
    pub converged: bool,
    pub convergence_threshold: f64,
    pub rate_window: (f64, f64),
    pub certificate: Option<LyapunovCertificate>,
    pub tail_fit: Option<RateFit>,
    pub tail_fit_error: Option<String>,
    pub decay: Option<DecayReport>,
    /// Decay bounds hold, truth stays on SO(3), attitude error below its
    /// ceiling.
    pub passed: bool,
}

/// `‖x_h − x_{h/2}‖ / ‖x_{h/2} − x_{h/4}‖` on the final composite state.
/// About 16 for a fourth-order integrator.
pub fn step_halving_ratio(config: &RunConfig) -> Result<f64, HarnessError> {
    if config.gyro.noise_std > 0.0 || config.signal.has_noise() {
        return Err(HarnessError::InvalidConfig("step halving needs noise-free measurements".into()));
    }
    let final_state = |step: f64| -> Result<Sample, HarnessError> {
        let cfg = RunConfig { step, ..config.clone() };
        Ok(*integrate_run(&cfg)?.final_sample())
    };
    let s1 = final_state(config.step)?;
    let s2 = final_state(config.step / 2.0)?;
    let s4 = final_state(config.step / 4.0)?;
    let dist = |x: &Sample, y: &Sample| {
        ((x.attitude - y.attitude).norm_squared()
            + (x.a_bar - y.a_bar).norm_squared()
            + (x.b_bar - y.b_bar).norm_squared())
        .sqrt()
    };
    Ok(dist(&s1, &s2) / dist(&s2, &s4))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloOptions {
    pub trials: usize,
    /// Entries of `Ā(0)` are uniform in `[−init_box, init_box]`.
    pub init_box: f64,
    /// Entries of `b̄(0)` are uniform in `[−bias_box, bias_box]`.
    pub bias_box: f64,
    pub master_seed: u64,
}

impl MonteCarloOptions {
    pub fn new(trials: usize, init_box: f64, master_seed: u64) -> Self {
        Self {
            trials,
            init_box,
            bias_box: 1.0,
            master_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialResult {
    pub index: usize,
    pub seed: u64,
    pub converged: bool,
    pub final_error: f64,
    pub a_fit: Option<f64>,
    pub residual_rms: Option<f64>,
    /// Largest `V(t) / (V(0) e^{−βt})`.
    pub max_v_ratio: Option<f64>,
    pub decay_passed: Option<bool>,
}

impl TrialResult {
    /// Converged, decay bounds held, and the fitted rate is no slower than
    /// the certified one.
    pub fn passed(&self, certificate_a: Option<f64>) -> bool {
        let rate_ok = match certificate_a {
            Some(a) => self.a_fit.is_some_and(|fit| fit >= a),
            None => true,
        };
        self.converged && self.decay_passed != Some(false) && rate_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub options: MonteCarloOptions,
    pub converged_fraction: f64,
    pub a_fit_min: Option<f64>,
    pub a_fit_median: Option<f64>,
    pub a_fit_max: Option<f64>,
    pub certificate_a: Option<f64>,
    pub certificate_violations: usize,
    pub rates_below_certificate: usize,
    pub convergence_threshold: f64,
    pub rate_window: (f64, f64),
    pub trials: Vec<TrialResult>,
}

impl MonteCarloSummary {
    pub fn all_passed(&self) -> bool {
        self.trials.iter().all(|t| t.passed(self.certificate_a))
    }
}

/// Per-trial seed, a pure function of the master seed and trial index.
pub fn trial_seed(master_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

fn run_trial(base: &RunConfig, options: &MonteCarloOptions, index: usize) -> Result<TrialResult, HarnessError> {
    let seed = trial_seed(options.master_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |half: f64| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
    let a_bar = Matrix3::from_fn(|_, _| draw(options.init_box));
    let b_bar = Vector3::from_fn(|_, _| draw(options.bias_box));
    let cfg = RunConfig {
        initial_estimate: InitialEstimate::Matrix(ObserverState::new(a_bar, b_bar)),
        seed,
        ..base.clone()
    };
    let record = integrate_run(&cfg)?;
    let final_error = record.final_sample().error_sum();
    let fit = record.tail_fit().ok();
    let decay = record.decay_report();
    Ok(TrialResult {
        index,
        seed,
        converged: final_error < CONVERGENCE_THRESHOLD,
        final_error,
        a_fit: fit.map(|f| f.a_fit),
        residual_rms: fit.map(|f| f.residual_rms),
        max_v_ratio: decay.as_ref().map(|d| d.max_v_ratio),
        decay_passed: decay.map(|d| d.passed),
    })
}

/// Runs `trials` independent random initial estimates of `base` in
/// parallel. Results are ordered by trial index and independent of thread
/// scheduling.
pub fn monte_carlo_global(base: &RunConfig, options: &MonteCarloOptions) -> Result<MonteCarloSummary, HarnessError> {
    if options.trials == 0 {
        return Err(HarnessError::InvalidConfig("Monte Carlo needs at least one trial".into()));
    }
    if !(options.init_box >= 0.0 && options.bias_box >= 0.0) {
        return Err(HarnessError::InvalidConfig("initialization boxes must be ≥ 0".into()));
    }
    if base.variant == ObserverVariant::MahonyBaseline {
        return Err(HarnessError::InvalidConfig("Monte Carlo runs the matrix-space observers only".into()));
    }
    base.validate()?;
    let certificate_a = base.certificate()?.map(|c| c.a);
    let trials = (0..options.trials)
        .into_par_iter()
        .map(|i| run_trial(base, options, i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rates: Vec<f64> = trials.iter().filter_map(|t| t.a_fit).collect();
    rates.sort_by(f64::total_cmp);
    let median = match rates.len() {
        0 => None,
        n if n % 2 == 1 => Some(rates[n / 2]),
        n => Some(0.5 * (rates[n / 2 - 1] + rates[n / 2])),
    };
    Ok(MonteCarloSummary {
        options: *options,
        converged_fraction: trials.iter().filter(|t| t.converged).count() as f64 / trials.len() as f64,
        a_fit_min: rates.first().copied(),
        a_fit_median: median,
        a_fit_max: rates.last().copied(),
        certificate_a,
        certificate_violations: trials.iter().filter(|t| t.decay_passed == Some(false)).count(),
        rates_below_certificate: match certificate_a {
            Some(a) => trials.iter().filter(|t| !t.a_fit.is_some_and(|f| f >= a)).count(),
            None => 0,
        },
        convergence_threshold: CONVERGENCE_THRESHOLD,
        rate_window: RATE_WINDOW,
        trials,
    })
}

/// Mahony run sharing everything with `proposed`. The initial attitude is
/// the rotation factor of `G⁻¹Ā(0)`.
pub fn mahony_counterpart(proposed: &RunConfig) -> Result<RunConfig, HarnessError> {
    let InitialEstimate::Matrix(state) = proposed.initial_estimate else {
        return Err(HarnessError::InvalidConfig("proposed run must use a matrix-space observer".into()));
    };
    match &proposed.signal {
        SignalSource::Scene { scene, .. } if scene.form() == SceneForm::Diagonal => {}
        _ => {
            return Err(HarnessError::InvalidConfig(
                "the Mahony baseline needs a diagonal-weight vector scene".into(),
            ))
        }
    }
    let g = proposed.signal.gain(0.0);
    let g_inv = g
        .try_inverse()
        .filter(|_| g.determinant().abs() > POLAR_DET_FLOOR)
        .ok_or(ObserverError::SingularGain(g.determinant().abs()))?;
    let r_hat = polar_rotation_factor(&(g_inv * state.a_bar))?;
    Ok(RunConfig {
        variant: ObserverVariant::MahonyBaseline,
        initial_estimate: InitialEstimate::Mahony(MahonyState::from_rotation(r_hat, state.b_bar)),
        ..proposed.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Proposed,
    Mahony,
    Tie,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdOutcome {
    pub threshold: f64,
    /// First time the attitude error is below the threshold.
    pub proposed: Option<f64>,
    pub mahony: Option<f64>,
    pub winner: Winner,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub thresholds: Vec<ThresholdOutcome>,
    /// `max_t ‖b − b̄(t)‖`.
    pub proposed_bias_overshoot: f64,
    /// `max_t ‖b − b̂(t)‖`.
    pub mahony_bias_overshoot: f64,
    /// Which observer has the smaller bias overshoot.
    pub smaller_overshoot: Winner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub proposed: RunRecord,
    pub mahony: RunRecord,
    pub report: ComparisonReport,
}

fn first_below(record: &RunRecord, threshold: f64) -> Option<f64> {
    record.samples.iter().find(|s| s.e_r_polar < threshold).map(|s| s.t)
}

/// Integrates the proposed observer and its Mahony counterpart on the same
/// truth and compares attitude convergence and bias overshoot.
pub fn compare_observers(
    proposed: &RunConfig,
    mahony: &RunConfig,
    thresholds: &[f64],
) -> Result<Comparison, HarnessError> {
    if proposed.variant == ObserverVariant::MahonyBaseline || mahony.variant != ObserverVariant::MahonyBaseline {
        return Err(HarnessError::InvalidConfig("compare needs a proposed run and a Mahony run".into()));
    }
    if proposed.duration != mahony.duration || proposed.step != mahony.step {
        return Err(HarnessError::Mismatch("the time grid"));
    }
    if proposed.profile != mahony.profile || proposed.gyro != mahony.gyro || proposed.initial_attitude != mahony.initial_attitude {
        return Err(HarnessError::Mismatch("the truth trajectory"));
    }
    if proposed.signal != mahony.signal || proposed.seed != mahony.seed {
        return Err(HarnessError::Mismatch("the scene"));
    }
    if proposed.gains != mahony.gains {
        return Err(HarnessError::Mismatch("the gains"));
    }
    let expected = mahony_counterpart(proposed)?;
    let (InitialEstimate::Mahony(want), InitialEstimate::Mahony(got)) = (expected.initial_estimate, mahony.initial_estimate) else {
        unreachable!("both are Mahony runs")
    };
    if (want.r_hat() - got.r_hat()).norm() > 1e-9 || want.b_hat != got.b_hat {
        return Err(HarnessError::Mismatch("the initial attitude estimate"));
    }
    let (p, m) = rayon::join(|| integrate_run(proposed), || integrate_run(mahony));
    let (proposed, mahony) = (p?, m?);
    let thresholds = thresholds
        .iter()
        .map(|&threshold| {
            let (tp, tm) = (first_below(&proposed, threshold), first_below(&mahony, threshold));
            let winner = match (tp, tm) {
                (None, None) => Winner::Neither,
                (Some(_), None) => Winner::Proposed,
                (None, Some(_)) => Winner::Mahony,
                (Some(a), Some(b)) if a < b => Winner::Proposed,
                (Some(a), Some(b)) if b < a => Winner::Mahony,
                _ => Winner::Tie,
            };
            ThresholdOutcome {
                threshold,
                proposed: tp,
                mahony: tm,
                winner,
            }
        })
        .collect();
    let (po, mo) = (proposed.max_bias_error(), mahony.max_bias_error());
    let smaller_overshoot = if (po - mo).abs() <= OVERSHOOT_TIE {
        Winner::Tie
    } else if po < mo {
        Winner::Proposed
    } else {
        Winner::Mahony
    };
    Ok(Comparison {
        report: ComparisonReport {
            thresholds,
            proposed_bias_overshoot: po,
            mahony_bias_overshoot: mo,
            smaller_overshoot,
        },
        proposed,
        mahony,
    })
}
