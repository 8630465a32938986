//! Ground truth: rigid-body kinematics with constant gyro bias, the sensor
//! models feeding the observers, and vector-measurement scenes.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::matrix_lie::{exp_so3, hat, lambda_max_sym, lambda_min_sym, Matrix3, Rotation3, Vector3};

pub type Matrix3xX = nalgebra::Matrix3xX<f64>;

/// `λ_min(GᵀG)` must exceed this for `G` to count as rank 3.
pub const RANK_THRESHOLD: f64 = 1e-9;
/// Relative threshold for two directions to count as independent.
pub const INDEPENDENCE_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("insufficient reference directions: rank {0} < 2")]
    InsufficientDirections(usize),
    #[error("degenerate weight/scene combination: λ_min(GᵀG) = {0:e}")]
    DegenerateScene(f64),
    #[error("matrix signal gain is singular: λ_min(GᵀG) = {0:e}")]
    SingularGain(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid angular velocity profile: {0}")]
    InvalidProfile(String),
    #[error("invalid gain signal: {0}")]
    InvalidSignal(String),
    #[error("gain bound violated at t = {t}: λ(GᵀG) ∈ [{lambda_min:e}, {lambda_max:e}] outside [{ell_min:e}, {ell_max:e}]")]
    BoundViolation {
        t: f64,
        lambda_min: f64,
        lambda_max: f64,
        ell_min: f64,
        ell_max: f64,
    },
}

/// Attitude (body to inertial) and constant gyro bias in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueState {
    pub attitude: Rotation3,
    pub bias: Vector3,
}

/// `Ṙ = R·hat(Ω)`. The bias is constant and has no derivative.
pub fn true_state_derivative(state: &TrueState, omega: &Vector3) -> Matrix3 {
    state.attitude.matrix() * hat(omega)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseSegment {
    /// Segment start time in seconds.
    pub start: f64,
    /// Body angular velocity in rad/s.
    pub omega: Vector3,
}

/// Closed-form body angular velocity `t ↦ Ω(t)` in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub enum AngularVelocityProfile {
    Constant(Vector3),
    /// `Ω_i(t) = offset_i + amplitude_i · sin(2π frequency_i t + phase_i)`,
    /// with frequencies in Hz and phases in rad.
    Sinusoidal {
        offset: Vector3,
        amplitude: Vector3,
        frequency: Vector3,
        phase: Vector3,
    },
    /// Segments sorted by start time; the first starts at `t = 0`.
    Piecewise(Vec<PiecewiseSegment>),
}

impl AngularVelocityProfile {
    pub fn sinusoidal(amplitude: Vector3, frequency: Vector3, phase: Vector3) -> Self {
        Self::Sinusoidal {
            offset: Vector3::zeros(),
            amplitude,
            frequency,
            phase,
        }
    }

    pub fn piecewise(segments: Vec<PiecewiseSegment>) -> Result<Self, DynamicsError> {
        let first = segments
            .first()
            .ok_or_else(|| DynamicsError::InvalidProfile("piecewise profile has no segments".into()))?;
        if first.start != 0.0 {
            return Err(DynamicsError::InvalidProfile("first segment must start at t = 0".into()));
        }
        if segments.windows(2).any(|w| !(w[1].start > w[0].start)) {
            return Err(DynamicsError::InvalidProfile("segment start times must increase".into()));
        }
        let profile = Self::Piecewise(segments);
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let finite = match self {
            Self::Constant(w) => w.iter().all(|x| x.is_finite()),
            Self::Sinusoidal {
                offset,
                amplitude,
                frequency,
                phase,
            } => [offset, amplitude, frequency, phase].iter().all(|v| v.iter().all(|x| x.is_finite())),
            Self::Piecewise(segments) => segments
                .iter()
                .all(|s| s.start.is_finite() && s.omega.iter().all(|x| x.is_finite())),
        };
        if finite {
            Ok(())
        } else {
            Err(DynamicsError::NonFinite("angular velocity profile"))
        }
    }

    pub fn omega(&self, t: f64) -> Vector3 {
        match self {
            Self::Constant(w) => *w,
            Self::Sinusoidal {
                offset,
                amplitude,
                frequency,
                phase,
            } => Vector3::from_fn(|i, _| offset[i] + amplitude[i] * (2.0 * PI * frequency[i] * t + phase[i]).sin()),
            Self::Piecewise(segments) => {
                let idx = segments.partition_point(|s| s.start <= t).saturating_sub(1);
                segments[idx].omega
            }
        }
    }

    /// An upper bound `B_Ω ≥ sup_t ‖Ω(t)‖`.
    pub fn bound(&self) -> f64 {
        match self {
            Self::Constant(w) => w.norm(),
            Self::Sinusoidal { offset, amplitude, .. } => offset.norm() + amplitude.abs().norm(),
            Self::Piecewise(segments) => segments.iter().map(|s| s.omega.norm()).fold(0.0, f64::max),
        }
    }
}

/// Biased rate gyro, `Ω_m = Ω + b` plus optional per-axis Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroModel {
    pub bias: Vector3,
    /// Per-axis noise standard deviation in rad/s; zero disables noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl GyroModel {
    pub fn noiseless(bias: Vector3) -> Self {
        Self {
            bias,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

/// Standard normal triple for `(seed, sample)`, independent across samples.
pub(crate) fn normal_triple(seed: u64, stream: u64, sample: u64) -> Vector3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(sample) << 32);
    Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Gyro reading for sample index `sample`. Noise, when enabled, is a pure
/// function of the model seed and the sample index.
pub fn measure_gyro(model: &GyroModel, omega_true: &Vector3, sample: u64) -> Vector3 {
    let clean = omega_true + model.bias;
    if model.noise_std > 0.0 {
        clean + normal_triple(model.seed, 0, sample) * model.noise_std
    } else {
        clean
    }
}

/// `G(t) = (1 + κ sin(2π f t)) · exp(t·hat(spin)) · G₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeVaryingGain {
    pub base: Matrix3,
    /// Angular rate of the rotating factor, rad/s.
    pub spin: Vector3,
    /// κ in `[0, 1)`.
    pub scale_amplitude: f64,
    /// f in Hz.
    pub scale_frequency: f64,
}

impl TimeVaryingGain {
    fn scale(&self, t: f64) -> (f64, f64) {
        let w = 2.0 * PI * self.scale_frequency;
        (
            1.0 + self.scale_amplitude * (w * t).sin(),
            self.scale_amplitude * w * (w * t).cos(),
        )
    }
}

/// The matrix gain `G` in `A = G R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixSignalModel {
    Constant(Matrix3),
    TimeVarying(TimeVaryingGain),
}

impl MatrixSignalModel {
    pub fn constant(g: Matrix3) -> Result<Self, DynamicsError> {
        if !g.iter().all(|x| x.is_finite()) {
            return Err(DynamicsError::NonFinite("gain matrix"));
        }
        let lambda = lambda_min_sym(&(g.transpose() * g));
        if !(lambda > RANK_THRESHOLD) {
            return Err(DynamicsError::SingularGain(lambda));
        }
        Ok(Self::Constant(g))
    }

    pub fn time_varying(gain: TimeVaryingGain) -> Result<Self, DynamicsError> {
        Self::constant(gain.base)?;
        if !(0.0..1.0).contains(&gain.scale_amplitude) {
            return Err(DynamicsError::InvalidSignal("scale amplitude must lie in [0, 1)".into()));
        }
        if !(gain.scale_frequency.is_finite() && gain.spin.iter().all(|x| x.is_finite())) {
            return Err(DynamicsError::NonFinite("time-varying gain"));
        }
        Ok(Self::TimeVarying(gain))
    }

    pub fn gain(&self, t: f64) -> Matrix3 {
        match self {
            Self::Constant(g) => *g,
            Self::TimeVarying(tv) => {
                let (s, _) = tv.scale(t);
                exp_so3(&(tv.spin * t)).matrix() * tv.base * s
            }
        }
    }

    pub fn gain_rate(&self, t: f64) -> Matrix3 {
        match self {
            Self::Constant(_) => Matrix3::zeros(),
            Self::TimeVarying(tv) => {
                let (s, ds) = tv.scale(t);
                let rotated = exp_so3(&(tv.spin * t)).matrix() * tv.base;
                rotated * ds + hat(&tv.spin) * rotated * s
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }

    /// Declared `(ℓ_min, ℓ_max)` bracketing the spectrum of `G(t)ᵀG(t)`.
    pub fn bounds(&self) -> (f64, f64) {
        let (base, k) = match self {
            Self::Constant(g) => (g, 0.0),
            Self::TimeVarying(tv) => (&tv.base, tv.scale_amplitude),
        };
        let gtg = base.transpose() * base;
        (
            (1.0 - k).powi(2) * lambda_min_sym(&gtg),
            (1.0 + k).powi(2) * lambda_max_sym(&gtg),
        )
    }

    /// Checks the declared bounds at every sampled time.
    pub fn check_bounds(&self, times: impl IntoIterator<Item = f64>) -> Result<(), DynamicsError> {
        let (ell_min, ell_max) = self.bounds();
        let slack = 1e-9 * ell_max;
        for t in times {
            let g = self.gain(t);
            let gtg = g.transpose() * g;
            let (lambda_min, lambda_max) = (lambda_min_sym(&gtg), lambda_max_sym(&gtg));
            if lambda_min < ell_min - slack || lambda_max > ell_max + slack {
                return Err(DynamicsError::BoundViolation {
                    t,
                    lambda_min,
                    lambda_max,
                    ell_min,
                    ell_max,
                });
            }
        }
        Ok(())
    }
}

/// `A = G(t)·R`.
pub fn measure_matrix_signal(model: &MatrixSignalModel, attitude: &Rotation3, t: f64) -> Matrix3 {
    model.gain(t) * attitude.matrix()
}

/// Weights combining a scene into `(G, A)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneWeights {
    /// 3×m, `G = W Sᵀ`, `A = W Cᵀ`.
    Linear(Matrix3xX),
    /// m×m, `G = S W Sᵀ`, `A = S W Cᵀ`.
    Quadratic(DMatrix<f64>),
    /// Diagonal of an m×m weight, `G = Σ wᵢ sᵢsᵢᵀ`, `A = Σ wᵢ sᵢcᵢᵀ`.
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneForm {
    Linear,
    Quadratic,
    Diagonal,
}

/// Known inertial directions (columns of `S`) with their weights. The
/// derived gain `G` is rank 3 by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorScene {
    directions: Matrix3xX,
    weights: SceneWeights,
    gain: Matrix3,
}

impl VectorScene {
    pub fn new(directions: Matrix3xX, weights: SceneWeights) -> Result<Self, DynamicsError> {
        let m = directions.ncols();
        if m == 0 {
            return Err(DynamicsError::InsufficientDirections(0));
        }
        if !directions.iter().all(|x| x.is_finite()) {
            return Err(DynamicsError::NonFinite("scene directions"));
        }
        let weights_ok = match &weights {
            SceneWeights::Linear(w) => w.ncols() == m,
            SceneWeights::Quadratic(w) => w.nrows() == m && w.ncols() == m,
            SceneWeights::Diagonal(w) => w.len() == m,
        };
        if !weights_ok {
            return Err(DynamicsError::DimensionMismatch(format!(
                "weights do not match {m} scene directions"
            )));
        }
        let finite = match &weights {
            SceneWeights::Linear(w) => w.iter().all(|x| x.is_finite()),
            SceneWeights::Quadratic(w) => w.iter().all(|x| x.is_finite()),
            SceneWeights::Diagonal(w) => w.iter().all(|x| x.is_finite()),
        };
        if !finite {
            return Err(DynamicsError::NonFinite("scene weights"));
        }
        let gain = combine(&directions, &weights, &directions);
        let lambda = lambda_min_sym(&(gain.transpose() * gain));
        if !(lambda > RANK_THRESHOLD) {
            return Err(DynamicsError::DegenerateScene(lambda));
        }
        Ok(Self {
            directions,
            weights,
            gain,
        })
    }

    /// Unit-weight diagonal scene.
    pub fn uniform(directions: Matrix3xX) -> Result<Self, DynamicsError> {
        let m = directions.ncols();
        Self::new(directions, SceneWeights::Diagonal(vec![1.0; m]))
    }

    pub fn directions(&self) -> &Matrix3xX {
        &self.directions
    }

    pub fn weights(&self) -> &SceneWeights {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.directions.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.ncols() == 0
    }

    pub fn form(&self) -> SceneForm {
        match self.weights {
            SceneWeights::Linear(_) => SceneForm::Linear,
            SceneWeights::Quadratic(_) => SceneForm::Quadratic,
            SceneWeights::Diagonal(_) => SceneForm::Diagonal,
        }
    }

    /// The constant gain `G` relating `A = G R`.
    pub fn gain(&self) -> &Matrix3 {
        &self.gain
    }

    /// The same scene with its weights rewritten as a 3×m linear weight:
    /// `S W` for the quadratic form and `S diag(w)` for the diagonal form.
    pub fn to_linear(&self) -> Self {
        let weights = match &self.weights {
            SceneWeights::Linear(w) => w.clone(),
            SceneWeights::Quadratic(w) => &self.directions * w,
            SceneWeights::Diagonal(w) => {
                let mut out = self.directions.clone();
                for (mut col, wi) in out.column_iter_mut().zip(w) {
                    col *= *wi;
                }
                out
            }
        };
        Self {
            directions: self.directions.clone(),
            weights: SceneWeights::Linear(weights),
            gain: self.gain,
        }
    }

    /// Diagonal weights promoted to a full m×m quadratic weight.
    pub fn to_quadratic(&self) -> Option<Self> {
        match &self.weights {
            SceneWeights::Diagonal(w) => Some(Self {
                directions: self.directions.clone(),
                weights: SceneWeights::Quadratic(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(w))),
                gain: self.gain,
            }),
            SceneWeights::Quadratic(_) => Some(self.clone()),
            SceneWeights::Linear(_) => None,
        }
    }
}

/// `Σ` over the weight structure of `left_i · right_jᵀ`.
fn combine(s: &Matrix3xX, weights: &SceneWeights, right: &Matrix3xX) -> Matrix3 {
    match weights {
        SceneWeights::Linear(w) => w * right.transpose(),
        SceneWeights::Quadratic(w) => s * w * right.transpose(),
        SceneWeights::Diagonal(w) => {
            let mut out = Matrix3::zeros();
            for (i, wi) in w.iter().enumerate() {
                out += s.column(i) * right.column(i).transpose() * *wi;
            }
            out
        }
    }
}

/// `C = Rᵀ S`: the scene directions seen from the body frame.
pub fn measure_body_vectors(scene: &VectorScene, attitude: &Rotation3) -> Matrix3xX {
    attitude.matrix().transpose() * scene.directions()
}

/// Adds per-axis Gaussian noise to every column, then restores each
/// column's original length.
pub fn perturb_body_vectors(c: &Matrix3xX, noise_std: f64, seed: u64, sample: u64) -> Matrix3xX {
    if noise_std <= 0.0 {
        return c.clone();
    }
    let mut out = c.clone();
    for (i, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        let noisy = col.clone_owned() + normal_triple(seed, 1 + i as u64, sample) * noise_std;
        let noisy_norm = noisy.norm();
        if noisy_norm > 0.0 {
            col.copy_from(&(noisy * (norm / noisy_norm)));
        }
    }
    out
}

fn independent(a: &Vector3, b: &Vector3) -> bool {
    a.cross(b).norm() > INDEPENDENCE_THRESHOLD * a.norm() * b.norm()
}

/// Column rank of a 3×m direction matrix under the independence thresholds.
pub fn direction_rank(s: &Matrix3xX) -> usize {
    let cols: Vec<Vector3> = s.column_iter().map(|c| c.into_owned()).collect();
    let nonzero: Vec<&Vector3> = cols.iter().filter(|c| c.norm() > 0.0).collect();
    if nonzero.is_empty() {
        return 0;
    }
    let mut rank = 1;
    for (i, a) in nonzero.iter().enumerate() {
        for (j, b) in nonzero.iter().enumerate().skip(i + 1) {
            if !independent(a, b) {
                continue;
            }
            rank = 2;
            let normal = a.cross(b);
            for c in nonzero.iter().skip(j + 1) {
                if normal.dot(c).abs() > INDEPENDENCE_THRESHOLD * normal.norm() * c.norm() {
                    return 3;
                }
            }
        }
    }
    rank
}

/// Completes a rank-2 set of directions with `sᵢ × sⱼ` for the first
/// independent pair in lexicographic order. Rank-3 input is returned as is.
pub fn augment_rank2_scene(s: &Matrix3xX) -> Result<Matrix3xX, DynamicsError> {
    let rank = direction_rank(s);
    match rank {
        3 => Ok(s.clone()),
        2 => {
            let m = s.ncols();
            for i in 0..m {
                for j in (i + 1)..m {
                    let (a, b) = (s.column(i).into_owned(), s.column(j).into_owned());
                    if independent(&a, &b) {
                        let mut out = s.clone().insert_column(m, 0.0);
                        out.set_column(m, &a.cross(&b));
                        return Ok(out);
                    }
                }
            }
            unreachable!("rank 2 implies an independent pair")
        }
        r => Err(DynamicsError::InsufficientDirections(r)),
    }
}

/// `(G, A)` for the scene's weight form and body measurements `C`.
pub fn scene_to_signal(scene: &VectorScene, body: &Matrix3xX) -> Result<(Matrix3, Matrix3), DynamicsError> {
    if body.ncols() != scene.len() {
        return Err(DynamicsError::DimensionMismatch(format!(
            "{} body vectors for {} scene directions",
            body.ncols(),
            scene.len()
        )));
    }
    let g = *scene.gain();
    let lambda = lambda_min_sym(&(g.transpose() * g));
    if !(lambda > RANK_THRESHOLD) {
        return Err(DynamicsError::DegenerateScene(lambda));
    }
    Ok((g, scene_signal(scene, body)))
}

/// `A` for body measurements `C`, without re-checking the scene.
pub(crate) fn scene_signal(scene: &VectorScene, body: &Matrix3xX) -> Matrix3 {
    combine(scene.directions(), scene.weights(), body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_lie::random_rotation;

    fn cols(v: &[[f64; 3]]) -> Matrix3xX {
        Matrix3xX::from_columns(&v.iter().map(|c| Vector3::new(c[0], c[1], c[2])).collect::<Vec<_>>())
    }

    #[test]
    fn kinematics_examples() {
        let at_rest = TrueState {
            attitude: Rotation3::identity(),
            bias: Vector3::zeros(),
        };
        assert_eq!(true_state_derivative(&at_rest, &Vector3::zeros()), Matrix3::zeros());
        assert_eq!(true_state_derivative(&at_rest, &Vector3::z()), hat(&Vector3::z()));
        let state = TrueState {
            attitude: random_rotation(9),
            bias: Vector3::zeros(),
        };
        let rdot = true_state_derivative(&state, &Vector3::new(0.3, -0.7, 1.1));
        let k = state.attitude.matrix().transpose() * rdot;
        assert!((k + k.transpose()).norm() < 1e-14);
    }

    #[test]
    fn gyro_examples() {
        assert_eq!(
            measure_gyro(&GyroModel::noiseless(Vector3::zeros()), &Vector3::x(), 0),
            Vector3::x()
        );
        let b = Vector3::new(0.0, 0.1, -0.2);
        assert_eq!(measure_gyro(&GyroModel::noiseless(b), &Vector3::zeros(), 17), b);
    }

    #[test]
    fn gyro_noise_mean() {
        let model = GyroModel {
            bias: Vector3::new(0.0, 0.1, -0.2),
            noise_std: 0.01,
            seed: 99,
        };
        let omega = Vector3::new(0.5, 0.0, 0.0);
        let n = 100_000;
        let mean = (0..n).map(|k| measure_gyro(&model, &omega, k)).sum::<Vector3>() / n as f64;
        let sigma_of_mean = 0.01 / (n as f64).sqrt();
        assert!(((mean - omega - model.bias).abs().max()) < 3.0 * sigma_of_mean);
        assert_eq!(measure_gyro(&model, &omega, 5), measure_gyro(&model, &omega, 5));
        assert_ne!(measure_gyro(&model, &omega, 5), measure_gyro(&model, &omega, 6));
    }

    #[test]
    fn matrix_signal_examples() {
        let r = random_rotation(1);
        let id = MatrixSignalModel::constant(Matrix3::identity()).unwrap();
        assert_eq!(measure_matrix_signal(&id, &r, 0.0), *r.matrix());
        let d = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0));
        let dm = MatrixSignalModel::constant(d).unwrap();
        assert_eq!(measure_matrix_signal(&dm, &Rotation3::identity(), 3.0), d);
        let g = Matrix3::new(1.0, 0.2, -0.3, 0.5, 2.0, 0.1, -0.4, 0.3, 1.5);
        let a = measure_matrix_signal(&MatrixSignalModel::constant(g).unwrap(), &r, 0.0);
        let (la, lg) = (lambda_min_sym(&(a.transpose() * a)), lambda_min_sym(&(g.transpose() * g)));
        assert!((la - lg).abs() < 1e-10);
        assert!(matches!(
            MatrixSignalModel::constant(Matrix3::zeros()),
            Err(DynamicsError::SingularGain(_))
        ));
    }

    #[test]
    fn time_varying_gain_rate_matches_finite_difference() {
        let model = MatrixSignalModel::time_varying(TimeVaryingGain {
            base: Matrix3::new(1.2, 0.1, 0.0, -0.2, 0.9, 0.3, 0.0, 0.1, 1.1),
            spin: Vector3::new(0.1, -0.3, 0.2),
            scale_amplitude: 0.3,
            scale_frequency: 0.2,
        })
        .unwrap();
        for &t in &[0.0, 0.7, 3.3, 12.1] {
            let h = 1e-5;
            let fd = (model.gain(t + h) - model.gain(t - h)) / (2.0 * h);
            assert!((fd - model.gain_rate(t)).norm() < 1e-8);
        }
        model.check_bounds((0..2000).map(|k| k as f64 * 0.01)).unwrap();
        assert!(MatrixSignalModel::time_varying(TimeVaryingGain {
            base: Matrix3::identity(),
            spin: Vector3::zeros(),
            scale_amplitude: 1.0,
            scale_frequency: 1.0,
        })
        .is_err());
    }

    #[test]
    fn body_vector_examples() {
        let s = cols(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let scene = VectorScene::uniform(s.clone()).unwrap();
        assert_eq!(measure_body_vectors(&scene, &Rotation3::identity()), s);
        let quarter = exp_so3(&Vector3::new(0.0, 0.0, PI / 2.0));
        let c = measure_body_vectors(&scene, &quarter);
        assert!((c.column(0) - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);

        let s = cols(&[[0.3, -1.0, 0.2], [1.0, 0.5, 0.0], [0.1, 0.2, -0.9], [0.7, 0.7, 0.1]]);
        let scene = VectorScene::uniform(s.clone()).unwrap();
        let r = random_rotation(4);
        let c = measure_body_vectors(&scene, &r);
        let lhs = &s * c.transpose();
        let rhs = &s * s.transpose() * r.matrix();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn noisy_body_vectors_keep_length() {
        let c = cols(&[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        let noisy = perturb_body_vectors(&c, 0.05, 3, 10);
        assert_ne!(noisy, c);
        for (a, b) in noisy.column_iter().zip(c.column_iter()) {
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
        assert_eq!(perturb_body_vectors(&c, 0.0, 3, 10), c);
    }

    #[test]
    fn augmentation_examples() {
        let s = cols(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(augment_rank2_scene(&s).unwrap(), cols(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]));
        let full = cols(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, 0.2, 1.0]]);
        assert_eq!(augment_rank2_scene(&full).unwrap(), full);
        let tie = cols(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let out = augment_rank2_scene(&tie).unwrap();
        assert_eq!(out.ncols(), 4);
        assert_eq!(out.column(3).into_owned(), Vector3::z());
        let line = cols(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let err = augment_rank2_scene(&line).unwrap_err();
        assert!(err.to_string().contains("insufficient reference directions"));
    }

    #[test]
    fn scene_signal_examples() {
        let r = random_rotation(77);
        let s = Matrix3xX::identity(3);
        let quad = VectorScene::new(s.clone(), SceneWeights::Quadratic(DMatrix::identity(3, 3))).unwrap();
        let c = measure_body_vectors(&quad, &r);
        let (g, a) = scene_to_signal(&quad, &c).unwrap();
        assert!((g - Matrix3::identity()).norm() < 1e-15);
        assert!((a - r.matrix()).norm() < 1e-15);

        let diag = VectorScene::new(s.clone(), SceneWeights::Diagonal(vec![1.0, 2.0, 3.0])).unwrap();
        let c = measure_body_vectors(&diag, &Rotation3::identity());
        let (g, a) = scene_to_signal(&diag, &c).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        assert_eq!((g, a), (expected, expected));

        let degenerate = VectorScene::new(s, SceneWeights::Diagonal(vec![1.0, 1.0, 0.0]));
        assert!(degenerate.unwrap_err().to_string().contains("degenerate weight/scene"));
    }

    #[test]
    fn quadratic_form_equals_linear_form_with_sw() {
        let s = cols(&[[0.3, -1.0, 0.2], [1.0, 0.5, 0.0], [0.1, 0.2, -0.9], [0.7, 0.7, 0.1]]);
        let w = DMatrix::from_fn(4, 4, |i, j| 0.1 * (i as f64 + 1.0) - 0.05 * j as f64 + if i == j { 1.0 } else { 0.0 });
        let quad = VectorScene::new(s.clone(), SceneWeights::Quadratic(w.clone())).unwrap();
        let linear = VectorScene::new(s.clone(), SceneWeights::Linear(&s * &w)).unwrap();
        let r = random_rotation(8);
        let c = measure_body_vectors(&quad, &r);
        let (gq, aq) = scene_to_signal(&quad, &c).unwrap();
        let (gl, al) = scene_to_signal(&linear, &c).unwrap();
        assert!((gq - gl).norm() < 1e-13 && (aq - al).norm() < 1e-13);
        assert!((aq - gq * r.matrix()).norm() < 1e-12);
    }

    #[test]
    fn profile_bounds() {
        let p = AngularVelocityProfile::Sinusoidal {
            offset: Vector3::new(0.1, 0.0, 0.0),
            amplitude: Vector3::new(0.6, -0.4, 0.5),
            frequency: Vector3::new(0.1, 0.15, 0.07),
            phase: Vector3::new(0.0, 1.0, 2.0),
        };
        let bound = p.bound();
        assert!((0..10_000).all(|k| p.omega(k as f64 * 0.01).norm() <= bound));
        let pw = AngularVelocityProfile::piecewise(vec![
            PiecewiseSegment { start: 0.0, omega: Vector3::x() },
            PiecewiseSegment { start: 2.0, omega: Vector3::new(0.0, 3.0, 4.0) },
        ])
        .unwrap();
        assert_eq!(pw.omega(1.999), Vector3::x());
        assert_eq!(pw.omega(2.0), Vector3::new(0.0, 3.0, 4.0));
        assert_eq!(pw.bound(), 5.0);
        assert!(AngularVelocityProfile::piecewise(vec![PiecewiseSegment { start: 1.0, omega: Vector3::x() }]).is_err());
    }
}
