//! Dense 3×3 matrix and so(3)/SO(3) algebra.
//!
//! Everything here works on `nalgebra` fixed-size types with the Frobenius
//! inner product `⟨A, B⟩ = tr(AᵀB)` and its induced norm, which is the only
//! matrix norm used by the observers and certificates in this crate.

use std::ops::Mul;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type Vector3 = nalgebra::Vector3<f64>;
pub type Matrix3 = nalgebra::Matrix3<f64>;

/// Frobenius tolerance used by [`vee`] to accept a matrix as skew-symmetric.
pub const SKEW_TOLERANCE: f64 = 1e-9;
/// Tolerance on `RᵀR = I` and `det R = 1` for [`Rotation3::from_matrix`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;
/// Matrices with `|det| <= POLAR_DET_FLOOR` have no usable rotation factor.
pub const POLAR_DET_FLOOR: f64 = 1e-12;

const POLAR_TOLERANCE: f64 = 1e-12;
const POLAR_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LieError {
    #[error("matrix is not skew-symmetric (symmetric part has norm {0:e})")]
    NotSkewSymmetric(f64),
    #[error("degenerate polar decomposition: |det| = {0:e}")]
    DegeneratePolar(f64),
    #[error("polar iteration did not converge within {0} iterations")]
    PolarNotConverged(usize),
    #[error("matrix is not a rotation (‖RᵀR − I‖ = {orthogonality:e}, det = {det})")]
    NotRotation { orthogonality: f64, det: f64 },
}

/// A 3×3 rotation matrix. Construction from raw matrices is validated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Matrix3);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Accepts `m` if `‖mᵀm − I‖ ≤ 1e-9` and `|det m − 1| ≤ 1e-9`.
    pub fn from_matrix(m: Matrix3) -> Result<Self, LieError> {
        let orthogonality = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if !(orthogonality <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE) {
            return Err(LieError::NotRotation { orthogonality, det });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix known to be a rotation up to round-off.
    pub(crate) fn from_matrix_unchecked(m: Matrix3) -> Self {
        Self(m)
    }

    /// Re-projects a nearly orthogonal matrix onto SO(3).
    pub fn reproject(m: &Matrix3) -> Result<Self, LieError> {
        polar_rotation_factor(m)
    }

    pub fn matrix(&self) -> &Matrix3 {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3 {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;

    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

impl Mul<Vector3> for Rotation3 {
    type Output = Vector3;

    fn mul(self, rhs: Vector3) -> Vector3 {
        self.0 * rhs
    }
}

impl AsRef<Matrix3> for Rotation3 {
    fn as_ref(&self) -> &Matrix3 {
        &self.0
    }
}

/// The hat map: `hat(v) · w = v × w`.
pub fn hat(v: &Vector3) -> Matrix3 {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Inverse of [`hat`]. Rejects inputs whose symmetric part exceeds
/// [`SKEW_TOLERANCE`]; otherwise reads the skew part.
pub fn vee(m: &Matrix3) -> Result<Vector3, LieError> {
    let deviation = sym(m).norm();
    if !(deviation <= SKEW_TOLERANCE) {
        return Err(LieError::NotSkewSymmetric(deviation));
    }
    Ok(skew_vee(m))
}

/// `vee(Skew(m))`, defined for every matrix.
pub fn skew_vee(m: &Matrix3) -> Vector3 {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

pub fn sym(m: &Matrix3) -> Matrix3 {
    0.5 * (m + m.transpose())
}

pub fn skew(m: &Matrix3) -> Matrix3 {
    0.5 * (m - m.transpose())
}

/// Returns `(Sym(m), Skew(m))`.
pub fn sym_skew_split(m: &Matrix3) -> (Matrix3, Matrix3) {
    (sym(m), skew(m))
}

pub fn frobenius_inner(a: &Matrix3, b: &Matrix3) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Rodrigues' formula for `exp(hat(v))`.
pub fn exp_so3(v: &Vector3) -> Rotation3 {
    let theta2 = v.norm_squared();
    let k = hat(v);
    let k2 = k * k;
    let (a, b) = if theta2 < 1e-16 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation3::from_matrix_unchecked(Matrix3::identity() + k * a + k2 * b)
}

/// Eigen-decomposition of a symmetric 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricEigen3 {
    /// Eigenvalues in ascending order.
    pub values: Vector3,
    /// Unit eigenvectors as columns, matching `values`.
    pub vectors: Matrix3,
}

/// Cyclic Jacobi eigen-decomposition of `Sym(m)`.
pub fn sym_eigen(m: &Matrix3) -> SymmetricEigen3 {
    let mut a = sym(m);
    let mut v = Matrix3::identity();
    let scale = a.norm();

    for _ in 0..64 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off <= (f64::EPSILON * 1e-6 * scale).powi(2) || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = if theta.abs() > 1e150 {
                0.5 / theta
            } else {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut j = Matrix3::identity();
            j[(p, p)] = c;
            j[(q, q)] = c;
            j[(p, q)] = s;
            j[(q, p)] = -s;
            a = j.transpose() * a * j;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= j;
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = Vector3::new(a[(order[0], order[0])], a[(order[1], order[1])], a[(order[2], order[2])]);
    let vectors = Matrix3::from_columns(&[v.column(order[0]), v.column(order[1]), v.column(order[2])]);
    SymmetricEigen3 { values, vectors }
}

/// Smallest eigenvalue of `Sym(m)`.
pub fn lambda_min_sym(m: &Matrix3) -> f64 {
    sym_eigen(m).values.x
}

/// Largest eigenvalue of `Sym(m)`.
pub fn lambda_max_sym(m: &Matrix3) -> f64 {
    sym_eigen(m).values.z
}

/// Orthogonal polar factor `Q` of `m = Q P` by scaled Newton iteration
/// `X ← ½(γX + γ⁻¹X⁻ᵀ)`. `det Q` carries the sign of `det m`.
pub fn polar_orthogonal_factor(m: &Matrix3) -> Result<Matrix3, LieError> {
    let det = m.determinant();
    if !(det.abs() > POLAR_DET_FLOOR) {
        return Err(LieError::DegeneratePolar(det.abs()));
    }
    let mut x = *m;
    let mut scaled = true;
    for _ in 0..POLAR_MAX_ITERATIONS {
        let inv = x
            .try_inverse()
            .ok_or(LieError::DegeneratePolar(x.determinant().abs()))?;
        let gamma = if scaled { (inv.norm() / x.norm()).sqrt() } else { 1.0 };
        let next = 0.5 * (x * gamma + inv.transpose() / gamma);
        let delta = (next - x).norm();
        x = next;
        if delta <= POLAR_TOLERANCE * x.norm() {
            return Ok(x);
        }
        // Frobenius scaling only helps far from convergence.
        if delta < 1e-2 {
            scaled = false;
        }
    }
    Err(LieError::PolarNotConverged(POLAR_MAX_ITERATIONS))
}

/// Rotation factor of the polar decomposition of `m`.
///
/// For `det m > 0` this is the orthogonal polar factor, i.e. the closest
/// rotation in Frobenius norm. For `det m < 0` the axis of the smallest
/// singular value is flipped, which again gives the closest rotation.
pub fn polar_rotation_factor(m: &Matrix3) -> Result<Rotation3, LieError> {
    let q = polar_orthogonal_factor(m)?;
    if m.determinant() > 0.0 {
        return Ok(Rotation3::from_matrix_unchecked(q));
    }
    // m = Q P with P = V Σ Vᵀ; reflect Q across the weakest singular axis.
    let p = q.transpose() * m;
    let axis = sym_eigen(&p).vectors.column(0).into_owned();
    let flipped = q * (Matrix3::identity() - 2.0 * axis * axis.transpose());
    Ok(Rotation3::from_matrix_unchecked(flipped))
}

/// Haar-uniform rotation from a caller-owned generator: the det-corrected
/// polar factor of a matrix with i.i.d. standard normal entries.
pub fn random_rotation_from<R: Rng + ?Sized>(rng: &mut R) -> Rotation3 {
    loop {
        let g = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(r) = polar_rotation_factor(&g) {
            return r;
        }
    }
}

/// Deterministic Haar-uniform rotation for `seed`.
pub fn random_rotation(seed: u64) -> Rotation3 {
    random_rotation_from(&mut ChaCha8Rng::seed_from_u64(seed))
}
