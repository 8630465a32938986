use gyrobs::cli::output::{parse_run_csv, run_csv};
use gyrobs::dynamics::{
    measure_matrix_signal, scene_to_signal, AngularVelocityProfile, GyroModel, Matrix3xX, MatrixSignalModel,
    SceneWeights, VectorScene,
};
use gyrobs::harness::{integrate_run, InitialEstimate, RunConfig, SignalSource};
use gyrobs::lyapunov::{certify, lyapunov_value, quadratic_forms, ErrorState, SignalBounds};
use gyrobs::matrix_lie::{
    exp_so3, frobenius_inner, hat, polar_rotation_factor, skew, skew_vee, sym, vee, Matrix3, Rotation3, Vector3,
};
use gyrobs::observers::{base_derivative, diag_form_derivative, Gains, ObserverState, ObserverVariant};
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vector3> {
    prop::array::uniform3(-range..range).prop_map(Vector3::from)
}

fn mat3(range: f64) -> impl Strategy<Value = Matrix3> {
    prop::array::uniform9(-range..range).prop_map(|a| Matrix3::from_column_slice(&a))
}

fn rotation() -> impl Strategy<Value = Rotation3> {
    vec3(3.0).prop_map(|v| exp_so3(&v))
}

fn well_conditioned_gain() -> impl Strategy<Value = Matrix3> {
    mat3(0.4).prop_map(|m| Matrix3::identity() + m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hat_vee_round_trip(v in vec3(10.0)) {
        prop_assert_eq!(vee(&hat(&v)).unwrap(), v);
        prop_assert_eq!(hat(&v).transpose(), -hat(&v));
    }

    #[test]
    fn split_is_orthogonal(m in mat3(5.0)) {
        let (s, k) = (sym(&m), skew(&m));
        prop_assert!((s + k - m).norm() < 1e-14);
        prop_assert!(frobenius_inner(&s, &k).abs() < 1e-12);
    }

    #[test]
    fn skew_vee_gives_cross_product(x in vec3(3.0), y in vec3(3.0)) {
        let m = y * x.transpose();
        prop_assert!((skew_vee(&m) * 2.0 - x.cross(&y)).norm() < 1e-12);
    }

    #[test]
    fn polar_factor_is_rotation_and_idempotent(r in rotation(), p in mat3(0.3)) {
        let m = (Matrix3::identity() + p) * 2.0;
        let m = r.matrix() * m.transpose() * m;
        let q = polar_rotation_factor(&m).unwrap();
        prop_assert!((q.matrix().transpose() * q.matrix() - Matrix3::identity()).norm() < 1e-12);
        prop_assert!((q.matrix().determinant() - 1.0).abs() < 1e-12);
        let again = polar_rotation_factor(q.matrix()).unwrap();
        prop_assert!((again.matrix() - q.matrix()).norm() < 1e-12);
    }

    #[test]
    fn signal_kinematics_match_finite_difference(r in rotation(), g in well_conditioned_gain(), w in vec3(2.0)) {
        let model = MatrixSignalModel::constant(g).unwrap();
        let h = 1e-6;
        let forward = measure_matrix_signal(&model, &(r * exp_so3(&(w * h))), 0.0);
        let backward = measure_matrix_signal(&model, &(r * exp_so3(&(w * -h))), 0.0);
        let fd = (forward - backward) / (2.0 * h);
        let a = g * r.matrix();
        prop_assert!((fd - a * hat(&w)).norm() < 1e-6 * (1.0 + a.norm()));
    }

    #[test]
    fn base_observer_fixes_equilibrium(r in rotation(), g in well_conditioned_gain(), w in vec3(2.0), b in vec3(0.5)) {
        let a = g * r.matrix();
        let gains = Gains::new(2.5, 1.5).unwrap();
        let (a_rate, b_rate) = base_derivative(&ObserverState::new(a, b), &a, &(w + b), &gains);
        prop_assert!((a_rate - a * hat(&w)).norm() < 1e-12 * (1.0 + a.norm()));
        prop_assert!(b_rate.norm() < 1e-12);
    }

    #[test]
    fn diagonal_form_matches_doubled_base(r in rotation(), est in mat3(3.0), bb in vec3(1.0), w in vec3(1.0),
                                          weights in prop::array::uniform4(0.2..2.0f64)) {
        let s = Matrix3xX::from_columns(&[
            Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 1.0, 1.0).normalize(),
        ]);
        let scene = VectorScene::new(s, SceneWeights::Diagonal(weights.to_vec())).unwrap();
        let body = r.matrix().transpose() * scene.directions();
        let (_, a) = scene_to_signal(&scene, &body).unwrap();
        let state = ObserverState::new(est, bb);
        let gains = Gains::new(1.7, 0.9).unwrap();
        let diag = diag_form_derivative(&state, &scene, &body, &w, &gains).unwrap();
        let base = base_derivative(&state, &a, &w, &Gains::new(1.7, 1.8).unwrap());
        prop_assert!((diag.0 - base.0).norm() < 1e-13 * (1.0 + base.0.norm()));
        prop_assert!((diag.1 - base.1).norm() < 1e-13 * (1.0 + base.1.norm()));
    }

    #[test]
    fn lyapunov_sandwich(r in rotation(), g in well_conditioned_gain(), ea in mat3(5.0), eb in vec3(5.0),
                         kp in 0.2..5.0f64, ki in 0.2..5.0f64, bound in 0.0..3.0f64) {
        let cert = certify(&g, &Gains::new(kp, ki).unwrap(), &SignalBounds::new(bound, 0.1).unwrap()).unwrap();
        let v = lyapunov_value(&ErrorState { e_a: ea, e_b: eb }, &(g * r.matrix()), &cert);
        let (v1, v2, v3) = quadratic_forms(ea.norm(), eb.norm(), &cert);
        let slack = 1e-12 * (1.0 + v2);
        prop_assert!(v1 - slack <= v && v <= v2 + slack);
        prop_assert!(v2 <= cert.alpha * v1 + slack);
        prop_assert!(cert.beta * v2 <= v3 + slack);
        prop_assert!(cert.alpha >= 1.0 && cert.beta > 0.0 && cert.c > 0.0);
    }
}

fn short_run(offset: Vector3, g: Matrix3) -> RunConfig {
    RunConfig {
        duration: 4.0,
        step: 0.02,
        profile: AngularVelocityProfile::sinusoidal(
            Vector3::new(0.6, 0.4, 0.5),
            Vector3::new(0.1, 0.15, 0.07),
            Vector3::new(0.0, 1.0, 2.0),
        ),
        gyro: GyroModel::noiseless(Vector3::new(0.0, 0.1, -0.2)),
        signal: SignalSource::Matrix(MatrixSignalModel::constant(g).unwrap()),
        variant: ObserverVariant::Base,
        gains: Gains::new(2.5, 1.5).unwrap(),
        initial_attitude: Rotation3::identity(),
        initial_estimate: InitialEstimate::Matrix(ObserverState::new(g * exp_so3(&offset).matrix(), Vector3::zeros())),
        seed: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn runs_keep_truth_on_so3_and_polar_error_bounded(offset in vec3(3.1), g in well_conditioned_gain()) {
        let record = integrate_run(&short_run(offset, g)).unwrap();
        prop_assert!(record.max_truth_drift < 1e-10);
        prop_assert!(record.max_polar_error() <= 2.0 * 2f64.sqrt() + 1e-9);
        let t: Vec<f64> = record.times();
        prop_assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn csv_round_trip(offset in vec3(3.1)) {
        let record = integrate_run(&short_run(offset, Matrix3::identity())).unwrap();
        let rows = parse_run_csv(&run_csv(&record)).unwrap();
        prop_assert_eq!(rows.len(), record.samples.len());
        let close = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-14 * b.abs();
        for (row, s) in rows.iter().zip(&record.samples) {
            for (a, b) in [(row.t, s.t), (row.e_a, s.e_a), (row.e_b, s.e_b), (row.e_r, s.e_r),
                           (row.e_r_polar, s.e_r_polar), (row.v, s.v), (row.v_bound, s.v_bound)] {
                prop_assert!(close(a, b), "{} vs {}", a, b);
            }
        }
    }
}
