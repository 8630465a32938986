//! TOML run configuration.
//!
//! Units: seconds for times, rad/s for rates, Hz for frequencies, radians
//! for angles and rotation vectors. Matrices are written row by row.
//! Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::dynamics::{
    AngularVelocityProfile, GyroModel, Matrix3xX, MatrixSignalModel, PiecewiseSegment, SceneWeights,
    TimeVaryingGain, VectorScene,
};
use crate::harness::{
    mahony_counterpart, InitialEstimate, MonteCarloOptions, RunConfig, SignalSource, COMPARISON_THRESHOLDS,
    DEFAULT_STEP,
};
use crate::matrix_lie::{exp_so3, Matrix3, Rotation3, Vector3};
use crate::observers::{Gains, ObserverState, ObserverVariant};

pub const BUNDLED: [(&str, &str); 4] = [
    ("paper_experiment", include_str!("../../configs/paper_experiment.toml")),
    ("montecarlo_global", include_str!("../../configs/montecarlo_global.toml")),
    ("time_varying_demo", include_str!("../../configs/time_varying_demo.toml")),
    ("inverse_variant_demo", include_str!("../../configs/inverse_variant_demo.toml")),
];

/// A configuration problem, tied to the key that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "invalid config: {}", self.message)
        } else {
            write!(f, "invalid config: `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

type V3 = [f64; 3];
type M3 = [[f64; 3]; 3];

fn vec3(v: V3) -> Vector3 {
    Vector3::from(v)
}

fn mat3(rows: M3) -> Matrix3 {
    Matrix3::from_fn(|i, j| rows[i][j])
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub simulation: SimulationSection,
    pub signal: Option<SignalSection>,
    pub scene: Option<SceneSection>,
    pub observer: ObserverSection,
    pub gains: GainsSection,
    #[serde(default)]
    pub initial_conditions: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
    pub mahony: Option<MahonySection>,
    pub montecarlo: Option<MonteCarloSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    /// s
    pub duration: f64,
    /// s
    #[serde(default = "default_step")]
    pub step: f64,
    /// Seed for measurement-vector noise.
    #[serde(default)]
    pub seed: u64,
    pub angular_velocity: ProfileSection,
    #[serde(default)]
    pub gyro: GyroSection,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSection {
    /// rad/s
    Constant { value: V3 },
    /// `offset + amplitude ⊙ sin(2π frequency t + phase)`; rad/s, Hz, rad.
    Sinusoidal {
        #[serde(default)]
        offset: V3,
        amplitude: V3,
        frequency: V3,
        #[serde(default)]
        phase: V3,
    },
    Piecewise { segments: Vec<SegmentSection> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSection {
    /// s
    pub start: f64,
    /// rad/s
    pub omega: V3,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GyroSection {
    /// rad/s
    #[serde(default)]
    pub bias: V3,
    /// rad/s per axis
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

/// `G(t) = (1 + κ sin(2π f t)) exp(t hat(spin)) G₀`; constant when `spin`
/// and `scale_amplitude` are zero.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    pub gain: M3,
    /// rad/s
    #[serde(default)]
    pub spin: V3,
    #[serde(default)]
    pub scale_amplitude: f64,
    /// Hz
    #[serde(default)]
    pub scale_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    /// Inertial directions, one per entry.
    pub directions: Vec<V3>,
    /// `wᵢ` per direction.
    pub diagonal: Option<Vec<f64>>,
    /// m×m matrix, row by row.
    pub quadratic: Option<Vec<Vec<f64>>>,
    /// Columns `wᵢ` of the 3×m matrix, one per direction.
    pub linear: Option<Vec<V3>>,
    /// Per-axis noise on body vectors before renormalization.
    #[serde(default)]
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    pub variant: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub kp: f64,
    pub ki: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Rotation vector of `R(0)`, rad.
    #[serde(default)]
    pub attitude: V3,
    /// `Ā(0)` row by row; excludes `estimate_offset`.
    pub a_bar: Option<M3>,
    /// `Ā(0) = G(0) R(0) exp(hat(offset))`, rad.
    pub estimate_offset: Option<V3>,
    /// rad/s
    #[serde(default)]
    pub b_bar: V3,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory when neither `--out` nor `GYROBS_OUT_DIR` is set.
    pub dir: Option<String>,
    /// File stem; defaults to the config name.
    pub name: Option<String>,
    #[serde(default)]
    pub plot_script: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MahonySection {
    /// Attitude-error levels compared between the two observers.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

fn default_thresholds() -> Vec<f64> {
    COMPARISON_THRESHOLDS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub trials: usize,
    pub init_box: f64,
    #[serde(default = "default_bias_box")]
    pub bias_box: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_bias_box() -> f64 {
    1.0
}

/// A parsed document with its display name.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub name: String,
    pub document: ConfigDocument,
}

pub fn parse_config(text: &str) -> Result<ConfigDocument, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let key = match e.span() {
            Some(span) => {
                let line = text[..span.start].matches('\n').count() + 1;
                format!("line {line}")
            }
            None => String::new(),
        };
        ConfigError { key, message }
    })
}

/// Reads `source` as a file path, falling back to a bundled config name.
pub fn load_config(source: &str) -> Result<LoadedConfig, ConfigError> {
    let path = Path::new(source);
    let (name, text) = if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("", format!("{source}: {e}")))?;
        let stem = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
        (stem, text)
    } else if let Some((name, text)) = BUNDLED.iter().find(|(n, _)| *n == source) {
        (name.to_string(), text.to_string())
    } else {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        return Err(ConfigError::new(
            "",
            format!("{source}: no such file or bundled config (bundled: {})", names.join(", ")),
        ));
    };
    let document = parse_config(&text)?;
    let name = document.output.name.clone().unwrap_or(name);
    Ok(LoadedConfig { name, document })
}

impl ProfileSection {
    fn build(&self) -> Result<AngularVelocityProfile, ConfigError> {
        let key = "simulation.angular_velocity";
        let profile = match self {
            Self::Constant { value } => AngularVelocityProfile::Constant(vec3(*value)),
            Self::Sinusoidal {
                offset,
                amplitude,
                frequency,
                phase,
            } => AngularVelocityProfile::Sinusoidal {
                offset: vec3(*offset),
                amplitude: vec3(*amplitude),
                frequency: vec3(*frequency),
                phase: vec3(*phase),
            },
            Self::Piecewise { segments } => AngularVelocityProfile::piecewise(
                segments
                    .iter()
                    .map(|s| PiecewiseSegment {
                        start: s.start,
                        omega: vec3(s.omega),
                    })
                    .collect(),
            )
            .map_err(|e| ConfigError::new(key, e.to_string()))?,
        };
        profile.validate().map_err(|e| ConfigError::new(key, e.to_string()))?;
        Ok(profile)
    }
}

impl SceneSection {
    fn build(&self) -> Result<VectorScene, ConfigError> {
        let m = self.directions.len();
        let columns: Vec<Vector3> = self.directions.iter().map(|d| vec3(*d)).collect();
        let directions = Matrix3xX::from_columns(&columns);
        let weights = match (&self.diagonal, &self.quadratic, &self.linear) {
            (Some(w), None, None) => {
                if w.len() != m {
                    return Err(ConfigError::new("scene.diagonal", format!("needs {m} weights")));
                }
                SceneWeights::Diagonal(w.clone())
            }
            (None, Some(rows), None) => {
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    return Err(ConfigError::new("scene.quadratic", format!("needs a {m}×{m} matrix")));
                }
                SceneWeights::Quadratic(nalgebra::DMatrix::from_fn(m, m, |i, j| rows[i][j]))
            }
            (None, None, Some(cols)) => {
                if cols.len() != m {
                    return Err(ConfigError::new("scene.linear", format!("needs {m} weight columns")));
                }
                let cols: Vec<Vector3> = cols.iter().map(|c| vec3(*c)).collect();
                SceneWeights::Linear(Matrix3xX::from_columns(&cols))
            }
            _ => {
                return Err(ConfigError::new(
                    "scene",
                    "exactly one of `diagonal`, `quadratic`, `linear` is required",
                ))
            }
        };
        VectorScene::new(directions, weights).map_err(|e| ConfigError::new("scene", e.to_string()))
    }
}

impl SignalSection {
    fn build(&self) -> Result<MatrixSignalModel, ConfigError> {
        let base = mat3(self.gain);
        let model = if self.spin == [0.0; 3] && self.scale_amplitude == 0.0 {
            MatrixSignalModel::constant(base)
        } else {
            MatrixSignalModel::time_varying(TimeVaryingGain {
                base,
                spin: vec3(self.spin),
                scale_amplitude: self.scale_amplitude,
                scale_frequency: self.scale_frequency,
            })
        };
        model.map_err(|e| ConfigError::new("signal", e.to_string()))
    }
}

impl ConfigDocument {
    pub fn gains(&self) -> Result<Gains, ConfigError> {
        Gains::new(self.gains.kp, self.gains.ki).map_err(|e| ConfigError::new("gains", e.to_string()))
    }

    pub fn variant(&self) -> Result<ObserverVariant, ConfigError> {
        self.observer
            .variant
            .parse()
            .map_err(|e: String| ConfigError::new("observer.variant", e))
    }

    fn signal_source(&self) -> Result<SignalSource, ConfigError> {
        match (&self.signal, &self.scene) {
            (Some(signal), None) => Ok(SignalSource::Matrix(signal.build()?)),
            (None, Some(scene)) => Ok(SignalSource::Scene {
                scene: scene.build()?,
                noise_std: scene.noise_std,
            }),
            _ => Err(ConfigError::new("signal", "exactly one of [signal] and [scene] is required")),
        }
    }

    /// The run described by the document. A `mahony_baseline` variant
    /// starts from the rotation factor of the configured `G⁻¹Ā(0)`.
    pub fn run_config(&self) -> Result<RunConfig, ConfigError> {
        let sim = &self.simulation;
        let gains = self.gains()?;
        let variant = self.variant()?;
        let signal = self.signal_source()?;
        let init = &self.initial_conditions;
        let r0 = exp_so3(&vec3(init.attitude));
        let g0 = signal.gain(0.0);
        let a_bar = match (init.a_bar, init.estimate_offset) {
            (Some(m), None) => mat3(m),
            (None, Some(offset)) => g0 * (r0 * exp_so3(&vec3(offset))).matrix(),
            (None, None) => g0 * r0.matrix(),
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(
                    "initial_conditions",
                    "`a_bar` and `estimate_offset` are mutually exclusive",
                ))
            }
        };
        let proposed_variant = if variant == ObserverVariant::MahonyBaseline {
            ObserverVariant::DiagForm
        } else {
            variant
        };
        let mut cfg = RunConfig {
            duration: sim.duration,
            step: sim.step,
            profile: sim.angular_velocity.build()?,
            gyro: GyroModel {
                bias: vec3(sim.gyro.bias),
                noise_std: sim.gyro.noise_std,
                seed: sim.gyro.seed,
            },
            signal,
            variant: proposed_variant,
            gains,
            initial_attitude: Rotation3::from_matrix(*r0.matrix()).map_err(|e| ConfigError::new("initial_conditions.attitude", e.to_string()))?,
            initial_estimate: InitialEstimate::Matrix(ObserverState::new(a_bar, vec3(init.b_bar))),
            seed: sim.seed,
        };
        if variant == ObserverVariant::MahonyBaseline {
            cfg = mahony_counterpart(&cfg).map_err(|e| ConfigError::new("observer.variant", e.to_string()))?;
        }
        cfg.validate().map_err(|e| ConfigError::new(key_for(&e.to_string()), e.to_string()))?;
        Ok(cfg)
    }

    pub fn thresholds(&self) -> Result<Vec<f64>, ConfigError> {
        let section = self
            .mahony
            .as_ref()
            .ok_or_else(|| ConfigError::new("mahony", "compare needs a [mahony] section"))?;
        if section.thresholds.is_empty() || section.thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err(ConfigError::new("mahony.thresholds", "thresholds must be positive"));
        }
        Ok(section.thresholds.clone())
    }

    /// Monte Carlo options, with command-line overrides applied.
    pub fn monte_carlo(
        &self,
        trials: Option<usize>,
        init_box: Option<f64>,
        seed: Option<u64>,
    ) -> Result<MonteCarloOptions, ConfigError> {
        let section = self.montecarlo.as_ref();
        let trials = trials
            .or(section.map(|s| s.trials))
            .ok_or_else(|| ConfigError::new("montecarlo.trials", "missing (set it or pass --trials)"))?;
        let init_box = init_box
            .or(section.map(|s| s.init_box))
            .ok_or_else(|| ConfigError::new("montecarlo.init_box", "missing (set it or pass --init-box)"))?;
        let options = MonteCarloOptions {
            trials,
            init_box,
            bias_box: section.map_or(1.0, |s| s.bias_box),
            master_seed: seed.or(section.map(|s| s.seed)).unwrap_or(0),
        };
        if options.trials == 0 {
            return Err(ConfigError::new("montecarlo.trials", "at least one trial is required"));
        }
        if !(options.init_box >= 0.0 && options.bias_box >= 0.0) {
            return Err(ConfigError::new("montecarlo.init_box", "boxes must be ≥ 0"));
        }
        Ok(options)
    }
}

/// Best-effort key for a harness validation message.
fn key_for(message: &str) -> &'static str {
    if message.contains("step") || message.contains("duration") {
        "simulation"
    } else if message.contains("gyro") {
        "simulation.gyro"
    } else if message.contains("variant") {
        "observer.variant"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse_and_build() {
        for (name, _) in BUNDLED {
            let loaded = load_config(name).unwrap();
            loaded.document.run_config().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = BUNDLED[0].1.replace("[gains]", "[gains]\nkd = 1.0");
        let err = parse_config(&text).unwrap_err();
        assert!(err.message.contains("unknown field `kd`"), "{err}");
    }

    #[test]
    fn negative_gain_names_the_key() {
        let text = BUNDLED[0].1.replace("kp = 2.5", "kp = -1.0");
        let err = parse_config(&text).unwrap().run_config().unwrap_err();
        assert_eq!(err.key, "gains");
        assert!(err.to_string().contains("gains must be positive"), "{err}");
    }

    #[test]
    fn monte_carlo_overrides() {
        let doc = load_config("montecarlo_global").unwrap().document;
        let opts = doc.monte_carlo(Some(5), None, Some(3)).unwrap();
        assert_eq!((opts.trials, opts.master_seed), (5, 3));
        assert!(doc.monte_carlo(Some(0), None, None).is_err());
    }
}
