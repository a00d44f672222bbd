//! Scenario files, reference trajectories and the closed-loop simulation driver.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::allocation::redistribute;
use crate::control::{Controller, ControllerGains, Diagonal, EstimatorState, GainFile, ReferenceSignal};
use crate::dynamics::{
    step_rk4, Disturbance, DynamicsModel, Harmonic, HarmonicDisturbance, NoDisturbance, SimState,
};
use crate::error::{Error, Result};
use crate::geometry::{Pose6, Twist6, Vec6};
use crate::params::ParameterFile;

/// Summary schema shipped with the crate.
pub const SUMMARY_SCHEMA: &str = include_str!("../data/summary.schema.json");

pub const CSV_FILE: &str = "timeseries.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSpec {
    /// `p = (R cos wt, R sin wt, z0 + c t)` with fixed attitude.
    Helix {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "half")]
        omega: f64,
        #[serde(default = "default_z0")]
        z0: f64,
        #[serde(default = "default_climb")]
        climb: f64,
        #[serde(default = "default_attitude")]
        attitude: [f64; 3],
    },
    Hold { pose: [f64; 6] },
    /// `xi_des(t) = sum_k coefficients[k] t^k`.
    Polynomial { coefficients: Vec<[f64; 6]> },
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_z0() -> f64 {
    1.5
}
fn default_climb() -> f64 {
    0.3
}
fn default_attitude() -> [f64; 3] {
    use std::f64::consts::PI;
    [PI / 3.0, PI / 6.0, -PI / 4.0]
}

impl ReferenceSpec {
    pub fn benchmark() -> Self {
        ReferenceSpec::Helix {
            radius: one(),
            omega: half(),
            z0: default_z0(),
            climb: default_climb(),
            attitude: default_attitude(),
        }
    }
}

/// Analytic desired pose and derivatives at time `t`.
pub fn reference(t: f64, spec: &ReferenceSpec) -> ReferenceSignal {
    match spec {
        ReferenceSpec::Helix {
            radius,
            omega,
            z0,
            climb,
            attitude,
        } => {
            let (s, c) = (omega * t).sin_cos();
            let [a0, a1, a2] = *attitude;
            ReferenceSignal {
                pose: Vec6::new(radius * c, radius * s, z0 + climb * t, a0, a1, a2),
                velocity: Vec6::new(-radius * omega * s, radius * omega * c, *climb, 0.0, 0.0, 0.0),
                acceleration: Vec6::new(
                    -radius * omega * omega * c,
                    -radius * omega * omega * s,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                ),
            }
        }
        ReferenceSpec::Hold { pose } => ReferenceSignal::hold(Vec6::from(*pose)),
        ReferenceSpec::Polynomial { coefficients } => {
            let mut out = ReferenceSignal::hold(Vec6::zeros());
            for (k, c) in coefficients.iter().enumerate() {
                let c = Vec6::from(*c);
                let k_f = k as f64;
                out.pose += c * t.powi(k as i32);
                if k >= 1 {
                    out.velocity += c * k_f * t.powi(k as i32 - 1);
                }
                if k >= 2 {
                    out.acceleration += c * k_f * (k_f - 1.0) * t.powi(k as i32 - 2);
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    /// `(0.5, 0.4 sin 2t, 0.4 cos t, 0.5, 0.5 cos 0.8t, 0.6 sin t)`.
    Benchmark,
    None,
    Constant { value: [f64; 6] },
    Harmonic { channels: [Harmonic; 6] },
    /// Harmonics drawn from the scenario seed: biases and amplitudes uniform in
    /// `[-amplitude, amplitude]`, frequencies in `[0, max_omega]`.
    RandomHarmonic { amplitude: f64, max_omega: f64 },
}

impl DisturbanceSpec {
    pub fn build(&self, seed: u64) -> Arc<dyn Disturbance> {
        match self {
            DisturbanceSpec::Benchmark => Arc::new(HarmonicDisturbance::benchmark()),
            DisturbanceSpec::None => Arc::new(NoDisturbance),
            DisturbanceSpec::Constant { value } => {
                let bias = *value;
                Arc::new(HarmonicDisturbance(std::array::from_fn(|i| Harmonic {
                    bias: bias[i],
                    ..Harmonic::default()
                })))
            }
            DisturbanceSpec::Harmonic { channels } => Arc::new(HarmonicDisturbance(*channels)),
            DisturbanceSpec::RandomHarmonic {
                amplitude,
                max_omega,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = *amplitude;
                Arc::new(HarmonicDisturbance(std::array::from_fn(|_| Harmonic {
                    bias: rng.random_range(-a..=a),
                    a_sin: rng.random_range(-a..=a),
                    a_cos: rng.random_range(-a..=a),
                    omega: rng.random_range(0.0..=*max_omega),
                })))
            }
        }
    }
}

/// A file path or an inline value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    /// End-effector pose; defaults to `(r_e, 0)`.
    #[serde(default)]
    pub pose: Option<[f64; 6]>,
    #[serde(default)]
    pub twist: Option<[f64; 6]>,
    #[serde(default = "default_theta_hat")]
    pub theta_hat: Diagonal,
    #[serde(default = "default_delta_hat")]
    pub delta_hat: Diagonal,
}

fn default_theta_hat() -> Diagonal {
    Diagonal::Scalar(0.7)
}
fn default_delta_hat() -> Diagonal {
    Diagonal::Scalar(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Parameter file; the bundled reference vehicle when absent.
    #[serde(default)]
    pub params: Option<Source<ParameterFile>>,
    /// Deep-merged over the parameter file.
    #[serde(default)]
    pub param_overrides: Option<Value>,
    #[serde(default)]
    pub gains: Option<Source<GainFile>>,
    #[serde(default = "ReferenceSpec::benchmark")]
    pub reference: ReferenceSpec,
    #[serde(default = "benchmark_disturbance")]
    pub disturbance: DisturbanceSpec,
    #[serde(default = "default_theta_star")]
    pub theta_star: Diagonal,
    #[serde(default = "default_initial")]
    pub initial: InitialConditions,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    /// Start of the window used for the after-transient error maxima.
    #[serde(default = "default_settle")]
    pub settle_time: f64,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn benchmark_disturbance() -> DisturbanceSpec {
    DisturbanceSpec::Benchmark
}
fn default_theta_star() -> Diagonal {
    Diagonal::Scalar(0.85)
}
fn default_initial() -> InitialConditions {
    InitialConditions {
        pose: None,
        twist: None,
        theta_hat: default_theta_hat(),
        delta_hat: default_delta_hat(),
    }
}
impl Default for InitialConditions {
    fn default() -> Self {
        default_initial()
    }
}

fn default_dt() -> f64 {
    1e-3
}
fn default_duration() -> f64 {
    30.0
}
fn default_decimation() -> usize {
    10
}
fn default_settle() -> f64 {
    10.0
}

impl Default for Scenario {
    fn default() -> Self {
        Self::benchmark()
    }
}

impl Scenario {
    /// The benchmark tracking run: helix reference, harmonic disturbance,
    /// 15 % effectiveness loss.
    pub fn benchmark() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("scenario", e))
    }

    /// Loads a scenario; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s: Self =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duration must be > 0, got {}",
                self.duration
            )));
        }
        if self.decimation == 0 {
            return Err(Error::InvalidParameter("decimation must be >= 1".into()));
        }
        Ok(())
    }

    pub fn parameter_file(&self) -> Result<ParameterFile> {
        let base = match &self.params {
            None => ParameterFile::reference(),
            Some(Source::Inline(p)) => p.clone(),
            Some(Source::Path(p)) => ParameterFile::load(self.resolve(p))?,
        };
        match &self.param_overrides {
            Some(o) => base.with_overrides(o),
            None => Ok(base),
        }
    }

    pub fn controller_gains(&self) -> Result<ControllerGains> {
        match &self.gains {
            None => Ok(ControllerGains::benchmark()),
            Some(Source::Inline(g)) => ControllerGains::from_file(g),
            Some(Source::Path(p)) => ControllerGains::load(self.resolve(p)),
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// One logged sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub pose: Vec6,
    pub twist: Vec6,
    /// Seven non-negative thrusts after redistribution; the last is the
    /// auxiliary coefficient on `t_a`.
    pub thrust: [f64; 7],
    pub z1: Vec6,
    pub z2: Vec6,
    pub delta_hat: Vec6,
    pub theta_hat: Vec6,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub t: f64,
    pub cos_theta: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: u32,
    pub completed: bool,
    pub abort: Option<Abort>,
    pub steps: usize,
    pub dt: f64,
    pub duration: f64,
    pub final_time: f64,
    pub seed: u64,
    pub final_position_error_m: f64,
    pub final_attitude_error_rad: f64,
    pub settle_time_s: f64,
    pub max_position_error_after_settle_m: f64,
    pub max_attitude_error_after_settle_rad: f64,
    pub max_z1_after_settle: f64,
    pub max_z2_after_settle: f64,
    pub max_thrust_n: [f64; 7],
    pub min_thrust_n: f64,
    pub lambda_max_n: f64,
    pub saturated_steps: usize,
    pub theta_hat_range: [f64; 2],
    pub delta_hat_max: f64,
    pub max_abs_state: f64,
    pub all_finite: bool,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub samples: Vec<Sample>,
    pub summary: Summary,
}

struct Tracker {
    summary: Summary,
}

impl Tracker {
    fn observe(&mut self, t: f64, s: &SimState, thrust: &[f64; 7], z1: &Vec6, z2: &Vec6, est: &EstimatorState) {
        let sm = &mut self.summary;
        let pos_err = z1.fixed_rows::<3>(0).norm();
        let att_err = z1.fixed_rows::<3>(3).norm();
        sm.final_time = t;
        sm.final_position_error_m = pos_err;
        sm.final_attitude_error_rad = att_err;
        if t > sm.settle_time_s {
            sm.max_position_error_after_settle_m = sm.max_position_error_after_settle_m.max(pos_err);
            sm.max_attitude_error_after_settle_rad =
                sm.max_attitude_error_after_settle_rad.max(att_err);
            sm.max_z1_after_settle = sm.max_z1_after_settle.max(z1.norm());
            sm.max_z2_after_settle = sm.max_z2_after_settle.max(z2.norm());
        }
        for (m, &l) in sm.max_thrust_n.iter_mut().zip(thrust) {
            *m = m.max(l);
        }
        sm.min_thrust_n = thrust.iter().copied().fold(sm.min_thrust_n, f64::min);
        if thrust.iter().any(|&l| l > sm.lambda_max_n) {
            sm.saturated_steps += 1;
        }
        sm.theta_hat_range[0] = est.theta_hat.min().min(sm.theta_hat_range[0]);
        sm.theta_hat_range[1] = est.theta_hat.max().max(sm.theta_hat_range[1]);
        sm.delta_hat_max = sm.delta_hat_max.max(est.delta_hat.max());
        let state_mag = s.pose.to_vector().amax().max(s.twist.to_vector().amax());
        sm.max_abs_state = sm.max_abs_state.max(state_mag);
        let finite = [s.pose.to_vector(), s.twist.to_vector(), *z1, *z2, est.delta_hat, est.theta_hat]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
            && thrust.iter().all(|x| x.is_finite());
        sm.all_finite &= finite;
    }
}

/// Runs one closed-loop simulation. A pitch-singularity abort is recorded in
/// the summary (`completed = false`) rather than returned as an error.
pub fn run_scenario(cfg: &Scenario) -> Result<SimOutput> {
    cfg.validate()?;
    let file = cfg.parameter_file()?;
    let body = file.body()?;
    let layout = file.layout()?;
    let gains = cfg.controller_gains()?;
    let model = DynamicsModel::new(
        body.clone(),
        layout.clone(),
        cfg.theta_star.to_vec(),
        cfg.disturbance.build(cfg.seed),
    )?;
    let mut controller = Controller::new(
        gains,
        EstimatorState::new(cfg.initial.delta_hat.to_vec(), cfg.initial.theta_hat.to_vec()),
    )?;
    let pose0 = cfg.initial.pose.map(Vec6::from).unwrap_or_else(|| {
        Vec6::new(body.r_e.x, body.r_e.y, body.r_e.z, 0.0, 0.0, 0.0)
    });
    let twist0 = cfg.initial.twist.map(Vec6::from).unwrap_or_else(Vec6::zeros);
    let mut state = SimState::new(Pose6::from_vector(&pose0), Twist6::from_vector(&twist0), 0.0);

    let steps = cfg.steps();
    let mut tracker = Tracker {
        summary: Summary {
            version: 1,
            completed: false,
            abort: None,
            steps: 0,
            dt: cfg.dt,
            duration: cfg.duration,
            final_time: 0.0,
            seed: cfg.seed,
            final_position_error_m: 0.0,
            final_attitude_error_rad: 0.0,
            settle_time_s: cfg.settle_time,
            max_position_error_after_settle_m: 0.0,
            max_attitude_error_after_settle_rad: 0.0,
            max_z1_after_settle: 0.0,
            max_z2_after_settle: 0.0,
            max_thrust_n: [0.0; 7],
            min_thrust_n: f64::INFINITY,
            lambda_max_n: layout.max_thrust,
            saturated_steps: 0,
            theta_hat_range: [f64::INFINITY, f64::NEG_INFINITY],
            delta_hat_max: 0.0,
            max_abs_state: 0.0,
            all_finite: true,
        },
    };
    let mut samples = Vec::with_capacity(steps / cfg.decimation + 1);

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        state.t = t;
        let outcome = state
            .check_pitch()
            .and_then(|_| controller.command(&state, &reference(t, &cfg.reference), &model));
        let out = match outcome {
            Ok(out) => out,
            Err(Error::NearSingular { cos_theta }) => {
                tracker.summary.abort = Some(Abort {
                    t,
                    cos_theta,
                    message: format!("pitch {:.6} rad reached the singularity guard", state.pose.pitch()),
                });
                break;
            }
            Err(e) => return Err(e),
        };
        let l7 = redistribute(out.lambda.as_slice());
        let thrust: [f64; 7] = std::array::from_fn(|i| l7[i]);
        let est = *controller.estimates();
        tracker.observe(t, &state, &thrust, &out.errors.z1, &out.errors.z2, &est);
        tracker.summary.steps = k;
        if k % cfg.decimation == 0 {
            samples.push(Sample {
                t,
                pose: state.pose.to_vector(),
                twist: state.twist.to_vector(),
                thrust,
                z1: out.errors.z1,
                z2: out.errors.z2,
                delta_hat: est.delta_hat,
                theta_hat: est.theta_hat,
            });
        }
        if k == steps {
            tracker.summary.completed = true;
            break;
        }
        controller.adapt(&out, &model, cfg.dt);
        state = match step_rk4(&state, &out.lambda, &model, cfg.dt) {
            Ok(s) => s,
            Err(Error::NearSingular { cos_theta }) => {
                tracker.summary.abort = Some(Abort {
                    t,
                    cos_theta,
                    message: "pitch singularity inside an integration step".into(),
                });
                break;
            }
            Err(e) => return Err(e),
        };
    }
    Ok(SimOutput {
        samples,
        summary: tracker.summary,
    })
}

/// Runs independent scenarios in parallel.
pub fn run_sweep(scenarios: &[Scenario]) -> Vec<Result<SimOutput>> {
    scenarios.par_iter().map(run_scenario).collect()
}

pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "t", "x_e", "y_e", "z_e", "phi", "theta", "psi", "vx", "vy", "vz", "wx", "wy", "wz",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=7).map(|i| format!("l{i}")));
    for prefix in ["z1_", "z2_", "dhat_", "thetahat_"] {
        h.extend((1..=6).map(|i| format!("{prefix}{i}")));
    }
    h
}

/// Writes `timeseries.csv` and `summary.json` into `dir`.
pub fn emit_outputs(out: &SimOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(CSV_FILE);
    let csv_err = |e| Error::Csv {
        path: csv_path.clone(),
        source: e,
    };
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
    w.write_record(csv_header()).map_err(csv_err)?;
    for s in &out.samples {
        let mut row: Vec<String> = Vec::with_capacity(50);
        row.push(s.t.to_string());
        let vectors = [&s.pose, &s.twist];
        row.extend(vectors.iter().flat_map(|v| v.iter()).map(|x| x.to_string()));
        row.extend(s.thrust.iter().map(|x| x.to_string()));
        let tail = [&s.z1, &s.z2, &s.delta_hat, &s.theta_hat];
        row.extend(tail.iter().flat_map(|v| v.iter()).map(|x| x.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let summary_path = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&out.summary).map_err(|e| Error::json("summary", e))?;
    std::fs::write(&summary_path, text).map_err(|e| Error::io(&summary_path, e))
}
