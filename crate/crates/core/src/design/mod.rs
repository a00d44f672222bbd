//! Thruster-geometry design: minimize the structure size `J(r)` subject to
//! rank, conditioning, slipstream-clearance and auxiliary-thruster constraints.
//!
//! The search runs a Latin hypercube presearch followed by pattern search from
//! the best few samples.

pub mod gps;
pub mod lhs;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aero::{self, SlipstreamVolume};
use crate::allocation::{auxiliary_residuals, auxiliary_thruster, make_moment_consistent, WrenchMap};
use crate::geometry::Vec3;
use crate::params::{ParameterFile, ThrusterLayout, ThrusterPose};
use crate::{Error, Result};

use gps::{pattern_search, Evaluation, HistoryEntry, SearchOptions};

/// Number of decision variables.
pub const DIM: usize = 45;
/// Thrusters per design, auxiliary included.
pub const THRUSTERS: usize = 7;
const R_E: usize = 21;
const DIRS: usize = 24;
/// Axial offset of thruster 7 along its free direction.
const AXIAL: usize = 18;
/// Penalty for candidates that cannot be decoded.
pub const DEGENERATE_PENALTY: f64 = 1e6;

/// Coordinates that the decoder ignores: the two unused slots of `r_7` and
/// the raw direction of thruster 7.
pub const INERT: [usize; 5] = [19, 20, 42, 43, 44];

/// Coordinates polled by the pattern search.
pub fn active_indices() -> Vec<usize> {
    (0..DIM).filter(|i| !INERT.contains(i)).collect()
}

/// Raw decision vector: `r_1..r_7`, `r_e`, then direction parameters for
/// `F_1..F_7`, three components each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DesignVector(Vec<f64>);

impl DesignVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != DIM {
            return Err(Error::InvalidParameter(format!(
                "design vector needs {DIM} entries, got {}",
                values.len()
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Encodes six primaries, the axial offset of thruster 7 and `r_e`.
    pub fn encode(primary: &[ThrusterPose], axial: f64, r_e: &Vec3) -> Result<Self> {
        if primary.len() != THRUSTERS - 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} primary thrusters, got {}",
                THRUSTERS - 1,
                primary.len()
            )));
        }
        let mut x = vec![0.0; DIM];
        for (i, p) in primary.iter().enumerate() {
            x[3 * i..3 * i + 3].copy_from_slice(p.position().as_slice());
            x[DIRS + 3 * i..DIRS + 3 * i + 3].copy_from_slice(p.direction().as_slice());
        }
        x[AXIAL] = axial;
        x[R_E..R_E + 3].copy_from_slice(r_e.as_slice());
        Ok(Self(x))
    }
}

impl TryFrom<Vec<f64>> for DesignVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DesignVector> for Vec<f64> {
    fn from(v: DesignVector) -> Self {
        v.0
    }
}

/// Geometry decoded from a design vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedDesign {
    pub primary: Vec<ThrusterPose>,
    pub auxiliary: ThrusterPose,
    pub r_e: Vec3,
}

impl DecodedDesign {
    pub fn poses(&self) -> impl Iterator<Item = &ThrusterPose> {
        self.primary.iter().chain(std::iter::once(&self.auxiliary))
    }

    /// A full layout using the mass and rotor data of `base`.
    pub fn layout(&self, base: &ParameterFile) -> Result<ThrusterLayout> {
        ThrusterLayout::new(
            self.primary.clone(),
            self.auxiliary,
            base.thruster_mass_kg,
            base.lambda_max_n,
            base.mu,
        )
    }
}

/// Decodes `x`: normalizes directions 1..6, shifts positions 1..6 minimally so
/// the auxiliary moment equation is solvable, then places thruster 7 at the
/// minimum-norm auxiliary position plus `x[18]` along its free direction.
pub fn decode(x: &[f64]) -> Result<DecodedDesign> {
    if x.len() != DIM {
        return Err(Error::InvalidParameter(format!("design vector needs {DIM} entries")));
    }
    let v = |k: usize| Vec3::new(x[k], x[k + 1], x[k + 2]);
    let mut dirs = Vec::with_capacity(THRUSTERS - 1);
    for i in 0..THRUSTERS - 1 {
        let d = v(DIRS + 3 * i);
        let norm = d.norm();
        if norm < 1e-9 {
            return Err(Error::DegenerateDirection { norm });
        }
        dirs.push(d / norm);
    }
    let mut pos: Vec<Vec3> = (0..THRUSTERS - 1).map(|i| v(3 * i)).collect();
    make_moment_consistent(&mut pos, &dirs);
    let primary = pos
        .iter()
        .zip(&dirs)
        .map(|(r, f)| ThrusterPose::from_unit(*r, *f))
        .collect::<Result<Vec<_>>>()?;
    let aux = auxiliary_thruster(&primary)?;
    Ok(DecodedDesign {
        primary,
        auxiliary: aux.pose_at(x[AXIAL]),
        r_e: v(R_E),
    })
}

/// Constraint bounds and search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Lower bound on the smallest singular value of the primary wrench map.
    pub eps1: f64,
    /// Minimum slipstream-to-slipstream clearance, m.
    pub eps2: f64,
    /// End-effector sphere radius, m.
    pub effector_radius: f64,
    /// Upper bound on the condition number.
    pub kappa_max: f64,
    /// Tolerance on the two auxiliary equality residuals.
    pub aux_tolerance: f64,
    pub lhs_samples: usize,
    pub top_k: usize,
    /// Presearch box half-width for positions and `r_e`, m.
    pub position_bound: f64,
    /// Presearch box half-width for direction parameters.
    pub direction_bound: f64,
    pub search: SearchOptions,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eps1: 1e-3,
            eps2: 1e-2,
            effector_radius: 1e-2,
            kappa_max: 5.0,
            aux_tolerance: 1e-6,
            lhs_samples: 1000,
            top_k: 5,
            position_bound: 1.0,
            direction_bound: 1.0,
            search: SearchOptions::default(),
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::json("optimizer config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("effector_radius", self.effector_radius),
            ("aux_tolerance", self.aux_tolerance),
            ("position_bound", self.position_bound),
            ("direction_bound", self.direction_bound),
            ("search.initial_mesh", self.search.initial_mesh),
            ("search.min_mesh", self.search.min_mesh),
            ("search.max_mesh", self.search.max_mesh),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.kappa_max >= 1.0) {
            return Err(Error::InvalidParameter("kappa_max must be >= 1".into()));
        }
        if self.lhs_samples == 0 || self.top_k == 0 || self.search.max_evals == 0 {
            return Err(Error::InvalidParameter(
                "lhs_samples, top_k and search.max_evals must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Presearch box for every coordinate.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..DIM)
            .map(|i| {
                let b = if i >= DIRS { self.direction_bound } else { self.position_bound };
                (-b, b)
            })
            .collect()
    }
}

/// Objective and constraint values of one design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateEvaluation {
    /// Frobenius norm of the seven thruster positions, m.
    pub objective: f64,
    pub sigma_min: f64,
    pub kappa: f64,
    /// Row-major upper triangle: (1,2), (1,3), ..., (6,7).
    pub pair_clearances: Vec<f64>,
    pub effector_clearances: Vec<f64>,
    pub aux_force_residual: f64,
    pub aux_moment_residual: f64,
    pub penalty: f64,
    pub feasible: bool,
}

impl CandidateEvaluation {
    fn degenerate() -> Self {
        Self {
            objective: f64::NAN,
            sigma_min: 0.0,
            kappa: f64::INFINITY,
            pair_clearances: Vec::new(),
            effector_clearances: Vec::new(),
            aux_force_residual: f64::NAN,
            aux_moment_residual: f64::NAN,
            penalty: DEGENERATE_PENALTY,
            feasible: false,
        }
    }

    pub fn as_search(&self) -> Evaluation {
        Evaluation {
            objective: self.objective,
            penalty: self.penalty,
        }
    }
}

/// Index pairs in the order used by [`CandidateEvaluation::pair_clearances`].
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Evaluates a set of poses (primaries first, auxiliary last) and an
/// end-effector position.
///
/// The penalty is zero exactly when every constraint holds. Its terms are the
/// relative singular-value shortfall, `ln(kappa / K)` above the bound, the
/// clearance shortfalls and any auxiliary residual above tolerance. Volumes
/// that intersect add the shortfall of their axis-segment distance below
/// `2 R_max + eps2`, and an effector inside a volume adds its depth, so the
/// penalty keeps decreasing while overlaps are being removed.
pub fn evaluate_layout(poses: &[ThrusterPose], r_e: &Vec3, cfg: &OptimizerConfig) -> CandidateEvaluation {
    let n = poses.len();
    let primary = &poses[..n - 1];
    let aux = &poses[n - 1];
    let objective = poses
        .iter()
        .map(|p| p.position().norm_squared())
        .sum::<f64>()
        .sqrt();
    let map = WrenchMap::from_poses(primary);
    let sigma_min = map.sigma_min();
    let kappa = map.condition_number();
    let (aux_force_residual, aux_moment_residual) =
        auxiliary_residuals(primary, &aux.position(), &aux.direction());

    let volumes: Vec<SlipstreamVolume> = poses.iter().map(|p| SlipstreamVolume::new(*p)).collect();
    let r_max = aero::max_radius();
    let mut penalty = 0.0;

    let pair_clearances: Vec<f64> = pairs(n)
        .into_iter()
        .map(|(i, j)| {
            let d = aero::pairwise_clearance(&volumes[i], &volumes[j])
                .map(|c| c.distance)
                .unwrap_or(0.0);
            if d == 0.0 {
                let seg = aero::axis_segment_distance(&volumes[i], &volumes[j]);
                penalty += cfg.eps2 + (2.0 * r_max + cfg.eps2 - seg).max(0.0);
            } else {
                penalty += (cfg.eps2 - d).max(0.0);
            }
            d
        })
        .collect();

    let effector_clearances: Vec<f64> = volumes
        .iter()
        .map(|v| {
            let d = (v.project(r_e) - r_e).norm();
            if v.is_inside(r_e) {
                penalty += cfg.effector_radius + v.inside_depth(r_e);
            } else {
                penalty += (cfg.effector_radius - d).max(0.0);
            }
            d
        })
        .collect();

    if !(sigma_min > 0.0) {
        penalty += 1.0 + (cfg.kappa_max.ln()).max(1.0);
    } else {
        penalty += ((cfg.eps1 - sigma_min) / cfg.eps1).max(0.0);
        penalty += (kappa / cfg.kappa_max).ln().max(0.0);
    }
    penalty += (aux_force_residual - cfg.aux_tolerance).max(0.0);
    penalty += (aux_moment_residual - cfg.aux_tolerance).max(0.0);
    if !penalty.is_finite() {
        penalty = DEGENERATE_PENALTY;
    }

    CandidateEvaluation {
        objective,
        sigma_min,
        kappa,
        pair_clearances,
        effector_clearances,
        aux_force_residual,
        aux_moment_residual,
        feasible: penalty == 0.0,
        penalty,
    }
}

/// Decodes and evaluates `x`. Undecodable vectors get [`DEGENERATE_PENALTY`].
pub fn evaluate_candidate(x: &[f64], cfg: &OptimizerConfig) -> CandidateEvaluation {
    match decode(x) {
        Ok(d) => {
            let poses: Vec<ThrusterPose> = d.poses().copied().collect();
            evaluate_layout(&poses, &d.r_e, cfg)
        }
        Err(_) => CandidateEvaluation::degenerate(),
    }
}

/// A presearch sample with its evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub x: Vec<f64>,
    pub evaluation: CandidateEvaluation,
}

fn rank_key(e: &CandidateEvaluation) -> (bool, f64, f64) {
    (!e.feasible, e.penalty, if e.objective.is_nan() { f64::INFINITY } else { e.objective })
}

/// Latin hypercube presearch, sorted feasible first, then by penalty, then by
/// objective.
pub fn lhs_presearch(cfg: &OptimizerConfig, bounds: &[(f64, f64)]) -> Vec<RankedCandidate> {
    let mut ranked: Vec<RankedCandidate> = lhs::latin_hypercube(cfg.lhs_samples, bounds, cfg.seed)
        .into_par_iter()
        .map(|x| {
            let evaluation = evaluate_candidate(&x, cfg);
            RankedCandidate { x, evaluation }
        })
        .collect();
    ranked.sort_by(|a, b| {
        rank_key(&a.evaluation)
            .partial_cmp(&rank_key(&b.evaluation))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    ranked
}

/// Result of [`run_design`].
#[derive(Debug, Clone)]
pub struct DesignReport {
    pub vector: DesignVector,
    pub design: DecodedDesign,
    pub evaluation: CandidateEvaluation,
    /// Best presearch evaluation.
    pub presearch_best: CandidateEvaluation,
    /// Poll history of every search, numbered consecutively.
    pub history: Vec<HistoryEntry>,
    pub evals: usize,
}

impl DesignReport {
    /// Parameter file with the designed geometry and the mass data of `base`.
    pub fn parameter_file(&self, base: &ParameterFile) -> Result<ParameterFile> {
        Ok(base.with_geometry(&self.design.layout(base)?, &self.design.r_e))
    }

    /// Writes the poll history as `iter,mesh,J,feasible_count`.
    pub fn write_progress(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["iter", "mesh", "J", "feasible_count"]).map_err(csv_err)?;
        for h in &self.history {
            w.write_record([
                h.iter.to_string(),
                h.mesh.to_string(),
                h.objective.to_string(),
                h.feasible_count.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Presearch, then pattern search from the `top_k` best samples; returns the
/// best feasible result.
pub fn run_design(cfg: &OptimizerConfig) -> Result<DesignReport> {
    cfg.validate()?;
    let ranked = lhs_presearch(cfg, &cfg.bounds());
    let active = active_indices();
    let mut best: Option<(Vec<f64>, CandidateEvaluation)> = None;
    let mut history = Vec::new();
    let mut evals = ranked.len();
    for start in ranked.iter().take(cfg.top_k) {
        let outcome = pattern_search(
            |x| evaluate_candidate(x, cfg).as_search(),
            &start.x,
            &active,
            &cfg.search,
        );
        let offset = history.len();
        match outcome {
            Ok(r) => {
                evals += r.evals;
                history.extend(r.history.into_iter().map(|h| HistoryEntry {
                    iter: h.iter + offset,
                    ..h
                }));
                let e = evaluate_candidate(&r.point, cfg);
                if best.as_ref().is_none_or(|(_, b)| e.objective < b.objective) {
                    best = Some((r.point, e));
                }
            }
            Err(Error::NoFeasibleStart) => evals += cfg.search.max_evals,
            Err(e) => return Err(e),
        }
    }
    let (x, evaluation) = best.ok_or(Error::NoFeasibleDesign)?;
    Ok(DesignReport {
        design: decode(&x)?,
        vector: DesignVector::new(x)?,
        evaluation,
        presearch_best: ranked[0].evaluation.clone(),
        history,
        evals,
    })
}
