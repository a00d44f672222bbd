//! Wrench map, auxiliary thruster and non-negative thrust redistribution.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::geometry::{Vec3, Vec6, E3};
use crate::params::{RigidBodyParams, ThrusterLayout, ThrusterPose};

/// Smallest singular value accepted by [`WrenchMap::solve`].
pub const RANK_TOLERANCE: f64 = 1e-12;
/// Threshold on `|sum F_i|` below which no auxiliary direction exists.
pub const DIRECTION_TOLERANCE: f64 = 1e-9;
/// Largest component of the auxiliary moment equation along `F_a` tolerated.
pub const MOMENT_TOLERANCE: f64 = 1e-9;

/// `mu = (C_Q / C_lambda) * R`.
pub fn rotor_torque_coeff(c_q: f64, c_lambda: f64, radius: f64) -> f64 {
    c_q / c_lambda * radius
}

/// Wrench column `[F; r x F]` of a thruster at `r` pointing along `f`.
pub fn wrench_column(r: &Vec3, f: &Vec3) -> Vec6 {
    let m = r.cross(f);
    Vec6::new(f.x, f.y, f.z, m.x, m.y, m.z)
}

/// The 6 x n map `D(r, F)` from thrust magnitudes to body wrench.
#[derive(Debug, Clone)]
pub struct WrenchMap {
    matrix: DMatrix<f64>,
    singular_values: DVector<f64>,
}

impl WrenchMap {
    pub fn from_poses(poses: &[ThrusterPose]) -> Self {
        let cols: Vec<Vec6> = poses
            .iter()
            .map(|p| wrench_column(&p.position(), &p.direction()))
            .collect();
        Self::from_columns(&cols)
    }

    pub fn from_columns(cols: &[Vec6]) -> Self {
        let matrix = DMatrix::from_fn(6, cols.len(), |i, j| cols[j][i]);
        let mut singular_values = SVD::new(matrix.clone(), false, false).singular_values;
        singular_values
            .as_mut_slice()
            .sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        Self {
            matrix,
            singular_values,
        }
    }

    /// Map of the first `use_n` thrusters of `layout` (`6` = primaries only,
    /// `7` = primaries plus the stored auxiliary).
    pub fn build(layout: &ThrusterLayout, use_n: usize) -> Result<Self> {
        let poses: Vec<ThrusterPose> = layout.all().copied().collect();
        if !(6..=poses.len()).contains(&use_n) {
            return Err(Error::InvalidParameter(format!(
                "use_n must be between 6 and {}, got {use_n}",
                poses.len()
            )));
        }
        Ok(Self::from_poses(&poses[..use_n]))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn column(&self, i: usize) -> Vec6 {
        Vec6::from_iterator(self.matrix.column(i).iter().copied())
    }

    /// Singular values, largest first.
    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn sigma_min(&self) -> f64 {
        if self.matrix.ncols() < 6 {
            return 0.0;
        }
        self.singular_values[self.singular_values.len() - 1]
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    /// `sigma_max / sigma_min`; infinite for a rank-deficient map.
    pub fn condition_number(&self) -> f64 {
        let lo = self.sigma_min();
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            self.sigma_max() / lo
        }
    }

    pub fn apply(&self, lambda: &[f64]) -> Vec6 {
        let out = &self.matrix * DVector::from_column_slice(lambda);
        Vec6::from_iterator(out.iter().copied())
    }

    /// Solves `D lambda = w` for a square map.
    pub fn solve(&self, wrench: &Vec6) -> Result<Vec<f64>> {
        if self.matrix.ncols() != 6 {
            return Err(Error::InvalidParameter(format!(
                "solve needs a 6x6 map, got 6x{}",
                self.matrix.ncols()
            )));
        }
        let lo = self.sigma_min();
        if lo < RANK_TOLERANCE {
            return Err(Error::RankDeficient { sigma_min: lo });
        }
        let rhs = DVector::from_column_slice(wrench.as_slice());
        self.matrix
            .clone()
            .lu()
            .solve(&rhs)
            .map(|x| x.as_slice().to_vec())
            .ok_or(Error::RankDeficient { sigma_min: lo })
    }
}

/// `lambda = D^{-1} W_R`.
pub fn solve_thrust(map: &WrenchMap, wrench: &Vec6) -> Result<Vec<f64>> {
    map.solve(wrench)
}

/// The thruster that cancels the summed wrench columns of the primaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxiliaryThruster {
    /// `F_a = -sum F_i`, not normalized.
    pub direction: Vec3,
    /// `|F_a|`.
    pub norm: f64,
    /// Minimum-norm solution of `F_a x r_a = sum r_i x F_i`.
    pub position: Vec3,
    /// Unit vector spanning the family `position + t * free_direction`.
    pub free_direction: Vec3,
}

impl AuxiliaryThruster {
    /// Wrench column `t_a = [F_a; r_a x F_a]`, equal to `-sum t_i`.
    pub fn column(&self) -> Vec6 {
        wrench_column(&self.position, &self.direction)
    }

    /// Physical pose at axial offset `t` along the free direction.
    pub fn pose_at(&self, t: f64) -> ThrusterPose {
        ThrusterPose::new(self.position + t * self.free_direction, self.direction)
            .expect("auxiliary direction is non-degenerate")
    }
}

/// Synthesizes the auxiliary thruster for `primary`.
pub fn auxiliary_thruster(primary: &[ThrusterPose]) -> Result<AuxiliaryThruster> {
    let direction: Vec3 = -primary.iter().map(|p| p.direction()).sum::<Vec3>();
    let norm = direction.norm();
    if norm < DIRECTION_TOLERANCE {
        return Err(Error::DegenerateDirection { norm });
    }
    // required r_a x F_a
    let moment: Vec3 = -primary
        .iter()
        .map(|p| p.position().cross(&p.direction()))
        .sum::<Vec3>();
    let residual = moment.dot(&direction) / norm;
    if residual.abs() > MOMENT_TOLERANCE {
        return Err(Error::Unsolvable { residual });
    }
    Ok(AuxiliaryThruster {
        direction,
        norm,
        position: direction.cross(&moment) / (norm * norm),
        free_direction: direction / norm,
    })
}

/// Residuals `(|F_a + sum F_i|, |F_a x r_a - sum r_i x F_i|)` for a candidate
/// auxiliary direction `f_a` (any length) at `r_a`. The moment residual uses
/// `f_a` scaled to `|sum F_i|`.
pub fn auxiliary_residuals(primary: &[ThrusterPose], r_a: &Vec3, f_a: &Vec3) -> (f64, f64) {
    let sum_f: Vec3 = primary.iter().map(|p| p.direction()).sum();
    let sum_m: Vec3 = primary.iter().map(|p| p.position().cross(&p.direction())).sum();
    let scaled = if f_a.norm() > 0.0 {
        f_a * (sum_f.norm() / f_a.norm())
    } else {
        *f_a
    };
    ((scaled + sum_f).norm(), (scaled.cross(r_a) - sum_m).norm())
}

/// Moves `positions` by the smallest change that makes the auxiliary moment
/// equation solvable, i.e. `(sum F_i) . (sum r_i x F_i) = 0`.
pub fn make_moment_consistent(positions: &mut [Vec3], directions: &[Vec3]) {
    let s: Vec3 = directions.iter().sum();
    let c: f64 = positions
        .iter()
        .zip(directions)
        .map(|(r, f)| s.dot(&r.cross(f)))
        .sum();
    // d/dr_i of s.(r_i x f_i) = f_i x s
    let grads: Vec<Vec3> = directions.iter().map(|f| f.cross(&s)).collect();
    let g2: f64 = grads.iter().map(|u| u.norm_squared()).sum();
    if g2 <= f64::EPSILON {
        return;
    }
    for (r, u) in positions.iter_mut().zip(&grads) {
        *r -= c / g2 * u;
    }
}

/// Requested end-effector force and torque, with the lever from the body origin
/// to the point where the force acts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuationRequest {
    pub force: Vec3,
    pub torque: Vec3,
    pub lever: Vec3,
}

impl ActuationRequest {
    pub fn at_effector(force: Vec3, torque: Vec3, body: &RigidBodyParams) -> Self {
        Self {
            force,
            torque,
            lever: body.r_e,
        }
    }

    /// Torque about the body origin, `T_E + lever x F`.
    pub fn body_torque(&self) -> Vec3 {
        self.torque + self.lever.cross(&self.force)
    }
}

/// Required wrench `W_R` with every weight taken at the nominal hover attitude
/// (gravity along body `-z`). Thruster weights act at every layout position,
/// auxiliary included.
pub fn required_wrench(
    request: &ActuationRequest,
    body: &RigidBodyParams,
    layout: &ThrusterLayout,
) -> Vec6 {
    let n_all = layout.count() as f64;
    let w = -layout.thruster_mass * body.gravity * E3;
    let m_s = body.mass - n_all * layout.thruster_mass;
    let w_s = -m_s * body.gravity * E3;
    let f_bar = request.force - n_all * w - w_s;
    let weight_torque: Vec3 = layout.all().map(|p| p.position().cross(&w)).sum();
    let t = request.body_torque()
        - layout.torque_coeff * f_bar
        - weight_torque
        - body.r_s.cross(&w_s);
    Vec6::new(f_bar.x, f_bar.y, f_bar.z, t.x, t.y, t.z)
}

/// Maps signed thrusts to non-negative ones on `n + 1` thrusters.
///
/// With `delta` the sum of the magnitudes of the negative entries, every
/// primary output is `lambda_i + delta` and the auxiliary gets `delta`. Adding
/// `delta` to all primaries and `delta` to the auxiliary adds `delta * (sum t_i + t_a) = 0`.
///
/// ```
/// use aeroman::allocation::redistribute;
/// let out = redistribute(&[1.0, 1.0, 1.0, 1.0, 1.0, -2.0]);
/// assert_eq!(out, vec![3.0, 3.0, 3.0, 3.0, 3.0, 0.0, 2.0]);
/// ```
pub fn redistribute(lambda: &[f64]) -> Vec<f64> {
    let delta: f64 = lambda.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    let mut out: Vec<f64> = lambda.iter().map(|l| l + delta).collect();
    out.push(delta);
    out
}

/// Primary map plus a validated auxiliary column.
#[derive(Debug, Clone)]
pub struct AugmentedMap {
    primary: WrenchMap,
    augmented: WrenchMap,
}

impl AugmentedMap {
    /// Fails unless `t_a = -sum t_i` to `1e-9` (scaled by the column sizes).
    pub fn new(primary: WrenchMap, aux_column: Vec6) -> Result<Self> {
        let sum: Vec6 = (0..primary.ncols()).map(|i| primary.column(i)).sum();
        let scale = 1.0 + sum.norm();
        let err = (sum + aux_column).norm();
        if err > 1e-9 * scale {
            return Err(Error::InvalidParameter(format!(
                "auxiliary column does not cancel the primary columns (error {err:e})"
            )));
        }
        let mut cols: Vec<Vec6> = (0..primary.ncols()).map(|i| primary.column(i)).collect();
        cols.push(aux_column);
        Ok(Self {
            augmented: WrenchMap::from_columns(&cols),
            primary,
        })
    }

    /// Primaries of `layout` plus the exact auxiliary synthesized from them.
    pub fn for_layout(layout: &ThrusterLayout) -> Result<(Self, AuxiliaryThruster)> {
        let aux = auxiliary_thruster(&layout.primary)?;
        let map = Self::new(WrenchMap::from_poses(&layout.primary), aux.column())?;
        Ok((map, aux))
    }

    pub fn primary(&self) -> &WrenchMap {
        &self.primary
    }

    pub fn augmented(&self) -> &WrenchMap {
        &self.augmented
    }

    pub fn redistribute(&self, lambda: &[f64]) -> Vec<f64> {
        redistribute(lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Saturation {
    Ok,
    AtLimit,
    OverLimit { excess: f64 },
    Negative { value: f64 },
}

/// Tolerance for reporting [`Saturation::AtLimit`].
pub const AT_LIMIT_TOLERANCE: f64 = 1e-9;

/// Flags each entry against `[0, max_thrust]`. Nothing is clamped.
pub fn check_saturation(lambda: &[f64], max_thrust: f64) -> Vec<Saturation> {
    lambda
        .iter()
        .map(|&l| {
            if l < 0.0 {
                Saturation::Negative { value: l }
            } else if (l - max_thrust).abs() <= AT_LIMIT_TOLERANCE {
                Saturation::AtLimit
            } else if l > max_thrust {
                Saturation::OverLimit {
                    excess: l - max_thrust,
                }
            } else {
                Saturation::Ok
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::skew;
    use crate::params::ParameterFile;
    use nalgebra::Rotation3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pose(r: [f64; 3], f: [f64; 3]) -> ThrusterPose {
        ThrusterPose::new(Vec3::from(r), Vec3::from(f)).unwrap()
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 0.1 && v.norm() <= 1.0 {
                return v.normalize();
            }
        }
    }

    fn random_consistent_set(rng: &mut ChaCha8Rng) -> Vec<ThrusterPose> {
        let dirs: Vec<Vec3> = (0..6).map(|_| random_unit(rng)).collect();
        let mut pos: Vec<Vec3> = (0..6)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        make_moment_consistent(&mut pos, &dirs);
        pos.iter().zip(&dirs).map(|(r, f)| ThrusterPose::new(*r, *f).unwrap()).collect()
    }

    fn reference_map() -> (WrenchMap, AuxiliaryThruster) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = random_consistent_set(&mut rng);
        (WrenchMap::from_poses(&set), auxiliary_thruster(&set).unwrap())
    }

    #[test]
    fn torque_coefficient() {
        assert!((rotor_torque_coeff(0.0095, 0.008, 0.124) - 0.14725).abs() < 1e-12);
        assert!((rotor_torque_coeff(0.3, 0.3, 0.7) - 0.7).abs() < 1e-15);
        assert!((rotor_torque_coeff(0.02, 0.01, 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_columns() {
        let m = WrenchMap::from_poses(&[pose([0.0; 3], [0.0, 0.0, 1.0])]);
        assert_eq!(m.column(0), Vec6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0));
        let m = WrenchMap::from_poses(&[pose([1.0, 0.0, 0.0], [0.0, 0.0, 1.0])]);
        assert_eq!(m.column(0), Vec6::new(0.0, 0.0, 1.0, 0.0, -1.0, 0.0));
    }

    #[test]
    fn reference_layout_map_is_full_rank() {
        let layout = ParameterFile::reference().layout().unwrap();
        let m = WrenchMap::build(&layout, 6).unwrap();
        assert!(m.sigma_min() > 1e-3);
        let k = m.condition_number();
        assert!(k > 1.0 && k.is_finite());
        assert_eq!(WrenchMap::build(&layout, 7).unwrap().ncols(), 7);
        assert!(WrenchMap::build(&layout, 5).is_err());
    }

    #[test]
    fn solve_edge_cases() {
        let (m, _) = reference_map();
        let zero = m.solve(&Vec6::zeros()).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        let l = m.solve(&m.column(2)).unwrap();
        for (i, v) in l.iter().enumerate() {
            let want = if i == 2 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-10, "{l:?}");
        }
        let degenerate = WrenchMap::from_poses(&vec![pose([0.0; 3], [0.0, 0.0, 1.0]); 6]);
        assert!(matches!(degenerate.solve(&Vec6::zeros()), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn solve_residuals_random() {
        let (m, _) = reference_map();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let w = Vec6::from_fn(|_, _| rng.random_range(-50.0..50.0));
            let l = m.solve(&w).unwrap();
            assert!((m.apply(&l) - w).norm() / w.norm() < 1e-9);
        }
    }

    #[test]
    fn opposed_pair_is_degenerate() {
        let set = [pose([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]), pose([-1.0, 0.0, 0.0], [0.0, 0.0, -1.0])];
        assert!(matches!(auxiliary_thruster(&set), Err(Error::DegenerateDirection { .. })));
    }

    #[test]
    fn inconsistent_moment_is_unsolvable() {
        // sum F = 2z, sum r x F has a z component
        let set = [pose([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), pose([0.0, 0.0, 0.0], [0.0, -1.0, 0.0]), pose([0.0; 3], [0.0, 0.0, 1.0])];
        assert!(matches!(auxiliary_thruster(&set), Err(Error::Unsolvable { .. })));
    }

    #[test]
    fn reference_direction_sum() {
        let file = ParameterFile::reference();
        let sum = file.raw_primary_direction_sum();
        let printed = Vec3::from(file.thrusters[6].f_hat);
        for k in 0..3 {
            assert!((-sum[k] - printed[k]).abs() <= 0.02 + 1e-12);
        }
    }

    #[test]
    fn auxiliary_column_cancels_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let set = random_consistent_set(&mut rng);
            let aux = auxiliary_thruster(&set).unwrap();
            let sum: Vec6 = set.iter().map(|p| wrench_column(&p.position(), &p.direction())).sum();
            assert!((aux.column() + sum).amax() < 1e-12);
            let shifted = aux.position + 0.7 * aux.free_direction;
            assert!((wrench_column(&shifted, &aux.direction) + sum).amax() < 1e-12);
            let (rf, rm) = auxiliary_residuals(&set, &aux.position, &aux.direction);
            assert!(rf < 1e-12 && rm < 1e-12);
        }
    }

    #[test]
    fn required_wrench_cases() {
        let file = ParameterFile::reference();
        let body = file.body().unwrap();
        let mut layout = file.layout().unwrap();
        let zero = ActuationRequest { force: Vec3::zeros(), torque: Vec3::zeros(), lever: body.r_e };

        let hover = required_wrench(&zero, &body, &layout);
        assert!((hover[2] - 1.90 * 9.81).abs() < 1e-12);
        assert!(hover[0].abs() < 1e-15 && hover[1].abs() < 1e-15);

        let torque_req = ActuationRequest { torque: Vec3::new(0.0, 0.0, 1.0), ..zero };
        let w = required_wrench(&torque_req, &body, &layout);
        let f_bar = Vec3::new(w[0], w[1], w[2]);
        let wt = -layout.thruster_mass * body.gravity * E3;
        let ws = -(body.mass - 7.0 * layout.thruster_mass) * body.gravity * E3;
        let terms: Vec3 = -layout.torque_coeff * f_bar
            - layout.all().map(|p| skew(&p.position()) * wt).sum::<Vec3>()
            - skew(&body.r_s) * ws;
        let t = Vec3::new(w[3], w[4], w[5]);
        assert!((t - Vec3::new(0.0, 0.0, 1.0) - terms).norm() < 1e-12);

        layout.thruster_mass = 0.0;
        let mut light = body.clone();
        light.gravity = 0.0;
        let w = required_wrench(&zero, &light, &layout);
        assert_eq!(w, Vec6::zeros());
    }

    #[test]
    fn redistribution_example() {
        let (m, aux) = reference_map();
        let aug = AugmentedMap::new(m.clone(), aux.column()).unwrap();
        let l6 = [1.0, 1.0, 1.0, 1.0, 1.0, -2.0];
        let l7 = aug.redistribute(&l6);
        assert_eq!(l7, vec![3.0, 3.0, 3.0, 3.0, 3.0, 0.0, 2.0]);
        assert!((aug.augmented().apply(&l7) - m.apply(&l6)).amax() < 1e-9);
        assert_eq!(redistribute(&[1.0, 2.0, 0.0]), vec![1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn augmented_map_rejects_wrong_column() {
        let (m, aux) = reference_map();
        assert!(AugmentedMap::new(m, aux.column() * 1.01).is_err());
    }

    #[test]
    fn saturation_flags() {
        assert_eq!(check_saturation(&[28.0], 28.0), vec![Saturation::AtLimit]);
        assert_eq!(check_saturation(&[0.0, 0.0], 28.0), vec![Saturation::Ok; 2]);
        match check_saturation(&[30.0], 28.0)[0] {
            Saturation::OverLimit { excess } => assert!((excess - 2.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert!(matches!(check_saturation(&[-1.0], 28.0)[0], Saturation::Negative { .. }));
    }

    #[test]
    fn all_sign_patterns() {
        let (m, aux) = reference_map();
        let aug = AugmentedMap::new(m.clone(), aux.column()).unwrap();
        for bits in 0..64u32 {
            let l6: Vec<f64> = (0..6).map(|i| if bits >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let l7 = aug.redistribute(&l6);
            assert!(l7.iter().all(|&x| x >= 0.0));
            assert!((aug.augmented().apply(&l7) - m.apply(&l6)).amax() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn redistribution_preserves_wrench(l6 in proptest::collection::vec(-28.0f64..28.0, 6)) {
            let (m, aux) = reference_map();
            let aug = AugmentedMap::new(m.clone(), aux.column()).unwrap();
            let l7 = aug.redistribute(&l6);
            prop_assert!(l7.iter().all(|&x| x >= 0.0));
            prop_assert!((aug.augmented().apply(&l7) - m.apply(&l6)).amax() < 1e-9);
        }

        #[test]
        fn redistribution_identity_on_nonnegative(l6 in proptest::collection::vec(0.0f64..28.0, 6)) {
            let l7 = redistribute(&l6);
            prop_assert_eq!(&l7[..6], &l6[..]);
            prop_assert_eq!(l7[6], 0.0);
        }

        #[test]
        fn singular_values_rotation_invariant(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, angle in 0.0f64..3.0) {
            let (m, _) = reference_map();
            let axis = Vec3::new(ax, ay, az);
            prop_assume!(axis.norm() > 1e-3);
            let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            let cols: Vec<Vec6> = (0..6).map(|i| {
                let c = m.column(i);
                let f = rot * Vec3::new(c[0], c[1], c[2]);
                let t = rot * Vec3::new(c[3], c[4], c[5]);
                Vec6::new(f.x, f.y, f.z, t.x, t.y, t.z)
            }).collect();
            let rotated = WrenchMap::from_columns(&cols);
            prop_assert!((rotated.singular_values() - m.singular_values()).amax() < 1e-9);
        }
    }
}
