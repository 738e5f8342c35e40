//! Car-following acceleration laws.
//!
//! Every law is a function of spacing `s` (gap from front bumper to the
//! leader's rear bumper), relative speed `dv = v_leader - v` and own speed
//! `v`. Note the sign of `dv`: it is positive when the leader pulls away,
//! which is the opposite of the approach-rate convention common in IDM
//! write-ups.
//!
//! Values returned here are raw model outputs. Acceleration and speed limits
//! are applied by the simulation engine.

use serde::{Deserialize, Serialize};

use crate::dsl::{AttackSpec, EvalError, InjectionMode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("non-positive spacing {s} m (vehicles overlap)")]
    NonPositiveSpacing { s: f64 },
    #[error("attack function evaluation failed: {0}")]
    AttackEval(#[from] EvalError),
    #[error("invalid parameter `{name}` = {value}: must be finite and strictly positive")]
    InvalidParameter { name: &'static str, value: f64 },
}

fn check_positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value })
    }
}

/// Intelligent driver model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdmParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Desired time gap (s).
    pub time_gap: f64,
    /// Minimum standstill spacing (m).
    pub s0: f64,
    /// Maximum acceleration (m/s²).
    pub a: f64,
    /// Comfortable deceleration (m/s²).
    pub b: f64,
    /// Vehicle length (m).
    pub length: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0: 30.0,
            time_gap: 1.5,
            s0: 2.0,
            a: 1.4,
            b: 2.0,
            length: 5.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_positive("v0", self.v0)?;
        check_positive("time_gap", self.time_gap)?;
        check_positive("s0", self.s0)?;
        check_positive("a", self.a)?;
        check_positive("b", self.b)?;
        check_positive("length", self.length)
    }

    /// Desired dynamic gap `s*` and whether its interaction term is active.
    /// At the kink the active branch is reported.
    fn desired_gap(&self, dv: f64, v: f64) -> (f64, bool) {
        let interaction = v * self.time_gap - v * dv / (2.0 * (self.a * self.b).sqrt());
        if interaction >= 0.0 {
            (self.s0 + interaction, true)
        } else {
            (self.s0, false)
        }
    }
}

/// Optimal-velocity-with-relative-velocity ACC parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OvrvParams {
    /// Gain on the spacing error (1/s²).
    pub k1: f64,
    /// Gain on relative speed (1/s).
    pub k2: f64,
    /// Jam distance, the spacing at rest (m).
    pub eta: f64,
    /// Desired time gap (s).
    pub tau: f64,
    /// Vehicle length (m).
    pub length: f64,
}

impl Default for OvrvParams {
    fn default() -> Self {
        Self {
            k1: 0.02,
            k2: 0.13,
            eta: 21.51,
            tau: 1.71,
            length: 5.0,
        }
    }
}

impl OvrvParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_positive("k1", self.k1)?;
        check_positive("k2", self.k2)?;
        check_positive("eta", self.eta)?;
        check_positive("tau", self.tau)?;
        check_positive("length", self.length)
    }
}

/// Dynamic state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Front bumper position (m).
    pub x: f64,
    /// Speed (m/s).
    pub v: f64,
}

impl VehicleState {
    pub fn new(x: f64, v: f64) -> Self {
        Self { x, v }
    }
}

/// Gap between `follower`'s front bumper and the rear bumper of `leader`.
pub fn spacing(leader: &VehicleState, leader_length: f64, follower: &VehicleState) -> f64 {
    leader.x - follower.x - leader_length
}

/// Relative speed `v_leader - v_follower`.
pub fn relative_speed(leader: &VehicleState, follower: &VehicleState) -> f64 {
    leader.v - follower.v
}

/// Speed profile followed by the platoon leader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedProfile {
    Constant(f64),
}

impl SpeedProfile {
    pub fn speed_at(&self, _t: f64) -> f64 {
        match self {
            SpeedProfile::Constant(v) => *v,
        }
    }

    /// Position at `t` for a leader that was at `x0` at `t = 0`.
    pub fn position_at(&self, x0: f64, t: f64) -> f64 {
        match self {
            SpeedProfile::Constant(v) => x0 + v * t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VehicleKind {
    Leader {
        profile: SpeedProfile,
        length: f64,
    },
    Hdv(IdmParams),
    Acc {
        params: OvrvParams,
        attack: Option<AttackSpec>,
    },
}

/// Static description of one platoon member. `id` is 1-based; the leader
/// is vehicle 1.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub id: usize,
    pub kind: VehicleKind,
}

impl VehicleSpec {
    pub fn length(&self) -> f64 {
        match &self.kind {
            VehicleKind::Leader { length, .. } => *length,
            VehicleKind::Hdv(p) => p.length,
            VehicleKind::Acc { params, .. } => params.length,
        }
    }

    pub fn attack(&self) -> Option<&AttackSpec> {
        match &self.kind {
            VehicleKind::Acc { attack, .. } => attack.as_ref(),
            _ => None,
        }
    }

    pub fn is_leader(&self) -> bool {
        matches!(self.kind, VehicleKind::Leader { .. })
    }
}

/// IDM acceleration. Fails for `s <= 0`.
pub fn idm_accel(p: &IdmParams, s: f64, dv: f64, v: f64) -> Result<f64, ModelError> {
    if !(s > 0.0) {
        return Err(ModelError::NonPositiveSpacing { s });
    }
    let (s_star, _) = p.desired_gap(dv, v);
    let ratio = s_star / s;
    Ok(p.a * (1.0 - (v / p.v0).powi(4) - ratio * ratio))
}

/// OVRV acceleration `k1 (s - eta - tau v) + k2 dv`.
pub fn ovrv_accel(p: &OvrvParams, s: f64, dv: f64, v: f64) -> f64 {
    p.k1 * (s - (p.eta + p.tau * v)) + p.k2 * dv
}

/// OVRV acceleration computed from attacked measurements. Outside the attack
/// window this is exactly [`ovrv_accel`].
pub fn attacked_ovrv_accel(
    p: &OvrvParams,
    atk: &AttackSpec,
    s: f64,
    dv: f64,
    v: f64,
    t: f64,
) -> Result<f64, ModelError> {
    if !atk.window.contains(t) {
        return Ok(ovrv_accel(p, s, dv, v));
    }
    let (s_seen, dv_seen) = atk.perceive(s, dv)?;
    Ok(ovrv_accel(p, s_seen, dv_seen, v))
}

/// Borrowed view of a car-following law, used for partial derivatives.
#[derive(Debug, Clone, Copy)]
pub enum FollowingModel<'a> {
    Idm(&'a IdmParams),
    Ovrv(&'a OvrvParams),
    AttackedOvrv(&'a OvrvParams, &'a AttackSpec),
}

impl<'a> FollowingModel<'a> {
    /// The law governing a non-leader vehicle, if any.
    pub fn of(spec: &'a VehicleSpec) -> Option<Self> {
        match &spec.kind {
            VehicleKind::Leader { .. } => None,
            VehicleKind::Hdv(p) => Some(FollowingModel::Idm(p)),
            VehicleKind::Acc {
                params,
                attack: Some(atk),
            } => Some(FollowingModel::AttackedOvrv(params, atk)),
            VehicleKind::Acc {
                params,
                attack: None,
            } => Some(FollowingModel::Ovrv(params)),
        }
    }

    pub fn accel(&self, s: f64, dv: f64, v: f64, t: f64) -> Result<f64, ModelError> {
        match self {
            FollowingModel::Idm(p) => idm_accel(p, s, dv, v),
            FollowingModel::Ovrv(p) => Ok(ovrv_accel(p, s, dv, v)),
            FollowingModel::AttackedOvrv(p, atk) => attacked_ovrv_accel(p, atk, s, dv, v, t),
        }
    }
}

/// Partial derivatives of the acceleration law with respect to spacing,
/// relative speed and own speed. Rational driving requires
/// `beta1 > 0`, `beta2 > 0`, `beta3 < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdcPartials {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

pub fn rdc_partials(
    model: FollowingModel<'_>,
    s: f64,
    dv: f64,
    v: f64,
    t: f64,
) -> Result<RdcPartials, ModelError> {
    match model {
        FollowingModel::Idm(p) => idm_partials(p, s, dv, v),
        FollowingModel::Ovrv(p) => Ok(ovrv_partials(p)),
        FollowingModel::AttackedOvrv(p, atk) => {
            if !atk.window.contains(t) {
                return Ok(ovrv_partials(p));
            }
            let d1 = atk.dg1().eval(s)?;
            let d2 = atk.dg2().eval(dv)?;
            let (m1, m2) = match atk.mode {
                InjectionMode::Additive => (1.0 + d1, 1.0 + d2),
                InjectionMode::Multiplicative => {
                    (atk.g1().eval(s)? + s * d1, atk.g2().eval(dv)? + dv * d2)
                }
            };
            Ok(RdcPartials {
                beta1: p.k1 * m1,
                beta2: p.k2 * m2,
                beta3: -p.tau * p.k1,
            })
        }
    }
}

fn ovrv_partials(p: &OvrvParams) -> RdcPartials {
    RdcPartials {
        beta1: p.k1,
        beta2: p.k2,
        beta3: -p.tau * p.k1,
    }
}

fn idm_partials(p: &IdmParams, s: f64, dv: f64, v: f64) -> Result<RdcPartials, ModelError> {
    if !(s > 0.0) {
        return Err(ModelError::NonPositiveSpacing { s });
    }
    let (s_star, active) = p.desired_gap(dv, v);
    let sqrt_ab = (p.a * p.b).sqrt();
    // ds*/d(dv) and ds*/dv; both vanish on the clamped branch.
    let (dstar_ddv, dstar_dv) = if active {
        (-v / (2.0 * sqrt_ab), p.time_gap - dv / (2.0 * sqrt_ab))
    } else {
        (0.0, 0.0)
    };
    let common = 2.0 * p.a * s_star / (s * s);
    Ok(RdcPartials {
        beta1: common * s_star / s,
        beta2: -common * dstar_ddv,
        beta3: -4.0 * p.a * v.powi(3) / p.v0.powi(4) - common * dstar_dv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::AttackWindow;

    fn window() -> AttackWindow {
        AttackWindow::new(50.0, 80.0).unwrap()
    }

    fn additive(g1: &str, g2: &str) -> AttackSpec {
        AttackSpec::parse(g1, g2, InjectionMode::Additive, window()).unwrap()
    }

    /// Equilibrium spacing of the default IDM at 21 m/s, from bisection on
    /// the acceleration law (see `idm_equilibrium_by_bisection`).
    const IDM_S_EQ_21: f64 = 38.429_663_773_844_8;

    #[test]
    fn idm_equilibrium_by_bisection() {
        let p = IdmParams::default();
        let (mut lo, mut hi) = (p.s0 + 1e-9, 500.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if idm_accel(&p, mid, 0.0, 21.0).unwrap() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        assert!((s - 38.4297).abs() < 1e-4, "{s}");
        assert!((s - IDM_S_EQ_21).abs() < 1e-9, "{s}");
    }

    #[test]
    fn idm_examples() {
        let p = IdmParams::default();
        assert_eq!(idm_accel(&p, 2.0, 0.0, 0.0).unwrap(), 0.0);
        assert!(idm_accel(&p, 38.4297, 0.0, 21.0).unwrap().abs() < 1e-3);
        assert!(idm_accel(&p, 38.4297, -5.0, 21.0).unwrap() < 0.0);
    }

    #[test]
    fn idm_rejects_non_positive_spacing() {
        let p = IdmParams::default();
        assert!(matches!(
            idm_accel(&p, 0.0, 0.0, 10.0),
            Err(ModelError::NonPositiveSpacing { .. })
        ));
        assert!(idm_accel(&p, -1.0, 0.0, 10.0).is_err());
    }

    #[test]
    fn ovrv_examples() {
        let p = OvrvParams::default();
        assert!(ovrv_accel(&p, 57.42, 0.0, 21.0).abs() < 1e-12);
        assert!((ovrv_accel(&p, 60.0, 0.0, 21.0) - 0.0516).abs() < 1e-12);
        assert!((ovrv_accel(&p, 57.42, 1.0, 21.0) - 0.13).abs() < 1e-12);
    }

    #[test]
    fn attacked_ovrv_examples() {
        let p = OvrvParams::default();
        let atk = additive("-s", "-dv");
        let a = attacked_ovrv_accel(&p, &atk, 57.42, 0.0, 21.0, 60.0).unwrap();
        assert!((a - (-1.1484)).abs() < 1e-12, "{a}");

        let outside = attacked_ovrv_accel(&p, &atk, 60.0, 1.0, 21.0, 10.0).unwrap();
        assert_eq!(outside, ovrv_accel(&p, 60.0, 1.0, 21.0));

        let mul =
            AttackSpec::parse("1/s + 0.5", "1", InjectionMode::Multiplicative, window()).unwrap();
        let a = attacked_ovrv_accel(&p, &mul, 57.42, 0.0, 21.0, 60.0).unwrap();
        assert!((a - (-0.5542)).abs() < 1e-12, "{a}");
    }

    #[test]
    fn attack_evaluation_error_is_distinct() {
        let p = OvrvParams::default();
        let atk = AttackSpec::parse("1/s", "1", InjectionMode::Multiplicative, window()).unwrap();
        assert!(matches!(
            attacked_ovrv_accel(&p, &atk, 0.0, 0.0, 21.0, 60.0),
            Err(ModelError::AttackEval(EvalError::DivisionByZero { .. }))
        ));
    }

    #[test]
    fn ovrv_partial_examples() {
        let p = OvrvParams::default();
        let r = rdc_partials(FollowingModel::Ovrv(&p), 10.0, 3.0, 20.0, 0.0).unwrap();
        assert_eq!(r.beta1, 0.02);
        assert_eq!(r.beta2, 0.13);
        assert!((r.beta3 - (-0.0342)).abs() < 1e-15);

        let atk = additive("-0.9*s", "-0.9*dv");
        let r = rdc_partials(
            FollowingModel::AttackedOvrv(&p, &atk),
            40.0,
            1.0,
            20.0,
            60.0,
        )
        .unwrap();
        assert!((r.beta1 - 0.002).abs() < 1e-15);
        assert!((r.beta2 - 0.013).abs() < 1e-15);
        assert!((r.beta3 - (-0.0342)).abs() < 1e-15);
    }

    #[test]
    fn multiplicative_partials() {
        let p = OvrvParams::default();
        let atk =
            AttackSpec::parse("1/s + 0.5", "1", InjectionMode::Multiplicative, window()).unwrap();
        let r = rdc_partials(
            FollowingModel::AttackedOvrv(&p, &atk),
            12.0,
            -2.0,
            20.0,
            60.0,
        )
        .unwrap();
        assert!((r.beta1 - 0.01).abs() < 1e-15);
        assert_eq!(r.beta2, 0.13);
    }

    #[test]
    fn idm_partials_sign_at_equilibrium() {
        let p = IdmParams::default();
        let r = rdc_partials(FollowingModel::Idm(&p), 38.4297, 0.0, 21.0, 0.0).unwrap();
        assert!(r.beta1 > 0.0 && r.beta2 > 0.0 && r.beta3 < 0.0, "{r:?}");
    }

    #[test]
    fn idm_kink_uses_active_branch() {
        let p = IdmParams::default();
        // vT - v dv / (2 sqrt(ab)) = 0  <=>  dv = 2 T sqrt(ab)
        let dv_kink = 2.0 * p.time_gap * (p.a * p.b).sqrt();
        let v = 20.0;
        let at = idm_partials(&p, 30.0, dv_kink, v).unwrap();
        let below = idm_partials(&p, 30.0, dv_kink - 1e-9, v).unwrap();
        assert!((at.beta2 - below.beta2).abs() < 1e-9);
        assert!(at.beta2 > 0.0);
    }

    #[test]
    fn default_params_are_valid() {
        assert!(IdmParams::default().validate().is_ok());
        assert!(OvrvParams::default().validate().is_ok());
        let bad = OvrvParams {
            k1: -0.02,
            ..OvrvParams::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(ModelError::InvalidParameter { name: "k1", .. })
        ));
    }
}
