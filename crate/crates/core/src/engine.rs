//! Fixed-step platoon integration.
//!
//! All followers are advanced together with classical fourth-order
//! Runge-Kutta. Inside every stage the model acceleration is clamped to
//! `[-decel_max, accel_max]` and cut to zero where it would push the speed
//! outside `[0, v_max]`; after each step speeds are clamped to the same
//! range. The leader is not integrated: it follows its speed profile exactly.
//!
//! Attack windows are snapped to the step grid and the attack regime is held
//! fixed over a step at its value at the step start, so no step is partly
//! attacked.

use serde::{Deserialize, Serialize};

use crate::dsl::{AttackSpec, AttackWindow};
use crate::model::{
    FollowingModel, IdmParams, ModelError, OvrvParams, SpeedProfile, VehicleKind, VehicleSpec,
    VehicleState,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error("no IDM equilibrium spacing at v = {v} m/s (desired speed {v0} m/s)")]
    NoEquilibrium { v: f64, v0: f64 },
    #[error("vehicle {vehicle} has no equilibrium spacing (it is the leader)")]
    LeaderHasNoSpacing { vehicle: usize },
    #[error("vehicle {vehicle} at t = {t} s: {source}")]
    Model {
        vehicle: usize,
        t: f64,
        source: ModelError,
    },
    #[error("vehicle {vehicle} reached a non-finite state at t = {t} s (x = {x}, v = {v})")]
    NonFinite {
        vehicle: usize,
        t: f64,
        x: f64,
        v: f64,
    },
}

/// A platoon simulation setup. Vehicle 1 (index 0) leads.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub vehicles: Vec<VehicleSpec>,
    /// Integration step (s).
    pub dt: f64,
    /// End of the horizon `[0, t_end]` (s).
    pub t_end: f64,
    /// Initial speed of every vehicle (m/s).
    pub v_star: f64,
    /// Acceleration limit (m/s²).
    pub accel_max: f64,
    /// Deceleration limit as a positive magnitude (m/s²).
    pub decel_max: f64,
    /// Speed limit (m/s).
    pub v_max: f64,
}

pub const DEFAULT_DT: f64 = 0.05;

impl Scenario {
    /// Ten-vehicle mixed string: a constant-speed leader, one ACC vehicle in
    /// second position, and eight IDM drivers behind it. `attack`, if given,
    /// targets the ACC vehicle.
    pub fn reference_platoon(attack: Option<AttackSpec>) -> Self {
        let v_star = 21.0;
        let mut vehicles = vec![
            VehicleSpec {
                id: 1,
                kind: VehicleKind::Leader {
                    profile: SpeedProfile::Constant(v_star),
                    length: 5.0,
                },
            },
            VehicleSpec {
                id: 2,
                kind: VehicleKind::Acc {
                    params: OvrvParams::default(),
                    attack,
                },
            },
        ];
        vehicles.extend((3..=10).map(|id| VehicleSpec {
            id,
            kind: VehicleKind::Hdv(IdmParams::default()),
        }));
        Self {
            vehicles,
            dt: DEFAULT_DT,
            t_end: 200.0,
            v_star,
            accel_max: 1.4,
            decel_max: 2.5,
            v_max: 30.0,
        }
    }

    /// Number of integration steps covering the horizon.
    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), EngineError> {
        let mut errs = Vec::new();
        let n = self.vehicles.len();
        if n < 2 {
            errs.push(format!("need at least 2 vehicles, got {n}"));
        }
        let positive = [
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("accel_max", self.accel_max),
            ("decel_max", self.decel_max),
            ("v_max", self.v_max),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                errs.push(format!("{name} must be finite and positive, got {value}"));
            }
        }
        if !(self.v_star.is_finite() && self.v_star >= 0.0 && self.v_star <= self.v_max) {
            errs.push(format!(
                "v_star must lie in [0, v_max = {}], got {}",
                self.v_max, self.v_star
            ));
        }
        if self.dt > 0.0 && self.t_end > 0.0 {
            let steps = self.t_end / self.dt;
            if (steps - steps.round()).abs() > 1e-6 {
                errs.push(format!(
                    "t_end = {} is not a whole number of steps of dt = {}",
                    self.t_end, self.dt
                ));
            }
        }
        for (idx, veh) in self.vehicles.iter().enumerate() {
            if veh.id != idx + 1 {
                errs.push(format!(
                    "vehicle at position {} has id {}, expected {}",
                    idx + 1,
                    veh.id,
                    idx + 1
                ));
            }
            match (&veh.kind, idx) {
                (VehicleKind::Leader { profile, length }, 0) => {
                    if !(length.is_finite() && *length > 0.0) {
                        errs.push(format!("leader length must be positive, got {length}"));
                    }
                    if profile.speed_at(0.0) != self.v_star {
                        errs.push(format!(
                            "leader starts at {} m/s but v_star is {}",
                            profile.speed_at(0.0),
                            self.v_star
                        ));
                    }
                }
                (VehicleKind::Leader { .. }, _) => errs.push(format!(
                    "vehicle {} is a leader; only vehicle 1 may lead",
                    veh.id
                )),
                (_, 0) => errs.push("vehicle 1 must be the leader".to_string()),
                (VehicleKind::Hdv(p), _) => {
                    if let Err(e) = p.validate() {
                        errs.push(format!("vehicle {}: {e}", veh.id));
                    }
                }
                (VehicleKind::Acc { params, attack }, _) => {
                    if let Err(e) = params.validate() {
                        errs.push(format!("vehicle {}: {e}", veh.id));
                    }
                    if let Some(atk) = attack {
                        let w = atk.window;
                        if w.t_on < 0.0 || w.t_off > self.t_end || w.t_on >= w.t_off {
                            errs.push(format!(
                                "vehicle {}: attack window [{}, {}] not inside horizon [0, {}]",
                                veh.id, w.t_on, w.t_off, self.t_end
                            ));
                        }
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(EngineError::InvalidScenario(errs))
        }
    }

    /// Copy of the scenario with every attack window moved to the nearest
    /// step boundaries.
    pub fn snapped(&self) -> Scenario {
        let mut sc = self.clone();
        let dt = sc.dt;
        for veh in &mut sc.vehicles {
            if let VehicleKind::Acc {
                attack: Some(atk), ..
            } = &mut veh.kind
            {
                atk.window = AttackWindow {
                    t_on: snap(atk.window.t_on, dt),
                    t_off: snap(atk.window.t_off, dt),
                };
            }
        }
        sc
    }
}

fn snap(t: f64, dt: f64) -> f64 {
    (t / dt).round() * dt
}

/// Spacing at which the law's acceleration vanishes for `dv = 0` at speed
/// `v`. Attacked ACC vehicles use their genuine OVRV law.
pub fn equilibrium_spacing(model: FollowingModel<'_>, v: f64) -> Result<f64, EngineError> {
    match model {
        FollowingModel::Idm(p) => {
            if !(v >= 0.0 && v < p.v0) {
                return Err(EngineError::NoEquilibrium { v, v0: p.v0 });
            }
            let s_star = p.s0 + v * p.time_gap;
            Ok(s_star / (1.0 - (v / p.v0).powi(4)).sqrt())
        }
        FollowingModel::Ovrv(p) | FollowingModel::AttackedOvrv(p, _) => Ok(p.eta + p.tau * v),
    }
}

/// Initial states: everyone at `v_star`, leader at `x = 0`, each follower at
/// its equilibrium spacing behind the vehicle ahead.
pub fn init_platoon(sc: &Scenario) -> Result<Vec<VehicleState>, EngineError> {
    let mut states = Vec::with_capacity(sc.vehicles.len());
    for (idx, veh) in sc.vehicles.iter().enumerate() {
        if idx == 0 {
            states.push(VehicleState::new(0.0, sc.v_star));
            continue;
        }
        let model =
            FollowingModel::of(veh).ok_or(EngineError::LeaderHasNoSpacing { vehicle: veh.id })?;
        let gap = equilibrium_spacing(model, sc.v_star)?;
        let ahead = &states[idx - 1];
        let x = ahead.x - sc.vehicles[idx - 1].length() - gap;
        states.push(VehicleState::new(x, sc.v_star));
    }
    Ok(states)
}

/// First time a follower's spacing dropped to zero or below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub follower: usize,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackMarker {
    pub vehicle: usize,
    pub t_on: f64,
    pub t_off: f64,
}

/// Sampled simulation output. Series are indexed `[vehicle][step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub vehicle_ids: Vec<usize>,
    pub lengths: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub speeds: Vec<Vec<f64>>,
    /// Applied (clamped) acceleration at each sample.
    pub accels: Vec<Vec<f64>>,
    pub collisions: Vec<CollisionEvent>,
    /// Samples at which the model acceleration had to be clamped, per vehicle.
    pub clamp_counts: Vec<usize>,
    pub attack_windows: Vec<AttackMarker>,
}

impl Trajectory {
    fn with_capacity(sc: &Scenario, samples: usize) -> Self {
        let n = sc.vehicles.len();
        let series = || vec![Vec::with_capacity(samples); n];
        Self {
            dt: sc.dt,
            times: Vec::with_capacity(samples),
            vehicle_ids: sc.vehicles.iter().map(|v| v.id).collect(),
            lengths: sc.vehicles.iter().map(VehicleSpec::length).collect(),
            positions: series(),
            speeds: series(),
            accels: series(),
            collisions: Vec::new(),
            clamp_counts: vec![0; n],
            attack_windows: sc
                .vehicles
                .iter()
                .filter_map(|v| {
                    v.attack().map(|a| AttackMarker {
                        vehicle: v.id,
                        t_on: a.window.t_on,
                        t_off: a.window.t_off,
                    })
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicle_ids.len()
    }

    /// Index of vehicle `id` in the series.
    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.vehicle_ids.iter().position(|&v| v == id)
    }

    pub fn has_collision(&self) -> bool {
        !self.collisions.is_empty()
    }

    /// Spacing of the vehicle at `idx` (> 0) at sample `k`.
    pub fn spacing(&self, idx: usize, k: usize) -> f64 {
        self.positions[idx - 1][k] - self.positions[idx][k] - self.lengths[idx - 1]
    }

    /// State of every vehicle at sample `k`.
    pub fn states_at(&self, k: usize) -> Vec<VehicleState> {
        (0..self.vehicle_count())
            .map(|i| VehicleState::new(self.positions[i][k], self.speeds[i][k]))
            .collect()
    }

    fn push(&mut self, t: f64, states: &[VehicleState], accels: &[Applied]) {
        self.times.push(t);
        for (i, (st, a)) in states.iter().zip(accels).enumerate() {
            self.positions[i].push(st.x);
            self.speeds[i].push(st.v);
            self.accels[i].push(a.value);
            if a.clamped {
                self.clamp_counts[i] += 1;
            }
        }
        let k = self.times.len() - 1;
        for i in 1..states.len() {
            let id = self.vehicle_ids[i];
            if self.spacing(i, k) <= 0.0 && !self.collisions.iter().any(|c| c.follower == id) {
                self.collisions.push(CollisionEvent { follower: id, t });
            }
        }
    }
}

/// Simulation failure carrying everything computed before the failing step.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("simulation failed: {source}")]
pub struct SimulationFailure {
    pub partial: Box<Trajectory>,
    pub source: EngineError,
}

#[derive(Debug, Clone, Copy, Default)]
struct Applied {
    value: f64,
    clamped: bool,
}

/// Clamped acceleration actually applied to vehicle `idx` given the stage
/// states. `t` is the stage time and `t_regime` the time that decides
/// whether attacks are active.
fn applied_accel(
    sc: &Scenario,
    idx: usize,
    states: &[VehicleState],
    t_regime: f64,
) -> Result<Applied, EngineError> {
    let veh = &sc.vehicles[idx];
    let Some(model) = FollowingModel::of(veh) else {
        return Ok(Applied::default());
    };
    let me = states[idx];
    let ahead = states[idx - 1];
    let s = ahead.x - me.x - sc.vehicles[idx - 1].length();
    let dv = ahead.v - me.v;
    let raw = match (model, s > 0.0) {
        // An overlapped human driver brakes as hard as allowed.
        (FollowingModel::Idm(_), false) => -sc.decel_max,
        _ => model
            .accel(s, dv, me.v, t_regime)
            .map_err(|source| EngineError::Model {
                vehicle: veh.id,
                t: t_regime,
                source,
            })?,
    };
    if !raw.is_finite() {
        return Err(EngineError::NonFinite {
            vehicle: veh.id,
            t: t_regime,
            x: me.x,
            v: me.v,
        });
    }
    let mut value = raw.clamp(-sc.decel_max, sc.accel_max);
    if (me.v <= 0.0 && value < 0.0) || (me.v >= sc.v_max && value > 0.0) {
        value = 0.0;
    }
    Ok(Applied {
        value,
        clamped: value != raw,
    })
}

fn all_accels(
    sc: &Scenario,
    states: &[VehicleState],
    t_regime: f64,
) -> Result<Vec<Applied>, EngineError> {
    (0..states.len())
        .map(|i| applied_accel(sc, i, states, t_regime))
        .collect()
}

fn leader_state(sc: &Scenario, x0: f64, t: f64) -> VehicleState {
    match &sc.vehicles[0].kind {
        VehicleKind::Leader { profile, .. } => {
            VehicleState::new(profile.position_at(x0, t), profile.speed_at(t))
        }
        _ => unreachable!("scenario validated: vehicle 1 leads"),
    }
}

/// Advances all vehicles from `t` to `t + dt` with one RK4 step.
///
/// `leader_x0` is the leader's position at `t = 0`. Attack activity is
/// decided once, at `t`.
pub fn step(
    sc: &Scenario,
    states: &[VehicleState],
    t: f64,
    leader_x0: f64,
) -> Result<Vec<VehicleState>, EngineError> {
    let dt = sc.dt;
    let n = states.len();
    let v_eff = |v: f64| v.clamp(0.0, sc.v_max);

    // Derivatives (dx, dv) of every vehicle for a stage state at time ts.
    let derivs = |stage: &[VehicleState]| -> Result<Vec<(f64, f64)>, EngineError> {
        let acc = all_accels(sc, stage, t)?;
        Ok(stage
            .iter()
            .zip(acc)
            .map(|(s, a)| (v_eff(s.v), a.value))
            .collect())
    };
    let shifted = |base: &[VehicleState], k: &[(f64, f64)], h: f64, ts: f64| {
        let mut out: Vec<VehicleState> = base
            .iter()
            .zip(k)
            .map(|(s, d)| VehicleState::new(s.x + h * d.0, s.v + h * d.1))
            .collect();
        out[0] = leader_state(sc, leader_x0, ts);
        out
    };

    let mut s1 = states.to_vec();
    s1[0] = leader_state(sc, leader_x0, t);
    let k1 = derivs(&s1)?;
    let s2 = shifted(&s1, &k1, 0.5 * dt, t + 0.5 * dt);
    let k2 = derivs(&s2)?;
    let s3 = shifted(&s1, &k2, 0.5 * dt, t + 0.5 * dt);
    let k3 = derivs(&s3)?;
    let s4 = shifted(&s1, &k3, dt, t + dt);
    let k4 = derivs(&s4)?;

    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        if i == 0 {
            next.push(leader_state(sc, leader_x0, t + dt));
            continue;
        }
        let dx = (k1[i].0 + 2.0 * k2[i].0 + 2.0 * k3[i].0 + k4[i].0) / 6.0;
        let dvel = (k1[i].1 + 2.0 * k2[i].1 + 2.0 * k3[i].1 + k4[i].1) / 6.0;
        let x = s1[i].x + dt * dx;
        let v = (s1[i].v + dt * dvel).clamp(0.0, sc.v_max);
        if !(x.is_finite() && v.is_finite()) {
            return Err(EngineError::NonFinite {
                vehicle: sc.vehicles[i].id,
                t: t + dt,
                x,
                v,
            });
        }
        next.push(VehicleState::new(x, v));
    }
    Ok(next)
}

/// Runs the scenario over its horizon.
pub fn simulate(sc: &Scenario) -> Result<Trajectory, SimulationFailure> {
    let fail = |partial: Trajectory, source| SimulationFailure {
        partial: Box::new(partial),
        source,
    };
    let sc = sc.snapped();
    let steps = sc.step_count();
    let mut traj = Trajectory::with_capacity(&sc, steps + 1);
    if let Err(e) = sc.validate() {
        return Err(fail(traj, e));
    }
    let mut states = match init_platoon(&sc) {
        Ok(s) => s,
        Err(e) => return Err(fail(traj, e)),
    };
    let leader_x0 = states[0].x;

    for k in 0..=steps {
        let t = k as f64 * sc.dt;
        match all_accels(&sc, &states, t) {
            Ok(acc) => traj.push(t, &states, &acc),
            Err(e) => return Err(fail(traj, e)),
        }
        if k == steps {
            break;
        }
        states = match step(&sc, &states, t, leader_x0) {
            Ok(s) => s,
            Err(e) => return Err(fail(traj, e)),
        };
    }
    Ok(traj)
}
