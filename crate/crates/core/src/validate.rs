//! Membership checks for the stealthy attack sets.
//!
//! An additive attack is stealthy-malicious when both derivatives stay in
//! `[-1, 0]`: the attacked controller remains rational (`1 + g' >= 0`) but is
//! never more responsive than the genuine one (`g' <= 0`). A multiplicative
//! attack is admissible when `q = g + x g'` lies in `(0, 1]` for each channel.
//!
//! The conditions are checked on a uniform grid over a measurement domain,
//! so a verdict is sound only up to grid resolution.

use serde::{Deserialize, Serialize};

use crate::dsl::{AttackSpec, EvalError, Expr, InjectionMode};

/// Numerical slack on the closed boundaries `g' = -1`, `g' = 0` and `q = 1`.
pub const BOUNDARY_SLACK: f64 = 1e-9;
/// Cap on the number of violating samples kept in a report.
pub const MAX_REPORTED_VIOLATIONS: usize = 10;
pub const MIN_GRID_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("spacing range must satisfy 0 < s_min < s_max, got [{0}, {1}]")]
    Spacing(f64, f64),
    #[error("relative-speed range must satisfy dv_min < dv_max, got [{0}, {1}]")]
    RelativeSpeed(f64, f64),
    #[error("grid needs at least {MIN_GRID_POINTS} points per axis, got {0}")]
    Grid(usize),
}

/// Measurement ranges over which the set conditions are checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementDomain {
    pub s_range: (f64, f64),
    pub dv_range: (f64, f64),
    pub grid_points: usize,
}

impl Default for MeasurementDomain {
    fn default() -> Self {
        Self {
            s_range: (0.5, 200.0),
            dv_range: (-30.0, 30.0),
            grid_points: 2001,
        }
    }
}

impl MeasurementDomain {
    pub fn new(
        s_range: (f64, f64),
        dv_range: (f64, f64),
        grid_points: usize,
    ) -> Result<Self, DomainError> {
        let dom = Self {
            s_range,
            dv_range,
            grid_points,
        };
        dom.validate()?;
        Ok(dom)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let (s_lo, s_hi) = self.s_range;
        if !(s_lo.is_finite() && s_hi.is_finite() && s_lo > 0.0 && s_lo < s_hi) {
            return Err(DomainError::Spacing(s_lo, s_hi));
        }
        let (d_lo, d_hi) = self.dv_range;
        if !(d_lo.is_finite() && d_hi.is_finite() && d_lo < d_hi) {
            return Err(DomainError::RelativeSpeed(d_lo, d_hi));
        }
        if self.grid_points < MIN_GRID_POINTS {
            return Err(DomainError::Grid(self.grid_points));
        }
        Ok(())
    }

    fn grid(range: (f64, f64), n: usize) -> impl Iterator<Item = f64> {
        let (lo, hi) = range;
        let last = (n - 1) as f64;
        (0..n).map(move |k| {
            if k == n - 1 {
                hi
            } else {
                lo + (hi - lo) * (k as f64) / last
            }
        })
    }
}

/// Which attack family a report was checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackSet {
    /// Additive family, `-1 <= g' <= 0`.
    #[serde(rename = "C")]
    Additive,
    /// Multiplicative family, `0 < g + x g' <= 1`.
    #[serde(rename = "D")]
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Admissible,
    Inadmissible,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Spacing,
    RelativeSpeed,
}

/// Range of the tested quantity over one channel's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub channel: Channel,
    /// Human-readable name of the checked quantity, e.g. `g1'`.
    pub quantity: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub channel: Channel,
    pub x: f64,
    /// Value of the tested quantity, absent when evaluation failed.
    pub value: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub set: AttackSet,
    pub verdict: Verdict,
    pub channels: Vec<ChannelSummary>,
    /// First violating samples, at most [`MAX_REPORTED_VIOLATIONS`].
    pub violations: Vec<SamplePoint>,
    pub violation_count: usize,
    /// First point where evaluation failed, if any.
    pub failure: Option<SamplePoint>,
}

/// Checks an additive attack against `-1 <= g' <= 0` on both channels.
pub fn check_additive(atk: &AttackSpec, dom: &MeasurementDomain) -> AdmissibilityReport {
    debug_assert_eq!(atk.mode, InjectionMode::Additive);
    let in_bounds = |d: f64| (-1.0 - BOUNDARY_SLACK..=BOUNDARY_SLACK).contains(&d);
    // g itself must be defined too: the controller evaluates it.
    let quantity = |g: &Expr, dg: &Expr, x: f64| {
        g.eval(x)?;
        dg.eval(x)
    };
    run_check(
        AttackSet::Additive,
        atk,
        dom,
        ["g1'", "g2'"],
        quantity,
        in_bounds,
        "derivative outside [-1, 0]",
    )
}

/// Checks a multiplicative attack against `0 < g + x g' <= 1` on both
/// channels.
pub fn check_multiplicative(atk: &AttackSpec, dom: &MeasurementDomain) -> AdmissibilityReport {
    debug_assert_eq!(atk.mode, InjectionMode::Multiplicative);
    let in_bounds = |q: f64| q > 0.0 && q <= 1.0 + BOUNDARY_SLACK;
    let quantity = |g: &Expr, dg: &Expr, x: f64| Ok(g.eval(x)? + x * dg.eval(x)?);
    run_check(
        AttackSet::Multiplicative,
        atk,
        dom,
        ["g1 + s*g1'", "g2 + dv*g2'"],
        quantity,
        in_bounds,
        "g + x*g' outside (0, 1]",
    )
}

/// Dispatches on the attack's injection mode.
pub fn classify(atk: &AttackSpec, dom: &MeasurementDomain) -> AdmissibilityReport {
    match atk.mode {
        InjectionMode::Additive => check_additive(atk, dom),
        InjectionMode::Multiplicative => check_multiplicative(atk, dom),
    }
}

fn run_check(
    set: AttackSet,
    atk: &AttackSpec,
    dom: &MeasurementDomain,
    names: [&str; 2],
    quantity: impl Fn(&Expr, &Expr, f64) -> Result<f64, EvalError>,
    in_bounds: impl Fn(f64) -> bool,
    violation_note: &str,
) -> AdmissibilityReport {
    let channels = [
        (Channel::Spacing, atk.g1(), atk.dg1(), dom.s_range),
        (Channel::RelativeSpeed, atk.g2(), atk.dg2(), dom.dv_range),
    ];
    let mut summaries = Vec::with_capacity(2);
    let mut violations = Vec::new();
    let mut violation_count = 0;
    let mut failure = None;

    for ((channel, g, dg, range), name) in channels.into_iter().zip(names) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for x in MeasurementDomain::grid(range, dom.grid_points) {
            match quantity(g, dg, x) {
                Ok(q) => {
                    min = min.min(q);
                    max = max.max(q);
                    if !in_bounds(q) {
                        violation_count += 1;
                        if violations.len() < MAX_REPORTED_VIOLATIONS {
                            violations.push(SamplePoint {
                                channel,
                                x,
                                value: Some(q),
                                note: violation_note.to_string(),
                            });
                        }
                    }
                }
                Err(e) => {
                    if failure.is_none() {
                        failure = Some(SamplePoint {
                            channel,
                            x,
                            value: None,
                            note: e.to_string(),
                        });
                    }
                }
            }
        }
        summaries.push(ChannelSummary {
            channel,
            quantity: name.to_string(),
            min,
            max,
        });
    }

    let verdict = if violation_count > 0 {
        Verdict::Inadmissible
    } else if failure.is_some() {
        Verdict::Inconclusive
    } else {
        Verdict::Admissible
    };
    AdmissibilityReport {
        set,
        verdict,
        channels: summaries,
        violations,
        violation_count,
        failure,
    }
}
