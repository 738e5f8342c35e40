//! Traffic performance metrics: average speed variation and VT-Micro fuel.
//!
//! Both metrics integrate sampled series with the trapezoidal rule on the
//! trajectory's own time grid. Window endpoints that fall between samples
//! are handled by linear interpolation, so integrals are additive over
//! adjacent windows.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;

/// m/s to km/h, and m/s² to km/h/s.
pub const MS_TO_KMH: f64 = 3.6;

/// Applied accelerations smaller than this (m/s²) are integration round-off
/// and are fed to the fuel model as exactly zero, so that a steady vehicle
/// does not flip between the two regression branches.
pub const ACCEL_NOISE_FLOOR: f64 = 1e-9;

const LIGHT_DUTY: &str = include_str!("../data/vt_micro_light_duty.txt");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("window [{t1}, {t2}] is not inside the trajectory span [{start}, {end}]")]
    WindowOutsideTrajectory {
        t1: f64,
        t2: f64,
        start: f64,
        end: f64,
    },
    #[error("vehicle {0} is not part of the trajectory")]
    UnknownVehicle(usize),
    #[error("vehicle range {first}..={last} is empty or reversed")]
    BadVehicleRange { first: usize, last: usize },
    #[error("baseline value for {quantity} is zero; percentage change undefined")]
    ZeroBaseline { quantity: &'static str },
    #[error("reports cover different vehicles or windows")]
    Mismatch,
}

#[derive(Debug, thiserror::Error)]
pub enum CoefficientError {
    #[error("reading coefficient file: {0}")]
    Io(#[from] std::io::Error),
    #[error("coefficient file has no `# source:` header line")]
    MissingSource,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("section [{section}] has {rows} rows, expected 4")]
    Shape { section: char, rows: usize },
    #[error("section [{0}] is missing")]
    MissingSection(char),
}

/// Regression coefficients `K[p][q]` for speed power `p` and acceleration
/// power `q`. `positive` applies for `u >= 0`, `negative` for `u < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct VtMicroCoefficients {
    pub source: String,
    pub positive: [[f64; 4]; 4],
    pub negative: [[f64; 4]; 4],
}

impl VtMicroCoefficients {
    /// The bundled light-duty vehicle coefficients.
    pub fn light_duty() -> Self {
        LIGHT_DUTY
            .parse()
            .expect("bundled VT-Micro coefficient file is well formed")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CoefficientError> {
        std::fs::read_to_string(path)?.parse()
    }
}

impl FromStr for VtMicroCoefficients {
    type Err = CoefficientError;

    /// Parses `#` comment lines (one of which must start with `source:`),
    /// then an `[L]` and an `[M]` section of four whitespace-separated rows
    /// of four numbers each.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut source = None;
        let mut sections: [Vec<[f64; 4]>; 2] = [Vec::new(), Vec::new()];
        let mut seen = [false; 2];
        let mut current: Option<usize> = None;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(rest) = comment.strip_prefix("source:") {
                    source = Some(rest.trim().to_string());
                }
                continue;
            }
            match line {
                "[L]" | "[M]" => {
                    let idx = usize::from(line == "[M]");
                    if seen[idx] {
                        return Err(CoefficientError::Format {
                            line: line_no,
                            message: format!("duplicate section {line}"),
                        });
                    }
                    seen[idx] = true;
                    current = Some(idx);
                    continue;
                }
                _ => {}
            }
            let Some(idx) = current else {
                return Err(CoefficientError::Format {
                    line: line_no,
                    message: "numbers before any [L]/[M] section header".into(),
                });
            };
            let values = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| CoefficientError::Format {
                            line: line_no,
                            message: format!("`{tok}` is not a finite number"),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let row: [f64; 4] =
                values
                    .try_into()
                    .map_err(|v: Vec<f64>| CoefficientError::Format {
                        line: line_no,
                        message: format!("expected 4 values, found {}", v.len()),
                    })?;
            sections[idx].push(row);
        }

        let source = source.ok_or(CoefficientError::MissingSource)?;
        let names = ['L', 'M'];
        let mut mats = [[[0.0; 4]; 4]; 2];
        for idx in 0..2 {
            if !seen[idx] {
                return Err(CoefficientError::MissingSection(names[idx]));
            }
            let rows = &sections[idx];
            if rows.len() != 4 {
                return Err(CoefficientError::Shape {
                    section: names[idx],
                    rows: rows.len(),
                });
            }
            mats[idx].copy_from_slice(rows);
        }
        Ok(Self {
            source,
            positive: mats[0],
            negative: mats[1],
        })
    }
}

/// Instantaneous fuel rate (L/s) at speed `v` (km/h) and acceleration `u`
/// (km/h/s).
pub fn vt_micro_moe(c: &VtMicroCoefficients, v: f64, u: f64) -> f64 {
    let k = if u >= 0.0 { &c.positive } else { &c.negative };
    let mut exponent = 0.0;
    let mut vp = 1.0;
    for row in k {
        let mut uq = 1.0;
        for coef in row {
            exponent += coef * vp * uq;
            uq *= u;
        }
        vp *= v;
    }
    exponent.exp()
}

/// Trapezoidal integral of the sampled function over `[t1, t2]`.
fn integrate_window(times: &[f64], values: &[f64], t1: f64, t2: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..times.len().saturating_sub(1) {
        let (ta, tb) = (times[k], times[k + 1]);
        let lo = ta.max(t1);
        let hi = tb.min(t2);
        if hi <= lo {
            continue;
        }
        let slope = (values[k + 1] - values[k]) / (tb - ta);
        let fa = values[k] + slope * (lo - ta);
        let fb = values[k] + slope * (hi - ta);
        total += 0.5 * (fa + fb) * (hi - lo);
    }
    total
}

fn check_window(traj: &Trajectory, t1: f64, t2: f64) -> Result<(), MetricsError> {
    let start = traj.times.first().copied().unwrap_or(f64::NAN);
    let end = traj.times.last().copied().unwrap_or(f64::NAN);
    // Half a step of tolerance absorbs floating error in the time grid.
    let tol = 0.5 * traj.dt;
    if !(t1 < t2 && t1 >= start - tol && t2 <= end + tol) {
        return Err(MetricsError::WindowOutsideTrajectory { t1, t2, start, end });
    }
    Ok(())
}

/// Average speed variation of vehicles `first..=last` (1-based ids) around
/// `v_star` over `[t1, t2]`, in m/s.
pub fn asv(
    traj: &Trajectory,
    v_star: f64,
    t1: f64,
    t2: f64,
    first: usize,
    last: usize,
) -> Result<f64, MetricsError> {
    check_window(traj, t1, t2)?;
    if first > last {
        return Err(MetricsError::BadVehicleRange { first, last });
    }
    let mut sum = 0.0;
    for id in first..=last {
        let idx = traj.index_of(id).ok_or(MetricsError::UnknownVehicle(id))?;
        let dev: Vec<f64> = traj.speeds[idx]
            .iter()
            .map(|v| (v - v_star).abs())
            .collect();
        sum += integrate_window(&traj.times, &dev, t1, t2);
    }
    let n = (last - first + 1) as f64;
    Ok(sum / (n * (t2 - t1)))
}

/// Fuel (liters) consumed by `vehicle` over `[ta, tb]`, using the applied
/// acceleration recorded in the trajectory.
pub fn fuel(
    traj: &Trajectory,
    c: &VtMicroCoefficients,
    ta: f64,
    tb: f64,
    vehicle: usize,
) -> Result<f64, MetricsError> {
    check_window(traj, ta, tb)?;
    let idx = traj
        .index_of(vehicle)
        .ok_or(MetricsError::UnknownVehicle(vehicle))?;
    let rate: Vec<f64> = traj.speeds[idx]
        .iter()
        .zip(&traj.accels[idx])
        .map(|(v, a)| {
            let a = if a.abs() < ACCEL_NOISE_FLOOR { 0.0 } else { *a };
            vt_micro_moe(c, v * MS_TO_KMH, a * MS_TO_KMH)
        })
        .collect();
    Ok(integrate_window(&traj.times, &rate, ta, tb))
}

/// Which vehicles and windows a [`MetricsReport`] covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub v_star: f64,
    pub asv_window: (f64, f64),
    pub fuel_window: (f64, f64),
    /// First and last vehicle id (inclusive) of the affected group.
    pub first_vehicle: usize,
    pub last_vehicle: usize,
    /// Vehicle whose own fuel is tracked separately (the attacked one).
    pub tracked_vehicle: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            v_star: 21.0,
            asv_window: (50.0, 200.0),
            fuel_window: (50.0, 80.0),
            first_vehicle: 2,
            last_vehicle: 10,
            tracked_vehicle: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleFuel {
    pub vehicle: usize,
    pub liters: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentDeltas {
    pub tracked_vehicle_fuel: f64,
    pub fleet_avg_fuel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: MetricsConfig,
    pub asv: f64,
    pub fuel_per_vehicle: Vec<VehicleFuel>,
    pub tracked_vehicle_fuel: f64,
    /// Mean fuel of the affected group.
    pub fleet_avg_fuel: f64,
    /// Percent change against a baseline, once compared.
    pub pct_delta_vs_baseline: Option<PercentDeltas>,
    /// The run had at least one collision; numbers describe a crashed run.
    pub collision_tainted: bool,
}

impl MetricsReport {
    pub fn compute(
        traj: &Trajectory,
        c: &VtMicroCoefficients,
        cfg: &MetricsConfig,
    ) -> Result<Self, MetricsError> {
        let (t1, t2) = cfg.asv_window;
        let asv = asv(
            traj,
            cfg.v_star,
            t1,
            t2,
            cfg.first_vehicle,
            cfg.last_vehicle,
        )?;
        let (ta, tb) = cfg.fuel_window;
        let fuel_per_vehicle = (cfg.first_vehicle..=cfg.last_vehicle)
            .map(|id| {
                Ok(VehicleFuel {
                    vehicle: id,
                    liters: fuel(traj, c, ta, tb, id)?,
                })
            })
            .collect::<Result<Vec<_>, MetricsError>>()?;
        let fleet_avg_fuel =
            fuel_per_vehicle.iter().map(|f| f.liters).sum::<f64>() / fuel_per_vehicle.len() as f64;
        let tracked_vehicle_fuel = fuel(traj, c, ta, tb, cfg.tracked_vehicle)?;
        Ok(Self {
            config: *cfg,
            asv,
            fuel_per_vehicle,
            tracked_vehicle_fuel,
            fleet_avg_fuel,
            pct_delta_vs_baseline: None,
            collision_tainted: traj.has_collision(),
        })
    }
}

fn pct_change(base: f64, value: f64, quantity: &'static str) -> Result<f64, MetricsError> {
    if base == 0.0 {
        return Err(MetricsError::ZeroBaseline { quantity });
    }
    Ok(100.0 * (value - base) / base)
}

/// Fills in percentage deltas of `attacked` relative to `base`.
pub fn compare_to_baseline(
    base: &MetricsReport,
    attacked: &MetricsReport,
) -> Result<MetricsReport, MetricsError> {
    if base.config != attacked.config {
        return Err(MetricsError::Mismatch);
    }
    let deltas = PercentDeltas {
        tracked_vehicle_fuel: pct_change(
            base.tracked_vehicle_fuel,
            attacked.tracked_vehicle_fuel,
            "tracked vehicle fuel",
        )?,
        fleet_avg_fuel: pct_change(
            base.fleet_avg_fuel,
            attacked.fleet_avg_fuel,
            "fleet average fuel",
        )?,
    };
    Ok(MetricsReport {
        pct_delta_vs_baseline: Some(deltas),
        ..attacked.clone()
    })
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "ASV (vehicles {}-{}, [{}, {}] s): {:.6} m/s",
            c.first_vehicle, c.last_vehicle, c.asv_window.0, c.asv_window.1, self.asv
        )?;
        writeln!(
            f,
            "fuel over [{}, {}] s: vehicle {} {:.6} L, group average {:.6} L",
            c.fuel_window.0,
            c.fuel_window.1,
            c.tracked_vehicle,
            self.tracked_vehicle_fuel,
            self.fleet_avg_fuel
        )?;
        if let Some(d) = &self.pct_delta_vs_baseline {
            writeln!(
                f,
                "vs baseline: vehicle {} {:+.3}%, group average {:+.3}%",
                c.tracked_vehicle, d.tracked_vehicle_fuel, d.fleet_avg_fuel
            )?;
        }
        if self.collision_tainted {
            writeln!(f, "warning: run contains collisions")?;
        }
        Ok(())
    }
}
