use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fdi_core::dsl::{AttackSpec, AttackWindow, InjectionMode};
use fdi_core::engine::{simulate, CollisionEvent, Trajectory};
use fdi_core::metrics::{compare_to_baseline, MetricsReport, VtMicroCoefficients};
use fdi_core::validate::{classify, AttackSet, SamplePoint, Verdict};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, ScenarioConfig};
use crate::output;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Admissibility of one vehicle's attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackVerdict {
    pub vehicle: usize,
    pub g1: String,
    pub g2: String,
    pub mode: InjectionMode,
    pub set: AttackSet,
    pub verdict: Verdict,
    pub violation_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_violation: Option<SamplePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation_failure: Option<SamplePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    /// SHA-256 prefix of the canonical scenario JSON (output settings excluded).
    pub digest: String,
    pub verdicts: Vec<AttackVerdict>,
    pub metrics: Option<MetricsReport>,
    pub collisions: Vec<CollisionEvent>,
    /// Simulation or metrics failure, with the partial output still written.
    pub failure: Option<String>,
    pub duration_ms: f64,
}

impl RunSummary {
    pub fn any_inadmissible(&self) -> bool {
        self.verdicts
            .iter()
            .any(|v| v.verdict == Verdict::Inadmissible)
    }
}

/// Short content hash of the parts of a config that affect results.
pub fn digest(cfg: &ScenarioConfig) -> String {
    let mut canonical = cfg.clone();
    canonical.output = Default::default();
    canonical.preset = None;
    canonical.name.clear();
    let json = serde_json::to_string(&canonical).expect("config serializes");
    hex::encode(&Sha256::digest(json.as_bytes())[..8])
}

fn verdicts(cfg: &ScenarioConfig) -> Result<Vec<AttackVerdict>, ConfigError> {
    let prepared = cfg.prepare()?;
    let mut out = Vec::new();
    for (vehicle, a) in cfg.attacks() {
        let window = AttackWindow::new(a.t_on, a.t_off).expect("validated");
        let spec = AttackSpec::parse(&a.g1, &a.g2, a.mode, window).expect("validated");
        let report = classify(&spec, &prepared.domain);
        out.push(AttackVerdict {
            vehicle,
            g1: a.g1.clone(),
            g2: a.g2.clone(),
            mode: a.mode,
            set: report.set,
            verdict: report.verdict,
            violation_count: report.violation_count,
            first_violation: report.violations.into_iter().next(),
            evaluation_failure: report.failure,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub name: String,
    pub verdicts: Vec<AttackVerdict>,
}

impl ValidationOutcome {
    pub fn any_inadmissible(&self) -> bool {
        self.verdicts
            .iter()
            .any(|v| v.verdict == Verdict::Inadmissible)
    }
}

impl fmt::Display for ValidationOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {}", self.name)?;
        if self.verdicts.is_empty() {
            return writeln!(f, "no attacks declared");
        }
        write_verdicts(f, &self.verdicts)
    }
}

fn write_verdicts(f: &mut fmt::Formatter<'_>, verdicts: &[AttackVerdict]) -> fmt::Result {
    for v in verdicts {
        let set = match v.set {
            AttackSet::Additive => "C",
            AttackSet::Multiplicative => "D",
        };
        writeln!(
            f,
            "vehicle {}: g1 = {}, g2 = {} -> {:?} (set {set})",
            v.vehicle, v.g1, v.g2, v.verdict
        )?;
        if let Some(p) = &v.first_violation {
            let value = p.value.map_or("n/a".to_string(), |x| format!("{x:.6}"));
            writeln!(
                f,
                "  {} violations, first at {:?} x = {:.6}: {value} ({})",
                v.violation_count, p.channel, p.x, p.note
            )?;
        }
        if let Some(p) = &v.evaluation_failure {
            writeln!(
                f,
                "  evaluation failed at {:?} x = {:.6}: {}",
                p.channel, p.x, p.note
            )?;
        }
    }
    Ok(())
}

/// Classifies every declared attack without simulating.
pub fn validate_only(cfg: &ScenarioConfig) -> Result<ValidationOutcome, ConfigError> {
    Ok(ValidationOutcome {
        name: cfg.name.clone(),
        verdicts: verdicts(cfg)?,
    })
}

fn report_for(
    tr: &Trajectory,
    cfg: &ScenarioConfig,
    coeffs: &VtMicroCoefficients,
) -> Result<MetricsReport, String> {
    let prepared = cfg.prepare().map_err(|e| e.to_string())?;
    MetricsReport::compute(tr, coeffs, &prepared.metrics).map_err(|e| e.to_string())
}

/// Simulates `cfg`, writes the trajectory, plot data and summary into
/// `out_dir`, and returns the summary. Simulation failures are reported in
/// the summary alongside the partial trajectory.
pub fn run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunSummary, RunError> {
    let started = Instant::now();
    let prepared = cfg.prepare()?;
    let verdicts = verdicts(cfg)?;
    let coeffs = VtMicroCoefficients::light_duty();

    let (traj, mut failure) = match simulate(&prepared.scenario) {
        Ok(tr) => (tr, None),
        Err(f) => (*f.partial, Some(f.source.to_string())),
    };

    let mut metrics = None;
    if failure.is_none() {
        match report_for(&traj, cfg, &coeffs) {
            Ok(report) if cfg.metrics.compare_baseline => {
                let base = if cfg.attacks().next().is_none() {
                    Ok(report.clone())
                } else {
                    let clean = cfg.without_attacks();
                    let sc = clean.prepare()?.scenario;
                    simulate(&sc)
                        .map_err(|e| format!("baseline: {e}"))
                        .and_then(|tr| report_for(&tr, &clean, &coeffs))
                };
                match base.and_then(|b| compare_to_baseline(&b, &report).map_err(|e| e.to_string()))
                {
                    Ok(r) => metrics = Some(r),
                    Err(e) => {
                        metrics = Some(report);
                        failure = Some(format!("baseline comparison: {e}"));
                    }
                }
            }
            Ok(report) => metrics = Some(report),
            Err(e) => failure = Some(format!("metrics: {e}")),
        }
    }

    fs::create_dir_all(out_dir).map_err(io_at(out_dir))?;
    let csv = out_dir.join(output::TRAJECTORY_CSV);
    output::write_trajectory_csv(&traj, &csv).map_err(io_at(&csv))?;
    output::write_plot_data(&traj, out_dir, cfg.output.svg).map_err(io_at(out_dir))?;

    let summary = RunSummary {
        name: cfg.name.clone(),
        digest: digest(cfg),
        verdicts,
        metrics,
        collisions: traj.collisions.clone(),
        failure,
        duration_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    let path = out_dir.join(output::SUMMARY_JSON);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    fs::write(&path, json).map_err(io_at(&path))?;
    Ok(summary)
}

/// Outcome of one batch entry.
#[derive(Debug)]
pub struct BatchItem {
    pub name: String,
    pub dir: PathBuf,
    pub result: Result<RunSummary, RunError>,
}

/// Runs every config on a pool of `parallelism` workers. Each run writes to
/// its own `NNN-name` directory under `out_root`; results keep input order
/// and one failing run does not stop the others.
pub fn batch(
    configs: &[ScenarioConfig],
    parallelism: usize,
    out_root: &Path,
) -> Result<Vec<BatchItem>, RunError> {
    use rayon::prelude::*;

    if parallelism == 0 {
        return Err(RunError::ZeroParallelism);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let dir = out_root.join(format!("{:03}-{}", i + 1, sanitize(&cfg.name)));
                BatchItem {
                    name: cfg.name.clone(),
                    result: run(cfg, &dir),
                    dir,
                }
            })
            .collect()
    }))
}

fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "run".into()
    } else {
        s
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} (digest {})", self.name, self.digest)?;
        if self.verdicts.is_empty() {
            writeln!(f, "no attacks declared")?;
        } else {
            write_verdicts(f, &self.verdicts)?;
        }
        if let Some(m) = &self.metrics {
            write!(f, "{m}")?;
            writeln!(f, "fuel per vehicle (L):")?;
            for v in &m.fuel_per_vehicle {
                writeln!(f, "  {:>3}  {:.6}", v.vehicle, v.liters)?;
            }
        }
        if self.collisions.is_empty() {
            writeln!(f, "collisions: none")?;
        } else {
            for c in &self.collisions {
                writeln!(f, "collision: vehicle {} at t = {:.2} s", c.follower, c.t)?;
            }
        }
        if let Some(e) = &self.failure {
            writeln!(f, "FAILED: {e}")?;
        }
        writeln!(f, "wall time: {:.1} ms", self.duration_ms)
    }
}
