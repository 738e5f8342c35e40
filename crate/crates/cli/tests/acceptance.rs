//! End-to-end acceptance checks on the ten-vehicle reference platoon. Prints
//! one PASS/FAIL line per criterion and exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use fdi_cli::{batch, preset};
use fdi_core::dsl::{AttackSpec, AttackWindow, Expr, InjectionMode};
use fdi_core::engine::{simulate, Trajectory};
use fdi_core::metrics::{
    asv, compare_to_baseline, MetricsConfig, MetricsReport, VtMicroCoefficients,
};
use fdi_core::model::{rdc_partials, FollowingModel, OvrvParams};
use fdi_core::validate::{classify, MeasurementDomain, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: [&str; 6] = ["case1", "case2", "case3", "case4", "case5", "case6"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn simulate_preset(name: &str, dt: f64) -> Trajectory {
    let mut cfg = preset(name).expect("preset exists");
    cfg.dt = dt;
    simulate(&cfg.prepare().expect("preset is valid").scenario).expect("simulation runs")
}

fn window() -> AttackWindow {
    AttackWindow::new(50.0, 80.0).unwrap()
}

fn verdict_of(name: &str) -> Verdict {
    let cfg = preset(name).unwrap();
    let (_, a) = cfg.attacks().next().expect("case has an attack");
    let spec = AttackSpec::parse(&a.g1, &a.g2, a.mode, window()).unwrap();
    classify(&spec, &MeasurementDomain::default()).verdict
}

fn first_sample_at(tr: &Trajectory, t: f64) -> usize {
    tr.times.iter().position(|&x| x >= t - 1e-9).unwrap()
}

fn baseline_fidelity() -> Outcome {
    let start = Instant::now();
    let tr = simulate_preset("baseline", 0.05);
    let elapsed = start.elapsed().as_secs_f64();
    let dev = tr
        .speeds
        .iter()
        .flatten()
        .map(|v| (v - 21.0).abs())
        .fold(0.0, f64::max);
    let asv = asv(&tr, 21.0, 50.0, 200.0, 2, 10).unwrap();
    outcome(
        dev <= 1e-6 && asv.abs() <= 1e-9 && elapsed < 1.0,
        format!("max |v - 21| = {dev:.3e}, ASV = {asv:.3e}, runtime = {elapsed:.3} s"),
    )
}

fn set_membership() -> Outcome {
    let verdicts: Vec<Verdict> = CASES.iter().map(|c| verdict_of(c)).collect();
    let grouping_ok = verdicts[..3].iter().all(|v| *v == Verdict::Admissible)
        && verdicts[3..].iter().all(|v| *v == Verdict::Inadmissible);
    let mut wrong = Vec::new();
    for k in -30..=30 {
        let r = k as f64 / 10.0;
        let atk = AttackSpec::parse(
            &format!("{r}*s"),
            &format!("{r}*dv"),
            InjectionMode::Additive,
            window(),
        )
        .unwrap();
        let admissible =
            classify(&atk, &MeasurementDomain::default()).verdict == Verdict::Admissible;
        if admissible != (-1.0..=0.0).contains(&r) {
            wrong.push(r);
        }
    }
    outcome(
        grouping_ok && wrong.is_empty(),
        format!("cases 1-6: {verdicts:?}; sweep misclassified r = {wrong:?}"),
    )
}

fn multiplicative_construction() -> Outcome {
    let dom = MeasurementDomain::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for (z, expected) in [
        (0.1, Verdict::Admissible),
        (0.5, Verdict::Admissible),
        (1.0, Verdict::Admissible),
        (1.1, Verdict::Inadmissible),
        (1.5, Verdict::Inadmissible),
    ] {
        let atk = AttackSpec::parse(
            &format!("1/s + {z}"),
            "1",
            InjectionMode::Multiplicative,
            window(),
        )
        .unwrap();
        let got = classify(&atk, &dom).verdict;
        pass &= got == expected;
        lines.push(format!("z={z}: {got:?}"));
    }
    outcome(pass, lines.join(", "))
}

fn qualitative_dynamics() -> Outcome {
    let case4 = simulate_preset("case4", 0.05);
    let min_v2 = case4.speeds[1]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let collisions: Vec<usize> = CASES
        .iter()
        .map(|c| simulate_preset(c, 0.05).collisions.len())
        .collect();
    let pass = min_v2 <= 1e-9
        && collisions[..3].iter().all(|&n| n == 0)
        && collisions[4..].iter().all(|&n| n >= 1);
    outcome(
        pass,
        format!("case4 min v2 = {min_v2:.3e}; collision counts cases 1-6 = {collisions:?}"),
    )
}

fn asv_ordering() -> Outcome {
    let values: Vec<f64> = ["baseline", "case1", "case2", "case3"]
        .iter()
        .map(|c| asv(&simulate_preset(c, 0.05), 21.0, 50.0, 200.0, 2, 10).unwrap())
        .collect();
    let pass = values[0].abs() <= 1e-9 && values.windows(2).all(|w| w[1] - w[0] >= 1e-4);
    outcome(pass, format!("ASV baseline, cases 1-3 = {values:.6?}"))
}

fn fuel_reports(window: (f64, f64)) -> Vec<MetricsReport> {
    let c = VtMicroCoefficients::light_duty();
    let cfg = MetricsConfig {
        fuel_window: window,
        ..MetricsConfig::default()
    };
    let reports: Vec<MetricsReport> = ["baseline", "case1", "case2", "case3"]
        .iter()
        .map(|n| MetricsReport::compute(&simulate_preset(n, 0.05), &c, &cfg).unwrap())
        .collect();
    reports
        .iter()
        .map(|r| compare_to_baseline(&reports[0], r).unwrap())
        .collect()
}

fn fuel_ordered(reports: &[MetricsReport]) -> (bool, String) {
    let tracked: Vec<f64> = reports.iter().map(|r| r.tracked_vehicle_fuel).collect();
    let fleet: Vec<f64> = reports.iter().map(|r| r.fleet_avg_fuel).collect();
    let deltas: Vec<(f64, f64)> = reports[1..]
        .iter()
        .map(|r| {
            let d = r.pct_delta_vs_baseline.unwrap();
            (d.tracked_vehicle_fuel, d.fleet_avg_fuel)
        })
        .collect();
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
    let pass = increasing(&tracked)
        && increasing(&fleet)
        && deltas.iter().all(|&(a, b)| a > 0.0 && b > 0.0);
    let pct: Vec<String> = deltas
        .iter()
        .map(|(a, b)| format!("{a:+.2}%/{b:+.2}%"))
        .collect();
    (
        pass,
        format!("vehicle 2 = {tracked:.5?} L, average = {fleet:.5?} L, deltas cases 1-3 = {pct:?}"),
    )
}

fn fuel_ordering() -> Outcome {
    let (pass, detail) = fuel_ordered(&fuel_reports((50.0, 80.0)));
    // Reported for context only; the criterion is the [50, 80] window.
    let (full_pass, full) = fuel_ordered(&fuel_reports((0.0, 200.0)));
    outcome(
        pass,
        format!(
            "[50, 80] s: {detail}\n         (for reference, [0, 200] s ordering {}: {full})",
            if full_pass { "holds" } else { "fails" }
        ),
    )
}

fn propagation_and_causality() -> Outcome {
    let base = simulate_preset("baseline", 0.05);
    let k50 = first_sample_at(&base, 50.0);
    let mut problems = Vec::new();
    let mut weakest = f64::INFINITY;
    for (n, name) in CASES.iter().enumerate() {
        let tr = simulate_preset(name, 0.05);
        if tr.positions[0] != base.positions[0] || tr.speeds[0] != base.speeds[0] {
            problems.push(format!("{name}: vehicle 1 differs"));
        }
        for i in 0..tr.vehicle_count() {
            let same = tr.positions[i][..k50] == base.positions[i][..k50]
                && tr.speeds[i][..k50] == base.speeds[i][..k50]
                && tr.accels[i][..k50] == base.accels[i][..k50];
            if !same {
                problems.push(format!("{name}: vehicle {} differs before t = 50", i + 1));
            }
        }
        if n < 3 {
            for i in 2..10 {
                let dev = tr.speeds[i][k50 + 1..]
                    .iter()
                    .map(|v| (v - 21.0).abs())
                    .fold(0.0, f64::max);
                weakest = weakest.min(dev);
                if dev <= 0.01 {
                    problems.push(format!("{name}: vehicle {} max |v - 21| = {dev:.4}", i + 1));
                }
            }
        }
    }
    outcome(
        problems.is_empty(),
        format!(
            "smallest disturbance among vehicles 3-10 in cases 1-3 = {weakest:.4} m/s; {}",
            if problems.is_empty() {
                "prefix and leader identical".to_string()
            } else {
                problems.join("; ")
            }
        ),
    )
}

fn random_expr(rng: &mut ChaCha8Rng, depth: usize) -> Expr {
    let b = Box::new;
    if depth == 1 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.5) {
            Expr::Var
        } else {
            Expr::Constant((rng.gen_range(-3.0..3.0f64) * 100.0).round() / 100.0)
        };
    }
    let d = depth - 1;
    match rng.gen_range(0..8) {
        0 => Expr::Neg(b(random_expr(rng, d))),
        1 => Expr::Add(b(random_expr(rng, d)), b(random_expr(rng, d))),
        2 => Expr::Sub(b(random_expr(rng, d)), b(random_expr(rng, d))),
        3 => Expr::Mul(b(random_expr(rng, d)), b(random_expr(rng, d))),
        4 => Expr::Div(b(random_expr(rng, d)), b(random_expr(rng, d))),
        5 => Expr::Sin(b(random_expr(rng, d))),
        6 => Expr::Cos(b(random_expr(rng, d))),
        _ => Expr::Pow(b(random_expr(rng, d)), rng.gen_range(-2..=3)),
    }
}

fn divisors(e: &Expr, x: f64, out: &mut Vec<f64>) -> Option<()> {
    match e {
        Expr::Constant(_) | Expr::Var => {}
        Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) => divisors(a, x, out)?,
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
            divisors(a, x, out)?;
            divisors(b, x, out)?;
        }
        Expr::Div(a, b) => {
            divisors(a, x, out)?;
            divisors(b, x, out)?;
            out.push(b.eval(x).ok()?);
        }
        Expr::Pow(a, n) => {
            divisors(a, x, out)?;
            if *n < 0 {
                out.push(a.eval(x).ok()?);
            }
        }
    }
    Some(())
}

const POLE_GAP: f64 = 1e-3;
const H: f64 = 1e-5;

fn near_pole(e: &Expr, x: f64) -> bool {
    let mut rows = Vec::new();
    for p in [x - POLE_GAP, x, x + POLE_GAP] {
        let mut d = Vec::new();
        if divisors(e, p, &mut d).is_none() {
            return true;
        }
        rows.push(d);
    }
    (0..rows[0].len()).any(|i| {
        let v = [rows[0][i], rows[1][i], rows[2][i]];
        v.iter().any(|d| d.abs() <= POLE_GAP) || v.iter().any(|d| d.signum() != v[0].signum())
    })
}

fn tolerance(fd: f64) -> f64 {
    1e-4 * (1.0 + fd.abs())
}

enum Reference {
    Value(f64),
    Undefined,
    Unreliable,
}

/// Central difference (step `H`, Richardson-extrapolated with `H / 2`),
/// refusing points where it cannot certify its own accuracy.
fn reference_derivative(e: &Expr, x: f64) -> Reference {
    let quotient = |h: f64| -> Option<(f64, f64)> {
        let hi = e.eval(x + h).ok()?;
        let lo = e.eval(x - h).ok()?;
        Some((
            (hi - lo) / (2.0 * h),
            f64::EPSILON * hi.abs().max(lo.abs()) / h,
        ))
    };
    let (Some((coarse, _)), Some((fine, roundoff))) = (quotient(H), quotient(0.5 * H)) else {
        return Reference::Undefined;
    };
    if (coarse - fine).abs() > tolerance(fine) || roundoff > 0.1 * tolerance(fine) {
        return Reference::Unreliable;
    }
    Reference::Value((4.0 * fine - coarse) / 3.0)
}

fn derivative_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_dfd1);
    let (mut checked, mut poles, mut undefined, mut unreliable) = (0usize, 0usize, 0usize, 0usize);
    let mut failures = Vec::new();
    for _ in 0..1000 {
        let e = random_expr(&mut rng, 6);
        let de = e.differentiate();
        for _ in 0..10 {
            let x: f64 = rng.gen_range(-2.0..2.0);
            if near_pole(&e, x) {
                poles += 1;
                continue;
            }
            let exact = de.eval(x);
            match (reference_derivative(&e, x), exact) {
                (Reference::Value(fd), Ok(d)) => {
                    checked += 1;
                    if (d - fd).abs() > tolerance(fd) {
                        failures.push(format!("d/dx {} at {x}: {d} vs {fd}", e.display("x")));
                    }
                }
                (Reference::Unreliable, _) => unreliable += 1,
                _ => undefined += 1,
            }
        }
    }

    // Attacked OVRV partials against hand-derived closed forms.
    let p = OvrvParams::default();
    let closed: [(&str, &str, fn(f64) -> f64, fn(f64) -> f64); 3] = [
        (
            "0.1*sin(s) - 0.1*s",
            "0.1*sin(dv) - 0.1*dv",
            |s| 0.1 * s.cos() - 0.1,
            |d| 0.1 * d.cos() - 0.1,
        ),
        (
            "0.4*sin(s) - 0.5*s",
            "0.4*sin(dv) - 0.5*dv",
            |s| 0.4 * s.cos() - 0.5,
            |d| 0.4 * d.cos() - 0.5,
        ),
        ("-0.9*s", "-0.9*dv", |_| -0.9, |_| -0.9),
    ];
    let mut worst_ulps = 0.0f64;
    for (g1, g2, dg1, dg2) in closed {
        let atk = AttackSpec::parse(g1, g2, InjectionMode::Additive, window()).unwrap();
        for _ in 0..200 {
            let s = rng.gen_range(0.5..200.0);
            let dv = rng.gen_range(-30.0..30.0);
            let v = rng.gen_range(0.0..30.0);
            let b = rdc_partials(FollowingModel::AttackedOvrv(&p, &atk), s, dv, v, 60.0).unwrap();
            let expect = [p.k1 * (1.0 + dg1(s)), p.k2 * (1.0 + dg2(dv)), -p.tau * p.k1];
            for (got, want) in [b.beta1, b.beta2, b.beta3].into_iter().zip(expect) {
                let ulps = (got - want).abs() / (f64::EPSILON * want.abs().max(f64::MIN_POSITIVE));
                worst_ulps = worst_ulps.max(ulps);
            }
        }
    }
    let partials_ok = worst_ulps <= 4.0;
    let pass = failures.is_empty() && partials_ok;
    let mut detail = format!(
        "{checked} points checked, {poles} near poles, {undefined} undefined, {unreliable} where the difference quotient is unreliable; \
         RDC partials worst error {worst_ulps:.1} ulp"
    );
    if let Some(f) = failures.first() {
        detail += &format!("; {} mismatches, first: {f}", failures.len());
    }
    outcome(pass, detail)
}

fn numerical_robustness() -> Outcome {
    let coarse = asv(&simulate_preset("case2", 0.05), 21.0, 50.0, 200.0, 2, 10).unwrap();
    let fine = asv(&simulate_preset("case2", 0.025), 21.0, 50.0, 200.0, 2, 10).unwrap();
    let rel = (fine - coarse).abs() / coarse;

    let names = [
        "baseline", "case1", "case2", "case3", "case4", "case5", "case6",
    ];
    let configs: Vec<_> = names.iter().map(|n| preset(n).unwrap()).collect();
    let root = tempfile::tempdir().unwrap();
    let serial = root.path().join("p1");
    let parallel = root.path().join("p4");
    batch(&configs, 1, &serial).unwrap();
    batch(&configs, 4, &parallel).unwrap();
    let mut differing = Vec::new();
    let mut compared = 0;
    for entry in fs::read_dir(&serial).unwrap() {
        let run_dir = entry.unwrap().path();
        let name = run_dir.file_name().unwrap().to_owned();
        for file in fs::read_dir(&run_dir).unwrap() {
            let file = file.unwrap().path();
            if file.extension().is_some_and(|e| e == "csv") {
                compared += 1;
                let other = Path::new(&parallel)
                    .join(&name)
                    .join(file.file_name().unwrap());
                if fs::read(&file).unwrap() != fs::read(&other).unwrap_or_default() {
                    differing.push(other.display().to_string());
                }
            }
        }
    }
    outcome(
        rel < 1e-3 && differing.is_empty() && compared == 3 * names.len(),
        format!(
            "case2 ASV {coarse:.6} (dt 0.05) vs {fine:.6} (dt 0.025), change {:.4}%; {compared} CSVs compared, {} differ",
            100.0 * rel,
            differing.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("baseline fidelity", baseline_fidelity),
        ("set-membership oracle", set_membership),
        ("multiplicative construction", multiplicative_construction),
        ("qualitative dynamics", qualitative_dynamics),
        ("ASV ordering", asv_ordering),
        ("fuel ordering", fuel_ordering),
        (
            "disturbance propagation and causality",
            propagation_and_causality,
        ),
        ("derivative correctness", derivative_correctness),
        ("numerical robustness", numerical_robustness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {}: {name}: {}", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
