use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use fdi_core::engine::Trajectory;

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const SPEED_CSV: &str = "speed.csv";
pub const DISPLACEMENT_CSV: &str = "displacement.csv";
pub const SPEED_SVG: &str = "speed.svg";
pub const DISPLACEMENT_SVG: &str = "displacement.svg";
pub const SUMMARY_JSON: &str = "summary.json";

/// Fixed nine-significant-digit scientific notation.
pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Header of the trajectory CSV: `t`, then `x_i`, `v_i`, `a_i` per vehicle.
pub fn trajectory_header(vehicle_ids: &[usize]) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for id in vehicle_ids {
        cols.extend([format!("x_{id}"), format!("v_{id}"), format!("a_{id}")]);
    }
    cols
}

fn csv_error(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

fn write_rows(
    path: &Path,
    header: Vec<String>,
    rows: impl Iterator<Item = Vec<String>>,
) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(&header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()
}

pub fn write_trajectory_csv(tr: &Trajectory, path: &Path) -> io::Result<()> {
    let rows = (0..tr.len()).map(|k| {
        let mut row = vec![fmt9(tr.times[k])];
        for i in 0..tr.vehicle_count() {
            row.extend([
                fmt9(tr.positions[i][k]),
                fmt9(tr.speeds[i][k]),
                fmt9(tr.accels[i][k]),
            ]);
        }
        row
    });
    write_rows(path, trajectory_header(&tr.vehicle_ids), rows)
}

/// One column per vehicle, named `<prefix>_<id>`.
fn write_series(tr: &Trajectory, series: &[Vec<f64>], prefix: &str, path: &Path) -> io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(tr.vehicle_ids.iter().map(|id| format!("{prefix}_{id}")));
    let rows = (0..tr.len()).map(|k| {
        let mut row = vec![fmt9(tr.times[k])];
        row.extend(series.iter().map(|s| fmt9(s[k])));
        row
    });
    write_rows(path, header, rows)
}

pub fn write_plot_data(tr: &Trajectory, dir: &Path, svg: bool) -> io::Result<()> {
    write_series(tr, &tr.speeds, "v", &dir.join(SPEED_CSV))?;
    write_series(tr, &tr.positions, "x", &dir.join(DISPLACEMENT_CSV))?;
    if svg {
        fs::write(
            dir.join(SPEED_SVG),
            line_chart(tr, &tr.speeds, "Speed", "v (m/s)"),
        )?;
        fs::write(
            dir.join(DISPLACEMENT_SVG),
            line_chart(tr, &tr.positions, "Displacement", "x (m)"),
        )?;
    }
    Ok(())
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Minimal SVG line chart, one polyline per vehicle, with the attack window
/// shaded.
pub fn line_chart(tr: &Trajectory, series: &[Vec<f64>], title: &str, y_label: &str) -> String {
    let (w, h, margin) = (800.0, 450.0, 60.0);
    let t0 = tr.times.first().copied().unwrap_or(0.0);
    let t1 = tr.times.last().copied().unwrap_or(1.0).max(t0 + 1e-9);
    let finite = series.iter().flatten().copied().filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let px = |t: f64| margin + (t - t0) / (t1 - t0) * (w - 2.0 * margin);
    let py = |v: f64| h - margin - (v - lo) / (hi - lo) * (h - 2.0 * margin);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for m in &tr.attack_windows {
        let (a, b) = (px(m.t_on.max(t0)), px(m.t_off.min(t1)));
        let _ = writeln!(
            svg,
            r##"<rect x="{a:.2}" y="{margin}" width="{:.2}" height="{:.2}" fill="#f4cccc"/>"##,
            (b - a).max(0.0),
            h - 2.0 * margin
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * margin,
        h - 2.0 * margin
    );
    // Roughly 500 points per line is plenty at this size.
    let stride = (tr.len() / 500).max(1);
    for (i, s) in series.iter().enumerate() {
        let mut points = String::new();
        for k in (0..s.len())
            .step_by(stride)
            .chain([s.len().saturating_sub(1)])
        {
            if s[k].is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", px(tr.times[k]), py(s[k]));
            }
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"><title>vehicle {}</title></polyline>"#,
            PALETTE[i % PALETTE.len()],
            points.trim_end(),
            tr.vehicle_ids[i]
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{title}</text>"#,
        w / 2.0,
        margin / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">t (s)</text>"#,
        w / 2.0,
        h - margin / 4.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{y_label}</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (value, y) in [(lo, h - margin), (hi, margin)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{value:.1}</text>"#,
            margin - 5.0,
            y + 4.0
        );
    }
    for (value, x) in [(t0, margin), (t1, w - margin)] {
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle">{value:.0}</text>"#,
            h - margin + 15.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
