//! CSV and SVG rendering.

use std::fmt::Write as _;

use rlvr_core::TrajectoryLog;

/// Fixed per-iteration column set.
pub const CSV_HEADER: &str =
    "t,selected,eta_eff,J_mean,J_min,grad_sq_selected,V_selected,improvement,bound_slack,variance_flag";

/// One row per iteration; `wide` appends `J_0..J_{n-1}` after the step (empty
/// on iterations without a snapshot).
pub fn trajectory_csv(log: &TrajectoryLog, wide: bool) -> String {
    let n = log.initial.len();
    let mut out = String::with_capacity(96 * (log.records.len() + 1));
    out.push_str(CSV_HEADER);
    if wide {
        for i in 0..n {
            let _ = write!(out, ",J_{i}");
        }
    }
    out.push('\n');
    for r in &log.records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},",
            r.t,
            r.selected,
            r.eta_effective,
            r.mean_objective,
            r.min_objective,
            r.grad_sq_selected,
            r.variance_selected,
            r.improvement
        );
        if let Some(s) = r.bound_slack {
            let _ = write!(out, "{s}");
        }
        let _ = write!(out, ",{}", u8::from(r.variance_flag));
        if wide {
            match &r.objectives_after {
                Some(j) => j.iter().for_each(|v| {
                    let _ = write!(out, ",{v}");
                }),
                None => (0..n).for_each(|_| out.push(',')),
            }
        }
        out.push('\n');
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Minimal line plot: axes, min/max labels and one polyline. Non-finite
/// points are dropped.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    let (x_lo, x_hi) = bounds(pts.iter().map(|p| p.0));
    let (y_lo, y_hi) = bounds(pts.iter().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left:.1} {top:.1} L{left:.1} {bottom:.1} L{right:.1} {bottom:.1}" stroke="black" fill="none"/>"#
    );
    let label = |svg: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{}</text>"#,
            escape(&text)
        );
    };
    label(&mut svg, left, bottom + 16.0, "start", format!("{x_lo}"));
    label(&mut svg, right, bottom + 16.0, "end", format!("{x_hi}"));
    label(&mut svg, left - 6.0, bottom, "end", format!("{y_lo:.4e}"));
    label(&mut svg, left - 6.0, top + 4.0, "end", format!("{y_hi:.4e}"));
    label(&mut svg, WIDTH / 2.0, HEIGHT - 12.0, "middle", x_label.to_string());
    label(&mut svg, 14.0, HEIGHT / 2.0, "start", y_label.to_string());
    if !pts.is_empty() {
        svg.push_str(r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points=""#);
        for (k, (x, y)) in pts.iter().enumerate() {
            if k > 0 {
                svg.push(' ');
            }
            let _ = write!(svg, "{:.2},{:.2}", sx(*x), sy(*y));
        }
        svg.push_str("\"/>\n");
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rlvr_core::trainers::run_trajectory;
    use rlvr_core::{Algorithm, FeatureSet, PolicyParams, TrainerConfig};

    fn log() -> TrajectoryLog {
        let fs = FeatureSet::new(vec![DMatrix::identity(2, 2)], vec![0]).unwrap();
        let mut cfg = TrainerConfig::new(Algorithm::Reinforce, 3, 0);
        cfg.snapshot_every = 2;
        run_trajectory(&cfg, &fs, &PolicyParams::zeros(2)).unwrap()
    }

    #[test]
    fn csv_shape() {
        let text = trajectory_csv(&log(), false);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,0,1,"));
        assert!(lines.iter().all(|l| l.split(',').count() == 10));
    }

    #[test]
    fn wide_columns_blank_off_cadence() {
        let text = trajectory_csv(&log(), true);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].ends_with(",J_0"));
        assert!(lines[1].split(',').nth(10).is_some_and(|v| !v.is_empty()));
        // t = 3 is the last record, t = 2 is on cadence; nothing is blank here
        assert!(lines.iter().all(|l| l.split(',').count() == 11));
    }

    #[test]
    fn svg_is_wellformed_for_degenerate_data() {
        let svg = line_plot_svg("a<b", "t", "y", &[(1.0, 2.0), (2.0, f64::NAN)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("<polyline"));
    }
}
