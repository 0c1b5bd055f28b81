//! Minimal SVG line charts.

use std::fmt::Write as _;

use super::SuccessCurve;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_Y: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Symmetric band half-width per point; empty for none.
    pub band: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line chart of `series`. `y_range` fixes the vertical axis.
pub fn line_plot_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    y_range: Option<(f64, f64)>,
) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = y_range.unwrap_or_else(|| {
        bounds(series.iter().flat_map(|s| {
            s.points
                .iter()
                .enumerate()
                .flat_map(move |(i, p)| {
                    let b = s.band.get(i).copied().unwrap_or(0.0);
                    [p.1 - b, p.1 + b]
                })
        }))
    });
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - 2.0 * MARGIN_Y;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_Y + (1.0 - (y.clamp(y0, y1) - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="25" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        escape(title)
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (x, y) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_LEFT}" x2="{0}" y1="{1:.2}" y2="{1:.2}" stroke="#e0e0e0"/><text x="{2}" y="{3:.2}" text-anchor="end">{4:.3}</text>"##,
            MARGIN_LEFT + pw,
            sy(y),
            MARGIN_LEFT - 6.0,
            sy(y) + 4.0,
            y
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{:.3}</text>"#,
            sx(x),
            MARGIN_Y + ph + 18.0,
            x
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        MARGIN_Y + ph / 2.0,
        escape(y_label)
    );
    for (k, series) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if !series.band.is_empty() {
            let upper = series
                .points
                .iter()
                .zip(&series.band)
                .map(|(p, b)| format!("{:.2},{:.2}", sx(p.0), sy(p.1 + b)));
            let lower = series
                .points
                .iter()
                .zip(&series.band)
                .rev()
                .map(|(p, b)| format!("{:.2},{:.2}", sx(p.0), sy(p.1 - b)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                poly.join(" ")
            );
        }
        let path: Vec<String> = series
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        if series.points.len() <= 40 {
            for p in &path {
                let (x, y) = p.split_once(',').unwrap();
                let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
            }
        }
        let ly = MARGIN_Y + 10.0 + 18.0 * k as f64;
        let lx = MARGIN_LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&series.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Success rate against the swept value, one line per policy with its 95%
/// band.
pub fn success_curves_svg(curves: &[SuccessCurve], title: &str) -> String {
    let x_label = curves.first().map_or("value", |c| c.param.axis_label());
    let series: Vec<Series> = curves
        .iter()
        .map(|c| Series {
            name: c.policy_id.clone(),
            points: c.points.iter().map(|p| (p.value, p.rate)).collect(),
            band: c.points.iter().map(|p| p.ci_halfwidth).collect(),
        })
        .collect();
    line_plot_svg(title, x_label, "success rate", &series, Some((0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{CurvePoint, SweepParam};

    #[test]
    fn one_polyline_per_policy() {
        let curve = |id: &str| SuccessCurve {
            policy_id: id.into(),
            param: SweepParam::FrictionMu,
            points: vec![CurvePoint::new(0.2, 4, 1), CurvePoint::new(0.8, 4, 4)],
        };
        let svg = success_curves_svg(&[curve("rfi"), curve("erfi<50>")], "friction");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("erfi&lt;50&gt;"));
        assert!(svg.contains("friction coefficient"));
    }

    #[test]
    fn degenerate_series_are_finite() {
        let svg = line_plot_svg(
            "t",
            "x",
            "y",
            &[Series {
                name: "flat".into(),
                points: vec![(1.0, 2.0)],
                band: vec![],
            }],
            None,
        );
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
