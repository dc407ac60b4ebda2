//! Static SVG summary: stacked bars of the view-level PVEs next to a scree
//! line of the canonical correlations.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 320.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 270.0;
const COMMON_FILL: &str = "#3b6ea5";
const DISTINCT_FILL: &str = "#e1a33b";

fn y_of(v: f64) -> f64 {
    BOTTOM - v.clamp(0.0, 1.0) * (BOTTOM - TOP)
}

fn axis(out: &mut String, x0: f64, x1: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{BOTTOM:.2}" x2="{x1:.2}" y2="{BOTTOM:.2}" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{TOP:.2}" x2="{x0:.2}" y2="{BOTTOM:.2}" stroke="black"/>"#
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = y_of(tick);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{tick:.2}</text>"#,
            x0 - 4.0,
            x0 - 6.0,
            y + 3.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24.00" font-size="13" text-anchor="middle">{title}</text>"#,
        (x0 + x1) / 2.0
    );
}

/// Renders the summary for view-level PVEs `(pve_c, pve_d)` of both views
/// and the estimated canonical correlations.
pub fn pve_summary_svg(pve_c: [f64; 2], pve_d: [f64; 2], rho: &[f64]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{HEIGHT:.0}" viewBox="0 0 {WIDTH:.0} {HEIGHT:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let (bx0, bx1) = (60.0, 290.0);
    axis(&mut out, bx0, bx1, "Variance explained per view");
    for k in 0..2 {
        let x = bx0 + 40.0 + 100.0 * k as f64;
        let c = pve_c[k].clamp(0.0, 1.0);
        let d = pve_d[k].clamp(0.0, 1.0 - c);
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="60.00" height="{:.2}" fill="{COMMON_FILL}"/>"#,
            y_of(c),
            BOTTOM - y_of(c)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="60.00" height="{:.2}" fill="{DISTINCT_FILL}"/>"#,
            y_of(c + d),
            y_of(c) - y_of(c + d)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">view {}</text>"#,
            x + 30.0,
            BOTTOM + 16.0,
            k + 1
        );
    }
    for (i, (label, fill)) in [("common", COMMON_FILL), ("distinctive", DISTINCT_FILL)].iter().enumerate() {
        let x = bx0 + 10.0 + 110.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="296.00" width="10.00" height="10.00" fill="{fill}"/><text x="{:.2}" y="305.00" font-size="11">{label}</text>"#,
            x + 14.0
        );
    }

    let (sx0, sx1) = (370.0, 610.0);
    axis(&mut out, sx0, sx1, "Canonical correlations");
    if !rho.is_empty() {
        let step = (sx1 - sx0 - 20.0) / rho.len().max(2).saturating_sub(1) as f64;
        let points: Vec<(f64, f64)> = rho
            .iter()
            .enumerate()
            .map(|(l, r)| (sx0 + 10.0 + step * l as f64, y_of(*r)))
            .collect();
        let path: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{COMMON_FILL}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for (l, (x, y)) in points.iter().enumerate() {
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.00" fill="{COMMON_FILL}"/>"#);
            let _ = writeln!(
                out,
                r#"<text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
                BOTTOM + 16.0,
                l + 1
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let a = pve_summary_svg([0.4, 0.3], [0.6, 0.7], &[0.9, 0.5, 0.1]);
        assert_eq!(a, pve_summary_svg([0.4, 0.3], [0.6, 0.7], &[0.9, 0.5, 0.1]));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<circle").count(), 3);
    }

    #[test]
    fn empty_scree() {
        let s = pve_summary_svg([0.0, 0.0], [1.0, 1.0], &[]);
        assert!(!s.contains("<polyline"));
    }
}
