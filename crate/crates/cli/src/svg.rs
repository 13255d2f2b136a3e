//! Top-down trajectory plot in the world `x`-`z` plane.

use std::fmt::Write;

use sccalib_core::eval::Trajectory;
use sccalib_core::geometry::{Vec2, Vec3};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 40.0;

pub struct Series<'a> {
    /// CSS class suffix, e.g. `est` or `gt`.
    pub class: &'a str,
    pub label: &'a str,
    pub color: &'a str,
    pub trajectory: &'a Trajectory,
}

/// One `<g class="camera …">` glyph per pose: a dot at the camera center
/// and a tick along the viewing direction.
pub fn trajectory_svg(series: &[Series]) -> String {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.trajectory.poses.iter())
        .map(|p| (p.center.x, p.center.z))
        .collect();
    let (mut x0, mut x1, mut z0, mut z1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, z) in &points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        z0 = z0.min(z);
        z1 = z1.max(z);
    }
    if points.is_empty() {
        (x0, x1, z0, z1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let span = (x1 - x0).max(z1 - z0).max(1e-9);
    let scale = ((WIDTH - 2.0 * MARGIN) / span).min((HEIGHT - 2.0 * MARGIN) / span);
    let (mx, mz) = (0.5 * (x0 + x1), 0.5 * (z0 + z1));
    // +z points up the page
    let to_px = |x: f64, z: f64| (WIDTH / 2.0 + (x - mx) * scale, HEIGHT / 2.0 - (z - mz) * scale);
    let tick = 0.05 * span;

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (k, s) in series.iter().enumerate() {
        writeln!(
            out,
            r#"<text x="{MARGIN}" y="{:.1}" font-family="sans-serif" font-size="14" fill="{}">{}</text>"#,
            20.0 + 18.0 * k as f64,
            s.color,
            s.label
        )
        .unwrap();
    }
    for s in series {
        let dots: Vec<String> = s
            .trajectory
            .poses
            .iter()
            .map(|p| {
                let (x, y) = to_px(p.center.x, p.center.z);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        writeln!(
            out,
            r#"<polyline class="path {}" points="{}" fill="none" stroke="{}" stroke-opacity="0.4"/>"#,
            s.class,
            dots.join(" "),
            s.color
        )
        .unwrap();
        for (i, p) in s.trajectory.poses.iter().enumerate() {
            let fwd = p.rotation * Vec3::z();
            let dir = Vec2::new(fwd.x, fwd.z);
            let dir = if dir.norm() > 1e-12 { dir.normalize() } else { dir };
            let (cx, cy) = to_px(p.center.x, p.center.z);
            let (tx, ty) = to_px(p.center.x + tick * dir.x, p.center.z + tick * dir.y);
            writeln!(
                out,
                r#"<g class="camera {}" data-frame="{i}"><circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{c}"/><line x1="{cx:.2}" y1="{cy:.2}" x2="{tx:.2}" y2="{ty:.2}" stroke="{c}" stroke-width="1.5"/></g>"#,
                s.class,
                c = s.color
            )
            .unwrap();
        }
    }
    out.push_str("</svg>\n");
    out
}
