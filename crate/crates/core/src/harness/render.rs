use std::fmt::Write as _;
use std::path::Path;

use crate::decomposition::ConvexPartition;
use crate::geometry::{Obstacle, Point};
use crate::trajectory::TrajectorySet;

use super::{HarnessError, Scenario};

const SIZE: f64 = 800.0;

fn color(i: usize) -> String {
    format!("hsl({:.1},75%,42%)", (i as f64 * 137.507_764) % 360.0)
}

fn points_attr(ps: impl IntoIterator<Item = Point>, to_px: &impl Fn(Point) -> (f64, f64)) -> String {
    let mut s = String::new();
    for p in ps {
        let (x, y) = to_px(p);
        let _ = write!(s, "{x:.2},{y:.2} ");
    }
    s.trim_end().to_string()
}

fn star(c: Point, r: f64) -> Vec<Point> {
    (0..10)
        .map(|k| {
            let a = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
            let rr = if k % 2 == 0 { r } else { 0.45 * r };
            Point::new(c.x + rr * a.cos(), c.y + rr * a.sin())
        })
        .collect()
}

/// SVG markup for a scenario: obstacles, optional region outlines, start
/// disks, goal stars and one polyline per robot.
pub fn svg_document(scenario: &Scenario, trajectories: &TrajectorySet, regions: Option<&ConvexPartition>) -> String {
    let b = scenario.workspace.bounds;
    let k = SIZE / b.width().max(b.height());
    let (w, h) = (b.width() * k, b.height() * k);
    let to_px = |p: Point| ((p.x - b.min.x) * k, (b.max.y - p.y) * k);
    let r = scenario.limits.robot_radius;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w:.2}" height="{h:.2}" fill="#ffffff" stroke="#000000"/>"##);
    if let Some(part) = regions {
        let _ = writeln!(s, r##"<g id="regions" fill="none" stroke="#9aa5b1" stroke-width="0.8">"##);
        for poly in &part.regions {
            let _ = writeln!(s, r#"<polygon points="{}"/>"#, points_attr(poly.vertices().iter().copied(), &to_px));
        }
        s.push_str("</g>\n");
    }
    s.push_str("<g id=\"obstacles\" fill=\"#4a4a4a\">\n");
    for o in &scenario.workspace.obstacles {
        match o {
            Obstacle::Disk { center, radius } => {
                let (x, y) = to_px(*center);
                let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}"/>"#, radius * k);
            }
            Obstacle::Polygon { vertices } => {
                let _ = writeln!(s, r#"<polygon points="{}"/>"#, points_attr(vertices.vertices().iter().copied(), &to_px));
            }
        }
    }
    s.push_str("</g>\n<g id=\"paths\" fill=\"none\" stroke-width=\"2\">\n");
    for t in &trajectories.trajectories {
        let _ = writeln!(
            s,
            r#"<polyline stroke="{}" points="{}"/>"#,
            color(t.robot),
            points_attr(t.points.iter().copied(), &to_px)
        );
    }
    s.push_str("</g>\n<g id=\"robots\">\n");
    for (i, (&start, &goal)) in scenario.starts.iter().zip(&scenario.goals).enumerate() {
        let (x, y) = to_px(start);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="{}"/>"#, r * k, color(i));
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="{}" stroke="#000000" stroke-width="0.5"/>"##,
            points_attr(star(goal, 1.6 * r), &to_px),
            color(i)
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Writes [`svg_document`] to `out`.
pub fn render_svg(
    scenario: &Scenario,
    trajectories: &TrajectorySet,
    regions: Option<&ConvexPartition>,
    out: &Path,
) -> Result<(), HarnessError> {
    std::fs::write(out, svg_document(scenario, trajectories, regions))?;
    Ok(())
}
