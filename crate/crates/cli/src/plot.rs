//! SVG picture of a planar solution: demand points, the separating line, the
//! facility and every shortest path.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use refloc::locate::{LocateResult, LocationInstance};
use refloc::Side;

const SIZE: f64 = 640.0;
const PAD: f64 = 40.0;

struct View {
    lo: [f64; 2],
    scale: f64,
}

impl View {
    fn px(&self, p: &[f64]) -> (f64, f64) {
        (
            PAD + (p[0] - self.lo[0]) * self.scale,
            SIZE - PAD - (p[1] - self.lo[1]) * self.scale,
        )
    }
}

fn fmt(v: f64) -> String {
    // Avoid "-0.00" so equal inputs give equal bytes regardless of rounding sign.
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Clip `alpha . x = beta` to the box `[lo, hi]`.
fn clip_line(alpha: &[f64], beta: f64, lo: [f64; 2], hi: [f64; 2]) -> Option<([f64; 2], [f64; 2])> {
    let mut hits: Vec<[f64; 2]> = Vec::new();
    let (a, b) = (alpha[0], alpha[1]);
    if b != 0.0 {
        for x in [lo[0], hi[0]] {
            let y = (beta - a * x) / b;
            if y >= lo[1] - 1e-12 && y <= hi[1] + 1e-12 {
                hits.push([x, y]);
            }
        }
    }
    if a != 0.0 {
        for y in [lo[1], hi[1]] {
            let x = (beta - b * y) / a;
            if x >= lo[0] - 1e-12 && x <= hi[0] + 1e-12 {
                hits.push([x, y]);
            }
        }
    }
    let first = *hits.first()?;
    let far = hits.iter().copied().max_by(|p, q| {
        let dp = (p[0] - first[0]).hypot(p[1] - first[1]);
        let dq = (q[0] - first[0]).hypot(q[1] - first[1]);
        dp.total_cmp(&dq)
    })?;
    Some((first, far))
}

pub fn render_svg(inst: &LocationInstance, res: &LocateResult) -> Result<String> {
    if inst.dim != 2 {
        bail!(
            "plotting needs a planar instance, got dimension {}",
            inst.dim
        );
    }
    let mut all: Vec<&[f64]> = inst
        .labeled_points()
        .map(|(_, p)| p.coords.as_slice())
        .collect();
    all.push(&res.x_star);
    for g in res.per_point_gates.iter().flatten() {
        all.push(g);
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &all {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let margin = 0.05 * span;
    for k in 0..2 {
        lo[k] -= margin;
        hi[k] += margin;
    }
    let span = span + 2.0 * margin;
    let view = View {
        lo,
        scale: (SIZE - 2.0 * PAD) / span,
    };
    let hi = [lo[0] + span, lo[1] + span];

    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = SIZE
    );
    let _ = writeln!(o, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some((p, q)) = clip_line(&inst.h.alpha, inst.h.beta, lo, hi) {
        let (x1, y1) = view.px(&p);
        let (x2, y2) = view.px(&q);
        let _ = writeln!(
            o,
            r#"<line class="hyperplane" x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="2"/>"#,
            fmt(x1),
            fmt(y1),
            fmt(x2),
            fmt(y2)
        );
    }
    for ((_, p), gates) in inst.labeled_points().zip(&res.per_point_gates) {
        let mut pts = vec![view.px(&res.x_star)];
        pts.extend(gates.iter().map(|g| view.px(g)));
        pts.push(view.px(&p.coords));
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y)))
            .collect();
        let class = if gates.is_empty() {
            "path"
        } else {
            "path refracted"
        };
        let _ = writeln!(
            o,
            r#"<polyline class="{class}" points="{}" fill="none" stroke="gray" stroke-width="1"/>"#,
            path.join(" ")
        );
        for g in gates {
            let (x, y) = view.px(g);
            let _ = writeln!(
                o,
                r#"<circle class="gate" cx="{}" cy="{}" r="2" fill="gray"/>"#,
                fmt(x),
                fmt(y)
            );
        }
    }
    for (label, p) in inst.labeled_points() {
        let (x, y) = view.px(&p.coords);
        let (class, color) = if label == Side::A {
            ("point-a", "#1f77b4")
        } else {
            ("point-b", "#d62728")
        };
        let _ = writeln!(
            o,
            r#"<circle class="{class}" cx="{}" cy="{}" r="4" fill="{color}"/>"#,
            fmt(x),
            fmt(y)
        );
    }
    let (x, y) = view.px(&res.x_star);
    let _ = writeln!(
        o,
        r#"<rect class="facility" x="{}" y="{}" width="10" height="10" fill="black"/>"#,
        fmt(x - 5.0),
        fmt(y - 5.0)
    );
    o.push_str("</svg>\n");
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use refloc::instances::embedded_dataset;
    use refloc::locate::{solve, SolveOptions};
    use refloc::{DemandPoint, Hyperplane, NormSpec};

    #[test]
    fn example_pictures() {
        let inst = embedded_dataset("parlar18").unwrap().to_instance().unwrap();
        let res = solve(&inst, false, &SolveOptions::default()).unwrap();
        let svg = render_svg(&inst, &res).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 18);
        assert_eq!(svg.matches(r#"class="point-"#).count(), 18);
        assert_eq!(svg.matches(r#"class="hyperplane""#).count(), 1);
        assert_eq!(svg, render_svg(&inst, &res).unwrap());

        let inst = inst.with_transit(NormSpec::linf().with_scale(0.25).unwrap());
        let res = solve(&inst, true, &SolveOptions::default()).unwrap();
        let svg = render_svg(&inst, &res).unwrap();
        // The path to (2,8) runs through two gates.
        let i = inst
            .points_a
            .iter()
            .position(|p| p.coords == [2.0, 8.0])
            .unwrap();
        assert_eq!(res.per_point_gates[i].len(), 2);
        assert!(svg.contains(r#"class="path refracted""#));
    }

    #[test]
    fn no_cross_paths_without_b() {
        let h = Hyperplane::line_through_origin(1.0).unwrap();
        let pts = vec![
            DemandPoint::unit(vec![0.0, 1.0]),
            DemandPoint::unit(vec![1.0, 3.0]),
        ];
        let inst =
            LocationInstance::new(h, NormSpec::l2(), NormSpec::l1(), None, pts, vec![]).unwrap();
        let res = solve(&inst, false, &SolveOptions::default()).unwrap();
        let svg = render_svg(&inst, &res).unwrap();
        assert!(!svg.contains("refracted"));
    }

    #[test]
    fn refuses_three_dimensions() {
        let h = Hyperplane::new(vec![0.0, 0.0, 1.0], 0.0).unwrap();
        let inst = LocationInstance::new(
            h,
            NormSpec::l2(),
            NormSpec::l2(),
            None,
            vec![DemandPoint::unit(vec![0.0, 0.0, -1.0])],
            vec![],
        )
        .unwrap();
        let res = solve(&inst, false, &SolveOptions::default()).unwrap();
        assert!(render_svg(&inst, &res).is_err());
    }
}
