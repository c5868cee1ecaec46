//! CSV and SVG emission.
//!
//! CSV files use `,` separators, `\n` line endings and a header row. Floats
//! are written with 17 significant digits so values round-trip exactly.

use std::fmt::Write as _;

use crate::analysis::{BasinSample, FieldSample, Grid};
use crate::integrate::Trajectory;
use crate::invariance::ResidualSeries;

/// 17 significant digits in scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let mut first = true;
    for c in cells {
        if !first {
            out.push(',');
        }
        out.push_str(&c);
        first = false;
    }
    out.push('\n');
}

/// Header `t,<inputs>,<states>`, e.g. `t,r,d,y,z` or `t,u,y,x,z`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let header = std::iter::once("t".to_string())
        .chain(traj.meta.input_names.iter().cloned())
        .chain(traj.meta.state_names.iter().cloned());
    push_row(&mut out, header);
    for ((t, u), x) in traj.times.iter().zip(&traj.inputs).zip(&traj.states) {
        push_row(&mut out, std::iter::once(*t).chain(u.iter().copied()).chain(x.0.iter().copied()).map(fmt_float));
    }
    out
}

pub fn field_csv(field: &[FieldSample]) -> String {
    let mut out = String::from("y,z,dy,dz\n");
    for s in field {
        push_row(&mut out, [s.y, s.z, s.dy, s.dz].map(fmt_float));
    }
    out
}

/// `t_converge` is left empty for nodes that did not converge.
pub fn basin_csv(basin: &[BasinSample]) -> String {
    let mut out = String::from("y0,z0,label,t_converge\n");
    for b in basin {
        push_row(
            &mut out,
            [
                fmt_float(b.y0),
                fmt_float(b.z0),
                b.label.as_str().to_string(),
                b.t_converge.map(fmt_float).unwrap_or_default(),
            ],
        );
    }
    out
}

pub fn residual_csv(series: &ResidualSeries) -> String {
    let mut out = String::from("t,y_from,y_to,residual\n");
    for i in 0..series.t.len() {
        push_row(&mut out, [series.t[i], series.y_from[i], series.y_to[i], series.residual[i]].map(fmt_float));
    }
    out
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 600.0;
const MARGIN: f64 = 50.0;

/// Phase portrait: normalized field arrows, trajectories, and labelled
/// equilibrium markers over the grid's bounding box.
pub fn phase_svg(
    grid: &Grid,
    field: &[FieldSample],
    trajectories: &[Vec<[f64; 2]>],
    markers: &[([f64; 2], String)],
) -> String {
    let (y0, y1) = (grid.y.min, grid.y.max);
    let (z0, z1) = (grid.z.min, grid.z.max);
    let span_y = if y1 > y0 { y1 - y0 } else { 1.0 };
    let span_z = if z1 > z0 { z1 - z0 } else { 1.0 };
    let plot_w = SVG_WIDTH - 2.0 * MARGIN;
    let plot_h = SVG_HEIGHT - 2.0 * MARGIN;
    let px = |y: f64| MARGIN + (y - y0) / span_y * plot_w;
    let py = |z: f64| SVG_HEIGHT - MARGIN - (z - z0) / span_z * plot_h;
    let arrow = 0.35 * (plot_w / grid.y.count.max(2) as f64).min(plot_h / grid.z.count.max(2) as f64);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    s.push_str(
        "<defs><marker id=\"head\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" orient=\"auto\">\
         <path d=\"M0,0 L6,3 L0,6 z\" fill=\"#555\"/></marker></defs>\n",
    );
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#000"/>"##
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">y</text>"#, SVG_WIDTH / 2.0, SVG_HEIGHT - 15.0);
    let _ = writeln!(s, r#"<text x="15" y="{}" text-anchor="middle">z</text>"#, SVG_HEIGHT / 2.0);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" font-size="12">{y0:.3}</text>"#, SVG_HEIGHT - MARGIN + 15.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{y1:.3}</text>"#,
        SVG_WIDTH - MARGIN,
        SVG_HEIGHT - MARGIN + 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{z0:.3}</text>"#,
        MARGIN - 5.0,
        SVG_HEIGHT - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{z1:.3}</text>"#,
        MARGIN - 5.0,
        MARGIN + 5.0
    );

    s.push_str("<g stroke=\"#555\" stroke-width=\"1\">\n");
    for f in field {
        let [ny, nz] = f.normalized();
        if ny == 0.0 && nz == 0.0 {
            continue;
        }
        let (x, y) = (px(f.y), py(f.z));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{:.2}" marker-end="url(#head)"/>"#,
            x + arrow * ny,
            y - arrow * nz
        );
    }
    s.push_str("</g>\n");

    for traj in trajectories {
        if traj.is_empty() {
            continue;
        }
        s.push_str("<polyline fill=\"none\" stroke=\"#7b2d8b\" stroke-width=\"1.5\" points=\"");
        for (i, [y, z]) in traj.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.2},{:.2}", px(y.clamp(y0, y1)), py(z.clamp(z0, z1)));
        }
        s.push_str("\"/>\n");
    }

    for ([y, z], label) in markers {
        let (x, yy) = (px(*y), py(*z));
        let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{yy:.2}" r="4" fill="#d00"/>"##);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="12">{label}</text>"#, x + 6.0, yy - 6.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{Axis, BasinLabel};

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_float(11.0), "1.1000000000000000e1");
        assert_eq!(fmt_float(0.1).parse::<f64>().unwrap(), 0.1);
        let v = std::f64::consts::PI * 1e-7;
        assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn basin_rows() {
        let csv = basin_csv(&[
            BasinSample { y0: 1.0, z0: 2.0, label: BasinLabel::ConvergedToE2, t_converge: Some(3.0) },
            BasinSample { y0: -1.0, z0: 0.0, label: BasinLabel::Diverged, t_converge: None },
        ]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "y0,z0,label,t_converge");
        assert!(lines[1].ends_with(",converged-to-E2,3.0000000000000000e0"));
        assert!(lines[2].ends_with(",diverged,"));
    }

    #[test]
    fn svg_has_expected_frame() {
        let grid = Grid::new(Axis::new(0.0, 1.0, 2), Axis::new(0.0, 1.0, 2));
        let svg = phase_svg(&grid, &[], &[vec![[0.0, 0.0], [1.0, 1.0]]], &[([0.5, 0.5], "E2".into())]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains(r#"width="800""#) && svg.contains(r#"height="600""#));
        assert!(svg.contains("<polyline") && svg.contains(">E2</text>"));
    }
}
