//! Log–log comparison plot as a standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{BenchError, Result};
use crate::rates::{CellMedians, RateFit};
use crate::records::MethodTag;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn color(method: MethodTag) -> &'static str {
    match method {
        MethodTag::Rat => "#1f77b4",
        MethodTag::Sm => "#d62728",
    }
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, n: f64) -> f64 {
        LEFT + (n.log10() - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v.log10() - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Renders medians as solid polylines and each fit as a dashed line, with
/// its slope in the legend.
pub fn render_svg(fits: &[RateFit], medians: &[CellMedians]) -> Result<String> {
    let pts: Vec<(f64, f64)> = medians
        .iter()
        .flat_map(|c| c.points.iter().map(|&(n, v)| (n as f64, v)))
        .filter(|&(n, v)| n > 0.0 && v > 0.0 && v.is_finite())
        .collect();
    let cells = medians.iter().map(|c| c.points.len()).max().unwrap_or(0);
    if cells < 2 || pts.is_empty() {
        return Err(BenchError::Fit("plot needs at least 2 cells".into()));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(n, v) in &pts {
        x0 = x0.min(n.log10());
        x1 = x1.max(n.log10());
        y0 = y0.min(v.log10());
        y1 = y1.max(v.log10());
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(0.05);
    let ax = Axes { x0, x1, y0: y0 - pad, y1: y1 + pad };

    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (bx, by) = (HEIGHT - BOTTOM, WIDTH - RIGHT);
    let _ = writeln!(w, r#"<path d="M{LEFT} {TOP} V{bx} H{by}" fill="none" stroke="black" stroke-width="1"/>"#);
    for d in (x0.floor() as i32)..=(x1.ceil() as i32) {
        let n = 10f64.powi(d);
        let x = ax.px(n);
        if (LEFT - 1e-9..=by + 1e-9).contains(&x) {
            let _ = writeln!(w, r#"<path d="M{x:.2} {bx} v5" stroke="black"/>"#);
            let _ = writeln!(
                w,
                r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">1e{d}</text>"#,
                bx + 18.0
            );
        }
    }
    for d in (ax.y0.floor() as i32)..=(ax.y1.ceil() as i32) {
        let y = ax.py(10f64.powi(d));
        if (TOP - 1e-9..=bx + 1e-9).contains(&y) {
            let _ = writeln!(w, r#"<path d="M{LEFT} {y:.2} h-5" stroke="black"/>"#);
            let _ = writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">1e{d}</text>"#,
                LEFT - 8.0,
                y + 4.0
            );
        }
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">n (source samples)</text>"#,
        (LEFT + by) / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        w,
        r#"<text x="16" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">median MSE</text>"#,
        (TOP + bx) / 2.0,
        (TOP + bx) / 2.0
    );

    for c in medians {
        let coords: Vec<String> = c
            .points
            .iter()
            .filter(|&&(n, v)| n > 0 && v > 0.0 && v.is_finite())
            .map(|&(n, v)| format!("{:.2},{:.2}", ax.px(n as f64), ax.py(v)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            coords.join(" "),
            color(c.method)
        );
    }
    let (nmin, nmax) = (10f64.powf(x0), 10f64.powf(x1));
    for (i, f) in fits.iter().enumerate() {
        let _ = writeln!(
            w,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
            ax.px(nmin),
            ax.py(f.predict(nmin)),
            ax.px(nmax),
            ax.py(f.predict(nmax)),
            color(f.method)
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{}">{} slope {:.3}</text>"#,
            by + 10.0,
            TOP + 20.0 + 18.0 * i as f64,
            color(f.method),
            f.method.label(),
            f.slope
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(s)
}

pub fn emit_svg_plot(fits: &[RateFit], medians: &[CellMedians], path: &Path) -> Result<()> {
    let svg = render_svg(fits, medians)?;
    std::fs::write(path, svg).map_err(|e| BenchError::io(path, e))
}
