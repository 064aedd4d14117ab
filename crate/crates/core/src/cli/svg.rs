//! Standalone log-log convergence plot.

use std::fmt::Write as _;
use std::path::Path;

use super::report::num;
use super::CliError;
use crate::analysis::{ErrorTable, RateFit};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 70.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    /// Whole decades covering `values` (log10 space).
    fn covering(values: impl Iterator<Item = f64>) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v.log10());
            hi = hi.max(v.log10());
        }
        let (lo, hi) = (lo.floor(), hi.ceil());
        if hi > lo {
            Axis { lo, hi }
        } else {
            Axis { lo: lo - 1.0, hi: hi + 1.0 }
        }
    }

    fn frac(&self, v: f64) -> f64 {
        (v.log10() - self.lo) / (self.hi - self.lo)
    }
}

fn px(x: f64) -> String {
    format!("{x:.2}")
}

/// Builds the SVG document for `table` with its fitted line.
pub fn svg_document(table: &ErrorTable, fit: &RateFit) -> Result<String, CliError> {
    let points: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter(|r| r.lp_error > 0.0 && r.lp_error.is_finite())
        .map(|r| (r.dt, r.lp_error))
        .collect();
    if table.rows.is_empty() || points.is_empty() {
        return Err(CliError::Config("cannot plot an empty error table".into()));
    }
    let fitted = |dt: f64| (fit.intercept + fit.slope * dt.ln()).exp();
    let xa = Axis::covering(points.iter().map(|p| p.0));
    let ya = Axis::covering(points.iter().map(|p| p.1).chain(points.iter().map(|p| fitted(p.0))));
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |dt: f64| MARGIN + xa.frac(dt) * plot_w;
    let sy = |e: f64| HEIGHT - MARGIN - ya.frac(e) * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        px(plot_w),
        px(plot_h)
    );

    // decade ticks
    for d in (xa.lo as i32)..=(xa.hi as i32) {
        let x = sx(10f64.powi(d));
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/><text x="{0}" y="{3}" font-size="12" text-anchor="middle">1e{d}</text>"#,
            px(x),
            px(HEIGHT - MARGIN),
            px(HEIGHT - MARGIN + 6.0),
            px(HEIGHT - MARGIN + 20.0)
        );
    }
    for d in (ya.lo as i32)..=(ya.hi as i32) {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/><text x="{3}" y="{4}" font-size="12" text-anchor="end">1e{d}</text>"#,
            px(MARGIN - 6.0),
            px(y),
            px(MARGIN),
            px(MARGIN - 8.0),
            px(y + 4.0)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">step size dt</text>"#,
        px(WIDTH / 2.0),
        px(HEIGHT - 20.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {0})">L^p error</text>"#,
        px(HEIGHT / 2.0)
    );

    // fitted line across the data range
    let (dt_min, dt_max) = points.iter().fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let _ = writeln!(
        s,
        r#"<line class="fit" x1="{}" y1="{}" x2="{}" y2="{}" stroke="steelblue" stroke-width="2"/>"#,
        px(sx(dt_min)),
        px(sy(fitted(dt_min))),
        px(sx(dt_max)),
        px(sy(fitted(dt_max)))
    );

    // slope-1 guide triangle below the smallest-dt point
    let anchor = points.iter().cloned().fold((f64::INFINITY, 0.0), |a, p| if p.0 < a.0 { p } else { a });
    let (gx0, gy0) = (anchor.0, anchor.1 / 3.0);
    let gx1 = (gx0 * 4.0).min(10f64.powf(xa.hi));
    let gy1 = gy0 * gx1 / gx0;
    let _ = writeln!(
        s,
        r#"<polygon class="guide" points="{},{} {},{} {},{}" fill="none" stroke="gray" stroke-dasharray="4 3"/>"#,
        px(sx(gx0)),
        px(sy(gy0)),
        px(sx(gx1)),
        px(sy(gy0)),
        px(sx(gx1)),
        px(sy(gy1))
    );
    let _ = writeln!(
        s,
        r#"<text class="guide-label" x="{}" y="{}" font-size="11" fill="gray">1</text>"#,
        px(sx(gx1) + 4.0),
        px((sy(gy0) + sy(gy1)) / 2.0)
    );

    for (dt, e) in &points {
        let _ = writeln!(s, r#"<circle class="point" cx="{}" cy="{}" r="4" fill="firebrick"/>"#, px(sx(*dt)), px(sy(*e)));
    }

    let _ = writeln!(
        s,
        r#"<text class="slope" x="{}" y="{}" font-size="13">slope={}</text>"#,
        px(MARGIN + 10.0),
        px(MARGIN + 20.0),
        num(fit.slope)
    );
    let _ = writeln!(
        s,
        r#"<text class="r2" x="{}" y="{}" font-size="13">r_squared={}</text>"#,
        px(MARGIN + 10.0),
        px(MARGIN + 38.0),
        num(fit.r_squared)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes the plot; nothing is written when the table is empty.
pub fn render_svg(table: &ErrorTable, fit: &RateFit, path: &Path) -> Result<(), CliError> {
    let doc = svg_document(table, fit)?;
    std::fs::write(path, doc).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
