use super::{ExperimentReport, SlopeFit};
use crate::error::{Error, Result};
use crate::util::sig12;
use serde::Deserialize;
use std::fmt::Write as _;
use std::io::{Read, Write};

const HEADER: [&str; 6] = ["example", "epsilon", "sup_dev", "adiab_resid", "comm_resid", "runtime_ms"];

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// `example,epsilon,sup_dev,adiab_resid,comm_resid,runtime_ms`, one row per ε.
pub fn write_csv(report: &ExperimentReport, out: impl Write) -> Result<()> {
    if report.records.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER).map_err(io)?;
    for r in &report.records {
        w.write_record([
            report.example.clone(),
            sig12(r.eps),
            sig12(r.sup_dev),
            sig12(r.adiab_resid),
            sig12(r.comm_resid),
            r.runtime_ms.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `epsilon,t,deviation` for every ε and grid point.
pub fn write_profiles(report: &ExperimentReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epsilon", "t", "deviation"]).map_err(io)?;
    for r in &report.records {
        for (t, d) in report.grid.iter().zip(&r.profile) {
            w.write_record([sig12(r.eps), sig12(*t), sig12(*d)]).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub example: String,
    pub epsilon: f64,
    pub sup_dev: f64,
    pub adiab_resid: f64,
    pub comm_resid: f64,
    pub runtime_ms: u64,
}

/// Reads a report CSV back.
pub fn read_csv(input: impl Read) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(io)?.iter().map(str::to_owned).collect();
    if header != HEADER {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    let rows: Vec<CsvRow> = r.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| Error::Parse(e.to_string()))?;
    if rows.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(rows)
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn num(x: f64) -> String {
    format!("{x:.2}")
}

/// Log-log scatter of `(ε, value)` with the fitted line and, when given, a
/// guide of slope `expected` through the centroid of the data. Self-contained
/// SVG with fixed two-decimal coordinates.
pub fn plot_svg(title: &str, points: &[(f64, f64)], fit: Option<&SlopeFit>, expected: Option<f64>) -> Result<String> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(e, v)| *e > 0.0 && *v > 0.0 && v.is_finite())
        .map(|(e, v)| (e.log10(), v.log10()))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    // all-zero sweeps (trivially adiabatic) get an empty frame over their ε-range
    let zero = logs.is_empty();
    let xs = points.iter().filter(|p| p.0 > 0.0).map(|p| p.0.log10());
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !x0.is_finite() {
        return Err(Error::EmptyGrid);
    }
    let (mut y0, mut y1) = if zero {
        (-16.0, -15.0)
    } else {
        logs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)))
    };
    x0 = x0.floor();
    x1 = x1.ceil().max(x0 + 1.0);
    y0 = y0.floor();
    y1 = y1.ceil().max(y0 + 1.0);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let sy = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);
    // a line y = c + s·x clipped to the y-range, as an SVG path
    let line = |c: f64, s: f64| {
        let mut xa = x0;
        let mut xb = x1;
        if s != 0.0 {
            let (ya, yb) = ((y0 - c) / s, (y1 - c) / s);
            let (lo, hi) = if ya < yb { (ya, yb) } else { (yb, ya) };
            xa = xa.max(lo);
            xb = xb.min(hi);
        }
        format!("M {} {} L {} {}", num(sx(xa)), num(sy(c + s * xa)), num(sx(xb)), num(sy(c + s * xb)))
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, num(W / 2.0), escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        num(LEFT),
        num(TOP),
        num(W - LEFT - RIGHT),
        num(H - TOP - BOTTOM)
    );
    for k in (x0 as i32)..=(x1 as i32) {
        let x = sx(k as f64);
        let _ = writeln!(s, r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>"#, num(x), num(H - BOTTOM), num(H - BOTTOM + 5.0));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">1e{k}</text>"#, num(x), num(H - BOTTOM + 19.0));
    }
    for k in (y0 as i32)..=(y1 as i32) {
        let y = sy(k as f64);
        let _ = writeln!(s, r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/>"#, num(LEFT - 5.0), num(y), num(LEFT));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="end">1e{k}</text>"#, num(LEFT - 8.0), num(y + 4.0));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">epsilon</text>"#, num(W / 2.0), num(H - 10.0));
    let _ = writeln!(s, r#"<text x="16" y="{0}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {0})">deviation</text>"#, num(H / 2.0));
    if let Some(f) = fit {
        // ln v = a + s ln ε  ⇔  log v = a/ln10 + s log ε
        let c = f.intercept / std::f64::consts::LN_10;
        let _ = writeln!(s, r#"<path class="fit" d="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#, line(c, f.slope));
    }
    if zero {
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">all deviations are zero</text>"#, num(W / 2.0), num(H / 2.0));
    }
    if let (Some(r), false) = (expected, zero) {
        let n = logs.len() as f64;
        let (mx, my) = logs.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
        let _ = writeln!(
            s,
            r#"<path class="expected" d="{}" stroke="darkorange" stroke-width="2" stroke-dasharray="6 4" fill="none"/>"#,
            line(my - r * mx, r)
        );
    }
    for (x, y) in &logs {
        let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="4" fill="black"/>"#, num(sx(*x)), num(sy(*y)));
    }
    let mut legend = Vec::new();
    if let Some(f) = fit {
        legend.push(("steelblue", "", format!("fit: slope {:.3} [{:.3}, {:.3}]", f.slope, f.lo, f.hi)));
    }
    if let Some(r) = expected {
        legend.push(("darkorange", r#" stroke-dasharray="6 4""#, format!("expected: slope {r:.3}")));
    }
    for (k, (color, dash, text)) in legend.iter().enumerate() {
        let y = TOP + 18.0 + 18.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{color}" stroke-width="2"{dash}/>"#, num(LEFT + 12.0), num(y), num(LEFT + 40.0));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#, num(LEFT + 46.0), num(y + 4.0), escape(text));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
