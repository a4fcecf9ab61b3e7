//! Run summaries across run directories: error-vs-distance SVG plot and a
//! preset-by-configuration table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::{PROFILE_HEADER, SUMMARY_HEADER};
use crate::sim::read_table;

/// One evaluated run as read back from its directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub label: String,
    pub frames: usize,
    pub fused_error: f64,
    pub digital_error: f64,
    pub availability: f64,
    /// `(d, fused, digital)` mean errors per look-ahead distance.
    pub profile: Vec<(f64, Option<f64>, Option<f64>)>,
}

impl RunRecord {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join("evaluation.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(SUMMARY_HEADER) {
            return Err(Error::parse(&path, format!("expected header `{SUMMARY_HEADER}`")));
        }
        let row = lines.next().ok_or_else(|| Error::parse(&path, "no summary row"))?;
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 5 {
            return Err(Error::parse(&path, format!("expected 5 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(&path, format!("bad number `{s}`")));
        let profile = read_table(&run_dir.join("profile.csv"), PROFILE_HEADER)?
            .into_iter()
            .map(|r| (r[0], finite(r[1]), finite(r[2])))
            .collect();
        Ok(Self {
            label: f[0].to_string(),
            frames: f[1].parse().map_err(|_| Error::parse(&path, format!("bad frame count `{}`", f[1])))?,
            fused_error: num(f[2])?,
            digital_error: num(f[3])?,
            availability: num(f[4])?,
            profile,
        })
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// `dir` itself when it holds an evaluated run, otherwise every direct
/// subdirectory that does, in name order.
pub fn find_runs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join("evaluation.csv").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("evaluation.csv").is_file())
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("no evaluated runs under {}", dir.display())));
    }
    Ok(out)
}

pub const TABLE_HEADER: &str = "preset,runs,frames,fused_error_m,digital_only_error_m,availability,failure_rate";

/// One row per label (preset): run-averaged errors of both configurations.
pub fn summary_table(records: &[RunRecord]) -> String {
    let mut groups: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.label.as_str()).or_default().push(r);
    }
    let mut out = format!("{TABLE_HEADER}\n");
    for (label, rs) in groups {
        let n = rs.len() as f64;
        let mean = |f: fn(&RunRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
        let frames: usize = rs.iter().map(|r| r.frames).sum();
        let avail = rs.iter().map(|r| r.availability * r.frames as f64).sum::<f64>() / frames.max(1) as f64;
        let _ = writeln!(
            out,
            "{label},{},{frames},{:.4},{:.4},{avail:.4},{:.4}",
            rs.len(),
            mean(|r| r.fused_error),
            mean(|r| r.digital_error),
            1.0 - avail
        );
    }
    out
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Standalone SVG with one polyline per run (fused course, plus the
/// digital-only baseline dashed when `baseline` is set). Polyline
/// coordinates are in data units (meters) inside a scaling transform.
pub fn svg_plot(records: &[RunRecord], baseline: bool) -> String {
    let (w, h, margin) = (640.0, 400.0, 50.0);
    let x_max = records
        .iter()
        .flat_map(|r| r.profile.iter().map(|p| p.0))
        .fold(1.0f64, f64::max);
    let y_data = records
        .iter()
        .flat_map(|r| r.profile.iter().flat_map(|p| [p.1, p.2.filter(|_| baseline)]).flatten())
        .fold(0.0f64, f64::max);
    let y_max = nice_ceiling(y_data.max(0.01));
    let sx = (w - 2.0 * margin) / x_max;
    let sy = (h - 2.0 * margin) / y_max;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    // axes and ticks in pixel space
    let (x0, y0) = (margin, h - margin);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {m} V{y0} H{xe}" stroke="black" fill="none"/>"#,
        m = margin,
        xe = w - margin
    );
    for k in 0..=5 {
        let v = y_max * k as f64 / 5.0;
        let py = y0 - v * sy;
        let _ = writeln!(
            s,
            r#"<text x="{tx}" y="{ty:.1}" text-anchor="end">{v:.2}</text>"#,
            tx = x0 - 6.0,
            ty = py + 4.0
        );
        let dx = x_max * k as f64 / 5.0;
        let px = x0 + dx * sx;
        let _ = writeln!(
            s,
            r#"<text x="{px:.1}" y="{ty}" text-anchor="middle">{dx:.0}</text>"#,
            ty = y0 + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{cx}" y="{ty}" text-anchor="middle">look-ahead distance (m)</text>"#,
        cx = w / 2.0,
        ty = h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{cy}" transform="rotate(-90 14 {cy})" text-anchor="middle">lateral error (m)</text>"#,
        cy = h / 2.0
    );
    let _ = writeln!(
        s,
        r#"<g transform="translate({x0} {y0}) scale({sx:.6} {nsy:.6})" fill="none">"#,
        nsy = -sy
    );
    let mut legend = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for (digital, dash) in [(false, ""), (true, r#" stroke-dasharray="6 4""#)] {
            if digital && !baseline {
                continue;
            }
            let pts: Vec<String> = r
                .profile
                .iter()
                .filter_map(|p| {
                    let v = if digital { p.2 } else { p.1 }?;
                    Some(format!("{:.3},{v:.5}", p.0))
                })
                .collect();
            if pts.is_empty() {
                continue;
            }
            let name = format!("{} {}", r.label, if digital { "digital-only" } else { "fused" });
            let _ = writeln!(
                s,
                r#"<polyline data-label="{name}" stroke="{color}" stroke-width="1.5" vector-effect="non-scaling-stroke"{dash} points="{}"/>"#,
                pts.join(" ")
            );
            legend.push((name, color, dash));
        }
    }
    s.push_str("</g>\n");
    for (i, (name, color, dash)) in legend.iter().enumerate() {
        let y = margin + 14.0 * i as f64;
        let x = w - margin - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y}" x2="{x2}" y2="{y}" stroke="{color}" stroke-width="1.5"{dash}/><text x="{tx}" y="{ty}">{name}</text>"#,
            x2 = x + 20.0,
            tx = x + 26.0,
            ty = y + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// 1, 2 or 5 times a power of ten, at least `v`.
fn nice_ceiling(v: f64) -> f64 {
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * p).find(|&c| c >= v).unwrap_or(10.0 * p)
}

/// Largest y coordinate over every polyline of an SVG produced by
/// [`svg_plot`] (data units).
pub fn max_polyline_y(svg: &str) -> Option<f64> {
    let mut best: Option<f64> = None;
    for part in svg.split("<polyline").skip(1) {
        let pts = part.split("points=\"").nth(1)?.split('"').next()?;
        for pair in pts.split_whitespace() {
            let y: f64 = pair.split(',').nth(1)?.parse().ok()?;
            best = Some(best.map_or(y, |b: f64| b.max(y)));
        }
    }
    best
}
