//! Deterministic SVG plots and a plain-text summary of run artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::artifacts::{write_atomic, Heatmap, RunPaths};
use super::scan::ScanResult;
use crate::error::{Error, Result};
use crate::model::Species;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const MAX_CELLS: usize = 160;

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1.0);
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line plot with markers, labeled axes and a legend.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let all = || series.iter().flat_map(|s| s.points.iter().copied());
    let (x0, x1) = range(all().map(|p| p.0)).ok_or_else(|| Error::Missing(format!("no finite data for `{title}`")))?;
    let (y0, y1) = range(all().map(|p| p.1)).ok_or_else(|| Error::Missing(format!("no finite data for `{title}`")))?;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();
    writeln!(svg, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        writeln!(svg, r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0).unwrap();
        writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, tick_label(xv)).unwrap();
        writeln!(svg, r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#, LEFT - 5.0).unwrap();
        writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, py + 4.0, tick_label(yv)).unwrap();
    }
    writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 15.0, escape(x_label)).unwrap();
    writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" ")).unwrap();
        }
        if pts.len() <= 50 {
            for &(x, y) in &pts {
                writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y)).unwrap();
            }
        }
        let ly = TOP + 16.0 + 16.0 * k as f64;
        writeln!(svg, r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, LEFT + pw - 110.0, LEFT + pw - 90.0).unwrap();
        writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, LEFT + pw - 85.0, ly + 4.0, escape(s.label)).unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn color(f: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let f = f.clamp(0.0, 1.0) * 4.0;
    let i = (f.floor() as usize).min(3);
    let w = f - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + w * (q - p)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// x-versus-t heatmap, downsampled by striding to at most 160 x 160 cells.
pub fn heatmap_plot(title: &str, map: &Heatmap) -> Result<String> {
    let (rows, cols) = (map.times.len(), map.x.len());
    if rows == 0 || cols == 0 {
        return Err(Error::Missing(format!("empty heatmap for `{title}`")));
    }
    let rstep = rows.div_ceil(MAX_CELLS);
    let cstep = cols.div_ceil(MAX_CELLS);
    let ri: Vec<usize> = (0..rows).step_by(rstep).collect();
    let ci: Vec<usize> = (0..cols).step_by(cstep).collect();
    let (lo, hi) = range(map.values.iter().copied()).unwrap_or((0.0, 1.0));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let (cw, chh) = (pw / ci.len() as f64, ph / ri.len() as f64);
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12" shape-rendering="crispEdges">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();
    for (a, &r) in ri.iter().enumerate() {
        for (b, &c) in ci.iter().enumerate() {
            let v = map.values[r * cols + c];
            let f = if v.is_finite() { (v - lo) / (hi - lo) } else { 0.0 };
            writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                LEFT + b as f64 * cw,
                TOP + ph - (a + 1) as f64 * chh,
                cw + 0.05,
                chh + 0.05,
                color(f)
            )
            .unwrap();
        }
    }
    let (t0, t1) = (map.times[0], map.times[rows - 1]);
    let (x0, x1) = (map.x[0], map.x[cols - 1]);
    writeln!(svg, r#"<text x="{LEFT}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, tick_label(x0)).unwrap();
    writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw, TOP + ph + 18.0, tick_label(x1)).unwrap();
    writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, TOP + ph, tick_label(t0)).unwrap();
    writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, TOP + 10.0, tick_label(t1)).unwrap();
    writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">x</text>"#, LEFT + pw / 2.0, HEIGHT - 15.0).unwrap();
    writeln!(svg, r#"<text x="20" y="{:.2}" text-anchor="middle">t</text>"#, TOP + ph / 2.0).unwrap();
    writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">range {} .. {}</text>"#, WIDTH - RIGHT, HEIGHT - 15.0, tick_label(lo), tick_label(hi)).unwrap();
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Trajectory columns needed for the report.
struct Trajectory {
    t: Vec<f64>,
    var_b: Vec<f64>,
    var_f: Vec<f64>,
    energy: Vec<f64>,
    norm_error: Vec<f64>,
}

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut traj = Trajectory {
        t: Vec::new(),
        var_b: Vec::new(),
        var_f: Vec::new(),
        energy: Vec::new(),
        norm_error: Vec::new(),
    };
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let v: Vec<f64> = line
            .split(',')
            .take(6)
            .map(|f| f.parse().map_err(|_| Error::Format(format!("bad number `{f}` in {}", path.display()))))
            .collect::<Result<_>>()?;
        if v.len() < 6 {
            return Err(Error::Format(format!("short row in {}", path.display())));
        }
        traj.t.push(v[0]);
        traj.energy.push(v[1]);
        traj.norm_error.push(v[2]);
        traj.var_b.push(v[4]);
        traj.var_f.push(v[5]);
    }
    if traj.t.is_empty() {
        return Err(Error::Missing(format!("{} has no rows", path.display())));
    }
    Ok(traj)
}

/// Plot whatever artifacts `input` holds (a run directory, a scan directory,
/// or both) into `out`, returning the files written.
pub fn emit_report(input: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let run = RunPaths::new(input);
    let scan_path = input.join("scan.csv");
    let has_traj = run.trajectory().exists();
    let has_scan = scan_path.exists();
    if !has_traj && !has_scan {
        return Err(Error::Missing(format!("no trajectory.csv or scan.csv in {}", input.display())));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let mut summary = String::new();
    let emit = |name: &str, body: &str, written: &mut Vec<PathBuf>| -> Result<()> {
        let p = out.join(name);
        write_atomic(&p, body.as_bytes())?;
        written.push(p);
        Ok(())
    };
    if has_traj {
        let traj = read_trajectory(&run.trajectory())?;
        let pts = |v: &[f64]| traj.t.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
        let svg = line_plot(
            "position variance",
            "t",
            "variance",
            &[
                Series { label: "bosons", points: pts(&traj.var_b) },
                Series { label: "fermions", points: pts(&traj.var_f) },
            ],
        )?;
        emit("variance.svg", &svg, &mut written)?;
        for s in Species::BOTH {
            let path = run.density_heatmap(s);
            if path.exists() {
                let map = Heatmap::read(&path)?;
                let name = format!("density_{}.svg", s.label().to_lowercase());
                emit(&name, &heatmap_plot(&format!("density of species {}", s.label()), &map)?, &mut written)?;
            }
        }
        let last = traj.t.len() - 1;
        let e0 = traj.energy[0];
        let drift = traj.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE);
        writeln!(summary, "trajectory: {} rows, t = {} .. {}", traj.t.len(), traj.t[0], traj.t[last]).unwrap();
        writeln!(summary, "variance B: {:.6} -> {:.6}", traj.var_b[0], traj.var_b[last]).unwrap();
        writeln!(summary, "variance F: {:.6} -> {:.6}", traj.var_f[0], traj.var_f[last]).unwrap();
        writeln!(summary, "relative energy drift: {drift:.3e}").unwrap();
        writeln!(summary, "max norm error: {:.3e}", traj.norm_error.iter().copied().fold(0.0, f64::max)).unwrap();
    }
    if has_scan {
        let text = fs::read_to_string(&scan_path).map_err(|e| Error::io(&scan_path, e))?;
        let rows = ScanResult::rows_from_csv(&text)?;
        if rows.is_empty() {
            return Err(Error::Missing(format!("{} has no rows", scan_path.display())));
        }
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| a.omega_f.total_cmp(&b.omega_f));
        let series = |f: fn(&super::scan::ScanRow) -> f64| sorted.iter().map(|r| (r.omega_f, f(r))).collect::<Vec<_>>();
        let svg = line_plot(
            "mean position variance",
            "postquench frequency",
            "mean variance",
            &[
                Series { label: "bosons", points: series(|r| r.mean_var_b) },
                Series { label: "fermions", points: series(|r| r.mean_var_f) },
            ],
        )?;
        emit("mean_variance.svg", &svg, &mut written)?;
        writeln!(summary, "scan: {} rows", sorted.len()).unwrap();
        for r in &sorted {
            let status = r.failure.as_deref().unwrap_or("ok");
            writeln!(summary, "  omega_f = {:.6}: B {:.6}, F {:.6} ({status})", r.omega_f, r.mean_var_b, r.mean_var_f).unwrap();
        }
    }
    emit("summary.txt", &summary, &mut written)?;
    Ok(written)
}
