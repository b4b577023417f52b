//! `series.csv`, `series.svg`, `meta.json` and sweep tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use super::{AggregateSeries, ExperimentResult};
use crate::mathkit::RngStream;
use crate::{Error, Result};

pub const SERIES_HEADER: &str = "t,mean_dist_sq,lo_dist_sq,hi_dist_sq,mean_gap,lo_gap,hi_gap,bound_dist,bound_gap";
pub const SWEEP_HEADER: &str = "param_value,mean_final,lo_final,hi_final,bound_final";

/// 17 significant digits in scientific notation; round-trips through
/// `str::parse::<f64>`. Non-finite values print as `NaN`, `inf`, `-inf`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn series_csv(series: &AggregateSeries) -> String {
    let mut out = String::with_capacity(200 * (series.len() + 1));
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for (i, t) in series.t.iter().enumerate() {
        let cols = [
            series.dist.mean[i],
            series.dist.lo[i],
            series.dist.hi[i],
            series.gap.mean[i],
            series.gap.lo[i],
            series.gap.hi[i],
            series.bound_dist[i],
            series.bound_gap[i],
        ];
        out.push_str(&t.to_string());
        for v in cols {
            out.push(',');
            out.push_str(&format_float(v));
        }
        out.push('\n');
    }
    out
}

pub fn write_series_csv(series: &AggregateSeries, path: &Path) -> Result<()> {
    write_file(path, &series_csv(series))
}

const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_T: f64 = 40.0;
const GAP_X: f64 = 110.0;

struct Panel<'a> {
    title: &'a str,
    mean: &'a [f64],
    lo: &'a [f64],
    hi: &'a [f64],
    bound: &'a [f64],
}

fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite() && *v > 0.0) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let (mut a, mut b) = (lo.log10().floor(), hi.log10().ceil());
    a = a.max(b - 12.0);
    if a >= b {
        a -= 1.0;
        b += 1.0;
    }
    (a, b)
}

fn render_panel(out: &mut String, p: &Panel, x0: f64, ts: &[usize]) {
    let tmax = ts.last().copied().unwrap_or(0).max(1) as f64;
    let (la, lb) = log_range(p.mean.iter().chain(p.lo).chain(p.hi).chain(p.bound).copied());
    let floor = 10f64.powf(la);
    let sx = |t: usize| x0 + PANEL_W * t as f64 / tmax;
    let sy = |v: f64| {
        let v = if v.is_finite() && v > floor { v } else { floor };
        MARGIN_T + PANEL_H * (1.0 - (v.log10() - la) / (lb - la))
    };
    let pt = |t: usize, v: f64| format!("{:.2},{:.2}", sx(t), sy(v));

    let _ = writeln!(
        out,
        r##"<rect x="{x0}" y="{MARGIN_T}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
        x0 + PANEL_W / 2.0,
        MARGIN_T - 12.0,
        p.title
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">t</text>"#,
        x0 + PANEL_W / 2.0,
        MARGIN_T + PANEL_H + 34.0
    );
    for e in (la as i64)..=(lb as i64) {
        let y = MARGIN_T + PANEL_H * (1.0 - (e as f64 - la) / (lb - la));
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="#444"/><text x="{:.1}" y="{:.2}" text-anchor="end" font-size="11">1e{e}</text>"##,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    for k in 0..=4 {
        let t = (tmax * k as f64 / 4.0).round() as usize;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{t}</text>"#,
            sx(t),
            MARGIN_T + PANEL_H + 16.0
        );
    }

    let mut band: Vec<String> = ts.iter().zip(p.hi).map(|(t, v)| pt(*t, *v)).collect();
    band.extend(ts.iter().zip(p.lo).rev().map(|(t, v)| pt(*t, *v)));
    let _ = writeln!(
        out,
        r##"<polygon class="band" points="{}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##,
        band.join(" ")
    );
    let mean: Vec<String> = ts.iter().zip(p.mean).map(|(t, v)| pt(*t, *v)).collect();
    let _ = writeln!(
        out,
        r##"<polyline class="mean" points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##,
        mean.join(" ")
    );
    let bound: Vec<String> = ts
        .iter()
        .zip(p.bound)
        .filter(|(_, v)| v.is_finite())
        .map(|(t, v)| pt(*t, *v))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline class="bound" points="{}" fill="none" stroke="#d62728" stroke-width="1.5" stroke-dasharray="6,3"/>"##,
        bound.join(" ")
    );
}

/// Two semilog panels (distance, gap), each with a percentile band, the
/// mean and the envelope.
pub fn render_svg(series: &AggregateSeries) -> String {
    let width = MARGIN_L + 2.0 * PANEL_W + GAP_X + 20.0;
    let height = MARGIN_T + PANEL_H + 60.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let panels = [
        Panel {
            title: "squared distance to reference",
            mean: &series.dist.mean,
            lo: &series.dist.lo,
            hi: &series.dist.hi,
            bound: &series.bound_dist,
        },
        Panel {
            title: "objective gap",
            mean: &series.gap.mean,
            lo: &series.gap.lo,
            hi: &series.gap.hi,
            bound: &series.bound_gap,
        },
    ];
    for (i, p) in panels.iter().enumerate() {
        let _ = writeln!(out, r#"<g class="panel" id="panel-{i}">"#);
        render_panel(&mut out, p, MARGIN_L + i as f64 * (PANEL_W + GAP_X), &series.t);
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</svg>");
    out
}

pub fn meta_json(result: &ExperimentResult) -> Result<String> {
    let meta = json!({
        "library": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "rng": RngStream::GENERATOR,
        "config": result.config,
        "resolved": result.resolved,
        "trials": result.series.trials,
        "band": {
            "level": result.series.band_level,
            "method": "pointwise empirical percentiles (type-7 interpolation)",
        },
        "bounds": {
            "bound_dist": {
                "family": "dist_exp",
                "form": "(1 - mu_eff*eta)^t * D0 + 2*(eta*sigma^2/mu_eff + (drift/(mu_eff*eta))^2)",
                "constants": "coefficient 1 on the initial term, 2 on noise plus drift; D0 is the exact initial squared distance",
            },
            "bound_gap": {
                "family": "gap_exp",
                "form": "3*(1 - rho)^t * D0 + eta*sigma^2 + 88*drift^2/(mu_hat*eta^2), rho = mu_hat*eta/(2 - mu*eta)",
                "constants": "initial-term absorption folded in (3 and 80 + 8); D0 is the exact initial gap",
            },
            "decay_schedules": "each epoch restarts the envelope from its value at the epoch boundary",
        },
    });
    Ok(serde_json::to_string_pretty(&meta)? + "\n")
}

pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_series_csv(&result.series, &dir.join("series.csv"))?;
    write_file(&dir.join("series.svg"), &render_svg(&result.series))?;
    write_file(&dir.join("meta.json"), &meta_json(result)?)?;
    Ok(())
}

fn sweep_table(entries: &[(f64, ExperimentResult)], gap: bool) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for (value, r) in entries {
        let s = &r.series;
        let last = s.len() - 1;
        let (b, bound) = if gap { (&s.gap, &s.bound_gap) } else { (&s.dist, &s.bound_dist) };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_float(*value),
            format_float(b.mean[last]),
            format_float(b.lo[last]),
            format_float(b.hi[last]),
            format_float(bound[last])
        );
    }
    out
}

/// Writes `sweep.csv` (distance), `sweep_gap.csv` and one output
/// directory per sweep value.
pub fn write_sweep(dir: &Path, param: &str, entries: &[(f64, ExperimentResult)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("sweep.csv"), &sweep_table(entries, false))?;
    write_file(&dir.join("sweep_gap.csv"), &sweep_table(entries, true))?;
    for (value, r) in entries {
        write_outputs(r, &dir.join(format!("{param}_{value}")))?;
    }
    Ok(())
}
