//! Results tables (CSV) and ρ-sweep plots (SVG).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalMetrics;

pub const MEAN_FOLD: &str = "mean";

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub arch: String,
    pub view: String,
    pub rho: f64,
    pub omega: Option<f64>,
    /// Held-out subject id, or `mean` for the aggregate row.
    pub fold: String,
    pub tpr: f64,
    pub fpr: f64,
    pub gmean: f64,
}

impl ResultRow {
    pub fn metrics(&self) -> EvalMetrics {
        EvalMetrics {
            tpr: self.tpr,
            fpr: self.fpr,
            tnr: 1.0 - self.fpr,
            gmean: self.gmean,
        }
    }

    pub fn is_mean(&self) -> bool {
        self.fold == MEAN_FOLD
    }
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::input("no result rows to export"));
    }
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_results_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::input("no result rows to export"));
    }
    write_results_csv(rows, File::create(path)?)
}

pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

const PANEL_W: f64 = 340.0;
const PANEL_H: f64 = 280.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;
const LEGEND_H: f64 = 28.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Three panels (TPR, FPR, gmean against ρ on a log axis), one polyline per
/// series. Only `mean` rows are plotted.
pub fn sweep_svg(rows: &[ResultRow]) -> Result<String> {
    let means: Vec<&ResultRow> = rows.iter().filter(|r| r.is_mean()).collect();
    if means.is_empty() {
        return Err(Error::input("sweep table has no mean rows to plot"));
    }
    if means.iter().any(|r| !(r.rho > 0.0)) {
        return Err(Error::input("rho must be > 0 on a log axis"));
    }
    let combos: std::collections::BTreeSet<(&str, &str)> =
        means.iter().map(|r| (r.arch.as_str(), r.view.as_str())).collect();
    let label = |r: &ResultRow| -> String {
        if combos.len() > 1 {
            format!("{} {} {}", r.method, r.view, r.arch)
        } else {
            r.method.clone()
        }
    };

    // Series in first-appearance order, points sorted by rho.
    let mut order: Vec<String> = Vec::new();
    let mut series: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in &means {
        let key = label(r);
        if !series.contains_key(&key) {
            order.push(key.clone());
        }
        series.entry(key).or_default().push(r);
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    }

    let lx_min = means.iter().map(|r| r.rho.log10()).fold(f64::INFINITY, f64::min);
    let mut lx_max = means.iter().map(|r| r.rho.log10()).fold(f64::NEG_INFINITY, f64::max);
    if lx_max - lx_min < 1e-9 {
        lx_max = lx_min + 1.0;
    }
    let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    let x_of = |rho: f64| MARGIN_L + (rho.log10() - lx_min) / (lx_max - lx_min) * plot_w;
    let y_of = |v: f64| MARGIN_T + (1.0 - v.clamp(0.0, 1.0)) * plot_h;

    let width = 3.0 * PANEL_W;
    let height = PANEL_H + LEGEND_H;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);

    let panels: [(&str, fn(&ResultRow) -> f64); 3] = [("TPR", |r| r.tpr), ("FPR", |r| r.fpr), ("gmean", |r| r.gmean)];
    for (p, (title, metric)) in panels.iter().enumerate() {
        let ox = p as f64 * PANEL_W;
        let _ = writeln!(s, r#"<g class="panel" id="panel-{}" transform="translate({ox},0)">"#, title.to_lowercase());
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="13" font-weight="bold">{title} vs. rho</text>"#,
            MARGIN_L + plot_w / 2.0
        );
        // axes
        let (x0, x1, y0, y1) = (MARGIN_L, MARGIN_L + plot_w, MARGIN_T, MARGIN_T + plot_h);
        let _ = writeln!(s, r#"<line class="axis" x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#);
        let _ = writeln!(s, r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
        for k in 0..=4 {
            let v = k as f64 / 4.0;
            let y = y_of(v);
            let _ = writeln!(s, r##"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/><line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#dddddd"/>"##, x0 - 4.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, x0 - 6.0, y + 4.0);
        }
        let mut decade = lx_min.floor() as i32;
        while f64::from(decade) <= lx_max.ceil() {
            let rho = 10f64.powi(decade);
            if rho.log10() >= lx_min - 1e-9 && rho.log10() <= lx_max + 1e-9 {
                let x = x_of(rho);
                let _ = writeln!(s, r#"<line x1="{x}" y1="{y1}" x2="{x}" y2="{}" stroke="black"/>"#, y1 + 4.0);
                let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{rho}</text>"#, y1 + 16.0);
            }
            decade += 1;
        }
        let _ = writeln!(
            s,
            r#"<text class="xlabel" x="{}" y="{}" text-anchor="middle">rho (log scale)</text>"#,
            MARGIN_L + plot_w / 2.0,
            y1 + 34.0
        );
        let _ = writeln!(
            s,
            r#"<text class="ylabel" x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{title}</text>"#,
            MARGIN_T + plot_h / 2.0,
            MARGIN_T + plot_h / 2.0
        );
        for (i, key) in order.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let points: Vec<String> = series[key]
                .iter()
                .map(|r| format!("{:.2},{:.2}", x_of(r.rho), y_of(metric(r))))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="series" data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                escape(key),
                points.join(" ")
            );
        }
        let _ = writeln!(s, "</g>");
    }

    // legend
    let _ = writeln!(s, r#"<g class="legend" transform="translate({MARGIN_L},{})">"#, PANEL_H + 4.0);
    for (i, key) in order.iter().enumerate() {
        let x = i as f64 * 140.0;
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="8" x2="{}" y2="8" stroke="{color}" stroke-width="2"/><text x="{}" y="12">{}</text>"#,
            x + 20.0,
            x + 24.0,
            escape(key)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn export_sweep_svg(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let svg = sweep_svg(rows)?;
    File::create(path)?.write_all(svg.as_bytes())?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
