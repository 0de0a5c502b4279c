//! Figures (SVG) and their tidy CSV tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalReport, RegionTable, SweepResult};
use crate::simulate::SimResult;
use crate::stats::quantile;

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Linear map from data range to pixel range.
#[derive(Debug, Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(d0: f64, d1: f64, p0: f64, p1: f64) -> Self {
        let (d0, d1) = if (d1 - d0).abs() < 1e-12 { (d0 - 0.5, d1 + 0.5) } else { (d0, d1) };
        Scale { d0, d1, p0, p1 }
    }

    fn at(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1e6 {
        format!("{:.1}M", v / 1e6)
    } else if v.abs() >= 1e3 {
        format!("{:.0}k", v / 1e3)
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Axes frame with ticks and labels inside a panel.
struct Panel {
    x: Scale,
    y: Scale,
}

impl Panel {
    #[allow(clippy::too_many_arguments)]
    fn draw(
        svg: &mut String,
        origin: (f64, f64),
        size: (f64, f64),
        xr: (f64, f64),
        yr: (f64, f64),
        title: &str,
        xlabel: &str,
        ylabel: &str,
        xticks: &[(f64, String)],
    ) -> Panel {
        let (ox, oy) = origin;
        let (w, h) = size;
        let (l, r, t, b) = (ox + 55.0, ox + w - 10.0, oy + 25.0, oy + h - 40.0);
        let p = Panel {
            x: Scale::new(xr.0, xr.1, l, r),
            y: Scale::new(yr.0, yr.1, b, t),
        };
        let _ = writeln!(svg, r##"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##, r - l, b - t);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#, (l + r) / 2.0, oy + 16.0, esc(title));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#, (l + r) / 2.0, b + 32.0, esc(xlabel));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
            ox + 12.0,
            (t + b) / 2.0,
            ox + 12.0,
            (t + b) / 2.0,
            esc(ylabel)
        );
        for v in ticks(p.y.d0, p.y.d1, 4) {
            let y = p.y.at(v);
            let _ = writeln!(svg, r##"<line x1="{l:.1}" y1="{y:.1}" x2="{r:.1}" y2="{y:.1}" stroke="#ddd"/>"##);
            let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#, l - 4.0, y + 3.0, fmt_tick(v));
        }
        for (v, label) in xticks {
            let x = p.x.at(*v);
            let _ = writeln!(svg, r##"<line x1="{x:.1}" y1="{b:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/>"##, b + 4.0);
            let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#, b + 15.0, esc(label));
        }
        p
    }

    fn polyline(&self, svg: &mut String, pts: &[(f64, f64)], color: &str, markers: bool) {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", self.x.at(x), self.y.at(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#, path.join(" "));
        if markers {
            for &(x, y) in pts {
                let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}"/>"#, self.x.at(x), self.y.at(y));
            }
        }
    }
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn legend(svg: &mut String, x: f64, y: f64, names: &[String]) {
    for (i, n) in names.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(svg, r#"<line x1="{x:.1}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="{c}" stroke-width="3"/>"#, x + 18.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#, x + 24.0, yy + 4.0, esc(n));
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let pad = ((hi - lo) * 0.08).max(1e-3);
    (lo - pad, hi + pad)
}

/// Test accuracy against window size, one line per model.
pub fn sweep_svg(s: &SweepResult) -> String {
    let all: Vec<f64> = s.accuracy.iter().flatten().copied().collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut svg = svg_open(640.0, 400.0);
    let xr = (
        *s.windows.iter().min().unwrap_or(&0) as f64 - 0.5,
        *s.windows.iter().max().unwrap_or(&1) as f64 + 0.5,
    );
    let xt: Vec<(f64, String)> = s.windows.iter().map(|&w| (w as f64, w.to_string())).collect();
    let p = Panel::draw(&mut svg, (0.0, 0.0), (500.0, 400.0), xr, padded(lo, hi), "Accuracy by window size", "window w (months)", "test accuracy", &xt);
    for (m, row) in s.accuracy.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s.windows.iter().zip(row).map(|(&w, &a)| (w as f64, a)).collect();
        p.polyline(&mut svg, &pts, PALETTE[m % PALETTE.len()], true);
    }
    legend(&mut svg, 510.0, 40.0, &s.models);
    svg.push_str("</svg>\n");
    svg
}

/// Accuracy per test month, one line per model.
pub fn by_month_svg(e: &EvalReport) -> String {
    let months: Vec<_> = e.models.values().flat_map(|m| m.by_month.keys().copied()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let all: Vec<f64> = e.models.values().flat_map(|m| m.by_month.values().copied()).collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min).min(e.baseline);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut svg = svg_open(640.0, 400.0);
    let xt: Vec<(f64, String)> = months.iter().enumerate().map(|(i, m)| (i as f64, m.to_string())).collect();
    let p = Panel::draw(
        &mut svg,
        (0.0, 0.0),
        (500.0, 400.0),
        (-0.5, months.len() as f64 - 0.5),
        padded(lo, hi),
        "Accuracy per test month",
        "creation month",
        "accuracy",
        &xt,
    );
    let names: Vec<String> = e.models.keys().cloned().collect();
    for (k, m) in e.models.values().enumerate() {
        let pts: Vec<(f64, f64)> = months
            .iter()
            .enumerate()
            .filter_map(|(i, mo)| m.by_month.get(mo).map(|&a| (i as f64, a)))
            .collect();
        p.polyline(&mut svg, &pts, PALETTE[k % PALETTE.len()], true);
    }
    legend(&mut svg, 510.0, 40.0, &names);
    svg.push_str("</svg>\n");
    svg
}

pub fn roc_svg(e: &EvalReport) -> String {
    let mut svg = svg_open(640.0, 460.0);
    let xt: Vec<(f64, String)> = ticks(0.0, 1.0, 4).into_iter().map(|v| (v, format!("{v:.2}"))).collect();
    let p = Panel::draw(&mut svg, (0.0, 0.0), (480.0, 460.0), (0.0, 1.0), (0.0, 1.0), "ROC curves", "false positive rate", "true positive rate", &xt);
    p.polyline(&mut svg, &[(0.0, 0.0), (1.0, 1.0)], "#bbb", false);
    let mut names = Vec::new();
    for (k, (name, m)) in e.models.iter().enumerate() {
        p.polyline(&mut svg, &m.roc.points, PALETTE[k % PALETTE.len()], false);
        names.push(format!("{name} (AUC {:.3})", m.roc.auc));
    }
    legend(&mut svg, 490.0, 40.0, &names);
    svg.push_str("</svg>\n");
    svg
}

/// Box plots of savings differences: rows are months, columns are `n`.
pub fn savings_svg(sim: &SimResult) -> String {
    let months: Vec<_> = sim.months.iter().map(|m| m.month).collect();
    let ns = &sim.config.n_calls;
    let (pw, ph) = (360.0, 260.0);
    let mut svg = svg_open(pw * ns.len() as f64, ph * months.len() as f64);
    for (r, m) in months.iter().enumerate() {
        for (c, &n) in ns.iter().enumerate() {
            let cells: Vec<_> = sim.cells.iter().filter(|x| x.month == *m && x.n == n).collect();
            let vals: Vec<Vec<f64>> = cells.iter().map(|x| x.savings_diff.iter().map(|d| d.as_f64()).collect()).collect();
            let lo = vals.iter().flatten().copied().fold(0.0, f64::min);
            let hi = vals.iter().flatten().copied().fold(0.0, f64::max);
            let xt: Vec<(f64, String)> = cells.iter().enumerate().map(|(i, x)| (i as f64, format!("{:.1}", x.p))).collect();
            let p = Panel::draw(
                &mut svg,
                (c as f64 * pw, r as f64 * ph),
                (pw, ph),
                (-0.6, cells.len() as f64 - 0.4),
                padded(lo, hi),
                &format!("{m}, n = {n}"),
                "p",
                "savings difference (USD)",
                &xt,
            );
            for (i, v) in vals.iter().enumerate() {
                let q = |f| quantile(v, f).unwrap_or(0.0);
                let (x, half) = (p.x.at(i as f64), 8.0);
                let (y1, y3, ymed) = (p.y.at(q(0.25)), p.y.at(q(0.75)), p.y.at(q(0.5)));
                let _ = writeln!(svg, r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#555"/>"##, p.y.at(q(0.0)), p.y.at(q(1.0)));
                let _ = writeln!(
                    svg,
                    r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#9ecae1" stroke="#3182bd"/>"##,
                    x - half,
                    y3,
                    2.0 * half,
                    (y1 - y3).max(0.5)
                );
                let _ = writeln!(svg, r##"<line x1="{:.1}" y1="{ymed:.1}" x2="{:.1}" y2="{ymed:.1}" stroke="#d62728" stroke-width="1.5"/>"##, x - half, x + half);
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn by_month_csv(e: &EvalReport) -> String {
    let mut s = String::from("model,month,accuracy\n");
    for (name, m) in &e.models {
        for (mo, a) in &m.by_month {
            let _ = writeln!(s, "{name},{mo},{a:.6}");
        }
    }
    s
}

pub fn roc_csv(e: &EvalReport) -> String {
    let mut s = String::from("model,fpr,tpr\n");
    for (name, m) in &e.models {
        for (f, t) in &m.roc.points {
            let _ = writeln!(s, "{name},{f:.6},{t:.6}");
        }
    }
    s
}

pub fn accuracy_csv(e: &EvalReport) -> String {
    let mut s = format!("model,accuracy,auc\nbaseline,{:.6},\n", e.baseline);
    for (name, m) in &e.models {
        let _ = writeln!(s, "{name},{:.6},{:.6}", m.accuracy, m.roc.auc);
    }
    s
}

/// Table rendered as Markdown, dashes for untested cells.
pub fn region_markdown(t: &RegionTable) -> String {
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{:.2}%", 100.0 * a));
    let mut s = String::from("| Trained on | NA | LA | General |\n|---|---|---|---|\n");
    for r in &t.rows {
        let _ = writeln!(s, "| {} | {} | {} | {} |", r.trained_on, cell(r.na), cell(r.la), cell(r.general));
    }
    s
}

/// Everything the report can render; absent parts are skipped.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportInputs {
    pub sweep: Option<SweepResult>,
    pub eval: Option<EvalReport>,
    pub region: Option<RegionTable>,
    pub simulation: Option<SimResult>,
}

fn put(dir: &Path, name: &str, body: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    out.push(path);
    Ok(())
}

/// Writes all figures and tables under `dir` plus an `index.md`, returning
/// the written paths in a fixed order.
pub fn write_report(dir: &Path, inputs: &ReportInputs) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    let mut index = String::from("# Report\n\n");
    if let Some(s) = &inputs.sweep {
        put(dir, "accuracy_vs_window.csv", &s.to_csv(), &mut out)?;
        put(dir, "accuracy_vs_window.svg", &sweep_svg(s), &mut out)?;
        index.push_str("## Accuracy vs window size\n\n![](accuracy_vs_window.svg)\n\n");
        for (m, w) in s.models.iter().zip(&s.best_window) {
            let _ = writeln!(index, "- best window for {m}: {w}");
        }
        index.push('\n');
    }
    if let Some(e) = &inputs.eval {
        put(dir, "accuracy.csv", &accuracy_csv(e), &mut out)?;
        put(dir, "accuracy_by_month.csv", &by_month_csv(e), &mut out)?;
        put(dir, "accuracy_by_month.svg", &by_month_svg(e), &mut out)?;
        put(dir, "roc.csv", &roc_csv(e), &mut out)?;
        put(dir, "roc.svg", &roc_svg(e), &mut out)?;
        let _ = writeln!(index, "## Test accuracy\n\nbaseline {:.4} on {} invoices\n", e.baseline, e.n_test);
        for (name, m) in &e.models {
            let _ = writeln!(index, "- {name}: accuracy {:.4}, AUC {:.4}", m.accuracy, m.roc.auc);
        }
        index.push_str("\n## Accuracy per month\n\n![](accuracy_by_month.svg)\n\n## ROC\n\n![](roc.svg)\n\n");
    }
    if let Some(t) = &inputs.region {
        put(dir, "region_table.csv", &t.to_csv(), &mut out)?;
        let md = region_markdown(t);
        put(dir, "region_table.md", &md, &mut out)?;
        let _ = write!(index, "## Accuracy by training region\n\n{md}\n");
    }
    if let Some(sim) = &inputs.simulation {
        let mut tidy = Vec::new();
        sim.write_csv(&mut tidy)?;
        put(dir, "savings.csv", std::str::from_utf8(&tidy).expect("csv is utf-8"), &mut out)?;
        let mut summary = Vec::new();
        sim.write_summary_csv(&mut summary)?;
        put(dir, "savings_summary.csv", std::str::from_utf8(&summary).expect("csv is utf-8"), &mut out)?;
        put(dir, "savings.svg", &savings_svg(sim), &mut out)?;
        index.push_str("## Savings of the risk ranking over the greedy ranking\n\n![](savings.svg)\n");
    }
    put(dir, "index.md", &index, &mut out)?;
    Ok(out)
}
