//! Cross-run comparison tables and minimal SVG line charts.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;

use crate::runner::METRICS_HEADER;

#[derive(Debug, Clone)]
pub struct MethodRow {
    pub source: String,
    pub method: String,
    pub rounds: usize,
    pub final_test_acc: f64,
    pub final_test_stderr: f64,
    pub final_test_variance: f64,
    pub comm_units: u64,
    pub curve: Vec<(f64, f64)>,
}

/// Parses one or more metrics CSVs (which must share the schema), extracts
/// the final round per method per file, prints an accuracy/variance table,
/// and optionally writes a JSON summary and an SVG of the test curves.
pub fn compare_report(
    paths: &[std::path::PathBuf],
    json_out: Option<&Path>,
    svg_out: Option<&Path>,
) -> Result<String, String> {
    if paths.is_empty() {
        return Err("compare needs at least one metrics CSV".into());
    }
    let mut rows: Vec<MethodRow> = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != METRICS_HEADER {
            return Err(format!(
                "{} has a mismatched schema:\n  expected: {METRICS_HEADER}\n  got:      {header}",
                path.display()
            ));
        }
        let mut per_method: BTreeMap<String, MethodRow> = BTreeMap::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 9 {
                return Err(format!(
                    "{} line {}: expected 9 columns, got {}",
                    path.display(),
                    lineno + 2,
                    cells.len()
                ));
            }
            let parse = |i: usize| -> Result<f64, String> {
                cells[i]
                    .parse::<f64>()
                    .map_err(|e| format!("{} line {}: column {i}: {e}", path.display(), lineno + 2))
            };
            let round = parse(0)? as usize;
            let method = cells[1].to_string();
            let entry = per_method.entry(method.clone()).or_insert_with(|| MethodRow {
                source: path.display().to_string(),
                method,
                rounds: 0,
                final_test_acc: 0.0,
                final_test_stderr: 0.0,
                final_test_variance: 0.0,
                comm_units: 0,
                curve: Vec::new(),
            });
            entry.curve.push((round as f64, parse(3)?));
            if round + 1 >= entry.rounds {
                entry.rounds = round + 1;
                entry.final_test_acc = parse(3)?;
                entry.final_test_stderr = parse(4)?;
                entry.final_test_variance = parse(5)?;
                entry.comm_units = parse(7)? as u64;
            }
        }
        rows.extend(per_method.into_values());
    }

    let mut table = String::new();
    table.push_str(&format!(
        "{:<14} {:>8} {:>22} {:>10} {:>14}  source\n",
        "method", "rounds", "final test acc", "var.", "comm units"
    ));
    for r in &rows {
        table.push_str(&format!(
            "{:<14} {:>8} {:>14.4} ±{:>6.4} {:>10.4} {:>14}  {}\n",
            r.method, r.rounds, r.final_test_acc, r.final_test_stderr, r.final_test_variance,
            r.comm_units, r.source
        ));
    }

    if let Some(path) = json_out {
        let payload = json!(rows
            .iter()
            .map(|r| {
                json!({
                    "source": r.source,
                    "method": r.method,
                    "rounds": r.rounds,
                    "final_test_acc": r.final_test_acc,
                    "final_test_stderr": r.final_test_stderr,
                    "final_test_variance": r.final_test_variance,
                    "comm_units": r.comm_units,
                })
            })
            .collect::<Vec<_>>());
        std::fs::write(path, serde_json::to_string_pretty(&payload).expect("json"))
            .map_err(|e| format!("write {}: {e}", path.display()))?;
    }

    if let Some(path) = svg_out {
        let series: Vec<(String, Vec<(f64, f64)>)> = rows
            .iter()
            .map(|r| (format!("{} ({})", r.method, r.source), r.curve.clone()))
            .collect();
        std::fs::write(path, line_chart_svg("mean test accuracy per round", &series))
            .map_err(|e| format!("write {}: {e}", path.display()))?;
    }

    Ok(table)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// A small standalone SVG line chart; no display required anywhere.
pub fn line_chart_svg(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, ml, mr, mt, mb) = (720.0, 420.0, 60.0, 20.0, 40.0, 50.0);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, pts)| pts.iter().copied()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if all.is_empty() {
        x0 = 0.0;
        x1 = 1.0;
        y0 = 0.0;
        y1 = 1.0;
    }
    if (x1 - x0).abs() < 1e-12 {
        x1 = x0 + 1.0;
    }
    if (y1 - y0).abs() < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{title}</text>\n",
        w / 2.0
    );
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb,
        h - mb
    ));
    for i in 0..=4 {
        let xv = x0 + (x1 - x0) * i as f64 / 4.0;
        let yv = y0 + (y1 - y0) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.2}</text>\n",
            sx(xv),
            h - mb + 18.0,
            xv
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
            ml - 6.0,
            sy(yv) + 4.0,
            yv
        ));
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{:.1}\" x2=\"{}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
            sy(yv),
            w - mr,
            sy(yv)
        ));
    }
    for (si, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{label}</text>\n",
            ml + 10.0,
            mt + 16.0 * si as f64 + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
