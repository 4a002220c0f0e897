//! Merging tables across run directories and rendering risk curves.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Tables merged row-wise by `report`.
pub const MERGED_TABLES: [&str; 4] = ["eval.csv", "dual_gap.csv", "scopf_gap.csv", "scopf_violations.csv"];

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let mut rd = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header: Vec<String> = rd
            .headers()
            .map_err(|e| CliError::Data(format!("{origin}: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rd
            .records()
            .map(|r| {
                r.map(|r| r.iter().map(str::to_string).collect())
                    .map_err(|e| CliError::Data(format!("{origin}: {e}")))
            })
            .collect::<CliResult<_>>()?;
        Ok(Self { header, rows })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Union of the rows of same-schema tables, with a leading `run` column.
/// Every table must carry exactly the columns of the first one.
pub fn merge(tables: &[(String, Table)]) -> CliResult<Table> {
    let Some((_, first)) = tables.first() else {
        return Err(CliError::Data("nothing to merge".into()));
    };
    let mut header = vec!["run".to_string()];
    header.extend(first.header.iter().cloned());
    let mut rows = Vec::new();
    for (run, t) in tables {
        let idx = first
            .header
            .iter()
            .map(|c| t.column(c).ok_or_else(|| CliError::Schema(format!("{run}: missing column {c}"))))
            .collect::<CliResult<Vec<usize>>>()?;
        if let Some(extra) = t.header.iter().find(|c| !first.header.contains(c)) {
            return Err(CliError::Schema(format!("{run}: unexpected column {extra}")));
        }
        for r in &t.rows {
            let mut row = vec![run.clone()];
            row.extend(idx.iter().map(|&i| r[i].clone()));
            rows.push(row);
        }
    }
    Ok(Table { header, rows })
}

const CURVE_COLUMNS: [&str; 4] = ["balance", "thermal_any", "oracle_balance", "oracle_thermal_any"];

/// Side-by-side event-probability curves, one row per step.
pub fn risk_curves(runs: &[(String, Table)]) -> CliResult<Table> {
    let Some((_, first)) = runs.first() else {
        return Err(CliError::Data("no risk tables".into()));
    };
    let horizon = first.rows.len();
    let mut header = vec!["t".to_string()];
    let mut picks = Vec::new();
    for (run, t) in runs {
        for required in ["t", "balance", "thermal_any"] {
            if t.column(required).is_none() {
                return Err(CliError::Schema(format!("{run}: missing column {required}")));
            }
        }
        if t.rows.len() != horizon {
            return Err(CliError::Schema(format!("{run}: {} steps, expected {horizon}", t.rows.len())));
        }
        for c in CURVE_COLUMNS {
            if let Some(i) = t.column(c) {
                header.push(format!("{run}:{c}"));
                picks.push((t, i));
            }
        }
    }
    let rows = (0..horizon)
        .map(|k| {
            let mut row = vec![k.to_string()];
            row.extend(picks.iter().map(|(t, i)| t.rows[k][*i].clone()));
            row
        })
        .collect();
    Ok(Table { header, rows })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Static line plot of probability curves over steps.
pub fn curves_svg(title: &str, table: &Table) -> String {
    let (w, h, m) = (720.0, 360.0, 48.0);
    let n = table.rows.len().max(2) as f64 - 1.0;
    let series: Vec<(String, Vec<f64>)> = (1..table.header.len())
        .map(|c| {
            let ys = table.rows.iter().map(|r| r[c].parse().unwrap_or(f64::NAN)).collect();
            (table.header[c].clone(), ys)
        })
        .collect();
    let y_max = series
        .iter()
        .flat_map(|s| s.1.iter())
        .cloned()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
        .max(1e-3);
    let px = |k: usize| m + (w - 2.0 * m) * k as f64 / n;
    let py = |v: f64| h - m - (h - 2.0 * m) * v / y_max;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{m} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        t = m,
        b = h - m,
        r = w - m
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{y_max:.3}</text>"#, m - 4.0, m + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">0</text>"#, m - 4.0, h - m + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">step</text>"#, w / 2.0, h - 12.0);
    for (j, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[j % PALETTE.len()];
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(k, &v)| format!("{:.1},{:.1}", px(k), py(v)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        let ly = m + 16.0 * j as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11" fill="{color}" text-anchor="end">{}</text>"#, w - m - 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
