//! Summary table over a results CSV: per-configuration means across repeats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use crate::experiment::{format_sig9, CSV_HEADER, UNDEFINED};

/// Means across the rows of one `(method, K, M, N, alpha)` group. Undefined
/// cells are left out of their column's mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub k: String,
    pub m: String,
    pub n: String,
    pub alpha: String,
    pub rows: usize,
    pub ok: usize,
    pub pi_t: Option<f64>,
    pub pi_t_pct: Option<f64>,
    pub pi_a: Option<f64>,
    pub pi_a_pct: Option<f64>,
    pub eta: Option<f64>,
}

#[derive(Default)]
struct Acc {
    rows: usize,
    ok: usize,
    sums: [(f64, usize); 5],
}

pub fn summarize(csv_path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(csv_path).with_context(|| format!("opening {}", csv_path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("column {name} missing from {}", csv_path.display()))
    };
    let key_cols = [col("method")?, col("K")?, col("M")?, col("N")?, col("alpha")?];
    let value_cols = [col("pi_T")?, col("pi_T_pct")?, col("pi_A")?, col("pi_A_pct")?, col("eta")?];
    let status_col = col("status")?;
    debug_assert_eq!(headers.len(), CSV_HEADER.len());

    let mut groups: BTreeMap<Vec<String>, Acc> = BTreeMap::new();
    let mut order: Vec<Vec<String>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let key: Vec<String> = key_cols.iter().map(|&c| rec.get(c).unwrap_or("").to_string()).collect();
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        let acc = groups.entry(key).or_default();
        acc.rows += 1;
        if rec.get(status_col) == Some("ok") {
            acc.ok += 1;
        }
        for (slot, &c) in acc.sums.iter_mut().zip(&value_cols) {
            let cell = rec.get(c).unwrap_or(UNDEFINED);
            if cell == UNDEFINED {
                continue;
            }
            let v: f64 = cell
                .parse()
                .with_context(|| format!("{}: row {}: bad number {cell:?}", csv_path.display(), i + 2))?;
            slot.0 += v;
            slot.1 += 1;
        }
    }

    Ok(order
        .into_iter()
        .map(|key| {
            let acc = &groups[&key];
            let mean = |j: usize| {
                let (s, c) = acc.sums[j];
                (c > 0).then(|| s / c as f64)
            };
            SummaryRow {
                method: key[0].clone(),
                k: key[1].clone(),
                m: key[2].clone(),
                n: key[3].clone(),
                alpha: key[4].clone(),
                rows: acc.rows,
                ok: acc.ok,
                pi_t: mean(0),
                pi_t_pct: mean(1),
                pi_a: mean(2),
                pi_a_pct: mean(3),
                eta: mean(4),
            }
        })
        .collect())
}

pub fn render_table(rows: &[SummaryRow]) -> String {
    let cell = |x: Option<f64>| x.map_or_else(|| UNDEFINED.to_string(), |v| format_sig9((v * 1e6).round() / 1e6));
    let header = ["method", "K", "M", "N", "alpha", "rows", "ok", "pi_T", "pi_T_pct", "pi_A", "pi_A_pct", "eta"];
    let body: Vec<[String; 12]> = rows
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                r.k.clone(),
                r.m.clone(),
                r.n.clone(),
                if r.alpha.is_empty() { "-".into() } else { r.alpha.clone() },
                r.rows.to_string(),
                r.ok.to_string(),
                cell(r.pi_t),
                cell(r.pi_t_pct),
                cell(r.pi_a),
                cell(r.pi_a_pct),
                cell(r.eta),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for line in &body {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut push_line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells.zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    push_line(&mut header.iter().copied());
    for line in &body {
        push_line(&mut line.iter().map(String::as_str));
    }
    out
}
