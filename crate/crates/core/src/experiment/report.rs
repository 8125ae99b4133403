use std::path::Path;

use crate::diagnostics::{rank_aggregate, wilcoxon_signed_rank, Alternative, RankTable};
use crate::error::{Error, Result};

use super::benchmark::{read_results, summarize, ResultRow};
use super::write_atomic;

/// One-tailed test that the reference method has lower metrics than
/// `method`, paired by dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct WilcoxonRow {
    pub reference: String,
    pub method: String,
    pub n: usize,
    pub w_plus: Option<f64>,
    pub p_value: Option<f64>,
    pub exact: Option<bool>,
    /// Why no p-value was computed.
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub ranks: RankTable,
    pub wilcoxon: Vec<WilcoxonRow>,
}

/// Ranks per-dataset mean metrics (over successful seeds) and compares
/// every method with `reference`.
pub fn build_report(rows: &[ResultRow], reference: &str) -> Result<Report> {
    let summary = summarize(rows);
    let mut datasets: Vec<&str> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for s in &summary {
        if !datasets.contains(&s.dataset.as_str()) {
            datasets.push(&s.dataset);
        }
        if !methods.contains(&s.method.as_str()) {
            methods.push(&s.method);
        }
    }
    let mean_of = |d: &str, m: &str| {
        summary
            .iter()
            .find(|s| s.dataset == d && s.method == m)
            .and_then(|s| s.mean)
    };
    let mut cells = Vec::new();
    let mut missing = Vec::new();
    for d in &datasets {
        for m in &methods {
            match mean_of(d, m) {
                Some(v) => cells.push((d.to_string(), m.to_string(), v)),
                None => missing.push(format!("{d}/{m}")),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid(missing));
    }
    let ranks = rank_aggregate(&cells)?;
    let reference_col = ranks.column(reference);
    let wilcoxon = ranks
        .methods
        .iter()
        .filter(|m| m.as_str() != reference)
        .map(|m| {
            let mut row = WilcoxonRow {
                reference: reference.to_string(),
                method: m.clone(),
                n: ranks.datasets.len(),
                w_plus: None,
                p_value: None,
                exact: None,
                note: String::new(),
            };
            let Some(a) = &reference_col else {
                row.note = format!("reference method {reference} has no results");
                return row;
            };
            let b = ranks.column(m).expect("method is in the table");
            match wilcoxon_signed_rank(a, &b, Alternative::Less) {
                Ok(w) => {
                    row.w_plus = Some(w.w_plus);
                    row.p_value = Some(w.p_value);
                    row.exact = Some(w.exact);
                }
                Err(e) => row.note = e.to_string(),
            }
            row
        })
        .collect();
    Ok(Report { ranks, wilcoxon })
}

pub fn wilcoxon_csv(rows: &[WilcoxonRow]) -> String {
    let mut out = String::from("reference,method,n,w_plus,p_value,exact,note\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},\"{}\"\n",
            r.reference,
            r.method,
            r.n,
            r.w_plus.map(|v| v.to_string()).unwrap_or_default(),
            r.p_value.map(|v| format!("{v:.6}")).unwrap_or_default(),
            r.exact.map(|v| v.to_string()).unwrap_or_default(),
            r.note.replace('"', "'")
        ));
    }
    out
}

/// Reads every results CSV and writes `ranks.csv` and `wilcoxon.csv`.
pub fn run_report(paths: &[impl AsRef<Path>], reference: &str, out: &Path) -> Result<Report> {
    if paths.is_empty() {
        return Err(Error::Config("results: no results CSVs given".into()));
    }
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_results(p.as_ref())?);
    }
    let report = build_report(&rows, reference)?;
    write_atomic(&out.join("ranks.csv"), report.ranks.to_csv().as_bytes())?;
    write_atomic(
        &out.join("wilcoxon.csv"),
        wilcoxon_csv(&report.wilcoxon).as_bytes(),
    )?;
    Ok(report)
}
