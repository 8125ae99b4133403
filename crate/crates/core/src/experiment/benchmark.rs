use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{make_split, ColumnSchema, RawTable, Registry, Task};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::trainer::{cross_validate, grid_label, method_grid, CvData, Method, TrainConfig};

use super::{split_seed, train_seed, write_atomic, write_manifest, ExperimentConfig};

pub const RESULTS_HEADER: &str = "dataset,method,seed,lr,lambda1,lambda2,extra,metric,seconds";

/// One (dataset, method, seed) cell. `metric` is `None` when the cell failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub lr: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub extra: String,
    pub metric: Option<f64>,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Cross-validates `method` on one seed's split of `raw` and scores the
/// selected configuration on the held-out rows.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    raw: &RawTable,
    schema: &[ColumnSchema],
    task: Task,
    code: &str,
    method: Method,
    seed: u64,
    master_seed: u64,
    base: &TrainConfig,
) -> ResultRow {
    let start = Instant::now();
    let name = method.to_string();
    let outcome = (|| {
        let split = make_split(raw.len(), split_seed(master_seed, code, seed))?;
        let base = TrainConfig {
            seed: train_seed(master_seed, code, &name, seed),
            ..base.clone()
        };
        let grid = method_grid(method, &base);
        let data = CvData::Raw { raw, schema, task };
        let out = cross_validate(data, &split, &grid)?;
        if !out.test_metric.is_finite() {
            return Err(Error::Training(format!(
                "test metric is {}",
                out.test_metric
            )));
        }
        Ok(out)
    })();
    let seconds = start.elapsed().as_secs_f64();
    let mut row = ResultRow {
        dataset: code.into(),
        method: name,
        seed,
        lr: None,
        lambda1: None,
        lambda2: None,
        extra: String::new(),
        metric: None,
        seconds,
        error: None,
    };
    match outcome {
        Ok(out) => {
            let label = grid_label(&out.selected);
            row.lr = Some(label.lr);
            row.lambda1 = label.lambda1;
            row.lambda2 = label.lambda2;
            row.extra = label.extra;
            row.metric = Some(out.test_metric);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Metrics are written with round-trip precision so a rerun can be compared
/// bit for bit.
pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in rows {
        let metric = r.metric.map_or("failed".to_string(), |m| format!("{m:?}"));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.3}\n",
            quote(&r.dataset),
            quote(&r.method),
            r.seed,
            opt(r.lr),
            opt(r.lambda1),
            opt(r.lambda2),
            quote(&r.extra),
            metric,
            r.seconds
        ));
    }
    out
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_atomic(path, results_csv(rows).as_bytes())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Ingestion(format!("{}: {other:?}", path.display())),
    })?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(Error::Ingestion(format!(
            "{}: expected header '{RESULTS_HEADER}'",
            path.display()
        )));
    }
    let num = |s: &str, field: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| Error::Ingestion(format!("{}:{line}: bad {field} '{s}'", path.display())))
    };
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let metric = match &rec[7] {
            "failed" => None,
            m => Some(num(m, "metric", line)?.ok_or_else(|| {
                Error::Ingestion(format!("{}:{line}: empty metric", path.display()))
            })?),
        };
        rows.push(ResultRow {
            dataset: rec[0].to_string(),
            method: rec[1].to_string(),
            seed: rec[2].parse().map_err(|_| {
                Error::Ingestion(format!("{}:{line}: bad seed '{}'", path.display(), &rec[2]))
            })?,
            lr: num(&rec[3], "lr", line)?,
            lambda1: num(&rec[4], "lambda1", line)?,
            lambda2: num(&rec[5], "lambda2", line)?,
            extra: rec[6].to_string(),
            metric,
            seconds: num(&rec[8], "seconds", line)?.unwrap_or(0.0),
            error: None,
        });
    }
    Ok(rows)
}

/// Mean and sample standard deviation of a cell's metric over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: String,
    pub n: usize,
    pub failed: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

/// Groups in order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), (Vec<f64>, usize)> = BTreeMap::new();
    for r in rows {
        let key = (r.dataset.clone(), r.method.clone());
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (Vec::new(), 0)
        });
        match r.metric {
            Some(m) => entry.0.push(m),
            None => entry.1 += 1,
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (vals, failed) = &groups[&key];
            let n = vals.len();
            let mean = (n > 0).then(|| vals.iter().sum::<f64>() / n as f64);
            let sd = mean.filter(|_| n > 1).map(|m| {
                (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            });
            SummaryRow {
                dataset: key.0,
                method: key.1,
                n,
                failed: *failed,
                mean,
                sd,
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("dataset,method,n,failed,mean,sd\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            quote(&r.dataset),
            quote(&r.method),
            r.n,
            r.failed,
            opt(r.mean),
            opt(r.sd)
        ));
    }
    out
}

/// One row per method, one column of mean metrics per dataset, both in
/// order of first appearance. Cells with no successful seed are empty.
pub fn method_table_csv(rows: &[SummaryRow]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut out = String::from("method");
    for d in &datasets {
        out.push(',');
        out.push_str(&quote(d));
    }
    out.push('\n');
    for m in &methods {
        out.push_str(&quote(m));
        for d in &datasets {
            let mean = rows
                .iter()
                .find(|r| r.dataset == *d && r.method == *m)
                .and_then(|r| r.mean);
            out.push(',');
            out.push_str(&opt(mean));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub rows: Vec<ResultRow>,
    pub failed: usize,
}

/// Runs every dataset × method × seed cell and writes `results.csv`,
/// `summary.csv`, `table.csv` (see [`method_table_csv`]), one JSON file per
/// cell under `cells/`, and the manifest.
pub fn run_benchmark(
    cfg: &ExperimentConfig,
    registry: &Registry,
    out: &Path,
) -> Result<BenchmarkOutcome> {
    cfg.validate(registry)?;
    if cfg.datasets.is_empty() || cfg.methods.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config(
            "benchmark needs at least one dataset, method and seed".into(),
        ));
    }
    write_manifest(out, &cfg.manifest("benchmark")?)?;

    let mut tables = Vec::new();
    for code in &cfg.datasets {
        let (raw, entry) = registry.load_raw(code)?;
        tables.push((code.as_str(), raw, entry.columns.clone(), entry.task));
    }
    let cells: Vec<(usize, Method, u64)> = (0..tables.len())
        .flat_map(|d| {
            cfg.methods
                .iter()
                .flat_map(move |&m| cfg.seeds.iter().map(move |&s| (d, m, s)))
        })
        .collect();

    let rows = map_indexed(
        Execution::default(),
        cells.len(),
        |i| -> Result<ResultRow> {
            let (d, method, seed) = cells[i];
            let (code, raw, schema, task) = &tables[d];
            let row = run_cell(
                raw,
                schema,
                *task,
                code,
                method,
                seed,
                cfg.master_seed,
                &cfg.train,
            );
            let name = format!("{code}_{method}_{seed}.json");
            write_atomic(
                &out.join("cells").join(name),
                serde_json::to_string_pretty(&row)?.as_bytes(),
            )?;
            Ok(row)
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    write_results(&out.join("results.csv"), &rows)?;
    let summary = summarize(&rows);
    write_atomic(&out.join("summary.csv"), summary_csv(&summary).as_bytes())?;
    write_atomic(
        &out.join("table.csv"),
        method_table_csv(&summary).as_bytes(),
    )?;
    let failed = rows.iter().filter(|r| r.metric.is_none()).count();
    Ok(BenchmarkOutcome { rows, failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(d: &str, m: &str, seed: u64, metric: Option<f64>) -> ResultRow {
        ResultRow {
            dataset: d.into(),
            method: m.into(),
            seed,
            lr: Some(0.001),
            lambda1: None,
            lambda2: None,
            extra: "l2=0.01;dropout=0.1".into(),
            metric,
            seconds: 1.25,
            error: None,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![
            row("BH", "TANGOS+L2", 0, Some(0.1 + 0.2)),
            row("BH", "L2", 1, None),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results(&path, &rows).unwrap();
        let back = read_results(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].metric.unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back[0].extra, rows[0].extra);
        assert_eq!(back[1].metric, None);
        assert!(std::fs::read_to_string(&path).unwrap().contains(",failed,"));
    }

    #[test]
    fn summary_matches_hand_computation() {
        let rows = vec![
            row("A", "x", 0, Some(1.0)),
            row("A", "x", 1, Some(3.0)),
            row("A", "y", 0, Some(2.0)),
            row("A", "y", 1, None),
        ];
        let s = summarize(&rows);
        assert_eq!(s[0].mean, Some(2.0));
        assert_eq!(s[0].sd, Some(2f64.sqrt()));
        assert_eq!((s[1].n, s[1].failed, s[1].sd), (1, 1, None));
    }

    #[test]
    fn method_table_pivots_means() {
        let rows = vec![
            row("A", "x", 0, Some(1.0)),
            row("B", "x", 0, Some(2.0)),
            row("A", "y", 0, None),
            row("B", "y", 0, Some(4.0)),
        ];
        let t = method_table_csv(&summarize(&rows));
        assert_eq!(t, "method,A,B\nx,1.0,2.0\ny,,4.0\n");
    }
}
