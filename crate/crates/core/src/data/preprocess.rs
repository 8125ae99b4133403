//! Imputation, log transform, standardization and one-hot encoding.
//!
//! Every statistic is fitted on a caller-supplied set of training rows and
//! can be re-applied to any table with the same columns.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ingest::{validate_schema, RawTable};
use super::{ColumnKind, ColumnSchema, Dataset, SplitPlan, Task, MISSING_LEVEL};
use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

/// Everything needed to encode a raw table the same way twice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub task: Task,
    /// Schema with categorical levels filled in from training rows.
    pub schema: Vec<ColumnSchema>,
    /// Per schema column; `Some` for numeric columns.
    pub medians: Vec<Option<f64>>,
    /// Per encoded feature. One-hot features carry mean 0, sd 1.
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub target_mean: f64,
    pub target_sd: f64,
    pub class_levels: Vec<String>,
}

fn parse_number(cell: &str, row: usize, col: &str) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            Error::Preprocess(format!(
                "row {row}, column '{col}': cannot parse '{cell}' as a number"
            ))
        })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    // constant training column: identity scaling
    let sd = if sd > 1e-12 * mean.abs().max(1.0) {
        sd
    } else {
        1.0
    };
    (mean, sd)
}

fn log_value(v: f64, row: usize, col: &str) -> Result<f64> {
    if v <= -1.0 {
        return Err(Error::Preprocess(format!(
            "row {row}, column '{col}': log1p undefined for {v}"
        )));
    }
    Ok(v.ln_1p())
}

/// Sorts numerically when every label parses as a number.
fn sort_labels(labels: BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = labels.into_iter().collect();
    if v.iter().all(|s| s.parse::<f64>().is_ok()) {
        v.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
        });
    }
    v
}

/// Numeric column after imputation and optional log transform.
fn numeric_column(
    raw: &RawTable,
    col_idx: usize,
    col: &ColumnSchema,
    median: f64,
) -> Result<Vec<f64>> {
    raw.rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let v = match &row[col_idx] {
                Some(cell) => parse_number(cell, r, &col.name)?,
                None => median,
            };
            if col.log_transform {
                log_value(v, r, &col.name)
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// Fits preprocessing statistics on `fit_rows` only.
pub fn fit_stats(
    raw: &RawTable,
    schema: &[ColumnSchema],
    fit_rows: &[usize],
    task: Task,
) -> Result<StandardizationStats> {
    validate_schema(schema)?;
    if fit_rows.is_empty() {
        return Err(Error::Preprocess(
            "no training rows to fit statistics".into(),
        ));
    }
    if let Some(&bad) = fit_rows.iter().find(|&&r| r >= raw.len()) {
        return Err(Error::Preprocess(format!(
            "training row {bad} out of range for {} rows",
            raw.len()
        )));
    }

    let mut out_schema = schema.to_vec();
    let mut medians = vec![None; schema.len()];
    let mut mean = Vec::new();
    let mut sd = Vec::new();
    let mut target_mean = 0.0;
    let mut target_sd = 1.0;
    let mut class_levels = Vec::new();

    for (c, col) in schema.iter().enumerate() {
        match col.kind {
            ColumnKind::Numeric => {
                let mut observed = Vec::with_capacity(fit_rows.len());
                for &r in fit_rows {
                    if let Some(cell) = &raw.rows[r][c] {
                        observed.push(parse_number(cell, r, &col.name)?);
                    }
                }
                if observed.is_empty() {
                    return Err(Error::Preprocess(format!(
                        "numeric column '{}' has no observed training values",
                        col.name
                    )));
                }
                let med = median(&mut observed);
                medians[c] = Some(med);
                let full = numeric_column(raw, c, col, med)?;
                let fitted: Vec<f64> = fit_rows.iter().map(|&r| full[r]).collect();
                let (m, s) = mean_sd(&fitted);
                mean.push(m);
                sd.push(s);
            }
            ColumnKind::Categorical => {
                let levels: BTreeSet<String> = fit_rows
                    .iter()
                    .map(|&r| {
                        raw.rows[r][c]
                            .clone()
                            .unwrap_or_else(|| MISSING_LEVEL.to_string())
                    })
                    .collect();
                let levels: Vec<String> = levels.into_iter().collect();
                mean.extend(std::iter::repeat_n(0.0, levels.len()));
                sd.extend(std::iter::repeat_n(1.0, levels.len()));
                out_schema[c].category_levels = levels;
            }
            ColumnKind::Target => match task {
                Task::Regression => {
                    let mut values = Vec::with_capacity(fit_rows.len());
                    for &r in fit_rows {
                        let cell = raw.rows[r][c]
                            .as_deref()
                            .ok_or_else(|| Error::Preprocess(format!("row {r}: missing target")))?;
                        let v = parse_number(cell, r, &col.name)?;
                        values.push(if col.log_transform {
                            log_value(v, r, &col.name)?
                        } else {
                            v
                        });
                    }
                    let (m, s) = mean_sd(&values);
                    target_mean = m;
                    target_sd = s;
                }
                Task::Classification => {
                    class_levels = if col.category_levels.is_empty() {
                        // The label vocabulary is a property of the task,
                        // not a fitted statistic, so all rows contribute.
                        sort_labels(raw.rows.iter().filter_map(|row| row[c].clone()).collect())
                    } else {
                        col.category_levels.clone()
                    };
                    if class_levels.len() < 2 {
                        return Err(Error::Preprocess(format!(
                            "classification target '{}' has fewer than two classes",
                            col.name
                        )));
                    }
                    out_schema[c].category_levels = class_levels.clone();
                }
            },
        }
    }

    Ok(StandardizationStats {
        task,
        schema: out_schema,
        medians,
        mean,
        sd,
        target_mean,
        target_sd,
        class_levels,
    })
}

/// Encodes every row of `raw` with previously fitted statistics.
pub fn apply_stats(raw: &RawTable, stats: &StandardizationStats) -> Result<Dataset> {
    let schema = &stats.schema;
    if raw.columns.len() != schema.len() {
        return Err(Error::Preprocess(format!(
            "table has {} columns, statistics expect {}",
            raw.columns.len(),
            schema.len()
        )));
    }
    let n = raw.len();
    let width = stats.mean.len();
    let mut x = DenseMatrix::zeros(n, width);
    let mut y = vec![0.0; n];
    let mut feature_names = Vec::with_capacity(width);

    let mut offset = 0;
    for (c, col) in schema.iter().enumerate() {
        match col.kind {
            ColumnKind::Numeric => {
                let med = stats.medians[c].ok_or_else(|| {
                    Error::Preprocess(format!("no median stored for '{}'", col.name))
                })?;
                let values = numeric_column(raw, c, col, med)?;
                let (m, s) = (stats.mean[offset], stats.sd[offset]);
                for (r, v) in values.into_iter().enumerate() {
                    x.set(r, offset, (v - m) / s);
                }
                feature_names.push(col.name.clone());
                offset += 1;
            }
            ColumnKind::Categorical => {
                let levels = &col.category_levels;
                for (r, row) in raw.rows.iter().enumerate() {
                    let value = row[c].as_deref().unwrap_or(MISSING_LEVEL);
                    // unseen levels leave the block all-zero
                    if let Ok(k) = levels.binary_search_by(|l| l.as_str().cmp(value)) {
                        x.set(r, offset + k, 1.0);
                    }
                }
                feature_names.extend(levels.iter().map(|l| format!("{}={l}", col.name)));
                offset += levels.len();
            }
            ColumnKind::Target => {
                for (r, row) in raw.rows.iter().enumerate() {
                    let cell = row[c]
                        .as_deref()
                        .ok_or_else(|| Error::Preprocess(format!("row {r}: missing target")))?;
                    y[r] = match stats.task {
                        Task::Regression => {
                            let v = parse_number(cell, r, &col.name)?;
                            let v = if col.log_transform {
                                log_value(v, r, &col.name)?
                            } else {
                                v
                            };
                            (v - stats.target_mean) / stats.target_sd
                        }
                        Task::Classification => stats
                            .class_levels
                            .iter()
                            .position(|l| l == cell)
                            .ok_or_else(|| {
                                Error::Preprocess(format!("row {r}: unknown class '{cell}'"))
                            })? as f64,
                    };
                }
            }
        }
    }

    Ok(Dataset {
        x,
        y,
        task: stats.task,
        n_classes: stats.class_levels.len(),
        schema: schema.clone(),
        feature_names,
    })
}

/// Fits statistics on the cross-validation rows of `split` (never the test
/// rows) and encodes the whole table.
pub fn preprocess(
    raw: &RawTable,
    schema: &[ColumnSchema],
    split: &SplitPlan,
    task: Task,
) -> Result<(Dataset, StandardizationStats)> {
    split.validate(raw.len())?;
    let fit_rows = split.cv_indices();
    let stats = fit_stats(raw, schema, &fit_rows, task)?;
    let dataset = apply_stats(raw, &stats)?;
    Ok((dataset, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_csv_from_reader;

    fn all_rows(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn median_imputation() {
        let schema = vec![ColumnSchema::numeric("a"), ColumnSchema::target("y")];
        let raw = load_csv_from_reader("a,y\n1,0\n,1\n3,2\n".as_bytes(), &schema, None).unwrap();
        let stats = fit_stats(&raw, &schema, &all_rows(3), Task::Regression).unwrap();
        assert_eq!(stats.medians[0], Some(2.0));
        let ds = apply_stats(&raw, &stats).unwrap();
        // imputed row sits at the column mean, i.e. 0 after standardizing
        assert!(ds.x.get(1, 0).abs() < 1e-15);
    }

    #[test]
    fn two_values_standardize_to_unit() {
        let schema = vec![ColumnSchema::numeric("a"), ColumnSchema::target("y")];
        let raw = load_csv_from_reader("a,y\n2,0\n4,1\n".as_bytes(), &schema, None).unwrap();
        let stats = fit_stats(&raw, &schema, &all_rows(2), Task::Regression).unwrap();
        let ds = apply_stats(&raw, &stats).unwrap();
        assert_eq!(ds.x.column(0), vec![-1.0, 1.0]);
        assert_eq!(ds.y, vec![-1.0, 1.0]);
    }

    #[test]
    fn unseen_level_is_zero_block() {
        let schema = vec![
            ColumnSchema::categorical("c"),
            ColumnSchema::numeric("a"),
            ColumnSchema::target("y"),
        ];
        let raw =
            load_csv_from_reader("c,a,y\na,1,0\nb,2,1\nc,3,0\n".as_bytes(), &schema, None).unwrap();
        let stats = fit_stats(&raw, &schema, &[0, 1], Task::Regression).unwrap();
        assert_eq!(stats.schema[0].category_levels, vec!["a", "b"]);
        let ds = apply_stats(&raw, &stats).unwrap();
        assert_eq!(ds.n_features(), 3);
        assert_eq!(ds.x.row(0)[..2], [1.0, 0.0]);
        assert_eq!(ds.x.row(2)[..2], [0.0, 0.0]);
        assert_eq!(ds.feature_names[0], "c=a");
    }

    #[test]
    fn constant_column_keeps_unit_scale() {
        let schema = vec![ColumnSchema::numeric("a"), ColumnSchema::target("y")];
        let raw = load_csv_from_reader("a,y\n5,0\n5,1\n5,2\n".as_bytes(), &schema, None).unwrap();
        let stats = fit_stats(&raw, &schema, &all_rows(3), Task::Regression).unwrap();
        assert_eq!(stats.sd[0], 1.0);
        let ds = apply_stats(&raw, &stats).unwrap();
        assert_eq!(ds.x.column(0), vec![0.0; 3]);
    }

    #[test]
    fn all_missing_training_column_fails() {
        let schema = vec![ColumnSchema::numeric("a"), ColumnSchema::target("y")];
        let raw = load_csv_from_reader("a,y\n,0\n,1\n4,2\n".as_bytes(), &schema, None).unwrap();
        let err = fit_stats(&raw, &schema, &[0, 1], Task::Regression).unwrap_err();
        assert!(matches!(err, Error::Preprocess(_)));
    }

    #[test]
    fn log_applied_before_standardizing() {
        let schema = vec![ColumnSchema::log_numeric("a"), ColumnSchema::target("y")];
        let raw = load_csv_from_reader("a,y\n0,0\n3,1\n".as_bytes(), &schema, None).unwrap();
        let stats = fit_stats(&raw, &schema, &all_rows(2), Task::Regression).unwrap();
        let expect = 4f64.ln() / 2.0;
        assert!((stats.mean[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn test_rows_do_not_move_statistics() {
        let schema = vec![ColumnSchema::numeric("a"), ColumnSchema::target("y")];
        let a = load_csv_from_reader("a,y\n1,0\n2,1\n3,2\n".as_bytes(), &schema, None).unwrap();
        let b = load_csv_from_reader("a,y\n1,0\n2,1\n300,-9\n".as_bytes(), &schema, None).unwrap();
        let sa = fit_stats(&a, &schema, &[0, 1], Task::Regression).unwrap();
        let sb = fit_stats(&b, &schema, &[0, 1], Task::Regression).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn classification_targets_are_indices() {
        let schema = vec![ColumnSchema::numeric("a"), ColumnSchema::target("y")];
        let raw =
            load_csv_from_reader("a,y\n1,yes\n2,no\n3,yes\n".as_bytes(), &schema, None).unwrap();
        let stats = fit_stats(&raw, &schema, &all_rows(3), Task::Classification).unwrap();
        let ds = apply_stats(&raw, &stats).unwrap();
        assert_eq!(stats.class_levels, vec!["no", "yes"]);
        assert_eq!(ds.y, vec![1.0, 0.0, 1.0]);
        assert_eq!(ds.n_classes, 2);
    }

    #[test]
    fn reapplying_stats_is_bit_exact() {
        let schema = vec![
            ColumnSchema::log_numeric("a"),
            ColumnSchema::categorical("c"),
            ColumnSchema::target("y"),
        ];
        let raw = load_csv_from_reader(
            "a,c,y\n1.5,x,0.1\n,y,2\n7,,3\n0.2,x,4\n".as_bytes(),
            &schema,
            None,
        )
        .unwrap();
        let stats = fit_stats(&raw, &schema, &[0, 1, 2], Task::Regression).unwrap();
        let first = apply_stats(&raw, &stats).unwrap();
        let second = apply_stats(&raw, &stats).unwrap();
        assert_eq!(first, second);
        assert!(first.x.is_finite());
    }
}
