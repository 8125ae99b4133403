//! Deterministic synthetic stand-ins for UCI tables.
//!
//! The generators mimic the shape of their namesakes (row count, a mix of
//! skewed, binary and categorical columns, a few missing cells, a noisy
//! nonlinear target driven by shared latent factors) so the full pipeline
//! can run offline. They are not the real datasets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ColumnSchema, DatasetEntry, Registry, Task};
use crate::error::{Error, Result};
use crate::numeric::SeededRng;

pub struct SyntheticTable {
    pub code: &'static str,
    pub entry: DatasetEntry,
    pub csv: String,
}

fn normal(rng: &mut SeededRng) -> f64 {
    StandardNormal.sample(rng)
}

fn fmt_cell(out: &mut String, v: Option<f64>) {
    match v {
        Some(v) => {
            let _ = write!(out, "{v:.6}");
        }
        None => out.push('?'),
    }
}

fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut csv = header.join(",");
    csv.push('\n');
    for r in rows {
        csv.push_str(&r.join(","));
        csv.push('\n');
    }
    csv
}

fn cell(v: f64, missing_rate: f64, rng: &mut SeededRng) -> String {
    let mut s = String::new();
    let missing = missing_rate > 0.0 && rng.random::<f64>() < missing_rate;
    fmt_cell(&mut s, (!missing).then_some(v));
    s
}

/// Boston-housing-shaped regression table: 506 rows, 13 features.
pub fn bh_style(seed: u64) -> SyntheticTable {
    let mut rng = SeededRng::new(seed).split("BH");
    let header = [
        "crim", "zn", "indus", "chas", "nox", "rm", "age", "dis", "rad", "tax", "ptratio", "b",
        "lstat", "medv",
    ];
    let mut rows = Vec::with_capacity(506);
    for _ in 0..506 {
        let urban = normal(&mut rng);
        let wealth = normal(&mut rng);
        let school = normal(&mut rng);
        let mut e = || normal(&mut rng);

        let crim = (1.1 * urban - 0.4 * wealth + 0.6 * e() - 0.5).exp();
        let zn = (25.0 * (-urban - 0.3) + 10.0 * e()).max(0.0);
        let indus = 11.0 + 5.0 * urban + 2.5 * e();
        let nox = 0.55 + 0.08 * urban + 0.03 * e();
        let rm = 6.3 + 0.55 * wealth + 0.35 * e();
        let age = (68.0 + 22.0 * urban + 12.0 * e()).clamp(3.0, 100.0);
        let dis = (1.2 - 0.45 * urban + 0.2 * e()).exp();
        let tax = 400.0 + 140.0 * urban + 50.0 * e();
        let ptratio = 18.4 + 1.6 * school + 0.8 * urban + 0.6 * e();
        let b = 360.0 + 40.0 * e() - 30.0 * urban.max(0.0);
        let lstat = (2.4 + 0.3 * urban - 0.4 * wealth + 0.2 * e()).exp();
        let noise = e();
        let chas = f64::from(rng.random::<f64>() < 0.07);
        let rad = {
            let r = urban + 0.5 * normal(&mut rng);
            ["1", "2", "4", "5", "24"][match r {
                r if r < -0.8 => 0,
                r if r < -0.2 => 1,
                r if r < 0.4 => 2,
                r if r < 1.0 => 3,
                _ => 4,
            }]
        };

        let medv = 22.0 + 4.5 * (rm - 6.3) + 3.0 * (rm - 6.8).max(0.0).powi(2)
            - 7.0 * (lstat / 11.0).ln()
            - 0.9 * (ptratio - 18.4)
            - 18.0 * (nox - 0.55)
            - 1.2 * crim.ln_1p()
            + 2.5 * chas
            - 0.6 * (dis - 3.5).abs()
            + 2.6 * noise;
        let medv = medv.clamp(5.0, 50.0);

        let mut row = vec![
            cell(crim, 0.0, &mut rng),
            cell(zn, 0.0, &mut rng),
            cell(indus, 0.0, &mut rng),
            cell(chas, 0.0, &mut rng),
            cell(nox, 0.0, &mut rng),
            cell(rm, 0.0, &mut rng),
            cell(age, 0.02, &mut rng),
            cell(dis, 0.0, &mut rng),
            rad.to_string(),
            cell(tax, 0.02, &mut rng),
            cell(ptratio, 0.0, &mut rng),
            cell(b, 0.0, &mut rng),
            cell(lstat, 0.0, &mut rng),
        ];
        row.push(cell(medv, 0.0, &mut rng));
        rows.push(row);
    }

    let columns = vec![
        ColumnSchema::log_numeric("crim"),
        ColumnSchema::log_numeric("zn"),
        ColumnSchema::numeric("indus"),
        ColumnSchema::numeric("chas"),
        ColumnSchema::numeric("nox"),
        ColumnSchema::numeric("rm"),
        ColumnSchema::numeric("age"),
        ColumnSchema::log_numeric("dis"),
        ColumnSchema::categorical("rad"),
        ColumnSchema::numeric("tax"),
        ColumnSchema::numeric("ptratio"),
        ColumnSchema::numeric("b"),
        ColumnSchema::log_numeric("lstat"),
        ColumnSchema::target("medv"),
    ];
    SyntheticTable {
        code: "BH",
        entry: DatasetEntry {
            csv: "bh_style.csv".into(),
            task: Task::Regression,
            max_rows: Some(1000),
            columns,
            notes: Some("synthetic, Boston-housing-shaped (506 x 13)".into()),
        },
        csv: render(&header, &rows),
    }
}

/// Bioconcentration-shaped regression table: 779 rows of skewed molecular
/// descriptors plus a three-level class column.
pub fn bc_style(seed: u64) -> SyntheticTable {
    let mut rng = SeededRng::new(seed).split("BC");
    let names = [
        "nhm", "piPC09", "PCD", "X2Av", "MLOGP", "ON1V", "N-072", "B02", "F04", "nN", "nO", "MW",
    ];
    let mut header: Vec<&str> = names.to_vec();
    header.push("Class");
    header.push("logBCF");

    let mut rows = Vec::with_capacity(779);
    for _ in 0..779 {
        let lipo = normal(&mut rng);
        let size = normal(&mut rng);
        let polar = normal(&mut rng);
        let halo = normal(&mut rng);
        let mut e = || normal(&mut rng);

        let nhm = (1.5 * halo + 0.5 * e() - 0.3).exp().floor();
        let pipc09 = (2.0 + 1.5 * size + 0.8 * e()).max(0.0);
        let pcd = 1.2 + 0.6 * size + 0.4 * polar + 0.3 * e();
        let x2av = 0.18 + 0.03 * halo - 0.02 * size + 0.01 * e();
        let mlogp = 3.0 + 1.4 * lipo - 0.5 * polar + 0.4 * e();
        let on1v = (1.4 + 0.5 * size + 0.2 * e()).exp();
        let n072 = f64::from(polar + 0.8 * e() > 1.2);
        let b02 = f64::from(polar + 0.8 * e() > 0.0);
        let f04 = (3.0 + 2.0 * polar + 1.0 * e()).max(0.0).floor();
        let nn = (0.8 * polar + 0.5 * e()).exp().floor();
        let no = (0.6 * polar + 0.4 * size + 0.5 * e()).exp().floor();
        let mw = (5.6 + 0.35 * size + 0.1 * halo + 0.1 * e()).exp();
        let noise = e();
        let class = match (mlogp, polar) {
            (m, _) if m > 4.5 => "2",
            (_, p) if p > 0.7 => "3",
            _ => "1",
        };

        let target = 0.3 + 0.9 * (mlogp - 3.0) - 0.25 * (mlogp - 5.0).max(0.0).powi(2)
            + 0.35 * nhm.ln_1p()
            - 0.3 * n072
            - 0.12 * (pipc09 - 2.0)
            + if class == "3" { -0.4 } else { 0.0 }
            + 0.45 * noise;

        let mut row: Vec<String> = [
            (nhm, 0.0),
            (pipc09, 0.0),
            (pcd, 0.01),
            (x2av, 0.0),
            (mlogp, 0.01),
            (on1v, 0.0),
            (n072, 0.0),
            (b02, 0.0),
            (f04, 0.0),
            (nn, 0.0),
            (no, 0.0),
            (mw, 0.0),
        ]
        .iter()
        .map(|&(v, m)| cell(v, m, &mut rng))
        .collect();
        row.push(class.to_string());
        row.push(cell(target, 0.0, &mut rng));
        rows.push(row);
    }

    let log_cols = ["nhm", "piPC09", "ON1V", "nN", "nO", "MW"];
    let mut columns: Vec<ColumnSchema> = names
        .iter()
        .map(|&n| {
            if log_cols.contains(&n) {
                ColumnSchema::log_numeric(n)
            } else {
                ColumnSchema::numeric(n)
            }
        })
        .collect();
    columns.push(ColumnSchema::categorical("Class"));
    columns.push(ColumnSchema::target("logBCF"));
    SyntheticTable {
        code: "BC",
        entry: DatasetEntry {
            csv: "bc_style.csv".into(),
            task: Task::Regression,
            max_rows: Some(1000),
            columns,
            notes: Some("synthetic, bioconcentration-shaped (779 x 13)".into()),
        },
        csv: render(&header, &rows),
    }
}

/// Breast-cancer-shaped binary classification table: 699 rows of 1-10
/// integer scores, with missing cells in one column.
pub fn br_style(seed: u64) -> SyntheticTable {
    let mut rng = SeededRng::new(seed).split("BR");
    let names = [
        "clump",
        "size_unif",
        "shape_unif",
        "adhesion",
        "epi_size",
        "bare_nuclei",
        "chromatin",
        "nucleoli",
        "mitoses",
    ];
    let mut header: Vec<&str> = names.to_vec();
    header.push("class");
    let loadings = [0.8, 1.0, 0.95, 0.7, 0.7, 0.9, 0.75, 0.7, 0.4];

    let mut rows = Vec::with_capacity(699);
    for _ in 0..699 {
        let severity = normal(&mut rng);
        let mut row = Vec::with_capacity(10);
        for (j, &l) in loadings.iter().enumerate() {
            let score = (3.0 + 2.6 * l * severity + 1.4 * normal(&mut rng))
                .round()
                .clamp(1.0, 10.0);
            let rate = if j == 5 { 0.025 } else { 0.0 };
            row.push(cell(score, rate, &mut rng).replace(".000000", ""));
        }
        let logit = 2.2 * severity - 1.0 + 0.6 * normal(&mut rng);
        let malignant = rng.random::<f64>() < 1.0 / (1.0 + (-logit).exp());
        row.push(if malignant { "4" } else { "2" }.to_string());
        rows.push(row);
    }

    let mut columns: Vec<ColumnSchema> = names.iter().map(|&n| ColumnSchema::numeric(n)).collect();
    columns.push(ColumnSchema::target("class"));
    SyntheticTable {
        code: "BR",
        entry: DatasetEntry {
            csv: "br_style.csv".into(),
            task: Task::Classification,
            max_rows: Some(1000),
            columns,
            notes: Some("synthetic, breast-cancer-shaped (699 x 9)".into()),
        },
        csv: render(&header, &rows),
    }
}

/// All synthetic tables generated from one seed.
pub fn suite(seed: u64) -> Vec<SyntheticTable> {
    vec![bh_style(seed), bc_style(seed), br_style(seed)]
}

/// Writes every synthetic CSV plus a `registry.json` into `dir`.
pub fn write_suite(dir: &Path, seed: u64) -> Result<Registry> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = BTreeMap::new();
    for table in suite(seed) {
        let path = dir.join(&table.entry.csv);
        std::fs::write(&path, &table.csv).map_err(|e| Error::io(&path, e))?;
        entries.insert(table.code.to_string(), table.entry);
    }
    let registry = Registry::from_entries(dir.to_path_buf(), entries);
    let path = dir.join("registry.json");
    std::fs::write(&path, registry.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(registry)
}
