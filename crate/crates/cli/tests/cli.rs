use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn registry() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../datasets/registry.json")
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

/// A config on the bundled datasets with a short training budget.
fn config(datasets: &[&str], methods: &[&str], extra: Value) -> Value {
    let mut cfg = json!({
        "registry": registry(),
        "datasets": datasets,
        "methods": methods,
        "train": {"max_epochs": 3, "patience": 3},
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    cfg
}

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tangos-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(sub: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        sub,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    lab(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn train_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &config(
            &["BH"],
            &[],
            json!({"train": {"max_epochs": 3, "patience": 3,
            "tangos": {"lambda1": 1.0, "lambda2": 0.1}}}),
        ),
    );
    let out = dir.path().join("run");
    let o = run("train", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "manifest.json",
        "history.csv",
        "checkpoint.json",
        "metrics.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let history = read(&out.join("history.csv"));
    assert_eq!(history.lines().count(), 4);
    let metrics: Value = serde_json::from_str(&read(&out.join("metrics.json"))).unwrap();
    assert!(metrics["test_metric"].as_f64().unwrap().is_finite());
    let manifest: Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "train");
}

#[test]
fn reruns_are_byte_identical_and_the_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(&["BR"], &[], json!({})));
    let history = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = run("train", &cfg, &out, &["--seed", seed]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out.join("history.csv")).unwrap()
    };
    let a = history("a", "5");
    assert_eq!(a, history("b", "5"));
    assert_ne!(a, history("c", "6"));
}

#[test]
fn unknown_dataset_is_a_usage_error_naming_the_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(&["NOPE"], &["L2"], json!({})));
    for sub in ["train", "benchmark"] {
        let o = run(sub, &cfg, &dir.path().join("out"), &[]);
        assert_eq!(o.status.code(), Some(1), "{sub}");
        assert!(stderr(&o).contains("NOPE"), "{}", stderr(&o));
    }
}

#[test]
fn misspelled_field_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &json!({"registry": registry(), "datasets": ["BH"], "train": {"max_epoch": 3}}),
    );
    let o = run("train", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("train") && msg.contains("max_epoch"), "{msg}");
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lab(&[]).status.code(), Some(1));
    assert_eq!(lab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lab(&["--help"]).status.code(), Some(0));
    let missing = dir.path().join("absent.json");
    let o = run("train", &missing, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.json"));
    let cfg = write_config(dir.path(), &config(&["BH"], &[], json!({})));
    assert_eq!(
        run("train", &cfg, dir.path(), &["--jobs", "0"])
            .status
            .code(),
        Some(1)
    );
    let two = write_config(dir.path(), &config(&["BH", "BC"], &[], json!({})));
    assert_eq!(run("train", &two, dir.path(), &[]).status.code(), Some(1));
}

#[test]
fn benchmark_fills_the_grid_and_replays_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &config(
            &["BH"],
            &["baseline", "L2"],
            json!({"seeds": [0, 1], "master_seed": 9}),
        ),
    );
    let out = dir.path().join("bench");
    let o = run("benchmark", &cfg, &out, &["--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let results = read(&out.join("results.csv"));
    let rows: Vec<&str> = results.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let keys: Vec<String> = rows
        .iter()
        .map(|r| r.split(',').take(3).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(
        keys,
        ["BH,baseline,0", "BH,baseline,1", "BH,L2,0", "BH,L2,1"]
    );
    assert_eq!(std::fs::read_dir(out.join("cells")).unwrap().count(), 4);
    assert_eq!(read(&out.join("summary.csv")).lines().count(), 3);
    assert!(read(&out.join("table.csv")).starts_with("method,BH\n"));

    let replay = dir.path().join("replay");
    let o = run("benchmark", &out.join("manifest.json"), &replay, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let metrics = |text: &str| -> Vec<String> {
        text.lines()
            .map(|l| l.split(',').nth(7).unwrap().to_string())
            .collect()
    };
    assert_eq!(
        metrics(&results),
        metrics(&read(&replay.join("results.csv")))
    );
}

#[test]
fn benchmark_with_an_unusable_method_setting_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &config(
            &["BH"],
            &["TANGOS"],
            json!({"train": {"max_epochs": 3, "patience": 3, "hidden_width": 1}}),
        ),
    );
    let o = run("benchmark", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(read(&dir.path().join("out/results.csv")).contains(",failed,"));
}

#[test]
fn diagnose_attribution_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(&["BH"], &[], json!({})));
    let out = dir.path().join("diag");
    let o = run("diagnose", &cfg, &out, &["--mode", "attr"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = read(&out.join("attribution.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,L_spec,L_orth"));
    let epochs: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["1", "2", "3"]);

    // a saved model is evaluated once, as epoch 0
    let ckpt = out.join("checkpoint.json");
    let again = dir.path().join("again");
    let o = run(
        "diagnose",
        &cfg,
        &again,
        &["--checkpoint", ckpt.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = read(&again.join("attribution.csv"));
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("0,"));

    let other = write_config(dir.path(), &config(&["BR"], &[], json!({})));
    let o = run(
        "diagnose",
        &other,
        &dir.path().join("x"),
        &["--checkpoint", ckpt.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checkpoint"), "{}", stderr(&o));
}

#[test]
fn diagnose_decomposition_holds_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(&["BH"], &[], json!({})));
    let out = dir.path().join("diag");
    let o = run("diagnose", &cfg, &out, &["--mode", "decomp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = read(&out.join("decomposition.csv"));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("epoch,err,err_bar,div,identity_residual")
    );
    let mut n = 0;
    for l in lines {
        let residual: f64 = l.split(',').nth(4).unwrap().parse().unwrap();
        assert!(residual < 1e-9, "{l}");
        n += 1;
    }
    assert_eq!(n, 3);

    let cls = write_config(dir.path(), &config(&["BR"], &[], json!({})));
    let o = run(
        "diagnose",
        &cls,
        &dir.path().join("cls"),
        &["--mode", "decomp"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("classification"), "{}", stderr(&o));
}

const HEADER: &str = "dataset,method,seed,lr,lambda1,lambda2,extra,metric,seconds";

fn results_fixture(dir: &Path, cells: &[(&str, &str, &str)]) -> PathBuf {
    let mut text = format!("{HEADER}\n");
    for (d, m, v) in cells {
        text.push_str(&format!("{d},{m},0,0.001,,,,{v},1.000\n"));
    }
    let path = dir.join("results.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn avg_ranks(ranks_csv: &str) -> Vec<(String, f64)> {
    let mut lines = ranks_csv.lines();
    let methods: Vec<String> = lines
        .next()
        .unwrap()
        .split(',')
        .skip(1)
        .map(str::to_string)
        .collect();
    let avg = lines.find(|l| l.starts_with("avg_rank,")).unwrap();
    methods
        .into_iter()
        .zip(avg.split(',').skip(1).map(|v| v.parse().unwrap()))
        .collect()
}

#[test]
fn report_reproduces_published_ranks() {
    const METHODS: [&str; 8] = ["Baseline", "L1", "L2", "DO", "BN", "IN", "MU", "TANGOS"];
    #[rustfmt::skip]
    let table: [(&str, [&str; 8]); 10] = [
        ("FB", ["0.037", "0.081", "0.029", "0.060", "0.699", "0.043", "0.147", "0.032"]),
        ("BH", ["0.192", "0.197", "0.183", "0.209", "0.190", "0.215", "0.286", "0.166"]),
        ("WE", ["0.118", "0.096", "0.099", "0.097", "0.090", "0.101", "0.146", "0.093"]),
        ("BC", ["0.323", "0.263", "0.277", "0.282", "0.294", "0.308", "0.323", "0.244"]),
        ("WQ", ["0.673", "0.641", "0.644", "0.658", "0.639", "0.669", "0.713", "0.637"]),
        ("SC", ["0.422", "0.408", "0.411", "0.423", "0.410", "0.434", "0.547", "0.387"]),
        ("FF", ["1.274", "1.280", "1.274", "1.266", "1.330", "1.201", "1.289", "1.276"]),
        ("PR", ["0.624", "0.611", "0.580", "0.592", "0.647", "0.591", "0.745", "0.573"]),
        ("ST", ["0.419", "0.416", "0.418", "0.387", "0.461", "0.539", "0.380", "0.382"]),
        ("AB", ["0.345", "0.319", "0.332", "0.312", "0.348", "0.355", "0.366", "0.325"]),
    ];
    let dir = tempfile::tempdir().unwrap();
    let cells: Vec<(&str, &str, &str)> = table
        .iter()
        .flat_map(|(d, row)| METHODS.iter().zip(row).map(move |(m, v)| (*d, *m, *v)))
        .collect();
    let results = results_fixture(dir.path(), &cells);
    let cfg = write_config(dir.path(), &json!({"registry": registry()}));
    let out = dir.path().join("report");
    let o = run(
        "report",
        &cfg,
        &out,
        &["--results", results.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ranks = avg_ranks(&read(&out.join("ranks.csv")));
    let get = |m: &str| ranks.iter().find(|(n, _)| n == m).unwrap().1;
    assert_eq!(get("TANGOS"), 1.9);
    assert_eq!(get("Baseline"), 5.4);
    assert_eq!(get("MU"), 7.05);
    let wilcoxon = read(&out.join("wilcoxon.csv"));
    assert_eq!(wilcoxon.lines().count(), 8);
    let l2 = wilcoxon
        .lines()
        .find(|l| l.starts_with("TANGOS,L2,"))
        .unwrap();
    assert_eq!(l2.split(',').nth(4), Some("0.006144"));
}

#[test]
fn report_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &json!({"registry": registry()}));

    // one method: every rank is 1, nothing to compare
    let single = results_fixture(
        dir.path(),
        &[("A", "TANGOS", "0.1"), ("B", "TANGOS", "0.2")],
    );
    let out = dir.path().join("single");
    let o = run(
        "report",
        &cfg,
        &out,
        &["--results", single.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        avg_ranks(&read(&out.join("ranks.csv"))),
        [("TANGOS".to_string(), 1.0)]
    );
    assert_eq!(read(&out.join("wilcoxon.csv")).lines().count(), 1);

    // identical columns tie everywhere and leave no p-value
    let cells: Vec<(String, &str, &str)> = (0..6)
        .flat_map(|d| {
            [
                (format!("D{d}"), "TANGOS", "0.3"),
                (format!("D{d}"), "L2", "0.3"),
            ]
        })
        .collect();
    let borrowed: Vec<(&str, &str, &str)> =
        cells.iter().map(|(d, m, v)| (d.as_str(), *m, *v)).collect();
    let same = results_fixture(dir.path(), &borrowed);
    let out = dir.path().join("same");
    let o = run("report", &cfg, &out, &["--results", same.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ranks = avg_ranks(&read(&out.join("ranks.csv")));
    assert!(ranks.iter().all(|(_, r)| *r == 1.5));
    let row = read(&out.join("wilcoxon.csv"))
        .lines()
        .nth(1)
        .unwrap()
        .to_string();
    assert_eq!(row.split(',').nth(4), Some(""), "{row}");

    // a failed cell leaves the grid incomplete
    let failed = results_fixture(
        dir.path(),
        &[
            ("A", "x", "0.1"),
            ("A", "y", "failed"),
            ("B", "x", "0.2"),
            ("B", "y", "0.3"),
        ],
    );
    let o = run(
        "report",
        &cfg,
        &dir.path().join("failed"),
        &["--results", failed.to_str().unwrap(), "--reference", "x"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("A/y"), "{}", stderr(&o));
}
