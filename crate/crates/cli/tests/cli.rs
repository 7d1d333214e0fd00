use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nearmem_core::config::SystemConfig;
use nearmem_core::metrics::CSV_COLUMNS;
use nearmem_core::trace::parse_trace_str;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nearmem-sim"));
    c.env_remove("NEARMEM_SIM_CONFIG").env("RUST_LOG", "error");
    c
}

fn sim(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn shipped_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/hardware-defaults.json")
}

/// Data rows of a CSV report as column -> value maps.
fn rows(csv: &str) -> Vec<HashMap<String, String>> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let cols: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| {
            cols.iter()
                .cloned()
                .zip(l.split(',').map(String::from))
                .collect()
        })
        .collect()
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

fn num(row: &HashMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap()
}

fn summary(csv: &str, key: &str) -> f64 {
    let prefix = format!("# {key}=");
    csv.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} line"))
        .parse()
        .unwrap()
}

#[test]
fn va_on_dimm_is_transfer_dominated() {
    let out = stdout(&sim(&[
        "run",
        "--workload",
        "VA",
        "--arch",
        "dimm-pim",
        "--pus",
        "512",
    ]));
    let r = rows(&out);
    assert_eq!(r.len(), 1);
    assert!(num(&r[0], "transfer_ratio_busy") > 0.80);
}

#[test]
fn ts_on_cxl_opt_is_compute_dominated() {
    let out = stdout(&sim(&[
        "run",
        "--workload",
        "TS",
        "--arch",
        "cxl-opt",
        "--pus",
        "512",
    ]));
    assert!(num(&rows(&out)[0], "transfer_ratio_busy") < 0.1);
}

#[test]
fn reports_start_with_provenance() {
    let out = stdout(&sim(&[
        "run",
        "--workload",
        "VA",
        "--arch",
        "cxl-opt",
        "--pus",
        "4",
    ]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines[0],
        format!("# nearmem-sim {}", env!("CARGO_PKG_VERSION"))
    );
    assert!(lines[1].starts_with("# config built-in defaults sha256="));
    assert_eq!(lines[2], "# flags run --workload VA --arch cxl-opt --pus 4");
    assert!(lines[3].starts_with("# workload {\"name\":\"VA\""));
    assert_eq!(lines[4], CSV_COLUMNS.join(","));
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let code = |args: &[&str]| sim(args).status.code().unwrap();
    assert_eq!(
        code(&[
            "run",
            "--workload",
            "VA",
            "--arch",
            "dimm-pim",
            "--pipeline",
            "4"
        ]),
        3
    );
    assert_eq!(
        code(&[
            "run",
            "--workload",
            "VA",
            "--arch",
            "dimm-pim",
            "--device-assist"
        ]),
        3
    );
    assert_eq!(code(&["run", "--workload", "NOPE", "--arch", "cxl-opt"]), 2);
    assert_eq!(
        code(&[
            "--set",
            "cxl.channels=0",
            "run",
            "--workload",
            "VA",
            "--arch",
            "cxl-opt"
        ]),
        1
    );
    assert_eq!(code(&["--set", "cxl.chanels=4", "validate-config"]), 1);
    assert_eq!(code(&["run", "--workload", "VA"]), 3);
    assert_eq!(
        code(&[
            "run",
            "--workload",
            "VA",
            "--arch",
            "cxl-opt",
            "--devices",
            "2"
        ]),
        3
    );
    assert_eq!(
        code(&[
            "--set",
            "cxl.devices=2",
            "run",
            "--workload",
            "VA",
            "--arch",
            "cxl-opt",
            "--pus",
            "8",
            "--devices",
            "2"
        ]),
        0
    );
    assert_eq!(
        code(&["compare-assist", "--workload", "MLP", "--arch", "dimm-pim"]),
        3
    );
}

#[test]
fn bad_config_files_exit_1_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let typo = dir.path().join("typo.json");
    std::fs::write(&typo, r#"{"cxl.mem_latency": 180}"#).unwrap();
    let o = sim(&["--config", typo.to_str().unwrap(), "validate-config"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cxl.mem_latency"));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{").unwrap();
    assert_eq!(
        sim(&["--config", broken.to_str().unwrap(), "validate-config"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        sim(&["--config", "/nonexistent/cfg.json", "validate-config"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn json_errors_are_machine_readable() {
    let o = sim(&[
        "--json-errors",
        "run",
        "--workload",
        "NOPE",
        "--arch",
        "cxl-opt",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"]["code"], 2);
    assert_eq!(err["error"]["kind"], "unknown_workload");
    assert!(err["error"]["message"].as_str().unwrap().contains("NOPE"));
}

#[test]
fn config_path_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("slow.json");
    std::fs::write(&cfg, r#"{"cxl.switch_delay_ns": 1000}"#).unwrap();
    let args = ["run", "--workload", "VA", "--arch", "cxl-opt", "--pus", "2"];
    let base = stdout(&sim(&args));
    let via_env = stdout(
        &bin()
            .args(args)
            .env("NEARMEM_SIM_CONFIG", &cfg)
            .output()
            .unwrap(),
    );
    assert!(via_env.contains(&format!("# config {}", cfg.display())));
    assert!(num(&rows(&via_env)[0], "total_ps") > num(&rows(&base)[0], "total_ps"));
}

#[test]
fn shipped_config_equals_the_built_in_defaults() {
    let text = std::fs::read_to_string(shipped_config()).unwrap();
    assert_eq!(
        SystemConfig::from_json_str(&text).unwrap(),
        SystemConfig::default()
    );
    let doc: Value = serde_json::from_str(&text).unwrap();
    for (k, v) in doc.as_object().unwrap() {
        if !k.starts_with('_') {
            assert!(v["_comment"].is_string(), "{k} lacks a _comment");
        }
    }
    let from_file: Value = serde_json::from_str(&stdout(&sim(&[
        "--config",
        shipped_config().to_str().unwrap(),
        "validate-config",
    ])))
    .unwrap();
    let defaults: Value = serde_json::from_str(&stdout(&sim(&["validate-config"]))).unwrap();
    assert_eq!(from_file["sha256"], defaults["sha256"]);
    assert_eq!(defaults["derived"]["total_pus"], 512);
    assert_eq!(defaults["derived"]["fixed_cxl_overhead_ps"], 250_000);
}

#[test]
fn default_sweep_is_the_full_sorted_cross_product_and_deterministic() {
    let a = stdout(&sim(&["sweep"]));
    let b = stdout(&sim(&["sweep"]));
    assert_eq!(a, b);
    let r = rows(&a);
    assert_eq!(r.len(), 14 * 3 * 10);
    let keys: Vec<(String, String, u32)> = r
        .iter()
        .map(|x| {
            (
                x["workload"].clone(),
                x["arch"].clone(),
                x["n_pus"].parse().unwrap(),
            )
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn degenerate_sweep_equals_run() {
    let s = stdout(&sim(&[
        "sweep",
        "--workload",
        "SEL",
        "--arch",
        "cxl-unopt",
        "--pus",
        "1",
    ]));
    let r = stdout(&sim(&[
        "run",
        "--workload",
        "SEL",
        "--arch",
        "cxl-unopt",
        "--pus",
        "1",
    ]));
    assert_eq!(data_lines(&s), data_lines(&r));
    assert_eq!(data_lines(&s).len(), 2);
}

#[test]
fn sweep_json_mirrors_csv_fields() {
    let csv = stdout(&sim(&[
        "sweep",
        "--workload",
        "VA,MLP",
        "--arch",
        "cxl-opt",
        "--pus",
        "1,8",
    ]));
    let json: Value = serde_json::from_str(&stdout(&sim(&[
        "sweep",
        "--workload",
        "VA,MLP",
        "--arch",
        "cxl-opt",
        "--pus",
        "1,8",
        "--format",
        "json",
    ])))
    .unwrap();
    let rows_json = json["rows"].as_array().unwrap();
    let rows_csv = rows(&csv);
    assert_eq!(rows_json.len(), rows_csv.len());
    for (j, c) in rows_json.iter().zip(&rows_csv) {
        let keys: Vec<&str> = j.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, CSV_COLUMNS);
        assert_eq!(j["total_ps"].as_u64().unwrap().to_string(), c["total_ps"]);
    }
    assert!(json["provenance"][0]
        .as_str()
        .unwrap()
        .starts_with("nearmem-sim"));
}

#[test]
fn assist_speeds_up_mlp_and_leaves_exchange_free_runs_alone() {
    let mlp = stdout(&sim(&[
        "compare-assist",
        "--workload",
        "MLP",
        "--pus",
        "512",
    ]));
    assert_eq!(rows(&mlp).len(), 2);
    assert!(summary(&mlp, "assist_speedup_transfer_time") >= 1.3);

    let va = stdout(&sim(&["compare-assist", "--workload", "VA", "--pus", "64"]));
    assert_eq!(summary(&va, "assist_speedup_transfer_time"), 1.0);
    assert_eq!(summary(&va, "assist_speedup_total"), 1.0);

    let silent = stdout(&sim(&[
        "compare-assist",
        "--workload",
        "MLP",
        "--pus",
        "64",
        "--workload-set",
        "comm.rounds=0",
    ]));
    assert_eq!(summary(&silent, "assist_speedup_transfer_time"), 1.0);
}

#[test]
fn generated_trace_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mlp.ndjson");
    let p = path.to_str().unwrap();
    stdout(&sim(&[
        "gen-trace",
        "--workload",
        "MLP",
        "--pus",
        "16",
        "--arch",
        "cxl-opt",
        "-o",
        p,
    ]));
    let t = parse_trace_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(
        (t.workload_name(), t.n_pus(), t.staged()),
        ("MLP", 16, false)
    );

    let from_trace = stdout(&sim(&["run", "--trace", p, "--arch", "cxl-opt"]));
    let generated = stdout(&sim(&[
        "run",
        "--workload",
        "MLP",
        "--arch",
        "cxl-opt",
        "--pus",
        "16",
    ]));
    assert_eq!(data_lines(&from_trace), data_lines(&generated));
}

#[test]
fn timeline_has_one_line_per_event() {
    let dir = tempfile::tempdir().unwrap();
    let tl = dir.path().join("tl.ndjson");
    stdout(&sim(&[
        "run",
        "--workload",
        "UNI",
        "--arch",
        "cxl-opt",
        "--pus",
        "4",
        "--emit-timeline",
        tl.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&tl).unwrap();
    // 4 staging copies, 4 kernels, 4 exchanges, 1 barrier, 4 read-backs.
    assert_eq!(text.lines().count(), 17);
    for line in text.lines() {
        let e: Value = serde_json::from_str(line).unwrap();
        assert!(e["end"].as_u64() >= e["start"].as_u64());
    }
}

#[test]
fn normalization_baselines() {
    let best = stdout(&sim(&[
        "sweep",
        "--workload",
        "VA,SPMV",
        "--pus",
        "1,64",
        "--normalize-to",
        "best",
    ]));
    let r = rows(&best);
    let mut min_per_point: HashMap<(String, String), f64> = HashMap::new();
    for x in &r {
        let v = num(x, "normalized_total");
        assert!(v >= 1.0);
        let k = (x["workload"].clone(), x["n_pus"].clone());
        let m = min_per_point.entry(k).or_insert(f64::MAX);
        *m = m.min(v);
    }
    assert!(min_per_point.values().all(|&m| m == 1.0));

    let dimm = stdout(&sim(&[
        "sweep",
        "--workload",
        "VA",
        "--pus",
        "8",
        "--normalize-to",
        "dimm-pim",
    ]));
    for x in rows(&dimm) {
        if x["arch"] == "dimm-pim" {
            assert_eq!(num(&x, "normalized_total"), 1.0);
        }
    }

    // The DIMM-PIM baseline is simulated when the sweep does not include it.
    let only_cxl = stdout(&sim(&[
        "sweep",
        "--workload",
        "VA",
        "--arch",
        "cxl-opt",
        "--pus",
        "8",
        "--normalize-to",
        "dimm-pim",
    ]));
    let full = rows(&dimm);
    let cxl_full = full.iter().find(|x| x["arch"] == "cxl-opt").unwrap();
    assert_eq!(
        rows(&only_cxl)[0]["normalized_total"],
        cxl_full["normalized_total"]
    );

    let cpu = stdout(&sim(&[
        "run",
        "--workload",
        "VA",
        "--arch",
        "dimm-pim",
        "--normalize-to",
        "cpu",
    ]));
    assert!(num(&rows(&cpu)[0], "normalized_total") > 0.0);
}

#[test]
fn output_flag_writes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = sim(&[
        "run",
        "--workload",
        "GEMV",
        "--arch",
        "cxl-opt",
        "--pus",
        "2",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(stdout(&o).is_empty());
    assert_eq!(rows(&std::fs::read_to_string(out).unwrap()).len(), 1);
}
