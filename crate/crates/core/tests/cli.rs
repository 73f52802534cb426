// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intercore"))
        .args(args)
        .output()
        .unwrap()
}

fn data(name: &str) -> String {
    format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const CACHE: &str = r#""cache": {"levels": [{"sets": 1, "associativity": 3, "hit_latency": 5, "shared": true}],
                    "line_size": 16, "miss_latency": 100}"#;

#[test]
fn analyze_selected_methods() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bin(&[
        "analyze",
        &data("fig3.json"),
        "--methods",
        "proposed,zhang",
        "-o",
        out,
        "--no-timestamp",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fig3.results.json")).unwrap())
            .unwrap();
    let methods: Vec<&str> = json["methods"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["method"].as_str().unwrap())
        .collect();
    assert_eq!(methods.len(), 2);
    assert!(json["oracle"].is_null());
    assert!(json.get("generated_at").is_none_or(|v| v.is_null()));
    assert!(dir.path().join("fig3.report.txt").exists());
}

#[test]
fn analyze_with_oracle_reports_verdict() {
    let dir = TempDir::new().unwrap();
    let o = bin(&[
        "analyze",
        &data("fig3.json"),
        "--oracle",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("SOUND"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fig3.results.json")).unwrap())
            .unwrap();
    assert_eq!(json["oracle"]["verdict"], "SOUND");
    assert!(json["generated_at"].is_u64());
}

#[test]
fn missing_cache_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let p = write(
        dir.path(),
        "bad.json",
        r#"{"tasks": [{"name": "t", "analyzed": true, "paths": [[{"id": 1, "count": 1, "body": [{"block": 0}]}]]}],
            "cores": {"c0": ["t"]}}"#,
    );
    let o = bin(&[
        "analyze",
        p.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn private_only_cache_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let doc = format!(
        r#"{{{}, "tasks": [{{"name": "t", "analyzed": true, "paths": [[{{"id": 1, "count": 1, "body": [{{"block": 0}}]}}]]}}],
            "cores": {{"c0": ["t"]}}}}"#,
        CACHE.replace("true", "false")
    );
    let p = write(dir.path(), "private.json", &doc);
    let o = bin(&[
        "analyze",
        p.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn wrong_age_override_is_caught_by_the_oracle() {
    // A is really aged 2, but claimed 0; one remote access then evicts it.
    let dir = TempDir::new().unwrap();
    let doc = format!(
        r#"{{{CACHE},
            "tasks": [
              {{"name": "t", "analyzed": true,
                "ages": [{{"block": 4, "age": 0}}],
                "paths": [[{{"id": 1, "count": 1, "body": [{{"block": 0}}]}},
                           {{"id": 2, "count": 1, "body": [{{"block": 16}}]}},
                           {{"id": 3, "count": 1, "body": [{{"block": 32}}]}},
                           {{"id": 4, "count": 1, "body": [{{"block": 0}}]}}]]}},
              {{"name": "u", "paths": [[{{"id": 1, "count": 1, "body": [{{"block": 160}}]}}]]}}
            ],
            "cores": {{"c0": ["t"], "c1": ["u"]}}}}"#
    );
    let p = write(dir.path(), "lie.json", &doc);
    let o = bin(&["oracle", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));
    assert!(stdout(&o).contains("VIOLATION"));
}

#[test]
fn compare_writes_one_row_per_file_plus_mean() {
    let dir = TempDir::new().unwrap();
    for f in ["fig2.json", "fig3.json", "fig5.json"] {
        fs::copy(data(f), dir.path().join(f)).unwrap();
    }
    let o = bin(&["compare", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "instance,proposed,zhang,liang,proposed_over_zhang,proposed_over_liang"
    );
    assert_eq!(lines.len(), 1 + 3 + 1);
    assert!(lines[4].starts_with("mean,"));
}

#[test]
fn compare_generated_is_deterministic() {
    let a = bin(&["compare", "--gen", "5", "--seed", "7"]);
    let b = bin(&["compare", "--gen", "5", "--seed", "7", "--jobs", "1"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 1 + 5 + 1);
}

#[test]
fn gen_is_reproducible() {
    let (x, y) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&x, &y] {
        let o = bin(&[
            "gen",
            "--seed",
            "3",
            "--count",
            "4",
            "-o",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    for seed in 3..7 {
        let name = format!("gen-{seed:06}.json");
        assert_eq!(
            fs::read(x.path().join(&name)).unwrap(),
            fs::read(y.path().join(&name)).unwrap()
        );
    }
    let o = bin(&["gen", "--count", "0", "-o", x.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ages_lists_program_and_region_scopes() {
    let o = bin(&["ages", &data("fig3.json"), "--task", "tau"]);
    assert_eq!(o.status.code(), Some(0));
    let entries: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let entries = entries.as_array().unwrap();
    assert!(entries.iter().all(|e| e["task"] == "tau"));
    assert!(entries.iter().any(|e| e["region"].is_null()));
    assert!(entries.iter().any(|e| e["region"].is_u64()));
    assert!(entries.iter().any(|e| e["age"] == "inf"));

    let o = bin(&["ages", &data("fig3.json"), "--task", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}
