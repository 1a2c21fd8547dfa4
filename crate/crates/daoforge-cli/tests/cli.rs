//! Binary-level tests: exit codes, stdout/stderr separation, and the
//! documented command behaviors.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(path: &str) -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures")).join(path)
}

fn daoforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daoforge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn compile_emits_golden_structure() {
    let out = daoforge(&[
        "compile",
        fixture("programs/supply_cap_rseth.dao").to_str().unwrap(),
        "--registry",
        fixture("registry.json").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let payload: serde_json::Value = serde_json::from_str(&stdout_of(&out)).expect("stdout is JSON");
    let wrapper = &payload[0];
    assert_eq!(wrapper["address"], "0x4dbd4fc535ac27206064b68ffcf827b0a60bab3f");
    let inner = wrapper["payload"][0]["payload"].as_str().unwrap();
    assert_eq!(
        inner,
        "0x000000000000000000000000f176fb51f4eb826136a54fdc71c50fcd2202e272\
         0000000000000000000000000fbcbaea96ce0cf7ee00a8c19c3ab6f5dc8e1921\
         0000000000000000000000000000000000000000000000000000000000001388"
    );
}

#[test]
fn compile_is_byte_deterministic() {
    let program = fixture("programs/supply_cap_wsteth.dao");
    let registry = fixture("registry.json");
    let args = [
        "compile",
        program.to_str().unwrap(),
        "--registry",
        registry.to_str().unwrap(),
    ];
    assert_eq!(stdout_of(&daoforge(&args)), stdout_of(&daoforge(&args)));
}

#[test]
fn compile_empty_file_yields_empty_payload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.dao");
    std::fs::write(&path, "").unwrap();
    let out = daoforge(&[
        "compile",
        path.to_str().unwrap(),
        "--registry",
        fixture("registry.json").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let payload: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(payload, serde_json::json!([]));
}

#[test]
fn compile_missing_registry_is_config_error() {
    let out = daoforge(&[
        "compile",
        fixture("programs/supply_cap_wsteth.dao").to_str().unwrap(),
        "--registry",
        "/nonexistent/registry.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compile_syntax_error_exits_one_with_stderr_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.dao");
    std::fs::write(&path, "x <- ;").unwrap();
    let out = daoforge(&[
        "compile",
        path.to_str().unwrap(),
        "--registry",
        fixture("registry.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout_of(&out).is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("1:6"));
}

#[test]
fn compile_eval_error_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unknown.dao");
    std::fs::write(&path, "arbitrum(compV3:frobnicate());").unwrap();
    let out = daoforge(&[
        "compile",
        path.to_str().unwrap(),
        "--registry",
        fixture("registry.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frobnicate"));
}

fn config_arg() -> String {
    fixture("config/offline.json").to_str().unwrap().to_string()
}

#[test]
fn retrieve_emits_ordered_json_lines() {
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "retrieve",
        "--utterance",
        "Update the supply cap of wstETH to 5000 in the CompoundV3 WETH Arbitrium market",
        "--k",
        "4",
    ]);
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = stdout_of(&out)
        .lines()
        .map(|l| serde_json::from_str(l).expect("each line is JSON"))
        .collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0]["id"], "s01-supplycap-arb-wsteth");
    assert!(lines[0]["matchedLabels"].as_u64().unwrap() >= 7);
}

#[test]
fn retrieve_k_zero_prints_nothing() {
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "retrieve",
        "--utterance",
        "Update the supply cap of wstETH",
        "--k",
        "0",
    ]);
    assert!(out.status.success());
    assert!(stdout_of(&out).is_empty());
}

#[test]
fn retrieve_without_label_overlap_prints_nothing() {
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "retrieve",
        "--utterance",
        "entirely unrelated gibberish words",
        "--k",
        "4",
    ]);
    assert!(out.status.success());
    assert!(stdout_of(&out).is_empty());
}

#[test]
fn synthesize_offline_canonical_utterance() {
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "--offline",
        "synthesize",
        "--utterance",
        "Update the supply cap of wstETH to 5000 in the CompoundV3 WETH Arbitrium market",
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!(doc["program"]
        .as_str()
        .unwrap()
        .contains("arb(compV3:update_supplyCap(collateral,market,5000));"));
    assert_eq!(doc["payload"][0]["address"], "0x4dbd4fc535ac27206064b68ffcf827b0a60bab3f");
}

#[test]
fn synthesize_gibberish_exits_three() {
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "--offline",
        "synthesize",
        "--utterance",
        "Frobnicate the quantum flux capacitor immediately",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn synthesize_fallback_failure_exits_four() {
    // COMP is a known token, so a target exists, but no fixture ABI file
    // is available for it
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "--offline",
        "synthesize",
        "--utterance",
        "Transfer COMP",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn synthesize_fallback_handles_atypical_pause() {
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "--offline",
        "synthesize",
        "--utterance",
        "Pause the market 0x0fbcbaea96ce0cf7ee00a8c19c3ab6f5dc8e1921",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!(doc["program"].is_null());
    assert_eq!(doc["payload"][0]["functionSig"], "pause(bool,bool,bool,bool,bool)");
}

#[test]
fn scripted_generator_recovers_on_retry() {
    let config = fixture("config/scripted.json");
    let out = daoforge(&[
        "--config",
        config.to_str().unwrap(),
        "synthesize",
        "--utterance",
        "Update the supply cap of wstETH to 5000 in the CompoundV3 WETH Arbitrium market",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    // first scripted response is unparseable; the second validates
    assert_eq!(doc["attempts"], 2);
}

#[test]
fn config_with_missing_path_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        serde_json::json!({
            "registryPath": "nope/registry.json",
            "sampleDbPath": "nope/samples.jsonl",
            "lexiconPath": "nope/lexicon.json",
            "stateModelPath": "nope/state_model.json",
            "fixtureDir": "nope",
            "embeddingProvider": "test",
            "generator": "template",
            "k": 4,
            "maxRetries": 2,
            "tokenBudget": 128000
        })
        .to_string(),
    )
    .unwrap();
    let out = daoforge(&[
        "--config",
        config_path.to_str().unwrap(),
        "retrieve",
        "--utterance",
        "anything",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_counts_perturbed_golden_as_semantic_analogy_failure() {
    // clone a passing case but nudge one value word in its golden payload
    let case_text =
        std::fs::read_to_string(fixture("cases/canonical/c02-supplycap-arb-rseth.json")).unwrap();
    let mut case: serde_json::Value = serde_json::from_str(&case_text).unwrap();
    let hex = case["golden"][0]["payload"][0]["payload"].as_str().unwrap().to_string();
    // cap 20000 = 0x4e20; the golden becomes 20001
    let perturbed_hex = hex.replace("4e20", "4e21");
    assert_ne!(hex, perturbed_hex);
    case["golden"][0]["payload"][0]["payload"] = serde_json::Value::String(perturbed_hex);

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("perturbed.json"), serde_json::to_string(&case).unwrap())
        .unwrap();
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "bench",
        "--cases",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(report["counts"]["sa"], 1);
    assert_eq!(report["passRate"], 0.0);
}

#[test]
fn live_mode_without_key_is_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_daoforge"))
        .args([
            "--config",
            &config_arg(),
            "--live",
            "synthesize",
            "--utterance",
            "Update the supply cap of wstETH to 5000",
        ])
        .env_remove("GENERATOR_API_KEY")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_program_reports_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.dao");
    std::fs::write(&path, "arbitrum(compV3:update_supplyCap(x,y));").unwrap();
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "validate",
        "--program",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(doc["valid"], false);
    assert!(!doc["diagnostics"].as_array().unwrap().is_empty());
}

#[test]
fn validate_classifies_payload_pair() {
    let golden = fixture("cases/canonical/c01-supplycap-arb-wsteth.json");
    let case: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&golden).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let payload_path = dir.path().join("payload.json");
    std::fs::write(&payload_path, serde_json::to_string(&case["golden"]).unwrap()).unwrap();
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "validate",
        "--generated",
        payload_path.to_str().unwrap(),
        "--golden",
        payload_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(doc["matchLevel"], "EM");
}

#[test]
fn bench_empty_dir_reports_zero_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "bench",
        "--cases",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(report["counts"]["em"], 0);
    assert_eq!(report["cases"], serde_json::json!([]));
}

#[test]
fn bench_malformed_case_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"not\": \"a case\"}").unwrap();
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "bench",
        "--cases",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_canonical_suite_passes_and_prints_table() {
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "--offline",
        "bench",
        "--cases",
        fixture("cases/canonical").to_str().unwrap(),
        "--k",
        "4",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(report["passRate"], 1.0);
    let counts = &report["counts"];
    let total = counts["em"].as_u64().unwrap()
        + counts["fe"].as_u64().unwrap()
        + counts["sa"].as_u64().unwrap()
        + counts["ei"].as_u64().unwrap();
    assert_eq!(total, 20);
    let table = String::from_utf8_lossy(&out.stderr);
    for column in ["Exact Match", "Functional Equivalence", "Semantic Analogy", "Error Identification", "Pass Rate (%)"] {
        assert!(table.contains(column), "missing column {column}");
    }
}

#[test]
fn bench_no_synthesizer_flag_flips_ps_column() {
    let out = daoforge(&[
        "--config",
        &config_arg(),
        "bench",
        "--cases",
        fixture("cases/adversarial").to_str().unwrap(),
        "--no-synthesizer",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(report["ps"], false);
    assert_eq!(report["re"], true);
}
