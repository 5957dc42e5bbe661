use std::path::Path;
use std::process::{Command, Output};

use noma_core::scenario::{default_scenario, read_csv, write_csv, ScenarioConfig};
use noma_core::Scheme;

fn noma_sim(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_noma-sim"));
    cmd.args(args).env_remove("NOMA_SEED");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn summary_seed(csv: &Path) -> u64 {
    let text = std::fs::read_to_string(csv.with_extension("json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["seed"].as_u64().unwrap()
}

#[test]
fn default_config_parses_back() {
    let out = run_ok(&mut noma_sim(&["default-config"]));
    let config = ScenarioConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(config, default_scenario());
}

#[test]
fn run_writes_results_that_validate() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out/run.csv");
    let csv_arg = csv.to_str().unwrap();
    run_ok(&mut noma_sim(&["run", "--schemes", "sca_noma,equal_power_noma", "--out", csv_arg]));
    let records = read_csv(&csv).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records[0].sum_rate_approx > 0.0);
    assert!(csv.with_extension("json").exists());

    let out = run_ok(&mut noma_sim(&["validate", csv_arg]));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed re-validation"));
}

#[test]
fn validate_rejects_tampered_allocation() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let csv_arg = csv.to_str().unwrap();
    run_ok(&mut noma_sim(&["run", "--schemes", "sca_noma", "--out", csv_arg]));
    let mut records = read_csv(&csv).unwrap();
    assert_eq!(records[0].scheme, Scheme::ScaNoma);
    records[0].power = records[0].power.as_ref().map(|p| p.scaled(10.0));
    write_csv(&records, &csv).unwrap();

    let out = noma_sim(&["validate", csv_arg]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn seed_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let from_env = dir.path().join("env.csv");
    run_ok(noma_sim(&["run", "--schemes", "equal_power_noma", "--out", from_env.to_str().unwrap()]).env("NOMA_SEED", "5"));
    assert_eq!(summary_seed(&from_env), 5);

    let from_flag = dir.path().join("flag.csv");
    run_ok(
        noma_sim(&["run", "--seed", "7", "--schemes", "equal_power_noma", "--out", from_flag.to_str().unwrap()])
            .env("NOMA_SEED", "5"),
    );
    assert_eq!(summary_seed(&from_flag), 7);
}

#[test]
fn sweep_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let args = ["sweep", "--axis", "p_max", "--values", "25,50", "--schemes", "sca_noma,oma_equal", "--out"];
    let mut args = args.to_vec();
    args.push(csv.to_str().unwrap());
    run_ok(&mut noma_sim(&args));
    assert_eq!(read_csv(&csv).unwrap().len(), 4);
    assert!(dir.path().join("sweep_sca_noma.dat").exists());
    assert!(dir.path().join("sweep_oma_equal.dat").exists());
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = default_scenario().to_toml_string().replace("[simulation]", "[simulation]\nmc_sample = 5");
    std::fs::write(&path, text).unwrap();
    let out = noma_sim(&["run", "--config", path.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("simulation"), "{stderr}");
    assert!(stderr.contains("mc_sample"), "{stderr}");
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
