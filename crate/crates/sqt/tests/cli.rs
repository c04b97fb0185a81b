use std::path::Path;
use std::process::{Command, Output};

use sqt::table::Table;

fn sqt(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sqt"));
    cmd.args(args).env_remove("SQT_SEED");
    if let Some(s) = env_seed {
        cmd.env("SQT_SEED", s);
    }
    cmd.output().expect("run sqt")
}

fn table(out: &Output) -> Table {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Table::read_csv(&out.stdout[..]).unwrap()
}

fn comment<'a>(t: &'a Table, key: &str) -> Option<&'a str> {
    t.comments.iter().find_map(|c| c.strip_prefix(key)?.strip_prefix(" = "))
}

const SMALL: &[&str] = &[
    "--n_modes",
    "4",
    "--n_samples",
    "12",
    "--calib_samples",
    "10",
    "--s",
    "0.5,1",
];

#[test]
fn csv_round_trips_and_reruns_are_byte_identical() {
    let args = [&["fano-direct"], SMALL].concat();
    let a = sqt(&args, None);
    let b = sqt(&args, None);
    assert_eq!(a.stdout, b.stdout);
    let t = table(&a);
    assert_eq!(t.rows.len(), 2);
    assert_eq!(Table::read_csv(t.to_csv_string().as_bytes()).unwrap().rows, t.rows);
    assert_eq!(comment(&t, "command"), Some("fano-direct"));
    assert_eq!(comment(&t, "n_modes"), Some("4"));
    assert!(comment(&t, "metadata.xi").is_some());
}

#[test]
fn thread_count_does_not_change_output() {
    let one = sqt(&[&["fano-direct", "--threads", "1"], SMALL].concat(), None);
    let three = sqt(&[&["fano-direct", "--threads", "3"], SMALL].concat(), None);
    assert_eq!(table(&one), table(&three));
}

#[test]
fn exit_codes() {
    assert_eq!(sqt(&["fano-direct", "--n_modes", "0"], None).status.code(), Some(2));
    assert_eq!(sqt(&["fano-direct", "--no_such_key", "1"], None).status.code(), Some(2));
    assert_eq!(sqt(&["fano-direct", "--rho", "-1"], None).status.code(), Some(2));
    let past_threshold = [
        &["fano-direct", "--medium", "amplifying", "--s", "3.5"][..],
        &SMALL[..6],
    ]
    .concat();
    assert_eq!(sqt(&past_threshold, None).status.code(), Some(3));
    let fault = sqt(&["validate", "fast", "--inject-fault", "direct_bracket"], None);
    assert_eq!(fault.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&fault.stderr).contains("FAIL direct_bracket_reference"));
}

#[test]
fn validate_fast_passes() {
    let out = sqt(&["validate", "fast"], None);
    let t = table(&out);
    assert!(t.f64_column("passed").iter().all(|&p| p == 1.0), "{}", t.to_csv_string());
}

#[test]
fn empty_medium_gives_bare_detector() {
    // With no slices the Fano factor is 1 + d (F_in - 1) exactly.
    let t = table(&sqt(
        &[
            "sweep",
            "--lengths",
            "0",
            "--n_modes",
            "3",
            "--n_samples",
            "4",
            "--efficiency",
            "0.6",
            "--fano_in",
            "2.5",
            "--abs_or_gain_length",
            "30",
            "--occupation",
            "0.1",
            "--mean_free_path",
            "20",
        ],
        None,
    ));
    let f = t.f64_column("fano")[0];
    assert!((f - (1.0 + 0.6 * 1.5)).abs() < 1e-14, "{f}");
    assert_eq!(t.f64_column("effective_s")[0], 0.0);
}

#[test]
fn scan_minimum_matches_closed_form() {
    let t = table(&sqt(
        &[
            "fano-homodyne",
            "scan",
            "--n_modes",
            "4",
            "--n_media",
            "5",
            "--rho",
            "0.6",
            "--phi",
            "0.9",
            "--calib_samples",
            "10",
            "--s",
            "1",
        ],
        None,
    ));
    assert_eq!(t.rows.len(), 5 * 64);
    for (a, b) in t.f64_column("scan_min").iter().zip(t.f64_column("fano_min")) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    for (a, b) in t.f64_column("fano").iter().zip(t.f64_column("fano_min")) {
        assert!(a + 1e-12 >= b);
    }
}

#[test]
fn seed_precedence_is_file_then_env_then_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nn_modes = 3\nn_samples = 6\nmean_free_path = 20\ns = 0.5\nseed = 11\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let seed_of = |out: Output| comment(&table(&out), "seed").unwrap().to_string();
    assert_eq!(seed_of(sqt(&["fano-direct", "--config", cfg], None)), "11");
    assert_eq!(seed_of(sqt(&["fano-direct", "--config", cfg], Some("22"))), "22");
    assert_eq!(seed_of(sqt(&["fano-direct", "--config", cfg, "--seed", "33"], Some("22"))), "33");
    let a = sqt(&["fano-direct", "--config", cfg, "--seed", "22"], None);
    let b = sqt(&["fano-direct", "--config", cfg], Some("22"));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn bad_config_file_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "n_modes = 3\nn_samples = many\n").unwrap();
    let out = sqt(&["fano-direct", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg:2"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn json_output_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let json = dir.path().join("out.json");
    let out = sqt(
        &[
            "calibrate",
            "--n_modes",
            "8",
            "--calib_samples",
            "12",
            "--out",
            csv.to_str().unwrap(),
            "--json",
            json.to_str().unwrap(),
        ],
        None,
    );
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let t = Table::read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["command"], "calibrate");
    assert_eq!(doc["config"]["n_modes"], "8");
    assert_eq!(doc["rows"].as_array().unwrap().len(), t.rows.len());
    let fit = doc["metadata"]["mean_free_path_fit"].as_f64().unwrap();
    assert_eq!(comment(&t, "metadata.mean_free_path_fit").unwrap().parse::<f64>().unwrap(), fit);
    assert!(Path::new(&json).exists());
}

#[test]
fn help_lists_keys() {
    let out = sqt(&["fano-direct", "--help"], None);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("--n_modes"), "{text}");
    assert!(text.contains("--seed"));
}
