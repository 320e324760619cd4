use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TRIPLE_INTEGRATOR: &str = "3 1 1 1
0 1 0
0 0 1
0 0 0
0
0
1
1 0 0
0
0
1
";

const CASE1_GRAPH: &str = "3\n2 1 1\n3 2 1\n";

fn h2sync(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_h2sync"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn setup(model: &str, graph: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("model.txt"), model).unwrap();
    fs::write(dir.path().join("graph.txt"), graph).unwrap();
    dir
}

fn csv_rows(path: PathBuf) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

const INPUTS: [&str; 4] = ["--model", "model.txt", "--graph", "graph.txt"];

fn with_inputs<'a>(cmd: &'a str, rest: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend(INPUTS);
    v.extend(rest);
    v
}

#[test]
fn check_accepts_the_triple_integrator_network() {
    let dir = setup(TRIPLE_INTEGRATOR, CASE1_GRAPH);
    let out = h2sync(dir.path(), &with_inputs("check", &["--out", "o"]));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = fs::read_to_string(dir.path().join("o/report.txt")).unwrap();
    assert!(report.contains("overall = true"));
    assert!(report.contains("theorem = 2"));
    assert!(dir.path().join("o/run.txt").exists());
}

#[test]
fn check_names_the_violated_condition() {
    let dir = setup("1 1 1 1\n1\n1\n1\n1\n", "2\n1 2 1\n");
    let out = h2sync(dir.path(), &with_inputs("check", &["--out", "o"]));
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("(b)"), "{}", stderr(&out));
    let report = fs::read_to_string(dir.path().join("o/report.txt")).unwrap();
    assert!(report.contains("overall = false"));
}

#[test]
fn malformed_graph_is_an_input_error_with_a_line_number() {
    let dir = setup(TRIPLE_INTEGRATOR, "3\n1 2 1\n2 x 1\n");
    let out = h2sync(dir.path(), &with_inputs("check", &["--out", "o"]));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn missing_file_is_an_input_error() {
    let dir = setup(TRIPLE_INTEGRATOR, CASE1_GRAPH);
    let out = h2sync(dir.path(), &["check", "--model", "nope.txt", "--graph", "graph.txt"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn analyze_writes_a_decreasing_h2_table() {
    let dir = setup(TRIPLE_INTEGRATOR, CASE1_GRAPH);
    let out = h2sync(
        dir.path(),
        &with_inputs("analyze", &["--protocol", "p2", "--rho", "4,6,10", "--delta", "0.0004", "--out", "o"]),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv_rows(dir.path().join("o/analysis.csv"));
    assert_eq!(header, "rho,h2,rho_times_h2,spectral_abscissa");
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), [4.0, 6.0, 10.0]);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
    assert!(rows.iter().all(|r| r[3] < 0.0));
}

#[test]
fn analyze_without_disturbances_reports_zero_h2() {
    let model = "2 1 2 1\n0 1\n0 0\n0\n1\n1 0\n0 1\n0\n0\n";
    let dir = setup(model, CASE1_GRAPH);
    let out = h2sync(dir.path(), &with_inputs("analyze", &["--protocol", "p1", "--rho", "1,2", "--out", "o"]));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (_, rows) = csv_rows(dir.path().join("o/analysis.csv"));
    assert!(rows.iter().all(|r| r[1] == 0.0));
}

#[test]
fn analyze_refuses_graphs_without_a_spanning_tree() {
    let dir = setup(TRIPLE_INTEGRATOR, "3\n2 1 1\n");
    let out = h2sync(dir.path(), &with_inputs("analyze", &["--rho", "4", "--out", "o"]));
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("(d)"), "{}", stderr(&out));
}

#[test]
fn full_state_protocol_needs_full_state_model() {
    let dir = setup(TRIPLE_INTEGRATOR, CASE1_GRAPH);
    let out = h2sync(dir.path(), &with_inputs("synth", &["--protocol", "p1", "--rho", "2", "--out", "o"]));
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn gains_below_one_are_rejected() {
    let dir = setup(TRIPLE_INTEGRATOR, CASE1_GRAPH);
    let out = h2sync(dir.path(), &with_inputs("synth", &["--rho", "0.5", "--out", "o"]));
    assert_eq!(code(&out), 2);
}

#[test]
fn synth_writes_parseable_realizations() {
    let dir = setup(TRIPLE_INTEGRATOR, CASE1_GRAPH);
    let out = h2sync(dir.path(), &with_inputs("synth", &["--rho", "4,10", "--out", "o"]));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for rho in ["4", "10"] {
        let text = fs::read_to_string(dir.path().join(format!("o/protocol_rho{rho}.txt"))).unwrap();
        let real = h2sync::ProtocolRealization::parse(&text).unwrap();
        assert_eq!(real.rho, rho.parse::<f64>().unwrap());
        assert!(real.delta.is_some());
    }
}

#[test]
fn noise_free_simulation_synchronizes() {
    let dir = setup(TRIPLE_INTEGRATOR, CASE1_GRAPH);
    let out = h2sync(
        dir.path(),
        &with_inputs(
            "simulate",
            &["--rho", "4", "--delta", "0.0004", "--noise", "off", "--t-final", "60", "--seed", "3", "--out", "o"],
        ),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv_rows(dir.path().join("o/trajectory_rho4.csv"));
    assert!(header.starts_with("t,x_1[1],x_1[2],x_1[3],x_2[1]"));
    assert!(header.ends_with(",sync_error"));
    let first = rows.first().unwrap().last().copied().unwrap();
    let last = rows.last().unwrap().last().copied().unwrap();
    assert!(last < 1e-6 * first, "sync error {first} -> {last}");
}

#[test]
fn simulation_summary_has_one_row_per_rho_and_seed() {
    let dir = setup(TRIPLE_INTEGRATOR, CASE1_GRAPH);
    let out = h2sync(
        dir.path(),
        &with_inputs("simulate", &["--rho", "4,10", "--seeds", "3", "--t-final", "5", "--out", "o"]),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("o/summary.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "case,rho,delta,seed,rms_sync_error");
    assert_eq!(lines.len(), 7);
    assert!(lines[1..].iter().all(|l| l.starts_with("custom,")));
}

#[test]
fn resolved_config_replays_bit_for_bit() {
    let dir = setup(TRIPLE_INTEGRATOR, CASE1_GRAPH);
    let out = h2sync(
        dir.path(),
        &with_inputs("simulate", &["--rho", "6", "--seed", "7", "--t-final", "4", "--out", "o"]),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run = fs::read_to_string(dir.path().join("o/run.txt")).unwrap();
    let replay = run.lines().find_map(|l| l.strip_prefix("replay = ")).unwrap();
    let mut args: Vec<&str> = replay.split_whitespace().skip(1).collect();
    // replay from inside the output directory, against the copied inputs
    let pos = args.iter().position(|a| *a == "simulate").unwrap();
    args.splice(pos + 1..pos + 1, INPUTS);
    args.extend(["--out", "again"]);
    let out = h2sync(&dir.path().join("o"), &args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["summary.csv", "trajectory_rho6.csv", "protocol_rho6.txt"] {
        assert_eq!(
            fs::read(dir.path().join("o").join(f)).unwrap(),
            fs::read(dir.path().join("o/again").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn reproduce_case2_runs_the_twenty_agent_network() {
    let dir = TempDir::new().unwrap();
    let out = h2sync(dir.path(), &["reproduce-case2", "--rho", "10", "--t-final", "2", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, _) = csv_rows(dir.path().join("o/trajectory_rho10.csv"));
    assert_eq!(header.split(',').count(), 1 + 20 * 3 + 1);
    let graph = fs::read_to_string(dir.path().join("o/graph.txt")).unwrap();
    assert_eq!(graph.lines().next(), Some("20"));
    let summary = fs::read_to_string(dir.path().join("o/summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("case2,1e1,4e-4,0,"));
}

#[test]
fn reproduced_realizations_do_not_depend_on_the_network() {
    let dir = TempDir::new().unwrap();
    for (cmd, out) in [("reproduce-case1", "c1"), ("reproduce-case2", "c2")] {
        let o = h2sync(dir.path(), &[cmd, "--rho", "6", "--t-final", "1", "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(dir.path().join("c1/protocol_rho6.txt")).unwrap(),
        fs::read(dir.path().join("c2/protocol_rho6.txt")).unwrap()
    );
}

#[test]
fn help_documents_output_columns_and_exit_codes() {
    let out = h2sync(Path::new("."), &["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in ["rho,h2,rho_times_h2,spectral_abscissa", "case,rho,delta,seed,rms_sync_error", "Exit codes"] {
        assert!(text.contains(needle), "missing {needle}");
    }
}
