use std::path::{Path, PathBuf};
use std::process::Command;

use ccuc::cli::{main_with_args, RunManifest, SolveSummary, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE};
use ccuc::formulation::UcSchedule;
use ccuc::miqp::read_mps;

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name).display().to_string()
}

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("ccuc").chain(args.iter().copied()))
}

fn path(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(main: &Path) -> RunManifest {
    let text = std::fs::read_to_string(ccuc::cli::manifest_path(main)).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn solve_writes_schedule_costs_quantiles_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir, "case3.json");
    assert_eq!(run(&["solve", &data("case3.json"), s(&out), "--gap", "0"]), EXIT_OK);
    let sched = UcSchedule::read_json(&out).unwrap();
    assert_eq!(sched.horizon, 4);
    let costs: SolveSummary =
        serde_json::from_str(&std::fs::read_to_string(path(&dir, "case3.costs.json")).unwrap()).unwrap();
    assert!((costs.objective - sched.costs.total).abs() < 1e-6 * costs.objective);
    let q = std::fs::read_to_string(path(&dir, "case3.quantiles.csv")).unwrap();
    assert_eq!(q.lines().count(), 1 + 4 * (2 + 6));
    let m = manifest(&out);
    assert_eq!(m.command, "solve");
    assert_eq!(m.outputs.len(), 3);
    assert!(m.finished_at >= m.started_at);
    assert_eq!(m.config["gap"], 0.0);
}

#[test]
fn solve_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (path(&dir, "a.json"), path(&dir, "b.json"));
    assert_eq!(run(&["solve", &data("case3.json"), s(&a), "--gap", "0"]), EXIT_OK);
    assert_eq!(run(&["solve", &data("case3.json"), s(&b), "--gap", "0"]), EXIT_OK);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(path(&dir, "a.costs.json")).unwrap(),
        std::fs::read(path(&dir, "b.costs.json")).unwrap()
    );
}

#[test]
fn export_only_writes_mps() {
    let dir = tempfile::tempdir().unwrap();
    let mps = path(&dir, "case3.mps");
    assert_eq!(run(&["solve", &data("case3.json"), "--export-mps", s(&mps)]), EXIT_OK);
    let model = read_mps(&std::fs::read_to_string(&mps).unwrap()).unwrap();
    assert_eq!(model.n_vars(), 76);
    assert_eq!(model.binaries().len(), 12);
    assert_eq!(manifest(&mps).outputs, vec![mps.clone()]);
    assert!(!path(&dir, "case3.json").exists());
}

#[test]
fn tight_case_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir, "tight.json");
    assert_eq!(run(&["solve", &data("case3-tight.json"), s(&out)]), EXIT_INFEASIBLE);
    assert!(!out.exists());
    assert_eq!(
        run(&["solve", &data("case3-tight.json"), s(&out), "--allow-curtailment", "true"]),
        EXIT_OK
    );
    assert!(UcSchedule::read_json(&out).unwrap().total_curtailment() > 0.0);
}

#[test]
fn usage_and_schema_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir, "x.json");
    assert_eq!(run(&["solve"]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["solve", &data("case3.json"), s(&out), "--gap=-1"]), EXIT_USAGE);
    assert_eq!(run(&["solve", &data("case3.json")]), EXIT_USAGE);
    assert_eq!(run(&["solve", &data("missing.json"), s(&out)]), EXIT_USAGE);
    let bad = path(&dir, "bad.json");
    std::fs::write(&bad, r#"{"name": "bad", "horizon": 0}"#).unwrap();
    assert_eq!(run(&["solve", s(&bad), s(&out)]), EXIT_USAGE);
    assert_eq!(run(&["--help"]), EXIT_OK);
}

#[test]
fn validate_after_solve() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir, "case3.json");
    assert_eq!(run(&["solve", &data("case3.json"), s(&out), "--gap", "0"]), EXIT_OK);
    assert_eq!(
        run(&["validate", &data("case3.json"), s(&out), "--mc-samples", "20000", "--mc-seed", "4"]),
        EXIT_OK
    );
    let csv = path(&dir, "case3.validation.csv");
    let report = ccuc::validate::ValidationReport::read_csv(&csv, 20_000).unwrap();
    assert_eq!(report.rows.len(), 4 * (2 + 6));
    assert_eq!(manifest(&csv).seeds[0], 4);
}

#[test]
fn fit_then_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let gmm = path(&dir, "g.json");
    let fit = ["--components", "2", "--samples", "3000", "--seed", "5"];
    let mut args = vec!["fit", &data("case6.json"), s(&gmm)].into_iter().map(String::from).collect::<Vec<_>>();
    args.extend(fit.iter().map(|a| a.to_string()));
    assert_eq!(main_with_args(std::iter::once("ccuc".to_string()).chain(args)), EXIT_OK);
    let gmms = ccuc::gmm::read_gmm_file(&gmm).unwrap();
    assert_eq!(gmms.len(), 6);
    assert!(gmms.iter().all(|g| g.n_components() == 2 && g.dimension == 3));
    assert_eq!(manifest(&gmm).seeds, vec![5, 6, 7, 8, 9, 10]);

    // fitting needs marginals, not a prefitted file
    assert_eq!(run(&["fit", &data("case3.json"), s(&path(&dir, "h.json"))]), EXIT_USAGE);

    let csv = path(&dir, "sweep.csv");
    let case6 = data("case6.json");
    let mut args = vec!["sweep", &case6, s(&csv), "--r-values", "-0.3,0.3"];
    args.extend(fit);
    assert_eq!(run(&args), EXIT_OK);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "r,status,total,uc,fuel,reserve,curtail_penalty,relative_gap");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("-0.3,"));
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_ccuc");
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir, "o.json");
    let code = |args: &[&str]| Command::new(exe).args(args).output().unwrap().status.code().unwrap();
    assert_eq!(code(&["solve", &data("case3.json"), s(&out)]), 0);
    assert_eq!(code(&["solve", &data("case3-tight.json"), s(&out)]), 2);
    assert_eq!(code(&["solve", "--no-such-flag"]), 1);
}
