use std::path::Path;
use std::process::{Command, Output};

fn daemor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daemor"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn metric(out: &str, key: &str) -> f64 {
    out.lines()
        .flat_map(|l| l.split_whitespace())
        .find_map(|w| w.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {out}"))
        .parse()
        .unwrap()
}

#[test]
fn generate_reports_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let o = daemor(&["generate", "tline", "--q", "10", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("N=50 n_dyn=20"), "{out}");
    assert!(dir.path().join("model.json").exists());
    assert!(dir.path().join("model.E.mtx").exists());
}

#[test]
fn generated_files_reload_to_the_same_system() {
    let dir = tempfile::tempdir().unwrap();
    let o = daemor(&["generate", "tline", "--q", "1", "--out", p(dir.path()), "--stem", "one"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sidecar = dir.path().join("one.json");
    let (back, _) = daemor::model::load_matrix_market(&sidecar).unwrap();
    let orig =
        daemor::model::build_transmission_line(&daemor::model::TransmissionLineParams::telephone_cable(1)).unwrap();
    assert_eq!(back.order(), 5);
    assert_eq!(back.blocks(), orig.blocks());

    let again = dir.path().join("again");
    let o = daemor(&["generate", "ingest", "--sidecar", p(&sidecar), "--out", p(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("N=5 n_dyn=2"));
}

#[test]
fn zero_sections_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = daemor(&["generate", "tline", "--q", "0", "--out", p(dir.path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("q >= 1"), "{}", stderr(&o));
}

#[test]
fn w_based_full_order_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = daemor(&[
        "reduce",
        "--tline",
        "10",
        "--method",
        "orthogonal-w",
        "--order",
        "20",
        "--out",
        p(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(metric(&out, "max_rel_freq_error") < 1e-8, "{out}");
    for f in [
        "config.json",
        "rom_model.json",
        "rom.json",
        "rom.A.mtx",
        "report.json",
        "report.csv",
        "spectrum.json",
        "freq_fom.csv",
        "freq_rom_bode.csv",
        "freq_error.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn pork_poles_are_the_mirrored_shifts() {
    let dir = tempfile::tempdir().unwrap();
    let o = daemor(&[
        "reduce",
        "--tline",
        "2",
        "--method",
        "pork",
        "--shifts",
        "1,2",
        "--out",
        p(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("spectrum.json")).unwrap();
    let spec: Vec<[f64; 2]> = serde_json::from_str(&text).unwrap();
    let mut re: Vec<f64> = spec.iter().map(|z| z[0]).collect();
    re.sort_by(f64::total_cmp);
    assert_eq!(spec.len(), 2);
    assert!((re[0] + 2.0).abs() < 1e-9 && (re[1] + 1.0).abs() < 1e-9, "{re:?}");
    assert!(spec.iter().all(|z| z[1] == 0.0));
}

#[test]
fn orthogonal_v_needs_the_unsafe_flag() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "reduce",
        "--tline",
        "10",
        "--method",
        "orthogonal-v",
        "--order",
        "6",
        "--out",
        p(dir.path()),
    ];
    let o = daemor(&args);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("guard"), "{}", stderr(&o));
    let mut forced = args.to_vec();
    forced.push("--unsafe-orthogonal");
    let o = daemor(&forced);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn config_file_reproduces_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = daemor(&[
        "reduce",
        "--random-dyn",
        "14",
        "--random-alg",
        "4",
        "--inputs",
        "2",
        "--outputs",
        "2",
        "--seed",
        "5",
        "--method",
        "cure-spark",
        "--order",
        "4",
        "--side",
        "output",
        "--out",
        p(&a),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(a.join("cure_log.jsonl").exists());
    let o = daemor(&["reduce", "--config", p(&a.join("config.json")), "--out", p(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "rom_model.json",
        "report.csv",
        "spectrum.json",
        "freq_error.csv",
        "cure_log.jsonl",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn every_method_runs_on_the_cable() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["two-sided-corrected", "pork", "cure-pork", "cure-spark"] {
        let out = dir.path().join(method);
        let o = daemor(&[
            "reduce",
            "--tline",
            "10",
            "--method",
            method,
            "--order",
            "6",
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{method}: {}", stderr(&o));
        assert!(stdout(&o).contains("stable=true"), "{method}: {}", stdout(&o));
    }
}

#[test]
fn sd_transform_gives_a_dissipative_w_based_rom() {
    let dir = tempfile::tempdir().unwrap();
    let o = daemor(&[
        "reduce",
        "--tline",
        "20",
        "--method",
        "orthogonal-w",
        "--order",
        "10",
        "--sd-transform",
        "--out",
        p(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("dissipative=true"), "{}", stdout(&o));
    assert!(dir.path().join("transform.json").exists());
}

#[test]
fn bode_and_compare_read_saved_roms() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = daemor(&[
        "reduce",
        "--tline",
        "6",
        "--method",
        "pork",
        "--order",
        "4",
        "--out",
        p(&run),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rom = run.join("rom_model.json");

    let stem = dir.path().join("bode/rom");
    let o = daemor(&[
        "bode",
        "--rom",
        p(&rom),
        "--omega-min",
        "1e4",
        "--omega-max",
        "1e9",
        "--points",
        "30",
        "--out",
        p(&stem),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("bode/rom_bode.csv").exists());

    let cmp = dir.path().join("cmp");
    let spec = format!("pork={}", p(&rom));
    let o = daemor(&["compare", "--tline", "6", "--rom", &spec, "--out", p(&cmp)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(cmp.join("report.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().starts_with("pork,4,true"), "{csv}");
}

#[test]
fn verify_passes_and_catches_the_mutation() {
    let o = daemor(&["verify"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("verify: PASS"));
    let o = daemor(&["verify", "--mutate-lyapunov-sign"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("verify: FAIL"));
}
