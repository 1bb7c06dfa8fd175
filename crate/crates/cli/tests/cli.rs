use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clickstream"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn synth(dir: &Path, students: &str, seed: &str) -> String {
    let out = dir.join("cohort");
    let o = run(&["synth", "--students", students, "--seed", seed, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("events.jsonl").to_str().unwrap().to_string()
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(String::from)
        .collect()
}

#[test]
fn synth_then_encode_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth(dir.path(), "25", "11");
    let pairs = data_rows(&dir.path().join("cohort/sequences.tsv")).len();
    let out = dir.path().join("enc");
    let o = run(&["encode", "--input", &log, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&out.join("vwss.tsv")).len(), pairs);
}

#[test]
fn ipi_output_within_default_range() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth(dir.path(), "25", "12");
    let out = dir.path().join("ipi");
    assert!(run(&["ipi", "--input", &log, "--out-dir", out.to_str().unwrap()]).status.success());
    for row in data_rows(&out.join("ipi.tsv")) {
        let v: i32 = row.split('\t').nth(2).unwrap().parse().unwrap();
        assert!((-12..=12).contains(&v), "{row}");
    }
}

#[test]
fn report_rerun_is_byte_identical_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth(dir.path(), "30", "13");
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&[
            "report", "--input", &log, "--out-dir", out.to_str().unwrap(), "--k", "2", "--permutations", "99",
            "--seed", "5",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(out);
    }
    let mut names: Vec<_> = fs::read_dir(&outputs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 20);
    let first_line = fs::read_to_string(outputs[0].join(&names[0])).unwrap().lines().next().unwrap().to_string();
    assert!(first_line.starts_with("# config_sha256=") && first_line.len() == 16 + 64);
    for n in &names {
        let a = fs::read(outputs[0].join(n)).unwrap();
        let b = fs::read(outputs[1].join(n)).unwrap();
        assert_eq!(a, b, "{n:?} differs");
        assert!(a.starts_with(first_line.as_bytes()), "{n:?} lacks the config hash");
    }
}

#[test]
fn missing_input_exits_2() {
    let o = run(&["encode", "--input", "/definitely/not/here.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
}

#[test]
fn schema_error_exits_3_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.jsonl");
    fs::write(
        &log,
        "{\"student_id\":\"a\",\"video_id\":\"v\",\"t\":0,\"event\":\"play\"}\n{\"student_id\":\"a\",\"t\":1,\"event\":\"jump\"}\n",
    )
    .unwrap();
    let o = run(&["encode", "--input", log.to_str().unwrap(), "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.jsonl:2:"));
}

#[test]
fn bad_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth(dir.path(), "5", "1");
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[cluster]\nk_markov = 0\n").unwrap();
    let o = run(&["ipi", "--input", &log, "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn strdist_prints_table() {
    let o = run(&["strdist", "--pattern", "Pl,Pa,Sb,Pl", "--sequence", "PlSfPaSbSbPl"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("case\tpartial"));
    assert!(text.lines().any(|l| l.starts_with("Pl\t4.0\t")));
    assert!(text.contains("weight\t0.8"));
}
