use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use airylab::dataset;
use airylab::nn::{Descriptor, NetworkWeights};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn airylab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airylab"))
        .args(args)
        .env("RUST_LOG", "info")
        .env_remove("ABL_JOBS")
        .output()
        .expect("binary runs")
}

fn toy(extra: &[&str]) -> Output {
    let config = configs().join("toy.json");
    let codebook = configs().join("toy_codebook.json");
    let mut args = vec!["--config", config.to_str().unwrap(), "--codebook", codebook.to_str().unwrap()];
    args.extend_from_slice(extra);
    airylab(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn hierarchical_sweep_reports_overhead() {
    let o = toy(&["sweep", "--method", "airy-hier", "--receiver", "1.2,0.1", "--receiver", "1.5,-0.3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("overhead 331"), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(10) == Some("331")));
}

#[test]
fn every_run_logs_scenario_hash_and_seed() {
    let config = airylab::scenario::ScenarioConfig::load(&configs().join("toy.json")).unwrap();
    let o = toy(&["--seed", "17", "caustic", "--theta", "-0.047", "--r", "1.589", "--c", "-2.246"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains(&format!("scenario {} seed 17", config.hash_hex())), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("y0,x_c,y_c,valid\n"));
}

#[test]
fn usage_errors_exit_nonzero() {
    let o = toy(&["eval", "--metric", "cdf"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = toy(&["sweep", "--method", "airy-magic", "--receiver", "1,0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = toy(&["sweep", "--method", "airy-bs", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = toy(&["sweep", "--method", "airy-bs"]);
    assert_eq!(o.status.code(), Some(2));
    let o = toy(&["--jobs", "0", "caustic", "--theta", "0", "--r", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = toy(&["sweep", "--method", "airy-dl", "--receiver", "1,0"]);
    assert_eq!(o.status.code(), Some(2), "learned methods need --weights");
}

#[test]
fn dataset_pipeline() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "toy.abtd");
    let o = toy(&["--seed", "5", "--out", &data, "dataset", "gen", "--random-count", "12", "--area", "0.3,1.8,-0.75,0.75"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = toy(&["dataset", "audit", "--input", &data, "--fraction", "0.25"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 mismatches"));

    let o = toy(&["dataset", "split", "--input", &data]);
    assert!(o.status.success(), "{}", stderr(&o));
    let split: dataset::Split = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((split.train.len(), split.val.len(), split.test.len()), (9, 1, 2));

    // a tampered label is caught when its record is re-swept
    let (manifest, mut records) = dataset::read_records(std::fs::File::open(&data).unwrap()).unwrap();
    records[0].labels.2 = (records[0].labels.2 + 1) % 11;
    let bad = path(&dir, "bad.abtd");
    dataset::write_records(std::fs::File::create(&bad).unwrap(), &manifest, &records).unwrap();
    let o = toy(&["dataset", "audit", "--input", &bad, "--fraction", "1.0"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let mut bytes = std::fs::read(&data).unwrap();
    bytes[0] = b'X';
    std::fs::write(&bad, bytes).unwrap();
    let o = toy(&["dataset", "audit", "--input", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));

    // stored patterns feed the learned sweep; a constant network ranks the
    // same candidates everywhere
    let weights = path(&dir, "const.ampw");
    let hot = |n: usize, k: usize| (0..n).map(|i| if i == k { 4.0 } else { 0.0 }).collect::<Vec<f32>>();
    let d = Descriptor { backbone_channels: vec![4, 4, 4], ..Descriptor::ampbt(65, vec![64, 5, 11]) };
    NetworkWeights::constant(d, &[hot(64, 20), hot(5, 1), hot(11, 5)]).unwrap().save(Path::new(&weights)).unwrap();
    let o = toy(&["--weights", &weights, "sweep", "--method", "airy-dl", "--dataset", &data, "--split", "all", "--k", "2,1,1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("12 results") && stderr(&o).contains("overhead 67"), "{}", stderr(&o));
    let o = toy(&["--weights", &weights, "infer", "--dataset", &data, "--split", "all"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.lines().skip(1).all(|l| l.contains(",20 1 5,")), "{csv}");
}

#[test]
fn sweep_outputs_are_reproducible_and_evaluable() {
    let dir = TempDir::new().unwrap();
    let run = |out: &str, traces: &str| {
        let o = toy(&[
            "--jobs",
            "3",
            "--out",
            out,
            "sweep",
            "--method",
            "focus-bs",
            "--receiver",
            "1.0,0.2",
            "--receiver",
            "1.4,-0.1",
            "--receiver",
            "0.9,0.05",
            "--traces",
            traces,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stderr(&o).contains("overhead 320"));
    };
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    let (ta, tb) = (path(&dir, "ta.csv"), path(&dir, "tb.csv"));
    run(&a, &ta);
    run(&b, &tb);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read(&ta).unwrap(), std::fs::read(&tb).unwrap());

    let o = toy(&["eval", "--metric", "cdf", "--results", &a]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cdf = String::from_utf8(o.stdout).unwrap();
    assert!(cdf.starts_with("method,gain,probability\n"));
    assert!(cdf.trim_end().ends_with(",1"));

    let o = toy(&["eval", "--metric", "blockage-bins", "--results", &a]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bins = String::from_utf8(o.stdout).unwrap();
    assert_eq!(bins.lines().count(), 21);

    let o = toy(&["eval", "--metric", "overhead-curve", "--traces", &ta]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = String::from_utf8(o.stdout).unwrap();
    assert_eq!(curve.lines().count(), 321);
    let last: f64 = curve.lines().last().unwrap().split(',').nth(2).unwrap().parse().unwrap();
    let mut r = csv::Reader::from_path(&a).unwrap();
    let gains: Vec<f64> = r.records().map(|rec| rec.unwrap()[9].parse().unwrap()).collect();
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    assert!((last - mean).abs() <= 1e-12 * mean, "{last} vs {mean}");
}

#[test]
fn obstacle_sweeps_feed_heights_and_heatmaps() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "h.csv");
    let o = toy(&[
        "--out",
        &out,
        "sweep",
        "--method",
        "focus-bs",
        "--receiver",
        "1.2,0.05",
        "--obstacle-heights",
        "0,0.1,0.2",
        "--obstacle-lattice",
        "0.5,0.6,0,0.1,0.1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = toy(&["eval", "--metric", "height-sweep", "--results", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().count(), 4, "{table}");
    let o = toy(&["eval", "--metric", "position-heatmap", "--results", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let map = String::from_utf8(o.stdout).unwrap();
    assert!(map.starts_with("cx,cy,method,mean_gain\n"));
    assert_eq!(map.lines().count(), 5, "{map}");
}

#[test]
fn field_slice_and_dump() {
    let dir = TempDir::new().unwrap();
    // aimed below the obstacle, focused at (0.955, −0.296)
    let o = toy(&["field", "--theta", "-0.3", "--r", "1.0", "--slice-x", "0.955"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|t| t.parse().unwrap()).collect();
            (v[1], v[4])
        })
        .collect();
    let peak = rows.iter().copied().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    assert!((peak.0 + 0.2955).abs() < 0.01, "focused slice peaks at y = {}", peak.0);

    let dump = path(&dir, "f.abfs");
    let o = toy(&["--out", &dump, "field", "--theta", "0.2", "--r", "0.8", "--c", "1.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let d = airylab::field::dump::FieldDump::read_from(std::fs::File::open(&dump).unwrap()).unwrap();
    assert_eq!(d.cols, 1201);
    let o = toy(&["field", "--theta", "0", "--r", "1.0"]);
    assert_eq!(o.status.code(), Some(2), "binary dump needs --out");
}
