use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_defect-bands"))
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{name}.schema.json"));
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn assert_schema(name: &str, instance: &Value) {
    let validator = jsonschema::validator_for(&schema(name)).expect("schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(instance)
        .map(|e| e.to_string())
        .collect();
    assert!(
        errors.is_empty(),
        "{name} schema violations: {errors:?}\n{instance}"
    );
}

fn json_of(args: &[&str]) -> (Output, Value) {
    let mut all = args.to_vec();
    all.push("--json");
    let o = run(&all);
    let v =
        serde_json::from_str(stdout(&o).trim()).unwrap_or_else(|e| panic!("{e}: {}", stdout(&o)));
    (o, v)
}

const EXAMPLES: [&str; 5] = [
    "chain_point_defect.json",
    "chain_no_defect.json",
    "square_line_defect.json",
    "bipartite_chain.json",
    "wave_chain_mass_defect.json",
];

#[test]
fn every_example_validates() {
    for name in EXAMPLES {
        let cfg = example(name);
        let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        assert!(stdout(&o).trim_end().ends_with("valid"), "{name}");
    }
}

#[test]
fn example_configs_match_config_schema() {
    for name in EXAMPLES {
        let doc: Value = serde_json::from_str(&fs::read_to_string(example(name)).unwrap()).unwrap();
        assert_schema("config", &doc);
    }
}

#[test]
fn duplicate_codim_is_a_domain_error() {
    let mut doc: Value =
        serde_json::from_str(&fs::read_to_string(example("chain_point_defect.json")).unwrap())
            .unwrap();
    let layer = doc["defects"][0].clone();
    doc["defects"].as_array_mut().unwrap().push(layer);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.json");
    fs::write(&path, doc.to_string()).unwrap();
    let o = run(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(format!("{}{}", stdout(&o), stderr(&o)).contains("codim 1"));

    let (o, v) = json_of(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(v["valid"], Value::Bool(false));
    assert_schema("validate", &v);
}

#[test]
fn unreadable_configs_exit_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    fs::write(&empty, "").unwrap();
    let o = run(&["validate", "--config", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    let o = run(&["spectrum", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.json"));

    let mut doc: Value =
        serde_json::from_str(&fs::read_to_string(example("chain_no_defect.json")).unwrap())
            .unwrap();
    doc["colour"] = Value::from("blue");
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, doc.to_string()).unwrap();
    let o = run(&["validate", "--config", unknown.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn chain_bands_on_a_path() {
    let cfg = example("chain_no_defect.json");
    let o = run(&[
        "bands",
        "--config",
        cfg.to_str().unwrap(),
        "--k-path",
        "0;pi;-pi/2",
    ]);
    // "-pi/2" is not accepted sugar; only plain numbers and ±pi are.
    assert_eq!(o.status.code(), Some(1));

    let o = run(&[
        "bands",
        "--config",
        cfg.to_str().unwrap(),
        "--k-path",
        "0;pi",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "k_1,band_index,omega\n0.0,0,2.0\n3.141592653589793,0,-2.0\n"
    );

    let (o, v) = json_of(&[
        "bands",
        "--config",
        cfg.to_str().unwrap(),
        "--k-points",
        "8",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_schema("bands", &v);
    let rows = v["bands"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    for row in rows {
        let k = row["k"][0].as_f64().unwrap();
        let w = row["omega"][0].as_f64().unwrap();
        assert!((w - 2.0 * k.cos()).abs() < 1e-14);
    }
}

#[test]
fn bipartite_bands_touch_at_zero() {
    let cfg = example("bipartite_chain.json");
    let (o, v) = json_of(&["bands", "--config", cfg.to_str().unwrap(), "--k-path", "pi"]);
    assert_eq!(o.status.code(), Some(0));
    let w: Vec<f64> = v["bands"][0]["omega"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(w.len(), 2);
    assert!(w.iter().all(|x| x.abs() < 1e-12), "{w:?}");
}

#[test]
fn membership_examples() {
    let cfg = example("chain_point_defect.json");
    let c = cfg.to_str().unwrap();

    let o = run(&["membership", "--config", c, "--omega", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("IN (step 0)"));

    let root = 5f64.sqrt().to_string();
    let o = run(&["membership", "--config", c, "--omega", &root]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("IN (step 1)"));

    let o = run(&["membership", "--config", c, "--omega", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("OUT"));
    let b1 = text
        .lines()
        .find_map(|l| l.strip_prefix("B_1 = "))
        .and_then(|l| l.split(' ').next())
        .and_then(|x| x.parse::<f64>().ok())
        .expect("B_1 line");
    assert!((b1 - 0.5527864045).abs() < 1e-10, "{b1}");

    let o = run(&["membership", "--config", c, "--omega", "2.001"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).starts_with("INCONCLUSIVE"));

    for omega in ["1", "3", "2.001", &root] {
        let (_, v) = json_of(&["membership", "--config", c, "--omega", omega]);
        assert_schema("membership", &v);
    }
    let (_, v) = json_of(&["membership", "--config", c, "--omega", "3"]);
    assert_eq!(v["verdict"], Value::from("out"));
    assert_eq!(v["in_spectrum"], Value::Bool(false));
}

#[test]
fn membership_rejects_non_finite_energy() {
    let cfg = example("chain_point_defect.json");
    let o = run(&[
        "membership",
        "--config",
        cfg.to_str().unwrap(),
        "--omega",
        "NaN",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn spectrum_rows_for_the_point_defect() {
    let cfg = example("chain_point_defect.json");
    let o = run(&["spectrum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("kind,codim,omega_lo,omega_hi"));
    assert_eq!(lines.next(), Some("band_interval,0,-2.0,2.0"));
    let iso: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(iso[0], "isolated_point");
    assert_eq!(iso[1], "1");
    let x: f64 = iso[2].parse().unwrap();
    assert!((x - 5f64.sqrt()).abs() < 1e-8);
    assert_eq!(lines.next(), None);
}

#[test]
fn spectrum_writes_branch_files_next_to_output() {
    let cfg = example("square_line_defect.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("square.csv");
    let o = run(&[
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--k-points",
        "32",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(&out).unwrap();
    assert!(table.contains("band_interval,0,-4.0,4.0"));
    assert!(table.contains("branch_interval,1,"));

    let branch = fs::read_to_string(dir.path().join("square_branch_codim1.csv")).unwrap();
    let mut lines = branch.lines();
    assert_eq!(lines.next(), Some("k_2,omega"));
    let mut rows = 0;
    for line in lines {
        let (k, w) = line.split_once(',').unwrap();
        let (k, w): (f64, f64) = (k.parse().unwrap(), w.parse().unwrap());
        assert!((w - (2.0 * k.cos() + 5f64.sqrt())).abs() < 1e-6, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 32);
}

#[test]
fn spectrum_json_matches_schema() {
    for name in EXAMPLES {
        let cfg = example(name);
        let (o, v) = json_of(&[
            "spectrum",
            "--config",
            cfg.to_str().unwrap(),
            "--k-points",
            "32",
        ]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        assert_schema("spectrum", &v);
    }
}

#[test]
fn periodic_oracle_reproduces_bands() {
    let cfg = example("chain_no_defect.json");
    let o = run(&[
        "oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--L",
        "8",
        "--bc",
        "periodic",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dev: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("periodic box max deviation: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(dev <= 1e-10);

    let (o, v) = json_of(&[
        "oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--L",
        "8",
        "--bc",
        "periodic",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_schema("oracle", &v);
}

#[test]
fn open_oracle_confirms_the_bound_state() {
    let cfg = example("chain_point_defect.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eig.csv");
    let (o, v) = json_of(&[
        "oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--L",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    // Eigenvalues go to the file; the report stays on stdout.
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(v.get("eigenvalues").is_none());
    assert_schema("oracle", &v);
    assert_eq!(v["passed"], Value::Bool(true));
    assert_eq!(v["dimension"], Value::from(201));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("index,omega,edge_mass\n"));
    assert_eq!(csv.lines().count(), 202);
}

#[test]
fn oversized_box_is_refused() {
    let cfg = example("square_line_defect.json");
    let o = run(&["oracle", "--config", cfg.to_str().unwrap(), "--L", "1000"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn zero_threads_is_rejected() {
    let cfg = example("chain_no_defect.json");
    let o = run(&[
        "--threads",
        "0",
        "validate",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
