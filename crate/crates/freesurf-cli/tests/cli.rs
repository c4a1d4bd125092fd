use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "[grid]\nn_r = 13\nn_theta = 24\n\n[time]\nt_final = 0.02\nsample_interval = 0.01\n";

fn freesurf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freesurf"))
        .args(args)
        .current_dir(dir)
        .env_remove("FREESURF_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace(config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), config).unwrap();
    dir
}

fn summary(path: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Header and rows of a hash-stamped CSV.
fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let c = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[c].parse().unwrap()).collect()
}

/// Field values from a container, by name.
fn container_field(path: &Path, name: &str) -> Vec<f64> {
    let bytes = fs::read(path).unwrap();
    let mut at = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
    while at < bytes.len() {
        let end = at + bytes[at..].iter().position(|&b| b == b'\n').unwrap();
        let head = std::str::from_utf8(&bytes[at..end]).unwrap();
        let get = |k: &str| head.split(' ').find_map(|kv| kv.strip_prefix(k)).unwrap();
        let rank: u32 = get("rank=").parse().unwrap();
        let (nr, nt) = get("grid=").split_once('x').unwrap();
        let count = nr.parse::<usize>().unwrap() * nt.parse::<usize>().unwrap() << rank;
        let data = &bytes[end + 1..end + 1 + 8 * count];
        if get("field=") == name {
            return data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        }
        at = end + 1 + 8 * count;
    }
    panic!("no field {name}");
}

#[test]
fn build_data_for_the_quadrupole() {
    let dir = workspace(SMALL);
    let o = freesurf(dir.path(), &["build-data", "--config", "c.toml", "--out", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    let s = summary(&out.join("summary.txt"));
    assert_eq!(s["status"], "ok");
    let eps: f64 = s["eps"].parse().unwrap();
    assert!((eps - 4.0).abs() <= 0.08, "{eps}");
    let first: f64 = s["contraction_ratios"].split(' ').next().unwrap().parse().unwrap();
    assert!(first < 1.0);
    assert_eq!(s["boundary_residual"].parse::<f64>().unwrap(), 0.0);

    let (header, rows) = table(&out.join("trace.csv"));
    assert_eq!(header[0], "nu");
    assert_eq!(rows.len(), s["iterations"].parse::<usize>().unwrap() + 1);
    let h0 = container_field(&out.join("data.bin"), "h0");
    assert_eq!(h0.len(), 13 * 24);
    assert!(h0[..24].iter().all(|&x| x == 0.0));
    assert!(out.join("build-data.manifest.toml").exists());
}

#[test]
fn zero_preset_gives_zero_data_in_one_iteration() {
    let dir = workspace(&format!("[seed]\npreset = \"zero\"\n\n{SMALL}"));
    let o = freesurf(dir.path(), &["build-data", "--config", "c.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    assert_eq!(summary(&out.join("summary.txt"))["iterations"], "1");
    for name in ["v0", "p0", "phi", "h0", "h1", "h2", "h3", "h4", "h5"] {
        assert!(container_field(&out.join("data.bin"), name).iter().all(|&x| x == 0.0), "{name}");
    }
}

#[test]
fn rigid_rotation_exits_with_a_numerical_error() {
    let dir = workspace(&format!("[seed]\npreset = \"rigid-rotation\"\n\n{SMALL}"));
    let o = freesurf(dir.path(), &["build-data", "--config", "c.toml"]);
    assert_eq!(code(&o), 2);
    let s = summary(&dir.path().join("out/summary.txt"));
    assert_eq!(s["status"], "failed");
    assert_eq!(s["error"], "SignConditionViolation");
    assert!(stderr(&o).contains("SignConditionViolation"));
}

#[test]
fn config_errors_name_the_line_and_key() {
    let dir = workspace("[grid]\nn_r = 13\n\nn_theta = 23\n");
    let o = freesurf(dir.path(), &["build-data", "--config", "c.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 4") && stderr(&o).contains("grid.n_theta"), "{}", stderr(&o));

    fs::write(dir.path().join("c.toml"), "[time]\norder = 2\ncfll = 1.0\n").unwrap();
    let o = freesurf(dir.path(), &["run", "--config", "c.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3") && stderr(&o).contains("cfll"), "{}", stderr(&o));

    fs::write(dir.path().join("c.toml"), "[grid]\nn_r = 80\n").unwrap();
    assert_eq!(code(&freesurf(dir.path(), &["check", "--config", "c.toml"])), 1);
    assert_eq!(code(&freesurf(dir.path(), &["check", "--config", "missing.toml"])), 1);
    assert_eq!(code(&freesurf(dir.path(), &["check", "--resolution", "17"])), 1);
    assert_eq!(code(&freesurf(dir.path(), &["check", "--resolution", "17x33"])), 1);
    assert_eq!(code(&freesurf(dir.path(), &["run", "--kappa", "1e2,1e3"])), 1);
    assert_eq!(code(&freesurf(dir.path(), &["run", "--kappa", "-4"])), 1);
    assert_eq!(code(&freesurf(dir.path(), &["explode"])), 1);
}

#[test]
fn run_needs_built_data() {
    let dir = workspace(SMALL);
    let o = freesurf(dir.path(), &["run", "--config", "c.toml"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("build-data"));
}

#[test]
fn run_rejects_data_built_for_another_kappa() {
    let dir = workspace(SMALL);
    assert_eq!(code(&freesurf(dir.path(), &["build-data", "--config", "c.toml", "--kappa", "1e3"])), 0);
    assert_eq!(code(&freesurf(dir.path(), &["run", "--config", "c.toml", "--kappa", "1e4"])), 1);
}

#[test]
fn zero_time_run_reports_the_initial_energy() {
    let dir = workspace("[grid]\nn_r = 13\nn_theta = 24\n\n[time]\nt_final = 0.0\n");
    assert_eq!(code(&freesurf(dir.path(), &["build-data", "--config", "c.toml"])), 0);
    let o = freesurf(dir.path(), &["run", "--config", "c.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    let (header, rows) = table(&out.join("energy.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(column(&header, &rows, "t"), vec![0.0]);
    let built: f64 = summary(&out.join("summary.txt"))["E2star(0)"].parse().unwrap();
    assert_eq!(column(&header, &rows, "E2star")[0], built);
    let eps: f64 = summary(&out.join("summary.txt"))["eps"].parse().unwrap();
    assert_eq!(column(&header, &rows, "eps")[0], eps);
}

#[test]
fn energy_columns_follow_the_schema() {
    let dir = workspace(SMALL);
    assert_eq!(code(&freesurf(dir.path(), &["build-data", "--config", "c.toml"])), 0);
    let schema: toml::Table = include_str!("../schema.toml").parse().unwrap();
    let names = |file: &str| -> Vec<String> {
        schema[file]["columns"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["name"].as_str().unwrap().to_string())
            .collect()
    };
    for r in 0..=2usize {
        let order = r.to_string();
        assert_eq!(code(&freesurf(dir.path(), &["run", "--config", "c.toml", "--order", &order])), 0);
        let (header, rows) = table(&dir.path().join("out/energy.csv"));
        let mut expected = Vec::new();
        for name in names("energy") {
            if name == "E{s}{k}" {
                expected.extend((0..=r).map(|k| format!("E{}{k}", r - k)));
            } else {
                expected.push(name.replace("{r+1}", &(r + 1).to_string()).replace("{r}", &order));
            }
        }
        assert_eq!(header, expected);
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|row| row.len() == header.len()));
    }
    let (header, _) = table(&dir.path().join("out/trace.csv"));
    assert_eq!(header, names("trace"));
}

#[test]
fn runs_are_deterministic() {
    let dir = workspace(SMALL);
    assert_eq!(code(&freesurf(dir.path(), &["build-data", "--config", "c.toml"])), 0);
    assert_eq!(code(&freesurf(dir.path(), &["run", "--config", "c.toml"])), 0);
    let first = fs::read(dir.path().join("out/energy.csv")).unwrap();
    assert_eq!(code(&freesurf(dir.path(), &["build-data", "--config", "c.toml", "--out", "again"])), 0);
    assert_eq!(code(&freesurf(dir.path(), &["run", "--config", "c.toml", "--out", "again"])), 0);
    assert_eq!(fs::read(dir.path().join("again/energy.csv")).unwrap(), first);
    assert_eq!(
        fs::read(dir.path().join("out/trace.csv")).unwrap(),
        fs::read(dir.path().join("again/trace.csv")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("out/data.bin")).unwrap(),
        fs::read(dir.path().join("again/data.bin")).unwrap()
    );
}

#[test]
fn sweep_table_shrinks_with_kappa_for_any_thread_count() {
    let dir = workspace(SMALL);
    let sweep = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_freesurf"))
            .args(["sweep", "--config", "c.toml", "--kappa", "1e2,1e3,1e4", "--out", out])
            .current_dir(dir.path())
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(dir.path().join(out).join("sweep.csv")).unwrap()
    };
    let one = sweep("1", "one");
    assert_eq!(sweep("3", "three"), one);

    let (header, rows) = table(&dir.path().join("one/sweep.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[1] == "ok"));
    for name in ["velocity_gap", "enthalpy_gap", "flow_map_gap"] {
        let gaps = column(&header, &rows, name);
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{name}: {gaps:?}");
    }
}

#[test]
fn sweep_marks_failed_rows() {
    let dir = workspace(&format!("[seed]\npreset = \"rigid-rotation\"\n\n{SMALL}"));
    let o = freesurf(dir.path(), &["sweep", "--config", "c.toml", "--kappa", "1e3"]);
    assert_eq!(code(&o), 2);
    let (header, rows) = table(&dir.path().join("out/sweep.csv"));
    let error = header.iter().position(|h| h == "error").unwrap();
    assert_eq!(rows[0][1], "failed");
    assert!(rows[0][error].contains("sign"), "{:?}", rows[0]);
}

#[test]
fn check_reports_the_poincare_ratio() {
    let dir = workspace("[grid]\nn_r = 17\nn_theta = 32\n");
    let o = freesurf(dir.path(), &["check", "--config", "c.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/monitors.json")).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    let poincare = rows
        .iter()
        .find(|r| r["monitor"] == "poincare" && r["geometry"] == "identity")
        .expect("identity Poincaré row");
    assert!((poincare["value"].as_f64().unwrap() - 0.415831).abs() <= 1e-6);
    assert_eq!(poincare["within"], true);
    for g in ["identity", "bent"] {
        for m in ["hodge", "trace", "projection_radial", "commutator_dt_grad"] {
            let row = rows.iter().find(|r| r["monitor"] == m && r["geometry"] == g).unwrap();
            assert!(row["value"].as_f64().unwrap().is_finite());
        }
    }
}

#[test]
fn every_output_carries_the_config_hash() {
    let dir = workspace(SMALL);
    for cmd in ["build-data", "run", "sweep", "check", "report"] {
        let o = freesurf(dir.path(), &[cmd, "--config", "c.toml"]);
        assert_eq!(code(&o), 0, "{cmd}: {}", stderr(&o));
    }
    let out = dir.path().join("out");
    let manifest: toml::Table = fs::read_to_string(out.join("run.manifest.toml")).unwrap().parse().unwrap();
    let hash = manifest["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    for entry in fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        let bytes = fs::read(&path).unwrap();
        let first_kb = String::from_utf8_lossy(&bytes[..bytes.len().min(1024)]).into_owned();
        assert!(first_kb.contains(&hash), "{} lacks the hash", path.display());
    }
}

#[test]
fn report_refuses_mixed_outputs() {
    let dir = workspace(SMALL);
    assert_eq!(code(&freesurf(dir.path(), &["build-data", "--config", "c.toml"])), 0);
    assert_eq!(code(&freesurf(dir.path(), &["run", "--config", "c.toml"])), 0);
    let o = freesurf(dir.path(), &["report", "--config", "c.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let script = fs::read_to_string(dir.path().join("out/plots.gp")).unwrap();
    assert!(script.contains("energy.csv") && script.contains("trace.csv"));

    // A different energy order is a different experiment.
    assert_eq!(code(&freesurf(dir.path(), &["run", "--config", "c.toml", "--order", "1"])), 0);
    let o = freesurf(dir.path(), &["report", "--config", "c.toml", "--order", "1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("hash"), "{}", stderr(&o));

    let empty = workspace(SMALL);
    assert_eq!(code(&freesurf(empty.path(), &["report", "--config", "c.toml"])), 3);
}

#[test]
fn out_dir_precedence() {
    let dir = workspace(SMALL);
    let env_run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_freesurf"))
            .args(args)
            .current_dir(dir.path())
            .env("FREESURF_OUT_DIR", "from-env")
            .output()
            .unwrap()
    };
    assert_eq!(code(&env_run(&["check", "--config", "c.toml"])), 0);
    assert!(dir.path().join("from-env/monitors.json").exists());
    assert_eq!(code(&env_run(&["check", "--config", "c.toml", "--out", "from-flag"])), 0);
    assert!(dir.path().join("from-flag/monitors.json").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn incompressible_data_and_run() {
    let dir = workspace(SMALL);
    assert_eq!(code(&freesurf(dir.path(), &["build-data", "--config", "c.toml", "--kappa", "inf"])), 0);
    let out = dir.path().join("out");
    assert_eq!(summary(&out.join("summary.txt"))["iterations"], "1");
    let o = freesurf(dir.path(), &["run", "--config", "c.toml", "--kappa", "inf"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = table(&out.join("energy.csv"));
    let continuity = column(&header, &rows, "continuity");
    assert!(continuity.iter().all(|&c| c <= 1e-6), "{continuity:?}");
    assert!(column(&header, &rows, "E2star").iter().all(|e| e.is_nan()));
}

#[test]
fn custom_tables_of_first_order_match_the_linear_family() {
    let dir = workspace(&format!("[physics]\neos = \"custom\"\neos_table = [1e-4, 0, 0, 0, 0, 0]\n\n{SMALL}"));
    assert_eq!(code(&freesurf(dir.path(), &["build-data", "--config", "c.toml"])), 0);
    let custom = summary(&dir.path().join("out/summary.txt"));
    fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    assert_eq!(code(&freesurf(dir.path(), &["build-data", "--config", "c.toml", "--out", "linear"])), 0);
    let linear = summary(&dir.path().join("linear/summary.txt"));
    assert_eq!(custom["kappa"], linear["kappa"]);
    let (a, b): (f64, f64) = (custom["eps"].parse().unwrap(), linear["eps"].parse().unwrap());
    assert!((a - b).abs() <= 1e-10, "{a} {b}");

    fs::write(dir.path().join("c.toml"), format!("[physics]\neos = \"custom\"\neos_table = [1e-4, 1e-8, 0, 0, 0, 0]\n\n{SMALL}")).unwrap();
    let o = freesurf(dir.path(), &["build-data", "--config", "c.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("UnsupportedEos"));
}
