//! Plot script emission. The script is plain gnuplot text; nothing is
//! rendered here.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::commands::Context;
use crate::output::{read_stamp, HASH_KEY};
use crate::Failure;

const TABLES: [&str; 4] = ["summary.txt", "trace.csv", "energy.csv", "sweep.csv"];

fn json_stamp(path: &Path) -> Result<String, Failure> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    value[HASH_KEY]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| Failure::Io(format!("{} has no {HASH_KEY}", path.display())))
}

/// Column names of a hash-stamped CSV.
fn columns(path: &Path) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(header.iter().map(str::to_string).collect())
}

fn energy_plot(script: &mut String, columns: &[String]) {
    let energies: Vec<&String> = columns
        .iter()
        .filter(|c| c.starts_with('E') || c.starts_with('K') && c.len() > 1 || c.starts_with('W'))
        .collect();
    script.push_str("set output 'energy.png'\nset title 'energies'\nset xlabel 't'\nset logscale y\n");
    let parts: Vec<String> = energies
        .iter()
        .map(|c| format!("'energy.csv' using \"t\":\"{c}\" with lines title '{c}'"))
        .collect();
    let _ = writeln!(script, "plot {}", parts.join(", \\\n     "));
    script.push_str("unset logscale y\n");
    script.push_str("set output 'taylor.png'\nset title 'Taylor sign'\n");
    script.push_str("plot 'energy.csv' using \"t\":\"eps\" with lines title 'eps', \\\n");
    script.push_str("     'energy.csv' using \"t\":\"calE\" with lines title 'calE'\n");
}

pub fn report(ctx: &mut Context) -> Result<(), Failure> {
    let root = ctx.out.root.clone();
    let mut found = Vec::new();
    for name in TABLES.iter().chain(&["monitors.json"]) {
        let path = root.join(name);
        if !path.exists() {
            continue;
        }
        let stamp = if name.ends_with(".json") { json_stamp(&path)? } else { read_stamp(&path)? };
        if stamp != ctx.hash {
            return Err(Failure::Config(format!(
                "{name} carries config hash {stamp}, the configuration hashes to {}; refusing to mix outputs",
                ctx.hash
            )));
        }
        found.push(*name);
    }
    if found.is_empty() {
        return Err(Failure::Io(format!("nothing to report in {}", root.display())));
    }

    let mut script = format!("# {HASH_KEY}={}\n", ctx.hash);
    script.push_str("# gnuplot script; run from the output directory.\n");
    script.push_str("set datafile separator ','\nset datafile missing 'nan'\nset key autotitle columnhead\n");
    script.push_str("set terminal pngcairo size 900,600\nset grid\n");
    if found.contains(&"trace.csv") {
        script.push_str("set output 'trace.png'\nset title 'builder differences'\nset xlabel 'iteration'\nset logscale y\n");
        script.push_str("plot 'trace.csv' using \"nu\":\"diff_star\" with linespoints title 'M*', \\\n");
        script.push_str("     'trace.csv' using \"nu\":\"weak_diff_star\" with linespoints title 'M* (L2)'\n");
        script.push_str("unset logscale y\n");
    }
    if found.contains(&"energy.csv") {
        energy_plot(&mut script, &columns(&root.join("energy.csv"))?);
    }
    if found.contains(&"sweep.csv") {
        script.push_str("set output 'sweep.png'\nset title 'distance to the incompressible flow'\nset xlabel 'kappa'\n");
        script.push_str("set logscale xy\n");
        script.push_str("plot 'sweep.csv' using \"kappa\":\"velocity_gap\" with linespoints title 'v', \\\n");
        script.push_str("     'sweep.csv' using \"kappa\":\"enthalpy_gap\" with linespoints title 'h', \\\n");
        script.push_str("     'sweep.csv' using \"kappa\":\"flow_map_gap\" with linespoints title 'x'\n");
        script.push_str("unset logscale xy\n");
    }
    let path = ctx.out.path("plots.gp");
    fs::write(&path, script)?;
    ctx.notes.insert("inputs".into(), found.join(" "));
    println!("{}", path.display());
    Ok(())
}
