//! Files written by the harness. Every file names the config hash it
//! was produced from: CSV and scripts on a leading `#` line, JSON and
//! manifests in a `config_hash` key, containers in their first line.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const HASH_KEY: &str = "config_hash";

/// Shortest round-trip form, scientific for very small or large
/// magnitudes, so identical values give identical bytes.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:?}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Csv {
    inner: csv::Writer<BufWriter<File>>,
}

impl Csv {
    pub fn create(path: &Path, hash: &str, header: &[String]) -> io::Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "# {HASH_KEY}={hash}")?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    pub fn row(&mut self, fields: &[String]) -> io::Result<()> {
        Ok(self.inner.write_record(fields)?)
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// The hash on the first line of a CSV or script.
pub fn read_stamp(path: &Path) -> io::Result<String> {
    let mut line = String::new();
    BufReader::new(File::open(path)?).read_line(&mut line)?;
    line.trim()
        .strip_prefix('#')
        .and_then(|l| l.trim().strip_prefix(HASH_KEY))
        .and_then(|l| l.strip_prefix('='))
        .map(str::to_string)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("{} has no {HASH_KEY} line", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = toml::to_string(value).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    fs::write(path, text)
}

/// One tensor field: `2^rank` components of `nodes` values each.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub rank: usize,
    pub data: Vec<f64>,
}

impl Block {
    pub fn scalar(name: &str, values: &[f64]) -> Self {
        Self {
            name: name.into(),
            rank: 0,
            data: values.to_vec(),
        }
    }

    pub fn vector(name: &str, components: [&[f64]; 2]) -> Self {
        Self {
            name: name.into(),
            rank: 1,
            data: components.concat(),
        }
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.data.len() >> self.rank;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Field container: a text preamble with `key=value` attributes, then per
/// field a line `field=NAME rank=R grid=NRxNT` followed by the
/// little-endian `f64` values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub attrs: BTreeMap<String, String>,
    pub grid: (usize, usize),
    pub blocks: Vec<Block>,
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn pairs(line: &str) -> BTreeMap<String, String> {
    line.split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

impl Container {
    pub fn block(&self, name: &str) -> io::Result<&Block> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| bad(format!("container has no field `{name}`")))
    }

    pub fn attr(&self, key: &str) -> io::Result<&str> {
        self.attrs
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| bad(format!("container has no attribute `{key}`")))
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write!(out, "freesurf-container")?;
        for (k, v) in &self.attrs {
            write!(out, " {k}={v}")?;
        }
        writeln!(out)?;
        let (nr, nt) = self.grid;
        for b in &self.blocks {
            writeln!(out, "field={} rank={} grid={nr}x{nt}", b.name, b.rank)?;
            for x in &b.data {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut line = String::new();
        input.read_line(&mut line)?;
        let rest = line
            .trim_end()
            .strip_prefix("freesurf-container")
            .ok_or_else(|| bad(format!("{} is not a field container", path.display())))?;
        let mut out = Self {
            attrs: pairs(rest),
            ..Default::default()
        };
        loop {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                break;
            }
            let head = pairs(&line);
            let field = |k: &str| head.get(k).ok_or_else(|| bad(format!("field header lacks `{k}`: {}", line.trim())));
            let name = field("field")?.clone();
            let rank: usize = field("rank")?.parse().map_err(|_| bad("bad rank"))?;
            let (nr, nt) = field("grid")?
                .split_once('x')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .ok_or_else(|| bad("bad grid"))?;
            if rank > 6 {
                return Err(bad("bad rank"));
            }
            out.grid = (nr, nt);
            let mut bytes = vec![0u8; 8 * (nr * nt << rank)];
            input.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
                .collect();
            out.blocks.push(Block { name, rank, data });
        }
        Ok(out)
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub freesurf_version: String,
    pub cli_version: String,
    pub wall_seconds: f64,
    pub files: Vec<String>,
    pub stages: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
}

/// Collects the paths written by one command.
pub struct OutDir {
    pub root: PathBuf,
    pub written: Vec<String>,
}

impl OutDir {
    pub fn create(root: PathBuf) -> io::Result<Self> {
        fs::create_dir_all(&root)?;
        Ok(Self { root, written: Vec::new() })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.root.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let dir = std::env::temp_dir().join(format!("freesurf-container-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.bin");
        let c = Container {
            attrs: [("kappa".to_string(), "inf".to_string())].into(),
            grid: (1, 3),
            blocks: vec![
                Block::scalar("h", &[1.0, -0.5, f64::MIN_POSITIVE]),
                Block::vector("v", [&[1.0, 2.0, 3.0], &[4.0, 5.0, 1e300]]),
            ],
        };
        c.write(&path).unwrap();
        let back = Container::read(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.block("v").unwrap().component(1), &[4.0, 5.0, 1e300]);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e20] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::INFINITY), "inf");
    }
}
