//! Artifact files: delimited tables and JSON documents, each recorded with
//! its SHA-256 digest so reruns can be compared byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use varbound_core::barrier::Barrier;
use varbound_core::market_data::{parse_quotes, ParsedQuotes};
use varbound_core::models::CallCurve;
use varbound_core::potentials::PotentialCurve;
use varbound_core::pricing::BoundsCurve;
use varbound_core::Error;

pub const PARTIAL_SUFFIX: &str = ".partial";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactRecord {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn read_quotes(path: &Path, spot: f64) -> Result<(ParsedQuotes, String), Error> {
    let bytes = fs::read(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse(format!("{} is not UTF-8: {e}", path.display())))?;
    Ok((parse_quotes(text, spot)?, sha256_hex(&bytes)))
}

/// Writes files under one output directory and remembers what it wrote.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<ArtifactRecord>,
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("cannot write {}: {e}", path.display()))
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self, Error> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn records(&self) -> &[ArtifactRecord] {
        &self.written
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), Error> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
        // a stale partial copy from an earlier failed run would be misleading
        let _ = fs::remove_file(partial_path(&path));
        self.written.push(ArtifactRecord { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), Error> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(format!("cannot serialise {rel}: {e}")))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// Renames everything written so far to `<name>.partial`.
    pub fn mark_partial(&mut self) {
        for r in &mut self.written {
            let from = self.dir.join(&r.path);
            if fs::rename(&from, partial_path(&from)).is_ok() {
                r.path.push_str(PARTIAL_SUFFIX);
            }
        }
    }
}

fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(PARTIAL_SUFFIX);
    PathBuf::from(s)
}

/// `T{maturity}` with the shortest decimal form of the maturity.
pub fn maturity_tag(t: f64) -> String {
    format!("T{t}")
}

fn table(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

pub fn curve_csv(c: &CallCurve) -> String {
    table("strike,price", c.strikes.iter().zip(&c.prices).map(|(k, p)| format!("{k},{p}")))
}

pub fn potential_csv(p: &PotentialCurve) -> String {
    table("x,U", p.x_grid.iter().zip(&p.values).map(|(x, u)| format!("{x},{u}")))
}

pub fn barrier_csv(b: &Barrier) -> String {
    table(
        "x,time,mask",
        (0..b.x_grid.len()).map(|i| format!("{},{},{}", b.x_grid[i], b.times[i], u8::from(b.mask[i]))),
    )
}

pub fn bounds_csv(b: &BoundsCurve) -> String {
    table(
        "strike,lower,upper",
        (0..b.strikes.len()).map(|j| format!("{},{},{}", b.strikes[j], b.lower[j], b.upper[j])),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use varbound_core::barrier::BarrierKind;

    #[test]
    fn writer_records_digests_and_marks_partial() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write("a/b.csv", b"abc").unwrap();
        assert_eq!(w.records()[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        w.mark_partial();
        assert!(dir.path().join("a/b.csv.partial").exists());
        assert!(!dir.path().join("a/b.csv").exists());
        assert_eq!(w.records()[0].path, "a/b.csv.partial");
        // a successful rewrite clears the stale partial copy
        w.write("a/b.csv", b"abc").unwrap();
        assert!(!dir.path().join("a/b.csv.partial").exists());
    }

    #[test]
    fn tables_use_round_trip_floats_and_sentinels() {
        let b = Barrier {
            kind: BarrierKind::Root,
            maturity_index: 0,
            maturity: 0.5,
            x_grid: vec![0.1, 1.0 / 3.0],
            times: vec![0.25, f64::INFINITY],
            mask: vec![true, false],
        };
        assert_eq!(barrier_csv(&b), "x,time,mask\n0.1,0.25,1\n0.3333333333333333,inf,0\n");
        assert_eq!(maturity_tag(0.085), "T0.085");
        assert_eq!(maturity_tag(2.0), "T2");
    }
}
