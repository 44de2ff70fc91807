//! Output directory handling and the JSON / CSV writers.
//!
//! Layout of a run directory:
//!
//! ```text
//! <dir>/config.resolved.toml   resolved configuration snapshot
//! <dir>/<name>.json            {"schema": ..., "seed": ..., "data": ...}
//! <dir>/<name>.csv             "# seed=..." line, then an RFC 4180 table
//! ```

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::genealogy::MarkedCPP;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CPP_SCHEMA: &str = "splitlab.cpp/1";
pub const TABLE_SCHEMA: &str = "splitlab.table/1";

/// A prepared run directory.
#[derive(Debug, Clone)]
pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    /// Creates `dir`; an existing non-empty directory is refused unless
    /// `overwrite` is set.
    pub fn prepare(dir: &Path, overwrite: bool) -> Result<Self> {
        if dir.exists() {
            let nonempty = fs::read_dir(dir)?.next().is_some();
            if nonempty && !overwrite {
                return Err(Error::Config(format!(
                    "output directory {} is not empty; pass --overwrite to replace its files",
                    dir.display()
                )));
            }
        }
        fs::create_dir_all(dir)?;
        Ok(OutputDir { root: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_snapshot(&self, config: &ExperimentConfig) -> Result<PathBuf> {
        let p = self.path("config.resolved.toml");
        fs::write(&p, config.to_toml()?)?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, schema: &str, seed: &str, data: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Envelope<'a, T> {
            schema: &'a str,
            seed: &'a str,
            data: &'a T,
        }
        let p = self.path(name);
        fs::write(&p, serde_json::to_string_pretty(&Envelope { schema, seed, data })?)?;
        Ok(p)
    }

    /// Writes a CSV table preceded by a `# seed=...` line.
    pub fn write_csv(&self, name: &str, seed: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let p = self.path(name);
        let mut f = fs::File::create(&p)?;
        writeln!(f, "# seed={seed}")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(p)
    }
}

/// Rows of the atoms table of a marked CPP (one row per atom).
pub fn cpp_rows(replica: usize, cpp: &MarkedCPP) -> Vec<Vec<String>> {
    cpp.atoms
        .iter()
        .map(|a| {
            let l = &a.lineage;
            vec![
                replica.to_string(),
                a.position.to_string(),
                l.coalescence_depth.to_string(),
                l.mutation_count().to_string(),
                l.mutation_depths.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(";"),
                (l.coalescence_is_mutation as u8).to_string(),
            ]
        })
        .collect()
}

pub const CPP_HEADER: [&str; 6] =
    ["replica", "position", "coalescence_depth", "mutation_count", "mutation_depths", "coalescence_is_mutation"];

/// Reads a CSV written by [`OutputDir::write_csv`], skipping the seed line.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.map(|x| x.iter().map(String::from).collect())).collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("splitlab-io-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn overwrite_guard_and_csv_round_trip() {
        let d = tmp("guard");
        let out = OutputDir::prepare(&d, false).unwrap();
        out.write_csv("t.csv", "1/x", &["a", "b"], &[vec!["1".into(), "x,y".into()]]).unwrap();
        assert!(OutputDir::prepare(&d, false).is_err());
        assert!(OutputDir::prepare(&d, true).is_ok());
        let (h, rows) = read_csv(&d.join("t.csv")).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows[0][1], "x,y");
        let p = out.write_json("v.json", TABLE_SCHEMA, "1/x", &vec![1.0, 2.0]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(v["schema"], TABLE_SCHEMA);
        fs::remove_dir_all(&d).unwrap();
    }
}
