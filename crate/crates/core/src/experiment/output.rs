use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One result file, fully rendered before anything touches the disk.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl OutputFile {
    pub fn json<T: Serialize>(name: &str, value: &T) -> Result<Self> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
        bytes.push(b'\n');
        Ok(OutputFile {
            name: name.to_string(),
            bytes,
        })
    }

    /// Comma-separated, header row first, LF line endings.
    pub fn csv(name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<Self> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let ser = |e: csv::Error| Error::Serde(e.to_string());
        w.write_record(header).map_err(ser)?;
        for row in rows {
            w.write_record(row).map_err(ser)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        Ok(OutputFile {
            name: name.to_string(),
            bytes,
        })
    }
}

/// Floats with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Absent values become empty fields.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Result files plus the text a command prints on success.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<OutputFile>,
    pub summary: String,
}

/// Provenance record written next to the results. Timestamps live only here
/// so result files stay byte-comparable across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: Option<String>,
    pub seeds: Vec<u64>,
    pub created_at: String,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn new(
        command: &str,
        config_hash: Option<String>,
        seeds: Vec<u64>,
        output: &CommandOutput,
    ) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash,
            seeds,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: output.files.iter().map(|f| f.name.clone()).collect(),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    // write-then-rename so a crash never leaves a truncated result behind
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes the manifest first, then every result file. Returns the result paths.
pub fn write_outputs(
    dir: &Path,
    manifest: &RunManifest,
    output: &CommandOutput,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(
        &dir.join(MANIFEST_FILE),
        &OutputFile::json(MANIFEST_FILE, manifest)?.bytes,
    )?;
    output
        .files
        .iter()
        .map(|f| {
            let path = dir.join(&f.name);
            write_file(&path, &f.bytes)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_dialect() {
        let f =
            OutputFile::csv("t.csv", &["a", "b"], &[vec![fmt_f64(0.1), fmt_opt(None)]]).unwrap();
        assert_eq!(
            String::from_utf8(f.bytes).unwrap(),
            "a,b\n1.0000000000000001e-1,\n"
        );
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e17] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn manifest_precedes_results() {
        let dir = tempfile::tempdir().unwrap();
        let out = CommandOutput {
            files: vec![OutputFile::json("r.json", &[1, 2]).unwrap()],
            summary: String::new(),
        };
        let m = RunManifest::new("test", None, vec![1], &out);
        let paths = write_outputs(dir.path(), &m, &out).unwrap();
        assert_eq!(paths, vec![dir.path().join("r.json")]);
        let back: RunManifest =
            serde_json::from_slice(&std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap())
                .unwrap();
        assert_eq!(back.outputs, vec!["r.json"]);
    }
}
