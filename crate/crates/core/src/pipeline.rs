//! Run manifests, input loading and output writing shared by the CLI.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cohort::{aggregate, filter_support, parse_records, AggregationMode, RawNote, RecordSet, SupportConfig, Vocabulary};
use crate::error::{Error, Result};

/// Everything needed to reproduce a run. Its SHA-256 digest heads every output.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    /// Input path (as given) → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub diseases: Option<usize>,
    pub symptoms: Option<usize>,
    pub records: Option<usize>,
    pub model: Option<String>,
    /// Free-form settings: grids, thresholds, modes.
    pub settings: Vec<String>,
}

impl RunManifest {
    /// `argv` is echoed without the thread count, which never changes outputs.
    pub fn new(argv: &[String]) -> Self {
        let mut command = Vec::new();
        let mut skip = false;
        for arg in argv {
            if skip {
                skip = false;
                continue;
            }
            if arg == "--threads" {
                skip = true;
                continue;
            }
            if arg.starts_with("--threads=") {
                continue;
            }
            command.push(arg.clone());
        }
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            ..Default::default()
        }
    }

    pub fn add_input(&mut self, label: &str, bytes: &[u8]) {
        self.inputs.insert(label.to_string(), sha256_hex(bytes));
    }

    pub fn set_vocabulary(&mut self, vocab: &Vocabulary) {
        self.diseases = Some(vocab.n_diseases());
        self.symptoms = Some(vocab.n_symptoms());
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    pub fn header(&self) -> String {
        format!("# manifest {}\n", self.digest())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a whole input; `-` means standard input.
pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf).map_err(|e| Error::io("<stdin>", e))?;
        Ok(buf)
    } else {
        fs::read(path).map_err(|e| Error::io(path, e))
    }
}

/// Writes `body` under a manifest header line; `-` means standard output.
pub fn write_output(path: &Path, manifest: &RunManifest, body: &str) -> Result<()> {
    let text = format!("{}{body}", manifest.header());
    if path == Path::new("-") {
        use std::io::Write;
        std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
    } else {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, manifest.to_json()).map_err(|e| Error::io(path, e))
}

/// Companion path for raw scores: `scores.tsv` → `scores.raw.tsv`.
pub fn raw_scores_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}.raw{ext}"))
}

/// How notes become records.
#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub support: SupportConfig,
    pub mode: AggregationMode,
    pub gap_days: i64,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub notes: Vec<RawNote>,
    pub records: RecordSet,
}

/// Parse, filter by support and aggregate, recording the input digest.
pub fn ingest(path: &Path, options: &IngestOptions, manifest: &mut RunManifest) -> Result<Ingested> {
    let bytes = read_input(path)?;
    manifest.add_input(&path.to_string_lossy(), &bytes);
    let notes = parse_records(&bytes[..])?;
    let vocab = filter_support(&notes, &options.support)?;
    let records = aggregate(&notes, &vocab, options.mode, options.gap_days)?;
    manifest.set_vocabulary(&vocab);
    manifest.records = Some(records.len());
    manifest.settings.extend([
        format!("aggregate={}", options.mode),
        format!("gap_days={}", options.gap_days),
        format!("min_disease={}", options.support.min_disease_count),
        format!("min_symptom={}", options.support.min_symptom_count),
        format!("excluded_symptoms={}", options.support.excluded_symptoms.join(",")),
    ]);
    Ok(Ingested { notes, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_count_is_not_echoed() {
        let argv: Vec<String> = ["hkg", "learn", "--threads", "4", "--seed", "1", "--threads=2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let m = RunManifest::new(&argv);
        assert_eq!(m.command, vec!["hkg", "learn", "--seed", "1"]);
    }

    #[test]
    fn digest_tracks_content() {
        let argv = vec!["hkg".to_string()];
        let a = RunManifest::new(&argv);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed = Some(1);
        assert_ne!(a.digest(), b.digest());
        assert!(a.header().starts_with("# manifest "));
    }

    #[test]
    fn raw_path() {
        assert_eq!(raw_scores_path(Path::new("out/scores.tsv")), PathBuf::from("out/scores.raw.tsv"));
    }
}
