//! Where every artifact lives inside the work directory, and the shared
//! per-run context commands receive.

use std::path::{Path, PathBuf};

use popvec::dataio::csv::{read_labels, read_response_matrix};
use popvec::dataio::{LabelVector, ResponseMatrix};
use popvec::stimfeat::SchemeKind;
use popvec::sweep::Algorithm;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "generate/manifest.csv";
pub const UNITS: &str = "generate/units.csv";
pub const SPIKES: &str = "generate/spikes.csv";
pub const IMAGES: &str = "generate/images";
pub const GENERATE_SUMMARY: &str = "generate/summary.txt";
pub const WINDOWS: &str = "preprocess/windows.csv";
pub const RESPONSES: &str = "preprocess/responses.csv";
pub const FEATURES: &str = "features/features.csv";
pub const THRESHOLDS: &str = "features/thresholds.txt";
pub const WINNERS: &str = "sweep/winners.csv";
pub const EVAL_CSV: &str = "classify/eval.csv";
pub const EVAL_JSON: &str = "classify/eval.json";
pub const CONTROL_CSV: &str = "classify/control.csv";
pub const CONTROL_SUMMARY: &str = "classify/control_summary.csv";
pub const EMBEDDING: &str = "embed/embedding.csv";
pub const SUMMARY: &str = "report/summary.txt";
pub const ARCHIVE: &str = "report/artifacts.tar";

pub fn image(stimulus_id: &str) -> String {
    format!("{IMAGES}/{stimulus_id:0>4}.pgm")
}

pub fn labels(scheme: SchemeKind) -> String {
    format!("features/labels_{}.csv", scheme.name())
}

pub fn sweep_table(scheme: SchemeKind) -> String {
    format!("sweep/sweep_{}.csv", scheme.name())
}

pub fn internal_partition(alg: Algorithm) -> String {
    format!("sweep/partitions/internal_{}.csv", alg.name())
}

pub fn external_partition(scheme: SchemeKind, alg: Algorithm) -> String {
    format!("sweep/partitions/external_{}_{}.csv", scheme.name(), alg.name())
}

pub fn scheme_map(scheme: SchemeKind) -> String {
    format!("embed/map_{}.svg", scheme.name())
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub hash: String,
    pub root: PathBuf,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Self {
        let hash = cfg.hash();
        let root = cfg.workdir();
        Self { cfg, hash, root }
    }

    /// Header line carried by every artifact.
    pub fn header(&self, command: &str) -> String {
        format!("popvec {command} config_hash={}", self.hash)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Path of an artifact another command must have produced.
    pub fn require(&self, rel: &str, producer: &'static str) -> CliResult<PathBuf> {
        existing(self.path(rel), producer)
    }

    pub fn responses(&self) -> CliResult<ResponseMatrix<f64>> {
        let path = if self.cfg.paths.responses.is_empty() {
            self.require(RESPONSES, "preprocess")?
        } else {
            existing(PathBuf::from(&self.cfg.paths.responses), "preprocess")?
        };
        Ok(read_response_matrix(&path)?)
    }

    /// Labels of `scheme`, checked to be in the response matrix's stimulus order.
    pub fn labels(&self, scheme: SchemeKind, stimulus_ids: &[String]) -> CliResult<LabelVector> {
        let path = self.require(&labels(scheme), "features")?;
        let (ids, l) = read_labels(&path, Some(scheme.n_classes()))?;
        if ids != stimulus_ids {
            return Err(popvec::Error::Shape(format!(
                "{} lists stimuli in a different order or set than the response matrix",
                path.display()
            ))
            .into());
        }
        Ok(l)
    }
}

fn existing(path: PathBuf, producer: &'static str) -> CliResult<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Missing { path, producer })
    }
}

/// Writes `text` preceded by a `#` header line.
pub fn write_text(path: &Path, header: &str, text: &str) -> CliResult<()> {
    let body = format!("# {header}\n{text}");
    popvec::dataio::csv::write_file(path, body.as_bytes())?;
    Ok(())
}
