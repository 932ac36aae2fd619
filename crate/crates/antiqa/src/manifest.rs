//! Dataset manifests: one JSON record per crop or image.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use antiqa_core::preproc::Quad;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash;
use crate::jsonl;

pub const MANIFEST_SCHEMA: &str = "antiqa-manifest/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Crop,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    /// Image file, relative to the manifest's directory unless absolute.
    pub path: String,
    pub kind: Kind,
    /// Text region corners inside the image at `path`; the whole image when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad: Option<Quad>,
    /// Id of the source image a crop was cut from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Crop area over source image area, used by image-level pooling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_confidence: Option<f64>,
    /// Crop-level text quality MOS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oq_mos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tq_mos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub split: Split,
}

impl Record {
    /// The source image this record belongs to; an image is its own source.
    pub fn source_id(&self) -> &str {
        match (self.kind, &self.source) {
            (Kind::Crop, Some(s)) => s,
            _ => &self.id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema: String,
}

/// One validation finding, pointing at a record by position and id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Problem {
    /// Zero-based record position; `None` for whole-file problems.
    pub record: Option<usize>,
    pub id: String,
    pub message: String,
}

impl Problem {
    fn at(i: usize, r: &Record, message: impl Into<String>) -> Self {
        Problem { record: Some(i), id: r.id.clone(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<Record>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
    /// SHA-256 of the serialized file.
    pub hash: String,
}

fn check_range(out: &mut Vec<Problem>, i: usize, r: &Record, field: &str, v: Option<f64>, lo: f64, hi: f64, open_lo: bool) {
    if let Some(x) = v {
        let ok = x.is_finite() && x <= hi && if open_lo { x > lo } else { x >= lo };
        if !ok {
            let l = if open_lo { "(" } else { "[" };
            out.push(Problem::at(i, r, format!("{field} {x} outside {l}{lo}, {hi}]")));
        }
    }
}

impl Manifest {
    pub fn new(records: Vec<Record>, base_dir: impl Into<PathBuf>) -> Self {
        let mut m = Manifest { records, base_dir: base_dir.into(), hash: String::new() };
        m.hash = hash::sha256_hex(m.to_jsonl().as_bytes());
        m
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let (_header, records): (ManifestHeader, Vec<Record>) = jsonl::parse(path, text, MANIFEST_SCHEMA)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { records, base_dir, hash: hash::sha256_hex(text.as_bytes()) })
    }

    /// Reads and validates.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m = Self::parse(&text, path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_jsonl(&self) -> String {
        jsonl::to_string(&ManifestHeader { schema: MANIFEST_SCHEMA.into() }, &self.records)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        jsonl::write_bytes(path, self.to_jsonl().as_bytes())
    }

    pub fn resolve(&self, r: &Record) -> PathBuf {
        let p = Path::new(&r.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn problems(&self) -> Vec<Problem> {
        let mut out = Vec::new();
        if self.records.is_empty() {
            out.push(Problem { record: None, id: String::new(), message: "manifest has no records".into() });
            return out;
        }
        let mut seen: HashMap<&str, usize> = HashMap::new();
        let mut split_of: HashMap<&str, (Split, usize)> = HashMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.id.is_empty() {
                out.push(Problem::at(i, r, "empty id"));
            }
            if let Some(first) = seen.insert(&r.id, i) {
                out.push(Problem::at(i, r, format!("duplicate id, first used by record {first}")));
            }
            if r.path.is_empty() {
                out.push(Problem::at(i, r, "empty path"));
            }
            if r.kind == Kind::Image && (r.source.is_some() || r.quad.is_some() || r.area_fraction.is_some()) {
                out.push(Problem::at(i, r, "image records cannot carry source, quad or area_fraction"));
            }
            for (field, v) in [("mos", r.mos), ("oq_mos", r.oq_mos), ("tq_mos", r.tq_mos)] {
                check_range(&mut out, i, r, field, v, 0.0, 5.0, false);
            }
            check_range(&mut out, i, r, "ocr_confidence", r.ocr_confidence, 0.0, 1.0, false);
            check_range(&mut out, i, r, "area_fraction", r.area_fraction, 0.0, 1.0, true);
            if let Some(q) = &r.quad {
                if q.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
                    out.push(Problem::at(i, r, "quad has non-finite coordinates"));
                }
            }
            match split_of.get(r.source_id()) {
                Some(&(s, j)) if s != r.split => out.push(Problem::at(
                    i,
                    r,
                    format!(
                        "source image {:?} is in split {} here but {} in record {j}",
                        r.source_id(),
                        r.split.name(),
                        s.name()
                    ),
                )),
                Some(_) => {}
                None => {
                    split_of.insert(r.source_id(), (r.split, i));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Manifest(p))
        }
    }

    /// Records of one kind, optionally restricted to a split.
    pub fn select(&self, kind: Kind, split: Option<Split>) -> impl Iterator<Item = (usize, &Record)> {
        self.records
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.kind == kind && split.map_or(true, |s| r.split == s))
    }

    /// Fails with one problem per selected record lacking `field`.
    pub fn require(
        &self,
        kind: Kind,
        split: Option<Split>,
        field: &str,
        get: impl Fn(&Record) -> bool,
    ) -> Result<()> {
        let missing: Vec<Problem> = self
            .select(kind, split)
            .filter(|(_, r)| !get(r))
            .map(|(i, r)| Problem::at(i, r, format!("missing {field}")))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Manifest(missing))
        }
    }
}
