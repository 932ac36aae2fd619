//! The pipeline commands behind the CLI. Each reads only the paths it is
//! given and returns a summary that the binary prints to stdout.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use antiqa_core::aggregate::{pool, PoolOutcome, ScoredCrop};
use antiqa_core::calibrate::{fit_5pl, Calibration};
use antiqa_core::gradcheck::{audit, audit_arch, AuditReport, GradCheckConfig};
use antiqa_core::harness::bench::TimingSummary;
use antiqa_core::harness::synth::{render, synth_generate};
use antiqa_core::harness::{baselines_and_gap, oq_tq_decomposition, within_group_corr, GroupRecord, Member, Target};
use antiqa_core::metrics::correlate;
use antiqa_core::net::{self, ModelParams};
use antiqa_core::preproc::{filter_crop, rectify, to_model_input, FilterDecision, ModelInput, RawCrop};
use antiqa_core::rng;
use antiqa_core::tensor::Tensor;
use antiqa_core::train::{train_stage, Checkpoint, EpochLog, Sample, StageKind, TrainError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hash;
use crate::imageio;
use crate::jsonl;
use crate::manifest::{Kind, Manifest, Record, Split};
use crate::report::{EvalReport, SelectReport, TargetCorrelation, EVAL_SCHEMA, SELECT_SCHEMA};
use crate::scores::{Level, ScoreRecord, ScoresFile, ScoresHeader};

pub const CALIBRATION_SCHEMA: &str = "antiqa-5pl/1";
pub const TRAIN_LOG_SCHEMA: &str = "antiqa-train-log/1";
pub const AUDIT_SCHEMA: &str = "antiqa-gradcheck/1";
pub const BENCH_SCHEMA: &str = "antiqa-bench/1";

/// Generator stream for parameter initialization.
const INIT_STREAM: u64 = 0x696e6974;

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Decodes, rectifies and filters one crop record. `None` means the
/// detection filter dropped it; only records with a quad are filtered.
pub fn load_input(manifest: &Manifest, r: &Record, cfg: &RunConfig) -> Result<Option<ModelInput>> {
    let path = manifest.resolve(r);
    let pixels = imageio::load(&path)?;
    let crop = match r.quad {
        None => pixels,
        Some(quad) => {
            let raw = RawCrop { pixels, quad, ocr_confidence: r.ocr_confidence, source_image_id: r.source_id().to_string() };
            if let FilterDecision::Discard(_) = filter_crop(&raw, &cfg.filter) {
                return Ok(None);
            }
            rectify(&raw)?
        }
    };
    Ok(Some(to_model_input(&crop, cfg.arch.input_size)))
}

fn load_inputs<'m>(manifest: &'m Manifest, records: &[&'m Record], cfg: &RunConfig) -> Result<Vec<(&'m Record, ModelInput)>> {
    let loaded: Vec<Option<ModelInput>> = in_pool(cfg.score.workers, || {
        records.par_iter().map(|r| load_input(manifest, r, cfg)).collect::<Result<_>>()
    })?;
    Ok(records.iter().zip(loaded).filter_map(|(r, m)| m.map(|m| (*r, m))).collect())
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthCounts {
    pub train_groups: usize,
    pub val_groups: usize,
    pub test_groups: usize,
    pub k: usize,
}

impl Default for SynthCounts {
    /// 2,000 training, 200 calibration and 400 test crops.
    fn default() -> Self {
        SynthCounts { train_groups: 400, val_groups: 40, test_groups: 80, k: 5 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub manifest: PathBuf,
    pub images: usize,
    pub crops: usize,
    pub degradation_model_version: u32,
}

/// Renders synthetic groups for each split and writes PNGs plus a manifest.
///
/// Each synthetic crop stands in for one generated image holding a single
/// text region, so every render yields an image record and a crop record.
pub fn synth(cfg: &RunConfig, out_dir: &Path, counts: SynthCounts) -> Result<SynthSummary> {
    let mut records = Vec::new();
    let mut files = Vec::new();
    for (i, (split, n)) in
        [(Split::Train, counts.train_groups), (Split::Val, counts.val_groups), (Split::Test, counts.test_groups)]
            .into_iter()
            .enumerate()
    {
        if n == 0 {
            continue;
        }
        let ds = synth_generate(n, counts.k, &cfg.synth, cfg.seed.wrapping_add(i as u64))?;
        for (idx, c) in ds.crops.iter().enumerate() {
            let path = format!("images/{}.png", c.id);
            records.push(Record {
                id: c.id.clone(),
                path: path.clone(),
                kind: Kind::Image,
                quad: None,
                source: None,
                area_fraction: None,
                ocr_confidence: None,
                mos: None,
                oq_mos: Some(c.oq_mos),
                tq_mos: Some(c.mos),
                generator: Some(c.generator.clone()),
                prompt: Some(c.prompt.clone()),
                seed: Some((idx % counts.k) as u64),
                split,
            });
            records.push(Record {
                id: format!("{}-c0", c.id),
                path: path.clone(),
                kind: Kind::Crop,
                quad: None,
                source: Some(c.id.clone()),
                area_fraction: Some(c.area_fraction),
                ocr_confidence: Some(c.ocr_confidence),
                mos: Some(c.mos),
                oq_mos: None,
                tq_mos: None,
                generator: None,
                prompt: None,
                seed: None,
                split,
            });
        }
        let encoded: Vec<(String, Vec<u8>)> = ds.crops.par_iter().map(|c| (format!("images/{}.png", c.id), imageio::encode_png(&c.image))).collect();
        files.extend(encoded);
    }
    let manifest = Manifest::new(records, out_dir);
    manifest.validate()?;
    for (rel, bytes) in &files {
        jsonl::write_bytes(&out_dir.join(rel), bytes)?;
    }
    let path = out_dir.join("manifest.jsonl");
    manifest.write(&path)?;
    Ok(SynthSummary {
        manifest: path,
        images: files.len(),
        crops: manifest.records.iter().filter(|r| r.kind == Kind::Crop).count(),
        degradation_model_version: cfg.synth.version,
    })
}

// ---------------------------------------------------------------- calibrate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub schema: String,
    #[serde(flatten)]
    pub calibration: Calibration,
}

impl CalibrationFile {
    pub fn read(path: &Path) -> Result<Calibration> {
        let f: CalibrationFile = jsonl::read_json(path)?;
        if f.schema != CALIBRATION_SCHEMA {
            return Err(Error::format(path, format!("schema {:?}, expected {CALIBRATION_SCHEMA:?}", f.schema)));
        }
        f.calibration.curve.validate()?;
        Ok(f.calibration)
    }
}

/// Fits the confidence-to-MOS curve on crops of the calibration splits that
/// carry both OCR confidence and MOS.
pub fn calibrate(cfg: &RunConfig, manifest_path: &Path, out: &Path) -> Result<Calibration> {
    let manifest = Manifest::read(manifest_path)?;
    let pairs: Vec<(f64, f64)> = manifest
        .select(Kind::Crop, None)
        .filter(|(_, r)| cfg.eval.calibration_splits.contains(&r.split))
        .filter_map(|(_, r)| Some((r.ocr_confidence?, r.mos?)))
        .collect();
    let cal = fit_5pl(&pairs, cfg.seed, &cfg.calibration)?;
    jsonl::write_json(out, &CalibrationFile { schema: CALIBRATION_SCHEMA.into(), calibration: cal.clone() })?;
    Ok(cal)
}

// ---------------------------------------------------------------- training

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub stage: StageKind,
    pub samples: usize,
    /// Crops dropped by the detection filter.
    pub filtered: usize,
    pub epochs: usize,
    pub first_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub log: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogHeader {
    pub schema: String,
    pub stage: StageKind,
    pub config_hash: String,
}

pub fn default_log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("log.jsonl")
}

fn initial_params(cfg: &RunConfig, init: Option<&Path>) -> Result<ModelParams> {
    match init {
        Some(p) => {
            let ck = checkpoint::load(p)?;
            if ck.arch != cfg.arch {
                return Err(Error::Mismatch(format!("{} was trained with a different architecture than the config", p.display())));
            }
            Ok(ck.params)
        }
        None => Ok(net::build(&cfg.arch, &mut rng::derive(cfg.seed, INIT_STREAM))?),
    }
}

fn run_stage(
    cfg: &RunConfig,
    manifest: &Manifest,
    targets: &[(&Record, f64)],
    init: Option<&Path>,
    kind: StageKind,
    out: &Path,
    log_path: Option<&Path>,
) -> Result<TrainSummary> {
    let records: Vec<&Record> = targets.iter().map(|(r, _)| *r).collect();
    let target_of: HashMap<&str, f64> = targets.iter().map(|(r, t)| (r.id.as_str(), *t)).collect();
    let inputs = load_inputs(manifest, &records, cfg)?;
    let data: Vec<Sample<'_>> = inputs.iter().map(|(r, input)| Sample { input, target: target_of[r.id.as_str()] }).collect();
    let params = initial_params(cfg, init)?;
    let epochs = match kind {
        StageKind::Pretrain => cfg.optim.epochs_pretrain,
        StageKind::Finetune => cfg.optim.epochs_finetune,
    };
    let result = train_stage(&cfg.arch, params, &data, &cfg.loss, &cfg.optim, epochs, kind);
    let output = match result {
        Ok(o) => o,
        Err(TrainError::Aborted { epoch, batch, reason, last_good }) => {
            checkpoint::save(&out.with_extension("last-good.ckpt"), &last_good)?;
            return Err(TrainError::Aborted { epoch, batch, reason, last_good }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let log = log_path.map_or_else(|| default_log_path(out), Path::to_path_buf);
    let header = TrainLogHeader { schema: TRAIN_LOG_SCHEMA.into(), stage: kind, config_hash: cfg.hash() };
    jsonl::write(&log, &header, &output.log)?;
    let bytes = checkpoint::encode(&output.checkpoint);
    jsonl::write_bytes(out, &bytes)?;
    Ok(TrainSummary {
        stage: kind,
        samples: data.len(),
        filtered: records.len() - data.len(),
        epochs,
        first_loss: output.log.first().map(|l| l.loss),
        final_loss: output.log.last().map(|l| l.loss),
        checkpoint: out.to_path_buf(),
        checkpoint_sha256: hash::sha256_hex(&bytes),
        log,
    })
}

/// Proxy pretraining: train crops supervised by calibrated OCR confidence.
pub fn pretrain(
    cfg: &RunConfig,
    manifest_path: &Path,
    calibration: &Path,
    init: Option<&Path>,
    out: &Path,
    log: Option<&Path>,
) -> Result<TrainSummary> {
    let manifest = Manifest::read(manifest_path)?;
    manifest.require(Kind::Crop, Some(Split::Train), "ocr_confidence", |r| r.ocr_confidence.is_some())?;
    let cal = CalibrationFile::read(calibration)?;
    let targets: Vec<(&Record, f64)> =
        manifest.select(Kind::Crop, Some(Split::Train)).map(|(_, r)| (r, cal.curve.eval(r.ocr_confidence.unwrap()))).collect();
    if targets.is_empty() {
        return Err(Error::Usage("manifest has no training crops".into()));
    }
    run_stage(cfg, &manifest, &targets, init, StageKind::Pretrain, out, log)
}

/// MOS finetuning on the training crops.
pub fn finetune(cfg: &RunConfig, manifest_path: &Path, init: Option<&Path>, out: &Path, log: Option<&Path>) -> Result<TrainSummary> {
    let manifest = Manifest::read(manifest_path)?;
    manifest.require(Kind::Crop, Some(Split::Train), "mos", |r| r.mos.is_some())?;
    let targets: Vec<(&Record, f64)> = manifest.select(Kind::Crop, Some(Split::Train)).map(|(_, r)| (r, r.mos.unwrap())).collect();
    if targets.is_empty() {
        return Err(Error::Usage("manifest has no training crops".into()));
    }
    run_stage(cfg, &manifest, &targets, init, StageKind::Finetune, out, log)
}

pub fn read_train_log(path: &Path) -> Result<(TrainLogHeader, Vec<EpochLog>)> {
    jsonl::read(path, TRAIN_LOG_SCHEMA)
}

// ---------------------------------------------------------------- scoring

#[derive(Debug, Clone, Serialize)]
pub struct ScoreSummary {
    pub scored: usize,
    pub filtered: usize,
    pub out: PathBuf,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

fn load_checkpoint_for(cfg: &RunConfig, path: &Path) -> Result<(Checkpoint, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ck = checkpoint::decode(&bytes).map_err(|m| Error::format(path, m))?;
    if ck.arch != cfg.arch {
        return Err(Error::Mismatch(format!("{} holds a different architecture than the config", path.display())));
    }
    Ok((ck, hash::sha256_hex(&bytes)))
}

/// Scores every crop of `split` (all splits when `None`). Batches are fixed
/// by `score.batch_size` and farmed out to the worker pool; the file is
/// written once at the end.
pub fn score(cfg: &RunConfig, checkpoint_path: &Path, manifest_path: &Path, split: Option<Split>, out: &Path) -> Result<ScoreSummary> {
    let (ck, ck_hash) = load_checkpoint_for(cfg, checkpoint_path)?;
    let manifest = Manifest::read(manifest_path)?;
    let records: Vec<&Record> = manifest.select(Kind::Crop, split).map(|(_, r)| r).collect();
    let inputs = load_inputs(&manifest, &records, cfg)?;
    let batches: Vec<&[(&Record, ModelInput)]> = inputs.chunks(cfg.score.batch_size).collect();
    let scores: Vec<Vec<f64>> = in_pool(cfg.score.workers, || {
        batches
            .par_iter()
            .map(|b| {
                let ts: Vec<&Tensor> = b.iter().map(|(_, m)| m.tensor()).collect();
                net::predict(&ck.arch, &ck.params, Tensor::stack(&ts)?)
            })
            .collect::<std::result::Result<_, _>>()
    })?;
    let records_out: Vec<ScoreRecord> = inputs
        .iter()
        .zip(scores.into_iter().flatten())
        .map(|((r, _), s)| ScoreRecord { id: r.id.clone(), score: Some(s), crops: None })
        .collect();
    if let Some(bad) = records_out.iter().find(|r| !r.score.is_some_and(f64::is_finite)) {
        return Err(Error::Usage(format!("model produced a non-finite score for {}", bad.id)));
    }
    let header = ScoresHeader {
        schema: ScoresFile::schema(Level::Crop).into(),
        config_hash: Some(cfg.hash()),
        manifest_hash: Some(manifest.hash.clone()),
        checkpoint_hash: Some(ck_hash),
        split,
        pool: None,
    };
    let file = ScoresFile::new(Level::Crop, header, records_out);
    file.write(out)?;
    let vals = file.records.iter().filter_map(|r| r.score);
    Ok(ScoreSummary {
        scored: file.records.len(),
        filtered: records.len() - file.records.len(),
        out: out.to_path_buf(),
        min: vals.clone().reduce(f64::min),
        max: vals.reduce(f64::max),
    })
}

// ---------------------------------------------------------------- aggregate

#[derive(Debug, Clone, Serialize)]
pub struct AggregateSummary {
    pub images: usize,
    pub no_text: usize,
    pub out: PathBuf,
}

/// Pools crop scores into one score per source image.
pub fn aggregate(cfg: &RunConfig, scores_path: &Path, manifest_path: &Path, out: &Path) -> Result<AggregateSummary> {
    let manifest = Manifest::read(manifest_path)?;
    let scores = ScoresFile::read(scores_path)?;
    if scores.level != Level::Crop {
        return Err(Error::Usage(format!("{} already holds image scores", scores_path.display())));
    }
    scores.check_provenance(&cfg.hash(), &manifest.hash)?;
    let by_id: HashMap<&str, &Record> = manifest.records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut order: Vec<String> =
        manifest.select(Kind::Image, scores.header.split).map(|(_, r)| r.id.clone()).collect();
    let mut pooled: HashMap<String, Vec<ScoredCrop>> = order.iter().map(|id| (id.clone(), Vec::new())).collect();
    let mut problems = Vec::new();
    for s in &scores.records {
        let Some(r) = by_id.get(s.id.as_str()).filter(|r| r.kind == Kind::Crop) else {
            return Err(Error::Mismatch(format!("scored id {:?} is not a crop in the manifest", s.id)));
        };
        let Some(area) = r.area_fraction else {
            problems.push(crate::manifest::Problem { record: None, id: r.id.clone(), message: "missing area_fraction".into() });
            continue;
        };
        let src = r.source_id().to_string();
        pooled
            .entry(src.clone())
            .or_insert_with(|| {
                order.push(src);
                Vec::new()
            })
            // raw network output is unbounded; pooling works on the MOS scale
            .push(ScoredCrop::new(s.score.expect("crop scores are present").clamp(0.0, 5.0), area));
    }
    if !problems.is_empty() {
        return Err(Error::Manifest(problems));
    }
    let mut records = Vec::with_capacity(order.len());
    for id in order {
        let crops = &pooled[&id];
        let score = match pool(crops, &cfg.pool)? {
            PoolOutcome::Score(s) => Some(s),
            PoolOutcome::NoText => None,
        };
        records.push(ScoreRecord { id, score, crops: Some(crops.len()) });
    }
    let header = ScoresHeader {
        schema: ScoresFile::schema(Level::Image).into(),
        config_hash: Some(cfg.hash()),
        manifest_hash: Some(manifest.hash.clone()),
        checkpoint_hash: scores.header.checkpoint_hash.clone(),
        split: scores.header.split,
        pool: Some(cfg.pool.clone()),
    };
    let file = ScoresFile::new(Level::Image, header, records);
    file.write(out)?;
    Ok(AggregateSummary {
        images: file.records.len(),
        no_text: file.records.iter().filter(|r| r.score.is_none()).count(),
        out: out.to_path_buf(),
    })
}

// ---------------------------------------------------------------- evaluate / select

fn score_map(scores: &ScoresFile) -> HashMap<&str, f64> {
    scores.records.iter().filter_map(|r| Some((r.id.as_str(), r.score?))).collect()
}

/// Images of `split` grouped by generator and prompt, in first-seen order.
fn image_groups(manifest: &Manifest, split: Option<Split>, scores: &HashMap<&str, f64>) -> Result<Vec<GroupRecord>> {
    let mut problems = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut groups: Vec<GroupRecord> = Vec::new();
    for (i, r) in manifest.select(Kind::Image, split) {
        let (Some(g), Some(p), Some(tq), Some(oq)) = (&r.generator, &r.prompt, r.tq_mos, r.oq_mos) else {
            problems.push(crate::manifest::Problem {
                record: Some(i),
                id: r.id.clone(),
                message: "image needs generator, prompt, tq_mos and oq_mos".into(),
            });
            continue;
        };
        let gi = *index.entry((g.clone(), p.clone())).or_insert_with(|| {
            groups.push(GroupRecord { generator: g.clone(), prompt: p.clone(), members: Vec::new() });
            groups.len() - 1
        });
        groups[gi].members.push(Member { id: r.id.clone(), tq_mos: tq, oq_mos: oq, predicted: scores.get(r.id.as_str()).copied() });
    }
    if problems.is_empty() {
        Ok(groups)
    } else {
        Err(Error::Manifest(problems))
    }
}

/// PLCC and SROCC of a scores file against the manifest labels.
pub fn evaluate(
    cfg: &RunConfig,
    scores_path: &Path,
    manifest_path: &Path,
    split: Option<Split>,
    method: &str,
) -> Result<EvalReport> {
    let manifest = Manifest::read(manifest_path)?;
    let scores = ScoresFile::read(scores_path)?;
    let verified = scores.check_provenance(&cfg.hash(), &manifest.hash)?;
    let map = score_map(&scores);
    let mut targets = Vec::new();
    let mut missing = 0;
    let fields: &[(&str, fn(&Record) -> Option<f64>)] = match scores.level {
        Level::Crop => &[("tq", |r| r.mos)],
        Level::Image => &[("tq", |r| r.tq_mos), ("oq", |r| r.oq_mos)],
    };
    let kind = match scores.level {
        Level::Crop => Kind::Crop,
        Level::Image => Kind::Image,
    };
    for (name, get) in fields {
        let (mut pred, mut mos) = (Vec::new(), Vec::new());
        for (_, r) in manifest.select(kind, split) {
            let Some(y) = get(r) else { continue };
            match map.get(r.id.as_str()) {
                Some(&s) => {
                    pred.push(s);
                    mos.push(y);
                }
                None if *name == "tq" => missing += 1,
                None => {}
            }
        }
        if pred.is_empty() {
            continue;
        }
        targets.push(TargetCorrelation { target: name.to_string(), n: pred.len(), correlation: correlate(&pred, &mos)? });
    }
    if targets.is_empty() {
        return Err(Error::Usage("no scored record carries a label in the chosen split".into()));
    }
    let within_group = match scores.level {
        Level::Image => image_groups(&manifest, split, &map)
            .ok()
            .filter(|g| g.iter().all(|g| g.members.len() >= 2 && g.members.iter().all(|m| m.predicted.is_some())))
            .and_then(|g| within_group_corr(&g, Target::Tq).ok()),
        Level::Crop => None,
    };
    Ok(EvalReport {
        schema: EVAL_SCHEMA.into(),
        method: method.into(),
        level: scores.level,
        split,
        missing,
        config_verified: verified,
        targets,
        within_group,
    })
}

/// Best-of-K selection from image scores with the Random and Oracle rows.
pub fn select(cfg: &RunConfig, scores_path: &Path, manifest_path: &Path, split: Option<Split>, method: &str) -> Result<SelectReport> {
    let manifest = Manifest::read(manifest_path)?;
    let scores = ScoresFile::read(scores_path)?;
    if scores.level != Level::Image {
        return Err(Error::Usage("selection needs image scores; run `aggregate` first".into()));
    }
    let verified = scores.check_provenance(&cfg.hash(), &manifest.hash)?;
    let map = score_map(&scores);
    let groups = image_groups(&manifest, split, &map)?;
    let unscored: Vec<&str> =
        groups.iter().flat_map(|g| &g.members).filter(|m| m.predicted.is_none()).map(|m| m.id.as_str()).collect();
    if !unscored.is_empty() {
        return Err(Error::Mismatch(format!(
            "{} image(s) have no score (first: {}); use no_text_policy = \"return_prior\" or score them",
            unscored.len(),
            unscored[0]
        )));
    }
    let selection = baselines_and_gap(&groups, cfg.eval.random_runs, cfg.seed)?;
    let within = if groups.iter().all(|g| g.members.len() >= 2) { within_group_corr(&groups, Target::Tq).ok() } else { None };
    Ok(SelectReport {
        schema: SELECT_SCHEMA.into(),
        method: method.into(),
        split,
        groups: groups.len(),
        images: groups.iter().map(|g| g.members.len()).sum(),
        config_verified: verified,
        selection,
        within_group_tq: within,
        decomposition: oq_tq_decomposition(&groups)?,
    })
}

// ---------------------------------------------------------------- gradcheck / bench

#[derive(Debug, Clone, Serialize)]
pub struct AuditFile {
    pub schema: String,
    pub seeds: Vec<u64>,
    pub passed: bool,
    pub max_primitive_error: f64,
    pub max_network_error: f64,
    pub report: AuditReport,
}

/// Finite-difference audit of every tape operation and of the network over
/// `seeds` consecutive seeds starting at the run seed.
pub fn gradcheck(cfg: &RunConfig, seeds: usize) -> Result<AuditFile> {
    let seeds: Vec<u64> = (0..seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let report = audit(&seeds, &audit_arch(), &GradCheckConfig::default())?;
    let max = |v: &[antiqa_core::gradcheck::CheckResult]| v.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(AuditFile {
        schema: AUDIT_SCHEMA.into(),
        passed: report.passed(),
        max_primitive_error: max(&report.primitives),
        max_network_error: max(&report.network),
        seeds,
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub schema: String,
    pub input_size: usize,
    pub params: usize,
    pub flops: u64,
    pub warmup: usize,
    pub timing: TimingSummary,
}

/// Times single-crop forward passes; the crop is `image` or a clean
/// synthetic render.
pub fn bench(cfg: &RunConfig, checkpoint_path: &Path, image: Option<&Path>) -> Result<BenchReport> {
    let (ck, _) = load_checkpoint_for(cfg, checkpoint_path)?;
    let pixels = match image {
        Some(p) => imageio::load(p)?,
        None => render(0.0, &cfg.synth, &mut rng::derive(cfg.seed, 0xbe)),
    };
    let input = to_model_input(&pixels, ck.arch.input_size).into_tensor().reshape(&[1, 2, ck.arch.input_size, ck.arch.input_size])?;
    let mut failure = None;
    let timing = crate::bench::time_runs(&cfg.bench, || {
        if let Err(e) = net::predict(&ck.arch, &ck.params, input.clone()) {
            failure.get_or_insert(e);
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    let timing = timing.ok_or_else(|| Error::Config("bench.runs must be positive".into()))?;
    Ok(BenchReport {
        schema: BENCH_SCHEMA.into(),
        input_size: ck.arch.input_size,
        params: net::count_params(&ck.params),
        flops: net::estimate_flops(&ck.arch)?,
        warmup: cfg.bench.warmup,
        timing,
    })
}

/// Wall-clock seconds of `f`, reported beside (never inside) output files.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}
