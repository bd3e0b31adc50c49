//! End-to-end orchestration: configuration, resumable stages, manifest and report.

mod outputs;
mod report;
mod stages;

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catnet::{AfsWeighting, MeanScope};
use crate::error::{Error, Result};

pub use outputs::{load_outputs, read_group_csv};
pub use report::{build_report, RunReport};
pub use stages::{
    write_afs_csv, write_correlation_csv, AssortativityRow, CatnetSummary, ClassesSummary, DynamicsSummary,
    IngestSummary, MatrixSummary, NullmodelSummary, SpendingSummary,
};

/// Stage names in execution order.
pub const STAGES: [&str; 6] = ["ingest", "classes", "spending", "nullmodel", "catnet", "dynamics"];
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ORACLE_FILE: &str = "oracle.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

/// Flat run configuration; every key may appear in a TOML config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub events: Option<PathBuf>,
    pub transactions: Option<PathBuf>,
    pub demographics: Option<PathBuf>,
    /// Replacement for the built-in `mcc,name,pcg` table.
    pub mcc_directory: Option<PathBuf>,
    pub output: PathBuf,
    pub n_classes: usize,
    /// Share of the largest AMP values fed to the Hill estimator.
    pub tail_fraction: f64,
    pub swaps_factor: f64,
    pub ensemble_size: usize,
    pub rho_min: f64,
    pub support_min: u64,
    pub min_purchases: u64,
    pub min_active_months: usize,
    pub utc_offset_secs: i64,
    pub seed: u64,
    pub per_capita: bool,
    pub mean_scope: MeanScope,
    pub afs_weighting: AfsWeighting,
    pub kmeans_min: usize,
    pub kmeans_max: usize,
    pub kmeans_restarts: usize,
    pub gap_references: usize,
    pub standardize: bool,
    pub removal_fractions: Vec<f64>,
    pub removal_repeats: usize,
    pub spend_weighted: bool,
    pub skip_nullmodel: bool,
    /// Ground truth of a synthetic data set to score the run against.
    pub oracle: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            events: None,
            transactions: None,
            demographics: None,
            mcc_directory: None,
            output: PathBuf::from("socioscope-out"),
            n_classes: 9,
            tail_fraction: 0.1,
            swaps_factor: 5.0,
            ensemble_size: 100,
            rho_min: 1.5,
            support_min: 1000,
            min_purchases: 100,
            min_active_months: 2,
            utc_offset_secs: 0,
            seed: 42,
            per_capita: false,
            mean_scope: MeanScope::AllUsers,
            afs_weighting: AfsWeighting::PerUser,
            kmeans_min: 2,
            kmeans_max: 25,
            kmeans_restarts: 10,
            gap_references: 20,
            standardize: true,
            removal_fractions: vec![0.25, 0.5, 0.75],
            removal_repeats: 10,
            spend_weighted: false,
            skip_nullmodel: false,
            oracle: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Hash of every field that can change a result; the output location is excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output");
        }
        sha256_hex(v.to_string().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::Config("n_classes must be at least 1".into()));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::Config("tail_fraction must lie in (0, 1]".into()));
        }
        if self.swaps_factor.is_nan() || self.swaps_factor <= 0.0 || self.ensemble_size == 0 {
            return Err(Error::Config("swaps_factor and ensemble_size must be positive".into()));
        }
        if self.min_active_months == 0 {
            return Err(Error::Config("min_active_months must be at least 1".into()));
        }
        if self.kmeans_min == 0 || self.kmeans_min > self.kmeans_max {
            return Err(Error::Config("need 1 ≤ kmeans_min ≤ kmeans_max".into()));
        }
        if self.removal_fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
            return Err(Error::Config("removal fractions must lie in [0, 1)".into()));
        }
        if self.removal_repeats == 0 {
            return Err(Error::Config("removal_repeats must be at least 1".into()));
        }
        Ok(())
    }

    /// Named-file check of every input, done before any stage runs.
    pub fn check_inputs(&self) -> Result<()> {
        for (key, path) in [("events", &self.events), ("transactions", &self.transactions)] {
            match path {
                None => return Err(Error::Config(format!("no `{key}` input configured"))),
                Some(p) if !p.is_file() => return Err(Error::MissingInput(p.clone())),
                Some(_) => {}
            }
        }
        for p in [&self.demographics, &self.mcc_directory, &self.oracle]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(Error::MissingInput(p.clone()));
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Cached,
    Skipped,
    Failed,
    NotRun,
}

impl StageStatus {
    fn completed(self) -> bool {
        matches!(self, StageStatus::Ran | StageStatus::Cached | StageStatus::Skipped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Hash of the stage's inputs and configuration subset.
    pub key: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub error: Option<String>,
    pub outputs: Vec<FileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub complete: bool,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest> {
        let p = dir.join(MANIFEST_FILE);
        let f = fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let p = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&p, text + "\n").map_err(|e| Error::io(p, e))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn files(&self) -> impl Iterator<Item = &FileRecord> {
        self.stages.iter().flat_map(|s| s.outputs.iter())
    }
}

/// Configuration subset each stage depends on, beyond its input files.
fn stage_config(cfg: &RunConfig, stage: &str) -> serde_json::Value {
    use serde_json::json;
    match stage {
        "ingest" => {
            json!({"min_active_months": cfg.min_active_months, "utc_offset_secs": cfg.utc_offset_secs})
        }
        "classes" => json!({"n_classes": cfg.n_classes, "tail_fraction": cfg.tail_fraction}),
        "spending" => json!({"per_capita": cfg.per_capita}),
        "nullmodel" => json!({
            "skip": cfg.skip_nullmodel,
            "swaps_factor": cfg.swaps_factor,
            "ensemble_size": cfg.ensemble_size,
            "seed": cfg.seed,
            "removal_fractions": cfg.removal_fractions,
            "removal_repeats": cfg.removal_repeats,
        }),
        "catnet" => json!({
            "rho_min": cfg.rho_min,
            "support_min": cfg.support_min,
            "min_purchases": cfg.min_purchases,
            "mean_scope": cfg.mean_scope,
            "afs_weighting": cfg.afs_weighting,
            "kmeans": [cfg.kmeans_min, cfg.kmeans_max, cfg.kmeans_restarts, cfg.gap_references],
            "standardize": cfg.standardize,
            "seed": cfg.seed,
        }),
        "dynamics" => {
            if cfg.skip_nullmodel {
                json!({"spend_weighted": cfg.spend_weighted, "lambda": false})
            } else {
                json!({
                    "spend_weighted": cfg.spend_weighted,
                    "lambda": true,
                    "swaps_factor": cfg.swaps_factor,
                    "ensemble_size": cfg.ensemble_size,
                    "seed": cfg.seed,
                })
            }
        }
        _ => serde_json::Value::Null,
    }
}

/// Upstream stages whose outputs a stage reads.
fn stage_inputs(stage: &str) -> &'static [&'static str] {
    match stage {
        "classes" => &["ingest"],
        "spending" | "nullmodel" | "catnet" | "dynamics" => &["ingest", "classes"],
        _ => &[],
    }
}

fn previous_is_valid(prev: Option<&StageRecord>, key: &str, dir: &Path) -> Option<StageRecord> {
    let prev = prev?;
    if prev.key != key || !prev.status.completed() {
        return None;
    }
    for f in &prev.outputs {
        if sha256_file(&dir.join(&f.path)).ok()? != f.sha256 {
            return None;
        }
    }
    Some(prev.clone())
}

/// Outcome of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub report: RunReport,
}

/// Runs every stage, reusing those whose key matches the previous manifest,
/// then writes the manifest, the oracle verdicts if configured, and the report.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    cfg.check_inputs()?;
    let dir = cfg.output.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let previous = Manifest::read(&dir).ok();

    let mut raw_inputs: BTreeMap<&str, String> = BTreeMap::new();
    for (key, path) in [
        ("events", &cfg.events),
        ("transactions", &cfg.transactions),
        ("demographics", &cfg.demographics),
        ("mcc_directory", &cfg.mcc_directory),
    ] {
        if let Some(p) = path {
            raw_inputs.insert(key, sha256_file(p)?);
        }
    }
    let directory_hash = raw_inputs
        .get("mcc_directory")
        .cloned()
        .unwrap_or_else(|| "builtin".into());

    let mut manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        complete: false,
        stages: Vec::new(),
    };
    let mut ctx = stages::Context::new(cfg)?;
    let mut failure: Option<Error> = None;
    for stage in STAGES {
        if failure.is_some() {
            manifest.stages.push(StageRecord {
                name: stage.into(),
                key: String::new(),
                status: StageStatus::NotRun,
                seconds: 0.0,
                error: None,
                outputs: Vec::new(),
            });
            continue;
        }
        let mut upstream: Vec<&str> = Vec::new();
        for up in stage_inputs(stage) {
            if let Some(r) = manifest.stage(up) {
                upstream.extend(r.outputs.iter().map(|f| f.sha256.as_str()));
            }
        }
        let key_src = serde_json::json!({
            "stage": stage,
            "config": stage_config(cfg, stage),
            "directory": directory_hash,
            "raw": if stage == "ingest" { serde_json::to_value(&raw_inputs)? } else { serde_json::Value::Null },
            "upstream": upstream,
        });
        let key = sha256_hex(key_src.to_string().as_bytes());
        if let Some(mut rec) = previous_is_valid(previous.as_ref().and_then(|m| m.stage(stage)), &key, &dir) {
            if rec.status != StageStatus::Skipped {
                rec.status = StageStatus::Cached;
            }
            log::info!("stage {stage}: cached");
            manifest.stages.push(rec);
            continue;
        }
        let stage_dir = dir.join(stage);
        fs::create_dir_all(&stage_dir).map_err(|e| Error::io(&stage_dir, e))?;
        let t = Instant::now();
        log::info!("stage {stage}: running");
        let result = ctx.run(stage, &stage_dir);
        let seconds = t.elapsed().as_secs_f64();
        match result {
            Ok(stages::StageResult { files, skipped }) => {
                let mut outputs = Vec::new();
                for f in files {
                    let rel = format!("{stage}/{f}");
                    outputs.push(FileRecord {
                        sha256: sha256_file(&dir.join(&rel))?,
                        path: rel,
                        stage: stage.into(),
                    });
                }
                manifest.stages.push(StageRecord {
                    name: stage.into(),
                    key,
                    status: if skipped {
                        StageStatus::Skipped
                    } else {
                        StageStatus::Ran
                    },
                    seconds,
                    error: None,
                    outputs,
                });
            }
            Err(e) => {
                log::error!("stage {stage} failed: {e}");
                manifest.stages.push(StageRecord {
                    name: stage.into(),
                    key,
                    status: StageStatus::Failed,
                    seconds,
                    error: Some(e.to_string()),
                    outputs: Vec::new(),
                });
                failure = Some(Error::Stage {
                    stage: stage.into(),
                    message: e.to_string(),
                });
            }
        }
    }
    manifest.complete = failure.is_none();
    manifest.write(&dir)?;

    let oracle_path = dir.join(ORACLE_FILE);
    if let (Some(truth_path), true) = (&cfg.oracle, manifest.complete) {
        let truth = crate::synth::read_ground_truth(truth_path)?;
        let outputs = load_outputs(&dir)?;
        let verdicts = crate::synth::oracle_report(&truth, &outputs)?;
        fs::write(&oracle_path, serde_json::to_string_pretty(&verdicts)? + "\n")
            .map_err(|e| Error::io(&oracle_path, e))?;
    } else if oracle_path.exists() {
        fs::remove_file(&oracle_path).map_err(|e| Error::io(&oracle_path, e))?;
    }

    let report = build_report(&dir)?;
    let rj = dir.join(REPORT_JSON);
    fs::write(&rj, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&rj, e))?;
    let rt = dir.join(REPORT_TEXT);
    fs::write(&rt, report.to_string()).map_err(|e| Error::io(&rt, e))?;

    match failure {
        Some(e) => Err(e),
        None => Ok(RunOutcome { manifest, report }),
    }
}
