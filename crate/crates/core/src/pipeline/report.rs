use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::outputs::read_summary;
use super::stages::{
    CatnetSummary, ClassesSummary, DynamicsSummary, IngestSummary, MatrixSummary, NullmodelSummary, SpendingSummary,
};
use super::{Manifest, StageStatus, ORACLE_FILE};
use crate::error::{Error, Result};
use crate::synth::OracleReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLine {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub error: Option<String>,
}

/// Machine summary of one run; its `Display` form is the text report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Set when any stage failed or never ran.
    pub partial: bool,
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageLine>,
    pub ingest: Option<IngestSummary>,
    pub classes: Option<ClassesSummary>,
    pub spending: Option<SpendingSummary>,
    /// Absent when the null model was skipped.
    pub nullmodel: Option<NullmodelSummary>,
    pub catnet: Option<CatnetSummary>,
    pub dynamics: Option<DynamicsSummary>,
    pub oracle: Option<OracleReport>,
}

impl RunReport {
    /// Number of stage summaries present.
    pub fn summary_count(&self) -> usize {
        [
            self.ingest.is_some(),
            self.classes.is_some(),
            self.spending.is_some(),
            self.nullmodel.is_some() || self.stage_status("nullmodel") == Some(StageStatus::Skipped),
            self.catnet.is_some(),
            self.dynamics.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }

    pub fn stage_status(&self, name: &str) -> Option<StageStatus> {
        self.stages.iter().find(|s| s.name == name).map(|s| s.status)
    }
}

/// Assembles the report from the manifest and stage summaries in `dir`.
/// Summaries of stages that did not complete are left out.
pub fn build_report(dir: &Path) -> Result<RunReport> {
    let manifest = Manifest::read(dir)?;
    let done = |name: &str| manifest.stage(name).is_some_and(|s| s.status.completed());
    let mut report = RunReport {
        partial: !manifest.complete,
        config_hash: manifest.config_hash.clone(),
        seed: manifest.seed,
        stages: manifest
            .stages
            .iter()
            .map(|s| StageLine {
                name: s.name.clone(),
                status: s.status,
                seconds: s.seconds,
                error: s.error.clone(),
            })
            .collect(),
        ingest: None,
        classes: None,
        spending: None,
        nullmodel: None,
        catnet: None,
        dynamics: None,
        oracle: None,
    };
    if done("ingest") {
        report.ingest = read_summary(dir, "ingest")?;
    }
    if done("classes") {
        report.classes = read_summary(dir, "classes")?;
    }
    if done("spending") {
        report.spending = read_summary(dir, "spending")?;
    }
    if done("nullmodel") {
        report.nullmodel = read_summary::<NullmodelSummary>(dir, "nullmodel")?.filter(|s| !s.skipped);
    }
    if done("catnet") {
        report.catnet = read_summary(dir, "catnet")?;
    }
    if done("dynamics") {
        report.dynamics = read_summary(dir, "dynamics")?;
    }
    let oracle = dir.join(ORACLE_FILE);
    if oracle.is_file() {
        let text = std::fs::read_to_string(&oracle).map_err(|e| Error::io(&oracle, e))?;
        report.oracle = Some(serde_json::from_str(&text)?);
    }
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn matrix(f: &mut fmt::Formatter<'_>, name: &str, m: &MatrixSummary) -> fmt::Result {
    let diag: Vec<String> = m.diagonal.iter().map(|&d| opt(d)).collect();
    writeln!(f, "  {name} diagonal: {}", diag.join(" "))?;
    write!(
        f,
        "  {name} means: diagonal {}, off-diagonal {}, remote {}",
        opt(m.diagonal_mean),
        opt(m.off_diagonal_mean),
        opt(m.remote_mean)
    )?;
    if let Some(s) = m.significant_diagonal {
        write!(f, ", {s}/{} diagonal entries below 1 by > 3σ", m.diagonal.len())?;
    }
    writeln!(f)
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.partial {
            writeln!(f, "PARTIAL REPORT: the run did not complete")?;
        }
        writeln!(
            f,
            "seed {}  config {}",
            self.seed,
            &self.config_hash[..self.config_hash.len().min(12)]
        )?;
        writeln!(f, "\n[stages]")?;
        for s in &self.stages {
            let status = serde_json::to_value(s.status)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            write!(f, "  {:<10} {:<8} {:>8.2}s", s.name, status, s.seconds)?;
            if let Some(e) = &s.error {
                write!(f, "  {e}")?;
            }
            writeln!(f)?;
        }
        if let Some(s) = &self.ingest {
            writeln!(f, "\n[ingest]")?;
            writeln!(
                f,
                "  graph: {} users, {} edges from {} events",
                s.graph_nodes, s.graph_edges, s.events
            )?;
            writeln!(
                f,
                "  purchases: {} rows ({} rejected, {} unknown codes); {} profiles, {} inactive dropped",
                s.transactions, s.rejected_rows, s.invalid_mcc, s.profiles, s.excluded_inactive
            )?;
        }
        if let Some(s) = &self.classes {
            writeln!(f, "\n[classes]")?;
            writeln!(
                f,
                "  users {}  Gini {:.4}  Pareto alpha {}",
                s.users,
                s.gini,
                opt(s.pareto_alpha)
            )?;
            if let Some(n) = &s.pareto_note {
                writeln!(f, "  Pareto alpha unavailable: {n}")?;
            }
            let sizes: Vec<String> = s.class_sizes.iter().map(|x| x.to_string()).collect();
            writeln!(f, "  class sizes: {}", sizes.join(" "))?;
            let means: Vec<String> = s.class_mean_amp.iter().map(|&x| opt(x)).collect();
            writeln!(f, "  mean AMP: {}", means.join(" "))?;
            writeln!(f, "  male fraction: {}", opt(s.male_fraction))?;
        }
        if let Some(s) = &self.spending {
            writeln!(f, "\n[spending]")?;
            let cf: Vec<String> = s.mean_cash_fraction.iter().map(|x| format!("{x:.3}")).collect();
            writeln!(f, "  cash fraction by class: {}", cf.join(" "))?;
            matrix(f, "d_SV", &s.d_sv)?;
            matrix(f, "d_cash", &s.d_cash)?;
        }
        if let Some(s) = &self.nullmodel {
            writeln!(
                f,
                "\n[nullmodel] ensemble {} × {} swaps per edge",
                s.ensemble_size, s.swaps_factor
            )?;
            if let Some(m) = &s.l_sv {
                matrix(f, "L_SV", m)?;
            }
            if let Some(m) = &s.l_cash {
                matrix(f, "L_cash", m)?;
            }
            for a in &s.assortativity {
                writeln!(f, "  rho {:<28} {}  (null {})", a.category, opt(a.rho), opt(a.rho_null))?;
            }
        }
        if let Some(s) = &self.catnet {
            writeln!(f, "\n[catnet]")?;
            writeln!(
                f,
                "  {} categories retained, {} dropped; graph {} nodes / {} edges; {} communities (Q {})",
                s.retained_categories,
                s.dropped_categories,
                s.graph_nodes,
                s.graph_edges,
                s.communities,
                opt(s.modularity)
            )?;
            if let Some(c) = &s.correlations {
                writeln!(
                    f,
                    "  feature correlations: age-SEG {}, gender-SEG {}, age-gender {}",
                    opt(c.age_seg.map(|x| x.r)),
                    opt(c.gender_seg.map(|x| x.r)),
                    opt(c.age_gender.map(|x| x.r))
                )?;
            }
            let k = |v: Option<usize>| v.map_or_else(|| "n/a".into(), |x| x.to_string());
            writeln!(
                f,
                "  k-means: chosen {} (DB {}, CH {}, gap {})",
                k(s.chosen_k),
                k(s.best_davies_bouldin),
                k(s.best_calinski_harabasz),
                k(s.best_gap)
            )?;
            if let Some(n) = &s.note {
                writeln!(f, "  note: {n}")?;
            }
        }
        if let Some(s) = &self.dynamics {
            writeln!(f, "\n[dynamics] {} users with weekly spend", s.users)?;
            for g in &s.by_class {
                let v: Vec<String> = g.values.iter().map(|x| format!("{:.3}", x)).collect();
                writeln!(f, "  class {:<3} {}", g.group, v.join(" "))?;
            }
            if let Some(m) = &s.lambda_noncash {
                matrix(f, "Lambda_noncash", m)?;
            }
            if let Some(m) = &s.lambda_cash {
                matrix(f, "Lambda_cash", m)?;
            }
        }
        if let Some(o) = &self.oracle {
            writeln!(f, "\n[oracle] seed {}", o.seed)?;
            for line in o.to_string().lines() {
                writeln!(f, "  {line}")?;
            }
        }
        Ok(())
    }
}
