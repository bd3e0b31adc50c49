use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::GroundTruth;
use crate::catnet::nmi;
use crate::dynamics::GroupProfile;
use crate::error::{Error, Result};
use crate::matrix::ClassMatrix;

/// Tolerances used by [`oracle_report`].
pub const GINI_TOL: f64 = 1e-6;
pub const GENDER_TOL: f64 = 0.01;
pub const FEATURE_TOL: f64 = 0.05;
pub const FRIDAY_TOL: f64 = 0.005;
pub const NMI_MIN: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The pipeline output the check needs was not produced.
    Missing,
    /// Nothing was planted for this check to find.
    NotApplicable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Missing => "missing",
            Verdict::NotApplicable => "n/a",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub criterion: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub rows: Vec<VerdictRow>,
}

impl OracleReport {
    /// True when no row failed or lacked its input.
    pub fn all_passed(&self) -> bool {
        self.rows
            .iter()
            .all(|r| matches!(r.verdict, Verdict::Pass | Verdict::NotApplicable))
    }

    pub fn get(&self, criterion: &str) -> Option<Verdict> {
        self.rows.iter().find(|r| r.criterion == criterion).map(|r| r.verdict)
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            writeln!(f, "{:<22} {:<8} {}", r.criterion, r.verdict.to_string(), r.detail)?;
        }
        Ok(())
    }
}

/// The pipeline results an oracle comparison reads. Absent fields are
/// reported as missing.
#[derive(Debug, Clone, Default)]
pub struct PipelineOutputs {
    pub seed: Option<u64>,
    /// Recovered class per user, 1-based.
    pub classes: Option<BTreeMap<String, usize>>,
    pub gini: Option<f64>,
    pub male_fraction: Option<f64>,
    /// Non-cash spending-vector ratio matrix and its ensemble σ.
    pub l_sv: Option<(ClassMatrix, ClassMatrix)>,
    /// Non-cash weekly ratio matrix and its ensemble σ.
    pub lambda: Option<(ClassMatrix, ClassMatrix)>,
    pub age_seg_correlation: Option<f64>,
    /// Community per merchant code.
    pub communities: Option<BTreeMap<u32, usize>>,
    /// Weekly profiles grouped by class.
    pub weekly_by_class: Option<Vec<GroupProfile>>,
}

impl PipelineOutputs {
    /// Reads whatever a pipeline run left in `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        crate::pipeline::load_outputs(dir)
    }
}

fn row(criterion: &str, verdict: Verdict, detail: impl Into<String>) -> VerdictRow {
    VerdictRow {
        criterion: criterion.into(),
        verdict,
        detail: detail.into(),
    }
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Diagonal entries below 1 by more than three ensemble σ.
fn diagonal_check(criterion: &str, m: Option<&(ClassMatrix, ClassMatrix)>, planted: bool) -> VerdictRow {
    let Some((ratio, sigma)) = m else {
        return row(criterion, Verdict::Missing, "ratio matrix not produced");
    };
    if !planted {
        return row(criterion, Verdict::NotApplicable, "no homophily planted");
    }
    let mut worst: Option<(usize, f64)> = None;
    for i in 0..ratio.size() {
        let margin = match (ratio.get(i, i), sigma.get(i, i)) {
            (Some(r), Some(s)) if s > 0.0 => (1.0 - r) / s,
            (Some(r), Some(_)) if r < 1.0 => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
        if worst.is_none_or(|(_, w)| margin < w) {
            worst = Some((i + 1, margin));
        }
    }
    match worst {
        None => row(criterion, Verdict::Fail, "empty matrix"),
        Some((class, margin)) => row(
            criterion,
            pass_if(margin > 3.0),
            format!("smallest margin {margin:.2}σ at class {class} (need > 3σ)"),
        ),
    }
}

/// Compares pipeline outputs against the planted ground truth.
pub fn oracle_report(truth: &GroundTruth, out: &PipelineOutputs) -> Result<OracleReport> {
    if let Some(seed) = out.seed {
        if seed != truth.seed {
            return Err(Error::InvalidArgument(format!(
                "ground truth seed {} does not match pipeline seed {seed}",
                truth.seed
            )));
        }
    }
    let spec = &truth.spec;
    let mut rows = Vec::new();

    rows.push(match &out.classes {
        None => row("class_recovery", Verdict::Missing, "partition not produced"),
        Some(found) => {
            let (a, b): (Vec<usize>, Vec<usize>) = truth
                .users
                .iter()
                .filter_map(|u| found.get(&u.id).map(|&c| (u.class, c)))
                .unzip();
            if a.is_empty() {
                row("class_recovery", Verdict::Fail, "no planted user was classified")
            } else {
                let score = nmi(&a, &b);
                row(
                    "class_recovery",
                    pass_if(score >= NMI_MIN),
                    format!("NMI {score:.4} over {} users (need ≥ {NMI_MIN})", a.len()),
                )
            }
        }
    });

    rows.push(match (out.gini, truth.gini()) {
        (None, _) => row("gini", Verdict::Missing, "Gini not produced"),
        (Some(_), None) => row("gini", Verdict::NotApplicable, "empty population"),
        (Some(g), Some(p)) => row(
            "gini",
            pass_if((g - p).abs() <= GINI_TOL),
            format!("measured {g:.6}, planted {p:.6}"),
        ),
    });

    rows.push(match out.male_fraction {
        None => row("gender_split", Verdict::Missing, "demographic pyramid not produced"),
        Some(m) => row(
            "gender_split",
            pass_if((m - spec.gender_split).abs() <= GENDER_TOL),
            format!("measured {m:.4}, planted {:.4} ± {GENDER_TOL}", spec.gender_split),
        ),
    });

    let homophilic = spec.homophily_strength > 0.0 && spec.taste_coupling > 0.0;
    rows.push(diagonal_check(
        "l_diagonal",
        out.l_sv.as_ref(),
        homophilic && spec.taste_shift > 0.0,
    ));
    rows.push(diagonal_check(
        "lambda_diagonal",
        out.lambda.as_ref(),
        homophilic && spec.weekday_taste_shift > 0.0,
    ));

    rows.push(match (out.age_seg_correlation, truth.planted_feature_correlation) {
        (None, _) => row(
            "feature_correlation",
            Verdict::Missing,
            "feature correlations not produced",
        ),
        (Some(_), None) => row("feature_correlation", Verdict::NotApplicable, "no loadings planted"),
        (Some(_), Some(_)) if spec.feature_tilt == 0.0 => {
            row("feature_correlation", Verdict::NotApplicable, "feature tilt is zero")
        }
        (Some(r), Some(p)) => row(
            "feature_correlation",
            pass_if((r - p).abs() <= FEATURE_TOL),
            format!("age–class r {r:.4}, planted {p:.4} ± {FEATURE_TOL}"),
        ),
    });

    rows.push(match &out.weekly_by_class {
        None => row("weekly_friday", Verdict::Missing, "weekly class profiles not produced"),
        Some(groups) => {
            let mut worst = 0.0f64;
            let mut seen = 0;
            for g in groups {
                let Ok(c) = g.group.parse::<usize>() else {
                    continue;
                };
                let Some(planted) = truth.resolved.weekday_profiles.get(c.wrapping_sub(1)) else {
                    continue;
                };
                worst = worst.max((g.values[4] - planted[4]).abs());
                seen += 1;
            }
            if seen < spec.n_classes {
                row(
                    "weekly_friday",
                    Verdict::Fail,
                    format!("{seen} of {} classes reported", spec.n_classes),
                )
            } else {
                row(
                    "weekly_friday",
                    pass_if(worst <= FRIDAY_TOL),
                    format!("largest Friday deviation {worst:.4} (need ≤ {FRIDAY_TOL})"),
                )
            }
        }
    });

    rows.push(match &out.communities {
        None => row("block_recovery", Verdict::Missing, "communities not produced"),
        Some(_) if spec.category_blocks.is_empty() => {
            row("block_recovery", Verdict::NotApplicable, "no blocks planted")
        }
        Some(found) => {
            let (a, b): (Vec<usize>, Vec<usize>) = truth
                .categories
                .iter()
                .filter_map(|c| Some((c.block?, *found.get(&c.code)?)))
                .unzip();
            let planted: usize = spec.category_blocks.iter().map(|b| b.codes.len()).sum();
            if a.len() < planted {
                row(
                    "block_recovery",
                    Verdict::Fail,
                    format!("{} of {planted} block codes in the category graph", a.len()),
                )
            } else {
                let score = nmi(&a, &b);
                row(
                    "block_recovery",
                    pass_if(score >= NMI_MIN),
                    format!("NMI {score:.4} over {} codes (need ≥ {NMI_MIN})", a.len()),
                )
            }
        }
    });

    Ok(OracleReport { seed: truth.seed, rows })
}
