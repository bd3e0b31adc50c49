//! Synthetic populations with planted, recorded ground truth.

mod generate;
mod oracle;
mod planted;

use serde::{Deserialize, Serialize};

use crate::directory::CategoryDirectory;
use crate::error::{Error, Result};

pub use generate::{
    generate, read_ground_truth, write_synth, CategoryTruth, GroundTruth, SynthData, UserTruth, SYNTH_FILES,
};
pub use oracle::{oracle_report, OracleReport, PipelineOutputs, Verdict, VerdictRow};
pub use planted::{independent_category_rows, pareto_sample, planted_clusters, planted_partition_graph, PlantedGraph};

/// Distribution of planted average monthly purchases, in currency units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmpModel {
    Pareto { alpha: f64, xmin: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgeDistribution {
    pub mean: f64,
    pub sd: f64,
    pub min: u32,
    pub max: u32,
}

impl Default for AgeDistribution {
    fn default() -> Self {
        AgeDistribution {
            mean: 42.0,
            sd: 13.0,
            min: 18,
            max: 80,
        }
    }
}

/// Merchant codes bought together by a random subset of users. Each user
/// joins with probability `coupling`; members send `share` of their non-cash
/// purchases to the block, spread evenly over its codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryBlock {
    pub codes: Vec<u32>,
    pub coupling: f64,
    pub share: f64,
}

/// A purchase group bought only by users of positive taste, who send
/// `share` of their non-cash purchases to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssortativeGroup {
    pub pcg: String,
    pub share: f64,
}

/// Every knob of the generator. Per-class lists left empty take built-in
/// profiles interpolated from the poorest to the richest class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_users: usize,
    pub n_classes: usize,
    pub amp: AmpModel,
    /// Target number of undirected edges is `mean_degree · n_users / 2`.
    pub mean_degree: f64,
    /// Tail exponent of the Pareto degree propensities; 0 gives equal propensities.
    pub degree_alpha: f64,
    /// Probability that an edge is drawn inside one class.
    pub homophily_strength: f64,
    /// Probability that an edge's taste relation is forced: equal taste
    /// inside a class, opposite taste across the population.
    pub taste_coupling: f64,
    /// Size of the taste tilt on spending vectors, at most 0.5.
    pub taste_shift: f64,
    /// Per-class mean spending vectors over the 16 non-cash groups.
    pub class_spending_means: Vec<Vec<f64>>,
    /// Per-class mean cash fraction of spend.
    pub cash_fraction: Vec<f64>,
    /// Dirichlet concentration of the poorest and richest class, linear in between.
    pub concentration: (f64, f64),
    /// Beta concentration of per-user cash fractions.
    pub cash_concentration: f64,
    /// Relative taste tilt on the mean cash fraction, at most 0.5.
    pub cash_taste_shift: f64,
    pub category_blocks: Vec<CategoryBlock>,
    pub assortative_group: Option<AssortativeGroup>,
    /// Per-class weekday distributions, Monday first.
    pub weekday_profiles: Vec<[f64; 7]>,
    /// Weekday mass moved from Monday to Saturday for positive taste and back for negative.
    pub weekday_taste_shift: f64,
    /// Weekend tilt per group label; positive moves weight from Monday–Thursday to the weekend.
    pub weekday_group_tilts: Vec<(String, f64)>,
    /// Probability that a user is male.
    pub gender_split: f64,
    pub age_distribution: AgeDistribution,
    pub tx_per_user: f64,
    /// Inclusive range of active months, drawn from the 12 months of 2024.
    pub active_months: (usize, usize),
    /// Fraction of purchases made at codes of non-retained groups.
    pub dropped_share: f64,
    /// Planted correlation between the age and class loadings of merchant codes.
    pub feature_correlation: f64,
    /// Strength with which demographic loadings steer the choice of merchant code.
    pub feature_tilt: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 42,
            n_users: 10_000,
            n_classes: 9,
            amp: AmpModel::Pareto {
                alpha: 1.315,
                xmin: 50.0,
            },
            mean_degree: 4.0,
            degree_alpha: 2.5,
            homophily_strength: 0.5,
            taste_coupling: 0.5,
            taste_shift: 0.3,
            class_spending_means: Vec::new(),
            cash_fraction: Vec::new(),
            concentration: (30.0, 120.0),
            cash_concentration: 40.0,
            cash_taste_shift: 0.0,
            category_blocks: Vec::new(),
            assortative_group: None,
            weekday_profiles: Vec::new(),
            weekday_taste_shift: 0.02,
            weekday_group_tilts: vec![("Entertainment".into(), 0.3), ("Gas Stations".into(), -0.2)],
            gender_split: 0.6,
            age_distribution: AgeDistribution::default(),
            tx_per_user: 10.0,
            active_months: (3, 8),
            dropped_share: 0.05,
            feature_correlation: 0.42,
            feature_tilt: 0.3,
        }
    }
}

/// Spending vector of the poorest class, in non-cash group order.
pub const POOR_SPENDING: [f64; 16] = [
    0.30, 0.20, 0.09, 0.08, 0.06, 0.03, 0.04, 0.03, 0.04, 0.04, 0.01, 0.01, 0.02, 0.03, 0.01, 0.01,
];
/// Spending vector of the richest class, in non-cash group order.
pub const RICH_SPENDING: [f64; 16] = [
    0.18, 0.12, 0.10, 0.05, 0.04, 0.05, 0.06, 0.06, 0.04, 0.07, 0.04, 0.04, 0.04, 0.03, 0.04, 0.04,
];
pub const CASH_FRACTION_RANGE: (f64, f64) = (0.30, 0.15);
pub const FRIDAY_RANGE: (f64, f64) = (0.217, 0.165);
/// Monday–Thursday, Saturday and Sunday weights before scaling to `1 − Friday`.
const OTHER_DAYS: [f64; 6] = [0.14, 0.14, 0.15, 0.16, 0.16, 0.10];

fn lerp(range: (f64, f64), class0: usize, n: usize) -> f64 {
    if n <= 1 {
        return range.0;
    }
    range.0 + (range.1 - range.0) * class0 as f64 / (n - 1) as f64
}

/// Default weekday profile with the given Friday share.
pub fn weekday_profile(friday: f64) -> [f64; 7] {
    let rest: f64 = OTHER_DAYS.iter().sum();
    let s = (1.0 - friday) / rest;
    let o = OTHER_DAYS;
    [o[0] * s, o[1] * s, o[2] * s, o[3] * s, friday, o[4] * s, o[5] * s]
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {p} is not a probability")))
    }
}

fn check_simplex(name: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::InvalidArgument(format!(
            "{name} has {} entries, expected {len}",
            v.len()
        )));
    }
    if v.iter().any(|x| x.is_nan() || *x < 0.0) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!("{name} is not on the simplex")));
    }
    Ok(())
}

impl SynthSpec {
    /// Per-class spending means, cash fractions and weekday profiles with defaults filled in.
    pub fn resolve(&self, directory: &CategoryDirectory) -> Result<ResolvedSpec> {
        self.validate(directory)?;
        let n = self.n_classes;
        let k = directory.non_cash_labels().len();
        let mut means: Vec<Vec<f64>> = if self.class_spending_means.is_empty() {
            (0..n)
                .map(|j| {
                    let t = lerp((0.0, 1.0), j, n);
                    (0..k)
                        .map(|c| (1.0 - t) * POOR_SPENDING[c] + t * RICH_SPENDING[c])
                        .collect()
                })
                .collect()
        } else {
            self.class_spending_means.clone()
        };
        if let Some(a) = &self.assortative_group {
            let idx = directory
                .non_cash_labels()
                .iter()
                .position(|l| *l == a.pcg)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("assortative group `{}` is not a non-cash group", a.pcg))
                })?;
            for m in &mut means {
                m[idx] = 0.0;
                let s: f64 = m.iter().sum();
                if s <= 0.0 {
                    return Err(Error::Infeasible(
                        "class mean has no spend outside the assortative group".into(),
                    ));
                }
                m.iter_mut().for_each(|x| *x /= s);
            }
        }
        let cash = if self.cash_fraction.is_empty() {
            (0..n).map(|j| lerp(CASH_FRACTION_RANGE, j, n)).collect()
        } else {
            self.cash_fraction.clone()
        };
        let weekday = if self.weekday_profiles.is_empty() {
            (0..n).map(|j| weekday_profile(lerp(FRIDAY_RANGE, j, n))).collect()
        } else {
            self.weekday_profiles.clone()
        };
        let concentration = (0..n).map(|j| lerp(self.concentration, j, n)).collect();
        Ok(ResolvedSpec {
            spending_means: means,
            cash_fraction: cash,
            weekday_profiles: weekday,
            concentration,
        })
    }

    pub fn validate(&self, directory: &CategoryDirectory) -> Result<()> {
        let n = self.n_classes;
        if n == 0 {
            return Err(Error::InvalidArgument("n_classes must be at least 1".into()));
        }
        if self.n_users > 0 && self.n_users < n {
            return Err(Error::Infeasible(format!(
                "{} users cannot fill {n} classes",
                self.n_users
            )));
        }
        match self.amp {
            AmpModel::Pareto { alpha, xmin } if !(alpha > 0.0 && xmin >= 0.01) => {
                return Err(Error::InvalidArgument(
                    "Pareto AMP needs alpha > 0 and xmin ≥ 0.01".into(),
                ))
            }
            AmpModel::Constant { value } if value.is_nan() || value < 0.01 => {
                return Err(Error::InvalidArgument("constant AMP must be at least 0.01".into()))
            }
            _ => {}
        }
        for (name, p) in [
            ("homophily_strength", self.homophily_strength),
            ("taste_coupling", self.taste_coupling),
            ("gender_split", self.gender_split),
            ("dropped_share", self.dropped_share),
        ] {
            check_prob(name, p)?;
        }
        if !(0.0..=0.5).contains(&self.taste_shift) || !(0.0..=0.5).contains(&self.cash_taste_shift) {
            return Err(Error::InvalidArgument("taste shifts must lie in [0, 0.5]".into()));
        }
        if !(-1.0..=1.0).contains(&self.feature_correlation) {
            return Err(Error::InvalidArgument("feature_correlation must lie in [-1, 1]".into()));
        }
        if [self.mean_degree, self.degree_alpha, self.tx_per_user]
            .iter()
            .any(|v| v.is_nan() || *v < 0.0)
        {
            return Err(Error::InvalidArgument(
                "mean_degree, degree_alpha and tx_per_user must be non-negative".into(),
            ));
        }
        let (lo, hi) = self.active_months;
        if lo < 1 || lo > hi || hi > 12 {
            return Err(Error::InvalidArgument(
                "active_months must satisfy 1 ≤ lo ≤ hi ≤ 12".into(),
            ));
        }
        if !(self.concentration.0 > 0.0 && self.concentration.1 > 0.0 && self.cash_concentration > 0.0) {
            return Err(Error::InvalidArgument("concentrations must be positive".into()));
        }
        let k = directory.non_cash_labels().len();
        if !self.class_spending_means.is_empty() {
            if self.class_spending_means.len() != n {
                return Err(Error::InvalidArgument(
                    "class_spending_means needs one vector per class".into(),
                ));
            }
            for (j, m) in self.class_spending_means.iter().enumerate() {
                check_simplex(&format!("class_spending_means[{j}]"), m, k)?;
            }
        }
        if !self.cash_fraction.is_empty() {
            if self.cash_fraction.len() != n {
                return Err(Error::InvalidArgument("cash_fraction needs one value per class".into()));
            }
            for &c in &self.cash_fraction {
                check_prob("cash_fraction", c)?;
            }
        }
        if !self.weekday_profiles.is_empty() {
            if self.weekday_profiles.len() != n {
                return Err(Error::InvalidArgument(
                    "weekday_profiles needs one vector per class".into(),
                ));
            }
            for (j, w) in self.weekday_profiles.iter().enumerate() {
                check_simplex(&format!("weekday_profiles[{j}]"), w, 7)?;
            }
        }
        let universe = directory.merchant_universe();
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.category_blocks {
            check_prob("block coupling", b.coupling)?;
            check_prob("block share", b.share)?;
            if b.codes.is_empty() {
                return Err(Error::InvalidArgument("category block without codes".into()));
            }
            for c in &b.codes {
                if universe.binary_search(c).is_err() {
                    return Err(Error::InvalidArgument(format!(
                        "block code {c} is not a non-cash merchant code"
                    )));
                }
                if !seen.insert(*c) {
                    return Err(Error::InvalidArgument(format!("code {c} appears in two blocks")));
                }
            }
        }
        if let Some(a) = &self.assortative_group {
            check_prob("assortative share", a.share)?;
        }
        for (label, t) in &self.weekday_group_tilts {
            if directory.pcg_id(label).is_none() {
                return Err(Error::InvalidArgument(format!(
                    "unknown group `{label}` in weekday_group_tilts"
                )));
            }
            if !(*t >= -1.0 && t.is_finite()) {
                return Err(Error::InvalidArgument(
                    "weekday tilts must be finite and at least -1".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn n_edges(&self) -> usize {
        (self.mean_degree * self.n_users as f64 / 2.0).round() as usize
    }

    /// Reads a JSON spec; absent keys take their defaults.
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Per-class parameters after defaults are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSpec {
    pub spending_means: Vec<Vec<f64>>,
    pub cash_fraction: Vec<f64>,
    pub weekday_profiles: Vec<[f64; 7]>,
    pub concentration: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profiles_are_on_the_simplex() {
        assert!((POOR_SPENDING.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((RICH_SPENDING.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let dir = CategoryDirectory::default();
        let r = SynthSpec::default().resolve(&dir).unwrap();
        for w in &r.weekday_profiles {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((r.weekday_profiles[0][4] - 0.217).abs() < 1e-12);
        assert!((r.weekday_profiles[8][4] - 0.165).abs() < 1e-12);
        assert!(r.concentration[0] < r.concentration[8]);
    }

    #[test]
    fn rejects_bad_probabilities() {
        let dir = CategoryDirectory::default();
        let mut s = SynthSpec {
            homophily_strength: 1.5,
            ..Default::default()
        };
        assert!(s.validate(&dir).is_err());
        s.homophily_strength = 0.5;
        s.class_spending_means = vec![vec![0.5; 16]; 9];
        assert!(s.validate(&dir).is_err());
    }

    #[test]
    fn partial_json_takes_defaults() {
        let s: SynthSpec = serde_json::from_str(r#"{"n_users": 50, "amp": {"constant": {"value": 10.0}}}"#).unwrap();
        assert_eq!(s.n_users, 50);
        assert_eq!(s.n_classes, 9);
        assert_eq!(s.amp, AmpModel::Constant { value: 10.0 });
        assert!(serde_json::from_str::<SynthSpec>(r#"{"bogus": 1}"#).is_err());
    }
}
