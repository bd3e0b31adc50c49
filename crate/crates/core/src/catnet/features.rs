use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::table::CategorySpendTable;
use crate::ingest::EgoProfile;
use crate::socio::ClassPartition;

/// How purchaser features are combined into a category average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AfsWeighting {
    /// Sum over purchasers of `α(v_u)·v_u` over the sum of `α(v_u)`, which
    /// reduces to the mean feature weighted by each purchaser's share `r(c, u)`.
    #[default]
    PerUser,
    /// Sum over distinct feature values of `α(v)·v` over the sum of `α(v)`,
    /// where `α(v)` is the mean share among purchasers with value `v`.
    PerValue,
}

/// Weighted numerator and denominator of one feature average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct WeightedSum {
    pub num: f64,
    pub den: f64,
}

impl WeightedSum {
    pub fn value(&self) -> Option<f64> {
        (self.den > 0.0).then(|| self.num / self.den)
    }

    fn add(&mut self, other: WeightedSum) {
        self.num += other.num;
        self.den += other.den;
    }
}

/// Average age, gender and class of the users who bought a category.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryFeatures {
    pub code: u32,
    pub purchasers: usize,
    pub age: WeightedSum,
    pub gender: WeightedSum,
    pub seg: WeightedSum,
}

impl CategoryFeatures {
    pub fn triple(&self) -> Option<[f64; 3]> {
        Some([self.age.value()?, self.gender.value()?, self.seg.value()?])
    }
}

fn weighted(samples: &[(f64, f64)], weighting: AfsWeighting) -> WeightedSum {
    match weighting {
        AfsWeighting::PerUser => samples.iter().fold(WeightedSum::default(), |acc, &(v, r)| WeightedSum {
            num: acc.num + r * v,
            den: acc.den + r,
        }),
        AfsWeighting::PerValue => {
            // key on the exact bit pattern so equal feature values group together
            let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
            for &(v, r) in samples {
                let g = groups.entry(v.to_bits()).or_insert((v, 0.0, 0));
                g.1 += r;
                g.2 += 1;
            }
            groups.values().fold(WeightedSum::default(), |acc, &(v, sum_r, n)| {
                let alpha = sum_r / n as f64;
                WeightedSum {
                    num: acc.num + alpha * v,
                    den: acc.den + alpha,
                }
            })
        }
    }
}

/// Age, gender (0 female, 1 male) and class averages per retained category.
/// Each feature uses only purchasers for whom it is known; a category whose
/// purchasers all lack a feature gets no value for it.
pub fn average_feature_set(
    table: &CategorySpendTable,
    profiles: &BTreeMap<String, EgoProfile>,
    partition: &ClassPartition,
    weighting: AfsWeighting,
) -> Vec<CategoryFeatures> {
    let n = table.category_count();
    let mut age: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    let mut gender: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    let mut seg: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    let mut purchasers = vec![0usize; n];
    for (user, row) in table.rows() {
        let p = profiles.get(user);
        let a = p.and_then(|p| p.age).map(f64::from);
        let g = p.and_then(|p| p.gender).map(|g| g.code());
        let s = partition.class_of(user).map(|c| c as f64);
        for &(c, r) in row {
            let c = c as usize;
            purchasers[c] += 1;
            if let Some(a) = a {
                age[c].push((a, r));
            }
            if let Some(g) = g {
                gender[c].push((g, r));
            }
            if let Some(s) = s {
                seg[c].push((s, r));
            }
        }
    }
    (0..n)
        .map(|c| CategoryFeatures {
            code: table.categories[c],
            purchasers: purchasers[c],
            age: weighted(&age[c], weighting),
            gender: weighted(&gender[c], weighting),
            seg: weighted(&seg[c], weighting),
        })
        .collect()
}

/// Pools the weighted sums of every category in a community.
pub fn community_feature_sets(
    features: &[CategoryFeatures],
    labels: &[(u32, usize)],
) -> BTreeMap<usize, CategoryFeatures> {
    let by_code: BTreeMap<u32, &CategoryFeatures> = features.iter().map(|f| (f.code, f)).collect();
    let mut out: BTreeMap<usize, CategoryFeatures> = BTreeMap::new();
    for &(code, community) in labels {
        let Some(f) = by_code.get(&code) else {
            continue;
        };
        let e = out.entry(community).or_insert(CategoryFeatures {
            code: community as u32,
            purchasers: 0,
            age: WeightedSum::default(),
            gender: WeightedSum::default(),
            seg: WeightedSum::default(),
        });
        e.purchasers += f.purchasers;
        e.age.add(f.age);
        e.gender.add(f.gender);
        e.seg.add(f.seg);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided p-value from Student's t with `n − 2` degrees of freedom.
    pub p: f64,
    pub n: usize,
}

/// Pearson correlation; `None` for fewer than 3 points or a constant input.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<Correlation> {
    assert_eq!(x.len(), y.len(), "samples differ in length");
    let n = x.len();
    if n < 3 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        2.0 * dist.cdf(-t.abs())
    };
    Some(Correlation { r, p, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelations {
    pub age_seg: Option<Correlation>,
    pub gender_seg: Option<Correlation>,
    pub age_gender: Option<Correlation>,
    /// Categories with all three features.
    pub complete: usize,
}

/// Pearson correlations between the three category features over categories where all are known.
pub fn feature_correlations(features: &[CategoryFeatures]) -> FeatureCorrelations {
    let triples: Vec<[f64; 3]> = features.iter().filter_map(CategoryFeatures::triple).collect();
    let col = |k: usize| -> Vec<f64> { triples.iter().map(|t| t[k]).collect() };
    let (age, gender, seg) = (col(0), col(1), col(2));
    FeatureCorrelations {
        age_seg: pearson(&age, &seg),
        gender_seg: pearson(&gender, &seg),
        age_gender: pearson(&age, &gender),
        complete: triples.len(),
    }
}
