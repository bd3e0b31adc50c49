//! Spending vectors over purchase category groups and the class-level
//! similarity, dispersion and entropy measures built on them.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::directory::CategoryDirectory;
use crate::error::{Error, Result};
use crate::ingest::EgoProfile;
use crate::matrix::ClassMatrix;
use crate::socio::ClassPartition;

/// Fractions of a user's non-cash spend per group, plus their cash share.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpendingVector {
    pub user_id: String,
    /// One entry per non-cash group, normalized over non-cash spend.
    pub values: Vec<f64>,
    /// Cash spend over cash plus non-cash spend.
    pub cash_fraction: f64,
}

impl SpendingVector {
    /// The 17-entry vector `(cf, (1 − cf)·SV)` over the full retained set.
    pub fn with_cash(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.values.len() + 1);
        v.push(self.cash_fraction);
        v.extend(self.values.iter().map(|x| x * (1.0 - self.cash_fraction)));
        v
    }
}

#[derive(Debug, Clone, Default)]
pub struct SpendingVectors {
    /// Users with positive non-cash spend.
    pub vectors: BTreeMap<String, SpendingVector>,
    /// Cash share of every user with positive retained spend.
    pub cash_fraction: BTreeMap<String, f64>,
    /// Users left out of non-cash analyses for having no non-cash spend.
    pub excluded: Vec<String>,
    pub labels: Vec<String>,
}

/// Which part of the retained group set a class measure runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpendingSubset {
    NonCash,
    Cash,
}

pub fn spending_vectors(profiles: &BTreeMap<String, EgoProfile>, directory: &CategoryDirectory) -> SpendingVectors {
    let labels: Vec<String> = directory.non_cash_labels().into_iter().map(String::from).collect();
    let cash_label = directory.pcg_label(directory.cash_pcg()).to_string();
    let mut out = SpendingVectors {
        labels: labels.clone(),
        ..Default::default()
    };
    for p in profiles.values() {
        let raw: Vec<f64> = labels.iter().map(|l| p.pcg(l).as_f64()).collect();
        let non_cash: f64 = raw.iter().sum();
        let cash = p.pcg(&cash_label).as_f64();
        if cash + non_cash > 0.0 {
            out.cash_fraction.insert(p.user_id.clone(), cash / (cash + non_cash));
        }
        if non_cash <= 0.0 {
            log::debug!(
                "user {} has no non-cash spend; excluded from non-cash analyses",
                p.user_id
            );
            out.excluded.push(p.user_id.clone());
            continue;
        }
        out.vectors.insert(
            p.user_id.clone(),
            SpendingVector {
                user_id: p.user_id.clone(),
                values: raw.iter().map(|x| x / non_cash).collect(),
                cash_fraction: cash / (cash + non_cash),
            },
        );
    }
    out
}

/// `r(k, s_j)`: each class's share of the total spend on group `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareTable {
    /// Groups with positive total spend, in directory order.
    pub labels: Vec<String>,
    /// `shares[k][j]` for group `labels[k]` and zero-based class `j`.
    pub shares: Vec<Vec<f64>>,
    pub per_capita: bool,
}

impl ShareTable {
    pub fn share(&self, label: &str, class: usize) -> Option<f64> {
        let k = self.labels.iter().position(|l| l == label)?;
        self.shares[k].get(class - 1).copied()
    }
}

/// Column-normalized class shares over all 17 retained groups. With
/// `per_capita`, class totals are divided by class size before normalizing.
pub fn class_share_distribution(
    profiles: &BTreeMap<String, EgoProfile>,
    partition: &ClassPartition,
    directory: &CategoryDirectory,
    per_capita: bool,
) -> ShareTable {
    let n = partition.n_classes();
    let all_labels: Vec<&str> = directory.active_labels();
    let mut totals = vec![vec![0.0; n]; all_labels.len()];
    for p in profiles.values() {
        let Some(j) = partition.class_idx(&p.user_id) else {
            continue;
        };
        for (k, l) in all_labels.iter().enumerate() {
            totals[k][j] += p.pcg(l).as_f64();
        }
    }
    if per_capita {
        let sizes = partition.sizes();
        for row in totals.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                if sizes[j] > 0 {
                    *v /= sizes[j] as f64;
                }
            }
        }
    }
    let mut table = ShareTable {
        labels: Vec::new(),
        shares: Vec::new(),
        per_capita,
    };
    for (k, row) in totals.into_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if sum <= 0.0 {
            continue;
        }
        table.labels.push(all_labels[k].to_string());
        table.shares.push(row.into_iter().map(|v| v / sum).collect());
    }
    table
}

/// Per-class feature samples for `subset`: the 16-vector or the scalar cash share.
fn class_samples(sv: &SpendingVectors, partition: &ClassPartition, subset: SpendingSubset) -> Vec<Vec<Vec<f64>>> {
    let mut samples: Vec<Vec<Vec<f64>>> = vec![Vec::new(); partition.n_classes()];
    match subset {
        SpendingSubset::NonCash => {
            for (user, v) in &sv.vectors {
                if let Some(j) = partition.class_idx(user) {
                    samples[j].push(v.values.clone());
                }
            }
        }
        SpendingSubset::Cash => {
            for (user, &cf) in &sv.cash_fraction {
                if let Some(j) = partition.class_idx(user) {
                    samples[j].push(vec![cf]);
                }
            }
        }
    }
    samples
}

fn mean_vector(rows: &[Vec<f64>]) -> Vec<f64> {
    let dim = rows[0].len();
    let mut m = vec![0.0; dim];
    for r in rows {
        for (a, b) in m.iter_mut().zip(r) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|a| *a /= rows.len() as f64);
    m
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean feature vector of each class; an empty class is an error naming it.
pub fn class_means(sv: &SpendingVectors, partition: &ClassPartition, subset: SpendingSubset) -> Result<Vec<Vec<f64>>> {
    class_samples(sv, partition, subset)
        .iter()
        .enumerate()
        .map(|(j, rows)| {
            if rows.is_empty() {
                Err(Error::EmptyClass { class: j + 1 })
            } else {
                Ok(mean_vector(rows))
            }
        })
        .collect()
}

/// Pairwise Euclidean distances between class means.
pub fn distance_matrix(label: &str, means: &[Vec<f64>]) -> ClassMatrix {
    let n = means.len();
    let mut m = ClassMatrix::new(label, n);
    for i in 0..n {
        m.set(i, i, Some(0.0));
        for j in i + 1..n {
            m.set_symmetric(i, j, Some(euclidean(&means[i], &means[j])));
        }
    }
    m
}

pub fn class_distance_matrix(
    sv: &SpendingVectors,
    partition: &ClassPartition,
    subset: SpendingSubset,
) -> Result<ClassMatrix> {
    if partition.n_classes() < 2 {
        return Err(Error::InvalidArgument(
            "distance matrix needs at least 2 classes".into(),
        ));
    }
    let means = class_means(sv, partition, subset)?;
    let label = match subset {
        SpendingSubset::NonCash => "d_SV",
        SpendingSubset::Cash => "d_k1",
    };
    Ok(distance_matrix(label, &means))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dispersion {
    /// Mean distance of members to the class mean.
    pub mean: f64,
    /// Standard deviation of those distances.
    pub std: f64,
    pub size: usize,
    /// The class has a single member, so the dispersion is trivially zero.
    pub singleton: bool,
}

pub fn class_dispersion(
    sv: &SpendingVectors,
    partition: &ClassPartition,
    subset: SpendingSubset,
) -> Result<Vec<Dispersion>> {
    class_samples(sv, partition, subset)
        .iter()
        .enumerate()
        .map(|(j, rows)| {
            if rows.is_empty() {
                return Err(Error::EmptyClass { class: j + 1 });
            }
            let mean = mean_vector(rows);
            let d: Vec<f64> = rows.iter().map(|r| euclidean(&mean, r)).collect();
            let mu = d.iter().sum::<f64>() / d.len() as f64;
            let var = d.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / d.len() as f64;
            Ok(Dispersion {
                mean: mu,
                std: var.sqrt(),
                size: rows.len(),
                singleton: rows.len() == 1,
            })
        })
        .collect()
}

/// Shannon entropy with natural log and `0 · ln 0 = 0`.
pub fn entropy(v: &[f64]) -> f64 {
    v.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Entropy of each class mean vector. With `include_cash`, the mean of the
/// 17-entry vectors `(cf, (1 − cf)·SV)` is used instead of the non-cash mean.
pub fn class_entropy(sv: &SpendingVectors, partition: &ClassPartition, include_cash: bool) -> Result<Vec<f64>> {
    let mut samples: Vec<Vec<Vec<f64>>> = vec![Vec::new(); partition.n_classes()];
    for (user, v) in &sv.vectors {
        if let Some(j) = partition.class_idx(user) {
            samples[j].push(if include_cash { v.with_cash() } else { v.values.clone() });
        }
    }
    samples
        .iter()
        .enumerate()
        .map(|(j, rows)| {
            if rows.is_empty() {
                Err(Error::EmptyClass { class: j + 1 })
            } else {
                Ok(entropy(&mean_vector(rows)))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSpendingProfile {
    pub class: usize,
    pub size: usize,
    pub mean_vector: Vec<f64>,
    pub mean_cash_fraction: f64,
    pub dispersion: Dispersion,
    pub cash_dispersion: Dispersion,
    pub entropy: f64,
    pub entropy_with_cash: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpendingReport {
    pub labels: Vec<String>,
    pub classes: Vec<ClassSpendingProfile>,
    pub shares: ShareTable,
    pub d_sv: ClassMatrix,
    pub d_cash: ClassMatrix,
    pub excluded_users: usize,
}

pub fn analyze_spending(
    profiles: &BTreeMap<String, EgoProfile>,
    partition: &ClassPartition,
    directory: &CategoryDirectory,
    per_capita: bool,
) -> Result<SpendingReport> {
    let sv = spending_vectors(profiles, directory);
    let means = class_means(&sv, partition, SpendingSubset::NonCash)?;
    let cash_means = class_means(&sv, partition, SpendingSubset::Cash)?;
    let disp = class_dispersion(&sv, partition, SpendingSubset::NonCash)?;
    let cash_disp = class_dispersion(&sv, partition, SpendingSubset::Cash)?;
    let ent = class_entropy(&sv, partition, false)?;
    let ent_cash = class_entropy(&sv, partition, true)?;
    let classes = (0..partition.n_classes())
        .map(|j| ClassSpendingProfile {
            class: j + 1,
            size: disp[j].size,
            mean_vector: means[j].clone(),
            mean_cash_fraction: cash_means[j][0],
            dispersion: disp[j],
            cash_dispersion: cash_disp[j],
            entropy: ent[j],
            entropy_with_cash: ent_cash[j],
        })
        .collect();
    Ok(SpendingReport {
        labels: sv.labels.clone(),
        classes,
        shares: class_share_distribution(profiles, partition, directory, per_capita),
        d_sv: distance_matrix("d_SV", &means),
        d_cash: distance_matrix("d_k1", &cash_means),
        excluded_users: sv.excluded.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Cents;
    use crate::socio::{partition_classes, AmpTable};

    fn profile(id: &str, spend: &[(&str, i64)]) -> EgoProfile {
        let mut p = EgoProfile {
            user_id: id.into(),
            ..Default::default()
        };
        for &(l, c) in spend {
            p.pcg_spend.insert(l.into(), Cents(c));
        }
        p
    }

    fn set(ps: Vec<EgoProfile>) -> BTreeMap<String, EgoProfile> {
        ps.into_iter().map(|p| (p.user_id.clone(), p)).collect()
    }

    #[test]
    fn single_group_vector() {
        let dir = CategoryDirectory::default();
        let sv = spending_vectors(&set(vec![profile("a", &[("Restaurants", 500)])]), &dir);
        let v = &sv.vectors["a"];
        let k = sv.labels.iter().position(|l| l == "Restaurants").unwrap();
        assert_eq!(v.values[k], 1.0);
        assert_eq!(v.values.iter().sum::<f64>(), 1.0);
        assert_eq!(v.cash_fraction, 0.0);
    }

    #[test]
    fn two_norm_scopes() {
        let dir = CategoryDirectory::default();
        let sv = spending_vectors(
            &set(vec![profile(
                "a",
                &[("Service Providers", 700), ("Airlines", 200), ("Telecom", 100)],
            )]),
            &dir,
        );
        let v = &sv.vectors["a"];
        let air = sv.labels.iter().position(|l| l == "Airlines").unwrap();
        let tel = sv.labels.iter().position(|l| l == "Telecom").unwrap();
        assert!((v.cash_fraction - 0.7).abs() < 1e-15);
        assert!((v.values[air] - 2.0 / 3.0).abs() < 1e-15);
        assert!((v.values[tel] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cash_only_user_is_excluded_from_non_cash() {
        let dir = CategoryDirectory::default();
        let sv = spending_vectors(&set(vec![profile("a", &[("Service Providers", 700)])]), &dir);
        assert!(sv.vectors.is_empty());
        assert_eq!(sv.excluded, vec!["a".to_string()]);
        assert_eq!(sv.cash_fraction["a"], 1.0);
    }

    #[test]
    fn shares_split_30_70() {
        let dir = CategoryDirectory::default();
        let profiles = set(vec![
            profile("a", &[("Airlines", 30)]),
            profile("b", &[("Airlines", 70)]),
        ]);
        let part = partition_classes(&AmpTable::from_values([("a", 1.0), ("b", 1.0)]), 2).unwrap();
        let t = class_share_distribution(&profiles, &part, &dir, false);
        assert_eq!(t.labels, vec!["Airlines".to_string()]);
        assert!((t.share("Airlines", 1).unwrap() - 0.3).abs() < 1e-15);
        assert!((t.share("Airlines", 2).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert!((entropy(&[1.0 / 16.0; 16]) - 16f64.ln()).abs() < 1e-12);
        assert!((entropy(&[0.5, 0.5, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn distance_of_orthogonal_means() {
        let m = distance_matrix("d", &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]);
        assert_eq!(m.get(0, 1), Some(2f64.sqrt()));
        assert_eq!(m.get(0, 2), Some(0.0));
        assert_eq!(m.diagonal(), vec![Some(0.0); 3]);
        assert!(m.is_symmetric());
    }

    #[test]
    fn two_point_dispersion() {
        let dir = CategoryDirectory::default();
        let profiles = set(vec![
            profile("a", &[("Airlines", 10)]),
            profile("b", &[("Telecom", 10)]),
        ]);
        let part = partition_classes(&AmpTable::from_values([("a", 1.0), ("b", 1.0)]), 1).unwrap();
        let sv = spending_vectors(&profiles, &dir);
        let d = class_dispersion(&sv, &part, SpendingSubset::NonCash).unwrap();
        // both points sit at half the √2 separation from their midpoint
        assert!((d[0].mean - 2f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(d[0].std, 0.0);
        assert!(!d[0].singleton);
    }

    #[test]
    fn empty_class_is_named() {
        let dir = CategoryDirectory::default();
        let profiles = set(vec![
            profile("a", &[("Airlines", 10)]),
            profile("b", &[("Service Providers", 10)]),
        ]);
        let part = partition_classes(&AmpTable::from_values([("a", 1.0), ("b", 1.0)]), 2).unwrap();
        let sv = spending_vectors(&profiles, &dir);
        match class_distance_matrix(&sv, &part, SpendingSubset::NonCash) {
            Err(Error::EmptyClass { class }) => assert_eq!(class, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(class_distance_matrix(&sv, &part, SpendingSubset::Cash).is_ok());
    }
}
