//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use socioscope::directory::CategoryDirectory;
use socioscope::graph::SocialGraph;
use socioscope::ingest::EgoProfile;
use socioscope::nullmodel::{FeatureKind, NodeFeatures, NullEnsemble};
use socioscope::socio::ClassPartition;
use socioscope::spending::{spending_vectors, SpendingVectors};

/// Gini from the mean absolute difference of all ordered pairs, on sorted input.
pub fn mad_gini(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let total: f64 = sorted.iter().sum();
    // Σ_ij |x_i − x_j| = 2 Σ_i (2i − n − 1) x_(i), 1-based ranks
    let pairs: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum::<f64>()
        * 2.0;
    pairs / (2.0 * n * total)
}

/// Category correlation by the two-pass definition over a dense share matrix.
pub fn brute_rho_matrix(
    codes: &[u32],
    rows: &[(String, Vec<(u32, f64)>)],
    purchasers_only: bool,
) -> Vec<Vec<Option<f64>>> {
    let k = codes.len();
    let mut dense: Vec<Vec<f64>> = Vec::new();
    for (_, spend) in rows {
        let mut v = vec![0.0; k];
        for &(c, a) in spend {
            if let Some(i) = codes.iter().position(|&x| x == c) {
                v[i] += a;
            }
        }
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            dense.push(v.into_iter().map(|x| x / total).collect());
        }
    }
    let users = dense.len() as f64;
    let mean: Vec<f64> = (0..k)
        .map(|c| {
            let s: f64 = dense.iter().map(|v| v[c]).sum();
            let n = if purchasers_only {
                dense.iter().filter(|v| v[c] > 0.0).count() as f64
            } else {
                users
            };
            if n > 0.0 {
                s / n
            } else {
                0.0
            }
        })
        .collect();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if mean[i] > 0.0 && mean[j] > 0.0 {
                        Some(dense.iter().map(|v| (v[i] / mean[i]) * (v[j] / mean[j])).sum::<f64>() / users)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect()
}

/// Counts members that keep every node degree and stay simple, and returns
/// the mean fraction of original edges each member no longer contains.
pub fn ensemble_is_valid(g: &SocialGraph, ens: &NullEnsemble) -> (usize, f64) {
    let degrees = g.degrees();
    let original: HashSet<(u32, u32)> = g.edges().iter().copied().collect();
    let mut valid = 0;
    let mut turnover = 0.0;
    for m in ens.members() {
        let mut deg = vec![0usize; g.node_count()];
        let mut seen = HashSet::with_capacity(m.len());
        let mut simple = true;
        for &(a, b) in m {
            simple &= a != b && seen.insert((a.min(b), a.max(b)));
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        if simple && deg == degrees && m.len() == g.edge_count() {
            valid += 1;
        }
        turnover += seen.iter().filter(|e| !original.contains(e)).count() as f64 / m.len().max(1) as f64;
    }
    (valid, turnover / ens.len().max(1) as f64)
}

/// Non-cash spending vectors as per-component node features.
pub fn sv_features(
    g: &SocialGraph,
    partition: &ClassPartition,
    profiles: &BTreeMap<String, EgoProfile>,
    dir: &CategoryDirectory,
) -> NodeFeatures {
    let sv = spending_vectors(profiles, dir);
    NodeFeatures::from_lookup(g, partition, sv.labels.len(), FeatureKind::PerComponentAbs, |l| {
        sv.vectors.get(l).map(|v| v.values.clone())
    })
}

/// Per-category node values over all groups with cash first; cash-only
/// users put their whole share on cash.
pub fn with_cash_values(
    g: &SocialGraph,
    sv: &SpendingVectors,
    dir: &CategoryDirectory,
) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let mut labels = vec![dir.pcg_label(dir.cash_pcg()).to_string()];
    labels.extend(sv.labels.iter().cloned());
    let per_node: Vec<Option<Vec<f64>>> = g
        .labels()
        .iter()
        .map(|l| match (sv.vectors.get(l), sv.cash_fraction.get(l)) {
            (Some(v), _) => Some(v.with_cash()),
            (None, Some(_)) => {
                let mut v = vec![0.0; labels.len()];
                v[0] = 1.0;
                Some(v)
            }
            _ => None,
        })
        .collect();
    let values = (0..labels.len())
        .map(|k| per_node.iter().map(|v| v.as_ref().map(|v| v[k])).collect())
        .collect();
    (labels, values)
}
