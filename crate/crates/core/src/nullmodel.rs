//! Degree-preserving rewiring ensembles and the network-versus-null ratio
//! measures computed against them.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::matrix::ClassMatrix;
use crate::seeds::stage_rng;
use crate::socio::ClassPartition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewirePlan {
    /// Swap attempts per member, as a multiple of the edge count.
    pub swaps_factor: f64,
    pub ensemble_size: usize,
    pub seed: u64,
}

impl Default for RewirePlan {
    fn default() -> Self {
        RewirePlan {
            swaps_factor: 5.0,
            ensemble_size: 100,
            seed: 42,
        }
    }
}

impl RewirePlan {
    pub fn swap_attempts(&self, edges: usize) -> usize {
        ((self.swaps_factor * edges as f64).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.swaps_factor.is_nan() || self.swaps_factor <= 0.0 {
            return Err(Error::InvalidArgument("swaps factor must be positive".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::InvalidArgument("ensemble size must be at least 1".into()));
        }
        Ok(())
    }
}

fn edge_key(a: u32, b: u32) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

fn ordered(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Runs `attempts` double-edge swap proposals on a simple edge list. Each
/// proposal picks two edges `(a,b)`, `(c,d)` and one of the two rewirings
/// `(a,d),(c,b)` or `(a,c),(b,d)`; proposals creating a self-loop or a
/// duplicate edge are rejected but still count as attempts.
pub fn rewire_edges<R: Rng + ?Sized>(edges: &[(u32, u32)], attempts: usize, rng: &mut R) -> Vec<(u32, u32)> {
    let mut e = edges.to_vec();
    let m = e.len();
    if m < 2 {
        log::warn!("graph has {m} edges; rewiring leaves it unchanged");
        return e;
    }
    let mut present: FxHashSet<u64> = e.iter().map(|&(a, b)| edge_key(a, b)).collect();
    for _ in 0..attempts {
        let i = rng.random_range(0..m);
        let j = rng.random_range(0..m);
        let flip: bool = rng.random();
        if i == j {
            continue;
        }
        let (a, b) = e[i];
        let (c, d) = e[j];
        let (x1, y1, x2, y2) = if flip { (a, d, c, b) } else { (a, c, b, d) };
        if x1 == y1 || x2 == y2 {
            continue;
        }
        let (k1, k2) = (edge_key(x1, y1), edge_key(x2, y2));
        if k1 == k2 || present.contains(&k1) || present.contains(&k2) {
            continue;
        }
        present.remove(&edge_key(a, b));
        present.remove(&edge_key(c, d));
        present.insert(k1);
        present.insert(k2);
        e[i] = ordered(x1, y1);
        e[j] = ordered(x2, y2);
    }
    e
}

/// One rewired copy of `g`, seeded from `plan.seed`.
pub fn rewire(g: &SocialGraph, plan: &RewirePlan) -> SocialGraph {
    let mut rng = stage_rng(plan.seed, "rewire", 0);
    let edges = rewire_edges(g.edges(), plan.swap_attempts(g.edge_count()), &mut rng);
    g.with_edges(edges)
}

/// Independently rewired edge lists sharing the node set of the source graph.
#[derive(Debug, Clone)]
pub struct NullEnsemble {
    pub plan: RewirePlan,
    members: Vec<Vec<(u32, u32)>>,
}

impl NullEnsemble {
    /// Member `m` is rewired from the source with its own stream derived from
    /// `(plan.seed, m)`, so results do not depend on the thread count.
    pub fn generate(g: &SocialGraph, plan: &RewirePlan) -> Result<Self> {
        plan.validate()?;
        let attempts = plan.swap_attempts(g.edge_count());
        let members: Vec<Vec<(u32, u32)>> = (0..plan.ensemble_size)
            .into_par_iter()
            .map(|m| {
                let mut rng = stage_rng(plan.seed, "nullmodel", m as u64);
                let edges = rewire_edges(g.edges(), attempts, &mut rng);
                if cfg!(debug_assertions) {
                    check_degree_preserving(g, &edges);
                }
                edges
            })
            .collect();
        Ok(NullEnsemble { plan: *plan, members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, m: usize) -> &[(u32, u32)] {
        &self.members[m]
    }

    pub fn members(&self) -> impl Iterator<Item = &[(u32, u32)]> {
        self.members.iter().map(Vec::as_slice)
    }
}

fn check_degree_preserving(g: &SocialGraph, edges: &[(u32, u32)]) {
    let mut deg = vec![0usize; g.node_count()];
    let mut seen = FxHashSet::default();
    for &(a, b) in edges {
        assert_ne!(a, b, "rewiring produced a self-loop");
        assert!(seen.insert(edge_key(a, b)), "rewiring produced a multi-edge");
        deg[a as usize] += 1;
        deg[b as usize] += 1;
    }
    assert_eq!(deg, g.degrees(), "rewiring changed the degree sequence");
}

/// How an edge compares the feature vectors of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeatureKind {
    /// One absolute difference per component, each averaged separately.
    PerComponentAbs,
    /// A single Euclidean distance between the vectors.
    Euclidean,
}

/// Class and feature vector of every graph node; nodes without either are skipped.
#[derive(Debug, Clone)]
pub struct NodeFeatures {
    pub n_classes: usize,
    pub dim: usize,
    pub kind: FeatureKind,
    class: Vec<Option<u16>>,
    data: Vec<f64>,
}

impl NodeFeatures {
    pub fn new(node_count: usize, n_classes: usize, dim: usize, kind: FeatureKind) -> Self {
        NodeFeatures {
            n_classes,
            dim,
            kind,
            class: vec![None; node_count],
            data: vec![0.0; node_count * dim],
        }
    }

    /// `class` is zero-based.
    pub fn set(&mut self, node: u32, class: usize, values: &[f64]) {
        assert_eq!(values.len(), self.dim, "feature dimension mismatch");
        assert!(class < self.n_classes, "class index out of range");
        let n = node as usize;
        self.class[n] = Some(class as u16);
        self.data[n * self.dim..(n + 1) * self.dim].copy_from_slice(values);
    }

    /// Fills features for every node whose label has a class and a vector.
    pub fn from_lookup<F>(g: &SocialGraph, partition: &ClassPartition, dim: usize, kind: FeatureKind, lookup: F) -> Self
    where
        F: Fn(&str) -> Option<Vec<f64>>,
    {
        let mut f = NodeFeatures::new(g.node_count(), partition.n_classes(), dim, kind);
        for (i, label) in g.labels().iter().enumerate() {
            if let (Some(c), Some(v)) = (partition.class_idx(label), lookup(label)) {
                f.set(i as u32, c, &v);
            }
        }
        f
    }

    pub fn present(&self, node: u32) -> bool {
        self.class[node as usize].is_some()
    }

    pub fn present_count(&self) -> usize {
        self.class.iter().filter(|c| c.is_some()).count()
    }

    fn components(&self) -> usize {
        match self.kind {
            FeatureKind::PerComponentAbs => self.dim,
            FeatureKind::Euclidean => 1,
        }
    }

    fn vector(&self, node: u32) -> &[f64] {
        let n = node as usize;
        &self.data[n * self.dim..(n + 1) * self.dim]
    }
}

/// Sums of edge-level differences per unordered class pair and component.
struct PairAccumulator {
    n: usize,
    comps: usize,
    sums: Vec<f64>,
    counts: Vec<u64>,
    skipped: usize,
}

impl PairAccumulator {
    fn collect(edges: &[(u32, u32)], f: &NodeFeatures) -> Self {
        let n = f.n_classes;
        let comps = f.components();
        let mut acc = PairAccumulator {
            n,
            comps,
            sums: vec![0.0; n * n * comps],
            counts: vec![0; n * n],
            skipped: 0,
        };
        for &(u, v) in edges {
            let (Some(cu), Some(cv)) = (f.class[u as usize], f.class[v as usize]) else {
                acc.skipped += 1;
                continue;
            };
            let (i, j) = if cu <= cv {
                (cu as usize, cv as usize)
            } else {
                (cv as usize, cu as usize)
            };
            let pair = i * n + j;
            acc.counts[pair] += 1;
            let (xu, xv) = (f.vector(u), f.vector(v));
            let slot = &mut acc.sums[pair * comps..(pair + 1) * comps];
            match f.kind {
                FeatureKind::PerComponentAbs => {
                    for k in 0..comps {
                        slot[k] += (xu[k] - xv[k]).abs();
                    }
                }
                FeatureKind::Euclidean => {
                    slot[0] += xu.iter().zip(xv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                }
            }
        }
        acc
    }

    fn pair(&self, i: usize, j: usize) -> usize {
        if i <= j {
            i * self.n + j
        } else {
            j * self.n + i
        }
    }

    fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[self.pair(i, j)]
    }

    fn mean(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let p = self.pair(i, j);
        (self.counts[p] > 0).then(|| self.sums[p * self.comps + k] / self.counts[p] as f64)
    }
}

/// Mean per-edge differences between classes, one matrix per component.
#[derive(Debug, Clone, Serialize)]
pub struct EdgeSimilarity {
    pub components: Vec<ClassMatrix>,
    /// Number of edges between each class pair.
    pub edge_counts: Vec<Vec<u64>>,
    /// Edges with an endpoint lacking a class or vector.
    pub skipped_edges: usize,
}

fn similarity_from(acc: &PairAccumulator, label: &str) -> EdgeSimilarity {
    let n = acc.n;
    let mut components = Vec::with_capacity(acc.comps);
    for k in 0..acc.comps {
        let mut m = ClassMatrix::new(format!("{label}[{k}]"), n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, acc.mean(i, j, k));
            }
        }
        components.push(m);
    }
    let edge_counts = (0..n).map(|i| (0..n).map(|j| acc.count(i, j)).collect()).collect();
    EdgeSimilarity {
        components,
        edge_counts,
        skipped_edges: acc.skipped,
    }
}

/// Per-component mean absolute (or Euclidean) difference across the edges joining each class pair.
pub fn edge_similarity(g: &SocialGraph, features: &NodeFeatures) -> EdgeSimilarity {
    similarity_from(&PairAccumulator::collect(g.edges(), features), "d")
}

/// Observed-over-null ratio per class pair, with its spread across the ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct RatioMatrix {
    pub ratio: ClassMatrix,
    /// Standard deviation of the member-level null ratios.
    pub sigma: ClassMatrix,
    pub observed: EdgeSimilarity,
    /// `(i, j, k)` cells dropped because the null mean was zero or missing.
    pub skipped_components: usize,
}

/// Ratio of the observed per-pair differences to their ensemble mean, averaged
/// over components. Each member contributes its own per-pair mean with equal
/// weight; σ is the standard deviation over members of the member's own
/// ratio against that ensemble mean.
pub fn ratio_matrix(g: &SocialGraph, ensemble: &NullEnsemble, features: &NodeFeatures, label: &str) -> RatioMatrix {
    let n = features.n_classes;
    let comps = features.components();
    let observed = PairAccumulator::collect(g.edges(), features);
    let members: Vec<PairAccumulator> = ensemble
        .members
        .par_iter()
        .map(|edges| PairAccumulator::collect(edges, features))
        .collect();

    // ensemble mean per (pair, component), over members where the pair has edges
    let mut null_mean = vec![None; n * n * comps];
    for i in 0..n {
        for j in i..n {
            for k in 0..comps {
                let (s, c) = members
                    .iter()
                    .filter_map(|m| m.mean(i, j, k))
                    .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                if c > 0 {
                    null_mean[(i * n + j) * comps + k] = Some(s / c as f64);
                }
            }
        }
    }

    let mut ratio = ClassMatrix::new(label, n);
    let mut sigma = ClassMatrix::new(format!("{label}_sigma"), n);
    let mut skipped = 0;
    for i in 0..n {
        for j in i..n {
            let usable: Vec<(usize, f64)> = (0..comps)
                .filter_map(|k| match null_mean[(i * n + j) * comps + k] {
                    Some(mu) if mu > 0.0 => Some((k, mu)),
                    _ => {
                        skipped += 1;
                        None
                    }
                })
                .collect();
            if usable.is_empty() {
                continue;
            }
            let obs: Vec<f64> = usable
                .iter()
                .filter_map(|&(k, mu)| observed.mean(i, j, k).map(|d| d / mu))
                .collect();
            if !obs.is_empty() {
                ratio.set_symmetric(i, j, Some(obs.iter().sum::<f64>() / obs.len() as f64));
            }
            let member_ratios: Vec<f64> = members
                .iter()
                .filter_map(|m| {
                    let r: Vec<f64> = usable
                        .iter()
                        .filter_map(|&(k, mu)| m.mean(i, j, k).map(|d| d / mu))
                        .collect();
                    (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
                })
                .collect();
            if !member_ratios.is_empty() {
                let mu = member_ratios.iter().sum::<f64>() / member_ratios.len() as f64;
                let var = member_ratios.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / member_ratios.len() as f64;
                sigma.set_symmetric(i, j, Some(var.sqrt()));
            }
        }
    }
    if skipped > 0 {
        log::debug!("{label}: {skipped} class-pair components had no usable null mean");
    }
    RatioMatrix {
        ratio,
        sigma,
        observed: similarity_from(&observed, "d"),
        skipped_components: skipped,
    }
}

/// Spending-vector ratio `L`: per-component absolute differences.
pub fn l_matrix(g: &SocialGraph, ensemble: &NullEnsemble, features: &NodeFeatures) -> Result<RatioMatrix> {
    if features.kind != FeatureKind::PerComponentAbs {
        return Err(Error::InvalidArgument("L needs per-component features".into()));
    }
    Ok(ratio_matrix(g, ensemble, features, "L"))
}

/// Weekly-activity ratio `Λ`: Euclidean distance between weekly vectors.
pub fn lambda_matrix(g: &SocialGraph, ensemble: &NullEnsemble, features: &NodeFeatures) -> Result<RatioMatrix> {
    if features.kind != FeatureKind::Euclidean {
        return Err(Error::InvalidArgument("Lambda needs Euclidean features".into()));
    }
    Ok(ratio_matrix(g, ensemble, features, "Lambda"))
}

/// ρ(c) over an edge list for per-node values `r`. Both endpoint slots are
/// normalized by the mean of `r` over all edge endpoints. `None` when fewer
/// than two connected nodes have positive `r`.
pub fn assortativity_on_edges(edges: &[(u32, u32)], r: &[Option<f64>]) -> Option<f64> {
    let mut prod = 0.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut spenders = FxHashSet::default();
    for &(u, v) in edges {
        let (Some(ru), Some(rv)) = (r[u as usize], r[v as usize]) else {
            continue;
        };
        prod += ru * rv;
        sum += ru + rv;
        count += 1;
        if spenders.len() < 2 {
            if ru > 0.0 {
                spenders.insert(u);
            }
            if rv > 0.0 {
                spenders.insert(v);
            }
        }
    }
    if count == 0 || spenders.len() < 2 {
        return None;
    }
    let mean = sum / (2 * count) as f64;
    Some(prod / count as f64 / (mean * mean))
}

pub fn edge_assortativity(g: &SocialGraph, r: &[Option<f64>]) -> Option<f64> {
    assortativity_on_edges(g.edges(), r)
}

/// Mean ρ(c) over the ensemble members where it is defined.
pub fn null_assortativity(ensemble: &NullEnsemble, r: &[Option<f64>]) -> Option<f64> {
    let vals: Vec<f64> = ensemble
        .members
        .par_iter()
        .filter_map(|e| assortativity_on_edges(e, r))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct RemovalCurve {
    pub fraction: f64,
    pub kept_edges: usize,
    /// Mean ρ over repeats, per category in input order.
    pub rho: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessReport {
    /// Full-graph ρ per category in input order.
    pub full: Vec<Option<f64>>,
    /// Category indices sorted ascending by full-graph ρ; undefined last.
    pub order: Vec<usize>,
    pub curves: Vec<RemovalCurve>,
    /// Fractions dropped for leaving fewer than the minimum number of edges.
    pub skipped_fractions: Vec<f64>,
}

pub const MIN_REMAINING_EDGES: usize = 100;

/// Recomputes ρ for each category after removing each fraction of edges at
/// random, averaging over `repeats` removals.
pub fn robustness_by_removal(
    g: &SocialGraph,
    values: &[Vec<Option<f64>>],
    fractions: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<RobustnessReport> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let full: Vec<Option<f64>> = values.iter().map(|r| edge_assortativity(g, r)).collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| match (full[a], full[b]) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    let m = g.edge_count();
    let mut curves = Vec::new();
    let mut skipped_fractions = Vec::new();
    for (fi, &fraction) in fractions.iter().enumerate() {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "removal fraction {fraction} not in [0, 1)"
            )));
        }
        let kept = ((1.0 - fraction) * m as f64).round() as usize;
        if kept < MIN_REMAINING_EDGES {
            log::warn!(
                "removing {:.0}% of edges leaves {kept} edges; skipped",
                fraction * 100.0
            );
            skipped_fractions.push(fraction);
            continue;
        }
        if kept == m {
            curves.push(RemovalCurve {
                fraction,
                kept_edges: kept,
                rho: full.clone(),
            });
            continue;
        }
        let samples: Vec<Vec<Option<f64>>> = (0..repeats)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stage_rng(seed, "removal", (fi * repeats + rep) as u64);
                let edges: Vec<(u32, u32)> = sample(&mut rng, m, kept).iter().map(|i| g.edges()[i]).collect();
                values.iter().map(|r| assortativity_on_edges(&edges, r)).collect()
            })
            .collect();
        let rho = (0..values.len())
            .map(|c| {
                let v: Vec<f64> = samples.iter().filter_map(|s| s[c]).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        curves.push(RemovalCurve {
            fraction,
            kept_edges: kept,
            rho,
        });
    }
    Ok(RobustnessReport {
        full,
        order,
        curves,
        skipped_fractions,
    })
}
