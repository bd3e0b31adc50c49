use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use super::table::CorrelationMatrix;
use crate::seeds::stage_rng;

/// Thresholded category graph; node `i` is category `nodes[i]`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CategoryGraph {
    pub nodes: Vec<u32>,
    /// `(i, j, ρ)` with `i < j`, indices into `nodes`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl CategoryGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// Keeps pairs with `ρ ≥ rho_min` bought together by at least `support_min`
/// users; categories left without an edge are dropped.
pub fn threshold_graph(matrix: &CorrelationMatrix, rho_min: f64, support_min: u64) -> CategoryGraph {
    let n = matrix.size();
    let mut raw = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if let Some(r) = matrix.get(i, j) {
                if r >= rho_min && matrix.support(i, j) >= support_min {
                    raw.push((i, j, r));
                }
            }
        }
    }
    let mut keep: Vec<usize> = raw.iter().flat_map(|&(i, j, _)| [i, j]).collect();
    keep.sort_unstable();
    keep.dedup();
    let remap: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    CategoryGraph {
        nodes: keep.iter().map(|&i| matrix.categories[i]).collect(),
        edges: raw.into_iter().map(|(i, j, r)| (remap[&i], remap[&j], r)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Communities {
    /// Community per node, numbered `0..count` in order of each community's lowest node.
    pub labels: Vec<usize>,
    pub count: usize,
    pub modularity: f64,
}

/// Weighted undirected graph with self-loop weights kept apart.
#[derive(Debug, Clone)]
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    /// `A_ii`, counting an internal edge weight twice.
    self_w: Vec<f64>,
}

impl Level {
    fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        let mut self_w = vec![0.0; n];
        for &(a, b, w) in edges {
            if a == b {
                self_w[a] += 2.0 * w;
            } else {
                *maps[a].entry(b).or_default() += w;
                *maps[b].entry(a).or_default() += w;
            }
        }
        Level {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_w,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn strength(&self, i: usize) -> f64 {
        self.self_w[i] + self.adj[i].iter().map(|&(_, w)| w).sum::<f64>()
    }
}

const GAIN_EPS: f64 = 1e-12;

/// Local moving over nodes in index order until no move improves modularity.
/// Ties between equally good target communities are broken at random.
fn local_moves<R: Rng>(level: &Level, two_m: f64, rng: &mut R) -> (Vec<usize>, bool) {
    let n = level.len();
    let k: Vec<f64> = (0..n).map(|i| level.strength(i)).collect();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot = k.clone();
    let mut improved = false;
    let mut links = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    loop {
        let mut moved = false;
        for i in 0..n {
            let own = comm[i];
            for &(j, w) in &level.adj[i] {
                let c = comm[j];
                if links[c] == 0.0 {
                    touched.push(c);
                }
                links[c] += w;
            }
            tot[own] -= k[i];
            let gain = |c: usize, l: f64| l - tot[c] * k[i] / two_m;
            let stay = gain(own, links[own]);
            let mut best = stay;
            let mut ties: Vec<usize> = vec![own];
            for &c in &touched {
                if c == own {
                    continue;
                }
                let g = gain(c, links[c]);
                if g > best + GAIN_EPS {
                    best = g;
                    ties.clear();
                    ties.push(c);
                } else if (g - best).abs() <= GAIN_EPS && best > stay + GAIN_EPS {
                    ties.push(c);
                }
            }
            let target = if ties.len() > 1 {
                ties[rng.random_range(0..ties.len())]
            } else {
                ties[0]
            };
            tot[target] += k[i];
            if target != own {
                comm[i] = target;
                moved = true;
                improved = true;
            }
            for &c in &touched {
                links[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (comm, improved)
}

fn renumber(labels: &mut [usize]) -> usize {
    let mut map = BTreeMap::new();
    for l in labels.iter_mut() {
        let next = map.len();
        *l = *map.entry(*l).or_insert(next);
    }
    map.len()
}

fn aggregate(level: &Level, comm: &[usize], count: usize) -> Level {
    let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
    let mut self_w = vec![0.0; count];
    for i in 0..level.len() {
        let ci = comm[i];
        self_w[ci] += level.self_w[i];
        for &(j, w) in &level.adj[i] {
            let cj = comm[j];
            if ci == cj {
                self_w[ci] += w;
            } else {
                *maps[ci].entry(cj).or_default() += w;
            }
        }
    }
    Level {
        adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
        self_w,
    }
}

/// Weighted modularity of a node labelling.
pub fn modularity(edges: &[(usize, usize, f64)], labels: &[usize]) -> f64 {
    let two_m: f64 = edges.iter().map(|&(_, _, w)| 2.0 * w).sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut inside = vec![0.0; count];
    let mut tot = vec![0.0; count];
    for &(a, b, w) in edges {
        tot[labels[a]] += w;
        tot[labels[b]] += w;
        if labels[a] == labels[b] {
            inside[labels[a]] += 2.0 * w;
        }
    }
    (0..count).map(|c| inside[c] / two_m - (tot[c] / two_m).powi(2)).sum()
}

/// Multi-level Louvain modularity optimization on a weighted graph with `n`
/// nodes. Nodes are visited in index order; `seed` only breaks ties.
pub fn louvain(n: usize, edges: &[(usize, usize, f64)], seed: u64) -> Communities {
    if n == 0 {
        return Communities {
            labels: Vec::new(),
            count: 0,
            modularity: 0.0,
        };
    }
    let mut rng = stage_rng(seed, "louvain", 0);
    let mut level = Level::from_edges(n, edges);
    let two_m: f64 = (0..n).map(|i| level.strength(i)).sum();
    let mut labels: Vec<usize> = (0..n).collect();
    if two_m > 0.0 {
        loop {
            let (mut comm, improved) = local_moves(&level, two_m, &mut rng);
            if !improved {
                break;
            }
            let count = renumber(&mut comm);
            for l in labels.iter_mut() {
                *l = comm[*l];
            }
            if count == level.len() {
                break;
            }
            level = aggregate(&level, &comm, count);
        }
    }
    let count = renumber(&mut labels);
    Communities {
        modularity: modularity(edges, &labels),
        labels,
        count,
    }
}

/// Normalized mutual information, `2 I(a; b) / (H(a) + H(b))`; 1 when both labelings are trivial.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len() as f64;
    if a.is_empty() {
        return 1.0;
    }
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pa: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *pa.entry(x).or_default() += 1.0;
        *pb.entry(y).or_default() += 1.0;
    }
    let h = |m: &BTreeMap<usize, f64>| -> f64 { m.values().map(|&c| -(c / n) * (c / n).ln()).sum() };
    let (ha, hb) = (h(&pa), h(&pb));
    if ha + hb == 0.0 {
        return 1.0;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| (c / n) * ((c / n) / ((pa[&x] / n) * (pb[&y] / n))).ln())
        .sum();
    2.0 * mi / (ha + hb)
}
