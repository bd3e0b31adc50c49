use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Pareto};

use crate::error::{Error, Result};
use crate::seeds::stage_rng;

/// One user id with `(merchant code, amount)` pairs.
pub type SpendRow = (String, Vec<(u32, f64)>);

/// Weighted graph with a planted block label per node.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub labels: Vec<usize>,
}

/// Stochastic block model: `blocks` groups of `block_size` nodes, edges with
/// probability `p_in` (weight `w_in`) inside a block and `p_out` (weight `w_out`) across.
pub fn planted_partition_graph(
    blocks: usize,
    block_size: usize,
    p_in: f64,
    p_out: f64,
    w_in: f64,
    w_out: f64,
    seed: u64,
) -> Result<PlantedGraph> {
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err(Error::InvalidArgument("edge probabilities must lie in [0, 1]".into()));
    }
    let n = blocks * block_size;
    let labels: Vec<usize> = (0..n).map(|i| i / block_size.max(1)).collect();
    let mut rng = stage_rng(seed, "synth.sbm", 0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let same = labels[i] == labels[j];
            if rng.random_bool(if same { p_in } else { p_out }) {
                edges.push((i, j, if same { w_in } else { w_out }));
            }
        }
    }
    Ok(PlantedGraph { n, edges, labels })
}

/// `k` isotropic unit-variance Gaussian clusters of `per_cluster` points in
/// `dim` dimensions, with centres at least `separation` apart.
pub fn planted_clusters(
    k: usize,
    per_cluster: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut rng = stage_rng(seed, "synth.clusters", 0);
    // side long enough that random placement rarely collides
    let side = separation * (2.0 * k as f64).powf(1.0 / dim.max(1) as f64) * 1.5;
    let mut centres: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut attempts = 0;
    while centres.len() < k {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::Infeasible(format!(
                "cannot place {k} centres {separation} apart"
            )));
        }
        let c: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * side).collect();
        let far = centres
            .iter()
            .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= separation);
        if far {
            centres.push(c);
        }
    }
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut points = Vec::with_capacity(k * per_cluster);
    let mut labels = Vec::with_capacity(k * per_cluster);
    for (l, c) in centres.iter().enumerate() {
        for _ in 0..per_cluster {
            points.push(c.iter().map(|x| x + noise.sample(&mut rng)).collect());
            labels.push(l);
        }
    }
    Ok((points, labels))
}

/// `n` draws of a Pareto law with tail exponent `alpha` above `xmin`, by inverse CDF.
pub fn pareto_sample(n: usize, alpha: f64, xmin: f64, seed: u64) -> Result<Vec<f64>> {
    let d = Pareto::new(xmin, alpha).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = stage_rng(seed, "synth.pareto", 0);
    Ok((0..n).map(|_| d.sample(&mut rng)).collect())
}

/// Users whose spend on each code is an independent Gamma draw, so that
/// category purchases carry no mutual correlation.
pub fn independent_category_rows(n_users: usize, codes: &[u32], shape: f64, seed: u64) -> Result<Vec<SpendRow>> {
    let d = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = stage_rng(seed, "synth.independent", 0);
    Ok((0..n_users)
        .map(|u| {
            (
                format!("u{u:06}"),
                codes.iter().map(|&c| (c, d.sample(&mut rng))).collect(),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbm_shape() {
        let g = planted_partition_graph(4, 10, 1.0, 0.0, 3.0, 1.5, 1).unwrap();
        assert_eq!(g.n, 40);
        assert_eq!(g.edges.len(), 4 * 45);
        assert!(g.edges.iter().all(|&(a, b, w)| g.labels[a] == g.labels[b] && w == 3.0));
    }

    #[test]
    fn cluster_centres_are_separated() {
        let (p, l) = planted_clusters(15, 20, 3, 8.0, 4).unwrap();
        assert_eq!(p.len(), 300);
        assert_eq!(l.iter().filter(|&&x| x == 14).count(), 20);
    }

    #[test]
    fn pareto_floor() {
        let v = pareto_sample(1000, 1.5, 2.0, 9).unwrap();
        assert!(v.iter().all(|&x| x >= 2.0));
    }
}
