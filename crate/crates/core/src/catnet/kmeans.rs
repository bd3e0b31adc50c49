use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seeds::stage_rng;

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    /// Inertia after each assignment step; non-increasing.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(p, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[idx].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// One Lloyd run from a k-means++ start. An empty cluster is reseeded with
/// the point farthest from its centroid.
fn lloyd<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> KMeansFit {
    let dim = points[0].len();
    let mut centroids = plus_plus_init(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            inertia += d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centroids[labels[a]])
                            .total_cmp(&sq_dist(&points[b], &centroids[labels[b]]))
                    })
                    .expect("points are non-empty");
                centroids[c] = points[far].clone();
                labels[far] = c;
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    KMeansFit {
        labels,
        centroids,
        inertia,
        history,
    }
}

/// Best of `restarts` k-means++ / Lloyd runs by inertia.
pub fn kmeans<R: Rng>(points: &[Vec<f64>], k: usize, restarts: usize, rng: &mut R) -> Result<KMeansFit> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidArgument(format!("k = {k} for {} points", points.len())));
    }
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let fit = lloyd(points, k, rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Davies–Bouldin index (lower is better); `None` when undefined.
pub fn davies_bouldin(points: &[Vec<f64>], fit: &KMeansFit) -> Option<f64> {
    let k = fit.centroids.len();
    if k < 2 {
        return None;
    }
    let mut scatter = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(&fit.labels) {
        scatter[c] += sq_dist(p, &fit.centroids[c]).sqrt();
        counts[c] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            scatter[c] /= counts[c] as f64;
        }
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..k {
            if i == j {
                continue;
            }
            let sep = sq_dist(&fit.centroids[i], &fit.centroids[j]).sqrt();
            if sep == 0.0 {
                return None;
            }
            worst = worst.max((scatter[i] + scatter[j]) / sep);
        }
        total += worst;
    }
    Some(total / k as f64)
}

/// Calinski–Harabasz variance ratio (higher is better); `None` when undefined.
pub fn calinski_harabasz(points: &[Vec<f64>], fit: &KMeansFit) -> Option<f64> {
    let n = points.len();
    let k = fit.centroids.len();
    if k < 2 || n <= k {
        return None;
    }
    let dim = points[0].len();
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / n as f64;
        }
    }
    let mut counts = vec![0usize; k];
    for &c in &fit.labels {
        counts[c] += 1;
    }
    let between: f64 = (0..k)
        .map(|c| counts[c] as f64 * sq_dist(&fit.centroids[c], &mean))
        .sum();
    let within = fit.inertia;
    if within <= 0.0 {
        return None;
    }
    Some((between / (k - 1) as f64) / (within / (n - k) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KCriteria {
    pub k: usize,
    pub inertia: f64,
    pub davies_bouldin: Option<f64>,
    pub calinski_harabasz: Option<f64>,
    pub gap: f64,
    /// Simulation error `s_k` of the gap.
    pub gap_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KMeansOptions {
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub gap_references: usize,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            k_min: 2,
            k_max: 25,
            restarts: 10,
            gap_references: 20,
            standardize: true,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KSelection {
    pub table: Vec<KCriteria>,
    pub best_davies_bouldin: Option<usize>,
    pub best_calinski_harabasz: Option<usize>,
    pub best_gap: Option<usize>,
    /// Majority choice of the three criteria; Davies–Bouldin breaks a three-way split.
    pub chosen_k: Option<usize>,
    pub labels: Vec<usize>,
}

/// Z-scores each column; constant columns become zero.
pub fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if points.is_empty() {
        return Vec::new();
    }
    let n = points.len() as f64;
    let dim = points[0].len();
    let mut out = points.to_vec();
    for d in 0..dim {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        let sd = (points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for p in out.iter_mut() {
            p[d] = if sd > 0.0 { (p[d] - mean) / sd } else { 0.0 };
        }
    }
    out
}

fn reference_sample(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64], n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            lo.iter()
                .zip(hi)
                .map(|(&a, &b)| if b > a { rng.random_range(a..b) } else { a })
                .collect()
        })
        .collect()
}

/// Runs k-means for every `k` in range and scores each with Davies–Bouldin,
/// Calinski–Harabasz and the gap statistic against uniform references drawn
/// from the bounding box. Values of `k` exceeding the point count are skipped.
pub fn kmeans_with_selection(points: &[Vec<f64>], opts: &KMeansOptions) -> Result<KSelection> {
    if points.is_empty() {
        return Err(Error::InsufficientData("no points to cluster".into()));
    }
    if opts.k_min == 0 || opts.k_min > opts.k_max {
        return Err(Error::InvalidArgument(format!(
            "bad k range {}..={}",
            opts.k_min, opts.k_max
        )));
    }
    let data = if opts.standardize {
        standardize(points)
    } else {
        points.to_vec()
    };
    let dim = data[0].len();
    let lo: Vec<f64> = (0..dim)
        .map(|d| data.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..dim)
        .map(|d| data.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let ks: Vec<usize> = (opts.k_min..=opts.k_max.min(data.len())).collect();

    let results: Vec<(KCriteria, KMeansFit)> = ks
        .par_iter()
        .map(|&k| {
            let mut rng = stage_rng(opts.seed, "kmeans", k as u64);
            let fit = kmeans(&data, k, opts.restarts, &mut rng).expect("k within range");
            let log_w = fit.inertia.max(f64::MIN_POSITIVE).ln();
            let mut ref_rng = stage_rng(opts.seed, "gap", k as u64);
            let ref_logs: Vec<f64> = (0..opts.gap_references)
                .map(|_| {
                    let sample = reference_sample(&mut ref_rng, &lo, &hi, data.len());
                    let f = kmeans(&sample, k, opts.restarts.clamp(1, 3), &mut ref_rng).expect("k within range");
                    f.inertia.max(f64::MIN_POSITIVE).ln()
                })
                .collect();
            let b = ref_logs.len().max(1) as f64;
            let mean_ref = ref_logs.iter().sum::<f64>() / b;
            let sd = (ref_logs.iter().map(|x| (x - mean_ref).powi(2)).sum::<f64>() / b).sqrt();
            let crit = KCriteria {
                k,
                inertia: fit.inertia,
                davies_bouldin: davies_bouldin(&data, &fit),
                calinski_harabasz: calinski_harabasz(&data, &fit),
                gap: mean_ref - log_w,
                gap_sd: sd * (1.0 + 1.0 / b).sqrt(),
            };
            (crit, fit)
        })
        .collect();

    let table: Vec<KCriteria> = results.iter().map(|(c, _)| *c).collect();
    let best_db = table
        .iter()
        .filter_map(|c| c.davies_bouldin.map(|v| (c.k, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|x| x.0);
    let best_ch = table
        .iter()
        .filter_map(|c| c.calinski_harabasz.map(|v| (c.k, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|x| x.0);
    // smallest k with Gap(k) ≥ Gap(k+1) − s_{k+1}
    let best_gap = table
        .windows(2)
        .find(|w| w[0].gap >= w[1].gap - w[1].gap_sd)
        .map(|w| w[0].k)
        .or_else(|| table.last().map(|c| c.k));

    let votes = [best_db, best_ch, best_gap];
    let chosen_k = votes
        .iter()
        .flatten()
        .find(|&&k| votes.iter().flatten().filter(|&&v| v == k).count() >= 2)
        .copied()
        .or(best_db)
        .or(best_ch)
        .or(best_gap);
    let labels = chosen_k
        .and_then(|k| results.iter().find(|(c, _)| c.k == k))
        .map(|(_, f)| f.labels.clone())
        .unwrap_or_default();
    Ok(KSelection {
        table,
        best_davies_bouldin: best_db,
        best_calinski_harabasz: best_ch,
        best_gap,
        chosen_k,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catnet::nmi;

    fn triplets() -> Vec<Vec<f64>> {
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let offsets = [[0.0, 0.0], [0.3, 0.1], [-0.2, 0.25]];
        centers
            .iter()
            .flat_map(|c| offsets.iter().map(move |o| vec![c[0] + o[0], c[1] + o[1]]))
            .collect()
    }

    #[test]
    fn separable_triplets_are_recovered() {
        let pts = triplets();
        let opts = KMeansOptions {
            k_min: 2,
            k_max: 5,
            ..Default::default()
        };
        let sel = kmeans_with_selection(&pts, &opts).unwrap();
        assert_eq!(sel.best_davies_bouldin, Some(3));
        assert_eq!(sel.best_calinski_harabasz, Some(3));
        assert_eq!(sel.best_gap, Some(3));
        assert_eq!(sel.chosen_k, Some(3));
        let truth = [0, 0, 0, 1, 1, 1, 2, 2, 2];
        assert!((nmi(&sel.labels, &truth) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let pts = vec![vec![1.0, 1.0]; 6];
        let mut rng = stage_rng(0, "t", 0);
        let fit = kmeans(&pts, 2, 3, &mut rng).unwrap();
        assert_eq!(davies_bouldin(&pts, &fit), None);
        assert_eq!(calinski_harabasz(&pts, &fit), None);
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = stage_rng(5, "t", 0);
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let fit = kmeans(&pts, 6, 1, &mut rng).unwrap();
        for w in fit.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let more = kmeans(&pts, 6, 8, &mut stage_rng(5, "t", 0)).unwrap();
        let one = kmeans(&pts, 6, 1, &mut stage_rng(5, "t", 0)).unwrap();
        assert!(more.inertia <= one.inertia);
    }

    #[test]
    fn too_few_points_skip_large_k() {
        let sel = kmeans_with_selection(
            &triplets(),
            &KMeansOptions {
                k_min: 2,
                k_max: 25,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sel.table.last().unwrap().k, 9);
        assert!(kmeans(&triplets(), 10, 1, &mut stage_rng(0, "t", 0)).is_err());
    }
}
