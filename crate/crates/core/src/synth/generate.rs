use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Beta, Distribution, Exp1, Gamma, Normal, Pareto, Poisson};
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use super::{AmpModel, ResolvedSpec, SynthSpec};
use crate::directory::CategoryDirectory;
use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::ingest::{
    assemble_profiles, filter_active_core, largest_component, write_demographics, write_events, write_transactions,
    CommEvent, CommKind, Demographic, Gender, ProfileOptions, ProfileSet, TransactionRecord,
};
use crate::money::Cents;
use crate::seeds::stage_rng;
use crate::socio::{partition_classes, AmpTable};

/// File names written by [`write_synth`]: events, transactions, demographics, ground truth.
pub const SYNTH_FILES: [&str; 4] = [
    "events.csv",
    "transactions.csv",
    "demographics.csv",
    "ground_truth.json",
];

const YEAR: i32 = 2024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub id: String,
    /// Planted class, 1 = poorest.
    pub class: usize,
    pub taste: i8,
    /// Average monthly purchase in currency units, as the pipeline will compute it.
    pub amp: f64,
    pub amp_cents: i64,
    pub active_months: usize,
    pub age: u32,
    pub gender: Gender,
    /// Indices of the category blocks the user joined.
    pub blocks: Vec<usize>,
    pub in_graph: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTruth {
    pub code: u32,
    pub pcg: String,
    pub age_loading: f64,
    pub seg_loading: f64,
    pub gender_loading: f64,
    pub block: Option<usize>,
}

/// Everything the generator planted, for comparison with pipeline outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub spec: SynthSpec,
    pub resolved: ResolvedSpec,
    /// Sign pattern along which taste tilts spending vectors, in non-cash group order.
    pub taste_direction: Vec<f64>,
    pub users: Vec<UserTruth>,
    pub categories: Vec<CategoryTruth>,
    /// Expected age–class correlation of category feature averages under the planted loadings.
    pub planted_feature_correlation: Option<f64>,
    /// Sample correlation of the age and class loadings themselves.
    pub loading_correlation: Option<f64>,
    pub class_sizes: Vec<usize>,
    /// `Σ_j (|s_j| / n)²`, the same-class edge fraction of class-blind mixing.
    pub mixing_same_class_expectation: f64,
    pub target_edges: usize,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub same_class_edge_fraction: Option<f64>,
    pub same_taste_edge_fraction: Option<f64>,
    pub transactions: usize,
}

impl GroundTruth {
    pub fn gini(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.users.iter().map(|u| u.amp).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(crate::socio::lorenz_gini_sorted(&v).0)
    }

    pub fn class_of(&self) -> BTreeMap<&str, usize> {
        self.users.iter().map(|u| (u.id.as_str(), u.class)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub events: Vec<CommEvent>,
    pub transactions: Vec<TransactionRecord>,
    pub demographics: Vec<(String, Demographic)>,
    pub truth: GroundTruth,
}

impl SynthData {
    /// The graph ingest builds from the generated events.
    pub fn graph(&self) -> SocialGraph {
        largest_component(&filter_active_core(&self.events))
    }

    /// Profiles ingest assembles from the generated purchases at default options.
    pub fn profiles(&self, directory: &CategoryDirectory) -> Result<ProfileSet> {
        let demo = self.demographics.iter().cloned().collect();
        assemble_profiles(&self.transactions, &demo, directory, ProfileOptions::default())
    }
}

pub fn write_synth(data: &SynthData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let open = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        File::create(&p).map(BufWriter::new).map_err(|e| Error::io(p, e))
    };
    write_events(open(SYNTH_FILES[0])?, &data.events)?;
    write_transactions(open(SYNTH_FILES[1])?, &data.transactions)?;
    write_demographics(open(SYNTH_FILES[2])?, &data.demographics)?;
    let mut w = open(SYNTH_FILES[3])?;
    serde_json::to_writer_pretty(&mut w, &data.truth)?;
    w.write_all(b"\n").map_err(|e| Error::io(dir.join(SYNTH_FILES[3]), e))?;
    w.flush().map_err(|e| Error::io(dir.join(SYNTH_FILES[3]), e))?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Where a merchant code is drawn from: a non-cash group, or the pooled non-retained groups.
struct Pool {
    codes: Vec<u32>,
    loadings: Vec<[f64; 3]>,
    /// Weekday tilt of each code's group.
    tilts: Vec<f64>,
}

impl Pool {
    fn draw(&self, z: &[f64; 3], beta: f64, rng: &mut ChaCha8Rng) -> usize {
        if beta == 0.0 || self.codes.len() == 1 {
            return rng.random_range(0..self.codes.len());
        }
        let w: Vec<f64> = self
            .loadings
            .iter()
            .map(|l| (beta * (l[0] * z[0] + l[1] * z[1] + l[2] * z[2])).exp())
            .collect();
        categorical(&w, rng)
    }
}

fn categorical(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn center_and_scale(v: &mut [f64], groups: &[Vec<usize>]) {
    for g in groups {
        if g.len() < 2 {
            g.iter().for_each(|&i| v[i] = 0.0);
            continue;
        }
        let m = g.iter().map(|&i| v[i]).sum::<f64>() / g.len() as f64;
        g.iter().for_each(|&i| v[i] -= m);
    }
    normalize(v);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scales to unit root-mean-square; a zero vector stays zero.
fn normalize(v: &mut [f64]) {
    let rms = (dot(v, v) / v.len() as f64).sqrt();
    if rms > 0.0 {
        v.iter_mut().for_each(|x| *x /= rms);
    }
}

fn remove_component(v: &mut [f64], basis: &[f64]) {
    let bb = dot(basis, basis);
    if bb > 0.0 {
        let c = dot(v, basis) / bb;
        v.iter_mut().zip(basis).for_each(|(x, b)| *x -= c * b);
    }
}

/// Three mutually orthogonal loading vectors centred within each group.
fn loading_basis(groups: &[Vec<usize>], n: usize, rng: &mut ChaCha8Rng) -> Option<[Vec<f64>; 3]> {
    let mut raw: [Vec<f64>; 3] =
        std::array::from_fn(|_| (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect());
    for v in raw.iter_mut() {
        center_and_scale(v, groups);
    }
    let [mut a, mut y, mut g] = raw;
    normalize(&mut a);
    if dot(&a, &a) == 0.0 {
        return None;
    }
    remove_component(&mut y, &a);
    normalize(&mut y);
    if dot(&y, &y) == 0.0 {
        return None;
    }
    remove_component(&mut g, &a);
    remove_component(&mut g, &y);
    normalize(&mut g);
    Some([a, y, g])
}

/// Age, class and gender loadings from a basis, with the age and class
/// loadings at sample correlation `rho` and gender loadings orthogonal to both.
fn mix_loadings(basis: &[Vec<f64>; 3], rho: f64) -> [Vec<f64>; 3] {
    let [a, y, g] = basis;
    let s: Vec<f64> = a
        .iter()
        .zip(y)
        .map(|(x, y)| rho * x + (1.0 - rho * rho).sqrt() * y)
        .collect();
    [a.clone(), s, g.clone()]
}

/// Users sharing age, class and gender, as seen by the loading calibration:
/// their count, demographic coordinates, age, class number, and expected
/// share of merchant spend in each pool.
struct CalibrationUser {
    count: f64,
    z: [f64; 3],
    age: f64,
    seg: f64,
    pool_share: Vec<f64>,
}

/// Age–class Pearson correlation of the category feature averages that the
/// loadings at correlation `rho` produce in expectation, free of sampling noise.
fn expected_feature_correlation(
    basis: &[Vec<f64>; 3],
    rho: f64,
    groups: &[Vec<usize>],
    users: &[CalibrationUser],
    beta: f64,
) -> Option<f64> {
    let [a, s, g] = mix_loadings(basis, rho);
    let n = a.len();
    let (mut age, mut seg, mut den) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut w = Vec::new();
    for u in users {
        for (grp, &share) in groups.iter().zip(&u.pool_share) {
            if share <= 0.0 {
                continue;
            }
            w.clear();
            w.extend(
                grp.iter()
                    .map(|&i| (beta * (a[i] * u.z[0] + s[i] * u.z[1] + g[i] * u.z[2])).exp()),
            );
            let total: f64 = w.iter().sum();
            for (&i, &wi) in grp.iter().zip(&w) {
                let p = u.count * share * wi / total;
                age[i] += p * u.age;
                seg[i] += p * u.seg;
                den[i] += p;
            }
        }
    }
    let keep: Vec<usize> = (0..n).filter(|&i| den[i] > 0.0).collect();
    let ea: Vec<f64> = keep.iter().map(|&i| age[i] / den[i]).collect();
    let es: Vec<f64> = keep.iter().map(|&i| seg[i] / den[i]).collect();
    pearson_of(&ea, &es)
}

/// Loading correlation whose expected feature-average correlation equals
/// `target`, found by bisection. Pool normalization of the exponential tilt
/// mixes the loadings, so the two correlations differ.
fn calibrate_loading_correlation(
    basis: &[Vec<f64>; 3],
    groups: &[Vec<usize>],
    users: &[CalibrationUser],
    beta: f64,
    target: f64,
) -> f64 {
    if beta == 0.0 || users.is_empty() {
        return target;
    }
    let f = |r: f64| expected_feature_correlation(basis, r, groups, users, beta);
    let (mut lo, mut hi) = (-0.999, 0.999);
    match (f(lo), f(hi)) {
        (Some(a), Some(b)) if a < target && target < b => {}
        (_, Some(b)) if b <= target => return hi,
        (Some(a), _) if a >= target => return lo,
        _ => return target,
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        match f(mid) {
            Some(v) if v < target => lo = mid,
            Some(_) => hi = mid,
            None => break,
        }
    }
    0.5 * (lo + hi)
}

fn pearson_of(a: &[f64], b: &[f64]) -> Option<f64> {
    crate::catnet::pearson(a, b).map(|c| c.r)
}

/// Splits `total` cents over exponential weights with at least one cent each,
/// distributing the rounding remainder by largest fractional part.
fn split_amount(total: i64, n: usize, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = w.iter().sum();
    let spare = total - n as i64;
    let exact: Vec<f64> = w.iter().map(|x| spare as f64 * x / sum).collect();
    let mut out: Vec<i64> = exact.iter().map(|x| 1 + x.floor() as i64).collect();
    let mut left = total - out.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let mut k = 0;
    while left > 0 {
        out[order[k % n]] += 1;
        left -= 1;
        k += 1;
    }
    out
}

fn tilted_week(base: &[f64; 7], taste: i8, shift: f64, tilt: f64) -> [f64; 7] {
    let mut p = *base;
    p[0] -= shift * taste as f64;
    p[5] += shift * taste as f64;
    if tilt != 0.0 {
        let weekdays: f64 = p[..4].iter().sum();
        let weekend = p[5] + p[6];
        let scale = (weekdays - weekend * tilt) / weekdays;
        p[..4].iter_mut().for_each(|x| *x *= scale);
        p[5] *= 1.0 + tilt;
        p[6] *= 1.0 + tilt;
    }
    p
}

fn random_timestamp(month: u32, weekday: usize, rng: &mut ChaCha8Rng) -> i64 {
    let first = NaiveDate::from_ymd_opt(YEAR, month, 1).expect("valid month");
    let offset = (weekday + 7 - first.weekday().num_days_from_monday() as usize) % 7;
    let days_in_month = if month == 12 {
        31
    } else {
        (NaiveDate::from_ymd_opt(YEAR, month + 1, 1).expect("valid month") - first).num_days() as usize
    };
    let candidates: Vec<usize> = (offset..days_in_month).step_by(7).collect();
    let day = candidates[rng.random_range(0..candidates.len())];
    let date = first + chrono::Days::new(day as u64);
    date.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() + rng.random_range(0..86_400)
}

fn edge_key(a: u32, b: u32) -> u64 {
    ((a.min(b) as u64) << 32) | a.max(b) as u64
}

struct Sampler {
    members: Vec<u32>,
    alias: WeightedAliasIndex<f64>,
}

impl Sampler {
    fn new(members: Vec<u32>, theta: &[f64]) -> Option<Sampler> {
        if members.is_empty() {
            return None;
        }
        let w = members.iter().map(|&u| theta[u as usize]).collect();
        let alias = WeightedAliasIndex::new(w).ok()?;
        Some(Sampler { members, alias })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u32 {
        self.members[self.alias.sample(rng)]
    }
}

/// Propensity-weighted edge sampling with planted class and taste mixing.
fn sample_edges(spec: &SynthSpec, class0: &[usize], taste: &[i8], rng: &mut ChaCha8Rng) -> Result<Vec<(u32, u32)>> {
    let n = class0.len();
    let target = spec.n_edges();
    if target == 0 || n < 2 {
        return Ok(Vec::new());
    }
    if target as u128 > (n as u128 * (n as u128 - 1)) / 2 {
        return Err(Error::Infeasible(format!(
            "{target} edges exceed the simple-graph bound for {n} users"
        )));
    }
    let theta: Vec<f64> = if spec.degree_alpha > 0.0 {
        let d = Pareto::new(1.0, spec.degree_alpha).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (0..n).map(|_| d.sample(rng)).collect()
    } else {
        vec![1.0; n]
    };
    let tidx = |t: i8| usize::from(t > 0);
    let all = Sampler::new((0..n as u32).collect(), &theta).expect("non-empty population");
    let by_taste: Vec<Option<Sampler>> = (0..2)
        .map(|t| {
            Sampler::new(
                (0..n as u32).filter(|&u| tidx(taste[u as usize]) == t).collect(),
                &theta,
            )
        })
        .collect();
    let k = spec.n_classes;
    let by_class: Vec<Option<Sampler>> = (0..k)
        .map(|c| Sampler::new((0..n as u32).filter(|&u| class0[u as usize] == c).collect(), &theta))
        .collect();
    let by_class_taste: Vec<Option<Sampler>> = (0..2 * k)
        .map(|i| {
            let (c, t) = (i / 2, i % 2);
            Sampler::new(
                (0..n as u32)
                    .filter(|&u| class0[u as usize] == c && tidx(taste[u as usize]) == t)
                    .collect(),
                &theta,
            )
        })
        .collect();

    let mut seen: FxHashSet<u64> = FxHashSet::default();
    let mut edges = Vec::with_capacity(target);
    let max_attempts = 50 * target as u64 + 10_000;
    let mut attempts = 0u64;
    while edges.len() < target {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Infeasible(format!(
                "placed {} of {target} edges after {max_attempts} attempts",
                edges.len()
            )));
        }
        let u = all.draw(rng);
        let (cu, tu) = (class0[u as usize], tidx(taste[u as usize]));
        let within = rng.random_bool(spec.homophily_strength);
        let forced = rng.random_bool(spec.taste_coupling);
        let pool = match (within, forced) {
            (true, true) => by_class_taste[2 * cu + tu].as_ref(),
            (true, false) => by_class[cu].as_ref(),
            (false, true) => by_taste[1 - tu].as_ref(),
            (false, false) => Some(&all),
        };
        let Some(pool) = pool else { continue };
        let v = pool.draw(rng);
        if v == u || !seen.insert(edge_key(u, v)) {
            continue;
        }
        edges.push((u.min(v), u.max(v)));
    }
    Ok(edges)
}

fn sample_gamma(shape: f64, rng: &mut ChaCha8Rng) -> f64 {
    Gamma::new(shape, 1.0).expect("positive shape").sample(rng)
}

/// Draws a spending vector around `mean` with Dirichlet concentration `conc`; zero components stay zero.
fn dirichlet(mean: &[f64], conc: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x: Vec<f64> = mean
        .iter()
        .map(|&m| if m > 0.0 { sample_gamma(conc * m, rng) } else { 0.0 })
        .collect();
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
        x
    } else {
        mean.to_vec()
    }
}

fn id_width(n: usize) -> usize {
    n.to_string().len().max(6)
}

/// Builds the synthetic data set described by `spec`. Identical specs give identical output.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    let directory = CategoryDirectory::default();
    let resolved = spec.resolve(&directory)?;
    let n = spec.n_users;
    let k = spec.n_classes;
    let non_cash = directory.non_cash_labels();

    for (j, w) in resolved.weekday_profiles.iter().enumerate() {
        if w[0] < spec.weekday_taste_shift || w[5] < spec.weekday_taste_shift {
            return Err(Error::Infeasible(format!(
                "weekday_taste_shift exceeds the Monday or Saturday share of class {}",
                j + 1
            )));
        }
        for (label, t) in &spec.weekday_group_tilts {
            let p = tilted_week(w, 1, spec.weekday_taste_shift, 0.0);
            let q = tilted_week(w, -1, spec.weekday_taste_shift, 0.0);
            for p in [p, q] {
                if p[..4].iter().sum::<f64>() < (p[5] + p[6]) * t {
                    return Err(Error::Infeasible(format!(
                        "weekday tilt of `{label}` leaves negative weekday mass"
                    )));
                }
            }
        }
    }

    // population: AMP, active months, planted class
    let width = id_width(n);
    let ids: Vec<String> = (1..=n).map(|i| format!("u{i:0width$}")).collect();
    let mut rng = stage_rng(spec.seed, "synth.population", 0);
    let amp_cents: Vec<i64> = (0..n)
        .map(|_| {
            let units = match spec.amp {
                AmpModel::Pareto { alpha, xmin } => Pareto::new(xmin, alpha).expect("validated").sample(&mut rng),
                AmpModel::Constant { value } => value,
            };
            ((units * 100.0).round() as i64).max(1)
        })
        .collect();
    let (lo, hi) = spec.active_months;
    let months: Vec<Vec<u32>> = (0..n)
        .map(|_| {
            let m = rng.random_range(lo..=hi);
            let mut v: Vec<u32> = sample_indices(&mut rng, 12, m)
                .into_iter()
                .map(|i| i as u32 + 1)
                .collect();
            v.sort_unstable();
            v
        })
        .collect();
    let amp: Vec<f64> = (0..n)
        .map(|u| {
            let m = months[u].len() as i64;
            Cents(amp_cents[u] * m).as_units() / m as f64
        })
        .collect();
    let class0: Vec<usize> = if n == 0 {
        Vec::new()
    } else {
        let part = partition_classes(&AmpTable::from_values(ids.iter().cloned().zip(amp.iter().copied())), k)?;
        ids.iter()
            .map(|id| part.class_idx(id).expect("every user is classified"))
            .collect()
    };
    let age_d = spec.age_distribution;
    let normal = Normal::new(age_d.mean, age_d.sd.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let ages: Vec<u32> = (0..n)
        .map(|_| (normal.sample(&mut rng).round().max(0.0) as u32).clamp(age_d.min, age_d.max))
        .collect();
    let genders: Vec<Gender> = (0..n)
        .map(|_| {
            if rng.random_bool(spec.gender_split) {
                Gender::Male
            } else {
                Gender::Female
            }
        })
        .collect();
    let taste: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    let seg_mid = (k as f64 + 1.0) / 2.0;
    let seg_sd = (((k * k) as f64 - 1.0) / 12.0).sqrt().max(1.0);
    let user_z = |u: usize| -> [f64; 3] {
        [
            (ages[u] as f64 - age_d.mean) / age_d.sd.max(1e-9),
            (class0[u] as f64 + 1.0 - seg_mid) / seg_sd,
            genders[u].code() - spec.gender_split,
        ]
    };

    // spending vectors, cash fractions, block memberships
    let mut rng = stage_rng(spec.seed, "synth.spending", 0);
    let taste_direction: Vec<f64> = (0..non_cash.len())
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let mut sv = Vec::with_capacity(n);
    let mut cash = Vec::with_capacity(n);
    let mut blocks: Vec<Vec<usize>> = Vec::with_capacity(n);
    for u in 0..n {
        let c = class0[u];
        let mu = &resolved.spending_means[c];
        let md: f64 = dot(mu, &taste_direction);
        let t = taste[u] as f64 * spec.taste_shift;
        let shifted: Vec<f64> = mu
            .iter()
            .zip(&taste_direction)
            .map(|(m, d)| (m + t * m * (d - md)).max(0.0))
            .collect();
        sv.push(dirichlet(&shifted, resolved.concentration[c], &mut rng));
        let cf = resolved.cash_fraction[c];
        let cf = if cf > 0.0 && cf < 1.0 {
            (cf * (1.0 + taste[u] as f64 * spec.cash_taste_shift)).min(0.99)
        } else {
            cf
        };
        cash.push(if cf <= 0.0 || cf >= 1.0 {
            cf
        } else {
            let a = spec.cash_concentration;
            Beta::new(a * cf, a * (1.0 - cf))
                .expect("positive parameters")
                .sample(&mut rng)
        });
        blocks.push(
            spec.category_blocks
                .iter()
                .enumerate()
                .filter(|(_, b)| rng.random_bool(b.coupling))
                .map(|(i, _)| i)
                .collect(),
        );
    }

    // merchant code pools and their planted demographic loadings
    let mut rng = stage_rng(spec.seed, "synth.categories", 0);
    let block_of: BTreeMap<u32, usize> = spec
        .category_blocks
        .iter()
        .enumerate()
        .flat_map(|(i, b)| b.codes.iter().map(move |&c| (c, i)))
        .collect();
    let tilt_of = |label: &str| -> f64 {
        spec.weekday_group_tilts
            .iter()
            .find(|(l, _)| l == label)
            .map_or(0.0, |(_, t)| *t)
    };
    let cash_pcg = directory.cash_pcg();
    let active = directory.active_pcgs();
    let mut pool_codes: Vec<Vec<u32>> = vec![Vec::new(); non_cash.len() + 1];
    for code in directory.merchant_universe() {
        if block_of.contains_key(&code) {
            continue;
        }
        let pcg = directory.pcg_of(code).expect("universe codes are known");
        let slot = non_cash
            .iter()
            .position(|l| directory.pcg_id(l) == Some(pcg))
            .unwrap_or(non_cash.len());
        pool_codes[slot].push(code);
    }
    for (i, label) in non_cash.iter().enumerate() {
        let needed = resolved.spending_means.iter().any(|m| m[i] > 0.0)
            || spec.assortative_group.as_ref().is_some_and(|a| a.pcg == *label);
        if needed && pool_codes[i].is_empty() {
            return Err(Error::Infeasible(format!(
                "every code of `{label}` is taken by category blocks"
            )));
        }
    }
    let flat: Vec<u32> = pool_codes.iter().flatten().copied().collect();
    let groups: Vec<Vec<usize>> = {
        let mut start = 0;
        pool_codes
            .iter()
            .map(|p| {
                let g = (start..start + p.len()).collect();
                start += p.len();
                g
            })
            .collect()
    };
    let basis = loading_basis(&groups, flat.len(), &mut rng);
    let calibration: Vec<CalibrationUser> = {
        let mut cells: BTreeMap<(u32, usize, bool), (usize, f64)> = BTreeMap::new();
        for u in 0..n {
            cells
                .entry((ages[u], class0[u], genders[u] == Gender::Male))
                .or_insert((u, 0.0))
                .1 += 1.0;
        }
        let d = spec.dropped_share;
        cells
            .into_values()
            .map(|(u, count)| {
                let c = class0[u];
                let cf = resolved.cash_fraction[c];
                let merchant = d + (1.0 - d) * (1.0 - cf);
                let mut pool_share: Vec<f64> = resolved.spending_means[c]
                    .iter()
                    .map(|m| {
                        if merchant > 0.0 {
                            (1.0 - d) * (1.0 - cf) * m / merchant
                        } else {
                            0.0
                        }
                    })
                    .collect();
                pool_share.push(if merchant > 0.0 { d / merchant } else { 0.0 });
                CalibrationUser {
                    count,
                    z: user_z(u),
                    age: ages[u] as f64,
                    seg: c as f64 + 1.0,
                    pool_share,
                }
            })
            .collect()
    };
    let loading_rho = basis
        .as_ref()
        .map(|b| calibrate_loading_correlation(b, &groups, &calibration, spec.feature_tilt, spec.feature_correlation));
    let loadings = basis.as_ref().zip(loading_rho).map(|(b, r)| mix_loadings(b, r));
    let load = |i: usize| -> [f64; 3] { loadings.as_ref().map_or([0.0; 3], |l| [l[0][i], l[1][i], l[2][i]]) };
    let pools: Vec<Pool> = groups
        .iter()
        .map(|g| Pool {
            codes: g.iter().map(|&i| flat[i]).collect(),
            loadings: g.iter().map(|&i| load(i)).collect(),
            tilts: g
                .iter()
                .map(|&i| tilt_of(directory.pcg_label(directory.pcg_of(flat[i]).expect("known code"))))
                .collect(),
        })
        .collect();
    let mut categories: Vec<CategoryTruth> = flat
        .iter()
        .enumerate()
        .map(|(i, &code)| {
            let l = load(i);
            CategoryTruth {
                code,
                pcg: directory
                    .pcg_label(directory.pcg_of(code).expect("known code"))
                    .to_string(),
                age_loading: l[0],
                seg_loading: l[1],
                gender_loading: l[2],
                block: None,
            }
        })
        .collect();
    for (&code, &b) in &block_of {
        categories.push(CategoryTruth {
            code,
            pcg: directory
                .pcg_label(directory.pcg_of(code).expect("known code"))
                .to_string(),
            age_loading: 0.0,
            seg_loading: 0.0,
            gender_loading: 0.0,
            block: Some(b),
        });
    }
    categories.sort_by_key(|c| c.code);
    let loading_correlation = loadings.as_ref().and_then(|l| pearson_of(&l[0], &l[1]));
    let planted_feature_correlation = basis.as_ref().zip(loading_rho).and_then(|(b, r)| {
        if spec.feature_tilt == 0.0 {
            loading_correlation
        } else {
            expected_feature_correlation(b, r, &groups, &calibration, spec.feature_tilt)
        }
    });
    let cash_codes = directory.mccs_in(cash_pcg);
    let cash_tilt = tilt_of(directory.pcg_label(cash_pcg));
    let dropped_slot = non_cash.len();
    let assort_slot = spec
        .assortative_group
        .as_ref()
        .map(|a| (non_cash.iter().position(|l| *l == a.pcg).expect("validated"), a.share));
    debug_assert!(active.len() == non_cash.len() + 1);

    // social graph
    let mut rng = stage_rng(spec.seed, "synth.graph", 0);
    let edges = sample_edges(spec, &class0, &taste, &mut rng)?;
    let full = SocialGraph::from_index_edges(ids.clone(), edges.iter().map(|&(a, b)| (a, b)).collect())?;
    let graph = largest_component(&full);
    let mut in_graph = vec![false; n];
    let index_of: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    for l in graph.labels() {
        in_graph[index_of[l.as_str()]] = true;
    }
    let start = NaiveDate::from_ymd_opt(YEAR, 1, 1)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("midnight");
    let year_secs = 366 * 86_400;
    let t0 = start.and_utc().timestamp();
    let mut events = Vec::with_capacity(2 * graph.edge_count());
    let (mut same_class, mut same_taste) = (0usize, 0usize);
    for &(a, b) in graph.edges() {
        let (la, lb) = (graph.label(a), graph.label(b));
        let (ia, ib) = (index_of[la], index_of[lb]);
        same_class += usize::from(class0[ia] == class0[ib]);
        same_taste += usize::from(taste[ia] == taste[ib]);
        events.push(CommEvent {
            caller: la.to_string(),
            callee: lb.to_string(),
            timestamp: t0 + rng.random_range(0..year_secs),
            kind: CommKind::Call,
            duration: rng.random_range(10..900),
        });
        events.push(CommEvent {
            caller: lb.to_string(),
            callee: la.to_string(),
            timestamp: t0 + rng.random_range(0..year_secs),
            kind: CommKind::Sms,
            duration: 0,
        });
    }

    // transactions
    let mut rng = stage_rng(spec.seed, "synth.transactions", 0);
    let poisson = (spec.tx_per_user > 0.0).then(|| Poisson::new(spec.tx_per_user).expect("positive mean"));
    let mut transactions = Vec::new();
    for u in 0..n {
        let m = months[u].len();
        let total = amp_cents[u] * m as i64;
        let drawn = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        let count = drawn.max(m).min(total as usize);
        let amounts = split_amount(total, count, &mut rng);
        let z = user_z(u);
        let base_week = &resolved.weekday_profiles[class0[u]];
        let mut rows = Vec::with_capacity(count);
        for (i, &amount) in amounts.iter().enumerate() {
            let month = if i < m {
                months[u][i]
            } else {
                months[u][rng.random_range(0..m)]
            };
            let (code, tilt) = if !pools[dropped_slot].codes.is_empty() && rng.random_bool(spec.dropped_share) {
                let p = &pools[dropped_slot];
                let j = p.draw(&z, spec.feature_tilt, &mut rng);
                (p.codes[j], p.tilts[j])
            } else if rng.random_bool(cash[u]) {
                (cash_codes[rng.random_range(0..cash_codes.len())], cash_tilt)
            } else {
                let mut chosen = None;
                for &b in &blocks[u] {
                    let blk = &spec.category_blocks[b];
                    if rng.random_bool(blk.share) {
                        let c = blk.codes[rng.random_range(0..blk.codes.len())];
                        chosen = Some((
                            c,
                            tilt_of(directory.pcg_label(directory.pcg_of(c).expect("known code"))),
                        ));
                        break;
                    }
                }
                if chosen.is_none() {
                    if let Some((slot, share)) = assort_slot {
                        if taste[u] > 0 && rng.random_bool(share) {
                            let p = &pools[slot];
                            let j = p.draw(&z, spec.feature_tilt, &mut rng);
                            chosen = Some((p.codes[j], p.tilts[j]));
                        }
                    }
                }
                chosen.unwrap_or_else(|| {
                    let p = &pools[categorical(&sv[u], &mut rng)];
                    let j = p.draw(&z, spec.feature_tilt, &mut rng);
                    (p.codes[j], p.tilts[j])
                })
            };
            let week = tilted_week(base_week, taste[u], spec.weekday_taste_shift, tilt);
            let day = categorical(&week, &mut rng);
            rows.push(TransactionRecord {
                user_id: ids[u].clone(),
                timestamp: random_timestamp(month, day, &mut rng),
                amount: Cents(amount),
                mcc: code,
                valid_mcc: true,
            });
        }
        rows.sort_by_key(|r| r.timestamp);
        transactions.extend(rows);
    }

    let mut class_sizes = vec![0usize; k];
    class0.iter().for_each(|&c| class_sizes[c] += 1);
    let mixing = if n == 0 {
        0.0
    } else {
        class_sizes.iter().map(|&s| (s as f64 / n as f64).powi(2)).sum()
    };
    let ge = graph.edge_count();
    let users = (0..n)
        .map(|u| UserTruth {
            id: ids[u].clone(),
            class: class0[u] + 1,
            taste: taste[u],
            amp: amp[u],
            amp_cents: amp_cents[u],
            active_months: months[u].len(),
            age: ages[u],
            gender: genders[u],
            blocks: blocks[u].clone(),
            in_graph: in_graph[u],
        })
        .collect();
    let demographics = (0..n)
        .map(|u| {
            (
                ids[u].clone(),
                Demographic {
                    age: Some(ages[u]),
                    gender: Some(genders[u]),
                },
            )
        })
        .collect();
    let truth = GroundTruth {
        seed: spec.seed,
        spec: spec.clone(),
        resolved,
        taste_direction,
        users,
        categories,
        planted_feature_correlation,
        loading_correlation,
        class_sizes,
        mixing_same_class_expectation: mixing,
        target_edges: spec.n_edges(),
        graph_nodes: graph.node_count(),
        graph_edges: ge,
        same_class_edge_fraction: (ge > 0).then(|| same_class as f64 / ge as f64),
        same_taste_edge_fraction: (ge > 0).then(|| same_taste as f64 / ge as f64),
        transactions: transactions.len(),
    };
    Ok(SynthData {
        events,
        transactions,
        demographics,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::assemble_profiles;
    use crate::ingest::ProfileOptions;
    use std::collections::HashMap;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            n_users: 600,
            mean_degree: 6.0,
            ..Default::default()
        }
    }

    #[test]
    fn split_amount_is_exact() {
        let mut rng = stage_rng(1, "t", 0);
        for (total, n) in [(1000, 7), (5, 5), (123_457, 1), (99, 30)] {
            let v = split_amount(total, n, &mut rng);
            assert_eq!(v.len(), n);
            assert_eq!(v.iter().sum::<i64>(), total);
            assert!(v.iter().all(|&x| x >= 1));
        }
    }

    #[test]
    fn timestamps_land_on_requested_weekday() {
        let mut rng = stage_rng(2, "t", 0);
        for month in 1..=12 {
            for day in 0..7 {
                let ts = random_timestamp(month, day, &mut rng);
                assert_eq!(crate::ingest::weekday_index(ts, 0), day);
                assert_eq!(crate::ingest::month_key(ts), format!("2024-{month:02}"));
            }
        }
    }

    #[test]
    fn loadings_hit_the_planted_correlation() {
        let mut rng = stage_rng(3, "t", 0);
        let groups = vec![(0..10).collect(), (10..30).collect(), vec![30]];
        let basis = loading_basis(&groups, 31, &mut rng).unwrap();
        let [a, s, g] = mix_loadings(&basis, 0.42);
        assert!((pearson_of(&a, &s).unwrap() - 0.42).abs() < 1e-12);
        assert!(pearson_of(&a, &g).unwrap().abs() < 1e-12);
        assert!(pearson_of(&s, &g).unwrap().abs() < 1e-12);
        assert_eq!((a[30], s[30], g[30]), (0.0, 0.0, 0.0));
        assert!(a[..10].iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&small(7)).unwrap();
        let b = generate(&small(7)).unwrap();
        assert_eq!(a.transactions, b.transactions);
        assert_eq!(a.events, b.events);
        assert_eq!(a.truth, b.truth);
        let c = generate(&small(8)).unwrap();
        assert_ne!(a.transactions, c.transactions);
    }

    #[test]
    fn totals_match_planted_amp() {
        let d = generate(&small(11)).unwrap();
        let mut total: HashMap<&str, i64> = HashMap::new();
        for t in &d.transactions {
            *total.entry(t.user_id.as_str()).or_default() += t.amount.0;
        }
        for u in &d.truth.users {
            assert_eq!(total[u.id.as_str()], u.amp_cents * u.active_months as i64);
        }
        let demo: HashMap<String, Demographic> = d.demographics.iter().cloned().collect();
        let set = assemble_profiles(
            &d.transactions,
            &demo,
            &CategoryDirectory::default(),
            ProfileOptions::default(),
        )
        .unwrap();
        let amp = crate::socio::compute_amp(&set.profiles);
        for u in &d.truth.users {
            assert_eq!(amp.get(&u.id), Some(u.amp));
            assert_eq!(set.profiles[&u.id].active_months(), u.active_months);
        }
    }

    #[test]
    fn graph_is_simple_and_connected() {
        let d = generate(&small(5)).unwrap();
        let g = crate::ingest::build_graph(&d.events).graph;
        assert!(g.is_simple());
        assert!(g.is_connected());
        assert_eq!(g.edge_count(), d.truth.graph_edges);
        assert_eq!(
            crate::ingest::filter_active_core(&d.events).edge_count(),
            g.edge_count()
        );
    }

    #[test]
    fn empty_population() {
        let d = generate(&SynthSpec {
            n_users: 0,
            ..Default::default()
        })
        .unwrap();
        assert!(d.events.is_empty() && d.transactions.is_empty() && d.demographics.is_empty());
        let dir = tempfile::tempdir().unwrap();
        write_synth(&d, dir.path()).unwrap();
        let tx = std::fs::read_to_string(dir.path().join("transactions.csv")).unwrap();
        assert_eq!(tx.trim(), "user_id,timestamp,amount,mcc");
        let ev = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
        assert_eq!(ev.trim(), "caller,callee,timestamp,kind,duration");
        let de = std::fs::read_to_string(dir.path().join("demographics.csv")).unwrap();
        assert_eq!(de.trim(), "user_id,age,gender");
    }

    #[test]
    fn infeasible_edge_demand() {
        let s = SynthSpec {
            n_users: 10,
            n_classes: 2,
            mean_degree: 12.0,
            ..Default::default()
        };
        assert!(matches!(generate(&s), Err(Error::Infeasible(_))));
    }
}
