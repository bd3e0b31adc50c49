use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::directory::CategoryDirectory;
use crate::error::{Error, Result};
use crate::ingest::EgoProfile;

/// Sparse per-user spending fractions over the retained merchant categories.
#[derive(Debug, Clone, Default)]
pub struct CategorySpendTable {
    /// Retained category codes, ascending.
    pub categories: Vec<u32>,
    /// Users with positive spend on at least one retained category.
    pub users: Vec<String>,
    /// Per user: `(category index, r(c, u))`, sorted by index, summing to 1.
    rows: Vec<Vec<(u32, f64)>>,
    /// Purchase count per retained category.
    pub purchases: Vec<u64>,
    /// Number of users with `r > 0` per retained category.
    pub purchasers: Vec<u64>,
    /// Codes from the universe dropped for too few purchases, with their counts.
    pub dropped: Vec<(u32, u64)>,
}

impl CategorySpendTable {
    /// Builds a table directly from per-user `(code, amount)` lists; codes
    /// not in `categories` are ignored. Intended for tests and bindings.
    pub fn from_rows(categories: Vec<u32>, rows: Vec<(String, Vec<(u32, f64)>)>) -> Self {
        let pos: BTreeMap<u32, u32> = categories.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
        let mut t = CategorySpendTable {
            purchases: vec![0; categories.len()],
            purchasers: vec![0; categories.len()],
            categories,
            ..Default::default()
        };
        for (user, spend) in rows {
            let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
            for (code, amount) in spend {
                if let Some(&i) = pos.get(&code) {
                    *acc.entry(i).or_default() += amount;
                    t.purchases[i as usize] += 1;
                }
            }
            t.push_row(user, acc);
        }
        t
    }

    fn push_row(&mut self, user: String, spend: BTreeMap<u32, f64>) {
        let total: f64 = spend.values().sum();
        if total <= 0.0 {
            return;
        }
        let row: Vec<(u32, f64)> = spend
            .into_iter()
            .filter(|&(_, v)| v > 0.0)
            .map(|(i, v)| (i, v / total))
            .collect();
        for &(i, _) in &row {
            self.purchasers[i as usize] += 1;
        }
        self.users.push(user);
        self.rows.push(row);
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    pub fn row(&self, u: usize) -> &[(u32, f64)] {
        &self.rows[u]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[(u32, f64)])> {
        self.users
            .iter()
            .map(String::as_str)
            .zip(self.rows.iter().map(Vec::as_slice))
    }

    pub fn index_of(&self, code: u32) -> Option<usize> {
        self.categories.binary_search(&code).ok()
    }

    /// `r(c, u)` for category index `c` and user index `u`.
    pub fn r(&self, u: usize, c: usize) -> f64 {
        let row = &self.rows[u];
        row.binary_search_by_key(&(c as u32), |&(i, _)| i)
            .map(|p| row[p].1)
            .unwrap_or(0.0)
    }
}

/// Restricts every profile to the merchant universe, keeps codes with at
/// least `min_purchases` purchases, and normalizes each user's spend over them.
pub fn category_spend_table(
    profiles: &BTreeMap<String, EgoProfile>,
    directory: &CategoryDirectory,
    min_purchases: u64,
) -> CategorySpendTable {
    let universe = directory.merchant_universe();
    let mut counts: BTreeMap<u32, u64> = universe.iter().map(|&c| (c, 0)).collect();
    for p in profiles.values() {
        for (code, &n) in &p.category_purchases {
            if let Some(c) = counts.get_mut(code) {
                *c += n as u64;
            }
        }
    }
    let mut categories = Vec::new();
    let mut dropped = Vec::new();
    for (&code, &n) in &counts {
        if n >= min_purchases {
            categories.push(code);
        } else {
            dropped.push((code, n));
        }
    }
    let pos: BTreeMap<u32, u32> = categories.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
    let mut t = CategorySpendTable {
        purchases: categories.iter().map(|c| counts[c]).collect(),
        purchasers: vec![0; categories.len()],
        categories,
        dropped,
        ..Default::default()
    };
    for p in profiles.values() {
        let spend: BTreeMap<u32, f64> = p
            .category_spend
            .iter()
            .filter_map(|(code, amt)| pos.get(code).map(|&i| (i, amt.as_f64())))
            .collect();
        t.push_row(p.user_id.clone(), spend);
    }
    t
}

/// Which users the normalizers `⟨r(c, ·)⟩` average over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeanScope {
    /// Every user in the table, zeros included.
    #[default]
    AllUsers,
    /// Only users with `r(c, u) > 0`.
    Purchasers,
}

/// `ρ(c_i, c_j)` over all retained categories, plus co-purchaser counts.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationMatrix {
    pub categories: Vec<u32>,
    /// Row-major `n × n`; `None` for categories with a zero normalizer.
    pub rho: Vec<Option<f64>>,
    /// Row-major `n × n` count of users with positive spend on both.
    pub co_purchasers: Vec<u64>,
    /// Codes excluded for a zero mean share.
    pub excluded: Vec<u32>,
}

impl CorrelationMatrix {
    pub fn size(&self) -> usize {
        self.categories.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.rho[i * self.size() + j]
    }

    pub fn support(&self, i: usize, j: usize) -> u64 {
        self.co_purchasers[i * self.size() + j]
    }
}

struct PairSums {
    prod: Vec<f64>,
    co: Vec<u64>,
}

/// `ρ(c_i, c_j) = ⟨ r(c_i,u)/⟨r(c_i,·)⟩ · r(c_j,u)/⟨r(c_j,·)⟩ ⟩_u`, the outer
/// mean running over all users of the table. Products are accumulated from
/// each user's sparse row, so cost scales with the sum of squared row lengths.
pub fn category_correlation(table: &CategorySpendTable, scope: MeanScope) -> Result<CorrelationMatrix> {
    let n = table.category_count();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "{n} retained categories, need at least 2"
        )));
    }
    let users = table.user_count();
    if users == 0 {
        return Err(Error::InsufficientData("no users with retained spend".into()));
    }
    let mut sum_r = vec![0.0; n];
    for row in &table.rows {
        for &(i, r) in row {
            sum_r[i as usize] += r;
        }
    }
    let mean: Vec<f64> = (0..n)
        .map(|c| match scope {
            MeanScope::AllUsers => sum_r[c] / users as f64,
            MeanScope::Purchasers if table.purchasers[c] > 0 => sum_r[c] / table.purchasers[c] as f64,
            MeanScope::Purchasers => 0.0,
        })
        .collect();

    // a fixed split summed in order keeps the result independent of the thread count
    let part = table.rows.len().div_ceil(16).max(1);
    let partials: Vec<PairSums> = table
        .rows
        .par_chunks(part)
        .map(|chunk| {
            let mut acc = PairSums {
                prod: vec![0.0; n * n],
                co: vec![0; n * n],
            };
            for row in chunk {
                for (a, &(i, ri)) in row.iter().enumerate() {
                    for &(j, rj) in &row[a..] {
                        let idx = i as usize * n + j as usize;
                        acc.prod[idx] += ri * rj;
                        acc.co[idx] += 1;
                    }
                }
            }
            acc
        })
        .collect();
    let mut sums = PairSums {
        prod: vec![0.0; n * n],
        co: vec![0; n * n],
    };
    for p in &partials {
        sums.prod.iter_mut().zip(&p.prod).for_each(|(x, y)| *x += y);
        sums.co.iter_mut().zip(&p.co).for_each(|(x, y)| *x += y);
    }

    let mut rho = vec![None; n * n];
    let mut co = vec![0u64; n * n];
    for i in 0..n {
        for j in i..n {
            let idx = i * n + j;
            co[idx] = sums.co[idx];
            co[j * n + i] = sums.co[idx];
            if mean[i] > 0.0 && mean[j] > 0.0 {
                let v = sums.prod[idx] / users as f64 / (mean[i] * mean[j]);
                rho[idx] = Some(v);
                rho[j * n + i] = Some(v);
            }
        }
    }
    let excluded: Vec<u32> = (0..n)
        .filter(|&c| mean[c] <= 0.0)
        .map(|c| table.categories[c])
        .collect();
    for code in &excluded {
        log::warn!("category {code} has zero mean share; excluded from correlations");
    }
    Ok(CorrelationMatrix {
        categories: table.categories.clone(),
        rho,
        co_purchasers: co,
        excluded,
    })
}
