//! Individual economic indicators, inequality statistics and the
//! equal-cumulative-AMP class partition.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{EgoProfile, Gender};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmpEntry {
    pub user_id: String,
    /// Average monthly purchase, currency units per active month.
    pub amp: f64,
    pub active_months: usize,
}

/// Users sorted ascending by AMP, ties by user id. Every AMP is positive.
#[derive(Debug, Clone, Default)]
pub struct AmpTable {
    entries: Vec<AmpEntry>,
    /// Users without a positive AMP.
    pub excluded: Vec<String>,
}

impl AmpTable {
    /// Builds a table from raw values; non-positive or non-finite values are excluded.
    pub fn from_values<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut table = AmpTable::default();
        for (user, amp) in values {
            let user = user.into();
            if amp > 0.0 && amp.is_finite() {
                table.entries.push(AmpEntry {
                    user_id: user,
                    amp,
                    active_months: 1,
                });
            } else {
                table.excluded.push(user);
            }
        }
        table.sort();
        table
    }

    fn sort(&mut self) {
        self.entries
            .sort_by(|a, b| a.amp.total_cmp(&b.amp).then_with(|| a.user_id.cmp(&b.user_id)));
    }

    pub fn entries(&self) -> &[AmpEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.amp).collect()
    }

    pub fn get(&self, user: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.user_id == user).map(|e| e.amp)
    }
}

/// P_u = (Σ_t m_u(t)) / |T|_u over months with at least one purchase.
pub fn compute_amp(profiles: &BTreeMap<String, EgoProfile>) -> AmpTable {
    let mut table = AmpTable::default();
    for p in profiles.values() {
        let months = p.active_months();
        let total = p.total_spend();
        if months == 0 || total.0 <= 0 {
            log::warn!(
                "user {} has no positive spend in any month; excluded from AMP",
                p.user_id
            );
            table.excluded.push(p.user_id.clone());
            continue;
        }
        table.entries.push(AmpEntry {
            user_id: p.user_id.clone(),
            amp: total.as_units() / months as f64,
            active_months: months,
        });
    }
    table.sort();
    table
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalitySummary {
    pub gini: f64,
    /// `(f, C(f))` at every user rank, including `(0, 0)`.
    pub lorenz: Vec<(f64, f64)>,
    pub pareto_alpha: Option<f64>,
}

/// Lorenz curve of the sorted AMPs and the Gini coefficient from its trapezoidal area.
pub fn lorenz_and_gini(amp: &AmpTable) -> Result<InequalitySummary> {
    let values = amp.values();
    if values.is_empty() {
        return Err(Error::InsufficientData("Gini needs at least one user".into()));
    }
    let (gini, lorenz) = lorenz_gini_sorted(&values);
    Ok(InequalitySummary {
        gini,
        lorenz,
        pareto_alpha: None,
    })
}

/// `values` must be sorted ascending and positive.
pub fn lorenz_gini_sorted(values: &[f64]) -> (f64, Vec<(f64, f64)>) {
    let n = values.len();
    let nf = n as f64;
    let mut lorenz = Vec::with_capacity(n + 1);
    lorenz.push((0.0, 0.0));
    let mut cum = 0.0;
    let mut cum_sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        cum += v;
        cum_sum += cum;
        lorenz.push(((i + 1) as f64 / nf, cum));
    }
    let total = cum;
    for p in lorenz.iter_mut() {
        p.1 /= total;
    }
    // trapezoid area in unnormalized units: Σ (cum_{i-1} + cum_i) / 2 over steps of 1/n
    let doubled_area = 2.0 * cum_sum - total;
    let gini = (nf * total - doubled_area) / (nf * total);
    (gini, lorenz)
}

/// Hill estimate of the tail exponent over the top `tail_fraction` of AMP values.
pub fn estimate_pareto_alpha(amp: &AmpTable, tail_fraction: f64) -> Result<f64> {
    hill_estimate(&amp.values(), tail_fraction)
}

/// Hill estimator: with the tail holding the `m` largest values and threshold
/// `x_(m)` the smallest of them, `α = (m − 1) / Σ ln(x_i / x_(m))`.
pub fn hill_estimate(values: &[f64], tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tail fraction {tail_fraction} not in (0, 1]"
        )));
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let m = ((sorted.len() as f64) * tail_fraction).round() as usize;
    let m = m.min(sorted.len());
    if m < 10 {
        return Err(Error::InsufficientData(format!(
            "tail has {m} samples, need at least 10"
        )));
    }
    let threshold = sorted[m - 1];
    let log_sum: f64 = sorted[..m].iter().map(|&x| (x / threshold).ln()).sum();
    if log_sum <= 0.0 || !log_sum.is_finite() {
        return Err(Error::InsufficientData("degenerate tail: all values equal".into()));
    }
    Ok((m - 1) as f64 / log_sum)
}

/// Users split into `n` contiguous AMP-ranked classes with equal cumulative AMP.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPartition {
    n_classes: usize,
    users: Vec<String>,
    amps: Vec<f64>,
    /// `n + 1` cut positions into the sorted order: class `j` (1-based) is `boundaries[j-1]..boundaries[j]`.
    boundaries: Vec<usize>,
    class_sums: Vec<f64>,
    assignment: HashMap<String, usize>,
}

impl ClassPartition {
    fn from_sorted(users: Vec<String>, amps: Vec<f64>, boundaries: Vec<usize>) -> Self {
        let n_classes = boundaries.len() - 1;
        let mut class_sums = vec![0.0; n_classes];
        let mut assignment = HashMap::with_capacity(users.len());
        for j in 0..n_classes {
            for r in boundaries[j]..boundaries[j + 1] {
                class_sums[j] += amps[r];
                assignment.insert(users[r].clone(), j + 1);
            }
        }
        ClassPartition {
            n_classes,
            users,
            amps,
            boundaries,
            class_sums,
            assignment,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn class_sums(&self) -> &[f64] {
        &self.class_sums
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    /// Class index `1..=n` of `user`.
    pub fn class_of(&self, user: &str) -> Option<usize> {
        self.assignment.get(user).copied()
    }

    /// Zero-based class index of `user`.
    pub fn class_idx(&self, user: &str) -> Option<usize> {
        self.class_of(user).map(|c| c - 1)
    }

    /// Members of 1-based class `class`, ascending by AMP.
    pub fn members(&self, class: usize) -> &[String] {
        &self.users[self.boundaries[class - 1]..self.boundaries[class]]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// ⟨P⟩ per class; `None` for empty classes.
    pub fn mean_amp(&self) -> Vec<Option<f64>> {
        self.sizes()
            .iter()
            .zip(&self.class_sums)
            .map(|(&s, &sum)| (s > 0).then(|| sum / s as f64))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize, f64)> + '_ {
        (0..self.n_classes).flat_map(move |j| {
            (self.boundaries[j]..self.boundaries[j + 1]).map(move |r| (self.users[r].as_str(), j + 1, self.amps[r]))
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["user_id", "class", "amp"])?;
        for (u, c, a) in self.iter() {
            w.write_record([u, &c.to_string(), &format!("{a}")])?;
        }
        w.flush().map_err(|e| Error::io("<partition>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads `user_id,class,amp`. Without `n_classes`, the largest class index
    /// seen is used, so trailing empty classes need it spelled out.
    pub fn read_csv<R: Read>(reader: R, origin: &Path, n_classes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows: Vec<(usize, f64, String)> = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let row = row.map_err(|e| Error::parse(origin, line, e.to_string()))?;
            if row.len() != 3 {
                return Err(Error::parse(origin, line, "expected user_id,class,amp"));
            }
            let class: usize = row[1].parse().map_err(|_| Error::parse(origin, line, "bad class"))?;
            let amp: f64 = row[2].parse().map_err(|_| Error::parse(origin, line, "bad amp"))?;
            if class == 0 {
                return Err(Error::parse(origin, line, "classes are numbered from 1"));
            }
            rows.push((class, amp, row[0].to_string()));
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then_with(|| a.2.cmp(&b.2)));
        let seen = rows.iter().map(|r| r.0).max().unwrap_or(0);
        let n = n_classes.unwrap_or(seen);
        if seen > n {
            return Err(Error::parse(
                origin,
                1,
                format!("class {seen} exceeds the {n} expected"),
            ));
        }
        let mut boundaries = vec![0usize; n + 1];
        for r in &rows {
            boundaries[r.0] += 1;
        }
        for j in 1..=n {
            boundaries[j] += boundaries[j - 1];
        }
        let amps = rows.iter().map(|r| r.1).collect();
        let users = rows.into_iter().map(|r| r.2).collect();
        Ok(Self::from_sorted(users, amps, boundaries))
    }

    pub fn read_csv_file(path: &Path, n_classes: Option<usize>) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f), path, n_classes)
    }
}

/// Cuts the AMP-sorted users so that boundary `j` sits at the first rank whose
/// cumulative AMP reaches `j · ΣP / n`; the boundary user stays in the lower class.
pub fn partition_classes(amp: &AmpTable, n: usize) -> Result<ClassPartition> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of classes must be at least 1".into()));
    }
    if n > amp.len() {
        return Err(Error::InvalidArgument(format!(
            "{n} classes requested for {} users",
            amp.len()
        )));
    }
    let amps = amp.values();
    let total: f64 = amps.iter().sum();
    let mut boundaries = Vec::with_capacity(n + 1);
    boundaries.push(0);
    let mut cum = 0.0;
    let mut rank = 0;
    for j in 1..n {
        let threshold = j as f64 * total / n as f64;
        while rank < amps.len() && cum < threshold {
            cum += amps[rank];
            rank += 1;
        }
        boundaries.push(rank);
    }
    boundaries.push(amps.len());
    let users = amp.entries().iter().map(|e| e.user_id.clone()).collect();
    Ok(ClassPartition::from_sorted(users, amps, boundaries))
}

pub const AGE_BRACKET_START: u32 = 15;
pub const AGE_BRACKET_END: u32 = 70;
pub const AGE_BRACKET_WIDTH: u32 = 5;

/// Index of the 5-year bracket containing `age`, brackets spanning 15–69.
pub fn age_bracket(age: u32) -> Option<usize> {
    (AGE_BRACKET_START..AGE_BRACKET_END)
        .contains(&age)
        .then(|| ((age - AGE_BRACKET_START) / AGE_BRACKET_WIDTH) as usize)
}

pub fn age_bracket_bounds(bracket: usize) -> (u32, u32) {
    let lo = AGE_BRACKET_START + bracket as u32 * AGE_BRACKET_WIDTH;
    (lo, lo + AGE_BRACKET_WIDTH - 1)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pyramid {
    /// `(bracket, gender, class) → count`.
    pub cells: BTreeMap<(usize, Gender, usize), usize>,
    /// Users with unknown or out-of-range age, unknown gender, or no class.
    pub skipped: usize,
}

impl Pyramid {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["age_lo", "age_hi", "gender", "class", "count"])?;
        for (&(b, g, c), &count) in &self.cells {
            let (lo, hi) = age_bracket_bounds(b);
            w.write_record([
                lo.to_string(),
                hi.to_string(),
                (g as u8).to_string(),
                c.to_string(),
                count.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<pyramid>", e))?;
        Ok(())
    }

    pub fn male_fraction(&self) -> Option<f64> {
        let (m, t) = self.cells.iter().fold((0usize, 0usize), |(m, t), (&(_, g, _), &c)| {
            (m + if g == Gender::Male { c } else { 0 }, t + c)
        });
        (t > 0).then(|| m as f64 / t as f64)
    }
}

/// Counts per (age bracket, gender, class).
pub fn demographics_pyramid(profiles: &BTreeMap<String, EgoProfile>, partition: &ClassPartition) -> Pyramid {
    let mut pyramid = Pyramid::default();
    for p in profiles.values() {
        let key = match (p.age.and_then(age_bracket), p.gender, partition.class_of(&p.user_id)) {
            (Some(b), Some(g), Some(c)) => (b, g, c),
            _ => {
                pyramid.skipped += 1;
                continue;
            }
        };
        *pyramid.cells.entry(key).or_default() += 1;
    }
    pyramid
}

pub fn write_lorenz_csv<W: Write>(writer: W, lorenz: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["f", "C(f)"])?;
    for &(f, c) in lorenz {
        w.write_record([format!("{f}"), format!("{c}")])?;
    }
    w.flush().map_err(|e| Error::io("<lorenz>", e))?;
    Ok(())
}
