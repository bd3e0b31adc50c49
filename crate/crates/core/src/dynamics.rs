//! Weekly purchase vectors and their group averages.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::directory::CategoryDirectory;
use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::ingest::{EgoProfile, Gender};
use crate::nullmodel::{FeatureKind, NodeFeatures};
use crate::socio::{age_bracket, age_bracket_bounds, ClassPartition};

pub type Week = [f64; 7];

/// Which purchases a weekly vector is built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum WeeklyScope {
    /// All 17 retained groups together.
    Global,
    /// A single group, by label.
    Pcg(String),
    /// The 16 non-cash groups together.
    NonCash,
    /// The cash group alone.
    Cash,
}

impl WeeklyScope {
    fn labels<'a>(&'a self, directory: &'a CategoryDirectory) -> Vec<&'a str> {
        match self {
            WeeklyScope::Global => directory.active_labels(),
            WeeklyScope::Pcg(l) => vec![l.as_str()],
            WeeklyScope::NonCash => directory.non_cash_labels(),
            WeeklyScope::Cash => vec![directory.pcg_label(directory.cash_pcg())],
        }
    }
}

/// Normalized weekday distributions of every user with spend in scope.
#[derive(Debug, Clone, Default)]
pub struct WeeklySet {
    pub vectors: BTreeMap<String, Week>,
    /// Spend in scope per user, for spend-weighted averages.
    pub totals: BTreeMap<String, f64>,
}

/// Per-user weekday fractions (Monday = 0) within `scope`; users without
/// spend in scope are left out.
pub fn weekly_vectors(
    profiles: &BTreeMap<String, EgoProfile>,
    directory: &CategoryDirectory,
    scope: &WeeklyScope,
) -> WeeklySet {
    let labels = scope.labels(directory);
    let mut set = WeeklySet::default();
    for p in profiles.values() {
        let mut raw = [0.0; 7];
        for l in &labels {
            for (d, c) in p.weekly(l).iter().enumerate() {
                raw[d] += c.as_f64();
            }
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            continue;
        }
        set.vectors.insert(p.user_id.clone(), raw.map(|x| x / total));
        set.totals.insert(p.user_id.clone(), total);
    }
    set
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Grouping {
    Class,
    Age,
    Gender,
}

impl std::str::FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" => Ok(Grouping::Class),
            "age" => Ok(Grouping::Age),
            "gender" => Ok(Grouping::Gender),
            other => Err(Error::InvalidArgument(format!("unknown grouping `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProfile {
    /// Class index, age bracket `lo-hi`, or gender code.
    pub group: String,
    pub values: Week,
    pub members: usize,
}

fn group_key(
    user: &str,
    grouping: Grouping,
    profiles: &BTreeMap<String, EgoProfile>,
    partition: &ClassPartition,
) -> Option<(usize, String)> {
    match grouping {
        Grouping::Class => partition.class_of(user).map(|c| (c, c.to_string())),
        Grouping::Age => {
            let b = age_bracket(profiles.get(user)?.age?)?;
            let (lo, hi) = age_bracket_bounds(b);
            Some((b, format!("{lo}-{hi}")))
        }
        Grouping::Gender => profiles.get(user)?.gender.map(|g| match g {
            Gender::Female => (0, "0".to_string()),
            Gender::Male => (1, "1".to_string()),
        }),
    }
}

fn average(rows: &[(&Week, f64)], spend_weighted: bool) -> Week {
    let mut acc = [0.0; 7];
    let mut weight = 0.0;
    for &(w, total) in rows {
        let a = if spend_weighted { total } else { 1.0 };
        for d in 0..7 {
            acc[d] += a * w[d];
        }
        weight += a;
    }
    acc.map(|x| x / weight)
}

/// Mean weekly vector per group, each user counting once unless `spend_weighted`.
pub fn group_profiles(
    set: &WeeklySet,
    profiles: &BTreeMap<String, EgoProfile>,
    partition: &ClassPartition,
    grouping: Grouping,
    spend_weighted: bool,
) -> Vec<GroupProfile> {
    let mut groups: BTreeMap<(usize, String), Vec<(&Week, f64)>> = BTreeMap::new();
    for (user, w) in &set.vectors {
        if let Some(key) = group_key(user, grouping, profiles, partition) {
            groups.entry(key).or_default().push((w, set.totals[user]));
        }
    }
    if grouping == Grouping::Class {
        for c in 1..=partition.n_classes() {
            if !groups.keys().any(|(k, _)| *k == c) {
                log::warn!("class {c} has no members with spend in scope; omitted");
            }
        }
    }
    groups
        .into_iter()
        .map(|((_, group), rows)| GroupProfile {
            group,
            values: average(&rows, spend_weighted),
            members: rows.len(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcgClassProfile {
    pub pcg: String,
    pub class: usize,
    pub values: Week,
    pub members: usize,
}

/// Class-averaged weekly vectors for each retained group; cells without spenders are omitted.
pub fn per_pcg_profiles(
    profiles: &BTreeMap<String, EgoProfile>,
    directory: &CategoryDirectory,
    partition: &ClassPartition,
    spend_weighted: bool,
) -> Vec<PcgClassProfile> {
    let mut out = Vec::new();
    for label in directory.active_labels() {
        let set = weekly_vectors(profiles, directory, &WeeklyScope::Pcg(label.to_string()));
        for g in group_profiles(&set, profiles, partition, Grouping::Class, spend_weighted) {
            out.push(PcgClassProfile {
                pcg: label.to_string(),
                class: g.group.parse().expect("class groups are numeric"),
                values: g.values,
                members: g.members,
            });
        }
    }
    out
}

/// Weekly vectors as Euclidean node features for the Λ ratio.
pub fn weekly_node_features(g: &SocialGraph, partition: &ClassPartition, set: &WeeklySet) -> NodeFeatures {
    NodeFeatures::from_lookup(g, partition, 7, FeatureKind::Euclidean, |label| {
        set.vectors.get(label).map(|w| w.to_vec())
    })
}

pub fn write_group_csv<W: Write>(writer: W, rows: &[GroupProfile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "d0", "d1", "d2", "d3", "d4", "d5", "d6", "members"])?;
    for r in rows {
        let mut rec = vec![r.group.clone()];
        rec.extend(r.values.iter().map(|v| format!("{v}")));
        rec.push(r.members.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<weekly>", e))?;
    Ok(())
}

pub fn write_pcg_csv<W: Write>(writer: W, rows: &[PcgClassProfile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["pcg", "group", "d0", "d1", "d2", "d3", "d4", "d5", "d6", "members"])?;
    for r in rows {
        let mut rec = vec![r.pcg.clone(), r.class.to_string()];
        rec.extend(r.values.iter().map(|v| format!("{v}")));
        rec.push(r.members.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<weekly>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Cents;
    use crate::socio::{partition_classes, AmpTable};

    fn profile(id: &str, label: &str, days: [i64; 7]) -> EgoProfile {
        let mut p = EgoProfile {
            user_id: id.into(),
            ..Default::default()
        };
        p.weekly_spend.insert(label.into(), days.map(Cents));
        p.pcg_spend.insert(label.into(), Cents(days.iter().sum()));
        p
    }

    fn set_of(ps: Vec<EgoProfile>) -> BTreeMap<String, EgoProfile> {
        ps.into_iter().map(|p| (p.user_id.clone(), p)).collect()
    }

    #[test]
    fn single_user_vectors() {
        let dir = CategoryDirectory::default();
        let ps = set_of(vec![
            profile("fri", "Restaurants", [0, 0, 0, 0, 500, 0, 0]),
            profile("even", "Restaurants", [100; 7]),
            profile("mix", "Restaurants", [0, 0, 0, 0, 1000, 0, 3000]),
        ]);
        let s = weekly_vectors(&ps, &dir, &WeeklyScope::Global);
        assert_eq!(s.vectors["fri"], [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(s.vectors["even"].iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-15));
        assert_eq!(s.vectors["mix"], [0.0, 0.0, 0.0, 0.0, 0.25, 0.0, 0.75]);
        assert!(weekly_vectors(&ps, &dir, &WeeklyScope::Cash).vectors.is_empty());
    }

    #[test]
    fn two_member_group_average() {
        let dir = CategoryDirectory::default();
        let ps = set_of(vec![
            profile("a", "Airlines", [100, 0, 0, 0, 0, 0, 0]),
            profile("b", "Airlines", [0, 0, 0, 0, 0, 0, 300]),
        ]);
        let part = partition_classes(&AmpTable::from_values([("a", 1.0), ("b", 1.0)]), 1).unwrap();
        let s = weekly_vectors(&ps, &dir, &WeeklyScope::NonCash);
        let g = group_profiles(&s, &ps, &part, Grouping::Class, false);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].values, [0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
        let w = group_profiles(&s, &ps, &part, Grouping::Class, true);
        assert_eq!(w[0].values, [0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.75]);
        let per = per_pcg_profiles(&ps, &dir, &part, false);
        assert_eq!(per.len(), 1);
        assert_eq!(per[0].pcg, "Airlines");
        assert_eq!(per[0].values, g[0].values);
    }
}
