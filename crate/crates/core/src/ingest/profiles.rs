use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};

use super::transactions::{check_header, TransactionRecord};
use crate::directory::CategoryDirectory;
use crate::error::{Error, Result};
use crate::money::Cents;

pub const DEMOGRAPHICS_HEADER: [&str; 3] = ["user_id", "age", "gender"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Gender {
    Female = 0,
    Male = 1,
}

impl From<Gender> for u8 {
    fn from(g: Gender) -> u8 {
        g as u8
    }
}

impl TryFrom<u8> for Gender {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Gender::Female),
            1 => Ok(Gender::Male),
            other => Err(format!("gender code {other} is not 0 or 1")),
        }
    }
}

impl Gender {
    pub fn parse(s: &str) -> Option<Gender> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "f" | "female" => Some(Gender::Female),
            "1" | "m" | "male" => Some(Gender::Male),
            _ => None,
        }
    }

    pub fn code(self) -> f64 {
        self as u8 as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Demographic {
    pub age: Option<u32>,
    pub gender: Option<Gender>,
}

pub fn parse_demographics(path: &Path) -> Result<HashMap<String, Demographic>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_demographics_from_reader(std::io::BufReader::new(file), path)
}

/// Reads `user_id,age,gender`. Empty or unparseable age/gender cells become unknown.
pub fn parse_demographics_from_reader<R: Read>(reader: R, origin: &Path) -> Result<HashMap<String, Demographic>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    check_header(&mut rdr, origin, &DEMOGRAPHICS_HEADER)?;
    let mut out = HashMap::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        if row.len() != 3 {
            return Err(Error::parse(
                origin,
                line,
                format!("expected 3 fields, found {}", row.len()),
            ));
        }
        if row[0].is_empty() {
            return Err(Error::parse(origin, line, "empty user_id"));
        }
        out.insert(
            row[0].to_string(),
            Demographic {
                age: row[1].parse().ok(),
                gender: Gender::parse(&row[2]),
            },
        );
    }
    Ok(out)
}

pub fn write_demographics<W: Write>(writer: W, rows: &[(String, Demographic)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DEMOGRAPHICS_HEADER)?;
    for (user, d) in rows {
        let age = d.age.map(|a| a.to_string()).unwrap_or_default();
        let gender = d.gender.map(|g| (g as u8).to_string()).unwrap_or_default();
        w.write_record([user.as_str(), &age, &gender])?;
    }
    w.flush().map_err(|e| Error::io("<demographics>", e))?;
    Ok(())
}

/// Per-user purchase aggregates. Serialized one JSON object per line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EgoProfile {
    pub user_id: String,
    pub age: Option<u32>,
    pub gender: Option<Gender>,
    /// Spend per calendar month (`YYYY-MM`, UTC), all purchases included.
    pub monthly_spend: BTreeMap<String, Cents>,
    /// Spend per valid merchant code.
    pub category_spend: BTreeMap<u32, Cents>,
    /// Number of purchases per valid merchant code.
    pub category_purchases: BTreeMap<u32, u32>,
    /// Spend per purchase category group label.
    pub pcg_spend: BTreeMap<String, Cents>,
    /// Spend per group label and weekday, Monday = 0.
    pub weekly_spend: BTreeMap<String, [Cents; 7]>,
    /// Spend on codes missing from the directory.
    pub uncategorized_spend: Cents,
}

impl EgoProfile {
    pub fn total_spend(&self) -> Cents {
        self.monthly_spend.values().copied().sum()
    }

    pub fn active_months(&self) -> usize {
        self.monthly_spend.len()
    }

    pub fn pcg(&self, label: &str) -> Cents {
        self.pcg_spend.get(label).copied().unwrap_or_default()
    }

    pub fn weekly(&self, label: &str) -> [Cents; 7] {
        self.weekly_spend.get(label).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    pub min_active_months: usize,
    /// Offset applied before deriving the weekday, in seconds east of UTC.
    pub utc_offset_secs: i64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            min_active_months: 2,
            utc_offset_secs: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ProfileSet {
    pub profiles: BTreeMap<String, EgoProfile>,
    /// Users dropped for having fewer active months than required.
    pub excluded_inactive: usize,
    /// Retained users with no demographics row.
    pub missing_demographics: usize,
}

/// `YYYY-MM` of the UTC calendar month containing `timestamp`.
pub fn month_key(timestamp: i64) -> String {
    let dt = DateTime::from_timestamp(timestamp, 0).unwrap_or_default();
    format!("{:04}-{:02}", dt.year(), dt.month())
}

/// Weekday index with Monday = 0 after shifting by `utc_offset_secs`.
pub fn weekday_index(timestamp: i64, utc_offset_secs: i64) -> usize {
    let dt = DateTime::from_timestamp(timestamp + utc_offset_secs, 0).unwrap_or_default();
    dt.weekday().num_days_from_monday() as usize
}

pub fn assemble_profiles(
    tx: &[TransactionRecord],
    demo: &HashMap<String, Demographic>,
    directory: &CategoryDirectory,
    opts: ProfileOptions,
) -> Result<ProfileSet> {
    if opts.min_active_months < 1 {
        return Err(Error::InvalidArgument("min_active_months must be at least 1".into()));
    }
    let mut by_user: HashMap<&str, EgoProfile> = HashMap::new();
    for r in tx {
        let p = by_user.entry(r.user_id.as_str()).or_insert_with(|| EgoProfile {
            user_id: r.user_id.clone(),
            ..EgoProfile::default()
        });
        *p.monthly_spend.entry(month_key(r.timestamp)).or_default() += r.amount;
        let pcg = if r.valid_mcc { directory.pcg_of(r.mcc) } else { None };
        match pcg {
            Some(pcg) => {
                let label = directory.pcg_label(pcg);
                *p.category_spend.entry(r.mcc).or_default() += r.amount;
                *p.category_purchases.entry(r.mcc).or_default() += 1;
                *p.pcg_spend.entry(label.to_string()).or_default() += r.amount;
                let day = weekday_index(r.timestamp, opts.utc_offset_secs);
                p.weekly_spend.entry(label.to_string()).or_default()[day] += r.amount;
            }
            None => p.uncategorized_spend += r.amount,
        }
    }

    let mut set = ProfileSet::default();
    for (_, mut p) in by_user {
        if p.active_months() < opts.min_active_months {
            set.excluded_inactive += 1;
            continue;
        }
        match demo.get(&p.user_id) {
            Some(d) => {
                p.age = d.age;
                p.gender = d.gender;
            }
            None => set.missing_demographics += 1,
        }
        set.profiles.insert(p.user_id.clone(), p);
    }
    Ok(set)
}

pub fn write_profiles<W: Write>(mut writer: W, profiles: &BTreeMap<String, EgoProfile>) -> Result<()> {
    for p in profiles.values() {
        serde_json::to_writer(&mut writer, p)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<profiles>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<profiles>", e))?;
    Ok(())
}

pub fn read_profiles<R: BufRead>(reader: R, origin: &Path) -> Result<BTreeMap<String, EgoProfile>> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: EgoProfile =
            serde_json::from_str(&line).map_err(|e| Error::parse(origin, i as u64 + 1, e.to_string()))?;
        out.insert(p.user_id.clone(), p);
    }
    Ok(out)
}

pub fn write_profiles_file(path: &Path, profiles: &BTreeMap<String, EgoProfile>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_profiles(std::io::BufWriter::new(f), profiles)
}

pub fn read_profiles_file(path: &Path) -> Result<BTreeMap<String, EgoProfile>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_profiles(std::io::BufReader::new(f), path)
}
