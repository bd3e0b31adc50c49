//! Merchant category codes and their purchase category groups.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// The shipped `mcc,name,pcg` table.
pub const DEFAULT_DIRECTORY_CSV: &str = include_str!("../data/mcc_directory.csv");

/// Label of the cash retrieval / money transfer group.
pub const CASH_PCG: &str = "Service Providers";

/// The 17 retained purchase category groups; the first is the cash group.
pub const DEFAULT_ACTIVE_PCGS: [&str; 17] = [
    CASH_PCG,
    "Retail Stores",
    "High Risk Personal Retail",
    "Restaurants",
    "Gas Stations",
    "Telecom",
    "Mail Phone Order",
    "Automobiles",
    "Professional Services",
    "Wholesale Trade",
    "Clothing Stores",
    "Hotels and Motels",
    "Airlines",
    "Education",
    "Miscellaneous Stores",
    "Entertainment",
    "Business Services",
];

pub const ACTIVE_PCG_COUNT: usize = 17;

/// Index of a purchase category group within a [`CategoryDirectory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PcgId(pub u16);

#[derive(Debug, Clone)]
pub struct MccEntry {
    pub name: String,
    pub pcg: PcgId,
}

#[derive(Debug, Deserialize)]
struct DirectoryRow {
    mcc: u32,
    name: String,
    pcg: String,
}

/// Maps every MCC to exactly one PCG and fixes the ordered retained set.
#[derive(Debug, Clone)]
pub struct CategoryDirectory {
    mccs: BTreeMap<u32, MccEntry>,
    pcg_labels: Vec<String>,
    active: Vec<PcgId>,
}

impl Default for CategoryDirectory {
    fn default() -> Self {
        Self::from_reader(DEFAULT_DIRECTORY_CSV.as_bytes(), Path::new("<builtin>"))
            .expect("builtin MCC directory is valid")
    }
}

impl CategoryDirectory {
    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    pub fn from_reader<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        Self::from_reader_with_active(reader, origin, &DEFAULT_ACTIVE_PCGS)
    }

    /// Reads a directory whose retained groups are `active`, `active[0]` being the cash group.
    pub fn from_reader_with_active<R: Read>(reader: R, origin: &Path, active: &[&str]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut mccs = BTreeMap::new();
        let mut pcg_labels: Vec<String> = Vec::new();
        for (i, row) in rdr.deserialize::<DirectoryRow>().enumerate() {
            let line = i as u64 + 2;
            let row = row.map_err(|e| Error::parse(origin, line, e.to_string()))?;
            let pcg = match pcg_labels.iter().position(|l| *l == row.pcg) {
                Some(p) => p,
                None => {
                    pcg_labels.push(row.pcg.clone());
                    pcg_labels.len() - 1
                }
            };
            let entry = MccEntry {
                name: row.name,
                pcg: PcgId(pcg as u16),
            };
            if mccs.insert(row.mcc, entry).is_some() {
                return Err(Error::parse(origin, line, format!("duplicate mcc {}", row.mcc)));
            }
        }
        if active.len() != ACTIVE_PCG_COUNT {
            return Err(Error::InvalidArgument(format!(
                "expected {ACTIVE_PCG_COUNT} retained groups, got {}",
                active.len()
            )));
        }
        let active = active
            .iter()
            .map(|label| {
                pcg_labels
                    .iter()
                    .position(|l| l == label)
                    .map(|p| PcgId(p as u16))
                    .ok_or_else(|| Error::InvalidArgument(format!("retained group `{label}` has no MCC")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CategoryDirectory {
            mccs,
            pcg_labels,
            active,
        })
    }

    pub fn get(&self, mcc: u32) -> Option<&MccEntry> {
        self.mccs.get(&mcc)
    }

    pub fn contains(&self, mcc: u32) -> bool {
        self.mccs.contains_key(&mcc)
    }

    pub fn name(&self, mcc: u32) -> Option<&str> {
        self.mccs.get(&mcc).map(|e| e.name.as_str())
    }

    pub fn pcg_of(&self, mcc: u32) -> Option<PcgId> {
        self.mccs.get(&mcc).map(|e| e.pcg)
    }

    pub fn pcg_label(&self, id: PcgId) -> &str {
        &self.pcg_labels[id.0 as usize]
    }

    pub fn pcg_id(&self, label: &str) -> Option<PcgId> {
        self.pcg_labels.iter().position(|l| l == label).map(|p| PcgId(p as u16))
    }

    pub fn pcg_count(&self) -> usize {
        self.pcg_labels.len()
    }

    /// The ordered retained set K_17; element 0 is the cash group.
    pub fn active_pcgs(&self) -> &[PcgId] {
        &self.active
    }

    pub fn cash_pcg(&self) -> PcgId {
        self.active[0]
    }

    /// The 16 retained non-cash groups, in order.
    pub fn non_cash_pcgs(&self) -> &[PcgId] {
        &self.active[1..]
    }

    pub fn active_labels(&self) -> Vec<&str> {
        self.active.iter().map(|&p| self.pcg_label(p)).collect()
    }

    pub fn non_cash_labels(&self) -> Vec<&str> {
        self.non_cash_pcgs().iter().map(|&p| self.pcg_label(p)).collect()
    }

    pub fn is_cash_mcc(&self, mcc: u32) -> bool {
        self.pcg_of(mcc) == Some(self.cash_pcg())
    }

    pub fn mccs(&self) -> impl Iterator<Item = (u32, &MccEntry)> {
        self.mccs.iter().map(|(&c, e)| (c, e))
    }

    /// Codes eligible for merchant-level analysis: every known code outside the cash group.
    pub fn merchant_universe(&self) -> Vec<u32> {
        let cash = self.cash_pcg();
        self.mccs
            .iter()
            .filter(|(_, e)| e.pcg != cash)
            .map(|(&c, _)| c)
            .collect()
    }

    pub fn mccs_in(&self, pcg: PcgId) -> Vec<u32> {
        self.mccs
            .iter()
            .filter(|(_, e)| e.pcg == pcg)
            .map(|(&c, _)| c)
            .collect()
    }
}
