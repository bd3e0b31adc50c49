use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::de::DeserializeOwned;

use super::stages::{CatnetSummary, ClassesSummary, SUMMARY_FILE};
use super::Manifest;
use crate::dynamics::GroupProfile;
use crate::error::{Error, Result};
use crate::matrix::ClassMatrix;
use crate::socio::ClassPartition;
use crate::synth::PipelineOutputs;

pub(crate) fn read_summary<T: DeserializeOwned>(dir: &Path, stage: &str) -> Result<Option<T>> {
    let p = dir.join(stage).join(SUMMARY_FILE);
    if !p.is_file() {
        return Ok(None);
    }
    let f = fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
    Ok(Some(serde_json::from_reader(std::io::BufReader::new(f))?))
}

fn read_matrix(path: &Path) -> Result<Option<ClassMatrix>> {
    if !path.is_file() {
        return Ok(None);
    }
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    Ok(Some(ClassMatrix::read_csv(f, &label, path)?))
}

fn read_pair(dir: &Path, stem: &str) -> Result<Option<(ClassMatrix, ClassMatrix)>> {
    let ratio = read_matrix(&dir.join(format!("{stem}.csv")))?;
    let sigma = read_matrix(&dir.join(format!("{stem}_sigma.csv")))?;
    Ok(ratio.zip(sigma))
}

/// Reads rows written by `write_group_csv`.
pub fn read_group_csv<R: Read>(reader: R, origin: &Path) -> Result<Vec<GroupProfile>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        if row.len() != 9 {
            return Err(Error::parse(origin, line, "expected group,d0..d6,members"));
        }
        let mut values = [0.0; 7];
        for (d, v) in values.iter_mut().enumerate() {
            *v = row[d + 1]
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("bad value `{}`", &row[d + 1])))?;
        }
        let members = row[8]
            .parse()
            .map_err(|_| Error::parse(origin, line, "bad member count"))?;
        out.push(GroupProfile {
            group: row[0].to_string(),
            values,
            members,
        });
    }
    Ok(out)
}

fn read_communities(path: &Path) -> Result<BTreeMap<u32, usize>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let code = row.get(0).and_then(|s| s.parse().ok());
        let c = row.get(1).and_then(|s| s.parse().ok());
        match (code, c) {
            (Some(code), Some(c)) => {
                out.insert(code, c);
            }
            _ => return Err(Error::parse(path, line, "expected mcc,community")),
        }
    }
    Ok(out)
}

/// Collects what a pipeline run left in `dir`; anything absent stays `None`.
pub fn load_outputs(dir: &Path) -> Result<PipelineOutputs> {
    let mut out = PipelineOutputs {
        seed: Manifest::read(dir).ok().map(|m| m.seed),
        ..Default::default()
    };
    let partition = dir.join("classes/partition.csv");
    if partition.is_file() {
        let p = ClassPartition::read_csv_file(&partition, None)?;
        out.classes = Some(p.iter().map(|(u, c, _)| (u.to_string(), c)).collect());
    }
    if let Some(s) = read_summary::<ClassesSummary>(dir, "classes")? {
        out.gini = Some(s.gini);
        out.male_fraction = s.male_fraction;
    }
    out.l_sv = read_pair(&dir.join("nullmodel"), "L_sv")?;
    out.lambda = read_pair(&dir.join("dynamics"), "lambda_noncash")?;
    if let Some(s) = read_summary::<CatnetSummary>(dir, "catnet")? {
        out.age_seg_correlation = s.correlations.and_then(|c| c.age_seg).map(|c| c.r);
    }
    let communities = dir.join("catnet/communities.csv");
    if communities.is_file() {
        out.communities = Some(read_communities(&communities)?);
    }
    let weekly = dir.join("dynamics/weekly_class.csv");
    if weekly.is_file() {
        let f = fs::File::open(&weekly).map_err(|e| Error::io(&weekly, e))?;
        out.weekly_by_class = Some(read_group_csv(f, &weekly)?);
    }
    Ok(out)
}
