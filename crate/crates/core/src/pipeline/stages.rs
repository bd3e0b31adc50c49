use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::catnet::{
    average_feature_set, category_correlation, category_spend_table, community_feature_sets, feature_correlations,
    kmeans_with_selection, louvain, threshold_graph, CategoryFeatures, CorrelationMatrix, FeatureCorrelations,
    KMeansOptions,
};
use crate::directory::CategoryDirectory;
use crate::dynamics::{
    group_profiles, per_pcg_profiles, weekly_node_features, weekly_vectors, write_group_csv, write_pcg_csv,
    GroupProfile, Grouping, WeeklyScope,
};
use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::ingest::{
    assemble_profiles, filter_active_core, largest_component, parse_demographics, parse_events, parse_transactions,
    read_profiles_file, write_profiles_file, EgoProfile, ProfileOptions,
};
use crate::matrix::ClassMatrix;
use crate::nullmodel::{
    edge_assortativity, l_matrix, lambda_matrix, null_assortativity, robustness_by_removal, FeatureKind, NodeFeatures,
    NullEnsemble, RatioMatrix, RewirePlan,
};
use crate::socio::{
    compute_amp, demographics_pyramid, estimate_pareto_alpha, lorenz_and_gini, partition_classes, write_lorenz_csv,
    ClassPartition,
};
use crate::spending::{analyze_spending, spending_vectors};

pub const SUMMARY_FILE: &str = "summary.json";

pub(crate) struct StageResult {
    /// Written files, relative to the stage directory.
    pub files: Vec<String>,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub events: usize,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub transactions: usize,
    pub rejected_rows: usize,
    pub invalid_mcc: usize,
    pub profiles: usize,
    pub excluded_inactive: usize,
    pub missing_demographics: usize,
    /// Graph users that have a purchase profile.
    pub graph_users_with_profile: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassesSummary {
    pub users: usize,
    pub gini: f64,
    pub pareto_alpha: Option<f64>,
    pub pareto_note: Option<String>,
    pub class_sizes: Vec<usize>,
    pub class_mean_amp: Vec<Option<f64>>,
    pub class_sums: Vec<f64>,
    pub male_fraction: Option<f64>,
}

/// Condensed view of a class-by-class matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub label: String,
    pub diagonal: Vec<Option<f64>>,
    pub diagonal_mean: Option<f64>,
    pub off_diagonal_mean: Option<f64>,
    /// Mean over pairs at least two thirds of the class range apart.
    pub remote_mean: Option<f64>,
    /// Diagonal entries below 1 by more than three σ, when σ is known.
    pub significant_diagonal: Option<usize>,
}

impl MatrixSummary {
    pub fn of(m: &ClassMatrix, sigma: Option<&ClassMatrix>) -> Self {
        let n = m.size();
        let far = (2 * n).div_ceil(3);
        let diagonal = m.diagonal();
        MatrixSummary {
            label: m.label.clone(),
            diagonal_mean: m.mean_where(|i, j| i == j),
            off_diagonal_mean: m.mean_where(|i, j| i != j),
            remote_mean: m.mean_where(|i, j| i.abs_diff(j) >= far.max(1)),
            significant_diagonal: sigma.map(|s| {
                (0..n)
                    .filter(|&i| match (diagonal[i], s.get(i, i)) {
                        (Some(r), Some(sd)) => r < 1.0 - 3.0 * sd,
                        _ => false,
                    })
                    .count()
            }),
            diagonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendingSummary {
    pub labels: Vec<String>,
    pub excluded_users: usize,
    pub mean_cash_fraction: Vec<f64>,
    pub entropy: Vec<f64>,
    pub dispersion: Vec<f64>,
    pub d_sv: MatrixSummary,
    pub d_cash: MatrixSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssortativityRow {
    pub category: String,
    pub rho: Option<f64>,
    pub rho_null: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullmodelSummary {
    pub skipped: bool,
    pub ensemble_size: usize,
    pub swaps_factor: f64,
    pub nodes_with_features: usize,
    pub l_sv: Option<MatrixSummary>,
    pub l_cash: Option<MatrixSummary>,
    pub assortativity: Vec<AssortativityRow>,
    pub removal_fractions_skipped: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatnetSummary {
    pub retained_categories: usize,
    pub dropped_categories: usize,
    pub table_users: usize,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub communities: usize,
    pub modularity: Option<f64>,
    pub correlations: Option<FeatureCorrelations>,
    pub chosen_k: Option<usize>,
    pub best_davies_bouldin: Option<usize>,
    pub best_calinski_harabasz: Option<usize>,
    pub best_gap: Option<usize>,
    /// Why part of the stage produced nothing.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSummary {
    pub users: usize,
    pub by_class: Vec<GroupProfile>,
    pub lambda_noncash: Option<MatrixSummary>,
    pub lambda_cash: Option<MatrixSummary>,
}

/// Lazily loaded state shared by the stages of one run.
pub(crate) struct Context<'a> {
    cfg: &'a RunConfig,
    root: PathBuf,
    directory: CategoryDirectory,
    graph: Option<SocialGraph>,
    profiles: Option<BTreeMap<String, EgoProfile>>,
    partition: Option<ClassPartition>,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

fn write_matrix(dir: &Path, name: &str, m: &ClassMatrix, files: &mut Vec<String>) -> Result<()> {
    m.write_csv_file(&dir.join(name))?;
    files.push(name.to_string());
    Ok(())
}

fn write_ratio(dir: &Path, stem: &str, r: &RatioMatrix, files: &mut Vec<String>) -> Result<MatrixSummary> {
    write_matrix(dir, &format!("{stem}.csv"), &r.ratio, files)?;
    write_matrix(dir, &format!("{stem}_sigma.csv"), &r.sigma, files)?;
    Ok(MatrixSummary::of(&r.ratio, Some(&r.sigma)))
}

fn finish<T: Serialize>(dir: &Path, summary: &T, mut files: Vec<String>, skipped: bool) -> Result<StageResult> {
    write_json(&dir.join(SUMMARY_FILE), summary)?;
    files.push(SUMMARY_FILE.to_string());
    Ok(StageResult { files, skipped })
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self> {
        let directory = match &cfg.mcc_directory {
            Some(p) => CategoryDirectory::from_csv(p)?,
            None => CategoryDirectory::default(),
        };
        Ok(Context {
            cfg,
            root: cfg.output.clone(),
            directory,
            graph: None,
            profiles: None,
            partition: None,
        })
    }

    pub fn run(&mut self, stage: &str, dir: &Path) -> Result<StageResult> {
        match stage {
            "ingest" => self.ingest(dir),
            "classes" => self.classes(dir),
            "spending" => self.spending(dir),
            "nullmodel" => self.nullmodel(dir),
            "catnet" => self.catnet(dir),
            "dynamics" => self.dynamics(dir),
            other => Err(Error::InvalidArgument(format!("unknown stage `{other}`"))),
        }
    }

    fn load(&mut self) -> Result<(&SocialGraph, &BTreeMap<String, EgoProfile>, &ClassPartition)> {
        if self.graph.is_none() {
            self.graph = Some(SocialGraph::read_edge_list_file(&self.root.join("ingest/graph.csv"))?);
        }
        if self.profiles.is_none() {
            self.profiles = Some(read_profiles_file(&self.root.join("ingest/profiles.jsonl"))?);
        }
        if self.partition.is_none() {
            let p = self.root.join("classes/partition.csv");
            if p.is_file() {
                self.partition = Some(ClassPartition::read_csv_file(&p, Some(self.cfg.n_classes))?);
            }
        }
        match (&self.graph, &self.profiles, &self.partition) {
            (Some(g), Some(pr), Some(pa)) => Ok((g, pr, pa)),
            _ => Err(Error::MissingInput(self.root.join("classes/partition.csv"))),
        }
    }

    fn ingest(&mut self, dir: &Path) -> Result<StageResult> {
        let cfg = self.cfg;
        let events_path = cfg
            .events
            .as_ref()
            .ok_or_else(|| Error::Config("no events input".into()))?;
        let tx_path = cfg
            .transactions
            .as_ref()
            .ok_or_else(|| Error::Config("no transactions input".into()))?;
        let events = parse_events(events_path)?;
        let graph = largest_component(&filter_active_core(&events));
        let tx = parse_transactions(tx_path, &self.directory)?;
        for r in tx.rejected.iter().take(10) {
            log::warn!("{}:{}: {}", tx_path.display(), r.line, r.message);
        }
        let demo = match &cfg.demographics {
            Some(p) => parse_demographics(p)?,
            None => Default::default(),
        };
        let set = assemble_profiles(
            &tx.records,
            &demo,
            &self.directory,
            ProfileOptions {
                min_active_months: cfg.min_active_months,
                utc_offset_secs: cfg.utc_offset_secs,
            },
        )?;
        graph.write_edge_list_file(&dir.join("graph.csv"))?;
        write_profiles_file(&dir.join("profiles.jsonl"), &set.profiles)?;
        let summary = IngestSummary {
            events: events.len(),
            graph_nodes: graph.node_count(),
            graph_edges: graph.edge_count(),
            transactions: tx.records.len(),
            rejected_rows: tx.rejected.len(),
            invalid_mcc: tx.invalid_mcc,
            profiles: set.profiles.len(),
            excluded_inactive: set.excluded_inactive,
            missing_demographics: set.missing_demographics,
            graph_users_with_profile: graph.labels().iter().filter(|l| set.profiles.contains_key(*l)).count(),
        };
        self.graph = Some(graph);
        self.profiles = Some(set.profiles);
        self.partition = None;
        finish(dir, &summary, vec!["graph.csv".into(), "profiles.jsonl".into()], false)
    }

    fn classes(&mut self, dir: &Path) -> Result<StageResult> {
        if self.profiles.is_none() {
            self.profiles = Some(read_profiles_file(&self.root.join("ingest/profiles.jsonl"))?);
        }
        let profiles = self.profiles.as_ref().expect("profiles loaded");
        let amp = compute_amp(profiles);
        let ineq = lorenz_and_gini(&amp)?;
        let (pareto_alpha, pareto_note) = match estimate_pareto_alpha(&amp, self.cfg.tail_fraction) {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let partition = partition_classes(&amp, self.cfg.n_classes)?;
        let pyramid = demographics_pyramid(profiles, &partition);

        let mut w = csv::Writer::from_writer(create(&dir.join("amp.csv"))?);
        w.write_record(["user_id", "amp", "active_months"])?;
        for e in amp.entries() {
            w.write_record([e.user_id.clone(), format!("{}", e.amp), e.active_months.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("amp.csv"), e))?;
        partition.write_csv_file(&dir.join("partition.csv"))?;
        write_lorenz_csv(create(&dir.join("lorenz.csv"))?, &ineq.lorenz)?;
        pyramid.write_csv(create(&dir.join("pyramid.csv"))?)?;

        let summary = ClassesSummary {
            users: amp.len(),
            gini: ineq.gini,
            pareto_alpha,
            pareto_note,
            class_sizes: partition.sizes(),
            class_mean_amp: partition.mean_amp(),
            class_sums: partition.class_sums().to_vec(),
            male_fraction: pyramid.male_fraction(),
        };
        self.partition = Some(partition);
        let files = ["amp.csv", "partition.csv", "lorenz.csv", "pyramid.csv"]
            .map(String::from)
            .to_vec();
        finish(dir, &summary, files, false)
    }

    fn spending(&mut self, dir: &Path) -> Result<StageResult> {
        let per_capita = self.cfg.per_capita;
        let directory = self.directory.clone();
        let (_, profiles, partition) = self.load()?;
        let report = analyze_spending(profiles, partition, &directory, per_capita)?;
        let mut files = Vec::new();

        let mut w = csv::Writer::from_writer(create(&dir.join("shares.csv"))?);
        let mut header = vec!["pcg".to_string()];
        header.extend((1..=partition.n_classes()).map(|c| c.to_string()));
        w.write_record(&header)?;
        for (label, row) in report.shares.labels.iter().zip(&report.shares.shares) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(dir.join("shares.csv"), e))?;
        files.push("shares.csv".into());

        write_matrix(dir, "d_sv.csv", &report.d_sv, &mut files)?;
        write_matrix(dir, "d_cash.csv", &report.d_cash, &mut files)?;

        let mut w = csv::Writer::from_writer(create(&dir.join("class_profiles.csv"))?);
        let mut header: Vec<String> = [
            "class",
            "size",
            "cash_fraction",
            "dispersion",
            "dispersion_std",
            "entropy",
            "entropy_with_cash",
        ]
        .map(String::from)
        .to_vec();
        header.extend(report.labels.iter().cloned());
        w.write_record(&header)?;
        for c in &report.classes {
            let mut rec = vec![
                c.class.to_string(),
                c.size.to_string(),
                format!("{}", c.mean_cash_fraction),
                format!("{}", c.dispersion.mean),
                format!("{}", c.dispersion.std),
                format!("{}", c.entropy),
                format!("{}", c.entropy_with_cash),
            ];
            rec.extend(c.mean_vector.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(dir.join("class_profiles.csv"), e))?;
        files.push("class_profiles.csv".into());

        let summary = SpendingSummary {
            labels: report.labels.clone(),
            excluded_users: report.excluded_users,
            mean_cash_fraction: report.classes.iter().map(|c| c.mean_cash_fraction).collect(),
            entropy: report.classes.iter().map(|c| c.entropy).collect(),
            dispersion: report.classes.iter().map(|c| c.dispersion.mean).collect(),
            d_sv: MatrixSummary::of(&report.d_sv, None),
            d_cash: MatrixSummary::of(&report.d_cash, None),
        };
        finish(dir, &summary, files, false)
    }

    fn plan(&self) -> RewirePlan {
        RewirePlan {
            swaps_factor: self.cfg.swaps_factor,
            ensemble_size: self.cfg.ensemble_size,
            seed: self.cfg.seed,
        }
    }

    fn nullmodel(&mut self, dir: &Path) -> Result<StageResult> {
        let cfg = self.cfg;
        if cfg.skip_nullmodel {
            let summary = NullmodelSummary {
                skipped: true,
                ensemble_size: 0,
                swaps_factor: cfg.swaps_factor,
                nodes_with_features: 0,
                l_sv: None,
                l_cash: None,
                assortativity: Vec::new(),
                removal_fractions_skipped: Vec::new(),
            };
            return finish(dir, &summary, Vec::new(), true);
        }
        let plan = self.plan();
        let directory = self.directory.clone();
        let (g, profiles, partition) = self.load()?;
        let ens = NullEnsemble::generate(g, &plan)?;
        let sv = spending_vectors(profiles, &directory);
        let n_labels = sv.labels.len();
        let mut files = Vec::new();

        let features = NodeFeatures::from_lookup(g, partition, n_labels, FeatureKind::PerComponentAbs, |l| {
            sv.vectors.get(l).map(|v| v.values.clone())
        });
        let l_sv = l_matrix(g, &ens, &features)?;
        let cash = NodeFeatures::from_lookup(g, partition, 1, FeatureKind::PerComponentAbs, |l| {
            sv.cash_fraction.get(l).map(|c| vec![*c])
        });
        let l_cash = l_matrix(g, &ens, &cash)?;
        let l_sv_summary = write_ratio(dir, "L_sv", &l_sv, &mut files)?;
        let l_cash_summary = write_ratio(dir, "L_cash", &l_cash, &mut files)?;

        // 17 components with cash first; cash-only users put everything on cash
        let mut labels = vec![directory.pcg_label(directory.cash_pcg()).to_string()];
        labels.extend(sv.labels.iter().cloned());
        let per_node: Vec<Option<Vec<f64>>> = g
            .labels()
            .iter()
            .map(|l| match (sv.vectors.get(l), sv.cash_fraction.get(l)) {
                (Some(v), _) => Some(v.with_cash()),
                (None, Some(_)) => {
                    let mut v = vec![0.0; labels.len()];
                    v[0] = 1.0;
                    Some(v)
                }
                _ => None,
            })
            .collect();
        let values: Vec<Vec<Option<f64>>> = (0..labels.len())
            .map(|k| per_node.iter().map(|v| v.as_ref().map(|v| v[k])).collect())
            .collect();
        let assortativity: Vec<AssortativityRow> = labels
            .iter()
            .zip(&values)
            .map(|(l, r)| AssortativityRow {
                category: l.clone(),
                rho: edge_assortativity(g, r),
                rho_null: null_assortativity(&ens, r),
            })
            .collect();
        let mut w = csv::Writer::from_writer(create(&dir.join("assortativity.csv"))?);
        w.write_record(["category", "rho", "rho_null"])?;
        for a in &assortativity {
            w.write_record([a.category.clone(), fmt_opt(a.rho), fmt_opt(a.rho_null)])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("assortativity.csv"), e))?;
        files.push("assortativity.csv".into());

        let robust = robustness_by_removal(g, &values, &cfg.removal_fractions, cfg.removal_repeats, cfg.seed)?;
        let mut w = csv::Writer::from_writer(create(&dir.join("robustness.csv"))?);
        let mut header = vec!["category".to_string(), "full".to_string()];
        header.extend(robust.curves.iter().map(|c| format!("removed_{}", c.fraction)));
        w.write_record(&header)?;
        for (k, l) in labels.iter().enumerate() {
            let mut rec = vec![l.clone(), fmt_opt(robust.full[k])];
            rec.extend(robust.curves.iter().map(|c| fmt_opt(c.rho[k])));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(dir.join("robustness.csv"), e))?;
        files.push("robustness.csv".into());

        let summary = NullmodelSummary {
            skipped: false,
            ensemble_size: ens.len(),
            swaps_factor: plan.swaps_factor,
            nodes_with_features: features.present_count(),
            l_sv: Some(l_sv_summary),
            l_cash: Some(l_cash_summary),
            assortativity,
            removal_fractions_skipped: robust.skipped_fractions,
        };
        finish(dir, &summary, files, false)
    }

    fn catnet(&mut self, dir: &Path) -> Result<StageResult> {
        let cfg = self.cfg;
        let directory = self.directory.clone();
        let (_, profiles, partition) = self.load()?;
        let table = category_spend_table(profiles, &directory, cfg.min_purchases);
        let afs = average_feature_set(&table, profiles, partition, cfg.afs_weighting);
        let mut files = Vec::new();
        let mut summary = CatnetSummary {
            retained_categories: table.category_count(),
            dropped_categories: table.dropped.len(),
            table_users: table.user_count(),
            graph_nodes: 0,
            graph_edges: 0,
            communities: 0,
            modularity: None,
            correlations: None,
            chosen_k: None,
            best_davies_bouldin: None,
            best_calinski_harabasz: None,
            best_gap: None,
            note: None,
        };

        if table.category_count() < 2 {
            summary.note = Some(format!(
                "{} categories reach {} purchases; correlation network not built",
                table.category_count(),
                cfg.min_purchases
            ));
        } else {
            let corr = category_correlation(&table, cfg.mean_scope)?;
            write_correlation_csv(&dir.join("correlation.csv"), &corr)?;
            files.push("correlation.csv".into());
            let cg = threshold_graph(&corr, cfg.rho_min, cfg.support_min);
            let mut w = csv::Writer::from_writer(create(&dir.join("category_graph.csv"))?);
            w.write_record(["source", "target", "rho"])?;
            for &(i, j, r) in &cg.edges {
                w.write_record([cg.nodes[i].to_string(), cg.nodes[j].to_string(), format!("{r}")])?;
            }
            w.flush().map_err(|e| Error::io(dir.join("category_graph.csv"), e))?;
            files.push("category_graph.csv".into());

            let comm = louvain(cg.node_count(), &cg.edges, cfg.seed);
            let labels: Vec<(u32, usize)> = cg.nodes.iter().copied().zip(comm.labels.iter().copied()).collect();
            let mut w = csv::Writer::from_writer(create(&dir.join("communities.csv"))?);
            w.write_record(["mcc", "community"])?;
            for &(code, c) in &labels {
                w.write_record([code.to_string(), c.to_string()])?;
            }
            w.flush().map_err(|e| Error::io(dir.join("communities.csv"), e))?;
            files.push("communities.csv".into());
            summary.graph_nodes = cg.node_count();
            summary.graph_edges = cg.edge_count();
            summary.communities = comm.count;
            summary.modularity = (cg.edge_count() > 0).then_some(comm.modularity);
            if cg.edge_count() == 0 {
                summary.note = Some(format!(
                    "no category pair passes ρ ≥ {} with {} co-purchasers",
                    cfg.rho_min, cfg.support_min
                ));
            }

            let community_sets = community_feature_sets(&afs, &labels);
            write_afs_csv(
                &dir.join("community_afs.csv"),
                "community",
                community_sets.iter().map(|(c, f)| (c.to_string(), f)),
            )?;
            files.push("community_afs.csv".into());
        }

        let complete: Vec<&CategoryFeatures> = afs.iter().filter(|f| f.triple().is_some()).collect();
        let points: Vec<Vec<f64>> = complete
            .iter()
            .map(|f| f.triple().expect("complete").to_vec())
            .collect();
        let mut cluster: BTreeMap<u32, usize> = BTreeMap::new();
        if !points.is_empty() {
            let sel = kmeans_with_selection(
                &points,
                &KMeansOptions {
                    k_min: cfg.kmeans_min,
                    k_max: cfg.kmeans_max,
                    restarts: cfg.kmeans_restarts,
                    gap_references: cfg.gap_references,
                    standardize: cfg.standardize,
                    seed: cfg.seed,
                },
            )?;
            let mut w = csv::Writer::from_writer(create(&dir.join("kselection.csv"))?);
            w.write_record(["k", "inertia", "davies_bouldin", "calinski_harabasz", "gap", "gap_sd"])?;
            for c in &sel.table {
                w.write_record([
                    c.k.to_string(),
                    format!("{}", c.inertia),
                    fmt_opt(c.davies_bouldin),
                    fmt_opt(c.calinski_harabasz),
                    format!("{}", c.gap),
                    format!("{}", c.gap_sd),
                ])?;
            }
            w.flush().map_err(|e| Error::io(dir.join("kselection.csv"), e))?;
            files.push("kselection.csv".into());
            if sel.labels.len() == complete.len() {
                cluster = complete.iter().zip(&sel.labels).map(|(f, &l)| (f.code, l)).collect();
            }
            summary.chosen_k = sel.chosen_k;
            summary.best_davies_bouldin = sel.best_davies_bouldin;
            summary.best_calinski_harabasz = sel.best_calinski_harabasz;
            summary.best_gap = sel.best_gap;
        }
        let mut w = csv::Writer::from_writer(create(&dir.join("afs.csv"))?);
        w.write_record(["mcc", "purchasers", "age", "gender", "seg", "cluster"])?;
        for f in &afs {
            w.write_record([
                f.code.to_string(),
                f.purchasers.to_string(),
                fmt_opt(f.age.value()),
                fmt_opt(f.gender.value()),
                fmt_opt(f.seg.value()),
                cluster.get(&f.code).map_or_else(|| "NA".into(), |c| c.to_string()),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("afs.csv"), e))?;
        files.push("afs.csv".into());
        summary.correlations = Some(feature_correlations(&afs));
        finish(dir, &summary, files, false)
    }

    fn dynamics(&mut self, dir: &Path) -> Result<StageResult> {
        let cfg = self.cfg;
        let plan = self.plan();
        let directory = self.directory.clone();
        let (g, profiles, partition) = self.load()?;
        let mut files = Vec::new();
        let global = weekly_vectors(profiles, &directory, &WeeklyScope::Global);
        let mut by_class = Vec::new();
        for (grouping, name) in [
            (Grouping::Class, "weekly_class.csv"),
            (Grouping::Age, "weekly_age.csv"),
            (Grouping::Gender, "weekly_gender.csv"),
        ] {
            let rows = group_profiles(&global, profiles, partition, grouping, cfg.spend_weighted);
            write_group_csv(create(&dir.join(name))?, &rows)?;
            files.push(name.to_string());
            if grouping == Grouping::Class {
                by_class = rows;
            }
        }
        let pcg = per_pcg_profiles(profiles, &directory, partition, cfg.spend_weighted);
        write_pcg_csv(create(&dir.join("weekly_pcg.csv"))?, &pcg)?;
        files.push("weekly_pcg.csv".into());

        let (mut lambda_noncash, mut lambda_cash) = (None, None);
        if !cfg.skip_nullmodel {
            let ens = NullEnsemble::generate(g, &plan)?;
            let noncash = weekly_vectors(profiles, &directory, &WeeklyScope::NonCash);
            let l = lambda_matrix(g, &ens, &weekly_node_features(g, partition, &noncash))?;
            lambda_noncash = Some(write_ratio(dir, "lambda_noncash", &l, &mut files)?);
            let cash = weekly_vectors(profiles, &directory, &WeeklyScope::Cash);
            let l = lambda_matrix(g, &ens, &weekly_node_features(g, partition, &cash))?;
            lambda_cash = Some(write_ratio(dir, "lambda_cash", &l, &mut files)?);
        }
        let summary = DynamicsSummary {
            users: global.vectors.len(),
            by_class,
            lambda_noncash,
            lambda_cash,
        };
        finish(dir, &summary, files, false)
    }
}

pub fn write_correlation_csv(path: &Path, corr: &CorrelationMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["mcc".to_string()];
    header.extend(corr.categories.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    for i in 0..corr.size() {
        let mut rec = vec![corr.categories[i].to_string()];
        rec.extend((0..corr.size()).map(|j| fmt_opt(corr.get(i, j))));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_afs_csv<'f>(
    path: &Path,
    key: &str,
    rows: impl Iterator<Item = (String, &'f CategoryFeatures)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([key, "purchasers", "age", "gender", "seg"])?;
    for (k, f) in rows {
        w.write_record([
            k,
            f.purchasers.to_string(),
            fmt_opt(f.age.value()),
            fmt_opt(f.gender.value()),
            fmt_opt(f.seg.value()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
