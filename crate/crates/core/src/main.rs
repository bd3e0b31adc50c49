use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use socioscope::catnet::{
    average_feature_set, category_correlation, category_spend_table, kmeans_with_selection, louvain, threshold_graph,
    AfsWeighting, KMeansOptions, MeanScope,
};
use socioscope::directory::CategoryDirectory;
use socioscope::dynamics::{
    group_profiles, per_pcg_profiles, weekly_vectors, write_group_csv, write_pcg_csv, Grouping, WeeklyScope,
};
use socioscope::graph::SocialGraph;
use socioscope::ingest::{
    assemble_profiles, filter_active_core, largest_component, parse_demographics, parse_events, parse_transactions,
    read_profiles_file, write_profiles_file, EgoProfile, ProfileOptions,
};
use socioscope::nullmodel::{l_matrix, FeatureKind, NodeFeatures, NullEnsemble, RewirePlan};
use socioscope::pipeline::{build_report, run_pipeline, write_afs_csv, write_correlation_csv, RunConfig};
use socioscope::socio::{
    compute_amp, estimate_pareto_alpha, lorenz_and_gini, partition_classes, write_lorenz_csv, ClassPartition,
};
use socioscope::spending::{analyze_spending, spending_vectors};
use socioscope::synth::{generate, write_synth, SynthSpec};
use socioscope::{Error, Result};

#[derive(Parser)]
#[command(
    name = "socioscope",
    version,
    about = "Socioeconomic analysis of coupled call and purchase logs"
)]
struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "SOCIOSCOPE_THREADS")]
    threads: Option<usize>,

    /// More log output; repeat for debug detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the social graph and per-user purchase profiles.
    Ingest(IngestArgs),
    /// AMP, Gini, Pareto exponent and the equal-spend class partition.
    Classes(ClassesArgs),
    /// Class spending profiles and distance matrices.
    Spending(SpendingArgs),
    /// Configuration-model ensemble and the L ratio matrix.
    Nullmodel(NullmodelArgs),
    /// Category correlation network, communities and feature clusters.
    Catnet(CatnetArgs),
    /// Weekly purchase profiles by group.
    Dynamics(DynamicsArgs),
    /// Generate a synthetic data set with recorded ground truth.
    Synth(SynthArgs),
    /// Run every stage under a manifest, reusing unchanged stages.
    Run(RunArgs),
    /// Print the report of a finished run directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct DirectoryArg {
    /// Replacement `mcc,name,pcg` table.
    #[arg(long)]
    mcc_directory: Option<PathBuf>,
}

impl DirectoryArg {
    fn load(&self) -> Result<CategoryDirectory> {
        match &self.mcc_directory {
            Some(p) => CategoryDirectory::from_csv(p),
            None => Ok(CategoryDirectory::default()),
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    transactions: PathBuf,
    #[arg(long)]
    demographics: Option<PathBuf>,
    #[command(flatten)]
    directory: DirectoryArg,
    #[arg(long, default_value_t = 2)]
    min_active_months: usize,
    /// Seconds east of UTC applied before taking the weekday.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    utc_offset: i64,
    /// Directory receiving graph.csv and profiles.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassesArgs {
    /// Number of classes.
    #[arg(long = "n", default_value_t = 9)]
    n_classes: usize,
    /// Profiles written by `ingest`.
    #[arg(long)]
    input: PathBuf,
    /// Partition CSV `user_id,class,amp`.
    #[arg(long)]
    out: PathBuf,
    /// Lorenz curve CSV `f,C(f)`.
    #[arg(long)]
    lorenz: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    tail_fraction: f64,
}

#[derive(Args)]
struct SpendingArgs {
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    #[arg(long)]
    out_matrices: PathBuf,
    /// Divide class totals by class size before normalizing shares.
    #[arg(long)]
    per_capita: bool,
    #[command(flatten)]
    directory: DirectoryArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Subset {
    /// The 16 non-cash groups.
    #[value(name = "k2-17")]
    NonCash,
    /// Cash only.
    #[value(name = "k1")]
    Cash,
}

#[derive(Args)]
struct NullmodelArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    swaps_factor: f64,
    #[arg(long, default_value_t = 100)]
    ensemble: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "k2-17")]
    subset: Subset,
    /// Directory receiving L.csv and L_sigma.csv.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    directory: DirectoryArg,
}

#[derive(Args)]
struct CatnetArgs {
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    #[arg(long, default_value_t = 1.5)]
    rho_min: f64,
    #[arg(long, default_value_t = 1000)]
    support_min: u64,
    #[arg(long, default_value_t = 100)]
    min_purchases: u64,
    /// Range of cluster counts, `lo..hi` inclusive.
    #[arg(long, default_value = "2..25")]
    kmeans: String,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 20)]
    gap_references: usize,
    /// Normalize over purchasers only instead of all users.
    #[arg(long)]
    purchasers_mean: bool,
    /// Group purchasers by feature value when averaging features.
    #[arg(long)]
    per_value_afs: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    directory: DirectoryArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    Class,
    Age,
    Gender,
}

#[derive(Args)]
struct DynamicsArgs {
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    #[arg(long, value_enum, default_value = "class")]
    group: GroupArg,
    /// One class-averaged profile per purchase category group.
    #[arg(long)]
    per_pcg: bool,
    /// Weight users by their spend instead of counting each once.
    #[arg(long)]
    spend_weighted: bool,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    directory: DirectoryArg,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON generator spec; defaults apply to absent keys.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file whose keys mirror the run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    transactions: Option<PathBuf>,
    #[arg(long)]
    demographics: Option<PathBuf>,
    /// Ground truth to score the run against.
    #[arg(long)]
    oracle: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long)]
    skip_nullmodel: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a run.
    dir: PathBuf,
    /// Print the machine summary instead of text.
    #[arg(long)]
    json: bool,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn load_inputs(profiles: &Path, partition: &Path) -> Result<(BTreeMap<String, EgoProfile>, ClassPartition)> {
    Ok((
        read_profiles_file(profiles)?,
        ClassPartition::read_csv_file(partition, None)?,
    ))
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let directory = a.directory.load()?;
    let events = parse_events(&a.events)?;
    let graph = largest_component(&filter_active_core(&events));
    let tx = parse_transactions(&a.transactions, &directory)?;
    let demo = match &a.demographics {
        Some(p) => parse_demographics(p)?,
        None => Default::default(),
    };
    let set = assemble_profiles(
        &tx.records,
        &demo,
        &directory,
        ProfileOptions {
            min_active_months: a.min_active_months,
            utc_offset_secs: a.utc_offset,
        },
    )?;
    mkdir(&a.out)?;
    graph.write_edge_list_file(&a.out.join("graph.csv"))?;
    write_profiles_file(&a.out.join("profiles.jsonl"), &set.profiles)?;
    println!(
        "graph {} users / {} edges; {} profiles ({} inactive dropped, {} rows rejected)",
        graph.node_count(),
        graph.edge_count(),
        set.profiles.len(),
        set.excluded_inactive,
        tx.rejected.len()
    );
    Ok(())
}

fn classes(a: &ClassesArgs) -> Result<()> {
    let profiles = read_profiles_file(&a.input)?;
    let amp = compute_amp(&profiles);
    let ineq = lorenz_and_gini(&amp)?;
    let partition = partition_classes(&amp, a.n_classes)?;
    partition.write_csv_file(&a.out)?;
    if let Some(p) = &a.lorenz {
        write_lorenz_csv(create(p)?, &ineq.lorenz)?;
    }
    println!("users {}  Gini {:.4}", amp.len(), ineq.gini);
    match estimate_pareto_alpha(&amp, a.tail_fraction) {
        Ok(alpha) => println!("Pareto alpha {alpha:.4}"),
        Err(e) => println!("Pareto alpha unavailable: {e}"),
    }
    let sizes: Vec<String> = partition.sizes().iter().map(|s| s.to_string()).collect();
    println!("class sizes {}", sizes.join(" "));
    Ok(())
}

fn spending(a: &SpendingArgs) -> Result<()> {
    let directory = a.directory.load()?;
    let (profiles, partition) = load_inputs(&a.profiles, &a.partition)?;
    let report = analyze_spending(&profiles, &partition, &directory, a.per_capita)?;
    mkdir(&a.out_matrices)?;
    report.d_sv.write_csv_file(&a.out_matrices.join("d_sv.csv"))?;
    report.d_cash.write_csv_file(&a.out_matrices.join("d_cash.csv"))?;
    let path = a.out_matrices.join("shares.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut header = vec!["pcg".to_string()];
    header.extend((1..=partition.n_classes()).map(|c| c.to_string()));
    w.write_record(&header)?;
    for (label, row) in report.shares.labels.iter().zip(&report.shares.shares) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    for c in &report.classes {
        println!(
            "class {:<2} size {:<8} cash {:.3}  entropy {:.3}  dispersion {:.3}",
            c.class, c.size, c.mean_cash_fraction, c.entropy, c.dispersion.mean
        );
    }
    Ok(())
}

fn nullmodel(a: &NullmodelArgs) -> Result<()> {
    let directory = a.directory.load()?;
    let g = SocialGraph::read_edge_list_file(&a.graph)?;
    let (profiles, partition) = load_inputs(&a.profiles, &a.partition)?;
    let sv = spending_vectors(&profiles, &directory);
    let plan = RewirePlan {
        swaps_factor: a.swaps_factor,
        ensemble_size: a.ensemble,
        seed: a.seed,
    };
    let ens = NullEnsemble::generate(&g, &plan)?;
    let features = match a.subset {
        Subset::NonCash => {
            NodeFeatures::from_lookup(&g, &partition, sv.labels.len(), FeatureKind::PerComponentAbs, |l| {
                sv.vectors.get(l).map(|v| v.values.clone())
            })
        }
        Subset::Cash => NodeFeatures::from_lookup(&g, &partition, 1, FeatureKind::PerComponentAbs, |l| {
            sv.cash_fraction.get(l).map(|c| vec![*c])
        }),
    };
    let l = l_matrix(&g, &ens, &features)?;
    mkdir(&a.out)?;
    l.ratio.write_csv_file(&a.out.join("L.csv"))?;
    l.sigma.write_csv_file(&a.out.join("L_sigma.csv"))?;
    let diag: Vec<String> = l
        .ratio
        .diagonal()
        .iter()
        .map(|d| d.map_or_else(|| "NA".into(), |x| format!("{x:.3}")))
        .collect();
    println!("L diagonal {}", diag.join(" "));
    Ok(())
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| Error::InvalidArgument(format!("expected lo..hi, got `{s}`")))?;
    let lo = lo
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad range start `{lo}`")))?;
    let hi = hi
        .trim_start_matches('=')
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad range end `{hi}`")))?;
    Ok((lo, hi))
}

fn catnet(a: &CatnetArgs) -> Result<()> {
    let directory = a.directory.load()?;
    let (profiles, partition) = load_inputs(&a.profiles, &a.partition)?;
    let (k_min, k_max) = parse_range(&a.kmeans)?;
    let scope = if a.purchasers_mean {
        MeanScope::Purchasers
    } else {
        MeanScope::AllUsers
    };
    let weighting = if a.per_value_afs {
        AfsWeighting::PerValue
    } else {
        AfsWeighting::PerUser
    };
    mkdir(&a.out)?;
    let table = category_spend_table(&profiles, &directory, a.min_purchases);
    println!(
        "{} categories retained, {} dropped",
        table.category_count(),
        table.dropped.len()
    );
    let afs = average_feature_set(&table, &profiles, &partition, weighting);
    write_afs_csv(
        &a.out.join("afs.csv"),
        "mcc",
        afs.iter().map(|f| (f.code.to_string(), f)),
    )?;
    if table.category_count() >= 2 {
        let corr = category_correlation(&table, scope)?;
        write_correlation_csv(&a.out.join("correlation.csv"), &corr)?;
        let cg = threshold_graph(&corr, a.rho_min, a.support_min);
        let comm = louvain(cg.node_count(), &cg.edges, a.seed);
        let path = a.out.join("category_graph.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["source", "target", "rho"])?;
        for &(i, j, r) in &cg.edges {
            w.write_record([cg.nodes[i].to_string(), cg.nodes[j].to_string(), format!("{r}")])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let path = a.out.join("communities.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["mcc", "community"])?;
        for (code, c) in cg.nodes.iter().zip(&comm.labels) {
            w.write_record([code.to_string(), c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        println!(
            "category graph {} nodes / {} edges; {} communities, Q {:.4}",
            cg.node_count(),
            cg.edge_count(),
            comm.count,
            comm.modularity
        );
    } else {
        println!("fewer than two categories retained; correlation network not built");
    }
    let points: Vec<Vec<f64>> = afs.iter().filter_map(|f| f.triple()).map(|t| t.to_vec()).collect();
    if !points.is_empty() {
        let sel = kmeans_with_selection(
            &points,
            &KMeansOptions {
                k_min,
                k_max,
                restarts: a.restarts,
                gap_references: a.gap_references,
                standardize: true,
                seed: a.seed,
            },
        )?;
        let path = a.out.join("kselection.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["k", "inertia", "davies_bouldin", "calinski_harabasz", "gap", "gap_sd"])?;
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x}"));
        for c in &sel.table {
            w.write_record([
                c.k.to_string(),
                format!("{}", c.inertia),
                opt(c.davies_bouldin),
                opt(c.calinski_harabasz),
                format!("{}", c.gap),
                format!("{}", c.gap_sd),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let k = |v: Option<usize>| v.map_or_else(|| "n/a".into(), |x| x.to_string());
        println!(
            "k-means: chosen {} (DB {}, CH {}, gap {})",
            k(sel.chosen_k),
            k(sel.best_davies_bouldin),
            k(sel.best_calinski_harabasz),
            k(sel.best_gap)
        );
    }
    Ok(())
}

fn dynamics(a: &DynamicsArgs) -> Result<()> {
    let directory = a.directory.load()?;
    let (profiles, partition) = load_inputs(&a.profiles, &a.partition)?;
    let out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    if a.per_pcg {
        write_pcg_csv(
            out,
            &per_pcg_profiles(&profiles, &directory, &partition, a.spend_weighted),
        )
    } else {
        let grouping = match a.group {
            GroupArg::Class => Grouping::Class,
            GroupArg::Age => Grouping::Age,
            GroupArg::Gender => Grouping::Gender,
        };
        let set = weekly_vectors(&profiles, &directory, &WeeklyScope::Global);
        write_group_csv(
            out,
            &group_profiles(&set, &profiles, &partition, grouping, a.spend_weighted),
        )
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => SynthSpec::from_json_file(p)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let data = generate(&spec)?;
    write_synth(&data, &a.out)?;
    let t = &data.truth;
    println!(
        "{} users, graph {} nodes / {} edges, {} transactions, written to {}",
        t.users.len(),
        t.graph_nodes,
        t.graph_edges,
        t.transactions,
        a.out.display()
    );
    Ok(())
}

fn run(a: &RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_toml_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &a.events {
        cfg.events = Some(v.clone());
    }
    if let Some(v) = &a.transactions {
        cfg.transactions = Some(v.clone());
    }
    if let Some(v) = &a.demographics {
        cfg.demographics = Some(v.clone());
    }
    if let Some(v) = &a.oracle {
        cfg.oracle = Some(v.clone());
    }
    if let Some(v) = &a.out {
        cfg.output = v.clone();
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.ensemble {
        cfg.ensemble_size = v;
    }
    cfg.skip_nullmodel |= a.skip_nullmodel;
    match run_pipeline(&cfg) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            Ok(())
        }
        Err(e) => {
            if let Ok(report) = build_report(&cfg.output) {
                print!("{report}");
            }
            Err(e)
        }
    }
}

fn report(a: &ReportArgs) -> Result<()> {
    let report = build_report(&a.dir)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{report}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Classes(a) => classes(a),
        Command::Spending(a) => spending(a),
        Command::Nullmodel(a) => nullmodel(a),
        Command::Catnet(a) => catnet(a),
        Command::Dynamics(a) => dynamics(a),
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
