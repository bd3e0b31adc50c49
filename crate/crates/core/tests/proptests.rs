//! Property tests for the invariants each module guarantees.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};

use proptest::prelude::*;
use rand::Rng;
use socioscope::catnet::{
    average_feature_set, category_correlation, kmeans, louvain, modularity, standardize, AfsWeighting,
    CategorySpendTable, MeanScope,
};
use socioscope::directory::CategoryDirectory;
use socioscope::dynamics::{group_profiles, weekly_vectors, Grouping, WeeklyScope};
use socioscope::graph::SocialGraph;
use socioscope::ingest::{
    assemble_profiles, filter_active_core, largest_component, CommEvent, Demographic, EgoProfile, Gender,
    ProfileOptions, TransactionRecord,
};
use socioscope::money::Cents;
use socioscope::nullmodel::{l_matrix, lambda_matrix, rewire, FeatureKind, NodeFeatures, NullEnsemble, RewirePlan};
use socioscope::pipeline::RunConfig;
use socioscope::seeds::stage_rng;
use socioscope::socio::{compute_amp, lorenz_gini_sorted, partition_classes, AmpTable};
use socioscope::spending::{
    class_distance_matrix, class_share_distribution, entropy, spending_vectors, SpendingSubset,
};
use socioscope::synth::{generate, write_synth, AmpModel, SynthSpec, SYNTH_FILES};

use common::{brute_rho_matrix, mad_gini};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

/// 2023-01-02 00:00 UTC, a Monday.
const MONDAY: i64 = 1_672_617_600;

fn events() -> impl Strategy<Value = Vec<CommEvent>> {
    prop::collection::vec((0u8..25, 0u8..25), 0..120).prop_map(|pairs| {
        pairs
            .into_iter()
            .map(|(a, b)| CommEvent::new(format!("u{a:02}"), format!("u{b:02}")))
            .collect()
    })
}

/// Simple graph on `n` nodes from arbitrary index pairs.
fn graph(max_nodes: u32, max_edges: usize) -> impl Strategy<Value = SocialGraph> {
    (4..max_nodes).prop_flat_map(move |n| {
        prop::collection::vec((0..n, 0..n), 1..max_edges).prop_map(move |pairs| {
            let edges: HashSet<(u32, u32)> = pairs
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
            let mut edges: Vec<_> = edges.into_iter().collect();
            edges.sort_unstable();
            let labels = (0..n).map(|i| format!("n{i:03}")).collect();
            SocialGraph::from_index_edges(labels, edges).unwrap()
        })
    })
}

fn transactions() -> impl Strategy<Value = Vec<TransactionRecord>> {
    let codes = CategoryDirectory::default().merchant_universe();
    let row = (0u8..30, 0usize..codes.len(), 1i64..50_000, 0i64..300 * 86_400);
    prop::collection::vec(row, 30..400).prop_map(move |rows| {
        rows.into_iter()
            .map(|(u, c, amount, t)| TransactionRecord {
                user_id: format!("u{u:02}"),
                timestamp: MONDAY + t,
                amount: Cents(amount),
                mcc: codes[c],
                valid_mcc: true,
            })
            .collect()
    })
}

fn demographics(seed: u64) -> HashMap<String, Demographic> {
    let mut rng = stage_rng(seed, "proptest.demographics", 0);
    (0..30)
        .map(|u| {
            let d = Demographic {
                age: Some(rng.random_range(18..80)),
                gender: Some(if rng.random_bool(0.5) {
                    Gender::Male
                } else {
                    Gender::Female
                }),
            };
            (format!("u{u:02}"), d)
        })
        .collect()
}

fn profiles_of(tx: &[TransactionRecord], seed: u64) -> BTreeMap<String, EgoProfile> {
    let opts = ProfileOptions {
        min_active_months: 1,
        utc_offset_secs: 0,
    };
    assemble_profiles(tx, &demographics(seed), &CategoryDirectory::default(), opts)
        .unwrap()
        .profiles
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn active_core_is_simple_idempotent_and_its_largest_component_connected(ev in events()) {
        let g = filter_active_core(&ev);
        prop_assert!(g.is_simple());
        let alive: HashSet<&str> = g.labels().iter().map(String::as_str).collect();
        let kept: Vec<CommEvent> = ev
            .iter()
            .filter(|e| alive.contains(e.caller.as_str()) && alive.contains(e.callee.as_str()))
            .cloned()
            .collect();
        let again = filter_active_core(&kept);
        prop_assert_eq!(again.labels(), g.labels());
        prop_assert_eq!(again.edges(), g.edges());
        let lcc = largest_component(&g);
        prop_assert!(lcc.is_connected());
        prop_assert!(lcc.is_simple());
    }

    #[test]
    fn profile_totals_conserve_spend(tx in transactions()) {
        let p = profiles_of(&tx, 1);
        let total: i64 = tx.iter().map(|r| r.amount.0).sum();
        let monthly: i64 = p.values().map(|e| e.total_spend().0).sum();
        let by_group: i64 = p.values().flat_map(|e| e.pcg_spend.values()).map(|c| c.0).sum();
        let by_code: i64 = p.values().flat_map(|e| e.category_spend.values()).map(|c| c.0).sum();
        let weekly: i64 = p.values().flat_map(|e| e.weekly_spend.values()).flat_map(|w| w.iter()).map(|c| c.0).sum();
        prop_assert_eq!(monthly, total);
        prop_assert_eq!(by_group, total);
        prop_assert_eq!(by_code, total);
        prop_assert_eq!(weekly, total);
    }

    #[test]
    fn gini_is_scale_invariant_and_matches_mean_difference(
        x in prop::collection::vec(0.01f64..1e6, 2..400),
        scale in 1e-3f64..1e3,
    ) {
        let mut x = x;
        x.sort_by(f64::total_cmp);
        let (g, lorenz) = lorenz_gini_sorted(&x);
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let (gs, _) = lorenz_gini_sorted(&scaled);
        prop_assert!((g - gs).abs() < 1e-9);
        prop_assert!((g - mad_gini(&x)).abs() <= 1.0 / x.len() as f64 + 1e-12);
        prop_assert!((0.0..1.0).contains(&g));
        prop_assert!(lorenz.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    }

    #[test]
    fn partition_boundaries_are_exact_and_class_means_rise(
        x in prop::collection::vec(1.0f64..1e5, 20..300),
        k in 2usize..10,
    ) {
        let amp = AmpTable::from_values(x.iter().enumerate().map(|(i, &v)| (format!("u{i:04}"), v)));
        let Ok(p) = partition_classes(&amp, k) else { return Ok(()) };
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        let total: f64 = sorted.iter().sum();
        let mut cum = 0.0;
        let mut expected = Vec::new();
        let mut next = 1;
        for (i, v) in sorted.iter().enumerate() {
            cum += v;
            while next < k && cum >= next as f64 * total / k as f64 {
                expected.push(i + 1);
                next += 1;
            }
        }
        prop_assert_eq!(&p.boundaries()[1..k], &expected[..]);
        let means: Vec<f64> = p.mean_amp().into_iter().flatten().collect();
        prop_assert!(means.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(p.user_count(), x.len());
    }

    #[test]
    fn share_columns_sum_to_one_and_distances_are_symmetric(tx in transactions(), per_capita in any::<bool>()) {
        let dir = CategoryDirectory::default();
        let p = profiles_of(&tx, 2);
        let Ok(part) = partition_classes(&compute_amp(&p), 3) else { return Ok(()) };
        let shares = class_share_distribution(&p, &part, &dir, per_capita);
        for (label, row) in shares.labels.iter().zip(&shares.shares) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9, "{} shares sum to {}", label, s);
        }
        let sv = spending_vectors(&p, &dir);
        for v in sv.vectors.values() {
            let h = entropy(&v.values);
            prop_assert!(h >= -1e-12 && h <= (v.values.len() as f64).ln() + 1e-9);
        }
        if let Ok(d) = class_distance_matrix(&sv, &part, SpendingSubset::NonCash) {
            prop_assert!(d.is_symmetric());
            for i in 0..3 {
                prop_assert_eq!(d.get(i, i), Some(0.0));
            }
        }
    }

    #[test]
    fn entropy_ignores_scale(v in prop::collection::vec(0.0f64..10.0, 1..20), scale in 1e-3f64..1e3) {
        let s: f64 = v.iter().sum();
        prop_assume!(s > 0.0);
        let a: Vec<f64> = v.iter().map(|x| x / s).collect();
        let b: Vec<f64> = v.iter().map(|x| x * scale / (s * scale)).collect();
        prop_assert!((entropy(&a) - entropy(&b)).abs() < 1e-12);
    }

    #[test]
    fn rewiring_keeps_degrees_and_is_reproducible(g in graph(40, 120), seed in any::<u64>()) {
        let plan = RewirePlan { swaps_factor: 5.0, ensemble_size: 3, seed };
        let a = NullEnsemble::generate(&g, &plan).unwrap();
        let b = NullEnsemble::generate(&g, &plan).unwrap();
        let (valid, _) = common::ensemble_is_valid(&g, &a);
        prop_assert_eq!(valid, 3);
        for m in 0..3 {
            prop_assert_eq!(a.member(m), b.member(m));
        }
        let r = rewire(&g, &plan);
        prop_assert_eq!(r.degrees(), g.degrees());
        prop_assert!(r.is_simple());
    }

    #[test]
    fn ratio_matrices_are_symmetric(g in graph(40, 150), seed in 0u64..1000) {
        let n = g.node_count();
        let amp = AmpTable::from_values(g.labels().iter().enumerate().map(|(i, l)| (l.clone(), 1.0 + i as f64)));
        let part = partition_classes(&amp, 3).unwrap();
        let mut rng = stage_rng(seed, "proptest.features", 0);
        let sv: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let week: Vec<Vec<f64>> = (0..n).map(|_| (0..7).map(|_| rng.random::<f64>()).collect()).collect();
        let lookup = |table: &Vec<Vec<f64>>, l: &str| g.index_of(l).map(|i| table[i as usize].clone());
        let f_sv = NodeFeatures::from_lookup(&g, &part, 4, FeatureKind::PerComponentAbs, |l| lookup(&sv, l));
        let f_wk = NodeFeatures::from_lookup(&g, &part, 7, FeatureKind::Euclidean, |l| lookup(&week, l));
        let ens = NullEnsemble::generate(&g, &RewirePlan { swaps_factor: 5.0, ensemble_size: 4, seed }).unwrap();
        if let Ok(l) = l_matrix(&g, &ens, &f_sv) {
            prop_assert!(l.ratio.is_symmetric());
            prop_assert!(l.sigma.is_symmetric());
        }
        if let Ok(l) = lambda_matrix(&g, &ens, &f_wk) {
            prop_assert!(l.ratio.is_symmetric());
        }
    }

    #[test]
    fn streaming_category_correlation_matches_dense_definition(
        rows in prop::collection::vec(prop::collection::vec((0usize..6, 1.0f64..100.0), 1..6), 5..60),
        purchasers in any::<bool>(),
    ) {
        let codes: Vec<u32> = (0..6).map(|i| 5000 + i).collect();
        let rows: Vec<(String, Vec<(u32, f64)>)> = rows
            .into_iter()
            .enumerate()
            .map(|(u, r)| {
                let mut m: BTreeMap<u32, f64> = BTreeMap::new();
                for (c, a) in r {
                    *m.entry(codes[c]).or_default() += a;
                }
                (format!("u{u:03}"), m.into_iter().collect())
            })
            .collect();
        let table = CategorySpendTable::from_rows(codes.clone(), rows.clone());
        let scope = if purchasers { MeanScope::Purchasers } else { MeanScope::AllUsers };
        let Ok(corr) = category_correlation(&table, scope) else { return Ok(()) };
        let brute = brute_rho_matrix(&codes, &rows, purchasers);
        for i in 0..corr.size() {
            for j in 0..corr.size() {
                prop_assert_eq!(corr.get(i, j), corr.get(j, i));
                let (ci, cj) = (corr.categories[i], corr.categories[j]);
                let (bi, bj) = (codes.iter().position(|&c| c == ci).unwrap(), codes.iter().position(|&c| c == cj).unwrap());
                match (corr.get(i, j), brute[bi][bj]) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0)),
                    (a, b) => prop_assert_eq!(a.is_some(), b.is_some()),
                }
            }
        }
    }

    #[test]
    fn louvain_is_no_worse_than_singletons(
        edges in prop::collection::vec((0usize..30, 0usize..30, 0.1f64..5.0), 1..120),
        seed in any::<u64>(),
    ) {
        let mut seen = HashSet::new();
        let edges: Vec<(usize, usize, f64)> = edges
            .into_iter()
            .filter(|&(a, b, _)| a != b && seen.insert((a.min(b), a.max(b))))
            .collect();
        prop_assume!(!edges.is_empty());
        let c = louvain(30, &edges, seed);
        let singles: Vec<usize> = (0..30).collect();
        prop_assert!(c.modularity >= modularity(&edges, &singles) - 1e-12);
        prop_assert!((c.modularity - modularity(&edges, &c.labels)).abs() < 1e-9);
    }

    #[test]
    fn kmeans_objective_never_rises(
        pts in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 10..80),
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let pts = standardize(&pts);
        let mut rng = stage_rng(seed, "proptest.kmeans", 0);
        let Ok(fit) = kmeans(&pts, k.min(pts.len()), 3, &mut rng) else { return Ok(()) };
        prop_assert!(fit.history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        prop_assert!((fit.history.last().copied().unwrap_or(fit.inertia) - fit.inertia).abs() < 1e-9);
    }

    #[test]
    fn afs_gender_lies_in_unit_interval(tx in transactions()) {
        let dir = CategoryDirectory::default();
        let p = profiles_of(&tx, 3);
        let Ok(part) = partition_classes(&compute_amp(&p), 2) else { return Ok(()) };
        let table = socioscope::catnet::category_spend_table(&p, &dir, 1);
        for w in [AfsWeighting::PerUser, AfsWeighting::PerValue] {
            for f in average_feature_set(&table, &p, &part, w) {
                if let Some(g) = f.gender.value() {
                    prop_assert!((-1e-12..=1.0 + 1e-12).contains(&g));
                }
                if let Some(s) = f.seg.value() {
                    prop_assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&s));
                }
            }
        }
    }

    #[test]
    fn weekly_vectors_sum_to_one_and_ignore_scale(tx in transactions(), factor in 2i64..50) {
        let dir = CategoryDirectory::default();
        let p = profiles_of(&tx, 4);
        let set = weekly_vectors(&p, &dir, &WeeklyScope::Global);
        for w in set.vectors.values() {
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let scaled: Vec<TransactionRecord> =
            tx.iter().map(|r| TransactionRecord { amount: Cents(r.amount.0 * factor), ..r.clone() }).collect();
        let s2 = weekly_vectors(&profiles_of(&scaled, 4), &dir, &WeeklyScope::Global);
        prop_assert_eq!(set.vectors.len(), s2.vectors.len());
        for (u, w) in &set.vectors {
            let w2 = &s2.vectors[u];
            prop_assert!(w.iter().zip(w2).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        if let Ok(part) = partition_classes(&compute_amp(&p), 2) {
            for weighted in [false, true] {
                for g in group_profiles(&set, &p, &part, Grouping::Class, weighted) {
                    prop_assert!((g.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn group_profile_ignores_member_order_and_returns_a_shared_vector(
        w in prop::collection::vec(1i64..1000, 7),
        users in 2usize..20,
        order_seed in any::<u64>(),
    ) {
        let dir = CategoryDirectory::default();
        let code = dir.mccs_in(dir.non_cash_pcgs()[0])[0];
        let mut tx = Vec::new();
        for u in 0..users {
            for (d, &a) in w.iter().enumerate() {
                tx.push(TransactionRecord {
                    user_id: format!("u{u:02}"),
                    timestamp: MONDAY + d as i64 * 86_400 + 3600,
                    amount: Cents(a * (u as i64 + 1)),
                    mcc: code,
                    valid_mcc: true,
                });
            }
        }
        let p = profiles_of(&tx, 5);
        let amp = AmpTable::from_values(p.keys().map(|u| (u.clone(), 1.0)));
        let part = partition_classes(&amp, 1).unwrap();
        let set = weekly_vectors(&p, &dir, &WeeklyScope::Global);
        let total: i64 = w.iter().sum();
        let rows = group_profiles(&set, &p, &part, Grouping::Class, false);
        prop_assert_eq!(rows.len(), 1);
        for d in 0..7 {
            prop_assert!((rows[0].values[d] - w[d] as f64 / total as f64).abs() < 1e-12);
        }
        let mut shuffled = tx.clone();
        let mut rng = stage_rng(order_seed, "proptest.shuffle", 0);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let p2 = profiles_of(&shuffled, 5);
        let rows2 = group_profiles(&weekly_vectors(&p2, &dir, &WeeklyScope::Global), &p2, &part, Grouping::Class, false);
        prop_assert_eq!(rows, rows2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn generator_is_deterministic_and_conserves_spend(seed in any::<u64>(), n in 200usize..600) {
        let spec = SynthSpec { seed, n_users: n, tx_per_user: 6.0, ..Default::default() };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_synth(&a, da.path()).unwrap();
        write_synth(&b, db.path()).unwrap();
        for f in SYNTH_FILES {
            prop_assert_eq!(std::fs::read(da.path().join(f)).unwrap(), std::fs::read(db.path().join(f)).unwrap(), "{}", f);
        }
        let mut spent: HashMap<&str, i64> = HashMap::new();
        for r in &a.transactions {
            *spent.entry(r.user_id.as_str()).or_default() += r.amount.0;
        }
        for u in &a.truth.users {
            let want = u.amp_cents * u.active_months as i64;
            prop_assert_eq!(spent.get(u.id.as_str()).copied().unwrap_or(0), want, "user {}", u.id);
        }
        let g = largest_component(&filter_active_core(&a.events));
        prop_assert!(g.is_simple());
        prop_assert!(g.is_connected());
        prop_assert_eq!(g.node_count(), a.truth.graph_nodes);
    }

    #[test]
    fn constant_amp_generator_spends_exactly(seed in any::<u64>()) {
        let spec = SynthSpec { seed, n_users: 300, amp: AmpModel::Constant { value: 37.25 }, tx_per_user: 5.0, ..Default::default() };
        let a = generate(&spec).unwrap();
        let total: i64 = a.transactions.iter().map(|r| r.amount.0).sum();
        let months: i64 = a.truth.users.iter().map(|u| u.active_months as i64).sum();
        prop_assert_eq!(total, 3725 * months);
    }
}

#[test]
fn config_hash_tracks_semantic_fields_only() {
    let base = RunConfig::default();
    let h = base.hash();
    let moved = RunConfig {
        output: "elsewhere".into(),
        ..base.clone()
    };
    assert_eq!(moved.hash(), h);
    let variants = [
        RunConfig {
            seed: 7,
            ..base.clone()
        },
        RunConfig {
            ensemble_size: 99,
            ..base.clone()
        },
        RunConfig {
            n_classes: 8,
            ..base.clone()
        },
        RunConfig {
            rho_min: 1.6,
            ..base.clone()
        },
        RunConfig {
            per_capita: true,
            ..base.clone()
        },
        RunConfig {
            mean_scope: MeanScope::Purchasers,
            ..base.clone()
        },
        RunConfig {
            skip_nullmodel: true,
            ..base.clone()
        },
        RunConfig {
            removal_fractions: vec![0.5],
            ..base.clone()
        },
    ];
    let mut seen = HashSet::from([h]);
    for v in variants {
        assert!(seen.insert(v.hash()), "hash collision");
    }
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let dir = CategoryDirectory::default();
    let spec = SynthSpec {
        n_users: 4000,
        tx_per_user: 15.0,
        ..Default::default()
    };
    let data = generate(&spec).unwrap();
    let profiles = data.profiles(&dir).unwrap().profiles;
    let partition = partition_classes(&compute_amp(&profiles), 9).unwrap();
    let g = largest_component(&filter_active_core(&data.events));
    let compute = || {
        let table = socioscope::catnet::category_spend_table(&profiles, &dir, 1);
        let corr = category_correlation(&table, MeanScope::AllUsers).unwrap();
        let features = common::sv_features(&g, &partition, &profiles, &dir);
        let ens = NullEnsemble::generate(
            &g,
            &RewirePlan {
                swaps_factor: 5.0,
                ensemble_size: 6,
                seed: 3,
            },
        )
        .unwrap();
        let l = l_matrix(&g, &ens, &features).unwrap();
        (corr.rho, l.ratio, l.sigma)
    };
    let run_on = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(compute)
    };
    assert_eq!(run_on(1), run_on(3));
}
