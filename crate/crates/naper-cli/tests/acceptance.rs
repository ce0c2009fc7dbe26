//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured evidence. Run with
//! `cargo test -p naper-cli --test acceptance -- --nocapture`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use naper_core::data::gen_synthetic;
use naper_core::guard::{GuardedEnsemble, VerdictKind};
use naper_core::inject::{
    plan_injection, FaultTarget, InjectionConfig, InjectionMode, StoreEntry, StoreKind, StorePart,
    StoreSelector, StoreSpace,
};
use naper_core::model::{models_bit_identical, ModelParams, NetworkSpec};
use naper_core::nn::{evaluate, train_independent, TrainConfig};
use naper_core::sim::{
    run_sim_with, select_models, AccuracyTable, CostProfile, SimConfig, SimEvent, SimWorld,
    StrategyKind,
};
use naper_core::strategy::ProtectionStrategy;
use naper_core::tensor::bit_equal;
use naper_core::BitLocation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naper_bin() -> &'static str {
    env!("CARGO_BIN_EXE_naper")
}

fn run_bin(args: &[&str]) -> std::process::Output {
    Command::new(naper_bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn guards_bit_identical(a: &GuardedEnsemble, b: &GuardedEnsemble) -> bool {
    if !models_bit_identical(a.base(), b.base()) {
        return false;
    }
    for m in 0..a.redundant_count() {
        if !models_bit_identical(&a.redundants()[m], &b.redundants()[m]) {
            return false;
        }
        for (la, lb) in a.deltas(m + 1).iter().zip(b.deltas(m + 1)) {
            if !bit_equal(&la.weights, &lb.weights).unwrap().equal
                || !bit_equal(&la.bias, &lb.bias).unwrap().equal
            {
                return false;
            }
        }
    }
    true
}

/// Criterion 1: over 1000 seeded trials on a 4-layer MLP guard (M=1),
/// FixedCount injection at BER 1e-5 confined per-layer to one store,
/// detect → recover restores every store bit-identically. Zero failures,
/// under 30 seconds.
#[test]
fn criterion_1_recovery_bit_exactness() {
    let started = Instant::now();
    let spec = NetworkSpec::new(vec![16, 32, 32, 32, 10]).unwrap();
    let pristine = GuardedEnsemble::build(
        ModelParams::init(&spec, 1),
        vec![ModelParams::init(&spec, 2)],
    )
    .unwrap();
    assert_eq!(pristine.layer_count(), 4);
    let layers = pristine.layer_count();
    let mut failures = 0;
    for trial in 0..1000u64 {
        let mut g = pristine.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        for layer in 0..layers {
            let kind = match rng.gen_range(0..3) {
                0 => StoreKind::Base,
                1 => StoreKind::Redundant(1),
                _ => StoreKind::Delta(1),
            };
            let entries: Vec<StoreEntry> = g
                .fault_stores()
                .into_iter()
                .filter(|e| {
                    e.id.kind == kind && e.id.layer == layer && e.id.part != StorePart::Meta
                })
                .collect();
            let cfg = InjectionConfig::new(
                1e-5,
                InjectionMode::FixedCount,
                trial * 64 + layer as u64,
                vec![StoreSelector::All],
            );
            let plan = plan_injection(&cfg, &StoreSpace::new(entries)).unwrap();
            naper_core::inject::apply_injection(&mut g, &plan, 0).unwrap();
        }
        g.audit();
        for model in 0..g.model_count() {
            g.recover_model(model, usize::MAX).unwrap();
        }
        if !guards_bit_identical(&g, &pristine) || g.audit().any_fault() {
            failures += 1;
        }
    }
    let elapsed = started.elapsed();
    assert_eq!(failures, 0, "{failures} of 1000 trials were not bit-exact");
    assert!(
        elapsed.as_secs() < 30,
        "recovery harness took {elapsed:?}, budget 30 s"
    );
    println!(
        "criterion 1: PASS — 1000/1000 trials restored bit-identical state in {:.2?}",
        elapsed
    );
}

/// Criterion 2: exhaustive single flips (every store × element × bit) on
/// a two-layer toy guard. Flips that fire step 1 attribute to the right
/// store; silent flips are all caught by audit. Zero misattributions,
/// under 60 seconds.
#[test]
fn criterion_2_attribution_soundness() {
    let started = Instant::now();
    let spec = NetworkSpec::new(vec![4, 4, 2]).unwrap();
    let pristine = GuardedEnsemble::build(
        ModelParams::init(&spec, 5),
        vec![ModelParams::init(&spec, 6)],
    )
    .unwrap();
    for l in pristine.base().layers() {
        assert!(l.param_count() <= 64, "toy stores must stay at or below 64 elements");
    }
    let stores: Vec<StoreEntry> = pristine
        .fault_stores()
        .into_iter()
        .filter(|e| e.id.part != StorePart::Meta)
        .collect();
    let mut fired = 0u64;
    let mut audited = 0u64;
    let mut misattributions = 0u64;
    for entry in &stores {
        for elem in 0..entry.elems as usize {
            for bit in 0..32u32 {
                let mut g = pristine.clone();
                g.flip_at(&BitLocation {
                    store: entry.id,
                    elem_index: elem,
                    bit_index: bit,
                })
                .unwrap();
                let expected = match entry.id.kind {
                    StoreKind::Base => VerdictKind::FaultInBase,
                    StoreKind::Redundant(m) => VerdictKind::FaultInRedundant(m),
                    StoreKind::Delta(m) => VerdictKind::FaultInDelta(m),
                };
                let verdict = g.detect_layer(1, entry.id.layer);
                if verdict.result == VerdictKind::Healthy {
                    let report = g.audit();
                    let flagged: Vec<_> = report
                        .verdicts
                        .iter()
                        .filter(|v| v.result != VerdictKind::Healthy)
                        .collect();
                    if flagged.len() != 1
                        || flagged[0].layer != entry.id.layer
                        || flagged[0].result != expected
                    {
                        misattributions += 1;
                    } else {
                        audited += 1;
                    }
                } else if verdict.result == expected {
                    fired += 1;
                } else {
                    misattributions += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    assert_eq!(misattributions, 0);
    assert!(fired > 0);
    assert!(
        elapsed.as_secs() < 60,
        "exhaustive harness took {elapsed:?}, budget 60 s"
    );
    println!(
        "criterion 2: PASS — {} flips attributed by step 1/2, {} silent flips caught by audit, 0 misattributions in {:.2?}",
        fired, audited, elapsed
    );
}

fn parse_bench_csv(stdout: &str) -> Vec<(String, u64, u64, f64, f64)> {
    stdout
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("strategy") && l.contains(','))
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() < 8 {
                return None;
            }
            Some((
                f[0].to_string(),
                f[3].parse().ok()?,
                f[4].parse().ok()?,
                f[5].parse().ok()?,
                f[7].parse().ok()?,
            ))
        })
        .collect()
}

/// Criterion 3 (counters): a fault-free step records exactly L
/// comparison passes for the relation guard and 2L for TMR/DRO; the
/// bench CSV ratio column reads 0.5 exactly.
#[test]
fn criterion_3_detection_cost_counters() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_bin(&[
        "--out-dir",
        dir.path().to_str().unwrap(),
        "bench",
        "--strategies",
        "naper,tmr,dro,cbr",
        "--layers",
        "16,32,32,32,10",
        "--trials",
        "5",
        "--warmup",
        "1",
    ]);
    assert!(out.status.success());
    let rows = parse_bench_csv(&String::from_utf8_lossy(&out.stdout));
    let get = |name: &str| rows.iter().find(|r| r.0 == name).expect("row");
    let layers = 4u64;
    let naper = get("naper");
    let tmr = get("tmr");
    let dro = get("dro");
    let cbr = get("cbr");
    assert_eq!(naper.1, layers, "relation guard comparison passes");
    assert_eq!(naper.2, 0);
    assert_eq!(tmr.1, 2 * layers);
    assert_eq!(dro.1, 2 * layers);
    assert_eq!(cbr.1, 0);
    assert_eq!(cbr.2, layers);
    assert_eq!(naper.4, 0.5, "csv comparison ratio must be exactly 0.5");
    println!(
        "criterion 3 (counters): PASS — {} vs {} comparison passes per step, csv ratio {}",
        naper.1, tmr.1, naper.4
    );
}

/// Criterion 3 (directional wall clock): fault-free detection+inference
/// of the relation guard beats TMR on a ≥1e5-parameter model, median
/// over 21 trials. Needs at least two cores so detection can overlap the
/// member forward passes; a single-core host cannot express the overlap.
#[test]
fn criterion_3_detection_cost_wallclock() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_bin(&[
        "--out-dir",
        dir.path().to_str().unwrap(),
        "bench",
        "--strategies",
        "naper,tmr",
        "--layers",
        "128,512,256,10",
        "--trials",
        "21",
        "--warmup",
        "5",
    ]);
    assert!(out.status.success());
    let rows = parse_bench_csv(&String::from_utf8_lossy(&out.stdout));
    let naper = rows.iter().find(|r| r.0 == "naper").unwrap();
    let tmr = rows.iter().find(|r| r.0 == "tmr").unwrap();
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    assert!(
        naper.3 < tmr.3,
        "naper median {:.1}us not below tmr {:.1}us on a 199946-parameter model \
         ({} hardware thread(s) available; the overlap of detection with member \
         inference needs at least 2)",
        naper.3,
        tmr.3,
        threads
    );
    println!(
        "criterion 3 (wall clock): PASS — naper {:.1}us < tmr {:.1}us over 21 trials",
        naper.3, tmr.3
    );
}

/// Criterion 4: two-model ensembles on 10-class blobs (individuals tuned
/// into [0.6, 0.9]) beat the member mean in ≥4 of 5 seed pairs and drop
/// at most half a point below the best member in all 5. Under 2 minutes.
#[test]
fn criterion_4_ensemble_gain() {
    let started = Instant::now();
    let spec = NetworkSpec::new(vec![16, 24, 10]).unwrap();
    let mut beats_mean = 0;
    let mut within_half_point = 0;
    for pair in 0..5u64 {
        let data = gen_synthetic(100 + pair, 3000, 16, 10, 1.5).unwrap();
        let (train, val) = data.split(2000).unwrap();
        let cfg = |seed| TrainConfig {
            seed,
            epochs: 30,
            learning_rate: 0.1,
            batch_size: 32,
        };
        let a = train_independent(&spec, &train, &cfg(2 * pair + 1)).unwrap();
        let b = train_independent(&spec, &train, &cfg(2 * pair + 2)).unwrap();
        let ia = evaluate(&[&a], &val).unwrap();
        let ib = evaluate(&[&b], &val).unwrap();
        assert!(
            (0.6..=0.9).contains(&ia) && (0.6..=0.9).contains(&ib),
            "pair {pair}: individual accuracies ({ia:.3}, {ib:.3}) left the tuned band"
        );
        let ens = evaluate(&[&a, &b], &val).unwrap();
        if ens >= (ia + ib) / 2.0 {
            beats_mean += 1;
        }
        if ens >= ia.max(ib) - 0.005 {
            within_half_point += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(beats_mean >= 4, "ensemble beat the member mean in only {beats_mean}/5 pairs");
    assert_eq!(
        within_half_point, 5,
        "ensemble fell more than half a point below the best member"
    );
    assert!(elapsed.as_secs() < 120, "gain harness took {elapsed:?}, budget 2 min");
    println!(
        "criterion 4: PASS — ensemble ≥ member mean in {beats_mean}/5 pairs, within 0.5pp of the best in 5/5, {:.2?}",
        elapsed
    );
}

/// Criterion 5: the default 4 fps / 50 frame / 5 fault-event scenario.
/// NAPER, TMR, DRO meet every deadline; CBR with its slow disk misses
/// exactly the fault frames; EFT meets deadlines while its measured
/// accuracy never rises; NAPER's proxy dips to the single-model table
/// value during recovery frames and returns to the ensemble value after.
#[test]
fn criterion_5_timeliness_scenario() {
    let mut cfg = SimConfig::default();
    cfg.workdir = tempfile::tempdir().unwrap().path().to_path_buf();
    std::fs::create_dir_all(&cfg.workdir).unwrap();
    let world = SimWorld::build(&cfg).unwrap();

    for kind in [StrategyKind::Naper, StrategyKind::Tmr, StrategyKind::Dro] {
        let mut c = cfg.clone();
        c.strategy = kind;
        let t = run_sim_with(&c, &world).unwrap();
        assert_eq!(t.summary.deadline_met_pct, 100.0, "{}", kind.name());
    }

    let mut cbr = cfg.clone();
    cbr.strategy = StrategyKind::Cbr;
    let t = run_sim_with(&cbr, &world).unwrap();
    assert!(t.summary.deadline_met_pct < 100.0, "slow-disk CBR must miss");
    for r in &t.records {
        let faulted = r.events.iter().any(|e| matches!(e, SimEvent::Fault { .. }));
        assert_eq!(!r.deadline_met, faulted, "frame {}", r.frame);
        if !r.deadline_met {
            assert_eq!(r.accuracy_proxy, 1.0 / world.val.n_classes() as f64);
        }
    }

    let mut eft = cfg.clone();
    eft.strategy = StrategyKind::Eft;
    eft.measure_accuracy = true;
    let t = run_sim_with(&eft, &world).unwrap();
    assert_eq!(t.summary.deadline_met_pct, 100.0);
    let mut prev = f64::INFINITY;
    for r in &t.records {
        assert!(r.accuracy_proxy <= prev, "eft accuracy rose at frame {}", r.frame);
        prev = r.accuracy_proxy;
    }

    let t = run_sim_with(&cfg, &world).unwrap();
    assert_eq!(t.summary.deadline_met_pct, 100.0);
    let both = world.pair_table.get(&[0, 1]).unwrap();
    let mut dips = 0;
    for r in &t.records {
        let faulted = r.events.iter().any(|e| matches!(e, SimEvent::Fault { .. }));
        if faulted {
            dips += 1;
            assert_eq!(r.models_used.len(), 1);
            let single = world.pair_table.get(&r.models_used).unwrap();
            assert_eq!(r.accuracy_proxy, single);
            assert!(r.accuracy_proxy < both);
            assert!(r.events.iter().any(|e| matches!(e, SimEvent::Rejoin { .. })));
        } else {
            assert_eq!(r.accuracy_proxy, both);
        }
    }
    assert_eq!(dips, 5);
    println!(
        "criterion 5: PASS — naper/tmr/dro 100.0% deadlines, slow-disk cbr {:.1}%, eft non-increasing, naper dipped and returned at all 5 events",
        run_sim_with(&cbr, &world).unwrap().summary.deadline_met_pct
    );
}

/// Criterion 6: memory accounting. TMR and DRO are exactly 200.0%;
/// the guard adds metadata in (0, 2] percentage points on a ≥4096
/// parameter model; CBR stays at or below 2%.
#[test]
fn criterion_6_memory_overhead() {
    use naper_core::strategy::{
        CbrStrategy, DroStrategy, NaperStrategy, TmrStrategy, UnprotectedStrategy,
    };
    let dir = tempfile::tempdir().unwrap();
    let spec = NetworkSpec::new(vec![32, 64, 32, 10]).unwrap();
    let model = ModelParams::init(&spec, 9);
    assert!(model.param_count() >= 4096);

    let tmr = TmrStrategy::new(model.clone()).memory_report();
    let dro = DroStrategy::new(model.clone()).memory_report();
    let cbr = CbrStrategy::new(model.clone(), dir.path(), std::time::Duration::from_millis(1))
        .unwrap()
        .memory_report();
    let guard = GuardedEnsemble::build(model.clone(), vec![ModelParams::init(&spec, 10)]).unwrap();
    let naper = NaperStrategy::new(guard).memory_report();
    let unprotected = UnprotectedStrategy::new(model).memory_report();

    assert_eq!(tmr.overhead_percent(), 200.0);
    assert_eq!(dro.overhead_percent(), 200.0);
    let naper_meta_pct = 100.0 * naper.metadata_bytes as f64 / naper.base_bytes as f64;
    assert_eq!(naper.redundancy_bytes, 2 * naper.base_bytes);
    assert!(naper_meta_pct > 0.0 && naper_meta_pct <= 2.0);
    assert_eq!(naper.overhead_percent(), 200.0 + naper_meta_pct);
    assert!(cbr.overhead_percent() > 0.0 && cbr.overhead_percent() <= 2.0);
    // Ordering: unprotected < cbr < tmr = dro < naper.
    assert!(unprotected.overhead_percent() < cbr.overhead_percent());
    assert!(cbr.overhead_percent() < tmr.overhead_percent());
    assert_eq!(tmr.overhead_percent(), dro.overhead_percent());
    assert!(tmr.overhead_percent() <= naper.overhead_percent());
    println!(
        "criterion 6: PASS — tmr/dro 200.0%, naper 200% + {naper_meta_pct:.3}pp metadata, cbr {:.3}%",
        cbr.overhead_percent()
    );
}

/// Test-side oracle for criterion 7: enumerate every subset of the
/// waiting set reachable through strictly-improving additions within
/// the budget, and keep the best final accuracy.
fn exhaustive_best(
    running: &[usize],
    waiting: &[usize],
    tau_us: u64,
    costs: &CostProfile,
    table: &AccuracyTable,
) -> f64 {
    let base_mask = AccuracyTable::mask_of(running);
    let base_acc = table.get_mask(base_mask).unwrap_or(0.0);
    let mut best = base_acc;
    // Depth-first over improving chains.
    fn dfs(
        mask: u32,
        acc: f64,
        budget: u64,
        waiting: &[usize],
        costs: &CostProfile,
        table: &AccuracyTable,
        best: &mut f64,
    ) {
        if acc > *best {
            *best = acc;
        }
        for &j in waiting {
            if mask & (1 << j) != 0 {
                continue;
            }
            let cost = costs.model_cost_us(j);
            if cost > budget {
                continue;
            }
            if let Some(with) = table.get_mask(mask | (1 << j)) {
                if with > acc {
                    dfs(mask | (1 << j), with, budget - cost, waiting, costs, table, best);
                }
            }
        }
    }
    dfs(base_mask, base_acc, tau_us, waiting, costs, table, &mut best);
    best
}

/// Criterion 7: 1000 randomized selection instances. Every feasible
/// selection satisfies the timing budget, strict per-addition accuracy
/// improvement, and the threshold; with at most 3 models the greedy
/// result matches the exhaustive improving-chain optimum (per-model
/// costs are uniform, as they are for same-architecture ensembles).
#[test]
fn criterion_7_scheduler_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5E1EC7);
    for instance in 0..1000u32 {
        let n_models = rng.gen_range(2..=3usize);
        let mut table_entries = Vec::new();
        for mask in 1u32..(1 << n_models) {
            table_entries.push((mask, rng.gen_range(0.2..0.95)));
        }
        let table = AccuracyTable::from_entries(n_models, &table_entries);
        let ids: Vec<usize> = (0..n_models).collect();
        let c_dt = rng.gen_range(1_000..50_000u64);
        let c_in = rng.gen_range(1_000..50_000u64);
        let costs = CostProfile::virtual_table(&ids, c_dt, c_in, 1_000, 1.0);
        // Split ids into running and waiting; running may be empty.
        let split = rng.gen_range(0..=n_models - 1);
        let running: Vec<usize> = ids[..split].to_vec();
        let waiting: Vec<usize> = ids[split..].to_vec();
        let tau = rng.gen_range(0..200_000u64);
        let a_th = rng.gen_range(0.2..0.95);

        let sel = select_models(&running, &waiting, tau, &costs, &table, a_th);

        let spent: u64 = sel.chosen.iter().map(|&j| costs.model_cost_us(j)).sum();
        assert!(spent <= tau, "instance {instance}: budget exceeded");
        let mut mask = AccuracyTable::mask_of(&running);
        let mut acc = table.get_mask(mask).unwrap_or(0.0);
        for &j in &sel.chosen {
            let with = table.get_mask(mask | (1 << j)).unwrap();
            assert!(with > acc, "instance {instance}: non-improving addition {j}");
            mask |= 1 << j;
            acc = with;
        }
        assert_eq!(
            sel.feasible,
            acc >= a_th,
            "instance {instance}: feasibility flag disagrees with the threshold"
        );

        let best = exhaustive_best(&running, &waiting, tau, &costs, &table);
        assert_eq!(
            acc, best,
            "instance {instance}: greedy reached {acc}, exhaustive optimum {best}"
        );
    }
    println!("criterion 7: PASS — 1000/1000 instances satisfy all three constraints; greedy equals the exhaustive optimum");
}

/// Criterion 8: train → build-guard → simulate, rerun with identical
/// configs, produce byte-identical artifacts.
#[test]
fn criterion_8_end_to_end_determinism() {
    let root = tempfile::tempdir().unwrap();
    let mk = |name: &str| {
        let d = root.path().join(name);
        std::fs::create_dir_all(&d).unwrap();
        d
    };
    let scenario = root.path().join("scenario.cfg");
    std::fs::write(
        &scenario,
        "strategy = naper\nn_frames = 12\ntrain_epochs = 4\ntrain_samples = 400\nval_samples = 200\nlayer_sizes = 8,16,16,4\nn_fault_events = 2\n",
    )
    .unwrap();

    let run_pipeline = |dir: &Path| {
        let d = dir.to_str().unwrap();
        let data = dir.join("blobs.csv");
        assert!(run_bin(&[
            "--out-dir", d, "gen-data", "--seed", "3", "--samples", "400", "--dim", "8",
            "--classes", "4", "--spread", "1.0", "--name", "blobs.csv",
        ])
        .status
        .success());
        assert!(run_bin(&[
            "--out-dir", d, "train", "--layers", "8,16,16,4",
            "--data", data.to_str().unwrap(), "--classes", "4",
            "--seeds", "1,2", "--epochs", "4",
        ])
        .status
        .success());
        assert!(run_bin(&[
            "--out-dir", d, "build-guard",
            "--base", dir.join("model-s1.napm").to_str().unwrap(),
            "--redundants", dir.join("model-s2.napm").to_str().unwrap(),
        ])
        .status
        .success());
        assert!(run_bin(&[
            "--out-dir", d, "simulate", "--scenario", scenario.to_str().unwrap(),
        ])
        .status
        .success());
    };

    let a = mk("a");
    let b = mk("b");
    run_pipeline(&a);
    run_pipeline(&b);

    let artifacts = [
        "blobs.csv",
        "model-s1.napm",
        "model-s2.napm",
        "guard.napg",
        "trace.jsonl",
        "summary.csv",
    ];
    for name in artifacts {
        let x = std::fs::read(a.join(name)).unwrap_or_else(|_| panic!("{name} missing in a"));
        let y = std::fs::read(b.join(name)).unwrap_or_else(|_| panic!("{name} missing in b"));
        assert_eq!(x, y, "{name} differs between identical reruns");
    }
    println!(
        "criterion 8: PASS — {} artifacts byte-identical across reruns",
        artifacts.len()
    );
}

/// The default fault schedule hits replicated stores one at a time; all
/// models halted at once would contradict it. Guard rail for the
/// availability story behind criterion 5.
#[test]
fn availability_never_loses_output_with_one_healthy_model() {
    let mut cfg = SimConfig::default();
    cfg.workdir = tempfile::tempdir().unwrap().path().to_path_buf();
    std::fs::create_dir_all(&cfg.workdir).unwrap();
    let world = SimWorld::build(&cfg).unwrap();
    let trace = run_sim_with(&cfg, &world).unwrap();
    assert!(trace.records.iter().all(|r| r.output_us.is_some()));
    // And the strategy's serving set never emptied.
    let strategy = world.build_strategy(&cfg).unwrap();
    assert_eq!(strategy.model_count(), 2);
}
