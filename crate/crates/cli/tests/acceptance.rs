//! Acceptance suite: one test per shipped criterion, each printing a
//! PASS line with its measured numbers (run with `-- --nocapture` to see
//! them). Heavy criteria serialize through a lock so their time budgets
//! are measured without contention.

use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use pairhash::hashcore::{hamming, sgn_matrix, CodeMatrix};
use pairhash::linalg::Matrix;
use pairhash::pairwise::{self, LabelData};
use pairhash::rng::Rng;
use pairhash::sdh::TrainConfig;
use pairhash::{data, encode, eval, gsdh, kernel, sdh, selfcheck};

static HEAVY: Mutex<()> = Mutex::new(());

fn heavy() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn pass(name: &str, detail: String) {
    println!("PASS {name}: {detail}");
}

/// Kernelized pipeline head shared by the training criteria.
fn prepare(
    n: usize,
    classes: usize,
    spread: f64,
    p: usize,
    data_seed: u64,
    anchor_seed: u64,
) -> (Matrix, pairwise::PairwiseBlock, LabelData) {
    let (x, labels) = data::synth_clusters(n, 16, classes, spread, data_seed).unwrap();
    let anchors = pairwise::sample_anchors(n, p, anchor_seed).unwrap();
    let map = kernel::fit(&x, &anchors, None).unwrap();
    let xk = kernel::apply(&map, &x).unwrap();
    let s = pairwise::build_single_label(&labels, &anchors).unwrap();
    (xk, s, labels)
}

#[test]
fn criterion_01_regression_trace_identity() {
    let _g = heavy();
    let t0 = Instant::now();
    let report = selfcheck::regression_trace_identity(1, 100).unwrap();
    let elapsed = t0.elapsed();
    assert_eq!(report.trials, 100);
    assert!(
        report.passed && report.max_residual <= 1e-8,
        "max residual {}",
        report.max_residual
    );
    assert!(elapsed < Duration::from_secs(5), "{elapsed:?}");
    pass(
        "criterion 1 (regression-trace identity)",
        format!(
            "100 trials, max rel residual {:.3e} <= 1e-8, {elapsed:?}",
            report.max_residual
        ),
    );
}

#[test]
fn criterion_02_surrogate_reconstruction() {
    let _g = heavy();
    let t0 = Instant::now();
    let report = selfcheck::surrogate_reconstruction(2, 100, 10.0).unwrap();
    let elapsed = t0.elapsed();
    assert_eq!(report.trials, 100);
    assert!(
        report.passed && report.max_residual <= 1e-8,
        "max residual {}",
        report.max_residual
    );
    assert!(elapsed < Duration::from_secs(5), "{elapsed:?}");
    pass(
        "criterion 2 (surrogate reconstruction)",
        format!(
            "100 trials, max rel residual {:.3e} <= 1e-8, {elapsed:?}",
            report.max_residual
        ),
    );
}

#[test]
fn criterion_03_inner_loop_monotonicity() {
    let _g = heavy();
    let mut total_inner = 0usize;
    let mut worst_drop = 0.0f64;
    let mut sequences = 0usize;
    for seed in [11u64, 12] {
        let (xk, s, _) = prepare(2000, 10, 0.2, 200, seed, seed ^ 0xabcd);
        let mut cfg = TrainConfig::new(16);
        cfg.anchors = 200;
        cfg.batch_size = 100;
        cfg.seed = seed;
        for diag in [
            sdh::train(&xk, &s, &cfg).unwrap().2,
            gsdh::train(&xk, &s, &cfg).unwrap().2,
        ] {
            for trace in &diag.inner {
                sequences += 1;
                total_inner += trace.objectives.len();
                for w in trace.objectives.windows(2) {
                    worst_drop = worst_drop.max(w[0] - w[1]);
                    assert!(
                        w[1] >= w[0] - 1e-9,
                        "objective decreased from {} to {}",
                        w[0],
                        w[1]
                    );
                }
            }
        }
    }
    assert!(total_inner >= 10_000, "only {total_inner} inner iterations");
    pass(
        "criterion 3 (inner-loop monotonicity)",
        format!(
            "{total_inner} inner iterations over {sequences} sequences, worst drop {worst_drop:.3e} <= 1e-9"
        ),
    );
}

#[test]
fn criterion_04_sign_update_optimality() {
    let _g = heavy();
    let t0 = Instant::now();
    let report = selfcheck::sign_update_optimality(4, 200).unwrap();
    let elapsed = t0.elapsed();
    assert_eq!(report.trials, 200);
    assert!(
        report.passed && report.max_residual == 0.0,
        "max |impl - exhaustive| = {}",
        report.max_residual
    );
    assert!(elapsed < Duration::from_secs(10), "{elapsed:?}");
    pass(
        "criterion 4 (sign-update optimality)",
        format!("200 instances, exact equality with exhaustive search, {elapsed:?}"),
    );
}

#[test]
fn criterion_05_batch_sequential_convergence_phenomenon() {
    let _g = heavy();
    let t0 = Instant::now();
    let mut batch_converged = 0;
    let mut batch_objective_ok = 0;
    let mut full_still_moving = 0;
    for seed in 0..10u64 {
        let (xk, s, _) = prepare(5000, 10, 0.2, 500, seed, seed.wrapping_mul(77).wrapping_add(13));

        let mut cfg = TrainConfig::new(16);
        cfg.anchors = 500;
        cfg.batch_size = 100;
        cfg.beta = 10.0;
        cfg.seed = seed;
        let (_, _, diag) = sdh::train(&xk, &s, &cfg).unwrap();
        if diag.converged_at.is_some() {
            batch_converged += 1;
        }
        let first = diag.outer.first().unwrap().anchor_objective;
        let last = diag.outer.last().unwrap().anchor_objective;
        if last <= first {
            batch_objective_ok += 1;
        }

        cfg.batch_size = 5000;
        let (_, _, diag_full) = sdh::train(&xk, &s, &cfg).unwrap();
        let final_change = diag_full.outer.last().unwrap().code_change.unwrap();
        if diag_full.converged_at.is_none() && final_change > 0.0 {
            full_still_moving += 1;
        }
    }
    let elapsed = t0.elapsed();
    assert!(batch_converged >= 9, "batch runs converged on {batch_converged}/10 seeds");
    assert_eq!(
        batch_objective_ok, 10,
        "anchor objective grew past initialization on {} seeds",
        10 - batch_objective_ok
    );
    assert!(
        full_still_moving >= 5,
        "full-batch runs stopped moving on {}/10 seeds",
        10 - full_still_moving
    );
    assert!(elapsed < Duration::from_secs(120), "{elapsed:?}");
    pass(
        "criterion 5 (batch-sequential convergence phenomenon)",
        format!(
            "batch n_b=100 converged {batch_converged}/10 (objective never above init), \
             full batch still moving at iteration 20 on {full_still_moving}/10, {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_06_retrieval_quality_vs_lsh() {
    let _g = heavy();
    let t0 = Instant::now();
    // 5000 training rows plus 500 held-out queries from the same draw.
    let (x_all, labels_all) = data::synth_clusters(5500, 16, 10, 0.2, 42).unwrap();
    let mut xt = Matrix::zeros(5000, 16);
    let mut xq = Matrix::zeros(500, 16);
    for i in 0..5000 {
        xt.row_mut(i).copy_from_slice(x_all.row(i));
    }
    for i in 0..500 {
        xq.row_mut(i).copy_from_slice(x_all.row(5000 + i));
    }
    let lt: Vec<u32> = (0..5000).map(|i| labels_all.item(i)[0]).collect();
    let lq: Vec<u32> = (0..500).map(|i| labels_all.item(5000 + i)[0]).collect();
    let train_labels = LabelData::from_single(&lt);
    let query_labels = LabelData::from_single(&lq);

    let anchors = pairwise::sample_anchors(5000, 500, 42).unwrap();
    let map = kernel::fit(&xt, &anchors, None).unwrap();
    let xk = kernel::apply(&map, &xt).unwrap();
    let s = pairwise::build_single_label(&train_labels, &anchors).unwrap();
    let mut cfg = TrainConfig::new(16);
    cfg.anchors = 500;
    cfg.batch_size = 100;
    cfg.seed = 42;
    let (model, h, _) = gsdh::train(&xk, &s, &cfg).unwrap();
    let model = model.with_kernel(map);
    let qcodes = encode::encode_linear(&model, &xq).unwrap();
    let learned =
        eval::evaluate(&qcodes, &h, &query_labels, &train_labels, 100, 2, false).unwrap();

    // Random signed-projection baseline at equal bits.
    let mut rng = Rng::new(4242);
    let wdata: Vec<f64> = (0..16 * 16).map(|_| rng.next_gaussian()).collect();
    let w = Matrix::from_vec(16, 16, wdata).unwrap();
    let db_lsh = sgn_matrix(&xt.matmul(&w.transpose()).unwrap()).unwrap();
    let q_lsh = sgn_matrix(&xq.matmul(&w.transpose()).unwrap()).unwrap();
    let baseline =
        eval::evaluate(&q_lsh, &db_lsh, &query_labels, &train_labels, 100, 2, false).unwrap();

    let elapsed = t0.elapsed();
    assert!(learned.map >= 0.90, "MAP@100 = {}", learned.map);
    assert!(
        learned.map - baseline.map >= 0.15,
        "margin over baseline = {}",
        learned.map - baseline.map
    );
    assert!(elapsed < Duration::from_secs(60), "{elapsed:?}");
    pass(
        "criterion 6 (retrieval quality)",
        format!(
            "MAP@100 {:.4} >= 0.90, baseline {:.4}, margin {:.4} >= 0.15, {elapsed:?}",
            learned.map,
            baseline.map,
            learned.map - baseline.map
        ),
    );
}

#[test]
fn criterion_07_single_bit_solver_equivalence() {
    let _g = heavy();
    let mut checkpoints = 0usize;
    for seed in 0..20u64 {
        let (xk, s, _) = prepare(300, 4, 0.2, 40, 500 + seed, seed);
        for outer in [1usize, 2, 4, 6] {
            let mut cfg = TrainConfig::new(1);
            cfg.anchors = 40;
            cfg.batch_size = 30;
            cfg.outer_iters = outer;
            cfg.seed = seed;
            let (_, h_batch, d1) = sdh::train(&xk, &s, &cfg).unwrap();
            let (_, h_greedy, d2) = gsdh::train(&xk, &s, &cfg).unwrap();
            assert_eq!(
                h_batch, h_greedy,
                "trajectories diverged at seed {seed}, outer {outer}"
            );
            let c1: Vec<_> = d1.outer.iter().map(|r| r.code_change).collect();
            let c2: Vec<_> = d2.outer.iter().map(|r| r.code_change).collect();
            assert_eq!(c1, c2);
            checkpoints += 1;
        }
    }
    pass(
        "criterion 7 (single-bit solver equivalence)",
        format!("20 seeded instances x {} trajectory checkpoints, bit-for-bit equal", checkpoints / 20),
    );
}

#[test]
fn criterion_08_loss_extension_correctness() {
    let _g = heavy();
    // Per-bit reduction equals exhaustive minimization of the true loss.
    let report = selfcheck::loss_reduction_exactness(8, 60).unwrap();
    assert!(
        report.passed && report.max_residual == 0.0,
        "loss reduction residual {}",
        report.max_residual
    );

    // Squared distance-to-target training strictly reduces its loss.
    let mut strict = 0;
    for seed in 0..10u64 {
        let (xk, s, _) = prepare(100, 5, 0.25, 16, 300 + seed, (300 + seed) ^ 0x5a5a);
        let mut cfg = TrainConfig::new(4);
        cfg.anchors = 16;
        cfg.batch_size = 25;
        cfg.outer_iters = 10;
        cfg.beta = 1.0;
        cfg.seed = 300 + seed;
        let (_, _, diag) = gsdh::train_with_loss(&xk, &s, &cfg, gsdh::LossKind::Bre).unwrap();
        let first = diag.outer.first().unwrap().true_loss.unwrap();
        let last = diag.outer.last().unwrap().true_loss.unwrap();
        if last < first {
            strict += 1;
        }
    }
    assert_eq!(strict, 10, "loss strictly reduced on {strict}/10 runs");
    pass(
        "criterion 8 (loss-extension correctness)",
        format!(
            "60 exhaustive per-bit checks exact, squared-target loss strictly reduced on {strict}/10 toy runs"
        ),
    );
}

#[test]
fn criterion_09_metric_correctness() {
    let _g = heavy();
    // Hand case first.
    let hand = eval::RankedList {
        order: vec![0, 1, 2],
        distances: vec![0, 1, 2],
        relevance: vec![1.0, 0.0, 1.0],
        flags: vec![true, false, true],
    };
    let ap = eval::average_precision(&hand, 3);
    assert!((ap - 5.0 / 6.0).abs() < 1e-15, "AP hand case {ap}");

    // 1000 random ranked lists against the straight-from-the-formula
    // reference implementations below.
    let mut rng = Rng::new(909);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = 3 + rng.below(40);
        let cutoff = 1 + rng.below(n);
        let rels: Vec<f64> = (0..n).map(|_| rng.below(4) as f64).collect();
        let flags: Vec<bool> = rels.iter().map(|&r| r > 0.0).collect();
        let ranked = eval::RankedList {
            order: (0..n).collect(),
            distances: (0..n).collect(),
            relevance: rels.clone(),
            flags: flags.clone(),
        };
        worst = worst.max((eval::average_precision(&ranked, cutoff) - ref_ap(&flags, cutoff)).abs());
        worst = worst.max((eval::ndcg(&ranked, cutoff) - ref_ndcg(&rels, cutoff)).abs());
    }

    // Ball metrics on random code instances.
    for _ in 0..200 {
        let n = 5 + rng.below(30);
        let m = 1 + rng.below(20);
        let signs: Vec<i8> = (0..(n + 1) * m).map(|_| rng.next_sign()).collect();
        let all = CodeMatrix::from_signs(n + 1, m, signs).unwrap();
        let db = all.select_rows(&(1..=n).collect::<Vec<_>>()).unwrap();
        let q = all.packed_row(0);
        let rels: Vec<f64> = (0..n).map(|_| rng.below(4) as f64).collect();
        let flags: Vec<bool> = rels.iter().map(|&r| r > 0.0).collect();
        let radius = rng.below(m + 1);

        let (rp, rr) = ref_ball(q, &db, &flags, radius);
        let (p, r) = eval::precision_recall_at_radius(q, &db, &flags, radius);
        worst = worst.max((p - rp).abs());
        worst = worst.max((r - rr).abs());
        worst = worst.max((eval::acg(q, &db, &rels, radius) - ref_acg(q, &db, &rels, radius)).abs());
    }
    assert!(worst <= 1e-12, "worst metric deviation {worst}");
    pass(
        "criterion 9 (metric correctness)",
        format!("AP hand case = 5/6; 1000 ranked lists + 200 ball instances, worst deviation {worst:.3e} <= 1e-12"),
    );
}

#[test]
fn criterion_10_pipeline_determinism_and_budget() {
    let _g = heavy();
    let t0 = Instant::now();
    let dir = std::env::temp_dir().join("pairhash-acceptance-pipeline");
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();

    let features = dir.join("features.bin");
    let labels = dir.join("labels.txt");
    let queries = dir.join("queries.bin");
    run(Command::new(bin()).args([
        "synth",
        "--n",
        "5000",
        "--dims",
        "16",
        "--classes",
        "10",
        "--spread",
        "0.2",
        "--seed",
        "7",
        "--features-out",
        features.to_str().unwrap(),
        "--labels-out",
        labels.to_str().unwrap(),
    ]));
    // Held-out queries from a disjoint seed.
    let qlabels = dir.join("qlabels.txt");
    run(Command::new(bin()).args([
        "synth",
        "--n",
        "500",
        "--dims",
        "16",
        "--classes",
        "10",
        "--spread",
        "0.2",
        "--seed",
        "8",
        "--features-out",
        queries.to_str().unwrap(),
        "--labels-out",
        qlabels.to_str().unwrap(),
    ]));

    let variants = [("a", None), ("b", None), ("t1", Some("1")), ("t2", Some("2"))];
    let mut outputs: Vec<(Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>)> = Vec::new();
    for (tag, threads) in variants {
        let model = dir.join(format!("model-{tag}.bin"));
        let codes = dir.join(format!("queries-{tag}.codes"));
        let metrics = dir.join(format!("metrics-{tag}.json"));
        let mut cmd = Command::new(bin());
        if let Some(t) = threads {
            cmd.args(["--threads", t]);
        }
        run(cmd.args([
            "train",
            "--algo",
            "sdh_p",
            "--bits",
            "16",
            "--anchors",
            "500",
            "--batch",
            "100",
            "--seed",
            "7",
            "--features",
            features.to_str().unwrap(),
            "--labels",
            labels.to_str().unwrap(),
            "--out",
            model.to_str().unwrap(),
        ]));
        let mut cmd = Command::new(bin());
        if let Some(t) = threads {
            cmd.args(["--threads", t]);
        }
        run(cmd.args([
            "encode",
            "--model",
            model.to_str().unwrap(),
            "--features",
            queries.to_str().unwrap(),
            "--out",
            codes.to_str().unwrap(),
        ]));
        let mut cmd = Command::new(bin());
        if let Some(t) = threads {
            cmd.args(["--threads", t]);
        }
        let trained_codes = PathBuf::from(format!("{}.codes", model.display()));
        run(cmd.args([
            "eval",
            "--db-codes",
            trained_codes.to_str().unwrap(),
            "--query-codes",
            codes.to_str().unwrap(),
            "--db-labels",
            labels.to_str().unwrap(),
            "--query-labels",
            qlabels.to_str().unwrap(),
            "--top",
            "100",
            "--radius",
            "2",
            "--out",
            metrics.to_str().unwrap(),
        ]));
        outputs.push((
            fs::read(&model).unwrap(),
            fs::read(&trained_codes).unwrap(),
            fs::read(&codes).unwrap(),
            fs::read(&metrics).unwrap(),
        ));
    }
    for other in &outputs[1..] {
        assert_eq!(outputs[0].0, other.0, "model bytes differ");
        assert_eq!(outputs[0].1, other.1, "training code bytes differ");
        assert_eq!(outputs[0].2, other.2, "query code bytes differ");
        assert_eq!(outputs[0].3, other.3, "metrics bytes differ");
    }
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(180), "{elapsed:?}");
    pass(
        "criterion 10 (pipeline determinism and budget)",
        format!(
            "{} pipeline runs (repeat + --threads 1/2) byte-identical across model/codes/metrics, {elapsed:?}",
            variants.len()
        ),
    );
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pairhash")
}

fn run(cmd: &mut Command) {
    let out = cmd.output().expect("spawn");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stderr)
    );
}

// Reference metric implementations, straight from the formulas.

fn ref_ap(flags: &[bool], cutoff: usize) -> f64 {
    let top = cutoff.min(flags.len());
    let mut relevant = 0;
    let mut acc = 0.0;
    for k in 1..=top {
        if flags[k - 1] {
            relevant += 1;
            let precision_at_k = flags[..k].iter().filter(|&&f| f).count() as f64 / k as f64;
            acc += precision_at_k;
        }
    }
    if relevant == 0 {
        0.0
    } else {
        acc / relevant as f64
    }
}

fn ref_ndcg(rels: &[f64], cutoff: usize) -> f64 {
    let top = cutoff.min(rels.len());
    let dcg_of = |xs: &[f64]| -> f64 {
        let mut acc = if xs.is_empty() { 0.0 } else { xs[0] };
        for (k, &x) in xs.iter().enumerate().skip(1) {
            acc += x / ((k + 1) as f64).log2();
        }
        acc
    };
    let actual = dcg_of(&rels[..top]);
    let mut sorted = rels.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let ideal = dcg_of(&sorted[..top]);
    if ideal == 0.0 {
        0.0
    } else {
        actual / ideal
    }
}

fn ref_ball(q: &[u64], db: &CodeMatrix, flags: &[bool], radius: usize) -> (f64, f64) {
    let mut ball = 0;
    let mut hits = 0;
    for i in 0..db.n() {
        if hamming(q, db.packed_row(i)) <= radius {
            ball += 1;
            if flags[i] {
                hits += 1;
            }
        }
    }
    let total = flags.iter().filter(|&&f| f).count();
    (
        if ball == 0 { 0.0 } else { hits as f64 / ball as f64 },
        if total == 0 { 0.0 } else { hits as f64 / total as f64 },
    )
}

fn ref_acg(q: &[u64], db: &CodeMatrix, rels: &[f64], radius: usize) -> f64 {
    let mut ball = 0;
    let mut acc = 0.0;
    for i in 0..db.n() {
        if hamming(q, db.packed_row(i)) <= radius {
            ball += 1;
            acc += rels[i];
        }
    }
    if ball == 0 {
        0.0
    } else {
        acc / ball as f64
    }
}
