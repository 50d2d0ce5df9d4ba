//! Command-line front end: synthetic data generation, training, query
//! encoding, retrieval evaluation, and the built-in verification suite.
//!
//! Every command is deterministic given its flags and seed; `--threads`
//! caps the worker pool without changing any output byte.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pairhash::data::{self, FeatureFormat};
use pairhash::{encode, eval, gsdh, kernel, pairwise, sdh, selfcheck};

#[derive(Parser)]
#[command(
    name = "pairhash",
    version,
    about = "Learn compact binary codes from pairwise label supervision and evaluate Hamming-space retrieval"
)]
struct Cli {
    /// Cap worker threads (0 = automatic). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    /// Batch-sequential whole-row updates.
    #[value(name = "sdh_p")]
    SdhP,
    /// Greedy per-bit updates.
    #[value(name = "gsdh_p")]
    GsdhP,
    /// Per-bit updates minimizing the squared distance-to-target loss.
    #[value(name = "gsdh_p_bre")]
    GsdhPBre,
    /// Per-bit updates minimizing the squared hinge loss.
    #[value(name = "gsdh_p_hinge")]
    GsdhPHinge,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Binary,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled cluster dataset.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dims: usize,
        #[arg(long)]
        classes: usize,
        #[arg(long, default_value_t = 0.2)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output feature file (binary format).
        #[arg(long)]
        features_out: PathBuf,
        /// Output label file (text format).
        #[arg(long)]
        labels_out: PathBuf,
    },
    /// Learn a hash model from features and labels.
    Train {
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long)]
        bits: usize,
        #[arg(long, default_value_t = 1000)]
        anchors: usize,
        #[arg(long, default_value_t = 100)]
        batch: usize,
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
        /// Outer iteration cap.
        #[arg(long, default_value_t = 20)]
        l1: usize,
        /// Inner iteration cap.
        #[arg(long, default_value_t = 3)]
        l2: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ridge for the projection fit (default: 1e-6·trace(XᵀX)/d).
        #[arg(long)]
        ridge: Option<f64>,
        /// Gaussian kernel bandwidth σ² (default: mean pairwise squared
        /// distance heuristic).
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
        format: FormatArg,
        #[arg(long)]
        labels: PathBuf,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        /// Training codes output (packed binary); defaults to `<out>.codes`.
        #[arg(long)]
        codes_out: Option<PathBuf>,
        /// Diagnostics JSON-lines output; defaults to `<out>.diagnostics.jsonl`.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Encode query features with a trained model.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
        format: FormatArg,
        /// Output packed codes file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate retrieval of query codes against database codes.
    Eval {
        #[arg(long)]
        db_codes: PathBuf,
        #[arg(long)]
        query_codes: PathBuf,
        #[arg(long)]
        db_labels: PathBuf,
        #[arg(long)]
        query_labels: PathBuf,
        /// Ranking cutoff R.
        #[arg(long, default_value_t = 100)]
        top: usize,
        /// Hamming ball radius r.
        #[arg(long, default_value_t = 2)]
        radius: usize,
        /// Output metrics JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in verification suite and exit nonzero on failure.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Smoothing constant fed to the surrogate construction; negative
        /// values force the construction below its validity threshold
        /// (useful to verify the suite really fails).
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        beta: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: failed to configure thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_features_any(path: &Path, format: FormatArg) -> pairhash::Result<pairhash::linalg::Matrix> {
    let format = match format {
        FormatArg::Binary => FeatureFormat::Binary,
        FormatArg::Csv => FeatureFormat::Csv,
        FormatArg::Auto => {
            let head = std::fs::read(path).map(|bytes| bytes.get(..4).map(<[u8]>::to_vec))?;
            match head.as_deref() {
                Some(b"PHSH") => FeatureFormat::Binary,
                _ => FeatureFormat::Csv,
            }
        }
    };
    data::load_features(path, format)
}

fn run(command: Command) -> pairhash::Result<ExitCode> {
    match command {
        Command::Synth {
            n,
            dims,
            classes,
            spread,
            seed,
            features_out,
            labels_out,
        } => {
            let (x, labels) = data::synth_clusters(n, dims, classes, spread, seed)?;
            data::save_features(&features_out, &x)?;
            data::save_labels(&labels_out, &labels)?;
            println!(
                "wrote {} x {} features to {} and labels to {}",
                n,
                dims,
                features_out.display(),
                labels_out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            algo,
            bits,
            anchors,
            batch,
            beta,
            l1,
            l2,
            seed,
            ridge,
            bandwidth,
            features,
            format,
            labels,
            out,
            codes_out,
            diagnostics,
        } => {
            let x = load_features_any(&features, format)?;
            let label_data = data::load_labels(&labels)?;
            if label_data.len() != x.rows() {
                return Err(pairhash::Error::InvalidArgument(format!(
                    "{} labels for {} feature rows",
                    label_data.len(),
                    x.rows()
                )));
            }
            let mut cfg = sdh::TrainConfig::new(bits);
            cfg.anchors = anchors;
            cfg.batch_size = batch;
            cfg.beta = beta;
            cfg.outer_iters = l1;
            cfg.inner_iters = l2;
            cfg.seed = seed;
            cfg.ridge = ridge;

            let anchor_idx = pairwise::sample_anchors(x.rows(), cfg.anchors, seed)?;
            let map = kernel::fit(&x, &anchor_idx, bandwidth)?;
            let xk = kernel::apply(&map, &x)?;
            let s = if label_data.is_single_label() {
                pairwise::build_single_label(&label_data, &anchor_idx)?
            } else {
                pairwise::build_multi_label(&label_data, &anchor_idx)?
            };
            let s = pairwise::set_lambda(&s, bits);

            let (model, codes, diag) = match algo {
                Algo::SdhP => sdh::train(&xk, &s, &cfg)?,
                Algo::GsdhP => gsdh::train(&xk, &s, &cfg)?,
                Algo::GsdhPBre => gsdh::train_with_loss(&xk, &s, &cfg, gsdh::LossKind::Bre)?,
                Algo::GsdhPHinge => gsdh::train_with_loss(&xk, &s, &cfg, gsdh::LossKind::Hinge)?,
            };
            let model = model.with_kernel(map);
            data::save_model(&out, &model)?;

            let codes_path = codes_out.unwrap_or_else(|| append_ext(&out, "codes"));
            data::save_codes(&codes_path, &codes)?;

            let diag_path = diagnostics.unwrap_or_else(|| append_ext(&out, "diagnostics.jsonl"));
            let mut lines = String::new();
            for record in &diag.outer {
                lines.push_str(&serde_json::to_string(record).expect("serializable record"));
                lines.push('\n');
            }
            std::fs::write(&diag_path, lines)?;

            for record in &diag.outer {
                match record.code_change {
                    None => println!(
                        "iteration {}: anchor objective {:.6}",
                        record.iteration, record.anchor_objective
                    ),
                    Some(change) => println!(
                        "iteration {}: code change {:.6}, anchor objective {:.6}",
                        record.iteration, change, record.anchor_objective
                    ),
                }
            }
            println!(
                "model -> {}, codes -> {}, diagnostics -> {}",
                out.display(),
                codes_path.display(),
                diag_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Encode {
            model,
            features,
            format,
            out,
        } => {
            let model = data::load_model(&model)?;
            let x = load_features_any(&features, format)?;
            let codes = encode::encode_linear(&model, &x)?;
            data::save_codes(&out, &codes)?;
            println!(
                "encoded {} rows into {}-bit codes -> {}",
                codes.n(),
                codes.bits(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            db_codes,
            query_codes,
            db_labels,
            query_labels,
            top,
            radius,
            out,
        } => {
            let db = data::load_codes(&db_codes)?;
            let queries = data::load_codes(&query_codes)?;
            let dbl = data::load_labels(&db_labels)?;
            let ql = data::load_labels(&query_labels)?;
            let multi_label = !(dbl.is_single_label() && ql.is_single_label());
            let metrics = eval::evaluate(&queries, &db, &ql, &dbl, top, radius, multi_label)?;
            let curves = eval::evaluate_curves(&queries, &db, &ql, &dbl, top, radius, multi_label)?;
            let report = serde_json::json!({
                "map": metrics.map,
                "ndcg": metrics.ndcg,
                "acg": metrics.acg,
                "precision": metrics.precision,
                "recall": metrics.recall,
                "cutoff": metrics.cutoff,
                "radius": metrics.radius,
                "multi_label": multi_label,
                "precision_at": curves.precision_at,
                "recall_at": curves.recall_at,
                "map_at_radius": curves.map_at_radius,
            });
            std::fs::write(&out, format!("{}\n", serde_json::to_string_pretty(&report).expect("serializable")))?;
            println!(
                "map {:.6} ndcg {:.6} acg {:.6} precision {:.6} recall {:.6} -> {}",
                metrics.map,
                metrics.ndcg,
                metrics.acg,
                metrics.precision,
                metrics.recall,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Selfcheck { seed, beta } => {
            let reports = selfcheck::run_all(seed, beta)?;
            let mut all_passed = true;
            for r in &reports {
                println!(
                    "{:<26} trials {:>4}  max residual {:>12.3e}  threshold {:>8.1e}  {}",
                    r.name,
                    r.trials,
                    r.max_residual,
                    r.threshold,
                    if r.passed { "ok" } else { "FAILED" }
                );
                all_passed &= r.passed;
            }
            if all_passed {
                println!("all checks passed");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("verification FAILED");
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn append_ext(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}
