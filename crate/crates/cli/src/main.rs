use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use nalgebra::DMatrix;

use onda_core::benchmarks::{tune_sa_dim, BenchmarkConfig, BenchmarkMethod};
use onda_core::config::RunConfig;
use onda_core::eval::{loso_evaluate, tune, EvalReport, Method, SubjectStream};
use onda_core::graph::{read_graph_cache, write_graph_cache, GraphModel};
use onda_core::onda::{continue_stream, read_checkpoint, run_stream, write_checkpoint, Label};
use onda_core::preprocess::{read_frames, read_mask, Compressor, Mask};
use onda_core::{io, report, synth};

#[derive(Parser, Debug)]
#[command(name = "onda", version, about = "Online domain-adaptive viability classification")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the generator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every output file.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Target frames between model refreshes.
    #[arg(long, global = true)]
    refresh_every: Option<usize>,
    /// Graph cache file written by `graph` and read by `features`.
    #[arg(long, global = true)]
    graph_cache: Option<PathBuf>,
    /// Region mask (PGM or 0/1 CSV).
    #[arg(long, global = true)]
    mask: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic subject streams.
    Synth {
        /// Also write raw frames and the mask.
        #[arg(long)]
        raw: bool,
    },
    /// Mask and compress raw frames into graph signals.
    Preprocess {
        /// Directory of per-frame CSV files or one combined CSV.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        /// Pixel block size.
        #[arg(long, default_value_t = 5)]
        window: usize,
    },
    /// Build the similarity graph and its eigenbasis from signals.
    Graph {
        #[arg(long)]
        signals: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// Leading frames averaged into the graph signal.
        #[arg(long, default_value_t = 18)]
        window: usize,
    },
    /// Project signals onto the leading graph frequencies.
    Features {
        #[arg(long)]
        signals: PathBuf,
        #[arg(long, default_value_t = 50)]
        dim: usize,
    },
    /// Run the adaptive classifier on one source/target pair.
    Fit {
        /// Labeled source stream.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Target stream or feature file.
        #[arg(long)]
        target: PathBuf,
        /// Per-frame prediction CSV (relative to the output directory).
        #[arg(long, default_value = "fit.csv")]
        out: PathBuf,
        /// Save the final state here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from a saved state instead of fitting the source.
        #[arg(long, conflicts_with = "source")]
        resume: Option<PathBuf>,
    },
    /// Run one benchmark method on a source/target pair.
    Bench {
        #[arg(long)]
        method: String,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
    /// Select lambda1 and lambda2 by leave-one-out over source streams.
    Tune {
        /// Source streams; target data is never passed here.
        #[arg(long, num_args = 2.., required = true)]
        sources: Vec<PathBuf>,
        /// Tune the alignment subspace dimension instead.
        #[arg(long)]
        subspace: bool,
    },
    /// Leave-one-subject-out evaluation.
    Eval {
        /// Subject streams; synthesized from the configuration when omitted.
        #[arg(long, num_args = 1..)]
        streams: Vec<PathBuf>,
        /// Comma-separated method names.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "proposed,svm_offline,svm_online,sa_offline,sa_online"
        )]
        methods: Vec<String>,
    },
    /// Rebuild the summary and timeline from a prediction CSV.
    Report {
        #[arg(long)]
        predictions: PathBuf,
    },
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.synth.seed = seed;
    }
    if let Some(k) = g.refresh_every {
        cfg.eval.refresh_every = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(g: &Global, name: &Path) -> PathBuf {
    if name.is_absolute() {
        name.to_path_buf()
    } else {
        g.out_dir.join(name)
    }
}

fn stream_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "subject".into())
}

fn load_stream(path: &Path, cfg: &RunConfig) -> Result<SubjectStream> {
    io::read_stream_csv(path, &stream_id(path), cfg.synth.cadence_minutes)
        .with_context(|| format!("reading stream {}", path.display()))
}

/// A target is either a labeled stream or a bare feature file.
fn load_target(path: &Path, cfg: &RunConfig) -> Result<(DMatrix<f64>, Option<SubjectStream>)> {
    match load_stream(path, cfg) {
        Ok(s) => Ok((s.features.clone(), Some(s))),
        Err(_) => Ok((
            io::read_features_csv(path).with_context(|| format!("reading {}", path.display()))?,
            None,
        )),
    }
}

fn graph_cache_path(g: &Global) -> PathBuf {
    g.graph_cache
        .clone()
        .unwrap_or_else(|| g.out_dir.join("graph.bin"))
}

fn write_labels(
    path: &Path,
    labels: &[Label],
    truth: Option<&SubjectStream>,
    margins: Option<&[f64]>,
) -> Result<()> {
    let mut text = String::from("frame,predicted");
    if margins.is_some() {
        text.push_str(",margin");
    }
    if truth.is_some() {
        text.push_str(",truth,scored");
    }
    text.push('\n');
    for (t, y) in labels.iter().enumerate() {
        text.push_str(&format!("{t},{y}"));
        if let Some(m) = margins {
            text.push_str(&format!(",{:?}", m[t]));
        }
        if let Some(s) = truth {
            text.push_str(&format!(",{},{}", s.labels[t], u8::from(s.is_scored(t))));
        }
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn method_from_name(name: &str, cfg: &RunConfig) -> Result<Method> {
    if name == "proposed" {
        return Ok(Method::Proposed(cfg.hyperparams.clone()));
    }
    let method = BenchmarkMethod::from_name(name)?;
    Ok(Method::Benchmark(BenchmarkConfig {
        method,
        subspace_dim: cfg.subspace_dim,
        svm: cfg.svm.clone(),
    }))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    fs::create_dir_all(&g.out_dir)
        .with_context(|| format!("creating {}", g.out_dir.display()))?;

    match &cli.command {
        Command::Synth { raw } => {
            let streams = synth::synth_streams(&cfg.synth)?;
            for s in &streams {
                let path = g.out_dir.join(format!("{}.csv", s.id));
                io::write_stream_csv(&path, s)?;
                info!("wrote {}", path.display());
            }
            if *raw {
                let (mask, subjects) = synth::synth_raw(&cfg.synth)?;
                io::write_mask_csv(&g.out_dir.join("mask.csv"), &mask)?;
                for (s, subject) in streams.iter().zip(&subjects) {
                    let path = g.out_dir.join(format!("{}_frames.csv", s.id));
                    io::write_frames_csv(&path, &subject.frames)?;
                }
            }
            println!("wrote {} subject streams to {}", streams.len(), g.out_dir.display());
        }
        Command::Preprocess {
            frames,
            height,
            width,
            window,
        } => {
            let mask = match &g.mask {
                Some(p) => read_mask(p).with_context(|| format!("reading mask {}", p.display()))?,
                None => Mask::full(*height, *width)?,
            };
            let frames = read_frames(frames, *height, *width)?;
            let comp = Compressor::new(&mask, *window)?;
            let signals = frames
                .iter()
                .enumerate()
                .map(|(t, f)| comp.apply(f, t))
                .collect::<onda_core::Result<Vec<_>>>()?;
            io::write_signals_csv(&g.out_dir.join("signals.csv"), &signals)?;
            io::write_grid_csv(&g.out_dir.join("grid.csv"), comp.grid())?;
            println!(
                "compressed {} frames onto {} vertices",
                signals.len(),
                comp.grid().vertex_count()
            );
        }
        Command::Graph {
            signals,
            grid,
            window,
        } => {
            let signals = io::read_signals_csv(signals)?;
            let grid = io::read_grid_csv(grid)?;
            let model = GraphModel::from_signals(grid, &signals, *window, cfg.sigma)?;
            let path = graph_cache_path(g);
            write_graph_cache(&path, &model)?;
            println!(
                "graph on {} vertices, sigma {:.6}, written to {}",
                model.basis.dim(),
                model.sigma,
                path.display()
            );
        }
        Command::Features { signals, dim } => {
            let model = read_graph_cache(&graph_cache_path(g))?;
            let signals = io::read_signals_csv(signals)?;
            let features = model.features(&signals, *dim)?;
            let path = g.out_dir.join("features.csv");
            io::write_features_csv(&path, &features)?;
            println!("wrote {}x{} features to {}", features.nrows(), features.ncols(), path.display());
        }
        Command::Fit {
            source,
            target,
            out,
            checkpoint,
            resume,
        } => {
            let (tx, truth) = load_target(target, &cfg)?;
            let k = cfg.eval.refresh_every;
            let run = match (source, resume) {
                (Some(src), None) => {
                    let s = load_stream(src, &cfg)?;
                    let (sx, sy) = s.training_set();
                    run_stream(&sx, &sy, &tx, &cfg.hyperparams, k)?
                }
                (None, Some(ckpt)) => continue_stream(read_checkpoint(ckpt)?, &tx, k)?,
                _ => bail!("fit needs --source or --resume"),
            };
            let labels: Vec<Label> = run.predictions.iter().map(|p| p.label).collect();
            let margins: Vec<f64> = run.predictions.iter().map(|p| p.margin).collect();
            write_labels(&out_path(g, out), &labels, truth.as_ref(), Some(&margins))?;
            if let Some(p) = checkpoint {
                write_checkpoint(&out_path(g, p), &run.state)?;
            }
            let slowest = run.refresh_seconds.iter().copied().fold(0.0, f64::max);
            println!(
                "{} refreshes, slowest {:.3}s",
                run.refresh_seconds.len(),
                slowest
            );
            if let Some(s) = &truth {
                let idx: Vec<usize> = (0..s.len()).filter(|&t| s.is_scored(t)).collect();
                let m = onda_core::eval::metrics(
                    &idx.iter().map(|&t| s.labels[t]).collect::<Vec<_>>(),
                    &idx.iter().map(|&t| labels[t]).collect::<Vec<_>>(),
                )?;
                println!(
                    "acc {:.4} prc {:.4} rcl {:.4}",
                    m.accuracy, m.precision, m.recall
                );
            }
        }
        Command::Bench {
            method,
            source,
            target,
            out,
        } => {
            let bench = BenchmarkConfig {
                method: BenchmarkMethod::from_name(method)?,
                subspace_dim: cfg.subspace_dim,
                svm: cfg.svm.clone(),
            };
            let s = load_stream(source, &cfg)?;
            let (sx, sy) = s.training_set();
            let (tx, truth) = load_target(target, &cfg)?;
            let labels = bench.run(&sx, &sy, &tx)?;
            write_labels(&out_path(g, out), &labels, truth.as_ref(), None)?;
            println!("{} predicted {} frames", method, labels.len());
        }
        Command::Tune { sources, subspace } => {
            let streams = sources
                .iter()
                .map(|p| load_stream(p, &cfg))
                .collect::<Result<Vec<_>>>()?;
            if *subspace {
                let domains: Vec<_> = streams.iter().map(SubjectStream::training_set).collect();
                let d = tune_sa_dim(&domains, &cfg.subspace_grid, &cfg.svm)?;
                println!("subspace_dim = {d}");
            } else {
                let result = tune(&streams, &cfg.grid, &cfg.hyperparams, &cfg.eval)?;
                let mut text = String::from("lambda1,lambda2,accuracy\n");
                for (i, l1) in result.lambda1_grid.iter().enumerate() {
                    for (j, l2) in result.lambda2_grid.iter().enumerate() {
                        text.push_str(&format!("{l1},{l2},{:.6}\n", result.scores[(i, j)]));
                    }
                }
                fs::write(g.out_dir.join("tune.csv"), text)?;
                println!("lambda1 = {}\nlambda2 = {}", result.lambda1, result.lambda2);
            }
        }
        Command::Eval { streams, methods } => {
            let streams = if streams.is_empty() {
                synth::synth_streams(&cfg.synth)?
            } else {
                streams
                    .iter()
                    .map(|p| load_stream(p, &cfg))
                    .collect::<Result<Vec<_>>>()?
            };
            let mut reports: Vec<EvalReport> = Vec::new();
            for name in methods {
                let method = method_from_name(name, &cfg)?;
                let clock = Instant::now();
                let report = loso_evaluate(&streams, &method, &cfg.eval)?;
                let avg = report.average();
                println!(
                    "{:<12} acc {:.4} prc {:.4} rcl {:.4} ({:.1}s)",
                    name,
                    avg.accuracy,
                    avg.precision,
                    avg.recall,
                    clock.elapsed().as_secs_f64()
                );
                reports.push(report);
            }
            report::emit_report(&g.out_dir, &reports)?;
        }
        Command::Report { predictions } => {
            let reports = report::read_predictions_csv(predictions)?;
            report::emit_report(&g.out_dir, &reports)?;
            println!("report written to {}", g.out_dir.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
