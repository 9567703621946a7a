use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ctxtrack::clustering::{load_database, save_database, LearnedDatabase};
use ctxtrack::config::Config;
use ctxtrack::controller::{track_adaptive, ApplyMode};
use ctxtrack::features::{extract_context, FeatureSource, FEATURE_NAMES};
use ctxtrack::pipeline::{evaluate_sequence, run_compare_experiment, run_learn_pipeline, track_fixed, NamedSequence};
use ctxtrack::scene::Sequence;
use ctxtrack::segmentation::segment_context;
use ctxtrack::seqfile::{load_sequence, save_sequence};
use ctxtrack::sim::{preset_scenarios, scenario, NoiseSpec, SimConfig};
use ctxtrack::trackfile::{load_tracks, save_tracks};
use ctxtrack::tracker::{Weights, DESCRIPTOR_COUNT};
use ctxtrack::{Error, Result};

/// Context-adaptive multi-object tracking pipeline.
#[derive(Parser, Debug)]
#[command(name = "ctxtrack", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Settings that take precedence over the config file.
#[derive(Args, Debug)]
struct Overrides {
    /// TOML config file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    th1: Option<f64>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Frames per context chunk.
    #[arg(long, global = true)]
    chunk_len: Option<usize>,
    #[arg(long, global = true)]
    link_threshold: Option<f64>,
    #[arg(long, global = true)]
    temporal_window: Option<usize>,
    #[arg(long, global = true)]
    iou_threshold: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an annotated sequence from a preset scenario.
    Simulate {
        #[arg(long, required_unless_present = "list")]
        scenario: Option<String>,
        #[arg(long, required_unless_present = "list")]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = NoiseLevel::Preset)]
        noise: NoiseLevel,
        /// Print the scenario catalog and exit.
        #[arg(long)]
        list: bool,
    },
    /// Per-frame context features of a sequence.
    Features {
        seq: PathBuf,
        #[arg(long, value_enum, default_value_t = Source::Annotations)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cut an annotated sequence into stable-context segments.
    Segment {
        seq: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn a context database from annotated sequences.
    Learn {
        #[arg(required = true)]
        seqs: Vec<PathBuf>,
        #[arg(long)]
        db: PathBuf,
        /// Also write the per-cluster summary here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Track the detections of a sequence.
    Track {
        seq: PathBuf,
        /// Fixed descriptor weights `w1,w2,w3,w4,w5` (must sum to 1).
        #[arg(long, conflicts_with = "adaptive")]
        weights: Option<String>,
        #[arg(long)]
        learned_db: Option<PathBuf>,
        /// Retune weights online from the learned database.
        #[arg(long, requires = "learned_db")]
        adaptive: bool,
        /// Track each chunk with its own decision (two-pass) instead of the next one.
        #[arg(long, requires = "adaptive")]
        retroactive: bool,
        /// Write the per-chunk decision log (JSON).
        #[arg(long, requires = "adaptive")]
        log: Option<PathBuf>,
        /// Append unknown chunks to the database's pending list and save it.
        #[arg(long, requires = "adaptive")]
        save_pending: bool,
        /// Tracks in `frame,trackId,x,y,w,h` form; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score tracks against a sequence's annotations.
    Eval {
        seq: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixed uniform weights versus the controller on the same detections.
    Compare {
        /// Sequence file; alternatively generate one with --scenario.
        #[arg(required_unless_present = "scenario", conflicts_with = "scenario")]
        seq: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        learned_db: PathBuf,
        #[arg(long)]
        retroactive: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NoiseLevel {
    /// The scenario's own noise model.
    Preset,
    None,
    Moderate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Source {
    Annotations,
    Detections,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

fn load_config(o: &Overrides) -> Result<Config> {
    let mut cfg = match &o.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => { $(if let Some(v) = o.$field { cfg.$field = v; })* };
    }
    apply!(th1, eps, chunk_len, link_threshold, temporal_window, iou_threshold, seed);
    cfg.validate()?;
    Ok(cfg)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_err(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_weights(text: &str) -> Result<Weights> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidParams(format!("--weights: {e}")))?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| Error::InvalidParams(format!("--weights needs {DESCRIPTOR_COUNT} values, got {}", v.len())))
}

fn sequence_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Stamped<T: Serialize> {
    config_hash: String,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

fn stamped<T: Serialize>(cfg: &Config, body: T) -> Stamped<T> {
    Stamped {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        body,
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.overrides)?;
    match cli.command {
        Command::Simulate {
            scenario: name,
            out,
            noise,
            list,
        } => {
            if list {
                for s in preset_scenarios() {
                    println!("{:<24} {} frames  {}", s.name, s.total_frames(), s.description);
                }
                return Ok(());
            }
            let (Some(name), Some(out)) = (name, out) else {
                unreachable!("clap enforces --scenario and --out")
            };
            let mut sc = scenario(&name)?;
            match noise {
                NoiseLevel::Preset => {}
                NoiseLevel::None => sc.noise = NoiseSpec::none(),
                NoiseLevel::Moderate => sc.noise = NoiseSpec::moderate(),
            }
            let sim = SimConfig {
                bins: cfg.bins,
                dominant_k: cfg.dominant_k,
                ..SimConfig::default()
            };
            let seq = sc.generate_in(&sim, cfg.seed).map_err(|e| e.in_stage("simulate"))?;
            save_sequence(&seq, &out)?;
            eprintln!(
                "{}: {} frames, switches at {:?}, seed {}",
                out.display(),
                seq.len(),
                sc.switch_frames(),
                cfg.seed
            );
            Ok(())
        }
        Command::Features { seq, source, out } => {
            let s = load_sequence(&seq)?;
            let source = match source {
                Source::Annotations => FeatureSource::Annotations,
                Source::Detections => FeatureSource::Detections,
            };
            let chunk = extract_context(&s, source, 0, s.len()).map_err(|e| e.in_stage("features"))?;
            #[derive(Serialize)]
            struct Body {
                features: [&'static str; 6],
                samples: Vec<ctxtrack::features::ContextSample>,
            }
            emit(
                &stamped(
                    &cfg,
                    Body {
                        features: FEATURE_NAMES,
                        samples: chunk.samples,
                    },
                ),
                out.as_deref(),
            )
        }
        Command::Segment { seq, out } => {
            let s = load_sequence(&seq)?;
            let segments = segment_context(&s, cfg.segmentation()).map_err(|e| e.in_stage("segment"))?;
            #[derive(Serialize)]
            #[serde(rename_all = "camelCase")]
            struct Seg {
                start_frame: usize,
                end_frame: usize,
                word_counts: [usize; 6],
                merge_distances: Vec<f64>,
            }
            #[derive(Serialize)]
            struct Body {
                segments: Vec<Seg>,
            }
            let segments = segments
                .into_iter()
                .map(|g| Seg {
                    start_frame: g.start_frame,
                    end_frame: g.end_frame,
                    word_counts: g.model.word_counts(),
                    merge_distances: g.merge_distances,
                })
                .collect();
            emit(&stamped(&cfg, Body { segments }), out.as_deref())
        }
        Command::Learn { seqs, db, summary } => {
            let named = seqs
                .iter()
                .map(|p| Ok(NamedSequence::new(sequence_name(p), load_sequence(p)?)))
                .collect::<Result<Vec<_>>>()?;
            let (database, report) = run_learn_pipeline(&named, &cfg)?;
            save_database(&database, &db)?;
            eprintln!(
                "{} sequences, {} contexts ({} satisfied) -> {} clusters",
                report.sequences,
                report.contexts,
                report.satisfied,
                report.clusters.len()
            );
            for c in &report.clusters {
                let w: Vec<String> = c.weights.iter().map(|w| format!("{w:.3}")).collect();
                eprintln!(
                    "  cluster {:>3}: {:>3} contexts, {:>6} frames, weights [{}]",
                    c.cluster_id,
                    c.members,
                    c.support_frames,
                    w.join(", ")
                );
            }
            if let Some(path) = summary {
                emit(&report, Some(&path))?;
            }
            Ok(())
        }
        Command::Track {
            seq,
            weights,
            learned_db,
            adaptive,
            retroactive,
            log,
            save_pending,
            out,
        } => {
            let s = load_sequence(&seq)?;
            let mut params = cfg.tracker();
            if let Some(w) = weights {
                params.weights = parse_weights(&w)?;
            }
            params.validate()?;
            let tracks = if adaptive {
                let db_path = learned_db.expect("clap enforces --learned-db");
                let mut db = load_database(&db_path)?;
                let mut ctl = cfg.controller();
                if retroactive {
                    ctl.mode = ApplyMode::Retroactive;
                }
                let run = track_adaptive(&s.frames, s.frame_area(), &db, params, ctl)
                    .map_err(|e| e.in_stage("adaptive tracking"))?;
                if let Some(path) = log {
                    emit(&stamped(&cfg, DecisionLog { decisions: &run.decisions }), Some(&path))?;
                }
                if save_pending && !run.pending_chunks.is_empty() {
                    db.pending_chunks.extend(run.pending_chunks);
                    save_database(&db, &db_path)?;
                }
                run.trajectories
            } else {
                if learned_db.is_some() {
                    eprintln!("note: --learned-db has no effect without --adaptive");
                }
                track_fixed(&s, params).map_err(|e| e.in_stage("tracking"))?
            };
            match out {
                Some(path) => save_tracks(&tracks, &path),
                None => ctxtrack::trackfile::write_tracks(&tracks, std::io::stdout().lock()),
            }
        }
        Command::Eval { seq, tracks, out } => {
            let s = load_sequence(&seq)?;
            let t = load_tracks(&tracks)?;
            let report = evaluate_sequence(&s, &t, cfg.iou_threshold)?;
            emit(&stamped(&cfg, report), out.as_deref())
        }
        Command::Compare {
            seq,
            scenario: name,
            learned_db,
            retroactive,
            out,
        } => {
            let s: Sequence = match (&seq, &name) {
                (Some(path), _) => load_sequence(path)?,
                (None, Some(name)) => scenario(name)?.generate(cfg.seed).map_err(|e| e.in_stage("simulate"))?,
                (None, None) => unreachable!("clap enforces a sequence or --scenario"),
            };
            let db: LearnedDatabase = load_database(&learned_db)?;
            let mut run_cfg = cfg;
            if retroactive {
                run_cfg.apply_mode = ApplyMode::Retroactive;
            }
            let report = run_compare_experiment(&s, &db, &run_cfg, cfg.seed)?;
            eprintln!(
                "fixed    MT {:5.1}  PT {:5.1}  ML {:5.1}  MOTA {:.3}  MOTP {:.3}",
                report.fixed.mt, report.fixed.pt, report.fixed.ml, report.fixed.mota, report.fixed.motp
            );
            eprintln!(
                "adaptive MT {:5.1}  PT {:5.1}  ML {:5.1}  MOTA {:.3}  MOTP {:.3}",
                report.adaptive.mt,
                report.adaptive.pt,
                report.adaptive.ml,
                report.adaptive.mota,
                report.adaptive.motp
            );
            emit(&report, out.as_deref())
        }
    }
}

#[derive(Serialize)]
struct DecisionLog<'a> {
    decisions: &'a [ctxtrack::controller::Decision],
}
