use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vap_core::events::extract_events;
use vap_core::io::{read_segments, write_segments_json};
use vap_core::va::{encode_all, rasterize_va, va_history_all};
use vap_core::{FrameRate, Metric, Speaker, VaSegment};
use vap_dsp::io::{read_alignment, read_phone_means, read_wav, write_wav, WavFormat};
use vap_harness::pipeline::{perturb_cues, perturb_wave, ScpEntry, ScpInput};
use vap_harness::{
    generate_corpus, load_dialog, read_manifest, read_report, run_pipeline, run_scp, synth_scp_pairs, train_on_dialogs,
    write_report, CueTracks, Dialog, DialogEntry, HarnessConfig, HarnessError, Perturbation, PipelineOptions,
};
use vap_model::{Checkpoint, Frontend};

#[derive(Parser)]
#[command(name = "vap", version, about = "Voice activity projection: synthesis, training and zero-shot evaluation")]
struct Cli {
    /// Seed for every random choice (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Frame rate in Hz: 20, 50 or 100.
    #[arg(long, global = true, value_parser = parse_rate)]
    frame_rate: Option<FrameRate>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

fn parse_rate(s: &str) -> Result<FrameRate, String> {
    match s.parse::<u32>() {
        Ok(hz @ (20 | 50 | 100)) => FrameRate::new(hz).map_err(|e| e.to_string()),
        _ => Err(format!("frame rate must be 20, 50 or 100, got `{s}`")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic dialogs with cue channels and a manifest.
    Synth {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-frame projection classes and history features of a VA file.
    Encode {
        #[command(flatten)]
        va: VaArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn-taking events of a VA file as JSON.
    Events {
        #[command(flatten)]
        va: VaArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one perturbation to a WAV file or a cue CSV.
    Perturb {
        /// e.g. f0_flat, f0_shift:0.9, intensity_flat, low_pass:400,
        /// duration_avg, ablate:pitch, offset:pitch:-0.15
        #[arg(long)]
        perturbation: Perturbation,
        /// Mono or two-channel WAV.
        #[arg(long, conflicts_with = "cues")]
        audio: Option<PathBuf>,
        /// Cue CSV (`<name>_a,<name>_b` columns).
        #[arg(long)]
        cues: Option<PathBuf>,
        /// VA segments bounding the per-segment audio transforms.
        #[arg(long)]
        va: Option<PathBuf>,
        #[arg(long)]
        alignment: Option<PathBuf>,
        #[arg(long)]
        phone_means: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a checkpoint on a manifest or on synthetic dialogs.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zero-shot evaluation under perturbations.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Perturbations besides the original (repeatable).
        #[arg(long = "perturb")]
        perturbations: Vec<Perturbation>,
        /// shift_hold, shift_prediction, bc_prediction (repeatable; all by default).
        #[arg(long = "metric", value_parser = parse_metric)]
        metrics: Vec<Metric>,
        #[arg(long)]
        phone_means: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shift probability around short completion points.
    Scp {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest of recorded utterances; synthetic pairs otherwise.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Number of synthetic pairs.
        #[arg(long, default_value_t = 9)]
        pairs: usize,
        #[arg(long = "perturb")]
        perturbations: Vec<Perturbation>,
        #[arg(long)]
        phone_means: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render tables and charts from a report.json.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct VaArgs {
    /// VA segments, JSON or CSV.
    #[arg(long)]
    va: PathBuf,
    /// Dialog length in seconds (last segment end by default).
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct DataArgs {
    /// JSON manifest of dialogs.
    #[arg(long, conflicts_with = "synth")]
    manifest: Option<PathBuf>,
    /// Generate this many synthetic dialogs instead.
    #[arg(long)]
    synth: Option<usize>,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    Metric::parse(s).ok_or_else(|| format!("unknown metric `{s}`"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<HarnessConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    if let Some(fr) = cli.frame_rate {
        cfg.set_frame_rate(fr);
    }
    if let Some(seed) = cli.seed {
        cfg.synth.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| HarnessError::from(e).at("write", path))?))
}

fn load_va(args: &VaArgs, fr: FrameRate) -> Result<vap_core::VaGrid, HarnessError> {
    let segs = read_segments(&args.va).map_err(|e| HarnessError::from(e).at("load", &args.va))?;
    let duration = args.duration.unwrap_or_else(|| segs.iter().map(|s| s.end).fold(0.0, f64::max));
    rasterize_va(&segs, fr, duration).map_err(|e| HarnessError::from(e).at("load", &args.va))
}

fn synth_dialogs(cfg: &HarnessConfig, count: usize) -> Result<Vec<Dialog>, HarnessError> {
    Ok(generate_corpus(&cfg.synth, count)?
        .iter()
        .enumerate()
        .map(|(i, d)| Dialog::from_synth(format!("synth_{i:04}"), d))
        .collect())
}

fn load_data(data: &DataArgs, cfg: &HarnessConfig) -> Result<Vec<Dialog>, HarnessError> {
    match (&data.manifest, data.synth) {
        (Some(m), _) => read_manifest::<DialogEntry>(m)?.iter().map(|e| load_dialog(e, &cfg.model)).collect(),
        (None, Some(n)) => synth_dialogs(cfg, n),
        (None, None) => Err(HarnessError::Invalid("give --manifest or --synth".into())),
    }
}

fn load_phone_means(path: &Option<PathBuf>) -> Result<Option<std::collections::BTreeMap<String, f64>>, HarnessError> {
    path.as_ref()
        .map(|p| {
            let f = File::open(p).map_err(|e| HarnessError::from(e).at("load", p))?;
            read_phone_means(BufReader::new(f)).map_err(|e| HarnessError::from(e).at("load", p))
        })
        .transpose()
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let cfg = load_config(&cli)?;
    let seed = cli.seed.unwrap_or(cfg.synth.seed);
    let fr = cfg.model.frame_rate;
    match cli.command {
        Command::Synth { count, ref out } => {
            let corpus = generate_corpus(&cfg.synth, count)?;
            let mut manifest = Vec::new();
            for (i, d) in corpus.iter().enumerate() {
                let name = format!("synth_{i:04}");
                let dir = out.join(&name);
                write_segments_json(&d.grid.to_segments(), create(&dir.join("va.json"))?)?;
                d.cues.write_csv(create(&dir.join("cues.csv"))?)?;
                serde_json::to_writer_pretty(create(&dir.join("truth.json"))?, &d.truth)?;
                manifest.push(DialogEntry {
                    name: Some(name.clone()),
                    va: PathBuf::from(&name).join("va.json"),
                    audio: None,
                    features: Some(PathBuf::from(&name).join("cues.csv")),
                    alignment: None,
                    duration: Some(d.grid.duration()),
                });
            }
            serde_json::to_writer_pretty(create(&out.join("manifest.json"))?, &manifest)?;
            log::info!("wrote {count} dialogs to {}", out.display());
        }
        Command::Encode { ref va, ref out } => {
            let grid = load_va(va, fr)?;
            let classes = encode_all(&grid, &cfg.model.bins)?;
            let history = va_history_all(&grid);
            let mut w = create(out)?;
            writeln!(w, "frame,va_a,va_b,class,h1,h2,h3,h4,h5")?;
            for (t, h) in history.iter().enumerate() {
                let class = classes.get(t).map(|c| c.to_string()).unwrap_or_default();
                let r = h.ratios;
                writeln!(
                    w,
                    "{t},{},{},{class},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    grid.is_active(Speaker::A, t) as u8,
                    grid.is_active(Speaker::B, t) as u8,
                    r[0],
                    r[1],
                    r[2],
                    r[3],
                    r[4]
                )?;
            }
            w.flush()?;
        }
        Command::Events { ref va, ref out } => {
            let grid = load_va(va, fr)?;
            let events = extract_events(&grid, &cfg.events, &mut ChaCha8Rng::seed_from_u64(seed));
            serde_json::to_writer_pretty(create(out)?, &events)?;
        }
        Command::Perturb { ref perturbation, ref audio, ref cues, ref va, ref alignment, ref phone_means, ref out } => {
            match (audio, cues) {
                (Some(a), None) => {
                    let waves = read_wav(a, Speaker::A).map_err(|e| HarnessError::from(e).at("load", a))?;
                    let segs: Vec<VaSegment> = match va {
                        Some(p) => read_segments(p).map_err(|e| HarnessError::from(e).at("load", p))?,
                        None => Vec::new(),
                    };
                    let alignment = match alignment {
                        Some(p) => Some(read_alignment(p).map_err(|e| HarnessError::from(e).at("load", p))?),
                        None => None,
                    };
                    let means = load_phone_means(phone_means)?;
                    let mut outs = Vec::new();
                    for w in &waves {
                        // a mono file is bounded by every segment
                        let own: Vec<VaSegment> = segs
                            .iter()
                            .filter(|s| waves.len() == 1 || s.speaker == w.speaker)
                            .map(|s| VaSegment::new(w.speaker, s.start, s.end))
                            .collect();
                        let own = vap_core::va::merge_segments(&own)?;
                        let t = perturb_wave(w, &own, perturbation, alignment.as_ref(), means.as_ref())?;
                        for warning in &t.warnings {
                            log::warn!("{warning}");
                        }
                        outs.push(t.wave);
                    }
                    let refs: Vec<_> = outs.iter().collect();
                    write_wav(out, &refs, WavFormat::Float32).map_err(|e| HarnessError::from(e).at("write", out))?;
                }
                (None, Some(c)) => {
                    let f = File::open(c).map_err(|e| HarnessError::from(e).at("load", c))?;
                    let tracks = CueTracks::read_csv(BufReader::new(f), fr)?;
                    perturb_cues(&tracks, perturbation)?.write_csv(create(out)?)?;
                }
                _ => return Err(HarnessError::Invalid("give exactly one of --audio or --cues".into())),
            }
        }
        Command::Train { ref data, ref out } => {
            let mut cfg = cfg.clone();
            if data.synth.is_some() {
                let dims = cfg.synth.cue_dims();
                if cfg.model.frontend != (Frontend::VaOnly { extra_dims: dims }) {
                    log::info!("synthetic data: using the va_only frontend with {dims} cue dims");
                    cfg.model.frontend = Frontend::VaOnly { extra_dims: dims };
                }
            }
            let dialogs = load_data(data, &cfg)?;
            let outcome = train_on_dialogs(&dialogs, &cfg.model, &cfg.train, cfg.valid_fraction)?;
            outcome.checkpoint.save(out).map_err(|e| HarnessError::from(e).at("write", out))?;
            let history = out.with_extension("history.json");
            serde_json::to_writer_pretty(
                create(&history)?,
                &serde_json::json!({ "history": outcome.history, "stop": outcome.stop }),
            )?;
            log::info!("stopped: {:?}; checkpoint at {}", outcome.stop, out.display());
        }
        Command::Eval { ref checkpoint, ref data, ref perturbations, ref metrics, ref phone_means, ref out } => {
            let ckpt = Checkpoint::<f32>::load(checkpoint).map_err(|e| HarnessError::from(e).at("load", checkpoint))?;
            let mut cfg = cfg.clone();
            cfg.model = ckpt.model.config.clone();
            cfg.synth.frame_rate = cfg.model.frame_rate;
            let dialogs = load_data(data, &cfg)?;
            let metrics = if metrics.is_empty() {
                vec![Metric::ShiftHold, Metric::ShiftPrediction, Metric::BcPrediction]
            } else {
                metrics.clone()
            };
            let opts = PipelineOptions {
                events: cfg.events,
                aggregation: cfg.aggregation.clone(),
                seed,
                phone_means: load_phone_means(phone_means)?,
                flush_dir: Some(out.clone()),
            };
            let report = run_pipeline(&dialogs, &ckpt, perturbations, &metrics, &opts)?;
            write_report(&report, out)?;
            for r in &report.results {
                for e in &r.reports {
                    println!(
                        "{:<24} {:<18} F1 {:.3} (baseline {:.3})",
                        r.perturbation.to_string(),
                        e.metric.name(),
                        e.weighted_f1,
                        e.baseline_weighted_f1
                    );
                }
            }
        }
        Command::Scp { ref checkpoint, ref manifest, pairs, ref perturbations, ref phone_means, ref out } => {
            let ckpt = Checkpoint::<f32>::load(checkpoint).map_err(|e| HarnessError::from(e).at("load", checkpoint))?;
            let model_cfg = ckpt.model.config.clone();
            let inputs: Vec<ScpInput> = match manifest {
                Some(m) => read_manifest::<ScpEntry>(m)?.iter().map(|e| e.load(&model_cfg)).collect::<Result<_, _>>()?,
                None => {
                    let mut spec = cfg.synth.clone();
                    spec.frame_rate = model_cfg.frame_rate;
                    ScpInput::from_pairs(&synth_scp_pairs(&spec, pairs, seed)?)
                }
            };
            let opts = PipelineOptions {
                events: cfg.events,
                aggregation: cfg.aggregation.clone(),
                seed,
                phone_means: load_phone_means(phone_means)?,
                flush_dir: None,
            };
            let scp = run_scp(&inputs, &ckpt, perturbations, &opts)?;
            let report = vap_harness::RunReport {
                provenance: vap_harness::pipeline::Provenance {
                    seed,
                    checkpoint_id: vap_harness::pipeline::checkpoint_id(&ckpt),
                    checkpoint_epoch: ckpt.metadata.epoch,
                    model: model_cfg,
                    aggregation: cfg.aggregation.clone(),
                    events: cfg.events,
                    dialogs: inputs.iter().map(|i| i.dialog.name.clone()).collect(),
                    version: env!("CARGO_PKG_VERSION").to_string(),
                },
                results: Vec::new(),
                scp,
            };
            write_report(&report, out)?;
            for s in &report.scp {
                println!(
                    "{:<24} {:<6} hold {:.3} predictive {:.3} reactive {:.3}",
                    s.perturbation.to_string(),
                    s.variant.name(),
                    s.mean.hold,
                    s.mean.predictive,
                    s.mean.reactive
                );
            }
        }
        Command::Report { ref input, ref out } => {
            write_report(&read_report(input)?, out)?;
        }
    }
    Ok(())
}
