//! Subcommand definitions and implementations.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use infocrop::budget::{scaling_probe, DEFAULT_SIZES};
use infocrop::crop::isc_pipeline;
use infocrop::edge::{detect_information, InfoMatrix};
use infocrop::imaging::PixelImage;
use infocrop::spectral::score_matrix;
use infocrop::srdl::wire::{screen_id, serve, CommandAgent};
use infocrop::srdl::{run_srdl, Agent, PerformanceHistory, Screen, TemplateAugmenter};
use infocrop::synth::{fixtures, generate_screen, DensityProfile, GroundTruth, Noise, OracleAgent, ScreenSpec};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Information matrix (PBM) and its stats (JSON) for each screenshot.
    Edges {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        out_dir: PathBuf,
    },
    /// Crop manifest (JSON) and resized sub-images (PNG) for each screenshot.
    Crop {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory; with --dry-run and no directory, manifests go to
        /// stdout as JSON lines.
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
        /// Write manifests only, no sub-images.
        #[arg(long)]
        dry_run: bool,
    },
    /// Spectral entropy of each screenshot (PNG) or matrix (PBM), as JSON lines.
    Entropy {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Dual-loop self-annotation over a directory of screenshots.
    Srdl(SrdlArgs),
    /// Synthetic screens with ground truth (PNG, JSON, PBM).
    Synth(SynthArgs),
    /// Token budget and wall-clock scaling report (CSV, JSON).
    Bench(BenchArgs),
    /// Serve a synthetic oracle agent over stdin/stdout.
    AgentServe(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentKind {
    Perfect,
    Noisy,
    Drift,
    /// External program speaking the JSON-lines protocol.
    Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    Perfect,
    Noisy,
    Drift,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Per-edge jitter in pixels for the noisy oracle.
    #[arg(long, default_value_t = 2.0)]
    jitter: f64,
    /// Per-call drift in pixels for the drifting oracle.
    #[arg(long, default_value_t = 8.0)]
    drift: f64,
}

#[derive(Debug, Args)]
pub struct SrdlArgs {
    /// Directory of PNG screenshots. Oracle agents read the ground truth
    /// `{stem}.json` next to each one.
    corpus: PathBuf,
    #[arg(long, value_enum)]
    agent: AgentKind,
    /// Agent program for --agent cmd.
    #[arg(long, required_if_eq("agent", "cmd"))]
    agent_cmd: Option<String>,
    /// Argument for the agent program; repeatable.
    #[arg(long = "agent-arg", allow_hyphen_values = true)]
    agent_args: Vec<String>,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Performance history (JSON lines) for functional hard-case mining.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Annotation output; stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    /// 1920×1080 packed with widgets of every kind.
    DenseHd,
    /// 1920×1080 with five icon clusters.
    ClusteredHd,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(short, long)]
    out_dir: PathBuf,
    /// Named fixture; replaces the layout flags.
    #[arg(long, value_enum)]
    fixture: Option<Fixture>,
    #[arg(long, default_value_t = 1280)]
    width: u32,
    #[arg(long, default_value_t = 720)]
    height: u32,
    /// Elements per screen.
    #[arg(long, default_value_t = 12)]
    count: usize,
    /// sparse, clustered or dense.
    #[arg(long, default_value = "clustered")]
    profile: DensityProfile,
    /// Cluster count for the clustered profile.
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    /// Lower bound on both sides of every element.
    #[arg(long, default_value_t = 0)]
    min_side: u32,
    /// Number of screens; screen i uses seed + i.
    #[arg(long, default_value_t = 1)]
    screens: u32,
    /// Output file stem.
    #[arg(long, default_value = "screen")]
    name: String,
}

/// `W`x`H` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size(u32, u32);

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("{s:?}: {e}"));
        Ok(Size(parse(w)?, parse(h)?))
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(short, long)]
    out_dir: PathBuf,
    /// Comma-separated WxH list; defaults to 480p, 720p, 1080p and 1440p.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<Size>,
    /// Timed runs per size, after one warm-up.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory holding `{stem}.json` ground truth for every screen served.
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "perfect")]
    agent: OracleKind,
    #[command(flatten)]
    noise: NoiseArgs,
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::Edges { inputs, out_dir } => edges(&inputs, &out_dir, cfg),
        Command::Crop {
            inputs,
            out_dir,
            dry_run,
        } => crop(&inputs, out_dir.as_deref(), dry_run, cfg),
        Command::Entropy { inputs, out } => entropy(&inputs, out.as_deref(), cfg),
        Command::Srdl(args) => srdl(&args, cfg),
        Command::Synth(args) => synth(&args, cfg),
        Command::Bench(args) => bench(&args, cfg),
        Command::AgentServe(args) => agent_serve(&args, cfg),
    }
}

fn stem(path: &Path) -> String {
    screen_id(path)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Writes to `out`, or to stdout when absent.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io("writing stdout", e))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("output types are serializable")
}

/// Runs `f` on every input in parallel. Results keep input order. Failures
/// are reported per file and folded into one error carrying the exit code
/// of the first.
fn batch<T: Send>(
    inputs: &[PathBuf],
    f: impl Fn(&Path) -> Result<T, CliError> + Sync,
) -> (Vec<T>, Option<CliError>) {
    let results: Vec<Result<T, CliError>> = inputs.par_iter().map(|p| f(p)).collect();
    let mut ok = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (path, r) in inputs.iter().zip(results) {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => errors.push((path, e)),
        }
    }
    let err = match errors.len() {
        0 => None,
        1 if inputs.len() == 1 => errors.pop().map(|(_, e)| e),
        failed => {
            for (path, e) in &errors {
                let msg = e.to_string();
                let shown = path.display().to_string();
                if msg.contains(&shown) {
                    eprintln!("infocrop: {msg}");
                } else {
                    eprintln!("infocrop: {shown}: {msg}");
                }
            }
            let first = Box::new(errors.swap_remove(0).1);
            Some(CliError::Batch {
                failed,
                total: inputs.len(),
                first,
            })
        }
    };
    (ok, err)
}

fn finish(err: Option<CliError>) -> Result<(), CliError> {
    err.map_or(Ok(()), Err)
}

#[derive(Serialize)]
struct EdgeStats {
    image_id: String,
    ones: usize,
    density: f64,
    /// (rows, cols)
    dims: (usize, usize),
}

fn edges(inputs: &[PathBuf], out_dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    create_dir(out_dir)?;
    let (_, err) = batch(inputs, |path| {
        let img = PixelImage::load_png(path)?;
        let m = detect_information(&img, &cfg.edge)?;
        let id = stem(path);
        let stats = EdgeStats {
            image_id: id.clone(),
            ones: m.count_ones(),
            density: m.density(),
            dims: (m.rows(), m.cols()),
        };
        write_file(&out_dir.join(format!("{id}.pbm")), &m.to_pbm_bytes())?;
        write_file(&out_dir.join(format!("{id}.json")), (to_json(&stats) + "\n").as_bytes())
    });
    finish(err)
}

fn crop(inputs: &[PathBuf], out_dir: Option<&Path>, dry_run: bool, cfg: &RunConfig) -> Result<(), CliError> {
    if out_dir.is_none() && !dry_run {
        return Err(CliError::Config("crop needs --out-dir unless --dry-run is given".into()));
    }
    if let Some(dir) = out_dir {
        create_dir(dir)?;
    }
    let (lines, err) = batch(inputs, |path| {
        let img = PixelImage::load_png(path)?;
        let mut manifest = isc_pipeline(&img, &cfg.edge, &cfg.isc)?;
        manifest.source.path = Some(path.to_string_lossy().into_owned());
        let id = stem(path);
        match out_dir {
            Some(dir) => {
                write_file(&dir.join(format!("{id}.manifest.json")), (manifest.to_json() + "\n").as_bytes())?;
                if !dry_run {
                    manifest.write_sub_images(dir, &id)?;
                }
                Ok(None)
            }
            None => Ok(Some(to_json(&manifest.record()) + "\n")),
        }
    });
    emit_lines(out_dir.is_none(), lines.into_iter().flatten())?;
    finish(err)
}

fn emit_lines(enabled: bool, lines: impl Iterator<Item = String>) -> Result<(), CliError> {
    if enabled {
        emit(None, &lines.collect::<String>())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EntropyLine {
    image_id: String,
    entropy: f64,
    is_hard: bool,
    /// Padded spectrum (rows, cols).
    dims: (usize, usize),
}

fn load_matrix(path: &Path, cfg: &RunConfig) -> Result<InfoMatrix, CliError> {
    let is_pbm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pbm"));
    if is_pbm {
        let file = fs::File::open(path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
        Ok(InfoMatrix::read_pbm(BufReader::new(file))?)
    } else {
        Ok(detect_information(&PixelImage::load_png(path)?, &cfg.edge)?)
    }
}

fn entropy(inputs: &[PathBuf], out: Option<&Path>, cfg: &RunConfig) -> Result<(), CliError> {
    let (lines, err) = batch(inputs, |path| {
        let report = score_matrix(&load_matrix(path, cfg)?, cfg.srdl.h_min);
        Ok(to_json(&EntropyLine {
            image_id: stem(path),
            entropy: report.entropy,
            is_hard: report.is_hard,
            dims: report.matrix_dims,
        }) + "\n")
    });
    emit(out, &lines.concat())?;
    finish(err)
}

/// PNG files of `dir`, sorted by name.
fn corpus_pngs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(format!("listing {}", dir.display()), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(format!("listing {}", dir.display()), e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Decode(format!("no PNG screenshots in {}", dir.display())));
    }
    Ok(paths)
}

fn load_truth(path: &Path) -> Result<GroundTruth, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Decode(format!("{}: {e}", path.display())))
}

/// Ground truth for every PNG in `dir`, keyed by file stem.
fn load_truths(dir: &Path) -> Result<BTreeMap<String, GroundTruth>, CliError> {
    corpus_pngs(dir)?
        .iter()
        .map(|p| Ok((stem(p), load_truth(&p.with_extension("json"))?)))
        .collect()
}

fn oracle(kind: OracleKind, truths: BTreeMap<String, GroundTruth>, noise: &NoiseArgs, seed: u64) -> OracleAgent {
    let agent = OracleAgent::for_screens(truths);
    match kind {
        OracleKind::Perfect => agent,
        OracleKind::Noisy => agent.with_noise(Noise::jitter(noise.jitter, seed)),
        OracleKind::Drift => agent.with_noise(Noise::drift(noise.drift)),
    }
}

fn srdl(args: &SrdlArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let paths = corpus_pngs(&args.corpus)?;
    let (corpus, err) = batch(&paths, |path| {
        Ok(Screen {
            id: stem(path),
            path: Some(path.to_path_buf()),
            image: PixelImage::load_png(path)?,
        })
    });
    if let Some(e) = err {
        return Err(e);
    }
    let history = match &args.history {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
            PerformanceHistory::read_jsonl(BufReader::new(file))?
        }
        None => PerformanceHistory::default(),
    };
    let mut agent: Box<dyn Agent> = match args.agent {
        AgentKind::Cmd => {
            let program = args.agent_cmd.as_deref().expect("clap requires --agent-cmd");
            Box::new(CommandAgent::spawn(program, &args.agent_args)?)
        }
        AgentKind::Perfect => Box::new(oracle(OracleKind::Perfect, load_truths(&args.corpus)?, &args.noise, cfg.seed)),
        AgentKind::Noisy => Box::new(oracle(OracleKind::Noisy, load_truths(&args.corpus)?, &args.noise, cfg.seed)),
        AgentKind::Drift => Box::new(oracle(OracleKind::Drift, load_truths(&args.corpus)?, &args.noise, cfg.seed)),
    };
    let run = run_srdl(
        &corpus,
        &mut agent,
        &mut TemplateAugmenter::new(cfg.seed),
        &history,
        &cfg.edge,
        &cfg.srdl,
    )?;
    let counts = run.annotations.counts();
    log::info!(
        "{} accepted, {} rejected (visual {}, functional {}, baseline {}); {} visual hard screens, {} mined descriptions",
        run.annotations.samples.len(),
        run.annotations.rejected.len(),
        counts.visual,
        counts.functional,
        counts.baseline,
        run.visual_hard.len(),
        run.mined.len()
    );
    emit(args.out.as_deref(), &run.annotations.to_jsonl())
}

fn synth(args: &SynthArgs, cfg: &RunConfig) -> Result<(), CliError> {
    create_dir(&args.out_dir)?;
    let specs: Vec<(String, ScreenSpec)> = (0..args.screens)
        .map(|i| {
            let seed = cfg.seed.wrapping_add(u64::from(i));
            let spec = match args.fixture {
                Some(Fixture::DenseHd) => ScreenSpec {
                    seed,
                    ..fixtures::dense_hd()
                },
                Some(Fixture::ClusteredHd) => fixtures::clustered_hd(seed),
                None => ScreenSpec {
                    clusters: args.clusters,
                    min_element_side: args.min_side,
                    ..ScreenSpec::new(args.width, args.height, seed, args.count, args.profile)
                },
            };
            let name = if args.screens == 1 {
                args.name.clone()
            } else {
                format!("{}_{i:03}", args.name)
            };
            (name, spec)
        })
        .collect();
    let names: Vec<PathBuf> = specs.iter().map(|(n, _)| PathBuf::from(n)).collect();
    let (_, err) = batch(&names, |name| {
        let (_, spec) = specs.iter().find(|(n, _)| Path::new(n) == name).expect("name comes from specs");
        let (img, gt) = generate_screen(spec)?;
        let base = args.out_dir.join(name);
        img.save_png(&base.with_extension("png"))?;
        write_file(&base.with_extension("json"), (to_json(&gt) + "\n").as_bytes())?;
        write_file(&base.with_extension("pbm"), &gt.info_mask.to_pbm_bytes())
    });
    finish(err)
}

fn bench(args: &BenchArgs, cfg: &RunConfig) -> Result<(), CliError> {
    create_dir(&args.out_dir)?;
    let sizes: Vec<(u32, u32)> = if args.sizes.is_empty() {
        DEFAULT_SIZES.to_vec()
    } else {
        args.sizes.iter().map(|s| (s.0, s.1)).collect()
    };
    // timed regions stay on this thread
    let report = scaling_probe(&sizes, &cfg.edge, &cfg.isc, &cfg.model, args.repeats, cfg.seed)?;
    write_file(&args.out_dir.join("scaling.csv"), report.to_csv().as_bytes())?;
    write_file(&args.out_dir.join("scaling.json"), (report.summary_json() + "\n").as_bytes())?;
    log::info!("R² {:.4}, slope {:.3e} ms/pixel", report.fit.r_squared, report.fit.slope);
    Ok(())
}

fn agent_serve(args: &ServeArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let mut agent = oracle(args.agent, load_truths(&args.corpus)?, &args.noise, cfg.seed);
    serve(&mut agent, io::stdin().lock(), io::stdout().lock()).map_err(|e| CliError::io("serving agent", e))
}
