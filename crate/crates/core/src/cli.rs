//! Command-line pipeline: gen, simulate, build-graph, train, eval,
//! predict, ablate, report. Every command prints its resolved
//! configuration first and writes byte-deterministic artifacts, so a
//! rerun with identical flags reproduces identical files.

use crate::layout::{self, GenSpec, Layout, StripLayout};
use crate::model::{ModelConfig, ModelParams, Variant};
use crate::numfmt::g9;
use crate::oracle::simulate_dynamic;
use crate::pdngraph::{build_graph, horizontal_case, nearest_strip_offset, tile_grid};
use crate::train::{self, Sample, TrainConfig};
use crate::{autodiff, io, metrics};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

// keep in sync with autodiff::CHECKPOINT_VERSION
const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (checkpoint format PDNF1)");

#[derive(Parser)]
#[command(name = "pdnflow", version = VERSION, about = "IR drop workbench for small power-delivery networks")]
struct Cli {
    /// Worker threads for frame solves and batch evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// key=value file supplying defaults; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic layout samples.
    Gen(GenArgs),
    /// Solve ground-truth IR drop for a layout or a sample directory.
    Simulate(SimulateArgs),
    /// Build the directed PDN graph for a layout or a sample directory.
    BuildGraph(BuildGraphArgs),
    /// Train the predictor on a sample directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a sample directory.
    Eval(EvalArgs),
    /// Predict an IR drop map with a trained checkpoint.
    Predict(PredictArgs),
    /// Train and compare architecture variants across seeds.
    Ablate(AblateArgs),
    /// Compute metrics from stored pred.csv/label.csv pairs.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output dataset directory (one subdirectory per sample).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of samples.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    height: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    tsim: Option<usize>,
    #[arg(long)]
    power_scale: Option<f64>,
    /// Candidate strip pitches, one picked per sample.
    #[arg(long)]
    pitches: Option<String>,
    /// Fraction of samples with jittered (irregular) strip positions.
    #[arg(long)]
    irregular_frac: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Single layout file; writes irdrop_peak.{csv,pgm} to --out.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Dataset directory; writes label.csv into each sample.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    dy: Option<f64>,
    /// Also write per-frame drop maps.
    #[arg(long)]
    frames: bool,
}

#[derive(Args)]
struct BuildGraphArgs {
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    dy: Option<f64>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    d_hidden: Option<usize>,
    #[arg(long)]
    n_vd: Option<usize>,
    #[arg(long)]
    n_ni: Option<usize>,
    #[arg(long)]
    hf: Option<usize>,
    #[arg(long)]
    wf: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    /// Encoder channel widths, comma separated.
    #[arg(long)]
    channels: Option<String>,
    #[arg(long)]
    fusion_hidden: Option<usize>,
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args, Clone)]
struct OptimArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    w_l1: Option<f64>,
    #[arg(long)]
    w_dice: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Run directory for config.txt, history.csv, best.ckpt.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    optim: OptimArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Output metrics.csv path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Layout file to tile, graph, and predict.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Alternatively a sample directory with graph.csv.
    #[arg(long)]
    sample: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    dy: Option<f64>,
}

#[derive(Args)]
struct AblateArgs {
    /// Training dataset directory.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Held-out dataset directory.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Output directory for ablation.csv and ablation_raw.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated variant names.
    #[arg(long)]
    variants: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[command(flatten)]
    optim: OptimArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of samples holding pred.csv and label.csv.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Output metrics.csv path.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Usage problems exit 1, data problems exit 2.
enum CliError {
    Usage(String),
    Data(crate::Error),
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse argv and run; returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            }
        }
    };
    if let Some(jobs) = cli.jobs {
        // fails harmlessly if a pool already exists (tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    let file_config = match load_file_config(cli.config.as_deref()) {
        Ok(map) => map,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let result = match cli.command {
        Command::Gen(args) => run_gen(args, &file_config),
        Command::Simulate(args) => run_simulate(args, &file_config),
        Command::BuildGraph(args) => run_build_graph(args, &file_config),
        Command::Train(args) => run_train(args, &file_config),
        Command::Eval(args) => run_eval(args, &file_config),
        Command::Predict(args) => run_predict(args, &file_config),
        Command::Ablate(args) => run_ablate(args, &file_config),
        Command::Report(args) => run_report(args, &file_config),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

struct FileConfig {
    map: HashMap<String, String>,
}

fn load_file_config(path: Option<&Path>) -> crate::Result<FileConfig> {
    let map = match path {
        Some(p) => io::read_config_txt(p)?.into_iter().collect(),
        None => HashMap::new(),
    };
    Ok(FileConfig { map })
}

impl FileConfig {
    /// Flag value if set, else the config-file value, else the default.
    fn resolve<T: FromStr + Clone>(&self, key: &str, flag: &Option<T>, default: T) -> CliResult<T> {
        self.resolve_opt(key, flag).map(|v| v.unwrap_or(default))
    }

    fn resolve_opt<T: FromStr + Clone>(&self, key: &str, flag: &Option<T>) -> CliResult<Option<T>> {
        if let Some(v) = flag {
            return Ok(Some(v.clone()));
        }
        match self.map.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse '{raw}'"))),
            None => Ok(None),
        }
    }

    fn require<T: FromStr + Clone>(&self, key: &str, flag: &Option<T>) -> CliResult<T> {
        self.resolve_opt(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required option --{key}")))
    }
}

fn print_config(command: &str, entries: &[(String, String)]) {
    let mut sorted: Vec<&(String, String)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    println!("config: command={command}");
    for (k, v) in sorted {
        println!("config: {k}={v}");
    }
}

fn kv(key: &str, value: impl Display) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> CliResult<Vec<T>> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| CliError::Usage(format!("bad {what} entry '{s}'")))
        })
        .collect()
}

fn read_layout_file(path: &Path) -> CliResult<Layout> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(crate::Error::Invalid(format!("{}: {e}", path.display()))))?;
    Ok(layout::parse_layout(&text)?)
}

fn sample_dirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(crate::Error::Invalid(format!("{}: {e}", dir.display()))))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Data(crate::Error::invalid(format!(
            "no sample subdirectories under {}",
            dir.display()
        ))));
    }
    Ok(dirs)
}

// ---- gen --------------------------------------------------------------

fn run_gen(args: GenArgs, fc: &FileConfig) -> CliResult<()> {
    let out: PathBuf = fc.require("out", &args.out)?;
    let seed = fc.resolve("seed", &args.seed, 0)?;
    let count = fc.resolve("count", &args.count, 1)?;
    let width = fc.resolve("width", &args.width, 16.0)?;
    let height = fc.resolve("height", &args.height, 16.0)?;
    let cells = fc.resolve("cells", &args.cells, 64)?;
    let tsim = fc.resolve("tsim", &args.tsim, 8)?;
    let power_scale = fc.resolve("power_scale", &args.power_scale, 0.02)?;
    let pitches_raw = fc.resolve("pitches", &args.pitches, "4".to_string())?;
    let irregular_frac = fc.resolve("irregular_frac", &args.irregular_frac, 0.0)?;
    let pitches: Vec<f64> = parse_list(&pitches_raw, "pitch")?;
    if pitches.is_empty() {
        return Err(CliError::Usage("need at least one pitch".into()));
    }

    print_config(
        "gen",
        &[
            kv("out", out.display()),
            kv("seed", seed),
            kv("count", count),
            kv("width", g9(width)),
            kv("height", g9(height)),
            kv("cells", cells),
            kv("tsim", tsim),
            kv("power_scale", g9(power_scale)),
            kv("pitches", &pitches_raw),
            kv("irregular_frac", g9(irregular_frac)),
        ],
    );

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..count {
        let pitch = pitches[master.random_range(0..pitches.len())];
        let irregular = master.random_range(0.0..1.0) < irregular_frac;
        let sample_seed: u64 = master.random();
        let strips = if irregular {
            let base = layout::strip_positions(&StripLayout::Pitch(pitch), width)?;
            let jitter: Vec<f64> = base
                .iter()
                .map(|&x| {
                    let j = master.random_range(-pitch / 4.0..pitch / 4.0);
                    (x + j).clamp(0.0, width)
                })
                .collect();
            StripLayout::Explicit(jitter)
        } else {
            StripLayout::Pitch(pitch)
        };
        let spec = GenSpec {
            width_um: width,
            height_um: height,
            n_cells: cells,
            strips,
            power_scale_w: power_scale,
            t_sim: tsim,
            rng_seed: sample_seed,
        };
        let layout = layout::generate_synthetic(&spec)?;
        let dir = out.join(format!("s{k:03}"));
        std::fs::create_dir_all(&dir).map_err(crate::Error::from)?;
        std::fs::write(dir.join("layout.txt"), layout::serialize(&layout))
            .map_err(crate::Error::from)?;
        println!(
            "gen: s{k:03} pitch={} irregular={} cells={}",
            g9(pitch),
            irregular,
            layout.cells.len()
        );
    }
    Ok(())
}

// ---- simulate ----------------------------------------------------------

fn run_simulate(args: SimulateArgs, fc: &FileConfig) -> CliResult<()> {
    let dx = fc.resolve("dx", &args.dx, 1.0)?;
    let dy = fc.resolve("dy", &args.dy, 1.0)?;
    let layout_path: Option<PathBuf> = fc.resolve_opt("layout", &args.layout)?;
    let samples: Option<PathBuf> = fc.resolve_opt("samples", &args.samples)?;
    match (layout_path, samples) {
        (Some(path), None) => {
            let out: PathBuf = fc.resolve(
                "out",
                &args.out,
                path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            )?;
            print_config(
                "simulate",
                &[
                    kv("layout", path.display()),
                    kv("out", out.display()),
                    kv("dx", g9(dx)),
                    kv("dy", g9(dy)),
                    kv("frames", args.frames),
                ],
            );
            let layout = read_layout_file(&path)?;
            let grid = tile_grid(&layout, dx, dy)?;
            let (frames, peak) = simulate_dynamic(&layout, &grid)?;
            std::fs::create_dir_all(&out).map_err(crate::Error::from)?;
            io::write_drop_map(&out, "irdrop_peak", &peak)?;
            if args.frames {
                for map in &frames {
                    io::write_map_csv(
                        &out.join(format!("{}.csv", io::frame_stem(map.frame))),
                        &map.drop_v,
                        map.n_h,
                        map.n_w,
                    )?;
                }
            }
            let max = peak.drop_v.iter().cloned().fold(0.0f64, f64::max);
            println!(
                "simulate: {} frames, {}x{} tiles, peak drop {} V",
                frames.len(),
                peak.n_h,
                peak.n_w,
                g9(max)
            );
            Ok(())
        }
        (None, Some(dir)) => {
            print_config(
                "simulate",
                &[
                    kv("samples", dir.display()),
                    kv("dx", g9(dx)),
                    kv("dy", g9(dy)),
                    kv("frames", args.frames),
                ],
            );
            for sub in sample_dirs(&dir)? {
                let layout = read_layout_file(&sub.join("layout.txt"))?;
                let grid = tile_grid(&layout, dx, dy)?;
                let (frames, peak) = simulate_dynamic(&layout, &grid)?;
                io::write_map_csv(&sub.join("label.csv"), &peak.drop_v, peak.n_h, peak.n_w)?;
                if args.frames {
                    for map in &frames {
                        io::write_map_csv(
                            &sub.join(format!("{}.csv", io::frame_stem(map.frame))),
                            &map.drop_v,
                            map.n_h,
                            map.n_w,
                        )?;
                    }
                }
                println!("simulate: {} done", sub.display());
            }
            Ok(())
        }
        _ => Err(CliError::Usage(
            "simulate needs exactly one of --layout or --samples".into(),
        )),
    }
}

// ---- build-graph -------------------------------------------------------

fn run_build_graph(args: BuildGraphArgs, fc: &FileConfig) -> CliResult<()> {
    let dx = fc.resolve("dx", &args.dx, 1.0)?;
    let dy = fc.resolve("dy", &args.dy, 1.0)?;
    let layout_path: Option<PathBuf> = fc.resolve_opt("layout", &args.layout)?;
    let samples: Option<PathBuf> = fc.resolve_opt("samples", &args.samples)?;

    let emit = |layout: &Layout, dir: &Path| -> CliResult<()> {
        let grid = tile_grid(layout, dx, dy)?;
        let graph = build_graph(&grid, layout);
        io::write_graph_csv(&dir.join("graph.csv"), &graph)?;
        let cases: Vec<_> = (0..grid.n_h)
            .flat_map(|_| 0..grid.n_w)
            .map(|j| horizontal_case(nearest_strip_offset(j, &grid, &layout.pdn.vstrip_x_um)))
            .collect();
        io::write_direction_pgm(&dir.join("graph.pgm"), &cases, grid.n_h, grid.n_w)?;
        println!(
            "build-graph: {} nodes, {} edges -> {}",
            graph.n_nodes(),
            graph.edges.len(),
            dir.display()
        );
        Ok(())
    };

    match (layout_path, samples) {
        (Some(path), None) => {
            let out: PathBuf = fc.resolve(
                "out",
                &args.out,
                path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            )?;
            print_config(
                "build-graph",
                &[
                    kv("layout", path.display()),
                    kv("out", out.display()),
                    kv("dx", g9(dx)),
                    kv("dy", g9(dy)),
                ],
            );
            std::fs::create_dir_all(&out).map_err(crate::Error::from)?;
            emit(&read_layout_file(&path)?, &out)
        }
        (None, Some(dir)) => {
            print_config(
                "build-graph",
                &[kv("samples", dir.display()), kv("dx", g9(dx)), kv("dy", g9(dy))],
            );
            for sub in sample_dirs(&dir)? {
                emit(&read_layout_file(&sub.join("layout.txt"))?, &sub)?;
            }
            Ok(())
        }
        _ => Err(CliError::Usage(
            "build-graph needs exactly one of --layout or --samples".into(),
        )),
    }
}

// ---- train ---------------------------------------------------------------

fn resolve_model(
    margs: &ModelArgs,
    fc: &FileConfig,
    c_in: usize,
) -> CliResult<(ModelConfig, Vec<(String, String)>)> {
    let desk = ModelConfig::desk(c_in);
    let channels_raw = fc.resolve(
        "channels",
        &margs.channels,
        desk.cnn_channels
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(","),
    )?;
    let variant_raw = fc.resolve("variant", &margs.variant, "pdnnet".to_string())?;
    let variant = Variant::parse(&variant_raw).map_err(|e| CliError::Usage(e.to_string()))?;
    let config = ModelConfig {
        c_in,
        d_hidden: fc.resolve("d_hidden", &margs.d_hidden, desk.d_hidden)?,
        n_vd_blocks: fc.resolve("n_vd", &margs.n_vd, desk.n_vd_blocks)?,
        n_ni_blocks: fc.resolve("n_ni", &margs.n_ni, desk.n_ni_blocks)?,
        h_f: fc.resolve("hf", &margs.hf, desk.h_f)?,
        w_f: fc.resolve("wf", &margs.wf, desk.w_f)?,
        cnn_levels: fc.resolve("levels", &margs.levels, desk.cnn_levels)?,
        cnn_channels: parse_list(&channels_raw, "channel width")?,
        fusion_hidden: fc.resolve("fusion_hidden", &margs.fusion_hidden, desk.fusion_hidden)?,
        variant,
    };
    let entries = vec![
        kv("d_hidden", config.d_hidden),
        kv("n_vd", config.n_vd_blocks),
        kv("n_ni", config.n_ni_blocks),
        kv("hf", config.h_f),
        kv("wf", config.w_f),
        kv("levels", config.cnn_levels),
        kv("channels", &channels_raw),
        kv("fusion_hidden", config.fusion_hidden),
        kv("variant", variant.name()),
        kv("c_in", c_in),
    ];
    Ok((config, entries))
}

fn resolve_train(
    optim: &OptimArgs,
    fc: &FileConfig,
    seed: u64,
    model: ModelConfig,
) -> CliResult<(TrainConfig, Vec<(String, String)>)> {
    let mut config = TrainConfig::new(model);
    config.rng_seed = seed;
    config.epochs = fc.resolve("epochs", &optim.epochs, config.epochs)?;
    config.batch_size = fc.resolve("batch", &optim.batch, config.batch_size)?;
    config.lr0 = fc.resolve("lr0", &optim.lr0, config.lr0)?;
    config.weight_decay = fc.resolve("weight_decay", &optim.weight_decay, config.weight_decay)?;
    config.w_l1 = fc.resolve("w_l1", &optim.w_l1, config.w_l1)?;
    config.w_dice = fc.resolve("w_dice", &optim.w_dice, config.w_dice)?;
    let entries = vec![
        kv("epochs", config.epochs),
        kv("batch", config.batch_size),
        kv("lr0", g9(config.lr0)),
        kv("weight_decay", g9(config.weight_decay)),
        kv("w_l1", g9(config.w_l1)),
        kv("w_dice", g9(config.w_dice)),
        kv("beta1", g9(config.beta1)),
        kv("beta2", g9(config.beta2)),
        kv("seed", seed),
    ];
    Ok((config, entries))
}

fn run_train(args: TrainArgs, fc: &FileConfig) -> CliResult<()> {
    let samples_dir: PathBuf = fc.require("samples", &args.samples)?;
    let out: PathBuf = fc.require("out", &args.out)?;
    let seed = fc.resolve("seed", &args.seed, 0)?;
    let samples = train::load_samples(&samples_dir)?;
    let c_in = samples[0].graph.n_channels;
    let (model, model_entries) = resolve_model(&args.model, fc, c_in)?;
    let (config, optim_entries) = resolve_train(&args.optim, fc, seed, model)?;

    let mut entries = vec![
        kv("samples", samples_dir.display()),
        kv("out", out.display()),
        kv("n_samples", samples.len()),
    ];
    entries.extend(model_entries);
    entries.extend(optim_entries);
    print_config("train", &entries);

    let output = train::train(&samples, &config)?;
    std::fs::create_dir_all(&out).map_err(crate::Error::from)?;
    io::write_config_txt(&out.join("config.txt"), &entries)?;
    io::write_history_csv(&out.join("history.csv"), &output.history)?;
    autodiff::save_checkpoint(
        &out.join("best.ckpt"),
        &output.params.to_checkpoint(&config.model),
    )?;
    let last = output.history.last().unwrap();
    println!(
        "train: {} epochs, best epoch {} (val NMAE {}), final train loss {}",
        output.history.len(),
        output.best_epoch,
        g9(output.history[output.best_epoch].val_nmae),
        g9(last.train_loss)
    );
    Ok(())
}

// ---- eval ----------------------------------------------------------------

fn load_model(path: &Path) -> CliResult<(ModelConfig, ModelParams)> {
    let entries = autodiff::load_checkpoint(path)?;
    Ok(ModelParams::from_checkpoint(&entries)?)
}

fn run_eval(args: EvalArgs, fc: &FileConfig) -> CliResult<()> {
    let samples_dir: PathBuf = fc.require("samples", &args.samples)?;
    let ckpt: PathBuf = fc.require("ckpt", &args.ckpt)?;
    let out: PathBuf = fc.resolve("out", &args.out, PathBuf::from("metrics.csv"))?;
    print_config(
        "eval",
        &[
            kv("samples", samples_dir.display()),
            kv("ckpt", ckpt.display()),
            kv("out", out.display()),
        ],
    );
    let samples = train::load_samples(&samples_dir)?;
    let (model, params) = load_model(&ckpt)?;
    let report = train::evaluate(&params, &model, &samples)?;
    io::write_metrics_csv(&out, &report.per_sample)?;
    println!(
        "eval: {} samples, mean NMAE {}, baseline NMAE {}, mean Spearman {}",
        report.per_sample.len(),
        g9(report.mean[0]),
        g9(report.baseline_nmae),
        g9(report.mean[5])
    );
    Ok(())
}

// ---- predict ---------------------------------------------------------------

fn run_predict(args: PredictArgs, fc: &FileConfig) -> CliResult<()> {
    let ckpt: PathBuf = fc.require("ckpt", &args.ckpt)?;
    let out: PathBuf = fc.require("out", &args.out)?;
    let dx = fc.resolve("dx", &args.dx, 1.0)?;
    let dy = fc.resolve("dy", &args.dy, 1.0)?;
    let layout_path: Option<PathBuf> = fc.resolve_opt("layout", &args.layout)?;
    let sample_dir: Option<PathBuf> = fc.resolve_opt("sample", &args.sample)?;

    let (sample, source) = match (layout_path, sample_dir) {
        (Some(path), None) => {
            let layout = read_layout_file(&path)?;
            let grid = tile_grid(&layout, dx, dy)?;
            let graph = build_graph(&grid, &layout);
            let n = graph.n_nodes();
            (
                Sample::from_parts("predict".into(), graph, grid, &vec![0.0; n])?,
                path.display().to_string(),
            )
        }
        (None, Some(dir)) => {
            let graph = io::read_graph_csv(&dir.join("graph.csv"))?;
            let grid = crate::pdngraph::TileGrid::bare(graph.n_h, graph.n_w);
            let n = graph.n_nodes();
            (
                Sample::from_parts("predict".into(), graph, grid, &vec![0.0; n])?,
                dir.display().to_string(),
            )
        }
        _ => {
            return Err(CliError::Usage(
                "predict needs exactly one of --layout or --sample".into(),
            ))
        }
    };
    print_config(
        "predict",
        &[
            kv("input", &source),
            kv("ckpt", ckpt.display()),
            kv("out", out.display()),
            kv("dx", g9(dx)),
            kv("dy", g9(dy)),
        ],
    );
    let (model, params) = load_model(&ckpt)?;
    let pred = train::predict(&params, &model, &sample)?;
    std::fs::create_dir_all(&out).map_err(crate::Error::from)?;
    io::write_map_csv(&out.join("pred.csv"), &pred, sample.graph.n_h, sample.graph.n_w)?;
    io::write_pgm16(&out.join("pred.pgm"), &pred, sample.graph.n_h, sample.graph.n_w)?;
    println!(
        "predict: {}x{} map written to {}",
        sample.graph.n_h,
        sample.graph.n_w,
        out.display()
    );
    Ok(())
}

// ---- ablate ---------------------------------------------------------------

fn run_ablate(args: AblateArgs, fc: &FileConfig) -> CliResult<()> {
    let samples_dir: PathBuf = fc.require("samples", &args.samples)?;
    let test_dir: PathBuf = fc.require("test", &args.test)?;
    let out: PathBuf = fc.require("out", &args.out)?;
    let variants_raw = fc.resolve(
        "variants",
        &args.variants,
        "pdnnet,gnn_single,cnn_single".to_string(),
    )?;
    let seeds_raw = fc.resolve("seeds", &args.seeds, "1,2,3".to_string())?;
    let variants: Vec<Variant> = variants_raw
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| Variant::parse(s.trim()).map_err(|e| CliError::Usage(e.to_string())))
        .collect::<CliResult<_>>()?;
    let seeds: Vec<u64> = parse_list(&seeds_raw, "seed")?;

    let train_samples = train::load_samples(&samples_dir)?;
    let test_samples = train::load_samples(&test_dir)?;
    let c_in = train_samples[0].graph.n_channels;
    let (model, model_entries) = resolve_model(&args.model, fc, c_in)?;
    let (config, optim_entries) = resolve_train(&args.optim, fc, 0, model)?;

    let mut entries = vec![
        kv("samples", samples_dir.display()),
        kv("test", test_dir.display()),
        kv("out", out.display()),
        kv("variants", &variants_raw),
        kv("seeds", &seeds_raw),
    ];
    entries.extend(model_entries);
    entries.extend(optim_entries);
    print_config("ablate", &entries);

    let table = train::ablation(&train_samples, &test_samples, &config, &variants, &seeds)?;
    std::fs::create_dir_all(&out).map_err(crate::Error::from)?;
    io::write_ablation_csv(&out.join("ablation.csv"), &table)?;
    io::write_ablation_raw_csv(&out.join("ablation_raw.csv"), &table)?;
    for row in &table.rows {
        println!("ablate: {} mean NMAE {}", row.variant, g9(row.cells[0].mean));
    }
    Ok(())
}

// ---- report ----------------------------------------------------------------

fn run_report(args: ReportArgs, fc: &FileConfig) -> CliResult<()> {
    let samples_dir: PathBuf = fc.require("samples", &args.samples)?;
    let out: PathBuf = fc.resolve("out", &args.out, PathBuf::from("metrics.csv"))?;
    print_config(
        "report",
        &[kv("samples", samples_dir.display()), kv("out", out.display())],
    );
    let mut rows = Vec::new();
    for sub in sample_dirs(&samples_dir)? {
        let id = sub.file_name().unwrap().to_string_lossy().into_owned();
        let (pr, pc, pred) = io::read_map_csv(&sub.join("pred.csv"))?;
        let (lr, lc, label) = io::read_map_csv(&sub.join("label.csv"))?;
        if (pr, pc) != (lr, lc) {
            return Err(CliError::Data(crate::Error::shape(format!(
                "{id}: pred {pr}x{pc} vs label {lr}x{lc}"
            ))));
        }
        // metric contracts assume label-range normalization
        let lo = label.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = label.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (pred_norm, label_norm): (Vec<f64>, Vec<f64>) = if hi > lo {
            (
                pred.iter().map(|&x| (x - lo) / (hi - lo)).collect(),
                label.iter().map(|&x| (x - lo) / (hi - lo)).collect(),
            )
        } else {
            (pred.clone(), vec![0.0; label.len()])
        };
        rows.push((id, metrics::compute_all(&pred_norm, &label_norm, pr, pc)));
    }
    io::write_metrics_csv(&out, &rows)?;
    println!("report: {} samples -> {}", rows.len(), out.display());
    Ok(())
}
