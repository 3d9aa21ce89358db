mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use daemor::model::{load_matrix_market, Side};
use daemor::reduce::ReducedModel;
use daemor::verify::{VerifyOptions, DATASET_ENV};

use commands::BodeTarget;
use config::{FrequencyGrid, MethodName, ModelSource, RunConfig, Tap};

#[derive(Parser)]
#[command(
    name = "daemor",
    version,
    about = "Krylov model reduction for semi-explicit index-1 DAEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a model and write it as Matrix Market files plus a JSON sidecar.
    Generate {
        #[command(subcommand)]
        source: GenerateSource,
    },
    /// Reduce a model and write the ROM, report and frequency responses.
    Reduce(ReduceArgs),
    /// Run the built-in verification suite.
    Verify(VerifyArgs),
    /// Write the frequency response of a model or a saved ROM.
    Bode(BodeArgs),
    /// Compare saved ROMs against a full model.
    Compare(CompareArgs),
}

#[derive(Args)]
struct OutArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "model")]
    stem: String,
}

#[derive(Subcommand)]
enum GenerateSource {
    /// RLC ladder with q sections (N = 5q, n_dyn = 2q).
    Tline {
        #[arg(long)]
        q: usize,
        #[arg(long, value_enum, default_value = "end")]
        tap: Tap,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Random stable DAE with a dissipative underlying ODE.
    Random {
        #[arg(long)]
        n_dyn: usize,
        #[arg(long)]
        n_alg: usize,
        #[arg(long, default_value_t = 1)]
        inputs: usize,
        #[arg(long, default_value_t = 1)]
        outputs: usize,
        #[arg(long)]
        strictly_proper: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-partition an existing descriptor system and write it canonically.
    Ingest {
        #[arg(long)]
        sidecar: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Sidecar JSON naming the E, A, B, C (and D) Matrix Market files.
    #[arg(long, conflicts_with_all = ["tline", "random_dyn"])]
    model: Option<PathBuf>,
    /// Transmission line with this many sections.
    #[arg(long, conflicts_with = "random_dyn")]
    tline: Option<usize>,
    #[arg(long, value_enum, requires = "tline")]
    tap: Option<Tap>,
    /// Random DAE: dynamic states.
    #[arg(long, requires = "random_alg")]
    random_dyn: Option<usize>,
    /// Random DAE: algebraic states.
    #[arg(long, requires = "random_dyn")]
    random_alg: Option<usize>,
    #[arg(long, requires = "random_dyn")]
    inputs: Option<usize>,
    #[arg(long, requires = "random_dyn")]
    outputs: Option<usize>,
    #[arg(long, requires = "random_dyn")]
    strictly_proper: bool,
}

impl ModelArgs {
    fn source(&self) -> Option<ModelSource> {
        if let Some(sidecar) = &self.model {
            return Some(ModelSource::Files {
                sidecar: sidecar.clone(),
            });
        }
        if let Some(q) = self.tline {
            return Some(ModelSource::Tline {
                q,
                tap: self.tap.unwrap_or(Tap::End),
            });
        }
        let (n_dyn, n_alg) = (self.random_dyn?, self.random_alg?);
        Some(ModelSource::Random {
            n_dyn,
            n_alg,
            inputs: self.inputs.unwrap_or(1),
            outputs: self.outputs.unwrap_or(1),
            strictly_proper: self.strictly_proper,
        })
    }
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, requires = "omega_max")]
    omega_min: Option<f64>,
    #[arg(long, requires = "omega_min")]
    omega_max: Option<f64>,
    #[arg(long, requires = "omega_min")]
    points: Option<usize>,
}

impl GridArgs {
    fn grid(&self) -> Option<FrequencyGrid> {
        Some(FrequencyGrid {
            omega_min: self.omega_min?,
            omega_max: self.omega_max?,
            points: self.points.unwrap_or(200),
        })
    }
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// JSON run configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodName>,
    /// Reduced order; picks mirrored-pole shifts when --shifts is absent.
    #[arg(long)]
    order: Option<usize>,
    /// Comma-separated shifts such as 1e8,2e8+3e8i.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    shifts: Option<Vec<String>>,
    #[arg(long, value_enum)]
    side: Option<SideArg>,
    /// Allow a one-sided orthogonal projection even when the structure guard fails.
    #[arg(long)]
    unsafe_orthogonal: bool,
    /// Make the system strictly dissipative before reducing.
    #[arg(long)]
    sd_transform: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SideArg {
    Input,
    Output,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Input => Side::Input,
            SideArg::Output => Side::Output,
        }
    }
}

impl ReduceArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(src) = self.model.source() {
            cfg.model = Some(src);
        }
        cfg.method = self.method.or(cfg.method);
        cfg.order = self.order.or(cfg.order);
        if self.shifts.is_some() {
            cfg.shifts = self.shifts;
        }
        cfg.side = self.side.map(Side::from).or(cfg.side);
        cfg.unsafe_orthogonal |= self.unsafe_orthogonal;
        cfg.sd_transform |= self.sd_transform;
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.grid = self.grid.grid().or(cfg.grid);
        cfg.out_dir = self.out.or(cfg.out_dir);
        Ok(cfg)
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Flip the PORK Lyapunov sign; the suite is expected to fail.
    #[arg(long)]
    mutate_lyapunov_sign: bool,
    /// Include the full-size transmission-line run.
    #[arg(long)]
    slow: bool,
    #[arg(long, env = DATASET_ENV)]
    dataset_dir: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BodeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// A rom_model.json written by `reduce`.
    #[arg(long, conflicts_with_all = ["model", "tline", "random_dyn"])]
    rom: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    grid: GridArgs,
    /// Output stem; writes STEM.csv, STEM_bode.csv and STEM.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// NAME=PATH of a rom_model.json; repeatable.
    #[arg(long = "rom", required = true)]
    roms: Vec<String>,
    #[command(flatten)]
    grid: GridArgs,
    /// Skip the H2 error columns.
    #[arg(long)]
    no_h2: bool,
    #[arg(long)]
    out: PathBuf,
}

fn load_rom(path: &std::path::Path) -> Result<ReducedModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ReducedModel::from_json(&text)?)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { source } => {
            let (src, seed, out) = match source {
                GenerateSource::Tline { q, tap, out } => (ModelSource::Tline { q, tap }, 0, out),
                GenerateSource::Random {
                    n_dyn,
                    n_alg,
                    inputs,
                    outputs,
                    strictly_proper,
                    seed,
                    out,
                } => (
                    ModelSource::Random {
                        n_dyn,
                        n_alg,
                        inputs,
                        outputs,
                        strictly_proper,
                    },
                    seed,
                    out,
                ),
                GenerateSource::Ingest { sidecar, out } => {
                    let (_, record) = load_matrix_market(&sidecar)?;
                    if !record.identity {
                        println!("reordered states: n_dyn={}", record.n_dyn);
                    }
                    (ModelSource::Files { sidecar }, 0, out)
                }
            };
            commands::cmd_generate(&src, seed, &out.out, &out.stem)?;
        }
        Command::Reduce(args) => {
            commands::cmd_reduce(args.into_config()?)?;
        }
        Command::Verify(args) => {
            let opts = VerifyOptions {
                mutate_lyapunov_sign: args.mutate_lyapunov_sign,
                dataset_dir: args.dataset_dir,
                slow: args.slow,
            };
            return commands::cmd_verify(&opts, args.json.as_deref());
        }
        Command::Bode(args) => {
            let target = match (&args.rom, args.model.source()) {
                (Some(path), _) => BodeTarget::Rom(load_rom(path)?),
                (None, Some(src)) => BodeTarget::Model(src.load(args.seed)?),
                (None, None) => bail!("give a model (--model, --tline, --random-dyn) or --rom"),
            };
            commands::cmd_bode(&target, args.grid.grid(), &args.out)?;
        }
        Command::Compare(args) => {
            let src = args
                .model
                .source()
                .context("give a model (--model, --tline, --random-dyn)")?;
            let model = src.load(args.seed)?;
            let roms = args
                .roms
                .iter()
                .map(|spec| {
                    let (name, path) = spec.split_once('=').context("--rom expects NAME=PATH")?;
                    Ok((name.to_string(), load_rom(path.as_ref())?))
                })
                .collect::<Result<Vec<_>>>()?;
            commands::cmd_compare(&model, &roms, args.grid.grid(), !args.no_h2, &args.out)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
