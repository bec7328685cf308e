use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nvbath::bath::PlacementMode;
use nvbath::cce::{BathStateMode, HahnSettings, Observable, SequenceKind};
use nvbath::commands::{self, BathSource, CoherenceArgs, Common, GeometryArgs, GridArgs};
use nvbath::spin_model::Isotope;

#[derive(Parser)]
#[command(name = "nvbath", version, about = "NV-center coherence in P1 spin baths")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = IsotopeArg::N15)]
    isotope: IsotopeArg,
    /// Magnetic field along the NV axis, G.
    #[arg(long, global = true, default_value_t = 50.0)]
    field: f64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Parameter file replacing the bundled constants.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Log progress and warnings (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum IsotopeArg {
    N14,
    N15,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Lattice,
    Continuum,
}

impl From<PlacementArg> for PlacementMode {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::Lattice => PlacementMode::LatticeSite,
            PlacementArg::Continuum => PlacementMode::ContinuumPoisson,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Ramsey,
    Hahn,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Sampled product states with the static field of out-of-cluster spins.
    MeanField,
    /// Sampled product states, clusters in isolation.
    Sampled,
    /// Every cluster averaged over all of its product states.
    Ensemble,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObservableArg {
    T2star,
    T2,
}

#[derive(Args)]
struct Geometry {
    /// ppm of carbon sites
    #[arg(long)]
    density: f64,
    /// Slab thickness, nm.
    #[arg(long)]
    thickness: f64,
    /// Radius of the simulated cylinder, nm.
    #[arg(long)]
    lateral_radius: Option<f64>,
    #[arg(long, value_enum, default_value_t = PlacementArg::Lattice)]
    placement: PlacementArg,
}

#[derive(Args)]
struct Hahn {
    /// CCE order.
    #[arg(long)]
    order: Option<usize>,
    /// Sampled bath states per configuration.
    #[arg(long, default_value_t = HahnSettings::default().n_bath_states)]
    nstates: usize,
    /// Cluster connectivity radius over the mean nearest-neighbour distance.
    #[arg(long, default_value_t = HahnSettings::default().radius_factor)]
    radius_factor: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::MeanField)]
    mode: ModeArg,
}

impl Hahn {
    fn mode(&self) -> BathStateMode {
        match self.mode {
            ModeArg::MeanField => BathStateMode::Sampled { mean_field: true },
            ModeArg::Sampled => BathStateMode::Sampled { mean_field: false },
            ModeArg::Ensemble => BathStateMode::Ensemble,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate one bath configuration.
    Bath {
        #[command(flatten)]
        geometry: Geometry,
        #[arg(long, default_value = "bath.json")]
        out: PathBuf,
    },
    /// Coherence curve of one bath.
    Coherence {
        #[arg(long, value_enum, default_value_t = KindArg::Hahn)]
        kind: KindArg,
        /// Bath file; without it a bath is generated from --density/--thickness.
        #[arg(long, conflicts_with_all = ["density", "thickness"])]
        bath: Option<PathBuf>,
        #[arg(long)]
        density: Option<f64>,
        #[arg(long)]
        thickness: Option<f64>,
        #[command(flatten)]
        hahn: Hahn,
        /// Linear time grid up to this time, ms.
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = HahnSettings::default().n_times)]
        ntimes: usize,
        #[arg(long, default_value = "coherence.csv")]
        out: PathBuf,
    },
    /// Coherence-time distributions over a thickness-density grid.
    Sweep {
        #[command(flatten)]
        grid: Grid,
        #[arg(long, value_enum, default_value_t = ObservableArg::T2star)]
        observable: ObservableArg,
        #[command(flatten)]
        hahn: Hahn,
        #[arg(long, default_value = "sweep.json")]
        out: PathBuf,
    },
    /// T2* library for density estimation.
    Library {
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value = "library.json")]
        out: PathBuf,
    },
    /// Estimate the density from measured T2* values at fixed thickness.
    Mle {
        #[arg(long)]
        library: PathBuf,
        /// One T2* in microseconds per line; '#' comments.
        #[arg(long)]
        data: PathBuf,
        /// nm
        #[arg(long)]
        thickness: f64,
        #[arg(long, default_value = "mle.json")]
        out: PathBuf,
    },
    /// Strong-coupling yield versus thickness.
    Yield {
        #[arg(long)]
        densities: String,
        #[arg(long)]
        thicknesses: String,
        #[arg(long, visible_alias = "configs", default_value_t = 10_000)]
        nconfigs: usize,
        #[arg(long, default_value = "yield.json")]
        out: PathBuf,
    },
    /// Run the acceptance checks.
    Validate {
        /// Only the fast checks.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Args)]
struct Grid {
    /// Axis: list `1,2,4`, range `1:6`, `lo:hi:n` or `lo:hi:log[:n]`, nm.
    #[arg(long)]
    thicknesses: String,
    /// Same syntax, ppm.
    #[arg(long)]
    densities: String,
    #[arg(long, visible_alias = "configs", default_value_t = 500)]
    nconfigs: usize,
    #[arg(long, value_enum, default_value_t = PlacementArg::Lattice)]
    placement: PlacementArg,
}

impl Grid {
    fn resolve(&self, observable: Observable) -> Result<GridArgs> {
        Ok(GridArgs {
            thicknesses: commands::parse_axis(&self.thicknesses).context("--thicknesses")?,
            densities: commands::parse_axis(&self.densities).context("--densities")?,
            n_configs: self.nconfigs,
            observable,
            placement: self.placement.into(),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("setting up the worker pool")?;
    }
    let common = Common {
        isotope: match g.isotope {
            IsotopeArg::N14 => Isotope::N14,
            IsotopeArg::N15 => Isotope::N15,
        },
        field: g.field,
        seed: g.seed,
        params_file: g.params.clone(),
    };
    match cli.command {
        Command::Bath { geometry, out } => {
            let args = GeometryArgs {
                density: geometry.density,
                thickness: geometry.thickness,
                lateral_radius: geometry.lateral_radius,
                placement: geometry.placement.into(),
            };
            let config = commands::cmd_bath(&common, &args, &out)?;
            println!("{} spins -> {}", config.len(), out.display());
        }
        Command::Coherence { kind, bath, density, thickness, hahn, t_max, ntimes, out } => {
            let source = match (bath, density, thickness) {
                (Some(path), _, _) => {
                    if !path.exists() {
                        bail!("bath file {} does not exist", path.display());
                    }
                    BathSource::File(path)
                }
                (None, Some(density), Some(thickness)) => BathSource::Generate(GeometryArgs {
                    density,
                    thickness,
                    lateral_radius: None,
                    placement: PlacementMode::LatticeSite,
                }),
                _ => bail!("give either --bath or both --density and --thickness"),
            };
            let args = CoherenceArgs {
                kind: match kind {
                    KindArg::Ramsey => SequenceKind::Ramsey,
                    KindArg::Hahn => SequenceKind::HahnEcho,
                },
                bath: source,
                order: hahn.order,
                n_states: hahn.nstates,
                radius_factor: hahn.radius_factor,
                mode: hahn.mode(),
                t_max,
                n_times: ntimes,
            };
            let curve = commands::cmd_coherence(&common, &args, &out)?;
            println!("{} points -> {}", curve.len(), out.display());
        }
        Command::Sweep { grid, observable, hahn, out } => {
            let obs = match observable {
                ObservableArg::T2star => Observable::RamseyT2Star,
                ObservableArg::T2 => Observable::HahnT2(HahnSettings {
                    order: hahn.order.unwrap_or(HahnSettings::default().order),
                    n_bath_states: hahn.nstates,
                    radius_factor: hahn.radius_factor,
                    mode: hahn.mode(),
                    ..HahnSettings::default()
                }),
            };
            let grid = commands::cmd_sweep(&common, &grid.resolve(obs)?, &out)?;
            println!("{} cells -> {}", grid.cells.len(), out.display());
        }
        Command::Library { grid, out } => {
            let lib = commands::cmd_library(&common, &grid.resolve(Observable::RamseyT2Star)?, &out)?;
            for w in &lib.provenance.warnings {
                log::warn!("{w}");
            }
            println!("{} cells -> {}", lib.cells.len(), out.display());
        }
        Command::Mle { library, data, thickness, out } => {
            for p in [&library, &data] {
                if !p.exists() {
                    bail!("{} does not exist", p.display());
                }
            }
            let r = commands::cmd_mle(&library, &data, thickness, &out)?;
            println!(
                "rho_mle = {:.3} ppm, rho_sigma = {:.3} ppm at {} nm from {} measurements -> {}",
                r.estimate.rho_mle,
                r.estimate.rho_sigma,
                r.estimate.fixed_thickness,
                r.t2star_us.len(),
                out.display()
            );
        }
        Command::Yield { densities, thicknesses, nconfigs, out } => {
            let d = commands::parse_axis(&densities).context("--densities")?;
            let t = commands::parse_axis(&thicknesses).context("--thicknesses")?;
            let report = commands::cmd_yield(&common, &d, &t, nconfigs, &out)?;
            for x in &report.crossovers {
                println!(
                    "{} ppm: thin/thick yield {}, knee {} nm",
                    x.density,
                    x.ratio.map_or("n/a".into(), |r| format!("{r:.2}")),
                    x.knee.map_or("n/a".into(), |k| format!("{k:.2}"))
                );
            }
            println!("-> {}", out.display());
        }
        Command::Validate { quick } => {
            let outcomes = nvbath::validation::run_all(quick);
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
            if failed > 0 {
                bail!("{failed} criteria failed");
            }
        }
    }
    Ok(())
}
