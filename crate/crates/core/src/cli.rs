//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::config::{resolve, CountSpec, DomainSpec, InitialSpec, RawConfig, RawGfdn, RawSweep, RunConfig, OUT_DIR_ENV};
use crate::error::{invalid, Error, Result};
use crate::experiments::{
    compute_reference, spatial_sweep, temporal_sweep, ExecMode, InitialDatum, ProblemSetup, ReferenceSolution,
    SweepOptions, SweepReport,
};
use crate::ground_state::{gfdn_solve, GroundState};
use crate::potential::{preset_model, preset_potential};
use crate::propagator::{evolve, NormTrace, Scheme, SchemeConfig, SnapshotSampler};
use crate::snapshot::{read_snapshot, write_density_csv, write_snapshot};
use crate::spectral::{SpectralField, SpectralGrid};

#[derive(Debug, Parser)]
#[command(name = "ltsefp", version, about = "Spectral GPE solver for rough, time-dependent potentials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Run,
    ConvergeTime,
    ConvergeSpace,
    GroundState,
    AppDoublewell,
    AppObstacle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve one configuration and write snapshots and a norm trace.
    Run(CommonArgs),
    /// Temporal convergence sweep against a fine reference.
    ConvergeTime(CommonArgs),
    /// Spatial convergence sweep against a fine reference.
    ConvergeSpace(CommonArgs),
    /// Compute a ground state by gradient flow.
    GroundState(CommonArgs),
    /// 1D trap turning into a double well.
    AppDoublewell(CommonArgs),
    /// 2D condensate stirred by a moving obstacle.
    AppObstacle(CommonArgs),
}

impl Command {
    fn split(self) -> (CommandKind, CommonArgs) {
        match self {
            Command::Run(a) => (CommandKind::Run, a),
            Command::ConvergeTime(a) => (CommandKind::ConvergeTime, a),
            Command::ConvergeSpace(a) => (CommandKind::ConvergeSpace, a),
            Command::GroundState(a) => (CommandKind::GroundState, a),
            Command::AppDoublewell(a) => (CommandKind::AppDoublewell, a),
            Command::AppObstacle(a) => (CommandKind::AppObstacle, a),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Nodes per axis.
    #[arg(long = "n", short = 'N')]
    pub n: Option<usize>,
    /// Mesh size (all axes).
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Final time.
    #[arg(long = "t-final", visible_alias = "T")]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Potential preset.
    #[arg(long)]
    pub potential: Option<String>,
    /// Barrier half-width of the double-well ramp.
    #[arg(long = "l")]
    pub barrier_half_width: Option<f64>,
    /// Obstacle speed.
    #[arg(long = "v")]
    pub obstacle_speed: Option<f64>,
    /// gaussian | ground_state | snapshot path
    #[arg(long)]
    pub initial: Option<String>,
    #[arg(long)]
    pub ground_state_potential: Option<String>,
    #[arg(long, env = OUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub sample_times: Option<Vec<f64>>,
    /// enforce | warn | off
    #[arg(long = "cfl")]
    pub cfl_policy: Option<String>,
    #[arg(long)]
    pub norm_trace_stride: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_h: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_tau: Option<Vec<f64>>,
    #[arg(long)]
    pub reference_h: Option<f64>,
    #[arg(long)]
    pub reference_tau: Option<f64>,
    /// Snapshot at `T` used instead of computing a reference.
    #[arg(long)]
    pub reference_file: Option<PathBuf>,
    /// Write 0 in the seconds column so reruns are byte-identical.
    #[arg(long)]
    pub no_timings: bool,
    /// Run sweep points one after another.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub gfdn_dt: Option<f64>,
    #[arg(long)]
    pub gfdn_tol: Option<f64>,
    #[arg(long)]
    pub gfdn_max_iterations: Option<usize>,
}

impl CommonArgs {
    fn to_raw(&self) -> RawConfig {
        let sweep = RawSweep {
            h: self.sweep_h.clone(),
            tau: self.sweep_tau.clone(),
            reference_h: self.reference_h,
            reference_tau: self.reference_tau,
            reference_file: self.reference_file.clone(),
            timings: self.no_timings.then_some(false),
            parallel: self.sequential.then_some(false),
        };
        let gfdn = RawGfdn { dt: self.gfdn_dt, tol: self.gfdn_tol, max_iterations: self.gfdn_max_iterations, mass: None };
        RawConfig {
            domain: None,
            n: self.n.map(CountSpec::One),
            h: self.h,
            scheme: self.scheme.clone(),
            tau: self.tau,
            t_final: self.t_final,
            beta: self.beta,
            potential: self.potential.clone(),
            barrier_half_width: self.barrier_half_width,
            obstacle_speed: self.obstacle_speed,
            initial: self.initial.clone(),
            ground_state_potential: self.ground_state_potential.clone(),
            output_dir: self.output_dir.clone(),
            sample_times: self.sample_times.clone(),
            cfl_policy: self.cfl_policy.clone(),
            norm_trace_stride: self.norm_trace_stride,
            sweep: (sweep != RawSweep::default()).then_some(sweep),
            gfdn: (gfdn != RawGfdn::default()).then_some(gfdn),
        }
    }
}

/// Built-in defaults per subcommand, before the file and flags.
pub fn defaults(kind: CommandKind) -> RawConfig {
    let standard_1d = RawConfig {
        domain: Some(DomainSpec::Interval([-16.0, 16.0])),
        h: Some(2f64.powi(-6)),
        scheme: Some("ltsefp".into()),
        tau: Some(5e-5),
        t_final: Some(1.0),
        beta: Some(1.0),
        potential: Some("square_well".into()),
        ..Default::default()
    };
    match kind {
        CommandKind::Run | CommandKind::GroundState | CommandKind::ConvergeTime => standard_1d,
        CommandKind::ConvergeSpace => RawConfig {
            tau: Some(1e-6),
            sweep: Some(RawSweep { h: Some(vec![2f64.powi(-3), 2f64.powi(-4), 2f64.powi(-5)]), ..Default::default() }),
            ..standard_1d
        },
        CommandKind::AppDoublewell => RawConfig {
            h: Some(2f64.powi(-7)),
            tau: Some(1e-5),
            potential: Some("trap_plus_ramp".into()),
            ground_state_potential: Some("trap".into()),
            initial: Some("ground_state".into()),
            barrier_half_width: Some(0.5),
            ..standard_1d
        },
        CommandKind::AppObstacle => RawConfig {
            domain: Some(DomainSpec::Boxed(vec![[-8.0, 8.0], [-4.0, 4.0]])),
            h: Some(2f64.powi(-5)),
            scheme: Some("ltsefp_split".into()),
            tau: Some(2.5e-4),
            t_final: Some(1.0),
            beta: Some(5.0),
            potential: Some("ho2d_plus_obstacle".into()),
            ground_state_potential: Some("ho2d".into()),
            initial: Some("ground_state".into()),
            obstacle_speed: Some(10.0),
            ..Default::default()
        },
    }
}

/// Merges defaults, the file named by `args.config`, and flags.
pub fn build_config(kind: CommandKind, args: &CommonArgs) -> Result<RunConfig> {
    let mut raw = defaults(kind);
    if let Some(p) = &args.config {
        raw.overlay(&RawConfig::load(p)?);
    }
    raw.overlay(&args.to_raw());
    if matches!(kind, CommandKind::AppDoublewell | CommandKind::AppObstacle) && raw.sample_times.is_none() {
        // five evenly spaced snapshots, rounded to step boundaries
        if let (Some(t), Some(tau)) = (raw.t_final, raw.tau) {
            if tau > 0.0 && t >= 0.0 {
                let steps = (t / tau).round();
                raw.sample_times = Some((0..=4).map(|k| (steps * k as f64 / 4.0).round() * tau).collect());
                if let Some(last) = raw.sample_times.as_mut().and_then(|v| v.last_mut()) {
                    *last = t;
                }
            }
        }
    }
    resolve(&raw)
}

/// Entry point shared by the binary and the tests; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (kind, args) = cli.command.split();
    match build_config(kind, &args).and_then(|cfg| run_command(kind, &cfg)) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("ltsefp: error kind={} message={:?}", e.kind(), e.to_string());
            1
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Executes `kind` and returns a one-line summary.
pub fn run_command(kind: CommandKind, cfg: &RunConfig) -> Result<String> {
    fs::create_dir_all(&cfg.output_dir)?;
    write(&cfg.output_dir.join("resolved_config.toml"), cfg.to_toml())?;
    match kind {
        CommandKind::Run | CommandKind::AppDoublewell | CommandKind::AppObstacle => run_evolution(cfg),
        CommandKind::GroundState => run_ground_state(cfg),
        CommandKind::ConvergeTime | CommandKind::ConvergeSpace => run_sweep(kind, cfg),
    }
}

fn grid_of(cfg: &RunConfig) -> Result<Arc<SpectralGrid>> {
    Ok(Arc::new(cfg.grid()?))
}

fn ground_state(cfg: &RunConfig, grid: &Arc<SpectralGrid>) -> Result<GroundState> {
    let pot = preset_potential(&cfg.ground_state_potential, grid.clone(), cfg.params)?;
    let gs = gfdn_solve(&pot, cfg.beta, &cfg.gfdn)?;
    log::info!(
        "ground state: {} iterations, E={:.12}, mu={:.12}, residual={:e}",
        gs.iterations,
        gs.energy,
        gs.mu,
        gs.residual
    );
    Ok(gs)
}

fn write_ground_state(dir: &Path, gs: &GroundState) -> Result<()> {
    write_snapshot(&dir.join("ground_state.bin"), &gs.field, 0.0, None)?;
    write_density_csv(&dir.join("ground_state_density.csv"), &gs.field)?;
    write(
        &dir.join("ground_state.csv"),
        format!(
            "energy,mu,iterations,residual,rejections\n{:.16e},{:.16e},{},{:e},{}\n",
            gs.energy, gs.mu, gs.iterations, gs.residual, gs.rejections
        ),
    )
}

fn initial_field(cfg: &RunConfig, grid: &Arc<SpectralGrid>) -> Result<SpectralField> {
    match &cfg.initial {
        InitialSpec::Gaussian => {
            let setup = ProblemSetup {
                domain: cfg.domain.clone(),
                beta: cfg.beta,
                t_final: cfg.t_final,
                initial: InitialDatum::Gaussian,
                potential: preset_model(&cfg.potential, cfg.domain.dim(), cfg.params)?,
            };
            setup.initial_field(grid)
        }
        InitialSpec::GroundState => {
            let gs = ground_state(cfg, grid)?;
            write_ground_state(&cfg.output_dir, &gs)?;
            Ok(gs.field)
        }
        InitialSpec::File(p) => {
            let snap = read_snapshot(p)?;
            crate::experiments::resample(&snap.field, grid)
        }
    }
}

fn run_evolution(cfg: &RunConfig) -> Result<String> {
    let grid = grid_of(cfg)?;
    let psi0 = initial_field(cfg, &grid)?;
    let pot = preset_potential(&cfg.potential, grid.clone(), cfg.params)?;
    let scheme_cfg = SchemeConfig::new(cfg.scheme, cfg.tau, cfg.beta, cfg.t_final).with_cfl(cfg.cfl);
    let mut trace = NormTrace::new(cfg.norm_trace_stride);
    let mut sampler = SnapshotSampler::new(&cfg.sample_times, cfg.tau, cfg.t_final)?;
    let result = evolve(&psi0, &pot, &scheme_cfg, &mut [&mut trace, &mut sampler]);
    write(&cfg.output_dir.join("norm_trace.csv"), trace.to_csv())?;
    let mut index = String::from("index,t,snapshot,density\n");
    for (k, (t, field)) in sampler.snapshots.iter().enumerate() {
        let snap = format!("snapshot_{k:04}.bin");
        let dens = format!("density_{k:04}.csv");
        write_snapshot(&cfg.output_dir.join(&snap), field, *t, Some(cfg.scheme))?;
        write_density_csv(&cfg.output_dir.join(&dens), field)?;
        let _ = writeln!(index, "{k},{t:.12e},{snap},{dens}");
    }
    write(&cfg.output_dir.join("snapshots.csv"), index)?;
    let out = result?;
    let m0 = out.initial_norm.powi(2);
    let m1 = out.final_norm.powi(2);
    Ok(format!(
        "ok steps={} snapshots={} initial_mass={m0:.12e} final_mass={m1:.12e} mass_ratio={:.12} output_dir={}",
        out.steps,
        sampler.snapshots.len(),
        m1 / m0,
        cfg.output_dir.display()
    ))
}

fn run_ground_state(cfg: &RunConfig) -> Result<String> {
    let grid = grid_of(cfg)?;
    let gs = ground_state(cfg, &grid)?;
    write_ground_state(&cfg.output_dir, &gs)?;
    Ok(format!(
        "ok energy={:.12e} mu={:.12e} iterations={} residual={:e} output_dir={}",
        gs.energy,
        gs.mu,
        gs.iterations,
        gs.residual,
        cfg.output_dir.display()
    ))
}

fn setup_of(cfg: &RunConfig) -> Result<ProblemSetup> {
    let potential = preset_model(&cfg.potential, cfg.domain.dim(), cfg.params)?;
    let initial = match &cfg.initial {
        InitialSpec::Gaussian => InitialDatum::Gaussian,
        InitialSpec::GroundState => InitialDatum::Field(ground_state(cfg, &grid_of(cfg)?)?.field),
        InitialSpec::File(p) => InitialDatum::Field(read_snapshot(p)?.field),
    };
    Ok(ProblemSetup { domain: cfg.domain.clone(), beta: cfg.beta, t_final: cfg.t_final, initial, potential })
}

/// The reference scheme: the extended scheme, split when a smooth part is present.
pub fn reference_scheme(setup: &ProblemSetup) -> Scheme {
    if setup.potential.smooth.is_some() {
        Scheme::LtsefpSplit
    } else {
        Scheme::Ltsefp
    }
}

fn reference_of(cfg: &RunConfig, setup: &ProblemSetup) -> Result<ReferenceSolution> {
    match &cfg.sweep.reference_file {
        Some(p) => {
            let snap = read_snapshot(p)?;
            if (snap.t - cfg.t_final).abs() > 1e-9 * cfg.t_final.max(1.0) {
                return Err(invalid(format!("reference file holds t={} but T={}", snap.t, cfg.t_final)));
            }
            Ok(ReferenceSolution::from_field(snap.field, cfg.t_final, snap.scheme.unwrap_or(Scheme::Ltsefp), 0.0))
        }
        None => {
            let r = compute_reference(
                setup,
                reference_scheme(setup),
                cfg.sweep.reference_h,
                cfg.sweep.reference_tau,
                &[cfg.t_final],
            )?;
            if let Some(f) = r.at(cfg.t_final) {
                write_snapshot(&cfg.output_dir.join("reference.bin"), f, cfg.t_final, Some(r.scheme))?;
            }
            Ok(r)
        }
    }
}

fn run_sweep(kind: CommandKind, cfg: &RunConfig) -> Result<String> {
    let setup = setup_of(cfg)?;
    let reference = reference_of(cfg, &setup)?;
    let opts = SweepOptions {
        exec: if cfg.sweep.parallel { ExecMode::Parallel } else { ExecMode::Sequential },
        cfl: cfg.cfl,
    };
    let (report, name): (SweepReport, &str) = match kind {
        CommandKind::ConvergeTime => {
            (temporal_sweep(&setup, cfg.scheme, &cfg.sweep.h, &cfg.sweep.tau, &reference, opts)?, "sweep_time.csv")
        }
        _ => (spatial_sweep(&setup, cfg.scheme, cfg.tau, &cfg.sweep.h, &reference, opts)?, "sweep_space.csv"),
    };
    let path = cfg.output_dir.join(name);
    write(&path, report.to_csv(cfg.sweep.timings))?;
    let fits: Vec<String> = report
        .fits()
        .iter()
        .map(|g| match g.fit {
            Ok(f) => format!("{}:{:.4}", match g.norm {
                crate::experiments::ErrorNorm::L2 => "l2_slope",
                crate::experiments::ErrorNorm::H1 => "h1_slope",
            }, f.slope),
            Err(()) => "insufficient-data".to_string(),
        })
        .collect();
    let diverged = report.rows.iter().filter(|r| r.diverged.is_some()).count();
    if diverged > 0 {
        return Err(Error::Diverged { step: report.rows.iter().find_map(|r| r.diverged).unwrap_or(0) });
    }
    Ok(format!("ok rows={} {} csv={}", report.rows.len(), fits.join(" "), path.display()))
}
