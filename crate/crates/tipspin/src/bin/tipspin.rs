use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde_json::json;
use sha2::{Digest, Sha256};

use tipspin::angmom::{self, SpinOperatorSet, SpinSpectrum};
use tipspin::anisotropy::{load_model, AnisotropyModel};
use tipspin::{cavity, drivesim, floquet, svg, HBAR_MEV_PS};

#[derive(Parser)]
#[command(name = "tipspin", about = "Spin dynamics of a tip-driven magnetic adatom", version)]
struct Cli {
    /// TOML config with the anisotropy fits
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for data files and manifests
    #[arg(long, global = true, default_value = "./out")]
    out: PathBuf,
    /// Also emit SVG plots beside the CSV output
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Static spectrum at fixed tip height: energies, ⟨Jx⟩, couplings
    Spectrum(SpectrumArgs),
    /// Propagate the ground state under a sinusoidal drive
    Evolve(EvolveArgs),
    /// Ground-state survival map over a drive-frequency grid
    Sweep(SweepArgs),
    /// Quasienergy sweep with avoided-crossing detection
    Floquet(FloquetArgs),
    /// Quantized two-phonon model: averaged populations and entropy
    Cavity(CavityArgs),
}

#[derive(Args)]
struct SpectrumArgs {
    /// Tip height in Å
    #[arg(long, default_value_t = 4.0)]
    a0: f64,
    /// Override the magnetic field in tesla
    #[arg(long)]
    b0: Option<f64>,
}

#[derive(Args)]
struct EvolveArgs {
    #[arg(long, default_value_t = 4.0)]
    a0: f64,
    /// Drive amplitude in Å
    #[arg(long, default_value_t = 0.9)]
    b: f64,
    /// Drive frequency in meV
    #[arg(long)]
    omega: f64,
    /// Propagation length in ps
    #[arg(long, default_value_t = 400.0)]
    t_max: f64,
    /// Step size in ps (default: drive period / 500)
    #[arg(long)]
    dt: Option<f64>,
    /// Keep every k-th step in the output
    #[arg(long, default_value_t = 20)]
    store_every: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 4.0)]
    a0: f64,
    #[arg(long, default_value_t = 0.9)]
    b: f64,
    /// Frequency grid start, meV
    #[arg(long)]
    omega_min: f64,
    /// Frequency grid end, meV
    #[arg(long)]
    omega_max: f64,
    /// Number of grid points (>= 2)
    #[arg(long, default_value_t = 200)]
    n_omega: usize,
    #[arg(long, default_value_t = 300.0)]
    t_max: f64,
    /// Step size in ps (default: shortest drive period / 400)
    #[arg(long)]
    dt: Option<f64>,
    /// Number of output time samples
    #[arg(long, default_value_t = 300)]
    n_times: usize,
}

#[derive(Args)]
struct FloquetArgs {
    #[arg(long, default_value_t = 4.0)]
    a0: f64,
    #[arg(long, default_value_t = 0.9)]
    b: f64,
    #[arg(long)]
    omega_min: f64,
    #[arg(long)]
    omega_max: f64,
    #[arg(long, default_value_t = 200)]
    n_omega: usize,
    /// Base steps per period for the monodromy integration
    #[arg(long, default_value_t = 200)]
    steps: usize,
}

#[derive(Args)]
struct CavityArgs {
    #[arg(long, default_value_t = 4.0)]
    a0: f64,
    /// Mean phonon number (both modes)
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    /// Zero-point amplitude scale in Å
    #[arg(long, default_value_t = 0.1)]
    delta_a: f64,
    /// Time span in ps (default: 1.5 revival times)
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long, default_value_t = 800)]
    n_times: usize,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Config(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }
    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Numeric(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Ok(val) = std::env::var("TIPSPIN_WORKERS") {
        let n: usize = val
            .parse()
            .map_err(|_| Failure::Usage(format!("TIPSPIN_WORKERS must be a positive integer, got {val:?}")))?;
        if n == 0 {
            return Err(Failure::Usage("TIPSPIN_WORKERS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("worker pool: {e}")))?;
    }

    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let raw = fs::read_to_string(config_path)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", config_path.display())))?;
    let digest = hex(&Sha256::digest(raw.as_bytes()));
    let model = load_model(&raw).map_err(|e| Failure::Config(e.to_string()))?;
    let ops = angmom::build_operators(2.0).map_err(|e| Failure::Numeric(e.to_string()))?;

    fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", cli.out.display())))?;

    let started = Instant::now();
    let ctx = Ctx {
        out: cli.out.clone(),
        plot: cli.plot,
        config_path: config_path.to_path_buf(),
        config_sha256: digest,
        started,
    };
    match cli.command {
        Command::Spectrum(args) => cmd_spectrum(&ctx, &model, &ops, &args),
        Command::Evolve(args) => cmd_evolve(&ctx, &model, &ops, &args),
        Command::Sweep(args) => cmd_sweep(&ctx, &model, &ops, &args),
        Command::Floquet(args) => cmd_floquet(&ctx, &model, &ops, &args),
        Command::Cavity(args) => cmd_cavity(&ctx, &model, &args),
    }
}

struct Ctx {
    out: PathBuf,
    plot: bool,
    config_path: PathBuf,
    config_sha256: String,
    started: Instant,
}

impl Ctx {
    fn write_output(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.out.join(name);
        fs::write(&path, contents)
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_manifest(
        &self,
        subcommand: &str,
        params: serde_json::Value,
        outputs: &[PathBuf],
        steps: u64,
    ) -> Result<(), Failure> {
        let manifest = json!({
            "subcommand": subcommand,
            "parameters": params,
            "config": {
                "path": self.config_path.display().to_string(),
                "sha256": self.config_sha256,
            },
            "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "wall_ms": self.started.elapsed().as_millis() as u64,
            "steps": steps,
            "workers": rayon::current_num_threads(),
        });
        let path = self.out.join(format!("{subcommand}_manifest.json"));
        fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// 12 significant digits, locale-independent.
fn sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v:.11e}")
}

fn static_spectrum(
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    a0: f64,
) -> Result<SpinSpectrum, Failure> {
    let h = model.zeeman_strength(a0);
    let (delta, _) = model.anisotropy_and_slope(a0);
    angmom::diagonalize(&angmom::static_hamiltonian(ops, h, delta), ops)
        .map_err(|e| Failure::Numeric(e.to_string()))
}

fn cmd_spectrum(
    ctx: &Ctx,
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    args: &SpectrumArgs,
) -> Result<(), Failure> {
    let mut model = model.clone();
    if let Some(b0) = args.b0 {
        model.b0_tesla = b0;
    }
    let spec = static_spectrum(&model, ops, args.a0)?;
    let mut csv = String::from("n,E_meV,Jx_expect,coupling_to_ground\n");
    for n in 0..ops.dim {
        let state = spec.states.column(n).clone_owned();
        let jx = state.dotc(&(&ops.jx * &state)).re;
        csv.push_str(&format!(
            "{n},{},{},{}\n",
            sig(spec.energies[n]),
            sig(jx),
            sig(spec.couplings[n])
        ));
    }
    print!("{csv}");
    let path = ctx.write_output("spectrum.csv", &csv)?;
    ctx.write_manifest(
        "spectrum",
        json!({"a0": args.a0, "b0_tesla": model.b0_tesla}),
        &[path],
        0,
    )
}

fn cmd_evolve(
    ctx: &Ctx,
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    args: &EvolveArgs,
) -> Result<(), Failure> {
    let drive = drivesim::DriveProtocol::new(args.a0, args.b, args.omega)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let dt = match args.dt {
        Some(dt_ps) => dt_ps / HBAR_MEV_PS,
        None => drive.period() / 500.0,
    };
    let t_max = args.t_max / HBAR_MEV_PS;
    let spec = static_spectrum(model, ops, args.a0)?;
    let psi0: DVector<C64> = spec.ground_state();
    let traj = drivesim::propagate(model, ops, &drive, t_max, dt, &psi0, args.store_every)
        .map_err(|e| Failure::Numeric(e.to_string()))?;

    let mut csv = String::from("t_ps,P0,P1,P2,P3,P4,Jx\n");
    for (k, &t) in traj.times.iter().enumerate() {
        csv.push_str(&sig(t * HBAR_MEV_PS));
        for p in &traj.populations[k] {
            csv.push(',');
            csv.push_str(&sig(*p));
        }
        csv.push(',');
        csv.push_str(&sig(traj.jx_expect[k]));
        csv.push('\n');
    }
    let mut outputs = vec![ctx.write_output("evolve.csv", &csv)?];
    if ctx.plot {
        let t_ps: Vec<f64> = traj.times.iter().map(|t| t * HBAR_MEV_PS).collect();
        let cols: Vec<Vec<f64>> = (0..ops.dim)
            .map(|n| traj.populations.iter().map(|p| p[n]).collect())
            .collect();
        let labels = ["P0", "P1", "P2", "P3", "P4"];
        let series: Vec<svg::Series> = cols
            .iter()
            .enumerate()
            .map(|(n, y)| svg::Series { label: labels[n], x: &t_ps, y })
            .collect();
        let plot = svg::line_plot(
            &format!("populations, omega = {} meV, b = {} A", args.omega, args.b),
            "t (ps)",
            "population",
            &series,
        );
        outputs.push(ctx.write_output("evolve.svg", &plot)?);
    }
    ctx.write_manifest(
        "evolve",
        json!({
            "a0": args.a0, "b": args.b, "omega": args.omega,
            "t_max_ps": args.t_max, "dt_internal": dt, "store_every": args.store_every,
        }),
        &outputs,
        (t_max / dt).ceil() as u64,
    )
}

fn cmd_sweep(
    ctx: &Ctx,
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    args: &SweepArgs,
) -> Result<(), Failure> {
    if args.n_omega < 2 {
        return Err(Failure::Usage("--n-omega must be at least 2".into()));
    }
    if args.omega_max <= args.omega_min {
        return Err(Failure::Usage("--omega-max must exceed --omega-min".into()));
    }
    let grid: Vec<f64> = (0..args.n_omega)
        .map(|k| {
            args.omega_min
                + (args.omega_max - args.omega_min) * k as f64 / (args.n_omega - 1) as f64
        })
        .collect();
    let dt = match args.dt {
        Some(dt_ps) => dt_ps / HBAR_MEV_PS,
        None => 2.0 * std::f64::consts::PI / args.omega_max / 400.0,
    };
    let t_max = args.t_max / HBAR_MEV_PS;
    let map = drivesim::survival_map(model, ops, args.a0, args.b, &grid, t_max, dt, args.n_times)
        .map_err(|e| Failure::Numeric(e.to_string()))?;

    let mut csv = String::from("omega_meV");
    for &t in &map.times {
        csv.push(',');
        csv.push_str(&sig(t * HBAR_MEV_PS));
    }
    csv.push('\n');
    for (i, row) in map.rows.iter().enumerate() {
        csv.push_str(&sig(map.omegas[i]));
        for p in row {
            csv.push(',');
            csv.push_str(&sig(*p));
        }
        csv.push('\n');
    }
    let mut outputs = vec![ctx.write_output("sweep.csv", &csv)?];
    if ctx.plot {
        let t_ps: Vec<f64> = map.times.iter().map(|t| t * HBAR_MEV_PS).collect();
        let plot = svg::heat_map(
            "ground-state survival",
            "t (ps)",
            "omega (meV)",
            &t_ps,
            &map.omegas,
            &map.rows,
        );
        outputs.push(ctx.write_output("sweep.svg", &plot)?);
    }
    let steps = (t_max / dt).ceil() as u64 * grid.len() as u64;
    ctx.write_manifest(
        "sweep",
        json!({
            "a0": args.a0, "b": args.b,
            "omega_min": args.omega_min, "omega_max": args.omega_max, "n_omega": args.n_omega,
            "t_max_ps": args.t_max, "dt_internal": dt, "n_times": args.n_times,
        }),
        &outputs,
        steps,
    )
}

fn cmd_floquet(
    ctx: &Ctx,
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    args: &FloquetArgs,
) -> Result<(), Failure> {
    if args.n_omega < 2 {
        return Err(Failure::Usage("--n-omega must be at least 2".into()));
    }
    if args.omega_max <= args.omega_min {
        return Err(Failure::Usage("--omega-max must exceed --omega-min".into()));
    }
    let grid: Vec<f64> = (0..args.n_omega)
        .map(|k| {
            args.omega_min
                + (args.omega_max - args.omega_min) * k as f64 / (args.n_omega - 1) as f64
        })
        .collect();
    let sweep = floquet::sweep_and_track(model, ops, args.a0, args.b, &grid, args.steps)
        .map_err(|e| Failure::Numeric(e.to_string()))?;

    let mut qcsv = String::from(
        "omega_meV,eps0,eps1,eps2,eps3,eps4,proj0,proj1,proj2,proj3,proj4\n",
    );
    for res in &sweep.results {
        qcsv.push_str(&sig(res.omega));
        for m in &res.modes {
            qcsv.push(',');
            qcsv.push_str(&sig(m.quasienergy));
        }
        for m in &res.modes {
            qcsv.push(',');
            qcsv.push_str(&sig(m.projection));
        }
        qcsv.push('\n');
    }
    let mut ccsv =
        String::from("omega_star_meV,gap_meV,period_ps,branch_i,branch_j,proj_i,proj_j\n");
    for rec in &sweep.crossings {
        ccsv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            sig(rec.omega_star),
            sig(rec.gap),
            sig(rec.period * HBAR_MEV_PS),
            rec.branch_i,
            rec.branch_j,
            sig(rec.projections.0),
            sig(rec.projections.1),
        ));
    }
    let mut outputs = vec![
        ctx.write_output("quasienergies.csv", &qcsv)?,
        ctx.write_output("crossings.csv", &ccsv)?,
    ];
    if ctx.plot {
        let n_modes = sweep.results[0].modes.len();
        let omegas: Vec<f64> = sweep.results.iter().map(|r| r.omega).collect();
        let cols: Vec<Vec<f64>> = (0..n_modes)
            .map(|n| sweep.results.iter().map(|r| r.modes[n].quasienergy).collect())
            .collect();
        let labels = ["branch 0", "branch 1", "branch 2", "branch 3", "branch 4"];
        let series: Vec<svg::Series> = cols
            .iter()
            .enumerate()
            .map(|(n, y)| svg::Series { label: labels[n], x: &omegas, y })
            .collect();
        let plot = svg::line_plot("quasienergies", "omega (meV)", "eps (meV)", &series);
        outputs.push(ctx.write_output("quasienergies.svg", &plot)?);
    }
    ctx.write_manifest(
        "floquet",
        json!({
            "a0": args.a0, "b": args.b,
            "omega_min": args.omega_min, "omega_max": args.omega_max,
            "n_omega": args.n_omega, "steps": args.steps,
            "crossings_found": sweep.crossings.len(),
        }),
        &outputs,
        (args.steps * args.n_omega) as u64,
    )
}

fn cmd_cavity(ctx: &Ctx, model: &AnisotropyModel, args: &CavityArgs) -> Result<(), Failure> {
    let cav = cavity::build_cavity_model(model, args.a0, args.delta_a, args.lambda, args.lambda)
        .map_err(|e| Failure::Numeric(e.to_string()))?;
    let t_max = match args.t_max {
        Some(t_ps) => t_ps / HBAR_MEV_PS,
        None => {
            if cav.gamma == 0.0 {
                100.0
            } else {
                1.5 * cav.revival_time()
            }
        }
    };
    let n = args.n_times.max(2);
    let grid: Vec<f64> = (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect();
    let pops = cavity::averaged_populations(&cav, &grid).map_err(|e| Failure::Numeric(e.to_string()))?;
    let ent = cavity::entropy_series(&cav, &grid).map_err(|e| Failure::Numeric(e.to_string()))?;

    let mut csv = String::from("t_ps,I1_closed,I2_closed,I3_closed,I1_oracle,S_closed,S_oracle\n");
    for (k, &t) in grid.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            sig(t * HBAR_MEV_PS),
            sig(pops.closed[k][0]),
            sig(pops.closed[k][1]),
            sig(pops.closed[k][2]),
            sig(ent.oracle[k].populations[0]),
            sig(ent.closed[k].s),
            sig(ent.oracle[k].s),
        ));
    }
    let mut outputs = vec![ctx.write_output("cavity.csv", &csv)?];
    if ctx.plot {
        let t_ps: Vec<f64> = grid.iter().map(|t| t * HBAR_MEV_PS).collect();
        let i1c: Vec<f64> = pops.closed.iter().map(|p| p[0]).collect();
        let i1o: Vec<f64> = ent.oracle.iter().map(|o| o.populations[0]).collect();
        let so: Vec<f64> = ent.oracle.iter().map(|o| o.s).collect();
        let plot = svg::line_plot(
            &format!("collapse and revival, lambda = {}", args.lambda),
            "t (ps)",
            "I1 / S",
            &[
                svg::Series { label: "I1 closed", x: &t_ps, y: &i1c },
                svg::Series { label: "I1 oracle", x: &t_ps, y: &i1o },
                svg::Series { label: "S oracle", x: &t_ps, y: &so },
            ],
        );
        outputs.push(ctx.write_output("cavity.svg", &plot)?);
    }
    ctx.write_manifest(
        "cavity",
        json!({
            "a0": args.a0, "lambda": args.lambda, "delta_a": args.delta_a,
            "t_max_ps": t_max * HBAR_MEV_PS, "n_times": n,
            "gamma_meV": cav.gamma, "g0": cav.g0,
            "coupling_asymmetry": cav.coupling_asymmetry,
            "revival_time_ps": if cav.gamma == 0.0 { f64::INFINITY } else { cav.revival_time() * HBAR_MEV_PS },
        }),
        &outputs,
        (n * (cavity::fock_cutoff(args.lambda) + 1).pow(2)) as u64,
    )
}
