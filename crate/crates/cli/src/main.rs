//! `qfj`: equilibrium and transport of a quantum particle in a corrugated
//! channel, from analytic formulas, lattice diagonalization, a Redfield
//! steady state and a quantum Smoluchowski solver.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qfj_core::config::KeyValues;
use qfj_core::fick_jacobs::{free_energy_barrier, harmonic_flux_correction, harmonic_profile, DensityExpansion};
use qfj_core::grid::{assemble_hamiltonian, build_grid, BoundaryX};
use qfj_core::model::check_validity;
use qfj_core::redfield::{
    default_gamma, default_threshold, transport_setup, write_transport_csv, LeadSpec, Side, SteadyMethod, SteadyOptions, TransportRow,
    DIRECT_LIMIT,
};
use qfj_core::smoluchowski::solve_steady_2d;
use qfj_core::spectrum::diagonalize;
use qfj_core::sweep::{
    convergence_study, emit_plot_scripts, locate_extremum, mismatch_scan, run_sweep, write_mismatch_csv,
    write_sweep_csv, ExtremumKind, Route, SweepAxis, SweepConfig, TransportConfig,
};
use qfj_core::thermal::{fj_density_on_grid, mismatch_score, numeric_barrier, thermal_sweep, write_comparison_csv};
use qfj_core::ChannelParams;

#[derive(Parser, Debug)]
#[command(name = "qfj", version, about = "Quantum Fick-Jacobs channel solver")]
struct Cli {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Lattice size as `MxxMy`, e.g. `50x31`.
    #[arg(long, global = true)]
    grid: Option<String>,
    #[arg(long, global = true)]
    bc: Option<BoundaryX>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Channel {
    /// Reference stiffness; overrides `--ratio`.
    #[arg(long)]
    k0: Option<f64>,
    /// Geometry `L / L_omega`; sets `k0` at fixed `L`.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long = "lambda")]
    lambda: Option<f64>,
    /// Period `L`.
    #[arg(long = "period")]
    period: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form barrier, flux correction and free-energy profile.
    Analytic {
        #[command(flatten)]
        channel: Channel,
        /// Samples of the written profile.
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// Thermal state of the lattice compared with the first-order density.
    Equilibrium {
        #[command(flatten)]
        channel: Channel,
    },
    /// Redfield steady-state current between two leads.
    Transport {
        #[command(flatten)]
        channel: Channel,
        /// Comma-separated `Lambda` values; the first is the reference for `R`.
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long)]
        z_left: Option<f64>,
        #[arg(long)]
        z_right: Option<f64>,
        /// Lead coupling; defaults to `1e-3 hbar omega`.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        method: Option<SteadyMethod>,
    },
    /// Steady state of the 2D quantum Smoluchowski equation.
    Pde {
        #[command(flatten)]
        channel: Channel,
    },
    /// Parameter sweep over one axis and several routes.
    Sweep {
        #[command(flatten)]
        channel: Channel,
        #[arg(long)]
        axis: Option<SweepAxis>,
        #[arg(long, value_delimiter = ',')]
        samples: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        routes: Vec<Route>,
        /// Geometries looped around a `Lambda` axis.
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
    },
    /// Mismatch against the first-order density on an `Mx` ladder, or along
    /// a `Lambda` scan.
    Converge {
        #[command(flatten)]
        channel: Channel,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50,100")]
        ladder: Vec<usize>,
        /// `Lambda` values for a scan at the `--grid` size instead of a ladder.
        #[arg(long, value_delimiter = ',')]
        scan: Vec<f64>,
    },
    /// Parabolic extremum of two columns of a CSV file.
    Extremum {
        input: PathBuf,
        #[arg(long, default_value = "Lambda")]
        x: String,
        #[arg(long, default_value = "dF")]
        y: String,
        #[arg(long, default_value = "max")]
        kind: String,
        /// Only rows whose `route` column equals this value.
        #[arg(long)]
        route: Option<String>,
    },
}

struct Ctx {
    kv: KeyValues,
    out: PathBuf,
    workers: usize,
    mx: usize,
    my: usize,
    bc: BoundaryX,
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("grid `{s}` is not of the form MxxMy"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let kv = match &cli.config {
            Some(p) => KeyValues::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => KeyValues::default(),
        };
        let grid = match &cli.grid {
            Some(g) => g.clone(),
            None => kv.raw("grid").unwrap_or("50x31").to_string(),
        };
        let (mx, my) = parse_grid(&grid)?;
        let bc = match cli.bc {
            Some(b) => b,
            None => kv.get_or("bc", BoundaryX::Periodic)?,
        };
        let workers = match cli.workers {
            Some(w) => w,
            None => kv.get_or("workers", 1)?,
        };
        Ok(Self {
            kv,
            out: cli.out.clone(),
            workers,
            mx,
            my,
            bc,
        })
    }

    fn merged(&self, c: &Channel) -> KeyValues {
        let mut kv = self.kv.clone();
        let mut set = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                kv.set(k, v.to_string());
            }
        };
        set("k0", c.k0);
        set("ratio", c.ratio);
        set("k1", c.k1);
        set("Lambda", c.lambda);
        set("L", c.period);
        if c.k0.is_some() {
            kv.remove("ratio");
        } else if c.ratio.is_some() {
            kv.remove("k0");
        }
        kv
    }

    /// Channel at the requested `Lambda`. `k0` comes from `k0` or from
    /// `ratio = L / L_omega` (default 16).
    fn channel(&self, c: &Channel) -> Result<ChannelParams> {
        let kv = self.merged(c);
        let period = kv.get_or("L", 1.0)?;
        let hbar = kv.get_or("hbar", 1.0)?;
        let mass = kv.get_or("mass", 1.0)?;
        let k0 = match kv.get::<f64>("k0")? {
            Some(k0) => k0,
            None => ChannelParams::k0_for_ratio(kv.get_or("ratio", 16.0)?, period, hbar, mass),
        };
        let k1 = kv.get_or("k1", 0.3)?;
        let lambda = kv.get_or("Lambda", 0.05)?;
        Ok(ChannelParams::from_lambda(k0, k1, period, lambda, hbar, mass)?)
    }

    fn lambda(&self, c: &Channel) -> Result<f64> {
        Ok(self.merged(c).get_or("Lambda", 0.05)?)
    }

    fn create(&self, name: &str) -> Result<(PathBuf, fs::File)> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok((path, f))
    }
}

fn report_validity(p: &ChannelParams) {
    let v = check_validity(p);
    for m in &v.messages {
        eprintln!("warning: {m}");
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli)?;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Analytic { channel, samples } => {
            let lambda = ctx.lambda(&channel)?;
            let kv = ctx.merged(&channel);
            let k1 = kv.get_or("k1", 0.3)?;
            let barrier = free_energy_barrier(k1, lambda)?;
            let jl = harmonic_flux_correction(k1)?;
            writeln!(stdout, "Lambda,k1,dF,J_Lambda,flux_ratio")?;
            writeln!(stdout, "{lambda:.16e},{k1:.16e},{barrier:.16e},{jl:.16e},{:.16e}", 1.0 + lambda * jl)?;
            if lambda > 0.0 {
                let p = ctx.channel(&channel)?;
                report_validity(&p);
                let (path, f) = ctx.create("profile.csv")?;
                harmonic_profile(&p, lambda, samples)?.write_csv(f)?;
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Equilibrium { channel } => {
            let p = ctx.channel(&channel)?;
            report_validity(&p);
            let lambda = ctx.lambda(&channel)?;
            let s = thermal_sweep(&p, &[lambda], ctx.mx, ctx.my, ctx.bc, None)?;
            let m = &s.marginals[0];
            let b = numeric_barrier(m)?;
            if let Some(w) = &b.warning {
                eprintln!("warning: {w}");
            }
            let rho: Vec<f64> = m.rho.iter().map(|r| r / m.norm).collect();
            let fj = fj_density_on_grid(&p, lambda, &m.x_samples, m.dx, DensityExpansion::Additive);
            let sigma = mismatch_score(&fj, &rho, m.dx)?;
            writeln!(stdout, "Lambda,dF_thermal,dF_analytic,sigma_mm,Ycut,doublings")?;
            writeln!(
                stdout,
                "{lambda:.16e},{:.16e},{:.16e},{sigma:.16e},{:.16e},{}",
                b.value,
                free_energy_barrier(p.k1, lambda)?,
                s.grid.ycut,
                s.doublings
            )?;
            let (path, f) = ctx.create("equilibrium.csv")?;
            write_comparison_csv(f, &m.x_samples, &rho, &fj)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Transport {
            channel,
            lambdas,
            z_left,
            z_right,
            gamma,
            method,
        } => {
            let kv = ctx.merged(&channel);
            let lambdas = if lambdas.is_empty() {
                kv.list("lambdas")?.unwrap_or(vec![ctx.lambda(&channel)?])
            } else {
                lambdas
            };
            let defaults = TransportConfig::default();
            let z_left = z_left.map_or_else(|| kv.get_or("z_left", defaults.z_left), Ok)?;
            let z_right = z_right.map_or_else(|| kv.get_or("z_right", defaults.z_right), Ok)?;
            let gamma = gamma.or(kv.get("gamma")?);
            let method = method.or(kv.get("method")?);
            let p0 = ctx.channel(&Channel {
                lambda: Some(lambdas[0]),
                ..channel.clone()
            })?;
            report_validity(&p0);
            let gamma = gamma.unwrap_or_else(|| default_gamma(&p0));
            let g = build_grid(&p0, ctx.mx, ctx.my, BoundaryX::Open, None)?;
            let h = assemble_hamiltonian(&g, &p0);
            let eig = diagonalize(&h)?;
            let method = method.unwrap_or(if g.len() <= DIRECT_LIMIT {
                SteadyMethod::Direct
            } else {
                SteadyMethod::Lyapunov
            });
            let opts = SteadyOptions {
                method,
                threshold: default_threshold(gamma, p0.hbar),
                max_iterations: 200,
            };
            let mut rows = Vec::new();
            let mut j_ref = None;
            for &lambda in &lambdas {
                let beta = p0.with_lambda(lambda)?.beta;
                let left = LeadSpec::from_fugacity(Side::Left, z_left, gamma, beta)?;
                let right = LeadSpec::from_fugacity(Side::Right, z_right, gamma, beta)?;
                let setup = transport_setup(&g, &h, &eig, p0.hbar, left, right)?;
                let s = setup.solve(&opts)?;
                let j = setup.current(&s)?;
                let j0 = *j_ref.get_or_insert(j);
                rows.push(TransportRow {
                    lambda,
                    lx_over_lomega: p0.geometry_ratio(),
                    k1: p0.k1,
                    j_num: j,
                    r: j / j0,
                    residual: s.residual,
                    method: s.method,
                    iterations: s.iterations,
                });
            }
            write_transport_csv(&mut stdout, &rows)?;
            let (path, f) = ctx.create("transport.csv")?;
            write_transport_csv(f, &rows)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Pde { channel } => {
            let p = ctx.channel(&channel)?;
            report_validity(&p);
            let lambda = ctx.lambda(&channel)?;
            let field = solve_steady_2d(&p, lambda, ctx.mx, ctx.my | 1, None)?;
            let m = field.marginal();
            let fj = fj_density_on_grid(&p, lambda, &field.grid.xs(), field.grid.dx, DensityExpansion::Multiplicative);
            let max_rel = m
                .iter()
                .zip(&fj)
                .map(|(a, b)| ((a - b) / b).abs())
                .fold(0.0, f64::max);
            writeln!(stdout, "Lambda,max_rel_err_vs_fj,steps,mass_drift,flux_ratio")?;
            writeln!(
                stdout,
                "{lambda:.16e},{max_rel:.16e},{},{:.16e},{:.16e}",
                field.stats.steps, field.stats.mass_drift, field.stats.flux_ratio
            )?;
            let (path, f) = ctx.create("pde_field.csv")?;
            field.write_field_csv(std::io::BufWriter::new(f))?;
            eprintln!("wrote {}", path.display());
            let (path, f) = ctx.create("pde_marginal.csv")?;
            field.write_marginal_csv(f)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Sweep {
            channel,
            axis,
            samples,
            routes,
            ratios,
        } => {
            let kv = ctx.merged(&channel);
            let base = ctx.channel(&channel)?;
            let axis = match axis {
                Some(a) => a,
                None => kv.get_or("axis", SweepAxis::Lambda)?,
            };
            let samples = if samples.is_empty() {
                kv.list("samples")?.context("no samples given (--samples or `samples` key)")?
            } else {
                samples
            };
            let routes = if routes.is_empty() {
                kv.list("routes")?.unwrap_or(vec![Route::Analytic])
            } else {
                routes
            };
            let ratios = if ratios.is_empty() {
                kv.list("ratios")?.unwrap_or_default()
            } else {
                ratios
            };
            let defaults = TransportConfig::default();
            let mut cfg = SweepConfig::new(base, axis, samples, routes);
            cfg.lambda = ctx.lambda(&channel)?;
            cfg.ratios = ratios;
            cfg.mx = ctx.mx;
            cfg.my = ctx.my;
            cfg.bc = ctx.bc;
            cfg.workers = ctx.workers;
            cfg.out_dir = Some(ctx.out.clone());
            cfg.transport = TransportConfig {
                gamma: kv.get("gamma")?,
                z_left: kv.get_or("z_left", defaults.z_left)?,
                z_right: kv.get_or("z_right", defaults.z_right)?,
                method: kv.get("method")?,
            };
            let rows = run_sweep(&cfg)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            let (path, f) = ctx.create("sweep.csv")?;
            write_sweep_csv(std::io::BufWriter::new(f), &rows)?;
            eprintln!("wrote {} ({} rows, {failed} with errors or warnings)", path.display(), rows.len());
            for s in emit_plot_scripts(&ctx.out, &rows)? {
                eprintln!("wrote {}", s.display());
            }
        }
        Command::Converge { channel, ladder, scan } => {
            let p = ctx.channel(&channel)?;
            let lambda = ctx.lambda(&channel)?;
            let rows = if scan.is_empty() {
                convergence_study(&p, lambda, &ladder, ctx.my, ctx.bc, DensityExpansion::Additive)?
            } else {
                mismatch_scan(&p, &scan, ctx.mx, ctx.my, ctx.bc, DensityExpansion::Additive)?
            };
            write_mismatch_csv(&mut stdout, &rows)?;
            let (path, f) = ctx.create(if scan.is_empty() { "convergence.csv" } else { "mismatch_scan.csv" })?;
            write_mismatch_csv(f, &rows)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Extremum {
            input,
            x,
            y,
            kind,
            route,
        } => {
            let kind = match kind.as_str() {
                "max" => ExtremumKind::Max,
                "min" => ExtremumKind::Min,
                other => bail!("kind must be max or min, got `{other}`"),
            };
            let (xs, ys) = read_columns(&input, &x, &y, route.as_deref())?;
            let e = locate_extremum(&xs, &ys, kind)?;
            writeln!(stdout, "Lambda_M,value,std_error,window_lo,window_hi,fit_residual")?;
            writeln!(
                stdout,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                e.lambda_m, e.value, e.std_error, e.window.0, e.window.1, e.fit_residual
            )?;
        }
    }
    Ok(())
}

fn read_columns(path: &Path, x: &str, y: &str, route: Option<&str>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| qfj_core::Error::MissingColumn(name.to_string()).into())
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let ir = route.map(|_| col("route")).transpose()?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if let (Some(i), Some(want)) = (ir, route) {
            if &rec[i] != want {
                continue;
            }
        }
        if rec[iy].is_empty() {
            continue;
        }
        xs.push(rec[ix].parse()?);
        ys.push(rec[iy].parse()?);
    }
    Ok((xs, ys))
}
