//! Parameter sweeps across the analytic, thermal, transport and PDE routes,
//! extremum location, scaling fits, convergence studies and figure tables.
//!
//! Output is deterministic: rows are ordered by point index and route, and
//! every float is written with 17 significant digits. With an output
//! directory set, finished rows and spectra are cached on disk so an
//! interrupted sweep resumes where it stopped.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::fick_jacobs::{free_energy_barrier, harmonic_flux_correction, DensityExpansion};
use crate::grid::{assemble_hamiltonian, build_grid, BoundaryX};
use crate::model::{check_validity, ChannelParams};
use crate::redfield::{default_gamma, default_threshold, transport_setup, LeadSpec, Side, SteadyMethod, SteadyOptions, DIRECT_LIMIT};
use crate::smoluchowski::solve_steady_2d;
use crate::spectrum::{cache_key, diagonalize, diagonalize_cached};
use crate::thermal::{fj_density_on_grid, mismatch_score, numeric_barrier, thermal_sweep_cached, MarginalDensity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Lambda,
    /// Samples are `L / L_omega`; `k0` follows at fixed `L`.
    Geometry,
    K1,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lambda => "Lambda",
            Self::Geometry => "geometry",
            Self::K1 => "k1",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Lambda" | "lambda" => Ok(Self::Lambda),
            "geometry" => Ok(Self::Geometry),
            "k1" => Ok(Self::K1),
            other => Err(invalid("axis", format!("expected Lambda, geometry or k1, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Route {
    Analytic,
    Thermal,
    Redfield,
    Pde,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Analytic => "analytic",
            Self::Thermal => "thermal",
            Self::Redfield => "redfield",
            Self::Pde => "pde",
        })
    }
}

impl FromStr for Route {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "thermal" => Ok(Self::Thermal),
            "redfield" => Ok(Self::Redfield),
            "pde" => Ok(Self::Pde),
            other => Err(invalid("route", format!("unknown route `{other}`"))),
        }
    }
}

/// Lead settings for the transport route. The bias is fixed in fugacity,
/// so `z_left - z_right` does not change along a `Lambda` sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportConfig {
    /// `None` uses [`default_gamma`] of each geometry.
    pub gamma: Option<f64>,
    pub z_left: f64,
    pub z_right: f64,
    /// `None` picks the direct solver up to its size limit, Lyapunov above.
    pub method: Option<SteadyMethod>,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            z_left: 1.04e-3,
            z_right: 1e-3,
            method: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// `k0`, `k1`, `L`, `hbar`, `mass`; `beta` is derived per point.
    pub base: ChannelParams,
    pub axis: SweepAxis,
    pub samples: Vec<f64>,
    /// `Lambda` used when the axis is not `Lambda`.
    pub lambda: f64,
    /// Extra `L / L_omega` values looped around a `Lambda` axis (one curve
    /// per geometry). Empty means the base `k0` only.
    pub ratios: Vec<f64>,
    pub routes: Vec<Route>,
    pub mx: usize,
    pub my: usize,
    pub bc: BoundaryX,
    pub transport: TransportConfig,
    pub out_dir: Option<PathBuf>,
    pub workers: usize,
}

impl SweepConfig {
    pub fn new(base: ChannelParams, axis: SweepAxis, samples: Vec<f64>, routes: Vec<Route>) -> Self {
        Self {
            base,
            axis,
            samples,
            lambda: base.scales().lambda,
            ratios: Vec::new(),
            routes,
            mx: 50,
            my: 31,
            bc: BoundaryX::Periodic,
            transport: TransportConfig::default(),
            out_dir: None,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(invalid("samples", "empty sample list"));
        }
        if self.samples.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("samples", "must be strictly increasing"));
        }
        if self.routes.is_empty() {
            return Err(invalid("routes", "no route selected"));
        }
        if self.ratios.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("ratios", "must be strictly increasing"));
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least one"));
        }
        Ok(())
    }

    /// Expands the axis into concrete points.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        self.validate()?;
        let b = &self.base;
        let ratio_of = |k0: f64| b.with_beta(1.0).map(|p| ChannelParams { k0, ..p }.geometry_ratio());
        let mut out = Vec::new();
        match self.axis {
            SweepAxis::Lambda => {
                let k0s: Vec<f64> = if self.ratios.is_empty() {
                    vec![b.k0]
                } else {
                    self.ratios
                        .iter()
                        .map(|&r| ChannelParams::k0_for_ratio(r, b.period, b.hbar, b.mass))
                        .collect()
                };
                for k0 in k0s {
                    let ratio = ratio_of(k0)?;
                    for &lambda in &self.samples {
                        out.push(SweepPoint {
                            index: out.len(),
                            k0,
                            k1: b.k1,
                            lambda,
                            ratio,
                        });
                    }
                }
            }
            SweepAxis::Geometry => {
                for &ratio in &self.samples {
                    out.push(SweepPoint {
                        index: out.len(),
                        k0: ChannelParams::k0_for_ratio(ratio, b.period, b.hbar, b.mass),
                        k1: b.k1,
                        lambda: self.lambda,
                        ratio,
                    });
                }
            }
            SweepAxis::K1 => {
                let ratio = ratio_of(b.k0)?;
                for &k1 in &self.samples {
                    out.push(SweepPoint {
                        index: out.len(),
                        k0: b.k0,
                        k1,
                        lambda: self.lambda,
                        ratio,
                    });
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub k0: f64,
    pub k1: f64,
    pub lambda: f64,
    /// `L / L_omega`.
    pub ratio: f64,
}

impl SweepPoint {
    /// Parameters at this point. `Lambda = 0` has no finite temperature and
    /// is rejected here; only the analytic route accepts it.
    pub fn params(&self, base: &ChannelParams) -> Result<ChannelParams> {
        ChannelParams::from_lambda(self.k0, self.k1, base.period, self.lambda, base.hbar, base.mass)
    }

    fn geometry_key(&self) -> (u64, u64) {
        (self.k0.to_bits(), self.k1.to_bits())
    }
}

/// One CSV row: a (point, route) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub route: Route,
    /// `beta Delta F`.
    pub d_f: Option<f64>,
    /// Particle current (transport route).
    pub flux: Option<f64>,
    /// `J(Lambda) / J(Lambda_ref)`; analytic rows carry `1 + Lambda J_Lambda`.
    pub flux_ratio: Option<f64>,
    pub valid: bool,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: &str = "index,route,Lambda,k1,L_over_Lomega,k0,dF,J,flux_ratio,valid,error";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn clean(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        let p = &r.point;
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{},{}",
            p.index,
            r.route,
            p.lambda,
            p.k1,
            p.ratio,
            p.k0,
            opt(r.d_f),
            opt(r.flux),
            opt(r.flux_ratio),
            r.valid,
            r.error.as_deref().map(clean).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Partial result before reference ratios are applied.
#[derive(Debug, Clone, PartialEq)]
struct Cell {
    d_f: Option<f64>,
    flux: Option<f64>,
    error: Option<String>,
}

impl Cell {
    fn ok(d_f: Option<f64>, flux: Option<f64>) -> Self {
        Self { d_f, flux, error: None }
    }

    fn err(e: impl ToString) -> Self {
        Self {
            d_f: None,
            flux: None,
            error: Some(e.to_string()),
        }
    }

    fn encode(&self) -> String {
        format!(
            "{},{},{}\n",
            opt(self.d_f),
            opt(self.flux),
            self.error.as_deref().map(clean).unwrap_or_default()
        )
    }

    fn decode(s: &str) -> Option<Self> {
        let mut it = s.trim_end_matches('\n').splitn(3, ',');
        let num = |t: &str| -> Option<Option<f64>> {
            if t.is_empty() {
                Some(None)
            } else {
                t.parse().ok().map(Some)
            }
        };
        let d_f = num(it.next()?)?;
        let flux = num(it.next()?)?;
        let e = it.next()?;
        Some(Self {
            d_f,
            flux,
            error: (!e.is_empty()).then(|| e.to_string()),
        })
    }
}

struct RowCache {
    dir: Option<PathBuf>,
}

impl RowCache {
    fn key(cfg: &SweepConfig, route: Route, p: &SweepPoint) -> String {
        let b = &cfg.base;
        let mut text = format!(
            "route={route};k0={:e};k1={:e};Lambda={:e};L={:e};hbar={:e};mass={:e}",
            p.k0, p.k1, p.lambda, b.period, b.hbar, b.mass
        );
        if route != Route::Analytic {
            text.push_str(&format!(";mx={};my={}", cfg.mx, cfg.my));
        }
        match route {
            Route::Thermal => text.push_str(&format!(";bc={}", cfg.bc)),
            Route::Redfield => {
                let t = &cfg.transport;
                text.push_str(&format!(
                    ";gamma={:?};zl={:e};zr={:e};method={:?}",
                    t.gamma, t.z_left, t.z_right, t.method
                ));
            }
            _ => {}
        }
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.row")))
    }

    fn get(&self, key: &str) -> Option<Cell> {
        fs::read_to_string(self.path(key)?).ok().and_then(|s| Cell::decode(&s))
    }

    fn put(&self, key: &str, cell: &Cell) -> Result<()> {
        if let Some(path) = self.path(key) {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, cell.encode())?;
            fs::rename(tmp, path)?;
        }
        Ok(())
    }
}

/// Runs every (point, route) pair. Failures are stored in the row's error
/// column and the sweep carries on.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    let points = cfg.points()?;
    let cache_root = cfg.out_dir.as_ref().map(|d| d.join("cache"));
    let rows_dir = cache_root.as_ref().map(|d| d.join("rows"));
    let spec_dir = cache_root.as_ref().map(|d| d.join("spectra"));
    for d in rows_dir.iter().chain(spec_dir.iter()) {
        fs::create_dir_all(d)?;
    }
    let cache = RowCache { dir: rows_dir };

    // Work units: analytic and PDE per point, thermal and transport per geometry.
    let mut groups: BTreeMap<(u64, u64), Vec<SweepPoint>> = BTreeMap::new();
    for p in &points {
        groups.entry(p.geometry_key()).or_default().push(*p);
    }
    let mut units: Vec<(Route, Vec<SweepPoint>)> = Vec::new();
    let mut routes = cfg.routes.clone();
    routes.sort();
    routes.dedup();
    for &route in &routes {
        match route {
            Route::Analytic | Route::Pde => units.extend(points.iter().map(|p| (route, vec![*p]))),
            Route::Thermal | Route::Redfield => units.extend(groups.values().map(|g| (route, g.clone()))),
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| invalid("workers", e.to_string()))?;
    let spec_dir = spec_dir.as_deref();
    let results: Vec<Vec<(Route, SweepPoint, Cell)>> = pool.install(|| {
        units
            .par_iter()
            .map(|(route, pts)| {
                let keys: Vec<String> = pts.iter().map(|p| RowCache::key(cfg, *route, p)).collect();
                let cached: Option<Vec<Cell>> = keys.iter().map(|k| cache.get(k)).collect();
                let cells = match cached {
                    Some(c) => c,
                    None => {
                        let c = run_unit(cfg, *route, pts, spec_dir);
                        for (k, cell) in keys.iter().zip(&c) {
                            // A failed cache write only costs a recomputation.
                            let _ = cache.put(k, cell);
                        }
                        c
                    }
                };
                pts.iter().zip(cells).map(|(p, c)| (*route, *p, c)).collect()
            })
            .collect()
    });

    let mut rows: Vec<SweepRow> = results
        .into_iter()
        .flatten()
        .map(|(route, point, cell)| SweepRow {
            valid: point.lambda == 0.0 || point.params(&cfg.base).map(|p| check_validity(&p).all_ok()).unwrap_or(false),
            point,
            route,
            d_f: cell.d_f,
            flux: cell.flux,
            flux_ratio: None,
            error: cell.error,
        })
        .collect();
    rows.sort_by_key(|r| (r.point.index, r.route));
    apply_flux_ratios(&mut rows);
    Ok(rows)
}

fn run_unit(cfg: &SweepConfig, route: Route, pts: &[SweepPoint], spec_dir: Option<&Path>) -> Vec<Cell> {
    match route {
        Route::Analytic => pts.iter().map(analytic_cell).collect(),
        Route::Pde => pts.iter().map(|p| pde_cell(cfg, p)).collect(),
        Route::Thermal => thermal_cells(cfg, pts, spec_dir).unwrap_or_else(|e| pts.iter().map(|_| Cell::err(&e)).collect()),
        Route::Redfield => redfield_cells(cfg, pts, spec_dir).unwrap_or_else(|e| pts.iter().map(|_| Cell::err(&e)).collect()),
    }
}

fn analytic_cell(p: &SweepPoint) -> Cell {
    match free_energy_barrier(p.k1, p.lambda) {
        Ok(v) => Cell::ok(Some(v), None),
        Err(e) => Cell::err(e),
    }
}

fn pde_cell(cfg: &SweepConfig, pt: &SweepPoint) -> Cell {
    let run = || -> Result<f64> {
        let p = pt.params(&cfg.base)?;
        let my = cfg.my | 1;
        let f = solve_steady_2d(&p, pt.lambda, cfg.mx, my, None)?;
        let m = f.marginal();
        let max = m.iter().copied().fold(f64::MIN, f64::max);
        let min = m.iter().copied().fold(f64::MAX, f64::min);
        Ok((max / min).ln())
    };
    match run() {
        Ok(v) => Cell::ok(Some(v), None),
        Err(e) => Cell::err(e),
    }
}

fn thermal_cells(cfg: &SweepConfig, pts: &[SweepPoint], spec_dir: Option<&Path>) -> Result<Vec<Cell>> {
    let base = ChannelParams::new(pts[0].k0, pts[0].k1, cfg.base.period, 1.0, cfg.base.hbar, cfg.base.mass)?;
    let lambdas: Vec<f64> = pts.iter().map(|p| p.lambda).collect();
    let sweep = thermal_sweep_cached(&base, &lambdas, cfg.mx, cfg.my, cfg.bc, None, spec_dir)?;
    Ok(sweep
        .marginals
        .iter()
        .map(|m| match numeric_barrier(m) {
            Ok(b) => Cell {
                d_f: Some(b.value),
                flux: None,
                error: b.warning,
            },
            Err(e) => Cell::err(e),
        })
        .collect())
}

fn redfield_cells(cfg: &SweepConfig, pts: &[SweepPoint], spec_dir: Option<&Path>) -> Result<Vec<Cell>> {
    let smallest = pts.iter().map(|p| p.lambda).fold(f64::INFINITY, f64::min);
    let first = SweepPoint { lambda: smallest, ..pts[0] };
    let p_ref = first.params(&cfg.base)?;
    let g = build_grid(&p_ref, cfg.mx, cfg.my, BoundaryX::Open, None)?;
    let h = assemble_hamiltonian(&g, &p_ref);
    let eig = match spec_dir {
        Some(dir) => diagonalize_cached(&h, dir, &cache_key(&g, p_ref.k0, p_ref.k1, p_ref.hbar, p_ref.mass))?,
        None => diagonalize(&h)?,
    };
    let t = cfg.transport;
    let gamma = t.gamma.unwrap_or_else(|| default_gamma(&p_ref));
    let method = t.method.unwrap_or(if g.len() <= DIRECT_LIMIT {
        SteadyMethod::Direct
    } else {
        SteadyMethod::Lyapunov
    });
    let opts = SteadyOptions {
        method,
        threshold: default_threshold(gamma, cfg.base.hbar),
        max_iterations: 200,
    };
    Ok(pts
        .iter()
        .map(|pt| {
            let run = || -> Result<f64> {
                let beta = pt.params(&cfg.base)?.beta;
                let left = LeadSpec::from_fugacity(Side::Left, t.z_left, gamma, beta)?;
                let right = LeadSpec::from_fugacity(Side::Right, t.z_right, gamma, beta)?;
                let setup = transport_setup(&g, &h, &eig, cfg.base.hbar, left, right)?;
                let s = setup.solve(&opts)?;
                setup.current(&s)
            };
            match run() {
                Ok(j) => Cell::ok(None, Some(j)),
                Err(e) => Cell::err(e),
            }
        })
        .collect())
}

fn apply_flux_ratios(rows: &mut [SweepRow]) {
    let mut j_lambda: BTreeMap<u64, Option<f64>> = BTreeMap::new();
    let mut reference: BTreeMap<(u64, u64), (f64, f64)> = BTreeMap::new();
    for r in rows.iter() {
        if r.route == Route::Redfield {
            if let Some(j) = r.flux {
                let e = reference.entry(r.point.geometry_key()).or_insert((f64::INFINITY, j));
                if r.point.lambda < e.0 {
                    *e = (r.point.lambda, j);
                }
            }
        }
    }
    for r in rows.iter_mut() {
        match r.route {
            Route::Analytic => {
                let jl = *j_lambda
                    .entry(r.point.k1.to_bits())
                    .or_insert_with(|| harmonic_flux_correction(r.point.k1).ok());
                r.flux_ratio = jl.map(|j| 1.0 + r.point.lambda * j);
            }
            Route::Redfield => {
                if let (Some(j), Some((_, j0))) = (r.flux, reference.get(&r.point.geometry_key())) {
                    r.flux_ratio = Some(j / j0);
                }
            }
            _ => {}
        }
    }
}

// ---------------------------------------------------------------------------
// Extremum and fits

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremumResult {
    pub lambda_m: f64,
    pub value: f64,
    /// First and last abscissa of the five-point fit window.
    pub window: (f64, f64),
    pub kind: ExtremumKind,
    /// Root-mean-square residual of the parabola.
    pub fit_residual: f64,
    /// Standard error of the vertex from the fit covariance.
    pub std_error: f64,
}

/// Least-squares parabola through the five samples around the discrete
/// extremum; `Lambda_M` is its vertex.
pub fn locate_extremum(xs: &[f64], ys: &[f64], kind: ExtremumKind) -> Result<ExtremumResult> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let n = xs.len();
    if n < 5 {
        return Err(invalid("samples", "need at least five points"));
    }
    let sign = if kind == ExtremumKind::Max { 1.0 } else { -1.0 };
    let best = (0..n)
        .max_by(|&a, &b| (sign * ys[a]).total_cmp(&(sign * ys[b])))
        .expect("non-empty");
    if best == 0 || best == n - 1 {
        return Err(Error::NoInteriorExtremum);
    }
    let start = best.saturating_sub(2).min(n - 5);
    let wx = &xs[start..start + 5];
    let wy = &ys[start..start + 5];
    let c = wx[2];
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&x, &y) in wx.iter().zip(wy) {
        let t = x - c;
        let row = Vector3::new(t * t, t, 1.0);
        ata += row * row.transpose();
        aty += row * y;
    }
    let inv = ata.try_inverse().ok_or(Error::DegenerateAbscissae)?;
    let coef = inv * aty;
    let (a, b, c0) = (coef[0], coef[1], coef[2]);
    if !(sign * a < 0.0) {
        return Err(Error::NoInteriorExtremum);
    }
    let vertex = c - b / (2.0 * a);
    if !(vertex > xs[0] && vertex < xs[n - 1]) {
        return Err(Error::NoInteriorExtremum);
    }
    let ssr: f64 = wx
        .iter()
        .zip(wy)
        .map(|(&x, &y)| {
            let t = x - c;
            (y - (a * t * t + b * t + c0)).powi(2)
        })
        .sum();
    let s2 = ssr / 2.0;
    let grad = Vector3::new(b / (2.0 * a * a), -1.0 / (2.0 * a), 0.0);
    let var = (grad.transpose() * inv * grad)[(0, 0)] * s2;
    let t = vertex - c;
    Ok(ExtremumResult {
        lambda_m: vertex,
        value: a * t * t + b * t + c0,
        window: (wx[0], wx[4]),
        kind,
        fit_residual: (ssr / 5.0).sqrt(),
        std_error: var.max(0.0).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_error: f64,
    /// Ordinates strictly increasing with the abscissae.
    pub monotone: bool,
}

pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(invalid("points", "need at least three points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::DegenerateAbscissae);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ScalingFit {
        slope,
        intercept,
        r2,
        slope_error: (ssr / (n - 2.0) / sxx).sqrt(),
        monotone: sorted.windows(2).all(|w| w[1].1 > w[0].1),
    })
}

// ---------------------------------------------------------------------------
// Mismatch and convergence

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchRow {
    pub n: usize,
    pub lambda: f64,
    /// `sum (rho_FJ - rho_num)^2 / rho_num^2 dx`.
    pub sigma_mm: f64,
    /// `max |rho_FJ - rho_num| / rho_num`.
    pub max_rel_err: f64,
}

pub const MISMATCH_HEADER: &str = "N,Lambda,sigma_mm,max_rel_err";

fn mismatch_of(p: &ChannelParams, lambda: f64, m: &MarginalDensity, form: DensityExpansion) -> Result<(f64, f64)> {
    let fj = fj_density_on_grid(p, lambda, &m.x_samples, m.dx, form);
    let rho: Vec<f64> = m.rho.iter().map(|r| r / m.norm).collect();
    let sigma = mismatch_score(&fj, &rho, m.dx)?;
    let max = fj
        .iter()
        .zip(&rho)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);
    Ok((sigma, max))
}

/// `sigma_mm` against the first-order density for each `N = Mx` of the
/// ladder at fixed `My`.
pub fn convergence_study(
    base: &ChannelParams,
    lambda: f64,
    ladder: &[usize],
    my: usize,
    bc: BoundaryX,
    form: DensityExpansion,
) -> Result<Vec<MismatchRow>> {
    ladder
        .iter()
        .map(|&n| {
            let s = thermal_sweep_cached(base, &[lambda], n, my, bc, None, None)?;
            let (sigma_mm, max_rel_err) = mismatch_of(base, lambda, &s.marginals[0], form)?;
            Ok(MismatchRow {
                n,
                lambda,
                sigma_mm,
                max_rel_err,
            })
        })
        .collect()
}

/// Mismatch along a `Lambda` sweep on one grid (one diagonalization).
pub fn mismatch_scan(
    base: &ChannelParams,
    lambdas: &[f64],
    mx: usize,
    my: usize,
    bc: BoundaryX,
    form: DensityExpansion,
) -> Result<Vec<MismatchRow>> {
    let s = thermal_sweep_cached(base, lambdas, mx, my, bc, None, None)?;
    lambdas
        .iter()
        .zip(&s.marginals)
        .map(|(&lambda, m)| {
            let (sigma_mm, max_rel_err) = mismatch_of(base, lambda, m, form)?;
            Ok(MismatchRow {
                n: mx,
                lambda,
                sigma_mm,
                max_rel_err,
            })
        })
        .collect()
}

/// First `Lambda` at which `value(row)` reaches `level`, linearly
/// interpolated between samples. `None` if it never does.
pub fn crossing(rows: &[MismatchRow], level: f64, value: impl Fn(&MismatchRow) -> f64) -> Option<f64> {
    if rows.first().map(|r| value(r) >= level).unwrap_or(false) {
        return Some(rows[0].lambda);
    }
    rows.windows(2).find_map(|w| {
        let (a, b) = (value(&w[0]), value(&w[1]));
        (a < level && b >= level).then(|| w[0].lambda + (level - a) / (b - a) * (w[1].lambda - w[0].lambda))
    })
}

pub fn write_mismatch_csv<W: Write>(mut w: W, rows: &[MismatchRow]) -> Result<()> {
    writeln!(w, "{MISMATCH_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{:.16e},{:.16e},{:.16e}", r.n, r.lambda, r.sigma_mm, r.max_rel_err)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Figure tables and plot scripts

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Barrier against `Lambda`.
    Barrier,
    /// Flux ratio against `Lambda`.
    FluxRatio,
    /// `Lambda_M` against `L^2 / L_omega^2`.
    Crossover,
}

impl Figure {
    pub fn stem(self) -> &'static str {
        match self {
            Self::Barrier => "fig2_barrier",
            Self::FluxRatio => "fig5_flux_ratio",
            Self::Crossover => "fig3_lambda_m",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::Barrier => &["Lambda", "dF_thermal", "dF_analytic"],
            Self::FluxRatio => &["Lambda", "flux_ratio"],
            Self::Crossover => &["Lx2_over_Lomega2", "Lambda_M"],
        }
    }
}

fn curve_key(r: &SweepRow) -> (u64, u64) {
    r.point.geometry_key()
}

/// `L_over_Lomega,k1,Lambda,dF_thermal,dF_analytic`.
pub fn write_barrier_table<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "L_over_Lomega,k1,Lambda,dF_thermal,dF_analytic")?;
    for r in rows.iter().filter(|r| r.route == Route::Thermal) {
        let p = &r.point;
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{},{:.16e}",
            p.ratio,
            p.k1,
            p.lambda,
            opt(r.d_f),
            free_energy_barrier(p.k1, p.lambda)?
        )?;
    }
    Ok(())
}

/// `L_over_Lomega,k1,Lambda,flux_ratio,flux_ratio_analytic`.
pub fn write_flux_table<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "L_over_Lomega,k1,Lambda,flux_ratio,flux_ratio_analytic")?;
    let mut jl: BTreeMap<u64, f64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.route == Route::Redfield) {
        let p = &r.point;
        let j = match jl.get(&p.k1.to_bits()) {
            Some(v) => *v,
            None => *jl.entry(p.k1.to_bits()).or_insert(harmonic_flux_correction(p.k1)?),
        };
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{},{:.16e}",
            p.ratio,
            p.k1,
            p.lambda,
            opt(r.flux_ratio),
            1.0 + p.lambda * j
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverPoint {
    pub ratio: f64,
    pub k1: f64,
    pub extremum: std::result::Result<ExtremumResult, String>,
}

/// Barrier maximum for every thermal curve in `rows`.
pub fn crossover_points(rows: &[SweepRow]) -> Vec<CrossoverPoint> {
    let mut curves: BTreeMap<(u64, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.route == Route::Thermal) {
        curves.entry(curve_key(r)).or_default().push(r);
    }
    let mut out: Vec<CrossoverPoint> = curves
        .values()
        .map(|c| {
            let pts: Vec<(f64, f64)> = c.iter().filter_map(|r| r.d_f.map(|v| (r.point.lambda, v))).collect();
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            CrossoverPoint {
                ratio: c[0].point.ratio,
                k1: c[0].point.k1,
                extremum: locate_extremum(&xs, &ys, ExtremumKind::Max).map_err(|e| e.to_string()),
            }
        })
        .collect();
    out.sort_by(|a, b| (a.ratio, a.k1).partial_cmp(&(b.ratio, b.k1)).expect("finite"));
    out
}

/// `Lx2_over_Lomega2,k1,Lambda_M,Lambda_M_err,error`.
pub fn write_crossover_table<W: Write>(mut w: W, points: &[CrossoverPoint]) -> Result<()> {
    writeln!(w, "Lx2_over_Lomega2,k1,Lambda_M,Lambda_M_err,error")?;
    for c in points {
        match &c.extremum {
            Ok(e) => writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},",
                c.ratio * c.ratio,
                c.k1,
                e.lambda_m,
                e.std_error
            )?,
            Err(msg) => writeln!(w, "{:.16e},{:.16e},,,{}", c.ratio * c.ratio, c.k1, clean(msg))?,
        }
    }
    Ok(())
}

fn read_header(csv: &Path) -> Result<Vec<String>> {
    let f = fs::File::open(csv)?;
    let mut line = String::new();
    std::io::BufReader::new(f).read_line(&mut line)?;
    Ok(line.trim_end().split(',').map(str::to_string).collect())
}

/// Writes a gnuplot script next to `csv` plotting the figure's columns.
/// Running it is up to the user.
pub fn emit_plot_script(figure: Figure, csv: &Path) -> Result<PathBuf> {
    let header = read_header(csv)?;
    let cols = figure.columns();
    for c in cols {
        if !header.iter().any(|h| h == c) {
            return Err(Error::MissingColumn(c.to_string()));
        }
    }
    let name = csv
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| invalid("csv", "path has no file name"))?;
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset key autotitle columnhead\n");
    s.push_str(&format!("set terminal pngcairo size 800,600\nset output '{}.png'\n", figure.stem()));
    s.push_str(&format!("set xlabel '{}'\n", cols[0]));
    let series: Vec<String> = cols[1..]
        .iter()
        .map(|c| format!("'{name}' using (column('{}')):(column('{c}')) with linespoints title '{c}'", cols[0]))
        .collect();
    s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
    let out = csv.with_file_name(format!("{}.gp", figure.stem()));
    fs::write(&out, s)?;
    Ok(out)
}

/// Writes the figure tables and scripts that `rows` support into `dir`.
/// Returns the scripts written.
pub fn emit_plot_scripts(dir: &Path, rows: &[SweepRow]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut scripts = Vec::new();
    if rows.iter().any(|r| r.route == Route::Thermal) {
        let csv = dir.join(format!("{}.csv", Figure::Barrier.stem()));
        write_barrier_table(fs::File::create(&csv)?, rows)?;
        scripts.push(emit_plot_script(Figure::Barrier, &csv)?);
        let cross = crossover_points(rows);
        if cross.len() >= 2 {
            let csv = dir.join(format!("{}.csv", Figure::Crossover.stem()));
            write_crossover_table(fs::File::create(&csv)?, &cross)?;
            scripts.push(emit_plot_script(Figure::Crossover, &csv)?);
        }
    }
    if rows.iter().any(|r| r.route == Route::Redfield) {
        let csv = dir.join(format!("{}.csv", Figure::FluxRatio.stem()));
        write_flux_table(fs::File::create(&csv)?, rows)?;
        scripts.push(emit_plot_script(Figure::FluxRatio, &csv)?);
    }
    Ok(scripts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> ChannelParams {
        ChannelParams::from_lambda(400.0, 0.3, 1.0, 0.05, 1.0, 1.0).unwrap()
    }

    #[test]
    fn analytic_sweep_is_the_closed_form() {
        let cfg = SweepConfig::new(base(), SweepAxis::Lambda, vec![0.0, 0.1, 0.2, 0.5], vec![Route::Analytic]);
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        let c = 0.5 * (1.3f64 / 0.7).ln();
        for r in &rows {
            assert_relative_eq!(r.d_f.unwrap(), c + 1.2 * r.point.lambda, epsilon = 1e-14);
            assert!(r.error.is_none());
        }
        assert_relative_eq!(c, 0.3095196042031118, epsilon = 1e-15);
    }

    #[test]
    fn failed_point_keeps_its_row() {
        let mut cfg = SweepConfig::new(base(), SweepAxis::K1, vec![0.1, 1.5], vec![Route::Analytic]);
        cfg.lambda = 0.1;
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].error.is_none());
        assert!(rows[1].error.is_some() && rows[1].d_f.is_none());
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.split(',').count() == 11));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SweepConfig::new(base(), SweepAxis::Lambda, vec![0.2, 0.1], vec![Route::Analytic]);
        assert!(cfg.validate().is_err());
        cfg.samples = vec![0.1, 0.2];
        cfg.routes.clear();
        assert!(cfg.validate().is_err());
        cfg.routes = vec![Route::Thermal];
        cfg.samples.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parabola_vertex() {
        let xs: Vec<f64> = (0..9).map(|i| 0.1 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -(x - 0.4f64).powi(2)).collect();
        let e = locate_extremum(&xs, &ys, ExtremumKind::Max).unwrap();
        assert_relative_eq!(e.lambda_m, 0.4, epsilon = 1e-12);
        assert!(e.std_error < 1e-10);
        let ys: Vec<f64> = xs.iter().map(|x| (x - 0.37f64).powi(2) + 1.0).collect();
        let e = locate_extremum(&xs, &ys, ExtremumKind::Min).unwrap();
        assert_relative_eq!(e.lambda_m, 0.37, epsilon = 1e-12);
        assert_relative_eq!(e.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn monotone_has_no_extremum() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(locate_extremum(&xs, &ys, ExtremumKind::Max), Err(Error::NoInteriorExtremum)));
        assert!(locate_extremum(&xs[..4], &ys[..4], ExtremumKind::Max).is_err());
    }

    #[test]
    fn line_fit() {
        let f = scaling_fit(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]).unwrap();
        assert_relative_eq!(f.slope, 2.0, epsilon = 1e-14);
        assert_relative_eq!(f.intercept, 1.0, epsilon = 1e-14);
        assert_relative_eq!(f.r2, 1.0, epsilon = 1e-14);
        assert!(f.monotone);
        assert!(matches!(scaling_fit(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]), Err(Error::DegenerateAbscissae)));
    }

    #[test]
    fn crossing_interpolates() {
        let rows: Vec<MismatchRow> = [(0.1, 0.05), (0.2, 0.08), (0.3, 0.12)]
            .iter()
            .map(|&(lambda, e)| MismatchRow {
                n: 50,
                lambda,
                sigma_mm: 0.0,
                max_rel_err: e,
            })
            .collect();
        assert_relative_eq!(crossing(&rows, 0.1, |r| r.max_rel_err).unwrap(), 0.25, epsilon = 1e-12);
        assert!(crossing(&rows, 0.5, |r| r.max_rel_err).is_none());
    }

    #[test]
    fn cell_roundtrip() {
        for c in [
            Cell::ok(Some(0.1), None),
            Cell::ok(None, Some(-3.5e-9)),
            Cell::err("no interior extremum in sampled range"),
        ] {
            assert_eq!(Cell::decode(&c.encode()).unwrap(), c);
        }
    }

    #[test]
    fn scripts_check_columns() {
        let dir = std::env::temp_dir().join(format!("qfj-plot-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let csv = dir.join("t.csv");
        fs::write(&csv, "Lambda,dF_thermal,dF_analytic\n0.1,0.3,0.3\n").unwrap();
        let script = fs::read_to_string(emit_plot_script(Figure::Barrier, &csv).unwrap()).unwrap();
        for c in Figure::Barrier.columns() {
            assert!(script.contains(c));
        }
        assert!(matches!(emit_plot_script(Figure::FluxRatio, &csv), Err(Error::MissingColumn(c)) if c == "flux_ratio"));
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn small_sweep_all_routes_is_deterministic_and_resumable() {
        let dir = std::env::temp_dir().join(format!("qfj-sweep-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let mut cfg = SweepConfig::new(
            base(),
            SweepAxis::Lambda,
            vec![0.02, 0.05],
            vec![Route::Analytic, Route::Thermal, Route::Redfield, Route::Pde],
        );
        cfg.mx = 8;
        cfg.my = 5;
        cfg.workers = 2;
        cfg.out_dir = Some(dir.clone());
        let a = run_sweep(&cfg).unwrap();
        assert_eq!(a.len(), 8);
        let mut buf_a = Vec::new();
        write_sweep_csv(&mut buf_a, &a).unwrap();
        let b = run_sweep(&cfg).unwrap();
        let mut buf_b = Vec::new();
        write_sweep_csv(&mut buf_b, &b).unwrap();
        assert_eq!(buf_a, buf_b);
        let red: Vec<&SweepRow> = a.iter().filter(|r| r.route == Route::Redfield).collect();
        assert_eq!(red[0].flux_ratio, Some(1.0));
        let scripts = emit_plot_scripts(&dir.join("plots"), &a).unwrap();
        assert_eq!(scripts.len(), 2);
        let _ = fs::remove_dir_all(dir);
    }
}
