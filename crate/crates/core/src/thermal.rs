//! Thermal equilibrium of one particle on the lattice.
//!
//! The density matrix `exp(-beta H) / Z` is evaluated in the eigenbasis with
//! Boltzmann weights, then summed over the transverse rows to give the
//! marginal density along the channel.

use std::io::Write;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::fick_jacobs::{equilibrium_density_with, DensityExpansion};
use crate::grid::{assemble_hamiltonian, assemble_with_potential, build_grid, BoundaryX, GridSpec};
use crate::model::ChannelParams;
use crate::spectrum::{cache_key, diagonalize, diagonalize_cached, SpectralDecomposition};

/// Edge-row density (relative to the maximum) above which the cutoff is doubled.
pub const EDGE_TOL: f64 = 1e-6;
/// Maximum number of cutoff doublings before giving up.
pub const MAX_DOUBLINGS: usize = 4;

/// Marginal density `rho(x_i)` normalized to one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDensity {
    pub x_samples: Vec<f64>,
    pub rho: Vec<f64>,
    /// `sum_i rho_i dx`.
    pub norm: f64,
    pub dx: f64,
    /// Largest site occupation in the two edge rows over the global maximum.
    pub edge_ratio: f64,
}

/// Normalized Boltzmann weights, shifted by the ground energy.
pub fn boltzmann_weights(energies: &[f64], beta: f64) -> Vec<f64> {
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Diagonal of the thermal density matrix in the site basis.
pub fn site_occupation(eig: &SpectralDecomposition, beta: f64) -> Vec<f64> {
    let w = boltzmann_weights(&eig.energies, beta);
    let n = eig.dim();
    let mut occ = vec![0.0; n];
    for (k, &wk) in w.iter().enumerate() {
        if wk < 1e-300 {
            continue;
        }
        let col = eig.modes.column(k);
        for (o, phi) in occ.iter_mut().zip(col.iter()) {
            *o += wk * phi * phi;
        }
    }
    occ
}

/// `rho(x_i) = dx^-1 sum_j sum_k |phi_k(i, j)|^2 w_k`.
pub fn thermal_marginal(eig: &SpectralDecomposition, g: &GridSpec, beta: f64) -> Result<MarginalDensity> {
    if eig.dim() != g.len() {
        return Err(Error::LengthMismatch {
            left: eig.dim(),
            right: g.len(),
        });
    }
    let occ = site_occupation(eig, beta);
    let rho: Vec<f64> = (0..g.mx)
        .map(|i| (0..g.my).map(|j| occ[g.site(i, j)]).sum::<f64>() / g.dx)
        .collect();
    let max = occ.iter().copied().fold(0.0, f64::max);
    let edge = (0..g.mx)
        .flat_map(|i| [occ[g.site(i, 0)], occ[g.site(i, g.my - 1)]])
        .fold(0.0, f64::max);
    Ok(MarginalDensity {
        norm: rho.iter().sum::<f64>() * g.dx,
        x_samples: g.xs(),
        rho,
        dx: g.dx,
        edge_ratio: if g.my > 1 { edge / max } else { 0.0 },
    })
}

/// Marginal densities for one geometry at several `Lambda` values.
#[derive(Debug, Clone)]
pub struct ThermalSweep {
    pub grid: GridSpec,
    pub lambdas: Vec<f64>,
    pub marginals: Vec<MarginalDensity>,
    pub doublings: usize,
}

/// The Hamiltonian depends on `k0`, `k1` and the grid but not on the
/// temperature, so one diagonalization serves every `Lambda`. The cutoff is
/// sized for the smallest `Lambda` (widest thermal cloud) and doubled while
/// any edge row holds more than [`EDGE_TOL`] of the peak occupation.
pub fn thermal_sweep(
    p: &ChannelParams,
    lambdas: &[f64],
    mx: usize,
    my: usize,
    bc: BoundaryX,
    ycut: Option<f64>,
) -> Result<ThermalSweep> {
    thermal_sweep_cached(p, lambdas, mx, my, bc, ycut, None)
}

/// [`thermal_sweep`] with spectra stored under `cache` when given.
pub fn thermal_sweep_cached(
    p: &ChannelParams,
    lambdas: &[f64],
    mx: usize,
    my: usize,
    bc: BoundaryX,
    ycut: Option<f64>,
    cache: Option<&Path>,
) -> Result<ThermalSweep> {
    let smallest = lambdas
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if lambdas.is_empty() || !(smallest > 0.0) {
        return Err(invalid("Lambda", "need at least one positive value"));
    }
    let p_min = p.with_lambda(smallest)?;
    let mut grid = build_grid(&p_min, mx, my, bc, ycut)?;
    for doublings in 0..=MAX_DOUBLINGS {
        let h = assemble_hamiltonian(&grid, p);
        let eig = match cache {
            Some(dir) => diagonalize_cached(&h, dir, &cache_key(&grid, p.k0, p.k1, p.hbar, p.mass))?,
            None => diagonalize(&h)?,
        };
        let marginals = lambdas
            .iter()
            .map(|&l| thermal_marginal(&eig, &grid, p.with_lambda(l)?.beta))
            .collect::<Result<Vec<_>>>()?;
        if marginals.iter().all(|m| m.edge_ratio < EDGE_TOL) {
            return Ok(ThermalSweep {
                grid,
                lambdas: lambdas.to_vec(),
                marginals,
                doublings,
            });
        }
        grid = GridSpec::new(grid.mx, grid.my, p.period, 2.0 * grid.ycut, grid.bc_x)?;
    }
    Err(invalid(
        "Ycut",
        format!("edge density still above {EDGE_TOL} after {MAX_DOUBLINGS} doublings; increase My"),
    ))
}

/// Single-temperature convenience wrapper around [`thermal_sweep`].
pub fn thermal_equilibrium(p: &ChannelParams, mx: usize, my: usize, bc: BoundaryX) -> Result<(GridSpec, MarginalDensity)> {
    let mut s = thermal_sweep(p, &[p.scales().lambda], mx, my, bc, None)?;
    Ok((s.grid, s.marginals.remove(0)))
}

/// Barrier read off a density profile.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierReadout {
    /// `ln(max rho / min rho)`.
    pub value: f64,
    pub argmax: usize,
    pub argmin: usize,
    /// Set when the extrema sit more than two cells away from `L/2` and `0`.
    pub warning: Option<String>,
}

pub fn numeric_barrier(m: &MarginalDensity) -> Result<BarrierReadout> {
    if let Some(i) = m.rho.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::NonPositiveDensity { index: i });
    }
    let (argmax, max) = extremum(&m.rho, |a, b| a > b);
    let (argmin, min) = extremum(&m.rho, |a, b| a < b);
    let period = m.dx * m.rho.len() as f64;
    let dist = |x: f64, target: f64| {
        let d = (x - target).rem_euclid(period);
        d.min(period - d)
    };
    let off_max = dist(m.x_samples[argmax], 0.5 * period);
    let off_min = dist(m.x_samples[argmin], 0.0);
    let warning = (max > min && (off_max > 2.0 * m.dx || off_min > 2.0 * m.dx)).then(|| {
        format!(
            "extrema at x = {:.4} (max) and {:.4} (min) are off the symmetry points; check convergence",
            m.x_samples[argmax], m.x_samples[argmin]
        )
    });
    Ok(BarrierReadout {
        value: (max / min).ln(),
        argmax,
        argmin,
        warning,
    })
}

fn extremum(v: &[f64], better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if better(x, best.1) {
            best = (i, x);
        }
    }
    best
}

/// `sum_i (a_i - b_i)^2 / b_i^2 dx`.
pub fn mismatch_score(a: &[f64], b: &[f64], dx: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut s = 0.0;
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if !(*y > 0.0) {
            return Err(Error::NonPositiveDensity { index: i });
        }
        s += ((x - y) / y).powi(2);
    }
    Ok(s * dx)
}

/// First-order Fick-Jacobs density on the grid abscissae, normalized so that
/// `sum rho dx = 1` like the lattice marginal.
pub fn fj_density_on_grid(p: &ChannelParams, lambda: f64, xs: &[f64], dx: f64, form: DensityExpansion) -> Vec<f64> {
    let raw: Vec<f64> = xs
        .iter()
        .map(|&x| equilibrium_density_with(p, lambda, 0.0, 1.0, x, form).rho)
        .collect();
    let norm: f64 = raw.iter().sum::<f64>() * dx;
    raw.into_iter().map(|r| r / norm).collect()
}

/// CSV with columns `x,rho_num,rho_fj,pointwise_sq_rel_err`.
pub fn write_comparison_csv<W: Write>(mut w: W, xs: &[f64], rho_num: &[f64], rho_fj: &[f64]) -> Result<()> {
    writeln!(w, "x,rho_num,rho_fj,pointwise_sq_rel_err")?;
    for i in 0..xs.len() {
        let e = ((rho_fj[i] - rho_num[i]) / rho_num[i]).powi(2);
        writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", xs[i], rho_num[i], rho_fj[i], e)?;
    }
    Ok(())
}

/// Marginal of a particle on a ring of `mx` sites in `U0 cos(2 pi x / L)`.
pub fn cosine_1d_marginal(u0: f64, period: f64, mx: usize, beta: f64, hbar: f64, mass: f64) -> Result<MarginalDensity> {
    let g = GridSpec::new(mx, 1, period, 1.0, BoundaryX::Periodic)?;
    let h = assemble_with_potential(&g, hbar, mass, |x, _| u0 * (2.0 * std::f64::consts::PI * x / period).cos());
    let eig = diagonalize(&h)?;
    thermal_marginal(&eig, &g, beta)
}
