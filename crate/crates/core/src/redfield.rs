//! Redfield kinetic equation for the single-particle density matrix of a
//! lattice coupled to two particle leads on its end columns.
//!
//! With `F = gamma V diag(n) V^T`, `G = gamma V V^T`, edge projector `P` and
//! `K = (F - G^*) P`, a lead contributes
//! `L[sigma] = F P + P F + sigma K + K^T sigma` and the kinetic equation is
//! `d sigma/dt = A sigma + sigma A^dagger + Q` with
//! `A = (-i h + sum K^T) / hbar`, `Q = sum (F P + P F) / hbar`.
//!
//! `gamma` here already contains the factor `pi` from the half-line Fourier
//! transform of the bath correlation; Lamb-shift terms are dropped.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::grid::{GridSpec, HamiltonianMatrix};
use crate::model::ChannelParams;
use crate::lyapunov::{lyapunov_residual, solve_kronecker, CMatrix, SchurForm, C64};
use crate::spectrum::SpectralDecomposition;

/// Largest system size accepted by [`SteadyMethod::Direct`].
pub const DIRECT_LIMIT: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// A particle reservoir at fixed `beta`, `mu`, constant spectral density `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadSpec {
    pub side: Side,
    pub mu: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl LeadSpec {
    pub fn new(side: Side, mu: f64, gamma: f64, beta: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(invalid("gamma", format!("must be positive, got {gamma}")));
        }
        if !(beta > 0.0) || !mu.is_finite() {
            return Err(invalid("lead", "beta must be positive and mu finite"));
        }
        Ok(Self { side, mu, gamma, beta })
    }

    /// Lead with fugacity `z = exp(beta mu)`.
    pub fn from_fugacity(side: Side, z: f64, gamma: f64, beta: f64) -> Result<Self> {
        if !(z > 0.0) {
            return Err(invalid("fugacity", format!("must be positive, got {z}")));
        }
        Self::new(side, z.ln() / beta, gamma, beta)
    }

    /// Classical occupation `exp(-beta (E - mu))`.
    pub fn occupation(&self, e: f64) -> f64 {
        (-self.beta * (e - self.mu)).exp()
    }

    /// Site indices of the column this lead couples to.
    pub fn edge_sites(&self, g: &GridSpec) -> Vec<usize> {
        let i = match self.side {
            Side::Left => 0,
            Side::Right => g.mx - 1,
        };
        (0..g.my).map(|j| g.site(i, j)).collect()
    }
}

/// Coupling kernels of one lead, stored over all site pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BathCoefficients {
    /// `f[a, b] = sum_k phi_k(a) phi_k(b) gamma n(E_k)`.
    pub f: DMatrix<f64>,
    /// `g[a, b] = sum_k phi_k(a) phi_k(b) gamma`.
    pub g: DMatrix<f64>,
    pub edge: Vec<usize>,
    pub gamma: f64,
}

pub fn bath_coefficients(eig: &SpectralDecomposition, lead: &LeadSpec, edge: Vec<usize>) -> BathCoefficients {
    let v = &eig.modes;
    let mut vn = v.clone();
    for (k, e) in eig.energies.iter().enumerate() {
        let w = lead.gamma * lead.occupation(*e);
        vn.column_mut(k).scale_mut(w);
    }
    let f = &vn * v.transpose();
    let g = (v * v.transpose()).scale(lead.gamma);
    BathCoefficients {
        f,
        g,
        edge,
        gamma: lead.gamma,
    }
}

impl BathCoefficients {
    /// `K = (F - G) P` (kernels are real).
    fn k_matrix(&self) -> DMatrix<f64> {
        let n = self.f.nrows();
        let mut k = DMatrix::zeros(n, n);
        for &b in &self.edge {
            for a in 0..n {
                k[(a, b)] = self.f[(a, b)] - self.g[(a, b)];
            }
        }
        k
    }

    /// `F P + P F`.
    fn injection(&self) -> DMatrix<f64> {
        let n = self.f.nrows();
        let mut q = DMatrix::zeros(n, n);
        for &b in &self.edge {
            for a in 0..n {
                q[(a, b)] += self.f[(a, b)];
                q[(b, a)] += self.f[(b, a)];
            }
        }
        q
    }

    /// `L[sigma]`, without the `1 / hbar`.
    pub fn dissipator(&self, sigma: &CMatrix) -> CMatrix {
        let k = to_complex(&self.k_matrix());
        to_complex(&self.injection()) + sigma * &k + k.transpose() * sigma
    }
}

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

/// Single-particle density matrix `sigma[a, b] = tr(a_b^dagger a_a rho)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinglePDM {
    pub sigma: CMatrix,
}

impl SinglePDM {
    pub fn zeros(n: usize) -> Self {
        Self {
            sigma: CMatrix::zeros(n, n),
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.sigma - self.sigma.adjoint())
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        self.sigma.diagonal().iter().map(|v| v.re).sum()
    }

    pub fn min_diagonal(&self) -> f64 {
        self.sigma.diagonal().iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }

    /// Site occupations `Re sigma[a, a]`.
    pub fn occupations(&self) -> Vec<f64> {
        self.sigma.diagonal().iter().map(|v| v.re).collect()
    }
}

/// The affine generator `d sigma/dt = A sigma + sigma A^dagger + Q`.
#[derive(Debug, Clone)]
pub struct KineticGenerator {
    pub a: CMatrix,
    pub q: CMatrix,
    pub h: DMatrix<f64>,
    pub hbar: f64,
    pub baths: Vec<BathCoefficients>,
}

impl KineticGenerator {
    pub fn new(h: &HamiltonianMatrix, hbar: f64, baths: Vec<BathCoefficients>) -> Self {
        let hd = h.to_dense();
        let n = hd.nrows();
        let mut a = hd.map(|v| C64::new(0.0, -v / hbar));
        let mut q = CMatrix::zeros(n, n);
        for b in &baths {
            a += to_complex(&b.k_matrix().transpose()).unscale(hbar);
            q += to_complex(&b.injection()).unscale(hbar);
        }
        Self { a, q, h: hd, hbar, baths }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn rhs(&self, sigma: &CMatrix) -> CMatrix {
        &self.a * sigma + sigma * self.a.adjoint() + &self.q
    }

    /// `max |d sigma/dt|`.
    pub fn residual(&self, sigma: &CMatrix) -> f64 {
        lyapunov_residual(&self.a, sigma, &(-&self.q))
    }
}

/// `-(i / hbar) [h, sigma] + sum L[sigma] / hbar`.
pub fn kinetic_rhs(sigma: &SinglePDM, h: &HamiltonianMatrix, hbar: f64, baths: &[BathCoefficients]) -> CMatrix {
    let hd = to_complex(&h.to_dense());
    let mut out = (&hd * &sigma.sigma - &sigma.sigma * &hd) * C64::new(0.0, -1.0 / hbar);
    for b in baths {
        out += b.dissipator(&sigma.sigma).unscale(hbar);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SteadyMethod {
    /// Dense Kronecker solve (`N <= 40`).
    Direct,
    /// Implicit Euler with doubling steps until the residual and the step
    /// change both settle.
    Relax,
    /// Bartels-Stewart solve of the Lyapunov equation.
    Lyapunov,
}

impl std::fmt::Display for SteadyMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::Relax => "relax",
            Self::Lyapunov => "lyapunov",
        })
    }
}

impl std::str::FromStr for SteadyMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "relax" => Ok(Self::Relax),
            "lyapunov" => Ok(Self::Lyapunov),
            other => Err(invalid("method", format!("expected direct, relax or lyapunov, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    pub method: SteadyMethod,
    /// Absolute threshold on `max |d sigma/dt|`.
    pub threshold: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub pdm: SinglePDM,
    pub residual: f64,
    pub iterations: usize,
    pub method: SteadyMethod,
    pub threshold: f64,
}

/// Weak-coupling default `gamma = 1e-3 hbar omega` with `omega = sqrt(k0 / m)`.
pub fn default_gamma(p: &ChannelParams) -> f64 {
    1e-3 * p.hbar * (p.k0 / p.mass).sqrt()
}

/// Default threshold `1e-10 gamma / hbar`.
pub fn default_threshold(gamma: f64, hbar: f64) -> f64 {
    1e-10 * gamma / hbar
}

pub fn steady_state(gen: &KineticGenerator, opts: &SteadyOptions) -> Result<SteadyState> {
    if gen.baths.is_empty() {
        return Err(invalid("leads", "need at least one lead for a unique steady state"));
    }
    let n = gen.dim();
    let (sigma, iterations) = match opts.method {
        SteadyMethod::Direct => {
            if n > DIRECT_LIMIT {
                return Err(Error::GridTooLarge {
                    sites: n,
                    limit: DIRECT_LIMIT,
                });
            }
            (solve_kronecker(&gen.a, &(-&gen.q))?, 1)
        }
        SteadyMethod::Lyapunov => (SchurForm::new(&gen.a)?.solve(&(-&gen.q))?, 1),
        SteadyMethod::Relax => relax(gen, opts)?,
    };
    // Hermitian part only: the exact solution is Hermitian and this removes
    // round-off asymmetry.
    let sigma = (&sigma + sigma.adjoint()).scale(0.5);
    let residual = gen.residual(&sigma);
    if residual > opts.threshold && opts.method == SteadyMethod::Relax {
        return Err(Error::NotConverged {
            iterations,
            residual,
            threshold: opts.threshold,
        });
    }
    Ok(SteadyState {
        pdm: SinglePDM { sigma },
        residual,
        iterations,
        method: opts.method,
        threshold: opts.threshold,
    })
}

const RELAX_CHANGE_TOL: f64 = 1e-12;

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Implicit Euler from `sigma = 0`: `(I/2 - dt A) s' + s' (I/2 - dt A)^dagger = s + dt Q`,
/// doubling `dt` each step. One Schur factorization of `A` serves all steps.
fn relax(gen: &KineticGenerator, opts: &SteadyOptions) -> Result<(CMatrix, usize)> {
    let schur = SchurForm::new(&gen.a)?;
    let n = gen.dim();
    let rate = gen.baths.iter().map(|b| b.gamma).fold(0.0, f64::max) / gen.hbar;
    let mut dt = 0.1 / rate;
    let mut sigma = CMatrix::zeros(n, n);
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let rhs = &sigma + gen.q.scale(dt);
        let next = schur.solve_shifted(&rhs, 0.5, -dt)?;
        let change = max_abs(&(&next - &sigma));
        sigma = next;
        residual = gen.residual(&sigma);
        // Slow interior modes can leave a small residual while sigma is
        // still drifting, so the step change must settle as well.
        if residual <= opts.threshold && change <= RELAX_CHANGE_TOL * max_abs(&sigma) {
            return Ok((sigma, it));
        }
        if !dt.is_finite() {
            return Err(Error::StepControl { dt });
        }
        dt *= 2.0;
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        residual,
        threshold: opts.threshold,
    })
}

/// Particle rate into one bath, `-Re tr L[sigma] / hbar`. Negative means the
/// bath is feeding the system.
pub fn bath_intake(state: &SteadyState, bath: &BathCoefficients, hbar: f64) -> f64 {
    -bath.dissipator(&state.pdm.sigma).trace().re / hbar
}

/// Current into the left bath. Refuses to report when the residual exceeds
/// the threshold of the solve.
pub fn current(state: &SteadyState, left: &BathCoefficients, hbar: f64) -> Result<f64> {
    if !(state.residual <= state.threshold) {
        return Err(Error::ResidualTooLarge {
            residual: state.residual,
            threshold: state.threshold,
        });
    }
    Ok(bath_intake(state, left, hbar))
}

/// One row of a transport sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportRow {
    pub lambda: f64,
    pub lx_over_lomega: f64,
    pub k1: f64,
    pub j_num: f64,
    pub r: f64,
    pub residual: f64,
    pub method: SteadyMethod,
    pub iterations: usize,
}

pub const TRANSPORT_HEADER: &str = "Lambda,Lx_over_Lomega,k1,J_num,R,residual,method,iterations";

pub fn write_transport_csv<W: Write>(mut w: W, rows: &[TransportRow]) -> Result<()> {
    writeln!(w, "{TRANSPORT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            r.lambda, r.lx_over_lomega, r.k1, r.j_num, r.r, r.residual, r.method, r.iterations
        )?;
    }
    Ok(())
}

/// Everything needed to solve one biased transport point.
#[derive(Debug, Clone)]
pub struct TransportSetup {
    pub generator: KineticGenerator,
    pub left: usize,
    pub right: usize,
}

/// Builds the generator for leads on both ends of an open grid.
/// Every lead must satisfy `n(E_0) < 1` so that the classical occupations
/// stay meaningful and the steady state exists.
pub fn transport_setup(
    g: &GridSpec,
    h: &HamiltonianMatrix,
    eig: &SpectralDecomposition,
    hbar: f64,
    left: LeadSpec,
    right: LeadSpec,
) -> Result<TransportSetup> {
    let e0 = eig.energies.first().copied().unwrap_or(0.0);
    for lead in [&left, &right] {
        if lead.occupation(e0) >= 1.0 {
            return Err(invalid(
                "mu",
                format!("occupation of the lowest mode is {} >= 1; lower the chemical potential", lead.occupation(e0)),
            ));
        }
    }
    let baths = vec![
        bath_coefficients(eig, &left, left.edge_sites(g)),
        bath_coefficients(eig, &right, right.edge_sites(g)),
    ];
    Ok(TransportSetup {
        generator: KineticGenerator::new(h, hbar, baths),
        left: 0,
        right: 1,
    })
}

impl TransportSetup {
    pub fn solve(&self, opts: &SteadyOptions) -> Result<SteadyState> {
        steady_state(&self.generator, opts)
    }

    pub fn current(&self, s: &SteadyState) -> Result<f64> {
        current(s, &self.generator.baths[self.left], self.generator.hbar)
    }

    pub fn right_intake(&self, s: &SteadyState) -> f64 {
        bath_intake(s, &self.generator.baths[self.right], self.generator.hbar)
    }
}
