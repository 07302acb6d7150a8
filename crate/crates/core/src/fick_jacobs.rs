//! Classical and first-order quantum Fick-Jacobs reduction.
//!
//! Two evaluation paths are provided: closed forms for the corrugated
//! harmonic channel ([`ChannelParams`]) and transverse quadratures for any
//! [`ChannelPotential`]. The general path fixes the additive constant of
//! `beta A0` with the uncorrugated reference potential, which makes it
//! coincide with `ln(k / k0) / 2` for the harmonic channel.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::ChannelParams;
use crate::potential::{ChannelPotential, Harmonic};
use crate::quadrature::{cumulative_trapezoid, integrate, integrate_many, simpson, simpson_samples};

/// Relative change of transverse integrals at which the cutoff stops growing.
pub const TRANSVERSE_TOL: f64 = 1e-10;
/// Minimum number of panels for longitudinal integrals.
pub const MIN_PANELS: usize = 512;
/// Endpoint mismatch of `beta A0` above which a potential is not periodic.
pub const PERIODICITY_TOL: f64 = 1e-8;

const LONGITUDINAL_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Harmonic closed forms

/// `beta A0(x) = ln(k(x) / k0) / 2`.
pub fn classical_free_energy(p: &ChannelParams, x: f64) -> f64 {
    0.5 * (p.stiffness(x) / p.k0).ln()
}

/// `beta F_Lambda(x) = 2 k(x) / k0`.
pub fn quantum_free_energy_correction(p: &ChannelParams, x: f64) -> f64 {
    2.0 * p.stiffness(x) / p.k0
}

/// `beta dF = ln((1 + k1) / (1 - k1)) / 2 + 4 Lambda k1`.
pub fn free_energy_barrier(k1: f64, lambda: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k1) {
        return Err(invalid("k1", format!("must satisfy 0 <= k1 < 1, got {k1}")));
    }
    Ok(0.5 * ((1.0 + k1) / (1.0 - k1)).ln() + 4.0 * lambda * k1)
}

/// Classical transverse density `sqrt(pi k0 / k(x))`.
pub fn classical_density(p: &ChannelParams, x: f64) -> f64 {
    (PI * p.k0 / p.stiffness(x)).sqrt()
}

/// First-order density correction `-2 k(x) / k0`.
pub fn density_correction(p: &ChannelParams, x: f64) -> f64 {
    -2.0 * p.stiffness(x) / p.k0
}

/// How the first-order density correction is combined with the classical
/// density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityExpansion {
    /// `rho_cl + Lambda rho_Lambda`.
    #[default]
    Additive,
    /// `rho_cl (1 + Lambda rho_Lambda)`, the form that follows from
    /// `rho = Pi exp(-beta F)`.
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    pub rho: f64,
    /// Set when the correction outweighs the classical part.
    pub expansion_broken: bool,
}

/// First-order equilibrium density in the additive form,
/// `rho0 exp(beta (mu - mu0)) (rho_cl + Lambda rho_Lambda)`.
pub fn equilibrium_density(p: &ChannelParams, lambda: f64, mu_minus_mu0: f64, rho0: f64, x: f64) -> DensityValue {
    equilibrium_density_with(p, lambda, mu_minus_mu0, rho0, x, DensityExpansion::Additive)
}

pub fn equilibrium_density_with(
    p: &ChannelParams,
    lambda: f64,
    mu_minus_mu0: f64,
    rho0: f64,
    x: f64,
    form: DensityExpansion,
) -> DensityValue {
    let cl = classical_density(p, x);
    let corr = density_correction(p, x);
    let pref = rho0 * (p.beta * mu_minus_mu0).exp();
    let (rho, broken) = match form {
        DensityExpansion::Additive => (cl + lambda * corr, (lambda * corr).abs() > cl.abs()),
        DensityExpansion::Multiplicative => (cl * (1.0 + lambda * corr), (lambda * corr).abs() > 1.0),
    };
    DensityValue {
        rho: pref * rho,
        expansion_broken: broken,
    }
}

/// Effective barrier of a 1D cosine potential `U0 cos(2 pi x / L)` including
/// the leading quantum smoothing: `2 U0 (1 - pi lambda_T^2 / (12 L^2))`.
pub fn enthalpic_1d_barrier(u0: f64, lambda_t: f64, period: f64) -> f64 {
    2.0 * u0 * (1.0 - PI * lambda_t * lambda_t / (12.0 * period * period))
}

/// `J_Lambda = -2 int (k/k0)^{3/2} / int (k/k0)^{1/2}` for the harmonic channel.
pub fn harmonic_flux_correction(k1: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k1) {
        return Err(invalid("k1", format!("must satisfy 0 <= k1 < 1, got {k1}")));
    }
    let num = longitudinal(|x| (1.0 + k1 * (2.0 * PI * x).cos()).powf(1.5), 1.0)?;
    let den = longitudinal(|x| (1.0 + k1 * (2.0 * PI * x).cos()).sqrt(), 1.0)?;
    Ok(-2.0 * num / den)
}

fn longitudinal<F: Fn(f64) -> f64>(f: F, period: f64) -> Result<f64> {
    let mut panels = MIN_PANELS;
    loop {
        let r = simpson(&f, 0.0, period, panels);
        if r.error <= LONGITUDINAL_TOL * r.value.abs().max(1e-300) {
            return Ok(r.value);
        }
        if panels >= 1 << 20 {
            return Err(Error::Quadrature {
                estimate: r.error,
                tolerance: LONGITUDINAL_TOL * r.value.abs(),
            });
        }
        panels *= 2;
    }
}

// ---------------------------------------------------------------------------
// General quadrature path

/// Transverse integrals `int exp(-beta U) g(y) dy` at one `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseMoments {
    /// Partition function `int exp(-beta U) dy`.
    pub z: f64,
    /// `<beta dU/dx>`.
    pub mean_dx: f64,
    /// `<beta d2U/dy2>`.
    pub mean_dyy: f64,
    /// `<((beta dU/dy)^2 - 2 beta d2U/dy2) beta dU/dx>`.
    pub mean_coupling: f64,
    /// `int exp(-beta U) (beta d2U/dy2 - (beta dU/dy)^2) dy`, zero analytically.
    pub vanishing: f64,
    /// `int exp(-beta U) |beta d2U/dy2 - (beta dU/dy)^2| dy`, its natural scale.
    pub vanishing_scale: f64,
}

/// Transverse moments on `[-Y, Y]` with `Y = 8 L_y`, doubling `Y` until the
/// integrals change by less than [`TRANSVERSE_TOL`] relative to their scale.
pub fn transverse_moments(u: &dyn ChannelPotential, beta: f64, x: f64) -> Result<TransverseMoments> {
    let f = |y: f64| {
        let w = (-beta * u.value(x, y)).exp();
        let bdx = beta * u.dx(x, y);
        let bdy = beta * u.dy(x, y);
        let bdyy = beta * u.dyy(x, y);
        [
            w,
            w * bdx,
            w * bdyy,
            w * (bdy * bdy - 2.0 * bdyy) * bdx,
            w * (bdyy - bdy * bdy),
        ]
    };
    let mut cut = 8.0 * u.l_y(beta);
    let mut prev = integrate_many(f, -cut, cut, 1e-13)?;
    for _ in 0..12 {
        cut *= 2.0;
        let cur = integrate_many(f, -cut, cut, 1e-13)?;
        let settled = (0..5).all(|i| {
            (cur.values[i] - prev.values[i]).abs() <= TRANSVERSE_TOL * cur.magnitudes[i].max(f64::MIN_POSITIVE)
        });
        if settled {
            let z = cur.values[0];
            return Ok(TransverseMoments {
                z,
                mean_dx: cur.values[1] / z,
                mean_dyy: cur.values[2] / z,
                mean_coupling: cur.values[3] / z,
                vanishing: cur.values[4],
                vanishing_scale: cur.magnitudes[4],
            });
        }
        prev = cur;
    }
    Err(Error::Quadrature {
        estimate: (prev.values[0]).abs(),
        tolerance: TRANSVERSE_TOL,
    })
}

fn flat_partition(u: &dyn ChannelPotential, beta: f64) -> Result<f64> {
    Ok(transverse_moments(u.flat().as_ref(), beta, 0.0)?.z)
}

/// `beta A0(x) = -ln(Z(x) / Z_flat)`.
pub fn classical_free_energy_general(u: &dyn ChannelPotential, beta: f64, x: f64) -> Result<f64> {
    let z = transverse_moments(u, beta, x)?.z;
    Ok(-(z / flat_partition(u, beta)?).ln())
}

/// Classical transverse density `Z(x) / L_y`.
pub fn classical_density_general(u: &dyn ChannelPotential, beta: f64, x: f64) -> Result<f64> {
    Ok(transverse_moments(u, beta, x)?.z / u.l_y(beta))
}

/// First-order density correction `-L_y^2 <beta d2U/dy2>`.
pub fn density_correction_general(u: &dyn ChannelPotential, beta: f64, x: f64) -> Result<f64> {
    let ly = u.l_y(beta);
    Ok(-ly * ly * transverse_moments(u, beta, x)?.mean_dyy)
}

/// `d(beta F_Lambda)/dx = beta A0' L_y^2 <beta U_yy> + L_y^2 <((beta U_y)^2 - 2 beta U_yy) beta U_x>`.
pub fn quantum_free_energy_gradient(u: &dyn ChannelPotential, beta: f64, x: f64) -> Result<f64> {
    let m = transverse_moments(u, beta, x)?;
    let ly2 = u.l_y(beta).powi(2);
    Ok(ly2 * (m.mean_dx * m.mean_dyy + m.mean_coupling))
}

fn quantum_anchor(u: &dyn ChannelPotential, beta: f64) -> Result<f64> {
    let ly2 = u.l_y(beta).powi(2);
    Ok(ly2 * transverse_moments(u, beta, 0.0)?.mean_dyy)
}

fn gradient_integral(u: &dyn ChannelPotential, beta: f64, a: f64, b: f64) -> Result<f64> {
    // Errors inside the closure are captured and re-raised afterwards.
    let failure = std::sync::Mutex::new(None);
    let r = integrate(
        |s| match quantum_free_energy_gradient(u, beta, s) {
            Ok(v) => v,
            Err(e) => {
                *failure.lock().expect("poisoned") = Some(e);
                0.0
            }
        },
        a,
        b,
        1e-12,
        1e-11,
    )?;
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(r.value)
}

/// `beta F_Lambda(x)`, integrated from `x = 0` where it takes the value
/// `L_y^2 <beta d2U/dy2>(0)`.
pub fn quantum_free_energy_correction_general(u: &dyn ChannelPotential, beta: f64, x: f64) -> Result<f64> {
    Ok(quantum_anchor(u, beta)? + gradient_integral(u, beta, 0.0, x)?)
}

/// Both sides of `<beta dU/dx> = d(beta A0)/dx`. The right side is a
/// five-point derivative of the quadrature free energy.
pub fn transverse_force_identity(u: &dyn ChannelPotential, beta: f64, x: f64) -> Result<(f64, f64)> {
    let lhs = transverse_moments(u, beta, x)?.mean_dx;
    let h = 1e-3 * u.period();
    let a = |s: f64| -> Result<f64> { Ok(-transverse_moments(u, beta, s)?.z.ln()) };
    let rhs = (-a(x + 2.0 * h)? + 8.0 * a(x + h)? - 8.0 * a(x - h)? + a(x - 2.0 * h)?) / (12.0 * h);
    Ok((lhs, rhs))
}

/// `int exp(-beta U) (beta U_yy - (beta U_y)^2) dy` and its absolute scale.
pub fn vanishing_integral(u: &dyn ChannelPotential, beta: f64, x: f64) -> Result<(f64, f64)> {
    let m = transverse_moments(u, beta, x)?;
    Ok((m.vanishing, m.vanishing_scale))
}

// ---------------------------------------------------------------------------
// Profiles

/// Sampled effective free energy `beta F = beta A0 + Lambda beta F_Lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeEnergyProfile {
    pub x_samples: Vec<f64>,
    pub a0: Vec<f64>,
    pub f_lambda: Vec<f64>,
    /// Classical transverse density `Z / L_y`.
    pub rho_cl: Vec<f64>,
    /// First-order density correction.
    pub rho_lambda: Vec<f64>,
    pub lambda: f64,
}

impl FreeEnergyProfile {
    pub fn len(&self) -> usize {
        self.x_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_samples.is_empty()
    }

    pub fn total(&self) -> Vec<f64> {
        self.a0
            .iter()
            .zip(&self.f_lambda)
            .map(|(a, f)| a + self.lambda * f)
            .collect()
    }

    /// Same samples assembled at another `Lambda`.
    pub fn at_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    /// `max - min` of the assembled profile.
    pub fn barrier(&self) -> f64 {
        let t = self.total();
        let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = t.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Largest endpoint mismatch of `a0` and `f_lambda`.
    pub fn periodicity_defect(&self) -> f64 {
        let n = self.len() - 1;
        (self.a0[n] - self.a0[0])
            .abs()
            .max((self.f_lambda[n] - self.f_lambda[0]).abs())
    }

    /// Equilibrium density at unit fugacity, `rho_cl (1 + Lambda rho_Lambda)`.
    pub fn density(&self) -> Vec<f64> {
        self.rho_cl
            .iter()
            .zip(&self.rho_lambda)
            .map(|(c, r)| c * (1.0 + self.lambda * r))
            .collect()
    }

    /// CSV with columns `x,a0,f_lambda,total,rho`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,a0,f_lambda,total,rho")?;
        let total = self.total();
        let rho = self.density();
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.x_samples[i], self.a0[i], self.f_lambda[i], total[i], rho[i]
            )?;
        }
        Ok(())
    }
}

fn uniform_samples(period: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(invalid("samples", "need at least two samples"));
    }
    let h = period / (n - 1) as f64;
    let mut xs: Vec<f64> = (0..n).map(|i| h * i as f64).collect();
    xs[n - 1] = period;
    Ok(xs)
}

/// Closed-form profile of the harmonic channel on `n` uniform samples of `[0, L]`.
pub fn harmonic_profile(p: &ChannelParams, lambda: f64, n: usize) -> Result<FreeEnergyProfile> {
    let xs = uniform_samples(p.period, n)?;
    Ok(FreeEnergyProfile {
        a0: xs.iter().map(|&x| classical_free_energy(p, x)).collect(),
        f_lambda: xs.iter().map(|&x| quantum_free_energy_correction(p, x)).collect(),
        rho_cl: xs.iter().map(|&x| classical_density(p, x)).collect(),
        rho_lambda: xs.iter().map(|&x| density_correction(p, x)).collect(),
        x_samples: xs,
        lambda,
    })
}

/// Quadrature profile of an arbitrary potential on `n` uniform samples.
/// `beta F_Lambda` is accumulated interval by interval from `x = 0`.
pub fn general_profile(u: &dyn ChannelPotential, beta: f64, lambda: f64, n: usize) -> Result<FreeEnergyProfile> {
    let xs = uniform_samples(u.period(), n)?;
    let ly = u.l_y(beta);
    let z_flat = flat_partition(u, beta)?;
    let moments: Vec<TransverseMoments> = xs
        .par_iter()
        .map(|&x| transverse_moments(u, beta, x))
        .collect::<Result<_>>()?;
    let steps: Vec<f64> = xs
        .par_windows(2)
        .map(|w| gradient_integral(u, beta, w[0], w[1]))
        .collect::<Result<_>>()?;
    let mut f_lambda = Vec::with_capacity(n);
    let mut acc = ly * ly * moments[0].mean_dyy;
    f_lambda.push(acc);
    for s in steps {
        acc += s;
        f_lambda.push(acc);
    }
    Ok(FreeEnergyProfile {
        a0: moments.iter().map(|m| -(m.z / z_flat).ln()).collect(),
        rho_cl: moments.iter().map(|m| m.z / ly).collect(),
        rho_lambda: moments.iter().map(|m| -ly * ly * m.mean_dyy).collect(),
        f_lambda,
        x_samples: xs,
        lambda,
    })
}

// ---------------------------------------------------------------------------
// Transport

/// Decomposed steady-state flux per unit diffusion coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxResult {
    /// `(z1 - z2) / int exp(beta A0)`, with `z = exp(beta mu)`.
    pub j_cl_over_d: f64,
    /// Dimensionless first-order correction.
    pub j_lambda: f64,
    /// `j_cl_over_d (1 + Lambda j_lambda)`.
    pub j_total_over_d: f64,
}

impl FluxResult {
    pub fn new(j_cl_over_d: f64, j_lambda: f64, lambda: f64) -> Self {
        Self {
            j_cl_over_d,
            j_lambda,
            j_total_over_d: j_cl_over_d * (1.0 + lambda * j_lambda),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState1d {
    pub x: Vec<f64>,
    /// First-order steady density (multiplicative form).
    pub rho: Vec<f64>,
    pub flux: FluxResult,
    /// False when `A0(0) != A0(L)` and the general two-endpoint formula was used.
    pub periodic_simplification: bool,
}

/// Steady state of the harmonic channel between chemical potentials
/// `mu1` at `x = 0` and `mu2` at `x = L`, using the closed-form profile.
pub fn steady_state_1d(p: &ChannelParams, lambda: f64, mu1: f64, mu2: f64) -> Result<SteadyState1d> {
    let profile = harmonic_profile(p, lambda, 4 * MIN_PANELS + 1)?;
    let mut s = steady_state_from_profile(&profile, p.beta, mu1, mu2)?;
    // Replace the sampled ratio with the adaptive closed form.
    if s.periodic_simplification {
        let jl = harmonic_flux_correction(p.k1)?;
        let den = longitudinal(|x| (p.stiffness(x) / p.k0).sqrt(), p.period)?;
        let dz = (p.beta * mu1).exp() - (p.beta * mu2).exp();
        s.flux = FluxResult::new(dz / den, jl, lambda);
    }
    Ok(s)
}

/// Steady state for an arbitrary potential via quadrature profiles.
pub fn steady_state_1d_general(
    u: &dyn ChannelPotential,
    beta: f64,
    lambda: f64,
    mu1: f64,
    mu2: f64,
    samples: usize,
) -> Result<SteadyState1d> {
    let n = samples.max(MIN_PANELS + 1);
    let n = (n - 1).next_multiple_of(4) + 1;
    let profile = general_profile(u, beta, lambda, n)?;
    steady_state_from_profile(&profile, beta, mu1, mu2)
}

/// Steady density and flux from a sampled profile (`4m + 1` uniform samples).
pub fn steady_state_from_profile(profile: &FreeEnergyProfile, beta: f64, mu1: f64, mu2: f64) -> Result<SteadyState1d> {
    let n = profile.len();
    let h = profile.x_samples[1] - profile.x_samples[0];
    let lambda = profile.lambda;
    let w: Vec<f64> = profile.a0.iter().map(|a| a.exp()).collect();
    let wf: Vec<f64> = w.iter().zip(&profile.f_lambda).map(|(w, f)| w * f).collect();
    let int_w = checked(simpson_samples(&w, h)?)?;
    let int_wf = checked(simpson_samples(&wf, h)?)?;
    let z1 = (beta * mu1).exp();
    let z2 = (beta * mu2).exp();
    let head = profile.rho_lambda[0] + profile.f_lambda[0];
    let tail = profile.rho_lambda[n - 1] + profile.f_lambda[n - 1];
    let periodic = (profile.a0[n - 1] - profile.a0[0]).abs() <= PERIODICITY_TOL;
    let j_cl = (z1 - z2) / int_w;
    let j_lambda = if periodic {
        head - int_wf / int_w
    } else if z1 != z2 {
        (z1 * head - z2 * tail) / (z1 - z2) - int_wf / int_w
    } else {
        0.0
    };
    let flux = FluxResult::new(j_cl, j_lambda, lambda);
    let pi = z1 * (1.0 + lambda * head);
    let integrand: Vec<f64> = w
        .iter()
        .zip(&profile.f_lambda)
        .map(|(w, f)| w * (1.0 + lambda * f))
        .collect();
    let cum = cumulative_trapezoid(&profile.x_samples, &integrand);
    let rho = (0..n)
        .map(|i| profile.rho_cl[i] * (1.0 - lambda * profile.f_lambda[i]) * (pi - flux.j_total_over_d * cum[i]))
        .collect();
    Ok(SteadyState1d {
        x: profile.x_samples.clone(),
        rho,
        flux,
        periodic_simplification: periodic,
    })
}

fn checked(r: crate::quadrature::Integral) -> Result<f64> {
    if r.error > LONGITUDINAL_TOL * r.value.abs() {
        return Err(Error::Quadrature {
            estimate: r.error,
            tolerance: LONGITUDINAL_TOL * r.value.abs(),
        });
    }
    Ok(r.value)
}

/// Harmonic potential view of channel parameters.
pub fn harmonic_potential(p: &ChannelParams) -> Harmonic {
    Harmonic::from(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Quartic;
    use approx::assert_relative_eq;

    fn params(k1: f64) -> ChannelParams {
        ChannelParams::natural(40.0, k1, 1.0).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let p = params(0.3);
        assert_relative_eq!(classical_free_energy(&p, 0.0), 0.5 * 1.3f64.ln(), epsilon = 1e-15);
        assert_eq!(classical_free_energy(&params(0.0), 0.37), 0.0);
        assert_relative_eq!(quantum_free_energy_correction(&p, 0.0), 2.6, epsilon = 1e-14);
        assert_relative_eq!(quantum_free_energy_correction(&params(0.0), 0.71), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn barrier_examples() {
        assert_relative_eq!(free_energy_barrier(0.3, 0.0).unwrap(), 0.309_519_604_203_11, epsilon = 1e-13);
        assert_relative_eq!(free_energy_barrier(0.3, 0.1).unwrap(), 0.429_519_604_203_11, epsilon = 1e-13);
        assert_eq!(free_energy_barrier(0.0, 0.7).unwrap(), 0.0);
        assert!(free_energy_barrier(1.0, 0.0).is_err());
    }

    #[test]
    fn density_examples() {
        let p = params(0.3);
        let d = equilibrium_density(&p, 0.0, 0.0, 1.0, 0.0);
        assert_relative_eq!(d.rho, 1.554_544_863_788_308_3, epsilon = 1e-14);
        let d = equilibrium_density(&p, 0.1, 0.0, 1.0, 0.0);
        assert_relative_eq!(d.rho, 1.294_544_863_788_308_3, epsilon = 1e-14);
        assert!(!d.expansion_broken);
        let flat = params(0.0);
        for x in [0.0, 0.2, 0.5] {
            let d = equilibrium_density(&flat, 0.05, 0.0, 1.0, x);
            assert_relative_eq!(d.rho, PI.sqrt() - 0.1, epsilon = 1e-14);
        }
        assert!(equilibrium_density(&p, 2.0, 0.0, 1.0, 0.0).expansion_broken);
    }

    #[test]
    fn enthalpic_examples() {
        assert_eq!(enthalpic_1d_barrier(1.0, 0.0, 1.0), 2.0);
        assert_relative_eq!(enthalpic_1d_barrier(1.0, 0.1f64.sqrt(), 1.0), 1.947_640_122_440_17, epsilon = 1e-14);
        assert!(enthalpic_1d_barrier(1.0, (12.0 / PI).sqrt(), 1.0).abs() < 1e-14);
    }

    #[test]
    fn flux_correction_oracle() {
        assert_relative_eq!(harmonic_flux_correction(0.0).unwrap(), -2.0, epsilon = 1e-14);
        assert_relative_eq!(harmonic_flux_correction(0.1).unwrap(), -2.005_007_841_9, epsilon = 1e-9);
        assert_relative_eq!(harmonic_flux_correction(0.3).unwrap(), -2.045_655_210_2, epsilon = 1e-9);
        assert_relative_eq!(harmonic_flux_correction(0.5).unwrap(), -2.130_409_740_4, epsilon = 1e-9);
    }

    #[test]
    fn general_path_matches_closed_form() {
        let p = params(0.3);
        let u = harmonic_potential(&p);
        let a = classical_free_energy_general(&u, p.beta, 0.25).unwrap();
        assert!((a - classical_free_energy(&p, 0.25)).abs() < 1e-8);
        let f = quantum_free_energy_correction_general(&u, p.beta, 0.3).unwrap();
        assert!((f - quantum_free_energy_correction(&p, 0.3)).abs() < 1e-6);
    }

    #[test]
    fn identities_hold_for_quartic() {
        let u = Quartic::new(40.0, 0.3, 1.0, 5.0).unwrap();
        for x in [0.05, 0.3, 0.71] {
            let (lhs, rhs) = transverse_force_identity(&u, 1.0, x).unwrap();
            assert!((lhs - rhs).abs() < 1e-6, "{lhs} vs {rhs}");
            let (v, scale) = vanishing_integral(&u, 1.0, x).unwrap();
            assert!(v.abs() < 1e-8 * scale.max(1.0));
        }
    }

    #[test]
    fn steady_state_equilibrium_and_antisymmetry() {
        let p = params(0.3);
        let s = steady_state_1d(&p, 0.05, 0.2, 0.2).unwrap();
        assert_eq!(s.flux.j_total_over_d, 0.0);
        for (x, r) in s.x.iter().zip(&s.rho).step_by(97) {
            let d = equilibrium_density_with(&p, 0.05, 0.2, 1.0, *x, DensityExpansion::Multiplicative);
            assert_relative_eq!(*r, d.rho, max_relative = 1e-12);
        }
        let a = steady_state_1d(&p, 0.05, 0.3, 0.1).unwrap();
        let b = steady_state_1d(&p, 0.05, 0.1, 0.3).unwrap();
        assert_eq!(a.flux.j_total_over_d, -b.flux.j_total_over_d);
        assert!(a.periodic_simplification);
    }

    #[test]
    fn profile_csv_header() {
        let prof = harmonic_profile(&params(0.3), 0.1, 5).unwrap();
        let mut out = Vec::new();
        prof.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("x,a0,f_lambda,total,rho\n"));
        assert_eq!(text.lines().count(), 6);
        assert_relative_eq!(prof.barrier(), free_energy_barrier(0.3, 0.1).unwrap(), epsilon = 1e-12);
    }
}
