//! Channel parameters, derived length scales and regime-of-validity checks.
//!
//! Natural units are used throughout: the caller picks values for `hbar`,
//! `mass` and the period `L`, and every formula is evaluated literally in
//! those units. The defaults (`hbar = mass = L = 1`) match the way all sweep
//! drivers parameterize the problem.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Physical parameters of the corrugated harmonic channel
/// `U(x, y) = k(x) y^2 / 2`, `k(x) = k0 (1 + k1 cos(2 pi x / L))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub k0: f64,
    pub k1: f64,
    pub period: f64,
    pub beta: f64,
    pub hbar: f64,
    pub mass: f64,
}

impl ChannelParams {
    pub fn new(k0: f64, k1: f64, period: f64, beta: f64, hbar: f64, mass: f64) -> Result<Self> {
        let p = Self {
            k0,
            k1,
            period,
            beta,
            hbar,
            mass,
        };
        p.validate()?;
        Ok(p)
    }

    /// Natural units (`hbar = mass = 1`) with unit period.
    pub fn natural(k0: f64, k1: f64, beta: f64) -> Result<Self> {
        Self::new(k0, k1, 1.0, beta, 1.0, 1.0)
    }

    /// Builds parameters at a prescribed quantum parameter by inverting
    /// `Lambda(beta) = hbar^2 beta^2 k0 / (48 m)`.
    pub fn from_lambda(k0: f64, k1: f64, period: f64, lambda: f64, hbar: f64, mass: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid("Lambda", format!("must be positive and finite, got {lambda}")));
        }
        if !(k0 > 0.0) {
            return Err(invalid("k0", format!("must be positive, got {k0}")));
        }
        if !(hbar > 0.0) || !(mass > 0.0) {
            return Err(invalid("hbar/mass", "must be positive"));
        }
        let beta = beta_for_lambda(k0, lambda, hbar, mass);
        Self::new(k0, k1, period, beta, hbar, mass)
    }

    /// Base stiffness that realizes `L / L_omega = ratio` at fixed period,
    /// `hbar` and mass: `k0 = 16 hbar^2 ratio^4 / (m L^4)`.
    pub fn k0_for_ratio(ratio: f64, period: f64, hbar: f64, mass: f64) -> f64 {
        16.0 * hbar * hbar * ratio.powi(4) / (mass * period.powi(4))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.k0, self.k1, self.period, self.beta, self.hbar, self.mass]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("params", "all parameters must be finite"));
        }
        if !(self.k0 > 0.0) {
            return Err(invalid("k0", format!("must be positive, got {}", self.k0)));
        }
        if !(0.0..1.0).contains(&self.k1) {
            return Err(invalid(
                "k1",
                format!("must satisfy 0 <= k1 < 1 so that k(x) stays positive, got {}", self.k1),
            ));
        }
        if !(self.period > 0.0) {
            return Err(invalid("L", format!("must be positive, got {}", self.period)));
        }
        if !(self.beta > 0.0) {
            return Err(invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if !(self.hbar > 0.0) {
            return Err(invalid("hbar", format!("must be positive, got {}", self.hbar)));
        }
        if !(self.mass > 0.0) {
            return Err(invalid("mass", format!("must be positive, got {}", self.mass)));
        }
        Ok(())
    }

    /// Local stiffness `k(x)`.
    #[inline]
    pub fn stiffness(&self, x: f64) -> f64 {
        self.k0 * (1.0 + self.k1 * (2.0 * PI * x / self.period).cos())
    }

    #[inline]
    pub fn stiffness_dx(&self, x: f64) -> f64 {
        let q = 2.0 * PI / self.period;
        -self.k0 * self.k1 * q * (q * x).sin()
    }

    #[inline]
    pub fn stiffness_dxx(&self, x: f64) -> f64 {
        let q = 2.0 * PI / self.period;
        -self.k0 * self.k1 * q * q * (q * x).cos()
    }

    pub fn scales(&self) -> DerivedScales {
        derive_scales(self)
    }

    /// Same channel at a different inverse temperature.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.k0, self.k1, self.period, beta, self.hbar, self.mass)
    }

    /// Same channel with the temperature chosen so that the quantum
    /// parameter equals `lambda`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::from_lambda(self.k0, self.k1, self.period, lambda, self.hbar, self.mass)
    }

    /// `L / L_omega` for these parameters.
    pub fn geometry_ratio(&self) -> f64 {
        self.period / self.scales().l_omega
    }
}

/// `beta` such that `Lambda = hbar^2 beta^2 k0 / (48 m)`.
pub fn beta_for_lambda(k0: f64, lambda: f64, hbar: f64, mass: f64) -> f64 {
    (48.0 * mass * lambda / (hbar * hbar * k0)).sqrt()
}

/// Harmonic channel potential `U(x, y) = k(x) y^2 / 2`.
pub fn potential_eval(p: &ChannelParams, x: f64, y: f64) -> f64 {
    0.5 * p.stiffness(x) * y * y
}

/// Length and energy scales derived from [`ChannelParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedScales {
    /// Squared thermal wavelength `2 pi hbar^2 beta / m`.
    pub lambda_t2: f64,
    /// Transverse thermal length `sqrt(2 / (beta k0))`.
    pub l_y: f64,
    /// Oscillator length `2 sqrt(hbar / (m omega))`.
    pub l_omega: f64,
    /// Quantum expansion parameter `lambda_t2 / (48 pi l_y^2)`.
    pub lambda: f64,
    /// Trap frequency `sqrt(k0 / m)`.
    pub omega: f64,
}

pub fn derive_scales(p: &ChannelParams) -> DerivedScales {
    let lambda_t2 = 2.0 * PI * p.hbar * p.hbar * p.beta / p.mass;
    let l_y2 = 2.0 / (p.beta * p.k0);
    let omega = (p.k0 / p.mass).sqrt();
    DerivedScales {
        lambda_t2,
        l_y: l_y2.sqrt(),
        l_omega: 2.0 * (p.hbar / (p.mass * omega)).sqrt(),
        lambda: lambda_t2 / (48.0 * PI * l_y2),
        omega,
    }
}

/// Estimate of the quantum parameter for a cold-atom trap given in the
/// usual laboratory units (temperature in uK, depth in uK k_B, optical
/// wavelength in um, mass in atomic units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentEstimate {
    /// `beta k0 lambda_T^2`
    pub beta_k0_lambda_t2: f64,
    pub lambda: f64,
}

pub fn lambda_from_experiment(t_bar: f64, dv_bar: f64, lam_bar: f64, m_bar: f64) -> Result<ExperimentEstimate> {
    for (name, v) in [("T", t_bar), ("dV", dv_bar), ("lambda", lam_bar), ("m", m_bar)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid("experiment", format!("{name} must be positive, got {v}")));
        }
    }
    let combo = 3.0 * dv_bar / (t_bar * t_bar * m_bar * lam_bar * lam_bar);
    Ok(lambda_from_combination(combo))
}

/// `Lambda = beta k0 lambda_T^2 / (96 pi)`.
pub fn lambda_from_combination(beta_k0_lambda_t2: f64) -> ExperimentEstimate {
    ExperimentEstimate {
        beta_k0_lambda_t2,
        lambda: beta_k0_lambda_t2 / (96.0 * PI),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub ok: bool,
    /// Left side over right side of the inequality.
    pub ratio: f64,
}

/// Regime-of-validity report. Never fails; callers decide what to do with it.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    /// `beta k0 lambda_T^2 << 48 pi`
    pub lambda_small: Margin,
    /// `beta k0 L^2 >> 4 k1 pi / (1 - k1)`
    pub lengthscale_sep: Margin,
    pub messages: Vec<String>,
}

impl ValidityReport {
    pub fn all_ok(&self) -> bool {
        self.lambda_small.ok && self.lengthscale_sep.ok
    }
}

pub const SMALL_RATIO: f64 = 0.1;
pub const LARGE_RATIO: f64 = 10.0;

pub fn check_validity(p: &ChannelParams) -> ValidityReport {
    let s = derive_scales(p);
    validity_from_combinations(p.beta * p.k0 * s.lambda_t2, p.beta * p.k0 * p.period * p.period, p.k1)
}

pub(crate) fn validity_from_combinations(bk_lt2: f64, bk_l2: f64, k1: f64) -> ValidityReport {
    let r1 = bk_lt2 / (48.0 * PI);
    let rhs = 4.0 * k1 * PI / (1.0 - k1);
    let r2 = if rhs == 0.0 { f64::INFINITY } else { bk_l2 / rhs };
    let lambda_small = Margin {
        ok: r1 < SMALL_RATIO,
        ratio: r1,
    };
    let lengthscale_sep = Margin {
        ok: r2 > LARGE_RATIO,
        ratio: r2,
    };
    let mut messages = Vec::new();
    if !lambda_small.ok {
        messages.push(format!(
            "beta k0 lambda_T^2 / (48 pi) = {r1:.4} is not small; first-order quantum corrections are unreliable"
        ));
    }
    if !lengthscale_sep.ok {
        messages.push(format!(
            "beta k0 L^2 / (4 k1 pi / (1 - k1)) = {r2:.4} is not large; longitudinal and transverse scales are not separated"
        ));
    }
    ValidityReport {
        lambda_small,
        lengthscale_sep,
        messages,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> ChannelParams {
        ChannelParams::natural(1.0, 0.3, 1.0).unwrap()
    }

    #[test]
    fn potential_values() {
        assert_relative_eq!(potential_eval(&unit(), 0.0, 1.0), 0.65, epsilon = 1e-15);
        assert_eq!(potential_eval(&unit(), 0.5, 0.0), 0.0);
        let flat = ChannelParams::natural(1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(potential_eval(&flat, 0.37, 2.0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn unit_scales() {
        let s = derive_scales(&unit());
        assert_relative_eq!(s.lambda_t2, 2.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(s.l_y * s.l_y, 2.0, epsilon = 1e-14);
        assert_relative_eq!(s.lambda, 1.0 / 48.0, epsilon = 1e-15);
        assert_relative_eq!(s.omega, 1.0);
        assert_relative_eq!(s.l_omega, 2.0);
    }

    #[test]
    fn lambda_scales_with_beta_squared() {
        let a = derive_scales(&unit()).lambda;
        let b = derive_scales(&unit().with_beta(4.0).unwrap()).lambda;
        assert_relative_eq!(b / a, 16.0, epsilon = 1e-12);
    }

    #[test]
    fn from_lambda_roundtrip() {
        let p = ChannelParams::from_lambda(1.05e6, 0.3, 1.0, 0.05, 1.0, 1.0).unwrap();
        assert_relative_eq!(p.scales().lambda, 0.05, epsilon = 1e-14);
        let k0 = ChannelParams::k0_for_ratio(16.0, 1.0, 1.0, 1.0);
        let q = ChannelParams::from_lambda(k0, 0.3, 1.0, 0.1, 1.0, 1.0).unwrap();
        assert_relative_eq!(q.geometry_ratio(), 16.0, epsilon = 1e-12);
    }

    #[test]
    fn experiment_calculator() {
        assert_relative_eq!(lambda_from_combination(1e3).lambda, 3.3157279810811528, epsilon = 1e-12);
        assert_eq!(lambda_from_combination(0.0).lambda, 0.0);
        let e = lambda_from_experiment(1.0, 10.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(e.beta_k0_lambda_t2, 30.0);
        assert_relative_eq!(e.lambda, 0.09947183943243458, epsilon = 1e-12);
        assert!(lambda_from_experiment(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn validity_margins() {
        let r = validity_from_combinations(1.0, 1e4, 0.3);
        assert_relative_eq!(r.lambda_small.ratio, 1.0 / (48.0 * PI), epsilon = 1e-15);
        assert!(r.lambda_small.ok);
        let flat = validity_from_combinations(1.0, 1.0, 0.0);
        assert!(flat.lengthscale_sep.ok);
        assert!(flat.lengthscale_sep.ratio.is_infinite());
        let edge = validity_from_combinations(48.0 * PI, 1e4, 0.3);
        assert_relative_eq!(edge.lambda_small.ratio, 1.0);
        assert!(!edge.lambda_small.ok);
        assert!(!edge.messages.is_empty());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ChannelParams::natural(1.0, 1.0, 1.0).is_err());
        assert!(ChannelParams::natural(-1.0, 0.2, 1.0).is_err());
        assert!(ChannelParams::natural(1.0, 0.2, 0.0).is_err());
        assert!(ChannelParams::new(1.0, 0.2, 1.0, 1.0, 0.0, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn periodic_and_even(x in -3.0f64..3.0, y in -2.0f64..2.0, k1 in 0.0f64..0.95) {
            let p = ChannelParams::natural(2.5, k1, 1.0).unwrap();
            let u = potential_eval(&p, x, y);
            proptest::prop_assert!((potential_eval(&p, x + p.period, y) - u).abs() <= 1e-12 * u.abs().max(1.0));
            proptest::prop_assert_eq!(potential_eval(&p, x, -y), u);
        }

        #[test]
        fn thermal_wavelength_covariance(c in 0.1f64..10.0) {
            let p = ChannelParams::natural(1.0, 0.2, 1.0).unwrap();
            let q = p.with_beta(c).unwrap();
            let ratio = derive_scales(&q).lambda_t2 / derive_scales(&p).lambda_t2;
            proptest::prop_assert!((ratio - c).abs() < 1e-12 * c);
        }

        #[test]
        fn classical_limit(beta in 1e-8f64..1e-4) {
            let p = ChannelParams::natural(1.0, 0.2, beta).unwrap();
            proptest::prop_assert!(derive_scales(&p).lambda < 1e-8);
        }
    }
}
