//! Confining potentials `U(x, y)` periodic in `x` with period `L`.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::model::ChannelParams;

/// A soft transverse confinement, periodic along `x`.
///
/// `reference_stiffness` is the `k0` that sets `L_y = sqrt(2 / (beta k0))`;
/// `flat` is the same potential with the corrugation switched off and fixes
/// the additive constant of the classical free energy.
pub trait ChannelPotential: Send + Sync {
    fn value(&self, x: f64, y: f64) -> f64;
    fn dx(&self, x: f64, y: f64) -> f64;
    fn dy(&self, x: f64, y: f64) -> f64;
    fn dyy(&self, x: f64, y: f64) -> f64;
    fn dxx(&self, x: f64, y: f64) -> f64;
    fn period(&self) -> f64;
    fn reference_stiffness(&self) -> f64;
    fn flat(&self) -> Box<dyn ChannelPotential>;

    /// Transverse thermal length at inverse temperature `beta`.
    fn l_y(&self, beta: f64) -> f64 {
        (2.0 / (beta * self.reference_stiffness())).sqrt()
    }
}

/// `U = k(x) y^2 / 2` with `k(x) = k0 (1 + k1 cos(2 pi x / L))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub k0: f64,
    pub k1: f64,
    pub period: f64,
}

impl Harmonic {
    pub fn new(k0: f64, k1: f64, period: f64) -> Result<Self> {
        check_corrugation(k0, k1, period)?;
        Ok(Self { k0, k1, period })
    }

    pub fn stiffness(&self, x: f64) -> f64 {
        self.k0 * (1.0 + self.k1 * (2.0 * PI * x / self.period).cos())
    }

    fn stiffness_dx(&self, x: f64) -> f64 {
        let q = 2.0 * PI / self.period;
        -self.k0 * self.k1 * q * (q * x).sin()
    }

    fn stiffness_dxx(&self, x: f64) -> f64 {
        let q = 2.0 * PI / self.period;
        -self.k0 * self.k1 * q * q * (q * x).cos()
    }
}

impl From<&ChannelParams> for Harmonic {
    fn from(p: &ChannelParams) -> Self {
        Self {
            k0: p.k0,
            k1: p.k1,
            period: p.period,
        }
    }
}

impl ChannelPotential for Harmonic {
    fn value(&self, x: f64, y: f64) -> f64 {
        0.5 * self.stiffness(x) * y * y
    }
    fn dx(&self, x: f64, y: f64) -> f64 {
        0.5 * self.stiffness_dx(x) * y * y
    }
    fn dy(&self, x: f64, y: f64) -> f64 {
        self.stiffness(x) * y
    }
    fn dyy(&self, x: f64, _y: f64) -> f64 {
        self.stiffness(x)
    }
    fn dxx(&self, x: f64, y: f64) -> f64 {
        0.5 * self.stiffness_dxx(x) * y * y
    }
    fn period(&self) -> f64 {
        self.period
    }
    fn reference_stiffness(&self) -> f64 {
        self.k0
    }
    fn flat(&self) -> Box<dyn ChannelPotential> {
        Box::new(Self { k1: 0.0, ..*self })
    }
}

/// Anharmonic test channel `U = k(x) y^2 / 2 + g k(x) y^4 / 4`, same `k(x)`
/// as [`Harmonic`]. Used to exercise the general quadrature paths on a
/// non-Gaussian transverse profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartic {
    pub harmonic: Harmonic,
    pub g: f64,
}

impl Quartic {
    pub fn new(k0: f64, k1: f64, period: f64, g: f64) -> Result<Self> {
        if !(g >= 0.0) || !g.is_finite() {
            return Err(invalid("g", format!("must be finite and non-negative, got {g}")));
        }
        Ok(Self {
            harmonic: Harmonic::new(k0, k1, period)?,
            g,
        })
    }
}

impl ChannelPotential for Quartic {
    fn value(&self, x: f64, y: f64) -> f64 {
        let y2 = y * y;
        self.harmonic.stiffness(x) * y2 * (0.5 + 0.25 * self.g * y2)
    }
    fn dx(&self, x: f64, y: f64) -> f64 {
        let y2 = y * y;
        self.harmonic.stiffness_dx(x) * y2 * (0.5 + 0.25 * self.g * y2)
    }
    fn dy(&self, x: f64, y: f64) -> f64 {
        self.harmonic.stiffness(x) * y * (1.0 + self.g * y * y)
    }
    fn dyy(&self, x: f64, y: f64) -> f64 {
        self.harmonic.stiffness(x) * (1.0 + 3.0 * self.g * y * y)
    }
    fn dxx(&self, x: f64, y: f64) -> f64 {
        let y2 = y * y;
        self.harmonic.stiffness_dxx(x) * y2 * (0.5 + 0.25 * self.g * y2)
    }
    fn period(&self) -> f64 {
        self.harmonic.period
    }
    fn reference_stiffness(&self) -> f64 {
        self.harmonic.k0
    }
    fn flat(&self) -> Box<dyn ChannelPotential> {
        Box::new(Self {
            harmonic: Harmonic {
                k1: 0.0,
                ..self.harmonic
            },
            g: self.g,
        })
    }
}

fn check_corrugation(k0: f64, k1: f64, period: f64) -> Result<()> {
    if !(k0 > 0.0) || !k0.is_finite() {
        return Err(invalid("k0", format!("must be positive, got {k0}")));
    }
    if !(0.0..1.0).contains(&k1) {
        return Err(invalid("k1", format!("must satisfy 0 <= k1 < 1, got {k1}")));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(invalid("L", format!("must be positive, got {period}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(u: &dyn ChannelPotential, x: f64, y: f64) {
        let h = 1e-5;
        let ddx = (u.value(x + h, y) - u.value(x - h, y)) / (2.0 * h);
        let ddy = (u.value(x, y + h) - u.value(x, y - h)) / (2.0 * h);
        let ddyy = (u.dy(x, y + h) - u.dy(x, y - h)) / (2.0 * h);
        let ddxx = (u.dx(x + h, y) - u.dx(x - h, y)) / (2.0 * h);
        let scale = 1.0 + u.value(x, y).abs() * 100.0;
        assert!((ddx - u.dx(x, y)).abs() < 1e-6 * scale);
        assert!((ddy - u.dy(x, y)).abs() < 1e-6 * scale);
        assert!((ddyy - u.dyy(x, y)).abs() < 1e-6 * scale);
        assert!((ddxx - u.dxx(x, y)).abs() < 1e-5 * scale);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = Harmonic::new(3.0, 0.4, 1.0).unwrap();
        let q = Quartic::new(3.0, 0.4, 1.0, 0.7).unwrap();
        for &(x, y) in &[(0.1, 0.3), (0.37, -0.8), (0.8, 1.2)] {
            fd_check(&h, x, y);
            fd_check(&q, x, y);
        }
    }

    #[test]
    fn flat_reference_has_no_corrugation() {
        let q = Quartic::new(2.0, 0.5, 1.0, 1.0).unwrap();
        let f = q.flat();
        assert_eq!(f.value(0.0, 0.5), f.value(0.3, 0.5));
        assert_eq!(f.dx(0.2, 0.5), 0.0);
    }

    #[test]
    fn rejects_degenerate_corrugation() {
        assert!(Harmonic::new(1.0, 1.0, 1.0).is_err());
        assert!(Quartic::new(1.0, 0.2, 1.0, -1.0).is_err());
    }
}
