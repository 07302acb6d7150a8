//! Rectangular lattice and the nearest-neighbour single-particle Hamiltonian.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::model::ChannelParams;

/// Boundary condition along the channel axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BoundaryX {
    #[default]
    Periodic,
    Open,
}

impl fmt::Display for BoundaryX {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Periodic => "periodic",
            Self::Open => "open",
        })
    }
}

impl FromStr for BoundaryX {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Self::Periodic),
            "open" => Ok(Self::Open),
            other => Err(invalid("bc", format!("expected `periodic` or `open`, got `{other}`"))),
        }
    }
}

/// Cell-centred grid: `x_i = dx (i + 1/2)`, `y_j = dy (j - (My - 1) / 2)`
/// for zero-based `i`, `j`. Sites are numbered `i * My + j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub mx: usize,
    pub my: usize,
    pub dx: f64,
    pub dy: f64,
    pub ycut: f64,
    pub bc_x: BoundaryX,
}

impl GridSpec {
    /// Grid over one period `[0, L]` and `[-ycut, ycut]`.
    pub fn new(mx: usize, my: usize, period: f64, ycut: f64, bc_x: BoundaryX) -> Result<Self> {
        if mx == 0 {
            return Err(invalid("Mx", "must be positive"));
        }
        if my == 0 || my.is_multiple_of(2) {
            return Err(invalid("My", format!("must be odd, got {my}")));
        }
        if !(period > 0.0) || !(ycut > 0.0) {
            return Err(invalid("grid", "period and Ycut must be positive"));
        }
        Ok(Self {
            mx,
            my,
            dx: period / mx as f64,
            dy: 2.0 * ycut / my as f64,
            ycut,
            bc_x,
        })
    }

    pub fn len(&self) -> usize {
        self.mx * self.my
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn period(&self) -> f64 {
        self.dx * self.mx as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.dx * (i as f64 + 0.5)
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.dy * (j as f64 - (self.my as f64 - 1.0) / 2.0)
    }

    #[inline]
    pub fn site(&self, i: usize, j: usize) -> usize {
        i * self.my + j
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.mx).map(|i| self.x(i)).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.my).map(|j| self.y(j)).collect()
    }

    /// Hopping amplitudes `(Jx, Jy) = hbar^2 / (2 m d^2)`.
    pub fn hoppings(&self, hbar: f64, mass: f64) -> (f64, f64) {
        let c = hbar * hbar / (2.0 * mass);
        (c / (self.dx * self.dx), c / (self.dy * self.dy))
    }
}

/// Automatic transverse cutoff `4 max(L_y, L_omega)`.
pub fn auto_ycut(p: &ChannelParams) -> f64 {
    let s = p.scales();
    4.0 * s.l_y.max(s.l_omega)
}

/// Grid for the harmonic channel. `ycut` defaults to [`auto_ycut`]; an
/// override below `2 L_y` is rejected.
pub fn build_grid(p: &ChannelParams, mx: usize, my: usize, bc_x: BoundaryX, ycut: Option<f64>) -> Result<GridSpec> {
    if mx < 2 {
        return Err(invalid("Mx", format!("need at least 2 sites, got {mx}")));
    }
    if my < 3 || my.is_multiple_of(2) {
        return Err(invalid("My", format!("need an odd count of at least 3, got {my}")));
    }
    let ly = p.scales().l_y;
    let cut = match ycut {
        Some(c) if c < 2.0 * ly => {
            return Err(invalid(
                "Ycut",
                format!("override {c} is below 2 L_y = {}", 2.0 * ly),
            ))
        }
        Some(c) => c,
        None => auto_ycut(p),
    };
    GridSpec::new(mx, my, p.period, cut, bc_x)
}

/// Real symmetric Hamiltonian stored as diagonal plus upper-triangle hoppings.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    pub dim: usize,
    pub diag: Vec<f64>,
    /// `(row, col, value)` with `row < col`.
    pub upper: Vec<(usize, usize, f64)>,
}

impl HamiltonianMatrix {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.diag.clone()));
        for &(r, c, v) in &self.upper {
            m[(r, c)] += v;
            m[(c, r)] += v;
        }
        m
    }

    /// `H v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.diag.iter().zip(v).map(|(d, x)| d * x).collect();
        for &(r, c, h) in &self.upper {
            out[r] += h * v[c];
            out[c] += h * v[r];
        }
        out
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let d: f64 = self.diag.iter().map(|v| v * v).sum();
        let o: f64 = self.upper.iter().map(|(_, _, v)| 2.0 * v * v).sum();
        (d + o).sqrt()
    }

    /// Number of stored entries in the busiest row, diagonal included.
    pub fn max_row_entries(&self) -> usize {
        let mut count = vec![1usize; self.dim];
        for &(r, c, _) in &self.upper {
            count[r] += 1;
            count[c] += 1;
        }
        count.into_iter().max().unwrap_or(0)
    }
}

/// Hamiltonian of the harmonic channel on grid `g`.
pub fn assemble_hamiltonian(g: &GridSpec, p: &ChannelParams) -> HamiltonianMatrix {
    assemble_with_potential(g, p.hbar, p.mass, |x, y| crate::model::potential_eval(p, x, y))
}

/// Onsite `2 Jx + 2 Jy + U(x_i, y_j)`, hoppings `-Jx`, `-Jy`. Hoppings that
/// coincide (two-site periodic ring) are accumulated; a ring of one site
/// folds its hopping into the diagonal.
pub fn assemble_with_potential<U: Fn(f64, f64) -> f64>(g: &GridSpec, hbar: f64, mass: f64, u: U) -> HamiltonianMatrix {
    let (jx, jy) = g.hoppings(hbar, mass);
    let n = g.len();
    let mut diag = vec![0.0; n];
    let mut off: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut add = |a: usize, b: usize, v: f64, diag: &mut [f64]| {
        if a == b {
            diag[a] += v;
        } else {
            *off.entry((a.min(b), a.max(b))).or_insert(0.0) += v;
        }
    };
    for i in 0..g.mx {
        let x = g.x(i);
        for j in 0..g.my {
            let s = g.site(i, j);
            diag[s] += 2.0 * jx + 2.0 * jy + u(x, g.y(j));
            if j + 1 < g.my {
                add(s, g.site(i, j + 1), -jy, &mut diag);
            }
            if i + 1 < g.mx {
                add(s, g.site(i + 1, j), -jx, &mut diag);
            } else if g.bc_x == BoundaryX::Periodic {
                add(s, g.site(0, j), -jx, &mut diag);
            }
        }
    }
    HamiltonianMatrix {
        dim: n,
        diag,
        upper: off.into_iter().map(|((r, c), v)| (r, c, v)).collect(),
    }
}
