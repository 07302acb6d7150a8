//! Finite-volume solver for the 1D and 2D quantum Smoluchowski equations
//! `dp/dt = div[ div(D_qm p) + p beta grad U ]` (time in units of `1/D_cl`).
//!
//! Face fluxes use exponential fitting (Scharfetter-Gummel) on `q = D p`,
//! which keeps the update positive, conserves mass to round-off and makes
//! the discrete classical equilibrium exactly `exp(-beta U)`.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::grid::{BoundaryX, GridSpec};
use crate::model::ChannelParams;

/// Relative density change per unit time at which marching stops.
pub const STEADY_TOL: f64 = 1e-10;
const MAX_STEPS: usize = 400;

/// Bernoulli function `z / (e^z - 1)`.
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-6 {
        1.0 - 0.5 * z + z * z / 12.0
    } else {
        z / z.exp_m1()
    }
}

/// Banded matrix with equal lower and upper bandwidth, row-major storage.
#[derive(Debug, Clone)]
struct Banded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Banded {
    fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.bw >= r && c <= r + self.bw);
        r * (2 * self.bw + 1) + (c + self.bw - r)
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        let i = self.idx(r, c);
        self.data[i] += v;
    }

    /// In-place LU without pivoting. Safe for the column diagonally
    /// dominant M-matrices produced here.
    fn factor(&mut self) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if pivot.abs() < 1e-300 {
                return Err(Error::Singular(format!("zero pivot at row {k}")));
            }
            let end = (k + bw + 1).min(n);
            for i in k + 1..end {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[ik] = l;
                for j in k + 1..end {
                    let kj = self.idx(k, j);
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * self.data[kj];
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::needless_range_loop)]
    fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let start = i.saturating_sub(bw);
            let mut s = b[i];
            for j in start..i {
                s -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + bw + 1).min(n);
            let mut s = b[i];
            for j in i + 1..end {
                s -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
    }
}

/// One conservative face: flux from cell `a` to cell `b` is
/// `(wa q_a - wb q_b)` with `q = D p` evaluated per direction.
#[derive(Debug, Clone, Copy)]
struct Face {
    a: usize,
    b: usize,
    /// Coefficient of `p_a` in the flux.
    ca: f64,
    /// Coefficient of `p_b` in the flux.
    cb: f64,
}

/// Linear conservative operator `dp/dt = sum over faces`.
#[derive(Debug, Clone)]
struct Operator {
    n: usize,
    faces: Vec<Face>,
    /// Position of each cell in the banded ordering.
    order: Vec<usize>,
    bw: usize,
}

impl Operator {
    fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for f in &self.faces {
            let flux = f.ca * p[f.a] - f.cb * p[f.b];
            out[f.a] -= flux;
            out[f.b] += flux;
        }
        out
    }

    fn max_face_flux(&self, p: &[f64]) -> f64 {
        self.faces
            .iter()
            .map(|f| (f.ca * p[f.a] - f.cb * p[f.b]).abs())
            .fold(0.0, f64::max)
    }

    /// `I - dt M` in banded form.
    fn implicit_matrix(&self, dt: f64) -> Banded {
        let mut m = Banded::zeros(self.n, self.bw);
        for r in 0..self.n {
            let o = self.order[r];
            m.add(o, o, 1.0);
        }
        for f in &self.faces {
            let (a, b) = (self.order[f.a], self.order[f.b]);
            // d p_a/dt gets -ca p_a + cb p_b, d p_b/dt gets +ca p_a - cb p_b
            m.add(a, a, dt * f.ca);
            m.add(a, b, -dt * f.cb);
            m.add(b, a, -dt * f.ca);
            m.add(b, b, dt * f.cb);
        }
        m
    }

    fn step(&self, p: &[f64], dt: f64) -> Result<Vec<f64>> {
        let mut m = self.implicit_matrix(dt);
        m.factor()?;
        let mut b = vec![0.0; self.n];
        for (i, v) in p.iter().enumerate() {
            b[self.order[i]] = *v;
        }
        m.solve(&mut b);
        let mut q: Vec<f64> = (0..self.n).map(|i| b[self.order[i]]).collect();
        // One round of iterative refinement against the flux-form residual
        // keeps factorization roundoff out of the total mass.
        let mq = self.apply(&q);
        let mut r = vec![0.0; self.n];
        for i in 0..self.n {
            r[self.order[i]] = p[i] - q[i] + dt * mq[i];
        }
        m.solve(&mut r);
        for (i, v) in q.iter_mut().enumerate() {
            *v += r[self.order[i]];
        }
        Ok(q)
    }
}

fn sg_face(a: usize, b: usize, h: f64, dphi: f64, da: f64, db: f64) -> Face {
    Face {
        a,
        b,
        ca: bernoulli(dphi) * da / (h * h),
        cb: bernoulli(-dphi) * db / (h * h),
    }
}

/// Result of marching to stationarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchStats {
    pub steps: usize,
    pub final_dt: f64,
    /// Relative change per unit time at the last step.
    pub change_rate: f64,
    /// Largest face flux at the end over the largest at the start.
    pub flux_ratio: f64,
    /// `|sum p_end - sum p_start| / sum p_start`.
    pub mass_drift: f64,
    /// `max |M p| / max p` for the final density.
    pub residual: f64,
}

fn march(op: &Operator, p0: Vec<f64>, dt0: f64) -> Result<(Vec<f64>, MarchStats)> {
    let mass0: f64 = p0.iter().sum();
    let flux0 = op.max_face_flux(&p0).max(f64::MIN_POSITIVE);
    let mut p = p0;
    let mut dt = dt0;
    for step in 1..=MAX_STEPS {
        let next = op.step(&p, dt)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepControl { dt });
        }
        let scale = next.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let change = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let rate = change / (scale * dt);
        p = next;
        if rate < STEADY_TOL {
            let mass: f64 = p.iter().sum();
            return Ok((
                p.clone(),
                MarchStats {
                    steps: step,
                    final_dt: dt,
                    change_rate: rate,
                    flux_ratio: op.max_face_flux(&p) / flux0,
                    mass_drift: (mass - mass0).abs() / mass0,
                    residual: op.apply(&p).iter().map(|v| v.abs()).fold(0.0, f64::max) / scale,
                },
            ));
        }
        dt *= 2.0;
    }
    Err(Error::StepControl { dt })
}

// ---------------------------------------------------------------------------
// 1D

/// Closed-form first-order equilibrium
/// `exp(-beta U) (1 - 2 Lambda l^2 beta U'' + Lambda l^2 (beta U')^2)`,
/// unnormalized.
pub fn equilibrium_1d_closed_form(u: f64, du: f64, d2u: f64, lambda: f64, beta: f64, length: f64) -> f64 {
    let l2 = length * length;
    (-beta * u).exp() * (1.0 - 2.0 * lambda * l2 * beta * d2u + lambda * l2 * (beta * du).powi(2))
}

/// 1D equilibrium on `n` cells of `[-half_width, half_width]` with no-flux ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium1d {
    pub y: Vec<f64>,
    /// Long-time limit of the PDE, normalized to unit mass.
    pub p_pde: Vec<f64>,
    /// Closed form, normalized to unit mass.
    pub p_closed: Vec<f64>,
    pub stats: MarchStats,
}

impl Equilibrium1d {
    /// `max |p_pde - p_closed| / max p_closed`.
    pub fn max_deviation(&self) -> f64 {
        let peak = self.p_closed.iter().copied().fold(0.0, f64::max);
        self.p_pde
            .iter()
            .zip(&self.p_closed)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / peak
    }
}

/// `D = 1 / (1 - 2 Lambda l^2 beta U'')`; `u`, `du`, `d2u` are `U` and its
/// derivatives.
#[allow(clippy::too_many_arguments)]
pub fn solve_equilibrium_1d(
    u: impl Fn(f64) -> f64,
    du: impl Fn(f64) -> f64,
    d2u: impl Fn(f64) -> f64,
    lambda: f64,
    beta: f64,
    length: f64,
    half_width: f64,
    n: usize,
) -> Result<Equilibrium1d> {
    if n < 3 {
        return Err(invalid("n", "need at least three cells"));
    }
    let h = 2.0 * half_width / n as f64;
    let y: Vec<f64> = (0..n).map(|i| -half_width + h * (i as f64 + 0.5)).collect();
    let d: Vec<f64> = y
        .iter()
        .map(|&s| diffusion_factor(lambda, length * length * beta * d2u(s), &format!("y = {s}")))
        .collect::<Result<_>>()?;
    let bu: Vec<f64> = y.iter().map(|&s| beta * u(s)).collect();
    let faces = (0..n - 1)
        .map(|i| {
            let df = 0.5 * (d[i] + d[i + 1]);
            sg_face(i, i + 1, h, (bu[i + 1] - bu[i]) / df, d[i], d[i + 1])
        })
        .collect();
    let op = Operator {
        n,
        faces,
        order: (0..n).collect(),
        bw: 1,
    };
    let p0 = vec![1.0 / (n as f64 * h); n];
    let (p, stats) = march(&op, p0, h * h)?;
    let closed: Vec<f64> = y
        .iter()
        .map(|&s| equilibrium_1d_closed_form(u(s), du(s), d2u(s), lambda, beta, length))
        .collect();
    Ok(Equilibrium1d {
        p_pde: normalize(&p, h),
        p_closed: normalize(&closed, h),
        y,
        stats,
    })
}

fn normalize(p: &[f64], h: f64) -> Vec<f64> {
    let m: f64 = p.iter().sum::<f64>() * h;
    p.iter().map(|v| v / m).collect()
}

fn diffusion_factor(lambda: f64, curvature: f64, location: &str) -> Result<f64> {
    let den = 1.0 - 2.0 * lambda * curvature;
    if !(den > 0.0) {
        return Err(Error::DiffusionFactor {
            location: location.to_string(),
        });
    }
    Ok(1.0 / den)
}

// ---------------------------------------------------------------------------
// 2D

/// Stationary 2D density with the quantum diffusion factors used to get it.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeField {
    pub grid: GridSpec,
    /// Density per cell, site order `i * My + j`, normalized to unit mass.
    pub p: Vec<f64>,
    pub d_x: Vec<f64>,
    pub d_y: Vec<f64>,
    pub stats: MarchStats,
}

impl PdeField {
    /// `rho(x_i) = sum_j p dy`, normalized so that `sum rho dx = 1`.
    pub fn marginal(&self) -> Vec<f64> {
        let g = &self.grid;
        (0..g.mx)
            .map(|i| (0..g.my).map(|j| self.p[g.site(i, j)]).sum::<f64>() * g.dy)
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.p.iter().sum::<f64>() * self.grid.dx * self.grid.dy
    }

    /// CSV with columns `x,y,p`.
    pub fn write_field_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,p")?;
        let g = &self.grid;
        for i in 0..g.mx {
            for j in 0..g.my {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", g.x(i), g.y(j), self.p[g.site(i, j)])?;
            }
        }
        Ok(())
    }

    /// CSV with columns `x,rho`.
    pub fn write_marginal_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,rho")?;
        for (i, r) in self.marginal().iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.x(i), r)?;
        }
        Ok(())
    }
}

/// Default transverse half-width: the Boltzmann factor at the cutoff is
/// `exp(-16)` at the widest cross-section.
pub fn pde_ycut(p: &ChannelParams) -> f64 {
    4.0 * p.scales().l_y / (1.0 - p.k1).sqrt()
}

/// Positions for the interleaved column ordering `0, Mx-1, 1, Mx-2, ...`,
/// which keeps periodic neighbours within two columns of each other.
fn interleaved(mx: usize) -> Vec<usize> {
    let half = mx.div_ceil(2);
    (0..mx)
        .map(|i| if i < half { 2 * i } else { 2 * (mx - 1 - i) + 1 })
        .collect()
}

struct Operator2d {
    grid: GridSpec,
    op: Operator,
    d_x: Vec<f64>,
    d_y: Vec<f64>,
}

fn operator_2d(p: &ChannelParams, lambda: f64, mx: usize, my: usize, ycut: Option<f64>) -> Result<Operator2d> {
    if mx < 3 {
        return Err(invalid("Mx", "need at least three columns"));
    }
    let g = GridSpec::new(mx, my, p.period, ycut.unwrap_or_else(|| pde_ycut(p)), BoundaryX::Periodic)?;
    let beta = p.beta;
    let ly2 = p.scales().l_y.powi(2);
    let n = g.len();
    let mut bu = vec![0.0; n];
    let mut d_x = vec![0.0; n];
    let mut d_y = vec![0.0; n];
    for i in 0..mx {
        let x = g.x(i);
        for j in 0..my {
            let y = g.y(j);
            let s = g.site(i, j);
            bu[s] = beta * 0.5 * p.stiffness(x) * y * y;
            let loc = format!("x = {x:.4}, y = {y:.4}");
            d_x[s] = diffusion_factor(lambda, ly2 * beta * 0.5 * p.stiffness_dxx(x) * y * y, &loc)?;
            d_y[s] = diffusion_factor(lambda, ly2 * beta * p.stiffness(x), &loc)?;
        }
    }
    let mut faces = Vec::with_capacity(2 * n);
    for i in 0..mx {
        let ip = (i + 1) % mx;
        for j in 0..my {
            let a = g.site(i, j);
            let b = g.site(ip, j);
            let df = 0.5 * (d_x[a] + d_x[b]);
            faces.push(sg_face(a, b, g.dx, (bu[b] - bu[a]) / df, d_x[a], d_x[b]));
            if j + 1 < my {
                let c = g.site(i, j + 1);
                let df = 0.5 * (d_y[a] + d_y[c]);
                faces.push(sg_face(a, c, g.dy, (bu[c] - bu[a]) / df, d_y[a], d_y[c]));
            }
        }
    }
    let pos = interleaved(mx);
    let order = (0..n).map(|s| pos[s / my] * my + s % my).collect();
    Ok(Operator2d {
        grid: g,
        op: Operator {
            n,
            faces,
            order,
            bw: 2 * my,
        },
        d_x,
        d_y,
    })
}

/// Steady state of the 2D equation for the harmonic channel, periodic in
/// `x` and no-flux at `|y| = ycut`. `beta U` uses `p.beta`; `lambda` is the
/// quantum parameter entering `D_x = 1 / (1 - 2 Lambda L_y^2 beta U_xx)` and
/// `D_y = 1 / (1 - 2 Lambda L_y^2 beta k(x))`, so `lambda = 0` gives the
/// classical equation at the same temperature.
pub fn solve_steady_2d(p: &ChannelParams, lambda: f64, mx: usize, my: usize, ycut: Option<f64>) -> Result<PdeField> {
    let Operator2d { grid: g, op, d_x, d_y } = operator_2d(p, lambda, mx, my, ycut)?;
    // Start from the uncorrugated Boltzmann profile.
    let mut p0: Vec<f64> = (0..g.len())
        .map(|s| (-p.beta * 0.5 * p.k0 * g.y(s % my).powi(2)).exp())
        .collect();
    let m0: f64 = p0.iter().sum::<f64>() * g.dx * g.dy;
    p0.iter_mut().for_each(|v| *v /= m0);
    let (pp, stats) = march(&op, p0, 0.25 * g.dy * g.dy)?;
    let mass: f64 = pp.iter().sum::<f64>() * g.dx * g.dy;
    Ok(PdeField {
        grid: g,
        p: pp.into_iter().map(|v| v / mass).collect(),
        d_x,
        d_y,
        stats,
    })
}

/// Relative mass drift after `steps` implicit steps of size `dt` from a
/// rough initial condition.
pub fn mass_drift_2d(p: &ChannelParams, lambda: f64, mx: usize, my: usize, steps: usize, dt: f64) -> Result<f64> {
    let Operator2d { op, .. } = operator_2d(p, lambda, mx, my, None)?;
    let mut q: Vec<f64> = (0..op.n).map(|s| 1.0 + 0.5 * ((s * 7919) % 13) as f64).collect();
    let m0: f64 = q.iter().sum();
    for _ in 0..steps {
        q = op.step(&q, dt)?;
    }
    let m1: f64 = q.iter().sum();
    Ok((m1 - m0).abs() / m0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_is_smooth() {
        assert!((bernoulli(0.0) - 1.0).abs() < 1e-15);
        assert!((bernoulli(1e-7) - 1e-7 / (1e-7f64).exp_m1()).abs() < 1e-12);
        assert!((bernoulli(2.0) - 2.0 / (2f64.exp() - 1.0)).abs() < 1e-15);
        assert!((bernoulli(-3.0) - 3f64.exp() * bernoulli(3.0)).abs() < 1e-12);
    }

    #[test]
    fn banded_lu_matches_dense() {
        let n = 9;
        let mut b = Banded::zeros(n, 2);
        for i in 0..n {
            b.add(i, i, 4.0);
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
                b.add(i + 1, i, -0.5);
            }
            if i + 2 < n {
                b.add(i, i + 2, -0.25);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let mut rhs = vec![0.0; n];
        #[allow(clippy::needless_range_loop)]
        for r in 0..n {
            for c in r.saturating_sub(2)..(r + 3).min(n) {
                rhs[r] += b.data[b.idx(r, c)] * x[c];
            }
        }
        b.factor().unwrap();
        b.solve(&mut rhs);
        for (a, e) in rhs.iter().zip(&x) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn interleaving_bandwidth() {
        for mx in [3, 4, 7, 10] {
            let pos = interleaved(mx);
            let mut seen = pos.clone();
            seen.sort();
            assert_eq!(seen, (0..mx).collect::<Vec<_>>());
            for i in 0..mx {
                let d = pos[i].abs_diff(pos[(i + 1) % mx]);
                assert!(d <= 2, "mx {mx} i {i} d {d}");
            }
        }
    }

    #[test]
    fn classical_1d_is_boltzmann() {
        let r = solve_equilibrium_1d(|y| 0.5 * y * y, |y| y, |_| 1.0, 0.0, 1.0, 1.0, 6.0, 120).unwrap();
        let h = 12.0 / 120.0;
        let exact: Vec<f64> = r.y.iter().map(|y| (-0.5 * y * y).exp()).collect();
        let exact = normalize(&exact, h);
        for (a, b) in r.p_pde.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-9 * b.max(1e-3));
        }
    }

    #[test]
    fn uniform_potential_gives_uniform_density() {
        let r = solve_equilibrium_1d(|_| 0.0, |_| 0.0, |_| 0.0, 0.05, 1.0, 1.0, 1.0, 40).unwrap();
        for v in &r.p_pde {
            assert!((v - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_invalid_diffusion() {
        let r = solve_equilibrium_1d(|y| 0.5 * y * y, |y| y, |_| 1.0, 0.6, 1.0, 1.0, 4.0, 40);
        assert!(matches!(r, Err(Error::DiffusionFactor { .. })));
    }

    #[test]
    fn quantum_1d_close_to_closed_form() {
        for lambda in [0.01, 0.02, 0.04] {
            let r = solve_equilibrium_1d(|y| 0.5 * y * y, |y| y, |_| 1.0, lambda, 1.0, 1.0, 6.0, 240).unwrap();
            assert!(r.max_deviation() <= 5.0 * lambda * lambda, "{lambda}: {}", r.max_deviation());
        }
    }

    #[test]
    fn classical_2d_matches_boltzmann_and_conserves() {
        let p = ChannelParams::natural(400.0, 0.3, 0.5).unwrap();
        let f = solve_steady_2d(&p, 0.0, 16, 15, None).unwrap();
        let g = &f.grid;
        let w: Vec<f64> = (0..g.len())
            .map(|s| (-p.beta * 0.5 * p.stiffness(g.x(s / g.my)) * g.y(s % g.my).powi(2)).exp())
            .collect();
        let z: f64 = w.iter().sum::<f64>() * g.dx * g.dy;
        for (a, b) in f.p.iter().zip(&w) {
            assert!((a - b / z).abs() < 1e-7 * (b / z).max(1.0));
        }
        assert!(f.stats.flux_ratio < 1e-6);
        assert!(f.stats.mass_drift < 1e-12);
        assert!((f.total_mass() - 1.0).abs() < 1e-12);
        assert!(mass_drift_2d(&p, 0.05, 12, 9, 20, 1e-3).unwrap() < 1e-12);
    }
}
