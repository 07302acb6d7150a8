//! Continuous Lyapunov equations `A X + X A^dagger = C` for complex `A`.
//!
//! The Bartels-Stewart route reduces `A` to Schur form once; the reduced
//! triangular equation is then solved column by column. Shifted variants
//! `(s I + t T)` reuse the same factorization, which the implicit time
//! stepper in [`crate::redfield`] relies on.

use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Complex Schur factorization `A = Q T Q^dagger`.
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub q: CMatrix,
    pub t: CMatrix,
}

impl SchurForm {
    pub fn new(a: &CMatrix) -> Result<Self> {
        let n = a.nrows();
        let schur = Schur::try_new(a.clone(), f64::EPSILON, 100 * n.max(10))
            .ok_or_else(|| Error::Singular(format!("Schur decomposition of a {n}x{n} matrix did not converge")))?;
        let (q, t) = schur.unpack();
        Ok(Self { q, t })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    /// Solves `B X + X B^dagger = C` with `B = shift I + scale A`.
    pub fn solve_shifted(&self, c: &CMatrix, shift: f64, scale: f64) -> Result<CMatrix> {
        let ct = self.q.adjoint() * c * &self.q;
        let mut tt = self.t.scale(scale);
        for i in 0..self.dim() {
            tt[(i, i)] += C64::new(shift, 0.0);
        }
        let y = solve_triangular_lyapunov(&tt, &ct)?;
        Ok(&self.q * y * self.q.adjoint())
    }

    /// Solves `A X + X A^dagger = C`.
    pub fn solve(&self, c: &CMatrix) -> Result<CMatrix> {
        self.solve_shifted(c, 0.0, 1.0)
    }
}

/// `T Y + Y T^dagger = C` for upper-triangular `T`.
///
/// Column `j` (processed from the last) satisfies
/// `(T + conj(T_jj) I) y_j = c_j - sum_{k > j} conj(T_jk) y_k`.
pub fn solve_triangular_lyapunov(t: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    let n = t.nrows();
    let mut y = CMatrix::zeros(n, n);
    let scale = t.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in (0..n).rev() {
        let mut rhs: Vec<C64> = c.column(j).iter().copied().collect();
        for k in j + 1..n {
            let tjk = t[(j, k)].conj();
            if tjk == C64::new(0.0, 0.0) {
                continue;
            }
            for (r, yk) in rhs.iter_mut().zip(y.column(k).iter()) {
                *r -= tjk * yk;
            }
        }
        let shift = t[(j, j)].conj();
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for k in i + 1..n {
                acc -= t[(i, k)] * y[(k, j)];
            }
            let d = t[(i, i)] + shift;
            if d.norm() <= 1e-14 * scale {
                return Err(Error::Singular(format!(
                    "eigenvalues {} and {} sum to zero",
                    t[(i, i)],
                    t[(j, j)]
                )));
            }
            y[(i, j)] = acc / d;
        }
    }
    Ok(y)
}

/// Dense Kronecker solve of `A X + X A^dagger = C`: `N^2` unknowns, so only
/// for small `N`.
pub fn solve_kronecker(a: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let m = n * n;
    // Column-major vec: vec(A X) = (I kron A) vec X, vec(X A^dagger) = (conj(A) kron I) vec X.
    let mut big = CMatrix::zeros(m, m);
    for col in 0..n {
        for i in 0..n {
            for k in 0..n {
                big[(col * n + i, col * n + k)] += a[(i, k)];
            }
        }
    }
    for col in 0..n {
        for k in 0..n {
            let v = a[(col, k)].conj();
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            for i in 0..n {
                big[(col * n + i, k * n + i)] += v;
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(m, c.iter().copied());
    let x = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Kronecker system is singular".into()))?;
    Ok(CMatrix::from_iterator(n, n, x.iter().copied()))
}

pub fn lyapunov_residual(a: &CMatrix, x: &CMatrix, c: &CMatrix) -> f64 {
    let r = a * x + x * a.adjoint() - c;
    r.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: u64) -> CMatrix {
        // Stable matrix: random entries minus a diagonal shift.
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = CMatrix::from_fn(n, n, |_, _| C64::new(next(), next()));
        for i in 0..n {
            a[(i, i)] -= C64::new(n as f64, 0.0);
        }
        a
    }

    #[test]
    fn schur_and_kronecker_agree() {
        let a = sample(7, 3);
        let c = sample(7, 9);
        let x1 = SchurForm::new(&a).unwrap().solve(&c).unwrap();
        let x2 = solve_kronecker(&a, &c).unwrap();
        assert!(lyapunov_residual(&a, &x1, &c) < 1e-12);
        assert!(lyapunov_residual(&a, &x2, &c) < 1e-12);
        assert!((x1 - x2).iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn shifted_solve() {
        let a = sample(5, 1);
        let c = sample(5, 2);
        let s = SchurForm::new(&a).unwrap();
        let x = s.solve_shifted(&c, 0.5, -0.3).unwrap();
        let b = CMatrix::identity(5, 5).scale(0.5) + a.scale(-0.3);
        assert!(lyapunov_residual(&b, &x, &c) < 1e-12);
    }

    #[test]
    fn singular_is_reported() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(0.0, 1.0), C64::new(-1.0, 0.0)]));
        let c = CMatrix::identity(2, 2);
        assert!(SchurForm::new(&a).unwrap().solve(&c).is_err());
    }
}
