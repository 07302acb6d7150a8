//! Dense diagonalization of the lattice Hamiltonian and an on-disk cache.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, HamiltonianMatrix};

/// Largest dimension handled by the dense solver.
pub const DENSE_LIMIT: usize = 4096;

const MAGIC: &[u8; 8] = b"QFJSPEC1";

/// Eigenpairs sorted by ascending energy; column `k` of `modes` is `phi_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub energies: Vec<f64>,
    pub modes: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `max_k |H phi_k - E_k phi_k|`.
    pub fn residual(&self, h: &HamiltonianMatrix) -> f64 {
        (0..self.dim())
            .map(|k| {
                let phi: Vec<f64> = self.modes.column(k).iter().copied().collect();
                let hp = h.apply(&phi);
                hp.iter()
                    .zip(&phi)
                    .map(|(a, b)| (a - self.energies[k] * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `max |Phi^T Phi - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.modes.transpose() * &self.modes;
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let t = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - t).abs());
            }
        }
        worst
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let n = self.dim();
        let mut buf = Vec::with_capacity(16 + 8 * n * (n + 1));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        for e in &self.energies {
            buf.extend_from_slice(&e.to_le_bytes());
        }
        for v in self.modes.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::File::create(&tmp)?.write_all(&buf)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        let bad = || Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, "corrupt spectrum cache"));
        if buf.len() < 16 || &buf[..8] != MAGIC {
            return Err(bad());
        }
        let n = u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes")) as usize;
        if buf.len() != 16 + 8 * n * (n + 1) {
            return Err(bad());
        }
        let mut vals = buf[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let energies: Vec<f64> = vals.by_ref().take(n).collect();
        let modes = DMatrix::from_iterator(n, n, vals);
        Ok(Self { energies, modes })
    }

    /// CSV with columns `k,energy`.
    pub fn write_energies_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,energy")?;
        for (k, e) in self.energies.iter().enumerate() {
            writeln!(w, "{k},{e:.16e}")?;
        }
        Ok(())
    }
}

/// Full spectrum of `h`, ascending. Refuses dimensions above [`DENSE_LIMIT`].
pub fn diagonalize(h: &HamiltonianMatrix) -> Result<SpectralDecomposition> {
    if h.dim > DENSE_LIMIT {
        return Err(Error::GridTooLarge {
            sites: h.dim,
            limit: DENSE_LIMIT,
        });
    }
    if h.diag.iter().any(|v| !v.is_finite()) || h.upper.iter().any(|(_, _, v)| !v.is_finite()) {
        return Err(crate::error::invalid("H", "non-finite entries"));
    }
    let norm = h.frobenius_norm();
    let eig = SymmetricEigen::try_new(h.to_dense(), f64::EPSILON, 0).ok_or(Error::Eigensolver { dim: h.dim, norm })?;
    let mut order: Vec<usize> = (0..h.dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let modes = DMatrix::from_fn(h.dim, h.dim, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralDecomposition { energies, modes })
}

/// Hex sha256 of the Hamiltonian inputs, used as a cache file stem.
pub fn cache_key(g: &GridSpec, k0: f64, k1: f64, hbar: f64, mass: f64) -> String {
    let text = format!(
        "mx={};my={};dx={:e};dy={:e};ycut={:e};bc={};k0={:e};k1={:e};hbar={:e};mass={:e}",
        g.mx, g.my, g.dx, g.dy, g.ycut, g.bc_x, k0, k1, hbar, mass
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Loads `dir/<key>.spec` if present, otherwise diagonalizes and stores it.
pub fn diagonalize_cached(h: &HamiltonianMatrix, dir: &Path, key: &str) -> Result<SpectralDecomposition> {
    let path = dir.join(format!("{key}.spec"));
    if let Ok(s) = SpectralDecomposition::load(&path) {
        if s.dim() == h.dim {
            return Ok(s);
        }
    }
    let s = diagonalize(h)?;
    fs::create_dir_all(dir)?;
    s.save(&path)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble_hamiltonian, assemble_with_potential, build_grid, BoundaryX};
    use crate::model::ChannelParams;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn circulant_ring() {
        let g = GridSpec::new(6, 1, 1.0, 0.5, BoundaryX::Periodic).unwrap();
        let h = assemble_with_potential(&g, 1.0, 1.0, |_, _| 0.0);
        let s = diagonalize(&h).unwrap();
        let (jx, jy) = g.hoppings(1.0, 1.0);
        let mut expected: Vec<f64> = (0..6)
            .map(|n| 2.0 * jx * (1.0 - (2.0 * PI * n as f64 / 6.0).cos()) + 2.0 * jy)
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in s.energies.iter().zip(&expected) {
            assert_relative_eq!(*a, *b, epsilon = 1e-10 * jx);
        }
    }

    #[test]
    fn invariants_and_cache() {
        let p = ChannelParams::natural(400.0, 0.3, 0.2).unwrap();
        let g = build_grid(&p, 6, 7, BoundaryX::Periodic, None).unwrap();
        let h = assemble_hamiltonian(&g, &p);
        let s = diagonalize(&h).unwrap();
        assert!(s.orthonormality_defect() < 1e-10);
        assert!(s.residual(&h) < 1e-8 * h.frobenius_norm());
        assert_relative_eq!(s.energies.iter().sum::<f64>(), h.trace(), max_relative = 1e-12);
        assert!(s.energies.windows(2).all(|w| w[0] <= w[1]));

        let dir = std::env::temp_dir().join(format!("qfj-spec-{}", std::process::id()));
        let key = cache_key(&g, p.k0, p.k1, p.hbar, p.mass);
        assert_eq!(key.len(), 64);
        let a = diagonalize_cached(&h, &dir, &key).unwrap();
        let b = diagonalize_cached(&h, &dir, &key).unwrap();
        assert_eq!(a, b);
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn refuses_large() {
        let h = HamiltonianMatrix {
            dim: DENSE_LIMIT + 1,
            diag: vec![0.0; DENSE_LIMIT + 1],
            upper: vec![],
        };
        assert!(matches!(diagonalize(&h), Err(Error::GridTooLarge { .. })));
    }
}
