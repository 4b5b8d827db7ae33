//! Truncated Karhunen–Loève expansion of a Gaussian-kernel random field on the
//! cell centers of a uniform `n x n` grid over the unit square.
//!
//! The covariance `exp(-(dx1²/ρ1 + dx2²/ρ2))` factors into one-dimensional
//! kernels and the midpoint quadrature weights are a tensor product, so the
//! weighted (Nyström) eigenproblem on the `n²` nodes splits into two `n x n`
//! problems: eigenvalues are products `μ_a ν_b` and eigenfunctions are
//! products of the one-dimensional vectors.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"INSUBKL\0";
const VERSION: u32 = 1;
const NEGATIVE_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KlExpansion<T: Real> {
    n: usize,
    /// Node coordinates, node `p = j * n + i` at `((i + ½) h, (j + ½) h)`.
    nodes: Vec<(T, T)>,
    /// `n² x d`, column `i` holds `φ_i` at the nodes.
    eigenfunctions: DMatrix<T>,
    eigenvalues: DVector<T>,
    correlation_lengths: (T, T),
}

impl<T: Real> KlExpansion<T> {
    /// Leading `d` eigenpairs of the covariance operator with correlation
    /// lengths `rho = (ρ1, ρ2)`.
    pub fn build(n: usize, d: usize, rho: (T, T)) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("grid must have at least one cell".into()));
        }
        if d == 0 || d > n * n {
            return Err(Error::OutOfRange {
                what: "KL truncation",
                value: d,
                lo: 1,
                hi: n * n,
            });
        }
        if !(rho.0 > T::zero() && rho.1 > T::zero()) {
            return Err(Error::InvalidInput("correlation lengths must be positive".into()));
        }
        let h = T::one() / T::from_count(n);
        let coords: Vec<T> = (0..n)
            .map(|i| (T::from_count(i) + T::lit(0.5)) * h)
            .collect();
        let (mu, ex) = weighted_eigen_1d(&coords, h, rho.0)?;
        let (nu, ey) = weighted_eigen_1d(&coords, h, rho.1)?;

        let mut pairs: Vec<(T, usize, usize)> = Vec::with_capacity(n * n);
        for (a, &m) in mu.iter().enumerate() {
            for (b, &v) in nu.iter().enumerate() {
                pairs.push((m * v, a, b));
            }
        }
        pairs.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then((x.1 + x.2).cmp(&(y.1 + y.2)))
                .then(x.1.cmp(&y.1))
        });
        pairs.truncate(d);

        let nodes: Vec<(T, T)> = (0..n * n).map(|p| (coords[p % n], coords[p / n])).collect();
        let mut eigenfunctions = DMatrix::zeros(n * n, d);
        for (col, &(_, a, b)) in pairs.iter().enumerate() {
            for p in 0..n * n {
                eigenfunctions[(p, col)] = ex[(p % n, a)] * ey[(p / n, b)];
            }
        }
        let eigenvalues = DVector::from_iterator(d, pairs.iter().map(|p| p.0));
        Ok(Self {
            n,
            nodes,
            eigenfunctions,
            eigenvalues,
            correlation_lengths: rho,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn nodes(&self) -> &[(T, T)] {
        &self.nodes
    }

    pub fn eigenfunctions(&self) -> &DMatrix<T> {
        &self.eigenfunctions
    }

    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    pub fn correlation_lengths(&self) -> (T, T) {
        self.correlation_lengths
    }

    /// Quadrature weight of every node (`h²`).
    pub fn weight(&self) -> T {
        let h = T::one() / T::from_count(self.n);
        h * h
    }

    /// Largest deviation of `Φ^T W Φ` from the identity.
    pub fn orthonormality_defect(&self) -> T {
        let g = self.eigenfunctions.tr_mul(&self.eigenfunctions) * self.weight();
        let mut worst = T::zero();
        for j in 0..g.ncols() {
            for i in 0..g.nrows() {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// File name used by [`KlExpansion::load_or_build`] for this configuration.
    pub fn cache_file_name(n: usize, d: usize, rho: (T, T)) -> String {
        let key = format!(
            "n={n};d={d};rho1={:.17e};rho2={:.17e}",
            rho.0.as_f64(),
            rho.1.as_f64()
        );
        format!("kl-v{VERSION}-{:016x}.bin", fnv1a(key.as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.n as u64).to_le_bytes());
        buf.extend_from_slice(&(self.truncation() as u64).to_le_bytes());
        for x in [self.correlation_lengths.0, self.correlation_lengths.1]
            .iter()
            .chain(self.eigenvalues.iter())
            .chain(self.eigenfunctions.iter())
        {
            buf.extend_from_slice(&x.as_f64().to_le_bytes());
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = ByteReader::new(&bytes);
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a KL cache file".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported KL cache version {version}")));
        }
        let n = r.u64()? as usize;
        let d = r.u64()? as usize;
        let rho = (T::lit(r.f64()?), T::lit(r.f64()?));
        let eigenvalues = DVector::from_iterator(d, (0..d).map(|_| r.f64().map(T::lit)).collect::<Result<Vec<_>>>()?);
        let vals = (0..n * n * d).map(|_| r.f64().map(T::lit)).collect::<Result<Vec<_>>>()?;
        if !r.is_done() {
            return Err(Error::Format("trailing bytes in KL cache".into()));
        }
        let h = T::one() / T::from_count(n);
        let coords: Vec<T> = (0..n).map(|i| (T::from_count(i) + T::lit(0.5)) * h).collect();
        Ok(Self {
            n,
            nodes: (0..n * n).map(|p| (coords[p % n], coords[p / n])).collect(),
            eigenfunctions: DMatrix::from_vec(n * n, d, vals),
            eigenvalues,
            correlation_lengths: rho,
        })
    }

    /// Loads the cached expansion from `dir` when present, else builds and
    /// stores it.
    pub fn load_or_build(dir: &Path, n: usize, d: usize, rho: (T, T)) -> Result<Self> {
        let path: PathBuf = dir.join(Self::cache_file_name(n, d, rho));
        if path.exists() {
            if let Ok(kl) = Self::load(&path) {
                if kl.n == n && kl.truncation() == d {
                    return Ok(kl);
                }
            }
            log::warn!("ignoring unusable KL cache {}", path.display());
        }
        let kl = Self::build(n, d, rho)?;
        fs::create_dir_all(dir)?;
        kl.save(&path)?;
        Ok(kl)
    }
}

/// Eigenpairs of `h K` with `K_ik = exp(-(x_i - x_k)² / rho)`, sorted
/// descending, eigenvectors scaled to unit norm under weight `h`.
fn weighted_eigen_1d<T: Real>(coords: &[T], h: T, rho: T) -> Result<(Vec<T>, DMatrix<T>)> {
    let n = coords.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let dx = coords[i] - coords[j];
        (-(dx * dx) / rho).exp() * h
    });
    let eig = k.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let top = eig.eigenvalues[order[0]].max(T::zero());
    let scale = T::one() / h.sqrt();
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut lam = eig.eigenvalues[src];
        if lam < T::zero() {
            if lam < -T::lit(NEGATIVE_CLAMP) * top {
                return Err(Error::InvalidInput(format!(
                    "covariance not positive semidefinite (eigenvalue {lam})"
                )));
            }
            lam = T::zero();
        }
        values.push(lam);
        let mut v = eig.eigenvectors.column(src) * scale;
        if let Some(&lead) = v.iter().find(|x| x.abs() > T::lit(1e-12)) {
            if lead < T::zero() {
                v.neg_mut();
            }
        }
        vectors.set_column(col, &v);
    }
    Ok((values, vectors))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
