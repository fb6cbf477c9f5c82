//! Seeded randomness.
//!
//! Every stochastic construction draws from ChaCha8 (`rand_chacha`), a
//! counter-based stream cipher generator. A `(seed, stream)` pair selects an
//! independent, reproducible stream, so each component of a pipeline gets its
//! own stream and adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numeric::{axpy, dot, norm, Mat64, Vec64, EPS_NORM};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_vec(rng: &mut SeededRng, dim: usize, std: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            x * std
        })
        .collect()
}

/// Uniformly distributed direction on the unit sphere.
pub fn random_unit(rng: &mut SeededRng, dim: usize) -> Result<Vec64> {
    loop {
        let v = gaussian_vec(rng, dim, 1.0);
        let n = norm(&v);
        if n > 1e-8 {
            return Vec64::new(v.into_iter().map(|x| x / n).collect());
        }
    }
}

/// Gaussian matrix with i.i.d. N(0, std²) entries.
pub fn gaussian_mat(rng: &mut SeededRng, rows: usize, cols: usize, std: f64) -> Result<Mat64> {
    Mat64::new(rows, cols, gaussian_vec(rng, rows * cols, std))
}

/// Random matrix with orthonormal rows (`rows <= cols`) or orthonormal columns
/// (`rows > cols`), from Gram-Schmidt on a Gaussian draw.
pub fn random_orthogonal(rng: &mut SeededRng, rows: usize, cols: usize) -> Result<Mat64> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(
            "orthogonal matrix needs a non-empty shape".into(),
        ));
    }
    let (k, n) = if rows <= cols {
        (rows, cols)
    } else {
        (cols, rows)
    };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = gaussian_vec(rng, n, 1.0);
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&v, b);
                axpy(-p, b, &mut v);
            }
        }
        let nv = norm(&v);
        if nv > EPS_NORM.sqrt() {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v);
        }
    }
    let m = Mat64::from_rows(basis)?;
    Ok(if rows <= cols { m } else { m.transpose() })
}
