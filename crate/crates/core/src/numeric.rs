//! Dense f64 vectors and matrices plus the handful of kernels the rest of the
//! crate is built from: normalization, cosine similarity, softmax, scaled
//! dot-product attention, and a central-difference gradient used to check every
//! hand-derived gradient.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Norms at or below this are treated as zero.
pub const EPS_NORM: f64 = 1e-12;

/// Default probe step for [`finite_diff_gradient`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A non-empty vector of finite f64 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vec64(Vec<f64>);

impl Vec64 {
    pub fn new(elements: Vec<f64>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidArgument("vector must have dim >= 1".into()));
        }
        if let Some(i) = elements.iter().position(|x| !x.is_finite()) {
            return Err(Error::non_finite(format!("vector element {i}")));
        }
        Ok(Vec64(elements))
    }

    /// Wraps values produced by this crate's own arithmetic.
    pub(crate) fn from_computed(elements: Vec<f64>) -> Self {
        debug_assert!(!elements.is_empty());
        Vec64(elements)
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    /// The i-th standard basis vector of dimension `dim`.
    pub fn basis(dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return Err(Error::InvalidArgument(format!(
                "basis index {i} out of range for dim {dim}"
            )));
        }
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &Vec64) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn scaled(&self, s: f64) -> Vec64 {
        Vec64::from_computed(self.0.iter().map(|x| x * s).collect())
    }

    pub fn add(&self, other: &Vec64) -> Result<Vec64> {
        check_dim(self.dim(), other.dim())?;
        Ok(Vec64::from_computed(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Vec64) -> Result<Vec64> {
        check_dim(self.dim(), other.dim())?;
        Ok(Vec64::from_computed(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Arithmetic mean of equally sized vectors.
    pub fn mean_of<'a>(vectors: impl IntoIterator<Item = &'a Vec64>) -> Result<Vec64> {
        let mut iter = vectors.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InvalidArgument("mean of zero vectors".into()))?;
        let mut acc = first.0.clone();
        let mut n = 1usize;
        for v in iter {
            check_dim(acc.len(), v.dim())?;
            axpy(1.0, &v.0, &mut acc);
            n += 1;
        }
        let inv = 1.0 / n as f64;
        acc.iter_mut().for_each(|x| *x *= inv);
        Ok(Vec64::from_computed(acc))
    }
}

impl TryFrom<Vec<f64>> for Vec64 {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vec64::new(v)
    }
}

impl From<Vec64> for Vec<f64> {
    fn from(v: Vec64) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for Vec64 {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major matrix of finite f64 values with at least one row and column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat64 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix shape {rows}x{cols} has an empty side"
            )));
        }
        check_dim(rows * cols, data.len())?;
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::non_finite(format!(
                "matrix element ({}, {})",
                i / cols,
                i % cols
            )));
        }
        Ok(Mat64 { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for r in &rows {
            check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Mat64::new(n, cols, data)
    }

    pub fn from_row_vecs(rows: &[Vec64]) -> Result<Self> {
        Mat64::from_rows(rows.iter().map(|r| r.as_slice().to_vec()).collect())
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Mat64::new(n, n, data)
    }

    pub(crate) fn from_computed(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Mat64 { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_vec(&self, i: usize) -> Vec64 {
        Vec64::from_computed(self.row(i).to_vec())
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, s: f64) -> Mat64 {
        Mat64::from_computed(
            self.rows,
            self.cols,
            self.data.iter().map(|x| x * s).collect(),
        )
    }

    pub fn transpose(&self) -> Mat64 {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Mat64::from_computed(self.cols, self.rows, data)
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len())?;
        Ok(self.iter_rows().map(|r| dot(r, x)).collect())
    }

    /// `selfᵀ · y`.
    pub fn matvec_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (r, &yi) in self.iter_rows().zip(y) {
            axpy(yi, r, &mut out);
        }
        Ok(out)
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Mat64) -> Result<Mat64> {
        check_dim(self.cols, other.rows)?;
        let mut data = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out = &mut data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                axpy(a, other.row(k), out);
            }
        }
        Ok(Mat64::from_computed(self.rows, other.cols, data))
    }
}

impl TryFrom<Vec<Vec<f64>>> for Mat64 {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Mat64::from_rows(rows)
    }
}

impl From<Mat64> for Vec<Vec<f64>> {
    fn from(m: Mat64) -> Self {
        m.iter_rows().map(<[f64]>::to_vec).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

pub fn l2_normalize(v: &Vec64) -> Result<Vec64> {
    let n = v.norm();
    if n <= EPS_NORM {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(v.scaled(1.0 / n))
}

pub fn cosine_sim(a: &Vec64, b: &Vec64) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let (na, nb) = (a.norm(), b.norm());
    if na <= EPS_NORM {
        return Err(Error::ZeroVector { norm: na });
    }
    if nb <= EPS_NORM {
        return Err(Error::ZeroVector { norm: nb });
    }
    Ok((dot(a.as_slice(), b.as_slice()) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn softmax(scores: &Vec64) -> Vec64 {
    Vec64::from_computed(softmax_slice(scores.as_slice()))
}

pub(crate) fn softmax_slice(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Attention weights `softmax(keys · query / √d_k)`.
pub fn attention_weights(query: &Vec64, keys: &Mat64) -> Result<Vec64> {
    check_dim(keys.cols(), query.dim())?;
    let scale = 1.0 / (query.dim() as f64).sqrt();
    let scores: Vec<f64> = keys
        .iter_rows()
        .map(|k| dot(k, query.as_slice()) * scale)
        .collect();
    Ok(Vec64::from_computed(softmax_slice(&scores)))
}

/// `Σᵢ softmax(q·kᵢ/√d_k)ᵢ · valueᵢ`; the result is a convex combination of
/// the value rows.
pub fn scaled_dot_attention(query: &Vec64, keys: &Mat64, values: &Mat64) -> Result<Vec64> {
    check_dim(keys.rows(), values.rows())?;
    let weights = attention_weights(query, keys)?;
    Ok(Vec64::from_computed(values.matvec_t(weights.as_slice())?))
}

/// Central-difference gradient of `f` at `z` with probe step `h`.
pub fn finite_diff_gradient<F>(f: F, z: &Vec64, h: f64) -> Result<Vec64>
where
    F: Fn(&Vec64) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut probe = z.as_slice().to_vec();
    let mut grad = Vec::with_capacity(z.dim());
    for i in 0..z.dim() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&Vec64::new(probe.clone())?)?;
        probe[i] = orig - h;
        let minus = f(&Vec64::new(probe.clone())?)?;
        probe[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Vec64::new(grad)
}

/// Relative error `‖a − b‖ / max(‖b‖, floor)` with `b` the reference.
pub fn relative_error(a: &Vec64, reference: &Vec64, floor: f64) -> Result<f64> {
    let diff = a.sub(reference)?;
    Ok(diff.norm() / reference.norm().max(floor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> Vec64 {
        Vec64::new(x.to_vec()).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Vec64::new(vec![]).is_err());
        assert!(matches!(
            Vec64::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
        assert!(Mat64::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Mat64::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let n = l2_normalize(&v(&[3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(n.as_slice()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(n.as_slice()[1], 0.8, epsilon = 1e-15);

        let u = v(&[0.0, 1.0, 0.0]);
        assert_eq!(l2_normalize(&u).unwrap(), u);

        assert!(matches!(
            l2_normalize(&v(&[0.0, 0.0])),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[0.3, -1.2, 2.0]);
        assert_abs_diff_eq!(cosine_sim(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            cosine_sim(&a, &a.scaled(-1.0)).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
        assert_eq!(cosine_sim(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine_sim(&a, &v(&[1.0])),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(
            cosine_sim(&a, &v(&[0.0, 0.0, 0.0])),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&v(&[2.5, 2.5, 2.5]));
        for &x in s.as_slice() {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(softmax(&v(&[-7.0])).as_slice(), &[1.0]);
        // large scores must not overflow
        let big = softmax(&v(&[1000.0, 1000.0]));
        assert_abs_diff_eq!(big.as_slice()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn attention_single_row_returns_that_row() {
        let q = v(&[0.4, -0.1]);
        let keys = Mat64::from_rows(vec![vec![3.0, 1.0]]).unwrap();
        let values = Mat64::from_rows(vec![vec![1.5, -2.0, 0.25]]).unwrap();
        let out = scaled_dot_attention(&q, &keys, &values).unwrap();
        assert_eq!(out.as_slice(), &[1.5, -2.0, 0.25]);
    }

    #[test]
    fn attention_identical_keys_average_values() {
        let q = v(&[1.0, 2.0]);
        let keys = Mat64::from_rows(vec![vec![0.5, 0.5]; 3]).unwrap();
        let values =
            Mat64::from_rows(vec![vec![1.0, 0.0], vec![0.0, 3.0], vec![2.0, 3.0]]).unwrap();
        let out = scaled_dot_attention(&q, &keys, &values).unwrap();
        assert_abs_diff_eq!(out.as_slice()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.as_slice()[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn attention_two_by_two_hand_computed() {
        // scores (1/√2, 0); weights w0 = 1/(1 + e^{-1/√2}), w1 = 1 - w0
        let w0 = 1.0 / (1.0 + (-std::f64::consts::FRAC_1_SQRT_2).exp());
        let w1 = 1.0 - w0;
        let eye = Mat64::identity(2).unwrap();
        let out = scaled_dot_attention(&v(&[1.0, 0.0]), &eye, &eye).unwrap();
        assert_abs_diff_eq!(out.as_slice()[0], w0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.as_slice()[1], w1, epsilon = 1e-12);
        assert_abs_diff_eq!(w0, 0.669_761_549_326_656_9, epsilon = 1e-12);
    }

    #[test]
    fn attention_shape_errors() {
        let keys = Mat64::identity(2).unwrap();
        let values = Mat64::identity(3).unwrap();
        assert!(scaled_dot_attention(&v(&[1.0, 0.0]), &keys, &values).is_err());
        assert!(scaled_dot_attention(&v(&[1.0, 0.0, 0.0]), &keys, &keys).is_err());
    }

    #[test]
    fn finite_diff_quadratic_and_constant() {
        let sq = |z: &Vec64| z.dot(z);
        let g = finite_diff_gradient(sq, &v(&[1.0, 2.0]), DEFAULT_FD_STEP).unwrap();
        assert_abs_diff_eq!(g.as_slice()[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g.as_slice()[1], 4.0, epsilon = 1e-8);

        let g = finite_diff_gradient(|_| Ok(3.5), &v(&[1.0, -2.0, 0.1]), DEFAULT_FD_STEP).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));

        assert!(finite_diff_gradient(|_| Ok(0.0), &v(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn finite_diff_propagates_errors() {
        let r = finite_diff_gradient(|_| Err(Error::ZeroVector { norm: 0.0 }), &v(&[1.0]), 1e-5);
        assert!(matches!(r, Err(Error::ZeroVector { .. })));
    }

    #[test]
    fn finite_diff_matches_closed_form_cosine_gradient() {
        use crate::rng::{gaussian_vec, seeded};
        let mut rng = seeded(11, 0);
        for _ in 0..20 {
            let c = Vec64::new(gaussian_vec(&mut rng, 6, 1.0)).unwrap();
            let z = Vec64::new(gaussian_vec(&mut rng, 6, 1.0)).unwrap();
            let (nc, nz) = (c.norm(), z.norm());
            let cz = c.dot(&z).unwrap();
            // d/dz cos(c, z) = c/(‖c‖‖z‖) − (c·z) z/(‖c‖‖z‖³)
            let closed: Vec<f64> = c
                .as_slice()
                .iter()
                .zip(z.as_slice())
                .map(|(ci, zi)| ci / (nc * nz) - cz * zi / (nc * nz.powi(3)))
                .collect();
            let closed = Vec64::new(closed).unwrap();
            let fd = finite_diff_gradient(|p| cosine_sim(&c, p), &z, DEFAULT_FD_STEP).unwrap();
            assert!(relative_error(&closed, &fd, 1e-8).unwrap() < 1e-6);
        }
    }

    #[test]
    fn matrix_products() {
        let a = Mat64::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(a.matvec(&[1.0, -1.0]).unwrap(), vec![-1.0, -1.0, -1.0]);
        assert_eq!(a.matvec_t(&[1.0, 0.0, 1.0]).unwrap(), vec![6.0, 8.0]);
        let ata = a.transpose().matmul(&a).unwrap();
        assert_eq!(ata.row(0), &[35.0, 44.0]);
        assert_eq!(ata.row(1), &[44.0, 56.0]);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<Mat64>(&json).unwrap(), a);
        assert!(serde_json::from_str::<Mat64>("[[1.0],[2.0,3.0]]").is_err());
    }

    #[test]
    fn mean_of_vectors() {
        let m = Vec64::mean_of([&v(&[1.0, 2.0]), &v(&[3.0, 6.0])]).unwrap();
        assert_eq!(m.as_slice(), &[2.0, 4.0]);
        assert!(Vec64::mean_of(std::iter::empty::<&Vec64>()).is_err());
    }
}
