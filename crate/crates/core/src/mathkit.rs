//! Dense linear algebra and seeded sampling primitives.
//!
//! Vectors and matrices are `nalgebra` dynamic types. All randomness flows
//! through [`RngStream`], a ChaCha20 generator keyed by a 64-bit seed and a
//! 64-bit stream id, so every sampler is a pure function of its arguments
//! and the stream state.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Stream id reserved for building problem instances.
pub const INSTANCE_STREAM: u64 = 0;

/// Seeded ChaCha20 stream.
///
/// The generator is `rand_chacha::ChaCha20Rng` seeded with
/// `seed_from_u64(seed)` and positioned on stream `stream_id`. Two streams
/// with the same `(seed, stream_id)` produce identical draws; distinct
/// stream ids address disjoint ChaCha keystreams.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    /// Version tag of the generator construction, recorded in run metadata.
    pub const GENERATOR: &'static str = "chacha20/seed_from_u64+set_stream/v1";

    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn exponential(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn coin(&mut self) -> bool {
        self.rng.random::<bool>()
    }

    pub fn gaussian_vector(&mut self, dim: usize) -> Vector {
        Vector::from_iterator(dim, (0..dim).map(|_| self.standard_normal()))
    }

    /// Matrix with i.i.d. standard normal entries, filled row by row.
    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.standard_normal();
            }
        }
        m
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

pub(crate) fn ensure_finite(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with each
/// column of Q multiplied by the sign of the matching diagonal entry of R
/// (zero counts as positive).
pub fn haar_orthogonal(dim: usize, rng: &mut RngStream) -> Result<Matrix> {
    if dim == 0 {
        return Err(Error::InvalidDimension("orthogonal matrix of dimension 0".into()));
    }
    let g = rng.gaussian_matrix(dim, dim);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Singular values spaced linearly from `s_min` to `s_max`, largest first.
/// A single value (`d == 1`) is `s_max`.
pub fn linear_spectrum(d: usize, s_min: f64, s_max: f64) -> Vec<f64> {
    if d == 1 {
        return vec![s_max];
    }
    (0..d)
        .map(|i| s_max - (s_max - s_min) * i as f64 / (d - 1) as f64)
        .collect()
}

/// Random `n x d` matrix `U S V^T` with Haar factors and the spectrum of
/// [`linear_spectrum`].
pub fn matrix_with_spectrum(
    n: usize,
    d: usize,
    s_min: f64,
    s_max: f64,
    rng: &mut RngStream,
) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::InvalidDimension("matrix with zero columns".into()));
    }
    if n < d {
        return Err(Error::InvalidShape(format!("need n >= d, got n={n}, d={d}")));
    }
    if !(s_min > 0.0 && s_min <= s_max && s_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "singular values must satisfy 0 < s_min <= s_max, got [{s_min}, {s_max}]"
        )));
    }
    let u = haar_orthogonal(n, rng)?;
    let v = haar_orthogonal(d, rng)?;
    let spectrum = linear_spectrum(d, s_min, s_max);
    let mut us = u.columns(0, d).into_owned();
    for (j, s) in spectrum.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    Ok(us * v.transpose())
}

/// Uniform point on the sphere of the given radius (normalised Gaussian).
pub fn sample_sphere(dim: usize, radius: f64, rng: &mut RngStream) -> Result<Vector> {
    if dim == 0 {
        return Err(Error::InvalidDimension("sphere in dimension 0".into()));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("sphere radius {radius}")));
    }
    if radius == 0.0 {
        return Ok(Vector::zeros(dim));
    }
    loop {
        let g = rng.gaussian_vector(dim);
        let norm = g.norm();
        if norm > 0.0 {
            return Ok(g * (radius / norm));
        }
    }
}

/// Uniform point in the unit l1-ball.
///
/// Draws `dim + 1` standard exponentials; the first `dim`, divided by the
/// total, are uniform on the solid simplex, and independent signs spread
/// that over the ball.
pub fn sample_l1_ball(dim: usize, rng: &mut RngStream) -> Result<Vector> {
    if dim == 0 {
        return Err(Error::InvalidDimension("l1-ball in dimension 0".into()));
    }
    let e: Vec<f64> = (0..=dim).map(|_| rng.exponential()).collect();
    let total: f64 = e.iter().sum();
    let signs: Vec<bool> = (0..dim).map(|_| rng.coin()).collect();
    Ok(Vector::from_iterator(
        dim,
        e[..dim].iter().zip(signs).map(|(v, neg)| {
            let mag = v / total;
            if neg {
                -mag
            } else {
                mag
            }
        }),
    ))
}

/// Covariance of a multivariate normal draw.
#[derive(Clone, Debug)]
pub enum Covariance {
    /// `variance * I`.
    Isotropic(f64),
    /// Dense PSD matrix together with a square-root factor `R` (`R R^T = Σ`).
    Full { matrix: Matrix, root: Matrix },
}

impl Covariance {
    pub fn isotropic(variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::InvalidParameter(format!("variance {variance}")));
        }
        Ok(Covariance::Isotropic(variance))
    }

    /// Factorises a symmetric PSD matrix through its eigendecomposition.
    pub fn full(matrix: Matrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidShape(format!(
                "covariance is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance has non-finite entries".into()));
        }
        let scale = matrix.amax().max(1.0);
        if (&matrix - matrix.transpose()).amax() > 1e-10 * scale {
            return Err(Error::InvalidParameter("covariance is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(matrix.clone());
        if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
            return Err(Error::InvalidParameter(
                "covariance is not positive semidefinite".into(),
            ));
        }
        let mut root = eig.eigenvectors.clone();
        for (j, l) in eig.eigenvalues.iter().enumerate() {
            root.column_mut(j).scale_mut(l.max(0.0).sqrt());
        }
        Ok(Covariance::Full { matrix, root })
    }
}

/// Draw from `N(mean, cov)`.
pub fn gaussian(mean: &Vector, cov: &Covariance, rng: &mut RngStream) -> Result<Vector> {
    match cov {
        Covariance::Isotropic(var) => {
            let z = rng.gaussian_vector(mean.len());
            Ok(mean + z * var.sqrt())
        }
        Covariance::Full { root, .. } => {
            if root.nrows() != mean.len() {
                return Err(Error::InvalidShape(format!(
                    "mean has dimension {} but covariance is {}x{}",
                    mean.len(),
                    root.nrows(),
                    root.ncols()
                )));
            }
            let z = rng.gaussian_vector(mean.len());
            Ok(mean + root * z)
        }
    }
}

/// Largest singular value of `a`.
pub fn operator_norm(a: &Matrix) -> f64 {
    let gram = a.transpose() * a;
    SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, &l| m.max(l))
        .sqrt()
}
