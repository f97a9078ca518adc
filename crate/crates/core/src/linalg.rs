//! Dense matrix primitives and the 2-component PCA used by the pipeline.
//!
//! Everything here is small and dependency-free: embedding cells hold tens of
//! rows, so a cyclic Jacobi eigensolver on a symmetric matrix is plenty.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative off-diagonal threshold at which a Jacobi sweep is considered converged.
const JACOBI_TOLERANCE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
/// Allowed asymmetry, relative to the largest entry, for [`symmetric_eigen`].
const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("empty input")]
    EmptyInput,
    #[error("insufficient rows for covariance")]
    InsufficientRows,
    #[error("matrix not symmetric")]
    NotSymmetric,
    #[error("pca underdetermined")]
    Underdetermined,
    #[error("row {row} has dimension {found}, expected {expected}")]
    RaggedRows {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("embedding dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("data length {len} does not match {rows}x{cols}")]
    ShapeMismatch {
        len: usize,
        rows: usize,
        cols: usize,
    },
}

/// Row-major `n x d` matrix of response embeddings for one analysis cell.
///
/// Every entry is finite and, when `n > 0`, `d >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch {
                len: data.len(),
                rows,
                cols,
            });
        }
        if rows > 0 && cols < 2 {
            return Err(LinalgError::DimensionTooSmall(cols));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { data, rows, cols })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let Some(first) = rows.first() else {
            return Ok(Self {
                data: Vec::new(),
                rows: 0,
                cols: 0,
            });
        };
        let cols = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(LinalgError::RaggedRows {
                    row: i,
                    found: row.len(),
                    expected: cols,
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(LinalgError::RaggedRows {
                    row: i,
                    found: row.len(),
                    expected: n,
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], v))
            .collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self
            .data
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(1.0);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if (self.get(i, j) - self.get(j, i)).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Subtracts the column means. Returns the centered matrix and the mean vector.
pub fn mean_center(m: &EmbeddingMatrix) -> Result<(EmbeddingMatrix, Vec<f64>), LinalgError> {
    if m.is_empty() {
        return Err(LinalgError::EmptyInput);
    }
    let n = m.rows as f64;
    let mut mean = vec![0.0; m.cols];
    for row in m.iter_rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= n;
    }
    let mut data = m.data.clone();
    for row in data.chunks_exact_mut(m.cols) {
        for (v, mu) in row.iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    Ok((
        EmbeddingMatrix {
            data,
            rows: m.rows,
            cols: m.cols,
        },
        mean,
    ))
}

/// Sample covariance `XᵀX / (n-1)` of an already centered matrix.
pub fn covariance(centered: &EmbeddingMatrix) -> Result<SquareMatrix, LinalgError> {
    if centered.rows < 2 {
        return Err(LinalgError::InsufficientRows);
    }
    let d = centered.cols;
    let mut cov = SquareMatrix::zeros(d);
    for row in centered.iter_rows() {
        for i in 0..d {
            let xi = row[i];
            if xi == 0.0 {
                continue;
            }
            for (j, xj) in row.iter().enumerate().skip(i) {
                cov.data[i * d + j] += xi * xj;
            }
        }
    }
    let denom = (centered.rows - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    Ok(cov)
}

/// Sample Gram matrix `XXᵀ / (n-1)`; shares its non-zero spectrum with [`covariance`].
fn gram(centered: &EmbeddingMatrix) -> SquareMatrix {
    let n = centered.rows;
    let denom = (n - 1) as f64;
    let mut g = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = dot(centered.row(i), centered.row(j)) / denom;
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    g
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// `vectors[i]` pairs with `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigensolver.
///
/// Eigenvalues come back in descending order (ties keep their diagonal order)
/// and every eigenvector has its largest-magnitude entry positive, the lowest
/// index winning ties.
pub fn symmetric_eigen(a: &SquareMatrix) -> Result<SymmetricEigen, LinalgError> {
    if !a.is_symmetric(SYMMETRY_TOLERANCE) {
        return Err(LinalgError::NotSymmetric);
    }
    let n = a.n;
    let mut m = a.clone();
    // Symmetrize exactly so rotations see a consistent matrix.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    let mut v = SquareMatrix::identity(n);
    let threshold = JACOBI_TOLERANCE * a.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut max_off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                max_off = max_off.max(m.get(p, q).abs());
            }
        }
        if max_off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= threshold {
                    continue;
                }
                rotate(&mut m, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)).then(i.cmp(&j)));

    let values = order.iter().map(|&k| m.get(k, k)).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = (0..n).map(|r| v.get(r, k)).collect();
            canonical_sign(&mut col);
            col
        })
        .collect();
    Ok(SymmetricEigen { values, vectors })
}

/// One Jacobi rotation zeroing `m[p][q]`, accumulated into the columns of `v`.
fn rotate(m: &mut SquareMatrix, v: &mut SquareMatrix, p: usize, q: usize) {
    let n = m.n;
    let apq = m.get(p, q);
    let app = m.get(p, p);
    let aqq = m.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let mkp = m.get(k, p);
        let mkq = m.get(k, q);
        m.set(k, p, c * mkp - s * mkq);
        m.set(k, q, s * mkp + c * mkq);
    }
    for k in 0..n {
        let mpk = m.get(p, k);
        let mqk = m.get(q, k);
        m.set(p, k, c * mpk - s * mqk);
        m.set(q, k, s * mpk + c * mqk);
    }
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);

    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Flips `v` so its largest-magnitude entry is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Result of projecting a cell's embeddings onto its top two principal axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoints {
    /// One `[x, y]` pair per input row.
    pub points: Vec<[f64; 2]>,
    /// Variances along the two axes, descending and non-negative.
    pub eigenvalues: [f64; 2],
    /// Two orthonormal `d`-vectors.
    pub components: [Vec<f64>; 2],
    /// Column means subtracted before projection.
    pub mean: Vec<f64>,
}

impl ProjectedPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Projects rows onto the two leading eigenvectors of their sample covariance.
///
/// When `d > n` the eigenproblem is solved on the `n x n` Gram matrix instead,
/// which has the same non-zero spectrum; the components are recovered as
/// `Xᵀu` normalised and any missing directions are completed by Gram-Schmidt.
pub fn pca_project_2d(m: &EmbeddingMatrix) -> Result<ProjectedPoints, LinalgError> {
    if m.rows < 2 || m.cols < 2 {
        return Err(LinalgError::Underdetermined);
    }
    let (centered, mean) = mean_center(m)?;
    let (eigenvalues, components) = if m.cols <= m.rows {
        top_two_from_covariance(&centered)?
    } else {
        top_two_from_gram(&centered)?
    };
    let points = centered
        .iter_rows()
        .map(|row| [dot(row, &components[0]), dot(row, &components[1])])
        .collect();
    Ok(ProjectedPoints {
        points,
        eigenvalues,
        components,
        mean,
    })
}

type TopTwo = ([f64; 2], [Vec<f64>; 2]);

fn top_two_from_covariance(centered: &EmbeddingMatrix) -> Result<TopTwo, LinalgError> {
    let eig = symmetric_eigen(&covariance(centered)?)?;
    let mut vecs = eig.vectors.into_iter();
    let first = vecs.next().expect("d >= 2");
    let second = vecs.next().expect("d >= 2");
    Ok((
        [eig.values[0].max(0.0), eig.values[1].max(0.0)],
        [first, second],
    ))
}

fn top_two_from_gram(centered: &EmbeddingMatrix) -> Result<TopTwo, LinalgError> {
    let d = centered.cols;
    let eig = symmetric_eigen(&gram(centered))?;
    // Directions whose lift is this small relative to the data carry no variance.
    let scale = centered
        .as_slice()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let negligible = 1e-10 * scale.max(f64::MIN_POSITIVE);

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut values = [0.0_f64; 2];
    for (k, u) in eig.vectors.iter().take(2).enumerate() {
        let mut lifted = vec![0.0; d];
        for (row, &weight) in centered.iter_rows().zip(u) {
            for (acc, x) in lifted.iter_mut().zip(row) {
                *acc += weight * x;
            }
        }
        for prev in &components {
            let proj = dot(&lifted, prev);
            for (x, p) in lifted.iter_mut().zip(prev) {
                *x -= proj * p;
            }
        }
        let len = norm(&lifted);
        if len <= negligible {
            break;
        }
        for x in &mut lifted {
            *x /= len;
        }
        values[k] = eig.values[k].max(0.0);
        components.push(lifted);
    }
    // Complete the basis from the standard axes when the data has rank < 2.
    let mut axis = 0;
    while components.len() < 2 {
        let mut candidate = vec![0.0; d];
        candidate[axis] = 1.0;
        axis += 1;
        for prev in &components {
            let proj = dot(&candidate, prev);
            for (x, p) in candidate.iter_mut().zip(prev) {
                *x -= proj * p;
            }
        }
        let len = norm(&candidate);
        if len > 1e-6 {
            for x in &mut candidate {
                *x /= len;
            }
            components.push(candidate);
        }
    }
    for c in &mut components {
        canonical_sign(c);
    }
    let second = components.pop().expect("two components");
    let first = components.pop().expect("two components");
    Ok((values, [first, second]))
}
