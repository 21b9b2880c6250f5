//! Dense matrix kernel: multiplication, Gaussian elimination with scaled
//! partial pivoting, inversion of unit-triangular systems and a pivoted
//! Cholesky positive-semidefiniteness probe.
//!
//! Storage is row-major `f64`. There is deliberately no arbitrary-precision
//! fallback: the conditioning questions this crate studies are questions
//! about `f64` behaviour.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::io::{BufRead, Write};
use std::ops::{Index, IndexMut};
use thiserror::Error;

/// Relative pivot threshold: a pivot smaller than this times the row's
/// largest absolute entry is treated as singular. Recovery at a degenerate
/// instance must fail loudly rather than return garbage.
pub const PIVOT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("near-singular system: scaled pivot {pivot:.3e} in elimination step {col}")]
    NearSingularSystem { col: usize, pivot: f64 },
    #[error("matrix is not unit triangular under any vertex permutation")]
    NotUnitTriangular,
    #[error("matrix entries must be finite")]
    NonFiniteEntry,
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from row vectors; rejects ragged or empty input and
    /// non-finite entries.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, LinalgError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(LinalgError::ShapeMismatch("empty matrix".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::ShapeMismatch("ragged rows".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFiniteEntry);
        }
        Ok(Matrix {
            rows: data.len() / cols,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Largest absolute entry (entrywise infinity norm).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    /// `(A + A^T) / 2`; kills the roundoff asymmetry of products.
    pub fn symmetrized(&self) -> Matrix {
        assert!(self.is_square());
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self[(i, j)] + self[(j, i)])
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert!(self.same_shape(other), "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Writes the CSV form: a `rows,cols` header line, then one line per row
    /// with 17 significant digits so values round-trip exactly.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<(), LinalgError> {
        writeln!(w, "{},{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|x| format!("{:.16e}", x)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    /// Parses the CSV form produced by [`Matrix::write_csv`].
    pub fn read_csv<R: BufRead>(r: &mut R) -> Result<Self, LinalgError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| LinalgError::Csv("empty input".into()))??;
        let mut dims = header.split(',');
        let rows: usize = dims
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| LinalgError::Csv(format!("bad header line: {header:?}")))?;
        let cols: usize = dims
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| LinalgError::Csv(format!("bad header line: {header:?}")))?;
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Csv("zero dimension in header".into()));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if k >= rows {
                return Err(LinalgError::Csv("more rows than the header declares".into()));
            }
            for field in line.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| LinalgError::Csv(format!("bad value {field:?} on row {k}")))?;
                data.push(v);
            }
            if data.len() != (k + 1) * cols {
                return Err(LinalgError::Csv(format!("row {k} does not have {cols} columns")));
            }
        }
        if data.len() != rows * cols {
            return Err(LinalgError::Csv("fewer rows than the header declares".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFiniteEntry);
        }
        Ok(Matrix { rows, cols, data })
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// JSON form is a plain array of row arrays.
impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = (0..self.rows).map(|i| self.row(i)).collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(rows).map_err(D::Error::custom)
    }
}

/// Standard dense product.
pub fn mat_mul(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::ShapeMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            for j in 0..b.cols {
                out[(i, j)] += aik * b[(k, j)];
            }
        }
    }
    Ok(out)
}

/// Solves `a * x = b` by Gaussian elimination with scaled partial pivoting.
///
/// Fails with [`LinalgError::NearSingularSystem`] when the chosen pivot is
/// below [`PIVOT_REL_TOL`] relative to its row's largest absolute entry.
pub fn solve_dense(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    solve_dense_diag(a, b).map(|(x, _)| x)
}

/// As [`solve_dense`], but also reports the smallest absolute pivot met
/// during elimination (a conditioning diagnostic).
pub fn solve_dense_diag(a: &Matrix, b: &Matrix) -> Result<(Matrix, f64), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::ShapeMismatch(format!(
            "coefficient matrix is {}x{}",
            a.rows, a.cols
        )));
    }
    if b.rows != a.rows {
        return Err(LinalgError::ShapeMismatch(format!(
            "rhs has {} rows, expected {}",
            b.rows, a.rows
        )));
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut rhs = b.clone();
    // Row scales from the original matrix; an all-zero row is singular.
    let mut scale = Vec::with_capacity(n);
    for i in 0..n {
        let s = m.row(i).iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if s == 0.0 {
            return Err(LinalgError::NearSingularSystem { col: i, pivot: 0.0 });
        }
        scale.push(s);
    }
    let mut min_pivot = f64::INFINITY;
    for k in 0..n {
        let mut best = k;
        let mut best_ratio = m[(k, k)].abs() / scale[k];
        for r in k + 1..n {
            let ratio = m[(r, k)].abs() / scale[r];
            if ratio > best_ratio {
                best = r;
                best_ratio = ratio;
            }
        }
        if best_ratio < PIVOT_REL_TOL {
            return Err(LinalgError::NearSingularSystem {
                col: k,
                pivot: best_ratio,
            });
        }
        if best != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(best, j)];
                m[(best, j)] = tmp;
            }
            for j in 0..rhs.cols {
                let tmp = rhs[(k, j)];
                rhs[(k, j)] = rhs[(best, j)];
                rhs[(best, j)] = tmp;
            }
            scale.swap(k, best);
        }
        let pivot = m[(k, k)];
        min_pivot = min_pivot.min(pivot.abs());
        for r in k + 1..n {
            let factor = m[(r, k)] / pivot;
            if factor == 0.0 {
                continue;
            }
            m[(r, k)] = 0.0;
            for j in k + 1..n {
                m[(r, j)] -= factor * m[(k, j)];
            }
            for j in 0..rhs.cols {
                rhs[(r, j)] -= factor * rhs[(k, j)];
            }
        }
    }
    let mut x = Matrix::zeros(n, rhs.cols);
    for j in 0..rhs.cols {
        for i in (0..n).rev() {
            let mut acc = rhs[(i, j)];
            for t in i + 1..n {
                acc -= m[(i, t)] * x[(t, j)];
            }
            x[(i, j)] = acc / m[(i, i)];
        }
    }
    Ok((x, min_pivot))
}

/// Inverts a matrix that is unit upper-triangular under some permutation of
/// its indices (unit diagonal, and the off-diagonal nonzero pattern is
/// acyclic when read as edges `i -> j`).
///
/// For `I - L` with `L` strictly triangular in a topological order this is
/// the exact Neumann sum `I + L + ... + L^(n-1)`, evaluated by
/// back-substitution.
pub fn unit_upper_triangular_inverse(a: &Matrix) -> Result<Matrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::ShapeMismatch(format!(
            "matrix is {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    for i in 0..n {
        if a[(i, i)] != 1.0 {
            return Err(LinalgError::NotUnitTriangular);
        }
    }
    let order = pattern_topological_order(a).ok_or(LinalgError::NotUnitTriangular)?;
    // Permute into a genuine unit upper-triangular matrix.
    let u = Matrix::from_fn(n, n, |i, j| a[(order[i], order[j])]);
    // Column-by-column back substitution on U.
    let mut inv_u = Matrix::identity(n);
    for c in 0..n {
        for r in (0..c).rev() {
            let mut acc = 0.0;
            for t in r + 1..=c {
                acc += u[(r, t)] * inv_u[(t, c)];
            }
            inv_u[(r, c)] = -acc;
        }
    }
    let mut out = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out[(order[r], order[c])] = inv_u[(r, c)];
        }
    }
    Ok(out)
}

/// Topological order of the off-diagonal nonzero pattern, smallest index
/// first on ties; `None` if the pattern has a cycle.
fn pattern_topological_order(a: &Matrix) -> Option<Vec<usize>> {
    let n = a.rows;
    let mut indegree = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] != 0.0 {
                indegree[j] += 1;
            }
        }
    }
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..n)
        .filter(|&v| indegree[v] == 0)
        .map(std::cmp::Reverse)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse(v)) = ready.pop() {
        order.push(v);
        for j in 0..n {
            if j != v && a[(v, j)] != 0.0 {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(std::cmp::Reverse(j));
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Plain (unpivoted) Cholesky of a symmetric matrix; `None` when a pivot is
/// not strictly positive.
pub(crate) fn cholesky(a: &Matrix) -> Option<Matrix> {
    assert!(a.is_square());
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if acc <= 0.0 {
                    return None;
                }
                l[(i, i)] = acc.sqrt();
            } else {
                l[(i, j)] = acc / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Checks symmetry within `tol` and positive semidefiniteness via pivoted
/// Cholesky: at every step the largest remaining diagonal must be at least
/// `-tol`, and once the diagonal is exhausted (all at most `tol`) the
/// remaining submatrix must be negligible as well.
pub fn psd_check(a: &Matrix, tol: f64) -> bool {
    assert!(a.is_square(), "psd_check needs a square matrix");
    assert!(tol >= 0.0, "tolerance must be nonnegative");
    let n = a.rows;
    for i in 0..n {
        for j in i + 1..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    let mut w = a.symmetrized();
    let diag_scale = (0..n).fold(0.0f64, |acc, i| acc.max(w[(i, i)].abs()));
    let small = tol * diag_scale.max(1.0);
    // `active` holds the indices not yet eliminated.
    let mut active: Vec<usize> = (0..n).collect();
    while !active.is_empty() {
        let (pos, &p) = active
            .iter()
            .enumerate()
            .max_by(|x, y| w[(*x.1, *x.1)].total_cmp(&w[(*y.1, *y.1)]))
            .expect("active is non-empty");
        let d = w[(p, p)];
        if d < -small {
            return false;
        }
        if d <= small {
            // The remaining block is diagonal-exhausted; for a PSD matrix its
            // off-diagonal part must be negligible too.
            return active.iter().all(|&i| {
                active
                    .iter()
                    .all(|&j| i == j || w[(i, j)].abs() <= 10.0 * small.max(tol))
            });
        }
        active.swap_remove(pos);
        for &i in &active {
            let f = w[(i, p)] / d;
            if f == 0.0 {
                continue;
            }
            for &j in &active {
                let upd = f * w[(p, j)];
                w[(i, j)] -= upd;
            }
        }
    }
    true
}
