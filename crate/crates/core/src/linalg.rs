//! Dense and banded linear algebra used by the assembly, Schur complement
//! and semigroup layers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-compressed complex matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicates are summed
    /// in the order given.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                assert!(c < ncols, "column {c} out of range");
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn mul_vec(&self, x: &CVector) -> CVector {
        assert_eq!(x.len(), self.ncols);
        CVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()),
        )
    }

    /// `y^H A x`.
    pub fn form(&self, x: &CVector, y: &CVector) -> Complex64 {
        (0..self.nrows)
            .map(|i| y[i].conj() * self.row(i).map(|(j, v)| v * x[j]).sum::<Complex64>())
            .sum()
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Dense block `A[rows, cols]`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> CMatrix {
        let pos = position_map(self.ncols, cols);
        let mut m = CMatrix::zeros(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if let Some(c) = pos[j] {
                    m[(r, c)] = v;
                }
            }
        }
        m
    }

    /// Sparse block `A[rows, cols]` with renumbered indices.
    pub fn sub_matrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let pos = position_map(self.ncols, cols);
        let out = rows
            .iter()
            .map(|&i| self.row(i).filter_map(|(j, v)| pos[j].map(|c| (c, v))).collect())
            .collect();
        CsrMatrix::from_rows(cols.len(), out)
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `max |A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Hermitian part `(A + A^H) / 2` as a sparse matrix.
    pub fn hermitian_part(&self) -> CsrMatrix {
        let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); self.nrows];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                rows[i].push((j, 0.5 * v));
                rows[j].push((i, 0.5 * v.conj()));
            }
        }
        CsrMatrix::from_rows(self.ncols, rows)
    }

    /// Lower and upper bandwidth.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }
}

fn position_map(n: usize, idx: &[usize]) -> Vec<Option<usize>> {
    let mut pos = vec![None; n];
    for (k, &i) in idx.iter().enumerate() {
        pos[i] = Some(k);
    }
    pos
}

/// LU factorization of a banded matrix with partial pivoting, `PA = LU`.
///
/// Storage is dense inside each row's active window; row interchanges
/// widen the upper band by at most the lower bandwidth.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    /// `u_rows[k]` holds `U[k, k..k + len]`.
    u_rows: Vec<Vec<Complex64>>,
    /// `multipliers[k][r]` eliminates position `k + 1 + r` at step `k`.
    multipliers: Vec<Vec<Complex64>>,
    pivots: Vec<usize>,
}

struct WorkRow {
    start: usize,
    data: Vec<Complex64>,
}

impl WorkRow {
    fn get(&self, j: usize) -> Complex64 {
        if j < self.start {
            ZERO
        } else {
            self.data.get(j - self.start).copied().unwrap_or(ZERO)
        }
    }
}

impl BandLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        Self::factor_impl(a, true)
    }

    fn factor_impl(a: &CsrMatrix, pivoting: bool) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::InvalidArgument("LU needs a square matrix".into()));
        }
        let (kl, _) = a.bandwidths();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut rows: Vec<WorkRow> = (0..n)
            .map(|i| {
                let start = a.row(i).next().map_or(i, |(j, _)| j.min(i));
                let end = a.row(i).last().map_or(i + 1, |(j, _)| (j + 1).max(i + 1));
                let mut data = vec![ZERO; end - start];
                for (j, v) in a.row(i) {
                    data[j - start] = v;
                }
                WorkRow { start, data }
            })
            .collect();

        let mut u_rows = Vec::with_capacity(n);
        let mut multipliers = Vec::with_capacity(n);
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            if pivoting {
                let mut best = rows[k].get(k).norm();
                for i in k + 1..=last {
                    let v = rows[i].get(k).norm();
                    if v > best {
                        best = v;
                        p = i;
                    }
                }
            }
            rows.swap(k, p);
            pivots.push(p);
            let pivot = rows[k].get(k);
            if !(pivot.norm() > 1e-14 * scale) {
                return Err(Error::SingularDirichlet {
                    row: k,
                    pivot: pivot.norm(),
                });
            }
            let (head, tail) = rows.split_at_mut(k + 1);
            let prow = &head[k];
            let pend = prow.start + prow.data.len();
            let mut mults = Vec::with_capacity(last - k);
            for row in tail.iter_mut().take(last - k) {
                let v = row.get(k);
                if v == ZERO {
                    mults.push(ZERO);
                    continue;
                }
                let f = v / pivot;
                mults.push(f);
                let rend = row.start + row.data.len();
                if pend > rend {
                    row.data.resize(pend - row.start, ZERO);
                }
                for j in k + 1..pend {
                    let u = prow.data[j - prow.start];
                    if u != ZERO {
                        row.data[j - row.start] -= f * u;
                    }
                }
                row.data[k - row.start] = ZERO;
            }
            multipliers.push(mults);
            let prow = &rows[k];
            u_rows.push(prow.data[k - prow.start..].to_vec());
        }
        Ok(Self {
            n,
            u_rows,
            multipliers,
            pivots,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        assert_eq!(b.len(), self.n);
        for k in 0..self.n {
            b.swap(k, self.pivots[k]);
            let bk = b[k];
            if bk != ZERO {
                for (r, &m) in self.multipliers[k].iter().enumerate() {
                    b[k + 1 + r] -= m * bk;
                }
            }
        }
        for k in (0..self.n).rev() {
            let row = &self.u_rows[k];
            let mut s = b[k];
            for (off, &u) in row.iter().enumerate().skip(1) {
                s -= u * b[k + off];
            }
            b[k] = s / row[0];
        }
    }

    pub fn solve(&self, b: &CVector) -> CVector {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &CMatrix) -> CMatrix {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        x
    }
}

/// Positive definiteness of a Hermitian matrix via elimination without
/// pivoting: all pivots are positive iff all leading minors are.
pub fn is_positive_definite(h: &CsrMatrix) -> bool {
    positive_definite_factor(h).is_some()
}

fn positive_definite_factor(h: &CsrMatrix) -> Option<BandLu> {
    let lu = BandLu::factor_impl(h, false).ok()?;
    lu.u_rows.iter().all(|r| r[0].re > 0.0).then_some(lu)
}

/// Above this size the smallest pencil eigenvalue of a positive definite
/// matrix is found by inverse iteration instead of a dense solve.
pub const DENSE_EIG_LIMIT: usize = 1600;

/// Smallest `lambda` with `H x = lambda W x` for Hermitian `H` and positive
/// diagonal `W`.
pub fn smallest_pencil_eigenvalue(h: &CsrMatrix, weight: &[f64]) -> f64 {
    let n = h.nrows();
    assert_eq!(weight.len(), n);
    if n == 0 {
        return f64::NAN;
    }
    if n > DENSE_EIG_LIMIT {
        if let Some(lu) = positive_definite_factor(h) {
            return inverse_iteration(h, &lu, weight);
        }
    }
    let s: Vec<f64> = weight.iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut dense = h.to_dense();
    for i in 0..n {
        for j in 0..n {
            dense[(i, j)] *= s[i] * s[j];
        }
    }
    hermitian_eigenvalues(&dense)[0]
}

fn inverse_iteration(h: &CsrMatrix, lu: &BandLu, weight: &[f64]) -> f64 {
    let n = h.nrows();
    let w_norm = |x: &CVector| x.iter().zip(weight).map(|(z, w)| w * z.norm_sqr()).sum::<f64>().sqrt();
    let mut x = CVector::from_fn(n, |i, _| Complex64::new(1.0 + 0.25 * ((i as f64) * 0.618).sin(), 0.0));
    let mut lambda = f64::INFINITY;
    for _ in 0..1000 {
        let nx = w_norm(&x);
        x /= Complex64::new(nx, 0.0);
        let next = h.form(&x, &x).re;
        let done = (next - lambda).abs() <= 1e-14 * next.abs();
        lambda = next;
        if done {
            break;
        }
        let mut y = CVector::from_fn(n, |i, _| x[i] * weight[i]);
        lu.solve_in_place(y.as_mut_slice());
        x = y;
    }
    lambda
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn max_abs_vec(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |M_ij - conj(M_ji)|`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian
/// matrix. Only the lower triangle is read.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let (values, vectors): (Vec<f64>, CMatrix) = if is_real(m) {
        let re = DMatrix::from_fn(n, n, |i, j| m[(i.max(j), i.min(j))].re);
        let e = re.symmetric_eigen();
        (
            e.eigenvalues.iter().copied().collect(),
            e.eigenvectors.map(|v| Complex64::new(v, 0.0)),
        )
    } else {
        let h = CMatrix::from_fn(n, n, |i, j| if i >= j { m[(i, j)] } else { m[(j, i)].conj() });
        let e = h.symmetric_eigen();
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted = order.iter().map(|&k| values[k]).collect();
    let vecs = CMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    (sorted, vecs)
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let n = m.nrows();
    let mut values: Vec<f64> = if is_real(m) {
        let re = DMatrix::from_fn(n, n, |i, j| m[(i.max(j), i.min(j))].re);
        re.symmetric_eigenvalues().iter().copied().collect()
    } else {
        let h = CMatrix::from_fn(n, n, |i, j| if i >= j { m[(i, j)] } else { m[(j, i)].conj() });
        h.symmetric_eigenvalues().iter().copied().collect()
    };
    values.sort_by(f64::total_cmp);
    values
}

/// Padé(13) numerator/denominator coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm of the scaled argument.
pub const EXPM_SCALED_NORM: f64 = 0.5;

fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with the diagonal Padé
/// approximant of order 13; the argument is scaled by `2^-s` until its
/// 1-norm is at most [`EXPM_SCALED_NORM`].
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    let norm = one_norm(a);
    let s = if norm > EXPM_SCALED_NORM {
        (norm / EXPM_SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * Complex64::new(2f64.powi(-s), 0.0);

    let b = PADE13.map(|v| Complex64::new(v, 0.0));
    let ident = CMatrix::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .expect("Pade denominator is nonsingular for scaled norm <= 0.5");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::from_diagonal_element(n, n, ONE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|i| {
                let mut row = Vec::new();
                for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                    if rng.random_bool(0.8) {
                        row.push((j, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))));
                    }
                }
                row
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    #[test]
    fn csr_sums_duplicates_and_blocks() {
        let a = CsrMatrix::from_rows(
            3,
            vec![
                vec![(2, c(1.0, 0.0)), (0, c(2.0, 0.0)), (2, c(0.5, 1.0))],
                vec![],
                vec![(1, c(3.0, 0.0))],
            ],
        );
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 2), c(1.5, 1.0));
        assert_eq!(a.get(1, 1), c(0.0, 0.0));
        let d = a.block(&[0, 2], &[2, 1]);
        assert_eq!(d[(0, 0)], c(1.5, 1.0));
        assert_eq!(d[(1, 1)], c(3.0, 0.0));
        assert_eq!(a.sub_matrix(&[0, 2], &[2, 1]).to_dense(), d);
    }

    #[test]
    fn band_lu_matches_dense_solve() {
        for (n, kl, ku, seed) in [
            (1, 0, 0, 1),
            (5, 1, 1, 2),
            (40, 3, 5, 3),
            (60, 7, 2, 4),
            (30, 29, 29, 5),
        ] {
            let mut a = random_band(n, kl, ku, seed);
            // keep it safely nonsingular
            let rows = (0..n).map(|i| {
                let mut r: Vec<_> = a.row(i).collect();
                r.push((i, c(0.1, 0.0)));
                r
            });
            a = CsrMatrix::from_rows(n, rows.collect());
            let lu = BandLu::factor(&a).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let b = CVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let x = lu.solve(&b);
            let r = a.mul_vec(&x) - &b;
            assert!(
                max_abs_vec(&r) < 1e-10 * (1.0 + max_abs_vec(&x)),
                "n={n} residual {}",
                max_abs_vec(&r)
            );
        }
    }

    #[test]
    fn band_lu_pivots_on_zero_diagonal() {
        let a = CsrMatrix::from_rows(
            2,
            vec![vec![(1, c(1.0, 0.0))], vec![(0, c(1.0, 0.0)), (1, c(1.0, 0.0))]],
        );
        let lu = BandLu::factor(&a).unwrap();
        let x = lu.solve(&CVector::from_vec(vec![c(2.0, 0.0), c(5.0, 0.0)]));
        assert!((x[0] - c(3.0, 0.0)).norm() < 1e-15 && (x[1] - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn band_lu_detects_singular() {
        let a = CsrMatrix::from_rows(
            2,
            vec![
                vec![(0, c(1.0, 0.0)), (1, c(1.0, 0.0))],
                vec![(0, c(1.0, 0.0)), (1, c(1.0, 0.0))],
            ],
        );
        assert!(matches!(BandLu::factor(&a), Err(Error::SingularDirichlet { .. })));
    }

    #[test]
    fn positive_definiteness() {
        let pd = CsrMatrix::from_rows(
            2,
            vec![
                vec![(0, c(2.0, 0.0)), (1, c(0.0, 1.0))],
                vec![(0, c(0.0, -1.0)), (1, c(2.0, 0.0))],
            ],
        );
        assert!(is_positive_definite(&pd));
        let indef = CsrMatrix::from_rows(
            2,
            vec![
                vec![(0, c(1.0, 0.0)), (1, c(0.0, 2.0))],
                vec![(0, c(0.0, -2.0)), (1, c(1.0, 0.0))],
            ],
        );
        assert!(!is_positive_definite(&indef));
    }

    #[test]
    fn pencil_eigenvalue_paths_agree() {
        // 1-D Dirichlet Laplacian with a varying diagonal weight.
        let n = DENSE_EIG_LIMIT + 200;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, c(2.0, 0.0))];
                if i > 0 {
                    r.push((i - 1, c(-1.0, 0.0)));
                }
                if i + 1 < n {
                    r.push((i + 1, c(-1.0, 0.0)));
                }
                r
            })
            .collect();
        let h = CsrMatrix::from_rows(n, rows);
        let w: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (i as f64 / n as f64)).collect();
        let lu = positive_definite_factor(&h).unwrap();
        let iterative = inverse_iteration(&h, &lu, &w);
        assert_eq!(smallest_pencil_eigenvalue(&h, &w), iterative);
        let small = h.sub_matrix(&(0..300).collect::<Vec<_>>(), &(0..300).collect::<Vec<_>>());
        let lu = positive_definite_factor(&small).unwrap();
        let dense = smallest_pencil_eigenvalue(&small, &w[..300]);
        let iter = inverse_iteration(&small, &lu, &w[..300]);
        assert!((dense - iter).abs() < 1e-9 * dense, "{dense} vs {iter}");
    }

    #[test]
    fn hermitian_eigen_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 30;
        let g = CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let h = (&g + g.adjoint()) * c(0.5, 0.0);
        let (vals, vecs) = hermitian_eigen(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let lam = CMatrix::from_diagonal(&CVector::from_iterator(n, vals.iter().map(|&v| c(v, 0.0))));
        assert!(max_abs(&(&h * &vecs - &vecs * lam)) < 1e-10);
        assert!(max_abs(&(vecs.adjoint() * &vecs - identity(n))) < 1e-10);
        let only = hermitian_eigenvalues(&h);
        for (a, b) in only.iter().zip(&vals) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn expm_scalar_and_diagonal() {
        let a = CMatrix::from_element(1, 1, c(-1.0, 0.0));
        assert!((expm(&a)[(0, 0)].re - (-1f64).exp()).abs() < 1e-15);
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(-30.0, 0.0), c(2.0, 1.0), c(0.0, 0.0)]));
        let e = expm(&d);
        assert!((e[(0, 0)] - c(-30.0, 0.0).exp()).norm() < 1e-25);
        assert!((e[(1, 1)] - c(2.0, 1.0).exp()).norm() < 1e-13);
        assert_eq!(expm(&CMatrix::zeros(3, 3)), identity(3));
    }

    #[test]
    fn expm_nilpotent_and_rotation() {
        // exp([[0, 1], [0, 0]]) = [[1, 1], [0, 1]]
        let n = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let e = expm(&n);
        assert!((e[(0, 1)] - c(1.0, 0.0)).norm() < 1e-15);
        // exp(theta [[0, -1], [1, 0]]) is a rotation
        let th = 7.3;
        let r = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(-th, 0.0), c(th, 0.0), c(0.0, 0.0)]);
        let e = expm(&r);
        assert!((e[(0, 0)].re - th.cos()).abs() < 1e-13);
        assert!((e[(1, 0)].re - th.sin()).abs() < 1e-13);
    }

    #[test]
    fn expm_matches_spectral_on_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [2, 10, 50] {
            let g = CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let h = (&g + g.adjoint()) * c(2.0, 0.0);
            let (vals, vecs) = hermitian_eigen(&h);
            for t in [0.1, 1.0] {
                let d = CVector::from_iterator(n, vals.iter().map(|&l| c((-t * l).exp(), 0.0)));
                let spectral = &vecs * CMatrix::from_diagonal(&d) * vecs.adjoint();
                let direct = expm(&(&h * c(-t, 0.0)));
                let rel = max_abs(&(&spectral - &direct)) / max_abs(&spectral);
                assert!(rel < 1e-8, "n={n} t={t} rel={rel}");
            }
        }
    }
}
