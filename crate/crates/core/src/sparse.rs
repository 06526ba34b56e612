//! Compressed sparse row matrices, ILU(0) and preconditioned BiCGSTAB.

use crate::error::{Error, Result};

/// Relative residual tolerance of [`solve`].
pub const TOLERANCE: f64 = 1e-10;
/// Iteration cap of [`solve`].
pub const MAX_ITERATIONS: usize = 100_000;

/// Breakdown restarts allowed in one solve.
const MAX_RESTARTS: usize = 50;

/// Name of the Krylov method, recorded in reports.
pub const METHOD: &str = "BiCGSTAB with ILU(0) preconditioning";

#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Row-by-row builder; entries within a row may repeat and are summed.
#[derive(Debug)]
pub struct CsrBuilder {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pending: Vec<(usize, f64)>,
}

impl CsrBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0],
            cols: Vec::with_capacity(5 * n),
            vals: Vec::with_capacity(5 * n),
            pending: Vec::with_capacity(8),
        }
    }

    #[inline]
    pub fn add(&mut self, col: usize, val: f64) {
        self.pending.push((col, val));
    }

    /// Closes the current row.
    pub fn finish_row(&mut self) {
        self.pending.sort_by_key(|e| e.0);
        let mut last: Option<usize> = None;
        for &(c, v) in &self.pending {
            if last == Some(c) {
                *self.vals.last_mut().unwrap() += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
                last = Some(c);
            }
        }
        self.pending.clear();
        self.row_ptr.push(self.cols.len());
    }

    pub fn build(self) -> CsrMatrix {
        assert_eq!(self.row_ptr.len(), self.n + 1, "unfinished rows");
        CsrMatrix {
            n: self.n,
            row_ptr: self.row_ptr,
            cols: self.cols,
            vals: self.vals,
        }
    }
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(col, value)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// `y = Aᵀ x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, xi) in x.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.cols[k]] += self.vals[k] * xi;
            }
        }
        y
    }

    /// Whether every off-diagonal entry is ≤ 0 and every diagonal entry > 0.
    pub fn has_m_matrix_signs(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| if i == j { v > 0.0 } else { v <= 0.0 }))
    }
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &CsrMatrix) -> Result<Self> {
        let mut lu = a.clone();
        let n = a.n;
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[k] == i {
                    *d = k;
                }
            }
            if *d == usize::MAX {
                return Err(Error::SolverDiverged {
                    iterations: 0,
                    residual: f64::NAN,
                });
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.cols[k]] = k;
            }
            for k in start..end {
                let j = lu.cols[k];
                if j >= i {
                    break;
                }
                let pivot = lu.vals[diag[j]];
                let f = lu.vals[k] / pivot;
                lu.vals[k] = f;
                for m in diag[j] + 1..lu.row_ptr[j + 1] {
                    let p = pos[lu.cols[m]];
                    if p != usize::MAX {
                        lu.vals[p] -= f * lu.vals[m];
                    }
                }
            }
            for k in start..end {
                pos[lu.cols[k]] = usize::MAX;
            }
            if lu.vals[diag[i]] == 0.0 {
                return Err(Error::SolverDiverged {
                    iterations: 0,
                    residual: f64::NAN,
                });
            }
        }
        Ok(Self { lu, diag })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        let n = lu.n;
        for i in 0..n {
            let mut s = r[i];
            for k in lu.row_ptr[i]..self.diag[i] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s / lu.vals[self.diag[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a converged solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveInfo {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `A x = b` to relative residual [`TOLERANCE`], starting from `x0`.
pub fn solve(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>) -> Result<(Vec<f64>, SolveInfo)> {
    let n = a.n;
    let bnorm = norm(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveInfo { iterations: 0, residual: 0.0 }));
    }
    let pc = Ilu0::new(a)?;
    let mut r = a.apply(&x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut res = norm(&r) / bnorm;
    if res <= TOLERANCE {
        return Ok((x, SolveInfo { iterations: 0, residual: res }));
    }
    let mut r_hat = r.clone();
    let mut restarts = 0;
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=MAX_ITERATIONS {
        let mut rho_new = dot(&r_hat, &r);
        if rho_new.abs() <= 1e-14 * norm(&r_hat) * norm(&r) || omega == 0.0 {
            // breakdown: restart with the current residual as shadow vector
            restarts += 1;
            if restarts > MAX_RESTARTS {
                return Err(Error::SolverDiverged {
                    iterations: it,
                    residual: res,
                });
            }
            r_hat.copy_from_slice(&r);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            p.fill(0.0);
            v.fill(0.0);
            rho_new = dot(&r_hat, &r);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pc.apply(&p, &mut y);
        a.mul_vec(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bnorm <= TOLERANCE {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            let res = true_residual(a, &x, b, bnorm);
            return Ok((x, SolveInfo { iterations: it, residual: res }));
        }
        pc.apply(&s, &mut z);
        a.mul_vec(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bnorm;
        if !res.is_finite() {
            break;
        }
        if res <= TOLERANCE {
            let res = true_residual(a, &x, b, bnorm);
            return Ok((x, SolveInfo { iterations: it, residual: res }));
        }
    }
    Err(Error::SolverDiverged {
        iterations: MAX_ITERATIONS,
        residual: res,
    })
}

fn true_residual(a: &CsrMatrix, x: &[f64], b: &[f64], bnorm: f64) -> f64 {
    let ax = a.apply(x);
    let r: f64 = ax.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    r.sqrt() / bnorm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, lo: f64, d: f64, up: f64) -> CsrMatrix {
        let mut b = CsrBuilder::new(n);
        for i in 0..n {
            if i > 0 {
                b.add(i - 1, lo);
            }
            b.add(i, d);
            if i + 1 < n {
                b.add(i + 1, up);
            }
            b.finish_row();
        }
        b.build()
    }

    #[test]
    fn builder_sums_duplicates() {
        let mut b = CsrBuilder::new(1);
        b.add(0, 1.0);
        b.add(0, 2.5);
        b.finish_row();
        let m = b.build();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 3.5);
    }

    #[test]
    fn tridiagonal_is_exact_under_ilu() {
        // ILU(0) of a tridiagonal matrix is its exact LU, so one iteration suffices.
        let m = tridiag(50, -1.0, 2.5, -1.2);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = m.apply(&x_true);
        let (x, info) = solve(&m, &b, None).unwrap();
        assert!(info.iterations <= 2);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn poisson_2d() {
        let n = 30;
        let mut b = CsrBuilder::new(n * n);
        for j in 0..n {
            for i in 0..n {
                let k = i + n * j;
                b.add(k, 4.0);
                if i > 0 {
                    b.add(k - 1, -1.0);
                }
                if i + 1 < n {
                    b.add(k + 1, -0.9);
                }
                if j > 0 {
                    b.add(k - n, -1.0);
                }
                if j + 1 < n {
                    b.add(k + n, -1.1);
                }
                b.finish_row();
            }
        }
        let m = b.build();
        let x_true: Vec<f64> = (0..n * n).map(|i| 1.0 + (i % 7) as f64).collect();
        let rhs = m.apply(&x_true);
        let (x, info) = solve(&m, &rhs, None).unwrap();
        assert!(info.residual <= TOLERANCE * 10.0);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let m = tridiag(5, -1.0, 2.0, -1.0);
        let (x, _) = solve(&m, &[0.0; 5], None).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
