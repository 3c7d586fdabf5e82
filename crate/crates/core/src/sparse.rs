//! Compressed sparse row storage and a (optionally Jacobi-preconditioned)
//! conjugate gradient solver for symmetric positive definite systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from raw CSR arrays, checking the structural invariants.
    pub fn try_from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::DimensionMismatch {
                context: "row_offsets",
                expected: n_rows + 1,
                actual: row_offsets.len(),
            });
        }
        if col_indices.len() != values.len() || row_offsets[n_rows] != values.len() || row_offsets[0] != 0 {
            return Err(Error::DimensionMismatch {
                context: "csr arrays",
                expected: row_offsets[n_rows],
                actual: values.len(),
            });
        }
        for r in 0..n_rows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return Err(Error::param("row_offsets", format!("decreasing at row {r}")));
            }
            let cols = &col_indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param("col_indices", format!("row {r} not strictly increasing")));
            }
            if let Some(&c) = cols.last() {
                if c >= n_cols {
                    return Err(Error::IndexOutOfRange { index: c, len: n_cols });
                }
            }
        }
        Ok(CsrMatrix { n_rows, n_cols, row_offsets, col_indices, values })
    }

    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            if r >= n_rows {
                return Err(Error::IndexOutOfRange { index: r, len: n_rows });
            }
            if c >= n_cols {
                return Err(Error::IndexOutOfRange { index: c, len: n_cols });
            }
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let mut next = counts.clone();
        let mut entries = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            entries[next[r]] = (c, v);
            next[r] += 1;
        }

        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for r in 0..n_rows {
            let row = &mut entries[counts[r]..counts[r + 1]];
            // Stable sort keeps the summation order of duplicates deterministic.
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in row.iter() {
                if col_indices.len() > row_offsets[r] && *col_indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix { n_rows, n_cols, row_offsets, col_indices, values })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch { context: "dense row", expected: n_cols, actual: row.len() });
            }
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(rows.len(), n_cols, &triplets)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(col, value)` over the stored entries of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
        self.col_indices[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
        match self.col_indices[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0..self.n_rows).all(|r| self.row(r).all(|(c, v)| (v - self.get(c, r)).abs() <= rel_tol * scale))
    }

    /// `self + alpha * other` over the union of both sparsity patterns.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch {
                context: "add_scaled",
                expected: self.n_rows,
                actual: other.n_rows,
            });
        }
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        row_offsets.push(0);
        for r in 0..self.n_rows {
            let mut a = self.row(r).peekable();
            let mut b = other.row(r).peekable();
            loop {
                let next = match (a.peek(), b.peek()) {
                    (Some(&(ca, va)), Some(&(cb, vb))) => {
                        if ca == cb {
                            a.next();
                            b.next();
                            (ca, va + alpha * vb)
                        } else if ca < cb {
                            a.next();
                            (ca, va)
                        } else {
                            b.next();
                            (cb, alpha * vb)
                        }
                    }
                    (Some(&(ca, va)), None) => {
                        a.next();
                        (ca, va)
                    }
                    (None, Some(&(cb, vb))) => {
                        b.next();
                        (cb, alpha * vb)
                    }
                    (None, None) => break,
                };
                col_indices.push(next.0);
                values.push(next.1);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix { n_rows: self.n_rows, n_cols: self.n_cols, row_offsets, col_indices, values })
    }

    /// `y = A x` into a caller-provided buffer.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch { context: "spmv input", expected: self.n_cols, actual: x.len() });
        }
        if y.len() != self.n_rows {
            return Err(Error::DimensionMismatch { context: "spmv output", expected: self.n_rows, actual: y.len() });
        }
        for (r, out) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *out = acc;
        }
        Ok(())
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.n_rows {
            return Err(Error::DimensionMismatch { context: "bilinear form", expected: self.n_rows, actual: x.len() });
        }
        let ay = self.spmv(y)?;
        Ok(dot(x, &ay))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    /// `None` means `10 * n_rows`.
    pub max_iters: Option<usize>,
    pub precondition: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { rel_tol: 1e-10, max_iters: None, precondition: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iters: usize,
    /// True relative residual `||b - Ax|| / ||b||` at exit.
    pub final_residual: f64,
}

/// Solves `A x = b` for SPD `A` starting from zero.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], opts: &CgOptions) -> Result<CgSolution> {
    cg_solve_from(a, b, None, opts)
}

/// Conjugate gradient with an optional initial guess.
///
/// Convergence is declared on the recurrence residual and then confirmed
/// against the true residual `b - A x`; if the two disagree the iteration
/// restarts from the current iterate.
pub fn cg_solve_from(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: &CgOptions) -> Result<CgSolution> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(Error::DimensionMismatch { context: "cg matrix (square)", expected: n, actual: a.n_cols() });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch { context: "cg right-hand side", expected: n, actual: b.len() });
    }
    if !(opts.rel_tol > 0.0) {
        return Err(Error::param("rel_tol", "must be positive"));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cg right-hand side".into()));
    }
    let max_iters = opts.max_iters.unwrap_or(10 * n.max(1));
    if max_iters == 0 {
        return Err(Error::param("max_iters", "must be positive"));
    }

    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgSolution { x: vec![0.0; n], iters: 0, final_residual: 0.0 });
    }
    let target = opts.rel_tol * b_norm;

    let inv_diag: Option<Vec<f64>> = if opts.precondition {
        let d = a.diagonal();
        if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Breakdown { iters: 0, reason: format!("non-positive diagonal at row {i}") });
        }
        Some(d.iter().map(|v| 1.0 / v).collect())
    } else {
        None
    };
    let apply_prec = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(inv) => z.iter_mut().zip(r).zip(inv).for_each(|((z, r), d)| *z = r * d),
        None => z.copy_from_slice(r),
    };

    let mut x = match x0 {
        Some(x0) if x0.len() == n => x0.to_vec(),
        Some(x0) => {
            return Err(Error::DimensionMismatch { context: "cg initial guess", expected: n, actual: x0.len() });
        }
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];

    let true_residual = |x: &[f64], r: &mut [f64], ap: &mut [f64]| -> Result<f64> {
        a.spmv_into(x, ap)?;
        r.iter_mut().zip(b).zip(ap.iter()).for_each(|((r, b), ax)| *r = b - ax);
        Ok(norm2(r))
    };

    let mut r_norm = true_residual(&x, &mut r, &mut ap)?;
    let mut iters = 0;
    'restart: loop {
        if !r_norm.is_finite() {
            return Err(Error::NonFinite(format!("cg residual after {iters} iterations")));
        }
        if r_norm <= target {
            return Ok(CgSolution { x, iters, final_residual: r_norm / b_norm });
        }
        apply_prec(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iters < max_iters {
            a.spmv_into(&p, &mut ap)?;
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                if !pap.is_finite() {
                    return Err(Error::NonFinite(format!("cg search direction at iteration {iters}")));
                }
                return Err(Error::Breakdown {
                    iters,
                    reason: format!("p^T A p = {pap:e}; matrix not positive definite"),
                });
            }
            let alpha = rz / pap;
            x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
            r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
            iters += 1;
            r_norm = norm2(&r);
            if !r_norm.is_finite() {
                return Err(Error::NonFinite(format!("cg residual at iteration {iters}")));
            }
            if r_norm <= target {
                r_norm = true_residual(&x, &mut r, &mut ap)?;
                continue 'restart;
            }
            apply_prec(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        }
        let r_norm = true_residual(&x, &mut r, &mut ap)?;
        if r_norm <= target {
            return Ok(CgSolution { x, iters, final_residual: r_norm / b_norm });
        }
        return Err(Error::NotConverged { iters, residual: r_norm / b_norm });
    }
}
