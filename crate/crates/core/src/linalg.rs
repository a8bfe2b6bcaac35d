//! Sparse complex matrices and a block-decomposed dense Hermitian eigensolver.
//!
//! Operator matrices assembled in Fourier bases are mostly block diagonal
//! (a twist couples only modes differing by its frequencies), so the
//! eigensolver splits the sparsity graph into connected components and runs a
//! dense solve on each.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par;

/// Largest connected block handed to the dense eigensolver.
pub const MAX_DENSE_BLOCK: usize = 6000;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Row-compressed complex matrix; each row holds `(column, value)` sorted by column.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMat {
    rows: usize,
    cols: usize,
    data: Vec<Vec<(usize, Complex64)>>,
}

fn merge_row(mut row: Vec<(usize, Complex64)>) -> Vec<(usize, Complex64)> {
    row.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, Complex64)> = Vec::with_capacity(row.len());
    for (c, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out.retain(|e| e.1 != ZERO);
    out
}

impl SparseMat {
    pub fn zeros(rows: usize, cols: usize) -> SparseMat {
        SparseMat { rows, cols, data: vec![Vec::new(); rows] }
    }

    pub fn identity(n: usize) -> SparseMat {
        SparseMat { rows: n, cols: n, data: (0..n).map(|i| vec![(i, Complex64::new(1.0, 0.0))]).collect() }
    }

    pub fn diagonal(d: &[Complex64]) -> SparseMat {
        let mut m = SparseMat::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            if v != ZERO {
                m.data[i].push((i, v));
            }
        }
        m
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
    ) -> SparseMat {
        let mut data = vec![Vec::new(); rows];
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
            data[r].push((c, v));
        }
        SparseMat { rows, cols, data: data.into_iter().map(merge_row).collect() }
    }

    pub fn from_dense(m: &DMatrix<Complex64>) -> SparseMat {
        let trip = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| (r, c))).map(|(r, c)| (r, c, m[(r, c)]));
        SparseMat::from_triplets(m.nrows(), m.ncols(), trip)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().map(|r| r.len()).sum()
    }

    pub fn row(&self, r: usize) -> &[(usize, Complex64)] {
        &self.data[r]
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        match self.data[r].binary_search_by_key(&c, |e| e.0) {
            Ok(i) => self.data[r][i].1,
            Err(_) => ZERO,
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::from_element(self.rows, self.cols, ZERO);
        for (r, row) in self.data.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> SparseMat {
        let mut data = vec![Vec::new(); self.cols];
        for (r, row) in self.data.iter().enumerate() {
            for &(c, v) in row {
                data[c].push((r, v.conj()));
            }
        }
        SparseMat { rows: self.cols, cols: self.rows, data }
    }

    pub fn matmul(&self, o: &SparseMat) -> SparseMat {
        assert_eq!(self.cols, o.rows, "matmul shape mismatch");
        let data = par::map_range(self.rows, |r| {
            let mut acc: Vec<(usize, Complex64)> = Vec::new();
            for &(k, a) in &self.data[r] {
                for &(c, b) in &o.data[k] {
                    acc.push((c, a * b));
                }
            }
            merge_row(acc)
        });
        SparseMat { rows: self.rows, cols: o.cols, data }
    }

    pub fn add(&self, o: &SparseMat) -> SparseMat {
        assert!(self.rows == o.rows && self.cols == o.cols, "add shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| merge_row(a.iter().chain(b.iter()).copied().collect()))
            .collect();
        SparseMat { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: Complex64) -> SparseMat {
        let data = self.data.iter().map(|r| merge_row(r.iter().map(|&(c, v)| (c, v * s)).collect())).collect();
        SparseMat { rows: self.rows, cols: self.cols, data }
    }

    /// Kronecker product `self ⊗ o`.
    pub fn kron(&self, o: &SparseMat) -> SparseMat {
        let mut data = Vec::with_capacity(self.rows * o.rows);
        for ra in &self.data {
            for rb in &o.data {
                let mut row = Vec::with_capacity(ra.len() * rb.len());
                for &(ca, va) in ra {
                    for &(cb, vb) in rb {
                        row.push((ca * o.cols + cb, va * vb));
                    }
                }
                data.push(row);
            }
        }
        SparseMat { rows: self.rows * o.rows, cols: self.cols * o.cols, data }
    }

    /// Copies `block` into `self` at offset `(r0, c0)`.
    pub fn place(&mut self, r0: usize, c0: usize, block: &SparseMat) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols, "block out of range");
        for (r, row) in block.data.iter().enumerate() {
            let mut merged = std::mem::take(&mut self.data[r0 + r]);
            merged.extend(row.iter().map(|&(c, v)| (c0 + c, v)));
            self.data[r0 + r] = merge_row(merged);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().flatten().map(|e| e.1.norm()).fold(0.0, f64::max)
    }

    /// Largest entry restricted to the given columns.
    pub fn max_abs_on_columns(&self, keep: &[bool]) -> f64 {
        self.data.iter().flatten().filter(|e| keep[e.0]).map(|e| e.1.norm()).fold(0.0, f64::max)
    }

    /// `max |A_ij − conj(A_ji)| / max(1, max |A|)`; infinite for non-square input.
    pub fn hermitian_residual(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for (r, row) in self.data.iter().enumerate() {
            for &(c, v) in row {
                worst = worst.max((v - self.get(c, r).conj()).norm());
            }
        }
        worst / self.max_abs().max(1.0)
    }

    /// Connected components of the symmetrized sparsity graph, each sorted.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.rows;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (r, row) in self.data.iter().enumerate() {
            for &(c, _) in row {
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }
        groups.into_values().collect()
    }

    fn dense_block(&self, idx: &[usize]) -> DMatrix<Complex64> {
        let mut pos = std::collections::HashMap::with_capacity(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            pos.insert(i, k);
        }
        let mut m = DMatrix::from_element(idx.len(), idx.len(), ZERO);
        for (k, &i) in idx.iter().enumerate() {
            for &(c, v) in &self.data[i] {
                m[(k, pos[&c])] = v;
            }
        }
        m
    }
}

fn block_eigenvalues(m: DMatrix<Complex64>) -> Vec<f64> {
    let n = m.nrows();
    if n == 1 {
        return vec![m[(0, 0)].re];
    }
    if m.iter().all(|v| v.im == 0.0) {
        let re = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)].re + m[(j, i)].re));
        return re.symmetric_eigenvalues().iter().copied().collect();
    }
    let h = DMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    h.symmetric_eigenvalues().iter().copied().collect()
}

/// All eigenvalues of a Hermitian sparse matrix, ascending.
///
/// Rejects inputs whose symmetry residual exceeds `1e-8` and connected
/// blocks larger than [`MAX_DENSE_BLOCK`].
pub fn hermitian_eigenvalues(a: &SparseMat) -> Result<Vec<f64>> {
    let res = a.hermitian_residual();
    if res > 1e-8 {
        return Err(Error::NonHermitian(res));
    }
    let comps = a.components();
    if let Some(big) = comps.iter().map(|c| c.len()).max().filter(|&s| s > MAX_DENSE_BLOCK) {
        return Err(Error::SizeCap { size: big, cap: MAX_DENSE_BLOCK });
    }
    let parts = par::map(&comps, |idx| block_eigenvalues(a.dense_block(idx)));
    let mut out: Vec<f64> = parts.into_iter().flatten().collect();
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    out.sort_by(|x, y| x.total_cmp(y));
    Ok(out)
}
