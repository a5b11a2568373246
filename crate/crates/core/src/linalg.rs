//! Sparse storage and solvers: 3x3 block CSR with a block-Jacobi
//! preconditioned conjugate gradient, and a skyline Cholesky for banded
//! systems.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric matrix stored as full rows of 3x3 blocks (node x node).
#[derive(Debug, Clone)]
pub struct BlockCsr {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub blocks: Vec<Matrix3<f64>>,
}

impl BlockCsr {
    /// Build the pattern from per-row neighbour sets (each must contain the
    /// row itself) with zero blocks.
    pub fn from_pattern(mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }
        let blocks = vec![Matrix3::zeros(); cols.len()];
        BlockCsr { row_ptr, cols, blocks }
    }

    pub fn n_block_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn dim(&self) -> usize {
        3 * self.n_block_rows()
    }

    fn position(&self, row: usize, col: usize) -> usize {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        let offset = self.cols[range.clone()]
            .binary_search(&col)
            .unwrap_or_else(|_| panic!("block ({row}, {col}) not in pattern"));
        range.start + offset
    }

    pub fn add_block(&mut self, row: usize, col: usize, block: &Matrix3<f64>) {
        let p = self.position(row, col);
        self.blocks[p] += block;
    }

    pub fn diagonal_block(&self, row: usize) -> Matrix3<f64> {
        self.blocks[self.position(row, row)]
    }

    /// `y = A x`, parallel over block rows. Each row is summed in a fixed
    /// order, so the result does not depend on the thread count.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.par_chunks_mut(3).enumerate().for_each(|(r, out)| {
            let mut acc = Vector3::zeros();
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[p];
                acc += self.blocks[p] * Vector3::new(x[3 * c], x[3 * c + 1], x[3 * c + 2]);
            }
            out.copy_from_slice(acc.as_slice());
        });
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for r in 0..self.n_block_rows() {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[p];
                for i in 0..3 {
                    for j in 0..3 {
                        m[(3 * r + i, 3 * c + j)] = self.blocks[p][(i, j)];
                    }
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Direct,
    #[default]
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "default_true")]
    pub deterministic: bool,
}

fn default_tolerance() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    20_000
}
fn default_true() -> bool {
    true
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: default_tolerance(),
            max_iter: default_max_iter(),
            backend: Backend::Cg,
            deterministic: true,
        }
    }
}

/// Largest system (in DOFs) the dense direct backend will factor.
pub const DIRECT_DOF_LIMIT: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub fn dot(a: &[f64], b: &[f64], deterministic: bool) -> f64 {
    if deterministic {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        a.par_iter().zip(b.par_iter()).map(|(x, y)| x * y).sum()
    }
}

/// Block-Jacobi preconditioned CG. `project` is applied to the residual
/// and search directions; pass the identity for nonsingular systems, or the
/// orthogonal projector onto the range for singular consistent ones.
pub fn pcg<P>(a: &BlockCsr, b: &[f64], settings: &SolverSettings, project: P) -> Result<(Vec<f64>, SolveStats)>
where
    P: Fn(&mut [f64]),
{
    let n = a.dim();
    let det = settings.deterministic;
    let inv_diag: Vec<Matrix3<f64>> = (0..a.n_block_rows())
        .map(|r| {
            let d = a.diagonal_block(r);
            d.try_inverse().unwrap_or_else(|| {
                let s = d.diagonal().map(|v| if v.abs() > 0.0 { 1.0 / v } else { 0.0 });
                Matrix3::from_diagonal(&s)
            })
        })
        .collect();
    let precondition = |r: &[f64], z: &mut [f64]| {
        z.par_chunks_mut(3).enumerate().for_each(|(i, out)| {
            let v = inv_diag[i] * Vector3::new(r[3 * i], r[3 * i + 1], r[3 * i + 2]);
            out.copy_from_slice(v.as_slice());
        });
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    project(&mut r);
    let b_norm = dot(&r, &r, det).sqrt();
    if b_norm == 0.0 {
        return Ok((x, SolveStats { iterations: 0, relative_residual: 0.0 }));
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z, det);
    let mut ap = vec![0.0; n];
    for it in 1..=settings.max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap, det);
        if !(pap > 0.0) {
            return Err(Error::SingularSystem(format!(
                "non-positive curvature p.Ap = {pap:.3e} at CG iteration {it}"
            )));
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        let rel = dot(&r, &r, det).sqrt() / b_norm;
        if rel <= settings.tolerance {
            return Ok((x, SolveStats { iterations: it, relative_residual: rel }));
        }
        precondition(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z, det);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    let mut res = vec![0.0; n];
    a.mul_vec(&x, &mut res);
    let mut diff: Vec<f64> = b.iter().zip(&res).map(|(bi, ri)| bi - ri).collect();
    project(&mut diff);
    Err(Error::SolverNonConvergence {
        iterations: settings.max_iter,
        residual: dot(&diff, &diff, det).sqrt() / b_norm,
    })
}

/// Dense Cholesky solve of `(A + sum_i c_i c_i^T) x = b`. The rank update
/// removes a known kernel of `A` spanned by the `c_i`.
pub fn dense_solve(a: &BlockCsr, kernel: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = a.dim();
    if n > DIRECT_DOF_LIMIT {
        return Err(Error::Config(format!(
            "direct backend limited to {DIRECT_DOF_LIMIT} DOFs, system has {n}; use the cg backend"
        )));
    }
    let mut m = a.to_dense();
    let scale = (0..n).map(|i| m[(i, i)]).sum::<f64>() / n.max(1) as f64;
    for c in kernel {
        let norm2: f64 = c.iter().map(|v| v * v).sum();
        let s = scale / norm2;
        for i in 0..n {
            if c[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                m[(i, j)] += s * c[i] * c[j];
            }
        }
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("dense Cholesky factorization failed".into()))?;
    Ok(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
}

/// Symmetric matrix in skyline (variable band) storage of its lower
/// triangle: row `i` holds columns `first[i]..=i` contiguously.
#[derive(Debug, Clone)]
pub struct Skyline {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl Skyline {
    /// `first[i]` is the leftmost column with a (potential) nonzero in row `i`.
    pub fn new(first: Vec<usize>) -> Self {
        let mut start = Vec::with_capacity(first.len() + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i);
            start.push(total);
            total += i - f + 1;
        }
        start.push(total);
        Skyline { first, start, values: vec![0.0; total] }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored(&self) -> usize {
        self.values.len()
    }

    /// Accumulate into entry `(i, j)`; only the lower triangle is kept, so
    /// callers pass each off-diagonal pair once (or accept doubling).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(c >= self.first[r]);
        self.values[self.start[r] + c - self.first[r]] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c < self.first[r] {
            0.0
        } else {
            self.values[self.start[r] + c - self.first[r]]
        }
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }

    pub fn add_to_diagonal(&mut self, shift: f64) {
        for i in 0..self.dim() {
            self.add(i, i, shift);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let f = self.first[i];
            for (k, v) in row.iter().enumerate() {
                let j = f + k;
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// In-place `L L^T` factorization. Fails on a non-positive pivot.
    pub fn factor(mut self) -> std::result::Result<SkylineCholesky, usize> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            for j in fi..i {
                let fj = self.first[j];
                let sj = self.start[j];
                let k0 = fi.max(fj);
                let mut s = self.values[si + j - fi];
                let (li, lj) = (&self.values[si + k0 - fi..si + j - fi], &self.values[sj + k0 - fj..sj + j - fj]);
                s -= li.iter().zip(lj).map(|(a, b)| a * b).sum::<f64>();
                let djj = self.values[sj + j - fj];
                self.values[si + j - fi] = s / djj;
            }
            let row = &self.values[si..si + i - fi];
            let d = self.values[si + i - fi] - row.iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(i);
            }
            self.values[si + i - fi] = d.sqrt();
        }
        Ok(SkylineCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    l: Skyline,
}

impl SkylineCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let n = l.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = l.first[i];
            let row = &l.values[l.start[i]..l.start[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = l.first[i];
            let row = &l.values[l.start[i]..l.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, v) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= v * yi;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded_spd(n: usize, band: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(band)..i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        for i in 0..n {
            a[(i, i)] = 2.0 * band as f64 + 1.0;
        }
        a
    }

    #[test]
    fn skyline_matches_dense_cholesky() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        let a = random_banded_spd(n, 5, &mut rng);
        let first: Vec<usize> = (0..n).map(|i| i.saturating_sub(5)).collect();
        let mut sky = Skyline::new(first);
        for i in 0..n {
            for j in i.saturating_sub(5)..=i {
                sky.add(i, j, a[(i, j)]);
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ax = sky.mul_vec(&b);
        let dense_ax = &a * DVector::from_column_slice(&b);
        for i in 0..n {
            assert!((ax[i] - dense_ax[i]).abs() < 1e-12);
        }
        let x = sky.factor().unwrap().solve(&b);
        let reference = a.cholesky().unwrap().solve(&DVector::from_column_slice(&b));
        for i in 0..n {
            assert!((x[i] - reference[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn skyline_rejects_indefinite() {
        let mut sky = Skyline::new(vec![0, 0]);
        sky.add(0, 0, 1.0);
        sky.add(1, 0, 2.0);
        sky.add(1, 1, 1.0);
        assert_eq!(sky.factor().unwrap_err(), 1);
    }

    fn laplacian_blocks(n: usize) -> BlockCsr {
        // 1D chain of nodes with 3 decoupled components, Dirichlet at both ends
        let rows: Vec<Vec<usize>> =
            (0..n).map(|i| (i.saturating_sub(1)..(i + 2).min(n)).collect()).collect();
        let mut a = BlockCsr::from_pattern(rows);
        for i in 0..n {
            a.add_block(i, i, &(Matrix3::identity() * 2.0));
            if i > 0 {
                a.add_block(i, i - 1, &(-Matrix3::identity()));
                a.add_block(i - 1, i, &(-Matrix3::identity()));
            }
        }
        a
    }

    #[test]
    fn pcg_matches_dense() {
        let a = laplacian_blocks(30);
        let b: Vec<f64> = (0..90).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let settings = SolverSettings { tolerance: 1e-13, ..Default::default() };
        let (x, stats) = pcg(&a, &b, &settings, |_| {}).unwrap();
        assert!(stats.relative_residual <= 1e-13);
        let reference = dense_solve(&a, &[], &b).unwrap();
        for (u, v) in x.iter().zip(&reference) {
            assert!((u - v).abs() < 1e-10);
        }
        let nondet = SolverSettings { deterministic: false, ..settings };
        let (y, _) = pcg(&a, &b, &nondet, |_| {}).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn pcg_reports_nonconvergence() {
        let a = laplacian_blocks(50);
        let b = vec![1.0; 150];
        let settings = SolverSettings { tolerance: 1e-14, max_iter: 3, ..Default::default() };
        assert!(matches!(pcg(&a, &b, &settings, |_| {}), Err(Error::SolverNonConvergence { .. })));
    }
}
