//! Sparse symmetric matrices and a Jacobi-preconditioned conjugate-gradient solver.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Sparsity pattern from per-element node lists, values zeroed.
    pub fn pattern<const K: usize>(n: usize, elems: impl Iterator<Item = [u32; K]>) -> Self {
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for e in elems {
            for &a in &e {
                for &b in &e {
                    pairs.push((a, b));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut indptr = vec![0usize; n + 1];
        for &(a, _) in &pairs {
            indptr[a as usize + 1] += 1;
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        let indices: Vec<u32> = pairs.iter().map(|p| p.1).collect();
        let data = vec![0.0; indices.len()];
        CsrMatrix { n, indptr, indices, data }
    }

    fn slot(&self, i: usize, j: u32) -> usize {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        self.indptr[i] + row.binary_search(&j).expect("entry in sparsity pattern")
    }

    pub fn add(&mut self, i: usize, j: u32, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: u32) -> f64 {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        row.binary_search(&j).map(|k| self.data[self.indptr[i] + k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i as u32)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().with_min_len(4096).for_each(|(i, yi)| {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[k] * x[self.indices[k] as usize];
            }
            *yi = s;
        });
    }

    /// Moves positive off-diagonal entries onto the diagonal, keeping symmetry and row sums,
    /// so the result is an M-matrix. Returns the number of entries changed.
    pub fn enforce_monotone(&mut self) -> usize {
        let mut changed = 0;
        for i in 0..self.n {
            let mut moved = 0.0;
            let mut diag = usize::MAX;
            for k in self.indptr[i]..self.indptr[i + 1] {
                if self.indices[k] as usize == i {
                    diag = k;
                } else if self.data[k] > 0.0 {
                    moved += self.data[k];
                    self.data[k] = 0.0;
                    changed += 1;
                }
            }
            if diag != usize::MAX {
                self.data[diag] += moved;
            }
        }
        changed
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` on the rows where `fixed` is false, holding the other entries of `x`.
/// The returned `x` keeps the fixed values; convergence is `‖r‖ ≤ rtol ‖b_free‖`.
pub fn solve_dirichlet(
    a: &CsrMatrix,
    x: &mut [f64],
    fixed: &[bool],
    rhs: Option<&[f64]>,
    rtol: f64,
    max_iter: usize,
) -> Result<CgStats> {
    let n = a.n;
    let zero_fixed = |v: &mut [f64]| {
        for (vi, f) in v.iter_mut().zip(fixed) {
            if *f {
                *vi = 0.0;
            }
        }
    };
    // b_free = rhs - A x_fixed restricted to free rows.
    let mut xd = x.to_vec();
    for (v, f) in xd.iter_mut().zip(fixed) {
        if !*f {
            *v = 0.0;
        }
    }
    let mut b = a.matvec(&xd);
    for i in 0..n {
        b[i] = rhs.map_or(0.0, |r| r[i]) - b[i];
    }
    zero_fixed(&mut b);
    let bnorm = dot(&b, &b).sqrt();
    let diag = a.diagonal();
    let minv: Vec<f64> = diag
        .iter()
        .zip(fixed)
        .map(|(&d, &f)| if f || d == 0.0 { 0.0 } else { 1.0 / d })
        .collect();
    let mut u: Vec<f64> = x.iter().zip(fixed).map(|(&v, &f)| if f { 0.0 } else { v }).collect();
    let mut au = a.matvec(&u);
    zero_fixed(&mut au);
    let mut r: Vec<f64> = b.iter().zip(&au).map(|(b, a)| b - a).collect();
    let mut rnorm = dot(&r, &r).sqrt();
    if bnorm == 0.0 || rnorm <= rtol * bnorm {
        for i in 0..n {
            if !fixed[i] {
                x[i] = if bnorm == 0.0 { 0.0 } else { u[i] };
            }
        }
        return Ok(CgStats { iterations: 0, relative_residual: if bnorm == 0.0 { 0.0 } else { rnorm / bnorm } });
    }
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        zero_fixed(&mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Solver { msg: "matrix is not positive definite on free nodes".into(), residual: rnorm / bnorm });
        }
        let alpha = rz / pap;
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = dot(&r, &r).sqrt();
        if rnorm <= rtol * bnorm {
            for i in 0..n {
                if !fixed[i] {
                    x[i] = u[i];
                }
            }
            return Ok(CgStats { iterations: it, relative_residual: rnorm / bnorm });
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver { msg: format!("no convergence in {max_iter} iterations"), residual: rnorm / bnorm })
}
