//! Sparse symmetric matrices and a Jacobi-preconditioned conjugate
//! gradient solver for the SPD conductance systems of the IR oracle.

use crate::{Error, Result};

/// Symmetric sparse matrix in row-major adjacency form. Both triangles
/// are stored so matvec is a plain row sweep.
#[derive(Debug, Clone)]
pub struct SparseSym {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSym {
    /// Build from (row, col, value) triplets; duplicates are summed.
    /// Only the given entries are stored, so symmetric inputs must
    /// provide both triangles (stamping naturally does).
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            rows[r].push((c, v));
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(c, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            *row = merged;
        }
        SparseSym { n, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (r, row) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(c, v) in row {
                acc += v * x[c];
            }
            out[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                self.rows[r]
                    .iter()
                    .find(|&&(c, _)| c == r)
                    .map_or(0.0, |&(_, v)| v)
            })
            .collect()
    }

    /// Largest |a_ij - a_ji| over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                let vt = self.rows[c]
                    .iter()
                    .find(|&&(cc, _)| cc == r)
                    .map_or(0.0, |&(_, v)| v);
                worst = worst.max((v - vt).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[r][c] += v;
            }
        }
        m
    }
}

/// Converged CG solution with diagnostics.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Jacobi-preconditioned conjugate gradient. Converges when the plain
/// relative residual meets `tol` AND the diagonally scaled residual
/// (solution units) is two orders tighter; the second criterion keeps
/// lightly loaded rows accurate when pad stamps dominate the norm of b.
pub fn cg_solve(
    a: &SparseSym,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    let n = a.n();
    assert_eq!(b.len(), n);
    let diag = a.diagonal();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::invalid("matrix diagonal must be positive for CG"));
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let scaled_b_inf = b
        .iter()
        .zip(&diag)
        .map(|(&bi, &di)| (bi / di).abs())
        .fold(0.0f64, f64::max);
    let scaled_target = tol * 1e-2 * scaled_b_inf;

    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }

    let converged = |r: &[f64]| -> bool {
        let scaled_inf = r
            .iter()
            .zip(&diag)
            .map(|(&ri, &di)| (ri / di).abs())
            .fold(0.0f64, f64::max);
        norm2(r) <= tol * b_norm && scaled_inf <= scaled_target
    };

    if converged(&r) {
        return Ok(CgSolution {
            rel_residual: norm2(&r) / b_norm,
            x,
            iterations: 0,
        });
    }

    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(&ri, &di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(&ri, &zi)| ri * zi).sum();
    let mut ap = vec![0.0; n];

    for iter in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(&pi, &api)| pi * api).sum();
        if !(pap > 0.0) {
            return Err(Error::invalid(format!(
                "matrix is not positive definite (p'Ap = {pap:.3e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        // Recursive residual drifts; recompute the true one periodically
        // and before declaring convergence.
        if iter % 64 == 0 {
            a.matvec(&x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
        }
        if converged(&r) {
            let mut true_r = vec![0.0; n];
            a.matvec(&x, &mut true_r);
            for i in 0..n {
                true_r[i] = b[i] - true_r[i];
            }
            if converged(&true_r) {
                return Ok(CgSolution {
                    rel_residual: norm2(&true_r) / b_norm,
                    x,
                    iterations: iter,
                });
            }
            r = true_r;
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(&ri, &zi)| ri * zi).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    let mut true_r = vec![0.0; n];
    a.matvec(&x, &mut true_r);
    for i in 0..n {
        true_r[i] = b[i] - true_r[i];
    }
    Err(Error::NoConverge {
        residual: norm2(&true_r) / b_norm,
        iters: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_duplicates() {
        let a = SparseSym::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 4.0)]);
        assert_eq!(a.row(0), &[(0, 3.0), (1, -1.0)]);
        assert_eq!(a.diagonal(), vec![3.0, 4.0]);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn solves_identity() {
        let a = SparseSym::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let sol = cg_solve(&a, &[1.0, -2.0, 3.0], None, 1e-12, 100).unwrap();
        for (xi, bi) in sol.x.iter().zip([1.0, -2.0, 3.0]) {
            assert!((xi - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn solves_small_spd_system() {
        // [[4,-1,0],[-1,4,-1],[0,-1,4]] x = b
        let a = SparseSym::from_triplets(
            3,
            &[
                (0, 0, 4.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (1, 1, 4.0),
                (1, 2, -1.0),
                (2, 1, -1.0),
                (2, 2, 4.0),
            ],
        );
        let b = [2.0, 4.0, 10.0];
        let sol = cg_solve(&a, &b, None, 1e-12, 300).unwrap();
        let mut ax = vec![0.0; 3];
        a.matvec(&sol.x, &mut ax);
        for (got, want) in ax.iter().zip(b.iter()) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = SparseSym::from_triplets(2, &[(0, 0, 2.0), (1, 1, 2.0)]);
        let sol = cg_solve(&a, &[0.0, 0.0], Some(&[5.0, 5.0]), 1e-12, 10).unwrap();
        assert_eq!(sol.x, vec![0.0, 0.0]);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        // b aligned with the negative-eigenvalue direction of [[1,3],[3,1]]
        let a = SparseSym::from_triplets(2, &[(0, 0, 1.0), (0, 1, 3.0), (1, 0, 3.0), (1, 1, 1.0)]);
        assert!(cg_solve(&a, &[1.0, -1.0], None, 1e-10, 50).is_err());
    }
}
