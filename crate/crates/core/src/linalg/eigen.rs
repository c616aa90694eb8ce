//! Symmetric eigen-solvers.
//!
//! `symmetric_eigen` is the classic Householder tridiagonalization followed
//! by implicit QL with Wilkinson shifts. `subspace_largest` extracts the
//! leading eigenpairs of a large symmetric operator by block subspace
//! iteration with Rayleigh-Ritz, which copes with repeated eigenvalues.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::math::{abs, dot, hypot, norm2, sqrt};

/// Eigenvalues in descending order with matching unit eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// All eigenpairs of the symmetric matrix `a`, eigenvalues descending.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<EigenPairs> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::ShapeMismatch {
            what: "eigenproblem matrix",
            expected: n,
            got: a.cols(),
        });
    }
    if n == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    let mut v = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    // Rows of z are eigenvectors, so QL rotations touch contiguous memory.
    let mut z = v.transpose();
    tql2(&mut z, &mut d, &mut e)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
    Ok(EigenPairs {
        values: idx.iter().map(|&i| d[i]).collect(),
        vectors: idx.iter().map(|&i| z.row(i).to_vec()).collect(),
    })
}

fn tred2(v: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += abs(*dk);
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal (d, e); `z` holds eigenvectors as rows.
fn tql2(z: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(abs(d[l]) + abs(e[l]));
        let mut m = l;
        while m < n {
            if abs(e[m]) <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::EigenNoConvergence);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let cols = z.cols();
                    let (lo, hi) = z_rows_pair(z, i, cols);
                    for (zi, zi1) in lo.iter_mut().zip(hi.iter_mut()) {
                        let hk = *zi1;
                        *zi1 = s * *zi + c * hk;
                        *zi = c * *zi - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if abs(e[l]) <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn z_rows_pair(z: &mut DenseMatrix, i: usize, cols: usize) -> (&mut [f64], &mut [f64]) {
    let (lo, hi) = z.as_mut_slice().split_at_mut((i + 1) * cols);
    (&mut lo[i * cols..], &mut hi[..cols])
}

/// Leading `nev` eigenpairs of a symmetric positive semidefinite operator.
///
/// `apply` maps an `n × p` block (columns are vectors) to the operator
/// applied to each column. Iterates until every wanted Ritz residual is
/// below `tol · θ₁`.
pub fn subspace_largest<F>(n: usize, nev: usize, tol: f64, mut apply: F) -> Result<EigenPairs>
where
    F: FnMut(&DenseMatrix) -> DenseMatrix,
{
    if nev == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    let p = (nev + nev.max(10)).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_e16e);
    let mut x = DenseMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    orthonormalize_columns(&mut x)?;
    for _ in 0..1000 {
        let ax = apply(&x);
        let h = x.transpose().matmul(&ax);
        let sym = DenseMatrix::from_fn(p, p, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
        let ritz = symmetric_eigen(&sym)?;
        let s = DenseMatrix::from_fn(p, p, |i, j| ritz.vectors[j][i]);
        let v = x.matmul(&s);
        let av = ax.matmul(&s);
        let theta1 = abs(ritz.values[0]).max(f64::MIN_POSITIVE);
        let converged = (0..nev).all(|j| {
            let mut r2 = 0.0;
            for i in 0..n {
                let t = av[(i, j)] - ritz.values[j] * v[(i, j)];
                r2 += t * t;
            }
            sqrt(r2) <= tol * theta1
        });
        if converged {
            return Ok(EigenPairs {
                values: ritz.values[..nev].to_vec(),
                vectors: (0..nev).map(|j| v.column(j)).collect(),
            });
        }
        x = av;
        orthonormalize_columns(&mut x)?;
    }
    Err(Error::EigenNoConvergence)
}

/// Twice-applied modified Gram-Schmidt on the columns of `x`.
fn orthonormalize_columns(x: &mut DenseMatrix) -> Result<()> {
    let (n, p) = (x.rows(), x.cols());
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    for j in 0..p {
        for _ in 0..2 {
            for i in 0..j {
                let c = dot(&cols[i], &cols[j]);
                let (done, rest) = cols.split_at_mut(j);
                for (a, b) in rest[0].iter_mut().zip(&done[i]) {
                    *a -= c * b;
                }
            }
        }
        let nrm = norm2(&cols[j]);
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::EigenNoConvergence);
        }
        cols[j].iter_mut().for_each(|v| *v /= nrm);
    }
    for i in 0..n {
        for (j, c) in cols.iter().enumerate() {
            x[(i, j)] = c[i];
        }
    }
    Ok(())
}
