//! Shift-invert subspace iteration for Hermitian problems.
//!
//! The caller supplies the action of `C⁻¹` (usually a sparse LU solve) and
//! of `C` itself; Rayleigh-Ritz is done with `C` on the current block.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SubspaceOptions {
    /// Number of wanted eigenpairs.
    pub k: usize,
    /// Block size (at least `k`).
    pub block: usize,
    pub max_iter: usize,
    /// Convergence threshold on `‖C y - θ y‖` for unit `y`.
    pub tol: f64,
    pub seed: u64,
}

impl SubspaceOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            block: (2 * k + 2).max(k + 4),
            max_iter: 300,
            tol: 1e-10,
            seed: 0x5eed_0b10c4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RitzPair<T> {
    pub value: f64,
    pub vector: Vec<T>,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SubspaceResult<T> {
    /// Ritz pairs sorted by `|value|`.
    pub pairs: Vec<RitzPair<T>>,
    pub iterations: usize,
    pub converged: bool,
}

fn orthonormalize<T: Scalar>(z: &Mat<T>) -> Mat<T> {
    z.qr().compute_thin_Q()
}

/// In-place map onto an admissible subspace.
pub type Projection<'a, T> = &'a dyn Fn(&mut [T]);

/// Find the `k` eigenvalues of smallest modulus of a Hermitian operator `C`.
///
/// * `apply_inv` overwrites each column with `C⁻¹` applied to it.
/// * `apply_op` returns `C Q`.
/// * `project`, if present, maps a vector onto the admissible subspace
///   (used for constrained problems); it is applied to the starting block
///   and to residuals.
pub fn smallest_magnitude<T: Scalar>(
    n: usize,
    opts: SubspaceOptions,
    mut apply_inv: impl FnMut(&mut Mat<T>),
    mut apply_op: impl FnMut(&Mat<T>) -> Mat<T>,
    project: Option<Projection<'_, T>>,
) -> Result<SubspaceResult<T>> {
    let p = opts.block.max(opts.k).min(n);
    if opts.k == 0 || n == 0 {
        return Ok(SubspaceResult {
            pairs: Vec::new(),
            iterations: 0,
            converged: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut y = Mat::<T>::from_fn(n, p, |_, _| {
        T::from_parts(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    if let Some(proj) = project {
        for j in 0..p {
            let mut col: Vec<T> = (0..n).map(|i| y[(i, j)]).collect();
            proj(&mut col);
            for i in 0..n {
                y[(i, j)] = col[i];
            }
        }
    }
    y = orthonormalize(&y);

    let mut last: Option<(Vec<f64>, Mat<T>, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let mut z = y.clone();
        apply_inv(&mut z);
        let q = orthonormalize(&z);
        let w = apply_op(&q);
        let mut h = q.adjoint() * &w;
        // Enforce exact Hermitian symmetry of the projected matrix.
        for i in 0..p {
            for j in 0..=i {
                let v = (h[(i, j)] + h[(j, i)].conjugate()).scale(0.5);
                h[(i, j)] = v;
                h[(j, i)] = v.conjugate();
            }
        }
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigen(format!("projected eigenproblem failed: {e:?}")))?;
        let s = evd.S();
        let u = evd.U();
        let mut order: Vec<usize> = (0..p).collect();
        let theta: Vec<f64> = (0..p).map(|i| s[i].re()).collect();
        order.sort_by(|&a, &b| theta[a].abs().total_cmp(&theta[b].abs()).then(a.cmp(&b)));
        let mut g = Mat::<T>::zeros(p, p);
        for (jn, &jo) in order.iter().enumerate() {
            for i in 0..p {
                g[(i, jn)] = u[(i, jo)];
            }
        }
        let theta_sorted: Vec<f64> = order.iter().map(|&j| theta[j]).collect();
        let ynew = &q * &g;
        let wg = &w * &g;
        let mut res = Vec::with_capacity(p);
        for j in 0..p {
            let mut r: Vec<T> = (0..n)
                .map(|i| wg[(i, j)] - ynew[(i, j)].scale(theta_sorted[j]))
                .collect();
            if let Some(proj) = project {
                proj(&mut r);
            }
            res.push(super::norm(&r));
        }
        y = ynew;
        let done = res[..opts.k].iter().all(|&r| r <= opts.tol);
        last = Some((theta_sorted, y.clone(), res));
        if done {
            converged = true;
            break;
        }
    }
    let (theta, vecs, res) = last.expect("at least one iteration");
    let pairs = (0..opts.k.min(p))
        .map(|j| RitzPair {
            value: theta[j],
            vector: (0..n).map(|i| vecs[(i, j)]).collect(),
            residual: res[j],
        })
        .collect();
    Ok(SubspaceResult {
        pairs,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::TripletBuilder;

    #[test]
    fn interior_eigenvalues_of_shifted_laplacian() {
        // -D² - c on a Dirichlet grid has eigenvalues straddling zero.
        let n = 200;
        let h = 1.0 / (n + 1) as f64;
        let c = 1000.0;
        let mut t = TripletBuilder::<f64>::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.0 / (h * h) - c);
            if i > 0 {
                t.push(i, i - 1, -1.0 / (h * h));
            }
            if i + 1 < n {
                t.push(i, i + 1, -1.0 / (h * h));
            }
        }
        let a = t.build().unwrap();
        let lu = a.factor().unwrap();
        let res = smallest_magnitude::<f64>(
            n,
            SubspaceOptions::new(3),
            |m| lu.solve_mat(m),
            |q| {
                let mut out = Mat::<f64>::zeros(n, q.ncols());
                for j in 0..q.ncols() {
                    let col: Vec<f64> = (0..n).map(|i| q[(i, j)]).collect();
                    let y = a.matvec(&col);
                    for i in 0..n {
                        out[(i, j)] = y[i];
                    }
                }
                out
            },
            None,
        )
        .unwrap();
        assert!(res.converged);
        let mut exact: Vec<f64> = (1..=n)
            .map(|j| 4.0 / (h * h) * (j as f64 * std::f64::consts::PI * h / 2.0).sin().powi(2) - c)
            .collect();
        exact.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        for j in 0..3 {
            assert!(
                (res.pairs[j].value - exact[j]).abs() < 1e-8,
                "{} vs {}",
                res.pairs[j].value,
                exact[j]
            );
        }
    }
}
