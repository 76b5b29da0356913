//! Dense matrix exponential and a truncated symmetric eigensolver.

use alloc::vec::Vec;
use nalgebra::{Complex, DMatrix, DVector, SMatrix};

use crate::math;

type C64 = Complex<f64>;

/// Pade(13) numerator/denominator coefficients (exact in double precision).
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

/// Scaling threshold for the order-13 approximant.
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling-and-squaring with a fixed order-13 Pade
/// approximant.
pub fn expm<const N: usize>(a: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        math::ceil(math::log2(norm / THETA13)) as u32
    } else {
        0
    };
    let a_scaled = a * C64::new(1.0 / (1u64 << s) as f64, 0.0);

    let mut result = pade13(&a_scaled);
    for _ in 0..s {
        result = result * result;
    }
    result
}

fn one_norm<const N: usize>(a: &SMatrix<C64, N, N>) -> f64 {
    let mut max = 0.0;
    for j in 0..N {
        let mut col = 0.0;
        for i in 0..N {
            col += math::hypot(a[(i, j)].re, a[(i, j)].im);
        }
        max = if col > max { col } else { max };
    }
    max
}

fn pade13<const N: usize>(a: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    let id = SMatrix::<C64, N, N>::identity();
    let b = PADE13;
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a2 * a4;

    let u_inner = a6 * c(b[13]) + a4 * c(b[11]) + a2 * c(b[9]);
    let u = a * (a6 * u_inner + a6 * c(b[7]) + a4 * c(b[5]) + a2 * c(b[3]) + id * c(b[1]));
    let v_inner = a6 * c(b[12]) + a4 * c(b[10]) + a2 * c(b[8]);
    let v = a6 * v_inner + a6 * c(b[6]) + a4 * c(b[4]) + a2 * c(b[2]) + id * c(b[0]);

    let denom = v - u;
    let numer = v + u;
    denom
        .try_inverse()
        .expect("Pade denominator is singular; input matrix is pathological")
        * numer
}

#[inline]
fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Top-`r` eigenpairs (descending) of a symmetric matrix.
///
/// Uses Lanczos with full reorthogonalization and falls back to a dense
/// decomposition when the Krylov iteration does not converge or when `r` is
/// a large fraction of `n`. Deterministic: the start vector is fixed.
pub fn symmetric_top_eigen(a: &DMatrix<f64>, r: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert!(r >= 1 && r <= n);
    if r * 3 >= n || n <= 64 {
        return dense_top_eigen(a, r);
    }
    match lanczos_top_eigen(a, r) {
        Some(pairs) => pairs,
        None => dense_top_eigen(a, r),
    }
}

fn dense_top_eigen(a: &DMatrix<f64>, r: usize) -> (Vec<f64>, DMatrix<f64>) {
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("eigenvalue is NaN")
    });
    let values: Vec<f64> = order[..r].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(a.nrows(), r);
    for (k, &i) in order[..r].iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Deterministic pseudo-random start vector (splitmix64 stream).
fn start_vector(n: usize, salt: u64) -> DVector<f64> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64.wrapping_add(salt);
    let mut next = || {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    let mut v = DVector::from_fn(n, |_, _| {
        let u = (next() >> 11) as f64 / (1u64 << 53) as f64;
        2.0 * u - 1.0
    });
    v /= v.norm();
    v
}

fn lanczos_top_eigen(a: &DMatrix<f64>, r: usize) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let cap = (4 * r + 120).min(n);
    let tol = 1e-11;

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cap);
    let mut alpha: Vec<f64> = Vec::with_capacity(cap);
    let mut beta: Vec<f64> = Vec::with_capacity(cap);

    basis.push(start_vector(n, 0));
    let mut restarts = 1u64;

    let mut k = 0;
    let mut next_check = (r + 24).min(cap);
    loop {
        // Lanczos step k: w = A v_k - beta_{k-1} v_{k-1}
        let v = &basis[k];
        let mut w = a * v;
        let ak = v.dot(&w);
        alpha.push(ak);
        w.axpy(-ak, v, 1.0);
        if k > 0 {
            let b_prev = beta[k - 1];
            w.axpy(-b_prev, &basis[k - 1], 1.0);
        }
        // Full reorthogonalization, twice.
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&w);
                w.axpy(-proj, q, 1.0);
            }
        }
        let bk = w.norm();
        k += 1;
        if k >= cap {
            break;
        }
        if bk < 1e-14 {
            // Invariant subspace found; restart with a fresh direction.
            let mut fresh = start_vector(n, restarts);
            restarts += 1;
            for _ in 0..2 {
                for q in &basis {
                    let proj = q.dot(&fresh);
                    fresh.axpy(-proj, q, 1.0);
                }
            }
            let norm = fresh.norm();
            if norm < 1e-10 {
                break; // the whole space is spanned
            }
            beta.push(0.0);
            basis.push(fresh / norm);
        } else {
            beta.push(bk);
            basis.push(w / bk);
        }

        if k >= next_check || k + 1 >= cap {
            if let Some(result) = try_extract(a, &basis, &alpha, &beta, r, tol) {
                return Some(result);
            }
            next_check = (k + 16).min(cap);
        }
    }
    try_extract(a, &basis, &alpha, &beta, r, tol)
}

/// Eigendecompose the tridiagonal projection; accept if the top-r Ritz pairs
/// have converged residual bounds.
fn try_extract(
    _a: &DMatrix<f64>,
    basis: &[DVector<f64>],
    alpha: &[f64],
    beta: &[f64],
    r: usize,
    tol: f64,
) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let k = alpha.len();
    if k < r {
        return None;
    }
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("Ritz value is NaN")
    });
    let lam_max = math::fabs(eig.eigenvalues[order[0]]).max(1e-300);
    let b_last = if k <= beta.len() { beta[k - 1] } else { 0.0 };
    for &i in &order[..r] {
        let resid = math::fabs(b_last * eig.eigenvectors[(k - 1, i)]);
        if resid > tol * lam_max {
            return None;
        }
    }
    let values: Vec<f64> = order[..r].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(basis[0].len(), r);
    for (col, &i) in order[..r].iter().enumerate() {
        let mut v = DVector::zeros(basis[0].len());
        for (j, q) in basis.iter().enumerate().take(k) {
            v.axpy(eig.eigenvectors[(j, i)], q, 1.0);
        }
        let norm = v.norm();
        vectors.set_column(col, &(v / norm));
    }
    Some((values, vectors))
}

/// Lower Cholesky factor of a symmetric positive definite matrix, together
/// with `log det`.
///
/// Unlike an opaque factorization failure, a nonpositive pivot is reported
/// with its value so callers can name the degeneracy.
pub fn cholesky_with_pivot(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64), f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut logdet = 0.0;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(d);
        }
        let ljj = math::sqrt(d);
        l[(j, j)] = ljj;
        logdet += 2.0 * math::ln(ljj);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok((l, logdet))
}

/// Solves `L L^T x = b` given the lower factor from [`cholesky_with_pivot`].
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let y = l
        .solve_lower_triangular(b)
        .expect("Cholesky factor has positive diagonal");
    l.transpose()
        .solve_upper_triangular(&y)
        .expect("Cholesky factor has positive diagonal")
}

/// Symmetrize then clip negative eigenvalues to zero.
///
/// Returns the floored matrix together with its eigen-factorization
/// `(values, vectors)` so callers can reuse the square root.
pub fn psd_floor(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let values: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let mut floored = DMatrix::zeros(n, n);
    for (j, &l) in values.iter().enumerate() {
        if l > 0.0 {
            let col = eig.eigenvectors.column(j);
            floored.ger(l, &col, &col, 1.0);
        }
    }
    let floored = (&floored + floored.transpose()) * 0.5;
    (floored, values, eig.eigenvectors)
}
