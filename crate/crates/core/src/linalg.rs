//! Dense and Toeplitz kernels shared by the solvers.

use nalgebra::{DMatrix, DVector};
use rustfft::FftPlanner;

use crate::{Error, Result, C64};

/// Eigenvalues below this fraction of the largest are treated as rounding.
pub const PSD_CLIP: f64 = 1e-10;

/// Principal square root of a Hermitian PSD matrix. Slightly negative
/// eigenvalues are clipped; larger ones are an error.
pub fn hermitian_sqrt(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let eig = hermitian_part(m).symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for &v in eig.eigenvalues.iter() {
        if v < -PSD_CLIP * max {
            return Err(Error::Numeric(format!("matrix not PSD: eigenvalue {v:e} vs max {max:e}")));
        }
        roots.push(v.max(0.0).sqrt());
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*r);
    }
    Ok(&scaled * u.adjoint())
}

/// Smallest and largest eigenvalue of a Hermitian matrix.
pub fn eigen_range(m: &DMatrix<C64>) -> (f64, f64) {
    let ev = hermitian_part(m).symmetric_eigenvalues();
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

/// Inverse of a Hermitian positive definite matrix.
pub fn hpd_inverse(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let chol = hermitian_part(m)
        .cholesky()
        .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
    Ok(chol.inverse())
}

/// Tr(AB) without forming the product.
pub fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for p in 0..n {
        for q in 0..a.ncols() {
            acc += a[(p, q)] * b[(q, p)];
        }
    }
    acc
}

/// Full Hermitian matrix from the first column of a Hermitian Toeplitz matrix.
pub fn toeplitz_dense(col: &[C64]) -> DMatrix<C64> {
    let n = col.len();
    DMatrix::from_fn(n, n, |p, q| if p >= q { col[p - q] } else { col[q - p].conj() })
}

/// First column of the inverse of a Hermitian positive definite Toeplitz
/// matrix given by its first column (Levinson recursion).
pub fn levinson(col: &[C64]) -> Result<Vec<C64>> {
    let n = col.len();
    let t0 = col[0].re;
    if !(t0 > 0.0) {
        return Err(Error::Numeric("Toeplitz diagonal must be positive".into()));
    }
    let mut f = Vec::with_capacity(n);
    f.push(C64::new(1.0 / t0, 0.0));
    let mut next = Vec::with_capacity(n);
    for m in 1..n {
        let eps: C64 = (0..m).map(|i| col[m - i] * f[i]).sum();
        let denom = 1.0 - eps.norm_sqr();
        if !(denom > 0.0) {
            return Err(Error::Numeric("Toeplitz matrix is not positive definite".into()));
        }
        let alpha = 1.0 / denom;
        next.clear();
        for i in 0..=m {
            let fwd = if i < m { f[i] } else { C64::new(0.0, 0.0) };
            let bwd = if i > 0 { f[m - i].conj() } else { C64::new(0.0, 0.0) };
            next.push((fwd - eps * bwd) * alpha);
        }
        std::mem::swap(&mut f, &mut next);
    }
    Ok(f)
}

/// Inverse of a Hermitian positive definite Toeplitz matrix in O(n²) from its
/// first column (Gohberg-Semencul / Trench recurrence).
pub fn toeplitz_inverse(col: &[C64]) -> Result<DMatrix<C64>> {
    let n = col.len();
    let x = levinson(col)?;
    let x0 = x[0].re;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        b[(i, 0)] = x[i];
        b[(0, i)] = x[i].conj();
    }
    for i in 1..n {
        for j in 1..n {
            let upd = (x[i] * x[j].conj() - x[n - i].conj() * x[n - j]) / x0;
            b[(i, j)] = b[(i - 1, j - 1)] + upd;
        }
    }
    Ok(b)
}

/// Sums along the diagonals: entry `d + n - 1` holds Σ_q M[q, q + d].
pub fn diagonal_sums(m: &DMatrix<C64>) -> Vec<C64> {
    let n = m.nrows();
    let mut s = vec![C64::new(0.0, 0.0); 2 * n - 1];
    for q in 0..n {
        for p in 0..n {
            s[q + n - 1 - p] += m[(p, q)];
        }
    }
    s
}

/// Kernel R with Tr(Θ_i T Θ_j T) = Σ_{d,e} θ_i(d) R[d,e] θ_j(e) for Toeplitz
/// Θ_i, Θ_j with symbols θ (lags d, e ∈ (−n, n), stored at offset n − 1).
/// Computed as a 2-D cross-correlation of T with its transpose via FFT.
pub fn pair_trace_kernel(t: &DMatrix<C64>) -> DMatrix<C64> {
    let n = t.nrows();
    let p = 2 * n;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(p);
    let inv = planner.plan_fft_inverse(p);
    let zero = C64::new(0.0, 0.0);

    // row-major p×p buffer, x[a*p + b] = T[a, b]
    let mut x = vec![zero; p * p];
    for a in 0..n {
        for b in 0..n {
            x[a * p + b] = t[(a, b)];
        }
    }
    fft2(&mut x, p, &*fwd);
    let idx = |a: usize, b: usize| a * p + b;
    let neg = |k: usize| (p - k) % p;
    let mut z = vec![zero; p * p];
    for k1 in 0..p {
        for k2 in 0..p {
            z[idx(k1, k2)] = x[idx(neg(k1), neg(k2))] * x[idx(k2, k1)];
        }
    }
    fft2(&mut z, p, &*inv);
    let norm = 1.0 / (p * p) as f64;
    let w = 2 * n - 1;
    DMatrix::from_fn(w, w, |di, ei| {
        let d = di as isize - (n as isize - 1);
        let e = ei as isize - (n as isize - 1);
        let a = d.rem_euclid(p as isize) as usize;
        let b = (-e).rem_euclid(p as isize) as usize;
        z[idx(a, b)] * norm
    })
}

fn fft2(buf: &mut [C64], p: usize, fft: &dyn rustfft::Fft<f64>) {
    fft.process(buf);
    transpose_square(buf, p);
    fft.process(buf);
    transpose_square(buf, p);
}

fn transpose_square(buf: &mut [C64], p: usize) {
    for a in 0..p {
        for b in (a + 1)..p {
            buf.swap(a * p + b, b * p + a);
        }
    }
}

/// Orthonormal basis of the span of the columns of `m`, each column scaled to
/// unit norm first. Gram-Schmidt with largest-residual pivoting and a second
/// orthogonalization pass; stops once every residual is below `rel_tol`.
pub fn orthonormal_span(m: &DMatrix<C64>, rel_tol: f64) -> DMatrix<C64> {
    let (n, k) = m.shape();
    let mut x = m.clone();
    for mut c in x.column_iter_mut() {
        let nrm = c.norm();
        if nrm > 0.0 {
            c /= C64::new(nrm, 0.0);
        }
    }
    let mut basis: Vec<DVector<C64>> = Vec::new();
    let mut used = vec![false; k];
    while basis.len() < n.min(k) {
        let Some((j, r)) = (0..k)
            .filter(|&j| !used[j])
            .map(|j| (j, x.column(j).norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
        else {
            break;
        };
        if r <= rel_tol {
            break;
        }
        used[j] = true;
        let mut q = x.column(j).into_owned();
        for qb in &basis {
            let c = qb.dotc(&q);
            q -= qb * c;
        }
        let nq = q.norm();
        q /= C64::new(nq, 0.0);
        for (jj, mut c) in x.column_iter_mut().enumerate() {
            if !used[jj] {
                let d = q.dotc(&c);
                c -= &q * d;
            }
        }
        basis.push(q);
    }
    let mut out = DMatrix::zeros(n, basis.len());
    for (c, q) in basis.iter().enumerate() {
        out.set_column(c, q);
    }
    out
}

/// X − Q(Q^H X) for orthonormal Q.
pub fn project_off(q: &DMatrix<C64>, x: &DMatrix<C64>) -> DMatrix<C64> {
    if q.ncols() == 0 {
        return x.clone();
    }
    x - q * q.ad_mul(x)
}

/// Gauss-Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Column `k` of a matrix as an owned vector.
pub fn col(m: &DMatrix<C64>, k: usize) -> DVector<C64> {
    m.column(k).into_owned()
}
