//! Deterministic equivalents of the dual powers, the coupling matrix and the
//! intercell interference, computed from channel statistics only.
//!
//! Per BS the resolvent T_b = ((1/N)Σ_j c_{b,j}Θ_{b,j} + μ_b I)⁻¹ is evaluated
//! in one of three ways: as a scalar when every correlation is a scaled
//! identity, through Toeplitz algebra (Levinson inverse, diagonal sums and an
//! FFT trace kernel) when every correlation is Toeplitz, or densely.

use nalgebra::{DMatrix, DVector};

use crate::duality::solve_scaling;
use crate::linalg;
use crate::scenario::{Correlation, CorrelationSet};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug)]
pub struct EquivOpts {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new iterate in the damped update.
    pub damping: f64,
}

impl Default for EquivOpts {
    fn default() -> Self {
        EquivOpts { tol: 1e-10, max_iter: 10_000, damping: 0.5 }
    }
}

const M_FLOOR: f64 = 1e-30;

/// Statistics of one BS in the form the resolvent needs.
enum BsStats {
    Identity { a2: Vec<f64> },
    Toeplitz { cols: DMatrix<C64>, symbols: DMatrix<C64> },
    Dense { mats: Vec<DMatrix<C64>> },
}

/// The resolvent T_b.
#[derive(Clone, Debug)]
pub enum Resolvent {
    /// T = t·I.
    Scalar { n: usize, t: f64 },
    Matrix(DMatrix<C64>),
}

impl Resolvent {
    pub fn to_dense(&self) -> DMatrix<C64> {
        match self {
            Resolvent::Scalar { n, t } => DMatrix::identity(*n, *n) * C64::new(*t, 0.0),
            Resolvent::Matrix(m) => m.clone(),
        }
    }
}

impl BsStats {
    fn new(corr: &CorrelationSet, b: usize) -> Self {
        let k = corr.n_ue;
        let items: Vec<&Correlation> = (0..k).map(|j| corr.get(b, j)).collect();
        if let Some(a2) = items.iter().map(|c| c.as_scaled_identity()).collect::<Option<Vec<f64>>>() {
            return BsStats::Identity { a2 };
        }
        if items.iter().all(|c| matches!(c, Correlation::Toeplitz { .. })) {
            let n = corr.n_ant;
            let mut cols = DMatrix::zeros(n, k);
            let mut symbols = DMatrix::zeros(k, 2 * n - 1);
            for (j, c) in items.iter().enumerate() {
                if let Correlation::Toeplitz { col, .. } = c {
                    cols.set_column(j, &DVector::from_column_slice(col));
                }
                let s = c.symbol().expect("Toeplitz symbol");
                symbols.set_row(j, &DVector::from_vec(s).transpose());
            }
            return BsStats::Toeplitz { cols, symbols };
        }
        BsStats::Dense { mats: items.iter().map(|c| c.to_dense()).collect() }
    }

    /// T = ((1/N)Σ_j c_j Θ_j + μI)⁻¹.
    fn resolvent(&self, c: &[f64], mu: f64, n: usize) -> Result<Resolvent> {
        let nf = n as f64;
        match self {
            BsStats::Identity { a2 } => {
                let s: f64 = c.iter().zip(a2).map(|(c, a)| c * a).sum::<f64>() / nf;
                Ok(Resolvent::Scalar { n, t: 1.0 / (s + mu) })
            }
            BsStats::Toeplitz { cols, .. } => {
                let w = DVector::from_iterator(c.len(), c.iter().map(|&x| C64::new(x / nf, 0.0)));
                let mut col = cols * w;
                col[0] = C64::new(col[0].re + mu, 0.0);
                Ok(Resolvent::Matrix(linalg::toeplitz_inverse(col.as_slice())?))
            }
            BsStats::Dense { mats } => {
                let mut a = DMatrix::<C64>::identity(n, n) * C64::new(mu, 0.0);
                for (m, &cj) in mats.iter().zip(c) {
                    if cj != 0.0 {
                        a += m * C64::new(cj / nf, 0.0);
                    }
                }
                Ok(Resolvent::Matrix(linalg::hpd_inverse(&a)?))
            }
        }
    }

    /// (1/N)Tr(Θ_i T) for every i.
    fn traces(&self, t: &Resolvent, n: usize) -> Vec<f64> {
        let nf = n as f64;
        match (self, t) {
            (BsStats::Identity { a2 }, Resolvent::Scalar { t, .. }) => a2.iter().map(|a| a * t).collect(),
            (BsStats::Toeplitz { symbols, .. }, Resolvent::Matrix(m)) => {
                let s = DVector::from_vec(linalg::diagonal_sums(m));
                (symbols * s).iter().map(|z| z.re / nf).collect()
            }
            (BsStats::Dense { mats }, Resolvent::Matrix(m)) => {
                mats.iter().map(|th| linalg::trace_product(th, m).re / nf).collect()
            }
            _ => unreachable!("resolvent kind matches statistics kind"),
        }
    }

    /// P[i,j] = Tr(Θ_i T Θ_j T) and z[i] = Tr(Θ_i T²).
    fn pair_traces(&self, t: &Resolvent, n: usize) -> (DMatrix<f64>, Vec<f64>) {
        let nf = n as f64;
        match (self, t) {
            (BsStats::Identity { a2 }, Resolvent::Scalar { t, .. }) => {
                let k = a2.len();
                let p = DMatrix::from_fn(k, k, |i, j| a2[i] * a2[j] * nf * t * t);
                let z = a2.iter().map(|a| a * nf * t * t).collect();
                (p, z)
            }
            (BsStats::Toeplitz { symbols, .. }, Resolvent::Matrix(m)) => {
                let r = linalg::pair_trace_kernel(m);
                let rs = &r * symbols.transpose();
                let p = (symbols * &rs).map(|z| z.re);
                let p = (&p + p.transpose()) * 0.5;
                let z = (symbols * r.column(n - 1)).iter().map(|v| v.re).collect();
                (p, z)
            }
            (BsStats::Dense { mats }, Resolvent::Matrix(m)) => {
                let a: Vec<DMatrix<C64>> = mats.iter().map(|th| th * m).collect();
                let k = a.len();
                let mut p = DMatrix::zeros(k, k);
                for i in 0..k {
                    for j in i..k {
                        let v = linalg::trace_product(&a[i], &a[j]).re;
                        p[(i, j)] = v;
                        p[(j, i)] = v;
                    }
                }
                let z = a.iter().map(|ai| linalg::trace_product(ai, m).re).collect();
                (p, z)
            }
            _ => unreachable!("resolvent kind matches statistics kind"),
        }
    }
}


/// Solution of the coupled m̄/λ̄ fixed point.
#[derive(Clone, Debug)]
pub struct MBar {
    /// m̄_{b,i}, `[b][i]`.
    pub m: Vec<Vec<f64>>,
    /// λ̄_k = γ_k / m̄_{b_k,k}.
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn coefficients(m: &[Vec<f64>], b: usize, serving: &[usize], gamma: &[f64]) -> Vec<f64> {
    (0..serving.len())
        .map(|j| {
            if gamma[j] == 0.0 {
                0.0
            } else {
                gamma[j] / (m[serving[j]][j] + gamma[j] * m[b][j])
            }
        })
        .collect()
}

/// m̄_{b,i} = (1/N)Tr(Θ_{b,i} T_b) with c_{b,j} = γ_j / (m̄_{b_j,j} + γ_j m̄_{b,j}),
/// solved jointly by damped Picard iteration from the zero-load point.
pub fn solve_dual_equivalents(
    corr: &CorrelationSet,
    serving: &[usize],
    gamma: &[f64],
    mu: &[f64],
    opts: &EquivOpts,
) -> Result<MBar> {
    let stats: Vec<BsStats> = (0..corr.n_bs).map(|b| BsStats::new(corr, b)).collect();
    solve_with_stats(&stats, corr, serving, gamma, mu, opts)
}

fn solve_with_stats(
    stats: &[BsStats],
    corr: &CorrelationSet,
    serving: &[usize],
    gamma: &[f64],
    mu: &[f64],
    opts: &EquivOpts,
) -> Result<MBar> {
    let n = corr.n_ant;
    let mut m: Vec<Vec<f64>> = (0..corr.n_bs)
        .map(|b| (0..corr.n_ue).map(|i| (corr.get(b, i).gain() / mu[b]).max(M_FLOOR)).collect())
        .collect();
    let mut floored = 0;
    for it in 1..=opts.max_iter {
        let mut next = Vec::with_capacity(corr.n_bs);
        for (b, st) in stats.iter().enumerate() {
            let c = coefficients(&m, b, serving, gamma);
            let t = st.resolvent(&c, mu[b], n)?;
            next.push(st.traces(&t, n));
        }
        let mut change = 0.0f64;
        let mut hit_floor = false;
        for (mb, nb) in m.iter_mut().zip(&next) {
            for (old, &new) in mb.iter_mut().zip(nb) {
                let mut upd = (1.0 - opts.damping) * *old + opts.damping * new;
                if !(upd > M_FLOOR) {
                    upd = M_FLOOR;
                    hit_floor = true;
                }
                change = change.max((new - *old).abs() / new.abs().max(M_FLOOR));
                *old = upd;
            }
        }
        floored = if hit_floor { floored + 1 } else { 0 };
        if floored > 100 {
            return Err(Error::Numeric("dual-power equivalent iterate stuck at the positivity floor".into()));
        }
        if change < opts.tol {
            let lambda = lambda_bar(&m, serving, gamma);
            return Ok(MBar { m, lambda, iterations: it, converged: true });
        }
    }
    let lambda = lambda_bar(&m, serving, gamma);
    Ok(MBar { m, lambda, iterations: opts.max_iter, converged: false })
}

fn lambda_bar(m: &[Vec<f64>], serving: &[usize], gamma: &[f64]) -> Vec<f64> {
    (0..serving.len()).map(|k| gamma[k] / m[serving[k]][k]).collect()
}

/// T_b = ((1/N)Σ_j λ̄_j Θ_{b,j}/(1 + λ̄_j m̄_{b,j}) + μ_b I)⁻¹.
pub fn resolvent_t(b: usize, lambda_bar: &[f64], m_bar: &[Vec<f64>], corr: &CorrelationSet, mu_b: f64) -> Result<Resolvent> {
    let c: Vec<f64> = lambda_bar.iter().enumerate().map(|(j, &l)| l / (1.0 + l * m_bar[b][j])).collect();
    BsStats::new(corr, b).resolvent(&c, mu_b, corr.n_ant)
}

/// Derivative quantities of one BS.
#[derive(Clone, Debug)]
pub struct Derivatives {
    /// m̄'_{b,i,k} at `[(i, k)]`.
    pub m_prime: DMatrix<f64>,
    /// ζ'_{b,i}: derivative of m̄_{b,i} under a noise shift μ → μ − x.
    pub zeta_prime: Vec<f64>,
}

/// Solves (I − L_b) m̄'_{b,·,k} = u_{b,k} for every k and the noise-shift
/// system (I − L_b) ζ'_b = u^z_b with one factorization.
pub fn derivative_solve(b: usize, t: &Resolvent, lambda_bar: &[f64], m_bar: &[Vec<f64>], corr: &CorrelationSet) -> Result<Derivatives> {
    derivatives_with(&BsStats::new(corr, b), b, t, lambda_bar, m_bar, corr.n_ant)
}

fn derivatives_with(st: &BsStats, b: usize, t: &Resolvent, lambda_bar: &[f64], m_bar: &[Vec<f64>], n: usize) -> Result<Derivatives> {
    let nf = n as f64;
    let (p, z) = st.pair_traces(t, n);
    let k = lambda_bar.len();
    let w: Vec<f64> = (0..k)
        .map(|j| {
            let l = lambda_bar[j];
            let r = l / (1.0 + l * m_bar[b][j]);
            r * r
        })
        .collect();
    let i_minus_l = DMatrix::from_fn(k, k, |i, j| {
        let v = -p[(i, j)] * w[j] / (nf * nf);
        if i == j { 1.0 + v } else { v }
    });
    let lu = i_minus_l.lu();
    let mut rhs = DMatrix::zeros(k, k + 1);
    for i in 0..k {
        for j in 0..k {
            rhs[(i, j)] = p[(i, j)] / nf;
        }
        rhs[(i, k)] = z[i] / nf;
    }
    let sol = lu
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numeric(format!("derivative system singular at BS {b}")))?;
    Ok(Derivatives { m_prime: sol.columns(0, k).into_owned(), zeta_prime: sol.column(k).iter().cloned().collect() })
}

/// [Ḡ]_{k,k} = γ_k/λ̄_k², [Ḡ]_{k,i} = −(1/N)m̄'_{b_i,i,k}/(1 + λ̄_k m̄_{b_i,k})².
pub fn build_gbar(lambda_bar: &[f64], m_bar: &[Vec<f64>], derivs: &[Derivatives], serving: &[usize], gamma: &[f64], n: usize) -> DMatrix<f64> {
    let k = serving.len();
    DMatrix::from_fn(k, k, |kk, i| {
        if kk == i {
            if gamma[kk] == 0.0 { f64::INFINITY } else { gamma[kk] / (lambda_bar[kk] * lambda_bar[kk]) }
        } else {
            let b = serving[i];
            let den = 1.0 + lambda_bar[kk] * m_bar[b][kk];
            -derivs[b].m_prime[(i, kk)] / (n as f64 * den * den)
        }
    })
}

/// ε̄_{b,k} = Σ_{j∈U_b} −δ̄_j [Ḡ]_{k,j} for k not served by b, `[b][k]`.
pub fn ici_approx(g_bar: &DMatrix<f64>, delta_bar: &[f64], serving: &[usize], n_bs: usize) -> Vec<Vec<f64>> {
    let k = serving.len();
    let mut e = vec![vec![0.0; k]; n_bs];
    for (b, eb) in e.iter_mut().enumerate() {
        for (kk, ek) in eb.iter_mut().enumerate() {
            if serving[kk] == b {
                continue;
            }
            *ek = (0..k).filter(|&j| serving[j] == b).map(|j| -delta_bar[j] * g_bar[(kk, j)]).sum::<f64>().max(0.0);
        }
    }
    e
}

/// Which statistics a BS assumes when it cannot see the others'.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurrogateMode {
    /// True local statistics, a²·I elsewhere.
    Alg2,
    /// a²·I everywhere.
    Iid,
}

pub fn surrogate_stats(corr: &CorrelationSet, pathloss: &[Vec<f64>], local_bs: usize, mode: SurrogateMode) -> Result<CorrelationSet> {
    CorrelationSet::from_fn(corr.n_bs, corr.n_ue, |b, k| {
        if mode == SurrogateMode::Alg2 && b == local_bs {
            corr.get(b, k).clone()
        } else {
            Correlation::scaled_identity(corr.n_ant, pathloss[b][k])
        }
    })
}

/// Everything the statistics-only pipeline produces for one network.
#[derive(Clone, Debug)]
pub struct DetEquivState {
    pub m_bar: Vec<Vec<f64>>,
    pub lambda_bar: Vec<f64>,
    pub t: Vec<Resolvent>,
    pub derivs: Vec<Derivatives>,
    pub g_bar: DMatrix<f64>,
    pub delta_bar: Vec<f64>,
    /// ε̄_{b,k}, `[b][k]`.
    pub ici_bar: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub feasible: bool,
}

impl DetEquivState {
    /// Deterministic equivalent of ‖v_k‖², i.e. ζ'_{b_k,k}/N.
    pub fn receiver_norm2(&self, k: usize, serving: &[usize]) -> f64 {
        self.derivs[serving[k]].zeta_prime[k] / self.n() as f64
    }

    fn n(&self) -> usize {
        match &self.t[0] {
            Resolvent::Scalar { n, .. } => *n,
            Resolvent::Matrix(m) => m.nrows(),
        }
    }

    /// Deterministic per-UE transmit power δ̄_k ζ'_{b_k,k}/N.
    pub fn ue_power(&self, k: usize, serving: &[usize]) -> f64 {
        self.delta_bar[k] * self.receiver_norm2(k, serving)
    }
}

/// Network description the pipeline needs besides the statistics.
#[derive(Clone, Copy, Debug)]
pub struct Targets<'a> {
    pub serving: &'a [usize],
    pub gamma: &'a [f64],
    pub mu: &'a [f64],
    pub noise_power: f64,
}

/// m̄ and λ̄, the resolvents, the derivative systems, Ḡ, δ̄ and ε̄.
pub fn run_pipeline(corr: &CorrelationSet, tg: Targets<'_>, opts: &EquivOpts) -> Result<DetEquivState> {
    let n = corr.n_ant;
    let stats: Vec<BsStats> = (0..corr.n_bs).map(|b| BsStats::new(corr, b)).collect();
    let mb = solve_with_stats(&stats, corr, tg.serving, tg.gamma, tg.mu, opts)?;
    let infeasible = |mb: MBar, t: Vec<Resolvent>, derivs: Vec<Derivatives>| DetEquivState {
        m_bar: mb.m,
        lambda_bar: mb.lambda,
        t,
        derivs,
        g_bar: DMatrix::zeros(0, 0),
        delta_bar: Vec::new(),
        ici_bar: Vec::new(),
        iterations: mb.iterations,
        converged: mb.converged,
        feasible: false,
    };
    if !mb.converged {
        return Ok(infeasible(mb, Vec::new(), Vec::new()));
    }
    let mut ts = Vec::with_capacity(corr.n_bs);
    let mut derivs = Vec::with_capacity(corr.n_bs);
    for (b, st) in stats.iter().enumerate() {
        let c: Vec<f64> = mb.lambda.iter().enumerate().map(|(j, &l)| l / (1.0 + l * mb.m[b][j])).collect();
        let t = st.resolvent(&c, tg.mu[b], n)?;
        match derivatives_with(st, b, &t, &mb.lambda, &mb.m, n) {
            Ok(d) => derivs.push(d),
            Err(_) => return Ok(infeasible(mb, ts, derivs)),
        }
        ts.push(t);
    }
    let g_bar = build_gbar(&mb.lambda, &mb.m, &derivs, tg.serving, tg.gamma, n);
    let scaling = solve_scaling(&g_bar, &vec![tg.noise_power; tg.serving.len()]);
    let ici_bar = if scaling.feasible { ici_approx(&g_bar, &scaling.delta, tg.serving, corr.n_bs) } else { Vec::new() };
    Ok(DetEquivState {
        m_bar: mb.m,
        lambda_bar: mb.lambda,
        t: ts,
        derivs,
        g_bar,
        delta_bar: scaling.delta,
        ici_bar,
        iterations: mb.iterations,
        converged: true,
        feasible: scaling.feasible,
    })
}
