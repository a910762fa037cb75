//! Exact centralized optimum through uplink-downlink duality.
//!
//! The dual uplink powers λ solve a fixed point; the optimal downlink
//! beamformers are the uplink MMSE receivers scaled by δ = G⁻¹·noise, with G
//! the coupling matrix. Precoders are w_k = sqrt(δ_k)·v_k.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::scenario::{ChannelSet, Scenario};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug)]
pub struct FixedPointOpts {
    /// Max relative change of λ between sweeps.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest allowed ratio of λ_k to its interference-free value
    /// γ_k μN/‖h_k‖²; exceeding it declares the targets infeasible.
    pub lambda_cap: f64,
}

impl Default for FixedPointOpts {
    fn default() -> Self {
        FixedPointOpts { tol: 1e-10, max_iter: 10_000, lambda_cap: 1e12 }
    }
}

#[derive(Clone, Debug)]
pub struct UplinkState {
    /// Dual uplink power times N, per UE.
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub feasible: bool,
}

/// Additional covariance added at one BS on top of Σ λ_j h h^H + μN·I.
#[derive(Clone, Debug, Default)]
pub enum ExtraCov {
    #[default]
    None,
    /// Σ_j w_j h_{b,j} h_{b,j}^H over the BS's channel columns.
    Weights(Vec<f64>),
    Dense(DMatrix<C64>),
}

/// (reg·I + H diag(w) H^H + E)⁻¹ at one BS. Uses the K×K Gram matrix when few
/// weights are active and no dense term is present, the N×N form otherwise.
pub(crate) struct Resolvent<'a> {
    h: &'a DMatrix<C64>,
    gram: &'a DMatrix<C64>,
    reg: f64,
    kind: Kind,
}

enum Kind {
    Woodbury { active: Vec<usize>, sw: Vec<f64>, chol: Cholesky<C64, Dyn> },
    Full { chol: Cholesky<C64, Dyn> },
}

impl<'a> Resolvent<'a> {
    pub(crate) fn new(
        h: &'a DMatrix<C64>,
        gram: &'a DMatrix<C64>,
        reg: f64,
        weights: &[f64],
        dense: Option<&DMatrix<C64>>,
    ) -> Result<Self> {
        let n = h.nrows();
        let active: Vec<usize> = (0..weights.len()).filter(|&j| weights[j] > 0.0).collect();
        let fail = || Error::Numeric("regularized covariance is not positive definite".into());
        let kind = if dense.is_none() && active.len() <= n {
            let sw: Vec<f64> = active.iter().map(|&j| weights[j].sqrt()).collect();
            let m = active.len();
            let c = DMatrix::from_fn(m, m, |p, q| {
                let v = gram[(active[p], active[q])] * (sw[p] * sw[q]);
                if p == q { v + reg } else { v }
            });
            Kind::Woodbury { chol: c.cholesky().ok_or_else(fail)?, active, sw }
        } else {
            let mut a = DMatrix::<C64>::identity(n, n) * C64::new(reg, 0.0);
            if !active.is_empty() {
                let mut hw = DMatrix::zeros(n, active.len());
                for (c, &j) in active.iter().enumerate() {
                    hw.set_column(c, &(h.column(j) * C64::new(weights[j].sqrt(), 0.0)));
                }
                a += &hw * hw.adjoint();
            }
            if let Some(e) = dense {
                a += e;
            }
            Kind::Full { chol: a.cholesky().ok_or_else(fail)? }
        };
        Ok(Resolvent { h, gram, reg, kind })
    }

    /// D·G[active, cols] for the Woodbury form.
    fn weighted_gram(&self, active: &[usize], sw: &[f64], cols: &[usize]) -> DMatrix<C64> {
        DMatrix::from_fn(active.len(), cols.len(), |p, q| self.gram[(active[p], cols[q])] * sw[p])
    }

    /// h_k^H A⁻¹ h_k for every k in `cols`.
    pub(crate) fn quads(&self, cols: &[usize]) -> Vec<f64> {
        match &self.kind {
            Kind::Woodbury { active, sw, chol } => {
                if active.is_empty() {
                    return cols.iter().map(|&k| self.gram[(k, k)].re / self.reg).collect();
                }
                let mut y = self.weighted_gram(active, sw, cols);
                chol.l_dirty().solve_lower_triangular_mut(&mut y);
                cols.iter()
                    .enumerate()
                    .map(|(c, &k)| (self.gram[(k, k)].re - y.column(c).norm_squared()) / self.reg)
                    .collect()
            }
            Kind::Full { chol } => {
                let rhs = self.columns(cols);
                let mut y = rhs.clone();
                chol.l_dirty().solve_lower_triangular_mut(&mut y);
                (0..cols.len()).map(|c| y.column(c).norm_squared()).collect()
            }
        }
    }

    fn columns(&self, cols: &[usize]) -> DMatrix<C64> {
        DMatrix::from_fn(self.h.nrows(), cols.len(), |p, q| self.h[(p, cols[q])])
    }

    /// H^H A⁻¹ H[:, cols], a K × |cols| matrix.
    #[cfg(test)]
    pub(crate) fn cross(&self, cols: &[usize]) -> DMatrix<C64> {
        let k = self.h.ncols();
        let base = DMatrix::from_fn(k, cols.len(), |p, q| self.gram[(p, cols[q])]);
        match &self.kind {
            Kind::Woodbury { active, sw, chol } => {
                if active.is_empty() {
                    return base / C64::new(self.reg, 0.0);
                }
                let y = chol.solve(&self.weighted_gram(active, sw, cols));
                let left = DMatrix::from_fn(k, active.len(), |p, q| self.gram[(p, active[q])] * sw[q]);
                (base - left * y) / C64::new(self.reg, 0.0)
            }
            Kind::Full { chol } => self.h.ad_mul(&chol.solve(&self.columns(cols))),
        }
    }

    /// A⁻¹ h_k for every k in `cols`, as columns.
    pub(crate) fn apply(&self, cols: &[usize]) -> DMatrix<C64> {
        let x = self.columns(cols);
        match &self.kind {
            Kind::Woodbury { active, sw, chol } => {
                if active.is_empty() {
                    return x / C64::new(self.reg, 0.0);
                }
                let y = chol.solve(&self.weighted_gram(active, sw, cols));
                let ha = DMatrix::from_fn(self.h.nrows(), active.len(), |p, q| self.h[(p, active[q])] * sw[q]);
                (x - ha * y) / C64::new(self.reg, 0.0)
            }
            Kind::Full { chol } => chol.solve(&x),
        }
    }
}

/// One BS's part of an uplink fixed point.
pub(crate) struct Block<'a> {
    pub h: &'a DMatrix<C64>,
    pub gram: &'a DMatrix<C64>,
    pub reg: f64,
    pub served: &'a [usize],
    pub extra: &'a ExtraCov,
}

impl<'a> Block<'a> {
    pub(crate) fn resolvent(&self, lambda: &[f64]) -> Result<Resolvent<'a>> {
        let mut w = lambda.to_vec();
        let dense = match self.extra {
            ExtraCov::None => None,
            ExtraCov::Weights(e) => {
                for (wj, ej) in w.iter_mut().zip(e) {
                    *wj += ej;
                }
                None
            }
            ExtraCov::Dense(m) => Some(m),
        };
        Resolvent::new(self.h, self.gram, self.reg, &w, dense)
    }

    /// Interference-function values γ_k / q_k for the served UEs, with
    /// q_k = h_k^H (A − λ_k h_k h_k^H)⁻¹ h_k.
    fn update(&self, lambda: &[f64], gamma: &[f64]) -> Result<(Resolvent<'a>, Vec<f64>)> {
        let r = self.resolvent(lambda)?;
        let p = r.quads(self.served);
        let next = self
            .served
            .iter()
            .zip(&p)
            .map(|(&k, &pk)| {
                if gamma[k] == 0.0 {
                    return 0.0;
                }
                let q = pk / (1.0 - lambda[k] * pk);
                if q > 0.0 { gamma[k] / q } else { f64::INFINITY }
            })
            .collect();
        Ok((r, next))
    }
}

/// Plain Picard iteration from λ = `init`. `observe` sees every iterate.
pub(crate) fn picard(
    blocks: &[Block<'_>],
    gamma: &[f64],
    init: Vec<f64>,
    opts: &FixedPointOpts,
    mut observe: impl FnMut(&[f64]),
) -> Result<UplinkState> {
    let mut lambda = init;
    let mut next = lambda.clone();
    let mut limit = vec![f64::INFINITY; lambda.len()];
    for blk in blocks {
        for &k in blk.served {
            limit[k] = opts.lambda_cap * gamma[k] * blk.reg / blk.gram[(k, k)].re;
        }
    }
    for it in 1..=opts.max_iter {
        let mut change = 0.0f64;
        for blk in blocks {
            let (_, vals) = blk.update(&lambda, gamma)?;
            for (&k, v) in blk.served.iter().zip(vals) {
                next[k] = v;
                let d = (v - lambda[k]).abs();
                if d > 0.0 {
                    change = change.max(d / v.abs().max(lambda[k].abs()));
                }
            }
        }
        std::mem::swap(&mut lambda, &mut next);
        observe(&lambda);
        if lambda.iter().zip(&limit).any(|(&l, &m)| !(l.is_finite() && l <= m)) {
            return Ok(UplinkState { lambda, iterations: it, converged: false, feasible: false });
        }
        if change < opts.tol {
            return Ok(UplinkState { lambda, iterations: it, converged: true, feasible: true });
        }
    }
    Ok(UplinkState { lambda, iterations: opts.max_iter, converged: false, feasible: false })
}

fn members(serving: &[usize], n_bs: usize) -> Vec<Vec<usize>> {
    let mut m = vec![Vec::new(); n_bs];
    for (k, &b) in serving.iter().enumerate() {
        m[b].push(k);
    }
    m
}

fn blocks<'a>(
    channels: &'a ChannelSet,
    served: &'a [Vec<usize>],
    mu: &[f64],
    extra: &'a [ExtraCov],
) -> Vec<Block<'a>> {
    static NONE: ExtraCov = ExtraCov::None;
    (0..channels.n_bs())
        .map(|b| Block {
            h: channels.bs(b),
            gram: channels.gram(b),
            reg: mu[b] * channels.n_ant as f64,
            served: &served[b],
            extra: extra.get(b).unwrap_or(&NONE),
        })
        .collect()
}

/// λ_k ← γ_k / h_{b_k,k}^H (Σ_{j≠k} λ_j h_{b_k,j} h_{b_k,j}^H + extra[b_k] + μ N I)⁻¹ h_{b_k,k},
/// iterated from λ = 0. `extra` may be empty.
pub fn solve_uplink_fixed_point(
    channels: &ChannelSet,
    serving: &[usize],
    gamma: &[f64],
    mu: &[f64],
    extra: &[ExtraCov],
    opts: &FixedPointOpts,
) -> Result<UplinkState> {
    let served = members(serving, channels.n_bs());
    let blks = blocks(channels, &served, mu, extra);
    picard(&blks, gamma, vec![0.0; serving.len()], opts, |_| {})
}

/// v_k = (Σ_{j≠k} λ_j h h^H + extra + μ N I)⁻¹ h_{b_k,k}, one vector per UE.
pub fn mmse_receivers(
    state: &UplinkState,
    channels: &ChannelSet,
    serving: &[usize],
    mu: &[f64],
    extra: &[ExtraCov],
) -> Result<Vec<DVector<C64>>> {
    let served = members(serving, channels.n_bs());
    let blks = blocks(channels, &served, mu, extra);
    let mut v = vec![DVector::zeros(channels.n_ant); serving.len()];
    for blk in &blks {
        receivers_into(blk, &state.lambda, &mut v)?;
    }
    Ok(v)
}

/// Receivers for the served UEs of one block, via A_{\k}⁻¹h = A⁻¹h / (1 − λ_k h^H A⁻¹ h).
pub(crate) fn receivers_into(blk: &Block<'_>, lambda: &[f64], out: &mut [DVector<C64>]) -> Result<()> {
    if blk.served.is_empty() {
        return Ok(());
    }
    let r = blk.resolvent(lambda)?;
    let p = r.quads(blk.served);
    let x = r.apply(blk.served);
    for (c, &k) in blk.served.iter().enumerate() {
        out[k] = x.column(c) / C64::new(1.0 - lambda[k] * p[c], 0.0);
    }
    Ok(())
}

/// [G]_{k,k} = |h_{b_k,k}^H v_k|²/γ_k, [G]_{k,i} = −|h_{b_i,k}^H v_i|².
pub fn coupling_matrix(receivers: &[DVector<C64>], channels: &ChannelSet, serving: &[usize], gamma: &[f64]) -> DMatrix<f64> {
    let k = serving.len();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        let cross = channels.bs(serving[i]).ad_mul(&receivers[i]);
        for kk in 0..k {
            let v = cross[kk].norm_sqr();
            g[(kk, i)] = if kk == i { v / gamma[i] } else { -v };
        }
    }
    g
}

#[derive(Clone, Debug)]
pub struct Scaling {
    pub delta: Vec<f64>,
    pub feasible: bool,
}

/// δ = G⁻¹·noise. UEs with an infinite diagonal (zero target) get δ = 0.
/// Feasible when the solve succeeds with δ > 0 for every remaining UE.
pub fn solve_scaling(g: &DMatrix<f64>, noise: &[f64]) -> Scaling {
    let k = g.nrows();
    let keep: Vec<usize> = (0..k).filter(|&i| g[(i, i)].is_finite()).collect();
    let mut delta = vec![0.0; k];
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |p, q| g[(keep[p], keep[q])]);
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&i| noise[i]));
    let Some(sol) = sub.lu().solve(&rhs) else {
        return Scaling { delta, feasible: false };
    };
    let mut feasible = true;
    for (p, &i) in keep.iter().enumerate() {
        delta[i] = sol[p];
        if !(sol[p] > 0.0 && sol[p].is_finite()) {
            feasible = false;
        }
    }
    Scaling { delta, feasible }
}

/// Result of evaluating precoders on the true channels.
#[derive(Clone, Debug, Default)]
pub struct Audit {
    pub sinr: Vec<f64>,
    pub rate: Vec<f64>,
    /// Watts.
    pub per_bs_power: Vec<f64>,
    /// ε_{b,k} = Σ_{j∈U_b} |h_{b,k}^H w_j|², `[b][k]`, zero where b serves k.
    pub ici: Vec<Vec<f64>>,
}

impl Audit {
    pub fn total_power(&self) -> f64 {
        self.per_bs_power.iter().sum()
    }

    pub fn weighted_power(&self, mu: &[f64]) -> f64 {
        self.per_bs_power.iter().zip(mu).map(|(p, m)| p * m).sum()
    }

    pub fn min_rate(&self) -> f64 {
        self.rate.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_rate(&self) -> f64 {
        self.rate.iter().sum::<f64>() / self.rate.len().max(1) as f64
    }
}

/// SINR, rate, per-BS power and intercell leakage of precoders w_k (one per
/// UE, transmitted by its serving BS).
pub fn audit_precoders(precoders: &[DVector<C64>], channels: &ChannelSet, serving: &[usize], noise_power: f64) -> Audit {
    let (n_bs, k) = (channels.n_bs(), serving.len());
    let served = members(serving, n_bs);
    let mut signal = vec![0.0; k];
    let mut interf = vec![0.0; k];
    let mut per_bs_power = vec![0.0; n_bs];
    let mut ici = vec![vec![0.0; k]; n_bs];
    for b in 0..n_bs {
        if served[b].is_empty() {
            continue;
        }
        let w = DMatrix::from_fn(channels.n_ant, served[b].len(), |p, q| precoders[served[b][q]][p]);
        per_bs_power[b] = w.norm_squared();
        let cross = channels.bs(b).ad_mul(&w);
        for ue in 0..k {
            for (c, &j) in served[b].iter().enumerate() {
                let v = cross[(ue, c)].norm_sqr();
                if j == ue {
                    signal[ue] = v;
                } else {
                    interf[ue] += v;
                    if serving[ue] != b {
                        ici[b][ue] += v;
                    }
                }
            }
        }
    }
    let sinr: Vec<f64> = signal.iter().zip(&interf).map(|(s, i)| s / (i + noise_power)).collect();
    let rate = sinr.iter().map(|s| (1.0 + s).log2()).collect();
    Audit { sinr, rate, per_bs_power, ici }
}

/// Centralized optimum with all its intermediate quantities.
#[derive(Clone, Debug)]
pub struct DualSolution {
    pub lambda: Vec<f64>,
    pub receivers: Vec<DVector<C64>>,
    pub coupling: DMatrix<f64>,
    pub delta: Vec<f64>,
    pub precoders: Vec<DVector<C64>>,
    pub audit: Audit,
    pub iterations: usize,
    pub feasible: bool,
}

impl DualSolution {
    fn infeasible(lambda: Vec<f64>, iterations: usize) -> Self {
        DualSolution {
            lambda,
            receivers: Vec::new(),
            coupling: DMatrix::zeros(0, 0),
            delta: Vec::new(),
            precoders: Vec::new(),
            audit: Audit::default(),
            iterations,
            feasible: false,
        }
    }

    /// Σ_k λ_k σ² / N.
    pub fn dual_objective(&self, noise_power: f64, n_ant: usize) -> f64 {
        self.lambda.iter().sum::<f64>() * noise_power / n_ant as f64
    }
}

pub fn precoders_from(receivers: &[DVector<C64>], delta: &[f64]) -> Vec<DVector<C64>> {
    receivers.iter().zip(delta).map(|(v, d)| v * C64::new(d.max(0.0).sqrt(), 0.0)).collect()
}

/// Global optimum of the weighted power minimization for one realization.
pub fn solve_centralized(scenario: &Scenario, channels: &ChannelSet, opts: &FixedPointOpts) -> Result<DualSolution> {
    let state = solve_uplink_fixed_point(channels, &scenario.serving, &scenario.gamma, &scenario.mu, &[], opts)?;
    if !state.feasible {
        return Ok(DualSolution::infeasible(state.lambda, state.iterations));
    }
    let receivers = mmse_receivers(&state, channels, &scenario.serving, &scenario.mu, &[])?;
    let coupling = coupling_matrix(&receivers, channels, &scenario.serving, &scenario.gamma);
    let noise = vec![scenario.noise_power; scenario.n_ue()];
    let scaling = solve_scaling(&coupling, &noise);
    if !scaling.feasible {
        return Ok(DualSolution::infeasible(state.lambda, state.iterations));
    }
    let precoders = precoders_from(&receivers, &scaling.delta);
    let audit = audit_precoders(&precoders, channels, &scenario.serving, scenario.noise_power);
    Ok(DualSolution {
        lambda: state.lambda,
        receivers,
        coupling,
        delta: scaling.delta,
        precoders,
        audit,
        iterations: state.iterations,
        feasible: true,
    })
}
