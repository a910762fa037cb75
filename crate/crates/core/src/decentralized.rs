//! Decentralized beamforming with fixed intercell-interference values, plus
//! the zero-forcing, interference-nulling and statistics-only baselines.
//!
//! Every BS solves its own power minimization with the interference it
//! receives treated as extra noise and the interference it causes capped.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::det_equiv::{run_pipeline, surrogate_stats, DetEquivState, SurrogateMode, Targets, EquivOpts};
use crate::duality::{
    audit_precoders, picard, receivers_into, solve_centralized, solve_scaling, Audit, Block,
    ExtraCov, FixedPointOpts,
};
use crate::linalg;
use crate::scenario::{watts_to_dbm, ChannelSet, CorrelationSet, Scenario};
use crate::{Error, Result, C64};

/// Beamforming method tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Centralized,
    Alg1,
    Alg2,
    Iid,
    Zf,
    Iczf,
    Asymptotic,
    Grouped,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Centralized,
        Method::Alg1,
        Method::Alg2,
        Method::Iid,
        Method::Zf,
        Method::Iczf,
        Method::Asymptotic,
        Method::Grouped,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Centralized => "centralized",
            Method::Alg1 => "alg1",
            Method::Alg2 => "alg2",
            Method::Iid => "iid",
            Method::Zf => "zf",
            Method::Iczf => "iczf",
            Method::Asymptotic => "asymptotic",
            Method::Grouped => "grouped",
        }
    }

    /// Whether a feasible record must meet every rate target.
    pub fn guarantees_targets(self) -> bool {
        self != Method::Asymptotic
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown method '{}'", s.trim())))
    }
}

/// Real scalars exchanged over the backhaul per statistics update, for `cells`
/// BSs, `ues` UEs in total, `antennas` per BS and `groups` per BS (grouped only).
pub fn backhaul_scalars(method: Method, cells: usize, ues: usize, antennas: usize, groups: usize) -> u64 {
    let (l, k, n, g) = (cells as u64, ues as u64, antennas as u64, groups as u64);
    let others = l.saturating_sub(1);
    match method {
        Method::Centralized => others * k * 2 * n,
        Method::Alg1 | Method::Asymptotic => others * k * n * n,
        Method::Alg2 | Method::Iid => others * k,
        Method::Zf | Method::Iczf => 0,
        Method::Grouped => others * (g * n * n + k),
    }
}

/// Audited outcome of one method on one drop.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub method: Method,
    pub drop: u64,
    pub audit: Audit,
    /// The solver found a solution; for the asymptotic method, the audited
    /// rates also met every target.
    pub feasible: bool,
    pub backhaul_scalars: u64,
    pub iterations: usize,
    /// Leakage caps ε̄_{b,k} the method enforced, `[b][k]`; empty if none.
    pub caps: Vec<Vec<f64>>,
}

impl RunRecord {
    pub fn infeasible(method: Method, drop: u64, backhaul_scalars: u64, iterations: usize) -> Self {
        RunRecord { method, drop, audit: Audit::default(), feasible: false, backhaul_scalars, iterations, caps: Vec::new() }
    }

    pub fn total_power(&self) -> f64 {
        self.audit.total_power()
    }

    pub fn total_power_dbm(&self) -> f64 {
        watts_to_dbm(self.total_power())
    }

    pub fn min_rate(&self) -> f64 {
        self.audit.min_rate()
    }

    pub fn mean_rate(&self) -> f64 {
        self.audit.mean_rate()
    }

    pub fn per_ue_rate(&self) -> &[f64] {
        &self.audit.rate
    }

    pub fn per_bs_power(&self) -> &[f64] {
        &self.audit.per_bs_power
    }
}

/// Every UE meets log2(1 + γ_k) up to `slack`.
pub fn meets_targets(audit: &Audit, gamma: &[f64], slack: f64) -> bool {
    audit.rate.len() == gamma.len() && audit.rate.iter().zip(gamma).all(|(r, g)| *r >= (1.0 + g).log2() - slack)
}

/// One BS's subproblem with fixed intercell interference.
#[derive(Clone, Debug)]
pub struct LocalProblem<'a> {
    pub bs: usize,
    pub served: &'a [usize],
    pub channels: &'a ChannelSet,
    /// σ² + Ī_k per served UE, aligned with `served`.
    pub effective_noise: Vec<f64>,
    /// Cap on Σ_{j∈U_b}|h_{b,k}^H w_j|² for every UE k (entries of served
    /// UEs are ignored; +∞ disables a cap).
    pub leakage_caps: Vec<f64>,
    pub mu_b: f64,
    /// Targets of all UEs; only the served ones are read.
    pub gamma: &'a [f64],
}

#[derive(Clone, Copy, Debug)]
pub struct LocalOpts {
    /// Relative tolerance on the leakage caps.
    pub leak_tol: f64,
    pub max_outer: usize,
    pub inner: FixedPointOpts,
}

impl Default for LocalOpts {
    fn default() -> Self {
        LocalOpts { leak_tol: 1e-4, max_outer: 500, inner: FixedPointOpts::default() }
    }
}

#[derive(Clone, Debug)]
pub struct LocalSolution {
    /// Aligned with `served`.
    pub precoders: Vec<DVector<C64>>,
    /// Leakage multipliers per UE (zero for served and uncapped UEs).
    pub beta: Vec<f64>,
    /// Σ_{j∈U_b}|h_{b,k}^H w_j|² per UE.
    pub leakage: Vec<f64>,
    pub outer_iterations: usize,
    pub feasible: bool,
}

/// Minimum-power precoders of one BS under SINR targets and leakage caps.
///
/// For fixed leakage multipliers β the problem is a single-cell power
/// minimization whose uplink covariance gains Σ β_k h_k h_k^H; it is solved by
/// duality. The multipliers follow a per-coordinate rescaling that moves each
/// leakage toward its cap, and the caps are pursued with a small safety margin
/// so the returned precoders satisfy the original caps exactly.
pub fn local_solve(problem: &LocalProblem<'_>, opts: &LocalOpts) -> Result<LocalSolution> {
    let ch = problem.channels;
    let (n, k_all) = (ch.n_ant, ch.n_ue);
    let served = problem.served;
    let in_cell = {
        let mut v = vec![false; k_all];
        for &j in served {
            v[j] = true;
        }
        v
    };
    let capped: Vec<usize> =
        (0..k_all).filter(|&k| !in_cell[k] && problem.leakage_caps[k].is_finite()).collect();
    let fail = |iters| LocalSolution {
        precoders: Vec::new(),
        beta: vec![0.0; k_all],
        leakage: Vec::new(),
        outer_iterations: iters,
        feasible: false,
    };
    if served.is_empty() {
        return Ok(LocalSolution {
            precoders: Vec::new(),
            beta: vec![0.0; k_all],
            leakage: vec![0.0; k_all],
            outer_iterations: 0,
            feasible: true,
        });
    }
    if capped.iter().any(|&k| !(problem.leakage_caps[k] > 0.0)) && served.iter().any(|&j| problem.gamma[j] > 0.0) {
        return Ok(fail(0));
    }
    let margin = 1.0 - 2.0 * opts.leak_tol;
    let target: Vec<f64> = (0..k_all).map(|k| problem.leakage_caps[k] * margin).collect();
    let ctx = Local { problem, served, in_cell: &in_cell, capped: &capped, target: &target, n, opts };

    let mut beta = vec![0.0; k_all];
    let Some(mut cur) = ctx.eval(&beta, vec![0.0; k_all])? else {
        return Ok(fail(1));
    };
    let mut iterations = 1;
    let mut best = cur.within_caps(&ctx).then(|| cur.clone());
    while iterations < opts.max_outer {
        let done = capped.iter().all(|&k| {
            let r = cur.leakage[k] / target[k];
            r <= 1.0 + opts.leak_tol && (beta[k] == 0.0 || r >= 1.0 - opts.leak_tol)
        });
        if done {
            break;
        }
        // rescaling that would put each leakage on its target if the others stayed put
        let q = &cur.quads;
        let goal: Vec<f64> = (0..k_all)
            .map(|k| match capped.binary_search(&k) {
                Ok(i) => {
                    let ratio = (cur.leakage[k] / target[k]).sqrt();
                    (((1.0 + beta[k] * q[i]) * ratio - 1.0) / q[i]).max(0.0)
                }
                Err(_) => 0.0,
            })
            .collect();
        let slope: f64 = capped.iter().map(|&k| (cur.leakage[k] - target[k]) * (goal[k] - beta[k])).sum();
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            iterations += 1;
            let trial: Vec<f64> = beta.iter().zip(&goal).map(|(b, g)| b + step * (g - b)).collect();
            if let Some(next) = ctx.eval(&trial, cur.lambda.clone())? {
                let floor = cur.dual + 1e-4 * step * slope - 1e-12 * cur.dual.abs();
                if next.dual >= floor {
                    beta = trial;
                    cur = next;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if cur.within_caps(&ctx) {
            best = Some(cur.clone());
        }
        if !moved {
            break;
        }
    }
    let Some(sol) = best else {
        return Ok(fail(iterations));
    };
    let precoders = (0..served.len()).map(|c| sol.v.column(c) * C64::new(sol.delta[c].max(0.0).sqrt(), 0.0)).collect();
    Ok(LocalSolution { precoders, beta, leakage: sol.leakage, outer_iterations: iterations, feasible: true })
}

struct Local<'a> {
    problem: &'a LocalProblem<'a>,
    served: &'a [usize],
    in_cell: &'a [bool],
    capped: &'a [usize],
    target: &'a [f64],
    n: usize,
    opts: &'a LocalOpts,
}

/// The inner solution at fixed leakage multipliers.
#[derive(Clone)]
struct Inner {
    lambda: Vec<f64>,
    delta: Vec<f64>,
    v: DMatrix<C64>,
    leakage: Vec<f64>,
    /// h_k^H (A − β_k h_k h_k^H)⁻¹ h_k for the capped UEs.
    quads: Vec<f64>,
    /// Σ λ_k n_k − Σ β_k c_k, the Lagrange dual value up to a factor N.
    dual: f64,
}

impl Inner {
    fn within_caps(&self, ctx: &Local<'_>) -> bool {
        ctx.capped.iter().all(|&k| self.leakage[k] <= ctx.problem.leakage_caps[k])
    }
}

impl Local<'_> {
    fn eval(&self, beta: &[f64], init: Vec<f64>) -> Result<Option<Inner>> {
        let p = self.problem;
        let ch = p.channels;
        let extra = ExtraCov::Weights(beta.to_vec());
        let blk = Block { h: ch.bs(p.bs), gram: ch.gram(p.bs), reg: p.mu_b * self.n as f64, served: self.served, extra: &extra };
        let st = picard(std::slice::from_ref(&blk), p.gamma, init, &self.opts.inner, |_| {})?;
        if !st.feasible {
            return Ok(None);
        }
        let mut receivers: Vec<DVector<C64>> = vec![DVector::zeros(0); ch.n_ue];
        receivers_into(&blk, &st.lambda, &mut receivers)?;
        let m = self.served.len();
        let v = DMatrix::from_fn(self.n, m, |r, c| receivers[self.served[c]][r]);
        let cross = ch.bs(p.bs).ad_mul(&v);
        let g = DMatrix::from_fn(m, m, |r, c| {
            let x = cross[(self.served[r], c)].norm_sqr();
            if r == c { x / p.gamma[self.served[r]] } else { -x }
        });
        let sc = solve_scaling(&g, &p.effective_noise);
        if !sc.feasible {
            return Ok(None);
        }
        let leakage: Vec<f64> = (0..ch.n_ue)
            .map(|k| if self.in_cell[k] { 0.0 } else { (0..m).map(|c| sc.delta[c] * cross[(k, c)].norm_sqr()).sum() })
            .collect();
        let quads = if self.capped.is_empty() {
            Vec::new()
        } else {
            let raw = blk.resolvent(&st.lambda)?.quads(self.capped);
            self.capped.iter().zip(raw).map(|(&k, x)| x / (1.0 - beta[k] * x)).collect()
        };
        let dual = self.served.iter().zip(&p.effective_noise).map(|(&k, nk)| st.lambda[k] * nk).sum::<f64>()
            - self.capped.iter().map(|&k| beta[k] * self.target[k]).sum::<f64>();
        Ok(Some(Inner { lambda: st.lambda, delta: sc.delta, v, leakage, quads, dual }))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SolverOpts {
    pub equiv: EquivOpts,
    pub local: LocalOpts,
    pub fixed_point: FixedPointOpts,
}

fn targets(s: &Scenario) -> Targets<'_> {
    Targets { serving: &s.serving, gamma: &s.gamma, mu: &s.mu, noise_power: s.noise_power }
}

/// Local solves at every BS with caps ε̄_{b,k} (from `caps[b]`) and effective
/// noise σ² + Σ_{b'≠b_k} ε̄_{b',k}, audited on the true channels.
pub fn solve_with_caps(
    method: Method,
    drop: u64,
    scenario: &Scenario,
    channels: &ChannelSet,
    caps: Vec<Vec<f64>>,
    backhaul: u64,
    opts: &LocalOpts,
) -> Result<RunRecord> {
    let (n_bs, k_all) = (scenario.n_bs(), scenario.n_ue());
    let mut precoders = vec![DVector::zeros(channels.n_ant); k_all];
    let mut iterations = 0;
    for b in 0..n_bs {
        let served = scenario.served(b);
        let effective_noise = served
            .iter()
            .map(|&k| scenario.noise_power + (0..n_bs).filter(|&o| o != b).map(|o| caps[o][k]).sum::<f64>())
            .collect();
        let leakage_caps = (0..k_all).map(|k| if scenario.serving[k] == b { f64::INFINITY } else { caps[b][k] }).collect();
        let problem = LocalProblem {
            bs: b,
            served,
            channels,
            effective_noise,
            leakage_caps,
            mu_b: scenario.mu[b],
            gamma: &scenario.gamma,
        };
        let sol = local_solve(&problem, opts)?;
        iterations = iterations.max(sol.outer_iterations);
        if !sol.feasible {
            let mut rec = RunRecord::infeasible(method, drop, backhaul, iterations);
            rec.caps = caps;
            return Ok(rec);
        }
        for (&k, w) in served.iter().zip(sol.precoders) {
            let norm = w.norm();
            precoders[k] = if norm > 0.0 { w / C64::new(norm, 0.0) } else { w };
        }
    }
    let Some(precoders) = load_directions(precoders, scenario, channels) else {
        return Ok(RunRecord::infeasible(Method::Iczf, drop, backhaul, iterations));
    };
    let audit = audit_precoders(&precoders, channels, &scenario.serving, scenario.noise_power);
    Ok(RunRecord { method, drop, audit, feasible: true, backhaul_scalars: backhaul, iterations, caps })
}

fn backhaul_for(method: Method, s: &Scenario, n: usize) -> u64 {
    backhaul_scalars(method, s.n_bs(), s.n_ue(), n, 0)
}

pub fn run_centralized(drop: u64, scenario: &Scenario, channels: &ChannelSet, opts: &SolverOpts) -> Result<RunRecord> {
    let backhaul = backhaul_for(Method::Centralized, scenario, channels.n_ant);
    let sol = solve_centralized(scenario, channels, &opts.fixed_point)?;
    if !sol.feasible {
        return Ok(RunRecord::infeasible(Method::Centralized, drop, backhaul, sol.iterations));
    }
    Ok(RunRecord {
        method: Method::Centralized,
        drop,
        audit: sol.audit,
        feasible: true,
        backhaul_scalars: backhaul,
        iterations: sol.iterations,
        caps: Vec::new(),
    })
}

/// Caps from the deterministic equivalents of the true statistics.
pub fn run_alg1(drop: u64, scenario: &Scenario, corr: &CorrelationSet, channels: &ChannelSet, opts: &SolverOpts) -> Result<RunRecord> {
    let backhaul = backhaul_for(Method::Alg1, scenario, channels.n_ant);
    let de = run_pipeline(corr, targets(scenario), &opts.equiv)?;
    if !de.feasible {
        return Ok(RunRecord::infeasible(Method::Alg1, drop, backhaul, de.iterations));
    }
    solve_with_caps(Method::Alg1, drop, scenario, channels, de.ici_bar, backhaul, &opts.local)
}

/// Each BS computes its own caps from its local statistics (`Alg2`) or from
/// pathloss alone (`Iid`), with identity surrogates for everything it cannot
/// observe.
pub fn run_alg2(
    drop: u64,
    scenario: &Scenario,
    corr: &CorrelationSet,
    channels: &ChannelSet,
    mode: SurrogateMode,
    opts: &SolverOpts,
) -> Result<RunRecord> {
    let method = match mode {
        SurrogateMode::Alg2 => Method::Alg2,
        SurrogateMode::Iid => Method::Iid,
    };
    let backhaul = backhaul_for(method, scenario, channels.n_ant);
    let n_bs = scenario.n_bs();
    let mut caps = Vec::with_capacity(n_bs);
    let mut shared: Option<DetEquivState> = None;
    let mut iterations = 0;
    for b in 0..n_bs {
        let de = match (mode, &shared) {
            (SurrogateMode::Iid, Some(de)) => de.clone(),
            _ => {
                let sur = surrogate_stats(corr, &scenario.pathloss, b, mode)?;
                run_pipeline(&sur, targets(scenario), &opts.equiv)?
            }
        };
        iterations = iterations.max(de.iterations);
        if !de.feasible {
            return Ok(RunRecord::infeasible(method, drop, backhaul, iterations));
        }
        caps.push(de.ici_bar[b].clone());
        if mode == SurrogateMode::Iid {
            shared = Some(de);
        }
    }
    solve_with_caps(method, drop, scenario, channels, caps, backhaul, &opts.local)
}

/// Served channels of BS `b` projected onto the orthogonal complement of the
/// other cells' channels. Directions of that span carrying less than
/// `NULL_TOL`² of a unit-normalized channel's energy are ignored.
fn served_in_null_space(scenario: &Scenario, channels: &ChannelSet, b: usize) -> DMatrix<C64> {
    let h = channels.bs(b);
    let served = scenario.served(b);
    let others: Vec<usize> = (0..scenario.n_ue()).filter(|&k| scenario.serving[k] != b).collect();
    let hs = h.select_columns(served);
    if others.is_empty() {
        return hs;
    }
    let q = linalg::orthonormal_span(&h.select_columns(&others), NULL_TOL);
    linalg::project_off(&q, &hs)
}

/// Powers that meet every SINR target exactly for fixed unit-norm
/// directions, counting whatever interference the directions still leak.
/// `None` when no nonnegative loading exists.
fn load_directions(dirs: Vec<DVector<C64>>, scenario: &Scenario, channels: &ChannelSet) -> Option<Vec<DVector<C64>>> {
    let k_all = dirs.len();
    let gain = |k: usize, j: usize| channels.h(scenario.serving[j], k).dotc(&dirs[j]).norm_sqr();
    let idle = |k: usize| !(scenario.gamma[k] > 0.0);
    let m = DMatrix::from_fn(k_all, k_all, |k, j| match (idle(k), k == j) {
        (true, diag) => f64::from(u8::from(diag)),
        (false, true) => gain(k, k) / scenario.gamma[k],
        (false, false) => -gain(k, j),
    });
    let rhs = DVector::from_fn(k_all, |k, _| if idle(k) { 0.0 } else { scenario.noise_power });
    let p = m.lu().solve(&rhs)?;
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return None;
    }
    Some(dirs.into_iter().zip(p.iter()).map(|(d, &x)| d * C64::new(x.sqrt(), 0.0)).collect())
}

const NULL_TOL: f64 = 1e-6;

/// Unit-norm zero-forcing directions toward all UEs, loaded with the powers
/// that meet every SINR target exactly.
pub fn run_zf(drop: u64, scenario: &Scenario, channels: &ChannelSet) -> Result<RunRecord> {
    let backhaul = backhaul_for(Method::Zf, scenario, channels.n_ant);
    let (n, k_all) = (channels.n_ant, scenario.n_ue());
    if n < k_all {
        return Ok(RunRecord::infeasible(Method::Zf, drop, backhaul, 0));
    }
    let mut precoders = vec![DVector::zeros(n); k_all];
    for b in 0..scenario.n_bs() {
        let served = scenario.served(b);
        if served.is_empty() {
            continue;
        }
        let hs = served_in_null_space(scenario, channels, b);
        let gram = hs.ad_mul(&hs);
        let scale: Vec<f64> = (0..served.len()).map(|i| gram[(i, i)].re.sqrt()).collect();
        let normalized = DMatrix::from_fn(served.len(), served.len(), |i, j| gram[(i, j)] / (scale[i] * scale[j]));
        let ev = normalized.symmetric_eigenvalues();
        let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        if !(lo > 0.0) || (hi / lo).sqrt() > 1e12 {
            return Ok(RunRecord::infeasible(Method::Zf, drop, backhaul, 0));
        }
        let Some(chol) = gram.cholesky() else {
            return Ok(RunRecord::infeasible(Method::Zf, drop, backhaul, 0));
        };
        let dirs = &hs * chol.inverse();
        for (c, &j) in served.iter().enumerate() {
            let d = dirs.column(c);
            precoders[j] = &d / C64::new(d.norm(), 0.0);
        }
    }
    let Some(precoders) = load_directions(precoders, scenario, channels) else {
        return Ok(RunRecord::infeasible(Method::Zf, drop, backhaul, 0));
    };
    let audit = audit_precoders(&precoders, channels, &scenario.serving, scenario.noise_power);
    Ok(RunRecord { method: Method::Zf, drop, audit, feasible: true, backhaul_scalars: backhaul, iterations: 0, caps: Vec::new() })
}

/// Optimal single-cell beamforming inside the null space of every other
/// cell's channels, so no interference leaves the cell.
pub fn run_iczf(drop: u64, scenario: &Scenario, channels: &ChannelSet, opts: &SolverOpts) -> Result<RunRecord> {
    let backhaul = backhaul_for(Method::Iczf, scenario, channels.n_ant);
    let (n, k_all) = (channels.n_ant, scenario.n_ue());
    let mut precoders = vec![DVector::zeros(n); k_all];
    let mut iterations = 0;
    for b in 0..scenario.n_bs() {
        let served = scenario.served(b);
        if served.is_empty() {
            continue;
        }
        if n < k_all {
            return Ok(RunRecord::infeasible(Method::Iczf, drop, backhaul, iterations));
        }
        let local = ChannelSet::from_matrices(vec![served_in_null_space(scenario, channels, b)]);
        let m = served.len();
        let sub = Scenario::new(
            vec![[0.0; 2]],
            vec![[0.0; 2]; m],
            vec![0; m],
            vec![vec![1.0; m]],
            vec![vec![0.0; m]],
            vec![vec![0.0; m]],
            served.iter().map(|&k| scenario.gamma[k]).collect(),
            vec![scenario.mu[b]],
            scenario.noise_power,
        );
        let sol = solve_centralized(&sub, &local, &opts.fixed_point)?;
        iterations = iterations.max(sol.iterations);
        if !sol.feasible {
            return Ok(RunRecord::infeasible(Method::Iczf, drop, backhaul, iterations));
        }
        for (&k, w) in served.iter().zip(sol.precoders) {
            let norm = w.norm();
            precoders[k] = if norm > 0.0 { w / C64::new(norm, 0.0) } else { w };
        }
    }
    let Some(precoders) = load_directions(precoders, scenario, channels) else {
        return Ok(RunRecord::infeasible(Method::Iczf, drop, backhaul, iterations));
    };
    let audit = audit_precoders(&precoders, channels, &scenario.serving, scenario.noise_power);
    Ok(RunRecord { method: Method::Iczf, drop, audit, feasible: true, backhaul_scalars: backhaul, iterations, caps: Vec::new() })
}

/// MMSE receivers at the deterministic dual powers λ̄ on the true channels,
/// scaled by δ̄. Meets the targets only asymptotically; `feasible` reports
/// whether this drop happened to meet them.
pub fn run_asymptotic(drop: u64, scenario: &Scenario, corr: &CorrelationSet, channels: &ChannelSet, opts: &SolverOpts) -> Result<RunRecord> {
    let backhaul = backhaul_for(Method::Asymptotic, scenario, channels.n_ant);
    let de = run_pipeline(corr, targets(scenario), &opts.equiv)?;
    if !de.feasible {
        return Ok(RunRecord::infeasible(Method::Asymptotic, drop, backhaul, de.iterations));
    }
    let none = ExtraCov::None;
    let mut v = vec![DVector::zeros(0); scenario.n_ue()];
    for b in 0..scenario.n_bs() {
        let blk = Block {
            h: channels.bs(b),
            gram: channels.gram(b),
            reg: scenario.mu[b] * channels.n_ant as f64,
            served: scenario.served(b),
            extra: &none,
        };
        receivers_into(&blk, &de.lambda_bar, &mut v)?;
    }
    let precoders: Vec<DVector<C64>> =
        v.iter().zip(&de.delta_bar).map(|(v, d)| v * C64::new(d.max(0.0).sqrt(), 0.0)).collect();
    let audit = audit_precoders(&precoders, channels, &scenario.serving, scenario.noise_power);
    let feasible = meets_targets(&audit, &scenario.gamma, 1e-4);
    Ok(RunRecord {
        method: Method::Asymptotic,
        drop,
        audit,
        feasible,
        backhaul_scalars: backhaul,
        iterations: de.iterations,
        caps: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_correlations, build_geometry, sample_channels, Correlation, NetworkConfig};
    use approx::assert_relative_eq;

    fn drop_of(cfg: &NetworkConfig, seed: u64) -> (Scenario, CorrelationSet, ChannelSet) {
        let s = build_geometry(cfg, seed).unwrap();
        let c = build_correlations(&s, cfg).unwrap();
        let h = sample_channels(&c, seed).unwrap();
        (s, c, h)
    }

    fn small() -> NetworkConfig {
        NetworkConfig { cells: 3, ues_per_cell: 3, antennas: 18, ..Default::default() }
    }

    #[test]
    fn single_cell_matches_centralized() {
        let cfg = NetworkConfig { cells: 1, ues_per_cell: 4, antennas: 8, ..Default::default() };
        let (s, _, h) = drop_of(&cfg, 3);
        let opts = SolverOpts::default();
        let c = run_centralized(0, &s, &h, &opts).unwrap();
        let caps = vec![vec![f64::INFINITY; s.n_ue()]];
        let l = solve_with_caps(Method::Alg1, 0, &s, &h, caps, 0, &opts.local).unwrap();
        assert!(c.feasible && l.feasible);
        assert_relative_eq!(l.total_power(), c.total_power(), max_relative = 1e-6);
        let z = run_iczf(0, &s, &h, &opts).unwrap();
        assert_relative_eq!(z.total_power(), c.total_power(), max_relative = 1e-9);
    }

    #[test]
    fn decomposition_is_tight_at_optimal_interference() {
        let cfg = small();
        let opts = SolverOpts::default();
        for seed in 0..4 {
            let (s, _, h) = drop_of(&cfg, seed);
            let c = run_centralized(seed, &s, &h, &opts).unwrap();
            assert!(c.feasible);
            let r = solve_with_caps(Method::Alg1, seed, &s, &h, c.audit.ici.clone(), 0, &opts.local).unwrap();
            assert!(r.feasible, "seed {seed}");
            let rel = (r.total_power() - c.total_power()) / c.total_power();
            assert!((-1e-9..1e-3).contains(&rel), "seed {seed}: relative gap {rel}");
        }
    }

    #[test]
    fn infinite_caps_leave_multipliers_at_zero() {
        let cfg = small();
        let (s, _, h) = drop_of(&cfg, 1);
        let problem = LocalProblem {
            bs: 1,
            served: s.served(1),
            channels: &h,
            effective_noise: vec![2.0 * s.noise_power; s.served(1).len()],
            leakage_caps: vec![f64::INFINITY; s.n_ue()],
            mu_b: 1.0,
            gamma: &s.gamma,
        };
        let sol = local_solve(&problem, &LocalOpts::default()).unwrap();
        assert!(sol.feasible && sol.outer_iterations == 1);
        assert!(sol.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zf_single_ue_closed_form() {
        let cfg = NetworkConfig { cells: 1, ues_per_cell: 1, antennas: 6, ..Default::default() };
        let (s, _, h) = drop_of(&cfg, 5);
        let r = run_zf(0, &s, &h).unwrap();
        assert!(r.feasible);
        let expect = s.gamma[0] * s.noise_power / h.h(0, 0).norm_squared();
        assert_relative_eq!(r.total_power(), expect, max_relative = 1e-12);
    }

    #[test]
    fn nulling_baselines_leave_no_interference() {
        let cfg = small();
        let (s, _, h) = drop_of(&cfg, 2);
        let opts = SolverOpts::default();
        let c = run_centralized(0, &s, &h, &opts).unwrap();
        let zf = run_zf(0, &s, &h).unwrap();
        let iczf = run_iczf(0, &s, &h, &opts).unwrap();
        assert!(zf.feasible && iczf.feasible);
        for b in 0..s.n_bs() {
            for k in 0..s.n_ue() {
                let scale = h.h(b, k).norm_squared() * iczf.per_bs_power()[b];
                assert!(iczf.audit.ici[b][k] <= 1e-10 * scale.max(f64::MIN_POSITIVE));
                assert!(zf.audit.ici[b][k] <= 1e-16 * h.h(b, k).norm_squared() * zf.per_bs_power()[b]);
            }
        }
        assert!(c.total_power() <= iczf.total_power() * (1.0 + 1e-9));
        assert!(iczf.total_power() <= zf.total_power() * (1.0 + 1e-9));
    }

    #[test]
    fn alg1_respects_caps_and_costs_more_than_optimum() {
        let cfg = small();
        let opts = SolverOpts::default();
        for seed in 0..3 {
            let (s, corr, h) = drop_of(&cfg, seed);
            let c = run_centralized(seed, &s, &h, &opts).unwrap();
            let a = run_alg1(seed, &s, &corr, &h, &opts).unwrap();
            if !a.feasible {
                continue;
            }
            assert!(a.min_rate() >= 1.0 - 1e-4);
            assert!(c.total_power() <= a.total_power() * (1.0 + 1e-9));
            for b in 0..s.n_bs() {
                for k in 0..s.n_ue() {
                    assert!(a.audit.ici[b][k] <= a.caps[b][k] * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn alg2_is_exact_on_white_channels() {
        let cfg = small();
        let s = build_geometry(&cfg, 4).unwrap();
        let corr = CorrelationSet::from_fn(s.n_bs(), s.n_ue(), |b, k| Correlation::scaled_identity(cfg.antennas, s.pathloss[b][k])).unwrap();
        let h = sample_channels(&corr, 4).unwrap();
        let opts = SolverOpts::default();
        let a1 = run_alg1(0, &s, &corr, &h, &opts).unwrap();
        let a2 = run_alg2(0, &s, &corr, &h, SurrogateMode::Alg2, &opts).unwrap();
        let iid = run_alg2(0, &s, &corr, &h, SurrogateMode::Iid, &opts).unwrap();
        assert!(a1.feasible);
        assert_relative_eq!(a2.total_power(), a1.total_power(), max_relative = 1e-9);
        assert_relative_eq!(iid.total_power(), a1.total_power(), max_relative = 1e-9);
    }

    #[test]
    fn asymptotic_reports_rates_for_every_ue() {
        let cfg = small();
        let (s, corr, h) = drop_of(&cfg, 0);
        let r = run_asymptotic(0, &s, &corr, &h, &SolverOpts::default()).unwrap();
        assert_eq!(r.per_ue_rate().len(), s.n_ue());
        assert!(r.per_ue_rate().iter().all(|x| x.is_finite() && *x > 0.0));
        assert_eq!(r.feasible, meets_targets(&r.audit, &s.gamma, 1e-4));
    }

    #[test]
    fn backhaul_counts() {
        let (l, k, n) = (7, 28, 56);
        let full = backhaul_scalars(Method::Alg1, l, k, n, 0);
        let local = backhaul_scalars(Method::Alg2, l, k, n, 0);
        assert_eq!(full, 6 * 28 * 56 * 56);
        assert_eq!(full / local, (n * n) as u64);
        assert_eq!(backhaul_scalars(Method::Zf, l, k, n, 0), 0);
        assert_eq!(backhaul_scalars(Method::Iid, 1, k, n, 0), 0);
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("alg3".parse::<Method>().is_err());
    }
}
