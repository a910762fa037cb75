//! Closed-form deterministic equivalents for UE populations partitioned into
//! groups that share one correlation matrix per BS and occupy mutually
//! orthogonal eigenspaces.
//!
//! With Θ_{b,k} = a²_{b,k}Θ_{b,g_b(k)}, every per-UE quantity of the generic
//! pipeline collapses to one scalar per (BS, group): η̄ replaces m̄/a², and
//! the group powers solve a system whose size is the number of groups.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::decentralized::{backhaul_scalars, solve_with_caps, Method, RunRecord, SolverOpts};
use crate::det_equiv::{run_pipeline, Targets, EquivOpts};
use crate::linalg;
use crate::rng::{self, stream};
use crate::scenario::{one_ring_correlation, scenario_from_positions, ChannelSet, Correlation, CorrelationSet, NetworkConfig, Scenario};
use crate::{Error, Result, C64};

pub const GROUPS_PER_BS: usize = 3;
pub const GROUP_SPREAD: f64 = PI / 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupMode {
    /// Two cells, one-ring group correlations with disjoint angular supports.
    Geometric,
    /// Synthetic correlations supported on disjoint coordinate blocks, so the
    /// eigenspaces are exactly orthogonal at any N.
    BlockOrthogonal,
}

/// Nonzero eigenvalues Ξ and eigenvectors U of a group correlation.
#[derive(Clone, Debug)]
pub struct GroupEigen {
    pub xi: Vec<f64>,
    pub u: DMatrix<C64>,
}

#[derive(Clone, Debug)]
pub struct GroupScenario {
    pub scenario: Scenario,
    pub n_ant: usize,
    pub n_groups: usize,
    /// g_b(k), `[b][k]`.
    pub group_of: Vec<Vec<usize>>,
    /// Θ_{b,g} with unit mean diagonal, `[b][g]`.
    pub group_corr: Vec<Vec<Correlation>>,
    pub eigen: Vec<Vec<GroupEigen>>,
}

impl GroupScenario {
    pub fn n_bs(&self) -> usize {
        self.group_corr.len()
    }

    /// Per-UE correlations a²_{b,k}Θ_{b,g_b(k)} for the generic pipeline.
    pub fn expanded(&self) -> Result<CorrelationSet> {
        let s = &self.scenario;
        CorrelationSet::from_fn(self.n_bs(), s.n_ue(), |b, k| self.group_corr[b][self.group_of[b][k]].scale(s.pathloss[b][k]))
    }

    fn idx(&self, b: usize, g: usize) -> usize {
        b * self.n_groups + g
    }
}

fn eigen_of(theta: &Correlation) -> GroupEigen {
    let eig = theta.to_dense().symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 1e-13 * top).collect();
    GroupEigen { xi: keep.iter().map(|&i| eig.eigenvalues[i]).collect(), u: eig.eigenvectors.select_columns(&keep) }
}

/// Complex exponential correlation ρ^{|p−q|}e^{iθ(p−q)} on block `g` of
/// `groups` equal coordinate blocks, scaled to unit mean diagonal.
fn block_correlation(n: usize, groups: usize, g: usize, rho: f64, theta: f64) -> Correlation {
    let r = n / groups;
    let mut m = DMatrix::zeros(n, n);
    for p in 0..r {
        for q in 0..r {
            let d = p as f64 - q as f64;
            m[(g * r + p, g * r + q)] = C64::from_polar(groups as f64 * rho.powf(d.abs()), theta * d);
        }
    }
    Correlation::Dense(m)
}

/// Two-cell group layout. BS 0 sits at the origin and BS 1 at distance ISD
/// along the array broadside. Each BS has three groups of π/6 spread centred
/// at bearings ±π/3 off and on the line toward the other BS; own UEs are
/// divided among them in turn and dropped inside their group's sector, and
/// the other cell's UEs belong to the group facing that cell.
pub fn build_group_scenario(config: &NetworkConfig, seed: u64, mode: GroupMode) -> Result<GroupScenario> {
    let config = NetworkConfig { cells: 2, ..config.clone() };
    config.validate()?;
    let (n, g_count, kb) = (config.antennas, GROUPS_PER_BS, config.ues_per_cell);
    if mode == GroupMode::BlockOrthogonal && n % g_count != 0 {
        return Err(Error::config(format!("antennas ({n}) must be divisible by the group count ({g_count})")));
    }
    let isd = config.inter_site_distance;
    let bs = vec![[0.0, 0.0], [0.0, isd]];
    let facing = [PI / 2.0, -PI / 2.0];
    let centre = |b: usize, g: usize| facing[b] + [-PI / 3.0, PI / 3.0, 0.0][g];
    let (r_min, r_max) = (config.min_ue_distance, isd / 2.0);
    if r_min >= r_max {
        return Err(Error::config("min_ue_distance leaves no room for group sectors"));
    }
    let mut rng = stream(seed, rng::GROUPS, 0, 0);
    let mut ue = Vec::with_capacity(2 * kb);
    let mut serving = Vec::with_capacity(2 * kb);
    let mut own_group = Vec::with_capacity(2 * kb);
    for b in 0..2 {
        for i in 0..kb {
            let g = i % g_count;
            let r = (r_min * r_min + (r_max * r_max - r_min * r_min) * rng.gen::<f64>()).sqrt();
            let a = centre(b, g) + GROUP_SPREAD * (rng.gen::<f64>() - 0.5);
            ue.push([bs[b][0] + r * a.cos(), bs[b][1] + r * a.sin()]);
            serving.push(b);
            own_group.push(g);
        }
    }
    let group_of: Vec<Vec<usize>> = (0..2)
        .map(|b| {
            (0..2 * kb)
                .map(|k| match (serving[k] == b, mode) {
                    (true, _) => own_group[k],
                    (false, GroupMode::Geometric) => 2,
                    (false, GroupMode::BlockOrthogonal) => k % g_count,
                })
                .collect()
        })
        .collect();
    let mut scenario = scenario_from_positions(&config, bs, ue, serving);
    for b in 0..2 {
        for k in 0..2 * kb {
            scenario.spread[b][k] = GROUP_SPREAD;
        }
    }
    let mut group_corr = Vec::with_capacity(2);
    for b in 0..2 {
        let mut row = Vec::with_capacity(g_count);
        for g in 0..g_count {
            row.push(match mode {
                GroupMode::Geometric => {
                    let c = centre(b, g);
                    one_ring_correlation(1.0, c - GROUP_SPREAD / 2.0, c + GROUP_SPREAD / 2.0, n, config.spacing_ratio)?
                }
                GroupMode::BlockOrthogonal => {
                    let mut r = stream(seed, rng::GROUPS, b + 1, g + 1);
                    block_correlation(n, g_count, g, 0.2 + 0.6 * r.gen::<f64>(), 2.0 * PI * r.gen::<f64>())
                }
            });
        }
        group_corr.push(row);
    }
    let eigen = group_corr.iter().map(|row| row.iter().map(eigen_of).collect()).collect();
    Ok(GroupScenario { scenario, n_ant: n, n_groups: g_count, group_of, group_corr, eigen })
}

/// η̄ in both forms; they agree at convergence.
#[derive(Clone, Debug)]
pub struct EtaSolution {
    /// Eigenvalue form, `[b][g]`.
    pub eta: Vec<Vec<f64>>,
    /// (1/N)Tr(Θ_{b,g}T_{b,g}) at the converged point, `[b][g]`.
    pub eta_trace: Vec<Vec<f64>>,
    /// S_{b,g} = Σ_{j∈G_g} γ_j/(a²_{b_j,j}η̄_{b_j,g_j}/a²_{b,j} + γ_jη̄_{b,g}).
    pub load: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn own_eta(gs: &GroupScenario, eta: &[Vec<f64>], j: usize) -> f64 {
    let bj = gs.scenario.serving[j];
    eta[bj][gs.group_of[bj][j]]
}

fn group_loads(gs: &GroupScenario, eta: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = &gs.scenario;
    let mut load = vec![vec![0.0; gs.n_groups]; gs.n_bs()];
    for (b, lb) in load.iter_mut().enumerate() {
        for j in 0..s.n_ue() {
            let gam = s.gamma[j];
            if gam == 0.0 {
                continue;
            }
            let g = gs.group_of[b][j];
            let own = s.pathloss[s.serving[j]][j] * own_eta(gs, eta, j) / s.pathloss[b][j];
            lb[g] += gam / (own + gam * eta[b][g]);
        }
    }
    load
}

/// η̄_{b,g} = Σ_i (S_{b,g} + Nμ_b/ξ_i)⁻¹ by damped Picard iteration.
pub fn solve_eta(gs: &GroupScenario, opts: &EquivOpts) -> Result<EtaSolution> {
    let s = &gs.scenario;
    let nf = gs.n_ant as f64;
    let eig = &gs.eigen;
    let mut eta: Vec<Vec<f64>> = (0..gs.n_bs())
        .map(|b| (0..gs.n_groups).map(|g| eig[b][g].xi.iter().sum::<f64>() / (nf * s.mu[b])).collect())
        .collect();
    let mut converged = false;
    let mut iterations = opts.max_iter;
    for it in 1..=opts.max_iter {
        let load = group_loads(gs, &eta);
        let mut change = 0.0f64;
        for b in 0..gs.n_bs() {
            for g in 0..gs.n_groups {
                let new: f64 = eig[b][g].xi.iter().map(|&x| x / (x * load[b][g] + nf * s.mu[b])).sum();
                let old = eta[b][g];
                change = change.max((new - old).abs() / new.abs().max(1e-300));
                eta[b][g] = ((1.0 - opts.damping) * old + opts.damping * new).max(1e-30);
            }
        }
        if change < opts.tol {
            converged = true;
            iterations = it;
            break;
        }
    }
    let load = group_loads(gs, &eta);
    let mut eta_trace = vec![vec![0.0; gs.n_groups]; gs.n_bs()];
    for b in 0..gs.n_bs() {
        for g in 0..gs.n_groups {
            eta_trace[b][g] = trace_form(&gs.group_corr[b][g], load[b][g], s.mu[b])?;
        }
    }
    let lambda = (0..s.n_ue()).map(|j| s.gamma[j] / (s.pathloss[s.serving[j]][j] * own_eta(gs, &eta, j))).collect();
    Ok(EtaSolution { eta, eta_trace, load, lambda, iterations, converged })
}

/// (1/N)Tr(Θ T) with T = ((1/N)·load·Θ + μI)⁻¹, from the matrix itself.
fn trace_form(theta: &Correlation, load: f64, mu: f64) -> Result<f64> {
    let n = theta.dim();
    let nf = n as f64;
    match theta {
        Correlation::Toeplitz { col, .. } => {
            let mut c: Vec<C64> = col.iter().map(|z| z * (load / nf)).collect();
            c[0] += C64::new(mu, 0.0);
            let t = linalg::toeplitz_inverse(&c)?;
            let sums = linalg::diagonal_sums(&t);
            let sym = theta.symbol().expect("Toeplitz symbol");
            Ok(sym.iter().zip(&sums).map(|(a, b)| a * b).sum::<C64>().re / nf)
        }
        Correlation::Dense(m) => {
            let a = m * C64::new(load / nf, 0.0) + DMatrix::<C64>::identity(n, n) * C64::new(mu, 0.0);
            Ok(linalg::trace_product(m, &linalg::hpd_inverse(&a)?).re / nf)
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroupCoefficients {
    /// φ_{b,k}, `[b][k]`.
    pub phi: Vec<Vec<f64>>,
    /// ζ̄'_{b,g}.
    pub zeta_prime: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    /// Tr((Θ_{b,g}T_{b,g})²).
    pub tau: Vec<Vec<f64>>,
    /// Tr(Θ_{b,g}T_{b,g}²).
    pub nu: Vec<Vec<f64>>,
    pub feasible: bool,
}

pub fn group_coefficients(gs: &GroupScenario, eta: &EtaSolution) -> GroupCoefficients {
    let s = &gs.scenario;
    let (n_bs, ng) = (gs.n_bs(), gs.n_groups);
    let nf = gs.n_ant as f64;
    let mut tau = vec![vec![0.0; ng]; n_bs];
    let mut nu = vec![vec![0.0; ng]; n_bs];
    let mut rho = vec![vec![0.0; ng]; n_bs];
    let mut zeta_prime = vec![vec![0.0; ng]; n_bs];
    let mut feasible = true;
    for b in 0..n_bs {
        for g in 0..ng {
            for &x in &gs.eigen[b][g].xi {
                let t = 1.0 / (eta.load[b][g] * x / nf + s.mu[b]);
                tau[b][g] += (x * t) * (x * t);
                nu[b][g] += x * t * t;
            }
        }
        for j in 0..s.n_ue() {
            if s.gamma[j] == 0.0 {
                continue;
            }
            let g = gs.group_of[b][j];
            let own = s.pathloss[s.serving[j]][j] * own_eta(gs, &eta.eta, j) / (s.gamma[j] * s.pathloss[b][j]);
            let d = own + eta.eta[b][g];
            rho[b][g] += 1.0 / (nf * nf * d * d);
        }
        for g in 0..ng {
            let den = 1.0 - rho[b][g] * tau[b][g];
            if !(den > 0.0) {
                feasible = false;
            }
            zeta_prime[b][g] = nu[b][g] / nf / den;
        }
    }
    let phi = (0..n_bs)
        .map(|b| {
            (0..s.n_ue())
                .map(|k| {
                    let g = gs.group_of[b][k];
                    let ratio = s.pathloss[b][k] * eta.eta[b][g] / (s.pathloss[s.serving[k]][k] * own_eta(gs, &eta.eta, k));
                    let den = 1.0 + s.gamma[k] * ratio;
                    tau[b][g] / nu[b][g] / (den * den)
                })
                .collect()
        })
        .collect();
    GroupCoefficients { phi, zeta_prime, rho, tau, nu, feasible }
}

#[derive(Clone, Debug)]
pub struct GroupPowers {
    /// P̄_{b,g}, watts, `[b][g]`.
    pub p_bar: Vec<Vec<f64>>,
    /// Deterministic per-UE powers, watts.
    pub ue_power: Vec<f64>,
    /// System matrix and right-hand side, for residual checks.
    pub system: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub feasible: bool,
}

/// Group powers from the SINR conditions of all UEs. Each UE's condition
/// reads p_k·a²_{b_k,k}D_k/γ_k = σ² + Σ_{b'} a²_{b',k}φ_{b',k}P̄_{b',g_{b'}(k)} with
/// D_k = Nη̄²/ζ̄' + γ_kφ_{b_k,k}; the second term of D_k removes the UE's own
/// power from its group total. Summing over each group yields (I − L)P̄ = u.
pub fn solve_group_powers(gs: &GroupScenario, eta: &EtaSolution, co: &GroupCoefficients) -> GroupPowers {
    let s = &gs.scenario;
    let (n_bs, ng) = (gs.n_bs(), gs.n_groups);
    let m = n_bs * ng;
    let nf = gs.n_ant as f64;
    let sigma2 = s.noise_power;
    let d_of = |k: usize| {
        let (b, g) = (s.serving[k], gs.group_of[s.serving[k]][k]);
        nf * eta.eta[b][g] * eta.eta[b][g] / co.zeta_prime[b][g] + s.gamma[k] * co.phi[b][k]
    };
    let mut lmat = DMatrix::<f64>::zeros(m, m);
    let mut u = DVector::<f64>::zeros(m);
    for k in 0..s.n_ue() {
        if s.gamma[k] == 0.0 {
            continue;
        }
        let bk = s.serving[k];
        let row = gs.idx(bk, gs.group_of[bk][k]);
        let scale = s.gamma[k] / (s.pathloss[bk][k] * d_of(k));
        u[row] += sigma2 * scale;
        for b in 0..n_bs {
            lmat[(row, gs.idx(b, gs.group_of[b][k]))] += scale * co.phi[b][k] * s.pathloss[b][k];
        }
    }
    let system = DMatrix::<f64>::identity(m, m) - lmat;
    let sol = system.clone().lu().solve(&u);
    let mut feasible = co.feasible && sol.is_some();
    let p = sol.unwrap_or_else(|| DVector::zeros(m));
    for r in 0..m {
        if !(p[r].is_finite() && p[r] >= 0.0) || (u[r] > 0.0 && !(p[r] > 0.0)) {
            feasible = false;
        }
    }
    let p_bar: Vec<Vec<f64>> = (0..n_bs).map(|b| (0..ng).map(|g| p[gs.idx(b, g)]).collect()).collect();
    let ue_power = (0..s.n_ue())
        .map(|k| {
            if s.gamma[k] == 0.0 {
                return 0.0;
            }
            let interference: f64 =
                (0..n_bs).map(|b| s.pathloss[b][k] * co.phi[b][k] * p_bar[b][gs.group_of[b][k]]).sum();
            s.gamma[k] * (sigma2 + interference) / (s.pathloss[s.serving[k]][k] * d_of(k))
        })
        .collect();
    GroupPowers { p_bar, ue_power, system, rhs: u, feasible }
}

/// ε̄_{b,k} = φ_{b,k}a²_{b,k}P̄_{b,g_b(k)} for k not served by b.
pub fn group_ici(gs: &GroupScenario, co: &GroupCoefficients, p_bar: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = &gs.scenario;
    (0..gs.n_bs())
        .map(|b| {
            (0..s.n_ue())
                .map(|k| if s.serving[k] == b { 0.0 } else { co.phi[b][k] * s.pathloss[b][k] * p_bar[b][gs.group_of[b][k]] })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GroupSolution {
    pub eta: EtaSolution,
    pub coefficients: GroupCoefficients,
    pub powers: GroupPowers,
    pub ici_bar: Vec<Vec<f64>>,
    pub feasible: bool,
}

pub fn solve_grouped(gs: &GroupScenario, opts: &EquivOpts) -> Result<GroupSolution> {
    let eta = solve_eta(gs, opts)?;
    let coefficients = group_coefficients(gs, &eta);
    let powers = solve_group_powers(gs, &eta, &coefficients);
    let ici_bar = group_ici(gs, &coefficients, &powers.p_bar);
    let feasible = eta.converged && powers.feasible;
    Ok(GroupSolution { eta, coefficients, powers, ici_bar, feasible })
}

/// Largest relative deviations between the grouped closed forms and the
/// generic pipeline run on the expanded per-UE correlations.
#[derive(Clone, Debug)]
pub struct GroupingReport {
    pub eta: f64,
    pub lambda: f64,
    pub zeta: f64,
    pub group_power: f64,
    pub ici: f64,
    pub both_feasible: bool,
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn cross_validate_grouping(gs: &GroupScenario, opts: &EquivOpts) -> Result<GroupingReport> {
    let s = &gs.scenario;
    let grouped = solve_grouped(gs, opts)?;
    let corr = gs.expanded()?;
    let tg = Targets { serving: &s.serving, gamma: &s.gamma, mu: &s.mu, noise_power: s.noise_power };
    let generic = run_pipeline(&corr, tg, opts)?;
    let both_feasible = grouped.feasible && generic.feasible;
    let mut report = GroupingReport { eta: 0.0, lambda: 0.0, zeta: 0.0, group_power: 0.0, ici: 0.0, both_feasible };
    for b in 0..gs.n_bs() {
        for k in 0..s.n_ue() {
            let e = grouped.eta.eta[b][gs.group_of[b][k]];
            report.eta = report.eta.max(rel(e, generic.m_bar[b][k] / s.pathloss[b][k]));
            let z = grouped.coefficients.zeta_prime[b][gs.group_of[b][k]] * s.pathloss[b][k];
            report.zeta = report.zeta.max(rel(z, generic.derivs[b].zeta_prime[k]));
        }
    }
    for k in 0..s.n_ue() {
        report.lambda = report.lambda.max(rel(grouped.eta.lambda[k], generic.lambda_bar[k]));
    }
    if !both_feasible {
        return Ok(report);
    }
    for b in 0..gs.n_bs() {
        for g in 0..gs.n_groups {
            let agg: f64 = s
                .served(b)
                .iter()
                .filter(|&&j| gs.group_of[b][j] == g)
                .map(|&j| generic.ue_power(j, &s.serving))
                .sum();
            report.group_power = report.group_power.max(rel(grouped.powers.p_bar[b][g], agg));
        }
        for k in 0..s.n_ue() {
            if s.serving[k] != b {
                report.ici = report.ici.max(rel(grouped.ici_bar[b][k], generic.ici_bar[b][k]));
            }
        }
    }
    Ok(report)
}

/// Decentralized beamforming with caps from the grouped closed forms.
pub fn run_grouped(drop: u64, gs: &GroupScenario, channels: &ChannelSet, opts: &SolverOpts) -> Result<RunRecord> {
    let s = &gs.scenario;
    let backhaul = backhaul_scalars(Method::Grouped, gs.n_bs(), s.n_ue(), gs.n_ant, gs.n_groups);
    let sol = solve_grouped(gs, &opts.equiv)?;
    if !sol.feasible {
        return Ok(RunRecord::infeasible(Method::Grouped, drop, backhaul, sol.eta.iterations));
    }
    solve_with_caps(Method::Grouped, drop, s, channels, sol.ici_bar, backhaul, &opts.local)
}
