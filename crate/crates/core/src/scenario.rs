//! Network geometry, one-ring spatial correlation and channel sampling.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, gauss_legendre};
use crate::rng::{self, stream};
use crate::{Error, Result, C64};

/// Physical and layout parameters of a multicell network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub cells: usize,
    pub ues_per_cell: usize,
    pub antennas: usize,
    /// Per-BS power weights; a single entry is broadcast to all cells.
    pub mu: Vec<f64>,
    /// Watts.
    pub noise_power: f64,
    pub inter_site_distance: f64,
    pub d0: f64,
    pub pathloss_exponent: f64,
    /// Antenna spacing in wavelengths.
    pub spacing_ratio: f64,
    pub served_spread: f64,
    pub interferer_spread: f64,
    /// bits/s/Hz per UE.
    pub target_rate: f64,
    pub min_ue_distance: f64,
    pub base_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            cells: 7,
            ues_per_cell: 4,
            antennas: 56,
            mu: vec![1.0],
            noise_power: dbm_to_watts(-104.0),
            inter_site_distance: 1000.0,
            d0: 1.0,
            pathloss_exponent: 3.0,
            spacing_ratio: 0.5,
            served_spread: PI / 2.0,
            interferer_spread: PI / 6.0,
            target_rate: 1.0,
            min_ue_distance: 35.0,
            base_seed: 1,
        }
    }
}

impl NetworkConfig {
    pub fn total_ues(&self) -> usize {
        self.cells * self.ues_per_cell
    }

    pub fn mu_of(&self, b: usize) -> f64 {
        if self.mu.len() == 1 { self.mu[0] } else { self.mu[b] }
    }

    pub fn gamma(&self) -> f64 {
        self.target_rate.exp2() - 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m));
        if self.cells == 0 || self.ues_per_cell == 0 || self.antennas == 0 {
            return bad("cells, ues_per_cell and antennas must be at least 1");
        }
        if self.mu.len() != 1 && self.mu.len() != self.cells {
            return bad("mu needs one entry or one per cell");
        }
        if self.mu.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return bad("mu must be positive");
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return bad("noise power must be positive");
        }
        for (name, s) in [("served_spread", self.served_spread), ("interferer_spread", self.interferer_spread)] {
            if !(s > 0.0 && s <= 2.0 * PI + 1e-12) {
                return bad(&format!("{name} must lie in (0, 2π]"));
            }
        }
        if !(self.d0 > 0.0) || !(self.inter_site_distance > 0.0) {
            return bad("distances must be positive");
        }
        if !(self.min_ue_distance >= self.d0) {
            return bad("min_ue_distance must be at least d0");
        }
        if !(self.pathloss_exponent > 0.0) || !(self.spacing_ratio > 0.0) {
            return bad("pathloss exponent and spacing ratio must be positive");
        }
        if !(self.target_rate > 0.0 && self.target_rate.is_finite()) {
            return bad("target rate must be positive");
        }
        if self.cells > hex_capacity() {
            return bad(&format!("at most {} cells supported", hex_capacity()));
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

/// One network realization: positions, association and large-scale gains.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub bs_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    pub serving: Vec<usize>,
    /// a²_{b,k}, indexed `[b][k]`.
    pub pathloss: Vec<Vec<f64>>,
    /// Bearing BS b → UE k, radians.
    pub aoa: Vec<Vec<f64>>,
    pub spread: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub mu: Vec<f64>,
    pub noise_power: f64,
    members: Vec<Vec<usize>>,
}

impl Scenario {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bs_positions: Vec<[f64; 2]>,
        ue_positions: Vec<[f64; 2]>,
        serving: Vec<usize>,
        pathloss: Vec<Vec<f64>>,
        aoa: Vec<Vec<f64>>,
        spread: Vec<Vec<f64>>,
        gamma: Vec<f64>,
        mu: Vec<f64>,
        noise_power: f64,
    ) -> Self {
        let n_bs = pathloss.len();
        let mut members = vec![Vec::new(); n_bs];
        for (k, &b) in serving.iter().enumerate() {
            members[b].push(k);
        }
        Scenario { bs_positions, ue_positions, serving, pathloss, aoa, spread, gamma, mu, noise_power, members }
    }

    pub fn n_bs(&self) -> usize {
        self.pathloss.len()
    }

    pub fn n_ue(&self) -> usize {
        self.serving.len()
    }

    pub fn served(&self, b: usize) -> &[usize] {
        &self.members[b]
    }

    pub fn with_gamma(&self, gamma: Vec<f64>) -> Self {
        Scenario { gamma, ..self.clone() }
    }
}

fn hex_lattice() -> &'static Vec<[f64; 2]> {
    static SITES: OnceLock<Vec<[f64; 2]>> = OnceLock::new();
    SITES.get_or_init(|| {
        let mut pts = Vec::new();
        for i in -4i32..=4 {
            for j in -4i32..=4 {
                let x = i as f64 + 0.5 * j as f64;
                let y = j as f64 * 3f64.sqrt() / 2.0;
                pts.push([x, y]);
            }
        }
        let key = |p: &[f64; 2]| {
            let r = (p[0].hypot(p[1]) * 1e6).round() as i64;
            let a = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
            (r, (a * 1e6).round() as i64)
        };
        pts.sort_by_key(key);
        pts.retain(|p| p[0].hypot(p[1]) <= 3.0 + 1e-9);
        pts
    })
}

fn hex_capacity() -> usize {
    hex_lattice().len()
}

/// Hexagonal grid of `cells` sites, the first at the origin followed by
/// rings sorted by distance then angle.
pub fn hex_sites(cells: usize, isd: f64) -> Vec<[f64; 2]> {
    hex_lattice().iter().take(cells).map(|p| [p[0] * isd, p[1] * isd]).collect()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Drops `ues_per_cell` UEs uniformly in a disc of radius ISD/√3 around each
/// BS, rejecting points too close to their BS or closer to another BS.
pub fn build_geometry(config: &NetworkConfig, drop_seed: u64) -> Result<Scenario> {
    config.validate()?;
    let bs = hex_sites(config.cells, config.inter_site_distance);
    let radius = config.inter_site_distance / 3f64.sqrt();
    let mut rng = stream(drop_seed, rng::GEOMETRY, 0, 0);
    let mut ue = Vec::with_capacity(config.total_ues());
    let mut serving = Vec::with_capacity(config.total_ues());
    for (b, &site) in bs.iter().enumerate() {
        for _ in 0..config.ues_per_cell {
            let mut attempts = 0;
            let pos = loop {
                attempts += 1;
                if attempts > 100_000 {
                    return Err(Error::Geometry(format!("could not place a UE in cell {b}")));
                }
                let r = radius * rng.gen::<f64>().sqrt();
                let a = 2.0 * PI * rng.gen::<f64>();
                let p = [site[0] + r * a.cos(), site[1] + r * a.sin()];
                if r < config.min_ue_distance {
                    continue;
                }
                if bs.iter().enumerate().any(|(o, &s)| o != b && dist(p, s) < r) {
                    continue;
                }
                break p;
            };
            ue.push(pos);
            serving.push(b);
        }
    }
    Ok(scenario_from_positions(config, bs, ue, serving))
}

/// Pathloss, bearings and spreads for given positions and association.
pub fn scenario_from_positions(
    config: &NetworkConfig,
    bs: Vec<[f64; 2]>,
    ue: Vec<[f64; 2]>,
    serving: Vec<usize>,
) -> Scenario {
    let n_bs = bs.len();
    let mut pathloss = vec![vec![0.0; ue.len()]; n_bs];
    let mut aoa = vec![vec![0.0; ue.len()]; n_bs];
    let mut spread = vec![vec![0.0; ue.len()]; n_bs];
    for b in 0..n_bs {
        for (k, &p) in ue.iter().enumerate() {
            let d = dist(bs[b], p).max(config.d0);
            pathloss[b][k] = (config.d0 / d).powf(config.pathloss_exponent);
            aoa[b][k] = (p[1] - bs[b][1]).atan2(p[0] - bs[b][0]);
            spread[b][k] = if serving[k] == b { config.served_spread } else { config.interferer_spread };
        }
    }
    let gamma = vec![config.gamma(); ue.len()];
    let mu = (0..n_bs).map(|b| config.mu_of(b)).collect();
    Scenario::new(bs, ue, serving, pathloss, aoa, spread, gamma, mu, config.noise_power)
}

/// Quadrature representation of a one-ring correlation: Θ = Σ_q w_q a(u_q)a(u_q)^H
/// with steering vectors a(u)_j = exp(i·2π·s·j·u).
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// exp(i·2π·s·u_q) per node.
    pub steps: Vec<C64>,
    /// sqrt(w_q) per node, pathloss included.
    pub amps: Vec<f64>,
}

/// Spatial correlation of one (BS, UE) pair.
#[derive(Clone, Debug, PartialEq)]
pub enum Correlation {
    /// Hermitian Toeplitz matrix by first column. `spectrum` is present for
    /// one-ring matrices and drives channel sampling.
    Toeplitz { col: Vec<C64>, spectrum: Option<Spectrum> },
    Dense(DMatrix<C64>),
}

impl Correlation {
    pub fn scaled_identity(n: usize, a2: f64) -> Self {
        let mut col = vec![C64::new(0.0, 0.0); n];
        col[0] = C64::new(a2, 0.0);
        Correlation::Toeplitz { col, spectrum: None }
    }

    pub fn dim(&self) -> usize {
        match self {
            Correlation::Toeplitz { col, .. } => col.len(),
            Correlation::Dense(m) => m.nrows(),
        }
    }

    /// Average diagonal entry (the pathloss for correlations built here).
    pub fn gain(&self) -> f64 {
        self.trace() / self.dim() as f64
    }

    pub fn trace(&self) -> f64 {
        match self {
            Correlation::Toeplitz { col, .. } => col[0].re * col.len() as f64,
            Correlation::Dense(m) => m.diagonal().iter().map(|z| z.re).sum(),
        }
    }

    /// Some(a²) when the matrix is a²·I.
    pub fn as_scaled_identity(&self) -> Option<f64> {
        match self {
            Correlation::Toeplitz { col, .. } if col[1..].iter().all(|z| *z == C64::new(0.0, 0.0)) => Some(col[0].re),
            _ => None,
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match self {
            Correlation::Toeplitz { col, .. } => linalg::toeplitz_dense(col),
            Correlation::Dense(m) => m.clone(),
        }
    }

    /// θ(d) for d ∈ (−n, n) stored at offset n − 1, for Toeplitz matrices.
    pub fn symbol(&self) -> Option<Vec<C64>> {
        match self {
            Correlation::Toeplitz { col, .. } => {
                let n = col.len();
                Some((0..2 * n - 1).map(|i| if i >= n - 1 { col[i + 1 - n] } else { col[n - 1 - i].conj() }).collect())
            }
            Correlation::Dense(_) => None,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        match self {
            Correlation::Toeplitz { col, spectrum } => Correlation::Toeplitz {
                col: col.iter().map(|z| z * s).collect(),
                spectrum: spectrum.as_ref().map(|sp| Spectrum {
                    steps: sp.steps.clone(),
                    amps: sp.amps.iter().map(|a| a * s.sqrt()).collect(),
                }),
            },
            Correlation::Dense(m) => Correlation::Dense(m * C64::new(s, 0.0)),
        }
    }

    /// Factor F with F F^H = Θ, used when no quadrature spectrum is stored.
    fn dense_factor(&self) -> Result<DMatrix<C64>> {
        linalg::hermitian_sqrt(&self.to_dense())
    }
}

fn quad_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(32))
}

/// Phase budget per 32-point panel, radians.
const PANEL_PHASE: f64 = 24.0;

fn max_abs_sin(lo: f64, hi: f64) -> f64 {
    let k = ((lo - PI / 2.0) / PI).ceil();
    if PI / 2.0 + k * PI <= hi {
        1.0
    } else {
        lo.sin().abs().max(hi.sin().abs())
    }
}

/// Equal-width panels whose phase excursion stays below `PANEL_PHASE`.
fn panel_count(lo: f64, hi: f64, omega: f64) -> usize {
    let width = hi - lo;
    let by_phase = (omega * width * max_abs_sin(lo, hi) / PANEL_PHASE).ceil();
    let by_width = (width / (PI / 4.0)).ceil();
    by_phase.max(by_width).max(1.0) as usize
}

/// acc[j] += Σ_q c_q·e_q^j for j < acc.len(), four independent chains at a time.
pub(crate) fn accumulate_powers(acc: &mut [C64], coef: &[C64], steps: &[C64]) {
    let mut q = 0;
    while q + 4 <= coef.len() {
        let mut p = [coef[q], coef[q + 1], coef[q + 2], coef[q + 3]];
        let e = [steps[q], steps[q + 1], steps[q + 2], steps[q + 3]];
        for a in acc.iter_mut() {
            *a += (p[0] + p[1]) + (p[2] + p[3]);
            for i in 0..4 {
                p[i] *= e[i];
            }
        }
        q += 4;
    }
    for (&c, &e) in coef[q..].iter().zip(&steps[q..]) {
        let mut p = c;
        for a in acc.iter_mut() {
            *a += p;
            p *= e;
        }
    }
}

/// One-ring correlation of a uniform linear array:
/// [Θ]_{j,i} = a²/(φmax−φmin) ∫ exp(i·2π·s·(j−i)·cos φ) dφ.
///
/// The integral is a composite 32-point Gauss-Legendre rule on equal panels
/// whose phase excursion stays below 24 rad, so every lag is accurate to ~1e-15.
/// The rule also gives a PSD factorization used for sampling.
pub fn one_ring_correlation(a2: f64, phi_min: f64, phi_max: f64, n: usize, spacing_ratio: f64) -> Result<Correlation> {
    if !(phi_max > phi_min) {
        return Err(Error::Numeric("one-ring interval must satisfy phi_max > phi_min".into()));
    }
    if n == 0 {
        return Err(Error::Numeric("antenna count must be positive".into()));
    }
    let omega = 2.0 * PI * spacing_ratio * (n as f64 - 1.0);
    let count = panel_count(phi_min, phi_max, omega);
    let seg = (phi_max - phi_min) / count as f64;
    let segs = (0..count).map(|i| (phi_min + i as f64 * seg, phi_min + (i + 1) as f64 * seg));
    let (x, w) = quad_rule();
    let span = phi_max - phi_min;
    let mut steps = Vec::with_capacity(count * x.len());
    let mut weights = Vec::with_capacity(count * x.len());
    for (lo, hi) in segs {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (xi, wi) in x.iter().zip(w) {
            let phi = mid + half * xi;
            steps.push(C64::from_polar(1.0, 2.0 * PI * spacing_ratio * phi.cos()));
            weights.push(a2 * wi * half / span);
        }
    }
    let mut col = vec![C64::new(0.0, 0.0); n];
    let coef: Vec<C64> = weights.iter().map(|&w| C64::new(w, 0.0)).collect();
    accumulate_powers(&mut col, &coef, &steps);
    col[0] = C64::new(a2, 0.0);
    let amps = weights.iter().map(|w| w.sqrt()).collect();
    Ok(Correlation::Toeplitz { col, spectrum: Some(Spectrum { steps, amps }) })
}

/// Spatial correlation for every (BS, UE) pair.
#[derive(Clone, Debug)]
pub struct CorrelationSet {
    pub n_bs: usize,
    pub n_ue: usize,
    pub n_ant: usize,
    theta: Vec<Correlation>,
}

impl CorrelationSet {
    pub fn new(n_bs: usize, n_ue: usize, theta: Vec<Correlation>) -> Result<Self> {
        if theta.len() != n_bs * n_ue || theta.is_empty() {
            return Err(Error::Numeric("correlation count does not match n_bs × n_ue".into()));
        }
        let n_ant = theta[0].dim();
        if theta.iter().any(|t| t.dim() != n_ant) {
            return Err(Error::Numeric("correlations differ in dimension".into()));
        }
        Ok(CorrelationSet { n_bs, n_ue, n_ant, theta })
    }

    pub fn from_fn(n_bs: usize, n_ue: usize, mut f: impl FnMut(usize, usize) -> Correlation) -> Result<Self> {
        let mut theta = Vec::with_capacity(n_bs * n_ue);
        for b in 0..n_bs {
            for k in 0..n_ue {
                theta.push(f(b, k));
            }
        }
        Self::new(n_bs, n_ue, theta)
    }

    pub fn get(&self, b: usize, k: usize) -> &Correlation {
        &self.theta[b * self.n_ue + k]
    }

    /// Mean diagonal entry per pair, `[b][k]`.
    pub fn gains(&self) -> Vec<Vec<f64>> {
        (0..self.n_bs).map(|b| (0..self.n_ue).map(|k| self.get(b, k).gain()).collect()).collect()
    }
}

/// One-ring correlations for every (BS, UE) pair of a scenario.
pub fn build_correlations(scenario: &Scenario, config: &NetworkConfig) -> Result<CorrelationSet> {
    let (n_bs, n_ue) = (scenario.n_bs(), scenario.n_ue());
    let mut theta = Vec::with_capacity(n_bs * n_ue);
    for b in 0..n_bs {
        for k in 0..n_ue {
            let (phi, sp) = (scenario.aoa[b][k], scenario.spread[b][k]);
            theta.push(one_ring_correlation(
                scenario.pathloss[b][k],
                phi - sp / 2.0,
                phi + sp / 2.0,
                config.antennas,
                config.spacing_ratio,
            )?);
        }
    }
    CorrelationSet::new(n_bs, n_ue, theta)
}

/// Channel vectors h_{b,k}, stored per BS as the N×K matrix H_b, together with
/// the Gram matrices H_b^H H_b that the solvers reuse.
#[derive(Clone, Debug)]
pub struct ChannelSet {
    pub n_ant: usize,
    pub n_ue: usize,
    h: Vec<DMatrix<C64>>,
    gram: Vec<DMatrix<C64>>,
}

impl ChannelSet {
    pub fn from_matrices(h: Vec<DMatrix<C64>>) -> Self {
        let gram = h.iter().map(|m| m.ad_mul(m)).collect();
        let (n_ant, n_ue) = h.first().map(|m| m.shape()).unwrap_or((0, 0));
        ChannelSet { n_ant, n_ue, h, gram }
    }

    pub fn n_bs(&self) -> usize {
        self.h.len()
    }

    pub fn h(&self, b: usize, k: usize) -> DVectorView<'_, C64> {
        self.h[b].column(k)
    }

    pub fn bs(&self, b: usize) -> &DMatrix<C64> {
        &self.h[b]
    }

    pub fn gram(&self, b: usize) -> &DMatrix<C64> {
        &self.gram[b]
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().all(|m| m.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

fn complex_normal<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) / SQRT_2
}

/// Draws one channel h ~ CN(0, Θ) from the given stream.
pub fn sample_one<R: Rng>(theta: &Correlation, rng: &mut R) -> Result<DVector<C64>> {
    let n = theta.dim();
    if let Some(a2) = theta.as_scaled_identity() {
        let s = a2.max(0.0).sqrt();
        return Ok(DVector::from_fn(n, |_, _| complex_normal(rng) * s));
    }
    match theta {
        Correlation::Toeplitz { spectrum: Some(sp), .. } => {
            let coef: Vec<C64> = sp.amps.iter().map(|&a| complex_normal(rng) * a).collect();
            let mut h = DVector::zeros(n);
            accumulate_powers(h.as_mut_slice(), &coef, &sp.steps);
            Ok(h)
        }
        _ => {
            let f = theta.dense_factor()?;
            let z = DVector::from_fn(n, |_, _| complex_normal(rng));
            Ok(f * z)
        }
    }
}

/// Samples every h_{b,k} from its own stream keyed by (drop_seed, b, k).
pub fn sample_channels(correlations: &CorrelationSet, drop_seed: u64) -> Result<ChannelSet> {
    let (n_bs, n_ue, n) = (correlations.n_bs, correlations.n_ue, correlations.n_ant);
    let mut hs = Vec::with_capacity(n_bs);
    for b in 0..n_bs {
        let mut m = DMatrix::zeros(n, n_ue);
        for k in 0..n_ue {
            let mut rng = stream(drop_seed, rng::CHANNEL, b, k);
            let h = sample_one(correlations.get(b, k), &mut rng)?;
            m.set_column(k, &h);
        }
        hs.push(m);
    }
    let set = ChannelSet::from_matrices(hs);
    if !set.is_finite() {
        return Err(Error::Numeric("non-finite channel sample".into()));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const J0_PI: f64 = -0.30424217764409384;
    const J0_2PI: f64 = 0.22027690853993448;
    const J0_3PI: f64 = -0.18121145350892762;

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
    }

    #[test]
    fn matches_adaptive_simpson_oracle() {
        let n = 64;
        for &(lo, hi) in &[(0.3, 0.3 + PI / 6.0), (-PI / 4.0, PI / 4.0), (1.2, 1.2 + PI / 2.0), (-3.0, -2.5)] {
            let th = one_ring_correlation(2.0, lo, hi, n, 0.5).unwrap();
            let Correlation::Toeplitz { col, .. } = &th else { panic!() };
            for d in [1usize, 7, 33, 63] {
                let re = adaptive_simpson(&|p: f64| (PI * d as f64 * p.cos()).cos(), lo, hi, 1e-12) * 2.0 / (hi - lo);
                let im = adaptive_simpson(&|p: f64| (PI * d as f64 * p.cos()).sin(), lo, hi, 1e-12) * 2.0 / (hi - lo);
                assert!((col[d] - C64::new(re, im)).norm() < 1e-10, "d={d} {:?} vs {re},{im}", col[d]);
            }
        }
    }

    #[test]
    fn full_circle_is_bessel() {
        let th = one_ring_correlation(1.0, 0.0, 2.0 * PI, 8, 0.5).unwrap();
        let Correlation::Toeplitz { col, .. } = &th else { panic!() };
        assert_relative_eq!(col[1].re, J0_PI, epsilon = 1e-12);
        assert_relative_eq!(col[2].re, J0_2PI, epsilon = 1e-12);
        assert_relative_eq!(col[3].re, J0_3PI, epsilon = 1e-12);
        assert!(col[1].im.abs() < 1e-12);
    }

    #[test]
    fn narrow_spread_is_point_mass() {
        let phi0 = 0.7;
        let th = one_ring_correlation(3.0, phi0 - 1e-7, phi0 + 1e-7, 10, 0.5).unwrap();
        let Correlation::Toeplitz { col, .. } = &th else { panic!() };
        for d in 0..10 {
            let want = C64::from_polar(3.0, PI * d as f64 * phi0.cos());
            assert!((col[d] - want).norm() < 1e-9);
        }
    }

    #[test]
    fn diagonal_and_trace_equal_pathloss() {
        let th = one_ring_correlation(8e-9, 0.1, 0.1 + PI / 2.0, 40, 0.5).unwrap();
        let d = th.to_dense();
        for i in 0..40 {
            assert_relative_eq!(d[(i, i)].re, 8e-9, max_relative = 1e-12);
        }
        assert_relative_eq!(th.trace(), 40.0 * 8e-9, max_relative = 1e-12);
        let (lo, hi) = linalg::eigen_range(&d);
        assert!(lo >= -1e-10 * hi);
    }

    #[test]
    fn pathloss_at_500m() {
        let cfg = NetworkConfig::default();
        let s = scenario_from_positions(&cfg, vec![[0.0, 0.0]], vec![[500.0, 0.0]], vec![0]);
        assert_relative_eq!(s.pathloss[0][0], 8e-9, max_relative = 1e-12);
        assert_eq!(s.gamma[0], 1.0);
    }

    #[test]
    fn layout_and_drop_rules() {
        let cfg = NetworkConfig { cells: 7, ues_per_cell: 10, ..Default::default() };
        let s = build_geometry(&cfg, 5).unwrap();
        assert_eq!(s.bs_positions.len(), 7);
        for b in 1..7 {
            assert_relative_eq!(dist(s.bs_positions[0], s.bs_positions[b]), 1000.0, max_relative = 1e-12);
        }
        for (k, &p) in s.ue_positions.iter().enumerate() {
            let own = dist(p, s.bs_positions[s.serving[k]]);
            assert!(own >= 35.0 && own <= 1000.0 / 3f64.sqrt());
            for b in 0..7 {
                assert!(dist(p, s.bs_positions[b]) >= own);
            }
        }
        for b in 0..7 {
            assert_eq!(s.served(b).len(), 10);
        }
        let two = hex_sites(2, 1000.0);
        assert_eq!(two, vec![[0.0, 0.0], [1000.0, 0.0]]);
    }

    #[test]
    fn reproducible_per_seed() {
        let cfg = NetworkConfig { cells: 2, ues_per_cell: 3, antennas: 8, ..Default::default() };
        let s1 = build_geometry(&cfg, 9).unwrap();
        let s2 = build_geometry(&cfg, 9).unwrap();
        assert_eq!(s1.ue_positions, s2.ue_positions);
        let c = build_correlations(&s1, &cfg).unwrap();
        let h1 = sample_channels(&c, 9).unwrap();
        let h2 = sample_channels(&c, 9).unwrap();
        assert_eq!(h1.bs(1), h2.bs(1));
        let h3 = sample_channels(&c, 10).unwrap();
        assert_ne!(h1.bs(1), h3.bs(1));
    }

    #[test]
    fn white_channel_variance() {
        let th = Correlation::scaled_identity(4, 2.5);
        let mut rng = stream(1, 99, 0, 0);
        let mut acc = 0.0;
        let m = 10_000;
        for _ in 0..m {
            acc += sample_one(&th, &mut rng).unwrap().norm_squared();
        }
        assert_relative_eq!(acc / (4 * m) as f64, 2.5, max_relative = 0.05);
    }

    #[test]
    fn rank_one_samples_stay_on_the_eigenvector() {
        let v = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.5, 0.5)]);
        let th = Correlation::Dense(&v * v.adjoint());
        let mut rng = stream(2, 99, 0, 0);
        for _ in 0..20 {
            let h = sample_one(&th, &mut rng).unwrap();
            let c = v.dotc(&h) / v.norm_squared();
            assert!((h - &v * c).norm() < 1e-10);
        }
    }

    #[test]
    fn empirical_covariance_converges() {
        let n = 4;
        for th in [
            one_ring_correlation(1.0, 0.2, 0.2 + PI / 2.0, n, 0.5).unwrap(),
            Correlation::Dense(one_ring_correlation(1.0, -0.4, 0.3, n, 0.5).unwrap().to_dense()),
        ] {
            let target = th.to_dense();
            let mut rng = stream(3, 99, 0, 0);
            let m = 100_000;
            let mut acc = DMatrix::<C64>::zeros(n, n);
            for _ in 0..m {
                let h = sample_one(&th, &mut rng).unwrap();
                acc += &h * h.adjoint();
            }
            let err = (acc / C64::new(m as f64, 0.0) - &target).norm() / target.norm();
            assert!(err < 5.0 / (m as f64).sqrt(), "err {err}");
        }
    }
}
