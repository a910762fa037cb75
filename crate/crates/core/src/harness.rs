//! Seeded Monte Carlo experiments: configuration files, per-drop records,
//! summaries and plot data, validation checks and backhaul tables.
//!
//! # Configuration format
//!
//! One `key = value` pair per line; `#` starts a comment. Every key is
//! optional and unknown keys are rejected.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `cells` | 7 | number of cells (hexagonal layout, at most 19) |
//! | `ues_per_cell` | 4 | UEs per cell |
//! | `antennas` | 56 | antennas per BS |
//! | `mu` | 1 | per-BS power weights, one value or one per cell |
//! | `noise_dbm` | -104 | total noise power |
//! | `inter_site_distance` | 1000 | metres |
//! | `d0` | 1 | pathloss reference distance, metres |
//! | `pathloss_exponent` | 3 | |
//! | `spacing_ratio` | 0.5 | antenna spacing in wavelengths |
//! | `served_spread` | pi/2 | angular spread toward the serving BS, radians |
//! | `interferer_spread` | pi/6 | angular spread toward other BSs, radians |
//! | `target_rate` | 1 | bits/s/Hz for every UE |
//! | `min_ue_distance` | 35 | metres |
//! | `seed` | 1 | drop t uses seed + t |
//! | `drops` | 500 | Monte Carlo drops, at least 1 |
//! | `methods` | all but `grouped` | comma list of method tags |
//! | `layout` | `hex` | `hex`, `groups` or `groups_block` |
//! | `sweep_ues` | 4,6,8,10 | UEs per cell visited by a sweep |
//! | `antenna_ratio` | 2 | antennas per UE in a sweep |
//! | `emit` | csv,summary,cdf | outputs written by `run` |
//!
//! Angles accept `pi`, `pi/D` and `Xpi` besides plain numbers.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;

use crate::decentralized::{
    backhaul_scalars, meets_targets, run_alg1, run_alg2, run_asymptotic, run_centralized, run_iczf, run_zf, solve_with_caps, Method,
    RunRecord, SolverOpts,
};
use crate::det_equiv::{run_pipeline, SurrogateMode, Targets, EquivOpts};
use crate::duality::solve_centralized;
use crate::grouping::{build_group_scenario, cross_validate_grouping, group_coefficients, run_grouped, solve_eta, GroupMode, GroupScenario, GROUPS_PER_BS};
use crate::rng::{self, stream};
use crate::scenario::{
    build_correlations, build_geometry, dbm_to_watts, one_ring_correlation, sample_channels, watts_to_dbm, ChannelSet, Correlation,
    CorrelationSet, NetworkConfig, Scenario,
};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Hex,
    Groups(GroupMode),
}

impl Layout {
    fn tag(self) -> &'static str {
        match self {
            Layout::Hex => "hex",
            Layout::Groups(GroupMode::Geometric) => "groups",
            Layout::Groups(GroupMode::BlockOrthogonal) => "groups_block",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Emit {
    pub per_drop_csv: bool,
    pub summary: bool,
    pub cdf_points: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub config: NetworkConfig,
    pub methods: Vec<Method>,
    pub drops: usize,
    pub layout: Layout,
    pub output: Option<PathBuf>,
    pub emit: Emit,
    pub sweep_ues: Vec<usize>,
    pub antenna_ratio: usize,
}

fn default_methods(layout: Layout) -> Vec<Method> {
    Method::ALL.iter().copied().filter(|&m| m != Method::Grouped || layout != Layout::Hex).collect()
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            config: NetworkConfig::default(),
            methods: default_methods(Layout::Hex),
            drops: 500,
            layout: Layout::Hex,
            output: None,
            emit: Emit { per_drop_csv: true, summary: true, cdf_points: true },
            sweep_ues: vec![4, 6, 8, 10],
            antenna_ratio: 2,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.drops == 0 {
            return Err(Error::config("drops must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("no methods selected"));
        }
        if let Layout::Groups(mode) = self.layout {
            if self.config.cells != 2 {
                return Err(Error::config("group layouts have exactly 2 cells"));
            }
            if mode == GroupMode::BlockOrthogonal && self.config.antennas % GROUPS_PER_BS != 0 {
                return Err(Error::config(format!("groups_block needs antennas divisible by {GROUPS_PER_BS}")));
            }
        } else if self.methods.contains(&Method::Grouped) {
            return Err(Error::config("method grouped needs layout groups or groups_block"));
        }
        if self.sweep_ues.is_empty() || self.sweep_ues.contains(&0) || self.antenna_ratio == 0 {
            return Err(Error::config("sweep_ues entries and antenna_ratio must be at least 1"));
        }
        Ok(())
    }

    /// Configuration lines that parse back to this spec (output excepted).
    pub fn to_config_lines(&self) -> Vec<String> {
        let c = &self.config;
        let join = |v: Vec<String>| v.join(",");
        let emit: Vec<&str> = [(self.emit.per_drop_csv, "csv"), (self.emit.summary, "summary"), (self.emit.cdf_points, "cdf")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, t)| *t)
            .collect();
        vec![
            format!("cells = {}", c.cells),
            format!("ues_per_cell = {}", c.ues_per_cell),
            format!("antennas = {}", c.antennas),
            format!("mu = {}", join(c.mu.iter().map(|m| m.to_string()).collect())),
            format!("noise_dbm = {}", watts_to_dbm(c.noise_power)),
            format!("inter_site_distance = {}", c.inter_site_distance),
            format!("d0 = {}", c.d0),
            format!("pathloss_exponent = {}", c.pathloss_exponent),
            format!("spacing_ratio = {}", c.spacing_ratio),
            format!("served_spread = {}", c.served_spread),
            format!("interferer_spread = {}", c.interferer_spread),
            format!("target_rate = {}", c.target_rate),
            format!("min_ue_distance = {}", c.min_ue_distance),
            format!("seed = {}", c.base_seed),
            format!("drops = {}", self.drops),
            format!("methods = {}", join(self.methods.iter().map(|m| m.tag().to_string()).collect())),
            format!("layout = {}", self.layout.tag()),
            format!("sweep_ues = {}", join(self.sweep_ues.iter().map(|k| k.to_string()).collect())),
            format!("antenna_ratio = {}", self.antenna_ratio),
            format!("emit = {}", emit.join(",")),
        ]
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

fn parse_angle(v: &str) -> Option<f64> {
    use std::f64::consts::PI;
    let v = v.trim();
    if v == "pi" {
        return Some(PI);
    }
    if let Some(d) = v.strip_prefix("pi/") {
        return d.trim().parse::<f64>().ok().map(|d| PI / d);
    }
    if let Some(x) = v.strip_suffix("pi") {
        return x.trim().parse::<f64>().ok().map(|x| x * PI);
    }
    v.parse().ok()
}

pub fn parse_config_str(text: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    let mut seen = HashSet::new();
    let mut methods_line = None;
    let mut cells_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(Error::config_at(line, format!("expected key = value, got `{body}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(Error::config_at(line, format!("duplicate key `{key}`")));
        }
        let err = |what: &str| Error::config_at(line, format!("{key}: {what}, got `{value}`"));
        let int = || value.parse::<usize>().map_err(|_| err("expected a nonnegative integer"));
        let positive_int = || int().and_then(|v| if v == 0 { Err(err("must be at least 1")) } else { Ok(v) });
        let real = || value.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| err("expected a number"));
        let positive = || real().and_then(|x| if x > 0.0 { Ok(x) } else { Err(err("must be positive")) });
        let angle = || parse_angle(value).filter(|&a| a > 0.0 && a <= 2.0 * std::f64::consts::PI + 1e-12).ok_or_else(|| err("expected an angle in (0, 2pi]"));
        let list = || value.split(',').map(str::trim).filter(|s| !s.is_empty());
        let c = &mut spec.config;
        match key {
            "cells" => {
                c.cells = positive_int()?;
                cells_line = Some(line);
            }
            "ues_per_cell" => c.ues_per_cell = positive_int()?,
            "antennas" => c.antennas = positive_int()?,
            "mu" => {
                let mu: Option<Vec<f64>> = list().map(|s| s.parse::<f64>().ok().filter(|m| *m > 0.0 && m.is_finite())).collect();
                c.mu = mu.filter(|m| !m.is_empty()).ok_or_else(|| err("expected positive numbers"))?;
            }
            "noise_dbm" => c.noise_power = dbm_to_watts(real()?),
            "inter_site_distance" => c.inter_site_distance = positive()?,
            "d0" => c.d0 = positive()?,
            "pathloss_exponent" => c.pathloss_exponent = positive()?,
            "spacing_ratio" => c.spacing_ratio = positive()?,
            "served_spread" => c.served_spread = angle()?,
            "interferer_spread" => c.interferer_spread = angle()?,
            "target_rate" => c.target_rate = positive()?,
            "min_ue_distance" => c.min_ue_distance = positive()?,
            "seed" => c.base_seed = value.parse().map_err(|_| err("expected a nonnegative integer"))?,
            "drops" => spec.drops = positive_int()?,
            "methods" => {
                spec.methods = list().map(|t| t.parse::<Method>().map_err(|_| err("unknown method"))).collect::<Result<_>>()?;
                if spec.methods.is_empty() {
                    return Err(err("expected at least one method"));
                }
                methods_line = Some(line);
            }
            "layout" => {
                spec.layout = match value {
                    "hex" => Layout::Hex,
                    "groups" => Layout::Groups(GroupMode::Geometric),
                    "groups_block" => Layout::Groups(GroupMode::BlockOrthogonal),
                    _ => return Err(err("expected hex, groups or groups_block")),
                }
            }
            "sweep_ues" => {
                let v: Option<Vec<usize>> = list().map(|s| s.parse().ok().filter(|&k: &usize| k > 0)).collect();
                spec.sweep_ues = v.filter(|v| !v.is_empty()).ok_or_else(|| err("expected positive integers"))?;
            }
            "antenna_ratio" => spec.antenna_ratio = positive_int()?,
            "emit" => {
                let mut e = Emit { per_drop_csv: false, summary: false, cdf_points: false };
                for t in list() {
                    match t {
                        "csv" => e.per_drop_csv = true,
                        "summary" => e.summary = true,
                        "cdf" => e.cdf_points = true,
                        _ => return Err(err("emit takes csv, summary and cdf")),
                    }
                }
                spec.emit = e;
            }
            _ => return Err(Error::config_at(line, format!("unknown key `{key}`"))),
        }
    }
    if let Layout::Groups(_) = spec.layout {
        match cells_line {
            Some(l) if spec.config.cells != 2 => return Err(Error::config_at(l, "group layouts have exactly 2 cells")),
            _ => spec.config.cells = 2,
        }
        if methods_line.is_none() {
            spec.methods = default_methods(spec.layout);
        }
    } else if let (Some(l), true) = (methods_line, spec.methods.contains(&Method::Grouped)) {
        return Err(Error::config_at(l, "method grouped needs layout groups or groups_block"));
    }
    spec.validate()?;
    Ok(spec)
}

/// Everything drawn for one drop, shared by all methods.
#[derive(Clone, Debug)]
pub struct Realization {
    pub scenario: Scenario,
    pub correlations: CorrelationSet,
    pub channels: ChannelSet,
    pub groups: Option<GroupScenario>,
}

pub fn realize(config: &NetworkConfig, layout: Layout, seed: u64) -> Result<Realization> {
    match layout {
        Layout::Hex => {
            let scenario = build_geometry(config, seed)?;
            let correlations = build_correlations(&scenario, config)?;
            let channels = sample_channels(&correlations, seed)?;
            Ok(Realization { scenario, correlations, channels, groups: None })
        }
        Layout::Groups(mode) => {
            let gs = build_group_scenario(config, seed, mode)?;
            let correlations = gs.expanded()?;
            let channels = sample_channels(&correlations, seed)?;
            Ok(Realization { scenario: gs.scenario.clone(), correlations, channels, groups: Some(gs) })
        }
    }
}

pub fn run_method(method: Method, drop: u64, r: &Realization, opts: &SolverOpts) -> Result<RunRecord> {
    let (s, c, h) = (&r.scenario, &r.correlations, &r.channels);
    match method {
        Method::Centralized => run_centralized(drop, s, h, opts),
        Method::Alg1 => run_alg1(drop, s, c, h, opts),
        Method::Alg2 => run_alg2(drop, s, c, h, SurrogateMode::Alg2, opts),
        Method::Iid => run_alg2(drop, s, c, h, SurrogateMode::Iid, opts),
        Method::Zf => run_zf(drop, s, h),
        Method::Iczf => run_iczf(drop, s, h, opts),
        Method::Asymptotic => run_asymptotic(drop, s, c, h, opts),
        Method::Grouped => match &r.groups {
            Some(gs) => run_grouped(drop, gs, h, opts),
            None => Err(Error::config("method grouped needs a group layout")),
        },
    }
}

/// Runs `f` for 0..n, concurrently when the `parallel` feature is on. The
/// output order is the index order either way.
pub fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[derive(Clone, Debug)]
pub struct MethodSummary {
    pub method: Method,
    pub rows: usize,
    pub feasible_rows: usize,
    /// Mean total power over feasible rows, watts; NaN when there are none.
    pub mean_power_w: f64,
    /// Mean per-UE rate over every row that produced precoders.
    pub mean_rate: f64,
    pub backhaul_scalars: u64,
    /// Empirical rate CDF as (rate, fraction) points.
    pub cdf: Vec<(f64, f64)>,
}

impl MethodSummary {
    pub fn feasibility_rate(&self) -> f64 {
        if self.rows == 0 { 0.0 } else { self.feasible_rows as f64 / self.rows as f64 }
    }

    pub fn mean_power_dbm(&self) -> f64 {
        watts_to_dbm(self.mean_power_w)
    }
}

#[derive(Clone, Debug)]
pub struct Summary {
    pub methods: Vec<MethodSummary>,
    pub config_echo: Vec<String>,
    pub seed: u64,
    pub drops: usize,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    /// Ordered by drop, then by method as listed in the spec.
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

pub fn empirical_cdf(mut rates: Vec<f64>) -> Vec<(f64, f64)> {
    rates.sort_by(f64::total_cmp);
    let n = rates.len() as f64;
    rates.into_iter().enumerate().map(|(i, r)| (r, (i + 1) as f64 / n)).collect()
}

pub fn summarize(records: &[RunRecord], methods: &[Method]) -> Vec<MethodSummary> {
    methods
        .iter()
        .map(|&m| {
            let rows: Vec<&RunRecord> = records.iter().filter(|r| r.method == m).collect();
            let feasible: Vec<&&RunRecord> = rows.iter().filter(|r| r.feasible).collect();
            let power_sum: f64 = feasible.iter().map(|r| r.total_power()).sum();
            let rates: Vec<f64> = rows.iter().flat_map(|r| r.per_ue_rate().iter().copied()).collect();
            MethodSummary {
                method: m,
                rows: rows.len(),
                feasible_rows: feasible.len(),
                mean_power_w: if feasible.is_empty() { f64::NAN } else { power_sum / feasible.len() as f64 },
                mean_rate: if rates.is_empty() { f64::NAN } else { rates.iter().sum::<f64>() / rates.len() as f64 },
                backhaul_scalars: rows.first().map_or(0, |r| r.backhaul_scalars),
                cdf: empirical_cdf(rates),
            }
        })
        .collect()
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Experiment> {
    spec.validate()?;
    let start = Instant::now();
    let opts = SolverOpts::default();
    let per_drop = map_indices(spec.drops, |t| {
        let r = realize(&spec.config, spec.layout, spec.config.base_seed + t as u64)?;
        spec.methods.iter().map(|&m| run_method(m, t as u64, &r, &opts)).collect::<Result<Vec<_>>>()
    })?;
    let records: Vec<RunRecord> = per_drop.into_iter().flatten().collect();
    let summary = Summary {
        methods: summarize(&records, &spec.methods),
        config_echo: spec.to_config_lines(),
        seed: spec.config.base_seed,
        drops: spec.drops,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(Experiment { records, summary })
}

pub const CSV_HEADER: [&str; 10] = [
    "drop",
    "method",
    "feasible",
    "total_power_w",
    "total_power_dbm",
    "min_rate",
    "mean_rate",
    "per_bs_power",
    "backhaul_scalars",
    "solver_iterations",
];

/// One row per record. Infeasible rows leave the power and rate fields
/// empty; `per_bs_power` is a `;`-separated list in watts.
pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        let has_audit = !r.per_ue_rate().is_empty();
        let num = |x: f64| if has_audit { x.to_string() } else { String::new() };
        let per_bs: Vec<String> = r.per_bs_power().iter().map(|p| p.to_string()).collect();
        w.write_record([
            r.drop.to_string(),
            r.method.tag().to_string(),
            r.feasible.to_string(),
            num(r.total_power()),
            num(r.total_power_dbm()),
            num(r.min_rate()),
            num(r.mean_rate()),
            per_bs.join(";"),
            r.backhaul_scalars.to_string(),
            r.iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean `total_power_w` over feasible rows per method, recomputed from a
/// records file, in order of first appearance.
pub fn power_means_from_csv<R: Read>(input: R) -> Result<Vec<(String, f64)>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut acc: Vec<(String, f64, usize)> = Vec::new();
    for row in rd.records() {
        let row = row?;
        let method = row.get(1).unwrap_or_default().to_string();
        let pos = match acc.iter().position(|a| a.0 == method) {
            Some(p) => p,
            None => {
                acc.push((method, 0.0, 0));
                acc.len() - 1
            }
        };
        if row.get(2) == Some("true") {
            let p: f64 = row.get(3).unwrap_or_default().parse().map_err(|_| Error::Numeric("bad total_power_w field".into()))?;
            acc[pos].1 += p;
            acc[pos].2 += 1;
        }
    }
    Ok(acc.into_iter().map(|(m, s, n)| (m, if n == 0 { f64::NAN } else { s / n as f64 })).collect())
}

pub fn write_cdf<W: Write>(mut out: W, points: &[(f64, f64)]) -> Result<()> {
    for (r, f) in points {
        writeln!(out, "{r} {f}")?;
    }
    Ok(())
}

pub fn write_summary<W: Write>(mut out: W, s: &Summary) -> Result<()> {
    writeln!(out, "# drops = {}", s.drops)?;
    writeln!(out, "# seed = {}", s.seed)?;
    writeln!(out, "# wall_time_s = {:.3}", s.wall_time_s)?;
    for line in &s.config_echo {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "method,rows,feasible_rows,feasibility_rate,mean_power_w,mean_power_dbm,mean_rate,backhaul_scalars")?;
    for m in &s.methods {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.method.tag(),
            m.rows,
            m.feasible_rows,
            m.feasibility_rate(),
            m.mean_power_w,
            m.mean_power_dbm(),
            m.mean_rate,
            m.backhaul_scalars
        )?;
    }
    Ok(())
}

/// Writes `records.csv`, `summary.txt` and `cdf_<method>.txt` into `dir`, as
/// selected by `emit`.
pub fn write_experiment(dir: &Path, exp: &Experiment, emit: Emit) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if emit.per_drop_csv {
        write_records(std::fs::File::create(dir.join("records.csv"))?, &exp.records)?;
    }
    if emit.summary {
        write_summary(std::fs::File::create(dir.join("summary.txt"))?, &exp.summary)?;
    }
    if emit.cdf_points {
        for m in &exp.summary.methods {
            if !m.cdf.is_empty() {
                write_cdf(std::fs::File::create(dir.join(format!("cdf_{}.txt", m.method.tag())))?, &m.cdf)?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub ues_per_cell: usize,
    pub antennas: usize,
    pub experiment: Experiment,
}

/// One experiment per entry of `sweep_ues`, with antennas = ratio · total UEs.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    spec.sweep_ues
        .iter()
        .map(|&kb| {
            let antennas = spec.antenna_ratio * spec.config.cells * kb;
            let mut s = spec.clone();
            s.config.ues_per_cell = kb;
            s.config.antennas = antennas;
            Ok(SweepPoint { ues_per_cell: kb, antennas, experiment: run_experiment(&s)? })
        })
        .collect()
}

pub fn write_power_table<W: Write>(out: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ues_per_cell", "antennas", "method", "mean_power_w", "mean_power_dbm", "feasibility_rate", "feasible_rows"])?;
    for p in points {
        for m in &p.experiment.summary.methods {
            w.write_record([
                p.ues_per_cell.to_string(),
                p.antennas.to_string(),
                m.method.tag().to_string(),
                m.mean_power_w.to_string(),
                m.mean_power_dbm().to_string(),
                m.feasibility_rate().to_string(),
                m.feasible_rows.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackhaulRow {
    pub method: Method,
    /// Real scalars per BS pair exchange round, summed over the network,
    /// whenever the channel statistics change.
    pub per_statistics_update: u64,
    /// Real scalars exchanged every fading block.
    pub per_fading_block: u64,
}

pub fn backhaul_report(config: &NetworkConfig) -> Vec<BackhaulRow> {
    let (l, k, n) = (config.cells, config.total_ues(), config.antennas);
    Method::ALL
        .iter()
        .map(|&m| {
            let count = backhaul_scalars(m, l, k, n, GROUPS_PER_BS);
            let fading = m == Method::Centralized;
            BackhaulRow {
                method: m,
                per_statistics_update: if fading { 0 } else { count },
                per_fading_block: if fading { count } else { 0 },
            }
        })
        .collect()
}

pub fn write_backhaul<W: Write>(out: W, rows: &[BackhaulRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "per_statistics_update", "per_fading_block"])?;
    for r in rows {
        w.write_record([r.method.tag().to_string(), r.per_statistics_update.to_string(), r.per_fading_block.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Scalars exchanged by `alg1` divided by those of `alg2`.
pub fn alg1_alg2_ratio(rows: &[BackhaulRow]) -> Option<(u64, u64)> {
    let get = |m| rows.iter().find(|r| r.method == m).map(|r| r.per_statistics_update);
    let (a, b) = (get(Method::Alg1)?, get(Method::Alg2)?);
    (b > 0 && a % b == 0).then_some((a / b, a % b))
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] < w[0])
}

#[derive(Clone, Debug)]
pub struct TrendPoint {
    pub antennas: usize,
    /// Drops with a feasible exact optimum.
    pub samples: usize,
    /// Median of max_k |λ*_k − λ̄_k|/λ̄_k.
    pub lambda_median: f64,
    /// Median of max_{k,i} |G_{k,i} − Ḡ_{k,i}|/sqrt(Ḡ_{k,k}Ḡ_{i,i}).
    pub coupling_median: f64,
    /// Median of max_{k,i} |G_{k,i} − Ḡ_{k,i}|/Ḡ_{k,k}, which weighs each
    /// entry by the diagonal of its row only.
    pub coupling_row_median: f64,
}

/// Deviation of the exact dual powers and coupling matrix from their
/// deterministic equivalents, with as many UEs in total as antennas. Seeds
/// are shared across sizes.
pub fn convergence_trend(config: &NetworkConfig, sizes: &[usize], drops: usize) -> Result<Vec<TrendPoint>> {
    let opts = SolverOpts::default();
    sizes
        .iter()
        .map(|&n| {
            if n % config.cells != 0 {
                return Err(Error::config(format!("{n} antennas cannot be split evenly over {} cells", config.cells)));
            }
            let cfg = NetworkConfig { antennas: n, ues_per_cell: n / config.cells, ..config.clone() };
            let per = map_indices(drops, |t| {
                let r = realize(&cfg, Layout::Hex, cfg.base_seed + t as u64)?;
                let s = &r.scenario;
                let exact = solve_centralized(s, &r.channels, &opts.fixed_point)?;
                if !exact.feasible {
                    return Ok(None);
                }
                let tg = Targets { serving: &s.serving, gamma: &s.gamma, mu: &s.mu, noise_power: s.noise_power };
                let de = run_pipeline(&r.correlations, tg, &opts.equiv)?;
                let active: Vec<usize> = (0..s.n_ue()).filter(|&k| s.gamma[k] > 0.0).collect();
                let lam = active.iter().map(|&k| (exact.lambda[k] - de.lambda_bar[k]).abs() / de.lambda_bar[k]).fold(0.0, f64::max);
                let (mut sym, mut row) = (0.0f64, 0.0f64);
                for &k in &active {
                    for &i in &active {
                        let e = (exact.coupling[(k, i)] - de.g_bar[(k, i)]).abs();
                        sym = sym.max(e / (de.g_bar[(k, k)] * de.g_bar[(i, i)]).sqrt());
                        row = row.max(e / de.g_bar[(k, k)]);
                    }
                }
                Ok(Some([lam, sym, row]))
            })?;
            let ok: Vec<[f64; 3]> = per.into_iter().flatten().collect();
            let med = |j: usize| median(ok.iter().map(|p| p[j]).collect());
            Ok(TrendPoint { antennas: n, samples: ok.len(), lambda_median: med(0), coupling_median: med(1), coupling_row_median: med(2) })
        })
        .collect()
}

/// Fixed point m_i = (1/N)Tr(Θ_i T), T = (Σ_j λ_jΘ_j/(N(1 + λ_j m_j)) + μI − x·S)⁻¹
/// for one BS, solved densely from scratch.
fn perturbed_m(theta: &[DMatrix<C64>], lambda: &[f64], mu: f64, shift: &DMatrix<C64>, x: f64) -> Result<Vec<f64>> {
    let n = shift.nrows();
    let nf = n as f64;
    let mut m = vec![0.0; theta.len()];
    for _ in 0..20_000 {
        let mut a = DMatrix::<C64>::identity(n, n) * C64::new(mu, 0.0) - shift * C64::new(x, 0.0);
        for (tj, (&l, &mj)) in theta.iter().zip(lambda.iter().zip(&m)) {
            a += tj * C64::new(l / (nf * (1.0 + l * mj)), 0.0);
        }
        let t = a.try_inverse().ok_or_else(|| Error::Numeric("perturbed system singular".into()))?;
        let next: Vec<f64> = theta.iter().map(|tj| (tj * &t).trace().re / nf).collect();
        let done = next.iter().zip(&m).all(|(p, q)| (p - q).abs() <= 1e-15 * p.abs());
        m = next;
        if done {
            break;
        }
    }
    Ok(m)
}

/// η̄_{b,g} with λ̄ frozen and noise level μ_b − x, by direct iteration.
fn perturbed_eta(gs: &GroupScenario, lambda: &[f64], start: f64, b: usize, g: usize, x: f64) -> f64 {
    let s = &gs.scenario;
    let nf = gs.n_ant as f64;
    let mut e = start;
    for _ in 0..20_000 {
        let load: f64 = (0..s.n_ue())
            .filter(|&j| gs.group_of[b][j] == g && s.gamma[j] > 0.0)
            .map(|j| 1.0 / (1.0 / (lambda[j] * s.pathloss[b][j]) + e))
            .sum();
        let next: f64 = gs.eigen[b][g].xi.iter().map(|&xi| xi / (xi * load + nf * (s.mu[b] - x))).sum();
        let done = (next - e).abs() <= 1e-15 * next;
        e = next;
        if done {
            break;
        }
    }
    e
}

#[derive(Clone, Debug)]
pub struct DerivativeErrors {
    pub instances: usize,
    /// Largest relative error of m̄' against central differences.
    pub m_prime: f64,
    /// Same for the noise derivative ζ' of the generic system.
    pub zeta_prime: f64,
    /// Same for the grouped ζ̄'.
    pub group_zeta_prime: f64,
}

fn rel_err(fd: f64, exact: f64, scale: f64, floor: f64) -> f64 {
    (fd - exact).abs() / exact.abs().max(1e-3 * scale).max(floor)
}

/// Smallest derivative a central difference with this `step` can resolve to
/// 1e-4, given that the perturbed solve reproduces the unperturbed `m` only
/// to `solve_err`.
fn resolvable(solve_err: f64, step: f64) -> f64 {
    1e4 * solve_err / step
}

/// Central differences of the defining perturbed systems on random small
/// instances (N ≤ 16, K ≤ 8). Entries below 1e-3 of the largest one of their
/// column are compared on that column's scale, and entries below what the
/// perturbed solve can resolve on that scale. Instances the pipeline rejects
/// are redrawn.
pub fn derivative_oracles(instances: usize, seed: u64, step: f64) -> Result<DerivativeErrors> {
    use std::f64::consts::PI;
    let equiv = EquivOpts { tol: 1e-14, max_iter: 100_000, ..Default::default() };
    let mut out = DerivativeErrors { instances, m_prime: 0.0, zeta_prime: 0.0, group_zeta_prime: 0.0 };
    let mut accepted = 0;
    for inst in 0..instances * 20 {
        if accepted == instances {
            break;
        }
        let mut rng = stream(seed, rng::SYNTHETIC, inst, 0);
        let n = 4 * rng.gen_range(1..=4);
        let k = rng.gen_range(2..=8);
        let serving: Vec<usize> = (0..k).map(|i| i % 2).collect();
        let corr = CorrelationSet::new(
            2,
            k,
            (0..2 * k)
                .map(|_| {
                    let (a2, c, w) = (0.05 + 0.95 * rng.gen::<f64>(), 2.0 * PI * rng.gen::<f64>(), 0.2 + 1.5 * rng.gen::<f64>());
                    Ok(Correlation::Dense(one_ring_correlation(a2, c - w / 2.0, c + w / 2.0, n, 0.5)?.to_dense()))
                })
                .collect::<Result<Vec<_>>>()?,
        )?;
        let gamma: Vec<f64> = (0..k).map(|_| 0.2 + 2.0 * rng.gen::<f64>()).collect();
        let mu = [0.5 + rng.gen::<f64>(), 0.5 + rng.gen::<f64>()];
        let tg = Targets { serving: &serving, gamma: &gamma, mu: &mu, noise_power: 1e-3 };
        let de = match run_pipeline(&corr, tg, &equiv) {
            Ok(de) if de.feasible => de,
            _ => continue,
        };
        accepted += 1;
        for b in 0..2 {
            let theta: Vec<DMatrix<C64>> = (0..k).map(|j| corr.get(b, j).to_dense()).collect();
            let eye = DMatrix::<C64>::identity(n, n);
            let up = perturbed_m(&theta, &de.lambda_bar, mu[b], &eye, step)?;
            let dn = perturbed_m(&theta, &de.lambda_bar, mu[b], &eye, -step)?;
            let m0 = perturbed_m(&theta, &de.lambda_bar, mu[b], &eye, 0.0)?;
            let solve_err = m0.iter().zip(&de.m_bar[b]).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            let floor = resolvable(solve_err, step);
            let z = &de.derivs[b].zeta_prime;
            let scale = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for i in 0..k {
                out.zeta_prime = out.zeta_prime.max(rel_err((up[i] - dn[i]) / (2.0 * step), z[i], scale, floor));
            }
            for kk in 0..k {
                let up = perturbed_m(&theta, &de.lambda_bar, mu[b], &theta[kk], step)?;
                let dn = perturbed_m(&theta, &de.lambda_bar, mu[b], &theta[kk], -step)?;
                let col = de.derivs[b].m_prime.column(kk);
                let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                for i in 0..k {
                    out.m_prime = out.m_prime.max(rel_err((up[i] - dn[i]) / (2.0 * step), col[i], scale, floor));
                }
            }
        }
        let cfg = NetworkConfig { antennas: 3 * rng.gen_range(2..=5), ues_per_cell: rng.gen_range(1..=4), ..Default::default() };
        let gs = build_group_scenario(&cfg, seed.wrapping_add(inst as u64), GroupMode::BlockOrthogonal)?;
        let eta = solve_eta(&gs, &equiv)?;
        let co = group_coefficients(&gs, &eta);
        for b in 0..2 {
            for g in 0..gs.n_groups {
                let start = eta.eta[b][g];
                let up = perturbed_eta(&gs, &eta.lambda, start, b, g, step);
                let dn = perturbed_eta(&gs, &eta.lambda, start, b, g, -step);
                let z = co.zeta_prime[b][g];
                out.group_zeta_prime = out.group_zeta_prime.max(rel_err((up - dn) / (2.0 * step), z, z, 0.0));
            }
        }
    }
    if accepted < instances {
        return Err(Error::Numeric(format!("only {accepted} of {instances} derivative instances were feasible")));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DualityStats {
    pub attempted: usize,
    pub feasible: usize,
    /// max_k |SINR_k/γ_k − 1|.
    pub max_sinr_deviation: f64,
    /// max |Σμ_bP_b − Σλ_kσ²/N| / Σμ_bP_b.
    pub max_gap: f64,
}

/// Exact optimum on consecutive drops until `wanted` are feasible or
/// 4·`wanted` have been tried.
pub fn duality_checks(config: &NetworkConfig, wanted: usize) -> Result<DualityStats> {
    let opts = SolverOpts::default();
    let mut st = DualityStats { attempted: 0, feasible: 0, max_sinr_deviation: 0.0, max_gap: 0.0 };
    let mut t = 0u64;
    while st.feasible < wanted && st.attempted < 4 * wanted {
        let r = realize(config, Layout::Hex, config.base_seed + t)?;
        t += 1;
        st.attempted += 1;
        let s = &r.scenario;
        let sol = solve_centralized(s, &r.channels, &opts.fixed_point)?;
        if !sol.feasible {
            continue;
        }
        st.feasible += 1;
        for k in 0..s.n_ue() {
            if s.gamma[k] > 0.0 {
                st.max_sinr_deviation = st.max_sinr_deviation.max((sol.audit.sinr[k] / s.gamma[k] - 1.0).abs());
            }
        }
        let primal = sol.audit.weighted_power(&s.mu);
        let dual = sol.dual_objective(s.noise_power, r.channels.n_ant);
        st.max_gap = st.max_gap.max((primal - dual).abs() / primal);
    }
    Ok(st)
}

/// Largest grouped-versus-generic deviation over block-orthogonal drops.
pub fn grouping_block_check(config: &NetworkConfig, seeds: usize) -> Result<(f64, bool)> {
    let equiv = EquivOpts { tol: 1e-13, max_iter: 100_000, ..Default::default() };
    let mut worst = 0.0f64;
    let mut all_feasible = true;
    for t in 0..seeds {
        let gs = build_group_scenario(config, config.base_seed + t as u64, GroupMode::BlockOrthogonal)?;
        let r = cross_validate_grouping(&gs, &equiv)?;
        all_feasible &= r.both_feasible;
        worst = worst.max(r.eta).max(r.lambda).max(r.zeta).max(r.group_power).max(r.ici);
    }
    Ok((worst, all_feasible))
}

#[derive(Clone, Debug)]
pub struct GroupTrendPoint {
    pub antennas: usize,
    /// Drops where both methods were feasible.
    pub samples: usize,
    pub grouped_dbm: f64,
    pub generic_dbm: f64,
}

impl GroupTrendPoint {
    pub fn gap_db(&self) -> f64 {
        (self.grouped_dbm - self.generic_dbm).abs()
    }
}

/// Mean transmit power with grouped caps against caps from the generic
/// deterministic equivalents, on the geometric group layout with N/4 UEs per
/// cell.
pub fn grouping_power_trend(config: &NetworkConfig, sizes: &[usize], drops: usize) -> Result<Vec<GroupTrendPoint>> {
    let opts = SolverOpts::default();
    let layout = Layout::Groups(GroupMode::Geometric);
    sizes
        .iter()
        .map(|&n| {
            let cfg = NetworkConfig { cells: 2, antennas: n, ues_per_cell: (n / 4).max(1), ..config.clone() };
            let per = map_indices(drops, |t| {
                let r = realize(&cfg, layout, cfg.base_seed + t as u64)?;
                let g = run_method(Method::Grouped, t as u64, &r, &opts)?;
                let a = run_method(Method::Alg1, t as u64, &r, &opts)?;
                Ok((g.feasible && a.feasible).then(|| (g.total_power(), a.total_power())))
            })?;
            let ok: Vec<(f64, f64)> = per.into_iter().flatten().collect();
            let mean = |f: fn(&(f64, f64)) -> f64| ok.iter().map(f).sum::<f64>() / ok.len() as f64;
            Ok(GroupTrendPoint { antennas: n, samples: ok.len(), grouped_dbm: watts_to_dbm(mean(|p| p.0)), generic_dbm: watts_to_dbm(mean(|p| p.1)) })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TightnessStats {
    pub feasible: usize,
    /// Largest relative power difference from the exact optimum.
    pub max_rel: f64,
}

/// Local solves with the exact optimum's own interference levels as caps.
pub fn ici_tightness(config: &NetworkConfig, drops: usize) -> Result<TightnessStats> {
    let opts = SolverOpts::default();
    let per = map_indices(drops, |t| {
        let r = realize(config, Layout::Hex, config.base_seed + t as u64)?;
        let c = run_centralized(t as u64, &r.scenario, &r.channels, &opts)?;
        if !c.feasible {
            return Ok(None);
        }
        let l = solve_with_caps(Method::Alg1, t as u64, &r.scenario, &r.channels, c.audit.ici.clone(), 0, &opts.local)?;
        if !l.feasible {
            return Ok(Some(f64::INFINITY));
        }
        Ok(Some((l.total_power() - c.total_power()).abs() / c.total_power()))
    })?;
    let ok: Vec<f64> = per.into_iter().flatten().collect();
    Ok(TightnessStats { feasible: ok.len(), max_rel: ok.iter().cloned().fold(0.0, f64::max) })
}

/// Audited rows of target-guaranteeing methods that claim feasibility but
/// miss a target by more than `slack`.
pub fn qos_violations(records: &[RunRecord], gamma_of: impl Fn(&RunRecord) -> Vec<f64>, slack: f64) -> (usize, usize) {
    let audited: Vec<&RunRecord> = records.iter().filter(|r| r.feasible && r.method.guarantees_targets()).collect();
    let bad = audited.iter().filter(|r| !meets_targets(&r.audit, &gamma_of(r), slack)).count();
    (audited.len(), bad)
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.to_string(), passed, detail });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ValidationLevels {
    /// Antenna counts for the convergence trends.
    pub sizes: Vec<usize>,
    /// Cells used for the convergence trends.
    pub cells: usize,
    pub trend_drops: usize,
    pub duality_drops: usize,
    pub derivative_instances: usize,
    pub grouping_seeds: usize,
}

impl Default for ValidationLevels {
    fn default() -> Self {
        ValidationLevels { sizes: vec![16, 32, 64], cells: 4, trend_drops: 100, duality_drops: 50, derivative_instances: 10, grouping_seeds: 5 }
    }
}

impl ValidationLevels {
    pub fn quick() -> Self {
        ValidationLevels { sizes: vec![8, 16, 32], cells: 4, trend_drops: 12, duality_drops: 5, derivative_instances: 2, grouping_seeds: 2 }
    }
}

pub fn validate_suite(config: &NetworkConfig, levels: &ValidationLevels) -> Result<ValidationReport> {
    let mut rep = ValidationReport::default();
    let trend_cfg = NetworkConfig { cells: levels.cells, ..config.clone() };
    let trend = convergence_trend(&trend_cfg, &levels.sizes, levels.trend_drops)?;
    let fmt_trend = |f: fn(&TrendPoint) -> f64| {
        trend.iter().fold(String::new(), |mut s, p| {
            let _ = write!(s, "N={} median {:.4e} ({} drops); ", p.antennas, f(p), p.samples);
            s
        })
    };
    let lam: Vec<f64> = trend.iter().map(|p| p.lambda_median).collect();
    let g: Vec<f64> = trend.iter().map(|p| p.coupling_median).collect();
    rep.push("dual power convergence", strictly_decreasing(&lam), fmt_trend(|p| p.lambda_median));
    rep.push("coupling matrix convergence", strictly_decreasing(&g), fmt_trend(|p| p.coupling_median));

    let d = derivative_oracles(levels.derivative_instances, config.base_seed, 1e-4)?;
    let worst = d.m_prime.max(d.zeta_prime).max(d.group_zeta_prime);
    rep.push(
        "derivative finite differences",
        worst <= 1e-4,
        format!("max rel error m' {:.2e}, zeta' {:.2e}, grouped zeta' {:.2e} over {} instances", d.m_prime, d.zeta_prime, d.group_zeta_prime, d.instances),
    );

    let du = duality_checks(config, levels.duality_drops)?;
    rep.push(
        "duality gap and SINR tightness",
        du.feasible > 0 && du.max_gap <= 1e-6 && du.max_sinr_deviation <= 1e-6,
        format!("{} feasible of {} drops, max gap {:.2e}, max |SINR/gamma - 1| {:.2e}", du.feasible, du.attempted, du.max_gap, du.max_sinr_deviation),
    );

    let block = NetworkConfig { antennas: 12, ues_per_cell: 4, ..config.clone() };
    let (dev, feasible) = grouping_block_check(&block, levels.grouping_seeds)?;
    rep.push(
        "grouping cross-validation",
        feasible && dev <= 1e-6,
        format!("max rel deviation {dev:.2e} over {} block-orthogonal drops", levels.grouping_seeds),
    );

    let rows = backhaul_report(config);
    let n2 = (config.antennas * config.antennas) as u64;
    let ratio = alg1_alg2_ratio(&rows);
    rep.push("backhaul accounting", ratio == Some((n2, 0)), format!("alg1/alg2 = {:?}, N^2 = {n2}", ratio.map(|r| r.0)));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let spec = parse_config_str("").unwrap();
        assert_eq!(spec, ExperimentSpec::default());
        let c = &spec.config;
        assert_eq!((c.cells, c.inter_site_distance, c.d0, c.pathloss_exponent), (7, 1000.0, 1.0, 3.0));
        assert!((c.noise_power - 3.981e-14).abs() < 1e-17);
        assert_eq!(spec.drops, 500);
    }

    #[test]
    fn noise_is_converted_from_dbm() {
        let spec = parse_config_str("noise_dbm = -104\n").unwrap();
        assert_eq!(spec.config.noise_power, 10f64.powf((-104.0 - 30.0) / 10.0));
        assert!((watts_to_dbm(1.0) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line_of = |text: &str| match parse_config_str(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("expected a config error, got {other:?}"),
        };
        assert_eq!(line_of("cells = 3\n# note\ndrops = 0\n"), Some(3));
        assert_eq!(line_of("\nbogus = 1\n"), Some(2));
        assert_eq!(line_of("antennas\n"), Some(1));
        assert_eq!(line_of("antennas = 8\nantennas = 9\n"), Some(2));
        assert_eq!(line_of("methods = alg1, nope\n"), Some(1));
        assert_eq!(line_of("served_spread = 7\n"), Some(1));
        assert_eq!(line_of("layout = groups\ncells = 3\n"), Some(2));
    }

    #[test]
    fn angles_and_lists_parse() {
        let spec = parse_config_str("served_spread = pi/3 # comment\ninterferer_spread = 0.25pi\nmu = 1, 2\ncells = 2\nmethods = zf,alg1\n").unwrap();
        assert!((spec.config.served_spread - std::f64::consts::PI / 3.0).abs() < 1e-15);
        assert!((spec.config.interferer_spread - std::f64::consts::PI / 4.0).abs() < 1e-15);
        assert_eq!(spec.config.mu, vec![1.0, 2.0]);
        assert_eq!(spec.methods, vec![Method::Zf, Method::Alg1]);
    }

    #[test]
    fn group_layout_adds_grouped_method() {
        let spec = parse_config_str("layout = groups\n").unwrap();
        assert_eq!(spec.config.cells, 2);
        assert!(spec.methods.contains(&Method::Grouped));
        assert!(parse_config_str("methods = grouped\n").is_err());
    }

    #[test]
    fn config_echo_round_trips() {
        let spec = parse_config_str("cells = 3\nmu = 1,0.5,2\nlayout = hex\nemit = csv\nsweep_ues = 2,3\n").unwrap();
        let again = parse_config_str(&spec.to_config_lines().join("\n")).unwrap();
        assert_eq!(spec.config.mu, again.config.mu);
        assert_eq!(spec.emit, again.emit);
        assert_eq!(spec.sweep_ues, again.sweep_ues);
        assert!((spec.config.noise_power - again.config.noise_power).abs() < 1e-27);
    }

    #[test]
    fn single_rate_cdf_is_a_step() {
        assert_eq!(empirical_cdf(vec![1.5]), vec![(1.5, 1.0)]);
        let c = empirical_cdf(vec![3.0, 1.0, 2.0, 2.0]);
        assert!(c.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        assert_eq!(c.last().unwrap().1, 1.0);
    }

    #[test]
    fn medians_and_trends() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, f64::NAN]));
    }

    #[test]
    fn backhaul_table_matches_counting_rules() {
        let cfg = NetworkConfig { cells: 3, ues_per_cell: 2, antennas: 5, ..Default::default() };
        let rows = backhaul_report(&cfg);
        let row = |m| rows.iter().find(|r| r.method == m).unwrap().clone();
        assert_eq!(row(Method::Alg1).per_statistics_update, 2 * 6 * 25);
        assert_eq!(row(Method::Alg2).per_statistics_update, 2 * 6);
        assert_eq!(row(Method::Centralized).per_fading_block, 2 * 6 * 10);
        assert_eq!(row(Method::Centralized).per_statistics_update, 0);
        assert_eq!(row(Method::Zf), BackhaulRow { method: Method::Zf, per_statistics_update: 0, per_fading_block: 0 });
        assert_eq!(alg1_alg2_ratio(&rows), Some((25, 0)));
    }

    #[test]
    fn derivative_oracles_agree() {
        let d = derivative_oracles(3, 9, 1e-4).unwrap();
        assert!(d.m_prime < 1e-4 && d.zeta_prime < 1e-4 && d.group_zeta_prime < 1e-4, "{d:?}");
    }
}
