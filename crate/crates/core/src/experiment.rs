//! Batch experiments: parameter sweeps, mobility time series and
//! comparisons against the exhaustive optimum, with CSV output.
//!
//! Every topology index `t` gets the sub-seed `derive_seed(seed, [t])`. The
//! swept value only changes the scenario parameters, so the same topology
//! index draws the same library and positions at every sweep point, and
//! adding sweep values leaves existing cells untouched.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{evaluate_fading, summarize};
use crate::generate::{derive_seed, rng_from_seed, sample_scenario, ScenarioParams};
use crate::greedy::{solve_gen, solve_independent, GreedyOptions};
use crate::library::{Placement, GB};
use crate::mobility::{init_motion, mobility_step, MobilityPattern};
use crate::objective::{hit_ratio, hit_units};
use crate::oracle::{exhaustive_search, max_feasible_cardinality, OracleBudget};
use crate::radio::{build_rate_table, RateTable};
use crate::scenario::Scenario;
use crate::successive::{solve_spec, SpecOptions};

const FADING_STREAM: u64 = 0xFAD1;
const MOBILITY_STREAM: u64 = 0x0B1E;

/// A solver and its options, written `{ kind = "spec", epsilon = 0.1 }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverConfig {
    Spec(SpecOptions),
    Gen(GreedyOptions),
    Independent,
    Exhaustive(OracleBudget),
}

impl SolverConfig {
    /// Label used in result tables.
    pub fn name(&self) -> String {
        match self {
            SolverConfig::Spec(o) if o.epsilon == 0.0 => "spec_exact".into(),
            SolverConfig::Spec(o) => format!("spec_eps{}", o.epsilon),
            SolverConfig::Gen(o) if o.density => "gen_density".into(),
            SolverConfig::Gen(_) => "gen".into(),
            SolverConfig::Independent => "independent".into(),
            SolverConfig::Exhaustive(_) => "exhaustive".into(),
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        match self {
            SolverConfig::Spec(o) => {
                if !(0.0..=1.0).contains(&o.epsilon) {
                    return Err(Error::validation(format!("{path}.epsilon"), "must lie in [0, 1]"));
                }
                if o.combination_cap == 0 || o.dp_cell_cap == 0 {
                    return Err(Error::validation(path, "caps must be positive"));
                }
            }
            SolverConfig::Exhaustive(b) => {
                if b.max_states == 0 || !(b.time_limit_s > 0.0) {
                    return Err(Error::validation(path, "oracle budget must be positive"));
                }
            }
            SolverConfig::Gen(_) | SolverConfig::Independent => {}
        }
        Ok(())
    }

    pub fn solve(&self, scenario: &Scenario, rates: &RateTable) -> Result<Placement> {
        Ok(match self {
            SolverConfig::Spec(o) => solve_spec(scenario, rates, o)?.placement,
            SolverConfig::Gen(o) => solve_gen(scenario, rates, o),
            SolverConfig::Independent => solve_independent(scenario, rates),
            SolverConfig::Exhaustive(b) => exhaustive_search(scenario, rates, b)?.placement,
        })
    }

    /// Solves once and reports the wall-time of the solver call alone.
    pub fn solve_timed(&self, scenario: &Scenario, rates: &RateTable) -> Result<(Placement, f64)> {
        let start = Instant::now();
        let placement = self.solve(scenario, rates)?;
        Ok((placement, start.elapsed().as_secs_f64()))
    }
}

pub fn default_solvers() -> Vec<SolverConfig> {
    vec![
        SolverConfig::Spec(SpecOptions::default()),
        SolverConfig::Gen(GreedyOptions::default()),
        SolverConfig::Independent,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Per-server capacity in GB.
    CapacityGb,
    NServers,
    NUsers,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::CapacityGb => "capacity_gb",
            SweepAxis::NServers => "n_servers",
            SweepAxis::NUsers => "n_users",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &ScenarioParams, value: f64) -> Result<ScenarioParams> {
        let mut p = *base;
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 && value < 1e9 {
                Ok(value as usize)
            } else {
                Err(Error::validation(
                    format!("sweep.values ({})", self.label()),
                    format!("{value} is not a positive integer"),
                ))
            }
        };
        match self {
            SweepAxis::CapacityGb => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::validation("sweep.values (capacity_gb)", format!("{value} is not a capacity")));
                }
                p.topology.capacity_bytes = (value * GB as f64).round() as u64;
            }
            SweepAxis::NServers => p.topology.n_servers = count()?,
            SweepAxis::NUsers => p.topology.n_users = count()?,
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::CapacityGb,
            values: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub pattern: MobilityPattern,
    pub horizon_s: f64,
    pub slot_s: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            pattern: MobilityPattern::Pedestrian,
            horizon_s: 7200.0,
            slot_s: 5.0,
        }
    }
}

impl MobilityConfig {
    pub fn n_slots(&self) -> usize {
        (self.horizon_s / self.slot_s).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_topologies: usize,
    /// Fading realizations per evaluation; 0 evaluates on expected rates.
    pub n_fading: usize,
    pub scenario: ScenarioParams,
    pub solvers: Vec<SolverConfig>,
    pub sweep: SweepConfig,
    pub mobility: MobilityConfig,
    pub oracle: OracleBudget,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_topologies: 100,
            n_fading: 1000,
            scenario: ScenarioParams::default(),
            solvers: default_solvers(),
            sweep: SweepConfig::default(),
            mobility: MobilityConfig::default(),
            oracle: OracleBudget::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_topologies == 0 {
            return Err(Error::validation("n_topologies", "must be positive"));
        }
        if self.solvers.is_empty() {
            return Err(Error::validation("solvers", "list is empty"));
        }
        for (j, s) in self.solvers.iter().enumerate() {
            s.validate(&format!("solvers[{j}]"))?;
        }
        if self.sweep.values.is_empty() {
            return Err(Error::validation("sweep.values", "list is empty"));
        }
        for &v in &self.sweep.values {
            self.sweep.axis.apply(&self.scenario, v)?;
        }
        let mob = &self.mobility;
        if !(mob.slot_s > 0.0 && mob.horizon_s >= 0.0 && mob.horizon_s.is_finite()) {
            return Err(Error::validation("mobility", "need slot_s > 0 and horizon_s >= 0"));
        }
        if self.oracle.max_states == 0 || !(self.oracle.time_limit_s > 0.0) {
            return Err(Error::validation("oracle", "budget must be positive"));
        }
        self.scenario.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads TOML for `.toml` files and JSON otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            _ => Self::from_json(&text),
        }
    }

    pub fn topology_seed(&self, topology: usize) -> u64 {
        derive_seed(self.seed, &[topology as u64])
    }
}

/// Hit ratio of `placement`: fading average when `n_fading > 0`, the
/// expected-rate value otherwise.
pub fn evaluate(scenario: &Scenario, rates: &RateTable, placement: &Placement, n_fading: usize, seed: u64) -> f64 {
    if n_fading == 0 {
        hit_ratio(scenario, rates, placement)
    } else {
        evaluate_fading(scenario, placement, n_fading, seed).mean
    }
}

/// Mean fraction of server capacity in use, with shared blocks counted once.
pub fn storage_utilization(scenario: &Scenario, placement: &Placement) -> f64 {
    let m = scenario.n_servers();
    (0..m)
        .map(|s| match scenario.capacity(s) {
            0 => 0.0,
            q => placement.storage_used(&scenario.library, s) as f64 / q as f64,
        })
        .sum::<f64>()
        / m as f64
}

/// One solver on one topology at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub hit_ratio: f64,
    pub storage_util: f64,
    pub solve_s: f64,
}

/// Runs every solver on topology `topology` at sweep value `value`.
pub fn sweep_cell(config: &ExperimentConfig, value: f64, topology: usize) -> Result<Vec<Result<CellOutcome>>> {
    let params = config.sweep.axis.apply(&config.scenario, value)?;
    let seed = config.topology_seed(topology);
    let scenario = sample_scenario(&params, seed)?;
    let rates = build_rate_table(&scenario);
    let fading_seed = derive_seed(seed, &[FADING_STREAM]);
    Ok(config
        .solvers
        .iter()
        .map(|solver| {
            let (placement, solve_s) = solver.solve_timed(&scenario, &rates)?;
            Ok(CellOutcome {
                hit_ratio: evaluate(&scenario, &rates, &placement, config.n_fading, fading_seed),
                storage_util: storage_utilization(&scenario, &placement),
                solve_s,
            })
        })
        .collect())
}

/// Aggregate over topologies for one (sweep value, solver).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub solver: String,
    /// NaN if any topology failed.
    pub mean_hit_ratio: f64,
    /// Across topologies.
    pub std_hit_ratio: f64,
    pub mean_storage_util: f64,
    pub mean_solve_s: f64,
    pub seed: u64,
    pub n_topologies: usize,
    pub failures: usize,
    /// First failure message, empty when all topologies succeeded.
    pub reason: String,
}

/// Runs the sweep. Rows come out in sweep-value order, then solver order,
/// regardless of how many threads the cells ran on.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let n_top = config.n_topologies;
    let jobs: Vec<(usize, usize)> = (0..config.sweep.values.len())
        .flat_map(|v| (0..n_top).map(move |t| (v, t)))
        .collect();
    let cells: Vec<Vec<Result<CellOutcome>>> = jobs
        .par_iter()
        .map(|&(v, t)| sweep_cell(config, config.sweep.values[v], t))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (v, &value) in config.sweep.values.iter().enumerate() {
        let block = &cells[v * n_top..(v + 1) * n_top];
        for (j, solver) in config.solvers.iter().enumerate() {
            let mut ok = Vec::new();
            let mut reason = String::new();
            let mut failures = 0;
            for cell in block {
                match &cell[j] {
                    Ok(c) => ok.push(c),
                    Err(e) => {
                        if failures == 0 {
                            reason = e.to_string();
                        }
                        failures += 1;
                    }
                }
            }
            let mean = |f: fn(&CellOutcome) -> f64| ok.iter().map(|c| f(c)).sum::<f64>() / ok.len() as f64;
            let ratios: Vec<f64> = ok.iter().map(|c| c.hit_ratio).collect();
            let stats = summarize(&ratios);
            let failed = failures > 0;
            rows.push(SweepRow {
                axis: config.sweep.axis,
                value,
                solver: solver.name(),
                mean_hit_ratio: if failed { f64::NAN } else { stats.mean },
                std_hit_ratio: if failed { f64::NAN } else { stats.std },
                mean_storage_util: if failed { f64::NAN } else { mean(|c| c.storage_util) },
                mean_solve_s: if failed { f64::NAN } else { mean(|c| c.solve_s) },
                seed: config.seed,
                n_topologies: n_top,
                failures,
                reason,
            });
        }
    }
    Ok(rows)
}

fn fmt(v: f64, digits: usize) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.digits$}")
    }
}

/// Writes sweep rows. Columns: `axis, value, solver, mean_hit_ratio,
/// std_hit_ratio, mean_storage_util, [mean_solve_ms,] seed, n_topologies,
/// failures, reason`. The timing column is opt-in because it is the only
/// one that differs between identical runs.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["axis", "value", "solver", "mean_hit_ratio", "std_hit_ratio", "mean_storage_util"];
    if timing {
        header.push("mean_solve_ms");
    }
    header.extend(["seed", "n_topologies", "failures", "reason"]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.axis.label().to_string(),
            r.value.to_string(),
            r.solver.clone(),
            fmt(r.mean_hit_ratio, 6),
            fmt(r.std_hit_ratio, 6),
            fmt(r.mean_storage_util, 6),
        ];
        if timing {
            rec.push(fmt(r.mean_solve_s * 1e3, 3));
        }
        rec.extend([
            r.seed.to_string(),
            r.n_topologies.to_string(),
            r.failures.to_string(),
            r.reason.clone(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One point of a figure series.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub x: f64,
    pub series: String,
    pub mean: f64,
    pub std: f64,
}

pub fn sweep_plot_points(rows: &[SweepRow]) -> Vec<PlotPoint> {
    rows.iter()
        .map(|r| PlotPoint {
            x: r.value,
            series: r.solver.clone(),
            mean: r.mean_hit_ratio,
            std: r.std_hit_ratio,
        })
        .collect()
}

pub fn write_plot_csv<W: Write>(points: &[PlotPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "series", "mean", "std"])?;
    for p in points {
        w.write_record([p.x.to_string(), p.series.clone(), fmt(p.mean, 6), fmt(p.std, 6)])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-solver hit ratio at each slot start of one topology, placements
/// fixed at t = 0. `series[j][s]` belongs to solver `j`, slot `s`.
pub fn mobility_series(config: &ExperimentConfig, topology: usize) -> Result<Vec<Vec<f64>>> {
    let seed = config.topology_seed(topology);
    let mut scenario = sample_scenario(&config.scenario, seed)?;
    let rates = build_rate_table(&scenario);
    let placements: Vec<Placement> = config
        .solvers
        .iter()
        .map(|s| s.solve(&scenario, &rates))
        .collect::<Result<_>>()?;

    let mut params = config.mobility.pattern.params();
    params.slot_s = config.mobility.slot_s;
    params.area_side_m = config.scenario.topology.area_side_m;
    let mut rng = rng_from_seed(derive_seed(seed, &[MOBILITY_STREAM]));
    let mut motion = init_motion(&scenario.users, &params, &mut rng);

    let n_slots = config.mobility.n_slots();
    let mut series = vec![Vec::with_capacity(n_slots); placements.len()];
    for slot in 0..n_slots {
        if slot > 0 {
            mobility_step(&mut motion, &params, &mut rng);
            for (user, m) in scenario.users.iter_mut().zip(&motion) {
                *user = m.position;
            }
        }
        let rates = build_rate_table(&scenario);
        let total = scenario.demand.total() as f64;
        for (s, placement) in series.iter_mut().zip(&placements) {
            s.push(hit_units(&scenario, &rates, placement) as f64 / total);
        }
    }
    Ok(series)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityRow {
    pub t_s: f64,
    pub solver: String,
    /// Mean over topologies.
    pub hit_ratio: f64,
    pub std: f64,
}

/// Hit ratio over time at slot starts `0, slot, 2 slot, ...` below the
/// horizon, averaged over topologies. Rows are ordered by time, then solver.
pub fn run_mobility(config: &ExperimentConfig) -> Result<Vec<MobilityRow>> {
    config.validate()?;
    let per_topology: Vec<Vec<Vec<f64>>> = (0..config.n_topologies)
        .into_par_iter()
        .map(|t| mobility_series(config, t))
        .collect::<Result<_>>()?;
    let names: Vec<String> = config.solvers.iter().map(SolverConfig::name).collect();
    let mut rows = Vec::new();
    for slot in 0..config.mobility.n_slots() {
        for (j, name) in names.iter().enumerate() {
            let values: Vec<f64> = per_topology.iter().map(|s| s[j][slot]).collect();
            let stats = summarize(&values);
            rows.push(MobilityRow {
                t_s: slot as f64 * config.mobility.slot_s,
                solver: name.clone(),
                hit_ratio: stats.mean,
                std: stats.std,
            });
        }
    }
    Ok(rows)
}

pub fn write_mobility_csv<W: Write>(rows: &[MobilityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "solver", "hit_ratio", "std"])?;
    for r in rows {
        w.write_record([r.t_s.to_string(), r.solver.clone(), fmt(r.hit_ratio, 6), fmt(r.std, 6)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn mobility_plot_points(rows: &[MobilityRow]) -> Vec<PlotPoint> {
    rows.iter()
        .map(|r| PlotPoint {
            x: r.t_s,
            series: r.solver.clone(),
            mean: r.hit_ratio,
            std: r.std,
        })
        .collect()
}

/// Mean wall-time of one call of `f`, repeating short calls until at least
/// `min_total_s` has elapsed so microsecond solves are measurable.
pub fn mean_wall_time<T>(min_total_s: f64, mut f: impl FnMut() -> T) -> (T, f64) {
    let start = Instant::now();
    let mut out = f();
    let mut reps = 1u32;
    while start.elapsed().as_secs_f64() < min_total_s && reps < 100_000 {
        out = f();
        reps += 1;
    }
    (out, start.elapsed().as_secs_f64() / reps as f64)
}

/// One solver against the optimum on one topology.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub topology: usize,
    pub seed: u64,
    pub solver: String,
    pub hit_ratio: f64,
    pub optimum: f64,
    pub ratio_to_opt: f64,
    pub solve_s: f64,
    pub oracle_s: f64,
    pub speedup: f64,
    /// Largest feasible placement size.
    pub gamma: usize,
    pub oracle_states: u64,
    pub reason: String,
}

const TIMING_FLOOR_S: f64 = 0.005;

/// Compares each non-exhaustive solver with the optimum on topology
/// `topology` of `config.scenario`, on expected rates.
pub fn oracle_compare_topology(config: &ExperimentConfig, topology: usize) -> Result<Vec<OracleRow>> {
    let seed = config.topology_seed(topology);
    let scenario = sample_scenario(&config.scenario, seed)?;
    let rates = build_rate_table(&scenario);
    let gamma = max_feasible_cardinality(&scenario);
    let start = Instant::now();
    let oracle = exhaustive_search(&scenario, &rates, &config.oracle);
    let oracle_s = start.elapsed().as_secs_f64();
    let solvers = config
        .solvers
        .iter()
        .filter(|s| !matches!(s, SolverConfig::Exhaustive(_)));
    let mut rows = Vec::new();
    for solver in solvers {
        let (placement, solve_s) = mean_wall_time(TIMING_FLOOR_S, || solver.solve(&scenario, &rates));
        let mut row = OracleRow {
            topology,
            seed,
            solver: solver.name(),
            hit_ratio: f64::NAN,
            optimum: f64::NAN,
            ratio_to_opt: f64::NAN,
            solve_s,
            oracle_s,
            speedup: f64::NAN,
            gamma,
            oracle_states: 0,
            reason: String::new(),
        };
        match (&oracle, placement) {
            (Err(e), _) => row.reason = format!("oracle aborted: {e}"),
            (_, Err(e)) => row.reason = e.to_string(),
            (Ok(best), Ok(placement)) => {
                let units = hit_units(&scenario, &rates, &placement);
                row.hit_ratio = units as f64 / scenario.demand.total() as f64;
                row.optimum = best.hit_ratio;
                row.ratio_to_opt = if best.hit_units == 0 {
                    1.0
                } else {
                    units as f64 / best.hit_units as f64
                };
                row.speedup = oracle_s / solve_s;
                row.oracle_states = best.visited;
            }
        }
        if let Err(Error::OracleBudget { visited, .. }) = &oracle {
            row.oracle_states = *visited;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Runs [`oracle_compare_topology`] on every topology, one at a time so the
/// wall-times are not disturbed by other jobs.
pub fn run_oracle_compare(config: &ExperimentConfig) -> Result<Vec<OracleRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for t in 0..config.n_topologies {
        rows.extend(oracle_compare_topology(config, t)?);
    }
    Ok(rows)
}

pub fn write_oracle_csv<W: Write>(rows: &[OracleRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "topology",
        "seed",
        "solver",
        "hit_ratio",
        "optimum",
        "ratio_to_opt",
        "solve_ms",
        "oracle_ms",
        "speedup",
        "gamma",
        "oracle_states",
        "reason",
    ])?;
    for r in rows {
        w.write_record([
            r.topology.to_string(),
            r.seed.to_string(),
            r.solver.clone(),
            fmt(r.hit_ratio, 6),
            fmt(r.optimum, 6),
            fmt(r.ratio_to_opt, 6),
            fmt(r.solve_s * 1e3, 4),
            fmt(r.oracle_s * 1e3, 4),
            fmt(r.speedup, 1),
            r.gamma.to_string(),
            r.oracle_states.to_string(),
            r.reason.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
