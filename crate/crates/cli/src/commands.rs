//! The five pipeline stages. Each reads its inputs from, and writes its
//! outputs under, the configured output directory:
//!
//! ```text
//! <out>/config.toml                  resolved configuration (simulate)
//! <out>/trajectories/member_NNN.txt  one file per ensemble member
//! <out>/trajectories/manifest.txt
//! <out>/learn/coefficients.txt       learned coefficient table
//! <out>/learn/report.txt
//! <out>/solve_<true|learned>/        mrt.{csv,vtk}, escape_<G>.{csv,vtk}, report.txt
//! <out>/oracle/report.txt
//! <out>/compare.txt
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use escapekit::learn::{
    build_regression, extract_model, fit_least_squares, CoefficientTable, FitOptions,
};
use escapekit::oracle::{estimate_exit, mix_seed, OracleOptions, Z99};
use escapekit::pde::{
    build_grid, solution_report, write_csv, write_vtk, AverageRule, FieldSolution, FieldSolver,
    Grid, SolverOptions,
};
use escapekit::report::KvReport;
use escapekit::sde::{read_trajectory, simulate_ensemble, write_trajectory, SdeModel};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Learn,
    Solve,
    Compare,
    Oracle,
}

/// Which model a solve or oracle run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelSource {
    #[default]
    True,
    Learned,
}

impl ModelSource {
    pub fn name(self) -> &'static str {
        match self {
            ModelSource::True => "true",
            ModelSource::Learned => "learned",
        }
    }
}

impl FromStr for ModelSource {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "true" => Ok(ModelSource::True),
            "learned" => Ok(ModelSource::Learned),
            other => Err(CliError::config(format!(
                "model source must be `true` or `learned`, got `{other}`"
            ))),
        }
    }
}

/// Command-line replacements for config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces `simulate.seed` and `oracle.seed`.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.simulate.seed = seed;
            if let Some(o) = cfg.oracle.as_mut() {
                o.seed = seed;
            }
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
    }
}

/// Loads the config, applies overrides and runs one command. Returns the
/// summary printed on stdout.
pub fn run(
    command: Command,
    config: &Path,
    overrides: &Overrides,
    source: ModelSource,
) -> Result<KvReport, CliError> {
    let mut cfg = RunConfig::load(config)?;
    overrides.apply(&mut cfg);
    match command {
        Command::Simulate => simulate(&cfg),
        Command::Learn => learn(&cfg),
        Command::Solve => solve(&cfg, source),
        Command::Compare => compare(&cfg),
        Command::Oracle => oracle(&cfg, source),
    }
}

fn trajectory_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("trajectories")
}

fn learn_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("learn")
}

fn solve_dir(cfg: &RunConfig, source: ModelSource) -> PathBuf {
    cfg.output_dir.join(format!("solve_{}", source.name()))
}

fn oracle_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("oracle")
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

fn read_report(path: &Path) -> Result<KvReport, CliError> {
    Ok(KvReport::parse(&read_text(path)?)?)
}

fn member_file(i: usize) -> String {
    format!("member_{i:03}.txt")
}

fn escape_file_stem(spec: &str) -> String {
    format!("escape_{}", spec.replace('+', "-"))
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn simulate(cfg: &RunConfig) -> Result<KvReport, CliError> {
    let model = cfg.true_model()?;
    let members = cfg.members();
    let s = &cfg.simulate;
    let records = simulate_ensemble(&model, &members, s.steps, s.dt, s.seed)?;

    let dir = trajectory_dir(cfg);
    create_dir(&dir)?;
    write_text(&cfg.output_dir.join("config.toml"), &cfg.to_toml())?;
    let mut manifest = KvReport::new();
    manifest.push("model", cfg.model.name);
    manifest.push_f64("intensity", cfg.model.intensity);
    manifest.push("members", records.len());
    manifest.push("steps", s.steps);
    manifest.push_f64("dt", s.dt);
    manifest.push("seed", s.seed);
    for (i, (rec, x0)) in records.iter().zip(&members).enumerate() {
        let name = member_file(i);
        let file = File::create(dir.join(&name))?;
        let mut w = BufWriter::new(file);
        write_trajectory(rec, &mut w)?;
        w.flush()?;
        manifest.push(format!("member.{i}.file"), &name);
        manifest.push(format!("member.{i}.x0"), join(x0));
    }
    write_text(&dir.join("manifest.txt"), &manifest.to_text())?;
    Ok(manifest)
}

fn load_trajectories(cfg: &RunConfig) -> Result<Vec<escapekit::TrajectoryRecord64>, CliError> {
    let dir = trajectory_dir(cfg);
    let manifest = read_report(&dir.join("manifest.txt"))?;
    let count: usize = manifest
        .get("members")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::config("trajectory manifest has no member count"))?;
    (0..count)
        .map(|i| {
            let name = manifest.get(&format!("member.{i}.file")).ok_or_else(|| {
                CliError::config(format!("manifest lists no file for member {i}"))
            })?;
            let file = File::open(dir.join(name))
                .map_err(|e| CliError::config(format!("cannot open {name}: {e}")))?;
            Ok(read_trajectory(BufReader::new(file))?)
        })
        .collect()
}

/// Largest off-diagonal noise weight: channel `k`'s row in component `c != k`.
fn max_crosstalk(table: &CoefficientTable<f64>) -> f64 {
    let basis = table.basis();
    let p = basis.polynomial_len();
    let mut worst = 0.0f64;
    for (j, col) in basis.noise_columns().iter().enumerate() {
        for c in 0..table.state_dim() {
            if c != col.noise_index {
                worst = worst.max(table.xi()[(p + j, c)].abs());
            }
        }
    }
    worst
}

pub fn learn(cfg: &RunConfig) -> Result<KvReport, CliError> {
    let records = load_trajectories(cfg)?;
    let reg = build_regression(&records, &cfg.basis)?;
    let opts = FitOptions {
        threshold: cfg.learn.threshold,
        max_sweeps: cfg.learn.max_sweeps,
        ..FitOptions::default()
    };
    let (table, fit) = fit_least_squares(&reg, &opts)?;

    let dir = learn_dir(cfg);
    create_dir(&dir)?;
    write_text(&dir.join("coefficients.txt"), &table.to_text())?;
    let names = escapekit::basis::variable_names(table.state_dim());
    let mut r = KvReport::new();
    r.push("members", records.len());
    r.push("samples", fit.samples);
    r.push("columns", cfg.basis.len());
    r.push_f64("condition_estimate", fit.condition_estimate);
    r.push("sweeps", fit.sweeps);
    r.push("converged", fit.converged);
    for (k, name) in names.iter().enumerate() {
        r.push_f64(format!("residual_rms.{name}"), fit.residual_rms[k]);
        r.push(format!("active_terms.{name}"), fit.active_terms[k]);
    }
    r.push_f64("crosstalk_max", max_crosstalk(&table));
    match extract_model(&table, cfg.learn.crosstalk_tol) {
        Ok(_) => r.push("extract", "ok"),
        Err(e) => r.push("extract", e.to_string().replace('\n', " ")),
    };
    write_text(&dir.join("report.txt"), &r.to_text())?;
    Ok(r)
}

fn load_model(cfg: &RunConfig, source: ModelSource) -> Result<SdeModel<f64>, CliError> {
    match source {
        ModelSource::True => cfg.true_model(),
        ModelSource::Learned => {
            let path = learn_dir(cfg).join("coefficients.txt");
            let table = CoefficientTable::<f64>::from_text(&read_text(&path)?)?;
            Ok(extract_model(&table, cfg.learn.crosstalk_tol)?)
        }
    }
}

fn solver_options(cfg: &RunConfig) -> SolverOptions<f64> {
    SolverOptions {
        tol: cfg.solve.tol,
        max_iter: cfg.solve.max_iter,
    }
}

/// Escape problems as (spec, label ids).
type Problems = Vec<(String, Vec<usize>)>;

fn prepare(cfg: &RunConfig, source: ModelSource) -> Result<(FieldSolver<f64>, Problems), CliError> {
    let model = load_model(cfg, source)?;
    let domain = cfg.build_domain()?;
    let problems = cfg.escape_problems(&domain)?;
    let grid = build_grid(domain, cfg.resolution())?;
    let solver = FieldSolver::new(&model, grid, solver_options(cfg))?;
    Ok((solver, problems))
}

fn export(field: &FieldSolution<f64>, dir: &Path, stem: &str) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
    write_csv(field, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(format!("{stem}.vtk")))?);
    write_vtk(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn solve(cfg: &RunConfig, source: ModelSource) -> Result<KvReport, CliError> {
    let (solver, problems) = prepare(cfg, source)?;
    let dir = solve_dir(cfg, source);
    create_dir(&dir)?;
    let mut r = KvReport::new();
    r.push("model", source.name());
    r.push(
        "average_rule",
        match cfg.solve.average {
            AverageRule::Cell => "cell",
            AverageRule::Nodal => "nodal",
        },
    );
    if cfg.solve.mrt {
        let u = solver.mean_residence_time()?;
        export(&u, &dir, "mrt")?;
        r.extend("mrt.", &solution_report(&u));
    }
    for (spec, ids) in &problems {
        let p = solver.escape_probability(ids)?;
        export(&p, &dir, &escape_file_stem(spec))?;
        let prefix = format!("escape.{spec}.");
        r.extend(&prefix, &solution_report(&p));
        r.push_f64(format!("{prefix}P"), p.average_with(cfg.solve.average));
    }
    write_text(&dir.join("report.txt"), &r.to_text())?;
    Ok(r)
}

/// Field values per row of an exported CSV, with the coordinate text as key.
fn read_field_csv(path: &Path) -> Result<Vec<(String, f64)>, CliError> {
    let text = read_text(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (coords, value) = line.rsplit_once(',').ok_or_else(|| {
                CliError::config(format!("malformed row in {}: {line}", path.display()))
            })?;
            let v: f64 = value.trim().parse().map_err(|_| {
                CliError::config(format!("bad value in {}: {line}", path.display()))
            })?;
            Ok((coords.to_string(), v))
        })
        .collect()
}

fn max_abs_difference(a: &Path, b: &Path) -> Result<f64, CliError> {
    let fa = read_field_csv(a)?;
    let fb = read_field_csv(b)?;
    if fa.len() != fb.len() || fa.iter().zip(&fb).any(|(x, y)| x.0 != y.0) {
        return Err(CliError::config(format!(
            "{} and {} are on different grids",
            a.display(),
            b.display()
        )));
    }
    Ok(fa
        .iter()
        .zip(&fb)
        .map(|(x, y)| (x.1 - y.1).abs())
        .fold(0.0, f64::max))
}

fn require_f64(r: &KvReport, key: &str, what: &Path) -> Result<f64, CliError> {
    r.get_f64(key)
        .ok_or_else(|| CliError::config(format!("{} has no `{key}`", what.display())))
}

/// Error report between the true and learned solves, plus the oracle
/// verdict when an oracle report exists.
pub fn compare(cfg: &RunConfig) -> Result<KvReport, CliError> {
    let dt = solve_dir(cfg, ModelSource::True);
    let dl = solve_dir(cfg, ModelSource::Learned);
    let (pt, pl) = (dt.join("report.txt"), dl.join("report.txt"));
    let rt = read_report(&pt)?;
    let rl = read_report(&pl)?;
    let mut r = KvReport::new();
    if cfg.solve.mrt {
        let ut = require_f64(&rt, "mrt.max", &pt)?;
        let ul = require_f64(&rl, "mrt.max", &pl)?;
        r.push_f64("max_u.true", ut);
        r.push_f64("max_u.learned", ul);
        r.push_f64("error_u_peak", (ul - ut).abs());
        r.push_f64(
            "error_u",
            max_abs_difference(&dt.join("mrt.csv"), &dl.join("mrt.csv"))?,
        );
    }
    for spec in &cfg.solve.escape {
        let key = format!("escape.{spec}.P");
        let a = require_f64(&rt, &key, &pt)?;
        let b = require_f64(&rl, &key, &pl)?;
        r.push_f64(format!("P.{spec}.true"), a);
        r.push_f64(format!("P.{spec}.learned"), b);
        r.push_f64(format!("error_P.{spec}"), (b - a).abs());
    }
    let oracle_report = oracle_dir(cfg).join("report.txt");
    if oracle_report.exists() {
        let o = read_report(&oracle_report)?;
        for key in ["model", "pass", "checks", "failures", "worst_ratio"] {
            if let Some(v) = o.get(key) {
                r.push(format!("oracle.{key}"), v);
            }
        }
    }
    write_text(&cfg.output_dir.join("compare.txt"), &r.to_text())?;
    Ok(r)
}

/// Distinct interior grid nodes near sampled interior points.
fn probe_nodes(grid: &Arc<Grid<f64>>, count: usize, seed: u64) -> Result<Vec<usize>, CliError> {
    let mut nodes = Vec::with_capacity(count);
    let candidates = grid.domain().sample_points(8 * count, seed);
    for p in candidates {
        let node = grid.nearest_node(&p);
        if grid.unknown_of_node(node).is_some() && !nodes.contains(&node) {
            nodes.push(node);
            if nodes.len() == count {
                return Ok(nodes);
            }
        }
    }
    Err(CliError::config(format!(
        "could not place {count} interior probes on the grid"
    )))
}

struct Check {
    pde: f64,
    shift: f64,
    mc: f64,
    /// 99% confidence interval of `mc`.
    low: f64,
    high: f64,
    allowance: f64,
}

impl Check {
    /// Distance of the corrected PDE value from the MC estimate, in units of
    /// the tolerance on that side. At most 1 for a pass.
    fn ratio(&self) -> f64 {
        let target = self.pde + self.shift;
        let (dev, tol) = if target >= self.mc {
            (target - self.mc, self.high - self.mc + self.allowance)
        } else {
            (self.mc - target, self.mc - self.low + self.allowance)
        };
        if dev == 0.0 {
            0.0
        } else {
            dev / tol
        }
    }

    fn pass(&self) -> bool {
        self.ratio() <= 1.0
    }

    fn push(&self, r: &mut KvReport, prefix: &str) {
        r.push_f64(format!("{prefix}.pde"), self.pde);
        r.push_f64(format!("{prefix}.monitoring_shift"), self.shift);
        r.push_f64(format!("{prefix}.mc"), self.mc);
        r.push_f64(format!("{prefix}.ci99_low"), self.low);
        r.push_f64(format!("{prefix}.ci99_high"), self.high);
        r.push_f64(format!("{prefix}.allowance"), self.allowance);
        r.push(format!("{prefix}.pass"), self.pass());
    }
}

/// Monte Carlo exit statistics at interior probe nodes, checked against the
/// PDE fields of the same model.
///
/// A check passes when `pde + shift` lies in the 99% interval of the MC
/// estimate widened by `allowance` on both sides. Mean exit times use the
/// normal interval, frequencies the Wilson score interval. `shift` is
/// the first-order effect of detecting exits only at multiples of the MC
/// step; `allowance` is `3 h^2` times the local second-difference scale of
/// the field.
pub fn oracle(cfg: &RunConfig, source: ModelSource) -> Result<KvReport, CliError> {
    let o = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| CliError::config("config has no [oracle] block"))?;
    let model = load_model(cfg, source)?;
    let domain = cfg.build_domain()?;
    let problems = cfg.escape_problems(&domain)?;
    let grid = build_grid(domain.clone(), cfg.resolution())?;
    let solver = FieldSolver::new(&model, grid.clone(), solver_options(cfg))?;
    let u = solver.mean_residence_time()?;
    let wu = solver.discrete_monitoring_shift(&u, o.dt)?;
    let mut fields = Vec::with_capacity(problems.len());
    for (spec, ids) in &problems {
        let p = solver.escape_probability(ids)?;
        let w = solver.discrete_monitoring_shift(&p, o.dt)?;
        fields.push((spec, ids, p, w));
    }
    let probes = probe_nodes(&grid, o.probes, o.seed)?;

    let mut r = KvReport::new();
    r.push("model", source.name());
    r.push("paths", o.paths);
    r.push_f64("dt", o.dt);
    r.push_f64("horizon", o.horizon);
    r.push("probes", probes.len());
    let mut checks = Vec::new();
    let mut body = KvReport::new();
    for (j, &node) in probes.iter().enumerate() {
        let x = grid.coords(node);
        let opts = OracleOptions {
            paths: o.paths,
            dt: o.dt,
            horizon: o.horizon,
            seed: mix_seed(o.seed, j as u64),
        };
        let est = estimate_exit(&model, &domain, &x, &opts)?;
        let prefix = format!("probe.{j}");
        body.push(format!("{prefix}.x"), join(&x));
        body.push(format!("{prefix}.censored"), est.censored);
        let mrt = Check {
            pde: u.values[node],
            shift: wu[node],
            mc: est.mean_exit_time,
            low: est.mean_exit_time - Z99 * est.exit_time_se,
            high: est.mean_exit_time + Z99 * est.exit_time_se,
            allowance: u.discretization_allowance(node),
        };
        mrt.push(&mut body, &format!("{prefix}.mrt"));
        checks.push(mrt);
        for (spec, ids, p, w) in &fields {
            let (f, _) = est.frequency_of(ids);
            let (low, high) = est.frequency_interval(ids, Z99);
            let c = Check {
                pde: p.values[node],
                shift: w[node],
                mc: f,
                low,
                high,
                allowance: p.discretization_allowance(node),
            };
            c.push(&mut body, &format!("{prefix}.escape.{spec}"));
            checks.push(c);
        }
    }
    let failures = checks.iter().filter(|c| !c.pass()).count();
    let worst = checks.iter().map(Check::ratio).fold(0.0, f64::max);
    r.push("pass", failures == 0);
    r.push("checks", checks.len());
    r.push("failures", failures);
    r.push_f64("worst_ratio", worst);
    r.extend("", &body);

    let dir = oracle_dir(cfg);
    create_dir(&dir)?;
    write_text(&dir.join("report.txt"), &r.to_text())?;
    Ok(r)
}
