//! Monte Carlo campaigns that set simulated extinction frequencies against
//! the classifier, plus supremum-tail and generator-martingale checks,
//! parameter sweeps, and CSV/JSON persistence.
//!
//! Probabilities of events at infinite horizon are not observable. "Never"
//! is read as a small upper confidence bound and "surely" as a high,
//! nondecreasing frequency over a horizon ladder, each at two extinction
//! thresholds.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::generator::{apply_generator, QuadratureConfig};
use crate::model::{ModelParams, Verdict};
use crate::sde_engine::{pool, simulate_many, simulate_path_observed, Observer, PathRecord, SimConfig, StopEvent};
use crate::test_functions::TestFunction;

/// Fewest paths accepted per campaign cell.
pub const MIN_CELL_PATHS: usize = 100;

const Z95: f64 = 1.959_963_984_540_054;

pub const CAVEAT: &str = "finite-horizon frequencies at positive extinction thresholds; \
probability 0 is read as a small upper confidence bound and probability 1 as a high frequency \
nondecreasing over the horizon ladder";

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = Z95 * Z95;
    let den = 1.0 + z2 / n;
    let mid = (p + z2 / (2.0 * n)) / den;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / den;
    let lo = if k == 0.0 { 0.0 } else { (mid - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (mid + half).min(1.0) };
    (lo, hi)
}

/// First 16 hex digits of the SHA-256 of the JSON form.
pub fn digest<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).unwrap_or_default();
    Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Initial pair `(eps^(1 + 1/beta), u0 eps^(beta + 1))`.
pub fn scaled_pair(eps: f64, u0: f64, beta: f64) -> (f64, f64) {
    (eps.powf(1.0 + 1.0 / beta), u0 * eps.powf(beta + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Fixed { x0: f64, y0: f64 },
    Scaled { eps: f64, u0: f64, beta: f64 },
}

impl InitialCondition {
    pub fn point(&self) -> (f64, f64) {
        match *self {
            InitialCondition::Fixed { x0, y0 } => (x0, y0),
            InitialCondition::Scaled { eps, u0, beta } => scaled_pair(eps, u0, beta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Largest upper confidence bound still read as "never".
    pub no_extinction_upper: f64,
    /// Smallest final frequency read as "surely".
    pub sure_min_frequency: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            no_extinction_upper: 0.05,
            sure_min_frequency: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    /// Strictly increasing evaluation times; paths run to the last one.
    pub horizons: Vec<f64>,
    pub eps_levels: Vec<f64>,
    /// Empty means the pair stored in the parameters.
    pub initial: Vec<InitialCondition>,
    pub thresholds: Thresholds,
    pub workers: usize,
}

impl CampaignSpec {
    pub fn new(horizons: Vec<f64>) -> Self {
        Self {
            horizons,
            eps_levels: vec![1e-6, 1e-8],
            initial: Vec::new(),
            thresholds: Thresholds::default(),
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(invalid("horizons", "ladder is empty"));
        }
        if !self.horizons.windows(2).all(|w| w[0] < w[1]) || !(self.horizons[0] > 0.0) {
            return Err(invalid("horizons", format!("must be positive and strictly increasing, got {:?}", self.horizons)));
        }
        if self.eps_levels.is_empty() || self.eps_levels.iter().any(|e| !(*e > 0.0)) {
            return Err(invalid("eps_levels", format!("need at least one positive level, got {:?}", self.eps_levels)));
        }
        Ok(())
    }

    fn points(&self, params: &ModelParams) -> Vec<(f64, f64)> {
        if self.initial.is_empty() {
            vec![(params.x0, params.y0)]
        } else {
            self.initial.iter().map(InitialCondition::point).collect()
        }
    }
}

/// Extinction count of `Y` for one (initial condition, threshold, horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub initial: usize,
    pub x0: f64,
    pub y0: f64,
    pub eps_ext: f64,
    pub horizon: f64,
    pub n_paths: u64,
    pub extinct_y: u64,
    pub frequency: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub params_digest: String,
    pub cfg_digest: String,
    pub n_paths: u64,
    /// Headline cell: first initial condition, smallest threshold, last
    /// horizon.
    pub extinct_y_count: u64,
    pub frequency: f64,
    pub ci: (f64, f64),
    pub eps_levels: Vec<f64>,
    /// Largest frequency difference between thresholds over all cells.
    pub eps_gap: f64,
    pub verdict: Verdict,
    pub fired_conditions: Vec<String>,
    /// `None` for verdicts that carry no testable statement.
    pub consistent: Option<bool>,
    pub rule: String,
    pub thresholds: Thresholds,
    pub caveat: String,
    pub cells: Vec<Cell>,
}

/// One simulated path as written to the paths CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub initial: usize,
    pub eps_ext: f64,
    pub path_id: u64,
    pub event: String,
    pub event_time: f64,
    pub ext_time_x: Option<f64>,
    pub ext_time_y: Option<f64>,
    pub explode_time: Option<f64>,
    pub terminal_x: f64,
    pub terminal_y: f64,
    pub sup_x: f64,
    pub sup_y: f64,
    pub steps: u64,
    pub clamp_count: u64,
}

impl PathRow {
    pub fn from_record(initial: usize, eps_ext: f64, r: &PathRecord) -> Self {
        Self {
            initial,
            eps_ext,
            path_id: r.path_id,
            event: r.event.as_str().to_string(),
            event_time: r.event_time,
            ext_time_x: r.ext_time_x,
            ext_time_y: r.ext_time_y,
            explode_time: r.explode_time,
            terminal_x: r.terminal.0,
            terminal_y: r.terminal.1,
            sup_x: r.sup_x,
            sup_y: r.sup_y,
            steps: r.steps,
            clamp_count: r.clamp_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub summary: EstimateSummary,
    pub paths: Vec<PathRow>,
}

/// Simulates `n_paths` paths per (initial condition, threshold) up to the
/// last horizon and counts extinctions of `Y` at every horizon.
pub fn run_extinction_campaign(params: &ModelParams, cfg: &SimConfig, n_paths: u64, spec: &CampaignSpec) -> Result<Campaign> {
    spec.validate()?;
    if (n_paths as usize) < MIN_CELL_PATHS {
        return Err(Error::InsufficientPaths {
            got: n_paths as usize,
            need: MIN_CELL_PATHS,
        });
    }
    let t_max = *spec.horizons.last().unwrap_or(&cfg.horizon);
    let mut cells = Vec::new();
    let mut paths = Vec::new();
    for (i, &(x0, y0)) in spec.points(params).iter().enumerate() {
        let p = ModelParams { x0, y0, ..*params };
        for &eps in &spec.eps_levels {
            let c = SimConfig {
                horizon: t_max,
                eps_ext: eps,
                stop_on_y_extinction: true,
                checkpoints: Vec::new(),
                record_checkpoints: false,
                ..cfg.clone()
            };
            let recs = simulate_many(&p, &c, n_paths, spec.workers)?;
            for &t in &spec.horizons {
                let k = recs.iter().filter(|r| r.y_extinct_by(t)).count() as u64;
                let (lo, hi) = wilson(k, n_paths);
                cells.push(Cell {
                    initial: i,
                    x0,
                    y0,
                    eps_ext: eps,
                    horizon: t,
                    n_paths,
                    extinct_y: k,
                    frequency: k as f64 / n_paths as f64,
                    ci_lo: lo,
                    ci_hi: hi,
                });
            }
            paths.extend(recs.iter().map(|r| PathRow::from_record(i, eps, r)));
        }
    }
    let summary = summarize(params, cfg, n_paths, spec, cells);
    Ok(Campaign { summary, paths })
}

fn summarize(params: &ModelParams, cfg: &SimConfig, n_paths: u64, spec: &CampaignSpec, cells: Vec<Cell>) -> EstimateSummary {
    let rv = params.classify();
    let t_max = *spec.horizons.last().unwrap_or(&0.0);
    let eps_min = spec.eps_levels.iter().copied().fold(f64::INFINITY, f64::min);
    let head = cells
        .iter()
        .find(|c| c.initial == 0 && c.eps_ext == eps_min && c.horizon == t_max)
        .cloned();
    let mut eps_gap: f64 = 0.0;
    for a in &cells {
        for b in &cells {
            if a.initial == b.initial && a.horizon == b.horizon {
                eps_gap = eps_gap.max((a.frequency - b.frequency).abs());
            }
        }
    }
    let th = spec.thresholds;
    let last: Vec<&Cell> = cells.iter().filter(|c| c.horizon == t_max).collect();
    let (consistent, rule) = match rv.verdict {
        Verdict::NoExtinctionEither | Verdict::NoExtinctionY => (
            Some(last.iter().all(|c| c.ci_hi <= th.no_extinction_upper)),
            format!("upper bound at T = {t_max} <= {} in every cell", th.no_extinction_upper),
        ),
        Verdict::SureExtinctionY => {
            let ok = series(&cells).iter().all(|s| {
                s.windows(2).all(|w| w[0] <= w[1]) && s.last().is_some_and(|f| *f >= th.sure_min_frequency)
            });
            (
                Some(ok),
                format!("nondecreasing over the ladder and >= {} at T = {t_max}", th.sure_min_frequency),
            )
        }
        Verdict::PartialExtinctionY => {
            let n_init = cells.iter().map(|c| c.initial + 1).max().unwrap_or(0);
            let ok = (0..n_init).any(|i| {
                last.iter()
                    .filter(|c| c.initial == i)
                    .all(|c| c.extinct_y > 0 && c.extinct_y < c.n_paths)
            });
            (
                Some(ok),
                format!("extinction and survival both observed at T = {t_max} for some initial condition"),
            )
        }
        _ => (None, "no testable statement".to_string()),
    };
    let (k, freq, ci) = head.map_or((0, 0.0, (0.0, 1.0)), |c| (c.extinct_y, c.frequency, (c.ci_lo, c.ci_hi)));
    EstimateSummary {
        params_digest: digest(params),
        cfg_digest: digest(cfg),
        n_paths,
        extinct_y_count: k,
        frequency: freq,
        ci,
        eps_levels: spec.eps_levels.clone(),
        eps_gap,
        verdict: rv.verdict,
        fired_conditions: rv.fired_conditions,
        consistent,
        rule,
        thresholds: th,
        caveat: CAVEAT.to_string(),
        cells,
    }
}

/// Frequencies over the ladder for each (initial condition, threshold).
fn series(cells: &[Cell]) -> Vec<Vec<f64>> {
    let mut keys: Vec<(usize, f64)> = Vec::new();
    for c in cells {
        if !keys.iter().any(|k| k.0 == c.initial && k.1 == c.eps_ext) {
            keys.push((c.initial, c.eps_ext));
        }
    }
    keys.iter()
        .map(|k| {
            cells
                .iter()
                .filter(|c| c.initial == k.0 && c.eps_ext == k.1)
                .map(|c| c.frequency)
                .collect()
        })
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, v)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Writes `<stem>_paths.csv`, `<stem>_cells.csv` and `<stem>_summary.json`.
pub fn write_campaign(dir: &Path, stem: &str, c: &Campaign) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join(format!("{stem}_paths.csv")), &c.paths)?;
    write_csv(&dir.join(format!("{stem}_cells.csv")), &c.summary.cells)?;
    write_json(&dir.join(format!("{stem}_summary.json")), &c.summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupTailCell {
    pub x0: f64,
    pub eps: f64,
    pub n_paths: u64,
    pub hits: u64,
    pub probability: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupTailReport {
    pub cells: Vec<SupTailCell>,
    /// Nondecreasing in `x0` up to overlapping intervals.
    pub monotone_in_x0: bool,
    /// Nonincreasing in `eps` up to overlapping intervals.
    pub monotone_in_eps: bool,
    /// Least-squares slope of `ln P` against `ln x0` per level, over cells
    /// with `x0 < eps` and `0 < P < 1`.
    pub slopes: Vec<(f64, Option<f64>)>,
}

/// Estimates `P(sup_t X_t >= eps)` over the configured horizon. Levels
/// above `n_max` are reported as 0 since paths stop there.
pub fn run_sup_tail_check(
    params: &ModelParams,
    cfg: &SimConfig,
    x0_grid: &[f64],
    eps_levels: &[f64],
    n_paths: u64,
    workers: usize,
) -> Result<SupTailReport> {
    let mut xs = x0_grid.to_vec();
    xs.sort_by(f64::total_cmp);
    let mut es = eps_levels.to_vec();
    es.sort_by(f64::total_cmp);
    let mut cells = Vec::new();
    for &x0 in &xs {
        let p = ModelParams { x0, ..*params };
        let c = SimConfig {
            stop_on_y_extinction: false,
            ..cfg.clone()
        };
        let recs = simulate_many(&p, &c, n_paths, workers)?;
        for &eps in &es {
            let hits = if eps > cfg.n_max {
                0
            } else {
                recs.iter().filter(|r| r.sup_x >= eps).count() as u64
            };
            let (lo, hi) = wilson(hits, n_paths);
            cells.push(SupTailCell {
                x0,
                eps,
                n_paths,
                hits,
                probability: hits as f64 / n_paths as f64,
                ci_lo: lo,
                ci_hi: hi,
            });
        }
    }
    let at = |i: usize, j: usize| &cells[i * es.len() + j];
    let mut mono_x = true;
    let mut mono_e = true;
    for j in 0..es.len() {
        for i in 1..xs.len() {
            mono_x &= at(i, j).ci_hi >= at(i - 1, j).ci_lo;
        }
    }
    for i in 0..xs.len() {
        for j in 1..es.len() {
            mono_e &= at(i, j).ci_lo <= at(i, j - 1).ci_hi;
        }
    }
    let slopes = es
        .iter()
        .enumerate()
        .map(|(j, &eps)| {
            let pts: Vec<(f64, f64)> = (0..xs.len())
                .map(|i| at(i, j))
                .filter(|c| c.x0 < eps && c.probability > 0.0 && c.probability < 1.0)
                .map(|c| (c.x0.ln(), c.probability.ln()))
                .collect();
            (eps, ls_slope(&pts))
        })
        .collect();
    Ok(SupTailReport {
        cells,
        monotone_in_x0: mono_x,
        monotone_in_eps: mono_e,
        slopes,
    })
}

fn ls_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingalePoint {
    pub t: f64,
    pub mean: f64,
    pub std_err: f64,
    /// `|mean| <= 3 std_err`; a zero sample passes exactly.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub family: String,
    pub dt: f64,
    pub n_paths: u64,
    pub points: Vec<MartingalePoint>,
    pub pass: bool,
}

/// Accumulates `int Lg ds` with the left-point rule and records
/// `g(X_t, Y_t) - g(x0, y0) - int_0^t Lg ds` at every checkpoint.
struct MartingaleObserver<'a> {
    params: &'a ModelParams,
    g: &'a TestFunction,
    quad: &'a QuadratureConfig,
    g0: f64,
    integral: f64,
    values: Vec<f64>,
    error: Option<Error>,
}

impl Observer for MartingaleObserver<'_> {
    fn on_step(&mut self, _t: f64, dt: f64, (x, y): (f64, f64)) {
        if self.error.is_some() {
            return;
        }
        match apply_generator(self.params, self.g, x, y, self.quad) {
            Ok(l) => self.integral += l.total * dt,
            Err(e) => self.error = Some(e),
        }
    }

    fn on_checkpoint(&mut self, _i: usize, _t: f64, (x, y): (f64, f64)) {
        if self.error.is_some() {
            return;
        }
        match self.g.value(x, y) {
            Ok(v) => self.values.push(v - self.g0 - self.integral),
            Err(e) => self.error = Some(e),
        }
    }
}

/// Sample mean and standard error of `M_t^g` at every time of `t_grid`.
/// Paths stopping before the last time make the check void.
pub fn run_martingale_check(
    params: &ModelParams,
    g: &TestFunction,
    t_grid: &[f64],
    n_paths: u64,
    cfg: &SimConfig,
    quad: &QuadratureConfig,
    workers: usize,
) -> Result<MartingaleReport> {
    let t_max = t_grid.last().copied().ok_or_else(|| invalid("t_grid", "is empty"))?;
    if n_paths < 2 {
        return Err(invalid("n_paths", "need at least two paths"));
    }
    let c = SimConfig {
        horizon: t_max,
        checkpoints: t_grid.to_vec(),
        record_checkpoints: false,
        stop_on_y_extinction: false,
        ..cfg.clone()
    };
    c.validate(params)?;
    let g0 = g.value(params.x0, params.y0)?;
    let runs: Vec<Result<(PathRecord, Vec<f64>, Option<Error>)>> = pool(workers)?.install(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|i| {
                let mut obs = MartingaleObserver {
                    params,
                    g,
                    quad,
                    g0,
                    integral: 0.0,
                    values: Vec::with_capacity(t_grid.len()),
                    error: None,
                };
                let rec = simulate_path_observed(params, &c, i, &mut obs)?;
                Ok((rec, obs.values, obs.error))
            })
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let contacts = runs
        .iter()
        .filter(|(r, _, _)| r.event != StopEvent::HorizonEnd && r.event_time < t_max)
        .count();
    if contacts > 0 {
        return Err(Error::BoundaryContact { count: contacts, t_max });
    }
    let mut values = Vec::with_capacity(runs.len());
    for (_, v, e) in runs {
        if let Some(e) = e {
            return Err(e);
        }
        values.push(v);
    }
    let runs = values;
    let n = n_paths as f64;
    let points: Vec<MartingalePoint> = t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mean = runs.iter().map(|v| v[k]).sum::<f64>() / n;
            let var = runs.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            MartingalePoint {
                t,
                mean,
                std_err: se,
                pass: mean.abs() <= 3.0 * se,
            }
        })
        .collect();
    Ok(MartingaleReport {
        family: g.family().to_string(),
        dt: cfg.dt,
        n_paths,
        pass: points.iter().all(|p| p.pass),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ModelParams,
    pub cfg: SimConfig,
    /// Parameter name and its value grid; cells are the Cartesian product.
    pub axes: Vec<(String, Vec<f64>)>,
    pub campaign: CampaignSpec,
    pub n_paths: u64,
    pub strict: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(invalid("axes", "no parameter to sweep"));
        }
        for (name, grid) in &self.axes {
            if !ModelParams::field_names().contains(&name.as_str()) {
                return Err(invalid("axes", format!("unknown parameter `{name}`")));
            }
            if grid.is_empty() {
                return Err(invalid("axes", format!("grid of `{name}` is empty")));
            }
        }
        self.campaign.validate()
    }

    /// Parameter values of every cell, first axis slowest.
    pub fn cells(&self) -> Vec<Vec<(String, f64)>> {
        let mut out: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for (name, grid) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    grid.iter().map(move |&v| {
                        let mut c = prefix.clone();
                        c.push((name.clone(), v));
                        c
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub index: usize,
    pub values: Vec<(String, f64)>,
    pub summary: Option<EstimateSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

/// Runs one extinction campaign per grid cell. A failing cell is recorded
/// with its error and the sweep moves on. With `out` set, every finished
/// campaign and the consolidated `regime_map.csv` are written there.
pub fn run_sweep(spec: &SweepSpec, out: Option<&Path>) -> Result<SweepResult> {
    spec.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let mut cells = Vec::new();
    for (index, values) in spec.cells().into_iter().enumerate() {
        let run = || -> Result<Campaign> {
            let mut p = spec.base;
            for (k, v) in &values {
                p.set(k, *v)?;
            }
            let p = p.validate(spec.strict)?;
            run_extinction_campaign(&p, &spec.cfg, spec.n_paths, &spec.campaign)
        };
        let cell = match run() {
            Ok(c) => {
                if let Some(dir) = out {
                    write_campaign(dir, &format!("cell{index:04}"), &c)?;
                }
                SweepCell {
                    index,
                    values,
                    summary: Some(c.summary),
                    error: None,
                }
            }
            Err(e) => SweepCell {
                index,
                values,
                summary: None,
                error: Some(e.to_string()),
            },
        };
        cells.push(cell);
        if let Some(dir) = out {
            write_regime_map(&dir.join("regime_map.csv"), spec, &cells)?;
        }
    }
    Ok(SweepResult { cells })
}

/// One row per cell: axis values, verdict, headline frequency and
/// interval, threshold gap, consistency flag, error.
pub fn write_regime_map(path: &Path, spec: &SweepSpec, cells: &[SweepCell]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = vec!["cell".into()];
    header.extend(spec.axes.iter().map(|a| a.0.clone()));
    header.extend(
        ["verdict", "frequency", "ci_lo", "ci_hi", "eps_gap", "consistent", "error"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for c in cells {
        let mut row = vec![c.index.to_string()];
        row.extend(c.values.iter().map(|v| format!("{:?}", v.1)));
        match &c.summary {
            Some(s) => row.extend([
                s.verdict.as_str().to_string(),
                format!("{:?}", s.frequency),
                format!("{:?}", s.ci.0),
                format!("{:?}", s.ci.1),
                format!("{:?}", s.eps_gap),
                s.consistent.map_or(String::new(), |b| b.to_string()),
                String::new(),
            ]),
            None => {
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(c.error.clone().unwrap_or_default());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
