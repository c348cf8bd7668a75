//! Jump-adapted Euler scheme for the coupled system, path simulation with
//! stopping events, and synchronously coupled pairs.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::stable_measure::StableMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallJumpMode {
    Drop,
    Gaussian,
}

impl std::str::FromStr for SmallJumpMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" => Ok(SmallJumpMode::Drop),
            "gaussian" => Ok(SmallJumpMode::Gaussian),
            _ => Err(Error::Config(format!("small_jump_mode must be `drop` or `gaussian`, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    /// Jumps above this size are simulated individually.
    pub jump_cutoff: f64,
    pub small_jump_mode: SmallJumpMode,
    pub eps_ext: f64,
    pub n_max: f64,
    pub horizon: f64,
    pub master_seed: u64,
    /// Upper bound on the expected number of big jumps per step.
    pub max_jump_mean: f64,
    /// Upper bound on the fraction of the current state the deterministic
    /// drift may remove in one step.
    pub max_drift_fraction: f64,
    /// Times at which the state is recorded and observers are notified.
    pub checkpoints: Vec<f64>,
    pub record_checkpoints: bool,
    /// End the path as soon as `Y` is extinct.
    pub stop_on_y_extinction: bool,
    /// Fail a path whose clamp magnitude exceeds the jump cutoff.
    pub strict: bool,
    pub max_steps: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            jump_cutoff: 0.05,
            small_jump_mode: SmallJumpMode::Gaussian,
            eps_ext: 1e-8,
            n_max: 1e6,
            horizon: 10.0,
            master_seed: 0,
            max_jump_mean: 0.1,
            max_drift_fraction: 0.5,
            checkpoints: Vec::new(),
            record_checkpoints: false,
            stop_on_y_extinction: false,
            strict: false,
            max_steps: 2_000_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.jump_cutoff > 0.0 && self.jump_cutoff.is_finite()) {
            return bad(format!("jump_cutoff must be positive, got {}", self.jump_cutoff));
        }
        if !(self.eps_ext > 0.0) {
            return bad(format!("eps_ext must be positive, got {}", self.eps_ext));
        }
        if !(self.eps_ext < params.x0.min(params.y0)) {
            return bad(format!(
                "eps_ext = {} must be below min(x0, y0) = {}",
                self.eps_ext,
                params.x0.min(params.y0)
            ));
        }
        if !(self.n_max > params.x0.max(params.y0)) {
            return bad(format!(
                "n_max = {} must exceed max(x0, y0) = {}",
                self.n_max,
                params.x0.max(params.y0)
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.max_jump_mean > 0.0) || !(self.max_drift_fraction > 0.0 && self.max_drift_fraction <= 1.0) {
            return bad("max_jump_mean must be positive and max_drift_fraction in (0, 1]".into());
        }
        let mut prev = 0.0;
        for &c in &self.checkpoints {
            if !(c > prev && c <= self.horizon) {
                return bad(format!("checkpoints must be increasing within (0, horizon], got {c}"));
            }
            prev = c;
        }
        Ok(())
    }

    /// `n` equally spaced checkpoints ending at the horizon.
    pub fn with_uniform_checkpoints(mut self, n: usize) -> Self {
        self.checkpoints = (1..=n).map(|i| self.horizon * i as f64 / n as f64).collect();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopEvent {
    ExtinctX,
    ExtinctY,
    ExtinctBoth,
    Explode,
    HorizonEnd,
}

impl StopEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopEvent::ExtinctX => "ExtinctX",
            StopEvent::ExtinctY => "ExtinctY",
            StopEvent::ExtinctBoth => "ExtinctBoth",
            StopEvent::Explode => "Explode",
            StopEvent::HorizonEnd => "HorizonEnd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_id: u64,
    /// First stopping event, `HorizonEnd` if none occurred.
    pub event: StopEvent,
    pub event_time: f64,
    pub ext_time_x: Option<f64>,
    pub ext_time_y: Option<f64>,
    pub explode_time: Option<f64>,
    pub terminal: (f64, f64),
    pub sup_x: f64,
    pub sup_y: f64,
    pub clamp_count: u64,
    pub max_clamp: f64,
    pub end_time: f64,
    pub steps: u64,
    pub checkpoints: Option<Vec<(f64, f64, f64)>>,
}

impl PathRecord {
    /// Whether `Y` was observed extinct no later than `t`.
    pub fn y_extinct_by(&self, t: f64) -> bool {
        self.ext_time_y.is_some_and(|s| s <= t)
    }
}

/// Normal and jump inputs of one step. `db1`, `db2` are Brownian increments
/// over the step, `small1`, `small2` standard normals for the small-jump
/// part, `jumps_x`, `jumps_y` summed big jumps.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDraws {
    pub db1: f64,
    pub db2: f64,
    pub small1: f64,
    pub small2: f64,
    pub jumps_x: f64,
    pub jumps_y: f64,
}

#[derive(Debug, Clone, Copy)]
struct Side {
    c1: f64,
    e1: f64,
    c2: f64,
    e2: f64,
    c3: f64,
    e3: f64,
    eta: f64,
    theta: f64,
    kappa: f64,
    // Big-jump rate, compensator and small-jump variance per unit of c3 z^e3.
    lam: f64,
    comp: f64,
    var: f64,
    inv_alpha: f64,
}

fn powe(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

fn pw(c: f64, x: f64, e: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * powe(x, e)
    }
}

/// State-dependent coefficients of one component, evaluated once per step.
#[derive(Debug, Clone, Copy, Default)]
struct Local {
    drift: f64,
    /// `c3 z^e3`, the intensity factor of the jump part.
    j: f64,
    /// Diffusion coefficient `sqrt(2 c2 z^e2)`.
    sd: f64,
}

impl Side {
    fn new(c: [f64; 3], e: [f64; 3], alpha: f64, eta: f64, theta: f64, kappa: f64, delta: f64) -> Result<Self> {
        let m = StableMeasure::new(alpha)?;
        Ok(Self {
            c1: c[0],
            e1: e[0] + 1.0,
            c2: c[1],
            e2: e[1] + 2.0,
            c3: c[2],
            e3: e[2] + alpha,
            eta,
            theta,
            kappa,
            lam: m.tail_mass(delta)?,
            comp: m.big_jump_mean(delta)?,
            var: m.small_jump_variance(delta)?,
            inv_alpha: 1.0 / alpha,
        })
    }

    /// Coefficients at own state `z > 0` and other state `w`.
    fn local(&self, z: f64, w: f64) -> Local {
        if z <= 0.0 {
            return Local::default();
        }
        let j = pw(self.c3, z, self.e3);
        let inter = if self.eta == 0.0 || w == 0.0 {
            0.0
        } else {
            self.eta * powe(z, self.theta) * powe(w, self.kappa)
        };
        Local {
            drift: pw(self.c1, z, self.e1) + inter + j * self.comp,
            j,
            sd: if self.c2 == 0.0 {
                0.0
            } else {
                (2.0 * self.c2 * powe(z, self.e2)).sqrt()
            },
        }
    }

    fn advance(&self, z: f64, l: &Local, dt: f64, db: f64, small: f64, jumps: f64, gaussian: bool) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        let mut next = z - l.drift * dt + jumps + l.sd * db;
        if gaussian && l.j != 0.0 {
            next += (l.j * self.var * dt).sqrt() * small;
        }
        next
    }
}

/// Per-parameter constants of the scheme.
#[derive(Debug, Clone, Copy)]
pub struct Dynamics {
    x: Side,
    y: Side,
    delta: f64,
    gaussian: bool,
}

impl Dynamics {
    pub fn new(params: &ModelParams, cfg: &SimConfig) -> Result<Self> {
        let p = params;
        Ok(Self {
            x: Side::new(
                [p.a1, p.a2, p.a3],
                [p.p1, p.p2, p.p3],
                p.alpha1,
                p.eta1,
                p.theta1,
                p.kappa1,
                cfg.jump_cutoff,
            )?,
            y: Side::new(
                [p.b1, p.b2, p.b3],
                [p.q1, p.q2, p.q3],
                p.alpha2,
                p.eta2,
                p.theta2,
                p.kappa2,
                cfg.jump_cutoff,
            )?,
            delta: cfg.jump_cutoff,
            gaussian: cfg.small_jump_mode == SmallJumpMode::Gaussian,
        })
    }

    fn locals(&self, state: (f64, f64)) -> (Local, Local) {
        (self.x.local(state.0, state.1), self.y.local(state.1, state.0))
    }

    fn rates(&self, l: &(Local, Local)) -> (f64, f64) {
        (l.0.j * self.x.lam, l.1.j * self.y.lam)
    }

    /// Big-jump arrival rates `(x, y)` at a state.
    pub fn jump_rates(&self, state: (f64, f64)) -> (f64, f64) {
        self.rates(&self.locals(state))
    }

    /// Largest step allowed by the jump-mean and drift limits.
    fn step_cap(&self, cfg: &SimConfig, state: (f64, f64), l: &(Local, Local)) -> f64 {
        let mut cap = cfg.dt;
        let (rx, ry) = self.rates(l);
        for r in [rx, ry] {
            if r > 0.0 {
                cap = cap.min(cfg.max_jump_mean / r);
            }
        }
        for (z, d) in [(state.0, l.0.drift), (state.1, l.1.drift)] {
            if z > 0.0 && d > 0.0 {
                cap = cap.min(cfg.max_drift_fraction * z / d);
            }
        }
        cap
    }

    fn big_jump(&self, uniform: f64, inv_alpha: f64) -> f64 {
        self.delta * uniform.powf(-inv_alpha)
    }
}

/// One Euler step from `state` over `dt`. Components already at 0 stay at
/// 0; negative results are returned unclamped.
pub fn step(dynamics: &Dynamics, state: (f64, f64), dt: f64, draws: &StepDraws) -> (f64, f64) {
    step_local(dynamics, state, &dynamics.locals(state), dt, draws)
}

fn step_local(d: &Dynamics, state: (f64, f64), l: &(Local, Local), dt: f64, draws: &StepDraws) -> (f64, f64) {
    (
        d.x.advance(state.0, &l.0, dt, draws.db1, draws.small1, draws.jumps_x, d.gaussian),
        d.y.advance(state.1, &l.1, dt, draws.db2, draws.small2, draws.jumps_y, d.gaussian),
    )
}

/// RNG for one path: a ChaCha stream selected by the path seed.
pub fn path_rng(master_seed: u64, path_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_seed);
    rng
}

fn poisson_small<R: Rng>(rng: &mut R, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    // Knuth's product method; the mean is at most a fraction of one.
    let limit = (-mean).exp();
    let mut k = 0;
    let mut prod: f64 = rng.random();
    while prod > limit {
        k += 1;
        prod *= rng.random::<f64>();
    }
    k
}

fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Hook into a running path. Called with the state at the start of every
/// step and at every checkpoint.
pub trait Observer {
    fn on_step(&mut self, _t: f64, _dt: f64, _state: (f64, f64)) {}
    fn on_checkpoint(&mut self, _index: usize, _t: f64, _state: (f64, f64)) {}
}

pub struct NoObserver;
impl Observer for NoObserver {}

pub fn simulate_path(params: &ModelParams, cfg: &SimConfig, path_seed: u64) -> Result<PathRecord> {
    cfg.validate(params)?;
    let dynamics = Dynamics::new(params, cfg)?;
    run_path(&dynamics, params, cfg, path_seed, &mut NoObserver)
}

pub fn simulate_path_observed(
    params: &ModelParams,
    cfg: &SimConfig,
    path_seed: u64,
    observer: &mut dyn Observer,
) -> Result<PathRecord> {
    cfg.validate(params)?;
    let dynamics = Dynamics::new(params, cfg)?;
    run_path(&dynamics, params, cfg, path_seed, observer)
}

/// Checkpoint-aware time keeping shared by single and coupled paths.
struct Clock<'a> {
    t: f64,
    horizon: f64,
    cps: &'a [f64],
    next_cp: usize,
}

impl<'a> Clock<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        Self {
            t: 0.0,
            horizon: cfg.horizon,
            cps: &cfg.checkpoints,
            next_cp: 0,
        }
    }

    fn done(&self) -> bool {
        self.t >= self.horizon
    }

    /// Step length clipped to the next checkpoint or the horizon.
    fn clip(&self, cap: f64) -> f64 {
        let target = self.cps.get(self.next_cp).copied().unwrap_or(self.horizon).min(self.horizon);
        cap.min(target - self.t)
    }

    /// Advances time; returns the checkpoint index reached, if any.
    fn advance(&mut self, dt: f64) -> Option<usize> {
        let target = self.cps.get(self.next_cp).copied().unwrap_or(f64::INFINITY);
        if self.t + dt >= target {
            self.t = target;
            self.next_cp += 1;
            return Some(self.next_cp - 1);
        }
        let next = self.t + dt;
        self.t = if next >= self.horizon { self.horizon } else { next };
        None
    }
}

fn draw<R: Rng>(rng: &mut R, d: &Dynamics, l: &(Local, Local), dt: f64) -> StepDraws {
    let sq = dt.sqrt();
    let (rx, ry) = d.rates(l);
    let db1: f64 = rng.sample::<f64, _>(StandardNormal) * sq;
    let db2: f64 = rng.sample::<f64, _>(StandardNormal) * sq;
    let (small1, small2) = if d.gaussian {
        (rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    } else {
        (0.0, 0.0)
    };
    let mut jumps_x = 0.0;
    for _ in 0..poisson_small(rng, rx * dt) {
        jumps_x += d.big_jump(open_uniform(rng), d.x.inv_alpha);
    }
    let mut jumps_y = 0.0;
    for _ in 0..poisson_small(rng, ry * dt) {
        jumps_y += d.big_jump(open_uniform(rng), d.y.inv_alpha);
    }
    StepDraws {
        db1,
        db2,
        small1,
        small2,
        jumps_x,
        jumps_y,
    }
}

fn run_path(
    d: &Dynamics,
    params: &ModelParams,
    cfg: &SimConfig,
    path_seed: u64,
    obs: &mut dyn Observer,
) -> Result<PathRecord> {
    let mut rng = path_rng(cfg.master_seed, path_seed);
    let mut clock = Clock::new(cfg);
    let mut state = (params.x0, params.y0);
    let mut rec = PathRecord {
        path_id: path_seed,
        event: StopEvent::HorizonEnd,
        event_time: cfg.horizon,
        ext_time_x: None,
        ext_time_y: None,
        explode_time: None,
        terminal: state,
        sup_x: state.0,
        sup_y: state.1,
        clamp_count: 0,
        max_clamp: 0.0,
        end_time: 0.0,
        steps: 0,
        checkpoints: cfg.record_checkpoints.then(Vec::new),
    };
    let mut first_event: Option<(StopEvent, f64)> = None;
    while !clock.done() {
        if rec.steps >= cfg.max_steps {
            return Err(Error::SchemeQuality(format!(
                "path {path_seed} exceeded {} steps at t = {}",
                cfg.max_steps, clock.t
            )));
        }
        let l = d.locals(state);
        let dt = clock.clip(d.step_cap(cfg, state, &l));
        obs.on_step(clock.t, dt, state);
        let dr = draw(&mut rng, d, &l, dt);
        let (mut nx, mut ny) = step_local(d, state, &l, dt, &dr);
        rec.steps += 1;
        for v in [&mut nx, &mut ny] {
            if *v < 0.0 {
                rec.clamp_count += 1;
                rec.max_clamp = rec.max_clamp.max(-*v);
                *v = 0.0;
            }
        }
        let cp = clock.advance(dt);
        let t = clock.t;
        let mut died_x = false;
        let mut died_y = false;
        if rec.ext_time_x.is_none() && nx <= cfg.eps_ext {
            nx = 0.0;
            rec.ext_time_x = Some(t);
            died_x = true;
        }
        if rec.ext_time_y.is_none() && ny <= cfg.eps_ext {
            ny = 0.0;
            rec.ext_time_y = Some(t);
            died_y = true;
        }
        state = (nx, ny);
        rec.sup_x = rec.sup_x.max(nx);
        rec.sup_y = rec.sup_y.max(ny);
        if first_event.is_none() {
            let ev = match (died_x, died_y) {
                (true, true) => Some(StopEvent::ExtinctBoth),
                (true, false) => Some(StopEvent::ExtinctX),
                (false, true) => Some(StopEvent::ExtinctY),
                _ => None,
            };
            if let Some(ev) = ev {
                first_event = Some((ev, t));
            }
        }
        if let Some(i) = cp {
            obs.on_checkpoint(i, t, state);
            if let Some(v) = rec.checkpoints.as_mut() {
                v.push((t, nx, ny));
            }
        }
        if nx >= cfg.n_max || ny >= cfg.n_max {
            rec.explode_time = Some(t);
            first_event.get_or_insert((StopEvent::Explode, t));
            break;
        }
        let both_dead = rec.ext_time_x.is_some() && rec.ext_time_y.is_some();
        if both_dead || (cfg.stop_on_y_extinction && rec.ext_time_y.is_some()) {
            break;
        }
    }
    if cfg.strict && rec.max_clamp > cfg.jump_cutoff {
        return Err(Error::SchemeQuality(format!(
            "path {path_seed}: clamp of magnitude {} exceeds the jump cutoff {}",
            rec.max_clamp, cfg.jump_cutoff
        )));
    }
    if let Some((ev, t)) = first_event {
        rec.event = ev;
        rec.event_time = t;
    }
    rec.terminal = state;
    rec.end_time = clock.t;
    Ok(rec)
}

pub(crate) fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

/// Independent paths `0..n_paths`, returned in path order.
pub fn simulate_many(params: &ModelParams, cfg: &SimConfig, n_paths: u64, workers: usize) -> Result<Vec<PathRecord>> {
    cfg.validate(params)?;
    let d = Dynamics::new(params, cfg)?;
    pool(workers)?.install(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|i| run_path(&d, params, cfg, i, &mut NoObserver))
            .collect()
    })
}

/// Ordering record of one coupled pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    /// `(t, x_tilde >= x, y_tilde <= y)` at each checkpoint before the
    /// first stopping event of either system.
    pub flags: Vec<(f64, bool, bool)>,
    pub violation_count: u64,
    pub max_violation: f64,
    /// Steps (not only checkpoints) at which the ordering failed.
    pub step_violations: u64,
    pub dt: f64,
    pub stop_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary {
    pub n_paths: u64,
    pub checked_pairs: u64,
    pub violations: u64,
    pub fraction: f64,
    pub max_violation: f64,
    pub step_violations: u64,
    pub dt: f64,
}

fn accept_thinned(jumps: &[(f64, f64)], own: f64, max: f64) -> f64 {
    if own <= 0.0 {
        return 0.0;
    }
    let level = own / max;
    jumps.iter().filter(|(_, v)| *v <= level).map(|(z, _)| z).sum()
}

fn check_coupled(params: &ModelParams, cfg: &SimConfig, start: (f64, f64), start_tilde: (f64, f64)) -> Result<()> {
    if !(start_tilde.0 >= start.0 && start_tilde.1 <= start.1) {
        return Err(Error::UnorderedInitial(format!(
            "need x_tilde0 >= x0 and y_tilde0 <= y0, got {start_tilde:?} vs {start:?}"
        )));
    }
    for (x0, y0) in [start, start_tilde] {
        cfg.validate(&ModelParams { x0, y0, ..*params })?;
    }
    Ok(())
}

/// Runs the base system from `start` and the comparison system from
/// `start_tilde` with shared Brownian increments and a shared Poisson
/// random measure; each system keeps a candidate jump iff its mark lies
/// below its own share of the dominating rate.
pub fn simulate_coupled(
    params: &ModelParams,
    cfg: &SimConfig,
    start: (f64, f64),
    start_tilde: (f64, f64),
    path_seed: u64,
) -> Result<CouplingReport> {
    check_coupled(params, cfg, start, start_tilde)?;
    let d = Dynamics::new(params, cfg)?;
    Ok(run_coupled(&d, cfg, start, start_tilde, path_seed))
}

fn run_coupled(d: &Dynamics, cfg: &SimConfig, start: (f64, f64), start_tilde: (f64, f64), seed: u64) -> CouplingReport {
    let mut rng = path_rng(cfg.master_seed, seed);
    let mut clock = Clock::new(cfg);
    let (mut s, mut st) = (start, start_tilde);
    let mut rep = CouplingReport {
        flags: Vec::new(),
        violation_count: 0,
        max_violation: 0.0,
        step_violations: 0,
        dt: cfg.dt,
        stop_time: cfg.horizon,
    };
    let mut cand_x: Vec<(f64, f64)> = Vec::new();
    let mut cand_y: Vec<(f64, f64)> = Vec::new();
    let mut steps = 0u64;
    while !clock.done() && steps < cfg.max_steps {
        let (l, lt) = (d.locals(s), d.locals(st));
        let dt = clock.clip(d.step_cap(cfg, s, &l).min(d.step_cap(cfg, st, &lt)));
        let sq = dt.sqrt();
        let (rx, ry) = d.rates(&l);
        let (rxt, ryt) = d.rates(&lt);
        let (mx, my) = (rx.max(rxt), ry.max(ryt));
        let db1: f64 = rng.sample::<f64, _>(StandardNormal) * sq;
        let db2: f64 = rng.sample::<f64, _>(StandardNormal) * sq;
        let (small1, small2) = if d.gaussian {
            (rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        } else {
            (0.0, 0.0)
        };
        cand_x.clear();
        for _ in 0..poisson_small(&mut rng, mx * dt) {
            let z = d.big_jump(open_uniform(&mut rng), d.x.inv_alpha);
            cand_x.push((z, rng.random::<f64>()));
        }
        cand_y.clear();
        for _ in 0..poisson_small(&mut rng, my * dt) {
            let z = d.big_jump(open_uniform(&mut rng), d.y.inv_alpha);
            cand_y.push((z, rng.random::<f64>()));
        }
        let common = StepDraws {
            db1,
            db2,
            small1,
            small2,
            jumps_x: 0.0,
            jumps_y: 0.0,
        };
        let draws = StepDraws {
            jumps_x: accept_thinned(&cand_x, rx, mx),
            jumps_y: accept_thinned(&cand_y, ry, my),
            ..common
        };
        let draws_t = StepDraws {
            jumps_x: accept_thinned(&cand_x, rxt, mx),
            jumps_y: accept_thinned(&cand_y, ryt, my),
            ..common
        };
        let clamp = |v: (f64, f64)| (v.0.max(0.0), v.1.max(0.0));
        s = clamp(step_local(d, s, &l, dt, &draws));
        st = clamp(step_local(d, st, &lt, dt, &draws_t));
        steps += 1;
        let cp = clock.advance(dt);
        let vx = (s.0 - st.0).max(0.0);
        let vy = (st.1 - s.1).max(0.0);
        if vx > 0.0 || vy > 0.0 {
            rep.step_violations += 1;
        }
        if cp.is_some() {
            rep.flags.push((clock.t, vx == 0.0, vy == 0.0));
            if vx > 0.0 || vy > 0.0 {
                rep.violation_count += 1;
                rep.max_violation = rep.max_violation.max(vx).max(vy);
            }
        }
        let stopped = |v: (f64, f64)| v.0 <= cfg.eps_ext || v.1 <= cfg.eps_ext || v.0 >= cfg.n_max || v.1 >= cfg.n_max;
        if stopped(s) || stopped(st) {
            rep.stop_time = clock.t;
            break;
        }
    }
    rep
}

/// Coupled pairs `0..n_paths` aggregated into a violation summary.
pub fn couple_many(
    params: &ModelParams,
    cfg: &SimConfig,
    start: (f64, f64),
    start_tilde: (f64, f64),
    n_paths: u64,
    workers: usize,
) -> Result<(CouplingSummary, Vec<CouplingReport>)> {
    check_coupled(params, cfg, start, start_tilde)?;
    let d = Dynamics::new(params, cfg)?;
    let reports: Vec<CouplingReport> = pool(workers)?.install(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|i| run_coupled(&d, cfg, start, start_tilde, i))
            .collect()
    });
    let checked: u64 = reports.iter().map(|r| r.flags.len() as u64).sum();
    let violations: u64 = reports.iter().map(|r| r.violation_count).sum();
    let summary = CouplingSummary {
        n_paths,
        checked_pairs: checked,
        violations,
        fraction: if checked == 0 { 0.0 } else { violations as f64 / checked as f64 },
        max_violation: reports.iter().map(|r| r.max_violation).fold(0.0, f64::max),
        step_violations: reports.iter().map(|r| r.step_violations).sum(),
        dt: cfg.dt,
    };
    Ok((summary, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relaxed(p: ModelParams) -> ModelParams {
        p.validate(false).unwrap()
    }

    #[test]
    fn pure_drift_matches_exponential_decay() {
        let p = relaxed(ModelParams {
            a1: 1.0,
            p1: 0.0,
            eta1: 0.0,
            eta2: 0.0,
            ..ModelParams::default()
        });
        let cfg = SimConfig {
            dt: 1e-4,
            horizon: 1.0,
            max_drift_fraction: 1.0,
            ..SimConfig::default()
        };
        let r = simulate_path(&p, &cfg, 0).unwrap();
        assert!((r.terminal.0 - (-1.0f64).exp()).abs() < 1e-3, "{}", r.terminal.0);
        assert_eq!(r.event, StopEvent::HorizonEnd);
    }

    #[test]
    fn geometric_brownian_motion_keeps_its_mean() {
        let p = relaxed(ModelParams {
            a2: 0.5,
            p2: 0.0,
            eta1: 0.0,
            eta2: 0.0,
            ..ModelParams::default()
        });
        let cfg = SimConfig {
            dt: 1e-2,
            horizon: 0.5,
            ..SimConfig::default()
        };
        let recs = simulate_many(&p, &cfg, 20_000, 1).unwrap();
        let xs: Vec<f64> = recs.iter().map(|r| r.terminal.0).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn frozen_state_jump_count_is_poisson() {
        let p = ModelParams {
            a3: 1.0,
            b3: 1.0,
            ..ModelParams::default()
        };
        let cfg = SimConfig {
            jump_cutoff: 0.1,
            dt: 1e-3,
            ..SimConfig::default()
        };
        let d = Dynamics::new(&p, &cfg).unwrap();
        let mut rng = path_rng(7, 0);
        let (t_end, dt) = (10.0, 1e-3);
        let mut count = 0u64;
        for _ in 0..(t_end / dt) as usize {
            let (rx, _) = d.jump_rates((1.0, 1.0));
            count += poisson_small(&mut rng, rx * dt) as u64;
        }
        let m = StableMeasure::new(1.5).unwrap();
        let mean = m.tail_mass(0.1).unwrap() * t_end;
        assert!((count as f64 - mean).abs() < 3.0 * mean.sqrt(), "{count} vs {mean}");
    }

    #[test]
    fn jump_sizes_follow_the_pareto_tail() {
        let p = ModelParams {
            a3: 1.0,
            b3: 1.0,
            ..ModelParams::default()
        };
        let cfg = SimConfig {
            jump_cutoff: 0.01,
            ..SimConfig::default()
        };
        let d = Dynamics::new(&p, &cfg).unwrap();
        let mut rng = path_rng(3, 1);
        let n = 100_000;
        let mut z: Vec<f64> = (0..n).map(|_| d.big_jump(open_uniform(&mut rng), 1.0 / 1.5)).collect();
        z.sort_by(f64::total_cmp);
        let mut ks: f64 = 0.0;
        for (i, v) in z.iter().enumerate() {
            let cdf = 1.0 - (v / 0.01).powf(-1.5);
            ks = ks.max((cdf - i as f64 / n as f64).abs()).max((cdf - (i + 1) as f64 / n as f64).abs());
        }
        assert!(ks < 0.01, "KS = {ks}");
        let median = z[n / 2];
        assert!((median / (0.01 * 2f64.powf(1.0 / 1.5)) - 1.0).abs() < 0.02);
    }

    #[test]
    fn determinism_and_worker_independence() {
        let p = ModelParams {
            a3: 1.0,
            b3: 1.0,
            theta1: 0.5,
            theta2: 0.5,
            x0: 0.5,
            y0: 0.5,
            ..ModelParams::default()
        };
        let cfg = SimConfig {
            horizon: 2.0,
            master_seed: 11,
            ..SimConfig::default()
        };
        let a = simulate_many(&p, &cfg, 40, 1).unwrap();
        let b = simulate_many(&p, &cfg, 40, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(simulate_path(&p, &cfg, 5).unwrap(), a[5]);
    }

    #[test]
    fn eps_at_initial_state_is_a_config_error() {
        let p = ModelParams {
            a3: 1.0,
            b3: 1.0,
            x0: 1e-3,
            ..ModelParams::default()
        };
        let cfg = SimConfig {
            eps_ext: 1e-3,
            ..SimConfig::default()
        };
        assert!(matches!(simulate_path(&p, &cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn strong_y_interaction_kills_y() {
        let p = ModelParams {
            a3: 1.0,
            p3: 0.0,
            b3: 1.0,
            q3: 0.0,
            eta2: 1e3,
            theta2: 0.0,
            ..ModelParams::default()
        };
        let cfg = SimConfig {
            horizon: 50.0,
            stop_on_y_extinction: true,
            ..SimConfig::default()
        };
        let recs = simulate_many(&p, &cfg, 200, 1).unwrap();
        let k = recs.iter().filter(|r| r.y_extinct_by(50.0)).count();
        assert!(k as f64 / 200.0 > 0.9, "{k}");
        for r in &recs {
            if r.event == StopEvent::ExtinctY {
                assert!(r.terminal.1 <= cfg.eps_ext);
            }
            assert!(r.sup_x >= p.x0 && r.sup_y >= p.y0 && r.event_time <= cfg.horizon);
        }
    }

    #[test]
    fn identical_coupled_starts_never_separate() {
        let p = ModelParams {
            a1: 1.0,
            p1: 1.0,
            a3: 1.0,
            b2: 0.5,
            b3: 1.0,
            theta1: 1.0,
            theta2: 0.5,
            ..ModelParams::default()
        };
        let cfg = SimConfig {
            horizon: 1.0,
            ..SimConfig::default()
        }
        .with_uniform_checkpoints(100);
        let r = simulate_coupled(&p, &cfg, (1.0, 1.0), (1.0, 1.0), 3).unwrap();
        assert_eq!(r.violation_count, 0);
        assert_eq!(r.step_violations, 0);
        assert!(matches!(
            simulate_coupled(&p, &cfg, (1.0, 1.0), (0.5, 0.5), 3),
            Err(Error::UnorderedInitial(_))
        ));
    }

    #[test]
    fn step_is_pure() {
        let p = ModelParams {
            a1: 1.0,
            a2: 0.3,
            a3: 1.0,
            b1: 0.2,
            b3: 1.0,
            theta1: 1.5,
            ..ModelParams::default()
        };
        let d = Dynamics::new(&p, &SimConfig::default()).unwrap();
        let draws = StepDraws {
            db1: 0.01,
            db2: -0.02,
            small1: 0.3,
            small2: -1.0,
            jumps_x: 0.2,
            jumps_y: 0.0,
        };
        let a = step(&d, (0.7, 0.4), 1e-3, &draws);
        let b = step(&d, (0.7, 0.4), 1e-3, &draws);
        assert_eq!(a, b);
        assert_eq!(step(&d, (0.0, 0.4), 1e-3, &draws).0, 0.0);
    }
}
