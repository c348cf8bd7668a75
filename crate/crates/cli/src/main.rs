use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use slvlab::config::RunConfig;
use slvlab::criteria::{self, PartialSubcase, SureSubcase};
use slvlab::experiments::{self, CampaignSpec, InitialCondition, PathRow, SweepSpec};
use slvlab::generator::apply_generator;
use slvlab::model::ModelParams;
use slvlab::sde_engine::{couple_many, simulate_many, StopEvent};
use slvlab::stable_measure::{Lemma32Kind, StableMeasure};
use slvlab::test_functions::TestFunction;

#[derive(Parser)]
#[command(name = "slvlab", version, about = "Two-type Lotka-Volterra branching system with stable jumps")]
struct Cli {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for simulations and random checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV and JSON output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Strict parameter validation and strict scheme quality checks.
    #[arg(long, global = true)]
    strict: bool,
    /// Override one configuration key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Regime verdict, fired conditions and boundary quantities.
    Classify,
    /// Closed forms of the four jump-measure integrals against quadrature.
    Integrals {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9])]
        alpha: Vec<f64>,
    },
    /// Generator terms of a test function at given points.
    GeneratorCheck {
        /// Test function, e.g. `power_ratio:beta=2,delta=0.25,rho=0.5`.
        #[arg(long)]
        g: String,
        /// Evaluation point `x,y`; repeatable.
        #[arg(long, required = true)]
        at: Vec<String>,
    },
    /// Numerical checks of the auxiliary inequalities.
    LemmaCheck {
        #[arg(value_enum)]
        which: Lemma,
        #[arg(long, default_value_t = 200)]
        n: usize,
    },
    /// Constant search and grid certificate for one subcase.
    CriteriaCheck {
        /// One of iia, iib, iic, iid, iiia, iiib.
        subcase: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Also check the survival conditions with the found constants on
        /// `(0, eps0]^2` (partial subcases only).
        #[arg(long)]
        survival_eps0: Option<f64>,
    },
    /// Independent paths from the configured initial state.
    Simulate {
        #[arg(long)]
        n_paths: Option<u64>,
    },
    /// Synchronously coupled pairs and their ordering violations.
    Couple {
        /// Initial state of the comparison system, `x,y`.
        #[arg(long)]
        tilde: String,
        #[arg(long)]
        n_paths: Option<u64>,
        #[arg(long, default_value_t = 100)]
        checkpoints: usize,
    },
    /// Extinction frequencies over a horizon ladder.
    Extinction(CampaignArgs),
    /// One extinction campaign per cell of a parameter grid.
    Sweep {
        /// `name=v1,v2,...`; repeatable.
        #[arg(long, required = true)]
        axis: Vec<String>,
        #[command(flatten)]
        campaign: CampaignArgs,
    },
    /// Mean and standard error of the generator martingale.
    Martingale {
        #[arg(long)]
        g: String,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.5, 1.0])]
        times: Vec<f64>,
        #[arg(long)]
        n_paths: Option<u64>,
    },
}

#[derive(clap::Args)]
struct CampaignArgs {
    #[arg(long)]
    n_paths: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Scaled initial pair `eps,u0,beta`; repeatable.
    #[arg(long)]
    scaled: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Lemma {
    Young,
    BumpI,
    BumpIi,
    BumpIii,
    Domination,
    LogBound,
    ExpTan,
}

fn floats(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("{what}: `{v}` is not a number")))
        .collect()
}

fn pair(s: &str, what: &str) -> Result<(f64, f64)> {
    match floats(s, what)?[..] {
        [a, b] => Ok((a, b)),
        _ => bail!("{what}: expected `x,y`, got `{s}`"),
    }
}

/// `family:key=value,...`
fn parse_g(s: &str) -> Result<TestFunction> {
    let (fam, rest) = s.split_once(':').unwrap_or((s, ""));
    let mut kv = std::collections::BTreeMap::new();
    for item in rest.split(',').filter(|t| !t.trim().is_empty()) {
        let (k, v) = item.split_once('=').ok_or_else(|| anyhow!("test function: expected key=value, got `{item}`"))?;
        kv.insert(k.trim().to_string(), v.trim().parse::<f64>().with_context(|| format!("test function: `{v}`"))?);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| anyhow!("test function `{fam}` needs `{k}`"));
    Ok(match fam {
        "constant" => TestFunction::constant(get("c")?),
        "quadratic" => TestFunction::quadratic([get("c0")?, get("c1")?, get("c2")?, get("c3")?, get("c4")?]),
        "log_sum" => TestFunction::log_sum(get("n")?, get("beta")?)?,
        "log_x" => TestFunction::log_x(get("n")?)?,
        "exp_tan" => TestFunction::exp_tan(get("lambda1")?, get("lambda2")?, get("rho")?, get("delta")?)?,
        "power_ratio" => TestFunction::power_ratio(get("beta")?, get("delta")?, get("rho")?)?,
        "exp_ratio" => TestFunction::exp_ratio(get("lambda")?, get("r")?, get("beta")?)?,
        _ => bail!("unknown test function family `{fam}`"),
    })
}

struct Ctx {
    cfg: RunConfig,
    out: Option<PathBuf>,
    workers: usize,
    strict: bool,
}

impl Ctx {
    fn params(&self) -> Result<ModelParams> {
        Ok(self.cfg.params.validate(self.strict)?)
    }

    /// Writes `value` as `<name>.json` under `--out`, or prints it.
    fn report<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("{name}.json"));
                experiments::write_json(&path, value)?;
                eprintln!("wrote {}", path.display());
            }
            None => emit(value)?,
        }
        Ok(())
    }

    fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        if let Some(dir) = &self.out {
            std::fs::create_dir_all(dir)?;
            experiments::write_csv(&dir.join(format!("{name}.csv")), rows)?;
        }
        Ok(())
    }

    fn campaign(&self, a: &CampaignArgs) -> Result<(CampaignSpec, u64)> {
        let horizons = a
            .horizons
            .clone()
            .or_else(|| self.cfg.horizons.clone())
            .unwrap_or_else(|| vec![self.cfg.sim.horizon]);
        let mut spec = CampaignSpec::new(horizons);
        if let Some(e) = a.eps.clone().or_else(|| self.cfg.eps_levels.clone()) {
            spec.eps_levels = e;
        }
        for s in &a.scaled {
            match floats(s, "--scaled")?[..] {
                [eps, u0, beta] => spec.initial.push(InitialCondition::Scaled { eps, u0, beta }),
                _ => bail!("--scaled expects `eps,u0,beta`, got `{s}`"),
            }
        }
        spec.workers = self.workers;
        Ok((spec, a.n_paths.or(self.cfg.n_paths).unwrap_or(2000)))
    }
}

#[derive(Serialize)]
struct IntegralRow {
    alpha: f64,
    kind: &'static str,
    beta: f64,
    closed: f64,
    quadrature: f64,
    rel_err: f64,
}

#[derive(Serialize)]
struct CoupleRow {
    path: u64,
    checked: u64,
    violations: u64,
    max_violation: f64,
    step_violations: u64,
    stop_time: f64,
}

#[derive(Serialize)]
struct Verdicted<T: Serialize> {
    pass: bool,
    #[serde(flatten)]
    report: T,
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    for s in &cli.set {
        let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{s}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.sim.master_seed = seed;
    }
    cfg.sim.strict = cli.strict;
    let seed = cfg.sim.master_seed;
    let cx = Ctx {
        cfg,
        out: cli.out.clone(),
        workers: cli.workers,
        strict: cli.strict,
    };
    let quad = cx.cfg.quad.validate()?;
    match cli.cmd {
        Cmd::Classify => {
            cx.report("classify", &cx.params()?.classify())?;
            Ok(true)
        }
        Cmd::Integrals { alpha } => {
            let mut rows = Vec::new();
            for a in alpha {
                let m = StableMeasure::new(a)?;
                for kind in Lemma32Kind::ALL {
                    for beta in kind.beta_grid(a) {
                        let closed = m.lemma32_integral(kind, beta)?;
                        let quadrature = m.lemma32_quadrature(kind, beta, 1e-13)?;
                        rows.push(IntegralRow {
                            alpha: a,
                            kind: kind.as_str(),
                            beta,
                            closed,
                            quadrature,
                            rel_err: (quadrature - closed).abs() / closed.abs().max(f64::MIN_POSITIVE),
                        });
                    }
                }
            }
            let worst = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
            cx.csv("integrals", &rows)?;
            cx.report("integrals", &serde_json::json!({ "cells": rows.len(), "worst_rel_err": worst }))?;
            Ok(worst < 1e-8)
        }
        Cmd::GeneratorCheck { g, at } => {
            let p = cx.params()?;
            let g = parse_g(&g)?;
            let mut out = Vec::new();
            for s in &at {
                let (x, y) = pair(s, "--at")?;
                out.push(serde_json::json!({ "x": x, "y": y, "terms": apply_generator(&p, &g, x, y, &quad)? }));
            }
            cx.report("generator_check", &out)?;
            Ok(true)
        }
        Cmd::LemmaCheck { which, n } => lemma_check(&cx, which, n, seed, &quad),
        Cmd::CriteriaCheck { subcase, n, survival_eps0 } => {
            let p = cx.params()?;
            if let Ok(s) = subcase.parse::<PartialSubcase>() {
                let c = criteria::check_htilde_positivity(&p, s, n)?;
                let mut pass = c.pass();
                cx.report("criteria_check", &Verdicted { pass, report: &c })?;
                if let Some(eps0) = survival_eps0 {
                    let k = &c.constants;
                    let r = criteria::check_prop25_conditions(&p, k["beta"], k["delta"], k["rho"], k["z_star"], eps0, n, &quad)?;
                    pass &= r.pass();
                    cx.report("survival_check", &Verdicted { pass: r.pass(), report: r })?;
                }
                Ok(pass)
            } else {
                let s: SureSubcase = subcase.parse()?;
                let c = criteria::check_h_lower_bound(&p, s, n)?;
                cx.report("criteria_check", &Verdicted { pass: c.pass(), report: &c })?;
                Ok(c.pass())
            }
        }
        Cmd::Simulate { n_paths } => {
            let p = cx.params()?;
            let n = n_paths.or(cx.cfg.n_paths).unwrap_or(100);
            let recs = simulate_many(&p, &cx.cfg.sim, n, cx.workers)?;
            let rows: Vec<PathRow> = recs.iter().map(|r| PathRow::from_record(0, cx.cfg.sim.eps_ext, r)).collect();
            cx.csv("paths", &rows)?;
            let count = |e: StopEvent| recs.iter().filter(|r| r.event == e).count();
            let summary = serde_json::json!({
                "n_paths": n,
                "ExtinctX": count(StopEvent::ExtinctX),
                "ExtinctY": count(StopEvent::ExtinctY),
                "ExtinctBoth": count(StopEvent::ExtinctBoth),
                "Explode": count(StopEvent::Explode),
                "HorizonEnd": count(StopEvent::HorizonEnd),
                "extinct_y_by_horizon": recs.iter().filter(|r| r.y_extinct_by(cx.cfg.sim.horizon)).count(),
            });
            cx.report("simulate", &summary)?;
            Ok(true)
        }
        Cmd::Couple { tilde, n_paths, checkpoints } => {
            let p = cx.params()?;
            let st = pair(&tilde, "--tilde")?;
            let sim = cx.cfg.sim.clone().with_uniform_checkpoints(checkpoints);
            let n = n_paths.or(cx.cfg.n_paths).unwrap_or(1000);
            let (summary, reports) = couple_many(&p, &sim, (p.x0, p.y0), st, n, cx.workers)?;
            let rows: Vec<CoupleRow> = reports
                .iter()
                .enumerate()
                .map(|(i, r)| CoupleRow {
                    path: i as u64,
                    checked: r.flags.len() as u64,
                    violations: r.violation_count,
                    max_violation: r.max_violation,
                    step_violations: r.step_violations,
                    stop_time: r.stop_time,
                })
                .collect();
            cx.csv("couple", &rows)?;
            cx.report("couple", &summary)?;
            Ok(true)
        }
        Cmd::Extinction(a) => {
            let p = cx.params()?;
            let (spec, n) = cx.campaign(&a)?;
            let c = experiments::run_extinction_campaign(&p, &cx.cfg.sim, n, &spec)?;
            if let Some(dir) = &cx.out {
                experiments::write_campaign(dir, "extinction", &c)?;
            } else {
                cx.report("extinction", &c.summary)?;
            }
            Ok(c.summary.consistent.unwrap_or(true))
        }
        Cmd::Sweep { axis, campaign } => {
            let mut axes = Vec::new();
            for s in &axis {
                let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--axis expects name=v1,v2,..., got `{s}`"))?;
                axes.push((k.trim().to_string(), floats(v, "--axis")?));
            }
            let (spec, n) = cx.campaign(&campaign)?;
            let sweep = SweepSpec {
                base: cx.cfg.params,
                cfg: cx.cfg.sim.clone(),
                axes,
                campaign: spec,
                n_paths: n,
                strict: cx.strict,
            };
            let r = experiments::run_sweep(&sweep, cx.out.as_deref())?;
            for c in &r.cells {
                match (&c.summary, &c.error) {
                    (Some(s), _) => eprintln!(
                        "cell {} {:?}: {} frequency {:.4} consistent {:?}",
                        c.index, c.values, s.verdict, s.frequency, s.consistent
                    ),
                    (None, Some(e)) => eprintln!("cell {} {:?}: failed: {e}", c.index, c.values),
                    _ => {}
                }
            }
            if cx.out.is_none() {
                emit(&r)?;
            }
            Ok(r.cells.iter().all(|c| c.error.is_none()))
        }
        Cmd::Martingale { g, times, n_paths } => {
            let p = cx.params()?;
            let g = parse_g(&g)?;
            let n = n_paths.or(cx.cfg.n_paths).unwrap_or(10_000);
            let r = experiments::run_martingale_check(&p, &g, &times, n, &cx.cfg.sim, &quad, cx.workers)?;
            cx.report("martingale", &r)?;
            Ok(r.pass)
        }
    }
}

fn lemma_check(cx: &Ctx, which: Lemma, n: usize, seed: u64, quad: &slvlab::generator::QuadratureConfig) -> Result<bool> {
    let (name, pass, value) = match which {
        Lemma::Young => {
            let c = criteria::check_young(n * n, seed)?;
            ("young", c.pass, serde_json::to_value(&c)?)
        }
        Lemma::BumpI => {
            let c = criteria::check_lemma36_i(1.0, 3.0, n)?;
            ("bump_i", c.pass, serde_json::to_value(&c)?)
        }
        Lemma::BumpIi => {
            let r = criteria::check_lemma36_ii(1.0, 2.0, 3.0, cx.cfg.params.alpha1, criteria::BUMP_LAMBDA1, n, quad)?;
            ("bump_ii", r.pass(), serde_json::to_value(&r)?)
        }
        Lemma::BumpIii => {
            let r = criteria::check_lemma36_iii(1.0, 3.0, cx.cfg.params.alpha1, n, quad)?;
            ("bump_iii", r.pass(), serde_json::to_value(&r)?)
        }
        Lemma::Domination => {
            let c = criteria::check_lemma312(n, seed, quad)?;
            ("domination", c.pass, serde_json::to_value(&c)?)
        }
        Lemma::LogBound => {
            let p = cx.params()?;
            let mut all = true;
            let mut out = Vec::new();
            for level in [2.0, 5.0] {
                let (k, c) = criteria::check_log_bound(&p, level, 1.0, n.min(60), quad)?;
                all &= c.pass;
                out.push(serde_json::json!({ "n": level, "constants": k, "certificate": c }));
            }
            ("log_bound", all, serde_json::Value::Array(out))
        }
        Lemma::ExpTan => {
            let (k, c) = criteria::check_exp_tan(&cx.params()?, n, quad)?;
            ("exp_tan", c.pass, serde_json::json!({ "constants": k, "certificate": c }))
        }
    };
    cx.report(&format!("lemma_{name}"), &serde_json::json!({ "pass": pass, "report": value }))?;
    Ok(pass)
}

/// Pretty JSON on stdout; a closed pipe is not an error.
fn emit<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
