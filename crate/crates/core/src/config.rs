//! Key-value run configuration: one `name = value` per line, `#` starts a
//! comment. Model fields use their own names; scheme, quadrature and
//! campaign settings are listed in [`RunConfig::keys`].

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::generator::QuadratureConfig;
use crate::model::ModelParams;
use crate::sde_engine::{SimConfig, SmallJumpMode};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub sim: SimConfig,
    pub quad: QuadratureConfig,
    pub n_paths: Option<u64>,
    pub horizons: Option<Vec<f64>>,
    pub eps_levels: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::default(),
            sim: SimConfig::default(),
            quad: QuadratureConfig::default(),
            n_paths: None,
            horizons: None,
            eps_levels: None,
        }
    }
}

const OTHER_KEYS: &[&str] = &[
    "dt",
    "jump_cutoff",
    "small_jump_mode",
    "eps_ext",
    "n_max",
    "horizon",
    "seed",
    "max_jump_mean",
    "max_drift_fraction",
    "stop_on_y_extinction",
    "max_steps",
    "split_point",
    "abs_tol",
    "max_refinement_depth",
    "n_paths",
    "horizons",
    "eps_levels",
];

fn num(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{v}`")))
}

fn int(key: &str, v: &str) -> Result<u64> {
    v.parse::<u64>()
        .map_err(|_| Error::Config(format!("`{key}` expects a nonnegative integer, got `{v}`")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    /// Every accepted key.
    pub fn keys() -> Vec<&'static str> {
        ModelParams::field_names().iter().chain(OTHER_KEYS).copied().collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `name = value`, got `{line}`", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        if ModelParams::field_names().contains(&key) {
            return self.params.set(key, num(key, v)?);
        }
        match key {
            "dt" => self.sim.dt = num(key, v)?,
            "jump_cutoff" => self.sim.jump_cutoff = num(key, v)?,
            "small_jump_mode" => self.sim.small_jump_mode = v.parse::<SmallJumpMode>()?,
            "eps_ext" => self.sim.eps_ext = num(key, v)?,
            "n_max" => self.sim.n_max = num(key, v)?,
            "horizon" => self.sim.horizon = num(key, v)?,
            "seed" => self.sim.master_seed = int(key, v)?,
            "max_jump_mean" => self.sim.max_jump_mean = num(key, v)?,
            "max_drift_fraction" => self.sim.max_drift_fraction = num(key, v)?,
            "stop_on_y_extinction" => {
                self.sim.stop_on_y_extinction = v
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}` expects true or false, got `{v}`")))?
            }
            "max_steps" => self.sim.max_steps = int(key, v)?,
            "split_point" => self.quad.split_point = num(key, v)?,
            "abs_tol" => self.quad.abs_tol = num(key, v)?,
            "max_refinement_depth" => self.quad.max_refinement_depth = int(key, v)? as u32,
            "n_paths" => self.n_paths = Some(int(key, v)?),
            "horizons" => self.horizons = Some(list(key, v)?),
            "eps_levels" => self.eps_levels = Some(list(key, v)?),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Text form accepted by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in ModelParams::field_names() {
            let _ = writeln!(s, "{k} = {:?}", self.params.get(k).unwrap_or(f64::NAN));
        }
        let c = &self.sim;
        let mode = match c.small_jump_mode {
            SmallJumpMode::Drop => "drop",
            SmallJumpMode::Gaussian => "gaussian",
        };
        let _ = writeln!(s, "dt = {:?}\njump_cutoff = {:?}\nsmall_jump_mode = {mode}", c.dt, c.jump_cutoff);
        let _ = writeln!(s, "eps_ext = {:?}\nn_max = {:?}\nhorizon = {:?}", c.eps_ext, c.n_max, c.horizon);
        let _ = writeln!(s, "seed = {}\nmax_jump_mean = {:?}", c.master_seed, c.max_jump_mean);
        let _ = writeln!(s, "max_drift_fraction = {:?}", c.max_drift_fraction);
        let _ = writeln!(s, "stop_on_y_extinction = {}\nmax_steps = {}", c.stop_on_y_extinction, c.max_steps);
        let q = &self.quad;
        let _ = writeln!(s, "split_point = {:?}\nabs_tol = {:?}", q.split_point, q.abs_tol);
        let _ = writeln!(s, "max_refinement_depth = {}", q.max_refinement_depth);
        if let Some(n) = self.n_paths {
            let _ = writeln!(s, "n_paths = {n}");
        }
        if let Some(h) = &self.horizons {
            let _ = writeln!(s, "horizons = {}", fmt_list(h));
        }
        if let Some(e) = &self.eps_levels {
            let _ = writeln!(s, "eps_levels = {}", fmt_list(e));
        }
        s
    }
}
