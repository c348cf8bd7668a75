//! Finite-grid certificates for the generator inequalities behind the
//! extinction and survival criteria, and searches for the constants the
//! corresponding lemmas assert.
//!
//! A certificate evaluates an inequality `value >= 0` at every node and
//! records the normalised slack `value / scale`, where `scale` is the sum of
//! the absolute values of the terms. It is evidence on the grid, not a proof.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{apply_generator, jump_integral, scaled_jump_ratio, QuadratureConfig};
use crate::model::{condition_table, ModelParams, DEFAULT_MARGIN};
use crate::special::gamma;
use crate::stable_measure::StableMeasure;
use crate::test_functions::{Axis, BumpProfile, LogX, Profile1D, TanXProfile, TanYProfile, TestFunction};

pub type ConstantsFound = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMargin {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCertificate {
    pub check: String,
    pub region: String,
    pub resolution: (usize, usize),
    pub n_nodes: usize,
    pub worst_margin: f64,
    pub worst_node: (f64, f64),
    pub pass: bool,
    #[serde(skip)]
    pub nodes: Vec<NodeMargin>,
}

/// Constants chosen by a search together with their certificate and the
/// re-certification at twice the resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certified {
    pub constants: ConstantsFound,
    pub certificate: GridCertificate,
    pub recheck: GridCertificate,
}

impl Certified {
    pub fn pass(&self) -> bool {
        self.certificate.pass && self.recheck.pass
    }
}

/// Evaluates `f(x, y) = (value, scale)` on every node in parallel and
/// reduces in node order.
pub fn certify<F>(check: &str, region: &str, resolution: (usize, usize), nodes: &[(f64, f64)], f: F) -> Result<GridCertificate>
where
    F: Fn(f64, f64) -> Result<(f64, f64)> + Sync,
{
    let evals: Vec<NodeMargin> = nodes
        .par_iter()
        .map(|&(x, y)| {
            let (value, scale) = f(x, y)?;
            let margin = if scale > 0.0 && scale.is_finite() { value / scale } else { value };
            Ok(NodeMargin {
                x,
                y,
                value,
                margin: if margin.is_nan() { f64::NEG_INFINITY } else { margin },
            })
        })
        .collect::<Result<_>>()?;
    let mut worst = f64::INFINITY;
    let mut at = (f64::NAN, f64::NAN);
    for n in &evals {
        if n.margin < worst {
            worst = n.margin;
            at = (n.x, n.y);
        }
    }
    if evals.is_empty() {
        worst = f64::NEG_INFINITY;
    }
    Ok(GridCertificate {
        check: check.to_string(),
        region: region.to_string(),
        resolution,
        n_nodes: evals.len(),
        worst_margin: worst,
        worst_node: at,
        pass: worst > 0.0,
        nodes: evals,
    })
}

/// `n` points in the open interval `(lo, hi)`, geometrically refined toward
/// both ends down to a relative distance of `1e-6`.
pub fn open_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let w = hi - lo;
    let half = n / 2;
    let mut v: Vec<f64> = log_points(1e-6, 0.5, n - half).into_iter().map(|t| lo + w * t).collect();
    let right: Vec<f64> = log_points(1e-6, 0.5, half + 1).into_iter().take(half).map(|t| hi - w * t).collect();
    v.extend(right.into_iter().rev());
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    v[0] = lo;
    v[n - 1] = hi;
    v
}

fn product(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect()
}

/// Nodes of `{0 < x, y <= eps, y x^{-beta} >= u_min}` laid out on `(x, u)`:
/// `x` log-spaced down to `eps * 1e-6`, `u` log-spaced from `u_min` up to
/// the ceiling `eps x^{-beta}`. With `open_u` the node `u = u_min` is
/// dropped.
pub fn ratio_nodes(eps: f64, beta: f64, u_min: f64, n: usize, open_u: bool) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n * n);
    for x in log_points(eps * 1e-6, eps, n) {
        let u_max = eps * x.powf(-beta);
        if u_max < u_min {
            continue;
        }
        let us = if open_u {
            log_points(u_min, u_max, n + 1).into_iter().skip(1).collect::<Vec<_>>()
        } else {
            log_points(u_min, u_max, n)
        };
        for u in us {
            out.push((x, (u * x.powf(beta)).min(eps)));
        }
    }
    out
}

fn pw(c: f64, x: f64, e: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * x.powf(e)
    }
}

fn sum_abs(t: &[f64]) -> f64 {
    t.iter().map(|v| v.abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `Lg <= d g`
    Le,
    /// `Lg >= d g`
    Ge,
}

/// Certifies `Lg (<= or >=) d g` on the given nodes.
pub fn check_generator_bound(
    params: &ModelParams,
    g: &TestFunction,
    nodes: &[(f64, f64)],
    region: &str,
    resolution: (usize, usize),
    direction: Direction,
    d: f64,
    quad: &QuadratureConfig,
) -> Result<GridCertificate> {
    let name = format!("generator_bound[{}, {:?}, d={d}]", g.family(), direction);
    certify(&name, region, resolution, nodes, |x, y| {
        let t = apply_generator(params, g, x, y, quad)?;
        let dg = d * g.value(x, y)?;
        let value = match direction {
            Direction::Le => dg - t.total,
            Direction::Ge => t.total - dg,
        };
        Ok((value, dg.abs() + t.abs_scale()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartialSubcase {
    Iia,
    Iib,
    Iic,
    Iid,
}

impl PartialSubcase {
    pub const ALL: [PartialSubcase; 4] = [Self::Iia, Self::Iib, Self::Iic, Self::Iid];
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Iia => "iia",
            Self::Iib => "iib",
            Self::Iic => "iic",
            Self::Iid => "iid",
        }
    }
}

impl std::str::FromStr for PartialSubcase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcase `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SureSubcase {
    Iiia,
    Iiib,
}

impl SureSubcase {
    pub const ALL: [SureSubcase; 2] = [Self::Iiia, Self::Iiib];
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Iiia => "iiia",
            Self::Iiib => "iiib",
        }
    }
}

impl std::str::FromStr for SureSubcase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcase `{s}`")))
    }
}

/// Shape constants of the power-ratio function and the slack `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HtildeRecipe {
    pub beta: f64,
    pub delta: f64,
    pub rho: f64,
    pub sigma: f64,
}

fn open_interval(lo: f64, hi: f64, what: &str) -> Result<f64> {
    if lo.is_finite() && hi.is_finite() && lo < hi && hi > 0.0 {
        Ok(0.5 * (lo.max(0.0) + hi))
    } else {
        Err(Error::SearchFailed(format!("{what}: the interval ({lo}, {hi}) for beta is empty")))
    }
}

/// Constants following the construction for each partial-extinction
/// subcase: `beta` at the midpoint of its admissible interval, `delta = 1/(2 beta)`.
pub fn htilde_recipe(params: &ModelParams, subcase: PartialSubcase) -> Result<HtildeRecipe> {
    let d = params.derived_exponents();
    let (p, q, a, b) = (d.p, d.q, d.a, d.b);
    let (t1, t2, k1, k2, e1) = (params.theta1, params.theta2, params.kappa1, params.kappa2, params.eta1);
    let tag = subcase.tag();
    if t2 >= 1.0 {
        return Err(Error::SearchFailed(format!("{tag}: needs theta2 < 1")));
    }
    let r = match subcase {
        PartialSubcase::Iia => {
            let beta = open_interval(if q > 0.0 { p / q } else { f64::INFINITY }, (k2 - p) / (1.0 - t2), tag)?;
            let rho1 = if p > 0.0 { (0.5 * (beta * q / p - 1.0)).min(1.0) } else { 1.0 };
            let delta = 0.5 / beta;
            HtildeRecipe {
                beta,
                delta,
                rho: (0.5 * rho1 * delta).min(0.5),
                sigma: 0.05,
            }
        }
        PartialSubcase::Iib => {
            if p != 0.0 || q != 0.0 {
                return Err(Error::SearchFailed(format!("{tag}: needs p = q = 0")));
            }
            let beta = open_interval(b / a, k2 / (1.0 - t2), tag)?;
            HtildeRecipe {
                beta,
                delta: 0.5 / beta,
                rho: 0.5,
                sigma: (0.5 * (beta * a - b) / (beta * a + b)).min(0.05),
            }
        }
        PartialSubcase::Iic => {
            if !(q > k1) || t1 < 1.0 {
                return Err(Error::SearchFailed(format!("{tag}: needs q > kappa1 and theta1 >= 1")));
            }
            let beta = open_interval((t1 - 1.0) / (q - k1), (k2 + 1.0 - t1) / (k1 + 1.0 - t2), tag)?;
            let rho1 = (0.5 * (beta * q / (t1 - 1.0 + beta * k1) - 1.0)).min(1.0);
            let delta = 0.5 / beta;
            HtildeRecipe {
                beta,
                delta,
                rho: (0.5 * rho1 * delta).min(0.5),
                sigma: 0.05,
            }
        }
        PartialSubcase::Iid => {
            let beta = open_interval(b / e1, k2 / (k1 + 1.0 - t2), tag)?;
            HtildeRecipe {
                beta,
                delta: 0.5 / beta,
                rho: 0.5,
                sigma: (0.5 * (beta * e1 - b) / (beta * e1 + b)).min(0.05),
            }
        }
    };
    if !(r.sigma > 0.0 && r.rho > 0.0) {
        return Err(Error::SearchFailed(format!("{tag}: recipe produced sigma = {}, rho = {}", r.sigma, r.rho)));
    }
    Ok(r)
}

/// Terms of `H~_sigma(x, y)`.
pub fn htilde_terms(params: &ModelParams, c: &HtildeRecipe, x: f64, y: f64) -> [f64; 6] {
    let d = params.derived_exponents();
    let (p, q, a, b) = (d.p, d.q, d.a, d.b);
    let m = params;
    let lead = c.delta * (c.beta * c.delta * x.ln() - c.delta * y.ln()).exp();
    [
        lead * c.beta * a * (1.0 - c.sigma) * x.powf(p),
        -lead * (1.0 + c.sigma) * b * y.powf(q),
        lead * c.beta * m.eta1 * x.powf(m.theta1 - 1.0) * y.powf(m.kappa1),
        -lead * m.eta2 * y.powf(m.theta2 - 1.0) * x.powf(m.kappa2),
        b * c.rho * (1.0 - c.sigma) * y.powf(c.rho + q),
        c.rho * m.eta2 * y.powf(c.rho + m.theta2 - 1.0) * x.powf(m.kappa2),
    ]
}

/// Certifies `H~_sigma > 0` on `{0 < x, y <= eps0, y x^{-beta} >= z_star}`.
pub fn certify_htilde(params: &ModelParams, c: &HtildeRecipe, eps0: f64, z_star: f64, n: usize) -> Result<GridCertificate> {
    let nodes = ratio_nodes(eps0, c.beta, z_star, n, false);
    let region = format!("0 < x, y <= {eps0}, y x^-{} >= {z_star}", c.beta);
    certify("htilde_positivity", &region, (n, n), &nodes, |x, y| {
        let t = htilde_terms(params, c, x, y);
        Ok((t.iter().sum(), sum_abs(&t)))
    })
}

const EPS_LADDER: [f64; 9] = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 1e-3, 1e-4, 1e-5];
const ZSTAR_LADDER: [f64; 5] = [1.0, 10.0, 100.0, 1e3, 1e4];
const COARSE: usize = 40;

/// Golden-section maximisation of `f` over `[a, b]`.
fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

fn hypothesis(params: &ModelParams, tag: &str) -> Result<()> {
    if condition_table(params, DEFAULT_MARGIN).flag(tag) {
        Ok(())
    } else {
        Err(Error::SearchFailed(format!("hypothesis ({tag}) does not hold for these parameters")))
    }
}

/// Searches `(eps0, z_star)` for the partial-extinction recipe, refines
/// `z_star` by golden section on the worst margin, and certifies at
/// resolution `n` and `2n`.
pub fn check_htilde_positivity(params: &ModelParams, subcase: PartialSubcase, n: usize) -> Result<Certified> {
    hypothesis(params, subcase.tag())?;
    search_htilde(params, subcase, n)
}

/// The search of [`check_htilde_positivity`] without the hypothesis gate.
pub fn search_htilde(params: &ModelParams, subcase: PartialSubcase, n: usize) -> Result<Certified> {
    let c = htilde_recipe(params, subcase)?;
    for eps0 in EPS_LADDER {
        for z0 in ZSTAR_LADDER {
            if !certify_htilde(params, &c, eps0, z0, COARSE)?.pass {
                continue;
            }
            let obj = |lz: f64| {
                certify_htilde(params, &c, eps0, lz.exp(), COARSE)
                    .map(|r| r.worst_margin)
                    .unwrap_or(f64::NEG_INFINITY)
            };
            let lz = golden_max(&obj, (z0 / 10.0).ln(), (z0 * 10.0).ln(), 20);
            let z_star = if obj(lz) > obj(z0.ln()) { lz.exp() } else { z0 };
            let cert = certify_htilde(params, &c, eps0, z_star, n)?;
            if !cert.pass {
                continue;
            }
            let recheck = certify_htilde(params, &c, eps0, z_star, 2 * n)?;
            if !recheck.pass {
                continue;
            }
            let constants = BTreeMap::from([
                ("beta".to_string(), c.beta),
                ("delta".to_string(), c.delta),
                ("rho".to_string(), c.rho),
                ("sigma".to_string(), c.sigma),
                ("eps0".to_string(), eps0),
                ("z_star".to_string(), z_star),
            ]);
            return Ok(Certified {
                constants,
                certificate: cert,
                recheck,
            });
        }
    }
    Err(Error::SearchFailed(format!(
        "{}: no (eps0, z_star) on the search ladder certifies positivity",
        subcase.tag()
    )))
}

/// Exponent and slack for the exponential-ratio function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HRecipe {
    pub r: f64,
    pub beta: f64,
    /// Lower bound `c0` that `H` must clear.
    pub c0: f64,
}

fn ratio_coefficients(params: &ModelParams, r: f64, beta: f64) -> (f64, f64) {
    let d = params.derived_exponents();
    let m = params;
    let at = |e: f64, p: f64| (e - p).abs() <= DEFAULT_MARGIN;
    let rb = r * beta;
    let mut a = 0.0;
    if at(m.p1, d.p) {
        a += m.a1;
    }
    if at(m.p2, d.p) {
        a += m.a2 * (rb + 1.0);
    }
    if at(m.p3, d.p) && m.a3 != 0.0 {
        a += m.a3 * (rb + 1.0) * gamma(m.alpha1 + rb) / (gamma(m.alpha1) * gamma(2.0 + rb));
    }
    let mut b = 0.0;
    if at(m.q1, d.q) {
        b += m.b1;
    }
    if at(m.q2, d.q) {
        b += m.b2 * (1.0 - r);
    }
    if at(m.q3, d.q) && m.b3 != 0.0 {
        b += m.b3 * (1.0 - r) * gamma(m.alpha2 - r) / (gamma(m.alpha2) * gamma(2.0 - r));
    }
    (a, b)
}

/// `(a(r), b(r))` of the sure-extinction bound.
pub fn h_coefficients(params: &ModelParams, r: f64, beta: f64) -> (f64, f64) {
    ratio_coefficients(params, r, beta)
}

/// Constants following the construction for each sure-extinction subcase.
pub fn h_recipe(params: &ModelParams, subcase: SureSubcase) -> Result<HRecipe> {
    let d = params.derived_exponents();
    let (p, q, a, b) = (d.p, d.q, d.a, d.b);
    let (t2, k2, e2) = (params.theta2, params.kappa2, params.eta2);
    if t2 >= 1.0 {
        return Err(Error::SearchFailed("needs theta2 < 1".into()));
    }
    let k = q + 1.0 - t2;
    match subcase {
        SureSubcase::Iiia => {
            let r = 0.25 * (1.0 - t2);
            let beta = 2.0 * k2 * (r + q) / (k * r);
            let (_, br) = ratio_coefficients(params, r, beta);
            let d1 = (1.0 - t2 - r) / k;
            let c1 = d1.powf(-d1) * (1.0 - d1).powf(d1 - 1.0) * br.powf(d1) * e2.powf(1.0 - d1);
            Ok(HRecipe { r, beta, c0: c1 / 3.0 })
        }
        SureSubcase::Iiib => {
            if p != 0.0 || q != 0.0 {
                return Err(Error::SearchFailed("iiib: needs p = q = 0".into()));
            }
            let beta = open_interval(k2 / (1.0 - t2), b / a, "iiib")?;
            let r = 0.1 * (1.0 - t2);
            let (ar, br) = ratio_coefficients(params, r, beta);
            let eps1 = 0.25 * (1.0 - ar * beta / br);
            if !(eps1 > 0.0) {
                return Err(Error::SearchFailed(format!("iiib: a(r) beta = {} exceeds b(r) = {br}", ar * beta)));
            }
            Ok(HRecipe {
                r,
                beta,
                c0: eps1 * (ar * beta).min(e2),
            })
        }
    }
}

/// Terms of `H(x, y)` for the exponential-ratio function.
pub fn h_terms(params: &ModelParams, c: &HRecipe, x: f64, y: f64) -> [f64; 4] {
    let d = params.derived_exponents();
    let (ar, br) = ratio_coefficients(params, c.r, c.beta);
    let m = params;
    let lu = c.r * (y.ln() - c.beta * x.ln());
    let t = |coef: f64, l: f64| if coef == 0.0 { 0.0 } else { coef * (lu + l).exp() };
    [
        t(br, d.q * y.ln()),
        t(m.eta2, (m.theta2 - 1.0) * y.ln() + m.kappa2 * x.ln()),
        -t(ar * c.beta, d.p * x.ln()),
        -t(m.eta1 * c.beta, (m.theta1 - 1.0) * x.ln() + m.kappa1 * y.ln()),
    ]
}

/// Certifies `H >= c0` on `(0, eps)^2`.
pub fn certify_h(params: &ModelParams, c: &HRecipe, eps: f64, n: usize) -> Result<GridCertificate> {
    let pts: Vec<f64> = log_points(eps * 1e-6, eps, n + 1).into_iter().take(n).collect();
    let nodes = product(&pts, &pts);
    let region = format!("0 < x, y < {eps}");
    certify("h_lower_bound", &region, (n, n), &nodes, |x, y| {
        let t = h_terms(params, c, x, y);
        Ok((t.iter().sum::<f64>() - c.c0, sum_abs(&t) + c.c0))
    })
}

pub fn check_h_lower_bound(params: &ModelParams, subcase: SureSubcase, n: usize) -> Result<Certified> {
    hypothesis(params, subcase.tag())?;
    search_h(params, subcase, n)
}

/// The search of [`check_h_lower_bound`] without the hypothesis gate.
pub fn search_h(params: &ModelParams, subcase: SureSubcase, n: usize) -> Result<Certified> {
    let c = h_recipe(params, subcase)?;
    for eps in EPS_LADDER {
        if !certify_h(params, &c, eps, COARSE)?.pass {
            continue;
        }
        let cert = certify_h(params, &c, eps, n)?;
        if !cert.pass {
            continue;
        }
        let recheck = certify_h(params, &c, eps, 2 * n)?;
        if !recheck.pass {
            continue;
        }
        let constants = BTreeMap::from([
            ("r".to_string(), c.r),
            ("beta".to_string(), c.beta),
            ("eps".to_string(), eps),
            ("c0".to_string(), c.c0),
        ]);
        return Ok(Certified {
            constants,
            certificate: cert,
            recheck,
        });
    }
    Err(Error::SearchFailed(format!(
        "{}: no eps on the search ladder certifies H >= c0",
        subcase.tag()
    )))
}

/// Rounding allowance for the pure-arithmetic Young check, where equality
/// is attained on a curve.
const YOUNG_ROUNDING: f64 = 1e-12;

/// `u + v >= p^{1/p} q^{1/q} u^{1/p} v^{1/q}` on random draws, plus the
/// equality case `u = v = 1, p = 2`.
pub fn check_young(samples: usize, seed: u64) -> Result<GridCertificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<(f64, f64, f64)> = vec![(1.0, 1.0, 2.0), (0.0, 3.0, 3.0), (4.0, 1.0, 2.0)];
    for _ in 0..samples {
        draws.push((rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(1.01..10.0)));
    }
    let nodes: Vec<(f64, f64)> = (0..draws.len()).map(|i| (i as f64, 0.0)).collect();
    certify("young", "u, v in [0, 10), p in (1, 10)", (draws.len(), 1), &nodes, |i, _| {
        let (u, v, p) = draws[i as usize];
        let q = p / (p - 1.0);
        let rhs = p.powf(1.0 / p) * q.powf(1.0 / q) * u.powf(1.0 / p) * v.powf(1.0 / q);
        let lhs = u + v;
        Ok((lhs - rhs + YOUNG_ROUNDING * lhs, lhs + rhs))
    })
}

/// Constants of the bump lemma.
pub const BUMP_LAMBDA0: f64 = 8.0;
/// Right-end weight keeping the bump increasing and convex on `(x1, x2)`.
pub const BUMP_LAMBDA1: f64 = 1.0 / 72.0;

fn lambda_ladder(l0: f64) -> Vec<f64> {
    [1.0 + 1e-9, 2.0, 8.0, 32.0, 128.0].iter().map(|k| l0 * k).collect()
}

/// `h'(x) <= lambda h(x) (x - x1)^{-2}` on `(x1, x3)` for sampled `lambda, lambda1`.
pub fn check_lemma36_i(x1: f64, x3: f64, n: usize) -> Result<GridCertificate> {
    let pairs: Vec<(f64, f64)> = [0.1, 1.0, 10.0, 100.0]
        .iter()
        .flat_map(|&l| [0.01, 1.0, 73.0].map(|l1| (l, l1)))
        .collect();
    let xs = open_points(x1, x3, n);
    let nodes = product(&xs, &(0..pairs.len()).map(|i| i as f64).collect::<Vec<_>>());
    certify("lemma36_i", &format!("({x1}, {x3})"), (n, pairs.len()), &nodes, |x, k| {
        let (l, l1) = pairs[k as usize];
        let h = BumpProfile::new(x1, x3, l, l1)?;
        let bound = l / (x - x1).powi(2);
        let dl = h.dlog(x);
        // Strict by the right-end term; compare log-derivatives.
        Ok((bound - dl, bound.abs() + dl.abs()))
    })
}

/// `h(x)^{-1} int K_z h(x) mu(dz)` as `(sign, ln |.|)`.
pub fn log_jump_ratio(h: &dyn Profile1D, x: f64, m: &StableMeasure, quad: &QuadratureConfig) -> Result<(f64, f64)> {
    let s = scaled_jump_ratio(h, x, m, quad)?;
    Ok((s.scaled.signum(), s.log_scale + s.scaled.abs().ln()))
}

/// Ratio `h(x)^{-1} int K_z h(x) z^{-1-alpha} dz` in log form.
fn raw_jump_ratio(h: &dyn Profile1D, x: f64, m: &StableMeasure, quad: &QuadratureConfig) -> Result<(f64, f64)> {
    let (sg, l) = log_jump_ratio(h, x, m, quad)?;
    Ok((sg, l - m.c_alpha().ln()))
}

/// Report of the two bump inequalities with the constants found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpReport {
    pub constants: ConstantsFound,
    pub second_derivative: GridCertificate,
    pub jump: GridCertificate,
}

impl BumpReport {
    pub fn pass(&self) -> bool {
        self.second_derivative.pass && self.jump.pass
    }
}

/// Inequalities (ii): `h''/h >= lambda^2 c0 (x - x1)^{-4}` and the jump
/// analogue with `lambda^alpha c0 (x - x1)^{-2-alpha}` on `(x1, x2)`, for
/// `lambda` on a ladder above `lambda0`. `c0` is half the smallest ratio.
pub fn check_lemma36_ii(
    x1: f64,
    x2: f64,
    x3: f64,
    alpha: f64,
    lambda1: f64,
    n: usize,
    quad: &QuadratureConfig,
) -> Result<BumpReport> {
    let m = StableMeasure::new(alpha)?;
    let lams = lambda_ladder(BUMP_LAMBDA0);
    let xs = open_points(x1, x2, n);
    let nodes = product(&xs, &(0..lams.len()).map(|i| i as f64).collect::<Vec<_>>());
    let ratios: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&(x, k)| {
            let l = lams[k as usize];
            let h = BumpProfile::new(x1, x3, l, lambda1)?;
            let r2 = h.d2_over(x) / (l * l * (x - x1).powi(-4));
            let (s, lj) = raw_jump_ratio(&h, x, &m, quad)?;
            let rj = s * (lj - alpha * l.ln() + (2.0 + alpha) * (x - x1).ln()).exp();
            Ok((r2, rj))
        })
        .collect::<Result<_>>()?;
    let c0 = 0.5 * ratios.iter().map(|(a, b)| a.min(*b)).fold(f64::INFINITY, f64::min);
    let region = format!("({x1}, {x2}) x lambda in {lams:?}");
    let lookup = |x: f64, k: f64| {
        let i = xs.iter().position(|v| *v == x).unwrap_or(0) * lams.len() + k as usize;
        ratios[i]
    };
    let second = certify("lemma36_ii_second", &region, (n, lams.len()), &nodes, |x, k| {
        let r = lookup(x, k).0;
        Ok((r - c0, r.abs() + c0.abs()))
    })?;
    let jump = certify("lemma36_ii_jump", &region, (n, lams.len()), &nodes, |x, k| {
        let r = lookup(x, k).1;
        Ok((r - c0, r.abs() + c0.abs()))
    })?;
    Ok(BumpReport {
        constants: BTreeMap::from([
            ("lambda0".to_string(), BUMP_LAMBDA0),
            ("lambda1".to_string(), lambda1),
            ("c0".to_string(), c0),
        ]),
        second_derivative: second,
        jump,
    })
}

/// Inequalities (iii) with `lambda1 = 1` on `(x1, x3)`: constants
/// `c0~, c1~` are fitted at `lambda0` and certified on the whole ladder.
pub fn check_lemma36_iii(x1: f64, x3: f64, alpha: f64, n: usize, quad: &QuadratureConfig) -> Result<BumpReport> {
    let m = StableMeasure::new(alpha)?;
    let lams = lambda_ladder(BUMP_LAMBDA0);
    let xs = open_points(x1, x3, n);
    let near = x1 + 0.1 * (x3 - x1);
    // Values divided by lambda^2 and lambda^alpha.
    let eval = |x: f64, l: f64| -> Result<(f64, f64)> {
        let h = BumpProfile::new(x1, x3, l, 1.0)?;
        let (s, lj) = raw_jump_ratio(&h, x, &m, quad)?;
        Ok((h.d2_over(x) / (l * l), s * (lj - alpha * l.ln()).exp()))
    };
    let base: Vec<(f64, f64)> = xs.par_iter().map(|&x| eval(x, lams[0])).collect::<Result<_>>()?;
    let pows = [4.0, 2.0 + alpha];
    let pick = |r: &(f64, f64), i: usize| if i == 0 { r.0 } else { r.1 };
    let c0 = 0.5
        * (0..2)
            .flat_map(|i| {
                xs.iter()
                    .zip(&base)
                    .filter(|(x, _)| **x < near)
                    .map(move |(x, r)| pick(r, i) * (x - x1).powf(pows[i]))
            })
            .fold(f64::INFINITY, f64::min);
    let c1 = 1.01
        * (0..2)
            .flat_map(|i| {
                xs.iter()
                    .zip(&base)
                    .map(move |(x, r)| (x - x1).powf(-pows[i]) - pick(r, i) / c0)
            })
            .fold(0.0, f64::max);
    let nodes = product(&xs, &(0..lams.len()).map(|i| i as f64).collect::<Vec<_>>());
    let vals: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&(x, k)| eval(x, lams[k as usize]))
        .collect::<Result<_>>()?;
    let region = format!("({x1}, {x3}) x lambda in {lams:?}");
    let idx = |x: f64, k: f64| xs.iter().position(|v| *v == x).unwrap_or(0) * lams.len() + k as usize;
    let second = certify("lemma36_iii_second", &region, (n, lams.len()), &nodes, |x, k| {
        let r = vals[idx(x, k)].0;
        let b = c0 * ((x - x1).powi(-4) - c1);
        Ok((r - b, r.abs() + b.abs()))
    })?;
    let jump = certify("lemma36_iii_jump", &region, (n, lams.len()), &nodes, |x, k| {
        let r = vals[idx(x, k)].1;
        let b = c0 * ((x - x1).powf(-2.0 - alpha) - c1);
        Ok((r - b, r.abs() + b.abs()))
    })?;
    Ok(BumpReport {
        constants: BTreeMap::from([
            ("lambda0".to_string(), BUMP_LAMBDA0),
            ("lambda1".to_string(), 1.0),
            ("c0".to_string(), c0),
            ("c1".to_string(), c1),
        ]),
        second_derivative: second,
        jump,
    })
}

/// Second partials and jump integrals of the exponential-ratio function
/// against their lower bounds on random draws.
pub fn check_lemma312(samples: usize, seed: u64, quad: &QuadratureConfig) -> Result<GridCertificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<[f64; 7]> = (0..samples)
        .map(|_| {
            [
                rng.random_range(0.2..2.0),
                rng.random_range(0.2..2.0),
                rng.random_range(0.1..3.0),
                rng.random_range(0.05..0.95),
                rng.random_range(0.2..2.0),
                rng.random_range(1.1..1.9),
                rng.random_range(1.1..1.9),
            ]
        })
        .collect();
    // One node per (draw, quantity).
    let nodes: Vec<(f64, f64)> = (0..samples).flat_map(|i| (0..4).map(move |j| (i as f64, j as f64))).collect();
    certify(
        "lemma312_domination",
        "x, y in (0.2, 2), lambda in (0.1, 3), r in (0.05, 0.95), beta in (0.2, 2)",
        (samples, 4),
        &nodes,
        |i, j| {
            let [x, y, lambda, r, beta, a1, a2] = draws[i as usize];
            let g = TestFunction::exp_ratio(lambda, r, beta)?;
            let b = g.exp_ratio_bounds(x, y, a1, a2)?;
            let (truth, bound) = match j as usize {
                0 => (g.jet(x, y)?.gxx, b.gxx),
                1 => (g.jet(x, y)?.gyy, b.gyy),
                2 => (jump_integral(&g, x, y, Axis::First, &StableMeasure::new(a1)?, quad)?, b.jump_x),
                _ => (jump_integral(&g, x, y, Axis::Second, &StableMeasure::new(a2)?, quad)?, b.jump_y),
            };
            Ok((truth - bound, truth.abs() + bound.abs()))
        },
    )
}

/// Per-axis data of a product-form function on a node set: `(h'/h, h''/h,
/// int K h mu / h)`.
fn axis_data(h: &(dyn Profile1D + Sync), pts: &[f64], m: &StableMeasure, need_jump: bool, quad: &QuadratureConfig) -> Result<Vec<[f64; 3]>> {
    pts.par_iter()
        .map(|&x| {
            let j = if need_jump { scaled_jump_ratio(h, x, m, quad)?.ratio() } else { 0.0 };
            Ok([h.dlog(x), h.d2_over(x), j])
        })
        .collect()
}

/// `Lg/g` terms for `g = hx(x) hy(y)` given per-axis data.
fn product_ratio_terms(p: &ModelParams, x: f64, y: f64, dx: &[f64; 3], dy: &[f64; 3]) -> [f64; 8] {
    [
        -pw(p.a1, x, p.p1 + 1.0) * dx[0],
        pw(p.a2, x, p.p2 + 2.0) * dx[1],
        pw(p.a3, x, p.p3 + p.alpha1) * dx[2],
        -pw(p.b1, y, p.q1 + 1.0) * dy[0],
        pw(p.b2, y, p.q2 + 2.0) * dy[1],
        pw(p.b3, y, p.q3 + p.alpha2) * dy[2],
        -p.eta1 * x.powf(p.theta1) * y.powf(p.kappa1) * dx[0],
        -p.eta2 * y.powf(p.theta2) * x.powf(p.kappa2) * dy[0],
    ]
}

/// Certifies `Lg / g >= d` for a product `hx(x) hy(y)` on `xs x ys`, with
/// `d` half the smallest ratio. Returns the certificate and `d`.
fn certify_product_ratio(
    check: &str,
    region: &str,
    params: &ModelParams,
    xs: &[f64],
    ys: &[f64],
    ax: &[[f64; 3]],
    ay: &[[f64; 3]],
) -> Result<(GridCertificate, f64)> {
    let nx = xs.len();
    let ny = ys.len();
    let idx: Vec<(usize, usize)> = (0..nx).flat_map(|i| (0..ny).map(move |j| (i, j))).collect();
    let ratios: Vec<(f64, f64)> = idx
        .iter()
        .map(|&(i, j)| {
            let t = product_ratio_terms(params, xs[i], ys[j], &ax[i], &ay[j]);
            (t.iter().sum(), sum_abs(&t))
        })
        .collect();
    let d = 0.5 * ratios.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let nodes: Vec<(f64, f64)> = (0..idx.len()).map(|k| (k as f64, 0.0)).collect();
    let mut cert = certify(check, region, (nx, ny), &nodes, |k, _| {
        let (v, s) = ratios[k as usize];
        Ok((v - d, s + d.abs()))
    })?;
    for n in cert.nodes.iter_mut() {
        let (i, j) = idx[n.x as usize];
        n.x = xs[i];
        n.y = ys[j];
    }
    if let Some(n) = cert.nodes.iter().find(|n| n.margin == cert.worst_margin) {
        cert.worst_node = (n.x, n.y);
    }
    Ok((cert, d))
}

/// Irreducibility criterion with a product of bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop24Report {
    pub constants: ConstantsFound,
    /// `g > 0` at the start, `g` bounded, zero on the envelope boundary and
    /// `|Lg|` finite on the envelope.
    pub structural: bool,
    pub d: f64,
    pub certificate: GridCertificate,
}

/// Rectangle `[lo.0, hi.0] x [lo.1, hi.1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: (f64, f64),
    pub hi: (f64, f64),
}

impl Rect {
    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= self.lo.0 && p.0 <= self.hi.0 && p.1 >= self.lo.1 && p.1 <= self.hi.1
    }
}

/// Checks the four conditions of the irreducibility criterion for the
/// bump product `g1(x) g2(y)` supported on the envelope, searching the bump
/// strengths over `{10, 100, 1000}`.
///
/// Supported configurations are the ones of the construction: the start
/// lies in the `x`-range of `D` below it (envelope `x`-range equal to that
/// of `D`), or the mirror image with the axes exchanged.
pub fn check_prop24_bump(
    params: &ModelParams,
    target: Rect,
    envelope: Rect,
    start: (f64, f64),
    n: usize,
    quad: &QuadratureConfig,
) -> Result<Prop24Report> {
    if target.contains(start) {
        return Err(Error::Precondition(format!("start {start:?} lies inside D")));
    }
    let inside = |p: (f64, f64), r: &Rect| p.0 > r.lo.0 && p.0 < r.hi.0 && p.1 > r.lo.1 && p.1 < r.hi.1;
    if !inside(start, &envelope) {
        return Err(Error::Precondition(format!("start {start:?} is outside the envelope")));
    }
    if !(envelope.lo.0 <= target.lo.0 && envelope.lo.1 <= target.lo.1 && envelope.hi.0 >= target.hi.0 && envelope.hi.1 >= target.hi.1) {
        return Err(Error::Precondition("the envelope must contain D".into()));
    }
    let below = start.0 > target.lo.0 && start.0 < target.hi.0 && start.1 < target.lo.1;
    let left = start.1 > target.lo.1 && start.1 < target.hi.1 && start.0 < target.lo.0;
    let sw = |p: (f64, f64)| (p.1, p.0);
    let sr = |r: Rect| Rect { lo: sw(r.lo), hi: sw(r.hi) };
    let (p, t, e, s) = if below {
        (*params, target, envelope, start)
    } else if left {
        (params.swapped(), sr(target), sr(envelope), sw(start))
    } else {
        return Err(Error::Precondition(
            "start must lie beside D in one coordinate range (below or to the left of D)".into(),
        ));
    };
    if e.lo.0 != t.lo.0 || e.hi.0 != t.hi.0 {
        return Err(Error::Precondition("envelope must share the x-range of D in this configuration".into()));
    }
    let xs = open_points(t.lo.0, t.hi.0, n);
    let ys = open_points(e.lo.1, t.lo.1, n);
    let region = format!("({}, {}) x ({}, {})", t.lo.0, t.hi.0, e.lo.1, t.lo.1);
    let (m1, m2) = p.measures()?;
    let ladder = [10.0, 100.0, 1000.0];
    let mut y_data = Vec::new();
    for lam_t in ladder {
        for l1t in [BUMP_LAMBDA1, BUMP_LAMBDA1 / 10.0] {
            let g2 = BumpProfile::new(e.lo.1, e.hi.1, lam_t, l1t)?;
            y_data.push((g2, axis_data(&g2, &ys, &m2, p.b3 != 0.0, quad)?));
        }
    }
    let mut last = None;
    for lam in ladder {
        let g1 = BumpProfile::new(e.lo.0, e.hi.0, lam, 1.0)?;
        let ax = axis_data(&g1, &xs, &m1, p.a3 != 0.0, quad)?;
        for (g2, ay) in &y_data {
            {
                let (lam_t, l1t) = (g2.lambda, g2.lambda1);
                let (cert, d) = certify_product_ratio("prop24_iv", &region, &p, &xs, &ys, &ax, ay)?;
                if cert.pass && d > 0.0 {
                    let structural = prop24_structure(&p, &g1, g2, &e, s, quad)?;
                    let constants = BTreeMap::from([
                        ("lambda".to_string(), lam),
                        ("lambda1".to_string(), 1.0),
                        ("lambda_tilde".to_string(), lam_t),
                        ("lambda1_tilde".to_string(), l1t),
                        ("d".to_string(), d),
                    ]);
                    return Ok(Prop24Report {
                        constants,
                        structural,
                        d,
                        certificate: cert,
                    });
                }
                last = Some(cert.worst_margin);
            }
        }
    }
    Err(Error::SearchFailed(format!(
        "no bump strengths on the ladder give Lg >= d g with d > 0 (last worst margin {last:?})"
    )))
}

fn prop24_structure(p: &ModelParams, g1: &BumpProfile, g2: &BumpProfile, e: &Rect, s: (f64, f64), quad: &QuadratureConfig) -> Result<bool> {
    let g = |x: f64, y: f64| g1.value(x) * g2.value(y);
    let sup = (g1.ln_sup() + g2.ln_sup()).exp();
    let mut ok = g(s.0, s.1) > 0.0 && sup.is_finite() && sup > 0.0;
    for t in [0.1, 0.5, 0.9, 2.0] {
        let u = e.lo.0 + t * (e.hi.0 - e.lo.0);
        let v = e.lo.1 + t * (e.hi.1 - e.lo.1);
        ok &= g(e.lo.0, v) == 0.0 && g(e.hi.0 * (1.0 + t), v) == 0.0;
        ok &= g(u, e.lo.1) == 0.0 && g(u, e.hi.1 * (1.0 + t)) == 0.0;
    }
    // |Lg| in log space: each term is a coefficient times ln h + ln |h-ratio|
    // on one axis plus ln h on the other.
    let (m1, m2) = p.measures()?;
    let log_terms = |h: &BumpProfile, m: &StableMeasure, pts: &[f64]| -> Result<Vec<(f64, f64)>> {
        pts.par_iter()
            .map(|&x| {
                let lh = h.ln_value(x);
                let (_, lj) = log_jump_ratio(h, x, m, quad)?;
                let ld = h.dlog(x).abs().ln().max(h.d2_over(x).abs().ln()).max(lj);
                Ok((lh, lh + ld))
            })
            .collect()
    };
    let xs = open_points(e.lo.0, e.hi.0, 24);
    let ys = open_points(e.lo.1, e.hi.1, 24);
    let lx = log_terms(g1, &m1, &xs)?;
    let ly = log_terms(g2, &m2, &ys)?;
    let coef = [p.a1, p.a2, p.a3, p.b1, p.b2, p.b3, p.eta1, p.eta2]
        .iter()
        .fold(0.0f64, |m, c| m.max(c.abs()))
        .max(1.0)
        .ln();
    let reach = (e.hi.0.max(e.hi.1).max(1.0)).ln() * 8.0;
    for (hx, dx) in &lx {
        for (hy, dy) in &ly {
            let worst = (dx + hy).max(hx + dy) + coef + reach;
            ok &= worst.is_nan() || worst < 700.0;
            ok &= !worst.is_nan() || (*hx == f64::NEG_INFINITY || *hy == f64::NEG_INFINITY);
        }
    }
    Ok(ok)
}

/// Survival criterion with the power-ratio function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop25Report {
    pub constants: ConstantsFound,
    /// `Lg <= 0` on `{0 < x, y <= eps0, y x^{-beta} > u_star}`.
    pub generator: GridCertificate,
    /// `g >= u^{-delta}`, `g > 0` and `|Lg| < inf` on compact boxes.
    pub envelope_and_boxes: GridCertificate,
}

impl Prop25Report {
    pub fn pass(&self) -> bool {
        self.generator.pass && self.envelope_and_boxes.pass
    }
}

pub fn check_prop25_conditions(
    params: &ModelParams,
    beta: f64,
    delta: f64,
    rho: f64,
    u_star: f64,
    eps0: f64,
    n: usize,
    quad: &QuadratureConfig,
) -> Result<Prop25Report> {
    let g = TestFunction::power_ratio(beta, delta, rho)?;
    let nodes = ratio_nodes(eps0, beta, u_star, n, true);
    let region = format!("0 < x, y <= {eps0}, y x^-{beta} > {u_star}");
    let generator = certify("prop25_generator", &region, (n, n), &nodes, |x, y| {
        let t = apply_generator(params, &g, x, y, quad)?;
        Ok((-t.total, t.abs_scale()))
    })?;
    if !generator.pass {
        return Err(Error::SearchFailed(format!(
            "Lg <= 0 fails on {region}: worst margin {:.3e} at {:?}",
            generator.worst_margin, generator.worst_node
        )));
    }
    let mut box_nodes = Vec::new();
    for (z1, z2) in [(1e-3, 1e-2), (1e-2, 1.0), (1.0, 10.0)] {
        let pts = log_points(z1, z2, 8);
        box_nodes.extend(product(&pts, &pts));
    }
    let boxes = certify("prop25_boxes", "[z1, z2]^2 for (z1, z2) in {(1e-3,1e-2), (1e-2,1), (1,10)}", (8, 24), &box_nodes, |x, y| {
        let v = g.value(x, y)?;
        let env = (y * x.powf(-beta)).powf(-delta);
        let lg = apply_generator(params, &g, x, y, quad)?.total;
        let finite = if lg.is_finite() { 1.0 } else { -1.0 };
        // Positive iff g > 0, g dominates its envelope, and Lg is finite.
        let slack = (v - env).min(v).min(finite * v);
        Ok((slack, v + env))
    })?;
    Ok(Prop25Report {
        constants: BTreeMap::from([
            ("beta".to_string(), beta),
            ("delta".to_string(), delta),
            ("rho".to_string(), rho),
            ("u_star".to_string(), u_star),
            ("eps0".to_string(), eps0),
        ]),
        generator,
        envelope_and_boxes: boxes,
    })
}

/// Constants of the bound `Lg_n <= d_n` for the truncated logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogBoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub d_n: f64,
}

/// `c_{1}`, `c_{2,n}`, `c_{3,n}` and `d_n = eta1 n^{theta1 - 1 + kappa1} + G1(n)`.
pub fn log_bound_constants(params: &ModelParams, n: f64) -> Result<LogBoundConstants> {
    let m = StableMeasure::new(params.alpha1)?;
    let al = params.alpha1;
    let c1 = al * (al - 1.0);
    let lx = LogX::new(n)?;
    let sup_g2 = (0..=2000)
        .map(|i| lx.eval(0.5 + (n + 1.5) * i as f64 / 2000.0).2.abs())
        .fold(0.0, f64::max);
    let c2 = sup_g2 * m.truncated_moment(2, 0.0, n + 1.0)?;
    let sup_g = lx.eval(0.5).0;
    let c3 = 0.5 * sup_g * (m.tail_mass(0.5)? - m.tail_mass(n + 1.0)?) + m.truncated_moment(1, 0.5, n + 1.0)?;
    let p = params;
    let g1 = pw(p.a1, n, p.p1) + pw(p.a2, n, p.p2) + pw(p.a3, n, p.p3 + al) * (c1 * n.powf(-al) + c3 / n + c2);
    Ok(LogBoundConstants {
        c1,
        c2,
        c3,
        d_n: p.eta1 * n.powf(p.theta1 - 1.0 + p.kappa1) + g1,
    })
}

/// `Lg_n <= d_n g_n` on `(0, n]^2` with `d_n` as displayed, scaled by
/// `slack`.
pub fn check_log_bound(params: &ModelParams, n: f64, slack: f64, res: usize, quad: &QuadratureConfig) -> Result<(LogBoundConstants, GridCertificate)> {
    let c = log_bound_constants(params, n)?;
    let g = TestFunction::log_x(n)?;
    let mut xs = log_points(n * 1e-6, n, res);
    xs.dedup();
    let nodes = product(&xs, &xs);
    let cert = check_generator_bound(params, &g, &nodes, &format!("(0, {n}]^2"), (res, res), Direction::Le, slack * c.d_n, quad)?;
    Ok((c, cert))
}

/// Tangent-exponential search: `Lg >= d g` on `(0, 1)^2` with `d > 0`,
/// doubling `lambda2` and then `lambda1` until the grid certifies.
pub fn check_exp_tan(params: &ModelParams, n: usize, quad: &QuadratureConfig) -> Result<(ConstantsFound, GridCertificate)> {
    let d = params.derived_exponents();
    if params.theta2 >= 1.0 {
        return Err(Error::Precondition("needs theta2 < 1".into()));
    }
    let delta = (params.theta1 - 1.0).max(d.p + 1.0 - params.theta1).max(1.0) + 0.5;
    let rho = 0.5 * (1.0 - params.theta2);
    let xs = open_points(0.0, 1.0, n);
    let (m1, m2) = params.measures()?;
    let mut last = f64::NEG_INFINITY;
    for l1 in [2.0, 8.0, 32.0, 128.0] {
        let ax = axis_data(&TanXProfile::new(l1, delta), &xs, &m1, params.a3 != 0.0, quad)?;
        for l2 in [2.0, 8.0, 32.0, 128.0, 512.0] {
            let ay = axis_data(&TanYProfile { lambda2: l2, rho }, &xs, &m2, params.b3 != 0.0, quad)?;
            let (cert, dd) = certify_product_ratio("exp_tan_lower", "(0, 1)^2", params, &xs, &xs, &ax, &ay)?;
            if cert.pass && dd > 0.0 {
                let constants = BTreeMap::from([
                    ("lambda1".to_string(), l1),
                    ("lambda2".to_string(), l2),
                    ("rho".to_string(), rho),
                    ("delta".to_string(), delta),
                    ("d".to_string(), dd),
                ]);
                return Ok((constants, cert));
            }
            last = last.max(dd);
        }
    }
    Err(Error::SearchFailed(format!("no (lambda1, lambda2) on the ladder gives d > 0 (best d {last:.3e})")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example2() -> ModelParams {
        ModelParams {
            a2: 1.0,
            b3: 1.0,
            q3: 1.0,
            theta1: 1.0,
            theta2: 0.5,
            ..ModelParams::default()
        }
    }

    fn example3() -> ModelParams {
        ModelParams {
            a3: 1.0,
            p3: 1.0,
            b3: 1.0,
            q3: 2.0,
            theta1: 2.5,
            theta2: 0.0,
            ..ModelParams::default()
        }
    }

    #[test]
    fn certificate_strictness() {
        let nodes = [(1.0, 1.0), (2.0, 2.0)];
        let c = certify("zero", "pts", (2, 1), &nodes, |_, _| Ok((0.0, 0.0))).unwrap();
        assert!(!c.pass);
        let c = certify("pos", "pts", (2, 1), &nodes, |x, _| Ok((x, 2.0 * x))).unwrap();
        assert!(c.pass);
        assert_eq!(c.worst_margin, 0.5);
    }

    #[test]
    fn constant_function_fails_both_directions() {
        let p = example2();
        let g = TestFunction::constant(2.0);
        let nodes = [(0.5, 0.5), (1.0, 2.0)];
        for dir in [Direction::Le, Direction::Ge] {
            let c = check_generator_bound(&p, &g, &nodes, "pts", (2, 1), dir, 0.0, &QuadratureConfig::default()).unwrap();
            assert!(!c.pass);
            assert_eq!(c.worst_margin, 0.0);
        }
    }

    #[test]
    fn young_examples() {
        let c = check_young(2000, 3).unwrap();
        assert!(c.pass, "{c:?}");
    }

    #[test]
    fn iia_recipe_matches_example() {
        let r = htilde_recipe(&example2(), PartialSubcase::Iia).unwrap();
        assert!((r.beta - 1.0).abs() < 1e-15);
        let c = check_htilde_positivity(&example2(), PartialSubcase::Iia, 60).unwrap();
        assert!(c.pass(), "{c:?}");
    }

    #[test]
    fn wrong_regime_is_rejected() {
        assert!(matches!(
            check_htilde_positivity(&example3(), PartialSubcase::Iia, 40),
            Err(Error::SearchFailed(_))
        ));
        assert!(matches!(
            check_h_lower_bound(&example2(), SureSubcase::Iiia, 40),
            Err(Error::SearchFailed(_))
        ));
    }

    #[test]
    fn iiia_example_certifies() {
        let c = check_h_lower_bound(&example3(), SureSubcase::Iiia, 60).unwrap();
        assert!(c.pass(), "{c:?}");
        assert!(c.constants["c0"] > 0.0);
    }

    #[test]
    fn ratio_nodes_respect_region() {
        for (x, y) in ratio_nodes(0.1, 2.0, 5.0, 30, true) {
            assert!(x > 0.0 && x <= 0.1 && y > 0.0 && y <= 0.1);
            assert!(y * x.powf(-2.0) > 5.0 * (1.0 - 1e-12));
        }
    }

    #[test]
    fn open_points_stay_inside() {
        let v = open_points(1.0, 3.0, 200);
        assert_eq!(v.len(), 200);
        assert!(v.iter().all(|x| *x > 1.0 && *x < 3.0));
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }

    fn mp(f: impl Fn(&mut ModelParams)) -> ModelParams {
        let mut p = ModelParams::default();
        f(&mut p);
        p
    }

    #[test]
    fn partial_subcases_certify() {
        let sets = [
            (PartialSubcase::Iib, mp(|p| { p.a2 = 1.0; p.b2 = 1.0; p.theta1 = 1.0; p.theta2 = 0.5; })),
            (PartialSubcase::Iic, mp(|p| { p.a2 = 1.0; p.p2 = 3.0; p.b2 = 1.0; p.q2 = 3.0; p.theta1 = 1.5; p.theta2 = 0.5; })),
            (PartialSubcase::Iid, mp(|p| { p.a1 = 1.0; p.p1 = 1.0; p.b1 = 0.5; p.q1 = 1.0; p.theta1 = 1.0; p.theta2 = 0.5; })),
        ];
        for (sub, p) in sets {
            let c = check_htilde_positivity(&p, sub, 40).unwrap();
            assert!(c.pass(), "{}: {c:?}", sub.tag());
        }
        let p = mp(|p| { p.a2 = 1.0; p.b2 = 3.0; p.theta1 = 1.0; p.theta2 = 0.5; });
        let c = check_h_lower_bound(&p, SureSubcase::Iiib, 40).unwrap();
        assert!(c.pass() && c.constants["c0"] > 0.0, "{c:?}");
    }

    #[test]
    fn bump_inequalities_hold_with_small_lambda1() {
        let q = QuadratureConfig::default();
        assert!(check_lemma36_i(1.0, 3.0, 40).unwrap().pass);
        let r = check_lemma36_ii(1.0, 2.0, 3.0, 1.5, BUMP_LAMBDA1, 30, &q).unwrap();
        assert!(r.pass() && r.constants["c0"] > 0.0, "{r:?}");
        let r = check_lemma36_iii(1.0, 3.0, 1.5, 30, &q).unwrap();
        assert!(r.pass(), "{r:?}");
    }

    #[test]
    fn large_lambda1_breaks_the_jump_inequality() {
        let r = check_lemma36_ii(1.0, 2.0, 3.0, 1.5, 73.0, 100, &QuadratureConfig::default()).unwrap();
        assert!(!r.pass());
        assert!(r.constants["c0"] < 0.0);
    }

    #[test]
    fn domination_draws_pass() {
        assert!(check_lemma312(20, 5, &QuadratureConfig::default()).unwrap().pass);
    }

    #[test]
    fn survival_conditions_need_a_small_box() {
        let p = mp(|p| {
            p.a1 = 1.0;
            p.p1 = 1.0;
            p.a2 = 1.0;
            p.p2 = 1.0;
            p.b1 = 1.0;
            p.q1 = 2.0;
            p.b2 = 1.0;
            p.q2 = 2.0;
            p.theta1 = 1.0;
            p.theta2 = 0.5;
            p.kappa2 = 2.0;
        });
        let q = QuadratureConfig::default();
        let k = check_htilde_positivity(&p, PartialSubcase::Iia, 40).unwrap().constants;
        let run = |eps0| check_prop25_conditions(&p, k["beta"], k["delta"], k["rho"], k["z_star"], eps0, 60, &q);
        assert!(run(k["eps0"]).unwrap().pass());
        assert!(matches!(run(10.0), Err(Error::SearchFailed(_))));
    }

    #[test]
    fn exp_tan_bound_for_partial_example() {
        let (k, c) = check_exp_tan(&example2(), 30, &QuadratureConfig::default()).unwrap();
        assert!(c.pass && k["d"] > 0.0, "{c:?}");
    }

    #[test]
    fn prop24_configuration_and_preconditions() {
        let q = QuadratureConfig::default();
        let d = Rect { lo: (1.0, 1.0), hi: (2.0, 2.0) };
        let e = Rect { lo: (1.0, 0.5), hi: (2.0, 3.0) };
        let r = check_prop24_bump(&example2(), d, e, (1.5, 0.7), 16, &q).unwrap();
        assert!(r.structural && r.certificate.pass && r.d > 0.0, "{r:?}");
        assert!(matches!(check_prop24_bump(&example2(), d, e, (1.5, 1.5), 16, &q), Err(Error::Precondition(_))));
    }
}
