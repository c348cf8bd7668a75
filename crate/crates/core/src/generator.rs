//! The jump operators `K_z^1`, `K_z^2` and the generator `L` of the system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quadrature::{gauss_legendre16, gauss_legendre_adaptive, integrate_budget};
use crate::stable_measure::{SplitIntegrand, StableMeasure};
use crate::test_functions::{Axis, Profile1D, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub split_point: f64,
    pub abs_tol: f64,
    pub max_refinement_depth: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            split_point: 1.0,
            abs_tol: 1e-10,
            max_refinement_depth: 40,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(self) -> Result<Self> {
        if !(self.split_point > 0.0 && self.split_point.is_finite()) {
            return Err(Error::Config(format!("split_point must be positive, got {}", self.split_point)));
        }
        if !(self.abs_tol > 0.0) {
            return Err(Error::Config(format!("abs_tol must be positive, got {}", self.abs_tol)));
        }
        if self.max_refinement_depth == 0 {
            return Err(Error::Config("max_refinement_depth must be positive".into()));
        }
        Ok(self)
    }
}

/// The eight terms of `Lg`. `total` is their sum in field order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTerms {
    pub drift_x: f64,
    pub diff_x: f64,
    pub jump_x: f64,
    pub drift_y: f64,
    pub diff_y: f64,
    pub jump_y: f64,
    pub interaction_x: f64,
    pub interaction_y: f64,
    pub total: f64,
}

impl GeneratorTerms {
    pub const NAMES: [&'static str; 9] = [
        "drift_x",
        "diff_x",
        "jump_x",
        "drift_y",
        "diff_y",
        "jump_y",
        "interaction_x",
        "interaction_y",
        "total",
    ];

    pub fn from_parts(parts: [f64; 8]) -> Self {
        let total = parts.iter().fold(0.0, |acc, v| acc + v);
        Self {
            drift_x: parts[0],
            diff_x: parts[1],
            jump_x: parts[2],
            drift_y: parts[3],
            diff_y: parts[4],
            jump_y: parts[5],
            interaction_x: parts[6],
            interaction_y: parts[7],
            total,
        }
    }

    pub fn parts(&self) -> [f64; 8] {
        [
            self.drift_x,
            self.diff_x,
            self.jump_x,
            self.drift_y,
            self.diff_y,
            self.jump_y,
            self.interaction_x,
            self.interaction_y,
        ]
    }

    pub fn named(&self) -> [(&'static str, f64); 9] {
        let p = self.parts();
        std::array::from_fn(|i| (Self::NAMES[i], if i < 8 { p[i] } else { self.total }))
    }

    /// Sum of absolute term values, used to normalize margins.
    pub fn abs_scale(&self) -> f64 {
        self.parts().iter().map(|v| v.abs()).sum()
    }
}

/// `c * x^e`, with a zero coefficient short-circuiting to 0.
fn coef_pow(c: f64, x: f64, e: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * x.powf(e)
    }
}

/// `c * v`, zero whenever `c` is zero even if `v` is not finite.
fn times(c: f64, v: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * v
    }
}

fn shifted(x: f64, y: f64, axis: Axis, s: f64) -> (f64, f64) {
    match axis {
        Axis::First => (x + s, y),
        Axis::Second => (x, y + s),
    }
}

fn k_axis(g: &TestFunction, x: f64, y: f64, z: f64, axis: Axis) -> Result<f64> {
    if z < 0.0 {
        return Err(Error::InvalidArgument {
            name: "z",
            reason: format!("jump size must be nonnegative, got {z}"),
        });
    }
    let j = g.jet(x, y)?;
    let (sx, sy) = shifted(x, y, axis, z);
    Ok(g.value(sx, sy)? - j.v - j.first(axis) * z)
}

/// `g(x + z, y) - g(x, y) - g_x(x, y) z`.
pub fn k1(g: &TestFunction, x: f64, y: f64, z: f64) -> Result<f64> {
    k_axis(g, x, y, z, Axis::First)
}

/// `g(x, y + z) - g(x, y) - g_y(x, y) z`.
pub fn k2(g: &TestFunction, x: f64, y: f64, z: f64) -> Result<f64> {
    k_axis(g, x, y, z, Axis::Second)
}

/// Points at which the tail of `K_z` is sampled before integrating.
const GROWTH_PROBE: [f64; 3] = [10.0, 1e3, 1e6];
/// Largest local growth exponent of `|K_z|` accepted by the screen.
const GROWTH_LIMIT: f64 = 1.1;
/// Jump sizes beyond this are evaluated at the cap; the integrand weight
/// there is far below any tolerance.
const Z_CAP: f64 = 1e150;

fn remainder_head(second: &dyn Fn(f64) -> f64, z: f64, abs_tol: f64) -> f64 {
    let f = |v: f64| second(z * v) * (1.0 - v);
    let whole = gauss_legendre16(&f, 0.0, 1.0);
    let tol = (1e-13 * whole.abs()).max(1e-3 * abs_tol);
    gauss_legendre_adaptive(&f, 0.0, 1.0, tol, 20)
}

fn screen_growth(k: &dyn Fn(f64) -> f64, what: &str) -> Result<()> {
    let vals: Vec<f64> = GROWTH_PROBE.iter().map(|z| k(*z).abs()).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergent(format!("{what}: non-finite K_z in the tail probe")));
    }
    // Growth of |K_z| / z from the larger of the two near probes to the far
    // one, so that a cancellation at a single probe is not read as growth.
    let per_z: Vec<f64> = vals.iter().zip(GROWTH_PROBE).map(|(v, z)| v / z).collect();
    let base = per_z[0].max(per_z[1]);
    if per_z[2] > 0.0 {
        let slope = 1.0 + (per_z[2] / base).ln() / (GROWTH_PROBE[2] / GROWTH_PROBE[1]).ln();
        if slope > GROWTH_LIMIT {
            return Err(Error::NonConvergent(format!(
                "{what}: K_z grows like z^{slope:.3} in the tail, integral against the stable measure diverges"
            )));
        }
    }
    Ok(())
}

/// `int_0^inf K_z^axis g(x, y) mu(dz)` by quadrature.
///
/// On `(0, split]` the integrand is `z^2 int_0^1 g''(. + zv)(1 - v) dv`,
/// beyond it `K_z` is evaluated directly.
pub fn jump_integral(
    g: &TestFunction,
    x: f64,
    y: f64,
    axis: Axis,
    m: &StableMeasure,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let j = g.jet(x, y)?;
    let (v0, d0) = (j.v, j.first(axis));
    let value = |s: f64| {
        let (a, b) = shifted(x, y, axis, s);
        g.value(a, b).unwrap_or(f64::NAN)
    };
    let second = |s: f64| {
        let (a, b) = shifted(x, y, axis, s);
        g.jet(a, b).map(|j| j.second(axis)).unwrap_or(f64::NAN)
    };
    let k = |z: f64| {
        let z = z.min(Z_CAP);
        value(z) - v0 - d0 * z
    };
    screen_growth(&k, g.family())?;
    let head = |z: f64| remainder_head(&second, z, cfg.abs_tol);
    let tail = |z: f64| {
        let z = z.min(Z_CAP);
        k(z) / z
    };
    m.integrate_split(
        &SplitIntegrand {
            head: &head,
            tail: &tail,
            tail_growth: 1.0,
        },
        cfg.split_point,
        cfg.abs_tol,
        cfg.max_refinement_depth,
    )
}

/// `e^{-L} h(x)^{-1} int K_z h(x) mu(dz)` together with `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledIntegral {
    pub log_scale: f64,
    pub scaled: f64,
}

impl ScaledIntegral {
    /// The unscaled ratio; infinite when it overflows.
    pub fn ratio(&self) -> f64 {
        if self.scaled == 0.0 {
            0.0
        } else {
            self.scaled * self.log_scale.exp()
        }
    }
}

/// Jump integral of a positive profile divided by its value, in log space.
///
/// The scale is `L = max(0, ln sup h - ln h(x))`, which keeps every scaled
/// integrand value of order one even where `h(x)` itself underflows.
pub fn scaled_jump_ratio(
    h: &dyn Profile1D,
    x: f64,
    m: &StableMeasure,
    cfg: &QuadratureConfig,
) -> Result<ScaledIntegral> {
    if h.support().1.is_finite() {
        return bounded_jump_ratio(h, x, m, cfg);
    }
    let lh = h.ln_value(x);
    if lh == f64::NEG_INFINITY {
        return Ok(ScaledIntegral {
            log_scale: 0.0,
            scaled: 0.0,
        });
    }
    let l = (h.ln_sup() - lh).max(0.0);
    let shift = lh + l;
    let d0 = h.dlog(x);
    let e_l = (-l).exp();
    let weight = |s: f64| {
        let e = h.ln_value(x + s) - shift;
        if e < -745.0 {
            0.0
        } else {
            e.exp()
        }
    };
    let second = |s: f64| {
        let w = weight(s);
        if w == 0.0 {
            0.0
        } else {
            h.d2_over(x + s) * w
        }
    };
    let k = |z: f64| {
        let z = z.min(Z_CAP);
        weight(z) - e_l * (1.0 + d0 * z)
    };
    let head = |z: f64| remainder_head(&second, z, cfg.abs_tol);
    let tail = |z: f64| {
        let z = z.min(Z_CAP);
        k(z) / z
    };
    let scaled = m.integrate_split(
        &SplitIntegrand {
            head: &head,
            tail: &tail,
            tail_growth: 1.0,
        },
        cfg.split_point,
        cfg.abs_tol,
        cfg.max_refinement_depth,
    )?;
    Ok(ScaledIntegral { log_scale: l, scaled })
}

fn rel_integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, scale: f64, depth: u32) -> Result<f64> {
    if a >= b {
        return Ok(0.0);
    }
    let (v, err) = integrate_budget(f, a, b, (1e-10 * scale).max(1e-300), depth, 4000)?;
    if err > 1e-6 * scale && err > 1e-300 {
        return Err(Error::NonConvergent(format!(
            "jump ratio on ({a:e}, {b:e}): error {err:e} against scale {scale:e}"
        )));
    }
    Ok(v)
}

/// [`scaled_jump_ratio`] for a profile vanishing beyond a finite right end
/// `hi`.
///
/// Pieces: a Taylor head on `(0, s]` relative to `h(x)`, with `s` small
/// enough that `h` changes by a bounded factor; a direct middle piece on
/// `(s, hi - x)` cut at the sampled maximum of `h`; and the tail past `hi`,
/// where `K_z = -h(x)(1 + z h'/h)` integrates in closed form. The middle
/// piece is taken relative to `sup h` when `h(x)` is far below it.
fn bounded_jump_ratio(h: &dyn Profile1D, x: f64, m: &StableMeasure, cfg: &QuadratureConfig) -> Result<ScaledIntegral> {
    let (_, hi) = h.support();
    let lh = h.ln_value(x);
    if lh == f64::NEG_INFINITY {
        return Ok(ScaledIntegral {
            log_scale: 0.0,
            scaled: 0.0,
        });
    }
    let a = m.alpha();
    let ca = m.c_alpha();
    let d0 = h.dlog(x);
    let r = hi - x;
    let curv = h.d2_over(x).abs().sqrt();
    let s = cfg.split_point.min(0.25 * r).min(0.25 / (d0.abs() + curv + 1e-300));
    let rel = |z: f64| {
        let e = h.ln_value_at(x, z) - lh;
        if e < -745.0 {
            0.0
        } else {
            e.exp()
        }
    };
    // On the head, ln h(x + u) - ln h(x) as the integral of h'/h; the plain
    // difference loses all digits where ln h is huge.
    let rel_head = |u: f64| {
        if u == 0.0 {
            1.0
        } else {
            gauss_legendre16(&|t| h.dlog_at(x, t), 0.0, u).exp()
        }
    };
    // `s` keeps the integrand smooth on the Taylor interval; a fixed rule
    // avoids chasing the rounding noise of h'' near the ends.
    let second = |z: f64| {
        let f = |v: f64| {
            let u = z * v;
            h.d2_over_at(x, u) * rel_head(u) * (1.0 - v)
        };
        gauss_legendre16(&f, 0.0, 0.5) + gauss_legendre16(&f, 0.5, 1.0)
    };
    let e = 1.0 / (2.0 - a);
    let head_f = |t: f64| second(s * t.powf(e));
    let head_abs = gauss_legendre16(&|t| head_f(t).abs(), 0.0, 1.0);
    let head = ca * s.powf(2.0 - a) * e * rel_integrate(&head_f, 0.0, 1.0, head_abs, cfg.max_refinement_depth)?;
    let tail = -(m.tail_mass(r)? + d0 * ca * r.powf(1.0 - a) / (a - 1.0));

    // Offsets where h'/h is integrated instead of differencing ln h.
    let near_end = (64.0 * s).min(0.25 * r);
    let mut cuts = vec![s, r, near_end.max(s)];
    for i in 1..16 {
        cuts.push(s + (r - s) * i as f64 / 16.0);
        cuts.push(s * (r / s).powf(i as f64 / 16.0));
    }
    let n = 256;
    let (mut zmax, mut lmax) = (s, f64::NEG_INFINITY);
    for i in 0..=n {
        let z = s + (r - s) * i as f64 / n as f64;
        let l = h.ln_value_at(x, z);
        if l > lmax {
            lmax = l;
            zmax = z;
        }
    }
    cuts.push(zmax);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let shift = (lmax - lh).max(0.0);
    let (log_scale, scaled_mid) = if shift < 600.0 {
        let near = |z: f64| {
            if z <= near_end {
                let q = 0.25 * z;
                (0..4).map(|i| gauss_legendre16(&|t| h.dlog_at(x, t), i as f64 * q, (i + 1) as f64 * q)).sum::<f64>().exp()
            } else {
                rel(z)
            }
        };
        let f = |z: f64| m.density(z) * (near(z) - 1.0 - d0 * z);
        let scale: f64 = cuts.windows(2).map(|c| gauss_legendre16(&|z| f(z).abs(), c[0], c[1])).sum();
        let mut mid = 0.0;
        for c in cuts.windows(2) {
            mid += rel_integrate(&f, c[0], c[1], scale, cfg.max_refinement_depth)?;
        }
        (0.0, mid + head + tail)
    } else {
        let w = |z: f64| {
            let e = h.ln_value_at(x, z) - lh - shift;
            if e < -745.0 {
                0.0
            } else {
                m.density(z) * e.exp()
            }
        };
        let scale: f64 = cuts.windows(2).map(|c| gauss_legendre16(&w, c[0], c[1])).sum();
        let mut mid = 0.0;
        for c in cuts.windows(2) {
            mid += rel_integrate(&w, c[0], c[1], scale, cfg.max_refinement_depth)?;
        }
        let closed = m.tail_mass(s)? - m.tail_mass(r)? + d0 * ca * (s.powf(1.0 - a) - r.powf(1.0 - a)) / (a - 1.0);
        (shift, mid + (head + tail - closed) * (-shift).exp())
    };
    Ok(ScaledIntegral {
        log_scale,
        scaled: scaled_mid,
    })
}

/// How the jump terms of [`apply_generator_with`] are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpMode {
    /// Closed forms when the family has them, quadrature otherwise.
    Auto,
    Quadrature,
}

pub fn apply_generator(
    params: &ModelParams,
    g: &TestFunction,
    x: f64,
    y: f64,
    cfg: &QuadratureConfig,
) -> Result<GeneratorTerms> {
    apply_generator_with(params, g, x, y, cfg, JumpMode::Auto)
}

pub fn apply_generator_with(
    params: &ModelParams,
    g: &TestFunction,
    x: f64,
    y: f64,
    cfg: &QuadratureConfig,
    mode: JumpMode,
) -> Result<GeneratorTerms> {
    let p = params;
    let j = g.jet(x, y)?;
    let (m1, m2) = p.measures()?;
    let wx = coef_pow(p.a3, x, p.p3 + p.alpha1);
    let wy = coef_pow(p.b3, y, p.q3 + p.alpha2);
    let closed = match mode {
        JumpMode::Auto if wx != 0.0 || wy != 0.0 => g.closed_jump_integrals(x, y, &m1, &m2)?,
        _ => None,
    };
    let (ix, iy) = match closed {
        Some(pair) => pair,
        None => (
            if wx == 0.0 {
                0.0
            } else {
                jump_integral(g, x, y, Axis::First, &m1, cfg)?
            },
            if wy == 0.0 {
                0.0
            } else {
                jump_integral(g, x, y, Axis::Second, &m2, cfg)?
            },
        ),
    };
    Ok(GeneratorTerms::from_parts([
        -times(coef_pow(p.a1, x, p.p1 + 1.0), j.gx),
        times(coef_pow(p.a2, x, p.p2 + 2.0), j.gxx),
        times(wx, ix),
        -times(coef_pow(p.b1, y, p.q1 + 1.0), j.gy),
        times(coef_pow(p.b2, y, p.q2 + 2.0), j.gyy),
        times(wy, iy),
        -times(p.eta1 * x.powf(p.theta1) * y.powf(p.kappa1), j.gx),
        -times(p.eta2 * y.powf(p.theta2) * x.powf(p.kappa2), j.gy),
    ]))
}

/// `Lg / g` term by term for a product-form `g`, computed from the log
/// profiles so that it stays finite where `g` underflows. Jump terms may
/// be infinite when the scaled ratio overflows.
pub fn apply_generator_ratio(
    params: &ModelParams,
    g: &TestFunction,
    x: f64,
    y: f64,
    cfg: &QuadratureConfig,
) -> Result<GeneratorTerms> {
    let (hx, hy) = g.profiles().ok_or_else(|| Error::InvalidArgument {
        name: "g",
        reason: format!("{} is not of product form", g.family()),
    })?;
    if !hx.contains(x) || !hy.contains(y) {
        return Err(Error::DomainError { x, y });
    }
    let p = params;
    let (m1, m2) = p.measures()?;
    let wx = coef_pow(p.a3, x, p.p3 + p.alpha1);
    let wy = coef_pow(p.b3, y, p.q3 + p.alpha2);
    let jx = if wx == 0.0 {
        0.0
    } else {
        scaled_jump_ratio(&hx, x, &m1, cfg)?.ratio()
    };
    let jy = if wy == 0.0 {
        0.0
    } else {
        scaled_jump_ratio(&hy, y, &m2, cfg)?.ratio()
    };
    let (lx, ly) = (hx.dlog(x), hy.dlog(y));
    Ok(GeneratorTerms::from_parts([
        -times(coef_pow(p.a1, x, p.p1 + 1.0), lx),
        times(coef_pow(p.a2, x, p.p2 + 2.0), hx.d2_over(x)),
        times(wx, jx),
        -times(coef_pow(p.b1, y, p.q1 + 1.0), ly),
        times(coef_pow(p.b2, y, p.q2 + 2.0), hy.d2_over(y)),
        times(wy, jy),
        -times(p.eta1 * x.powf(p.theta1) * y.powf(p.kappa1), lx),
        -times(p.eta2 * y.powf(p.theta2) * x.powf(p.kappa2), ly),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma;
    use crate::test_functions::{BumpProfile, TanXProfile, TanYProfile};
    use std::f64::consts::PI;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn k_of_linear_and_quadratic() {
        let lin = TestFunction::quadratic([0.0, 1.0, 0.0, 0.0, 0.0]);
        let sq = TestFunction::quadratic([0.0, 0.0, 0.0, 1.0, 0.0]);
        for z in [0.0, 0.3, 2.0, 50.0] {
            assert!(k1(&lin, 1.3, 0.4, z).unwrap().abs() < 1e-13 * (1.0 + z));
            assert!((k1(&sq, 1.3, 0.4, z).unwrap() - z * z).abs() < 1e-12 * (1.0 + z * z));
        }
    }

    #[test]
    fn k1_power_ratio_example() {
        let g = TestFunction::power_ratio(2.0, 0.25, 0.5).unwrap();
        let got = k1(&g, 1.0, 1.0, 1.0).unwrap();
        let expect = 2f64.sqrt() - 1.0 - 0.5;
        assert!((got - expect).abs() < 1e-15);
        assert!((got + 0.085_786).abs() < 1e-6);
    }

    #[test]
    fn jump_integral_of_constant_is_zero() {
        let m = StableMeasure::new(1.5).unwrap();
        let g = TestFunction::constant(3.0);
        assert_eq!(jump_integral(&g, 1.0, 1.0, Axis::First, &m, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn jump_integral_matches_power_ratio_closed_form() {
        let m = StableMeasure::new(1.5).unwrap();
        let g = TestFunction::power_ratio(2.0, 0.25, 0.5).unwrap();
        let q = jump_integral(&g, 1.0, 1.0, Axis::First, &m, &cfg()).unwrap();
        assert!((q + 1.0 / PI).abs() < 1e-8, "{q}");
        let (_, cy) = g.closed_jump_integrals(0.5, 0.25, &m, &m).unwrap().unwrap();
        let qy = jump_integral(&g, 0.5, 0.25, Axis::Second, &m, &cfg()).unwrap();
        assert!((qy - cy).abs() < 1e-8 * (1.0 + cy.abs()), "{qy} vs {cy}");
    }

    #[test]
    fn quadratic_growth_is_rejected() {
        let m = StableMeasure::new(1.5).unwrap();
        let g = TestFunction::quadratic([0.0, 0.0, 0.0, 1.0, 0.0]);
        let err = jump_integral(&g, 1.0, 1.0, Axis::First, &m, &cfg()).unwrap_err();
        assert!(matches!(err, Error::NonConvergent(_)), "{err:?}");
    }

    #[test]
    fn constant_gives_zero_terms() {
        let p = ModelParams {
            a1: 1.0,
            a2: 1.0,
            a3: 1.0,
            b3: 1.0,
            theta1: 1.2,
            ..ModelParams::default()
        };
        let t = apply_generator(&p, &TestFunction::constant(2.0), 0.4, 0.7, &cfg()).unwrap();
        assert!(t.parts().iter().all(|v| *v == 0.0) && t.total == 0.0);
    }

    #[test]
    fn linear_function_keeps_drift_and_interaction() {
        let p = ModelParams {
            a1: 1.0,
            p1: 0.0,
            eta1: 1.0,
            theta1: 2.0,
            kappa1: 1.0,
            ..ModelParams::default()
        }
        .validate(false)
        .unwrap();
        let g = TestFunction::quadratic([0.0, 1.0, 0.0, 0.0, 0.0]);
        let (x, y) = (0.7, 1.9);
        let t = apply_generator(&p, &g, x, y, &cfg()).unwrap();
        assert!((t.total - (-x - x * x * y)).abs() < 1e-14);
    }

    #[test]
    fn power_ratio_generator_matches_term_assembly() {
        let p = ModelParams {
            a1: 0.5,
            p1: 0.3,
            a2: 0.7,
            p2: 0.1,
            a3: 1.1,
            p3: 0.2,
            alpha1: 1.4,
            eta1: 0.9,
            theta1: 1.2,
            kappa1: 0.8,
            b1: 0.4,
            q1: 0.5,
            b2: 0.6,
            q2: 0.2,
            b3: 0.8,
            q3: 0.4,
            alpha2: 1.7,
            eta2: 1.3,
            theta2: 0.6,
            kappa2: 1.1,
            ..ModelParams::default()
        };
        let (b, d, r) = (1.5, 0.3, 0.4);
        let g = TestFunction::power_ratio(b, d, r).unwrap();
        let (x, y): (f64, f64) = (0.5, 0.25);
        let bd = b * d;
        let a = x.powf(bd) * y.powf(-d);
        let gx = bd * a / x;
        let gy = -d * a / y + r * y.powf(r - 1.0);
        let gxx = -bd * (1.0 - bd) * a / (x * x);
        let gyy = d * (d + 1.0) * a / (y * y) - r * (1.0 - r) * y.powf(r - 2.0);
        let (a1, a2) = (p.alpha1, p.alpha2);
        let ix = -bd * (1.0 - bd) * gamma(a1 - bd) / (gamma(a1) * gamma(2.0 - bd)) * x.powf(bd - a1) * y.powf(-d);
        let iy = d * (d + 1.0) * gamma(a2 + d) / (gamma(a2) * gamma(d + 2.0)) * x.powf(bd) * y.powf(-d - a2)
            - r * (1.0 - r) * gamma(a2 - r) / (gamma(a2) * gamma(2.0 - r)) * y.powf(r - a2);
        let expect = -p.a1 * x.powf(p.p1 + 1.0) * gx
            + p.a2 * x.powf(p.p2 + 2.0) * gxx
            + p.a3 * x.powf(p.p3 + a1) * ix
            - p.b1 * y.powf(p.q1 + 1.0) * gy
            + p.b2 * y.powf(p.q2 + 2.0) * gyy
            + p.b3 * y.powf(p.q3 + a2) * iy
            - p.eta1 * x.powf(p.theta1) * y.powf(p.kappa1) * gx
            - p.eta2 * y.powf(p.theta2) * x.powf(p.kappa2) * gy;
        let closed = apply_generator(&p, &g, x, y, &cfg()).unwrap();
        let quad = apply_generator_with(&p, &g, x, y, &cfg(), JumpMode::Quadrature).unwrap();
        assert!((closed.total - expect).abs() < 1e-12 * (1.0 + expect.abs()));
        assert!((quad.total - expect).abs() < 1e-8 * (1.0 + expect.abs()), "{} vs {expect}", quad.total);
    }

    #[test]
    fn total_is_ordered_sum() {
        let t = GeneratorTerms::from_parts([1e16, 1.0, -1e16, 1.0, 0.5, 0.25, 0.0, 0.0]);
        assert_eq!(t.total, ((((1e16 + 1.0) - 1e16) + 1.0) + 0.5) + 0.25);
    }

    #[test]
    fn ratio_form_agrees_with_direct_evaluation() {
        let p = ModelParams {
            a1: 0.3,
            a2: 0.4,
            a3: 0.8,
            b2: 0.5,
            b3: 0.6,
            theta1: 1.1,
            ..ModelParams::default()
        };
        let g = TestFunction::bump_product(
            BumpProfile::new(0.5, 2.0, 0.2, 1.5).unwrap(),
            BumpProfile::new(0.3, 1.5, 0.3, 2.0).unwrap(),
        );
        for (x, y) in [(1.0, 0.8), (0.7, 1.2), (1.6, 0.5)] {
            let direct = apply_generator(&p, &g, x, y, &cfg()).unwrap();
            let ratio = apply_generator_ratio(&p, &g, x, y, &cfg()).unwrap();
            let v = g.value(x, y).unwrap();
            for (a, b) in direct.parts().iter().zip(ratio.parts()) {
                assert!((a / v - b).abs() < 1e-7 * (1.0 + b.abs()), "{} vs {b}", a / v);
            }
        }
    }

    #[test]
    fn ratio_form_agrees_for_tangent_profiles() {
        let p = ModelParams {
            a3: 0.8,
            b3: 0.6,
            theta1: 1.2,
            ..ModelParams::default()
        };
        let g = TestFunction::exp_tan(2.0, 1.5, 0.4, 1.5).unwrap();
        for (x, y) in [(0.5, 0.5), (0.2, 0.1), (0.8, 0.6)] {
            let direct = apply_generator(&p, &g, x, y, &cfg()).unwrap();
            let ratio = apply_generator_ratio(&p, &g, x, y, &cfg()).unwrap();
            let v = g.value(x, y).unwrap();
            for (a, b) in direct.parts().iter().zip(ratio.parts()) {
                // The direct form carries an absolute error of order abs_tol.
                let tol = 1e-7 * (1.0 + b.abs()) + 10.0 * cfg().abs_tol / v;
                assert!((a / v - b).abs() < tol, "{} vs {b}", a / v);
            }
        }
    }

    // Reference values from 60-digit quadrature with a Taylor head below
    // 1e-12 of the distance to the edge, alpha = 1.5.
    #[test]
    fn bounded_ratio_matches_high_precision_oracle() {
        let m = StableMeasure::new(1.5).unwrap();
        let q = QuadratureConfig::default();
        let ty = |l: f64| TanYProfile { lambda2: l, rho: 0.25 };
        let cases: [(&dyn Profile1D, f64, f64); 8] = [
            (&ty(2.0), 0.01, 170.322271874),
            (&ty(2.0), 0.3, 2.58117011965),
            (&ty(2.0), 0.99, 1202.85626681),
            (&ty(2.0), 0.999999, 57883878233.6),
            (&ty(32.0), 0.999999, 3.82509927583e12),
            (&ty(512.0), 0.99, 7749173.84411),
            (&TanXProfile::new(8.0, 1.5), 0.99, 72215758923.2),
            (&TanXProfile::new(8.0, 1.5), 0.999999, 7.22162666943e28),
        ];
        for (h, x, want) in cases {
            let got = scaled_jump_ratio(h, x, &m, &q).unwrap().ratio();
            assert!((got / want - 1.0).abs() < 1e-9, "x = {x}: {got} vs {want}");
        }
    }

    #[test]
    fn interior_maximum_has_nonpositive_noise_terms() {
        let h = BumpProfile::new(1.0, 3.0, 2.0, 1.0).unwrap();
        let g = TestFunction::bump_product(h, BumpProfile::new(1.0, 3.0, 2.0, 1.0).unwrap());
        let p = ModelParams {
            a2: 1.0,
            a3: 1.0,
            b2: 1.0,
            b3: 1.0,
            ..ModelParams::default()
        };
        let x = h.argmax();
        let t = apply_generator(&p, &g, x, x, &cfg()).unwrap();
        for v in [t.diff_x, t.jump_x, t.diff_y, t.jump_y] {
            assert!(v <= 0.0, "{t:?}");
        }
    }
}
