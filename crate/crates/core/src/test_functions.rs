//! Catalog of test functions with analytic value and derivative data.
//!
//! Every function is evaluated through [`TestFunction::jet`], which returns
//! the value together with the first and pure second partials. Product-form
//! members also expose their one-dimensional factors as [`Profile`]s so that
//! generator ratios `Lg / g` can be formed in log space where `g` underflows.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::special::gamma;
use crate::stable_measure::{Lemma32Kind, StableMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    First,
    Second,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::First => "first",
            Axis::Second => "second",
        }
    }
}

/// Value, gradient and pure second partials at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub gx: f64,
    pub gy: f64,
    pub gxx: f64,
    pub gyy: f64,
}

impl Jet {
    pub fn first(&self, axis: Axis) -> f64 {
        match axis {
            Axis::First => self.gx,
            Axis::Second => self.gy,
        }
    }

    pub fn second(&self, axis: Axis) -> f64 {
        match axis {
            Axis::First => self.gxx,
            Axis::Second => self.gyy,
        }
    }

    fn scale(self, c: f64) -> Jet {
        Jet {
            v: c * self.v,
            gx: c * self.gx,
            gy: c * self.gy,
            gxx: c * self.gxx,
            gyy: c * self.gyy,
        }
    }

    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            gx: self.gx + o.gx,
            gy: self.gy + o.gy,
            gxx: self.gxx + o.gxx,
            gyy: self.gyy + o.gyy,
        }
    }
}

fn shape(name: &'static str, reason: impl Into<String>) -> Error {
    Error::ShapeParamOutOfRange {
        name,
        reason: reason.into(),
    }
}

/// Quintic on `[c1, c1 + w]` matching value, slope and curvature at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuinticBlend {
    c1: f64,
    w: f64,
    coef: [f64; 6],
}

impl QuinticBlend {
    /// `left` and `right` are `(value, first, second)` derivatives in `x`.
    pub fn new(c1: f64, c2: f64, left: (f64, f64, f64), right: (f64, f64, f64)) -> Self {
        const BASIS: [[f64; 6]; 6] = [
            [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
            [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
            [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
            [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
            [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
            [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
        ];
        let w = c2 - c1;
        let weights = [left.0, left.1 * w, left.2 * w * w, right.2 * w * w, right.1 * w, right.0];
        let mut coef = [0.0; 6];
        for (b, wt) in BASIS.iter().zip(weights) {
            for k in 0..6 {
                coef[k] += wt * b[k];
            }
        }
        Self { c1, w, coef }
    }

    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let s = (x - self.c1) / self.w;
        let c = &self.coef;
        let v = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))));
        let d1 = c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * (4.0 * c[4] + s * 5.0 * c[5])));
        let d2 = 2.0 * c[2] + s * (6.0 * c[3] + s * (12.0 * c[4] + s * 20.0 * c[5]));
        (v, d1 / self.w, d2 / (self.w * self.w))
    }
}

/// A positive one-dimensional factor of a product-form test function,
/// described through its logarithm.
pub trait Profile1D {
    /// Open interval on which the factor is positive.
    fn support(&self) -> (f64, f64);
    /// `ln h(x)`; `-inf` outside the support.
    fn ln_value(&self, x: f64) -> f64;
    /// `h'(x) / h(x)`.
    fn dlog(&self, x: f64) -> f64;
    /// `h''(x) / h(x)`.
    fn d2_over(&self, x: f64) -> f64;
    /// An upper bound for `ln h` over the support, attained or nearly so.
    fn ln_sup(&self) -> f64;

    /// `ln h(x + z)`, `h'/h (x + z)` and `h''/h (x + z)`. Profiles override
    /// these to resolve offsets `z` below the spacing of floats near `x`.
    fn ln_value_at(&self, x: f64, z: f64) -> f64 {
        self.ln_value(x + z)
    }
    fn dlog_at(&self, x: f64, z: f64) -> f64 {
        self.dlog(x + z)
    }
    fn d2_over_at(&self, x: f64, z: f64) -> f64 {
        self.d2_over(x + z)
    }

    fn value(&self, x: f64) -> f64 {
        self.ln_value(x).exp()
    }

    fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        x > lo && x < hi
    }
}

/// `h(x) = exp(-lambda/(x - lo) - lambda*lambda1/(hi - x))` on `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpProfile {
    pub lo: f64,
    pub hi: f64,
    pub lambda: f64,
    pub lambda1: f64,
}

impl BumpProfile {
    pub fn new(lo: f64, hi: f64, lambda: f64, lambda1: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(shape("support", format!("need 0 <= lo < hi < inf, got ({lo}, {hi})")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(shape("lambda", format!("must be positive, got {lambda}")));
        }
        if !(lambda1 > 0.0 && lambda1.is_finite()) {
            return Err(shape("lambda1", format!("must be positive, got {lambda1}")));
        }
        Ok(Self { lo, hi, lambda, lambda1 })
    }

    /// Location of the maximum of `h`.
    pub fn argmax(&self) -> f64 {
        let s = self.lambda1.sqrt();
        (self.hi + s * self.lo) / (1.0 + s)
    }
}

impl BumpProfile {
    // (ln h, h'/h, h''/h) from the distances to both ends.
    fn eval_lr(&self, l: f64, r: f64) -> Option<(f64, f64, f64)> {
        if !(l > 0.0 && r > 0.0) {
            return None;
        }
        let lam = self.lambda;
        let d = lam / (l * l) - lam * self.lambda1 / (r * r);
        Some((
            -lam / l - lam * self.lambda1 / r,
            d,
            d * d - 2.0 * lam / (l * l * l) - 2.0 * lam * self.lambda1 / (r * r * r),
        ))
    }

    fn eval_at(&self, x: f64, z: f64) -> Option<(f64, f64, f64)> {
        self.eval_lr((x - self.lo) + z, (self.hi - x) - z)
    }
}

impl Profile1D for BumpProfile {
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn ln_value(&self, x: f64) -> f64 {
        self.ln_value_at(x, 0.0)
    }
    fn dlog(&self, x: f64) -> f64 {
        self.dlog_at(x, 0.0)
    }
    fn d2_over(&self, x: f64) -> f64 {
        self.d2_over_at(x, 0.0)
    }

    fn ln_value_at(&self, x: f64, z: f64) -> f64 {
        self.eval_at(x, z).map_or(f64::NEG_INFINITY, |e| e.0)
    }
    fn dlog_at(&self, x: f64, z: f64) -> f64 {
        self.eval_at(x, z).map_or(0.0, |e| e.1)
    }
    fn d2_over_at(&self, x: f64, z: f64) -> f64 {
        self.eval_at(x, z).map_or(0.0, |e| e.2)
    }

    fn ln_sup(&self) -> f64 {
        self.ln_value(self.argmax())
    }
}

/// The auxiliary `g0` of the tangent-exponential family: `x^{-delta}` near 0,
/// `(x-1)^{-2}` near 1, quintic in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G0 {
    pub delta: f64,
    blend: QuinticBlend,
}

impl G0 {
    pub const C1: f64 = 0.3;
    pub const C2: f64 = 0.7;

    pub fn new(delta: f64) -> Self {
        let left = Self::near_zero(delta, Self::C1);
        let right = Self::near_one(Self::C2);
        Self {
            delta,
            blend: QuinticBlend::new(Self::C1, Self::C2, left, right),
        }
    }

    fn near_zero(d: f64, x: f64) -> (f64, f64, f64) {
        let v = x.powf(-d);
        (v, -d * v / x, d * (d + 1.0) * v / (x * x))
    }

    fn near_one(x: f64) -> (f64, f64, f64) {
        Self::near_one_offset(x - 1.0)
    }

    fn near_one_offset(s: f64) -> (f64, f64, f64) {
        (s.powi(-2), -2.0 * s.powi(-3), 6.0 * s.powi(-4))
    }

    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        self.eval_at(x, 0.0)
    }

    /// `g0` and its derivatives at `x + z`, with the distance to 1 formed as
    /// `(x - 1) + z`.
    pub fn eval_at(&self, x: f64, z: f64) -> (f64, f64, f64) {
        let p = x + z;
        if p < Self::C1 {
            Self::near_zero(self.delta, p)
        } else if p > Self::C2 {
            Self::near_one_offset((x - 1.0) + z)
        } else {
            self.blend.eval(p)
        }
    }

    /// Minimum of `g0` over `(0, 1)`; it lies in the blend region.
    pub fn min_value(&self) -> f64 {
        let n = 4000;
        (0..=n)
            .map(|i| self.eval(Self::C1 + (Self::C2 - Self::C1) * i as f64 / n as f64).0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `exp(-lambda1 g0(x))` on `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanXProfile {
    pub lambda1: f64,
    pub g0: G0,
    ln_sup: f64,
}

impl TanXProfile {
    pub fn new(lambda1: f64, delta: f64) -> Self {
        let g0 = G0::new(delta);
        Self {
            lambda1,
            g0,
            ln_sup: -lambda1 * g0.min_value(),
        }
    }
}

impl TanXProfile {
    fn inside(x: f64, z: f64) -> bool {
        x + z > 0.0 && (x - 1.0) + z < 0.0
    }
}

impl Profile1D for TanXProfile {
    fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn ln_value(&self, x: f64) -> f64 {
        self.ln_value_at(x, 0.0)
    }
    fn dlog(&self, x: f64) -> f64 {
        self.dlog_at(x, 0.0)
    }
    fn d2_over(&self, x: f64) -> f64 {
        self.d2_over_at(x, 0.0)
    }
    fn ln_value_at(&self, x: f64, z: f64) -> f64 {
        if !Self::inside(x, z) {
            return f64::NEG_INFINITY;
        }
        -self.lambda1 * self.g0.eval_at(x, z).0
    }
    fn dlog_at(&self, x: f64, z: f64) -> f64 {
        if !Self::inside(x, z) {
            return 0.0;
        }
        -self.lambda1 * self.g0.eval_at(x, z).1
    }
    fn d2_over_at(&self, x: f64, z: f64) -> f64 {
        if !Self::inside(x, z) {
            return 0.0;
        }
        let (_, d1, d2) = self.g0.eval_at(x, z);
        self.lambda1 * self.lambda1 * d1 * d1 - self.lambda1 * d2
    }
    fn ln_sup(&self) -> f64 {
        self.ln_sup
    }
}

/// `exp(-lambda2 tan(pi y / 2)^rho)` on `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanYProfile {
    pub lambda2: f64,
    pub rho: f64,
}

impl TanYProfile {
    fn inside(y: f64, z: f64) -> bool {
        y + z > 0.0 && (1.0 - y) - z > 0.0
    }

    // (T^rho, d/dy T^rho, d2/dy2 T^rho) at y + z; past 1/2 the tangent is
    // taken as a cotangent of the distance to 1.
    fn powered(&self, y: f64, z: f64) -> (f64, f64, f64) {
        let p = y + z;
        let t = if p > 0.5 {
            1.0 / (FRAC_PI_2 * ((1.0 - y) - z)).tan()
        } else {
            (FRAC_PI_2 * p).tan()
        };
        let t1 = FRAC_PI_2 * (1.0 + t * t);
        let t2 = PI * t * t1;
        let r = self.rho;
        let tr = t.powf(r);
        let d1 = r * tr / t * t1;
        let d2 = r * (r - 1.0) * tr / (t * t) * t1 * t1 + r * tr / t * t2;
        (tr, d1, d2)
    }
}

impl Profile1D for TanYProfile {
    fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn ln_value(&self, y: f64) -> f64 {
        self.ln_value_at(y, 0.0)
    }
    fn dlog(&self, y: f64) -> f64 {
        self.dlog_at(y, 0.0)
    }
    fn d2_over(&self, y: f64) -> f64 {
        self.d2_over_at(y, 0.0)
    }
    fn ln_value_at(&self, y: f64, z: f64) -> f64 {
        if !Self::inside(y, z) {
            return f64::NEG_INFINITY;
        }
        -self.lambda2 * self.powered(y, z).0
    }
    fn dlog_at(&self, y: f64, z: f64) -> f64 {
        if !Self::inside(y, z) {
            return 0.0;
        }
        -self.lambda2 * self.powered(y, z).1
    }
    fn d2_over_at(&self, y: f64, z: f64) -> f64 {
        if !Self::inside(y, z) {
            return 0.0;
        }
        let (_, d1, d2) = self.powered(y, z);
        let l = self.lambda2;
        l * l * d1 * d1 - l * d2
    }
    fn ln_sup(&self) -> f64 {
        0.0
    }
}

/// Constant factor 1, used for functions that depend on one variable only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitProfile;

impl Profile1D for UnitProfile {
    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn ln_value(&self, x: f64) -> f64 {
        if x > 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
    fn dlog(&self, _x: f64) -> f64 {
        0.0
    }
    fn d2_over(&self, _x: f64) -> f64 {
        0.0
    }
    fn ln_sup(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Unit(UnitProfile),
    Bump(BumpProfile),
    TanX(TanXProfile),
    TanY(TanYProfile),
}

impl Profile {
    fn inner(&self) -> &dyn Profile1D {
        match self {
            Profile::Unit(p) => p,
            Profile::Bump(p) => p,
            Profile::TanX(p) => p,
            Profile::TanY(p) => p,
        }
    }
}

impl Profile1D for Profile {
    fn support(&self) -> (f64, f64) {
        self.inner().support()
    }
    fn ln_value(&self, x: f64) -> f64 {
        self.inner().ln_value(x)
    }
    fn dlog(&self, x: f64) -> f64 {
        self.inner().dlog(x)
    }
    fn d2_over(&self, x: f64) -> f64 {
        self.inner().d2_over(x)
    }
    fn ln_value_at(&self, x: f64, z: f64) -> f64 {
        self.inner().ln_value_at(x, z)
    }
    fn dlog_at(&self, x: f64, z: f64) -> f64 {
        self.inner().dlog_at(x, z)
    }
    fn d2_over_at(&self, x: f64, z: f64) -> f64 {
        self.inner().d2_over_at(x, z)
    }
    fn ln_sup(&self) -> f64 {
        self.inner().ln_sup()
    }
}

/// Truncated logarithm `1 - ln(x/n)` on `(0, n]`, flat beyond `n + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogX {
    pub n: f64,
    blend: QuinticBlend,
    flat: f64,
}

impl LogX {
    pub fn new(n: f64) -> Result<Self> {
        if !(n > 0.0 && n.is_finite()) {
            return Err(shape("n", format!("must be positive, got {n}")));
        }
        let flat = 1.0 - 0.5 / n;
        let blend = QuinticBlend::new(n, n + 1.0, (1.0, -1.0 / n, 1.0 / (n * n)), (flat, 0.0, 0.0));
        Ok(Self { n, blend, flat })
    }

    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        if x <= self.n {
            (1.0 - (x / self.n).ln(), -1.0 / x, 1.0 / (x * x))
        } else if x >= self.n + 1.0 {
            (self.flat, 0.0, 0.0)
        } else {
            self.blend.eval(x)
        }
    }
}

/// Lower bounds for the second partials and jump integrals of the
/// exponential-ratio function, each of which the true quantity dominates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpRatioBounds {
    pub gxx: f64,
    pub gyy: f64,
    pub jump_x: f64,
    pub jump_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TestFunction {
    Constant {
        c: f64,
    },
    /// `c0 + c1 x + c2 y + c3 x^2 + c4 y^2`.
    Quadratic {
        c: [f64; 5],
    },
    LogSum {
        n: f64,
        beta: f64,
    },
    LogX(LogX),
    ExpTan {
        gx: TanXProfile,
        gy: TanYProfile,
    },
    PowerRatio {
        beta: f64,
        delta: f64,
        rho: f64,
    },
    ExpRatio {
        lambda: f64,
        r: f64,
        beta: f64,
    },
    /// One-dimensional bump in `x`; `x2` marks the inner edge used by the
    /// near-left-edge bounds.
    Bump {
        h: BumpProfile,
        x2: f64,
    },
    BumpProduct {
        gx: BumpProfile,
        gy: BumpProfile,
    },
    /// `sum_i c_i g_i`.
    Combination(Vec<(f64, TestFunction)>),
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        TestFunction::Constant { c }
    }

    pub fn quadratic(c: [f64; 5]) -> Self {
        TestFunction::Quadratic { c }
    }

    pub fn log_sum(n: f64, beta: f64) -> Result<Self> {
        if !(n > 0.0 && n.is_finite()) {
            return Err(shape("n", format!("must be positive, got {n}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(shape("beta", format!("must be positive, got {beta}")));
        }
        Ok(TestFunction::LogSum { n, beta })
    }

    pub fn log_x(n: f64) -> Result<Self> {
        Ok(TestFunction::LogX(LogX::new(n)?))
    }

    pub fn exp_tan(lambda1: f64, lambda2: f64, rho: f64, delta: f64) -> Result<Self> {
        if !(lambda1 > 1.0 && lambda1.is_finite()) {
            return Err(shape("lambda1", format!("must exceed 1, got {lambda1}")));
        }
        if !(lambda2 > 1.0 && lambda2.is_finite()) {
            return Err(shape("lambda2", format!("must exceed 1, got {lambda2}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(shape("rho", format!("must lie in (0, 1), got {rho}")));
        }
        if !(delta > 1.0 && delta.is_finite()) {
            return Err(shape("delta", format!("must exceed 1, got {delta}")));
        }
        Ok(TestFunction::ExpTan {
            gx: TanXProfile::new(lambda1, delta),
            gy: TanYProfile { lambda2, rho },
        })
    }

    /// Like [`TestFunction::exp_tan`] with the additional restrictions tied
    /// to the model: `rho < 1 - theta2` and
    /// `delta > max(theta1 - 1, p + 1 - theta1, 1)`.
    pub fn exp_tan_for_model(params: &ModelParams, lambda1: f64, lambda2: f64, rho: f64, delta: f64) -> Result<Self> {
        if !(rho < 1.0 - params.theta2) {
            return Err(shape("rho", format!("must be below 1 - theta2 = {}", 1.0 - params.theta2)));
        }
        let p = params.derived_exponents().p;
        let floor = (params.theta1 - 1.0).max(p + 1.0 - params.theta1).max(1.0);
        if !(delta > floor) {
            return Err(shape("delta", format!("must exceed {floor}, got {delta}")));
        }
        Self::exp_tan(lambda1, lambda2, rho, delta)
    }

    pub fn power_ratio(beta: f64, delta: f64, rho: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(shape("beta", format!("must be positive, got {beta}")));
        }
        if !(delta > 0.0 && delta * beta < 1.0) {
            return Err(shape("delta", format!("must lie in (0, 1/beta), got {delta}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(shape("rho", format!("must lie in (0, 1), got {rho}")));
        }
        Ok(TestFunction::PowerRatio { beta, delta, rho })
    }

    pub fn exp_ratio(lambda: f64, r: f64, beta: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(shape("lambda", format!("must be positive, got {lambda}")));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(shape("r", format!("must lie in (0, 1), got {r}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(shape("beta", format!("must be positive, got {beta}")));
        }
        Ok(TestFunction::ExpRatio { lambda, r, beta })
    }

    pub fn bump(x1: f64, x2: f64, x3: f64, lambda: f64, lambda1: f64) -> Result<Self> {
        if !(0.0 < x1 && x1 < x2 && x2 < x3) {
            return Err(shape("x1,x2,x3", format!("need 0 < x1 < x2 < x3, got {x1}, {x2}, {x3}")));
        }
        Ok(TestFunction::Bump {
            h: BumpProfile::new(x1, x3, lambda, lambda1)?,
            x2,
        })
    }

    pub fn bump_product(gx: BumpProfile, gy: BumpProfile) -> Self {
        TestFunction::BumpProduct { gx, gy }
    }

    pub fn family(&self) -> &'static str {
        match self {
            TestFunction::Constant { .. } => "constant",
            TestFunction::Quadratic { .. } => "quadratic",
            TestFunction::LogSum { .. } => "log_sum",
            TestFunction::LogX(_) => "log_x",
            TestFunction::ExpTan { .. } => "exp_tan",
            TestFunction::PowerRatio { .. } => "power_ratio",
            TestFunction::ExpRatio { .. } => "exp_ratio",
            TestFunction::Bump { .. } => "bump",
            TestFunction::BumpProduct { .. } => "bump_product",
            TestFunction::Combination(_) => "combination",
        }
    }

    pub fn in_domain(&self, x: f64, y: f64) -> bool {
        x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()
    }

    /// The factors `(h1(x), h2(y))` of a product-form function.
    pub fn profiles(&self) -> Option<(Profile, Profile)> {
        match self {
            TestFunction::ExpTan { gx, gy } => Some((Profile::TanX(*gx), Profile::TanY(*gy))),
            TestFunction::Bump { h, .. } => Some((Profile::Bump(*h), Profile::Unit(UnitProfile))),
            TestFunction::BumpProduct { gx, gy } => Some((Profile::Bump(*gx), Profile::Bump(*gy))),
            _ => None,
        }
    }

    pub fn value(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.jet(x, y)?.v)
    }

    pub fn jet(&self, x: f64, y: f64) -> Result<Jet> {
        if !self.in_domain(x, y) {
            return Err(Error::DomainError { x, y });
        }
        Ok(self.jet_unchecked(x, y))
    }

    fn jet_unchecked(&self, x: f64, y: f64) -> Jet {
        match self {
            TestFunction::Constant { c } => Jet {
                v: *c,
                ..Jet::default()
            },
            TestFunction::Quadratic { c } => Jet {
                v: c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * y * y,
                gx: c[1] + 2.0 * c[3] * x,
                gy: c[2] + 2.0 * c[4] * y,
                gxx: 2.0 * c[3],
                gyy: 2.0 * c[4],
            },
            TestFunction::LogSum { n, beta } => {
                let b = *beta;
                let yb = y.powf(b);
                let s = x + yb;
                let sy = b * yb / y;
                let syy = b * (b - 1.0) * yb / (y * y);
                Jet {
                    v: (n + n.powf(b)).ln() - s.ln(),
                    gx: -1.0 / s,
                    gy: -sy / s,
                    gxx: 1.0 / (s * s),
                    gyy: -syy / s + sy * sy / (s * s),
                }
            }
            TestFunction::LogX(g) => {
                let (v, d1, d2) = g.eval(x);
                Jet {
                    v,
                    gx: d1,
                    gxx: d2,
                    ..Jet::default()
                }
            }
            TestFunction::ExpTan { gx, gy } => product_jet(gx, gy, x, y),
            TestFunction::PowerRatio { beta, delta, rho } => {
                let (b, d, r) = (*beta, *delta, *rho);
                let bd = b * d;
                let a = x.powf(bd) * y.powf(-d);
                let yr = y.powf(r);
                Jet {
                    v: a + yr,
                    gx: bd * a / x,
                    gy: -d * a / y + r * yr / y,
                    gxx: -bd * (1.0 - bd) * a / (x * x),
                    gyy: d * (d + 1.0) * a / (y * y) - r * (1.0 - r) * yr / (y * y),
                }
            }
            TestFunction::ExpRatio { lambda, r, beta } => {
                let (l, r, b) = (*lambda, *r, *beta);
                let ur = (y * x.powf(-b)).powf(r);
                let g = (-l * ur).exp();
                let lu = l * r * ur;
                Jet {
                    v: g,
                    gx: b * lu * g / x,
                    gy: -lu * g / y,
                    gxx: (lu * lu * b * b - lu * b * (r * b + 1.0)) * g / (x * x),
                    gyy: (lu * lu + lu * (1.0 - r)) * g / (y * y),
                }
            }
            TestFunction::Bump { h, .. } => product_jet(h, &UnitProfile, x, y),
            TestFunction::BumpProduct { gx, gy } => product_jet(gx, gy, x, y),
            TestFunction::Combination(terms) => terms
                .iter()
                .fold(Jet::default(), |acc, (c, g)| acc.add(g.jet_unchecked(x, y).scale(*c))),
        }
    }

    /// Closed forms of both jump integrals `int K_z^i g mu_i(dz)`, when the
    /// family has them.
    pub fn closed_jump_integrals(
        &self,
        x: f64,
        y: f64,
        m1: &StableMeasure,
        m2: &StableMeasure,
    ) -> Result<Option<(f64, f64)>> {
        if !self.in_domain(x, y) {
            return Err(Error::DomainError { x, y });
        }
        Ok(match self {
            TestFunction::Constant { .. } => Some((0.0, 0.0)),
            TestFunction::Quadratic { c } if c[3] == 0.0 && c[4] == 0.0 => Some((0.0, 0.0)),
            TestFunction::PowerRatio { beta, delta, rho } => {
                let (b, d, r) = (*beta, *delta, *rho);
                let bd = b * d;
                let a = x.powf(bd) * y.powf(-d);
                let ix = m1.lemma32_integral(Lemma32Kind::PosPowerCompensated, bd)? * a * x.powf(-m1.alpha());
                let iy = m2.lemma32_integral(Lemma32Kind::NegPowerCompensated, d)? * a * y.powf(-m2.alpha())
                    + m2.lemma32_integral(Lemma32Kind::PosPowerCompensated, r)? * y.powf(r - m2.alpha());
                Some((ix, iy))
            }
            TestFunction::Combination(terms) => {
                let mut acc = (0.0, 0.0);
                for (c, g) in terms {
                    match g.closed_jump_integrals(x, y, m1, m2)? {
                        Some((a, b)) => {
                            acc.0 += c * a;
                            acc.1 += c * b;
                        }
                        None => return Ok(None),
                    }
                }
                Some(acc)
            }
            _ => None,
        })
    }

    /// Lower bounds for the exponential-ratio function as derived in its
    /// proof: every bound carries the factor `g(u)`.
    pub fn exp_ratio_bounds(&self, x: f64, y: f64, alpha1: f64, alpha2: f64) -> Result<ExpRatioBounds> {
        let TestFunction::ExpRatio { lambda, r, beta } = *self else {
            return Err(Error::InvalidArgument {
                name: "g",
                reason: format!("exp_ratio bounds requested for {}", self.family()),
            });
        };
        if !self.in_domain(x, y) {
            return Err(Error::DomainError { x, y });
        }
        let ur = (y * x.powf(-beta)).powf(r);
        let g = (-lambda * ur).exp();
        let rb = r * beta;
        let lug = lambda * ur * g;
        Ok(ExpRatioBounds {
            gxx: -lambda * rb * (rb + 1.0) * ur * g / (x * x),
            gyy: lambda * r * (1.0 - r) * ur * g / (y * y),
            jump_x: -lug * x.powf(-alpha1) * rb * (rb + 1.0) * gamma(alpha1 + rb) / (gamma(alpha1) * gamma(2.0 + rb)),
            jump_y: lug * y.powf(-alpha2) * r * (1.0 - r) * gamma(alpha2 - r) / (gamma(alpha2) * gamma(2.0 - r)),
        })
    }

    /// The two jump-integral bounds in the form they are displayed in the
    /// lemma statement, without the factor `g(u)`. The second is not a valid
    /// lower bound when `lambda u^r` is large.
    pub fn exp_ratio_displayed_jump_bounds(&self, x: f64, y: f64, alpha1: f64, alpha2: f64) -> Result<(f64, f64)> {
        let b = self.exp_ratio_bounds(x, y, alpha1, alpha2)?;
        let TestFunction::ExpRatio { lambda, r, beta } = *self else {
            unreachable!()
        };
        let g = (-lambda * (y * x.powf(-beta)).powf(r)).exp();
        Ok((b.jump_x / g, b.jump_y / g))
    }
}

fn product_jet(hx: &dyn Profile1D, hy: &dyn Profile1D, x: f64, y: f64) -> Jet {
    let v = (hx.ln_value(x) + hy.ln_value(y)).exp();
    if v == 0.0 {
        return Jet::default();
    }
    Jet {
        v,
        gx: v * hx.dlog(x),
        gy: v * hy.dlog(y),
        gxx: v * hx.d2_over(x),
        gyy: v * hy.d2_over(y),
    }
}
