//! Model parameters, the effective exponents `p, q, a, b`, and the regime
//! classifier for the extinction behaviour of `Y`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stable_measure::StableMeasure;

/// Default slack used when comparing the two sides of a regime inequality.
pub const DEFAULT_MARGIN: f64 = 1e-12;

/// Coefficients and exponents of the coupled system.
///
/// `X` is driven by `a1..a3`, `p1..p3`, `alpha1` and loses mass at rate
/// `eta1 x^theta1 y^kappa1`; `Y` is the mirror image with `b`, `q`,
/// `alpha2`, `eta2`, `theta2`, `kappa2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub alpha1: f64,
    pub eta1: f64,
    pub theta1: f64,
    pub kappa1: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub alpha2: f64,
    pub eta2: f64,
    pub theta2: f64,
    pub kappa2: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Default for ModelParams {
    /// All coefficients zero, both indices 1.5, unit interaction and unit
    /// initial state. Not valid in strict mode until a noise term is set.
    fn default() -> Self {
        Self {
            a1: 0.0,
            a2: 0.0,
            a3: 0.0,
            p1: 0.0,
            p2: 0.0,
            p3: 0.0,
            alpha1: 1.5,
            eta1: 1.0,
            theta1: 0.0,
            kappa1: 1.0,
            b1: 0.0,
            b2: 0.0,
            b3: 0.0,
            q1: 0.0,
            q2: 0.0,
            q3: 0.0,
            alpha2: 1.5,
            eta2: 1.0,
            theta2: 0.0,
            kappa2: 1.0,
            x0: 1.0,
            y0: 1.0,
        }
    }
}

/// Effective exponent and coefficient of each component near zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedExponents {
    pub p: f64,
    pub q: f64,
    pub a: f64,
    pub b: f64,
}

fn violation(field: &str, reason: impl Into<String>) -> Error {
    Error::ConstraintViolation {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// `(min exponent over active terms, summed coefficient at that exponent)`.
/// Returns `(inf, 0)` when no term is active.
fn effective(coef: [f64; 3], expo: [f64; 3]) -> (f64, f64) {
    let p = coef
        .iter()
        .zip(expo.iter())
        .filter(|(c, _)| **c > 0.0)
        .map(|(_, e)| *e)
        .fold(f64::INFINITY, f64::min);
    let a = coef
        .iter()
        .zip(expo.iter())
        .filter(|(c, e)| **c > 0.0 && **e == p)
        .map(|(c, _)| *c)
        .sum();
    (p, a)
}

impl ModelParams {
    pub fn field_names() -> &'static [&'static str] {
        &[
            "a1", "a2", "a3", "p1", "p2", "p3", "alpha1", "eta1", "theta1", "kappa1", "b1", "b2", "b3", "q1", "q2",
            "q3", "alpha2", "eta2", "theta2", "kappa2", "x0", "y0",
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "a1" => self.a1,
            "a2" => self.a2,
            "a3" => self.a3,
            "p1" => self.p1,
            "p2" => self.p2,
            "p3" => self.p3,
            "alpha1" => self.alpha1,
            "eta1" => self.eta1,
            "theta1" => self.theta1,
            "kappa1" => self.kappa1,
            "b1" => self.b1,
            "b2" => self.b2,
            "b3" => self.b3,
            "q1" => self.q1,
            "q2" => self.q2,
            "q3" => self.q3,
            "alpha2" => self.alpha2,
            "eta2" => self.eta2,
            "theta2" => self.theta2,
            "kappa2" => self.kappa2,
            "x0" => self.x0,
            "y0" => self.y0,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "a1" => &mut self.a1,
            "a2" => &mut self.a2,
            "a3" => &mut self.a3,
            "p1" => &mut self.p1,
            "p2" => &mut self.p2,
            "p3" => &mut self.p3,
            "alpha1" => &mut self.alpha1,
            "eta1" => &mut self.eta1,
            "theta1" => &mut self.theta1,
            "kappa1" => &mut self.kappa1,
            "b1" => &mut self.b1,
            "b2" => &mut self.b2,
            "b3" => &mut self.b3,
            "q1" => &mut self.q1,
            "q2" => &mut self.q2,
            "q3" => &mut self.q3,
            "alpha2" => &mut self.alpha2,
            "eta2" => &mut self.eta2,
            "theta2" => &mut self.theta2,
            "kappa2" => &mut self.kappa2,
            "x0" => &mut self.x0,
            "y0" => &mut self.y0,
            _ => return Err(Error::Config(format!("unknown model parameter `{name}`"))),
        };
        *slot = value;
        Ok(())
    }

    /// Checks every constraint on the coefficients. In relaxed mode the
    /// noise requirement `a2 + a3 > 0`, `b2 + b3 > 0` is skipped and zero
    /// interaction strengths are allowed.
    pub fn validate(self, strict: bool) -> Result<Self> {
        for name in Self::field_names() {
            let v = self.get(name).unwrap_or(f64::NAN);
            if !v.is_finite() {
                return Err(violation(name, format!("must be finite, got {v}")));
            }
        }
        for (name, alpha) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(alpha > 1.0 && alpha < 2.0) {
                return Err(violation(name, format!("stable index must lie in (1, 2), got {alpha}")));
            }
        }
        for name in ["a1", "a2", "a3", "p1", "p2", "p3", "b1", "b2", "b3", "q1", "q2", "q3", "theta1", "theta2"] {
            let v = self.get(name).unwrap_or(0.0);
            if v < 0.0 {
                return Err(violation(name, format!("must be nonnegative, got {v}")));
            }
        }
        for name in ["kappa1", "kappa2", "x0", "y0"] {
            let v = self.get(name).unwrap_or(0.0);
            if v <= 0.0 {
                return Err(violation(name, format!("must be positive, got {v}")));
            }
        }
        for name in ["eta1", "eta2"] {
            let v = self.get(name).unwrap_or(0.0);
            if strict && v <= 0.0 {
                return Err(violation(name, format!("interaction strength must be positive, got {v}")));
            }
            if v < 0.0 {
                return Err(violation(name, format!("must be nonnegative, got {v}")));
            }
        }
        if strict {
            if self.a2 + self.a3 <= 0.0 {
                return Err(violation("a2+a3", "X needs a diffusion or jump term (a2 + a3 > 0)"));
            }
            if self.b2 + self.b3 <= 0.0 {
                return Err(violation("b2+b3", "Y needs a diffusion or jump term (b2 + b3 > 0)"));
            }
        }
        Ok(self)
    }

    /// Minimum exponent over the active terms of each component and the
    /// summed coefficient attached to it. Components without any active
    /// term report an infinite exponent and a zero coefficient.
    pub fn derived_exponents(&self) -> DerivedExponents {
        let (p, a) = effective([self.a1, self.a2, self.a3], [self.p1, self.p2, self.p3]);
        let (q, b) = effective([self.b1, self.b2, self.b3], [self.q1, self.q2, self.q3]);
        DerivedExponents { p, q, a, b }
    }

    pub fn measures(&self) -> Result<(StableMeasure, StableMeasure)> {
        Ok((StableMeasure::new(self.alpha1)?, StableMeasure::new(self.alpha2)?))
    }

    /// The same system with the roles of `X` and `Y` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            a1: self.b1,
            a2: self.b2,
            a3: self.b3,
            p1: self.q1,
            p2: self.q2,
            p3: self.q3,
            alpha1: self.alpha2,
            eta1: self.eta2,
            theta1: self.theta2,
            kappa1: self.kappa2,
            b1: self.a1,
            b2: self.a2,
            b3: self.a3,
            q1: self.p1,
            q2: self.p2,
            q3: self.p3,
            alpha2: self.alpha1,
            eta2: self.eta1,
            theta2: self.theta1,
            kappa2: self.kappa1,
            x0: self.y0,
            y0: self.x0,
        }
    }

    pub fn classify(&self) -> RegimeVerdict {
        classify_with_margin(self, DEFAULT_MARGIN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    NoExtinctionEither,
    NoExtinctionY,
    PartialExtinctionY,
    SureExtinctionY,
    ConjecturedSureExtinctionY,
    ConjecturedPartialExtinctionY,
    Unsettled,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::NoExtinctionEither => "NoExtinctionEither",
            Verdict::NoExtinctionY => "NoExtinctionY",
            Verdict::PartialExtinctionY => "PartialExtinctionY",
            Verdict::SureExtinctionY => "SureExtinctionY",
            Verdict::ConjecturedSureExtinctionY => "ConjecturedSureExtinctionY",
            Verdict::ConjecturedPartialExtinctionY => "ConjecturedPartialExtinctionY",
            Verdict::Unsettled => "Unsettled",
        }
    }

    /// Whether the verdict is a proven statement (as opposed to a conjecture
    /// label or no statement at all).
    pub fn is_settled(&self) -> bool {
        matches!(
            self,
            Verdict::NoExtinctionEither | Verdict::NoExtinctionY | Verdict::PartialExtinctionY | Verdict::SureExtinctionY
        )
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeVerdict {
    pub verdict: Verdict,
    pub fired_conditions: Vec<String>,
    pub boundary_quantities: BTreeMap<String, f64>,
}

/// Comparisons with a symmetric slack: values within `m` of each other are
/// equal, strict inequalities need to clear the slack.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cmp {
    pub m: f64,
}

impl Cmp {
    pub fn eq(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.m
    }
    pub fn lt(&self, a: f64, b: f64) -> bool {
        a < b - self.m
    }
    pub fn gt(&self, a: f64, b: f64) -> bool {
        a > b + self.m
    }
    pub fn ge(&self, a: f64, b: f64) -> bool {
        a >= b - self.m
    }
}

/// Every condition the classifier evaluates, computed up front so that the
/// verdict logic and the reported quantities cannot drift apart.
#[derive(Debug, Clone)]
pub struct ConditionTable {
    pub quantities: BTreeMap<String, f64>,
    pub flags: BTreeMap<&'static str, bool>,
}

impl ConditionTable {
    pub fn flag(&self, tag: &str) -> bool {
        self.flags.get(tag).copied().unwrap_or(false)
    }
}

pub fn condition_table(params: &ModelParams, margin: f64) -> ConditionTable {
    let c = Cmp { m: margin };
    let d = params.derived_exponents();
    let (p, q, a, b) = (d.p, d.q, d.a, d.b);
    let (t1, t2, k1, k2) = (params.theta1, params.theta2, params.kappa1, params.kappa2);
    let (e1, e2) = (params.eta1, params.eta2);
    let den = q + 1.0 - t2;

    let mut qv = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        qv.insert(k.to_string(), v);
    };
    put("p", p);
    put("q", q);
    put("a", a);
    put("b", b);
    put("theta1", t1);
    put("theta2", t2);
    put("kappa1", k1);
    put("kappa2", k2);
    put("eta1", e1);
    put("eta2", e2);

    // Shared sides of the inequalities.
    let pq_rhs = k2 * q / den;
    let th_lhs = t1 - 1.0;
    let th_rhs = k2 * (q - k1) / den;
    let ba = b / a;
    let ba_rhs = k2 / (1.0 - t2);
    let beta1 = b / e1;
    let beta1_rhs = k2 / (k1 + 1.0 - t2);
    let eta_lhs = (t1 - 1.0) * e1 / den;
    let eta_rhs = e2.powf((q - k1) / den) * (b * (q - k1) / (k1 + 1.0 - t2)).powf((1.0 + k1 - t2) / den);
    let ab_lhs = a * p / (q * den);
    let ab_rhs = (b / (1.0 - t2)).powf((1.0 - t2) / den) * (e2 / q).powf(q / den);

    put("p_vs_kappa2q_rhs", pq_rhs);
    put("theta1_minus_1", th_lhs);
    put("kappa2_q_minus_kappa1_rhs", th_rhs);
    put("b_over_a", ba);
    put("kappa2_over_1_minus_theta2", ba_rhs);
    put("b_over_eta1", beta1);
    put("kappa2_over_kappa1_plus_1_minus_theta2", beta1_rhs);
    put("eta_balance_lhs", eta_lhs);
    put("eta_balance_rhs", eta_rhs);
    put("ab_balance_lhs", ab_lhs);
    put("ab_balance_rhs", ab_rhs);

    let t1_ge1 = c.ge(t1, 1.0);
    let t2_ge1 = c.ge(t2, 1.0);
    let t2_lt1 = !t2_ge1;
    let pq_zero = c.eq(p, 0.0) && c.eq(q, 0.0);

    let mut f: BTreeMap<&'static str, bool> = BTreeMap::new();
    f.insert("theta1>=1", t1_ge1);
    f.insert("theta2>=1", t2_ge1);
    let ii_pre = t1_ge1 && t2_lt1;
    f.insert("iia", ii_pre && c.lt(p, pq_rhs));
    f.insert("iib", ii_pre && pq_zero && c.lt(ba, ba_rhs));
    f.insert("iic", ii_pre && c.lt(th_lhs, th_rhs));
    f.insert("iid", ii_pre && c.eq(t1, 1.0) && c.eq(q, k1) && c.lt(beta1, beta1_rhs));
    let iii_pre = ii_pre && c.gt(th_lhs, th_rhs);
    f.insert("iii", iii_pre);
    f.insert("iiia", iii_pre && c.gt(p, pq_rhs));
    f.insert("iiib", iii_pre && pq_zero && c.gt(ba, ba_rhs));

    let ia_p = c.gt(p, pq_rhs);
    let ib_p = c.gt(p, 0.0) && c.gt(q, 0.0) && c.eq(p, pq_rhs) && c.lt(ab_lhs, ab_rhs);
    let ic_p = pq_zero && c.gt(ba, ba_rhs);
    f.insert("ia'", ia_p);
    f.insert("ib'", ib_p);
    f.insert("ic'", ic_p);
    let any_prime = ia_p || ib_p || ic_p;
    let balance = c.gt(t1, 1.0) && c.gt(q, k1) && c.eq(th_lhs, th_rhs);
    f.insert("C1.4(i)", t2_lt1 && balance && c.lt(eta_lhs, eta_rhs) && any_prime);
    f.insert(
        "C1.4(ii)",
        t2_lt1 && c.eq(t1, 1.0) && c.eq(q, k1) && c.gt(beta1, beta1_rhs) && any_prime,
    );
    f.insert("C1.4(iii)", t2_lt1 && c.gt(th_lhs, th_rhs) && ib_p);
    f.insert(
        "C1.5(i)",
        ii_pre && c.gt(p, 0.0) && c.gt(q, 0.0) && c.eq(p, pq_rhs) && c.gt(ab_lhs, ab_rhs),
    );
    f.insert("C1.5(ii)", ii_pre && balance && c.gt(eta_lhs, eta_rhs));

    ConditionTable { quantities: qv, flags: f }
}

/// Classifies with an explicit comparison slack.
pub fn classify_with_margin(params: &ModelParams, margin: f64) -> RegimeVerdict {
    let table = condition_table(params, margin);
    let fl = |t: &str| table.flag(t);
    let mut fired = Vec::new();
    let verdict = if fl("theta2>=1") {
        if fl("theta1>=1") {
            fired.push("T1.2(no-extinction)".to_string());
            fired.push("T1.2(i)".to_string());
            Verdict::NoExtinctionEither
        } else {
            fired.push("T1.2(i)".to_string());
            Verdict::NoExtinctionY
        }
    } else if ["iia", "iib", "iic", "iid"].iter().any(|t| fl(t)) {
        for t in ["iia", "iib", "iic", "iid"] {
            if fl(t) {
                fired.push(format!("T1.2({t})"));
            }
        }
        Verdict::PartialExtinctionY
    } else if fl("iiia") || fl("iiib") {
        fired.push("T1.2(iii)".to_string());
        for t in ["iiia", "iiib"] {
            if fl(t) {
                fired.push(format!("T1.2({t})"));
            }
        }
        Verdict::SureExtinctionY
    } else if ["C1.4(i)", "C1.4(ii)", "C1.4(iii)"].iter().any(|t| fl(t)) {
        for t in ["C1.4(i)", "C1.4(ii)", "C1.4(iii)"] {
            if fl(t) {
                fired.push(t.to_string());
            }
        }
        for t in ["ia'", "ib'", "ic'"] {
            if fl(t) {
                fired.push(format!("C1.4({t})"));
            }
        }
        Verdict::ConjecturedSureExtinctionY
    } else if fl("C1.5(i)") || fl("C1.5(ii)") {
        for t in ["C1.5(i)", "C1.5(ii)"] {
            if fl(t) {
                fired.push(t.to_string());
            }
        }
        Verdict::ConjecturedPartialExtinctionY
    } else {
        Verdict::Unsettled
    };
    RegimeVerdict {
        verdict,
        fired_conditions: fired,
        boundary_quantities: table.quantities,
    }
}
