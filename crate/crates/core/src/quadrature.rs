//! One-dimensional quadrature: fixed Gauss-Legendre panels and a globally
//! adaptive Gauss-Kronrod (7/15) integrator.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature did not reach tolerance {tol:e} within depth {depth} (estimate {estimate}, error {error:e})")]
    NonConvergent {
        tol: f64,
        depth: u32,
        estimate: f64,
        error: f64,
    },
    #[error("integrand produced a non-finite value near {at}")]
    NonFinite { at: f64 },
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss 7-point weights for GK_NODES[1], [3], [5], [7].
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const GL16_NODES: [f64; 8] = [
    0.095_012_509_837_637_440_185_319_335_424_958_1,
    0.281_603_550_779_258_913_230_460_501_460_496_1,
    0.458_016_777_657_227_386_342_419_442_983_577_5,
    0.617_876_244_402_643_748_446_671_764_048_791_0,
    0.755_404_408_355_003_033_895_101_194_847_442_2,
    0.865_631_202_387_831_743_880_467_897_712_393_1,
    0.944_575_023_073_232_576_077_988_415_534_608_3,
    0.989_400_934_991_649_932_596_154_173_450_332_6,
];

const GL16_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_496_285_396_723_208_283_1,
    0.182_603_415_044_923_588_866_763_667_969_219_9,
    0.169_156_519_395_002_538_189_312_079_030_359_9,
    0.149_595_988_816_576_732_081_501_730_547_478_5,
    0.124_628_971_255_533_872_052_476_282_192_016_4,
    0.095_158_511_682_492_784_809_925_107_602_246_2,
    0.062_253_523_938_647_892_862_843_836_994_377_6,
    0.027_152_459_411_754_094_851_780_572_456_018_1,
];

/// 16-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre16<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL16_NODES.iter().zip(GL16_WEIGHTS.iter()) {
        acc += w * (f(mid - half * x) + f(mid + half * x));
    }
    acc * half
}

/// Gauss-Legendre with recursive bisection: a panel is accepted when its
/// 16-point value agrees with the sum over its two halves to `tol`.
pub fn gauss_legendre_adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let left = gauss_legendre16(f, a, mid);
        let right = gauss_legendre16(f, mid, b);
        let split = left + right;
        if depth == 0 || (split - whole).abs() <= tol {
            return split;
        }
        recurse(f, a, mid, left, 0.5 * tol, depth - 1) + recurse(f, mid, b, right, 0.5 * tol, depth - 1)
    }
    let whole = gauss_legendre16(f, a, b);
    recurse(f, a, b, whole, tol, max_depth)
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, depth: u32) -> Result<Panel, QuadError> {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let center = f(mid);
    if !center.is_finite() {
        return Err(QuadError::NonFinite { at: mid });
    }
    let mut kronrod = GK_WEIGHTS[7] * center;
    let mut gauss = G7_WEIGHTS[3] * center;
    for i in 0..7 {
        let dx = half * GK_NODES[i];
        let lo = f(mid - dx);
        let hi = f(mid + dx);
        if !lo.is_finite() {
            return Err(QuadError::NonFinite { at: mid - dx });
        }
        if !hi.is_finite() {
            return Err(QuadError::NonFinite { at: mid + dx });
        }
        kronrod += GK_WEIGHTS[i] * (lo + hi);
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * (lo + hi);
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Ok(Panel {
        a,
        b,
        value,
        error,
        depth,
    })
}

/// Globally adaptive Gauss-Kronrod integration on a finite interval.
///
/// The panel with the largest error estimate is bisected until the summed
/// error falls below `abs_tol`. Refining a panel past `max_depth`
/// bisections is reported as [`QuadError::NonConvergent`]. Panels whose
/// error is already at the rounding floor are retired.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, max_depth: u32) -> Result<f64, QuadError> {
    integrate_budget(f, a, b, abs_tol, max_depth, usize::MAX).map(|(v, _)| v)
}

/// [`integrate`] that stops after `max_panels` bisections and returns the
/// estimate with its error bound. Meant for integrands with a noise floor
/// above the requested tolerance.
pub fn integrate_budget<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_depth: u32,
    max_panels: usize,
) -> Result<(f64, f64), QuadError> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut splits = 0usize;
    let first = kronrod_panel(&f, a, b, 0)?;
    let mut heap = BinaryHeap::new();
    let mut retired_value = 0.0;
    let mut retired_error = 0.0;
    let mut total_value = first.value;
    let mut total_error = first.error;
    heap.push(first);
    while total_error > abs_tol && splits < max_panels {
        let Some(worst) = heap.pop() else { break };
        let floor = 50.0 * f64::EPSILON * worst.value.abs().max(f64::MIN_POSITIVE);
        if worst.error <= floor || (worst.b - worst.a).abs() <= 4.0 * f64::EPSILON * worst.a.abs().max(worst.b.abs()) {
            retired_value += worst.value;
            retired_error += worst.error;
            total_error = retired_error + heap.iter().map(|p| p.error).sum::<f64>();
            if heap.is_empty() {
                break;
            }
            continue;
        }
        if worst.depth >= max_depth {
            return Err(QuadError::NonConvergent {
                tol: abs_tol,
                depth: max_depth,
                estimate: total_value,
                error: total_error,
            });
        }
        splits += 1;
        let mid = 0.5 * (worst.a + worst.b);
        let left = kronrod_panel(&f, worst.a, mid, worst.depth + 1)?;
        let right = kronrod_panel(&f, mid, worst.b, worst.depth + 1)?;
        heap.push(left);
        heap.push(right);
        // Re-sum rather than update incrementally; keeps rounding drift out of the stop test.
        total_value = retired_value + heap.iter().map(|p| p.value).sum::<f64>();
        total_error = retired_error + heap.iter().map(|p| p.error).sum::<f64>();
    }
    Ok((retired_value + heap.iter().map(|p| p.value).sum::<f64>(), total_error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_is_exact_for_degree_31() {
        let f = |x: f64| x.powi(31) + 3.0 * x.powi(10);
        let exact = (1.0 / 32.0) + 3.0 / 11.0;
        assert!((gauss_legendre16(&f, 0.0, 1.0) - exact).abs() < 1e-14);
    }

    #[test]
    fn adaptive_legendre_handles_steep_integrand() {
        let f = |v: f64| (0.01 + v).powf(-1.5);
        let exact = 2.0 * (0.01f64.powf(-0.5) - 1.01f64.powf(-0.5));
        let got = gauss_legendre_adaptive(&f, 0.0, 1.0, 1e-13, 30);
        assert!((got - exact).abs() < 1e-11, "{got} vs {exact}");
    }

    #[test]
    fn kronrod_smooth() {
        let got = integrate(|x: f64| x.exp(), 0.0, 1.0, 1e-13, 30).unwrap();
        assert!((got - (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn kronrod_endpoint_singularity() {
        // x^{-0.7} on (0,1] integrates to 1/0.3.
        let got = integrate(|x: f64| x.powf(-0.7), 0.0, 1.0, 1e-10, 200).unwrap();
        assert!((got - 1.0 / 0.3).abs() < 1e-9, "{got}");
    }

    #[test]
    fn depth_exhaustion_is_reported() {
        let err = integrate(|x: f64| x.powf(-0.999), 0.0, 1.0, 1e-14, 5).unwrap_err();
        assert!(matches!(err, QuadError::NonConvergent { .. }));
    }

    #[test]
    fn non_finite_is_reported() {
        let err = integrate(|x: f64| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, 1e-10, 20).unwrap_err();
        assert!(matches!(err, QuadError::NonFinite { .. }));
    }
}
