//! One-dimensional numerics: adaptive Gauss-Kronrod integration and
//! golden-section search.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// 15-point Kronrod abscissae (non-negative half) and weights; the odd
// entries are the 7-point Gauss abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_SEGMENTS: usize = 4000;

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = half * XGK[j];
        let s = f(center - x) + f(center + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub segments: usize,
}

/// Globally adaptive G7/K15 integration of `f` over the panels delimited by
/// `breaks` (sorted, at least two points). Refinement stops once the summed
/// error estimate drops below `rel_tol * |value|`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], rel_tol: f64) -> Result<Integral> {
    if breaks.len() < 2 || breaks.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
        return Err(Error::invalid("integration breakpoints must be strictly increasing"));
    }
    let mut heap: BinaryHeap<Segment> = breaks.windows(2).map(|w| gauss_kronrod(&f, w[0], w[1])).collect();
    loop {
        let value: f64 = heap.iter().map(|s| s.value).sum();
        let error: f64 = heap.iter().map(|s| s.error).sum();
        if !value.is_finite() {
            return Err(Error::numerical("integrand produced a non-finite value"));
        }
        if error <= rel_tol * value.abs() || error == 0.0 {
            return Ok(Integral {
                value,
                error,
                segments: heap.len(),
            });
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::numerical(format!(
                "quadrature did not reach relative tolerance {rel_tol:e} (error {error:e}, value {value:e})"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            return Err(Error::numerical("quadrature segment cannot be split further"));
        }
        heap.push(gauss_kronrod(&f, worst.a, mid));
        heap.push(gauss_kronrod(&f, mid, worst.b));
    }
}

/// Location and value of a minimum found by golden-section search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
}

/// Golden-section minimization of `f` on `[lo, hi]` until the bracket is
/// narrower than `tol`. Non-finite values are treated as `+inf`.
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Minimum {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
    }
    // the endpoints are never evaluated by the interior updates
    let mut best = if fc <= fd { Minimum { x: c, value: fc } } else { Minimum { x: d, value: fd } };
    for x in [lo, hi] {
        let v = eval(x);
        if v < best.value {
            best = Minimum { x, value: v };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_weights_sum_to_two() {
        let s = 2.0 * WGK[..7].iter().sum::<f64>() + WGK[7];
        assert!((s - 2.0).abs() < 1e-15);
        let g = 2.0 * WG[..3].iter().sum::<f64>() + WG[3];
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn polynomials_are_exact() {
        // K15 integrates degree <= 22 exactly on a single panel
        let r = integrate(|x| x.powi(10) - 3.0 * x.powi(3), &[0.0, 2.0], 1e-14).unwrap();
        let exact = 2f64.powi(11) / 11.0 - 3.0 * 2f64.powi(4) / 4.0;
        assert!((r.value - exact).abs() < 1e-11 * exact.abs());
    }

    #[test]
    fn gaussian_integral() {
        let r = integrate(|x: f64| (-0.5 * x * x).exp(), &[-40.0, -1.0, 0.0, 1.0, 40.0], 1e-12).unwrap();
        let exact = (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.value - exact).abs() < 1e-11, "{}", r.value - exact);
    }

    #[test]
    fn peaked_integrand_refines() {
        let w = 1e-3;
        let r = integrate(|x: f64| (-(x - 0.3) * (x - 0.3) / (2.0 * w * w)).exp(), &[0.0, 0.3, 1.0], 1e-10).unwrap();
        let exact = w * (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.value / exact - 1.0).abs() < 1e-9);
        assert!(r.segments > 2);
    }

    #[test]
    fn bad_breaks() {
        assert!(integrate(|x| x, &[1.0], 1e-8).is_err());
        assert!(integrate(|x| x, &[1.0, 0.0], 1e-8).is_err());
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let m = golden_section_min(|x| (x - 1.234).powi(2) + 5.0, -10.0, 10.0, 1e-8);
        assert!((m.x - 1.234).abs() < 1e-7);
        assert!((m.value - 5.0).abs() < 1e-12);
        let edge = golden_section_min(|x| x, 0.0, 1.0, 1e-8);
        assert_eq!(edge.x, 0.0);
    }
}
