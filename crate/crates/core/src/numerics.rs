//! Small numerical kernels shared across modules: order-fixed summation,
//! log-sum-exp, the standard normal quantile, Halton points and a
//! golden-section minimizer.

/// Pairwise (tree) summation in a fixed order.
///
/// The recursion splits at `len / 2` until blocks of at most eight values,
/// so the result depends only on the slice contents, never on how the values
/// were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// `ln Σ exp(x_i)`, returning `-∞` for an empty slice or all `-∞` inputs and
/// `+∞` as soon as any input is `+∞`.
pub fn log_sum_exp(log_values: &[f64]) -> f64 {
    let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    let shifted: Vec<f64> = log_values.iter().map(|&v| (v - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// Standard normal quantile, Wichura's AS 241 (PPND16).
///
/// Absolute error is below 1e-15 over the open unit interval; `p` outside
/// `(0, 1)` maps to `±∞` or NaN.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r
            + 67265.770_927_008_7)
            * r
            + 45921.953_931_549_87)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_4)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_6;
        let den = ((((((5226.495_278_852_546 * r + 28729.085_735_721_943) * r
            + 39307.895_800_092_71)
            * r
            + 21213.794_301_586_596)
            * r
            + 5394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103_8;
        let den = ((((((2.044_263_103_389_939_8e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_888)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Radical inverse of `index` in the given prime `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut acc = 0.0;
    while index > 0 {
        acc += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    acc
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Point `index` of the Halton sequence mapped into an axis-aligned box.
///
/// Index 0 is skipped internally so the corner `lo` is never returned.
pub fn halton_point(index: u64, bounds: &[(f64, f64)]) -> Vec<f64> {
    assert!(bounds.len() <= PRIMES.len(), "halton_point supports up to 8 dimensions");
    bounds
        .iter()
        .zip(PRIMES)
        .map(|(&(lo, hi), base)| lo + (hi - lo) * radical_inverse(index + 1, base))
        .collect()
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
///
/// Returns `(argmin, min)` once the bracket is narrower than `tol`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn quantile_matches_reference_inverse() {
        let n = Normal::standard();
        for k in 1..2000 {
            let p = k as f64 / 2000.0;
            let err = (normal_quantile(p) - n.inverse_cdf(p)).abs();
            assert!(err < 1e-9, "p = {p}: err {err}");
        }
        for &p in &[1e-300, 1e-100, 1e-20, 1e-10, 1e-5, 0.01, 0.99, 1.0 - 1e-12] {
            let x = normal_quantile(p);
            let back = n.cdf(x);
            assert!(((back - p) / p.min(1.0 - p)).abs() < 1e-7 || (back - p).abs() < 1e-15, "p = {p}");
        }
    }

    #[test]
    fn quantile_is_odd_and_handles_edges() {
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.2) + normal_quantile(0.8)).abs() < 1e-15);
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(normal_quantile(1.0), f64::INFINITY);
        assert!(normal_quantile(1.5).is_nan());
    }

    #[test]
    fn log_sum_exp_edges() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[1.0, f64::INFINITY]), f64::INFINITY);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_exact_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }

    #[test]
    fn golden_section_agrees_with_grid_scan() {
        let f = |r: f64| ((38.0f64).powi(2) / r - 20.0).max(r - 1.0).max(0.0);
        let (_, gmin) = golden_section_min(f, 1e-9, 100.0, 1e-10);
        let scan = (1..=1_000_000)
            .map(|i| f(i as f64 * 1e-4))
            .fold(f64::INFINITY, f64::min);
        assert!((gmin - scan).abs() < 1e-3, "{gmin} vs {scan}");
        assert!(gmin <= scan + 1e-9);
    }

    #[test]
    fn halton_points_stay_in_box() {
        for i in 0..500 {
            let p = halton_point(i, &[(-1.0, 1.0), (0.0, 10.0), (5.0, 6.0)]);
            assert!(p[0] > -1.0 && p[0] < 1.0);
            assert!(p[1] > 0.0 && p[1] < 10.0);
            assert!(p[2] > 5.0 && p[2] < 6.0);
        }
    }
}
