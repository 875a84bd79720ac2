//! Special functions: regularized incomplete gamma, χ² distribution, standard normal.
//!
//! The χ² routines work with log probabilities and take both tails explicitly so
//! that quantiles very close to 0 or 1 keep full relative precision.

use std::f64::consts::{LN_2, PI, SQRT_2};

use crate::error::{Error, Result};

const MAX_ITER: usize = 500;
const TINY: f64 = 1e-300;

/// ln Γ(a) for a > 0.
#[inline]
pub fn ln_gamma(a: f64) -> f64 {
    libm::lgamma(a)
}

/// `(log P(a, x), log Q(a, x))` for the regularized incomplete gamma functions.
///
/// Series for x < a + 1, Lentz continued fraction otherwise; the complement is
/// taken in log space from whichever tail was computed directly.
pub fn ln_gamma_pq(a: f64, x: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(x >= 0.0) {
        return Err(Error::domain(format!("incomplete gamma needs a>0, x>=0 (a={a}, x={x})")));
    }
    if x == 0.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    if x == f64::INFINITY {
        return Ok((0.0, f64::NEG_INFINITY));
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let lp = log_prefactor + series_sum(a, x)?.ln();
        Ok((lp, ln_one_minus_exp(lp)))
    } else {
        let lq = log_prefactor + continued_fraction(a, x)?.ln();
        Ok((ln_one_minus_exp(lq), lq))
    }
}

/// log(1 - e^v) for v <= 0.
#[inline]
fn ln_one_minus_exp(v: f64) -> f64 {
    if v >= 0.0 {
        return f64::NEG_INFINITY;
    }
    crate::logval::log1mexp(-v)
}

// Σ x^n / (a (a+1) ... (a+n))
fn series_sum(a: f64, x: f64) -> Result<f64> {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            return Ok(sum);
        }
    }
    Err(Error::NoConvergence(format!("incomplete gamma series a={a} x={x}")))
}

// Modified Lentz evaluation of the continued fraction for Γ(a,x) / (x^a e^{-x}).
fn continued_fraction(a: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < f64::EPSILON {
            return Ok(h);
        }
    }
    Err(Error::NoConvergence(format!("incomplete gamma continued fraction a={a} x={x}")))
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    Ok(ln_gamma_pq(a, x)?.0.exp())
}

/// χ²(d) log CDF and log survival at `s`.
pub fn chi2_ln_cdf_sf(s: f64, d: f64) -> Result<(f64, f64)> {
    if s <= 0.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    ln_gamma_pq(0.5 * d, 0.5 * s)
}

pub fn chi2_cdf(s: f64, d: f64) -> f64 {
    chi2_ln_cdf_sf(s, d).map(|(lp, _)| lp.exp()).unwrap_or(f64::NAN)
}

/// log density of χ²(d) at `s > 0`.
#[inline]
pub fn chi2_ln_pdf(s: f64, d: f64) -> f64 {
    if s <= 0.0 {
        return if d < 2.0 {
            f64::INFINITY
        } else if d == 2.0 {
            -LN_2
        } else {
            f64::NEG_INFINITY
        };
    }
    let k = 0.5 * d;
    (k - 1.0) * s.ln() - 0.5 * s - k * LN_2 - ln_gamma(k)
}

/// χ²(d) quantile at lower-tail probability `p`.
pub fn chi2_quantile(p: f64, d: f64) -> Result<f64> {
    chi2_quantile_tails(p, 1.0 - p, d)
}

/// χ²(d) quantile given both tail probabilities `p` and `q = 1 - p`.
///
/// Whichever tail is smaller drives the root find, so callers holding an
/// accurately computed complement (e.g. `-expm1(log x)`) lose nothing near 1.
/// Bracketed Newton on the log tail probability, bisection fallback, relative
/// tolerance 1e-12 on the quantile.
pub fn chi2_quantile_tails(p: f64, q: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::domain(format!("chi2 degrees of freedom must be positive, got {d}")));
    }
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(Error::domain(format!("chi2 quantile probabilities out of range: p={p} q={q}")));
    }
    if p <= 0.0 {
        return Ok(0.0);
    }
    if q <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let use_lower = p <= q;
    let target = if use_lower { p.ln() } else { q.ln() };
    // h(s) is increasing in s for both tails after the sign flip
    let h = |s: f64| -> Result<(f64, f64)> {
        let (lp, lq) = chi2_ln_cdf_sf(s, d)?;
        let lf = chi2_ln_pdf(s, d);
        if use_lower {
            Ok((lp - target, (lf - lp).exp()))
        } else {
            Ok((target - lq, (lf - lq).exp()))
        }
    };

    let mut s = initial_guess(p, q, d);
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    for _ in 0..2000 {
        let (val, slope) = h(s)?;
        if val == 0.0 {
            return Ok(s);
        }
        if val < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        if hi.is_finite() && (hi - lo) <= 1e-12 * hi.max(f64::MIN_POSITIVE) {
            return Ok(0.5 * (lo + hi));
        }
        let newton = s - val / slope;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if hi.is_finite() {
            if lo > 0.0 && hi / lo > 4.0 {
                (lo * hi).sqrt()
            } else {
                0.5 * (lo + hi)
            }
        } else {
            (2.0 * s).max(1.0)
        };
        if (next - s).abs() <= 1e-13 * s.abs() {
            return Ok(next);
        }
        s = next;
    }
    Err(Error::NoConvergence(format!("chi2 quantile p={p} d={d}")))
}

fn initial_guess(p: f64, q: f64, d: f64) -> f64 {
    let k = 0.5 * d;
    // small-s expansion: P ≈ (s/2)^k / Γ(k+1)
    if p < 0.05 {
        let g = 2.0 * ((p.ln() + ln_gamma(k + 1.0)) / k).exp();
        if g > 0.0 && g.is_finite() {
            return g;
        }
    }
    // Wilson-Hilferty
    let z = if p <= q { norm_quantile(p) } else { -norm_quantile(q) };
    let c = 2.0 / (9.0 * d);
    let w = 1.0 - c + z * c.sqrt();
    let g = d * w * w * w;
    if g > 0.0 && g.is_finite() {
        g
    } else {
        d.max(1.0)
    }
}

/// Standard normal CDF Φ(x).
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// ln φ(x) for the standard normal density.
#[inline]
pub fn norm_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

/// ln Φ(x), accurate in both tails.
pub fn norm_ln_cdf(x: f64) -> f64 {
    if x > 5.0 {
        // Φ(x) = 1 - Φ(-x)
        (-norm_cdf(-x)).ln_1p()
    } else if x > -37.0 {
        norm_cdf(x).ln()
    } else {
        // Mills-ratio asymptotic series: Φ(x) ≈ φ(x)/|x| · Σ (-1)^k (2k-1)!! / x^{2k}
        let z2 = 1.0 / (x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..8 {
            term *= -((2 * k - 1) as f64) * z2;
            sum += term;
        }
        norm_ln_pdf(x) - (-x).ln() + sum.ln()
    }
}

/// φ(x)/Φ(x), the derivative of ln Φ.
#[inline]
pub fn norm_inv_mills(x: f64) -> f64 {
    (norm_ln_pdf(x) - norm_ln_cdf(x)).exp()
}

/// Standard normal quantile, Wichura's AS 241 (PPND16).
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&AS241_A, r) / poly(&AS241_B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&AS241_C, r) / poly(&AS241_D, r)
    } else {
        let r = r - 5.0;
        poly(&AS241_E, r) / poly(&AS241_F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

#[inline]
fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

const AS241_A: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_45,
    1_971.590_950_306_551_442_7,
    13_731.693_765_509_461_125,
    45_921.953_931_549_871_457,
    67_265.770_927_008_700_853,
    33_430.575_583_588_128_105,
    2_509.080_928_730_122_672_7,
];
const AS241_B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_252,
    687.187_007_492_057_908_3,
    5_394.196_021_424_751_107_7,
    21_213.794_301_586_595_867,
    39_307.895_800_092_710_61,
    28_729.085_735_721_942_674,
    5_226.495_278_852_545_925,
];
const AS241_C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    0.241_780_725_177_450_611_77,
    0.022_723_844_989_269_184_583_3,
    7.745_450_142_783_414_076_4e-4,
];
const AS241_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    0.689_767_334_985_100_004_55,
    0.148_103_976_427_480_074_59,
    0.015_198_666_563_616_457_196_6,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const AS241_E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    0.296_560_571_828_504_891_23,
    0.026_532_189_526_576_123_093,
    0.001_242_660_947_388_078_438_6,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const AS241_F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_69,
    0.136_929_880_922_735_805_31,
    0.014_875_361_290_850_614_852_5,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// Inverse-CDF draw of a standard normal truncated to `[a, b]` from a uniform `u`.
///
/// Intervals entirely in the right tail are reflected into the left tail, where
/// Φ carries relative precision.
pub fn truncated_std_normal(a: f64, b: f64, u: f64) -> f64 {
    debug_assert!(a <= b);
    if a > 0.0 {
        return -truncated_std_normal(-b, -a, 1.0 - u);
    }
    let pa = norm_cdf(a);
    let pb = norm_cdf(b);
    let p = pa + u * (pb - pa);
    norm_quantile(p).clamp(a, b)
}
