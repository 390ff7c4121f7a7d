use super::{NumericError, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Above this argument the Stirling series is used instead of Lanczos.
const STIRLING_CUTOFF: f64 = 15.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

const INCGAMMA_EPS: f64 = 1e-16;
const INCGAMMA_MAX_ITERS: usize = 100_000;
const TINY: f64 = 1e-300;

/// `ln Γ(x)` for finite `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(NumericError::domain(format!(
            "log_gamma requires finite x > 0, got {x}"
        )));
    }
    Ok(log_gamma_unchecked(x))
}

pub(crate) fn log_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Shift up so the Lanczos sum stays in its accurate range.
        return log_gamma_unchecked(x + 1.0) - x.ln();
    }
    if x >= STIRLING_CUTOFF {
        return (x - 0.5) * x.ln() - x + HALF_LN_2PI + stirling_correction(x);
    }
    let z = x - 1.0;
    let mut sum = LANCZOS_COEFFS[0];
    for (k, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        sum += c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    HALF_LN_2PI + (z + 0.5) * t.ln() - t + sum.ln()
}

/// `ln Γ(x) - [(x - 1/2) ln x - x + ln √(2π)]` for `x >= 15`.
fn stirling_correction(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    inv * (1.0 / 12.0
        - inv2
            * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0)))))
}

/// `ln(x^a e^{-x} / Γ(a))`, the common prefactor of both incomplete gamma
/// expansions.
fn ln_prefactor(a: f64, x: f64) -> f64 {
    if a >= STIRLING_CUTOFF {
        // a ln x - x - ln Γ(a) rewritten around x = a to avoid cancelling
        // two terms of size a ln a.
        let d = (x - a) / a;
        a * (d.ln_1p() - d) + 0.5 * a.ln() - HALF_LN_2PI - stirling_correction(a)
    } else {
        a * x.ln() - x - log_gamma_unchecked(a)
    }
}

/// Logs of both regularized incomplete gamma functions. The one on the
/// "small" side is computed by its own expansion and the other by
/// complement, so whichever tail is tiny keeps full relative accuracy.
#[derive(Debug, Clone, Copy)]
pub(crate) struct IncompleteGamma {
    pub ln_p: f64,
    pub ln_q: f64,
}

pub(crate) fn incomplete_gamma(a: f64, x: f64) -> IncompleteGamma {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return IncompleteGamma {
            ln_p: f64::NEG_INFINITY,
            ln_q: 0.0,
        };
    }
    if x == f64::INFINITY {
        return IncompleteGamma {
            ln_p: 0.0,
            ln_q: f64::NEG_INFINITY,
        };
    }
    let ln_pref = ln_prefactor(a, x);
    if x < a + 1.0 {
        let ln_p = ln_pref + lower_series(a, x).ln();
        IncompleteGamma {
            ln_p,
            ln_q: ln_1m_exp(ln_p),
        }
    } else {
        let ln_q = ln_pref + upper_continued_fraction(a, x).ln();
        IncompleteGamma {
            ln_p: ln_1m_exp(ln_q),
            ln_q,
        }
    }
}

/// Below this `ln x` the argument is too close to underflow to form; only
/// the leading series term `x^a / Γ(a+1)` matters there (the next term is
/// smaller by a factor `x`).
const LOG_ARG_CUTOFF: f64 = -600.0;

/// [`incomplete_gamma`] at `x = e^y`, valid for arguments far below the
/// smallest positive double.
pub(crate) fn incomplete_gamma_log_arg(a: f64, y: f64) -> IncompleteGamma {
    debug_assert!(a > 0.0);
    if y >= LOG_ARG_CUTOFF {
        return incomplete_gamma(a, y.exp());
    }
    if y == f64::NEG_INFINITY {
        return incomplete_gamma(a, 0.0);
    }
    let ln_p = (a * y - log_gamma_unchecked(a + 1.0)).min(0.0);
    IncompleteGamma {
        ln_p,
        ln_q: ln_1m_exp(ln_p),
    }
}

/// `Σ_{n≥0} x^n / (a (a+1) ... (a+n))`, so that `P = prefactor * series`.
fn lower_series(a: f64, x: f64) -> f64 {
    let mut denom = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..INCGAMMA_MAX_ITERS {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * INCGAMMA_EPS {
            break;
        }
    }
    sum
}

/// Modified Lentz evaluation of the continued fraction for `Q / prefactor`.
fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=INCGAMMA_MAX_ITERS {
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
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < INCGAMMA_EPS {
            break;
        }
    }
    h
}

/// `ln(1 - e^v)` for `v <= 0`.
pub(crate) fn ln_1m_exp(v: f64) -> f64 {
    if v > -std::f64::consts::LN_2 {
        (-v.exp_m1()).ln()
    } else {
        (-v.exp()).ln_1p()
    }
}

fn check_incgamma_args(a: f64, x: f64) -> Result<()> {
    if !a.is_finite() || a <= 0.0 {
        return Err(NumericError::domain(format!(
            "incomplete gamma requires finite shape > 0, got {a}"
        )));
    }
    if x.is_nan() {
        return Err(NumericError::domain("incomplete gamma argument is NaN"));
    }
    Ok(())
}

/// Regularized lower incomplete gamma `P(a, x)`; zero for `x <= 0`.
pub fn regularized_gamma_p(a: f64, x: f64) -> Result<f64> {
    check_incgamma_args(a, x)?;
    Ok(incomplete_gamma(a, x).ln_p.exp())
}

/// Regularized upper incomplete gamma `Q(a, x)`; one for `x <= 0`.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    check_incgamma_args(a, x)?;
    Ok(incomplete_gamma(a, x).ln_q.exp())
}

/// `ln P(a, x)`, finite even where `P` itself underflows.
pub fn ln_gamma_p(a: f64, x: f64) -> Result<f64> {
    check_incgamma_args(a, x)?;
    Ok(incomplete_gamma(a, x).ln_p)
}

/// `ln Q(a, x)`, finite even where `Q` itself underflows.
pub fn ln_gamma_q(a: f64, x: f64) -> Result<f64> {
    check_incgamma_args(a, x)?;
    Ok(incomplete_gamma(a, x).ln_q)
}
