use super::special::{incomplete_gamma, incomplete_gamma_log_arg, log_gamma_unchecked};
use super::{NumericError, Result};

/// A Gamma distribution in the (shape, rate) parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMarginal {
    shape: f64,
    rate: f64,
}

const QUANTILE_REL_TOL: f64 = 1e-14;
const QUANTILE_MAX_ITERS: usize = 200;

impl GammaMarginal {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0) {
            return Err(NumericError::domain(format!(
                "gamma shape must be finite and > 0, got {shape}"
            )));
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(NumericError::domain(format!(
                "gamma rate must be finite and > 0, got {rate}"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    fn check_finite(u: f64) -> Result<()> {
        if u.is_finite() {
            Ok(())
        } else {
            Err(NumericError::domain(format!(
                "argument must be finite, got {u}"
            )))
        }
    }

    /// `P(shape, rate·u)`; zero for `u <= 0`.
    pub fn cdf(&self, u: f64) -> Result<f64> {
        Ok(self.ln_cdf(u)?.exp())
    }

    /// `Q(shape, rate·u)`, computed from its own expansion in the upper tail.
    pub fn sf(&self, u: f64) -> Result<f64> {
        Ok(self.ln_sf(u)?.exp())
    }

    pub fn ln_cdf(&self, u: f64) -> Result<f64> {
        Self::check_finite(u)?;
        Ok(self.ln_cdf_unchecked(u))
    }

    pub fn ln_sf(&self, u: f64) -> Result<f64> {
        Self::check_finite(u)?;
        Ok(self.ln_sf_unchecked(u))
    }

    pub(crate) fn ln_cdf_unchecked(&self, u: f64) -> f64 {
        incomplete_gamma(self.shape, self.rate * u).ln_p
    }

    pub(crate) fn ln_sf_unchecked(&self, u: f64) -> f64 {
        incomplete_gamma(self.shape, self.rate * u).ln_q
    }

    /// Log density at `u > 0`.
    pub fn log_pdf(&self, u: f64) -> Result<f64> {
        if !(u.is_finite() && u > 0.0) {
            return Err(NumericError::domain(format!(
                "log_pdf requires finite u > 0, got {u}"
            )));
        }
        Ok(self.log_pdf_unchecked(u))
    }

    pub(crate) fn log_pdf_unchecked(&self, u: f64) -> f64 {
        self.shape * self.rate.ln() + (self.shape - 1.0) * u.ln()
            - self.rate * u
            - log_gamma_unchecked(self.shape)
    }

    /// `ln P(U ≤ e^t)`. Stays accurate when `e^t` underflows, which happens
    /// for shapes well below one.
    pub fn ln_cdf_at_log(&self, t: f64) -> f64 {
        incomplete_gamma_log_arg(self.shape, t + self.rate.ln()).ln_p
    }

    /// `ln P(U > e^t)`.
    pub fn ln_sf_at_log(&self, t: f64) -> f64 {
        incomplete_gamma_log_arg(self.shape, t + self.rate.ln()).ln_q
    }

    /// Log density of `T = ln U` at `t`, i.e. `ln(u f(u))` with `u = e^t`.
    pub fn log_pdf_at_log(&self, t: f64) -> f64 {
        let y = t + self.rate.ln();
        self.shape * y - y.exp() - log_gamma_unchecked(self.shape)
    }

    /// The `u` with `cdf(u) = p`.
    ///
    /// Underflows to zero for very small shapes; [`Self::log_quantile`] does
    /// not.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        Ok(self.log_quantile(p)?.exp())
    }

    /// `ln` of the `u` with `cdf(u) = p`.
    ///
    /// Safeguarded Newton iteration on `y = ln(rate·u)`, solving `ln P = ln p`
    /// in the lower half and `ln Q = ln(1 - p)` in the upper half so both
    /// tails keep their relative accuracy.
    pub fn log_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(NumericError::domain(format!(
                "quantile requires 0 < p < 1, got {p}"
            )));
        }
        // Work on the unit-rate variable; rescale at the end.
        let a = self.shape;
        let lower = p <= 0.5;
        let target = if lower { p.ln() } else { (-p).ln_1p() };
        // g is increasing in y.
        let g = |y: f64| -> (f64, f64) {
            let inc = incomplete_gamma_log_arg(a, y);
            // d/dy ln P = x f(x) / P, with f the unit-rate density.
            let ln_xf = a * y - y.exp() - log_gamma_unchecked(a);
            if lower {
                (inc.ln_p - target, (ln_xf - inc.ln_p).exp())
            } else {
                (target - inc.ln_q, (ln_xf - inc.ln_q).exp())
            }
        };

        let mut y = a.ln();
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut val = g(y).0;
        // Bracket the root.
        let mut step = 1.0;
        while val != 0.0 {
            if val < 0.0 {
                lo = y;
                if hi.is_finite() {
                    break;
                }
                y += step;
            } else {
                hi = y;
                if lo.is_finite() {
                    break;
                }
                y -= step;
            }
            step *= 2.0;
            val = g(y).0;
        }
        if val == 0.0 {
            return Ok(y - self.rate.ln());
        }

        y = 0.5 * (lo + hi);
        for _ in 0..QUANTILE_MAX_ITERS {
            let (val, slope) = g(y);
            if val == 0.0 {
                break;
            }
            if val < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let newton = y - val / slope;
            let next = if slope.is_finite() && slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let done = (next - y).abs() <= QUANTILE_REL_TOL * (1.0 + y.abs())
                || hi - lo <= QUANTILE_REL_TOL * (1.0 + y.abs());
            y = next;
            if done {
                break;
            }
        }
        Ok(y - self.rate.ln())
    }
}
