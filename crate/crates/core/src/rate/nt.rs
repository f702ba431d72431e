//! Closed forms for the number of renewals `N_t` (reward `f = 1`) under a
//! constant potential `beta`.
//!
//! Everything here is computed from one-dimensional sums over the base law
//! `p`, independently of the dual maximization in [`super::RateSolver`]:
//!
//! * `beta_c = -ln sum_s e^{-ell s} p(s)` (or `-inf` when the sum diverges),
//! * `w_c = sum e^{-ell s} p / sum s e^{-ell s} p` (0 when the latter diverges),
//! * `V(zeta) = sum e^{-zeta s} p / sum s e^{-zeta s} p`, increasing in `zeta`,
//! * `I_beta` through the root of `V(zeta) = w` above `w_c` and an affine
//!   piece below it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BaseLaw, WeightModel};
use crate::series::{weight_moment_sum, weight_sum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    None,
    Continuous,
    Discontinuous,
}

impl Transition {
    pub fn label(self) -> &'static str {
        match self {
            Transition::None => "none",
            Transition::Continuous => "continuous",
            Transition::Discontinuous => "discontinuous",
        }
    }
}

#[derive(Clone, Debug)]
pub struct NtSuite {
    p: WeightModel,
    beta: f64,
    ell: f64,
    beta_c: f64,
    w_c: f64,
    z0: f64,
}

impl NtSuite {
    /// Requires a constant potential and `p(s) > 0` for every `s`.
    pub fn new(base: &BaseLaw) -> Result<Self> {
        let beta = base
            .constant_potential()
            .ok_or_else(|| Error::NotApplicable("potential is not constant".into()))?;
        Self::with_beta(base.p(), beta)
    }

    pub fn with_beta(p: &WeightModel, beta: f64) -> Result<Self> {
        let tail = p
            .tail()
            .ok_or_else(|| Error::NotApplicable("waiting-time law has finite support".into()))?;
        if p.head().iter().any(|&x| x <= 0.0) {
            return Err(Error::NotApplicable("waiting-time law vanishes somewhere".into()));
        }
        let ell = tail.rate;
        let s0 = weight_sum(p, ell).value;
        let s1 = weight_moment_sum(p, ell, 1).value;
        let beta_c = if s0.is_finite() { -s0.ln() } else { f64::NEG_INFINITY };
        let w_c = if s0.is_finite() && s1.is_finite() { s0 / s1 } else { 0.0 };
        let mut suite = NtSuite {
            p: p.clone(),
            beta,
            ell,
            beta_c,
            w_c,
            z0: ell,
        };
        suite.z0 = suite.free_energy_at_zero()?;
        Ok(suite)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn beta_c(&self) -> f64 {
        self.beta_c
    }

    pub fn w_c(&self) -> f64 {
        self.w_c
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// `z_beta(0)`.
    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn transition(&self) -> Transition {
        if self.beta_c == f64::NEG_INFINITY {
            Transition::None
        } else if self.w_c == 0.0 {
            Transition::Continuous
        } else {
            Transition::Discontinuous
        }
    }

    /// `V(zeta)` for `zeta > ell`.
    pub fn v(&self, zeta: f64) -> f64 {
        weight_sum(&self.p, zeta).value / weight_moment_sum(&self.p, zeta, 1).value
    }

    /// Root of `sum e^{beta - zeta s} p(s) = 1`, or `ell` when none exists.
    fn free_energy_at_zero(&self) -> Result<f64> {
        if self.beta <= self.beta_c {
            return Ok(self.ell);
        }
        let target = -self.beta;
        let f = |zeta: f64| weight_sum(&self.p, zeta).value.ln() - target;
        let mut lo = self.ell;
        let mut step = 1.0;
        let mut hi = self.ell + step;
        while f(hi) > 0.0 {
            lo = hi;
            step *= 2.0;
            hi = self.ell + step;
            if step > 1e9 {
                return Err(Error::Bracket("no root for z_beta(0)".into()));
            }
        }
        Ok(bisect(|z| f(z) > 0.0, lo, hi))
    }

    /// Limit of the mean renewal density `N_t/t`.
    pub fn rho(&self) -> f64 {
        if self.beta < self.beta_c {
            0.0
        } else if self.beta == self.beta_c {
            self.w_c
        } else {
            self.v(self.z0)
        }
    }

    /// `I_beta(w)`.
    pub fn rate(&self, w: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&w) {
            return Ok(f64::INFINITY);
        }
        if w == 1.0 {
            return Ok(-(self.beta + self.p.weight(1).ln()) + self.z0);
        }
        if w == 0.0 {
            return Ok(-self.ell + self.z0);
        }
        if self.beta_c > f64::NEG_INFINITY && w <= self.w_c {
            return Ok(w * (self.beta_c - self.beta) - self.ell + self.z0);
        }
        let zeta = self.solve_v(w)?;
        let ln_s = weight_sum(&self.p, zeta).value.ln();
        Ok(-w * (self.beta + ln_s) - zeta + self.z0)
    }

    /// `zeta > ell` with `V(zeta) = w`, for `w_c < w < 1`.
    fn solve_v(&self, w: f64) -> Result<f64> {
        let below = |x: f64| self.v(self.ell + x) < w;
        let mut hi = 1.0;
        while below(hi) {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Bracket(format!("V(zeta) stays below {w}")));
            }
        }
        let mut lo = hi;
        loop {
            lo *= 0.5;
            if below(lo) {
                break;
            }
            if lo < 1e-300 {
                return Err(Error::Bracket(format!("V(zeta) stays above {w}")));
            }
        }
        // Geometric bisection first, then arithmetic down to adjacent floats.
        while hi / lo > 1.0 + 1e-3 {
            let mid = lo.sqrt() * hi.sqrt();
            if below(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(self.ell + bisect(below, lo, hi))
    }
}

/// Bisects a predicate that holds at `lo` and fails at `hi` down to
/// adjacent floating-point numbers.
fn bisect(pred: impl Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return 0.5 * (lo + hi);
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}
