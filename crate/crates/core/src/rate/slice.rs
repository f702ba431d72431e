//! The transform in `d >= 2` dimensions as a one-dimensional concave
//! maximization over the first dual coordinate.
//!
//! Fixing `k_1` leaves weights `a(s) e^{k_1 f_1(s)}`, which stay in the same
//! family (the tail exponent, power and amplitude absorb the tilt), with the
//! remaining reward components. So
//! `sup_k { w.k - z(k) } = sup_{k_1} { w_1 k_1 + I_{k_1}(w') - z_{k_1}(0) }`
//! where `I_{k_1}` is the `(d-1)`-dimensional rate function of the slice.
//! The outer function is concave in `k_1`; its maximum is bracketed by
//! doubling steps and refined by golden-section search. The slice solvers
//! handle `Theta`, its edges and the boundary of the domain.

use crate::error::{Error, Result};
use crate::model::{Model, RewardSpec, TailSpec, WeightModel};

use super::RateSolver;

/// Largest `|k_1|` tried before the supremum is taken to lie at infinity.
const K1_MAX: f64 = 1e6;

pub(crate) struct SliceOptimum {
    /// `sup_k { w.k - z(k) }`.
    pub value: f64,
    /// Maximizer, absent when the supremum is only approached at infinity.
    pub k: Option<Vec<f64>>,
}

/// Weights `a(s) e^{k1 f_1(s) - c s}` with the remaining rewards, and the
/// shift `c`, so that `z(k1, k') = c + z_slice(k')`. The shift keeps the
/// largest head weight at most one.
fn slice_model(model: &Model, k1: f64) -> Result<(Model, f64)> {
    let w = model.weights();
    let rw = model.rewards();
    let head: Vec<f64> = w
        .head()
        .iter()
        .zip(rw.head())
        .map(|(a, f)| {
            if *a > 0.0 {
                a.ln() + k1 * f[0]
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let c = head
        .iter()
        .enumerate()
        .filter(|(_, x)| x.is_finite())
        .map(|(i, x)| x / (i + 1) as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let c = if c.is_finite() { c } else { 0.0 };
    let head: Vec<f64> = head
        .iter()
        .enumerate()
        .map(|(i, x)| {
            if x.is_finite() {
                (x - c * (i + 1) as f64).exp()
            } else {
                0.0
            }
        })
        .collect();
    let tail = match w.tail() {
        Some(t) => Some(TailSpec::with_shift(
            t.amplitude * (k1 * rw.offset()[0]).exp(),
            t.power - k1 * rw.log_coef()[0],
            t.rate + k1 * rw.slope()[0] - c,
            t.shift,
        )?),
        None => None,
    };
    let rest = RewardSpec::new(
        rw.head().iter().map(|f| f[1..].to_vec()).collect(),
        rw.slope()[1..].to_vec(),
        rw.offset()[1..].to_vec(),
        rw.log_coef()[1..].to_vec(),
    )?;
    Ok((Model::new(WeightModel::new(head, tail)?, rest)?, c))
}

/// `w_1 k1 + sup_{k'} { w'.k' - z(k1, k') }` and the maximizing `k'`.
fn outer(model: &Model, w: &[f64], k1: f64) -> Result<(f64, Option<Vec<f64>>)> {
    let (slice, c) = slice_model(model, k1)?;
    let solver = RateSolver::new(&slice)?;
    let res = solver.rate(&w[1..])?;
    if !res.value.is_finite() {
        return Err(Error::NonConvergence {
            context: "slice outside its domain",
            iterations: 0,
            last: vec![k1],
        });
    }
    Ok((w[0] * k1 + res.value - solver.z0() - c, res.dual_k))
}

pub(crate) fn maximize(model: &Model, w: &[f64]) -> Result<SliceOptimum> {
    let eval = |k1: f64| outer(model, w, k1);
    let noise = |v: f64, k1: f64| 64.0 * f64::EPSILON * (1.0 + v.abs() + (w[0] * k1).abs());
    let (g0, _) = eval(0.0)?;
    let (gp, _) = eval(1.0)?;
    let (gm, _) = eval(-1.0)?;
    let dir = if gp > g0 {
        1.0
    } else if gm > g0 {
        -1.0
    } else {
        return golden(&eval, -1.0, 0.0, 1.0, g0);
    };
    // Expand by doubling until the function falls; stop when it only creeps
    // towards a limit.
    let (mut a, mut b) = (0.0, dir);
    let mut gb = if dir > 0.0 { gp } else { gm };
    let mut quiet = 0;
    loop {
        let c = b + 2.0 * (b - a);
        let gc = match eval(c) {
            Ok((v, _)) => v,
            Err(e) if e.is_numeric() || matches!(e, Error::InvalidModel(_)) => {
                return Ok(SliceOptimum { value: gb, k: None });
            }
            Err(e) => return Err(e),
        };
        if gc <= gb {
            return golden(&eval, a, b, c, gb);
        }
        if gc - gb <= noise(gc, c) {
            quiet += 1;
        } else {
            quiet = 0;
        }
        a = b;
        b = c;
        gb = gc;
        if quiet >= 3 || b.abs() > K1_MAX {
            return Ok(SliceOptimum { value: gb, k: None });
        }
    }
}

/// Golden-section search on `[a, c]` given an interior point `b` whose
/// value `gb` is at least the values at both ends.
fn golden(
    eval: &dyn Fn(f64) -> Result<(f64, Option<Vec<f64>>)>,
    a: f64,
    b: f64,
    c: f64,
    gb: f64,
) -> Result<SliceOptimum> {
    let ratio = 0.5 * (3.0 - 5f64.sqrt());
    let (mut lo, mut hi) = (a.min(c), a.max(c));
    let (mut x, mut gx) = (b, gb);
    while hi - lo > 1e-10 * (1.0 + x.abs()) {
        let y = if x - lo > hi - x {
            x - ratio * (x - lo)
        } else {
            x + ratio * (hi - x)
        };
        let (gy, _) = eval(y)?;
        if gy > gx {
            if y < x {
                hi = x;
            } else {
                lo = x;
            }
            x = y;
            gx = gy;
        } else if y < x {
            lo = y;
        } else {
            hi = y;
        }
    }
    let (value, rest) = eval(x)?;
    let k = rest.map(|r| std::iter::once(x).chain(r).collect());
    Ok(SliceOptimum { value, k })
}
