use serde::Serialize;

use super::{TailSpec, WeightModel};
use crate::error::{Error, Result};
use crate::series::weight_sum;

/// Waiting-time law `p` (possibly defective) with a potential `v`.
///
/// `v` is given on the head and is constant on the tail.
#[derive(Clone, Debug)]
pub struct BaseLaw {
    p: WeightModel,
    v_head: Vec<f64>,
    v_tail: f64,
    mass_at_infinity: f64,
}

impl BaseLaw {
    pub fn new(p: WeightModel, v_head: Vec<f64>, v_tail: f64) -> Result<Self> {
        if v_head.len() != p.head_len() {
            return Err(Error::InvalidModel(format!(
                "potential covers {} head entries but p has {}",
                v_head.len(),
                p.head_len()
            )));
        }
        if !v_head.iter().all(|x| x.is_finite()) || !v_tail.is_finite() {
            return Err(Error::InvalidModel("potential must be finite".into()));
        }
        let total = weight_sum(&p, 0.0);
        if !(total.value <= 1.0 + 1e-12) {
            return Err(Error::InvalidModel(format!(
                "waiting-time law has total mass {} > 1",
                total.value
            )));
        }
        Ok(BaseLaw {
            p,
            v_head,
            v_tail,
            mass_at_infinity: (1.0 - total.value).max(0.0),
        })
    }

    pub fn with_constant_potential(p: WeightModel, v: f64) -> Result<Self> {
        let n = p.head_len();
        Self::new(p, vec![v; n], v)
    }

    /// Same waiting-time law under a different potential.
    pub fn with_potential(&self, v_head: Vec<f64>, v_tail: f64) -> Result<Self> {
        Self::new(self.p.clone(), v_head, v_tail)
    }

    pub fn p(&self) -> &WeightModel {
        &self.p
    }

    pub fn potential(&self, s: u64) -> f64 {
        self.v_head.get(s as usize - 1).copied().unwrap_or(self.v_tail)
    }

    pub fn v_head(&self) -> &[f64] {
        &self.v_head
    }

    pub fn v_tail(&self) -> f64 {
        self.v_tail
    }

    pub fn mass_at_infinity(&self) -> f64 {
        self.mass_at_infinity
    }

    /// `sum_s p(s)` over finite waiting times.
    pub fn finite_mass(&self) -> f64 {
        1.0 - self.mass_at_infinity
    }

    /// Potential is the same constant everywhere.
    pub fn constant_potential(&self) -> Option<f64> {
        let v = self.v_tail;
        self.v_head.iter().all(|&x| x == v).then_some(v)
    }

    /// Boltzmann weights `e^{v(s)} p(s)`.
    pub fn weights(&self) -> WeightModel {
        let head = self
            .p
            .head()
            .iter()
            .zip(&self.v_head)
            .map(|(p, v)| if *p > 0.0 { p * v.exp() } else { 0.0 })
            .collect();
        let tail = self.p.tail().map(|t| TailSpec {
            amplitude: t.amplitude * self.v_tail.exp(),
            ..t.clone()
        });
        WeightModel::new(head, tail).expect("tilting preserves validity")
    }
}

/// Result of normalizing raw weights `b(s)` into `p(s) = b(s) e^{-eta s}`.
#[derive(Clone, Debug, Serialize)]
pub struct Normalization {
    pub eta: f64,
    #[serde(skip)]
    pub base: BaseLaw,
}

/// Finds `eta` such that `p(s) = b(s) e^{-eta s}` is a (possibly defective)
/// probability law.
///
/// With a tail of exponential rate `eta_o`, `eta >= eta_o` is required; if
/// `sum_s b(s) e^{-eta_o s} < 1` no root exists and the deficit becomes the
/// mass at infinity. The returned base law carries a zero potential.
pub fn eta_normalize(raw: &WeightModel) -> Result<Normalization> {
    let sum = |eta: f64| weight_sum(raw, eta).value;
    let eta = match raw.tail() {
        Some(t) => {
            let lo = t.rate;
            if sum(lo) < 1.0 {
                lo
            } else {
                let mut step = 1.0;
                let mut hi = lo + step;
                while sum(hi) >= 1.0 {
                    step *= 2.0;
                    hi = lo + step;
                    if step > 1e6 {
                        return Err(Error::Divergent("normalization sum stays above 1".into()));
                    }
                }
                bisect_decreasing(&sum, lo, hi)
            }
        }
        None => {
            let (mut lo, mut hi) = (-1.0, 1.0);
            while sum(lo) < 1.0 {
                lo *= 2.0;
                if lo < -1e6 {
                    return Err(Error::Divergent("normalization sum stays below 1".into()));
                }
            }
            while sum(hi) >= 1.0 {
                hi *= 2.0;
                if hi > 1e6 {
                    return Err(Error::Divergent("normalization sum stays above 1".into()));
                }
            }
            bisect_decreasing(&sum, lo, hi)
        }
    };
    let p = raw.exp_tilted(eta);
    let base = BaseLaw::with_constant_potential(p, 0.0)?;
    Ok(Normalization { eta, base })
}

/// Root of a decreasing function `g - 1` on `[lo, hi]` with `g(lo) >= 1 > g(hi)`,
/// bisected to adjacent floating-point numbers.
fn bisect_decreasing(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever endpoint leaves the smaller normalization defect.
    if (g(lo) - 1.0).abs() <= (g(hi) - 1.0).abs() {
        lo
    } else {
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_tail(scale: f64) -> WeightModel {
        WeightModel::new(vec![], Some(TailSpec::new(scale, 2.5, 0.0).unwrap())).unwrap()
    }

    #[test]
    fn already_normalized_geometric() {
        let w = WeightModel::new(vec![], Some(TailSpec::new(1.0, 0.0, -(2f64.ln())).unwrap())).unwrap();
        let n = eta_normalize(&w).unwrap();
        assert!(n.eta.abs() < 1e-14, "{}", n.eta);
        assert!(n.base.mass_at_infinity() < 1e-12);
    }

    #[test]
    fn zeta_weights_need_positive_eta() {
        let n = eta_normalize(&power_tail(1.0)).unwrap();
        // Independent high-precision value for sum_s s^{-5/2} e^{-eta s} = 1.
        assert!((n.eta - 0.2011099522041121).abs() < 1e-12, "{}", n.eta);
        assert!(n.base.mass_at_infinity() < 1e-12);
    }

    #[test]
    fn defective_law_keeps_mass_at_infinity() {
        let n = eta_normalize(&power_tail(0.1)).unwrap();
        assert_eq!(n.eta, 0.0);
        let expected = 1.0 - 0.1 * 1.341487257250917;
        assert!((n.base.mass_at_infinity() - expected).abs() < 1e-12);
        assert!((n.base.finite_mass() + n.base.mass_at_infinity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn head_only_normalization() {
        let w = WeightModel::new(vec![1.0, 1.0], None).unwrap();
        let n = eta_normalize(&w).unwrap();
        // x + x^2 = 1 with x = e^{-eta}.
        let x = (5f64.sqrt() - 1.0) / 2.0;
        assert!((n.eta + x.ln()).abs() < 1e-14);
    }
}
