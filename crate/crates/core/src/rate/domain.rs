//! Effective domain of the rate function through the support function of
//! the ratio set `{f(s)/s}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{dot, Model};

#[derive(Clone, Debug, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

#[derive(Clone, Debug)]
struct TailRatios {
    r: Vec<f64>,
    kappa0: Vec<f64>,
    kappa1: Vec<f64>,
    shift: u64,
    start: u64,
}

/// The closed convex hull of `{f(s)/s : s in support}` together with
/// attainment information. For one-dimensional rewards the hull is an
/// interval whose endpoint flags say whether the extreme ratio is attained.
#[derive(Clone, Debug)]
pub struct DomainDescriptor {
    dim: usize,
    head: Vec<Vec<f64>>,
    tail: Option<TailRatios>,
    pub interval: Option<Interval>,
}

impl DomainDescriptor {
    pub fn new(model: &Model) -> Self {
        let head = model
            .weights()
            .head_support()
            .map(|s| model.reward(s).into_iter().map(|x| x / s as f64).collect())
            .collect();
        let tail = model.weights().tail().map(|t| TailRatios {
            r: model.r().to_vec(),
            kappa0: model.rewards().offset().to_vec(),
            kappa1: model.rewards().log_coef().to_vec(),
            shift: t.shift,
            start: model.head_len() as u64 + 1,
        });
        let mut d = DomainDescriptor {
            dim: model.dim(),
            head,
            tail,
            interval: None,
        };
        if d.dim == 1 {
            let (hi, hi_closed) = d.support_attained(&[1.0]);
            let (nlo, lo_closed) = d.support_attained(&[-1.0]);
            d.interval = Some(Interval {
                lo: -nlo,
                hi,
                lo_closed,
                hi_closed,
            });
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `sup_s u.f(s)/s`.
    pub fn support(&self, u: &[f64]) -> f64 {
        self.support_attained(u).0
    }

    /// Support value and whether some `s` attains it.
    pub fn support_attained(&self, u: &[f64]) -> (f64, bool) {
        let head = self.head.iter().map(|x| dot(u, x)).fold(f64::NEG_INFINITY, f64::max);
        match &self.tail {
            None => (head, true),
            Some(t) => {
                let c0 = dot(u, &t.kappa0);
                let c1 = dot(u, &t.kappa1);
                let g = tail_sup(c0, c1, t.shift, t.start);
                let base = dot(u, &t.r);
                let tail_val = base + g.max(0.0);
                if head >= tail_val {
                    (head, true)
                } else {
                    (tail_val, g >= 0.0)
                }
            }
        }
    }

    /// `w` lies in the closed hull, tested on the coordinate directions and
    /// a fixed family of pseudo-random directions.
    pub fn contains_closure(&self, w: &[f64], tol: f64) -> bool {
        if let Some(iv) = &self.interval {
            return w[0] >= iv.lo - tol && w[0] <= iv.hi + tol;
        }
        self.directions().iter().all(|u| dot(u, w) <= self.support(u) + tol)
    }

    fn directions(&self) -> Vec<Vec<f64>> {
        let d = self.dim;
        let mut out = Vec::new();
        for i in 0..d {
            for sgn in [1.0, -1.0] {
                let mut u = vec![0.0; d];
                u[i] = sgn;
                out.push(u);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..256 {
            let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let n = dot(&u, &u).sqrt();
            if n > 1e-3 {
                out.push(u.into_iter().map(|x| x / n).collect());
            }
        }
        out
    }
}

/// `sup_{s >= start} (c0 + c1 ln(s - h))/s` over integers, `-inf` if the
/// supremum is the limit 0 approached from below.
fn tail_sup(c0: f64, c1: f64, h: u64, start: u64) -> f64 {
    let g = |s: u64| (c0 + c1 * ((s - h) as f64).ln()) / s as f64;
    if c0 == 0.0 && c1 == 0.0 {
        return 0.0;
    }
    let mut best = f64::NEG_INFINITY;
    for s in start..start + 64 {
        let v = g(s);
        best = best.max(v);
    }
    // Geometric grid; the derivative of g changes sign at most once beyond
    // the explicit scan, so refining around the best grid point suffices.
    let mut grid = vec![start + 63];
    let mut x = (start + 63) as f64;
    while x < 1e15 {
        x *= 1.1;
        grid.push(x as u64);
    }
    let mut best_idx = None;
    for (i, &s) in grid.iter().enumerate() {
        let v = g(s);
        if v > best {
            best = v;
            best_idx = Some(i);
        }
    }
    if let Some(i) = best_idx {
        let (mut a, mut b) = (grid[i.saturating_sub(1)], grid[(i + 1).min(grid.len() - 1)]);
        while b - a > 2 {
            let m1 = a + (b - a) / 3;
            let m2 = b - (b - a) / 3;
            if g(m1) < g(m2) {
                a = m1;
            } else {
                b = m2;
            }
        }
        for s in a..=b {
            if g(s) > best {
                best = g(s);
            }
        }
    }
    if best < 0.0 {
        f64::NEG_INFINITY
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RewardSpec, TailSpec, WeightModel};

    #[test]
    fn counting_interval() {
        let w = WeightModel::new(vec![], Some(TailSpec::new(1.0, 0.0, -std::f64::consts::LN_2).unwrap())).unwrap();
        let d = DomainDescriptor::new(&Model::counting(w));
        let iv = d.interval.unwrap();
        assert_eq!((iv.lo, iv.hi), (0.0, 1.0));
        assert!(!iv.lo_closed && iv.hi_closed);
    }

    #[test]
    fn singleton_domains() {
        let m = Model::new(
            WeightModel::new(vec![1.0], None).unwrap(),
            RewardSpec::scalar(vec![3.0], 0.0, 0.0, 0.0).unwrap(),
        )
        .unwrap();
        let iv = DomainDescriptor::new(&m).interval.unwrap();
        assert_eq!((iv.lo, iv.hi), (3.0, 3.0));

        let w = WeightModel::new(vec![], Some(TailSpec::new(1.0, 0.0, -std::f64::consts::LN_2).unwrap())).unwrap();
        let m = Model::new(w, RewardSpec::scalar(vec![], 1.0, 0.0, 0.0).unwrap()).unwrap();
        let iv = DomainDescriptor::new(&m).interval.unwrap();
        assert_eq!((iv.lo, iv.hi), (1.0, 1.0));
    }

    #[test]
    fn log_tail_interior_maximum() {
        // (ln s)/s peaks at s = 3 among integers >= 2.
        assert!((tail_sup(0.0, 1.0, 0, 2) - 3f64.ln() / 3.0).abs() < 1e-15);
        assert_eq!(tail_sup(-1.0, 0.0, 0, 1), f64::NEG_INFINITY);
    }
}
