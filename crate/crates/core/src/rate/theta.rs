//! Geometry of the level set `Theta = {k : theta(k) <= 1}`.

use nalgebra::{DMatrix, DVector};

use crate::model::{dot, Model};
use crate::series::{tilted, Abscissa, Factor, THETA_TOL};

fn theta(model: &Model, k: &[f64]) -> f64 {
    tilted(model, k, Abscissa::AboveBoundary(0.0), &[]).value
}

/// Factor `f_i(s) - r_i s`.
fn centred(model: &Model, i: usize) -> Factor {
    let d = model.dim();
    let mut u = vec![0.0; d];
    u[i] = 1.0;
    Factor { u, c: -model.r()[i] }
}

/// Some point of `Theta`, or `None` if the level set is empty.
pub(crate) fn find_point(model: &Model) -> Option<Vec<f64>> {
    if !model.ell().is_finite() {
        return None;
    }
    let d = model.dim();
    let mut k = vec![0.0; d];
    let mut th = theta(model, &k);
    if !th.is_finite() {
        // Move to where the logarithmic tail exponent makes theta finite.
        let t = model.weights().tail()?;
        let kap = model.rewards().log_coef();
        let n2 = dot(kap, kap);
        if n2 == 0.0 {
            return None;
        }
        k = kap.iter().map(|x| x * (t.power - 2.0) / n2).collect();
        th = theta(model, &k);
        if !th.is_finite() {
            return None;
        }
    }
    // Damped Newton on ln theta, which is convex.
    for _ in 0..200 {
        if th <= 1.0 + THETA_TOL {
            return Some(k);
        }
        let LogTheta { grad: g, hess, .. } = log_theta(model, &k)?;
        if g.norm() < 1e-13 {
            return None;
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -g.clone(),
        };
        let ln_th = th.ln();
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = k.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let tc = theta(model, &cand);
            if tc.is_finite() && tc.ln() <= ln_th + 1e-4 * t * g.dot(&step) {
                k = cand;
                th = tc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return None;
        }
    }
    None
}

/// Gradient and Hessian of `ln theta`.
pub(crate) struct LogTheta {
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub(crate) fn log_theta(model: &Model, k: &[f64]) -> Option<LogTheta> {
    let d = model.dim();
    let at = Abscissa::AboveBoundary(0.0);
    let th = theta(model, k);
    if !th.is_finite() {
        return None;
    }
    let grad: Vec<f64> = (0..d)
        .map(|i| tilted(model, k, at, &[centred(model, i)]).value / th)
        .collect();
    if grad.iter().any(|g| !g.is_finite()) {
        return None;
    }
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let v = tilted(model, k, at, &[centred(model, i), centred(model, j)]).value / th - grad[i] * grad[j];
            if !v.is_finite() {
                return None;
            }
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Some(LogTheta {
        grad: DVector::from_vec(grad),
        hess,
    })
}

/// `Theta` for one-dimensional rewards: an interval `[left, right]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ThetaInterval {
    pub left: f64,
    pub right: f64,
    pub inside: f64,
}

/// `f(s) - r s` takes a single value on the whole support.
fn constant_offset(model: &Model) -> Option<f64> {
    let r = model.r()[0];
    let mut c: Option<f64> = None;
    for s in model.weights().head_support() {
        let v = model.reward(s)[0] - r * s as f64;
        match c {
            None => c = Some(v),
            Some(x) if x == v => {}
            _ => return None,
        }
    }
    let rw = model.rewards();
    if model.has_tail() {
        if rw.log_coef()[0] != 0.0 {
            return None;
        }
        let v = rw.offset()[0];
        match c {
            None => c = Some(v),
            Some(x) if x == v => {}
            _ => return None,
        }
    }
    c
}

pub(crate) fn interval_1d(model: &Model) -> Option<ThetaInterval> {
    let k_in = find_point(model)?[0];
    let th_in = theta(model, &[k_in]);
    if let Some(c) = constant_offset(model) {
        // theta(k) = e^{(k - k_in) c} theta(k_in).
        let edge = k_in - th_in.ln() / c;
        return Some(match c.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => ThetaInterval {
                left: f64::NEG_INFINITY,
                right: edge.max(k_in),
                inside: k_in,
            },
            Some(std::cmp::Ordering::Less) => ThetaInterval {
                left: edge.min(k_in),
                right: f64::INFINITY,
                inside: k_in,
            },
            _ => ThetaInterval {
                left: f64::NEG_INFINITY,
                right: f64::INFINITY,
                inside: k_in,
            },
        });
    }
    let member = |k: f64| theta(model, &[k]) <= 1.0 + THETA_TOL;
    let edge = |dir: f64| -> f64 {
        let mut step = 1.0;
        let mut inside = k_in;
        loop {
            let k = k_in + dir * step;
            if !member(k) {
                let (mut a, mut b) = (inside, k);
                loop {
                    let mid = 0.5 * (a + b);
                    if mid == a || mid == b {
                        return a;
                    }
                    if member(mid) {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
            }
            inside = k;
            step *= 2.0;
            if step > 1e8 {
                return dir * f64::INFINITY;
            }
        }
    };
    Some(ThetaInterval {
        left: edge(-1.0),
        right: edge(1.0),
        inside: k_in,
    })
}
