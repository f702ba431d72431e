//! Tilted series `G(k, zeta) = sum_s e^{k.f(s)} a(s) e^{-zeta s}` and their
//! moments, evaluated with a certified truncation error.
//!
//! Head terms are summed directly. The tail reduces to finitely many sums
//! of the form `sum_{m >= m0} m^e (ln m)^q e^{-lambda m}`, which are summed
//! directly when `e^{-lambda} <= 0.99` and with an Euler-Maclaurin tail
//! otherwise. Divergence is decided from the exponents alone, so an infinite
//! value always reflects a provably divergent series.

use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{dot, Model, WeightModel};

/// Below this decay rate the geometric ratio exceeds 0.99 and summation
/// switches to Euler-Maclaurin.
const DIRECT_MIN_DECAY: f64 = 0.010_050_335_853_501_44; // -ln(0.99)

/// Cut-off index for the explicit part of an Euler-Maclaurin sum.
const EM_CUTOFF: u64 = 256;

/// Tolerance shared by every test of `theta(k) = 1`.
pub const THETA_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub abs_error: f64,
    pub terms_used: u64,
}

impl SeriesValue {
    pub fn infinite(sign: f64) -> Self {
        SeriesValue {
            value: sign.signum() * f64::INFINITY,
            abs_error: 0.0,
            terms_used: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// Compensated (Neumaier) summation.
#[derive(Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if !t.is_finite() {
            self.sum = t;
            return;
        }
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        if self.sum.is_finite() {
            self.sum + self.comp
        } else {
            self.sum
        }
    }
}

/// `e^{scale} sum_{m >= start} m^e (ln m)^q e^{-decay m}` for `start >= 1`.
///
/// The scale is folded into every exponent so that large prefactors and
/// large intermediate terms do not overflow.
pub fn power_log_sum(e: f64, q: u32, decay: f64, start: u64, scale: f64) -> SeriesValue {
    assert!(start >= 1);
    if decay < 0.0 || (decay == 0.0 && e >= -1.0) {
        return SeriesValue::infinite(1.0);
    }
    // Sum relative to the largest term so that only the final product can
    // overflow or underflow.
    let s0 = start as f64;
    let m_peak = if decay > 0.0 && e > 0.0 {
        (e / decay).max(s0)
    } else {
        s0
    };
    let peak = scale + e * m_peak.ln() - decay * m_peak;
    let inner = if decay >= DIRECT_MIN_DECAY {
        direct_sum(e, q, decay, start, scale - peak)
    } else {
        euler_maclaurin_sum(e, q, decay, start, scale - peak)
    };
    let lift = |x: f64| if x == 0.0 { 0.0 } else { (x.ln() + peak).exp() };
    SeriesValue {
        value: lift(inner.value),
        abs_error: lift(inner.abs_error),
        terms_used: inner.terms_used,
    }
}

#[inline]
fn term(e: f64, q: u32, decay: f64, m: u64, scale: f64) -> f64 {
    let mf = m as f64;
    let l = mf.ln();
    if q > 0 && m == 1 {
        return 0.0;
    }
    (scale + e * l - decay * mf).exp() * l.powi(q as i32)
}

fn direct_sum(e: f64, q: u32, decay: f64, start: u64, scale: f64) -> SeriesValue {
    let x = (-decay).exp();
    let mut acc = Neumaier::default();
    let mut m = start;
    loop {
        let t = term(e, q, decay, m, scale);
        acc.add(t);
        if m >= 2 {
            // Every later ratio term(m+1)/term(m) is at most `ratio`.
            let mf = m as f64;
            let ratio = (1.0 + 1.0 / mf).powf(e).max(1.0) * ((mf + 1.0).ln() / mf.ln()).powi(q as i32) * x;
            if ratio < 1.0 {
                let rem = t * ratio / (1.0 - ratio);
                if rem <= 1e-17 * acc.value().abs() || rem == 0.0 {
                    let v = acc.value();
                    return SeriesValue {
                        value: v,
                        abs_error: rem + 4.0 * f64::EPSILON * v.abs(),
                        terms_used: m - start + 1,
                    };
                }
            }
        }
        m += 1;
    }
}

fn bernoulli_over_factorial() -> &'static [f64; 10] {
    // B_{2j} / (2j)! for j = 1..=10.
    static B: OnceLock<[f64; 10]> = OnceLock::new();
    B.get_or_init(|| {
        let b = [
            1.0 / 6.0,
            -1.0 / 30.0,
            1.0 / 42.0,
            -1.0 / 30.0,
            5.0 / 66.0,
            -691.0 / 2730.0,
            7.0 / 6.0,
            -3617.0 / 510.0,
            43867.0 / 798.0,
            -174611.0 / 330.0,
        ];
        let mut out = [0.0; 10];
        let mut fact = 1.0;
        for j in 1..=10 {
            fact *= ((2 * j - 1) * (2 * j)) as f64;
            out[j - 1] = b[j - 1] / fact;
        }
        out
    })
}

fn euler_maclaurin_sum(e: f64, q: u32, decay: f64, start: u64, scale: f64) -> SeriesValue {
    let n = start.max(EM_CUTOFF);
    let mut acc = Neumaier::default();
    for m in start..n {
        acc.add(term(e, q, decay, m, scale));
    }
    let (integral, quad_err) = tail_integral(e, q, decay, n, scale);
    acc.add(integral);
    acc.add(0.5 * term(e, q, decay, n, scale));

    // Derivatives of g(m) = m^e (ln m)^q e^{-decay m} as sums of
    // coef[i][j] m^{e-i} (ln m)^j e^{-decay m}.
    let qn = q as usize + 1;
    let depth = 2 * bernoulli_over_factorial().len();
    let mut coef = vec![vec![0.0; qn]; depth + 1];
    coef[0][q as usize] = 1.0;
    let nf = n as f64;
    let ln_n = nf.ln();
    let eval = |c: &Vec<Vec<f64>>| -> f64 {
        let mut s = Neumaier::default();
        for (i, row) in c.iter().enumerate() {
            for (j, &cij) in row.iter().enumerate() {
                if cij != 0.0 {
                    s.add(cij * (scale + (e - i as f64) * ln_n - decay * nf).exp() * ln_n.powi(j as i32));
                }
            }
        }
        s.value()
    };
    let differentiate = |c: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; qn]; depth + 1];
        for i in 0..depth {
            for j in 0..qn {
                let cij = c[i][j];
                if cij == 0.0 {
                    continue;
                }
                out[i + 1][j] += cij * (e - i as f64);
                if j > 0 {
                    out[i + 1][j - 1] += cij * j as f64;
                }
                out[i][j] -= decay * cij;
            }
        }
        out
    };

    let mut last = f64::INFINITY;
    let mut err = 0.0;
    let mut deriv = coef;
    for (idx, &b) in bernoulli_over_factorial().iter().enumerate() {
        // Odd derivative 2j-1.
        deriv = differentiate(&deriv);
        let corr = -b * eval(&deriv);
        if corr.abs() > last.abs() {
            // Asymptotic series starts growing: stop before it does harm.
            err = last.abs();
            break;
        }
        acc.add(corr);
        last = corr;
        err = corr.abs();
        if corr.abs() <= 1e-18 * acc.value().abs() {
            break;
        }
        if idx + 1 < bernoulli_over_factorial().len() {
            deriv = differentiate(&deriv);
        }
    }
    let v = acc.value();
    SeriesValue {
        value: v,
        abs_error: err + quad_err + 8.0 * f64::EPSILON * v.abs(),
        terms_used: n - start + 1,
    }
}

fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn gl_rules() -> &'static (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    static RULES: OnceLock<(Vec<(f64, f64)>, Vec<(f64, f64)>)> = OnceLock::new();
    RULES.get_or_init(|| (gauss_legendre(20), gauss_legendre(10)))
}

/// `e^{scale} int_n^inf x^e (ln x)^q e^{-decay x} dx` with an error estimate.
fn tail_integral(e: f64, q: u32, decay: f64, n: u64, scale: f64) -> (f64, f64) {
    let ln_n = (n as f64).ln();
    if decay == 0.0 {
        let beta = -(e + 1.0);
        let base = (scale - beta * ln_n).exp();
        let mut i_prev = base / beta;
        for j in 1..=q {
            i_prev = base * ln_n.powi(j as i32) / beta + (j as f64 / beta) * i_prev;
        }
        return (i_prev, 4.0 * f64::EPSILON * i_prev.abs());
    }
    // x = n e^u.
    let nf = n as f64;
    let log_f = |u: f64| scale + (e + 1.0) * (ln_n + u) - decay * nf * u.exp();
    let f = |u: f64| log_f(u).exp() * (ln_n + u).powi(q as i32);
    let (hi, lo) = gl_rules();
    let width = 0.5;
    let mut total = Neumaier::default();
    let mut err = 0.0;
    for panel in 0..20_000 {
        let a = panel as f64 * width;
        let mid = a + 0.5 * width;
        let fine: f64 = hi.iter().map(|(x, w)| w * f(mid + 0.5 * width * x)).sum::<f64>() * 0.5 * width;
        let coarse: f64 = lo.iter().map(|(x, w)| w * f(mid + 0.5 * width * x)).sum::<f64>() * 0.5 * width;
        total.add(fine);
        err += (fine - coarse).abs();
        let b = a + width;
        let slope = (e + 1.0) + q as f64 / (ln_n + b) - decay * nf * b.exp();
        if slope < 0.0 && fine <= 1e-19 * total.value().abs() {
            break;
        }
    }
    (total.value(), err)
}

/// `Li_nu(x) = sum_{s>=1} s^{-nu} x^s` for `x` in `[0, 1]`.
pub fn polylog(order: f64, x: f64) -> Result<SeriesValue> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("polylog argument {x} outside [0, 1]")));
    }
    if x == 0.0 {
        return Ok(SeriesValue {
            value: 0.0,
            abs_error: 0.0,
            terms_used: 0,
        });
    }
    Ok(power_log_sum(-order, 0, -x.ln(), 1, 0.0))
}

/// `sum_s a(s) e^{-zeta s}` for bare weights.
pub fn weight_sum(w: &WeightModel, zeta: f64) -> SeriesValue {
    let mut acc = Neumaier::default();
    let mut abs = 0.0;
    for s in w.head_support() {
        let t = (w.head()[s as usize - 1].ln() - zeta * s as f64).exp();
        acc.add(t);
        abs += t;
    }
    let mut err = 4.0 * f64::EPSILON * abs;
    let mut terms = w.head_len() as u64;
    if let Some(t) = w.tail() {
        let lambda = zeta - t.rate;
        let h = t.shift as f64;
        let start = w.head_len() as u64 + 1 - t.shift;
        let v = power_log_sum(-t.power, 0, lambda, start, t.amplitude.ln() - lambda * h);
        if !v.is_finite() {
            return v;
        }
        acc.add(v.value);
        err += v.abs_error;
        terms += v.terms_used;
    }
    SeriesValue {
        value: acc.value(),
        abs_error: err,
        terms_used: terms,
    }
}

/// `sum_s s^n a(s) e^{-zeta s}` for bare weights.
pub fn weight_moment_sum(w: &WeightModel, zeta: f64, n: u32) -> SeriesValue {
    let mut acc = Neumaier::default();
    let mut abs = 0.0;
    for s in w.head_support() {
        let t = (w.head()[s as usize - 1].ln() - zeta * s as f64).exp() * (s as f64).powi(n as i32);
        acc.add(t);
        abs += t;
    }
    let mut err = 4.0 * f64::EPSILON * abs;
    let mut terms = w.head_len() as u64;
    if let Some(t) = w.tail() {
        let lambda = zeta - t.rate;
        let h = t.shift as f64;
        let start = w.head_len() as u64 + 1 - t.shift;
        let scale = t.amplitude.ln() - lambda * h;
        // s^n = (m + h)^n expanded binomially.
        let mut binom = 1.0;
        for j in (0..=n).rev() {
            let c = binom * h.powi((n - j) as i32);
            binom = binom * j as f64 / (n - j + 1) as f64;
            if c == 0.0 {
                continue;
            }
            let v = power_log_sum(-t.power + j as f64, 0, lambda, start, scale);
            if !v.is_finite() {
                return v;
            }
            acc.add(c * v.value);
            err += c * v.abs_error;
            terms = terms.max(w.head_len() as u64 + v.terms_used);
        }
    }
    SeriesValue {
        value: acc.value(),
        abs_error: err,
        terms_used: terms,
    }
}

/// Affine factor `u.f(s) + c s` multiplying the terms of a moment sum.
#[derive(Clone, Debug)]
pub(crate) struct Factor {
    pub u: Vec<f64>,
    pub c: f64,
}

impl Factor {
    pub fn reward(i: usize, d: usize) -> Self {
        let mut u = vec![0.0; d];
        u[i] = 1.0;
        Factor { u, c: 0.0 }
    }

    pub fn time(d: usize) -> Self {
        Factor {
            u: vec![0.0; d],
            c: 1.0,
        }
    }
}

/// Where the series is evaluated.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Abscissa {
    Zeta(f64),
    /// `zeta = k.r + ell + lambda`; only meaningful with a tail.
    AboveBoundary(f64),
}

/// `sum_s prod_j (u_j.f(s) + c_j s) e^{k.f(s)} a(s) e^{-zeta s}`.
pub(crate) fn tilted(model: &Model, k: &[f64], at: Abscissa, factors: &[Factor]) -> SeriesValue {
    let d = model.dim();
    debug_assert_eq!(k.len(), d);
    let tail = model.weights().tail();
    let boundary = tail.map(|t| dot(k, model.r()) + t.rate);
    let (zeta, lambda) = match (at, boundary) {
        (Abscissa::Zeta(z), Some(b)) => (z, z - b),
        (Abscissa::Zeta(z), None) => (z, f64::NAN),
        (Abscissa::AboveBoundary(l), Some(b)) => (b + l, l),
        (Abscissa::AboveBoundary(_), None) => return SeriesValue::infinite(1.0),
    };

    let mut acc = Neumaier::default();
    let mut abs = 0.0;
    let mut f = vec![0.0; d];
    for s in model.weights().head_support() {
        model.reward_into(s, &mut f);
        let mut t = (model.log_weight(s) + dot(k, &f) - zeta * s as f64).exp();
        for fac in factors {
            t *= dot(&fac.u, &f) + fac.c * s as f64;
        }
        acc.add(t);
        abs += t.abs();
    }
    let mut err = 4.0 * f64::EPSILON * abs;
    let mut terms = model.head_len() as u64;

    if let Some(t) = tail {
        let rw = model.rewards();
        let h = t.shift as f64;
        // Polynomial in (m, ln m) from the affine factors at s = m + h.
        let mut poly = vec![vec![1.0]];
        for fac in factors {
            let alpha = dot(&fac.u, model.r()) + fac.c;
            let beta = alpha * h + dot(&fac.u, rw.offset());
            let kappa = dot(&fac.u, rw.log_coef());
            let p_deg = poly.len();
            let q_deg = poly[0].len();
            let mut next = vec![vec![0.0; q_deg + 1]; p_deg + 1];
            for p in 0..p_deg {
                for q in 0..q_deg {
                    let c = poly[p][q];
                    if c == 0.0 {
                        continue;
                    }
                    next[p + 1][q] += c * alpha;
                    next[p][q] += c * beta;
                    next[p][q + 1] += c * kappa;
                }
            }
            poly = next;
        }
        let e0 = -t.power + dot(k, rw.log_coef());
        let scale = t.amplitude.ln() + dot(k, rw.offset()) - lambda * h;
        let start = model.head_len() as u64 + 1 - t.shift;
        // Divergent components decide the sign through the dominant one.
        let mut dominant: Option<(usize, usize, f64)> = None;
        for (p, row) in poly.iter().enumerate() {
            for (q, &c) in row.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let v = power_log_sum(e0 + p as f64, q as u32, lambda, start, scale);
                if !v.is_finite() {
                    if dominant.is_none_or(|(dp, dq, _)| (p, q) > (dp, dq)) {
                        dominant = Some((p, q, c));
                    }
                    continue;
                }
                acc.add(c * v.value);
                err += c.abs() * v.abs_error;
                terms = terms.max(model.head_len() as u64 + v.terms_used);
            }
        }
        if let Some((_, _, c)) = dominant {
            return SeriesValue::infinite(c);
        }
    }
    SeriesValue {
        value: acc.value(),
        abs_error: err,
        terms_used: terms,
    }
}

/// `G(k, zeta)`.
pub fn grand_sum(model: &Model, k: &[f64], zeta: f64) -> SeriesValue {
    tilted(model, k, Abscissa::Zeta(zeta), &[])
}

/// `sum_s prod_i f_i(s)^{m_i} s^n e^{k.f(s)} a(s) e^{-zeta s}`.
pub fn grand_moment(model: &Model, k: &[f64], zeta: f64, m: &[u32], n: u32) -> SeriesValue {
    let d = model.dim();
    let mut factors = Vec::new();
    for (i, &mi) in m.iter().enumerate() {
        factors.extend(std::iter::repeat_n(Factor::reward(i, d), mi as usize));
    }
    factors.extend(std::iter::repeat_n(Factor::time(d), n as usize));
    tilted(model, k, Abscissa::Zeta(zeta), &factors)
}

/// `theta(k) = G(k, k.r + ell)`, infinite for finite support.
pub fn theta(model: &Model, k: &[f64]) -> SeriesValue {
    tilted(model, k, Abscissa::AboveBoundary(0.0), &[])
}

pub fn in_theta(model: &Model, k: &[f64]) -> bool {
    theta(model, k).value <= 1.0 + THETA_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RewardSpec, TailSpec};

    const ZETA_5_2: f64 = 1.341487257250917;
    const ZETA_3_2: f64 = 2.612375348685488;

    fn geometric() -> Model {
        let w = WeightModel::new(vec![], Some(TailSpec::new(1.0, 0.0, -(2f64.ln())).unwrap())).unwrap();
        Model::counting(w)
    }

    fn zeta_model(beta: f64) -> Model {
        let w = WeightModel::new(vec![], Some(TailSpec::new(beta.exp() / ZETA_5_2, 2.5, 0.0).unwrap())).unwrap();
        Model::counting(w)
    }

    #[test]
    fn polylog_values() {
        assert!((polylog(0.0, 0.5).unwrap().value - 1.0).abs() < 1e-15);
        assert!((polylog(-1.0, 0.5).unwrap().value - 2.0).abs() < 1e-14);
        let z = polylog(2.5, 1.0).unwrap();
        assert!((z.value - ZETA_5_2).abs() < 1e-13, "{:?}", z);
        assert!((polylog(1.5, 1.0).unwrap().value - ZETA_3_2).abs() < 1e-12);
        assert_eq!(polylog(1.0, 1.0).unwrap().value, f64::INFINITY);
        assert!(polylog(2.0, 1.5).is_err());
        assert!(polylog(2.0, -0.1).is_err());
    }

    #[test]
    fn polylog_near_one_matches_slow_direct_sum() {
        // x = 0.999 lies in the Euler-Maclaurin regime.
        let x: f64 = 0.999;
        let mut direct = Neumaier::default();
        for s in 1..200_000u64 {
            direct.add((s as f64).powf(-1.5) * x.powi(s as i32));
        }
        let v = polylog(1.5, x).unwrap();
        assert!(
            (v.value - direct.value()).abs() < 1e-11,
            "{} vs {}",
            v.value,
            direct.value()
        );
    }

    #[test]
    fn log_power_sums() {
        // sum ln(m) m^{-3} = -zeta'(3).
        let v = power_log_sum(-3.0, 1, 0.0, 1, 0.0);
        assert!((v.value - 0.19812624288563685).abs() < 1e-13, "{:?}", v);
    }

    #[test]
    fn geometric_sums() {
        let m = geometric();
        assert!((grand_sum(&m, &[0.0], 0.0).value - 1.0).abs() < 1e-15);
        let z1 = ((1.0 + 1f64.exp()) / 2.0).ln();
        assert!((grand_sum(&m, &[1.0], z1).value - 1.0).abs() < 1e-14);
        assert!((grand_moment(&m, &[0.0], 0.0, &[0], 1).value - 2.0).abs() < 1e-14);
        assert_eq!(theta(&m, &[0.0]).value, f64::INFINITY);
        assert!(!in_theta(&m, &[0.0]));
    }

    #[test]
    fn zeta_model_moment_ratio() {
        let m = zeta_model(0.0);
        let v = grand_moment(&m, &[0.0], 0.0, &[0], 1).value;
        assert!((v - 1.947372466316957).abs() < 1e-12, "{v}");
        // theta(k) = e^{k + beta - beta_c} with beta_c = 0.
        for &(k, beta) in &[(0.0, 0.0), (-0.3, 0.1), (0.2, -0.5)] {
            let th = theta(&zeta_model(beta), &[k]).value;
            assert!((th - (k + beta).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn finite_support_theta_is_infinite() {
        let w = WeightModel::new(vec![0.5, 0.5], None).unwrap();
        let m = Model::counting(w);
        assert_eq!(theta(&m, &[3.0]).value, f64::INFINITY);
    }

    #[test]
    fn divergence_signs() {
        let w = WeightModel::new(vec![], Some(TailSpec::new(1.0, 1.0, 0.0).unwrap())).unwrap();
        let f = RewardSpec::scalar(vec![], -1.0, 0.0, 0.0).unwrap();
        let m = Model::new(w, f).unwrap();
        assert_eq!(grand_sum(&m, &[0.0], 0.0).value, f64::INFINITY);
        // sum of -s * s^{-1}: dominant coefficient negative.
        assert_eq!(grand_moment(&m, &[0.0], 0.0, &[1], 0).value, f64::NEG_INFINITY);
    }
}
