//! The free energy `z(k)`, its gradient `nu(k)` and Hessian `J(k)`,
//! subdifferentials, and the criticality test.
//!
//! Off the level set `Theta = {k : theta(k) <= 1}` the free energy is the
//! unique root of `G(k, zeta) = 1`; on `Theta` it equals `k.r + ell`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{dot, norm, Model};
use crate::series::{tilted, Abscissa, Factor, SeriesValue, THETA_TOL};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Subdifferential {
    Point { w: Vec<f64> },
    Segment { from: Vec<f64>, to: Vec<f64> },
}

impl Subdifferential {
    /// Whether `w` lies in the set, up to `tol` in the Euclidean norm.
    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        match self {
            Subdifferential::Point { w: p } => dist(p, w) <= tol,
            Subdifferential::Segment { from, to } => {
                let dir: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
                let len2 = dot(&dir, &dir);
                let rel: Vec<f64> = w.iter().zip(from).map(|(a, b)| a - b).collect();
                let t = if len2 > 0.0 {
                    (dot(&rel, &dir) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let p: Vec<f64> = from.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                dist(&p, w) <= tol
            }
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct FreeEnergyPoint {
    pub k: Vec<f64>,
    pub z: f64,
    pub theta: f64,
    pub in_theta: bool,
    pub nu: Option<Vec<f64>>,
    pub hessian: Option<Vec<Vec<f64>>>,
    pub subdiff: Subdifferential,
}

/// `z(k)` with the raw level-set information; the cheap core used by every
/// other routine.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Solved {
    pub z: f64,
    pub theta: f64,
    pub in_theta: bool,
    /// `z - (k.r + ell)` when the tail is present, kept separately for precision.
    pub gap: Option<f64>,
}

pub(crate) fn solve(model: &Model, k: &[f64]) -> Result<Solved> {
    let ell = model.ell();
    let boundary = dot(k, model.r()) + ell;
    let th = if ell.is_finite() {
        tilted(model, k, Abscissa::AboveBoundary(0.0), &[]).value
    } else {
        f64::INFINITY
    };
    if th <= 1.0 + THETA_TOL {
        return Ok(Solved {
            z: boundary,
            theta: th,
            in_theta: true,
            gap: model.has_tail().then_some(0.0),
        });
    }
    let (z, gap) = root(model, k)?;
    Ok(Solved {
        z,
        theta: th,
        in_theta: false,
        gap,
    })
}

pub(crate) fn z_value(model: &Model, k: &[f64]) -> Result<f64> {
    Ok(solve(model, k)?.z)
}

/// `z(k)`.
pub fn z(model: &Model, k: &[f64]) -> Result<f64> {
    z_value(model, k)
}

fn g(model: &Model, k: &[f64], zeta: f64) -> f64 {
    tilted(model, k, Abscissa::Zeta(zeta), &[]).value
}

fn root(model: &Model, k: &[f64]) -> Result<(f64, Option<f64>)> {
    let hi_zeta = model.z_o() + model.m_bound() * norm(k) + std::f64::consts::LN_2;
    if !(g(model, k, hi_zeta) <= 1.0 + 1e-12) {
        return Err(Error::Bracket(format!(
            "G(k, {hi_zeta}) > 1 at the a priori upper bound for k = {k:?}"
        )));
    }
    let time = [Factor::time(model.dim())];
    if model.has_tail() {
        // Work with the offset above the boundary k.r + ell, which can be far
        // smaller than the rounding unit of zeta itself.
        let boundary = dot(k, model.r()) + model.ell();
        let eval = |x: f64| {
            (
                tilted(model, k, Abscissa::AboveBoundary(x), &[]).value,
                tilted(model, k, Abscissa::AboveBoundary(x), &time).value,
            )
        };
        let mut hi = (hi_zeta - boundary).max(f64::MIN_POSITIVE);
        let mut lo = hi / 1024.0;
        while eval(lo).0 < 1.0 {
            hi = lo;
            lo /= 1024.0;
            if lo < 1e-300 {
                return Ok((boundary + lo, Some(lo)));
            }
        }
        while hi / lo > 1.0 + 1e-4 {
            let mid = lo.sqrt() * hi.sqrt();
            if eval(mid).0 > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = newton(&eval, lo, hi)?;
        Ok((boundary + x, Some(x)))
    } else {
        let eval = |z: f64| (g(model, k, z), tilted(model, k, Abscissa::Zeta(z), &time).value);
        // Every head term is at most 1 once zeta exceeds this.
        let mut f = vec![0.0; model.dim()];
        let mut lo = f64::NEG_INFINITY;
        for s in model.weights().head_support() {
            model.reward_into(s, &mut f);
            lo = lo.max((model.log_weight(s) + dot(k, &f)) / s as f64);
        }
        // Step just below the maximizing term's root so rounding cannot leave it under 1.
        lo -= 1e-13 * (1.0 + lo.abs());
        let mut hi = hi_zeta;
        if !(eval(lo).0 >= 1.0) {
            return Err(Error::Bracket(format!(
                "G(k, {lo}) < 1 at the lower bracket for k = {k:?}"
            )));
        }
        while hi - lo > 1e-4 * (1.0 + hi.abs().max(lo.abs())) {
            let mid = 0.5 * (lo + hi);
            if eval(mid).0 > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((newton(&eval, lo, hi)?, None))
    }
}

/// Safeguarded Newton on `ln G` inside `[lo, hi]` with `G(lo) >= 1 >= G(hi)`;
/// `eval` returns `G` and minus its derivative.
fn newton(eval: &dyn Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..100 {
        let (gv, g1) = eval(x);
        if gv > 1.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        if (gv - 1.0).abs() <= 1e-15 {
            return Ok(x);
        }
        let mut next = x + gv.ln() / (g1 / gv);
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) || next == lo || next == hi {
            x = next;
            break;
        }
        x = next;
    }
    let (gv, g1) = eval(x);
    let resid = gv - 1.0;
    // Rounding x alone perturbs G by about (mean waiting time) * ulp(x).
    let floor = 8.0 * f64::EPSILON * x.abs() * (g1 / gv).abs();
    if !(resid.abs() <= 1e-10 + floor) {
        return Err(Error::NonConvergence {
            context: "free-energy root",
            iterations: 100,
            last: vec![x, resid],
        });
    }
    Ok(x)
}

/// Tilted first moments at `zeta`: `(sum f c, sum s c)`.
fn first_moments(model: &Model, k: &[f64], at: Abscissa) -> (Vec<f64>, SeriesValue) {
    let d = model.dim();
    let num = (0..d)
        .map(|i| tilted(model, k, at, &[Factor::reward(i, d)]).value)
        .collect();
    let den = tilted(model, k, at, &[Factor::time(d)]);
    (num, den)
}

fn abscissa(s: &Solved) -> Abscissa {
    if let Some(gap) = s.gap {
        Abscissa::AboveBoundary(gap)
    } else {
        Abscissa::Zeta(s.z)
    }
}

pub(crate) fn nu_at(model: &Model, k: &[f64], s: &Solved) -> Result<Vec<f64>> {
    let (num, den) = first_moments(model, k, abscissa(s));
    if !den.is_finite() || num.iter().any(|x| !x.is_finite()) {
        return Err(Error::MomentDivergence(k.to_vec()));
    }
    Ok(num.into_iter().map(|x| x / den.value).collect())
}

/// `nu(k) = sum f c / sum s c` with `c(s) = e^{k.f(s)} a(s) e^{-z(k) s}`.
pub fn nu(model: &Model, k: &[f64]) -> Result<Vec<f64>> {
    let s = solve(model, k)?;
    nu_at(model, k, &s)
}

pub(crate) fn hessian_at(model: &Model, k: &[f64], s: &Solved, nu: &[f64]) -> Result<DMatrix<f64>> {
    let d = model.dim();
    let at = abscissa(s);
    let den = tilted(model, k, at, &[Factor::time(d)]).value;
    let centred = |i: usize| {
        let mut u = vec![0.0; d];
        u[i] = 1.0;
        Factor { u, c: -nu[i] }
    };
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let v = tilted(model, k, at, &[centred(i), centred(j)]).value / den;
            if !v.is_finite() {
                return Err(Error::MomentDivergence(k.to_vec()));
            }
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// `J(k) = sum (f - nu s)(f - nu s)^T c / sum s c`, defined off `Theta`.
pub fn hessian(model: &Model, k: &[f64]) -> Result<Vec<Vec<f64>>> {
    let s = solve(model, k)?;
    if s.in_theta {
        return Err(Error::NotApplicable(format!("k = {k:?} lies in Theta")));
    }
    let n = nu_at(model, k, &s)?;
    Ok(to_rows(&hessian_at(model, k, &s, &n)?))
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn subdiff_at(model: &Model, k: &[f64], s: &Solved) -> Result<Subdifferential> {
    if !s.in_theta {
        return Ok(Subdifferential::Point { w: nu_at(model, k, s)? });
    }
    let r = model.r().to_vec();
    if s.theta < 1.0 - THETA_TOL {
        return Ok(Subdifferential::Point { w: r });
    }
    match nu_at(model, k, s) {
        Ok(n) => Ok(Subdifferential::Segment { from: r, to: n }),
        Err(Error::MomentDivergence(_)) => Ok(Subdifferential::Point { w: r }),
        Err(e) => Err(e),
    }
}

pub fn subdifferential(model: &Model, k: &[f64]) -> Result<Subdifferential> {
    let s = solve(model, k)?;
    subdiff_at(model, k, &s)
}

/// Everything about `z` at one point.
pub fn free_energy(model: &Model, k: &[f64]) -> Result<FreeEnergyPoint> {
    let s = solve(model, k)?;
    let nu = match nu_at(model, k, &s) {
        Ok(n) => Some(n),
        Err(Error::MomentDivergence(_)) if s.in_theta => None,
        Err(e) => return Err(e),
    };
    let hessian = match (&nu, s.in_theta) {
        (Some(n), false) => Some(to_rows(&hessian_at(model, k, &s, n)?)),
        _ => None,
    };
    let subdiff = subdiff_at(model, k, &s)?;
    Ok(FreeEnergyPoint {
        k: k.to_vec(),
        z: s.z,
        theta: s.theta,
        in_theta: s.in_theta,
        nu,
        hessian,
        subdiff,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalityReport {
    pub is_critical: bool,
    pub rho: Vec<f64>,
    pub segment: Option<(Vec<f64>, Vec<f64>)>,
    pub theta0: f64,
    pub z0: f64,
}

/// Critical means `ell` finite, `theta(0) = 1` and a finite first moment at
/// the boundary; then the zero set of the rate function is a segment.
pub fn criticality(model: &Model) -> Result<CriticalityReport> {
    let k0 = vec![0.0; model.dim()];
    let s = solve(model, &k0)?;
    let sub = subdiff_at(model, &k0, &s)?;
    let boundary_theta = (s.theta - 1.0).abs() <= THETA_TOL;
    let (is_critical, segment) = match &sub {
        Subdifferential::Segment { from, to } if model.ell().is_finite() && boundary_theta => {
            (true, Some((from.clone(), to.clone())))
        }
        _ => (false, None),
    };
    let rho = match (&sub, s.theta <= 1.0 + THETA_TOL) {
        (Subdifferential::Point { .. }, true) => model.r().to_vec(),
        _ => nu_at(model, &k0, &s)?,
    };
    Ok(CriticalityReport {
        is_critical,
        rho,
        segment,
        theta0: s.theta,
        z0: s.z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RewardSpec, TailSpec, WeightModel};

    const ZETA_5_2: f64 = 1.341487257250917;
    const WC: f64 = 0.5135124467951879;

    fn geometric() -> Model {
        let w = WeightModel::new(vec![], Some(TailSpec::new(1.0, 0.0, -(2f64.ln())).unwrap())).unwrap();
        Model::counting(w)
    }

    fn zeta_model(c: f64, zeta_c: f64, beta: f64) -> Model {
        let w = WeightModel::new(vec![], Some(TailSpec::new(beta.exp() / zeta_c, c, 0.0).unwrap())).unwrap();
        Model::counting(w)
    }

    #[test]
    fn dirac_free_energy() {
        let m = Model::counting(WeightModel::new(vec![1.0], None).unwrap());
        for &k in &[-2.0, 0.0, 1.5] {
            let p = free_energy(&m, &[k]).unwrap();
            assert!((p.z - k).abs() < 1e-12);
            assert!((p.nu.unwrap()[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_free_energy() {
        let m = geometric();
        for &k in &[-3.0, -0.5, 0.0, 1.0, 4.0] {
            let z = z(&m, &[k]).unwrap();
            let exact = (1.0 + f64::exp(k)).ln() - 2f64.ln();
            assert!((z - exact).abs() < 1e-13, "k={k}: {z} vs {exact}");
        }
        assert!((z(&m, &[1.0]).unwrap() - 0.6201145069582775).abs() < 1e-13);
        let p = free_energy(&m, &[0.0]).unwrap();
        assert!((p.nu.as_ref().unwrap()[0] - 0.5).abs() < 1e-14);
        assert!((p.hessian.as_ref().unwrap()[0][0] - 0.25).abs() < 1e-14);
        assert!(matches!(p.subdiff, Subdifferential::Point { .. }));
    }

    #[test]
    fn zeta_model_flat_region() {
        let m = zeta_model(2.5, ZETA_5_2, -0.4);
        for &k in &[-1.0, 0.0, 0.4] {
            let p = free_energy(&m, &[k]).unwrap();
            assert!(p.in_theta);
            assert_eq!(p.z, 0.0);
        }
        assert!(!free_energy(&m, &[0.5]).unwrap().in_theta);
        assert_eq!(
            subdifferential(&m, &[0.0]).unwrap(),
            Subdifferential::Point { w: vec![0.0] }
        );
    }

    #[test]
    fn zeta_model_segment_at_criticality() {
        let m = zeta_model(2.5, ZETA_5_2, 0.0);
        match subdifferential(&m, &[0.0]).unwrap() {
            Subdifferential::Segment { from, to } => {
                assert_eq!(from, vec![0.0]);
                assert!((to[0] - WC).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let c = criticality(&m).unwrap();
        assert!(c.is_critical);
    }

    #[test]
    fn divergent_first_moment_is_not_critical() {
        let m = zeta_model(1.5, 2.612375348685488, 0.0);
        let c = criticality(&m).unwrap();
        assert!(!c.is_critical);
        assert_eq!(c.rho, vec![0.0]);
    }

    #[test]
    fn geometric_not_critical() {
        let c = criticality(&geometric()).unwrap();
        assert!(!c.is_critical);
        assert!((c.rho[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn upper_bound_is_a_bracket() {
        let w = WeightModel::new(vec![0.3, 0.0, 0.2], Some(TailSpec::new(0.1, 1.2, -0.3).unwrap())).unwrap();
        let f = RewardSpec::new(
            vec![vec![1.0, -2.0], vec![0.0, 0.0], vec![2.0, 1.0]],
            vec![0.5, -0.2],
            vec![0.1, 0.0],
            vec![0.0, 0.3],
        )
        .unwrap();
        let m = Model::new(w, f).unwrap();
        for k in [[3.0, -1.0], [-2.0, 2.0], [0.0, 0.0]] {
            let hi = m.z_o() + m.m_bound() * norm(&k) + std::f64::consts::LN_2;
            assert!(tilted(&m, &k, Abscissa::Zeta(hi), &[]).value <= 1.0);
        }
    }
}
