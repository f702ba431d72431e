//! The rate function `I(w) = sup_k { w.k - z(k) + z(0) }`.
//!
//! [`RateSolver`] dispatches between the branches of the transform:
//!
//! * `outside_domain`: `w` is not in the closed hull of the ratios `f(s)/s`;
//! * `at_r`: `w = r` with `Theta` nonempty, where `I(r) = z(0) - ell`;
//! * `interior_newton`: the supremum is attained off `Theta` and found by
//!   Newton iteration on `nu(k) = w`;
//! * `segment`: the supremum is attained on the boundary of `Theta`, where
//!   the subdifferential of `z` is a segment containing `w`;
//! * `boundary_limit`: `w` on the relative boundary of the domain; the
//!   supremum is approached as `|k| -> inf` and is obtained by dual ascent.
//!
//! Rank-deficient rewards are first reduced to full rank (see
//! [`reduce_dimension`]). In two or more dimensions, when Newton iteration
//! from `k = 0` cannot reach the maximizer without crossing `Theta`, the
//! transform is computed one coordinate at a time (see `slice`).

mod domain;
mod nt;
mod reduce;
mod slice;
mod theta;

pub use domain::{DomainDescriptor, Interval};
pub use nt::{NtSuite, Transition};
pub use reduce::{reduce_dimension, Reduction};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freeenergy::{hessian_at, nu_at, solve, subdiff_at, Solved, Subdifferential};
use crate::model::{dot, norm, Model};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    InteriorNewton,
    Segment,
    AtR,
    BoundaryLimit,
    OutsideDomain,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::InteriorNewton => "interior_newton",
            Branch::Segment => "segment",
            Branch::AtR => "at_r",
            Branch::BoundaryLimit => "boundary_limit",
            Branch::OutsideDomain => "outside_domain",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RateResult {
    pub w: Vec<f64>,
    pub value: f64,
    pub branch: Branch,
    pub dual_k: Option<Vec<f64>>,
    /// `|theta(k*) - 1|` on the segment branch.
    pub theta_residual: Option<f64>,
}

const MAX_ITER: usize = 200;

/// Precomputed data for evaluating `I` at many points of one model.
#[derive(Clone, Debug)]
pub struct RateSolver {
    original_r: Vec<f64>,
    dim: usize,
    reduction: Reduction,
    z0: f64,
    domain: DomainDescriptor,
    theta_point: Option<Vec<f64>>,
    theta_1d: Option<theta::ThetaInterval>,
}

/// Partial solution in the reduced coordinates.
struct Reduced {
    value: f64,
    branch: Branch,
    k: Option<Vec<f64>>,
    theta_residual: Option<f64>,
}

impl Reduced {
    fn new(value: f64, branch: Branch, k: Option<Vec<f64>>) -> Self {
        Reduced {
            value,
            branch,
            k,
            theta_residual: None,
        }
    }
}

impl RateSolver {
    pub fn new(model: &Model) -> Result<Self> {
        let reduction = reduce_dimension(model)?;
        let m = &reduction.model;
        let z0 = solve(m, &vec![0.0; m.dim()])?.z;
        let domain = DomainDescriptor::new(m);
        let theta_1d = if m.dim() == 1 { theta::interval_1d(m) } else { None };
        let theta_point = match &theta_1d {
            Some(t) => Some(vec![t.inside]),
            None if m.dim() >= 2 => theta::find_point(m),
            None => None,
        };
        Ok(RateSolver {
            original_r: model.r().to_vec(),
            dim: model.dim(),
            reduction,
            z0,
            domain,
            theta_point,
            theta_1d,
        })
    }

    /// `z(0)`.
    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn reduction(&self) -> &Reduction {
        &self.reduction
    }

    /// Domain of the reduced rate function.
    pub fn reduced_domain(&self) -> &DomainDescriptor {
        &self.domain
    }

    pub fn theta_nonempty(&self) -> bool {
        self.theta_point.is_some()
    }

    pub fn rate(&self, w: &[f64]) -> Result<RateResult> {
        if w.len() != self.dim {
            return Err(Error::Domain(format!(
                "w has dimension {} but the model has {}",
                w.len(),
                self.dim
            )));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("w must be finite".into()));
        }
        let outside = || RateResult {
            w: w.to_vec(),
            value: f64::INFINITY,
            branch: Branch::OutsideDomain,
            dual_k: None,
            theta_residual: None,
        };
        let scale = 1.0 + norm(w);
        if self.reduction.hull_residual(w, &self.original_r) > 1e-10 * scale {
            return Ok(outside());
        }
        let w_o = self.reduction.project(w);
        let red = match self.reduction.rank {
            0 => Reduced::new(0.0, Branch::InteriorNewton, Some(vec![])),
            1 => self.solve_1d(w_o[0])?,
            _ => self.solve_nd(&w_o)?,
        };
        if red.branch == Branch::OutsideDomain {
            return Ok(outside());
        }
        Ok(RateResult {
            w: w.to_vec(),
            value: red.value.max(0.0),
            branch: red.branch,
            dual_k: red.k.map(|k| self.reduction.lift_dual(&k)),
            theta_residual: red.theta_residual,
        })
    }

    fn model(&self) -> &Model {
        &self.reduction.model
    }

    fn phi(&self, w: &[f64], k: &[f64]) -> Result<f64> {
        Ok(dot(w, k) - solve(self.model(), k)?.z + self.z0)
    }

    /// `nu` and `J` at `k`, with `nu = r` where the first moment diverges on
    /// `Theta`.
    fn nu_j(&self, k: f64) -> Result<(f64, f64, Solved)> {
        let m = self.model();
        let s = solve(m, &[k])?;
        match nu_at(m, &[k], &s) {
            Ok(n) => {
                let j = if s.in_theta {
                    0.0
                } else {
                    hessian_at(m, &[k], &s, &n)?[(0, 0)]
                };
                Ok((n[0], j, s))
            }
            Err(Error::MomentDivergence(_)) if s.in_theta => Ok((m.r()[0], 0.0, s)),
            Err(e) => Err(e),
        }
    }

    fn solve_1d(&self, w: f64) -> Result<Reduced> {
        let m = self.model();
        let r = m.r()[0];
        let iv = self.domain.interval.clone().expect("one-dimensional domain");
        let tol = 1e-12 * (1.0 + w.abs());
        if w < iv.lo - tol || w > iv.hi + tol {
            return Ok(Reduced::new(f64::INFINITY, Branch::OutsideDomain, None));
        }
        let w = w.clamp(iv.lo, iv.hi);
        if (w - r).abs() <= 1e-14 * (1.0 + r.abs()) {
            if let Some(k) = &self.theta_point {
                return Ok(Reduced::new(self.z0 - m.ell(), Branch::AtR, Some(k.clone())));
            }
        }
        if iv.hi - w <= tol {
            return self.boundary_1d(iv.hi, 1.0);
        }
        if w - iv.lo <= tol {
            return self.boundary_1d(iv.lo, -1.0);
        }

        let (mut lower, mut upper) = (None, None);
        if let Some(t) = &self.theta_1d {
            let edge = if w > r { t.right } else { t.left };
            if edge.is_finite() {
                let s = solve(m, &[edge])?;
                if let Subdifferential::Segment { to, .. } = subdiff_at(m, &[edge], &s)? {
                    let (a, b) = if to[0] >= r { (r, to[0]) } else { (to[0], r) };
                    if w >= a && w <= b {
                        let value = w * edge - (edge * r + m.ell()) + self.z0;
                        return Ok(Reduced {
                            value,
                            branch: Branch::Segment,
                            k: Some(vec![edge]),
                            theta_residual: Some((s.theta - 1.0).abs()),
                        });
                    }
                }
                if w > r {
                    lower = Some(edge);
                } else {
                    upper = Some(edge);
                }
            }
        }
        let k = self.invert_nu(w, lower, upper)?;
        Ok(Reduced::new(
            self.phi(&[w], &[k])?,
            Branch::InteriorNewton,
            Some(vec![k]),
        ))
    }

    /// Solves `nu(k) = w` for `k` in `(lower, upper)`; `nu` is increasing.
    fn invert_nu(&self, w: f64, lower: Option<f64>, upper: Option<f64>) -> Result<f64> {
        let below = |k: f64| -> Result<bool> { Ok(self.nu_j(k)?.0 < w) };
        let a0 = lower.or(upper.map(|u| u - 1.0)).unwrap_or(0.0);
        let (mut a, mut b);
        if lower.is_some() {
            a = a0;
            let mut step = 1.0;
            b = a + step;
            while below(b)? {
                a = b;
                step *= 2.0;
                b = a0 + step;
                if step > 1e9 {
                    return Err(self.stuck("nu inversion bracket", vec![b]));
                }
            }
        } else if upper.is_some() {
            b = upper.unwrap();
            let mut step = 1.0;
            a = b - step;
            while !below(a)? {
                b = a;
                step *= 2.0;
                a = upper.unwrap() - step;
                if step > 1e9 {
                    return Err(self.stuck("nu inversion bracket", vec![a]));
                }
            }
        } else {
            a = -1.0;
            b = 1.0;
            let mut step = 1.0;
            while !below(a)? {
                b = b.min(a);
                step *= 2.0;
                a = -step;
                if step > 1e9 {
                    return Err(self.stuck("nu inversion bracket", vec![a]));
                }
            }
            step = 1.0;
            while below(b)? {
                a = a.max(b);
                step *= 2.0;
                b = step;
                if step > 1e9 {
                    return Err(self.stuck("nu inversion bracket", vec![b]));
                }
            }
        }
        // Safeguarded Newton inside [a, b] with nu(a) < w <= nu(b).
        let mut k = 0.5 * (a + b);
        for _ in 0..MAX_ITER {
            let (n, j, _) = self.nu_j(k)?;
            let resid = n - w;
            if resid.abs() <= 1e-15 * (1.0 + w.abs()) {
                return Ok(k);
            }
            if resid < 0.0 {
                a = k;
            } else {
                b = k;
            }
            if b - a <= 4.0 * f64::EPSILON * (1.0 + k.abs()) {
                return Ok(k);
            }
            let mut next = if j > 0.0 { k - resid / j } else { f64::NAN };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            k = next;
        }
        // Newton stalls only at rounding level; accept when the bracket is tight.
        if b - a <= 1e-10 * (1.0 + k.abs()) {
            return Ok(k);
        }
        Err(self.stuck("nu inversion", vec![k]))
    }

    fn stuck(&self, context: &'static str, last: Vec<f64>) -> Error {
        Error::NonConvergence {
            context,
            iterations: MAX_ITER,
            last,
        }
    }

    /// Dual ascent towards `k -> dir * inf` for an extreme point `w`.
    fn boundary_1d(&self, w: f64, dir: f64) -> Result<Reduced> {
        let mut k = 0.0;
        let mut phi = self.phi(&[w], &[k])?;
        let mut quiet = 0;
        for _ in 0..10 * MAX_ITER {
            let (n, j, s) = self.nu_j(k)?;
            let step = if s.in_theta || j <= 0.0 {
                dir * (1.0 + k.abs())
            } else {
                let raw = (w - n) / j;
                dir * (raw * dir).clamp(0.25, 50.0)
            };
            let next = k + step;
            let phi_next = self.phi(&[w], &[next])?;
            // Gains below the rounding level of w*k - z(k) are noise.
            let noise = 64.0 * f64::EPSILON * (1.0 + next.abs() * (1.0 + w.abs()));
            k = next;
            if phi_next - phi > noise {
                phi = phi_next;
                quiet = 0;
            } else {
                quiet += 1;
                if quiet >= 3 {
                    return Ok(Reduced::new(phi, Branch::BoundaryLimit, None));
                }
            }
            if k.abs() > 1e7 {
                return Ok(Reduced::new(phi, Branch::BoundaryLimit, None));
            }
        }
        Err(self.stuck("boundary ascent", vec![k, phi]))
    }

    fn solve_nd(&self, w: &[f64]) -> Result<Reduced> {
        let m = self.model();
        let scale = 1.0 + norm(w);
        if !self.domain.contains_closure(w, 1e-12 * scale) {
            return Ok(Reduced::new(f64::INFINITY, Branch::OutsideDomain, None));
        }
        let r = m.r().to_vec();
        if dist(w, &r) <= 1e-14 * (1.0 + norm(&r)) {
            if let Some(k) = &self.theta_point {
                return Ok(Reduced::new(self.z0 - m.ell(), Branch::AtR, Some(k.clone())));
            }
        }
        if let Some(res) = self.newton_nd(w)? {
            return Ok(res);
        }
        let opt = slice::maximize(m, w)?;
        let value = opt.value + self.z0;
        let Some(k) = opt.k else {
            return Ok(Reduced::new(value, Branch::BoundaryLimit, None));
        };
        let s = solve(m, &k)?;
        if s.in_theta {
            return Ok(Reduced {
                value,
                branch: Branch::Segment,
                k: Some(k),
                theta_residual: Some((s.theta - 1.0).abs()),
            });
        }
        Ok(Reduced::new(value, Branch::InteriorNewton, Some(k)))
    }

    /// Damped Newton for `nu(k) = w` with every iterate kept off `Theta`.
    /// `None` when it cannot finish there.
    fn newton_nd(&self, w: &[f64]) -> Result<Option<Reduced>> {
        let m = self.model();
        let d = m.dim();
        let scale = 1.0 + norm(w);
        let mut k = vec![0.0; d];
        let s = solve(m, &k)?;
        if s.in_theta {
            return Ok(None);
        }
        let mut phi = self.phi(w, &k)?;
        for _ in 0..MAX_ITER {
            let s = solve(m, &k)?;
            let n = nu_at(m, &k, &s)?;
            let g = DVector::from_iterator(d, w.iter().zip(&n).map(|(a, b)| a - b));
            if g.norm() <= 1e-10 * scale {
                return Ok(Some(Reduced::new(phi, Branch::InteriorNewton, Some(k))));
            }
            if norm(&k) > 1e6 {
                return Ok(None);
            }
            let j: DMatrix<f64> = hessian_at(m, &k, &s, &n)?;
            let dirn = match j.cholesky() {
                Some(ch) => ch.solve(&g),
                None => g,
            };
            let noise = 16.0 * f64::EPSILON * (1.0 + phi.abs() + dot(w, &k).abs());
            let mut t = 1.0;
            let mut moved = false;
            // Steps cut this short are pressed against `Theta`; the slice
            // method is faster from there.
            for _ in 0..12 {
                let cand: Vec<f64> = k.iter().zip(dirn.iter()).map(|(a, b)| a + t * b).collect();
                let ok = match solve(m, &cand) {
                    Ok(sc) if !sc.in_theta => true,
                    Ok(_) => false,
                    Err(e) if e.is_numeric() => false,
                    Err(e) => return Err(e),
                };
                if ok {
                    let pc = self.phi(w, &cand)?;
                    if pc >= phi - noise {
                        k = cand;
                        phi = pc.max(phi);
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                return Ok(None);
            }
        }
        Ok(None)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `I(w)` for a single point.
pub fn rate_at(model: &Model, w: &[f64]) -> Result<RateResult> {
    RateSolver::new(model)?.rate(w)
}

/// Effective domain of `I` for the (unreduced) model's ratio set.
pub fn domain(model: &Model) -> DomainDescriptor {
    DomainDescriptor::new(model)
}

/// Limit of `I` along `lambda w + (1 - lambda) u` as `lambda -> 1`, by
/// Richardson extrapolation over `lambda_j = 1 - 2^{-j}`. Returns the
/// extrapolated value and the size of the last correction.
pub fn radial_limit(solver: &RateSolver, w: &[f64], u: &[f64], levels: usize) -> Result<(f64, f64)> {
    let levels = levels.clamp(2, 20);
    let mut seq = Vec::with_capacity(levels);
    for j in 1..=levels {
        let lam = 1.0 - 0.5f64.powi(j as i32);
        let x: Vec<f64> = w.iter().zip(u).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        seq.push(solver.rate(&x)?.value);
    }
    // Two Richardson sweeps for errors of order 2^{-j} and 4^{-j}.
    let r1: Vec<f64> = seq.windows(2).map(|p| 2.0 * p[1] - p[0]).collect();
    let r2: Vec<f64> = r1.windows(2).map(|p| (4.0 * p[1] - p[0]) / 3.0).collect();
    let best = *r2.last().unwrap_or(r1.last().unwrap());
    let err = if r2.len() >= 2 {
        (r2[r2.len() - 1] - r2[r2.len() - 2]).abs()
    } else {
        (r1[r1.len() - 1] - seq[seq.len() - 1]).abs()
    };
    Ok((best, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    fn binary_entropy_rate(w: f64) -> f64 {
        let xlx = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
        std::f64::consts::LN_2 + xlx(w) + xlx(1.0 - w)
    }

    #[test]
    fn geometric_rate() {
        let m = presets::geometric(0.0).unwrap().counting_model();
        let solver = RateSolver::new(&m).unwrap();
        for &w in &[0.01, 0.25, 0.5, 0.8, 0.99] {
            let res = solver.rate(&[w]).unwrap();
            assert_eq!(res.branch, Branch::InteriorNewton);
            assert!(
                (res.value - binary_entropy_rate(w)).abs() < 1e-12,
                "w={w}: {}",
                res.value
            );
        }
        assert!((solver.rate(&[0.25]).unwrap().value - 0.130_812_035_941_137).abs() < 1e-13);
        for &w in &[0.0, 1.0] {
            let res = solver.rate(&[w]).unwrap();
            assert_eq!(res.branch, Branch::BoundaryLimit);
            assert!(
                (res.value - std::f64::consts::LN_2).abs() < 1e-12,
                "w={w}: {}",
                res.value
            );
        }
        assert_eq!(solver.rate(&[1.2]).unwrap().branch, Branch::OutsideDomain);
    }

    #[test]
    fn dirac_rate() {
        let m = presets::dirac(0.0).unwrap().counting_model();
        let s = RateSolver::new(&m).unwrap();
        assert_eq!(s.rate(&[1.0]).unwrap().value, 0.0);
        assert_eq!(s.rate(&[0.5]).unwrap().value, f64::INFINITY);
    }

    #[test]
    fn critical_zeta_stretch() {
        let m = presets::zeta(2.5, 0.0).unwrap().counting_model();
        let s = RateSolver::new(&m).unwrap();
        assert_eq!(s.rate(&[0.0]).unwrap().branch, Branch::AtR);
        for &w in &[0.1, 0.3, 0.5] {
            let res = s.rate(&[w]).unwrap();
            assert_eq!(res.branch, Branch::Segment);
            assert!(res.value.abs() < 1e-12);
        }
        let res = s.rate(&[0.5135124467951879 + 0.05]).unwrap();
        assert_eq!(res.branch, Branch::InteriorNewton);
        assert!(res.value > 1e-6);
    }

    #[test]
    fn radial_limit_crosscheck() {
        let m = presets::geometric(0.0).unwrap().counting_model();
        let s = RateSolver::new(&m).unwrap();
        let (v, _) = radial_limit(&s, &[1.0], &[0.5], 16).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-5, "{v}");
    }
}
