//! Removal of redundant reward directions.
//!
//! With `A` a basis of `span{f(s) - r s}` and `A_o = (A^T A)^{-1} A^T`, the
//! reduced rewards `f_o(s) = A_o (f(s) - r s)` satisfy
//! `z(k) = k.r + z_o(A^T k)` and `I(w) = I_o(A_o w + a_o)` with
//! `a_o = -A_o r`, and `I = +inf` off the affine hull `r + range(A)`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::{Model, RewardSpec};

#[derive(Clone, Debug)]
pub struct Reduction {
    /// Reduced model of dimension `rank` (the input itself when full rank).
    pub model: Model,
    /// `d x rank` basis `A`.
    pub basis: DMatrix<f64>,
    /// `rank x d` left inverse `A_o`.
    pub map: DMatrix<f64>,
    /// `a_o = -A_o r`.
    pub offset: DVector<f64>,
    pub rank: usize,
    /// Full rank: the reduced model is the original.
    pub identity: bool,
}

impl Reduction {
    /// `A_o w + a_o`.
    pub fn project(&self, w: &[f64]) -> Vec<f64> {
        if self.identity {
            return w.to_vec();
        }
        let v = &self.map * DVector::from_column_slice(w) + &self.offset;
        v.iter().copied().collect()
    }

    /// Distance of `w` from the affine hull `r + range(A)`.
    pub fn hull_residual(&self, w: &[f64], r: &[f64]) -> f64 {
        if self.identity {
            return 0.0;
        }
        let x = DVector::from_column_slice(w) - DVector::from_column_slice(r);
        let back = &self.basis * (&self.map * &x);
        (x - back).norm()
    }

    /// Lifts a reduced dual `k_o` to `k = A_o^T k_o`.
    pub fn lift_dual(&self, k_o: &[f64]) -> Vec<f64> {
        if self.identity {
            return k_o.to_vec();
        }
        let k = self.map.transpose() * DVector::from_column_slice(k_o);
        k.iter().copied().collect()
    }
}

/// Candidate vectors `f(s) - r s` spanning the same space as all of them.
fn spanning_vectors(model: &Model) -> Vec<Vec<f64>> {
    let r = model.r();
    let mut out: Vec<Vec<f64>> = model
        .weights()
        .head_support()
        .map(|s| {
            let f = model.reward(s);
            f.iter().zip(r).map(|(x, ri)| x - ri * s as f64).collect()
        })
        .collect();
    if model.has_tail() {
        // On the tail f(s) - r s = kappa0 + kappa1 ln(s - h): two distinct
        // logarithms span it.
        let s0 = model.head_len() as u64 + 1;
        for s in [s0, s0 + 1] {
            let f = model.reward(s);
            out.push(f.iter().zip(r).map(|(x, ri)| x - ri * s as f64).collect());
        }
    }
    out
}

pub fn reduce_dimension(model: &Model) -> Result<Reduction> {
    let d = model.dim();
    let cands = spanning_vectors(model);
    let scale = cands
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    // Greedy Gram-Schmidt selection of actual vectors as basis columns.
    let mut chosen: Vec<Vec<f64>> = Vec::new();
    let mut ortho: Vec<DVector<f64>> = Vec::new();
    for v in &cands {
        let mut res = DVector::from_column_slice(v);
        for q in &ortho {
            let c = q.dot(&res);
            res -= q * c;
        }
        if res.norm() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            ortho.push(res.normalize());
            chosen.push(v.clone());
        }
        if chosen.len() == d {
            break;
        }
    }
    let rank = chosen.len();
    if rank == d {
        return Ok(Reduction {
            model: model.clone(),
            basis: DMatrix::identity(d, d),
            map: DMatrix::identity(d, d),
            offset: DVector::zeros(d),
            rank,
            identity: true,
        });
    }
    let basis = DMatrix::from_fn(d, rank, |i, j| chosen[j][i]);
    let gram = basis.transpose() * &basis;
    let map = gram.try_inverse().expect("selected basis columns are independent") * basis.transpose();
    let r = DVector::from_column_slice(model.r());
    let offset = -(&map * &r);

    let apply = |v: &[f64]| -> Vec<f64> { (&map * DVector::from_column_slice(v)).iter().copied().collect() };
    let head = (1..=model.head_len() as u64)
        .map(|s| {
            let f = model.reward(s);
            let g: Vec<f64> = f.iter().zip(model.r()).map(|(x, ri)| x - ri * s as f64).collect();
            apply(&g)
        })
        .collect();
    let rw = model.rewards();
    // Without a weight tail the reward tail is never evaluated.
    let (off, logc) = if model.has_tail() {
        let off: Vec<f64> = rw.offset().to_vec();
        (apply(&off), apply(rw.log_coef()))
    } else {
        (vec![0.0; rank], vec![0.0; rank])
    };
    let rewards = RewardSpec::new(head, vec![0.0; rank], off, logc)?;
    let reduced = Model::new(model.weights().clone(), rewards)?;
    Ok(Reduction {
        model: reduced,
        basis,
        map,
        offset,
        rank,
        identity: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TailSpec, WeightModel};

    #[test]
    fn rank_one_rewards() {
        let w = WeightModel::new(vec![0.2, 0.3], Some(TailSpec::new(0.5, 0.0, -1.0).unwrap())).unwrap();
        let g = [0.5, -1.0];
        let f = RewardSpec::new(
            g.iter().map(|x| vec![x * 1.0, x * 2.0]).collect(),
            vec![0.0, 0.0],
            vec![0.7, 1.4],
            vec![0.0, 0.0],
        )
        .unwrap();
        let m = Model::new(w, f).unwrap();
        let red = reduce_dimension(&m).unwrap();
        assert_eq!(red.rank, 1);
        assert!(!red.identity);
        assert!(red.hull_residual(&[1.0, 2.0], m.r()) < 1e-14);
        assert!(red.hull_residual(&[1.0, 1.0], m.r()) > 0.1);
    }

    #[test]
    fn degenerate_rewards() {
        let w = WeightModel::new(vec![], Some(TailSpec::new(1.0, 0.0, -std::f64::consts::LN_2).unwrap())).unwrap();
        let f = RewardSpec::scalar(vec![], 1.0, 0.0, 0.0).unwrap();
        let m = Model::new(w, f).unwrap();
        assert_eq!(reduce_dimension(&m).unwrap().rank, 0);
    }

    #[test]
    fn full_rank_passthrough() {
        let p = crate::model::presets::make_poland_scheraga(0.0, 0.0, 2.5, 0.0, 8).unwrap();
        let red = reduce_dimension(&p.model("pair").unwrap()).unwrap();
        assert!(red.identity);
        assert_eq!(red.rank, 2);
    }
}
