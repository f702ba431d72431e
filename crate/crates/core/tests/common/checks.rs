//! Check bodies shared by the property tests and the acceptance run.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use renewal_ldp::exact::{
    enumerate_marginal, gap_counts, joint_renewal_probability, log_zc, renewal_mass, RewardTable,
};
use renewal_ldp::freeenergy::{free_energy, hessian, nu, z};
use renewal_ldp::series::grand_sum;
use renewal_ldp::{BaseLaw, Model, RateSolver, Subdifferential};

use super::{close, model_params, ModelParams};

type Check = std::result::Result<(), TestCaseError>;

pub fn ks(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, d)
}

pub fn params_1_or_2() -> impl Strategy<Value = ModelParams> {
    (1usize..=2).prop_flat_map(model_params)
}

fn dual_objective(m: &Model, w: &[f64], k: &[f64]) -> f64 {
    let z0 = z(m, &vec![0.0; m.dim()]).unwrap();
    w.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() - z(m, k).unwrap() + z0
}

fn off_theta(m: &Model, k: &[f64]) -> bool {
    !free_energy(m, k).unwrap().in_theta
}

/// `I(w) >= w.k - z(k) + z(0)` for random `w` and `k`.
pub fn fenchel_young(p: &ModelParams, seed: u64) -> Check {
    let m = p.build();
    let d = m.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || (0..d).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    let (w, k) = (draw(), draw());
    let i = RateSolver::new(&m).unwrap().rate(&w).unwrap().value;
    let lower = dual_objective(&m, &w, &k);
    prop_assert!(i >= lower - 1e-9, "I(w) = {i} < {lower}");
    Ok(())
}

/// `I(nu(k)) = nu(k).k - z(k) + z(0)` off `Theta`, and the returned dual
/// point maps back to `nu(k)`.
pub fn duality_closure(p: &ModelParams, k: &[f64]) -> Check {
    let m = p.build();
    let k = &k[..m.dim()];
    prop_assume!(off_theta(&m, k));
    let w = nu(&m, k).unwrap();
    let res = RateSolver::new(&m).unwrap().rate(&w).unwrap();
    let expect = dual_objective(&m, &w, k);
    prop_assert!(
        (res.value - expect).abs() <= 1e-9 * (1.0 + expect.abs()),
        "I(nu(k)) = {} vs {expect}",
        res.value
    );
    if let Some(dk) = res.dual_k {
        let back = nu(&m, &dk).unwrap();
        for (a, b) in back.iter().zip(&w) {
            prop_assert!(close(*a, *b, 1e-7), "nu(dual) = {back:?} vs {w:?}");
        }
    }
    Ok(())
}

/// `nu` and `J` against central differences of `z` and `nu`.
pub fn gradient_matches_finite_differences(p: &ModelParams, k: &[f64]) -> Check {
    let m = p.build();
    let d = m.dim();
    let k = &k[..d];
    let fe = free_energy(&m, k).unwrap();
    prop_assume!(!fe.in_theta && fe.theta > 1.0 + 1e-6);
    // Derivatives of nu grow without bound at the edge of Theta, so the
    // step shrinks with the distance to it.
    let h = 1e-5 * (100.0 * (fe.theta - 1.0)).clamp(1e-3, 1.0);
    let n = nu(&m, k).unwrap();
    let j = hessian(&m, k).unwrap();
    for i in 0..d {
        let mut kp = k.to_vec();
        let mut km = k.to_vec();
        kp[i] += h;
        km[i] -= h;
        if !off_theta(&m, &kp) || !off_theta(&m, &km) {
            continue;
        }
        let fd = (z(&m, &kp).unwrap() - z(&m, &km).unwrap()) / (2.0 * h);
        prop_assert!(close(fd, n[i], 1e-6), "nu[{i}] = {} vs fd {fd}", n[i]);
        let (np, nm) = (nu(&m, &kp).unwrap(), nu(&m, &km).unwrap());
        for r in 0..d {
            let fd = (np[r] - nm[r]) / (2.0 * h);
            prop_assert!(close(fd, j[r][i], 1e-5), "J[{r}][{i}] = {} vs fd {fd}", j[r][i]);
        }
    }
    Ok(())
}

pub fn hessian_is_positive_semidefinite(p: &ModelParams, k: &[f64], u: &[f64]) -> Check {
    let m = p.build();
    let d = m.dim();
    prop_assume!(off_theta(&m, &k[..d]));
    let j = hessian(&m, &k[..d]).unwrap();
    let scale: f64 = j.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    let q: f64 = (0..d)
        .flat_map(|a| (0..d).map(move |b| (a, b)))
        .map(|(a, b)| u[a] * j[a][b] * u[b])
        .sum();
    prop_assert!(q >= -1e-12 * (1.0 + scale), "u'Ju = {q}");
    for a in 0..d {
        for b in 0..d {
            prop_assert!((j[a][b] - j[b][a]).abs() <= 1e-12 * (1.0 + scale));
        }
    }
    Ok(())
}

pub fn z_and_rate_are_midpoint_convex(p: &ModelParams, a: &[f64], b: &[f64]) -> Check {
    let m = p.build();
    let d = m.dim();
    let (a, b) = (&a[..d], &b[..d]);
    let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let (za, zb, zm) = (z(&m, a).unwrap(), z(&m, b).unwrap(), z(&m, &mid).unwrap());
    prop_assert!(zm <= 0.5 * (za + zb) + 1e-9 * (1.0 + za.abs() + zb.abs()));

    // Points of the domain, reached as images of nu.
    prop_assume!(off_theta(&m, a) && off_theta(&m, b));
    let (wa, wb) = (nu(&m, a).unwrap(), nu(&m, b).unwrap());
    let wm: Vec<f64> = wa.iter().zip(&wb).map(|(x, y)| 0.5 * (x + y)).collect();
    let s = RateSolver::new(&m).unwrap();
    let (ia, ib, im) = (
        s.rate(&wa).unwrap().value,
        s.rate(&wb).unwrap().value,
        s.rate(&wm).unwrap().value,
    );
    prop_assert!(
        im <= 0.5 * (ia + ib) + 1e-9 * (1.0 + ia + ib),
        "I(mid) = {im}, ends {ia} {ib}"
    );
    Ok(())
}

/// `ln G(k, zeta)` is jointly convex.
pub fn grand_sum_is_log_convex(p: &ModelParams, k: f64, dk: f64, dz: f64) -> Check {
    let m = p.build();
    let z0 = z(&m, &[k]).unwrap() + 0.5 + dz.abs();
    let lg = |t: f64| grand_sum(&m, &[k + t * dk], z0 + t * dz).value.ln();
    let (a, b, c) = (lg(-0.25), lg(0.0), lg(0.25));
    prop_assume!(a.is_finite() && c.is_finite());
    prop_assert!(b <= 0.5 * (a + c) + 1e-10 * (1.0 + b.abs()));
    Ok(())
}

/// The zero set of `I` is the subdifferential of `z` at the origin.
pub fn zero_set_matches_subdifferential_at_origin(p: &ModelParams, t: f64) -> Check {
    let m = p.build();
    let pt = free_energy(&m, &[0.0]).unwrap();
    let s = RateSolver::new(&m).unwrap();
    match pt.subdiff {
        Subdifferential::Point { w } => {
            prop_assert!(s.rate(&w).unwrap().value <= 1e-9);
            let off = [w[0] + 0.05];
            let i = s.rate(&off).unwrap().value;
            prop_assert!(i > 0.0, "I({}) = {i}", off[0]);
        }
        Subdifferential::Segment { from, to } => {
            let w = from[0] + t * (to[0] - from[0]);
            prop_assert!(s.rate(&[w]).unwrap().value <= 1e-9);
        }
    }
    Ok(())
}

/// Enumeration, the reward recursion and the partition-function recursion
/// agree at horizon `t`, and the gap counts of every enumerated string
/// satisfy both counting identities.
pub fn consistency_triangle(m: &Model, t: usize) -> Result<(), String> {
    let lz = log_zc(m.weights(), t).map_err(|e| e.to_string())?;
    let table = RewardTable::new(m, t).map_err(|e| e.to_string())?;
    let zc = lz[t].exp();
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !rel(table.log_total(t).exp(), zc) {
        return Err(format!(
            "t={t}: reward recursion total {} vs Z^c {zc}",
            table.log_total(t).exp()
        ));
    }
    let en = enumerate_marginal(m, t).map_err(|e| e.to_string())?;
    if !rel(en.total_weight, zc) {
        return Err(format!("t={t}: enumeration total {} vs Z^c {zc}", en.total_weight));
    }
    let dist = table.distribution(t).map_err(|e| e.to_string())?;
    let mut hist = std::collections::BTreeMap::new();
    for e in &en.entries {
        let ones = e.u.iter().filter(|&&x| x == 1).count() - 1;
        let counts: Vec<usize> = (1..=t).map(|s| gap_counts(&e.u, s)).collect();
        if counts.iter().sum::<usize>() != ones {
            return Err(format!("t={t}: gap counts of {:?} do not sum to the renewals", e.u));
        }
        if counts.iter().enumerate().map(|(i, c)| (i + 1) * c).sum::<usize>() != t {
            return Err(format!("t={t}: gap lengths of {:?} do not sum to t", e.u));
        }
        *hist.entry(e.reward[0].round() as i64).or_insert(0.0) += e.prob;
    }
    for (n, p) in dist.values() {
        let q = hist.get(&n).copied().unwrap_or(0.0);
        if (p - q).abs() > 1e-12 {
            return Err(format!("t={t}: P[W={n}] recursion {p} vs enumeration {q}"));
        }
    }
    for (n, q) in &hist {
        if *q > 0.0 && dist.log_prob_at(*n) == f64::NEG_INFINITY {
            return Err(format!("t={t}: enumeration reaches W={n}, the recursion does not"));
        }
    }
    Ok(())
}

/// `P[U_t1 = U_t2 = 1] = u_t1 u_{t2-t1}` under the base law.
pub fn kingman(base: &BaseLaw, t1: usize, t2: usize) -> Result<(), String> {
    let u = renewal_mass(base, t2);
    let joint = joint_renewal_probability(base, &[t1, t2]);
    let product = u[t1] * u[t2 - t1];
    if (joint - product).abs() > 1e-12 {
        return Err(format!("times ({t1}, {t2}): joint {joint} vs product {product}"));
    }
    Ok(())
}
