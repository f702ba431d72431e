//! Oracle and invariant checks on one model.
//!
//! Each check either passes, fails, or is skipped when the model lacks the
//! structure it needs (integer rewards, a base law, a constant potential).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use renewal_ldp::exact::{
    enumerate_marginal, gap_counts, integer_rewards, joint_renewal_probability, log_zc, renewal_mass, RewardTable,
};
use renewal_ldp::freeenergy::{hessian, nu, z};
use renewal_ldp::model::file::LoadedModel;
use renewal_ldp::rate::NtSuite;
use renewal_ldp::sampler::{chi_square_gof, PathSampler};
use renewal_ldp::{criticality, free_energy, Model, RateSolver, RewardSpec};

use crate::config::{CliError, CliResult};
use crate::table::Table;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = renewal_ldp::Result<Outcome>;

struct Ctx<'a> {
    model: &'a Model,
    loaded: &'a LoadedModel,
    solver: RateSolver,
    z0: f64,
    tol: f64,
    seed: u64,
}

impl Ctx<'_> {
    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    fn point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.model.dim()).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    fn dual_objective(&self, w: &[f64], k: &[f64]) -> renewal_ldp::Result<f64> {
        Ok(dot(w, k) - z(self.model, k)? + self.z0)
    }

    /// Random dual points off `Theta`.
    fn ks_off_theta(&self, salt: u64, n: usize) -> renewal_ldp::Result<Vec<Vec<f64>>> {
        let mut rng = self.rng(salt);
        let mut out = Vec::new();
        for _ in 0..20 * n {
            let k = self.point(&mut rng);
            let p = free_energy(self.model, &k)?;
            if !p.in_theta && p.theta > 1.0 + 1e-6 {
                out.push(k);
                if out.len() == n {
                    break;
                }
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn fenchel_young(c: &Ctx) -> Check {
    let mut rng = c.rng(1);
    for _ in 0..50 {
        let (w, k) = (c.point(&mut rng), c.point(&mut rng));
        let i = c.solver.rate(&w)?.value;
        let lower = c.dual_objective(&w, &k)?;
        if i < lower - c.tol {
            return Ok(Outcome::Fail(format!("I({w:?}) = {i} below {lower} from k = {k:?}")));
        }
    }
    Ok(Outcome::Pass("50 pairs".into()))
}

fn duality_closure(c: &Ctx) -> Check {
    let ks = c.ks_off_theta(2, 20)?;
    if ks.is_empty() {
        return Ok(Outcome::Skip("no dual points off Theta found".into()));
    }
    for k in &ks {
        let w = nu(c.model, k)?;
        let got = c.solver.rate(&w)?.value;
        let expect = c.dual_objective(&w, k)?;
        if !rel_close(got, expect, c.tol) {
            return Ok(Outcome::Fail(format!("I(nu({k:?})) = {got}, expected {expect}")));
        }
    }
    Ok(Outcome::Pass(format!("{} points", ks.len())))
}

fn gradient(c: &Ctx) -> Check {
    let ks = c.ks_off_theta(3, 20)?;
    if ks.is_empty() {
        return Ok(Outcome::Skip("no dual points off Theta found".into()));
    }
    let mut checked = 0;
    for k in &ks {
        let theta = free_energy(c.model, k)?.theta;
        let h = 1e-5 * (100.0 * (theta - 1.0)).clamp(1e-3, 1.0);
        let n = nu(c.model, k)?;
        for i in 0..k.len() {
            let (mut kp, mut km) = (k.clone(), k.clone());
            kp[i] += h;
            km[i] -= h;
            if free_energy(c.model, &kp)?.in_theta || free_energy(c.model, &km)?.in_theta {
                continue;
            }
            let fd = (z(c.model, &kp)? - z(c.model, &km)?) / (2.0 * h);
            if !rel_close(fd, n[i], 1e-6) {
                return Ok(Outcome::Fail(format!(
                    "nu_{} = {} at {k:?}, difference quotient {fd}",
                    i + 1,
                    n[i]
                )));
            }
            checked += 1;
        }
    }
    Ok(Outcome::Pass(format!("{checked} partial derivatives")))
}

fn hessian_psd(c: &Ctx) -> Check {
    let ks = c.ks_off_theta(4, 20)?;
    if ks.is_empty() {
        return Ok(Outcome::Skip("no dual points off Theta found".into()));
    }
    let mut rng = c.rng(5);
    for k in &ks {
        let j = hessian(c.model, k)?;
        let scale = j.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        let u = c.point(&mut rng);
        let q: f64 = (0..u.len()).map(|a| u[a] * dot(&j[a], &u)).sum();
        let symmetric = (0..u.len()).all(|a| (0..u.len()).all(|b| (j[a][b] - j[b][a]).abs() <= 1e-12 * (1.0 + scale)));
        if q < -1e-12 * (1.0 + scale) || !symmetric {
            return Ok(Outcome::Fail(format!(
                "Hessian at {k:?} is not symmetric positive semidefinite"
            )));
        }
    }
    Ok(Outcome::Pass(format!("{} points", ks.len())))
}

fn midpoint_convexity(c: &Ctx) -> Check {
    let mut rng = c.rng(6);
    for _ in 0..30 {
        let (a, b) = (c.point(&mut rng), c.point(&mut rng));
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let (za, zb, zm) = (z(c.model, &a)?, z(c.model, &b)?, z(c.model, &mid)?);
        if zm > 0.5 * (za + zb) + c.tol * (1.0 + za.abs() + zb.abs()) {
            return Ok(Outcome::Fail(format!(
                "z is not midpoint convex between {a:?} and {b:?}"
            )));
        }
    }
    Ok(Outcome::Pass("30 pairs".into()))
}

fn zero_at_typical_value(c: &Ctx) -> Check {
    let rho = criticality(c.model)?.rho;
    let i = c.solver.rate(&rho)?.value;
    if i.abs() > c.tol {
        return Ok(Outcome::Fail(format!("I({rho:?}) = {i}")));
    }
    Ok(Outcome::Pass(format!("I(rho) = {i:.1e}")))
}

fn is_counting(m: &Model) -> bool {
    let c = RewardSpec::counting(m.head_len());
    let r = m.rewards();
    r.head() == c.head() && r.slope() == c.slope() && r.offset() == c.offset() && r.log_coef() == c.log_coef()
}

fn closed_form_counts(c: &Ctx) -> Check {
    let Some(base) = &c.loaded.base else {
        return Ok(Outcome::Skip("no base law".into()));
    };
    if !is_counting(c.model) {
        return Ok(Outcome::Skip("reward is not the renewal count".into()));
    }
    let suite = match NtSuite::new(base) {
        Ok(s) => s,
        Err(e) if !e.is_numeric() => return Ok(Outcome::Skip(e.to_string())),
        Err(e) => return Err(e),
    };
    for i in 1..20 {
        let w = i as f64 / 20.0;
        let (a, b) = (c.solver.rate(&[w])?.value, suite.rate(w)?);
        if !rel_close(a, b, c.tol) {
            return Ok(Outcome::Fail(format!("I({w}) = {a}, closed form {b}")));
        }
    }
    Ok(Outcome::Pass(format!(
        "19 points, transition {}",
        suite.transition().label()
    )))
}

fn has_integer_rewards(m: &Model, t: usize) -> bool {
    m.dim() == 1 && integer_rewards(m, t).is_ok()
}

fn consistency_triangle(c: &Ctx) -> Check {
    let t_max = 12;
    if !has_integer_rewards(c.model, t_max) {
        return Ok(Outcome::Skip("rewards are not scalar integers".into()));
    }
    let lz = log_zc(c.model.weights(), t_max)?;
    let table = RewardTable::new(c.model, t_max)?;
    let mut checked = 0;
    for t in 1..=t_max {
        if lz[t] == f64::NEG_INFINITY {
            continue;
        }
        let zc = lz[t].exp();
        let en = enumerate_marginal(c.model, t)?;
        let total = table.log_total(t).exp();
        if !rel_close(total, zc, 1e-12) || !rel_close(en.total_weight, zc, 1e-12) {
            return Ok(Outcome::Fail(format!(
                "t = {t}: Z^c {zc}, reward recursion {total}, enumeration {}",
                en.total_weight
            )));
        }
        let dist = table.distribution(t)?;
        let mut hist = std::collections::BTreeMap::new();
        for e in &en.entries {
            let ones = e.u.iter().filter(|&&x| x == 1).count() - 1;
            let counts: Vec<usize> = (1..=t).map(|s| gap_counts(&e.u, s)).collect();
            let lengths: usize = counts.iter().enumerate().map(|(i, n)| (i + 1) * n).sum();
            if counts.iter().sum::<usize>() != ones || lengths != t {
                return Ok(Outcome::Fail(format!(
                    "t = {t}: gap counts of {:?} are inconsistent",
                    e.u
                )));
            }
            *hist.entry(e.reward[0].round() as i64).or_insert(0.0) += e.prob;
        }
        for (n, p) in dist.values() {
            let q = hist.get(&n).copied().unwrap_or(0.0);
            if (p - q).abs() > 1e-12 {
                return Ok(Outcome::Fail(format!(
                    "t = {t}: P[W = {n}] is {p} by recursion, {q} by enumeration"
                )));
            }
        }
        checked += 1;
    }
    Ok(Outcome::Pass(format!("{checked} horizons")))
}

fn free_energy_growth(c: &Ctx) -> Check {
    let t = 1000;
    let lz = log_zc(c.model.weights(), t)?;
    if lz[t] == f64::NEG_INFINITY {
        return Ok(Outcome::Skip(format!("no admissible path of length {t}")));
    }
    let gap = (lz[t] / t as f64 - c.z0).abs();
    let bound = 25.0 * (t as f64).ln() / t as f64;
    if gap > bound {
        return Ok(Outcome::Fail(format!(
            "|ln Z^c_t / t - z(0)| = {gap:.3e} at t = {t}, bound {bound:.3e}"
        )));
    }
    Ok(Outcome::Pass(format!("gap {gap:.2e} at t = {t}")))
}

fn kingman(c: &Ctx) -> Check {
    let Some(base) = &c.loaded.base else {
        return Ok(Outcome::Skip("no base law".into()));
    };
    let mut rng = c.rng(7);
    let u = renewal_mass(base, 400);
    for _ in 0..20 {
        let t1 = rng.random_range(1..200);
        let t2 = t1 + rng.random_range(1..200);
        let joint = joint_renewal_probability(base, &[t1, t2]);
        let product = u[t1] * u[t2 - t1];
        if (joint - product).abs() > 1e-12 {
            return Ok(Outcome::Fail(format!(
                "times ({t1}, {t2}): joint {joint}, product {product}"
            )));
        }
    }
    Ok(Outcome::Pass("20 time pairs".into()))
}

fn sampler_law(c: &Ctx) -> Check {
    let t = 30;
    if !has_integer_rewards(c.model, t) {
        return Ok(Outcome::Skip("rewards are not scalar integers".into()));
    }
    if log_zc(c.model.weights(), t)?[t] == f64::NEG_INFINITY {
        return Ok(Outcome::Skip(format!("no admissible path of length {t}")));
    }
    let dist = RewardTable::new(c.model, t)?.distribution(t)?;
    let values: Vec<i64> = dist.values().map(|(n, _)| n).collect();
    let (lo, hi) = (values[0], values[values.len() - 1]);
    let draws = PathSampler::new(c.model, t)?.sample_many(c.seed, 20_000);
    let mut observed = vec![0u64; (hi - lo + 1) as usize];
    for d in &draws {
        let n = d.rewards_total[0].round() as i64;
        if !(lo..=hi).contains(&n) {
            return Ok(Outcome::Fail(format!("sampled W = {n} has probability zero")));
        }
        observed[(n - lo) as usize] += 1;
    }
    let expected: Vec<f64> = (lo..=hi).map(|n| dist.prob_at(n)).collect();
    let test = chi_square_gof(&observed, &expected);
    if test.dof > 0 && test.p_value < 1e-3 {
        return Ok(Outcome::Fail(format!("chi-square p = {:.2e}", test.p_value)));
    }
    Ok(Outcome::Pass(format!(
        "chi-square p = {:.3} on {} dof",
        test.p_value, test.dof
    )))
}

/// Runs every check; the flag is true when none failed.
pub fn verify(loaded: &LoadedModel, tol: f64, seed: u64) -> CliResult<(Table, bool)> {
    if !(tol >= 1e-14) {
        return Err(CliError::Config("--tol must be at least 1e-14".into()));
    }
    let model = &loaded.model;
    let solver = RateSolver::new(model)?;
    let ctx = Ctx {
        model,
        loaded,
        z0: solver.z0(),
        solver,
        tol,
        seed,
    };
    let checks: [(&str, fn(&Ctx) -> Check); 11] = [
        ("fenchel_young", fenchel_young),
        ("duality_closure", duality_closure),
        ("gradient", gradient),
        ("hessian_psd", hessian_psd),
        ("midpoint_convexity", midpoint_convexity),
        ("zero_at_typical_value", zero_at_typical_value),
        ("closed_form_counts", closed_form_counts),
        ("consistency_triangle", consistency_triangle),
        ("free_energy_growth", free_energy_growth),
        ("kingman", kingman),
        ("sampler_law", sampler_law),
    ];
    let mut table = Table::new(["check", "status", "detail"]);
    let mut ok = true;
    for (name, run) in checks {
        let (status, detail) = match run(&ctx) {
            Ok(Outcome::Pass(d)) => ("pass", d),
            Ok(Outcome::Skip(d)) => ("skip", d),
            Ok(Outcome::Fail(d)) => ("fail", d),
            Err(e) => ("fail", e.to_string()),
        };
        ok &= status != "fail";
        table.push(vec![name.into(), status.into(), detail.into()]);
    }
    Ok((table, ok))
}
