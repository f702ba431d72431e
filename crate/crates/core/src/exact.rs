//! Finite-`t` oracles.
//!
//! * [`zc_table`]: the constrained partition functions `Z^c_0..Z^c_t` from
//!   `Z^c_t = sum_{s<=t} a(s) Z^c_{t-s}`.
//! * [`RewardTable`]: the joint weights of `(t, W_t)` for integer scalar
//!   rewards, from which [`dist_w`] reads `P^c_t[W_t = n]`.
//! * [`renewal_mass`] and [`joint_renewal_probability`]: renewal
//!   probabilities of the base law.
//! * [`gap_counts`] and [`enumerate_marginal`]: brute-force enumeration of
//!   the constrained marginal over all binary strings.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BaseLaw, Model, WeightModel};

/// Largest horizon accepted by [`zc_table`].
pub const MAX_T: usize = 100_000;
/// Largest horizon accepted by the reward recursion.
pub const MAX_T_REWARD: usize = 5_000;
/// Largest horizon accepted by [`enumerate_marginal`].
pub const MAX_T_ENUM: usize = 16;

#[derive(Clone, Debug)]
pub struct ExactTables {
    /// `ln Z^c_t` for `t = 0..=t_max` (`-inf` where no path exists).
    pub log_zc: Vec<f64>,
    pub dp: Option<RewardTable>,
}

fn log_weights(w: &WeightModel, t_max: usize) -> Vec<f64> {
    (0..=t_max as u64).map(|s| w.log_weight(s)).collect()
}

/// `ln Z^c_t` for `t = 0..=t_max`.
///
/// The recursion runs on `Y_t = Z^c_t e^{-c t}` with `c` chosen so that
/// `sum_{s <= t_max} a(s) e^{-c s} = 1`; then `Y_t <= 1` for every `t` and
/// no per-step rescaling is needed.
pub fn log_zc(w: &WeightModel, t_max: usize) -> Result<Vec<f64>> {
    if t_max > MAX_T {
        return Err(Error::Domain(format!("horizon {t_max} exceeds {MAX_T}")));
    }
    let la = log_weights(w, t_max);
    let c = truncated_root(&la);
    let b: Vec<f64> = la.iter().enumerate().map(|(s, &l)| (l - c * s as f64).exp()).collect();
    let mut y = vec![0.0; t_max + 1];
    y[0] = 1.0;
    for t in 1..=t_max {
        let mut acc = 0.0;
        for s in 1..=t {
            acc += b[s] * y[t - s];
        }
        y[t] = acc;
    }
    Ok(y.iter().enumerate().map(|(t, &v)| v.ln() + c * t as f64).collect())
}

/// Root of `sum_{s>=1} e^{la[s] - c s} = 1` over the finite table.
fn truncated_root(la: &[f64]) -> f64 {
    let f = |c: f64| -> f64 {
        la.iter()
            .enumerate()
            .skip(1)
            .map(|(s, &l)| (l - c * s as f64).exp())
            .sum::<f64>()
    };
    let top = la
        .iter()
        .enumerate()
        .skip(1)
        .map(|(s, &l)| l / s as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return 0.0;
    }
    // f(top) >= 1 and f(top + ln(len)) <= 1.
    let (mut lo, mut hi) = (top, top + (la.len() as f64).ln() + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

pub fn zc_table(model: &Model, t_max: usize) -> Result<ExactTables> {
    Ok(ExactTables {
        log_zc: log_zc(model.weights(), t_max)?,
        dp: None,
    })
}

/// `zc_table` together with the reward recursion.
pub fn exact_tables(model: &Model, t_max: usize) -> Result<ExactTables> {
    Ok(ExactTables {
        log_zc: log_zc(model.weights(), t_max)?,
        dp: Some(RewardTable::new(model, t_max)?),
    })
}

/// Integer rewards `f(1..=t_max)`, if the model has them.
pub fn integer_rewards(model: &Model, t_max: usize) -> Result<Vec<i64>> {
    if model.dim() != 1 {
        return Err(Error::NotApplicable("reward recursion needs scalar rewards".into()));
    }
    let mut out = vec![0i64; t_max + 1];
    for s in 1..=t_max as u64 {
        if model.log_weight(s) == f64::NEG_INFINITY {
            continue;
        }
        let f = model.reward(s)[0];
        if f.fract() != 0.0 || f.abs() > 1e15 {
            return Err(Error::NotApplicable(format!("reward f({s}) = {f} is not an integer")));
        }
        out[s as usize] = f as i64;
    }
    Ok(out)
}

const BLOCK: usize = 32;

/// One time slice of the reward recursion: weights of `W_t = offset + i`
/// stored in blocks of `BLOCK` entries, each with its own log scale.
#[derive(Clone, Debug)]
struct Row {
    offset: i64,
    len: usize,
    mant: Vec<f64>,
    scale: Vec<f64>,
}

impl Row {
    fn empty() -> Self {
        Row {
            offset: 0,
            len: 0,
            mant: vec![],
            scale: vec![],
        }
    }

    fn log_at(&self, i: usize) -> f64 {
        let m = self.mant[i];
        if m > 0.0 {
            self.scale[i / BLOCK] + m.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Weights `sum over paths with W_t = n` of `prod a(s_i)`, for all
/// `t <= t_max` and every reachable integer `n`.
///
/// Entries are exact up to rounding except those more than about 700 nats
/// below the largest entry of their 32-wide block, which flush to zero.
#[derive(Clone, Debug)]
pub struct RewardTable {
    rows: Vec<Row>,
}

impl RewardTable {
    pub fn new(model: &Model, t_max: usize) -> Result<Self> {
        if t_max > MAX_T_REWARD {
            return Err(Error::Domain(format!("horizon {t_max} exceeds {MAX_T_REWARD}")));
        }
        let f = integer_rewards(model, t_max)?;
        let la = log_weights(model.weights(), t_max);
        let mut rows: Vec<Row> = Vec::with_capacity(t_max + 1);
        rows.push(Row {
            offset: 0,
            len: 1,
            mant: {
                let mut v = vec![0.0; BLOCK];
                v[0] = 1.0;
                v
            },
            scale: vec![0.0],
        });
        for t in 1..=t_max {
            let sources: Vec<usize> = (1..=t)
                .filter(|&s| la[s] > f64::NEG_INFINITY && rows[t - s].len > 0)
                .collect();
            if sources.is_empty() {
                rows.push(Row::empty());
                continue;
            }
            let lo = sources.iter().map(|&s| rows[t - s].offset + f[s]).min().unwrap();
            let hi = sources
                .iter()
                .map(|&s| rows[t - s].offset + f[s] + rows[t - s].len as i64 - 1)
                .max()
                .unwrap();
            let len = (hi - lo + 1) as usize;
            let nb = len.div_ceil(BLOCK);
            let mut scale = vec![f64::NEG_INFINITY; nb];
            // Destination index of source entry i is i + shift.
            let shift_of = |s: usize| (rows[t - s].offset + f[s] - lo) as usize;
            for &s in &sources {
                let src = &rows[t - s];
                let sh = shift_of(s);
                for (c, &sc) in src.scale.iter().enumerate() {
                    if sc == f64::NEG_INFINITY {
                        continue;
                    }
                    let first = c * BLOCK + sh;
                    let last = (c * BLOCK + BLOCK - 1).min(src.len - 1) + sh;
                    let v = la[s] + sc;
                    for b in first / BLOCK..=last / BLOCK {
                        if v > scale[b] {
                            scale[b] = v;
                        }
                    }
                }
            }
            let mut mant = vec![0.0; nb * BLOCK];
            for &s in &sources {
                let src = &rows[t - s];
                let sh = shift_of(s);
                for (c, &sc) in src.scale.iter().enumerate() {
                    if sc == f64::NEG_INFINITY {
                        continue;
                    }
                    let i0 = c * BLOCK;
                    let i1 = (i0 + BLOCK).min(src.len);
                    let mut i = i0;
                    while i < i1 {
                        let d = i + sh;
                        let b = d / BLOCK;
                        let stop = i1.min(i + (b + 1) * BLOCK - d);
                        let alpha = (la[s] + sc - scale[b]).exp();
                        if alpha > 0.0 {
                            let dst = &mut mant[d..d + (stop - i)];
                            for (x, y) in dst.iter_mut().zip(&src.mant[i..stop]) {
                                *x += alpha * y;
                            }
                        }
                        i = stop;
                    }
                }
            }
            for b in 0..nb {
                let block = &mut mant[b * BLOCK..(b + 1) * BLOCK];
                let m = block.iter().copied().fold(0.0, f64::max);
                if m > 0.0 {
                    block.iter_mut().for_each(|x| *x /= m);
                    scale[b] += m.ln();
                } else {
                    scale[b] = f64::NEG_INFINITY;
                }
            }
            rows.push(Row {
                offset: lo,
                len,
                mant,
                scale,
            });
        }
        Ok(RewardTable { rows })
    }

    pub fn t_max(&self) -> usize {
        self.rows.len() - 1
    }

    /// `ln Z^c_t` as the total of row `t`.
    pub fn log_total(&self, t: usize) -> f64 {
        let row = &self.rows[t];
        log_sum_exp((0..row.len).map(|i| row.log_at(i)))
    }

    /// `P^c_t[W_t = n]` for every reachable `n`.
    pub fn distribution(&self, t: usize) -> Result<RewardDistribution> {
        let row = self
            .rows
            .get(t)
            .ok_or_else(|| Error::Domain(format!("t = {t} beyond table")))?;
        if row.len == 0 {
            return Err(Error::NoPath(t));
        }
        let total = self.log_total(t);
        let log_prob: Vec<f64> = (0..row.len).map(|i| row.log_at(i) - total).collect();
        Ok(RewardDistribution {
            t,
            offset: row.offset,
            log_prob,
        })
    }
}

pub(crate) fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, Serialize)]
pub struct RewardDistribution {
    pub t: usize,
    /// Smallest reachable value of `W_t`.
    pub offset: i64,
    pub log_prob: Vec<f64>,
}

impl RewardDistribution {
    pub fn log_prob_at(&self, n: i64) -> f64 {
        let i = n - self.offset;
        if i < 0 || i as usize >= self.log_prob.len() {
            f64::NEG_INFINITY
        } else {
            self.log_prob[i as usize]
        }
    }

    pub fn prob_at(&self, n: i64) -> f64 {
        self.log_prob_at(n).exp()
    }

    pub fn values(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.log_prob
            .iter()
            .enumerate()
            .map(|(i, &l)| (self.offset + i as i64, l.exp()))
    }

    /// `ln P[W_t in set]` for the values satisfying `pred`.
    pub fn log_prob_where(&self, pred: impl Fn(i64) -> bool) -> f64 {
        let vals: Vec<f64> = self
            .log_prob
            .iter()
            .enumerate()
            .filter(|(i, _)| pred(self.offset + *i as i64))
            .map(|(_, &l)| l)
            .collect();
        log_sum_exp(vals.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.values().map(|(n, p)| n as f64 * p).sum()
    }
}

/// `P^c_t[W_t = n]` for integer scalar rewards.
pub fn dist_w(model: &Model, t: usize) -> Result<RewardDistribution> {
    RewardTable::new(model, t)?.distribution(t)
}

/// `-(1/t) ln P^c_t[W_t = round(w t)]`.
pub fn empirical_rate(table: &RewardTable, t: usize, w: f64) -> Result<f64> {
    let d = table.distribution(t)?;
    Ok(-d.log_prob_at((w * t as f64).round() as i64) / t as f64)
}

/// `u_t = P[U_t = 1]` under the base law: `u_0 = 1`,
/// `u_t = sum_{s<=t} p(s) u_{t-s}`.
pub fn renewal_mass(base: &BaseLaw, t_max: usize) -> Vec<f64> {
    let p: Vec<f64> = (0..=t_max as u64).map(|s| base.p().weight(s)).collect();
    let mut u = vec![0.0; t_max + 1];
    u[0] = 1.0;
    for t in 1..=t_max {
        u[t] = (1..=t).map(|s| p[s] * u[t - s]).sum();
    }
    u
}

/// `P[U_tau = 1 for every tau in times]` under the base law, by a
/// recursion that forbids jumping over any of the given times.
pub fn joint_renewal_probability(base: &BaseLaw, times: &[usize]) -> f64 {
    let mut times: Vec<usize> = times.to_vec();
    times.sort_unstable();
    times.dedup();
    let last = match times.last() {
        Some(&t) => t,
        None => return 1.0,
    };
    let forced: Vec<bool> = {
        let mut v = vec![false; last + 1];
        for &t in &times {
            v[t] = true;
        }
        v
    };
    let p: Vec<f64> = (0..=last as u64).map(|s| base.p().weight(s)).collect();
    let mut q = vec![0.0; last + 1];
    q[0] = 1.0;
    for t in 1..=last {
        let mut acc = 0.0;
        // Walking s upward, stop once a forced time would be skipped.
        for s in 1..=t {
            acc += p[s] * q[t - s];
            if forced[t - s] {
                break;
            }
        }
        q[t] = acc;
    }
    q[last]
}

/// Number of gaps of length exactly `s` between consecutive ones of
/// `u = (u_0, ..., u_t)`:
/// `sum_{tau=1}^{t-s+1} u_{tau-1} prod_{k=tau}^{tau+s-2} (1 - u_k) u_{tau+s-1}`.
pub fn gap_counts(u: &[u8], s: usize) -> usize {
    if s == 0 || u.is_empty() {
        return 0;
    }
    let t = u.len() - 1;
    if s > t {
        return 0;
    }
    let mut count = 0;
    for tau in 1..=t - s + 1 {
        let mut term = u[tau - 1] as usize;
        for k in tau..=tau + s - 2 {
            term *= 1 - u[k] as usize;
        }
        term *= u[tau + s - 1] as usize;
        count += term;
    }
    count
}

#[derive(Clone, Debug, Serialize)]
pub struct MarginalEntry {
    pub u: Vec<u8>,
    pub weight: f64,
    pub prob: f64,
    pub reward: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarginalTable {
    pub t: usize,
    pub total_weight: f64,
    pub entries: Vec<MarginalEntry>,
}

/// All strings `(1, u_1, ..., u_{t-1}, 1)` with weight
/// `prod_s a(s)^{#_{s|t}}`, normalized by their total.
pub fn enumerate_marginal(model: &Model, t: usize) -> Result<MarginalTable> {
    if t == 0 || t > MAX_T_ENUM {
        return Err(Error::Domain(format!("enumeration needs 1 <= t <= {MAX_T_ENUM}")));
    }
    let la: Vec<f64> = (0..=t as u64).map(|s| model.log_weight(s)).collect();
    let f: Vec<Vec<f64>> = (0..=t as u64)
        .map(|s| if s == 0 { vec![] } else { model.reward(s) })
        .collect();
    let d = model.dim();
    let mut entries = Vec::with_capacity(1 << (t - 1));
    for mask in 0u32..(1 << (t - 1)) {
        let mut u = vec![0u8; t + 1];
        u[0] = 1;
        u[t] = 1;
        for i in 1..t {
            u[i] = ((mask >> (i - 1)) & 1) as u8;
        }
        let mut logw = 0.0;
        let mut reward = vec![0.0; d];
        for s in 1..=t {
            let c = gap_counts(&u, s);
            if c > 0 {
                logw += c as f64 * la[s];
                for (r, x) in reward.iter_mut().zip(&f[s]) {
                    *r += c as f64 * x;
                }
            }
        }
        entries.push(MarginalEntry {
            u,
            weight: logw.exp(),
            prob: 0.0,
            reward,
        });
    }
    let total: f64 = entries.iter().map(|e| e.weight).sum();
    if total == 0.0 {
        return Err(Error::NoPath(t));
    }
    for e in &mut entries {
        e.prob = e.weight / total;
    }
    Ok(MarginalTable {
        t,
        total_weight: total,
        entries,
    })
}
