//! Pinning models: Boltzmann weights on waiting times, vector rewards, base
//! laws, and the assumption checks that make the large deviation theory
//! applicable.
//!
//! Weights and rewards are stored as a finite head table `s = 1..=S_head`
//! plus an optional analytic tail for `s > S_head`:
//!
//! ```text
//! a(s) = A (s - h)^(-gamma) e^(ell s)
//! f(s) = r s + kappa0 + kappa1 ln(s - h)
//! ```
//!
//! The integer shift `h` (default 0) lets loop-entropy models such as
//! `sigma_{s-1}` be represented without truncation.

mod base;
pub mod file;
pub mod presets;

pub use base::{eta_normalize, BaseLaw, Normalization};

use serde::Serialize;

use crate::error::{Error, Result};

/// Highest supported reward dimension.
pub const MAX_DIM: usize = 4;

/// Number of explicit tail terms inspected when bounding suprema over the
/// tail; beyond the scan a monotone analytic bound takes over.
const TAIL_SCAN: u64 = 4096;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailSpec {
    pub amplitude: f64,
    pub power: f64,
    pub rate: f64,
    pub shift: u64,
}

impl TailSpec {
    pub fn new(amplitude: f64, power: f64, rate: f64) -> Result<Self> {
        Self::with_shift(amplitude, power, rate, 0)
    }

    pub fn with_shift(amplitude: f64, power: f64, rate: f64, shift: u64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "tail amplitude must be positive and finite, got {amplitude}"
            )));
        }
        if !power.is_finite() || !rate.is_finite() {
            return Err(Error::InvalidModel("tail power and rate must be finite".into()));
        }
        Ok(TailSpec {
            amplitude,
            power,
            rate,
            shift,
        })
    }

    /// `ln a(s)` for a tail index `s > shift`.
    pub fn log_weight(&self, s: u64) -> f64 {
        let m = (s - self.shift) as f64;
        self.amplitude.ln() - self.power * m.ln() + self.rate * s as f64
    }
}

/// Boltzmann weights `a(s) = e^{v(s)} p(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightModel {
    head: Vec<f64>,
    tail: Option<TailSpec>,
}

impl WeightModel {
    pub fn new(head: Vec<f64>, tail: Option<TailSpec>) -> Result<Self> {
        if let Some((i, x)) = head.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidModel(format!(
                "weight a({}) = {x} is not a finite non-negative number",
                i + 1
            )));
        }
        match &tail {
            None => {
                if head.iter().all(|&x| x == 0.0) {
                    return Err(Error::InvalidModel("weights have empty support".into()));
                }
            }
            Some(t) => {
                if t.shift > head.len() as u64 {
                    return Err(Error::InvalidModel(format!(
                        "tail shift {} exceeds head length {}",
                        t.shift,
                        head.len()
                    )));
                }
            }
        }
        Ok(WeightModel { head, tail })
    }

    pub fn head(&self) -> &[f64] {
        &self.head
    }

    pub fn head_len(&self) -> usize {
        self.head.len()
    }

    pub fn tail(&self) -> Option<&TailSpec> {
        self.tail.as_ref()
    }

    /// Exponential rate of the tail, `-inf` for finite support.
    pub fn ell(&self) -> f64 {
        self.tail.as_ref().map_or(f64::NEG_INFINITY, |t| t.rate)
    }

    pub fn weight(&self, s: u64) -> f64 {
        if s == 0 {
            return 0.0;
        }
        match self.head.get(s as usize - 1) {
            Some(&x) => x,
            None => self.log_weight(s).exp(),
        }
    }

    pub fn log_weight(&self, s: u64) -> f64 {
        if s == 0 {
            return f64::NEG_INFINITY;
        }
        match self.head.get(s as usize - 1) {
            Some(&x) => x.ln(),
            None => match &self.tail {
                Some(t) => t.log_weight(s),
                None => f64::NEG_INFINITY,
            },
        }
    }

    /// Head support in increasing order.
    pub fn head_support(&self) -> impl Iterator<Item = u64> + '_ {
        self.head
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(i, _)| i as u64 + 1)
    }

    pub fn smallest_support(&self) -> u64 {
        self.head_support().next().unwrap_or(self.head.len() as u64 + 1)
    }

    /// Greatest common divisor of the support (1 whenever a tail is present).
    pub fn support_gcd(&self) -> u64 {
        if self.tail.is_some() {
            return 1;
        }
        self.head_support().fold(0, gcd)
    }

    /// Multiplies every weight by `e^c`.
    pub fn scaled(&self, c: f64) -> WeightModel {
        let f = c.exp();
        WeightModel {
            head: self.head.iter().map(|x| x * f).collect(),
            tail: self.tail.as_ref().map(|t| TailSpec {
                amplitude: t.amplitude * f,
                ..t.clone()
            }),
        }
    }

    /// Multiplies every weight by `e^{-c s}`.
    pub fn exp_tilted(&self, c: f64) -> WeightModel {
        WeightModel {
            head: self
                .head
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    if *x > 0.0 {
                        (x.ln() - c * (i + 1) as f64).exp()
                    } else {
                        0.0
                    }
                })
                .collect(),
            tail: self.tail.as_ref().map(|t| TailSpec {
                rate: t.rate - c,
                ..t.clone()
            }),
        }
    }

    /// A constant `z_o` with `a(s) <= e^{z_o s}` for every `s`.
    pub fn extensivity_witness(&self) -> f64 {
        let mut z = f64::NEG_INFINITY;
        for s in self.head_support() {
            z = z.max(self.head[s as usize - 1].ln() / s as f64);
        }
        if let Some(t) = &self.tail {
            let s_head = self.head.len() as u64;
            for s in s_head + 1..=s_head + TAIL_SCAN {
                z = z.max(t.log_weight(s) / s as f64);
            }
            // For s >= s1 the map s -> (ln A - gamma ln(s-h))/s is dominated
            // by a decreasing bound.
            let s1 = (s_head + TAIL_SCAN + 1) as f64;
            let la = t.amplitude.ln().max(0.0);
            let g = (-t.power).max(0.0);
            z = z.max(t.rate + (la + g * (s1 - t.shift as f64).ln()) / s1);
        }
        z
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Vector rewards `f(s)`: a head table plus the tail
/// `r s + kappa0 + kappa1 ln(s - h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardSpec {
    head: Vec<Vec<f64>>,
    slope: Vec<f64>,
    offset: Vec<f64>,
    log_coef: Vec<f64>,
}

impl RewardSpec {
    pub fn new(head: Vec<Vec<f64>>, slope: Vec<f64>, offset: Vec<f64>, log_coef: Vec<f64>) -> Result<Self> {
        let d = slope.len();
        if offset.len() != d || log_coef.len() != d {
            return Err(Error::InvalidModel(
                "reward tail vectors have inconsistent lengths".into(),
            ));
        }
        if let Some(i) = head.iter().position(|v| v.len() != d) {
            return Err(Error::InvalidModel(format!(
                "reward f({}) has dimension {} but the tail has dimension {d}",
                i + 1,
                head[i].len()
            )));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !head.iter().all(|v| finite(v)) || !finite(&slope) || !finite(&offset) || !finite(&log_coef) {
            return Err(Error::InvalidModel("reward values must be finite".into()));
        }
        Ok(RewardSpec {
            head,
            slope,
            offset,
            log_coef,
        })
    }

    /// Scalar reward `f(s) = 1`, counting renewals.
    pub fn counting(head_len: usize) -> Self {
        RewardSpec {
            head: vec![vec![1.0]; head_len],
            slope: vec![0.0],
            offset: vec![1.0],
            log_coef: vec![0.0],
        }
    }

    /// Scalar reward given by a head table and an affine-logarithmic tail.
    pub fn scalar(head: Vec<f64>, slope: f64, offset: f64, log_coef: f64) -> Result<Self> {
        Self::new(
            head.into_iter().map(|x| vec![x]).collect(),
            vec![slope],
            vec![offset],
            vec![log_coef],
        )
    }

    /// Stacks scalar or vector rewards component-wise.
    pub fn stack(parts: &[&RewardSpec]) -> Result<Self> {
        let n = parts.first().map_or(0, |p| p.head.len());
        if parts.iter().any(|p| p.head.len() != n) {
            return Err(Error::InvalidModel("stacked rewards differ in head length".into()));
        }
        let cat = |get: &dyn Fn(&RewardSpec) -> &Vec<f64>| -> Vec<f64> {
            parts.iter().flat_map(|p| get(p).iter().copied()).collect()
        };
        let head = (0..n)
            .map(|i| parts.iter().flat_map(|p| p.head[i].iter().copied()).collect())
            .collect();
        Self::new(head, cat(&|p| &p.slope), cat(&|p| &p.offset), cat(&|p| &p.log_coef))
    }

    pub fn dim(&self) -> usize {
        self.slope.len()
    }

    pub fn head(&self) -> &[Vec<f64>] {
        &self.head
    }

    pub fn slope(&self) -> &[f64] {
        &self.slope
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn log_coef(&self) -> &[f64] {
        &self.log_coef
    }
}

/// Whether each modelling assumption holds, with the derived constants.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub ell: f64,
    pub z_o: f64,
    pub m_bound: f64,
    pub r: Vec<f64>,
    pub support_gcd: u64,
    pub dim: usize,
    pub aperiodic: bool,
    pub extensive: bool,
    pub rewards_linear: bool,
    pub passes: bool,
    pub messages: Vec<String>,
}

/// A weight model together with its rewards and the derived constants.
#[derive(Clone, Debug)]
pub struct Model {
    weights: WeightModel,
    rewards: RewardSpec,
    r: Vec<f64>,
    z_o: f64,
    m_bound: f64,
}

impl Model {
    pub fn new(weights: WeightModel, rewards: RewardSpec) -> Result<Self> {
        let d = rewards.dim();
        if d > MAX_DIM {
            return Err(Error::UnsupportedDimension(d));
        }
        if rewards.head.len() < weights.head_len() {
            return Err(Error::InvalidModel(format!(
                "rewards cover {} head entries but the weights have {}",
                rewards.head.len(),
                weights.head_len()
            )));
        }
        let mut rewards = rewards;
        rewards.head.truncate(weights.head_len());
        let r = if weights.tail().is_some() {
            rewards.slope.clone()
        } else {
            let s_o = weights.smallest_support();
            rewards.head[s_o as usize - 1].iter().map(|x| x / s_o as f64).collect()
        };
        let mut model = Model {
            weights,
            rewards,
            r,
            z_o: 0.0,
            m_bound: 0.0,
        };
        model.z_o = model.weights.extensivity_witness();
        model.m_bound = model.compute_m_bound();
        Ok(model)
    }

    /// Scalar counting model `f = 1`.
    pub fn counting(weights: WeightModel) -> Self {
        let rewards = RewardSpec::counting(weights.head_len());
        Model::new(weights, rewards).expect("counting rewards are always consistent")
    }

    fn compute_m_bound(&self) -> f64 {
        let mut m: f64 = 0.0;
        let mut buf = vec![0.0; self.dim()];
        for s in self.weights.head_support() {
            m = m.max(norm(&self.rewards.head[s as usize - 1]) / s as f64);
        }
        if let Some(t) = self.weights.tail() {
            let s_head = self.weights.head_len() as u64;
            for s in s_head + 1..=s_head + TAIL_SCAN {
                self.reward_into(s, &mut buf);
                m = m.max(norm(&buf) / s as f64);
            }
            let s1 = (s_head + TAIL_SCAN + 1) as f64;
            let bound = norm(&self.rewards.slope)
                + (norm(&self.rewards.offset) + norm(&self.rewards.log_coef) * (s1 - t.shift as f64).ln()) / s1;
            m = m.max(bound);
        }
        m
    }

    pub fn weights(&self) -> &WeightModel {
        &self.weights
    }

    pub fn rewards(&self) -> &RewardSpec {
        &self.rewards
    }

    pub fn dim(&self) -> usize {
        self.rewards.dim()
    }

    pub fn ell(&self) -> f64 {
        self.weights.ell()
    }

    /// Limit of `f(s)/s`.
    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn z_o(&self) -> f64 {
        self.z_o
    }

    /// Bound on `|f(s)|/s` over all `s`.
    pub fn m_bound(&self) -> f64 {
        self.m_bound
    }

    pub fn head_len(&self) -> usize {
        self.weights.head_len()
    }

    pub fn has_tail(&self) -> bool {
        self.weights.tail().is_some()
    }

    pub fn log_weight(&self, s: u64) -> f64 {
        self.weights.log_weight(s)
    }

    pub fn reward_into(&self, s: u64, out: &mut [f64]) {
        if let Some(v) = self.rewards.head.get(s as usize - 1) {
            out.copy_from_slice(v);
            return;
        }
        let h = self.weights.tail().map_or(0, |t| t.shift);
        let l = ((s - h) as f64).ln();
        for i in 0..out.len() {
            out[i] = self.rewards.slope[i] * s as f64 + self.rewards.offset[i] + self.rewards.log_coef[i] * l;
        }
    }

    pub fn reward(&self, s: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.reward_into(s, &mut out);
        out
    }

    /// Replaces the rewards, keeping the weights.
    pub fn with_rewards(&self, rewards: RewardSpec) -> Result<Model> {
        Model::new(self.weights.clone(), rewards)
    }

    pub fn validate(&self) -> ValidationReport {
        let gcd = self.weights.support_gcd();
        let aperiodic = gcd == 1;
        let extensive = self.z_o.is_finite();
        let rewards_linear = self.m_bound.is_finite() && self.r.iter().all(|x| x.is_finite());
        let mut messages = Vec::new();
        if !aperiodic {
            messages.push(format!("support is periodic with period {gcd}"));
        }
        if !extensive {
            messages.push("weights grow faster than exponentially".into());
        }
        if !rewards_linear {
            messages.push("rewards are not of linear order".into());
        }
        ValidationReport {
            ell: self.ell(),
            z_o: self.z_o,
            m_bound: self.m_bound,
            r: self.r.clone(),
            support_gcd: gcd,
            dim: self.dim(),
            aperiodic,
            extensive,
            rewards_linear,
            passes: aperiodic && extensive && rewards_linear,
            messages,
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometric() -> Model {
        let w = WeightModel::new(vec![], Some(TailSpec::new(1.0, 0.0, -(2f64.ln())).unwrap())).unwrap();
        Model::counting(w)
    }

    #[test]
    fn geometric_constants() {
        let rep = geometric().validate();
        assert!(rep.passes);
        assert_eq!(rep.ell, -(2f64.ln()));
        assert_eq!(rep.r, vec![0.0]);
        assert!((rep.m_bound - 1.0).abs() < 1e-15);
        assert!((rep.z_o + 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn periodic_support_fails() {
        let w = WeightModel::new(vec![0.0, 1.0, 0.0, 1.0], None).unwrap();
        let rep = Model::counting(w).validate();
        assert!(!rep.passes);
        assert_eq!(rep.support_gcd, 2);
        assert_eq!(rep.ell, f64::NEG_INFINITY);
    }

    #[test]
    fn single_atom_sets_r_from_smallest_support() {
        let w = WeightModel::new(vec![1.0], None).unwrap();
        let m = Model::new(w, RewardSpec::scalar(vec![3.0], 0.0, 0.0, 0.0).unwrap()).unwrap();
        let rep = m.validate();
        assert!(rep.passes);
        assert_eq!(rep.r, vec![3.0]);
    }

    #[test]
    fn dimension_cap() {
        let w = WeightModel::new(vec![1.0], None).unwrap();
        let f = RewardSpec::new(vec![vec![1.0; 5]], vec![0.0; 5], vec![0.0; 5], vec![0.0; 5]).unwrap();
        assert!(matches!(Model::new(w, f), Err(Error::UnsupportedDimension(5))));
    }

    #[test]
    fn shifted_tail_rewards() {
        let w = WeightModel::new(vec![1.0, 1.0], Some(TailSpec::with_shift(1.0, 2.0, -1.0, 1).unwrap())).unwrap();
        let f = RewardSpec::scalar(vec![0.0, 0.0], 0.5, 0.25, -2.0).unwrap();
        let m = Model::new(w, f).unwrap();
        let v = m.reward(5)[0];
        assert!((v - (2.5 + 0.25 - 2.0 * 4f64.ln())).abs() < 1e-15);
        assert!((m.log_weight(5) - (-2.0 * 4f64.ln() - 5.0)).abs() < 1e-15);
    }
}
