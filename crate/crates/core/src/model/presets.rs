//! Statistical-mechanics models as pinning models: Poland-Scheraga DNA
//! melting, the cluster (Fisher-Felderhof / Tokar-Dreysse) family, the
//! homogeneous WSME protein model, and three reference laws.

use super::{eta_normalize, BaseLaw, Model, RewardSpec, TailSpec, WeightModel};
use crate::error::{Error, Result};
use crate::series::polylog;

/// A built preset: base law, Boltzmann weights and a named reward catalog.
#[derive(Clone, Debug)]
pub struct Preset {
    pub kind: &'static str,
    /// Normalization constant in the preset's own sign convention.
    pub eta: f64,
    pub base: BaseLaw,
    pub weights: WeightModel,
    pub rewards: Vec<(String, RewardSpec)>,
}

impl Preset {
    pub fn reward(&self, name: &str) -> Result<&RewardSpec> {
        self.rewards
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r)
            .ok_or_else(|| {
                let names: Vec<&str> = self.rewards.iter().map(|(n, _)| n.as_str()).collect();
                Error::InvalidModel(format!(
                    "preset {} has no reward {name:?}; available: {}",
                    self.kind,
                    names.join(", ")
                ))
            })
    }

    pub fn model(&self, reward: &str) -> Result<Model> {
        Model::new(self.weights.clone(), self.reward(reward)?.clone())
    }

    /// Renewal-count model `f = 1`.
    pub fn counting_model(&self) -> Model {
        Model::counting(self.weights.clone())
    }
}

fn with_constant_potential(base: BaseLaw, v: f64) -> Result<(BaseLaw, WeightModel)> {
    let n = base.p().head_len();
    let base = base.with_potential(vec![v; n], v)?;
    let weights = base.weights();
    Ok((base, weights))
}

/// Poland-Scheraga: loop weights `p(s) = e^{sigma_{s-1} - eta s}` with
/// `sigma_l = a l + b - c ln l`, `sigma_0 = 0`, and potential `-eps`.
pub fn make_poland_scheraga(a: f64, b: f64, c: f64, eps: f64, s_head: usize) -> Result<Preset> {
    if !(c >= 0.0) || ![a, b, c, eps].iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidModel(
            "Poland-Scheraga needs finite a, b, eps and c >= 0".into(),
        ));
    }
    if s_head < 2 {
        return Err(Error::InvalidModel(
            "Poland-Scheraga needs a head of length >= 2".into(),
        ));
    }
    let sigma = |l: usize| {
        if l == 0 {
            0.0
        } else {
            a * l as f64 + b - c * (l as f64).ln()
        }
    };
    let head: Vec<f64> = (1..=s_head).map(|s| sigma(s - 1).exp()).collect();
    let tail = TailSpec::with_shift((b - a).exp(), c, a, 1)?;
    let raw = WeightModel::new(head, Some(tail))?;
    let norm = eta_normalize(&raw)?;
    let (base, weights) = with_constant_potential(norm.base, -eps)?;

    let count = RewardSpec::counting(s_head);
    let entropy = RewardSpec::scalar((1..=s_head).map(|s| sigma(s - 1)).collect(), a, b - a, -c)?;
    let pair = RewardSpec::stack(&[&count, &entropy])?;
    Ok(Preset {
        kind: "poland_scheraga",
        eta: norm.eta,
        base,
        weights,
        rewards: vec![
            ("count".into(), count),
            ("loop_entropy".into(), entropy),
            ("pair".into(), pair),
        ],
    })
}

/// Cluster models: `p(s) = e^{eta s - E_{s-1}}` with `E_0 = 0`, head energies
/// `E_1..E_L`, and `E_l = E_L + eta_o (l - L)` beyond. Potential `-mu`.
pub fn make_cluster_model(energies: &[f64], eta_o: f64, mu: f64) -> Result<Preset> {
    build_cluster("cluster", energies, eta_o, -mu)
}

fn build_cluster(kind: &'static str, energies: &[f64], eta_o: f64, v: f64) -> Result<Preset> {
    if !energies.iter().chain([&eta_o, &v]).all(|x| x.is_finite()) {
        return Err(Error::InvalidModel("cluster energies and slope must be finite".into()));
    }
    let big_l = energies.len();
    let energy = |l: usize| if l == 0 { 0.0 } else { energies[l - 1] };
    if big_l >= 1 {
        let inc = energy(big_l) - energy(big_l - 1);
        if (inc - eta_o).abs() > 1e-9 * (1.0 + eta_o.abs()) {
            return Err(Error::InvalidModel(format!(
                "last head increment E_{big_l} - E_{} = {inc} disagrees with the tail slope {eta_o}",
                big_l - 1
            )));
        }
    }
    let s_head = big_l + 1;
    let head: Vec<f64> = (1..=s_head).map(|s| (-energy(s - 1)).exp()).collect();
    let e_last = energy(big_l);
    let tail = TailSpec::new((-e_last + eta_o * s_head as f64).exp(), 0.0, -eta_o)?;
    let raw = WeightModel::new(head, Some(tail))?;
    let norm = eta_normalize(&raw)?;
    let (base, weights) = with_constant_potential(norm.base, v)?;

    let count = RewardSpec::counting(s_head);
    let total = RewardSpec::scalar(
        (1..=s_head).map(|s| energy(s - 1)).collect(),
        eta_o,
        e_last - eta_o * s_head as f64,
        0.0,
    )?;
    Ok(Preset {
        kind,
        eta: -norm.eta,
        base,
        weights,
        rewards: vec![("count".into(), count), ("energy".into(), total)],
    })
}

/// Homogeneous WSME: `E_l = sum_{s<=l} (l - s) eps_s` from couplings
/// `eps_1..eps_K` (zero beyond), potential `sigma`.
pub fn make_wsme(couplings: &[f64], sigma: f64) -> Result<Preset> {
    let energies = wsme_energies(couplings);
    let eta_o: f64 = couplings.iter().sum();
    build_cluster("wsme", &energies, eta_o, sigma)
}

/// `E_1..E_{K+1}`; the increments are constant from `E_{K+1}` on.
pub fn wsme_energies(couplings: &[f64]) -> Vec<f64> {
    let k = couplings.len();
    (1..=k + 1)
        .map(|l| {
            couplings
                .iter()
                .enumerate()
                .take(l)
                .map(|(i, e)| (l - (i + 1)) as f64 * e)
                .sum()
        })
        .collect()
}

/// `p(s) = 2^{-s}` with constant potential `beta`.
pub fn geometric(beta: f64) -> Result<Preset> {
    let p = WeightModel::new(vec![], Some(TailSpec::new(1.0, 0.0, -std::f64::consts::LN_2)?))?;
    reference("geometric", p, beta)
}

/// `p(1) = 1` with constant potential `beta`.
pub fn dirac(beta: f64) -> Result<Preset> {
    reference("dirac", WeightModel::new(vec![1.0], None)?, beta)
}

/// `p(s) = s^{-c} / zeta(c)` with constant potential `beta`.
pub fn zeta(c: f64, beta: f64) -> Result<Preset> {
    if !(c > 1.0) {
        return Err(Error::InvalidModel(format!("zeta law needs c > 1, got {c}")));
    }
    let norm = polylog(c, 1.0)?.value;
    let p = WeightModel::new(vec![], Some(TailSpec::new(1.0 / norm, c, 0.0)?))?;
    reference("zeta", p, beta)
}

fn reference(kind: &'static str, p: WeightModel, beta: f64) -> Result<Preset> {
    let base = BaseLaw::with_constant_potential(p, beta)?;
    let weights = base.weights();
    let count = RewardSpec::counting(weights.head_len());
    Ok(Preset {
        kind,
        eta: 0.0,
        base,
        weights,
        rewards: vec![("count".into(), count)],
    })
}
