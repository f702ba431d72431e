//! JSON model description.
//!
//! ```json
//! { "head_weights": [..], "tail": {"A": .., "gamma": .., "ell": .., "shift": 0},
//!   "rewards": {"head": [[..]], "r": [..], "kappa0": [..], "kappa1": [..]},
//!   "base": {"p_head": [..], "p_tail": {..}, "v_head": [..], "v_tail": ..} }
//! ```
//!
//! or `{ "preset": {"name": "poland_scheraga", "c": 2.5, ..., "reward": "count"} }`.

use serde::Deserialize;
use serde_json::{Map, Value};

use super::presets::{self, Preset};
use super::{BaseLaw, Model, RewardSpec, TailSpec, WeightModel};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub head_weights: Option<Vec<f64>>,
    pub tail: Option<TailJson>,
    pub rewards: Option<RewardsJson>,
    pub base: Option<BaseJson>,
    pub preset: Option<Map<String, Value>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailJson {
    #[serde(rename = "A")]
    pub amplitude: f64,
    pub gamma: f64,
    pub ell: f64,
    #[serde(default)]
    pub shift: u64,
}

impl TailJson {
    fn build(&self) -> Result<TailSpec> {
        TailSpec::with_shift(self.amplitude, self.gamma, self.ell, self.shift)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardsJson {
    pub head: Vec<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    pub kappa0: Option<Vec<f64>>,
    pub kappa1: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseJson {
    pub p_head: Vec<f64>,
    pub p_tail: Option<TailJson>,
    pub v_head: Option<Vec<f64>>,
    #[serde(default)]
    pub v_tail: f64,
}

/// A model ready for computation, with whatever extra structure its source
/// provided.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub model: Model,
    pub base: Option<BaseLaw>,
    pub preset: Option<Preset>,
}

pub fn parse_model(text: &str) -> Result<LoadedModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    file.build()
}

impl ModelFile {
    pub fn build(self) -> Result<LoadedModel> {
        if let Some(p) = self.preset {
            if self.head_weights.is_some() || self.tail.is_some() || self.rewards.is_some() || self.base.is_some() {
                return Err(Error::InvalidModel(
                    "a preset excludes explicit weights, rewards and base".into(),
                ));
            }
            let name = p
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::InvalidModel("preset needs a \"name\"".into()))?
                .to_string();
            let mut params = p;
            params.remove("name");
            return load_preset(&name, params);
        }

        let base = match &self.base {
            Some(b) => {
                let p = WeightModel::new(b.p_head.clone(), b.p_tail.as_ref().map(TailJson::build).transpose()?)?;
                let v_head = b.v_head.clone().unwrap_or_else(|| vec![b.v_tail; b.p_head.len()]);
                Some(BaseLaw::new(p, v_head, b.v_tail)?)
            }
            None => None,
        };
        let weights = match (&self.head_weights, &base) {
            (Some(h), _) => WeightModel::new(h.clone(), self.tail.as_ref().map(TailJson::build).transpose()?)?,
            (None, Some(b)) => {
                if self.tail.is_some() {
                    return Err(Error::InvalidModel("\"tail\" given without \"head_weights\"".into()));
                }
                b.weights()
            }
            (None, None) => {
                return Err(Error::InvalidModel(
                    "model needs \"head_weights\", \"base\" or \"preset\"".into(),
                ))
            }
        };
        if let Some(b) = &base {
            check_base_matches(b, &weights)?;
        }
        let rewards = match self.rewards {
            Some(r) => {
                let d = r.head.first().map(Vec::len).or(r.r.as_ref().map(Vec::len)).unwrap_or(1);
                RewardSpec::new(
                    r.head,
                    r.r.unwrap_or_else(|| vec![0.0; d]),
                    r.kappa0.unwrap_or_else(|| vec![0.0; d]),
                    r.kappa1.unwrap_or_else(|| vec![0.0; d]),
                )?
            }
            None => RewardSpec::counting(weights.head_len()),
        };
        Ok(LoadedModel {
            model: Model::new(weights, rewards)?,
            base,
            preset: None,
        })
    }
}

fn check_base_matches(base: &BaseLaw, weights: &WeightModel) -> Result<()> {
    let bw = base.weights();
    let n = bw.head_len().max(weights.head_len()) as u64 + 64;
    for s in 1..=n {
        let (x, y) = (bw.weight(s), weights.weight(s));
        if (x - y).abs() > 1e-12 * x.abs().max(y.abs()) {
            return Err(Error::InvalidModel(format!(
                "base law gives e^v p = {x} at s = {s} but the weights say {y}"
            )));
        }
    }
    if bw.ell() != weights.ell() {
        return Err(Error::InvalidModel(
            "base law and weights have different tail rates".into(),
        ));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PsParams {
    #[serde(default)]
    a: f64,
    #[serde(default)]
    b: f64,
    c: f64,
    #[serde(default, alias = "epsilon")]
    eps: f64,
    #[serde(default = "default_ps_head")]
    s_head: usize,
    reward: Option<String>,
}

fn default_ps_head() -> usize {
    16
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterParams {
    energies: Vec<f64>,
    eta_o: f64,
    #[serde(default)]
    mu: f64,
    reward: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WsmeParams {
    couplings: Vec<f64>,
    #[serde(default)]
    sigma: f64,
    reward: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RefParams {
    #[serde(default)]
    beta: f64,
    c: Option<f64>,
    reward: Option<String>,
}

/// Builds a named preset from a parameter object.
pub fn load_preset(name: &str, params: Map<String, Value>) -> Result<LoadedModel> {
    let v = Value::Object(params);
    let (preset, reward) = match name {
        "poland_scheraga" | "ps" => {
            let p: PsParams = serde_json::from_value(v)?;
            (presets::make_poland_scheraga(p.a, p.b, p.c, p.eps, p.s_head)?, p.reward)
        }
        "cluster" => {
            let p: ClusterParams = serde_json::from_value(v)?;
            (presets::make_cluster_model(&p.energies, p.eta_o, p.mu)?, p.reward)
        }
        "wsme" => {
            let p: WsmeParams = serde_json::from_value(v)?;
            (presets::make_wsme(&p.couplings, p.sigma)?, p.reward)
        }
        "geometric" | "dirac" | "zeta" => {
            let p: RefParams = serde_json::from_value(v)?;
            let preset = match (name, p.c) {
                ("zeta", Some(c)) => presets::zeta(c, p.beta)?,
                ("zeta", None) => return Err(Error::InvalidModel("zeta preset needs \"c\"".into())),
                (_, Some(_)) => return Err(Error::InvalidModel(format!("{name} preset takes no \"c\""))),
                ("geometric", None) => presets::geometric(p.beta)?,
                _ => presets::dirac(p.beta)?,
            };
            (preset, p.reward)
        }
        other => return Err(Error::InvalidModel(format!("unknown preset {other:?}"))),
    };
    let model = preset.model(reward.as_deref().unwrap_or("count"))?;
    Ok(LoadedModel {
        model,
        base: Some(preset.base.clone()),
        preset: Some(preset),
    })
}
