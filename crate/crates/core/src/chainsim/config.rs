use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use super::SimError;
use crate::dsl::ast::ContractAst;
use crate::transform::TransformConfig;
use crate::value::Value;

pub const DEFAULT_LOCK_CHAIN: &str = "locks";

/// A complete simulation scenario, normally read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default = "default_interval")]
    pub block_interval_ticks: u64,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    #[serde(default)]
    pub chains: Vec<ChainSpec>,
    /// Chain hosting the lock registry. Falls back to `transform.lock_chain`,
    /// then to `"locks"`. It may be listed in `chains` to set its miner count.
    #[serde(default)]
    pub lock_chain: Option<String>,
    #[serde(default)]
    pub contracts: Vec<Deployment>,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    /// Rewriting options for deployments with `transform = true`.
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default)]
    pub clients: Vec<ClientSpec>,
}

fn default_interval() -> u64 {
    10
}

fn default_max_ticks() -> u64 {
    1000
}

fn default_gas() -> u64 {
    100
}

fn default_balance() -> u64 {
    1000
}

fn default_true() -> bool {
    true
}

fn default_retry() -> u64 {
    10
}

fn default_oracle_address() -> String {
    "oracle".to_string()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub id: String,
    #[serde(default = "one")]
    pub miners: u32,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deployment {
    /// Address of the deployed object.
    pub name: String,
    /// Contract source file name.
    pub file: String,
    pub chain: String,
    pub deployer: String,
    #[serde(default)]
    pub value: u64,
    #[serde(default = "default_gas")]
    pub gas: u64,
    #[serde(default)]
    pub data: BTreeMap<String, Value>,
    #[serde(default)]
    pub transform: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub service: String,
    #[serde(default = "default_oracle_address")]
    pub address: String,
    /// Inclusive `[min, max]` delay between request commit and response.
    pub response_delay_ticks: [u64; 2],
    #[serde(default)]
    pub drop_probability: f64,
    pub values: OracleValues,
}

/// Values the oracle answers with: a script consumed in request order
/// (cycling when exhausted) or a seeded uniform draw.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleValues {
    Script(Vec<u64>),
    Uniform { lo: u64, hi: u64 },
}

impl fmt::Display for OracleValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleValues::Script(v) => write!(f, "{v:?}"),
            OracleValues::Uniform { lo, hi } => write!(f, "uniform {lo}..{hi}"),
        }
    }
}

impl OracleValues {
    fn parse_uniform(s: &str) -> Option<OracleValues> {
        let range = s.strip_prefix("uniform")?.trim();
        let (lo, hi) = range.split_once("..")?;
        let lo = lo.trim().parse().ok()?;
        let hi = hi.trim().parse().ok()?;
        (lo <= hi).then_some(OracleValues::Uniform { lo, hi })
    }
}

impl Serialize for OracleValues {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            OracleValues::Script(v) => v.serialize(s),
            OracleValues::Uniform { .. } => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for OracleValues {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Script(Vec<u64>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Script(v) if !v.is_empty() => Ok(OracleValues::Script(v)),
            Raw::Script(_) => Err(serde::de::Error::custom("oracle value script is empty")),
            Raw::Text(s) => OracleValues::parse_uniform(&s)
                .ok_or_else(|| serde::de::Error::custom(format!("expected \"uniform LO..HI\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSpec {
    pub id: String,
    #[serde(default = "default_balance")]
    pub balance: u64,
    #[serde(default)]
    pub spans: Vec<SpanSpec>,
}

/// One client transaction: observe some attributes, then call a function.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanSpec {
    /// Defaults to `<client>-<n>` with `n` counting from 1.
    #[serde(default)]
    pub id: Option<String>,
    pub contract: String,
    pub call: String,
    #[serde(default)]
    pub observe: Vec<String>,
    /// Tick of the observations; defaults to `issue_at`.
    #[serde(default)]
    pub observe_at: Option<u64>,
    pub issue_at: u64,
    #[serde(default)]
    pub value: u64,
    #[serde(default = "default_gas")]
    pub gas: u64,
    #[serde(default = "default_gas")]
    pub callback_gas: u64,
    #[serde(default)]
    pub data: BTreeMap<String, Value>,
    /// Copy observed values into `msg.data` under the attribute names.
    #[serde(default = "default_true")]
    pub attach_observed: bool,
    /// Acquire the call's lock footprint on the lock chain before calling.
    #[serde(default)]
    pub lock: bool,
    #[serde(default = "default_retry")]
    pub lock_retry_ticks: u64,
    /// Pass the lock id held by that span as `msg.data.lock_id`.
    #[serde(default)]
    pub recover_lock_of: Option<String>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn lock_chain_id(&self) -> String {
        self.lock_chain.clone().unwrap_or_else(|| {
            if self.transform.lock_chain.is_empty() {
                DEFAULT_LOCK_CHAIN.to_string()
            } else {
                self.transform.lock_chain.clone()
            }
        })
    }

    pub fn span_id(client: &ClientSpec, index: usize) -> String {
        client.spans[index].id.clone().unwrap_or_else(|| format!("{}-{}", client.id, index + 1))
    }

    /// Checks cross references against the compiled contracts, keyed by
    /// deployment name.
    pub fn validate(&self, contracts: &BTreeMap<String, ContractAst>) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(m));
        if self.block_interval_ticks == 0 {
            return err("block_interval_ticks must be positive".into());
        }
        let lock_chain = self.lock_chain_id();
        let mut chains = BTreeSet::new();
        for c in &self.chains {
            if !chains.insert(c.id.as_str()) {
                return err(format!("duplicate chain `{}`", c.id));
            }
            if c.miners == 0 {
                return err(format!("chain `{}` has no miners", c.id));
            }
        }
        let mut deployed = BTreeSet::new();
        for d in &self.contracts {
            if !deployed.insert(d.name.as_str()) {
                return err(format!("duplicate deployment `{}`", d.name));
            }
            if !chains.contains(d.chain.as_str()) || d.chain == lock_chain {
                return err(format!("deployment `{}` targets unknown or lock chain `{}`", d.name, d.chain));
            }
            let Some(ast) = contracts.get(&d.name) else {
                return err(format!("no compiled contract for deployment `{}`", d.name));
            };
            if ast.function("constructor").is_none() && (d.value > 0 || !d.data.is_empty()) {
                return err(format!("deployment `{}` passes constructor input but has no constructor", d.name));
            }
        }
        if let Some(o) = &self.oracle {
            if o.response_delay_ticks[0] > o.response_delay_ticks[1] {
                return err("oracle response_delay_ticks must be [min, max]".into());
            }
            if !(0.0..=1.0).contains(&o.drop_probability) {
                return err("oracle drop_probability must lie in [0, 1]".into());
            }
        }
        let mut clients = BTreeSet::new();
        let mut span_ids = BTreeSet::new();
        for c in &self.clients {
            if !clients.insert(c.id.as_str()) {
                return err(format!("duplicate client `{}`", c.id));
            }
            for i in 0..c.spans.len() {
                if !span_ids.insert(Self::span_id(c, i)) {
                    return err(format!("duplicate span id `{}`", Self::span_id(c, i)));
                }
            }
        }
        for c in &self.clients {
            for s in &c.spans {
                let Some(ast) = contracts.get(&s.contract).filter(|_| deployed.contains(s.contract.as_str())) else {
                    return err(format!("client `{}` calls undeployed contract `{}`", c.id, s.contract));
                };
                if ast.function(&s.call).is_none() {
                    return err(format!("`{}` has no function `{}`", s.contract, s.call));
                }
                if let Some(a) = s.observe.iter().find(|a| ast.attribute(a).is_none()) {
                    return err(format!("`{}` has no attribute `{a}` to observe", s.contract));
                }
                if s.observe_at.is_some_and(|t| t > s.issue_at) {
                    return err(format!("client `{}` observes after issuing", c.id));
                }
                if let Some(r) = &s.recover_lock_of {
                    if !span_ids.contains(r) {
                        return err(format!("recover_lock_of names unknown span `{r}`"));
                    }
                }
            }
        }
        Ok(())
    }
}
