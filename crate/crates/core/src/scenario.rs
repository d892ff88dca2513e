//! Scenario documents.
//!
//! A scenario is a TOML document with decimal strings for every amount.
//! Overrides edit the parsed document before it is interpreted, so an
//! override and the equivalent hand edit produce the same scenario and the
//! same hash.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{
    Agent, Defender, DefenderParams, Governance, GovernanceParams, Liquidator, LiquidatorParams, LoopAttacker,
    LoopParams, PassiveLp, PassiveParams, ShortSqueezer, SqueezerParams, Strategy, Trigger,
};
use crate::fixed::FixedDec;
use crate::oracle::OraclePolicy;
use crate::pool::{AccountId, AssetId, ReserveConfig};
use crate::price_path::PriceScript;
use crate::venue::{Curve, Venue};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("override {path}: {reason}")]
    Override { path: String, reason: String },
    #[error("unknown bundled scenario {0}")]
    UnknownBundled(String),
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { path: path.into(), reason: reason.into() }
}

fn sixty() -> u64 {
    60
}

fn one() -> FixedDec {
    FixedDec::ONE
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "default_heartbeat")]
    pub heartbeat: u64,
    #[serde(default = "default_deviation")]
    pub deviation_threshold: FixedDec,
    #[serde(default)]
    pub delay: u64,
    /// Venue whose spot the feed observes; the scripted price otherwise.
    #[serde(default)]
    pub source: Option<String>,
}

fn default_heartbeat() -> u64 {
    OraclePolicy::default().heartbeat
}

fn default_deviation() -> FixedDec {
    OraclePolicy::default().deviation_threshold
}

impl OracleSpec {
    pub fn policy(&self) -> OraclePolicy {
        OraclePolicy { heartbeat: self.heartbeat, deviation_threshold: self.deviation_threshold, delay: self.delay }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSpec {
    /// Exogenous reference price.
    pub price: PriceScript,
    /// Omitted: an instant feed of the scripted price.
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    /// Omitted: the asset is not listed in the pool.
    #[serde(default)]
    pub reserve: Option<ReserveConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VenueSpec {
    pub id: String,
    pub base: AssetId,
    pub quote: AssetId,
    pub reserve_base: FixedDec,
    pub reserve_quote: FixedDec,
    #[serde(default)]
    pub fee: FixedDec,
    /// Trades at `reserve_quote / reserve_base` with no price impact.
    #[serde(default)]
    pub fixed_price: bool,
    /// Share of the gap to the scripted price closed each tick by outside
    /// arbitrage. 1 pins the venue to the script; 0 lets trades leave a
    /// permanent mark while scripted moves still apply.
    #[serde(default = "one")]
    pub arbitrage: FixedDec,
    /// Multiplies both reserves.
    #[serde(default = "one")]
    pub depth_scale: FixedDec,
}

impl VenueSpec {
    pub fn build(&self) -> Result<Venue, crate::venue::VenueError> {
        let mut v = Venue::constant_product(
            self.id.clone(),
            self.base.clone(),
            self.quote.clone(),
            self.reserve_base,
            self.reserve_quote,
            self.fee,
        )?;
        if self.fixed_price {
            v.curve = Curve::FixedPrice { price: self.reserve_quote.div(self.reserve_base)? };
        }
        v.scaled(self.depth_scale)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountSpec {
    pub name: AccountId,
    #[serde(default)]
    pub wallet: BTreeMap<AssetId, FixedDec>,
    #[serde(default)]
    pub deposits: BTreeMap<AssetId, FixedDec>,
    /// Borrowed tokens land in the wallet.
    #[serde(default)]
    pub debts: BTreeMap<AssetId, FixedDec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentDoc {
    name: String,
    kind: String,
    wallets: Vec<AccountId>,
    #[serde(default)]
    start_tick: u64,
    #[serde(default)]
    end_tick: Option<u64>,
    #[serde(default)]
    params: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: String,
    #[serde(default)]
    description: String,
    seed: u64,
    #[serde(default = "sixty")]
    tick_seconds: u64,
    horizon_ticks: u64,
    #[serde(default)]
    start_time: u64,
    #[serde(default)]
    assets: BTreeMap<AssetId, AssetSpec>,
    #[serde(default)]
    venues: Vec<VenueSpec>,
    #[serde(default)]
    accounts: Vec<AccountSpec>,
    #[serde(default)]
    agents: Vec<AgentDoc>,
    /// Accounts whose health factor gets its own metrics column.
    #[serde(default)]
    track: Vec<AccountId>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub tick_seconds: u64,
    pub horizon_ticks: u64,
    pub start_time: u64,
    pub assets: BTreeMap<AssetId, AssetSpec>,
    pub venues: Vec<VenueSpec>,
    pub accounts: Vec<AccountSpec>,
    pub agents: Vec<Agent>,
    pub track: Vec<AccountId>,
    /// Hex SHA-256 of the canonical document.
    pub hash: String,
}

pub const BUNDLED: &[(&str, &str)] = &[
    ("squeeze_nov22", include_str!("../scenarios/squeeze_nov22.toml")),
    ("loop_attack_ren", include_str!("../scenarios/loop_attack_ren.toml")),
    ("oracle_delay", include_str!("../scenarios/oracle_delay.toml")),
    ("governance_sweep", include_str!("../scenarios/governance_sweep.toml")),
];

pub fn bundled_source(name: &str) -> Result<&'static str, ScenarioError> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| ScenarioError::UnknownBundled(name.to_owned()))
}

pub fn bundled(name: &str) -> Result<Scenario, ScenarioError> {
    Scenario::from_toml_str(bundled_source(name)?)
}

/// Splits `path=value`.
pub fn parse_override(text: &str) -> Result<(String, String), ScenarioError> {
    let (path, value) = text.split_once('=').ok_or_else(|| ScenarioError::Override {
        path: text.to_owned(),
        reason: "expected key=value".into(),
    })?;
    let path = path.trim();
    if path.is_empty() {
        return Err(ScenarioError::Override { path: text.to_owned(), reason: "empty key".into() });
    }
    Ok((path.to_owned(), value.trim().to_owned()))
}

pub fn parse_document(text: &str) -> Result<toml::Table, ScenarioError> {
    text.parse::<toml::Table>().map_err(|e| ScenarioError::Parse(e.to_string()))
}

/// Interprets `value` the way a hand edit of the same slot would: the type
/// of the value being replaced wins, and decimals stay strings.
fn override_value(old: Option<&toml::Value>, value: &str, path: &str) -> Result<toml::Value, ScenarioError> {
    let bad = |reason: String| ScenarioError::Override { path: path.to_owned(), reason };
    let unquoted = value.trim_matches('"');
    match old {
        Some(toml::Value::String(_)) => Ok(toml::Value::String(unquoted.to_owned())),
        Some(toml::Value::Integer(_)) => {
            unquoted.parse().map(toml::Value::Integer).map_err(|e| bad(format!("{value:?} is not an integer: {e}")))
        }
        Some(toml::Value::Boolean(_)) => {
            unquoted.parse().map(toml::Value::Boolean).map_err(|e| bad(format!("{value:?} is not a boolean: {e}")))
        }
        _ => match format!("v = {value}").parse::<toml::Table>() {
            Ok(mut t) => match t.remove("v") {
                Some(toml::Value::Float(_)) | None => Ok(toml::Value::String(unquoted.to_owned())),
                Some(v) => Ok(v),
            },
            Err(_) => Ok(toml::Value::String(unquoted.to_owned())),
        },
    }
}

/// Sets the slot at dotted `path`. Array elements are addressed by index or
/// by their `name` / `id` field. Only the last segment may be new.
pub fn apply_override(doc: &mut toml::Table, path: &str, value: &str) -> Result<(), ScenarioError> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(ScenarioError::Override { path: path.to_owned(), reason: "empty path segment".into() });
    }
    let mut root = toml::Value::Table(std::mem::take(doc));
    let result = set_at(&mut root, &segments, value, path);
    if let toml::Value::Table(t) = root {
        *doc = t;
    }
    result
}

fn set_at(slot: &mut toml::Value, segs: &[&str], value: &str, path: &str) -> Result<(), ScenarioError> {
    let bad = |reason: String| ScenarioError::Override { path: path.to_owned(), reason };
    let (seg, rest) = segs.split_first().expect("at least one segment");
    let child = match slot {
        toml::Value::Table(t) => {
            if rest.is_empty() {
                let new = override_value(t.get(*seg), value, path)?;
                t.insert((*seg).to_owned(), new);
                return Ok(());
            }
            t.get_mut(*seg).ok_or_else(|| bad(format!("no field {seg:?}")))?
        }
        toml::Value::Array(items) => {
            let idx = match seg.parse::<usize>() {
                Ok(n) if n < items.len() => n,
                Ok(n) => return Err(bad(format!("index {n} out of range"))),
                Err(_) => items
                    .iter()
                    .position(|item| ["name", "id"].iter().any(|k| item.get(*k).and_then(|v| v.as_str()) == Some(*seg)))
                    .ok_or_else(|| bad(format!("no element named {seg:?}")))?,
            };
            if rest.is_empty() {
                let new = override_value(Some(&items[idx]), value, path)?;
                items[idx] = new;
                return Ok(());
            }
            &mut items[idx]
        }
        _ => return Err(bad(format!("{seg:?} is below a scalar"))),
    };
    set_at(child, rest, value, path)
}

fn hash_document(doc: &toml::Table) -> String {
    let canonical = serde_json::to_string(doc).expect("TOML tables serialize to JSON");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        Self::from_document(parse_document(text)?)
    }

    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self, ScenarioError> {
        let mut doc = parse_document(text)?;
        for (path, value) in overrides {
            apply_override(&mut doc, path, value)?;
        }
        Self::from_document(doc)
    }

    pub fn from_document(doc: toml::Table) -> Result<Self, ScenarioError> {
        let hash = hash_document(&doc);
        let parsed: ScenarioDoc =
            toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        let agents = parsed
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| build_agent(i, a))
            .collect::<Result<Vec<_>, _>>()?;
        let scenario = Scenario {
            name: parsed.name,
            description: parsed.description,
            seed: parsed.seed,
            tick_seconds: parsed.tick_seconds,
            horizon_ticks: parsed.horizon_ticks,
            start_time: parsed.start_time,
            assets: parsed.assets,
            venues: parsed.venues,
            accounts: parsed.accounts,
            agents,
            track: parsed.track,
            hash,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn short_hash(&self) -> &str {
        &self.hash[..12]
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.horizon_ticks == 0 {
            return Err(invalid("horizon_ticks", "must be positive"));
        }
        if self.tick_seconds == 0 {
            return Err(invalid("tick_seconds", "must be positive"));
        }
        let asset = |path: String, a: &AssetId| -> Result<(), ScenarioError> {
            if self.assets.contains_key(a) {
                Ok(())
            } else {
                Err(invalid(path, format!("undefined asset {a}")))
            }
        };
        let listed = |path: String, a: &AssetId| -> Result<(), ScenarioError> {
            asset(path.clone(), a)?;
            if self.assets[a].reserve.is_some() {
                Ok(())
            } else {
                Err(invalid(path, format!("asset {a} has no reserve")))
            }
        };
        let venue = |path: String, id: &str| -> Result<&VenueSpec, ScenarioError> {
            self.venues.iter().find(|v| v.id == id).ok_or_else(|| invalid(path, format!("undefined venue {id}")))
        };

        for (id, spec) in &self.assets {
            spec.price.validate().map_err(|e| invalid(format!("assets.{id}.price"), e.to_string()))?;
            if let Some(reserve) = &spec.reserve {
                reserve.validate().map_err(|(field, reason)| invalid(format!("assets.{id}.reserve.{field}"), reason))?;
            }
            if let Some(oracle) = &spec.oracle {
                oracle.policy().validate().map_err(|e| invalid(format!("assets.{id}.oracle"), e.to_string()))?;
                if let Some(source) = &oracle.source {
                    let v = venue(format!("assets.{id}.oracle.source"), source)?;
                    if &v.base != id {
                        return Err(invalid(
                            format!("assets.{id}.oracle.source"),
                            format!("venue {source} trades {} not {id}", v.base),
                        ));
                    }
                }
            }
        }

        let mut ids = BTreeSet::new();
        for (i, v) in self.venues.iter().enumerate() {
            asset(format!("venues[{i}].base"), &v.base)?;
            asset(format!("venues[{i}].quote"), &v.quote)?;
            if !ids.insert(&v.id) {
                return Err(invalid(format!("venues[{i}].id"), format!("duplicate venue {}", v.id)));
            }
            if v.arbitrage.is_negative() || v.arbitrage > FixedDec::ONE {
                return Err(invalid(format!("venues[{i}].arbitrage"), format!("{} outside [0, 1]", v.arbitrage)));
            }
            if !v.depth_scale.is_positive() {
                return Err(invalid(format!("venues[{i}].depth_scale"), "must be positive"));
            }
            v.build().map_err(|e| invalid(format!("venues[{i}]"), e.to_string()))?;
        }

        for (i, acct) in self.accounts.iter().enumerate() {
            for (field, map, needs_reserve) in
                [("wallet", &acct.wallet, false), ("deposits", &acct.deposits, true), ("debts", &acct.debts, true)]
            {
                for (a, amount) in map {
                    let path = format!("accounts[{i}].{field}.{a}");
                    if needs_reserve {
                        listed(path.clone(), a)?;
                    } else {
                        asset(path.clone(), a)?;
                    }
                    if !amount.is_positive() {
                        return Err(invalid(path, format!("amount {amount} must be positive")));
                    }
                }
            }
        }

        let mut names = BTreeSet::new();
        for (i, agent) in self.agents.iter().enumerate() {
            let at = |field: &str| format!("agents[{i}].{field}");
            if !names.insert(&agent.name) {
                return Err(invalid(at("name"), format!("duplicate agent {}", agent.name)));
            }
            let need = agent.required_wallets();
            if agent.wallets.len() != need {
                return Err(invalid(at("wallets"), format!("{} needs {need} wallet(s), got {}", agent.kind(), agent.wallets.len())));
            }
            if agent.end_tick.is_some_and(|end| end < agent.start_tick) {
                return Err(invalid(at("end_tick"), "before start_tick"));
            }
            let p = |field: &str| format!("agents[{i}].params.{field}");
            match &agent.strategy {
                Strategy::ShortSqueezer(s) => {
                    let s = &s.params;
                    listed(p("collateral_asset"), &s.collateral_asset)?;
                    listed(p("target"), &s.target)?;
                    let v = venue(p("venue"), &s.venue)?;
                    if v.base != s.target {
                        return Err(invalid(p("venue"), format!("venue {} does not trade {}", v.id, s.target)));
                    }
                    if !s.tranche.is_positive() {
                        return Err(invalid(p("tranche"), "must be positive"));
                    }
                    if let Some(second) = &s.second_borrow {
                        listed(p("second_borrow.asset"), &second.asset)?;
                    }
                }
                Strategy::LoopAttacker(s) => {
                    let s = &s.params;
                    listed(p("stable"), &s.stable)?;
                    listed(p("target"), &s.target)?;
                    let v = venue(p("venue"), &s.venue)?;
                    if v.base != s.target || v.quote != s.stable {
                        return Err(invalid(p("venue"), format!("venue {} is not {}/{}", v.id, s.target, s.stable)));
                    }
                }
                Strategy::Liquidator(s) => {
                    if let Some(v) = &s.params.sell_seized {
                        venue(p("sell_seized"), v)?;
                    }
                    if s.params.min_profit.is_some() && s.params.sell_seized.is_none() {
                        return Err(invalid(p("min_profit"), "needs sell_seized"));
                    }
                }
                Strategy::Defender(s) => {
                    listed(p("collateral_asset"), &s.params.collateral_asset)?;
                    if s.params.target < s.params.trigger {
                        return Err(invalid(p("target"), "below trigger"));
                    }
                }
                Strategy::Governance(s) => {
                    listed(p("change.asset"), &s.params.change.asset)?;
                    if let Trigger::Utilization { asset: a, .. } = &s.params.trigger {
                        listed(p("trigger.asset"), a)?;
                    }
                }
                Strategy::PassiveLp(s) => {
                    for a in s.params.deposits.keys() {
                        listed(p(&format!("deposits.{a}")), a)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn build_agent(i: usize, doc: &AgentDoc) -> Result<Agent, ScenarioError> {
    let params = toml::Value::Table(doc.params.clone());
    let path = format!("agents[{i}].params");
    let wrap = |e: toml::de::Error| invalid(path.clone(), e.message().trim().to_owned());
    let strategy = match doc.kind.as_str() {
        "short_squeezer" => Strategy::ShortSqueezer(ShortSqueezer::new(params.try_into::<SqueezerParams>().map_err(wrap)?)),
        "loop_attacker" => Strategy::LoopAttacker(LoopAttacker::new(params.try_into::<LoopParams>().map_err(wrap)?)),
        "liquidator" => Strategy::Liquidator(Liquidator::new(params.try_into::<LiquidatorParams>().map_err(wrap)?)),
        "defender" => Strategy::Defender(Defender::new(params.try_into::<DefenderParams>().map_err(wrap)?)),
        "governance" => Strategy::Governance(Governance::new(params.try_into::<GovernanceParams>().map_err(wrap)?)),
        "passive_lp" => Strategy::PassiveLp(PassiveLp::new(params.try_into::<PassiveParams>().map_err(wrap)?)),
        other => return Err(invalid(format!("agents[{i}].kind"), format!("unknown agent kind {other:?}"))),
    };
    if doc.wallets.is_empty() {
        return Err(invalid(format!("agents[{i}].wallets"), "must not be empty"));
    }
    Ok(Agent {
        name: doc.name.clone(),
        wallets: doc.wallets.clone(),
        start_tick: doc.start_tick,
        end_tick: doc.end_tick,
        strategy,
    })
}
