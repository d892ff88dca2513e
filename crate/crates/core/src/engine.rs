//! Discrete-time driver.
//!
//! Every tick runs the same phases in the same order: exogenous prices and
//! arbitrage, oracle, accrual, governance changes and agents, liquidators,
//! bad-debt scan, conservation check, metrics row. Nothing reads the clock or
//! an unseeded generator, so a scenario and its seed fix the output.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{ActionRecord, Agent, Ctx};
use crate::fixed::FixedDec;
use crate::metrics::{Divergence, MetricsLog, MetricsRow, Summary};
use crate::oracle::{OracleFeed, OraclePolicy};
use crate::pool::{AccountId, AssetId};
use crate::price_path::ExogenousPrices;
use crate::rates;
use crate::scenario::{self, Scenario, ScenarioError};
use crate::world::{Action, Event, World};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ScenarioError),
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("tick {tick}: {reason}")]
    Runtime { tick: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("determinism violation at tick {}: {} is {} then {}", .0.tick, .0.column, .0.left, .0.right)]
    Diverged(Divergence),
}

fn setup<E: std::fmt::Display>(e: E) -> SimError {
    SimError::Setup(e.to_string())
}

/// A scenario being stepped.
pub struct Simulation {
    scenario: Scenario,
    pub world: World,
    pub agents: Vec<Agent>,
    pub metrics: MetricsLog,
    pub actions: Vec<ActionRecord>,
    paths: ExogenousPrices,
    reference: BTreeMap<AssetId, FixedDec>,
    bad_debtors: BTreeSet<AccountId>,
    next_tick: u64,
}

/// Everything a finished run produces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutput {
    pub metrics: MetricsLog,
    pub actions: Vec<ActionRecord>,
    pub summary: Summary,
    pub agents: Vec<Agent>,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        let s = scenario;
        let mut world = World::new(s.start_time);
        let mut paths = ExogenousPrices::new();
        for (asset, spec) in &s.assets {
            if let Some(reserve) = &spec.reserve {
                world.pool.list_reserve(asset.clone(), reserve.clone()).map_err(setup)?;
            }
            paths.insert(asset.clone(), spec.price.clone(), s.seed).map_err(setup)?;
        }
        for v in &s.venues {
            world.venues.push(v.build().map_err(setup)?);
        }
        let initial: BTreeMap<AssetId, FixedDec> =
            s.assets.iter().map(|(a, spec)| (a.clone(), spec.price.initial_price())).collect();
        for (asset, spec) in &s.assets {
            let (policy, price) = match &spec.oracle {
                Some(o) => {
                    let price = match &o.source {
                        Some(id) => venue_price(&world, id, &initial).map_err(setup)?,
                        None => initial[asset],
                    };
                    (o.policy(), price)
                }
                None => (OraclePolicy::instant(s.tick_seconds), initial[asset]),
            };
            world.oracle.add_feed(asset.clone(), OracleFeed::new(policy, price, s.start_time).map_err(setup)?);
        }
        for acct in &s.accounts {
            for (asset, amount) in acct.wallet.iter().chain(&acct.deposits) {
                world.mint(&acct.name, asset, *amount).map_err(setup)?;
            }
            for (asset, amount) in &acct.deposits {
                world
                    .apply(&acct.name, &Action::Deposit { asset: asset.clone(), amount: *amount })
                    .map_err(|e| SimError::Setup(format!("{}: {e}", acct.name)))?;
            }
        }
        // Debts go in after every deposit so the liquidity is there.
        for acct in s.accounts.iter().filter(|a| !a.debts.is_empty()) {
            world
                .pool
                .import_position(&acct.name, &BTreeMap::new(), &acct.debts)
                .map_err(|e| SimError::Setup(format!("{}: {e}", acct.name)))?;
            for (asset, amount) in &acct.debts {
                world.mint(&acct.name, asset, *amount).map_err(setup)?;
            }
        }
        world.seal_genesis().map_err(setup)?;
        world.check_conservation().map_err(setup)?;
        world.pool.check_invariants().map_err(setup)?;

        let mut columns = Vec::new();
        for asset in s.assets.keys() {
            columns.push(format!("{asset}.price"));
            columns.push(format!("{asset}.oracle"));
        }
        for (asset, spec) in &s.assets {
            if spec.reserve.is_some() {
                for metric in ["utilization", "borrow_rate", "available", "total_debt"] {
                    columns.push(format!("{asset}.{metric}"));
                }
            }
        }
        columns.extend(s.venues.iter().map(|v| format!("{}.spot", v.id)));
        columns.extend(s.track.iter().map(|a| format!("hf.{a}")));
        columns.push("total_debt_value".into());
        columns.push("bad_debt".into());

        Ok(Self {
            scenario: s.clone(),
            world,
            agents: s.agents.clone(),
            metrics: MetricsLog::new(columns),
            actions: Vec::new(),
            paths,
            reference: initial,
            bad_debtors: BTreeSet::new(),
            next_tick: 0,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn is_done(&self) -> bool {
        self.next_tick >= self.scenario.horizon_ticks
    }

    /// Runs the next tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        let tick = self.next_tick;
        let fail = |reason: String| SimError::Runtime { tick, reason };
        let now = self.scenario.start_time + tick * self.scenario.tick_seconds;
        self.world.tick = tick;
        self.world.now = now;

        // 1. Exogenous prices, then outside arbitrage on every venue.
        let mut reference = BTreeMap::new();
        for asset in self.scenario.assets.keys() {
            let p = self.paths.exogenous_price_step(asset, tick).map_err(|e| fail(e.to_string()))?;
            reference.insert(asset.clone(), p);
        }
        for spec in &self.scenario.venues {
            let target = self.venue_target(spec, &reference).map_err(|e| fail(format!("venue {}: {e}", spec.id)))?;
            self.world.market_rebalance(&spec.id, target).map_err(|e| fail(format!("venue {}: {e}", spec.id)))?;
        }
        self.reference = reference;

        // 2. Oracle.
        for (asset, spec) in &self.scenario.assets {
            let observed = match spec.oracle.as_ref().and_then(|o| o.source.as_ref()) {
                Some(id) => venue_price(&self.world, id, &self.reference).map_err(|e| fail(e.to_string()))?,
                None => self.reference[asset],
            };
            self.world.oracle.observe(asset, observed, now).map_err(|e| fail(e.to_string()))?;
        }
        self.world.oracle.publish_all(now).map_err(|e| fail(e.to_string()))?;

        // 3. Accrual.
        self.world.pool.advance_to(now).map_err(|e| fail(e.to_string()))?;

        // 4. Governance changes that fell due, then agents in order.
        self.world.apply_due_changes().map_err(|e| fail(e.to_string()))?;
        self.run_agents(false).map_err(fail)?;

        // 5. Liquidators.
        self.run_agents(true).map_err(fail)?;

        // 6. Bad debt.
        let prices = self.world.prices();
        let report = self.world.pool.bad_debt(&prices).map_err(|e| fail(e.to_string()))?;
        for record in &report.records {
            if self.bad_debtors.insert(record.account.clone()) {
                self.world.events.push(Event {
                    tick,
                    kind: "bad_debt".into(),
                    account: record.account.to_string(),
                    asset: String::new(),
                    amount: record.shortfall_value,
                    value: record.shortfall_value,
                });
            }
        }

        self.world.check_conservation().map_err(|e| fail(e.to_string()))?;
        self.world.pool.check_invariants().map_err(|e| fail(e.to_string()))?;

        // 7. Metrics.
        let values = self.row(report.total).map_err(fail)?;
        self.metrics.rows.push(MetricsRow { tick, time: now, values });
        self.next_tick += 1;
        Ok(())
    }

    fn run_agents(&mut self, liquidators: bool) -> Result<(), String> {
        let tick = self.world.tick;
        for agent in self.agents.iter_mut().filter(|a| a.is_liquidator() == liquidators && a.is_active(tick)) {
            let name = agent.name.clone();
            let mut ctx = Ctx::new(&mut self.world, &name, &mut self.actions);
            agent.step(&mut ctx);
            if let Some(e) = ctx.take_fatal() {
                return Err(format!("agent {name}: {e}"));
            }
        }
        Ok(())
    }

    /// Spot the outside market pushes venue `spec` toward: scripted moves
    /// carry the current spot along, and `arbitrage` closes that share of
    /// the remaining gap to the script.
    fn venue_target(
        &self,
        spec: &scenario::VenueSpec,
        reference: &BTreeMap<AssetId, FixedDec>,
    ) -> Result<FixedDec, crate::fixed::MathError> {
        let now = reference[&spec.base].div(reference[&spec.quote])?;
        if spec.arbitrage == FixedDec::ONE {
            return Ok(now);
        }
        let before = self.reference[&spec.base].div(self.reference[&spec.quote])?;
        let spot = self.world.venue(&spec.id).ok().and_then(|v| v.quote_spot().ok()).unwrap_or(now);
        let carried = spot.mul_div(now, before)?;
        let a = spec.arbitrage;
        carried.mul(FixedDec::ONE.sub(a)?)?.add(now.mul(a)?)
    }

    fn row(&self, bad_debt: FixedDec) -> Result<Vec<FixedDec>, String> {
        let w = &self.world;
        let prices = w.prices();
        let mut values = Vec::with_capacity(self.metrics.columns.len());
        for asset in self.scenario.assets.keys() {
            values.push(self.reference[asset]);
            values.push(w.oracle.price(asset).map_err(|e| e.to_string())?);
        }
        let mut total_debt_value = FixedDec::ZERO;
        for (asset, spec) in &self.scenario.assets {
            if spec.reserve.is_none() {
                continue;
            }
            let r = w.pool.reserve(asset).map_err(|e| e.to_string())?;
            let u = r.state.utilization().map_err(|e| e.to_string())?;
            values.push(u);
            values.push(rates::borrow_rate(u, &r.config.rate).map_err(|e| e.to_string())?);
            values.push(r.state.available_liquidity());
            values.push(r.state.total_debt);
            let value = r.state.total_debt.mul(prices.get(asset).map_err(|e| e.to_string())?);
            total_debt_value = total_debt_value.add(value.map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        }
        for v in &w.venues {
            values.push(v.quote_spot().map_err(|e| e.to_string())?);
        }
        for acct in &self.scenario.track {
            let hf = match w.pool.position(acct) {
                Some(_) => w.pool.health_factor(acct, &prices).map_err(|e| e.to_string())?,
                None => FixedDec::INF,
            };
            values.push(hf);
        }
        values.push(total_debt_value);
        values.push(bad_debt);
        Ok(values)
    }

    pub fn finish(self) -> RunOutput {
        let s = &self.scenario;
        let summary = Summary::from_log(&s.name, &s.hash, s.seed, &self.metrics, &self.world.events);
        RunOutput { metrics: self.metrics, actions: self.actions, summary, agents: self.agents }
    }
}

/// Venue spot in numéraire: quote units per base times the quote's price.
fn venue_price(world: &World, id: &str, reference: &BTreeMap<AssetId, FixedDec>) -> Result<FixedDec, String> {
    let v = world.venue(id).map_err(|e| e.to_string())?;
    let spot = v.quote_spot().map_err(|e| e.to_string())?;
    spot.mul(reference[&v.quote]).map_err(|e| e.to_string())
}

pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(scenario)?;
    while !sim.is_done() {
        sim.step()?;
    }
    Ok(sim.finish())
}

/// Runs `scenario` twice and compares the logs bit for bit.
pub fn replay_check(scenario: &Scenario) -> Result<RunOutput, ReplayError> {
    let first = run(scenario)?;
    let second = run(scenario)?;
    if let Some(d) = first.metrics.first_divergence(&second.metrics) {
        return Err(ReplayError::Diverged(d));
    }
    if first.actions != second.actions {
        let i = first.actions.iter().zip(&second.actions).take_while(|(a, b)| a == b).count();
        let tick = first.actions.get(i).or(second.actions.get(i)).map_or(0, |a| a.tick);
        let show = |log: &[ActionRecord]| log.get(i).map_or("<none>".into(), |a| format!("{} {}", a.action, a.detail));
        return Err(ReplayError::Diverged(Divergence {
            tick,
            column: "actions".into(),
            left: show(&first.actions),
            right: show(&second.actions),
        }));
    }
    Ok(first)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: String,
    pub summary: Summary,
}

/// One independent run per value of `path`, in parallel. Every variant is
/// validated before any of them runs.
pub fn sweep(
    source: &str,
    overrides: &[(String, String)],
    path: &str,
    values: &[String],
) -> Result<Vec<SweepPoint>, SimError> {
    let scenarios = values
        .iter()
        .map(|v| {
            let mut all = overrides.to_vec();
            all.push((path.to_owned(), v.clone()));
            Scenario::from_toml_with_overrides(source, &all)
        })
        .collect::<Result<Vec<_>, _>>()?;
    scenarios
        .par_iter()
        .zip(values)
        .map(|(s, v)| Ok(SweepPoint { value: v.clone(), summary: run(s)?.summary }))
        .collect()
}

impl RunOutput {
    /// Base name shared by every output file of this run.
    pub fn stem(&self) -> String {
        format!("{}-{}", self.summary.scenario, &self.summary.hash[..12])
    }

    pub fn actions_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["tick", "agent", "actor", "action", "detail", "result"]).expect("in-memory write");
        for a in &self.actions {
            w.write_record([&a.tick.to_string(), &a.agent, &a.actor, &a.action, &a.detail, &a.result])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
    }

    /// Writes the metrics CSV, the action log and the JSON summary.
    pub fn write_to(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let stem = self.stem();
        let files = [
            (format!("{stem}.metrics.csv"), self.metrics.to_csv_string()),
            (format!("{stem}.actions.csv"), self.actions_csv()),
            (format!("{stem}.summary.json"), serde_json::to_string_pretty(&self.summary).map_err(io::Error::other)?),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}
