//! Lagged price feeds with heartbeat and deviation-threshold publication.
//!
//! Observations become eligible `delay` seconds after they are taken. Each
//! call to [`OracleFeed::publish_if_due`] considers only the newest eligible
//! observation and publishes it when it deviates enough from the last
//! published price or when the heartbeat has elapsed.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::fixed::{FixedDec, MathError};
use crate::pool::{AssetId, Prices};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("oracle price must be positive, got {0}")]
    Domain(FixedDec),
    #[error("observation at {t} precedes previous observation at {last}")]
    InvalidTime { last: u64, t: u64 },
    #[error("no oracle feed for {0}")]
    NotFound(AssetId),
    #[error("invalid oracle policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Math(#[from] MathError),
}

fn default_heartbeat() -> u64 {
    3600
}

fn default_deviation() -> FixedDec {
    FixedDec::from_ratio(5, 1000)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OraclePolicy {
    #[serde(default = "default_heartbeat")]
    pub heartbeat: u64,
    #[serde(default = "default_deviation")]
    pub deviation_threshold: FixedDec,
    #[serde(default)]
    pub delay: u64,
}

impl Default for OraclePolicy {
    fn default() -> Self {
        Self { heartbeat: default_heartbeat(), deviation_threshold: default_deviation(), delay: 0 }
    }
}

impl OraclePolicy {
    /// Publishes every observation as soon as it is taken.
    pub fn instant(tick_seconds: u64) -> Self {
        Self { heartbeat: tick_seconds.max(1), deviation_threshold: FixedDec::ZERO, delay: 0 }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.heartbeat == 0 {
            return Err(OracleError::InvalidPolicy("heartbeat must be positive".into()));
        }
        if self.deviation_threshold.is_negative() || self.deviation_threshold.is_inf() {
            return Err(OracleError::InvalidPolicy(format!(
                "deviation_threshold {} must be a non-negative finite fraction",
                self.deviation_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleFeed {
    pub policy: OraclePolicy,
    pub last_published: FixedDec,
    pub last_update: u64,
    /// Time-ordered observations not yet superseded by a newer eligible one.
    pub source_buffer: VecDeque<(u64, FixedDec)>,
}

impl OracleFeed {
    /// Starts a feed whose first published price is `initial`, taken at `t`.
    pub fn new(policy: OraclePolicy, initial: FixedDec, t: u64) -> Result<Self, OracleError> {
        policy.validate()?;
        if !initial.is_positive() || initial.is_inf() {
            return Err(OracleError::Domain(initial));
        }
        Ok(Self { policy, last_published: initial, last_update: t, source_buffer: VecDeque::from([(t, initial)]) })
    }

    pub fn price(&self) -> FixedDec {
        self.last_published
    }

    pub fn observe(&mut self, price: FixedDec, t: u64) -> Result<(), OracleError> {
        if !price.is_positive() || price.is_inf() {
            return Err(OracleError::Domain(price));
        }
        match self.source_buffer.back_mut() {
            Some(last) if t < last.0 => return Err(OracleError::InvalidTime { last: last.0, t }),
            Some(last) if t == last.0 => last.1 = price,
            _ => self.source_buffer.push_back((t, price)),
        }
        Ok(())
    }

    /// Publishes the newest eligible observation if the policy calls for it.
    pub fn publish_if_due(&mut self, now: u64) -> Result<Option<FixedDec>, OracleError> {
        let eligible = self
            .source_buffer
            .iter()
            .rposition(|(t, _)| t.saturating_add(self.policy.delay) <= now);
        let Some(idx) = eligible else {
            return Ok(None);
        };
        // Older observations can never be chosen again.
        self.source_buffer.drain(..idx);
        let candidate = self.source_buffer[0].1;

        let deviation = candidate.sub(self.last_published)?.abs().div(self.last_published)?;
        let stale = now.saturating_sub(self.last_update) >= self.policy.heartbeat;
        if deviation > self.policy.deviation_threshold || stale {
            self.last_published = candidate;
            self.last_update = now;
            return Ok(Some(candidate));
        }
        Ok(None)
    }
}

/// All feeds of a simulation, keyed by asset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Oracle {
    feeds: BTreeMap<AssetId, OracleFeed>,
}

impl Oracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_feed(&mut self, asset: AssetId, feed: OracleFeed) {
        self.feeds.insert(asset, feed);
    }

    pub fn feed(&self, asset: &AssetId) -> Result<&OracleFeed, OracleError> {
        self.feeds.get(asset).ok_or_else(|| OracleError::NotFound(asset.clone()))
    }

    pub fn observe(&mut self, asset: &AssetId, price: FixedDec, t: u64) -> Result<(), OracleError> {
        self.feeds.get_mut(asset).ok_or_else(|| OracleError::NotFound(asset.clone()))?.observe(price, t)
    }

    pub fn publish_if_due(&mut self, asset: &AssetId, now: u64) -> Result<Option<FixedDec>, OracleError> {
        self.feeds.get_mut(asset).ok_or_else(|| OracleError::NotFound(asset.clone()))?.publish_if_due(now)
    }

    /// Runs publication on every feed; returns the assets that updated.
    pub fn publish_all(&mut self, now: u64) -> Result<Vec<(AssetId, FixedDec)>, OracleError> {
        let mut updated = Vec::new();
        for (asset, feed) in &mut self.feeds {
            if let Some(p) = feed.publish_if_due(now)? {
                updated.push((asset.clone(), p));
            }
        }
        Ok(updated)
    }

    pub fn price(&self, asset: &AssetId) -> Result<FixedDec, OracleError> {
        Ok(self.feed(asset)?.price())
    }

    pub fn prices(&self) -> Prices {
        self.feeds.iter().map(|(a, f)| (a.clone(), f.price())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> FixedDec {
        s.parse().unwrap()
    }

    fn feed(delay: u64) -> OracleFeed {
        let policy = OraclePolicy { delay, ..OraclePolicy::default() };
        OracleFeed::new(policy, d("1"), 0).unwrap()
    }

    #[test]
    fn read_before_delay_is_stale() {
        let mut f = feed(120);
        f.observe(d("0.5"), 60).unwrap();
        assert_eq!(f.publish_if_due(60).unwrap(), None);
        assert_eq!(f.publish_if_due(179).unwrap(), None);
        assert_eq!(f.price(), d("1"));
        assert_eq!(f.publish_if_due(180).unwrap(), Some(d("0.5")));
    }

    #[test]
    fn deviation_publishes_immediately() {
        let mut f = feed(0);
        f.observe(d("1.01"), 60).unwrap();
        assert_eq!(f.publish_if_due(60).unwrap(), Some(d("1.01")));
        assert_eq!(f.last_update, 60);
    }

    #[test]
    fn small_move_waits_for_heartbeat() {
        let mut f = feed(0);
        f.observe(d("1.004"), 60).unwrap();
        assert_eq!(f.publish_if_due(60).unwrap(), None);
        f.observe(d("1.004"), 3599).unwrap();
        assert_eq!(f.publish_if_due(3599).unwrap(), None);
        f.observe(d("1.004"), 3600).unwrap();
        assert_eq!(f.publish_if_due(3600).unwrap(), Some(d("1.004")));
    }

    #[test]
    fn threshold_is_strict() {
        let mut f = feed(0);
        f.observe(d("1.005"), 60).unwrap();
        assert_eq!(f.publish_if_due(60).unwrap(), None);
        f.observe(d("0.994999999999999999"), 120).unwrap();
        assert_eq!(f.publish_if_due(120).unwrap(), Some(d("0.994999999999999999")));
    }

    #[test]
    fn steady_price_refreshes_on_heartbeat() {
        let mut f = feed(0);
        for t in (60..3600).step_by(60) {
            f.observe(d("1"), t).unwrap();
            assert_eq!(f.publish_if_due(t).unwrap(), None);
        }
        f.observe(d("1"), 3600).unwrap();
        assert_eq!(f.publish_if_due(3600).unwrap(), Some(d("1")));
        assert_eq!(f.last_update, 3600);
    }

    #[test]
    fn rejects_bad_input() {
        let mut f = feed(0);
        assert_eq!(f.observe(FixedDec::ZERO, 1), Err(OracleError::Domain(FixedDec::ZERO)));
        assert_eq!(f.observe(d("-1"), 1), Err(OracleError::Domain(d("-1"))));
        f.observe(d("1"), 10).unwrap();
        assert_eq!(f.observe(d("1"), 9), Err(OracleError::InvalidTime { last: 10, t: 9 }));
        let bad = OraclePolicy { heartbeat: 0, ..OraclePolicy::default() };
        assert!(OracleFeed::new(bad, d("1"), 0).is_err());
        let mut oracle = Oracle::new();
        assert_eq!(oracle.observe(&"CRV".into(), d("1"), 0), Err(OracleError::NotFound("CRV".into())));
    }

    fn path() -> impl Strategy<Value = Vec<u32>> {
        prop::collection::vec(1u32..2_000_000, 1..80)
    }

    fn price(units: u32) -> FixedDec {
        FixedDec::from_ratio(units.into(), 1_000_000)
    }

    proptest! {
        #[test]
        fn instant_oracle_tracks_source(steps in path()) {
            let mut f = OracleFeed::new(OraclePolicy::instant(60), d("1"), 0).unwrap();
            for (i, &p) in steps.iter().enumerate() {
                let t = 60 * (i as u64 + 1);
                f.observe(price(p), t).unwrap();
                f.publish_if_due(t).unwrap();
                prop_assert_eq!(f.price(), price(p));
            }
        }

        #[test]
        fn published_is_a_past_observation_within_lag(
            steps in path(),
            delay in 0u64..900,
            heartbeat in 1u64..1800,
            bps in 0i128..200,
        ) {
            let policy = OraclePolicy { heartbeat, deviation_threshold: FixedDec::from_ratio(bps, 10_000), delay };
            let mut f = OracleFeed::new(policy, price(steps[0]), 0).unwrap();
            let mut history = vec![(0u64, price(steps[0]))];
            for (i, &p) in steps.iter().enumerate() {
                let t = 60 * (i as u64 + 1);
                f.observe(price(p), t).unwrap();
                history.push((t, price(p)));
                f.publish_if_due(t).unwrap();
                let published = f.price();
                prop_assert!(history.iter().any(|&(_, h)| h == published));
                // Some observation no older than delay + heartbeat + one tick
                // carries the published price.
                let horizon = t.saturating_sub(delay + heartbeat + 60);
                prop_assert!(history.iter().any(|&(ht, h)| ht >= horizon && h == published));
            }
        }
    }
}
