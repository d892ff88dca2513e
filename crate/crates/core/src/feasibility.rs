//! Static ranking of assets by how much of their market capitalization sits
//! in the pool and how much of that can be borrowed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::fixed::{FixedDec, MathError};

/// Five-asset synthetic snapshot with a CRV-like outlier.
pub const BUNDLED_SNAPSHOT: &str = include_str!("../snapshots/synthetic_nov1.csv");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeasibilityError {
    #[error("{0}: market cap must be positive")]
    Domain(String),
    #[error("record {record}: {reason}")]
    Invalid { record: usize, reason: String },
    #[error("snapshot is empty")]
    Empty,
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    FrozenPreAttack,
    FrozenPostAttack,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSnapshot {
    pub asset: String,
    pub deposited_value: FixedDec,
    pub available_value: FixedDec,
    pub market_cap: FixedDec,
    pub status: Status,
}

impl AssetSnapshot {
    pub fn validate(&self) -> Result<(), String> {
        if self.asset.is_empty() {
            return Err("empty asset id".into());
        }
        if self.deposited_value.is_negative() || self.available_value.is_negative() {
            return Err(format!("{}: values must not be negative", self.asset));
        }
        if self.available_value > self.deposited_value {
            return Err(format!(
                "{}: available {} exceeds deposited {}",
                self.asset, self.available_value, self.deposited_value
            ));
        }
        if self.market_cap.is_inf() || self.deposited_value.is_inf() {
            return Err(format!("{}: values must be finite", self.asset));
        }
        Ok(())
    }
}

/// `(deposited / market_cap, available / market_cap)`.
pub fn feasibility(s: &AssetSnapshot) -> Result<(FixedDec, FixedDec), FeasibilityError> {
    if !s.market_cap.is_positive() {
        return Err(FeasibilityError::Domain(s.asset.clone()));
    }
    Ok((s.deposited_value.div(s.market_cap)?, s.available_value.div(s.market_cap)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Available share above which an attack is flagged as feasible.
    pub available: FixedDec,
    /// Deposited share above which exposure is flagged as critical.
    pub deposited: FixedDec,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { available: FixedDec::from_ratio(15, 100), deposited: FixedDec::from_ratio(30, 100) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedAsset {
    pub rank: usize,
    pub asset: String,
    pub status: Status,
    pub deposit_ratio: FixedDec,
    pub available_ratio: FixedDec,
    pub feasible: bool,
    pub critical: bool,
}

/// Descending by available ratio, then deposit ratio, then ascending asset id.
pub fn rank(snapshots: &[AssetSnapshot], thresholds: &Thresholds) -> Result<Vec<RankedAsset>, FeasibilityError> {
    if snapshots.is_empty() {
        return Err(FeasibilityError::Empty);
    }
    let mut rows = snapshots
        .iter()
        .map(|s| {
            let (deposit_ratio, available_ratio) = feasibility(s)?;
            Ok(RankedAsset {
                rank: 0,
                asset: s.asset.clone(),
                status: s.status,
                deposit_ratio,
                available_ratio,
                feasible: available_ratio > thresholds.available,
                critical: deposit_ratio > thresholds.deposited,
            })
        })
        .collect::<Result<Vec<_>, FeasibilityError>>()?;
    rows.sort_by(|a, b| {
        b.available_ratio
            .cmp(&a.available_ratio)
            .then(b.deposit_ratio.cmp(&a.deposit_ratio))
            .then_with(|| a.asset.cmp(&b.asset))
    });
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    Ok(rows)
}

/// Reads `asset,deposited_value,available_value,market_cap,status` records.
pub fn parse_snapshot_csv(text: &str) -> Result<Vec<AssetSnapshot>, FeasibilityError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.deserialize::<AssetSnapshot>().enumerate() {
        let snapshot = record.map_err(|e| FeasibilityError::Invalid { record: i + 1, reason: e.to_string() })?;
        snapshot.validate().map_err(|reason| FeasibilityError::Invalid { record: i + 1, reason })?;
        out.push(snapshot);
    }
    if out.is_empty() {
        return Err(FeasibilityError::Empty);
    }
    Ok(out)
}

fn percent(ratio: FixedDec) -> String {
    let p = ratio.mul(FixedDec::from_integer(100)).map(|p| p.round_dp(2)).unwrap_or(FixedDec::INF);
    format!("{p}%")
}

pub fn render_table(rows: &[RankedAsset]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>4}  {:<10} {:<20} {:>10} {:>10}  flags", "rank", "asset", "status", "deposited", "available");
    for r in rows {
        let status = match r.status {
            Status::Active => "active",
            Status::FrozenPreAttack => "frozen_pre_attack",
            Status::FrozenPostAttack => "frozen_post_attack",
        };
        let mut flags = Vec::new();
        if r.feasible {
            flags.push("feasible");
        }
        if r.critical {
            flags.push("critical");
        }
        let _ = writeln!(
            out,
            "{:>4}  {:<10} {:<20} {:>10} {:>10}  {}",
            r.rank,
            r.asset,
            status,
            percent(r.deposit_ratio),
            percent(r.available_ratio),
            flags.join(",")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> FixedDec {
        s.parse().unwrap()
    }

    fn snap(asset: &str, dep: &str, avail: &str, cap: &str) -> AssetSnapshot {
        AssetSnapshot {
            asset: asset.into(),
            deposited_value: d(dep),
            available_value: d(avail),
            market_cap: d(cap),
            status: Status::Active,
        }
    }

    #[test]
    fn crv_like_asset_trips_both_thresholds() {
        let s = snap("CRV", "155000000", "77500000", "500000000");
        assert_eq!(feasibility(&s).unwrap(), (d("0.31"), d("0.155")));
        let rows = rank(&[s], &Thresholds::default()).unwrap();
        assert!(rows[0].feasible && rows[0].critical);
    }

    #[test]
    fn nothing_available_is_not_feasible() {
        let s = snap("X", "40", "0", "100");
        assert_eq!(feasibility(&s).unwrap(), (d("0.4"), FixedDec::ZERO));
        assert!(!rank(&[s], &Thresholds::default()).unwrap()[0].feasible);
    }

    #[test]
    fn zero_market_cap_is_a_domain_error() {
        assert_eq!(feasibility(&snap("X", "0", "0", "0")), Err(FeasibilityError::Domain("X".into())));
    }

    #[test]
    fn deposit_ratio_breaks_ties() {
        let rows = rank(&[snap("A", "10", "5", "100"), snap("B", "20", "5", "100")], &Thresholds::default()).unwrap();
        assert_eq!(rows.iter().map(|r| r.asset.as_str()).collect::<Vec<_>>(), ["B", "A"]);
        let rows = rank(&[snap("B", "10", "5", "100"), snap("A", "10", "5", "100")], &Thresholds::default()).unwrap();
        assert_eq!(rows[0].asset, "A");
    }

    #[test]
    fn csv_rejects_inconsistent_rows() {
        let head = "asset,deposited_value,available_value,market_cap,status\n";
        assert!(parse_snapshot_csv(&format!("{head}X,10,20,100,active\n")).is_err());
        assert!(parse_snapshot_csv(&format!("{head}X,10,5,100,melting\n")).is_err());
        assert!(parse_snapshot_csv(head).is_err());
        let ok = parse_snapshot_csv(&format!("{head}X, 10, 5, 100, frozen_pre_attack\n")).unwrap();
        assert_eq!(ok[0].status, Status::FrozenPreAttack);
    }

    fn arb_snapshots() -> impl Strategy<Value = Vec<AssetSnapshot>> {
        prop::collection::vec((1u64..1_000_000, 0u64..1_000_000, 0u64..1_000_000), 1..8).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (cap, a, b))| AssetSnapshot {
                    asset: format!("A{i}"),
                    deposited_value: FixedDec::from_integer(a.max(b).into()),
                    available_value: FixedDec::from_integer(a.min(b).into()),
                    market_cap: FixedDec::from_integer(cap.into()),
                    status: Status::Active,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn ranking_is_scale_invariant(snaps in arb_snapshots(), k in 1u64..10_000) {
            let k = FixedDec::from_integer(k.into());
            let scaled: Vec<_> = snaps.iter().map(|s| AssetSnapshot {
                deposited_value: s.deposited_value.mul(k).unwrap(),
                available_value: s.available_value.mul(k).unwrap(),
                market_cap: s.market_cap.mul(k).unwrap(),
                ..s.clone()
            }).collect();
            prop_assert_eq!(rank(&snaps, &Thresholds::default()).unwrap(), rank(&scaled, &Thresholds::default()).unwrap());
        }

        #[test]
        fn ranking_is_a_permutation(snaps in arb_snapshots()) {
            let rows = rank(&snaps, &Thresholds::default()).unwrap();
            let mut got: Vec<_> = rows.iter().map(|r| r.asset.clone()).collect();
            let mut want: Vec<_> = snaps.iter().map(|s| s.asset.clone()).collect();
            got.sort();
            want.sort();
            prop_assert_eq!(got, want);
        }
    }
}
