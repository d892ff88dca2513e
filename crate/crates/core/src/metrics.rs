//! Per-tick metrics series and run summaries.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::fixed::FixedDec;
use crate::world::Event;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub tick: u64,
    pub time: u64,
    pub values: Vec<FixedDec>,
}

/// One row per tick with a fixed column order chosen at setup.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricsLog {
    pub columns: Vec<String>,
    pub rows: Vec<MetricsRow>,
}

/// First point where two logs disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub tick: u64,
    pub column: String,
    pub left: String,
    pub right: String,
}

impl MetricsLog {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn series(&self, name: &str) -> Option<Vec<FixedDec>> {
        let i = self.column(name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }

    pub fn last(&self, name: &str) -> Option<FixedDec> {
        let i = self.column(name)?;
        self.rows.last().map(|r| r.values[i])
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["tick".to_owned(), "time".to_owned()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.tick.to_string(), row.time.to_string()];
            record.extend(row.values.iter().map(FixedDec::to_string));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    /// Bit-exact comparison; `None` when identical.
    pub fn first_divergence(&self, other: &MetricsLog) -> Option<Divergence> {
        if self.columns != other.columns {
            return Some(Divergence {
                tick: 0,
                column: "<header>".into(),
                left: self.columns.join(","),
                right: other.columns.join(","),
            });
        }
        for (a, b) in self.rows.iter().zip(&other.rows) {
            if a.tick != b.tick || a.time != b.time {
                return Some(Divergence {
                    tick: a.tick.min(b.tick),
                    column: "tick".into(),
                    left: format!("{}@{}", a.tick, a.time),
                    right: format!("{}@{}", b.tick, b.time),
                });
            }
            if let Some(i) = (0..a.values.len()).find(|&i| a.values[i] != b.values[i]) {
                return Some(Divergence {
                    tick: a.tick,
                    column: self.columns[i].clone(),
                    left: a.values[i].to_string(),
                    right: b.values[i].to_string(),
                });
            }
        }
        if self.rows.len() != other.rows.len() {
            let n = self.rows.len().min(other.rows.len());
            return Some(Divergence {
                tick: n as u64,
                column: "<rows>".into(),
                left: self.rows.len().to_string(),
                right: other.rows.len().to_string(),
            });
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpotRange {
    pub initial: FixedDec,
    pub min: FixedDec,
    pub max: FixedDec,
    /// `1 - min / initial`.
    pub max_drop: FixedDec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub hash: String,
    pub seed: u64,
    pub ticks: u64,
    pub initial_bad_debt: FixedDec,
    pub peak_bad_debt: FixedDec,
    pub final_bad_debt: FixedDec,
    pub peak_total_debt_value: FixedDec,
    /// Lowest health factor of every tracked account.
    pub min_health_factor: BTreeMap<String, FixedDec>,
    pub min_tracked_health_factor: FixedDec,
    pub liquidations: u64,
    pub total_liquidated_value: FixedDec,
    pub max_utilization: BTreeMap<String, FixedDec>,
    pub max_borrow_rate: BTreeMap<String, FixedDec>,
    pub venue_spot: BTreeMap<String, SpotRange>,
    pub events: Vec<Event>,
}

fn max_of(series: &[FixedDec]) -> FixedDec {
    series.iter().copied().max().unwrap_or_default()
}

fn min_of(series: &[FixedDec]) -> FixedDec {
    series.iter().copied().min().unwrap_or(FixedDec::INF)
}

impl Summary {
    /// Derives the summary from a finished log. Columns follow the engine's
    /// naming: `<asset>.utilization`, `<asset>.borrow_rate`, `<venue>.spot`,
    /// `hf.<account>`, `total_debt_value`, `bad_debt`.
    pub fn from_log(scenario: &str, hash: &str, seed: u64, log: &MetricsLog, events: &[Event]) -> Self {
        let series = |name: &str| log.series(name).unwrap_or_default();
        let bad = series("bad_debt");
        let by_suffix = |suffix: &str, f: fn(&[FixedDec]) -> FixedDec| -> BTreeMap<String, FixedDec> {
            log.columns
                .iter()
                .filter_map(|c| c.strip_suffix(suffix).map(|key| (key.to_owned(), f(&series(c)))))
                .collect()
        };
        let min_health_factor: BTreeMap<String, FixedDec> = log
            .columns
            .iter()
            .filter_map(|c| c.strip_prefix("hf.").map(|acct| (acct.to_owned(), min_of(&series(c)))))
            .collect();
        let venue_spot = log
            .columns
            .iter()
            .filter_map(|c| {
                let venue = c.strip_suffix(".spot")?;
                let s = series(c);
                let initial = *s.first()?;
                let min = min_of(&s);
                let max_drop = FixedDec::ONE.sub(min.div(initial).ok()?).ok()?;
                Some((venue.to_owned(), SpotRange { initial, min, max: max_of(&s), max_drop }))
            })
            .collect();
        let liquidations: Vec<&Event> = events.iter().filter(|e| e.kind == "liquidation").collect();
        Summary {
            scenario: scenario.to_owned(),
            hash: hash.to_owned(),
            seed,
            ticks: log.rows.len() as u64,
            initial_bad_debt: bad.first().copied().unwrap_or_default(),
            peak_bad_debt: max_of(&bad),
            final_bad_debt: bad.last().copied().unwrap_or_default(),
            peak_total_debt_value: max_of(&series("total_debt_value")),
            min_tracked_health_factor: min_health_factor.values().copied().min().unwrap_or(FixedDec::INF),
            min_health_factor,
            liquidations: liquidations.len() as u64,
            total_liquidated_value: FixedDec::checked_sum(liquidations.iter().map(|e| e.value)).unwrap_or(FixedDec::INF),
            max_utilization: by_suffix(".utilization", max_of),
            max_borrow_rate: by_suffix(".borrow_rate", max_of),
            venue_spot,
            events: events.to_vec(),
        }
    }
}
