//! Scripted and seeded-random exogenous price paths.
//!
//! Random draws come from a counter-based generator: ChaCha8 keyed by the
//! scenario seed, with the asset selecting the stream and the tick selecting
//! the position inside it. A draw never depends on how many other draws were
//! made before it.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fixed::{FixedDec, MathError};
use crate::pool::AssetId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("no price path for {0}")]
    NotFound(AssetId),
    #[error("invalid price script: {0}")]
    Invalid(String),
    #[error("ticks must be requested in order: {last} then {tick}")]
    OutOfOrder { last: u64, tick: u64 },
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
    Step,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceScript {
    Constant {
        price: FixedDec,
    },
    /// Piecewise path through `(tick, price)` points, flat outside them.
    Keyframes {
        points: Vec<(u64, FixedDec)>,
        #[serde(default)]
        interpolation: Interpolation,
    },
    /// Multiplicative walk: each tick scales the price by `1 + v * z` with
    /// `z` uniform on `[-1, 1]`.
    RandomWalk {
        start: FixedDec,
        step_volatility: FixedDec,
    },
}

impl PriceScript {
    pub fn validate(&self) -> Result<(), PathError> {
        let price_ok = |p: &FixedDec| p.is_positive() && !p.is_inf();
        match self {
            PriceScript::Constant { price } if !price_ok(price) => {
                Err(PathError::Invalid(format!("price {price} must be positive")))
            }
            PriceScript::Keyframes { points, .. } => {
                if points.is_empty() {
                    return Err(PathError::Invalid("keyframes need at least one point".into()));
                }
                if let Some((_, p)) = points.iter().find(|(_, p)| !price_ok(p)) {
                    return Err(PathError::Invalid(format!("price {p} must be positive")));
                }
                if points.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(PathError::Invalid("keyframe ticks must strictly increase".into()));
                }
                Ok(())
            }
            PriceScript::RandomWalk { start, step_volatility } => {
                if !price_ok(start) {
                    return Err(PathError::Invalid(format!("start {start} must be positive")));
                }
                if step_volatility.is_negative() || *step_volatility >= FixedDec::ONE {
                    return Err(PathError::Invalid(format!("step_volatility {step_volatility} outside [0, 1)")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn initial_price(&self) -> FixedDec {
        match self {
            PriceScript::Constant { price } => *price,
            PriceScript::Keyframes { points, .. } => points[0].1,
            PriceScript::RandomWalk { start, .. } => *start,
        }
    }
}

fn keyframe_price(points: &[(u64, FixedDec)], interpolation: Interpolation, tick: u64) -> Result<FixedDec, MathError> {
    let after = points.partition_point(|(t, _)| *t <= tick);
    if after == 0 {
        return Ok(points[0].1);
    }
    let (t0, p0) = points[after - 1];
    if after == points.len() || interpolation == Interpolation::Step {
        return Ok(p0);
    }
    let (t1, p1) = points[after];
    let num = FixedDec::from_integer((tick - t0).into());
    let den = FixedDec::from_integer((t1 - t0).into());
    p0.add(p1.sub(p0)?.mul_div(num, den)?)
}

/// Uniform draw on `[-1, 1]` at 18-decimal resolution.
fn uniform_symmetric(seed: u64, stream: u64, tick: u64) -> FixedDec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(tick) * 2);
    const SPAN: u64 = 2 * 10u64.pow(18) + 1;
    let raw = rng.next_u64() % SPAN;
    FixedDec::from_raw((raw as i128 - 10i128.pow(18)).into())
}

fn stream_of(asset: &AssetId) -> u64 {
    let digest = Sha256::digest(asset.as_str().as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// A script bound to an asset, evaluated tick by tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricePath {
    script: PriceScript,
    seed: u64,
    stream: u64,
    tick: u64,
    current: FixedDec,
}

impl PricePath {
    pub fn new(asset: &AssetId, script: PriceScript, seed: u64) -> Result<Self, PathError> {
        script.validate()?;
        let current = script.initial_price();
        Ok(Self { stream: stream_of(asset), script, seed, tick: 0, current })
    }

    pub fn script(&self) -> &PriceScript {
        &self.script
    }

    /// Price at `tick`; ticks must not go backwards.
    pub fn price_at(&mut self, tick: u64) -> Result<FixedDec, PathError> {
        if tick < self.tick {
            return Err(PathError::OutOfOrder { last: self.tick, tick });
        }
        match &self.script {
            PriceScript::Constant { price } => self.current = *price,
            PriceScript::Keyframes { points, interpolation } => {
                self.current = keyframe_price(points, *interpolation, tick)?;
            }
            PriceScript::RandomWalk { step_volatility, .. } => {
                for t in self.tick + 1..=tick {
                    let z = uniform_symmetric(self.seed, self.stream, t);
                    let factor = FixedDec::ONE.add(step_volatility.mul(z)?)?;
                    self.current = self.current.mul(factor)?.max(FixedDec::ULP);
                }
            }
        }
        self.tick = tick;
        Ok(self.current)
    }
}

/// Exogenous reference prices of every scripted asset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExogenousPrices {
    paths: BTreeMap<AssetId, PricePath>,
}

impl ExogenousPrices {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, asset: AssetId, script: PriceScript, seed: u64) -> Result<(), PathError> {
        let path = PricePath::new(&asset, script, seed)?;
        self.paths.insert(asset, path);
        Ok(())
    }

    pub fn contains(&self, asset: &AssetId) -> bool {
        self.paths.contains_key(asset)
    }

    /// Reference price of `asset` at `tick`.
    pub fn exogenous_price_step(&mut self, asset: &AssetId, tick: u64) -> Result<FixedDec, PathError> {
        self.paths.get_mut(asset).ok_or_else(|| PathError::NotFound(asset.clone()))?.price_at(tick)
    }
}
