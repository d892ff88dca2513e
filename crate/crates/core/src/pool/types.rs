use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::PoolError;
use crate::fixed::FixedDec;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Token symbol, e.g. `CRV` or `USDC`.
    AssetId
);
string_id!(
    /// Wallet / position owner.
    AccountId
);

/// Oracle prices in the numéraire, keyed by asset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Prices(BTreeMap<AssetId, FixedDec>);

impl Prices {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, asset: AssetId, price: FixedDec) {
        self.0.insert(asset, price);
    }

    pub fn get(&self, asset: &AssetId) -> Result<FixedDec, PoolError> {
        self.0.get(asset).copied().ok_or_else(|| PoolError::OracleMissing(asset.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AssetId, &FixedDec)> {
        self.0.iter()
    }
}

impl FromIterator<(AssetId, FixedDec)> for Prices {
    fn from_iter<I: IntoIterator<Item = (AssetId, FixedDec)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}
