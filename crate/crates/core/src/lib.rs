pub mod agents;
pub mod engine;
pub mod feasibility;
pub mod fixed;
pub mod metrics;
pub mod oracle;
pub mod pool;
pub mod price_path;
pub mod rates;
pub mod scenario;
pub mod venue;
pub mod world;

pub use fixed::{FixedDec, MathError, Rounding};
