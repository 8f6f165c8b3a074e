pub mod corpus;
pub mod digest;
pub mod embed;
pub mod gateway;
pub mod gradient;
pub mod label;
pub mod ledger;
pub mod metrics;
pub mod proxy;
pub mod rng;
pub mod search;

pub use label::Label;
