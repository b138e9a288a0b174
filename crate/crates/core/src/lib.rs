pub mod canonical;
pub mod cli;
pub mod dp;
pub mod geometry;
pub mod market;
pub mod one_period;
pub mod structure;
pub mod utility;
pub mod xreal;

pub use market::{Kernel, Market, MarketError, NodeId};
pub use utility::{Utility, UtilityError, ValueFunction};
pub use xreal::XReal;
