pub mod checks;
mod decompose;
pub mod dist;
pub mod error;
pub mod estimation;
pub mod families;
pub mod lp;
pub mod oracle;
pub mod policy;
pub mod profile;
pub mod program;
pub mod reduction;
pub mod simulate;

pub use dist::{DiscreteDistribution, Instance, ModelKind};
pub use error::{Error, Result};
