//! One module per subcommand.

pub mod evaluate;
pub mod forecast;
pub mod gridsearch;
pub mod simulate;
pub mod train;
