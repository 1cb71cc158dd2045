pub mod cli;
pub mod costs;
pub mod lfp;
pub mod lp;
pub mod model;
pub mod sim;
