//! Stability analysis of the bipartite matching model of customers and servers.

pub mod analysis;
pub mod chains;
pub mod cli;
pub mod facets;
pub mod flow;
pub mod io;
pub mod model;
pub mod policies;
pub mod rational;
pub mod sweep;
