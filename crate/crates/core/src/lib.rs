pub mod agents;
pub mod cli;
pub mod evaluation;
pub mod graphstats;
pub mod learning;
pub mod numerics;
pub mod population;
pub mod rng;
pub mod shapes;
