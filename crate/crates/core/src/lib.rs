pub mod cell;
pub mod config;
pub mod evolution;
pub mod expr;
pub mod flux;
pub mod grid;
pub mod harness;
pub mod homogenize;
pub mod io;
pub mod scales;
