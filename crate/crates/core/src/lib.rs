pub mod coherency;
pub mod coi;
pub mod grid;
pub mod harness;
pub mod pp;
pub mod sim;
