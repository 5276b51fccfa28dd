pub mod engine;
pub mod geometry;
pub mod harness;
pub mod knife;
pub mod perception;
pub mod planner;
pub mod protocol;
pub mod raster;
pub mod scenario;
pub mod sim;
pub mod supervisor;
pub mod uncertainty;
