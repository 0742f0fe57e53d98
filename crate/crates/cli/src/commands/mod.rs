pub mod ensemble;
pub mod evaluate;
pub mod generate;
pub mod qc;
pub mod remap;
pub mod serve;
