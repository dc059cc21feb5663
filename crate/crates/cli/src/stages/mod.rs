pub mod capture;
pub mod eval;
pub mod pair;
pub mod plot;
pub mod synth;
pub mod train;
pub mod transfer;
