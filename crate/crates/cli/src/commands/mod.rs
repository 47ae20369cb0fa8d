pub mod ablate;
pub mod gradcheck;
pub mod report;
pub mod train;
