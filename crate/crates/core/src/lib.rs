pub mod aif;
pub mod arm;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod pcrnn;
pub mod plot;
pub mod seeding;
pub mod pipeline;
pub mod baselines;
