pub mod authvalue;
pub mod fairness;
pub mod models;
pub mod zkcircuit;
pub mod queryauth;
pub mod certify;
pub mod audit;
pub mod adversary;
pub mod pipeline;
pub mod analysis;
