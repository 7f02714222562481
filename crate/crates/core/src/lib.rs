pub mod decoder;
pub mod experiments;
pub mod gf2;
pub mod lattice;
pub mod noise;
pub mod pa;
pub mod registry;
pub mod rng;
pub mod spin_model;
