pub mod chiral;
pub mod ed;
pub mod elliptic;
pub mod error;
pub mod flatband;
pub mod formfactor;
pub mod hf;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod magic;
pub mod uniqueness;
