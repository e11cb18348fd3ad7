//! Repartitioning of distributed LDU matrices for heterogeneous solves.
//!
//! Matrices are assembled per CPU rank in face-addressed LDU storage and
//! fused, `alpha` CPU parts at a time, into row-major COO matrices owned by
//! a smaller set of solver ("GPU") ranks. The sparsity work happens once;
//! afterwards every timestep only moves coefficients through a reusable
//! update pattern and a scatter map.
//!
//! Module map:
//!
//! * [`matrix`]: LDU, COO, interface blocks, partition maps
//! * [`assembly`]: structured model problem and slab decomposition
//! * [`transport`]: in-process message-passing world
//! * [`repart`]: sparsity exchange, fusion, update pattern, scatter map
//! * [`update`]: coefficient transfer (direct or host-staged) and scatter
//! * [`solver`]: halo exchange, distributed SpMV and CG
//! * [`costmodel`]: timestep cost model and rank-count optimizer
//! * [`oracle`]: sequential references used for verification

pub mod assembly;
pub mod costmodel;
pub mod error;
pub mod matrix;
pub mod mtx;
pub mod oracle;
pub mod repart;
pub mod solver;
pub mod transport;
pub mod update;

pub use error::{Error, Result};
