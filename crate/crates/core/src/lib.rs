//! Random binary extensive codes for expandable disk arrays.
//!
//! A systematic (n, k) code over GF(2) whose generator is an identity matrix
//! stacked on a seeded random {0,1} matrix. Encoding and decoding use XOR
//! only. Because every random entry is derived from stable row and column
//! identifiers, data and parity disks can be added or removed without
//! disturbing the rest of the generator.
//!
//! - [`gf2`]: bit-packed matrices, rank, Gauss-Jordan elimination transcripts
//! - [`randmat`]: counter-mode random matrices and full-rank probabilities
//! - [`code`]: the code itself (encode, decode, scrub, metrics)
//! - [`layout`]: codeword-to-disk-grid mapping
//! - [`store`]: file-backed simulated array with failure injection and expansion
//! - [`bench`]: timed runs with operation counts

pub mod bench;
pub mod code;
pub mod error;
pub mod exec;
pub mod gf2;
pub mod layout;
pub mod randmat;
pub mod store;

pub use code::{CodeMetrics, CodeSpec, Codeword, Rbec, ScrubOutcome, XorCounter, XorStats};
pub use error::{Error, Result};
pub use exec::Exec;
pub use gf2::{BitMatrix, BitVector, Elimination};
pub use layout::{ArrayGeometry, GridAddress};
pub use store::{ArrayMetadata, DiskArray, StoreError};
