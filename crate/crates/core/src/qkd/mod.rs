//! Simulated MDI-QKD key layer.

pub mod channel;
pub mod decoy;
pub mod distill;
pub mod entropy;
pub mod finite_key;
pub mod optimize;
pub mod search;
pub mod toeplitz;

pub use channel::{simulate_tallies, simulate_tallies_sampled, Basis, ChannelModel, ProtocolParams, Tally, TallySet};
pub use decoy::{decoy_bounds, DecoyBounds};
pub use distill::{distill_session, DistilledKeys};
pub use entropy::binary_entropy;
pub use finite_key::{finite_key_length, EpsilonSet, FiniteKeyResult};
pub use optimize::{optimize_params, sweep_distance, CurvePoint, OptimizedParams, SearchConstraints};
pub use toeplitz::{toeplitz_hash, toeplitz_hash_naive};
