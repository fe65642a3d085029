//! Shared fixtures for the pipeline benchmarks.

use relaydes_core::model::{FirstHopChannel, NetworkDims, PowerBudget};
use relaydes_core::randgen::{sample_cscg_matrix, SeedSpec, StreamLabel};

pub fn first_hop(n: usize, n_c: usize, seed: u64) -> FirstHopChannel {
    let dims = NetworkDims::square(n, n_c).unwrap();
    let h = sample_cscg_matrix(
        dims.relay_antennas(),
        dims.n_s(),
        &SeedSpec::new(seed, 0, StreamLabel::ChannelH),
    );
    FirstHopChannel::new(dims, h).unwrap()
}

pub fn budget() -> PowerBudget {
    PowerBudget::symmetric(100.0).unwrap()
}
