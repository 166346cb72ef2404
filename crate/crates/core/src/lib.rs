// SPDX-License-Identifier: Apache-2.0

//! Memory-based combination PUF: simulated SRAM and DRAM entropy sources,
//! the challenge-response pipeline with segment-majority error correction,
//! and an authenticator for enrollment, fuzzy authentication,
//! characterization, reconfiguration and counterfeit-swap scenarios.

pub mod analysis;
pub mod authenticator;
pub mod campaign;
pub mod codec;
pub mod ecc;
pub mod entropy;
pub mod error;
pub mod pipeline;
pub mod prf;

pub use authenticator::{
    authenticate, characterize, counterfeit_swap_scenario, enroll, reconfigure, AuthOutcome, CrpDatabase, CrpRecord,
    MatchPolicy,
};
pub use ecc::{corr_startup_val, gen_err_corr_data, CorrectedValue, EccData};
pub use entropy::{
    age_device, dram_refresh_pause, forge_device, sram_power_up, Bits, DeviceInstance, Environment, MemoryRegion,
    ModelParams, WrapperPattern,
};
pub use error::{Error, Result};
pub use pipeline::{generate_response, generate_response_no_hash, hash_stage, xor_stage, Challenge, Response};
