//! Deterministic random streams.
//!
//! Every chain (and every other consumer of randomness) owns its own
//! ChaCha8 stream. A stream is a pure function of `(master seed, role, n, m)`:
//! the ChaCha key comes from the master seed and the 64-bit ChaCha stream id
//! from a SplitMix64 hash of the other three. Work can therefore be spread
//! over any number of threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

pub type ChainRng = ChaCha8Rng;

pub const RNG_ALGORITHM_TAG: &str = "chacha8";

/// What a stream is used for. The discriminant enters the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    EChain = 1,
    MChain = 2,
    DataSample = 3,
    ModelParams = 4,
    HiddenSelection = 5,
    Ais = 6,
    AisClamped = 7,
    ModelSamples = 8,
    ExactSample = 9,
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_id(role: StreamRole, n: u64, m: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(role as u64) ^ n) ^ m)
}

pub fn stream(master_seed: u64, role: StreamRole, n: u64, m: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(role, n, m));
    rng
}

/// `chacha8:<key hex><stream hex><word position hex>`
pub fn encode_rng(rng: &ChainRng) -> String {
    let mut bytes = Vec::with_capacity(56);
    bytes.extend_from_slice(&rng.get_seed());
    bytes.extend_from_slice(&rng.get_stream().to_be_bytes());
    bytes.extend_from_slice(&rng.get_word_pos().to_be_bytes());
    format!("{RNG_ALGORITHM_TAG}:{}", hex::encode(bytes))
}

pub fn decode_rng(text: &str) -> Result<ChainRng> {
    let Some(blob) = text.strip_prefix(&format!("{RNG_ALGORITHM_TAG}:")) else {
        return invalid(format!("unsupported rng state {text:?}"));
    };
    let bytes = hex::decode(blob).map_err(|e| crate::error::ApcdError::InvalidInput(e.to_string()))?;
    if bytes.len() != 56 {
        return invalid(format!("rng state has {} bytes, expected 56", bytes.len()));
    }
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&bytes[..32]);
    let stream = u64::from_be_bytes(bytes[32..40].try_into().unwrap());
    let word_pos = u128::from_be_bytes(bytes[40..56].try_into().unwrap());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(rng)
}
