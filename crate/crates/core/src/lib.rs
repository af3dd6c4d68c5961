//! Adaptive two-stage sequential double sampling (ATSD) for rare, clustered
//! finite populations: population generation, the sampling designs, the Murthy
//! and regression estimators with their variance estimators, cost matching and
//! a reproducible Monte Carlo harness with an exhaustive enumeration oracle.

pub mod config;
pub mod cost;
pub mod designs;
pub mod error;
pub mod estimators;
pub mod montecarlo;
pub mod numeric;
pub mod population;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};

/// 64-bit FNV-1a hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
