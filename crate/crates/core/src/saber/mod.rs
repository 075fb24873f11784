//! Saber KEM (round 3, `l = 3`) on top of striding Toom-Cook-4 multiplication
//! with lazy interpolation.

pub mod kat;
pub mod kem;
pub mod matvec;
pub mod meter;
pub mod pack;
pub mod poly;
pub mod toom;

use thiserror::Error;

pub use kem::{saber_decaps, saber_encaps, saber_keygen, PublicKey, SaberKeyPair, SecretKey};
pub use matvec::{inner_product_lazy, matvec_mul_eager, matvec_mul_lazy, PolyMatrix, PolyVec};
pub use meter::MemoryMeter;
pub use poly::{poly_mul_schoolbook, PolyRq};
pub use toom::{
    eval_accumulate, eval_pointwise_mul, striding_split, toom4_evaluate, toom4_interpolate,
    toom4_mul, PolyEval,
};

pub const N: usize = 256;
pub const L: usize = 3;
pub const EQ: u32 = 13;
pub const EP: u32 = 10;
pub const ET: u32 = 4;
pub const MU: usize = 8;
pub const Q: u16 = 1 << EQ;
pub const P: u16 = 1 << EP;

pub const SEED_BYTES: usize = 32;
pub const KEY_BYTES: usize = 32;
pub const POLY_BYTES: usize = EQ as usize * N / 8;
pub const POLYVEC_BYTES: usize = L * POLY_BYTES;
pub const POLY_COMPRESSED_BYTES: usize = EP as usize * N / 8;
pub const POLYVEC_COMPRESSED_BYTES: usize = L * POLY_COMPRESSED_BYTES;
pub const SCALE_BYTES: usize = ET as usize * N / 8;
pub const POLY_COIN_BYTES: usize = MU * N / 8;

pub const PUBLIC_KEY_BYTES: usize = POLYVEC_COMPRESSED_BYTES + SEED_BYTES;
pub const INDCPA_SECRET_KEY_BYTES: usize = POLYVEC_BYTES;
pub const SECRET_KEY_BYTES: usize = INDCPA_SECRET_KEY_BYTES + PUBLIC_KEY_BYTES + 32 + KEY_BYTES;
pub const CIPHERTEXT_BYTES: usize = POLYVEC_COMPRESSED_BYTES + SCALE_BYTES;
pub const SHARED_SECRET_BYTES: usize = 32;

/// Rounding constants.
pub const H1: u16 = 1 << (EQ - EP - 1);
pub const H2: u16 = (1 << (EP - 2)) - (1 << (EP - ET - 1)) + (1 << (EQ - EP - 1));

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SaberError {
    #[error("interpolation guard bits violated at limb {limb}, index {index}")]
    InterpolationOverflow { limb: usize, index: usize },
    #[error("{what} must be {expected} bytes, got {actual}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("KAT file line {line}: {reason}")]
    KatFormat { line: usize, reason: String },
}

pub(crate) fn check_len(what: &'static str, bytes: &[u8], expected: usize) -> Result<(), SaberError> {
    if bytes.len() != expected {
        return Err(SaberError::Length {
            what,
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}
