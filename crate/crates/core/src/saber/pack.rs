//! Little-endian bit packing of coefficient vectors.

use super::matvec::PolyVec;
use super::poly::PolyRq;
use super::{EP, EQ, ET, KEY_BYTES, N, POLY_BYTES, POLY_COMPRESSED_BYTES};

/// Packs the low `bits` of each coefficient into a little-endian bit stream.
pub fn pack_bits(coeffs: &[u16], bits: u32, out: &mut Vec<u8>) {
    let mut acc: u32 = 0;
    let mut filled = 0u32;
    let mask = (1u32 << bits) - 1;
    for &c in coeffs {
        acc |= (u32::from(c) & mask) << filled;
        filled += bits;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
}

/// Inverse of [`pack_bits`] for `N` coefficients.
pub fn unpack_bits(bytes: &[u8], bits: u32) -> [u16; N] {
    let mut out = [0u16; N];
    let mut acc: u32 = 0;
    let mut filled = 0u32;
    let mask = (1u32 << bits) - 1;
    let mut it = bytes.iter();
    for c in out.iter_mut() {
        while filled < bits {
            acc |= u32::from(*it.next().unwrap_or(&0)) << filled;
            filled += 8;
        }
        *c = (acc & mask) as u16;
        acc >>= bits;
        filled -= bits;
    }
    out
}

fn pack_vec(v: &PolyVec, bits: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.len() * bits as usize * N / 8);
    for p in v {
        pack_bits(p.coeffs(), bits, &mut out);
    }
    out
}

fn unpack_vec(bytes: &[u8], bits: u32, poly_bytes: usize) -> PolyVec {
    core::array::from_fn(|i| {
        PolyRq::from_coeffs(unpack_bits(&bytes[i * poly_bytes..(i + 1) * poly_bytes], bits))
    })
}

pub fn polyvec_to_bytes_q(v: &PolyVec) -> Vec<u8> {
    pack_vec(v, EQ)
}

pub fn polyvec_from_bytes_q(bytes: &[u8]) -> PolyVec {
    unpack_vec(bytes, EQ, POLY_BYTES)
}

pub fn polyvec_to_bytes_p(v: &PolyVec) -> Vec<u8> {
    pack_vec(v, EP)
}

pub fn polyvec_from_bytes_p(bytes: &[u8]) -> PolyVec {
    unpack_vec(bytes, EP, POLY_COMPRESSED_BYTES)
}

pub fn poly_to_bytes_t(p: &PolyRq) -> Vec<u8> {
    let mut out = Vec::with_capacity(ET as usize * N / 8);
    pack_bits(p.coeffs(), ET, &mut out);
    out
}

pub fn poly_from_bytes_t(bytes: &[u8]) -> PolyRq {
    PolyRq::from_coeffs(unpack_bits(bytes, ET))
}

/// One message bit per coefficient, LSB first within each byte.
pub fn msg_to_poly(m: &[u8; KEY_BYTES]) -> PolyRq {
    PolyRq::from_coeffs(core::array::from_fn(|i| u16::from((m[i / 8] >> (i % 8)) & 1)))
}

pub fn poly_to_msg(p: &PolyRq) -> [u8; KEY_BYTES] {
    let mut m = [0u8; KEY_BYTES];
    for (i, &c) in p.coeffs().iter().enumerate() {
        m[i / 8] |= ((c & 1) as u8) << (i % 8);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn thirteen_bit_layout() {
        // first coefficient fills byte 0 and the low 5 bits of byte 1
        let mut c = [0u16; N];
        c[0] = 0x1abc;
        c[1] = 0x0003;
        let mut out = Vec::new();
        pack_bits(&c, 13, &mut out);
        assert_eq!(out.len(), POLY_BYTES);
        assert_eq!(out[0], 0xbc);
        assert_eq!(out[1], 0x1a | (3 << 5));
        assert_eq!(unpack_bits(&out, 13), c);
    }

    #[test]
    fn roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: PolyVec = core::array::from_fn(|_| PolyRq::random(&mut rng));
        assert_eq!(polyvec_from_bytes_q(&polyvec_to_bytes_q(&v)), v);
        let vp: PolyVec = core::array::from_fn(|i| {
            PolyRq::from_coeffs(core::array::from_fn(|k| v[i].coeff(k) & 0x3ff))
        });
        assert_eq!(polyvec_from_bytes_p(&polyvec_to_bytes_p(&vp)), vp);
        let t = PolyRq::from_coeffs(core::array::from_fn(|k| v[0].coeff(k) & 0xf));
        assert_eq!(poly_from_bytes_t(&poly_to_bytes_t(&t)), t);
        let m: [u8; 32] = core::array::from_fn(|i| (i * 37) as u8);
        assert_eq!(poly_to_msg(&msg_to_poly(&m)), m);
    }
}
