//! Saber IND-CPA encryption and the CCA key encapsulation on top of it.
//!
//! Byte layouts follow the round-3 reference implementation:
//! `pk = pack10(b) ‖ seed_A`, `sk = pack13(s) ‖ pk ‖ H(pk) ‖ z`,
//! `ct = pack10(b') ‖ pack4(c_m)`.

use rand_core::RngCore;
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::{Digest, Sha3_256, Sha3_512, Shake128};

use super::matvec::{inner_product_lazy, matvec_mul_lazy, PolyMatrix, PolyVec};
use super::meter::MemoryMeter;
use super::pack::{
    msg_to_poly, poly_from_bytes_t, poly_to_bytes_t, poly_to_msg, polyvec_from_bytes_p,
    polyvec_from_bytes_q, polyvec_to_bytes_p, polyvec_to_bytes_q,
};
use super::poly::PolyRq;
use super::{
    check_len, SaberError, CIPHERTEXT_BYTES, EP, EQ, ET, H1, H2, INDCPA_SECRET_KEY_BYTES,
    KEY_BYTES, L, N, P, POLYVEC_BYTES, POLYVEC_COMPRESSED_BYTES, POLY_COIN_BYTES,
    PUBLIC_KEY_BYTES, Q, SECRET_KEY_BYTES, SEED_BYTES, SHARED_SECRET_BYTES,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub seed_a: [u8; SEED_BYTES],
    /// Rounded `Aᵀ·s`, coefficients mod `p = 2^10`.
    pub b: PolyVec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretKey {
    /// Centered-binomial secret, coefficients in `[−4, 4]` mod `2^13`.
    pub s: PolyVec,
    pub pk: PublicKey,
    pub pk_hash: [u8; 32],
    /// Returned in place of the key when re-encryption fails.
    pub z: [u8; KEY_BYTES],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaberKeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

impl PublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = polyvec_to_bytes_p(&self.b);
        out.extend_from_slice(&self.seed_a);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SaberError> {
        check_len("public key", bytes, PUBLIC_KEY_BYTES)?;
        let mut seed_a = [0u8; SEED_BYTES];
        seed_a.copy_from_slice(&bytes[POLYVEC_COMPRESSED_BYTES..]);
        Ok(Self {
            seed_a,
            b: polyvec_from_bytes_p(&bytes[..POLYVEC_COMPRESSED_BYTES]),
        })
    }
}

impl SecretKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = polyvec_to_bytes_q(&self.s);
        out.extend_from_slice(&self.pk.to_bytes());
        out.extend_from_slice(&self.pk_hash);
        out.extend_from_slice(&self.z);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SaberError> {
        check_len("secret key", bytes, SECRET_KEY_BYTES)?;
        let pk_end = INDCPA_SECRET_KEY_BYTES + PUBLIC_KEY_BYTES;
        let mut pk_hash = [0u8; 32];
        pk_hash.copy_from_slice(&bytes[pk_end..pk_end + 32]);
        let mut z = [0u8; KEY_BYTES];
        z.copy_from_slice(&bytes[pk_end + 32..]);
        Ok(Self {
            s: polyvec_from_bytes_q(&bytes[..INDCPA_SECRET_KEY_BYTES]),
            pk: PublicKey::from_bytes(&bytes[INDCPA_SECRET_KEY_BYTES..pk_end])?,
            pk_hash,
            z,
        })
    }
}

fn shake128(input: &[u8], out: &mut [u8]) {
    let mut h = Shake128::default();
    h.update(input);
    h.finalize_xof().read(out);
}

fn sha3_256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha3_256::new();
    for p in parts {
        Digest::update(&mut h, p);
    }
    h.finalize().into()
}

fn sha3_512(input: &[u8]) -> [u8; 64] {
    Sha3_512::digest(input).into()
}

/// Centered binomial sample with `μ = 8`: each coefficient is the
/// difference of the popcounts of two nibbles.
pub fn cbd(buf: &[u8]) -> PolyRq {
    let mut c = [0i16; N];
    for (i, word) in buf.chunks_exact(4).take(N / 4).enumerate() {
        let t = u32::from_le_bytes([word[0], word[1], word[2], word[3]]);
        let mut d = 0u32;
        for j in 0..4 {
            d += (t >> j) & 0x1111_1111;
        }
        for k in 0..4 {
            let a = (d >> (8 * k)) & 0xf;
            let b = (d >> (8 * k + 4)) & 0xf;
            c[4 * i + k] = a as i16 - b as i16;
        }
    }
    PolyRq::from_signed(&c)
}

pub fn gen_secret(seed: &[u8; 32]) -> PolyVec {
    let mut buf = [0u8; L * POLY_COIN_BYTES];
    shake128(seed, &mut buf);
    core::array::from_fn(|i| cbd(&buf[i * POLY_COIN_BYTES..(i + 1) * POLY_COIN_BYTES]))
}

pub fn gen_matrix(seed_a: &[u8; SEED_BYTES]) -> PolyMatrix {
    let mut buf = vec![0u8; L * POLYVEC_BYTES];
    shake128(seed_a, &mut buf);
    core::array::from_fn(|i| polyvec_from_bytes_q(&buf[i * POLYVEC_BYTES..(i + 1) * POLYVEC_BYTES]))
}

/// `⌊(x + h1) / 2^(εq − εp)⌋`, landing in `[0, p)`.
fn round_to_p(v: &mut PolyVec) {
    for p in v.iter_mut() {
        *p = PolyRq::from_coeffs(core::array::from_fn(|k| {
            (p.coeff(k).wrapping_add(H1) & (Q - 1)) >> (EQ - EP)
        }));
    }
}

fn indcpa_keypair<R: RngCore + ?Sized>(
    rng: &mut R,
    meter: &MemoryMeter,
) -> Result<(PublicKey, PolyVec), SaberError> {
    let mut raw = [0u8; SEED_BYTES];
    rng.fill_bytes(&mut raw);
    let mut seed_a = [0u8; SEED_BYTES];
    shake128(&raw, &mut seed_a);
    let mut noise = [0u8; 32];
    rng.fill_bytes(&mut noise);

    let s = gen_secret(&noise);
    let a = gen_matrix(&seed_a);
    let mut b = matvec_mul_lazy(&a, &s, true, meter)?;
    round_to_p(&mut b);
    Ok((PublicKey { seed_a, b }, s))
}

fn indcpa_enc(
    m: &[u8; KEY_BYTES],
    coins: &[u8; 32],
    pk: &PublicKey,
    meter: &MemoryMeter,
) -> Result<Vec<u8>, SaberError> {
    let sp = gen_secret(coins);
    let a = gen_matrix(&pk.seed_a);
    let mut bp = matvec_mul_lazy(&a, &sp, false, meter)?;
    round_to_p(&mut bp);

    let vp = inner_product_lazy(&pk.b, &sp, meter)?;
    let mp = msg_to_poly(m);
    let cm = PolyRq::from_coeffs(core::array::from_fn(|k| {
        let x = vp
            .coeff(k)
            .wrapping_add(H1)
            .wrapping_sub(mp.coeff(k) << (EP - 1));
        (x & (P - 1)) >> (EP - ET)
    }));

    let mut ct = polyvec_to_bytes_p(&bp);
    ct.extend_from_slice(&poly_to_bytes_t(&cm));
    Ok(ct)
}

fn indcpa_dec(s: &PolyVec, ct: &[u8], meter: &MemoryMeter) -> Result<[u8; KEY_BYTES], SaberError> {
    let bp = polyvec_from_bytes_p(&ct[..POLYVEC_COMPRESSED_BYTES]);
    let cm = poly_from_bytes_t(&ct[POLYVEC_COMPRESSED_BYTES..]);
    let v = inner_product_lazy(&bp, s, meter)?;
    let m = PolyRq::from_coeffs(core::array::from_fn(|k| {
        let x = v
            .coeff(k)
            .wrapping_add(H2)
            .wrapping_sub(cm.coeff(k) << (EP - ET));
        (x & (P - 1)) >> (EP - 1)
    }));
    Ok(poly_to_msg(&m))
}

/// Key generation; draws 32 + 32 + 32 bytes from `rng` in three calls.
pub fn saber_keygen<R: RngCore + ?Sized>(rng: &mut R) -> Result<SaberKeyPair, SaberError> {
    saber_keygen_metered(rng, &MemoryMeter::new())
}

pub fn saber_keygen_metered<R: RngCore + ?Sized>(
    rng: &mut R,
    meter: &MemoryMeter,
) -> Result<SaberKeyPair, SaberError> {
    let (pk, s) = indcpa_keypair(rng, meter)?;
    let pk_hash = sha3_256(&[&pk.to_bytes()]);
    let mut z = [0u8; KEY_BYTES];
    rng.fill_bytes(&mut z);
    Ok(SaberKeyPair {
        public: pk.clone(),
        secret: SecretKey {
            s,
            pk,
            pk_hash,
            z,
        },
    })
}

/// Returns `(ciphertext, shared secret)`; draws 32 bytes from `rng`.
pub fn saber_encaps<R: RngCore + ?Sized>(
    pk: &PublicKey,
    rng: &mut R,
) -> Result<(Vec<u8>, [u8; SHARED_SECRET_BYTES]), SaberError> {
    let meter = MemoryMeter::new();
    let mut raw = [0u8; 32];
    rng.fill_bytes(&mut raw);
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(&sha3_256(&[&raw]));
    buf[32..].copy_from_slice(&sha3_256(&[&pk.to_bytes()]));
    let kr = sha3_512(&buf);

    let m: [u8; 32] = buf[..32].try_into().expect("32 bytes");
    let coins: [u8; 32] = kr[32..].try_into().expect("32 bytes");
    let ct = indcpa_enc(&m, &coins, pk, &meter)?;
    let hc = sha3_256(&[&ct]);
    Ok((ct, sha3_256(&[&kr[..32], &hc])))
}

/// Never fails on a well-sized but tampered ciphertext: the re-encryption
/// check substitutes `z` for the pre-key (implicit rejection).
pub fn saber_decaps(sk: &SecretKey, ct: &[u8]) -> Result<[u8; SHARED_SECRET_BYTES], SaberError> {
    check_len("ciphertext", ct, CIPHERTEXT_BYTES)?;
    let meter = MemoryMeter::new();
    let m = indcpa_dec(&sk.s, ct, &meter)?;
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(&m);
    buf[32..].copy_from_slice(&sk.pk_hash);
    let kr = sha3_512(&buf);
    let coins: [u8; 32] = kr[32..].try_into().expect("32 bytes");
    let cmp = indcpa_enc(&m, &coins, &sk.pk, &meter)?;

    let diff = cmp.iter().zip(ct).fold(0u8, |acc, (a, b)| acc | (a ^ b));
    // 0xff when the ciphertexts differ, 0 otherwise
    let mask = ((u16::from(diff) + 0xff) >> 8) as u8 * 0xff;
    let mut pre = [0u8; 32];
    for (i, p) in pre.iter_mut().enumerate() {
        *p = (kr[i] & !mask) | (sk.z[i] & mask);
    }
    let hc = sha3_256(&[ct]);
    Ok(sha3_256(&[&pre, &hc]))
}
