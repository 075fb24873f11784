//! NIST known-answer tests: the AES-256 CTR-DRBG used by the PQC KAT
//! generator, and a reader/writer for `.rsp` files.

use std::fmt::Write as _;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes256;
use rand_core::RngCore;

use super::kem::{saber_decaps, saber_encaps, saber_keygen, SecretKey};
use super::SaberError;

/// Ten vectors regenerated from the round-3 reference implementation with
/// the standard NIST harness.
pub const BUNDLED_KAT: &str = include_str!("../../data/PQCkemKAT_2304.rsp");

/// `randombytes()` of the NIST PQC KAT harness (AES-256 CTR-DRBG without
/// derivation function or reseeding).
#[derive(Clone)]
pub struct NistDrbg {
    key: [u8; 32],
    v: [u8; 16],
}

impl NistDrbg {
    pub fn new(entropy: &[u8; 48]) -> Self {
        let mut d = Self {
            key: [0; 32],
            v: [0; 16],
        };
        d.update(Some(entropy));
        d
    }

    fn increment_v(&mut self) {
        for b in self.v.iter_mut().rev() {
            if *b == 0xff {
                *b = 0;
            } else {
                *b += 1;
                break;
            }
        }
    }

    fn block(&mut self) -> [u8; 16] {
        self.increment_v();
        let cipher = Aes256::new(GenericArray::from_slice(&self.key));
        let mut blk = GenericArray::clone_from_slice(&self.v);
        cipher.encrypt_block(&mut blk);
        blk.into()
    }

    fn update(&mut self, data: Option<&[u8; 48]>) {
        let mut temp = [0u8; 48];
        for i in 0..3 {
            let b = self.block();
            temp[16 * i..16 * (i + 1)].copy_from_slice(&b);
        }
        if let Some(d) = data {
            for (t, x) in temp.iter_mut().zip(d) {
                *t ^= x;
            }
        }
        self.key.copy_from_slice(&temp[..32]);
        self.v.copy_from_slice(&temp[32..]);
    }

    pub fn randombytes(&mut self, out: &mut [u8]) {
        for chunk in out.chunks_mut(16) {
            let b = self.block();
            chunk.copy_from_slice(&b[..chunk.len()]);
        }
        self.update(None);
    }
}

impl RngCore for NistDrbg {
    fn next_u32(&mut self) -> u32 {
        let mut b = [0u8; 4];
        self.randombytes(&mut b);
        u32::from_le_bytes(b)
    }

    fn next_u64(&mut self) -> u64 {
        let mut b = [0u8; 8];
        self.randombytes(&mut b);
        u64::from_le_bytes(b)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.randombytes(dst);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KatVector {
    pub count: usize,
    pub seed: [u8; 48],
    pub pk: Vec<u8>,
    pub sk: Vec<u8>,
    pub ct: Vec<u8>,
    pub ss: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KatOutcome {
    pub count: usize,
    pub pk: bool,
    pub sk: bool,
    pub ct: bool,
    pub ss: bool,
    /// Decapsulating the expected ciphertext with the expected key yields `ss`.
    pub decaps: bool,
}

impl KatOutcome {
    pub fn passed(&self) -> bool {
        self.pk && self.sk && self.ct && self.ss && self.decaps
    }
}

/// Seeds the harness derives from the fixed entropy `0, 1, …, 47`.
pub fn kat_seeds(n: usize) -> Vec<[u8; 48]> {
    let entropy: [u8; 48] = core::array::from_fn(|i| i as u8);
    let mut drbg = NistDrbg::new(&entropy);
    (0..n)
        .map(|_| {
            let mut s = [0u8; 48];
            drbg.randombytes(&mut s);
            s
        })
        .collect()
}

pub fn generate_vector(count: usize, seed: &[u8; 48]) -> Result<KatVector, SaberError> {
    let mut drbg = NistDrbg::new(seed);
    let kp = saber_keygen(&mut drbg)?;
    let (ct, ss) = saber_encaps(&kp.public, &mut drbg)?;
    Ok(KatVector {
        count,
        seed: *seed,
        pk: kp.public.to_bytes(),
        sk: kp.secret.to_bytes(),
        ct,
        ss: ss.to_vec(),
    })
}

pub fn check_vector(v: &KatVector) -> Result<KatOutcome, SaberError> {
    let got = generate_vector(v.count, &v.seed)?;
    let decaps = match SecretKey::from_bytes(&v.sk) {
        Ok(sk) => saber_decaps(&sk, &v.ct).map(|k| k[..] == v.ss[..]).unwrap_or(false),
        Err(_) => false,
    };
    Ok(KatOutcome {
        count: v.count,
        pk: got.pk == v.pk,
        sk: got.sk == v.sk,
        ct: got.ct == v.ct,
        ss: got.ss == v.ss,
        decaps,
    })
}

fn kat_err(line: usize, reason: impl Into<String>) -> SaberError {
    SaberError::KatFormat {
        line,
        reason: reason.into(),
    }
}

/// Parses `count/seed/pk/sk/ct/ss` records. `#` lines and blank lines are
/// ignored.
pub fn parse_rsp(text: &str) -> Result<Vec<KatVector>, SaberError> {
    #[derive(Default)]
    struct Partial {
        count: Option<usize>,
        seed: Option<Vec<u8>>,
        pk: Option<Vec<u8>>,
        sk: Option<Vec<u8>>,
        ct: Option<Vec<u8>>,
        ss: Option<Vec<u8>>,
        line: usize,
    }
    fn finish(p: Partial) -> Result<KatVector, SaberError> {
        let missing = |f: &str| kat_err(p.line, format!("record is missing `{f}`"));
        let seed = p.seed.ok_or_else(|| missing("seed"))?;
        let seed: [u8; 48] = seed
            .try_into()
            .map_err(|_| kat_err(p.line, "seed must be 48 bytes"))?;
        Ok(KatVector {
            count: p.count.ok_or_else(|| missing("count"))?,
            seed,
            pk: p.pk.ok_or_else(|| missing("pk"))?,
            sk: p.sk.ok_or_else(|| missing("sk"))?,
            ct: p.ct.ok_or_else(|| missing("ct"))?,
            ss: p.ss.ok_or_else(|| missing("ss"))?,
        })
    }

    let mut out = Vec::new();
    let mut cur: Option<Partial> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, value) = line
            .split_once('=')
            .map(|(a, b)| (a.trim(), b.trim()))
            .ok_or_else(|| kat_err(lineno, "expected `name = value`"))?;
        if name == "count" {
            if let Some(p) = cur.take() {
                out.push(finish(p)?);
            }
            let count = value
                .parse()
                .map_err(|_| kat_err(lineno, "count is not an integer"))?;
            cur = Some(Partial {
                count: Some(count),
                line: lineno,
                ..Partial::default()
            });
            continue;
        }
        let p = cur
            .as_mut()
            .ok_or_else(|| kat_err(lineno, "field before the first `count`"))?;
        let bytes = hex::decode(value).map_err(|e| kat_err(lineno, format!("bad hex: {e}")))?;
        match name {
            "seed" => p.seed = Some(bytes),
            "pk" => p.pk = Some(bytes),
            "sk" => p.sk = Some(bytes),
            "ct" => p.ct = Some(bytes),
            "ss" => p.ss = Some(bytes),
            other => return Err(kat_err(lineno, format!("unknown field `{other}`"))),
        }
    }
    if let Some(p) = cur.take() {
        out.push(finish(p)?);
    }
    Ok(out)
}

pub fn format_vector(v: &KatVector) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "count = {}", v.count);
    for (name, bytes) in [
        ("seed", &v.seed[..]),
        ("pk", &v.pk[..]),
        ("sk", &v.sk[..]),
        ("ct", &v.ct[..]),
        ("ss", &v.ss[..]),
    ] {
        let _ = writeln!(s, "{name} = {}", hex::encode_upper(bytes));
    }
    s
}
