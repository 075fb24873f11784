//! saber keygen|encaps|decaps|kat|bench.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::bail;
use clap::{Args, Subcommand};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use scaforge::saber::kat::{check_vector, parse_rsp, BUNDLED_KAT};
use scaforge::saber::kem::gen_secret;
use scaforge::saber::{
    matvec_mul_eager, matvec_mul_lazy, saber_decaps, saber_encaps, saber_keygen, MemoryMeter,
    PolyMatrix, PolyRq, PublicKey, SecretKey,
};
use scaforge::store::{read_bytes, write_bytes};

use crate::common::{out_dir, wrote, Outcome};

#[derive(Debug, Subcommand)]
pub enum SaberCommand {
    /// Generate a key pair (pk.bin, sk.bin).
    Keygen(KeygenArgs),
    /// Encapsulate to a public key (ct.bin, ss.bin).
    Encaps(EncapsArgs),
    /// Decapsulate a ciphertext (ss.bin).
    Decaps(DecapsArgs),
    /// Check known-answer vectors; the bundled set when no file is given.
    Kat(KatArgs),
    /// Count interpolations, products and peak scratch words, lazy vs eager.
    Bench(BenchArgs),
}

/// Seeded ChaCha20, or the OS generator when no seed is given.
fn rng(seed: Option<u64>) -> Box<dyn RngCore> {
    match seed {
        Some(s) => Box::new(ChaCha20Rng::seed_from_u64(s)),
        None => Box::new(ChaCha20Rng::from_os_rng()),
    }
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    /// Seed for reproducible keys; fresh OS randomness when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for pk.bin and sk.bin.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncapsArgs {
    /// Public key file.
    #[arg(long, value_name = "FILE")]
    pk: PathBuf,
    /// Seed for a reproducible ciphertext; fresh OS randomness when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for ct.bin and ss.bin.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecapsArgs {
    /// Secret key file.
    #[arg(long, value_name = "FILE")]
    sk: PathBuf,
    /// Ciphertext file.
    #[arg(long, value_name = "FILE")]
    ct: PathBuf,
    /// Output directory for ss.bin.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KatArgs {
    /// NIST .rsp response file.
    #[arg(long, value_name = "FILE")]
    file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Seed for the random matrix and secret.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Timed repetitions per variant.
    #[arg(long, value_name = "N", default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
}

pub fn run(c: SaberCommand) -> anyhow::Result<Outcome> {
    match c {
        SaberCommand::Keygen(a) => {
            let kp = saber_keygen(&mut *rng(a.seed))?;
            let dir = out_dir(&a.out)?;
            for (name, bytes) in [("pk.bin", kp.public.to_bytes()), ("sk.bin", kp.secret.to_bytes())] {
                let p = dir.join(name);
                write_bytes(&p, &bytes)?;
                wrote(&p);
            }
        }
        SaberCommand::Encaps(a) => {
            let pk = PublicKey::from_bytes(&read_bytes(&a.pk)?)?;
            let (ct, ss) = saber_encaps(&pk, &mut *rng(a.seed))?;
            let dir = out_dir(&a.out)?;
            for (name, bytes) in [("ct.bin", &ct[..]), ("ss.bin", &ss[..])] {
                let p = dir.join(name);
                write_bytes(&p, bytes)?;
                wrote(&p);
            }
            println!("shared secret: {}", hex::encode(ss));
        }
        SaberCommand::Decaps(a) => {
            let sk = SecretKey::from_bytes(&read_bytes(&a.sk)?)?;
            let ss = saber_decaps(&sk, &read_bytes(&a.ct)?)?;
            let p = out_dir(&a.out)?.join("ss.bin");
            write_bytes(&p, &ss)?;
            println!("shared secret: {}", hex::encode(ss));
            wrote(&p);
        }
        SaberCommand::Kat(a) => return kat(a),
        SaberCommand::Bench(a) => bench(a)?,
    }
    Ok(Outcome::Success)
}

fn kat(a: KatArgs) -> anyhow::Result<Outcome> {
    let text = match &a.file {
        Some(p) => String::from_utf8(read_bytes(p)?)?,
        None => BUNDLED_KAT.to_string(),
    };
    let vectors = parse_rsp(&text)?;
    if vectors.is_empty() {
        bail!("no vectors found");
    }
    let mut failed = 0;
    for v in &vectors {
        let o = check_vector(v)?;
        if o.passed() {
            println!("count {:>3}: pass", o.count);
        } else {
            failed += 1;
            let bad: Vec<&str> = [("pk", o.pk), ("sk", o.sk), ("ct", o.ct), ("ss", o.ss), ("decaps", o.decaps)]
                .iter()
                .filter(|(_, ok)| !ok)
                .map(|(n, _)| *n)
                .collect();
            println!("count {:>3}: FAIL ({} differ)", o.count, bad.join(", "));
        }
    }
    println!("{} passed, {failed} failed", vectors.len() - failed);
    if failed > 0 {
        bail!("{failed} of {} known-answer vectors failed", vectors.len());
    }
    Ok(Outcome::Success)
}

fn bench(a: BenchArgs) -> anyhow::Result<()> {
    let mut r = ChaCha20Rng::seed_from_u64(a.seed);
    let m: PolyMatrix = std::array::from_fn(|_| std::array::from_fn(|_| PolyRq::random(&mut r)));
    let mut seed = [0u8; 32];
    r.fill_bytes(&mut seed);
    let s = gen_secret(&seed);

    println!(
        "{:<6} {:>14} {:>10} {:>16} {:>10} {:>12}",
        "mode", "interpolations", "pointwise", "multiplications", "peak words", "us/matvec"
    );
    let mut results = Vec::new();
    for (name, lazy) in [("lazy", true), ("eager", false)] {
        let f = if lazy { matvec_mul_lazy } else { matvec_mul_eager };
        let meter = MemoryMeter::new();
        let out = f(&m, &s, false, &meter)?;
        let rep = meter.report();
        let t = Instant::now();
        for _ in 0..a.reps {
            std::hint::black_box(f(&m, &s, false, &MemoryMeter::new())?);
        }
        let us = t.elapsed().as_secs_f64() * 1e6 / a.reps as f64;
        println!(
            "{name:<6} {:>14} {:>10} {:>16} {:>10} {:>12.1}",
            rep.interpolations, rep.pointwise_products, rep.multiplications, rep.peak_words, us
        );
        results.push((out, rep));
    }
    let (lazy, eager) = (&results[0], &results[1]);
    if lazy.0 != eager.0 {
        bail!("lazy and eager products differ");
    }
    println!(
        "lazy saves {} interpolations and {:.2}x peak scratch memory",
        eager.1.interpolations - lazy.1.interpolations,
        eager.1.peak_words as f64 / lazy.1.peak_words as f64
    );
    Ok(())
}
