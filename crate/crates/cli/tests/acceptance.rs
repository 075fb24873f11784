//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Reference values come from independent implementations below
//! (S-box from GF(2^8) arithmetic, two-pass Pearson, naive negacyclic
//! product), not from the library under test.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scaforge::attack::{compute_mtd, geometric_checkpoints, CpaAccumulator, MtdConfig};
use scaforge::countermeasure::{
    find_voltage_drop_attack, Acquisition, Countermeasures, DsacConfig, SupplyConfig, TvtfConfig,
    VddAttackConfig,
};
use scaforge::detect::{
    evaluate, generate_dataset, train_detector, voltage_drop_detect, RoTrackerConfig, SensorParams,
    TrainConfig,
};
use scaforge::leakage::{LeakageConfig, LeakageModel};
use scaforge::saber::kat::{check_vector, parse_rsp, BUNDLED_KAT};
use scaforge::saber::kem::gen_secret;
use scaforge::saber::toom::toom4_mul;
use scaforge::saber::{
    matvec_mul_eager, matvec_mul_lazy, saber_decaps, saber_encaps, saber_keygen, MemoryMeter,
    PolyMatrix, PolyRq, N, Q,
};
use scaforge::trace::TraceSet;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

// ---------------------------------------------------------------- oracles

fn gf_mul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let hi = a & 0x80;
        a <<= 1;
        if hi != 0 {
            a ^= 0x1b;
        }
        b >>= 1;
    }
    p
}

/// AES S-box from the multiplicative inverse and the affine map.
fn oracle_sbox() -> [u8; 256] {
    let mut s = [0u8; 256];
    for (x, out) in s.iter_mut().enumerate() {
        let inv = (1..=255u8).find(|&y| gf_mul(x as u8, y) == 1).unwrap_or(0);
        let mut b = inv;
        for r in 1..5 {
            b ^= inv.rotate_left(r);
        }
        *out = b ^ 0x63;
    }
    s
}

/// Two-pass Pearson correlation between the Hamming weight hypothesis for
/// `key` and one sample column.
fn two_pass_corr(ts: &TraceSet, sbox: &[u8; 256], byte: usize, key: u8, sample: usize) -> f64 {
    let n = ts.n_traces() as f64;
    let h: Vec<f64> = ts
        .plaintexts()
        .iter()
        .map(|p| sbox[(p[byte] ^ key) as usize].count_ones() as f64)
        .collect();
    let x: Vec<f64> = (0..ts.n_traces()).map(|i| ts.trace(i)[sample] as f64).collect();
    let mh = h.iter().sum::<f64>() / n;
    let mx = x.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&h) {
        sxy += (a - mx) * (b - mh);
        sxx += (a - mx) * (a - mx);
        syy += (b - mh) * (b - mh);
    }
    sxy / (sxx * syy).sqrt()
}

/// Naive product in Z_q[x]/(x^n + 1).
fn oracle_polymul(a: &PolyRq, b: &PolyRq) -> Vec<u16> {
    let mut c = vec![0i64; N];
    for i in 0..N {
        for j in 0..N {
            let p = a.coeff(i) as i64 * b.coeff(j) as i64;
            if i + j < N {
                c[i + j] += p;
            } else {
                c[i + j - N] -= p;
            }
        }
    }
    c.iter().map(|v| v.rem_euclid(Q as i64) as u16).collect()
}

// ---------------------------------------------------------------- helpers

fn acquisition(cm: Countermeasures, sigma: f64, seed: u64) -> Acquisition {
    Acquisition {
        leakage: LeakageConfig { sigma, ..LeakageConfig::default() },
        supply: SupplyConfig::default(),
        countermeasures: cm,
        n_samples: 64,
        seed,
    }
}

fn dsac(a: f64) -> DsacConfig {
    DsacConfig { attenuation: a, ..DsacConfig::default() }
}

/// Measured MTD (rank 1 held for 3 checkpoints), or `None` within `max` traces.
fn measure_mtd(acq: &Acquisition, max: usize) -> Option<usize> {
    let cfg = MtdConfig {
        model: acq.leakage.model,
        key: acq.leakage.round_key(),
        checkpoints: geometric_checkpoints(10, 1.1, max),
        stability_window: 3,
        stop_when_disclosed: true,
    };
    compute_mtd(&mut acq.source().with_limit(max), &cfg).unwrap().mtd
}

fn mtd_over_seeds(cm: &Countermeasures, sigma: f64, max: usize) -> Vec<f64> {
    (1..=5)
        .map(|s| measure_mtd(&acquisition(cm.clone(), sigma, s), max).map_or(f64::INFINITY, |m| m as f64))
        .collect()
}

// ---------------------------------------------------------------- criteria

fn c1_unprotected_mtd() -> Check {
    let t = Instant::now();
    let m = measure_mtd(&acquisition(Countermeasures::none(), 2.0, 1), 5000);
    let dt = t.elapsed();
    let detail = format!("MTD {m:?} in {:.2} s", dt.as_secs_f64());
    ensure(m.is_some_and(|m| m <= 5000) && dt < Duration::from_secs(60), detail)
}

fn c2_attenuation_scaling() -> Check {
    let base = median(mtd_over_seeds(&Countermeasures::none(), 2.0, 5000));
    let mut parts = vec![format!("A=1 median {base}")];
    let mut ok = base.is_finite();
    for a in [4.0f64, 8.0] {
        let cm = Countermeasures { dsac: Some(dsac(a)), ..Countermeasures::none() };
        let m = median(mtd_over_seeds(&cm, 2.0, 40_000));
        let ratio = m / base;
        let (lo, hi) = (a * a / 4.0, 4.0 * a * a);
        ok &= ratio >= lo && ratio <= hi;
        parts.push(format!("A={a} median {m} ratio {ratio:.1} in [{lo}, {hi}]"));
    }
    ensure(ok, parts.join("; "))
}

fn c3_tvtf_gain() -> Check {
    let only = Countermeasures { dsac: Some(dsac(4.0)), ..Countermeasures::none() };
    let both = Countermeasures { tvtf: Some(TvtfConfig::default()), ..only.clone() };
    let m_only = median(mtd_over_seeds(&only, 2.0, 40_000));
    let m_both = median(mtd_over_seeds(&both, 2.0, 80_000));
    let ratio = m_both / m_only;
    ensure(
        m_only.is_finite() && ratio > 2.0,
        format!("DSAC {m_only}, DSAC+TVTF {m_both}, ratio {ratio:.2}"),
    )
}

fn c4_vdd_attack() -> Check {
    let supply = SupplyConfig::default();
    let cfg = VddAttackConfig {
        leakage: LeakageConfig::default(),
        supply: supply.clone(),
        dsac: dsac(64.0),
        bleed: None,
        tvtf: None,
        n_samples: 64,
        seed: 1,
        budget: 3000,
        lo: 0.70,
        hi: 1.0,
        step: 0.02,
    };
    let sweep = find_voltage_drop_attack(&cfg).map_err(|e| e.to_string())?;
    let best = sweep.best_point().ok_or("no point found")?;
    let nominal = sweep.nominal.mtd_estimate;
    // measured disclosure at vdd* against the nominal estimate
    let acq = Acquisition {
        supply: supply.at(best.vdd),
        ..acquisition(
            Countermeasures { dsac: Some(dsac(64.0)), ..Countermeasures::none() },
            2.0,
            1,
        )
    };
    let measured = measure_mtd(&acq, (nominal / 10.0) as usize);
    let linear = best.vdd >= supply.v_lin && best.vdd < supply.v_sat;
    ensure(
        linear && best.mtd_estimate <= nominal / 10.0 && measured.is_some(),
        format!(
            "vdd* {:.2} V (A_eff {:.2}), estimate {:.0} vs nominal {:.0}, measured MTD {measured:?}",
            best.vdd, best.a_eff, best.mtd_estimate, nominal
        ),
    )
}

fn c5_detector() -> Check {
    let t = Instant::now();
    let data = generate_dataset(4000, 128, &SensorParams::default(), 1).map_err(|e| e.to_string())?;
    let report = train_detector(&data.slice(0, 3000), &TrainConfig::default()).map_err(|e| e.to_string())?;
    let ev = evaluate(&report.model, &data.slice(3000, 4000)).map_err(|e| e.to_string())?;
    let dt = t.elapsed();
    ensure(
        ev.accuracy >= 0.99 && dt < Duration::from_secs(120),
        format!("held-out accuracy {:.4} in {:.1} s", ev.accuracy, dt.as_secs_f64()),
    )
}

fn c6_ro_monitor() -> Check {
    let cfg = RoTrackerConfig::default();
    let drop_at = 1500;
    let mut worst = 0.0f64;
    for phase in 0..8 {
        let at = drop_at + phase * 37;
        let vdd: Vec<f64> = (0..6000)
            .map(|i| if i < at { 1.0 } else { 0.8 } + 0.002 * (i as f64 * 0.17).sin())
            .collect();
        let v_aes = vec![0.8; vdd.len()];
        let alarm = voltage_drop_detect(&vdd, &v_aes, &cfg)
            .map_err(|e| e.to_string())?
            .ok_or(format!("no alarm for a drop at sample {at}"))?;
        if alarm.sample < at {
            return Err(format!("alarm at {} before the drop at {at}", alarm.sample));
        }
        worst = worst.max((alarm.sample - at) as f64 / cfg.sample_rate);
    }
    // steady supply must stay silent
    let quiet = voltage_drop_detect(&vec![1.0; 6000], &vec![0.8; 6000], &cfg).map_err(|e| e.to_string())?;
    ensure(
        worst <= 0.8e-3 && quiet.is_none(),
        format!("worst latency {:.3} ms, false alarm {}", worst * 1e3, quiet.is_some()),
    )
}

fn c7_toom() -> Check {
    let meter = MemoryMeter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    for i in 0..10_000 {
        let a = PolyRq::random(&mut rng);
        let b = PolyRq::random(&mut rng);
        let got = toom4_mul(&a, &b, &meter).map_err(|e| e.to_string())?;
        if got.coeffs()[..] != oracle_polymul(&a, &b)[..] {
            return Err(format!("random pair {i} differs"));
        }
    }
    let mut edge = vec![PolyRq::zero(), PolyRq::one(), PolyRq::from_coeffs([Q - 1; N])];
    for k in [1, 63, 64, 127, 128, 191, 192, 255] {
        edge.push(PolyRq::monomial(k, 1));
        edge.push(PolyRq::monomial(k, Q - 1));
    }
    let mut alt = [0u16; N];
    for (i, c) in alt.iter_mut().enumerate() {
        *c = if i % 2 == 0 { Q - 1 } else { 0 };
    }
    edge.push(PolyRq::from_coeffs(alt));
    for a in &edge {
        for b in &edge {
            if toom4_mul(a, b, &meter).map_err(|e| e.to_string())?.coeffs()[..] != oracle_polymul(a, b)[..] {
                return Err("boundary pattern differs".into());
            }
        }
    }
    ensure(true, format!("10000 random pairs, {} boundary pairs", edge.len() * edge.len()))
}

fn c8_lazy_interpolation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m: PolyMatrix = std::array::from_fn(|_| std::array::from_fn(|_| PolyRq::random(&mut rng)));
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let s = gen_secret(&seed);
    let (ml, me) = (MemoryMeter::new(), MemoryMeter::new());
    let lazy = matvec_mul_lazy(&m, &s, false, &ml).map_err(|e| e.to_string())?;
    let eager = matvec_mul_eager(&m, &s, false, &me).map_err(|e| e.to_string())?;
    let (rl, re) = (ml.report(), me.report());
    let ratio = re.peak_words as f64 / rl.peak_words as f64;
    ensure(
        lazy == eager && rl.interpolations == 3 && re.interpolations == 9 && ratio >= 2.0,
        format!(
            "interpolations {} vs {}, peak words {} vs {} ({ratio:.2}x)",
            rl.interpolations, re.interpolations, rl.peak_words, re.peak_words
        ),
    )
}

fn c9_kem() -> Check {
    let vectors = parse_rsp(BUNDLED_KAT).map_err(|e| e.to_string())?;
    let passed = vectors
        .iter()
        .filter(|v| check_vector(v).is_ok_and(|o| o.passed()))
        .count();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut agree = 0;
    for _ in 0..10_000 {
        let kp = saber_keygen(&mut rng).map_err(|e| e.to_string())?;
        let (ct, ss) = saber_encaps(&kp.public, &mut rng).map_err(|e| e.to_string())?;
        if saber_decaps(&kp.secret, &ct).map_err(|e| e.to_string())? == ss {
            agree += 1;
        }
    }
    ensure(
        !vectors.is_empty() && passed == vectors.len() && agree == 10_000,
        format!("KAT {passed}/{}, round trips {agree}/10000", vectors.len()),
    )
}

// criterion 10, part one
fn streaming_vs_two_pass() -> Check {
    let sbox = oracle_sbox();
    let acq = acquisition(
        Countermeasures { dsac: Some(dsac(4.0)), ..Countermeasures::none() },
        2.0,
        10,
    );
    let all = acq.acquire(0, 3000).map_err(|e| e.to_string())?;
    let mut acc = CpaAccumulator::new(64);
    for (lo, hi) in [(0, 1), (1, 700), (700, 2048), (2048, 3000)] {
        acc.update(&all.slice(lo, hi)).map_err(|e| e.to_string())?;
    }
    let key = acq.leakage.round_key();
    let mut worst = 0.0f64;
    for byte in [0, 7, 15] {
        let pos = all.leak_positions()[byte];
        for k in [key[byte], 0x00, 0x5a, 0xff] {
            for s in [pos, 0, 63] {
                let a = acc.correlation_at(byte, LeakageModel::HammingWeight, k, s);
                let b = two_pass_corr(&all, &sbox, byte, k, s);
                worst = worst.max((a - b).abs() / b.abs().max(1e-3));
            }
        }
    }
    ensure(worst <= 1e-6, format!("worst relative difference {worst:.2e}"))
}

fn run_cli(threads: usize, args: &[&str], dir: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_scaforge"))
        .args(args)
        .env("SCAFORGE_THREADS", threads.to_string())
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    // 3 (negative outcome) is a legitimate, comparable result
    let code = out.status.code();
    if !matches!(code, Some(0 | 3)) {
        return Err(format!("{args:?} exited {code:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(format!("exit {code:?}\n{}", String::from_utf8_lossy(&out.stdout)))
}

/// Runs every subcommand in a fresh directory; returns artifacts and exit
/// status plus stdout keyed by name. Timing columns of `saber bench` are dropped.
fn cli_session(threads: usize) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let steps: &[(&str, &[&str])] = &[
        ("simulate", &["simulate", "--traces", "4000", "--countermeasures", "dsac,bleed,tvtf", "--seed", "3", "--out", "sim"]),
        ("attack", &["attack", "--traces", "sim/traces.scat", "--mtd", "--out", "att"]),
        ("vdd-attack", &["vdd-attack", "--range", "0.80:1.0:0.05", "--budget", "500", "--out", "vdd"]),
        ("detect-gen", &["detect", "gen", "--count", "600", "--out", "det"]),
        ("detect-train", &["detect", "train", "--data", "det/sensor.scat", "--limit", "400", "--epochs", "5", "--out", "det"]),
        ("detect-eval", &["detect", "eval", "--model", "det/model.json", "--data", "det/sensor.scat", "--skip", "400", "--out", "det"]),
        ("saber-keygen", &["saber", "keygen", "--seed", "4", "--out", "kem"]),
        ("saber-encaps", &["saber", "encaps", "--pk", "kem/pk.bin", "--seed", "5", "--out", "kem"]),
        ("saber-decaps", &["saber", "decaps", "--sk", "kem/sk.bin", "--ct", "kem/ct.bin", "--out", "kem/dec"]),
        ("saber-kat", &["saber", "kat"]),
        ("saber-bench", &["saber", "bench", "--reps", "1"]),
    ];
    let mut out = BTreeMap::new();
    for (name, args) in steps {
        let mut stdout = run_cli(threads, args, d)?;
        if *name == "saber-bench" {
            stdout = stdout
                .lines()
                .map(|l| l.rsplit_once(' ').map_or(l, |(head, _)| head).trim_end().to_string() + "\n")
                .collect();
        }
        out.insert(format!("stdout:{name}"), stdout.into_bytes());
    }
    // vdd-monitor needs a series; write it with the CLI's own CSV layout
    let series: String = std::iter::once("vdd,v_aes\n".to_string())
        .chain((0..3000).map(|i| format!("{},0.8\n", if i < 1200 { 1.0 } else { 0.8 })))
        .collect();
    std::fs::write(d.join("series.csv"), series).map_err(|e| e.to_string())?;
    out.insert(
        "stdout:vdd-monitor".into(),
        run_cli(threads, &["vdd-monitor", "--series", "series.csv"], d)?.into_bytes(),
    );
    let mut stack = vec![PathBuf::from(d)];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(d).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

// criterion 10, part two
fn parallel_equals_serial() -> Check {
    let serial = cli_session(1)?;
    let parallel = cli_session(4)?;
    let differ: Vec<&String> = serial
        .keys()
        .chain(parallel.keys())
        .filter(|k| serial.get(*k) != parallel.get(*k))
        .collect();
    ensure(
        differ.is_empty(),
        if differ.is_empty() {
            format!("{} artifacts and outputs identical at 1 and 4 threads", serial.len())
        } else {
            format!("differ: {differ:?}")
        },
    )
}

fn c10_determinism() -> Check {
    let a = streaming_vs_two_pass()?;
    let b = parallel_equals_serial()?;
    Ok(format!("{a}; {b}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("unprotected CPA discloses within 5000 traces", c1_unprotected_mtd),
        ("MTD grows with the square of the attenuation", c2_attenuation_scaling),
        ("TVTF more than doubles the DSAC MTD", c3_tvtf_gain),
        ("voltage-drop attack on A=64 DSAC", c4_vdd_attack),
        ("detector held-out accuracy", c5_detector),
        ("RO monitor alarm latency", c6_ro_monitor),
        ("Toom-4 equals schoolbook", c7_toom),
        ("lazy interpolation counts and memory", c8_lazy_interpolation),
        ("Saber KAT and round trips", c9_kem),
        ("streaming CPA and thread-count determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.1} s]", i + 1)
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
