//! simulate, attack and vdd-attack.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use scaforge::attack::{compute_mtd, geometric_checkpoints, CpaAccumulator, MtdConfig};
use scaforge::countermeasure::{
    effective_attenuation, find_voltage_drop_attack, Acquisition, CountermeasureError,
    Countermeasures, VddAttackConfig,
};
use scaforge::leakage::LeakageModel;
use scaforge::store::{
    read_meta, write_cpa_result, write_json, write_meta, write_rank_curve, write_vdd_sweep,
    TraceFileReader, TraceFileWriter, TraceMeta,
};
use scaforge::trace::default_leak_positions;

use crate::common::{config, out_dir, usage, wrote, Outcome};

const CHUNK: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Dsac,
    Bleed,
    Tvtf,
}

/// Comma-separated countermeasure list; the empty string means none.
#[derive(Debug, Clone, Default)]
pub struct StageList(Vec<Stage>);

impl FromStr for StageList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut v = Vec::new();
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            let st = match name {
                "dsac" => Stage::Dsac,
                "bleed" => Stage::Bleed,
                "tvtf" => Stage::Tvtf,
                other => return Err(format!("unknown countermeasure {other:?} (expected dsac, bleed, tvtf)")),
            };
            if !v.contains(&st) {
                v.push(st);
            }
        }
        Ok(Self(v))
    }
}

impl StageList {
    fn has(&self, s: Stage) -> bool {
        self.0.contains(&s)
    }

    fn build(&self, cfg: &scaforge::store::ExperimentConfig) -> Countermeasures {
        Countermeasures {
            dsac: self.has(Stage::Dsac).then(|| cfg.dsac.clone()),
            bleed: self.has(Stage::Bleed).then(|| cfg.bleed.clone()),
            tvtf: self.has(Stage::Tvtf).then(|| cfg.tvtf.clone()),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment configuration (JSON); built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Number of traces to simulate.
    #[arg(long, value_name = "N", default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    traces: u64,
    /// Seed; overrides the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated stages from dsac, bleed, tvtf (always applied in that order). Empty for none.
    #[arg(long, value_name = "LIST", default_value = "")]
    countermeasures: StageList,
    /// Output directory for traces.scat, its sidecar and config.json.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

pub fn simulate(a: SimulateArgs) -> anyhow::Result<Outcome> {
    let cfg = config(a.config.as_deref(), a.seed)?;
    let cms = a.countermeasures.build(&cfg);
    let acq = Acquisition {
        leakage: cfg.leakage.clone(),
        supply: cfg.supply.clone(),
        countermeasures: cms.clone(),
        n_samples: cfg.n_samples,
        seed: cfg.seed,
    };
    let dir = out_dir(&a.out)?;
    let path = dir.join("traces.scat");

    let total = a.traces as usize;
    let mut writer: Option<TraceFileWriter> = None;
    let mut first = 0usize;
    while first < total {
        let n = CHUNK.min(total - first);
        let batch = acq.acquire(first as u64, n)?;
        let w = match &mut writer {
            Some(w) => w,
            None => writer.insert(TraceFileWriter::create(
                &path,
                cfg.n_samples,
                batch.ciphertexts().is_some(),
            )?),
        };
        w.append(&batch)?;
        first += n;
    }
    let names: Vec<String> = cms.names().iter().map(|s| s.to_string()).collect();
    write_meta(
        &path,
        &TraceMeta {
            key: Some(hex::encode(&cfg.leakage.key)),
            leak_positions: default_leak_positions(cfg.n_samples)?,
            model: Some(cfg.leakage.model),
            sample_rate: None,
            seed: Some(cfg.seed),
            countermeasures: names.clone(),
        },
    )?;
    writer.expect("at least one trace").finish()?;
    write_json(&dir.join("config.json"), &cfg)?;

    println!(
        "simulated {total} traces x {} samples, seed {}",
        cfg.n_samples, cfg.seed
    );
    println!(
        "countermeasures: {}",
        if names.is_empty() { "none".to_string() } else { names.join(", ") }
    );
    let s = &cfg.supply;
    if let Some(d) = &cms.dsac {
        let regime = if s.vdd >= s.v_sat {
            "saturation"
        } else if s.vdd > s.v_lin {
            "linear region"
        } else {
            "collapsed"
        };
        println!(
            "attenuation: A_eff = {:.3} of A = {} at vdd = {} V ({regime})",
            effective_attenuation(d, s),
            d.attenuation,
            s.vdd
        );
    } else {
        println!("attenuation: none (A_eff = 1)");
    }
    wrote(&path);
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    /// Hamming weight of the S-box output.
    Hw,
    /// Hamming distance between plaintext and S-box output.
    Hd,
}

impl From<ModelArg> for LeakageModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Hw => LeakageModel::HammingWeight,
            ModelArg::Hd => LeakageModel::HammingDistance,
        }
    }
}

fn parse_checkpoints(s: &str) -> Result<Vec<usize>, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("{t:?} is not a trace count")))
        .collect::<Result<_, _>>()?;
    if v.is_empty() || v[0] < 2 || v.windows(2).any(|w| w[0] >= w[1]) {
        return Err("checkpoints must be strictly increasing and start at 2 or more".into());
    }
    Ok(v)
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Trace file written by `simulate`.
    #[arg(long, value_name = "FILE")]
    traces: PathBuf,
    /// Leakage model; defaults to the one recorded with the traces, else hw.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Also compute the rank curve and minimum traces to disclosure (needs the true key).
    #[arg(long)]
    mtd: bool,
    /// Comma-separated rank checkpoints; geometric from 10 by 1.25 when omitted.
    #[arg(long, value_name = "LIST", value_parser = parse_checkpoints)]
    checkpoints: Option<Vec<usize>>,
    /// Consecutive rank-1 checkpoints required for disclosure.
    #[arg(long, value_name = "N", default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    stability: u64,
    /// Output directory for cpa.csv and mtd.csv.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

pub fn attack(a: AttackArgs) -> anyhow::Result<Outcome> {
    let meta = read_meta(&a.traces)?;
    let key = match &meta {
        Some(m) => m.round_key()?,
        None => None,
    };
    let model: LeakageModel = match (a.model, meta.as_ref().and_then(|m| m.model)) {
        (Some(m), _) => m.into(),
        (None, Some(m)) => m,
        (None, None) => LeakageModel::HammingWeight,
    };
    if a.mtd && key.is_none() {
        bail!(
            "--mtd needs the true key, but {} has no key metadata",
            a.traces.display()
        );
    }
    let dir = out_dir(&a.out)?;

    let mut reader = TraceFileReader::open(&a.traces)?;
    let n_traces = reader.remaining();
    let mut acc = CpaAccumulator::new(reader.header().n_samples as usize);
    loop {
        let b = reader.read_batch(CHUNK)?;
        if b.n_traces() == 0 {
            break;
        }
        acc.update(&b)?;
    }
    if n_traces < 2 {
        bail!("need at least 2 traces, {} has {n_traces}", a.traces.display());
    }
    let res = acc.result(model);
    let cpa_path = dir.join("cpa.csv");
    write_cpa_result(&cpa_path, &res, key.as_ref())?;
    println!("CPA over {n_traces} traces");
    println!("recovered key: {}", hex::encode(res.recovered_key()));
    wrote(&cpa_path);

    if a.mtd {
        let key = key.expect("checked above");
        let checkpoints: Vec<usize> = match a.checkpoints {
            Some(v) => v.into_iter().filter(|&c| c <= n_traces).collect(),
            None => geometric_checkpoints(10, 1.25, n_traces),
        };
        if checkpoints.is_empty() {
            return Err(usage(format!("no checkpoint fits the {n_traces} traces in the file")));
        }
        let cfg = MtdConfig {
            model,
            key,
            checkpoints,
            stability_window: a.stability as usize,
            stop_when_disclosed: false,
        };
        let mut src = TraceFileReader::open(&a.traces)?;
        let report = compute_mtd(&mut src, &cfg)?;
        let mtd_path = dir.join("mtd.csv");
        write_rank_curve(&mtd_path, &report.rank_curve)?;
        wrote(&mtd_path);
        let final_rank = report.rank_curve.last().map(|p| p.rank).unwrap_or(0);
        return Ok(match report.mtd {
            Some(m) => {
                println!("MTD = {m} traces");
                Outcome::Success
            }
            None => Outcome::Negative(format!(
                "not disclosed within {n_traces} traces (final key rank {final_rank})"
            )),
        });
    }
    match key {
        Some(k) => {
            let rank = res.key_rank(&k);
            if rank == 1 {
                println!("key disclosed");
                Ok(Outcome::Success)
            } else {
                Ok(Outcome::Negative(format!("not disclosed (worst byte rank {rank})")))
            }
        }
        None => Ok(Outcome::Success),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VddRange {
    lo: f64,
    hi: f64,
    step: f64,
}

impl FromStr for VddRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts[..] else {
            return Err("expected lo:hi:step".into());
        };
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("{t:?} is not a number"))
        };
        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
        if step <= 0.0 {
            return Err(format!("step must be > 0, got {step}"));
        }
        if lo > hi {
            return Err(format!("lo ({lo}) must not exceed hi ({hi})"));
        }
        Ok(Self { lo, hi, step })
    }
}

#[derive(Debug, Args)]
pub struct VddAttackArgs {
    /// Experiment configuration (JSON); built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Supply sweep in volts as lo:hi:step, e.g. 0.7:1.0:0.01.
    #[arg(long, value_name = "LO:HI:STEP")]
    range: VddRange,
    /// Traces acquired at each voltage.
    #[arg(long, value_name = "N", default_value_t = 2000, value_parser = clap::value_parser!(u64).range(2..))]
    budget: u64,
    /// Seed; overrides the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// Extra stages applied after DSAC: bleed, tvtf. DSAC is always on.
    #[arg(long, value_name = "LIST", default_value = "")]
    with: StageList,
    /// Output directory for vdd_sweep.csv.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

pub fn vdd_attack(a: VddAttackArgs) -> anyhow::Result<Outcome> {
    let cfg = config(a.config.as_deref(), a.seed)?;
    let acfg = VddAttackConfig {
        leakage: cfg.leakage.clone(),
        supply: cfg.supply.clone(),
        dsac: cfg.dsac.clone(),
        bleed: a.with.has(Stage::Bleed).then(|| cfg.bleed.clone()),
        tvtf: a.with.has(Stage::Tvtf).then(|| cfg.tvtf.clone()),
        n_samples: cfg.n_samples,
        seed: cfg.seed,
        budget: a.budget as usize,
        lo: a.range.lo,
        hi: a.range.hi,
        step: a.range.step,
    };
    let dir = out_dir(&a.out)?;
    let path = dir.join("vdd_sweep.csv");
    let (sweep, found) = match find_voltage_drop_attack(&acfg) {
        Ok(s) => (s, true),
        Err(CountermeasureError::NoAttackFound(s)) => (*s, false),
        Err(CountermeasureError::InvalidConfig { field, reason })
            if matches!(field, "lo" | "hi" | "step" | "budget") =>
        {
            return Err(usage(format!("--range/--budget: {field} {reason}")));
        }
        Err(e) => return Err(e).context("voltage sweep failed"),
    };
    write_vdd_sweep(&path, &sweep)?;

    println!("{:>8} {:>9} {:>10} {:>14}", "vdd", "A_eff", "rho", "MTD estimate");
    for p in std::iter::once(&sweep.nominal).chain(&sweep.points) {
        if p.functional {
            println!("{:>8.4} {:>9.3} {:>10.5} {:>14.0}", p.vdd, p.a_eff, p.rho, p.mtd_estimate);
        } else {
            println!("{:>8.4} {:>9.3} {:>10} {:>14}", p.vdd, p.a_eff, "-", "fails");
        }
    }
    wrote(&path);
    if !found {
        return Ok(Outcome::Negative(format!(
            "no supply in {}..{} V beats the nominal MTD estimate of {:.0} traces",
            acfg.lo, acfg.hi, sweep.nominal.mtd_estimate
        )));
    }
    let best = sweep.best_point().expect("found");
    println!(
        "vdd* = {:.4} V: MTD estimate {:.0} vs {:.0} at nominal ({:.1}x fewer traces)",
        best.vdd,
        best.mtd_estimate,
        sweep.nominal.mtd_estimate,
        sweep.gain().unwrap_or(f64::NAN)
    );
    Ok(Outcome::Success)
}
