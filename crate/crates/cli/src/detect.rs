//! detect gen|train|eval and vdd-monitor.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use scaforge::detect::{
    evaluate, generate_dataset, train_detector, voltage_drop_detect, Dataset, Scenario,
};
use scaforge::store::{
    read_dataset, read_model, read_voltage_series, write_dataset, write_history, write_json,
    write_model,
};

use crate::common::{config, out_dir, usage, wrote, Outcome};

#[derive(Debug, Subcommand)]
pub enum DetectCommand {
    /// Generate a labeled sensor dataset.
    Gen(GenArgs),
    /// Train the detector on a dataset.
    Train(TrainArgs),
    /// Evaluate a trained detector; prints the confusion matrix and accuracy.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Experiment configuration (JSON); built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Number of traces.
    #[arg(long, value_name = "N", default_value_t = 4000, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    /// Seed; overrides the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for sensor.scat and its sidecars.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

/// Rows `[skip, skip + limit)` of a dataset file.
#[derive(Debug, Args)]
pub struct Rows {
    /// Dataset written by `detect gen`.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Leading rows to skip.
    #[arg(long, value_name = "N", default_value_t = 0)]
    skip: usize,
    /// Rows to use after skipping; all remaining when omitted.
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
}

impl Rows {
    fn load(&self) -> anyhow::Result<Dataset> {
        let d = read_dataset(&self.data)?;
        let end = match self.limit {
            Some(l) => self.skip.saturating_add(l),
            None => d.len(),
        };
        if self.skip >= d.len() || end > d.len() {
            return Err(usage(format!(
                "--skip {} --limit {:?} exceeds the {} rows of {}",
                self.skip,
                self.limit,
                d.len(),
                self.data.display()
            )));
        }
        Ok(d.slice(self.skip, end))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    rows: Rows,
    /// Experiment configuration (JSON) for the training settings.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Epochs; overrides the configuration.
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// Initialisation and shuffling seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for model.json and loss.csv.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model written by `detect train`.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[command(flatten)]
    rows: Rows,
    /// Output directory for eval.json.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

pub fn run(c: DetectCommand) -> anyhow::Result<Outcome> {
    match c {
        DetectCommand::Gen(a) => gen(a),
        DetectCommand::Train(a) => train(a),
        DetectCommand::Eval(a) => eval(a),
    }
}

fn gen(a: GenArgs) -> anyhow::Result<Outcome> {
    let cfg = config(a.config.as_deref(), a.seed)?;
    let d = &cfg.detector;
    let data = generate_dataset(a.count as usize, d.n_samples, &d.sensor, cfg.seed)?;
    let path = out_dir(&a.out)?.join("sensor.scat");
    write_dataset(&path, &data)?;
    let counts = data.class_counts();
    println!(
        "generated {} traces x {} samples, seed {}",
        data.len(),
        data.n_samples,
        cfg.seed
    );
    for sc in Scenario::ALL {
        println!("  {:<15} {}", sc.name(), counts[sc.index()]);
    }
    wrote(&path);
    Ok(Outcome::Success)
}

fn train(a: TrainArgs) -> anyhow::Result<Outcome> {
    let cfg = config(a.config.as_deref(), None)?;
    let mut tc = cfg.detector.train.clone();
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    if let Some(s) = a.seed {
        tc.seed = s;
    }
    let data = a.rows.load()?;
    let report = train_detector(&data, &tc)?;
    let dir = out_dir(&a.out)?;
    let model_path = dir.join("model.json");
    let loss_path = dir.join("loss.csv");
    write_model(&model_path, &report.model)?;
    write_history(&loss_path, &report.history)?;
    let last = report.history.last();
    println!(
        "trained {:?} on {} traces for {} epochs",
        report.model.sizes(),
        data.len(),
        tc.epochs
    );
    if let Some(l) = last {
        println!("final loss {:.6}, training accuracy {:.4}", l.loss, l.accuracy);
    }
    if report.model.degenerate {
        println!("warning: training data holds fewer than two classes");
    }
    wrote(&model_path);
    wrote(&loss_path);
    Ok(Outcome::Success)
}

fn eval(a: EvalArgs) -> anyhow::Result<Outcome> {
    let model = read_model(&a.model)?;
    let data = a.rows.load()?;
    let ev = evaluate(&model, &data)?;
    println!("confusion matrix (rows: true, columns: predicted)");
    print!("{:<15}", "");
    for sc in Scenario::ALL {
        print!(" {:>14}", sc.name());
    }
    println!();
    for sc in Scenario::ALL {
        print!("{:<15}", sc.name());
        for v in ev.confusion[sc.index()] {
            print!(" {v:>14}");
        }
        println!();
    }
    println!("accuracy: {:.4} ({} traces)", ev.accuracy, data.len());
    let path = out_dir(&a.out)?.join("eval.json");
    write_json(&path, &ev)?;
    wrote(&path);
    Ok(Outcome::Success)
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// CSV with columns vdd,v_aes, one row per sample.
    #[arg(long, value_name = "FILE")]
    series: PathBuf,
    /// Experiment configuration (JSON) for the monitor settings.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Samples per comparison epoch.
    #[arg(long, value_name = "N")]
    epoch: Option<usize>,
    /// Consecutive mismatching epochs that raise the alarm.
    #[arg(long, value_name = "N")]
    tau: Option<usize>,
    /// Ring-oscillator counts per volt per sample.
    #[arg(long, value_name = "K")]
    k_ro: Option<f64>,
    /// Divider ratio feeding the VDD oscillator.
    #[arg(long, value_name = "R")]
    divider: Option<f64>,
    /// Samples per second of the series.
    #[arg(long, value_name = "HZ")]
    sample_rate: Option<f64>,
}

pub fn monitor(a: MonitorArgs) -> anyhow::Result<Outcome> {
    let mut m = config(a.config.as_deref(), None)?.monitor;
    if let Some(v) = a.epoch {
        m.epoch = v;
    }
    if let Some(v) = a.tau {
        m.tau = v;
    }
    if let Some(v) = a.k_ro {
        m.k_ro = v;
    }
    if let Some(v) = a.divider {
        m.divider = v;
    }
    if let Some(v) = a.sample_rate {
        m.sample_rate = v;
    }
    m.validate().map_err(|e| usage(e.to_string()))?;
    let s = read_voltage_series(&a.series)?;
    println!(
        "{} samples, epoch {} samples, tau {}, worst-case latency {} samples ({:.3} ms)",
        s.vdd.len(),
        m.epoch,
        m.tau,
        m.latency_bound_samples(),
        m.latency_bound_seconds() * 1e3
    );
    match voltage_drop_detect(&s.vdd, &s.v_aes, &m)? {
        Some(al) => {
            println!(
                "alarm at sample {} (t = {:.3} ms, epoch {})",
                al.sample,
                al.time_s * 1e3,
                al.epoch
            );
            Ok(Outcome::Success)
        }
        None => Ok(Outcome::Negative("no alarm".into())),
    }
}
