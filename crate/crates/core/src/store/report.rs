//! CSV reports. Numbers are written in shortest round-trip form with a dot
//! decimal separator regardless of locale.
//!
//! | report       | columns                                                     |
//! |--------------|-------------------------------------------------------------|
//! | rank curve   | `checkpoint,rank,best_corr`                                 |
//! | training     | `epoch,loss,accuracy`                                       |
//! | CPA result   | `byte,best_guess,best_corr,best_sample,true_key,true_rank`  |
//! | vdd sweep    | `role,vdd,a_eff,functional,rho,mtd_estimate`               |
//! | voltages     | `vdd,v_aes`                                                 |

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{io_err, write_atomic, StoreError};
use crate::attack::{CpaResult, RankPoint};
use crate::countermeasure::{VddPoint, VddSweep};
use crate::detect::EpochStats;
use crate::trace::STATE_BYTES;

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> StoreError + '_ {
    move |e| StoreError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), StoreError> {
    write_atomic(path, |w| {
        let mut c = csv::Writer::from_writer(w);
        for r in rows {
            c.serialize(r).map_err(csv_err(path))?;
        }
        c.flush().map_err(io_err(path))
    })
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    rdr.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

pub fn write_rank_curve(path: &Path, curve: &[RankPoint]) -> Result<(), StoreError> {
    write_rows(path, curve)
}

pub fn read_rank_curve(path: &Path) -> Result<Vec<RankPoint>, StoreError> {
    read_rows(path)
}

pub fn write_history(path: &Path, history: &[EpochStats]) -> Result<(), StoreError> {
    write_rows(path, history)
}

pub fn read_history(path: &Path) -> Result<Vec<EpochStats>, StoreError> {
    read_rows(path)
}

#[derive(Serialize)]
struct CpaRow {
    byte: usize,
    best_guess: u8,
    best_corr: f64,
    best_sample: usize,
    true_key: Option<u8>,
    true_rank: Option<usize>,
}

/// One row per key byte. The true-key columns stay empty when `key` is unknown.
pub fn write_cpa_result(
    path: &Path,
    res: &CpaResult,
    key: Option<&[u8; STATE_BYTES]>,
) -> Result<(), StoreError> {
    write_rows(
        path,
        res.bytes.iter().map(|b| {
            let g = b.best_key();
            CpaRow {
                byte: b.byte,
                best_guess: g,
                best_corr: b.peak_corr[g as usize],
                best_sample: b.best_sample(),
                true_key: key.map(|k| k[b.byte]),
                true_rank: key.map(|k| b.rank_of(k[b.byte])),
            }
        }),
    )
}

struct SweepRow<'a> {
    role: &'a str,
    point: &'a VddPoint,
}

/// The nominal point first, then the grid; the selected voltage has role `best`.
pub fn write_vdd_sweep(path: &Path, sweep: &VddSweep) -> Result<(), StoreError> {
    write_atomic(path, |w| {
        let mut c = csv::Writer::from_writer(w);
        let err = csv_err(path);
        c.write_record(["role", "vdd", "a_eff", "functional", "rho", "mtd_estimate"])
            .map_err(&err)?;
        let rows = std::iter::once(SweepRow {
            role: "nominal",
            point: &sweep.nominal,
        })
        .chain(sweep.points.iter().enumerate().map(|(i, p)| SweepRow {
            role: if sweep.best == Some(i) { "best" } else { "sweep" },
            point: p,
        }));
        for r in rows {
            let p = r.point;
            c.write_record([
                r.role.to_string(),
                fmt_f64(p.vdd),
                fmt_f64(p.a_eff),
                p.functional.to_string(),
                fmt_f64(p.rho),
                fmt_f64(p.mtd_estimate),
            ])
            .map_err(&err)?;
        }
        c.flush().map_err(io_err(path))
    })
}

/// Shortest round-trip decimal; `inf`/`NaN` for non-finite values.
fn fmt_f64(x: f64) -> String {
    let mut s = format!("{x:?}");
    if s.ends_with(".0") {
        s.truncate(s.len() - 2);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VoltageSeries {
    pub vdd: Vec<f64>,
    pub v_aes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct VoltageRow {
    vdd: f64,
    v_aes: f64,
}

pub fn write_voltage_series(path: &Path, s: &VoltageSeries) -> Result<(), StoreError> {
    write_rows(
        path,
        s.vdd.iter().zip(&s.v_aes).map(|(&vdd, &v_aes)| VoltageRow { vdd, v_aes }),
    )
}

pub fn read_voltage_series(path: &Path) -> Result<VoltageSeries, StoreError> {
    let rows: Vec<VoltageRow> = read_rows(path)?;
    Ok(VoltageSeries {
        vdd: rows.iter().map(|r| r.vdd).collect(),
        v_aes: rows.iter().map(|r| r.v_aes).collect(),
    })
}
