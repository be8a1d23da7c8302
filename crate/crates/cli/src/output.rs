//! CSV outputs, written atomically: each file goes to a temp file in the
//! target directory and is renamed into place once complete.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use erasefl::learning::Dataset;
use erasefl::simulation::{MonteCarloResult, SweepRow};
use serde::Serialize;
use tempfile::NamedTempFile;

#[derive(Debug, Serialize)]
pub struct RoundRow {
    pub replica: usize,
    pub round: usize,
    pub elapsed_symbols: u64,
    pub participation: usize,
    pub mse: f64,
}

#[derive(Debug, Serialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub rate: f64,
    pub gamma0_db: f64,
    pub m: usize,
    pub rounds: usize,
    pub final_mse_mean: f64,
    pub final_mse_var: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepCsvRow {
    pub rate: f64,
    pub gamma0_db: f64,
    pub m: usize,
    pub rounds: usize,
    pub final_mse: f64,
}

impl From<&SweepRow> for SweepCsvRow {
    fn from(r: &SweepRow) -> Self {
        Self { rate: r.rate, gamma0_db: r.gamma0_db, m: r.m, rounds: r.rounds, final_mse: r.final_mse }
    }
}

#[derive(Debug, Serialize)]
pub struct DatasetRow {
    pub user: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Serialize)]
pub struct BoundsRow {
    pub lambda: f64,
    pub tv_sum: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Serializes `rows` to `dir/name` atomically and returns the final path.
pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: impl IntoIterator<Item = T>) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let tmp = NamedTempFile::new_in(dir)?;
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(tmp.as_file());
        for row in rows {
            w.serialize(row).map_err(io::Error::other)?;
        }
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}

pub fn round_rows(result: &MonteCarloResult) -> impl Iterator<Item = RoundRow> + '_ {
    result.replicas.iter().enumerate().flat_map(|(replica, logs)| {
        logs.iter().map(move |l| RoundRow {
            replica,
            round: l.round,
            elapsed_symbols: l.elapsed_symbols,
            participation: l.participation,
            mse: l.mse,
        })
    })
}

/// Users are numbered from 1 in the output.
pub fn dataset_rows(datasets: &[Dataset]) -> impl Iterator<Item = DatasetRow> + '_ {
    datasets.iter().enumerate().flat_map(|(u, d)| d.samples().map(move |(x, y)| DatasetRow { user: u + 1, x, y }))
}
