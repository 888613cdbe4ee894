use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::explore::DEFAULT_C_CONF;
use crate::harness::instances::{random_instance, InstanceSpec};
use crate::harness::pipeline::{run_algorithm1, ExperimentConfig};
use crate::rng::derive_seed;

/// Grid of runs: every size × eps × eps_pe (or the schedule) × seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// `[S, A, H]` triples.
    pub sizes: Vec<[usize; 3]>,
    pub eps: Vec<f64>,
    #[serde(default)]
    pub eps_pe: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_delta_min")]
    pub delta_min: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Fixes the sampled instance across rows; otherwise each row's seed is used.
    #[serde(default)]
    pub instance_seed: Option<u64>,
    #[serde(default)]
    pub delta_hint: Option<f64>,
    #[serde(default)]
    pub k_max: Option<u64>,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_c_conf")]
    pub c_conf: f64,
}

fn default_delta_min() -> f64 {
    0.2
}

fn default_eta() -> f64 {
    0.1
}

fn default_trials() -> u64 {
    1000
}

fn default_c_conf() -> f64 {
    DEFAULT_C_CONF
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub run_id: usize,
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "A")]
    pub a: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub eps: f64,
    pub eps_pe: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<u64>,
    pub term_reason: String,
    pub lp_objective: Option<f64>,
    pub gap: Option<f64>,
    pub gap_ci: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cell {
    size: [usize; 3],
    eps: f64,
    eps_pe: Option<f64>,
    seed: u64,
}

impl SweepSpec {
    fn cells(&self) -> Vec<Cell> {
        let eps_pe: Vec<Option<f64>> =
            if self.eps_pe.is_empty() { vec![None] } else { self.eps_pe.iter().copied().map(Some).collect() };
        let mut cells = Vec::new();
        for &size in &self.sizes {
            for &eps in &self.eps {
                for &e in &eps_pe {
                    for &seed in &self.seeds {
                        cells.push(Cell { size, eps, eps_pe: e, seed });
                    }
                }
            }
        }
        cells
    }

    pub fn len(&self) -> usize {
        self.cells().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn run_cell(spec: &SweepSpec, master_seed: u64, run_id: usize, cell: Cell) -> SweepRow {
    let [s, a, h] = cell.size;
    let mut row = SweepRow {
        run_id,
        s,
        a,
        h,
        eps: cell.eps,
        eps_pe: cell.eps_pe,
        k: None,
        term_reason: String::new(),
        lp_objective: None,
        gap: None,
        gap_ci: None,
        wall_ms: 0,
    };
    let instance = InstanceSpec { states: s, actions: a, horizon: h, delta_min: spec.delta_min };
    let outcome = random_instance(instance, spec.instance_seed.unwrap_or(cell.seed)).and_then(|model| {
        let config = ExperimentConfig {
            eps: cell.eps,
            eta: spec.eta,
            delta_hint: spec.delta_hint,
            seed: derive_seed(master_seed, cell.seed),
            k_max: spec.k_max,
            grid: spec.grid,
            trials: spec.trials,
            c_conf: spec.c_conf,
            eps_pe: cell.eps_pe,
        };
        run_algorithm1(&model, &config)
    });
    match outcome {
        Ok(out) => {
            let r = out.report;
            row.eps_pe = Some(r.schedule.eps_pe);
            row.k = Some(r.episodes);
            row.term_reason = if r.failure.is_some() { "recovery_failed".into() } else { r.termination.as_str().into() };
            row.lp_objective = r.lp_objective();
            row.gap = r.gap;
            row.gap_ci = r.gap_ci;
            row.wall_ms = r.wall_ms;
        }
        Err(e) => row.term_reason = format!("error: {e}"),
    }
    row
}

/// Runs every cell in parallel; rows come back in grid order.
pub fn sweep(spec: &SweepSpec, master_seed: u64) -> Vec<SweepRow> {
    spec.cells()
        .into_par_iter()
        .enumerate()
        .map(|(i, cell)| run_cell(spec, master_seed, i, cell))
        .collect()
}

pub fn write_rows<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
