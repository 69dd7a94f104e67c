//! Parameter sweeps over the symmetric product family on a three-class
//! model: `mu_C = mu_S = (x, y, 1 - x - y)`.

use std::io::Write;

use num_traits::Signed;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis;
use crate::chains::{self, ChainError};
use crate::flow;
use crate::io::Model;
use crate::model::{self, ArrivalMeasure, ModelError};
use crate::policies::{Policy, PolicyError, PolicyKind, Priorities};
use crate::rational::{self, Rational};

pub const SWEEP_HEADER: &str = "x,y,policy,seed,horizon,avg_buffer,max_buffer,empty_visits,ncond,scond";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("the sweep family needs a model with three customer and three server classes")]
    NotThreeClasses,
    #[error("grid step must be positive")]
    BadStep,
    #[error("horizon must be at least 1")]
    BadHorizon,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error("write failed: {0}")]
    Write(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub model: Model,
    pub policy: PolicyKind,
    pub step: Rational,
    pub horizon: u64,
    pub seeds: u64,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub index: u64,
    pub x: Rational,
    pub y: Rational,
}

impl Cell {
    /// Cells on the line `x + y = 1` give class 3 no mass.
    pub fn has_full_support(&self) -> bool {
        (&self.x + &self.y) < rational::one()
    }
}

/// Grid points `(i * step, j * step)` with `i, j >= 1` and `x + y <= 1`, in
/// row-major order.
pub fn cells(step: &Rational) -> Vec<Cell> {
    let mut out = Vec::new();
    if !step.is_positive() {
        return out;
    }
    let one = rational::one();
    let mut index = 0;
    let mut i = 1i64;
    loop {
        let x = step * rational::int(i);
        if &x + step > one {
            break;
        }
        let mut j = 1i64;
        loop {
            let y = step * rational::int(j);
            if &x + &y > one {
                break;
            }
            out.push(Cell { index, x: x.clone(), y });
            index += 1;
            j += 1;
        }
        i += 1;
    }
    out
}

pub fn cell_measure(cell: &Cell) -> Result<ArrivalMeasure, ModelError> {
    let m = [cell.x.clone(), cell.y.clone(), rational::one() - &cell.x - &cell.y];
    model::product_measure(&m, &m)
}

fn priorities_for(spec: &SweepSpec) -> Result<Option<Priorities>, SweepError> {
    if spec.policy != PolicyKind::Priority {
        return Ok(None);
    }
    match &spec.model.priorities {
        Some(p) => Ok(Some(p.clone())),
        None => Ok(Some(Priorities::nn_counterexample(&spec.model.structure)?)),
    }
}

fn cell_rows(spec: &SweepSpec, priorities: Option<&Priorities>, cell: &Cell) -> Result<Vec<String>, SweepError> {
    let x = rational::to_decimal_string(&cell.x);
    let y = rational::to_decimal_string(&cell.y);
    let policy_name = spec.policy.name();
    if !cell.has_full_support() {
        return Ok(vec![format!("{x},{y},{policy_name},NA,{},NA,NA,NA,NA,NA", spec.horizon)]);
    }
    let measure = cell_measure(cell)?;
    let structure = spec.model.structure.with_arrivals_from(&measure)?;
    let ncond = flow::check_ncond(&structure, &measure.marginals());
    let scond = analysis::check_scond(&structure, &measure)?.0;
    let policy = match Policy::build(spec.policy, &structure, &measure, priorities) {
        Ok(p) => Some(p),
        Err(PolicyError::NCondViolated) => None,
        Err(e) => return Err(e.into()),
    };
    (0..spec.seeds)
        .map(|rep| {
            let seed = chains::stream_seed(spec.base_seed, cell.index, rep);
            let sim = match &policy {
                Some(p) => {
                    let r = chains::simulate(&structure, &measure, p, spec.horizon, seed)?;
                    format!("{},{},{}", r.avg_buffer, r.max_buffer, r.empty_visits)
                }
                None => "NA,NA,NA".to_string(),
            };
            Ok(format!("{x},{y},{policy_name},{seed},{},{sim},{ncond},{scond}", spec.horizon))
        })
        .collect()
}

/// Runs every cell (in parallel when `threads` allows) and writes the CSV in
/// cell order.
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>, out: &mut dyn Write) -> Result<(), SweepError> {
    if spec.model.structure.num_customers() != 3 || spec.model.structure.num_servers() != 3 {
        return Err(SweepError::NotThreeClasses);
    }
    if !spec.step.is_positive() {
        return Err(SweepError::BadStep);
    }
    if spec.horizon == 0 {
        return Err(SweepError::BadHorizon);
    }
    run_cells(spec, &cells(&spec.step), threads, out)
}

/// Like [`run_sweep`] over an explicit list of cells, which need not lie on
/// the grid of `spec.step`.
pub fn run_cells(spec: &SweepSpec, grid: &[Cell], threads: Option<usize>, out: &mut dyn Write) -> Result<(), SweepError> {
    if spec.model.structure.num_customers() != 3 || spec.model.structure.num_servers() != 3 {
        return Err(SweepError::NotThreeClasses);
    }
    if spec.horizon == 0 {
        return Err(SweepError::BadHorizon);
    }
    let priorities = priorities_for(spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let rows: Vec<Result<Vec<String>, SweepError>> =
        pool.install(|| grid.par_iter().map(|c| cell_rows(spec, priorities.as_ref(), c)).collect());
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        for line in r? {
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Parsed row of a sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub x: Rational,
    pub y: Rational,
    pub avg_buffer: Option<f64>,
    pub ncond: Option<bool>,
    pub scond: Option<bool>,
}

pub fn parse_rows(csv: &str) -> Vec<SweepRow> {
    csv.lines()
        .skip(1)
        .filter_map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return None;
            }
            Some(SweepRow {
                x: rational::parse(f[0]).ok()?,
                y: rational::parse(f[1]).ok()?,
                avg_buffer: f[5].parse().ok(),
                ncond: f[8].parse().ok(),
                scond: f[9].parse().ok(),
            })
        })
        .collect()
}
