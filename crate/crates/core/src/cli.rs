//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 when the analysis answers "no" (NCond fails,
//! the structure is not stable, ...), 2 on input errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::{self, AnalysisError};
use crate::chains::{self, ChainError};
use crate::facets;
use crate::flow;
use crate::io::{self, Model};
use crate::model::{ArrivalMeasure, ClassSet, MatchingStructure};
use crate::policies::{BufferState, Policy, PolicyKind};
use crate::rational::{self, Rational};
use crate::sweep::{self, SweepSpec};

#[derive(Debug, Parser)]
#[command(name = "matchstab", version, about = "Stability analysis of bipartite matching models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TraceFormat {
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Counterexample {
    NnPriority,
    NnMs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the facets of the matching graph.
    Facets { model: String },
    /// Check NCond, and SCond with per-facet drifts.
    Check {
        model: String,
        #[arg(long)]
        scond: bool,
    },
    /// Decide whether (C, S, E, F) admits a stable measure.
    Structure { model: String },
    /// Build a measure with support F that satisfies NCond.
    Measure {
        model: String,
        #[arg(long)]
        out: Option<String>,
    },
    /// Simulate the buffer under a matching policy.
    Simulate {
        model: String,
        #[arg(long, value_parser = parse_policy)]
        policy: PolicyKind,
        #[arg(long, default_value_t = 100_000)]
        horizon: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, value_enum)]
        trace: Option<TraceFormat>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Sweep the symmetric product family mu_C = mu_S = (x, y, 1 - x - y).
    Sweep {
        #[arg(long, default_value = "nn")]
        graph: String,
        #[arg(long, value_parser = parse_policy, default_value = "ms")]
        policy: PolicyKind,
        #[arg(long, default_value = "0.05")]
        grid: String,
        #[arg(long, default_value_t = 100_000)]
        horizon: u64,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Stationary law of the chain truncated at total buffer `cap`.
    Stationary {
        model: String,
        #[arg(long, value_parser = parse_policy)]
        policy: PolicyKind,
        #[arg(long, default_value_t = 10)]
        cap: u64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Exact numbers and a confirming simulation for the NN counterexamples.
    Counterexample {
        #[arg(value_enum)]
        which: Counterexample,
        #[arg(long, default_value_t = 1_000_000)]
        horizon: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Arrival sequence that empties the buffer from a given state.
    Drain {
        model: String,
        /// Customer counts, comma separated.
        #[arg(long)]
        x: String,
        /// Server counts, comma separated.
        #[arg(long)]
        y: String,
    },
}

fn parse_policy(s: &str) -> std::result::Result<PolicyKind, String> {
    s.parse()
}

/// Parses `args` (without the program name) and runs the command.
pub fn run_command<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv = std::iter::once("matchstab".to_string()).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            2
        }
    }
}

/// A path to a model file, or the name of a built-in model.
fn load(spec: &str) -> Result<Model> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(m) = io::builtin_model(spec) {
            return Ok(m);
        }
    }
    Ok(io::load_model(path)?)
}

fn require_measure(model: &Model) -> Result<&ArrivalMeasure> {
    model.measure.as_ref().ok_or_else(|| anyhow!("model has no arrival measure `mu`"))
}

fn open_out<'a>(path: &Option<String>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    match path.as_deref() {
        None | Some("-") => Ok(Box::new(stdout)),
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {p}"))?))),
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn threads_from_env() -> Option<usize> {
    std::env::var("MATCHSTAB_THREADS").ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0)
}

fn parse_counts(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|t| t.trim().parse::<u64>().with_context(|| format!("bad count `{t}`")))
        .collect()
}

fn format_pair(st: &MatchingStructure, (c, s): (usize, usize)) -> String {
    format!("({},{})", st.customer_label(c), st.server_label(s))
}

fn facet_sets(st: &MatchingStructure, key: (ClassSet, ClassSet)) -> (String, String) {
    (st.format_customers(key.0), st.format_servers(key.1))
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Facets { model } => {
            let m = load(&model)?;
            let mut list = facets::enumerate_facets(&m.structure)?;
            list.sort_by_key(|f| (f.bullet_customers.0, f.bullet_servers.0));
            for f in &list {
                let (c, s) = facet_sets(&m.structure, f.key());
                writeln!(out, "{c} | {s} | saturated:{}", f.is_saturated())?;
            }
            let saturated = list.iter().filter(|f| f.is_saturated()).count();
            writeln!(err, "{} facets, {} saturated", list.len(), saturated)?;
            Ok(0)
        }
        Command::Check { model, scond } => {
            let m = load(&model)?;
            let mu = require_measure(&m)?;
            let result = flow::check_ncond_with_certificate(&m.structure, &mu.marginals());
            let ok = result.is_ok();
            writeln!(out, "NCond: {}", yes_no(ok))?;
            if let Err(cert) = result {
                writeln!(out, "violated by {}", cert.describe(&m.structure))?;
            }
            let mut good = ok;
            if scond {
                let (s_ok, reports) = analysis::check_scond(&m.structure, mu)?;
                writeln!(out, "SCond: {}", yes_no(s_ok))?;
                writeln!(out, "bullet_C,bullet_S,saturated,drift,scond_ok")?;
                for r in &reports {
                    let (c, s) = facet_sets(&m.structure, r.facet.key());
                    writeln!(
                        out,
                        "\"{c}\",\"{s}\",{},{},{}",
                        r.facet.is_saturated(),
                        rational::to_fraction_string(&r.linear_drift),
                        r.scond_satisfied
                    )?;
                }
                good &= s_ok;
            }
            Ok(if good { 0 } else { 1 })
        }
        Command::Structure { model } => {
            let m = load(&model)?;
            match analysis::stable_structure_certificate(&m.structure) {
                Ok(()) => {
                    writeln!(out, "stable-structure: yes")?;
                    Ok(0)
                }
                Err(AnalysisError::NotStronglyConnected { customer, server }) => {
                    writeln!(out, "stable-structure: no")?;
                    writeln!(out, "no directed path from customer {customer} to server {server}")?;
                    Ok(1)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Measure { model, out: path } => {
            let m = load(&model)?;
            match analysis::construct_stable_measure(&m.structure) {
                Ok(mu) => {
                    let built = Model { structure: m.structure.clone(), measure: Some(mu), priorities: m.priorities };
                    let mut w = open_out(&path, out)?;
                    write!(w, "{}", io::model_to_json(&built))?;
                    Ok(0)
                }
                Err(AnalysisError::NotStronglyConnected { customer, server }) => {
                    writeln!(err, "no stable measure: no directed path from customer {customer} to server {server}")?;
                    Ok(1)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Simulate { model, policy, horizon, seed, seeds, trace, out: path } => {
            let m = load(&model)?;
            let mu = require_measure(&m)?;
            let p = Policy::build(policy, &m.structure, mu, m.priorities.as_ref())?;
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let trace_to_stdout = trace.is_some() && matches!(path.as_deref(), None | Some("-"));
            let mut summaries = Vec::new();
            {
                let mut trace_out: Option<Box<dyn Write>> = match trace {
                    Some(TraceFormat::Csv) => Some(open_out(&path, out)?),
                    None => None,
                };
                if let Some(w) = trace_out.as_mut() {
                    writeln!(w, "{}step,buffer,facet_key", if seeds > 1 { "seed," } else { "" })?;
                }
                for rep in 0..seeds {
                    let s = if seeds == 1 { seed } else { chains::stream_seed(seed, 0, rep) };
                    let mut write_err = None;
                    let report = chains::simulate_from(&m.structure, mu, &p, horizon, s, None, |t| {
                        if let Some(w) = trace_out.as_mut() {
                            let prefix = if seeds > 1 { format!("{s},") } else { String::new() };
                            let key = chains::facet_key_string(&m.structure, t.facet_key);
                            if let Err(e) = writeln!(w, "{prefix}{},{},{key}", t.step, t.buffer) {
                                write_err.get_or_insert(e);
                            }
                        }
                    })?;
                    if let Some(e) = write_err {
                        return Err(e.into());
                    }
                    summaries.push(summary_line(policy, &report));
                }
                if let Some(mut w) = trace_out {
                    w.flush()?;
                }
            }
            let sink: &mut dyn Write = if trace_to_stdout { err } else { out };
            for line in summaries {
                writeln!(sink, "{line}")?;
            }
            Ok(0)
        }
        Command::Sweep { graph, policy, grid, horizon, seeds, seed, out: path } => {
            let model = load(&graph)?;
            let step = rational::parse(&grid).map_err(|e| anyhow!("bad --grid: {e}"))?;
            let spec = SweepSpec { model, policy, step, horizon, seeds, base_seed: seed };
            let mut w = open_out(&path, out)?;
            sweep::run_sweep(&spec, threads_from_env(), &mut w)?;
            w.flush()?;
            Ok(0)
        }
        Command::Stationary { model, policy, cap, out: path } => {
            let m = load(&model)?;
            let mu = require_measure(&m)?;
            let p = Policy::build(policy, &m.structure, mu, m.priorities.as_ref())?;
            let dist = chains::truncated_stationary(&m.structure, mu, &p, cap)?;
            let mut w = open_out(&path, out)?;
            writeln!(w, "state,probability")?;
            for (state, prob) in &dist {
                writeln!(w, "\"{}\",{prob:e}", state.format(&m.structure))?;
            }
            w.flush()?;
            writeln!(err, "{} states", dist.len())?;
            Ok(0)
        }
        Command::Counterexample { which, horizon, seed } => {
            let m = io::builtin_model("nn-counterexample").expect("built-in");
            let mu = require_measure(&m)?;
            counterexample(which, &m, mu, horizon, seed, out)
        }
        Command::Drain { model, x, y } => {
            let m = load(&model)?;
            let mu = require_measure(&m)?;
            let (x, y) = (parse_counts(&x)?, parse_counts(&y)?);
            match analysis::drain_to_empty(&m.structure, mu, &x, &y) {
                Ok(seq) => {
                    for a in seq {
                        writeln!(out, "{}", format_pair(&m.structure, a))?;
                    }
                    Ok(0)
                }
                Err(AnalysisError::UnstableStructure) => {
                    writeln!(err, "structure is not stable; no drain sequence is guaranteed")?;
                    Ok(1)
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn summary_line(policy: PolicyKind, r: &chains::SimulationReport) -> String {
    let mut line = format!(
        "policy={policy} seed={} horizon={} avg_buffer={:.6} max_buffer={} final_buffer={} empty_visits={}",
        r.seed, r.horizon, r.avg_buffer, r.max_buffer, r.final_buffer, r.empty_visits
    );
    if let Some(l) = r.nn_ms_statistic {
        line.push_str(&format!(" ms_statistic={l}"));
    }
    line
}

fn frac(r: &Rational) -> String {
    rational::to_fraction_string(r)
}

fn counterexample(
    which: Counterexample,
    m: &Model,
    mu: &ArrivalMeasure,
    horizon: u64,
    seed: u64,
    out: &mut dyn Write,
) -> Result<i32> {
    let st = &m.structure;
    match which {
        Counterexample::NnPriority => {
            let d = chains::nn_counterexample_drift(st, mu).map_err(|e: ChainError| anyhow!(e))?;
            let p = &d.params;
            writeln!(out, "a1 = {}, a0 = {}, a-1 = {}", frac(&p.a.2), frac(&p.a.1), frac(&p.a.0))?;
            writeln!(out, "b1 = {}, b0 = {}, b-1 = {}", frac(&p.b.2), frac(&p.b.1), frac(&p.b.0))?;
            writeln!(out, "c1 = {}, c0 = {}, c-1 = {}", frac(&p.c.2), frac(&p.c.1), frac(&p.c.0))?;
            let s = &d.stationary;
            writeln!(out, "pi(0) = {}, pi(Z+) = {}, pi(Z-) = {}", frac(&s.pi0), frac(&s.pi_pos), frac(&s.pi_neg))?;
            writeln!(out, "alpha = {}, beta = {}, gamma = {}", frac(&d.alpha), frac(&d.beta), frac(&d.gamma))?;
            writeln!(out, "composite drift = {}", frac(&d.composite))?;
            let policy = Policy::Priority(m.priorities.clone().ok_or_else(|| anyhow!("missing priorities"))?);
            let r = chains::simulate(st, mu, &policy, horizon, seed)?;
            writeln!(out, "{}", summary_line(PolicyKind::Priority, &r))?;
            writeln!(
                out,
                "final_buffer/horizon = {:.6} (composite drift ~ {:.6})",
                r.final_buffer as f64 / horizon as f64,
                rational::to_f64(&d.composite)
            )?;
        }
        Counterexample::NnMs => {
            let r = chains::simulate(st, mu, &Policy::MatchShortest, horizon, seed)?;
            writeln!(out, "{}", summary_line(PolicyKind::MatchShortest, &r))?;
            writeln!(out, "final_buffer/horizon = {:.6}", r.final_buffer as f64 / horizon as f64)?;
            let counts = match &r.final_state {
                BufferState::Commutative(c) => c.clone(),
                other => other.counts(st),
            };
            writeln!(out, "final x = {:?}, y = {:?}", counts.x, counts.y)?;
        }
    }
    Ok(0)
}
