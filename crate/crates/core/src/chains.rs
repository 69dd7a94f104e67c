//! Markov-chain analytics: Monte-Carlo simulation, the auxiliary chain on the
//! integers for the NN model, truncated stationary distributions and
//! reachability from the empty state.

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_traits::{Signed, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

use crate::facets::{self, Facet, FacetError};
use crate::model::{fixtures, ArrivalMeasure, ClassSet, MatchingStructure};
use crate::policies::{BufferState, CommutativeState, Policy, PolicyError, StepCase, WordState};
use crate::rational::{self, Rational};

/// Largest state space `reach_set` and `truncated_stationary` will build.
pub const MAX_STATES: usize = 1_000_000;
/// Largest chain solved by direct elimination; bigger ones use power iteration.
pub const DENSE_LIMIT: usize = 2_000;
const POWER_TOLERANCE: f64 = 1e-12;
const POWER_MAX_ITERATIONS: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("model is not the NN model with full-support arrivals")]
    NotNNModel,
    #[error("auxiliary chain is not positive recurrent")]
    NotPositiveRecurrent,
    #[error("horizon must be at least 1")]
    InvalidHorizon,
    #[error("the zero facet has no drift")]
    ZeroFacet,
    #[error("state space exceeds {0} states")]
    StateSpaceTooLarge(usize),
    #[error("power iteration did not reach the residual tolerance")]
    NotConverged,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Facet(#[from] FacetError),
}

/// Transition probabilities of a chain on the integers that moves by at most
/// one, with one row for `x < 0`, `x = 0`, `x > 0`. Each triple is
/// `(down, stay, up)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZChainParams {
    pub a: (Rational, Rational, Rational),
    pub b: (Rational, Rational, Rational),
    pub c: (Rational, Rational, Rational),
}

impl ZChainParams {
    pub fn new(
        a: (Rational, Rational, Rational),
        b: (Rational, Rational, Rational),
        c: (Rational, Rational, Rational),
    ) -> Option<Self> {
        let ok = [&a, &b, &c].iter().all(|t| {
            &t.0 + &t.1 + &t.2 == rational::one()
                && t.0.is_positive()
                && t.2.is_positive()
                && !t.1.is_negative()
        });
        ok.then_some(ZChainParams { a, b, c })
    }

    fn row(&self, x: i64) -> &(Rational, Rational, Rational) {
        match x.signum() {
            -1 => &self.a,
            0 => &self.b,
            _ => &self.c,
        }
    }

    /// `P(x, x + d)` for `d` in `{-1, 0, 1}`.
    pub fn transition(&self, x: i64, d: i64) -> Rational {
        let r = self.row(x);
        match d {
            -1 => r.0.clone(),
            0 => r.1.clone(),
            1 => r.2.clone(),
            _ => rational::zero(),
        }
    }
}

fn is_nn(structure: &MatchingStructure) -> bool {
    if structure.num_customers() != 3 || structure.num_servers() != 3 {
        return false;
    }
    let mut edges = fixtures::NN_EDGES.to_vec();
    edges.sort_unstable();
    structure.matching_edges() == edges
}

fn nn_measure_check(structure: &MatchingStructure, measure: &ArrivalMeasure) -> Result<(), ChainError> {
    let full = measure.table().iter().flatten().all(|p| p.is_positive());
    if !is_nn(structure) || measure.num_customers() != 3 || measure.num_servers() != 3 || !full {
        return Err(ChainError::NotNNModel);
    }
    Ok(())
}

/// Parameters of the chain followed by `X_2 - Y_2` on the deep NN facets
/// under the priority matrices of [`crate::policies::Priorities::nn_counterexample`].
pub fn z_chain_params_nn(structure: &MatchingStructure, measure: &ArrivalMeasure) -> Result<ZChainParams, ChainError> {
    nn_measure_check(structure, measure)?;
    let m = |c: usize, s: usize| measure.prob(c - 1, s - 1).clone();
    let sum = |pairs: &[(usize, usize)]| pairs.iter().map(|&(c, s)| m(c, s)).sum::<Rational>();
    let a = (sum(&[(3, 2)]), sum(&[(1, 2), (2, 2), (3, 1), (3, 3)]), sum(&[(1, 1), (1, 3), (2, 1), (2, 3)]));
    let b = (sum(&[(1, 2), (3, 2)]), sum(&[(1, 1), (1, 3), (2, 2), (3, 1), (3, 3)]), sum(&[(2, 1), (2, 3)]));
    let c = (sum(&[(1, 1), (1, 2), (3, 1), (3, 2)]), sum(&[(1, 3), (2, 1), (2, 2), (3, 3)]), sum(&[(2, 3)]));
    Ok(ZChainParams { a, b, c })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZChainStationary {
    pub pi0: Rational,
    pub pi_pos: Rational,
    pub pi_neg: Rational,
    /// `pi(x + 1) / pi(x)` for `x > 0`.
    pub ratio_pos: Rational,
    /// `pi(x - 1) / pi(x)` for `x < 0`.
    pub ratio_neg: Rational,
    b_up: Rational,
    b_down: Rational,
    c_up: Rational,
    a_down: Rational,
}

impl ZChainStationary {
    pub fn pi(&self, x: i64) -> Rational {
        let k = x.unsigned_abs() as i32;
        match x.signum() {
            0 => self.pi0.clone(),
            1 => &self.pi0 * &self.b_up / &self.c_up * num_traits::pow::Pow::pow(&self.ratio_pos, k),
            _ => &self.pi0 * &self.b_down / &self.a_down * num_traits::pow::Pow::pow(&self.ratio_neg, k),
        }
    }
}

pub fn z_chain_stationary(params: &ZChainParams) -> Result<ZChainStationary, ChainError> {
    let (a_down, _, a_up) = &params.a;
    let (b_down, _, b_up) = &params.b;
    let (c_down, _, c_up) = &params.c;
    if !(a_down < a_up && c_up < c_down) || !a_down.is_positive() || !c_up.is_positive() {
        return Err(ChainError::NotPositiveRecurrent);
    }
    let neg = b_down / (a_up - a_down);
    let pos = b_up / (c_down - c_up);
    let pi0 = rational::one() / (rational::one() + &neg + &pos);
    Ok(ZChainStationary {
        pi_pos: &pi0 * pos,
        pi_neg: &pi0 * neg,
        pi0,
        ratio_pos: c_up / c_down,
        ratio_neg: a_down / a_up,
        b_up: b_up.clone(),
        b_down: b_down.clone(),
        c_up: c_up.clone(),
        a_down: a_down.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterexampleDrift {
    pub params: ZChainParams,
    pub stationary: ZChainStationary,
    pub alpha: Rational,
    pub beta: Rational,
    pub gamma: Rational,
    /// `pi(Z-) alpha + pi(0) beta + pi(Z+) gamma`.
    pub composite: Rational,
}

/// Mean growth of `X_2 + X_3` on the deep NN facets, averaged over the
/// stationary law of the auxiliary chain.
pub fn nn_counterexample_drift(structure: &MatchingStructure, measure: &ArrivalMeasure) -> Result<CounterexampleDrift, ChainError> {
    let params = z_chain_params_nn(structure, measure)?;
    let stationary = z_chain_stationary(&params)?;
    let m = |c: usize, s: usize| measure.prob(c - 1, s - 1).clone();
    let alpha = m(3, 2) + m(3, 3) - m(1, 1) - m(2, 1);
    let beta = m(2, 3) + m(3, 2) + m(3, 3) - m(1, 1);
    let gamma = m(2, 3) + m(3, 3) - m(1, 1) - m(1, 2);
    let composite = &stationary.pi_neg * &alpha + &stationary.pi0 * &beta + &stationary.pi_pos * &gamma;
    Ok(CounterexampleDrift { params, stationary, alpha, beta, gamma, composite })
}

/// Inverse-CDF sampler over the support of a measure in canonical order.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    pairs: Vec<(usize, usize)>,
    exact: Option<(u64, Vec<u64>)>,
    cdf: Vec<f64>,
}

impl ArrivalSampler {
    pub fn new(measure: &ArrivalMeasure) -> Self {
        let pairs = measure.support();
        let probs: Vec<&Rational> = pairs.iter().map(|&(c, s)| measure.prob(c, s)).collect();
        let exact = rational::common_denominator(probs.iter().copied()).filter(|&d| d <= 1 << 62).map(|d| {
            let dd = rational::int(d as i64);
            let mut acc = 0u64;
            let cum = probs
                .iter()
                .map(|p| {
                    acc += (*p * &dd).to_integer().to_u64().expect("fits");
                    acc
                })
                .collect();
            (d, cum)
        });
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += rational::to_f64(p);
                acc
            })
            .collect();
        ArrivalSampler { pairs, exact, cdf }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let i = match &self.exact {
            Some((d, cum)) => {
                let r = rng.gen_range(0..*d);
                cum.partition_point(|&c| c <= r)
            }
            None => {
                let r: f64 = rng.gen::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
                self.cdf.partition_point(|&c| c <= r).min(self.pairs.len() - 1)
            }
        };
        self.pairs[i]
    }
}

/// Seed of replication `rep` in sweep cell `cell`.
pub fn stream_seed(base_seed: u64, cell: u64, rep: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(base_seed) ^ cell) ^ rep.rotate_left(32))
}

pub fn rng_from_seed(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub horizon: u64,
    pub seed: u64,
    /// Mean of `|u|` over the states after steps `1..=horizon`.
    pub avg_buffer: f64,
    pub max_buffer: u64,
    pub final_buffer: u64,
    /// Steps after which the buffer is empty.
    pub empty_visits: u64,
    /// Fraction of steps spent in each facet, keyed by `(C•, S•)`.
    pub facet_occupancy: BTreeMap<(ClassSet, ClassSet), f64>,
    /// `min(X_3 - X_2, Y_3 - Y_2)` at the end of the run, for the NN model.
    pub nn_ms_statistic: Option<i64>,
    pub final_state: BufferState,
}

/// One simulated step, handed to trace callbacks.
#[derive(Debug, Clone, Copy)]
pub struct TraceStep {
    pub step: u64,
    pub buffer: u64,
    pub facet_key: (ClassSet, ClassSet),
    pub case: StepCase,
}

/// `[2;3]/[3']`, a comma-free rendering of a facet key.
pub fn facet_key_string(structure: &MatchingStructure, (u, v): (ClassSet, ClassSet)) -> String {
    let c: Vec<&str> = u.iter().map(|c| structure.customer_label(c)).collect();
    let s: Vec<&str> = v.iter().map(|s| structure.server_label(s)).collect();
    format!("[{}]/[{}]", c.join(";"), s.join(";"))
}

pub fn simulate(
    structure: &MatchingStructure,
    measure: &ArrivalMeasure,
    policy: &Policy,
    horizon: u64,
    seed: u64,
) -> Result<SimulationReport, ChainError> {
    simulate_from(structure, measure, policy, horizon, seed, None, |_| {})
}

/// Simulation from `initial` (the empty state by default), calling `trace`
/// after every step.
pub fn simulate_from(
    structure: &MatchingStructure,
    measure: &ArrivalMeasure,
    policy: &Policy,
    horizon: u64,
    seed: u64,
    initial: Option<BufferState>,
    mut trace: impl FnMut(&TraceStep),
) -> Result<SimulationReport, ChainError> {
    if horizon == 0 {
        return Err(ChainError::InvalidHorizon);
    }
    let kind = policy.kind();
    let mut state = match initial {
        Some(s) => {
            let counts = s.counts(structure);
            facets::check_state(structure, &counts.x, &counts.y)?;
            match (&s, kind.uses_words()) {
                (BufferState::Word(_), true) | (BufferState::Commutative(_), false) => s,
                (BufferState::Commutative(_), true) => return Err(PolicyError::WordPolicy(kind).into()),
                (BufferState::Word(_), false) => return Err(PolicyError::CommutativePolicy(kind).into()),
            }
        }
        None => BufferState::empty(structure, kind),
    };
    let sampler = ArrivalSampler::new(measure);
    let mut rng = rng_from_seed(seed);
    let mut counts = state.counts(structure);
    let mut total = counts.total();
    let (mut sum, mut max_buffer, mut empty_visits) = (0u128, 0u64, 0u64);
    let mut occupancy: HashMap<(ClassSet, ClassSet), u64> = HashMap::new();
    for step in 1..=horizon {
        let (c, s) = sampler.sample(&mut rng);
        let case = match &mut state {
            BufferState::Commutative(st) => {
                let case = st.apply(structure, (c, s), policy, &mut rng)?;
                total = st.total();
                case
            }
            BufferState::Word(w) => {
                let (case, phi, psi) = w.apply_detailed(structure, (c, s), kind)?;
                match case {
                    StepCase::Stored => {
                        counts.x[c] += 1;
                        counts.y[s] += 1;
                    }
                    StepCase::MatchedTogether => {}
                    StepCase::BothMatched => {
                        counts.x[phi.expect("matched")] -= 1;
                        counts.y[psi.expect("matched")] -= 1;
                    }
                    StepCase::ServerMatched => {
                        counts.x[phi.expect("matched")] -= 1;
                        counts.x[c] += 1;
                    }
                    StepCase::CustomerMatched => {
                        counts.y[psi.expect("matched")] -= 1;
                        counts.y[s] += 1;
                    }
                }
                total = w.total();
                case
            }
        };
        let key = match &state {
            BufferState::Commutative(st) => (st.customer_support(), st.server_support()),
            BufferState::Word(_) => (counts.customer_support(), counts.server_support()),
        };
        *occupancy.entry(key).or_insert(0) += 1;
        sum += total as u128;
        max_buffer = max_buffer.max(total);
        if total == 0 {
            empty_visits += 1;
        }
        trace(&TraceStep { step, buffer: total, facet_key: key, case });
    }
    let final_counts = state.counts(structure);
    let nn_ms_statistic = is_nn(structure).then(|| {
        let (x, y) = (&final_counts.x, &final_counts.y);
        (x[2] as i64 - x[1] as i64).min(y[2] as i64 - y[1] as i64)
    });
    Ok(SimulationReport {
        horizon,
        seed,
        avg_buffer: sum as f64 / horizon as f64,
        max_buffer,
        final_buffer: total,
        empty_visits,
        facet_occupancy: occupancy.into_iter().map(|(k, n)| (k, n as f64 / horizon as f64)).collect(),
        nn_ms_statistic,
        final_state: state,
    })
}

/// A state of the facet with every buffered class at depth at least 2; the
/// side with fewer bullet classes tops up its first class to balance totals.
pub fn depth_two_state(structure: &MatchingStructure, facet: &Facet) -> Result<CommutativeState, ChainError> {
    if facet.is_zero() {
        return Err(ChainError::ZeroFacet);
    }
    let mut st = CommutativeState::empty(structure);
    for c in facet.bullet_customers.iter() {
        st.x[c] = 2;
    }
    for s in facet.bullet_servers.iter() {
        st.y[s] = 2;
    }
    let (tx, ty) = (st.x.iter().sum::<u64>(), st.y.iter().sum::<u64>());
    if tx < ty {
        st.x[facet.bullet_customers.iter().next().expect("nonzero")] += ty - tx;
    } else if ty < tx {
        st.y[facet.bullet_servers.iter().next().expect("nonzero")] += tx - ty;
    }
    Ok(st)
}

fn state_for(policy: &Policy, state: &CommutativeState) -> BufferState {
    if policy.kind().uses_words() {
        let word = |counts: &[u64]| -> Vec<u8> {
            counts
                .iter()
                .enumerate()
                .flat_map(|(i, &n)| std::iter::repeat(i as u8).take(n as usize))
                .collect()
        };
        BufferState::Word(WordState { u: word(&state.x), v: word(&state.y) })
    } else {
        BufferState::Commutative(state.clone())
    }
}

/// Exact expected one-step change of `|u|` from the depth-two state of
/// `facet`, enumerating every arrival and every policy branch.
pub fn exact_one_step_drift(
    structure: &MatchingStructure,
    measure: &ArrivalMeasure,
    policy: &Policy,
    facet: &Facet,
) -> Result<Rational, ChainError> {
    let start = state_for(policy, &depth_two_state(structure, facet)?);
    let before = rational::int(start.total() as i64);
    let row = start.kernel_row(structure, measure, policy)?;
    Ok(row.iter().map(|(p, next)| p * (rational::int(next.total() as i64) - &before)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    pub mean: f64,
    /// Plug-in standard error of the mean.
    pub std_error: f64,
    pub samples: u64,
}

/// Monte-Carlo mean of the one-step change of `|u|` from the depth-two state.
pub fn estimate_facet_drift(
    structure: &MatchingStructure,
    measure: &ArrivalMeasure,
    policy: &Policy,
    facet: &Facet,
    samples: u64,
    seed: u64,
) -> Result<DriftEstimate, ChainError> {
    let start = state_for(policy, &depth_two_state(structure, facet)?);
    let before = start.total() as f64;
    let sampler = ArrivalSampler::new(measure);
    let mut rng = rng_from_seed(seed);
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..samples.max(1) {
        let mut st = start.clone();
        st.apply(structure, sampler.sample(&mut rng), policy, &mut rng)?;
        let d = st.total() as f64 - before;
        sum += d;
        sum_sq += d * d;
    }
    let n = samples.max(1) as f64;
    let mean = sum / n;
    let var = if n > 1.0 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(DriftEstimate { mean, std_error: (var / n).sqrt(), samples: samples.max(1) })
}

/// States reachable from the empty state by positive-probability steps
/// while the buffer stays within `cap`, in breadth-first order.
pub fn reach_set(
    structure: &MatchingStructure,
    measure: &ArrivalMeasure,
    policy: &Policy,
    cap: u64,
) -> Result<Vec<BufferState>, ChainError> {
    let (states, _) = explore(structure, measure, policy, cap)?;
    Ok(states)
}

type SparseRows = Vec<Vec<(usize, f64)>>;

/// Breadth-first exploration; successors beyond `cap` are redirected to the
/// empty state (index 0) in the returned rows.
fn explore(
    structure: &MatchingStructure,
    measure: &ArrivalMeasure,
    policy: &Policy,
    cap: u64,
) -> Result<(Vec<BufferState>, SparseRows), ChainError> {
    let empty = BufferState::empty(structure, policy.kind());
    let mut index: HashMap<BufferState, usize> = HashMap::from([(empty.clone(), 0)]);
    let mut states = vec![empty];
    let mut rows: SparseRows = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (p, next) in states[i].kernel_row(structure, measure, policy)? {
            let j = if next.total() > cap {
                0
            } else if let Some(&j) = index.get(&next) {
                j
            } else {
                if states.len() >= MAX_STATES {
                    return Err(ChainError::StateSpaceTooLarge(MAX_STATES));
                }
                let j = states.len();
                index.insert(next.clone(), j);
                states.push(next);
                queue.push_back(j);
                j
            };
            let p = rational::to_f64(&p);
            match row.iter_mut().find(|(k, _)| *k == j) {
                Some(e) => e.1 += p,
                None => row.push((j, p)),
            }
        }
        if rows.len() <= i {
            rows.resize(i + 1, Vec::new());
        }
        rows[i] = row;
    }
    Ok((states, rows))
}

/// Stationary vector of a row-stochastic sparse kernel: direct elimination
/// (Grassmann-Taksar-Heyman) up to [`DENSE_LIMIT`] states, otherwise power
/// iteration on the lazy kernel `(P + I) / 2`.
pub fn stationary_distribution(rows: &[Vec<(usize, f64)>]) -> Result<Vec<f64>, ChainError> {
    let n = rows.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n <= DENSE_LIMIT {
        if let Some(pi) = gth(rows) {
            return Ok(pi);
        }
    }
    power_iteration(rows)
}

fn gth(rows: &[Vec<(usize, f64)>]) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut p = vec![0.0f64; n * n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            p[i * n + j] += v;
        }
    }
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| p[k * n + j]).sum();
        if s <= 0.0 {
            return None;
        }
        for i in 0..k {
            p[i * n + k] /= s;
        }
        for i in 0..k {
            let pik = p[i * n + k];
            if pik == 0.0 {
                continue;
            }
            for j in 0..k {
                p[i * n + j] += pik * p[k * n + j];
            }
        }
    }
    let mut pi = vec![0.0f64; n];
    pi[0] = 1.0;
    for k in 1..n {
        pi[k] = (0..k).map(|i| pi[i] * p[i * n + k]).sum();
    }
    let total: f64 = pi.iter().sum();
    Some(pi.into_iter().map(|v| v / total).collect())
}

fn power_iteration(rows: &[Vec<(usize, f64)>]) -> Result<Vec<f64>, ChainError> {
    let n = rows.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0f64; n];
    for _ in 0..POWER_MAX_ITERATIONS {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in rows.iter().enumerate() {
            for &(j, p) in row {
                next[j] += pi[i] * p;
            }
        }
        let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        for (v, old) in next.iter_mut().zip(&pi) {
            *v = 0.5 * (*v + old);
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        std::mem::swap(&mut pi, &mut next);
        if residual < POWER_TOLERANCE {
            return Ok(pi);
        }
    }
    Err(ChainError::NotConverged)
}

/// Stationary law of the chain restricted to `|u| <= cap`, with overflowing
/// transitions sent to the empty state, over the states reachable from it.
pub fn truncated_stationary(
    structure: &MatchingStructure,
    measure: &ArrivalMeasure,
    policy: &Policy,
    cap: u64,
) -> Result<Vec<(BufferState, f64)>, ChainError> {
    let (states, rows) = explore(structure, measure, policy, cap)?;
    let pi = stationary_distribution(&rows)?;
    Ok(states.into_iter().zip(pi).collect())
}

/// Truncated stationary law of the auxiliary chain on `-cap..=cap`, moves
/// past `±cap` redirected to 0. Index `k` holds state `k - cap`.
pub fn z_chain_truncated_stationary(params: &ZChainParams, cap: u64) -> Result<Vec<f64>, ChainError> {
    let cap = cap as i64;
    let idx = |x: i64| (x + cap) as usize;
    let rows: SparseRows = (-cap..=cap)
        .map(|x| {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(3);
            for d in -1..=1 {
                let p = rational::to_f64(&params.transition(x, d));
                if p == 0.0 {
                    continue;
                }
                let y = x + d;
                let j = if y.abs() > cap { idx(0) } else { idx(y) };
                match row.iter_mut().find(|(k, _)| *k == j) {
                    Some(e) => e.1 += p,
                    None => row.push((j, p)),
                }
            }
            row
        })
        .collect();
    // Put 0 first so elimination ends on the most central state.
    let n = rows.len();
    let order: Vec<usize> = std::iter::once(idx(0)).chain((0..n).filter(|&k| k != idx(0))).collect();
    let mut pos = vec![0; n];
    for (p, &k) in order.iter().enumerate() {
        pos[k] = p;
    }
    let permuted: SparseRows =
        order.iter().map(|&k| rows[k].iter().map(|&(j, p)| (pos[j], p)).collect()).collect();
    let pi = stationary_distribution(&permuted)?;
    Ok((0..n).map(|k| pi[pos[k]]).collect())
}

/// Total variation between the truncated vector and the closed form on all
/// of the integers.
pub fn z_chain_total_variation(stationary: &ZChainStationary, truncated: &[f64]) -> f64 {
    let cap = (truncated.len() / 2) as i64;
    let mut inside = 0.0;
    let mut closed_inside = 0.0;
    for (k, &p) in truncated.iter().enumerate() {
        let q = rational::to_f64(&stationary.pi(k as i64 - cap));
        inside += (p - q).abs();
        closed_inside += q;
    }
    0.5 * (inside + (1.0 - closed_inside).max(0.0))
}
