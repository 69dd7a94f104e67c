//! Buffer states and the one-step transition operator for every admissible
//! matching policy.
//!
//! An arrival `(c, s)` is resolved buffer-first: `s` is matched with a
//! buffered customer from `C(s)` if there is one (the policy picks which
//! class), `c` with a buffered server from `S(c)` likewise, and only when
//! neither has a buffered partner do `c` and `s` match each other (if
//! `(c, s)` is an edge) or both get stored.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use smallvec::SmallVec;
use thiserror::Error;

use crate::facets::{self, Facet, FacetError};
use crate::flow::{Arc, FlowNetwork, Node};
use crate::model::{ArrivalMeasure, ClassSet, MatchingStructure};
use crate::rational::{self, Rational};

/// Word states longer than this are refused.
pub const MAX_WORD_LEN: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("priority policy requires priority matrices")]
    MissingPriorities,
    #[error("invalid priority matrices: {0}")]
    InvalidPriorities(String),
    #[error("{0} needs an ordered (word) state")]
    WordPolicy(PolicyKind),
    #[error("{0} is not defined on word states")]
    CommutativePolicy(PolicyKind),
    #[error("buffer exceeds {MAX_WORD_LEN} items")]
    BufferOverflow,
    #[error("no flow table for facet {0}")]
    MissingFlowTable(String),
    #[error("NCond is violated; the flow policy is undefined")]
    NCondViolated,
    #[error("selector called with no eligible class")]
    EmptySelection,
    #[error(transparent)]
    Facet(#[from] FacetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Fifo,
    Lifo,
    Priority,
    Random,
    MatchLongest,
    MatchShortest,
    Flow,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Fifo,
        PolicyKind::Lifo,
        PolicyKind::Priority,
        PolicyKind::Random,
        PolicyKind::MatchLongest,
        PolicyKind::MatchShortest,
        PolicyKind::Flow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fifo => "fifo",
            PolicyKind::Lifo => "lifo",
            PolicyKind::Priority => "pr",
            PolicyKind::Random => "random",
            PolicyKind::MatchLongest => "ml",
            PolicyKind::MatchShortest => "ms",
            PolicyKind::Flow => "flow",
        }
    }

    /// FIFO and LIFO act on ordered buffers.
    pub fn uses_words(self) -> bool {
        matches!(self, PolicyKind::Fifo | PolicyKind::Lifo)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

/// Unmatched counts `(x, y)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CommutativeState {
    pub x: Vec<u64>,
    pub y: Vec<u64>,
}

/// Unmatched customers and servers in arrival order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordState {
    pub u: Vec<u8>,
    pub v: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BufferState {
    Commutative(CommutativeState),
    Word(WordState),
}

impl CommutativeState {
    pub fn empty(structure: &MatchingStructure) -> Self {
        CommutativeState { x: vec![0; structure.num_customers()], y: vec![0; structure.num_servers()] }
    }

    pub fn new(structure: &MatchingStructure, x: Vec<u64>, y: Vec<u64>) -> Result<Self, PolicyError> {
        facets::check_state(structure, &x, &y)?;
        Ok(CommutativeState { x, y })
    }

    /// `|u|`, the number of buffered customers.
    pub fn total(&self) -> u64 {
        self.x.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.x.iter().all(|&n| n == 0)
    }

    pub fn customer_support(&self) -> ClassSet {
        facets::support(&self.x)
    }

    pub fn server_support(&self) -> ClassSet {
        facets::support(&self.y)
    }

    pub fn facet(&self, structure: &MatchingStructure) -> Facet {
        facets::classify_unchecked(structure, self.customer_support(), self.server_support())
    }

    /// `sum x_c^2 + sum y_s^2`.
    pub fn quadratic_lyapunov(&self) -> u128 {
        self.x.iter().chain(&self.y).map(|&n| (n as u128) * (n as u128)).sum()
    }
}

pub fn quadratic_lyapunov(state: &CommutativeState) -> u128 {
    state.quadratic_lyapunov()
}

impl WordState {
    pub fn empty() -> Self {
        WordState { u: Vec::new(), v: Vec::new() }
    }

    pub fn new(structure: &MatchingStructure, u: Vec<u8>, v: Vec<u8>) -> Result<Self, PolicyError> {
        let w = WordState { u, v };
        if w.u.len() != w.v.len() {
            return Err(PolicyError::InvalidState("words of different lengths".into()));
        }
        if w.u.iter().any(|&c| c as usize >= structure.num_customers())
            || w.v.iter().any(|&s| s as usize >= structure.num_servers())
        {
            return Err(PolicyError::InvalidState("unknown class in word".into()));
        }
        let img = w.commutative_image(structure);
        facets::check_state(structure, &img.x, &img.y)?;
        Ok(w)
    }

    /// `([u], [v])`.
    pub fn commutative_image(&self, structure: &MatchingStructure) -> CommutativeState {
        let mut img = CommutativeState::empty(structure);
        for &c in &self.u {
            img.x[c as usize] += 1;
        }
        for &s in &self.v {
            img.y[s as usize] += 1;
        }
        img
    }

    pub fn total(&self) -> u64 {
        self.u.len() as u64
    }
}

impl BufferState {
    pub fn empty(structure: &MatchingStructure, kind: PolicyKind) -> Self {
        if kind.uses_words() {
            BufferState::Word(WordState::empty())
        } else {
            BufferState::Commutative(CommutativeState::empty(structure))
        }
    }

    pub fn counts(&self, structure: &MatchingStructure) -> CommutativeState {
        match self {
            BufferState::Commutative(s) => s.clone(),
            BufferState::Word(w) => w.commutative_image(structure),
        }
    }

    pub fn total(&self) -> u64 {
        match self {
            BufferState::Commutative(s) => s.total(),
            BufferState::Word(w) => w.total(),
        }
    }

    pub fn format(&self, structure: &MatchingStructure) -> String {
        match self {
            BufferState::Commutative(s) => format!(
                "({};{})",
                s.x.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
                s.y.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
            ),
            BufferState::Word(w) => format!(
                "({};{})",
                w.u.iter().map(|&c| structure.customer_label(c as usize)).collect::<Vec<_>>().join(" "),
                w.v.iter().map(|&s| structure.server_label(s as usize)).collect::<Vec<_>>().join(" ")
            ),
        }
    }
}

/// Which of the five admissible cases an arrival fell into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepCase {
    /// Neither side had a buffered partner and `(c, s)` is not an edge.
    Stored,
    /// Neither side had a buffered partner and `(c, s)` is an edge.
    MatchedTogether,
    /// Both arrivals matched with buffered items.
    BothMatched,
    /// The server matched a buffered customer; the customer was stored.
    ServerMatched,
    /// The customer matched a buffered server; the server was stored.
    CustomerMatched,
}

/// Priority matrices. `customer[c][s]` ranks servers for customer `c`,
/// `server[c][s]` ranks customers for server `s`; higher wins, zero off `E`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Priorities {
    pub customer: Vec<Vec<u32>>,
    pub server: Vec<Vec<u32>>,
}

impl Priorities {
    pub fn new(structure: &MatchingStructure, customer: Vec<Vec<u32>>, server: Vec<Vec<u32>>) -> Result<Self, PolicyError> {
        let (nc, ns) = (structure.num_customers(), structure.num_servers());
        for (name, m) in [("A", &customer), ("B", &server)] {
            if m.len() != nc || m.iter().any(|r| r.len() != ns) {
                return Err(PolicyError::InvalidPriorities(format!("{name} must be {nc}x{ns}")));
            }
            for c in 0..nc {
                for s in 0..ns {
                    if !structure.is_matching_edge(c, s) && m[c][s] != 0 {
                        return Err(PolicyError::InvalidPriorities(format!("{name}[{c}][{s}] is off the matching graph")));
                    }
                }
            }
        }
        let is_bijection = |vals: Vec<u32>| {
            let mut v = vals;
            v.sort_unstable();
            v.iter().enumerate().all(|(i, &x)| x as usize == i + 1)
        };
        for c in 0..nc {
            if !is_bijection(structure.servers_of(c).iter().map(|s| customer[c][s]).collect()) {
                return Err(PolicyError::InvalidPriorities(format!("row {c} of A is not a ranking of S(c)")));
            }
        }
        for s in 0..ns {
            if !is_bijection(structure.customers_of(s).iter().map(|c| server[c][s]).collect()) {
                return Err(PolicyError::InvalidPriorities(format!("column {s} of B is not a ranking of C(s)")));
            }
        }
        Ok(Priorities { customer, server })
    }

    /// The NN matrices `A = B = [[0,2,1],[2,1,0],[1,0,0]]`.
    pub fn nn_counterexample(structure: &MatchingStructure) -> Result<Self, PolicyError> {
        let m = vec![vec![0, 2, 1], vec![2, 1, 0], vec![1, 0, 0]];
        Priorities::new(structure, m.clone(), m)
    }
}

/// One row of a facet-dependent flow table: how an arriving class is split
/// among the eligible buffered classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRow {
    pub arriving: usize,
    pub choices: Vec<(usize, Rational)>,
    weights: Vec<(usize, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FacetTable {
    pub facet: Facet,
    /// Rows for servers in `S◎`, choosing among `C• ∩ C(s)`.
    pub server_rows: Vec<TableRow>,
    /// Rows for customers in `C◎`, choosing among `S• ∩ S(c)`.
    pub customer_rows: Vec<TableRow>,
    /// `eps_c` for every `c` in `C•`.
    pub customer_slack: Vec<(usize, Rational)>,
    /// `eps_s` for every `s` in `S•`.
    pub server_slack: Vec<(usize, Rational)>,
}

impl FacetTable {
    fn server_row(&self, s: usize) -> Option<&TableRow> {
        self.server_rows.iter().find(|r| r.arriving == s)
    }

    fn customer_row(&self, c: usize) -> Option<&TableRow> {
        self.customer_rows.iter().find(|r| r.arriving == c)
    }

    /// Checks `sum_{s in S(c)} mu_S(s) P_sc = mu_C(c) + eps_c` for every
    /// bullet customer, the symmetric identity for bullet servers, positive
    /// slacks, and rows summing to one with entries in `(0, 1]`.
    pub fn satisfies_contract(&self, structure: &MatchingStructure, measure: &ArrivalMeasure) -> bool {
        let m = measure.marginals();
        let rows_ok = self.server_rows.iter().chain(&self.customer_rows).all(|r| {
            r.choices.iter().map(|(_, p)| p).sum::<Rational>() == rational::one()
                && r.choices.iter().all(|(_, p)| p.is_positive() && *p <= rational::one())
        });
        let customers_ok = self.customer_slack.iter().all(|(c, eps)| {
            let lhs: Rational = structure
                .servers_of(*c)
                .iter()
                .map(|s| {
                    let p = self
                        .server_row(s)
                        .and_then(|r| r.choices.iter().find(|(k, _)| k == c))
                        .map(|(_, p)| p.clone())
                        .unwrap_or_else(rational::zero);
                    &m.servers[s] * p
                })
                .sum();
            eps.is_positive() && lhs == &m.customers[*c] + eps
        });
        let servers_ok = self.server_slack.iter().all(|(s, eps)| {
            let lhs: Rational = structure
                .customers_of(*s)
                .iter()
                .map(|c| {
                    let p = self
                        .customer_row(c)
                        .and_then(|r| r.choices.iter().find(|(k, _)| k == s))
                        .map(|(_, p)| p.clone())
                        .unwrap_or_else(rational::zero);
                    &m.customers[c] * p
                })
                .sum();
            eps.is_positive() && lhs == &m.servers[*s] + eps
        });
        rows_ok && customers_ok && servers_ok
    }
}

/// Per-facet randomization tables of the flow policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowTables {
    tables: BTreeMap<(ClassSet, ClassSet), FacetTable>,
}

impl FlowTables {
    pub fn get(&self, key: (ClassSet, ClassSet)) -> Option<&FacetTable> {
        self.tables.get(&key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FacetTable> {
        self.tables.values()
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}

fn row_weights(choices: &[(usize, Rational)]) -> Vec<(usize, u64)> {
    if let Some(den) = rational::common_denominator(choices.iter().map(|(_, p)| p)) {
        if den <= 1 << 62 {
            let d = rational::int(den as i64);
            return choices
                .iter()
                .map(|(k, p)| (*k, (p * &d).to_integer().to_u64().expect("fits")))
                .collect();
        }
    }
    // Denominator too large for exact integer sampling; round at 2^53.
    let scale = (1u64 << 53) as f64;
    choices.iter().map(|(k, p)| (*k, ((rational::to_f64(p) * scale).round() as u64).max(1))).collect()
}

/// Splitting rule for one side of a facet.
///
/// `sources` are the buffered classes with their marginal mass, `sinks` the
/// forced-zero classes on the other side with theirs; `adjacent(src)` gives
/// the sinks a source can be matched with. Returns rows keyed by sink and
/// the slack of every source.
fn side_table(
    sources: &[(usize, Rational)],
    sinks: &[(usize, Rational)],
    adjacent: impl Fn(usize) -> ClassSet,
) -> (Vec<TableRow>, Vec<(usize, Rational)>) {
    let source_total: Rational = sources.iter().map(|(_, p)| p).sum();
    let max_den = sinks.iter().chain(sources).map(|(_, p)| p.denom().clone()).max().expect("non-empty");
    let mut eta = Rational::new(1.into(), max_den * num_bigint::BigInt::from(2 * (sources.len() * sinks.len()).max(1)));
    let sink_pos = |k: usize| sinks.iter().position(|(s, _)| *s == k);
    let unbounded = rational::int(2);
    loop {
        let mut nodes = vec![Node::Source];
        nodes.extend(sources.iter().map(|(c, _)| Node::Customer(*c)));
        nodes.extend(sinks.iter().map(|(s, _)| Node::Server(*s)));
        nodes.push(Node::Sink);
        let sink = nodes.len() - 1;
        let mut arcs = Vec::new();
        for (i, (_, p)) in sources.iter().enumerate() {
            arcs.push(Arc { from: 0, to: 1 + i, capacity: p.clone() });
        }
        let mut edge_arcs = Vec::new();
        for (i, (src, _)) in sources.iter().enumerate() {
            for k in adjacent(*src).iter() {
                let j = sink_pos(k).expect("adjacent class is a sink");
                edge_arcs.push((i, j, arcs.len()));
                arcs.push(Arc { from: 1 + i, to: 1 + sources.len() + j, capacity: unbounded.clone() });
            }
        }
        let sink_arc0 = arcs.len();
        for (j, (_, p)) in sinks.iter().enumerate() {
            arcs.push(Arc { from: 1 + sources.len() + j, to: sink, capacity: p - &eta });
        }
        let caps_positive = sinks.iter().all(|(_, p)| p > &eta);
        let net = FlowNetwork { nodes, arcs, source: 0, sink };
        let result = net.max_flow();
        if !(caps_positive && result.value == source_total) {
            eta /= rational::int(2);
            continue;
        }
        let mut rows = Vec::new();
        let mut slack = vec![rational::zero(); sources.len()];
        for (j, (k, pk)) in sinks.iter().enumerate() {
            let eligible: Vec<&(usize, usize, usize)> = edge_arcs.iter().filter(|(_, jj, _)| *jj == j).collect();
            let n_eligible = rational::int(eligible.len() as i64);
            let spare = (pk - &result.flow[sink_arc0 + j]) / &n_eligible;
            let choices: Vec<(usize, Rational)> = eligible
                .iter()
                .map(|&&(i, _, a)| (sources[i].0, (&result.flow[a] + &spare) / pk))
                .collect();
            for &&(i, _, _) in &eligible {
                slack[i] += &spare;
            }
            let weights = row_weights(&choices);
            rows.push(TableRow { arriving: *k, choices, weights });
        }
        let slack = sources.iter().map(|(c, _)| *c).zip(slack).collect();
        return (rows, slack);
    }
}

/// Facet-dependent randomization tables built from max flows on the
/// restricted networks `C• -> S◎` and `S• -> C◎`.
pub fn flow_policy_table(structure: &MatchingStructure, measure: &ArrivalMeasure) -> Result<FlowTables, PolicyError> {
    let m = measure.marginals();
    if !crate::flow::check_ncond(structure, &m) {
        return Err(PolicyError::NCondViolated);
    }
    let mut tables = BTreeMap::new();
    for facet in facets::enumerate_facets(structure)? {
        if facet.is_zero() {
            continue;
        }
        let bullet_c: Vec<_> = facet.bullet_customers.iter().map(|c| (c, m.customers[c].clone())).collect();
        let forced_s: Vec<_> = facet.forced_zero_servers.iter().map(|s| (s, m.servers[s].clone())).collect();
        let (server_rows, customer_slack) = side_table(&bullet_c, &forced_s, |c| structure.servers_of(c));
        let bullet_s: Vec<_> = facet.bullet_servers.iter().map(|s| (s, m.servers[s].clone())).collect();
        let forced_c: Vec<_> = facet.forced_zero_customers.iter().map(|c| (c, m.customers[c].clone())).collect();
        let (customer_rows, server_slack) = side_table(&bullet_s, &forced_c, |s| structure.customers_of(s));
        tables.insert(
            facet.key(),
            FacetTable { facet, server_rows, customer_rows, customer_slack, server_slack },
        );
    }
    Ok(FlowTables { tables })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    Fifo,
    Lifo,
    Priority(Priorities),
    Random,
    MatchLongest,
    MatchShortest,
    Flow(FlowTables),
}

/// Candidate classes with integer weights.
pub type Options = SmallVec<[(usize, u64); 8]>;

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Fifo => PolicyKind::Fifo,
            Policy::Lifo => PolicyKind::Lifo,
            Policy::Priority(_) => PolicyKind::Priority,
            Policy::Random => PolicyKind::Random,
            Policy::MatchLongest => PolicyKind::MatchLongest,
            Policy::MatchShortest => PolicyKind::MatchShortest,
            Policy::Flow(_) => PolicyKind::Flow,
        }
    }

    /// Builds the policy; `priorities` is required for PR, flow tables are
    /// computed from `measure` for FLOW.
    pub fn build(
        kind: PolicyKind,
        structure: &MatchingStructure,
        measure: &ArrivalMeasure,
        priorities: Option<&Priorities>,
    ) -> Result<Policy, PolicyError> {
        Ok(match kind {
            PolicyKind::Fifo => Policy::Fifo,
            PolicyKind::Lifo => Policy::Lifo,
            PolicyKind::Priority => Policy::Priority(priorities.cloned().ok_or(PolicyError::MissingPriorities)?),
            PolicyKind::Random => Policy::Random,
            PolicyKind::MatchLongest => Policy::MatchLongest,
            PolicyKind::MatchShortest => Policy::MatchShortest,
            PolicyKind::Flow => Policy::Flow(flow_policy_table(structure, measure)?),
        })
    }

    /// `Phi(x, s)`: the weighted candidates among buffered customers of `C(s)`.
    pub fn customer_options(
        &self,
        structure: &MatchingStructure,
        state: &CommutativeState,
        s: usize,
    ) -> Result<Options, PolicyError> {
        let eligible = structure.customers_of(s).intersection(state.customer_support());
        let counts = &state.x;
        self.options(eligible, counts, |tables| {
            let key = (state.customer_support(), state.server_support());
            let table = tables.get(key).ok_or_else(|| PolicyError::MissingFlowTable(format!("{key:?}")))?;
            table.server_row(s).ok_or_else(|| PolicyError::MissingFlowTable(format!("{key:?} server {s}")))
        }, |p| eligible.iter().max_by_key(|&c| (p.server[c][s], std::cmp::Reverse(c))))
    }

    /// `Psi(y, c)`: the weighted candidates among buffered servers of `S(c)`.
    pub fn server_options(
        &self,
        structure: &MatchingStructure,
        state: &CommutativeState,
        c: usize,
    ) -> Result<Options, PolicyError> {
        let eligible = structure.servers_of(c).intersection(state.server_support());
        let counts = &state.y;
        self.options(eligible, counts, |tables| {
            let key = (state.customer_support(), state.server_support());
            let table = tables.get(key).ok_or_else(|| PolicyError::MissingFlowTable(format!("{key:?}")))?;
            table.customer_row(c).ok_or_else(|| PolicyError::MissingFlowTable(format!("{key:?} customer {c}")))
        }, |p| eligible.iter().max_by_key(|&s| (p.customer[c][s], std::cmp::Reverse(s))))
    }

    fn options<'a>(
        &'a self,
        eligible: ClassSet,
        counts: &[u64],
        flow_row: impl FnOnce(&'a FlowTables) -> Result<&'a TableRow, PolicyError>,
        priority_pick: impl FnOnce(&Priorities) -> Option<usize>,
    ) -> Result<Options, PolicyError> {
        if eligible.is_empty() {
            return Err(PolicyError::EmptySelection);
        }
        let mut out = Options::new();
        match self {
            Policy::Fifo | Policy::Lifo => return Err(PolicyError::WordPolicy(self.kind())),
            Policy::Priority(p) => out.push((priority_pick(p).ok_or(PolicyError::EmptySelection)?, 1)),
            Policy::Random => out.extend(eligible.iter().map(|i| (i, counts[i]))),
            Policy::MatchLongest => {
                let best = eligible.iter().map(|i| counts[i]).max().expect("non-empty");
                out.extend(eligible.iter().filter(|&i| counts[i] == best).map(|i| (i, 1)));
            }
            Policy::MatchShortest => {
                let best = eligible.iter().map(|i| counts[i]).min().expect("non-empty");
                out.extend(eligible.iter().filter(|&i| counts[i] == best).map(|i| (i, 1)));
            }
            Policy::Flow(tables) => {
                if eligible.len() == 1 {
                    out.push((eligible.iter().next().expect("non-empty"), 1));
                } else {
                    let row = flow_row(tables)?;
                    out.extend(row.weights.iter().copied());
                }
            }
        }
        Ok(out)
    }

    /// Exact choice probabilities matching [`Policy::customer_options`].
    pub fn customer_choice_probs(
        &self,
        structure: &MatchingStructure,
        state: &CommutativeState,
        s: usize,
    ) -> Result<Vec<(usize, Rational)>, PolicyError> {
        if let Policy::Flow(tables) = self {
            let eligible = structure.customers_of(s).intersection(state.customer_support());
            if eligible.len() > 1 {
                let key = (state.customer_support(), state.server_support());
                let row = tables
                    .get(key)
                    .and_then(|t| t.server_row(s))
                    .ok_or_else(|| PolicyError::MissingFlowTable(format!("{key:?}")))?;
                return Ok(row.choices.clone());
            }
        }
        Ok(normalize(&self.customer_options(structure, state, s)?))
    }

    pub fn server_choice_probs(
        &self,
        structure: &MatchingStructure,
        state: &CommutativeState,
        c: usize,
    ) -> Result<Vec<(usize, Rational)>, PolicyError> {
        if let Policy::Flow(tables) = self {
            let eligible = structure.servers_of(c).intersection(state.server_support());
            if eligible.len() > 1 {
                let key = (state.customer_support(), state.server_support());
                let row = tables
                    .get(key)
                    .and_then(|t| t.customer_row(c))
                    .ok_or_else(|| PolicyError::MissingFlowTable(format!("{key:?}")))?;
                return Ok(row.choices.clone());
            }
        }
        Ok(normalize(&self.server_options(structure, state, c)?))
    }
}

fn normalize(options: &Options) -> Vec<(usize, Rational)> {
    let total: u64 = options.iter().map(|(_, w)| w).sum();
    options
        .iter()
        .filter(|(_, w)| *w > 0)
        .map(|&(k, w)| (k, rational::ratio(w as i64, total as i64)))
        .collect()
}

/// Draws one candidate proportionally to its weight.
pub fn sample_option<R: Rng + ?Sized>(options: &Options, rng: &mut R) -> usize {
    if options.len() == 1 {
        return options[0].0;
    }
    let total: u64 = options.iter().map(|(_, w)| w).sum();
    let mut r = rng.gen_range(0..total);
    for &(k, w) in options {
        if r < w {
            return k;
        }
        r -= w;
    }
    unreachable!("weights sum to total")
}

fn classify_arrival(structure: &MatchingStructure, state: &CommutativeState, c: usize, s: usize) -> (bool, bool) {
    let server_has_partner = structure.customers_of(s).intersects(state.customer_support());
    let customer_has_partner = structure.servers_of(c).intersects(state.server_support());
    (server_has_partner, customer_has_partner)
}

impl CommutativeState {
    /// Applies one arrival in place with selections drawn from `rng`.
    pub fn apply<R: Rng + ?Sized>(
        &mut self,
        structure: &MatchingStructure,
        (c, s): (usize, usize),
        policy: &Policy,
        rng: &mut R,
    ) -> Result<StepCase, PolicyError> {
        let (server_partner, customer_partner) = classify_arrival(structure, self, c, s);
        Ok(match (server_partner, customer_partner) {
            (false, false) => {
                if structure.is_matching_edge(c, s) {
                    StepCase::MatchedTogether
                } else {
                    self.x[c] += 1;
                    self.y[s] += 1;
                    StepCase::Stored
                }
            }
            (true, true) => {
                let phi = sample_option(&policy.customer_options(structure, self, s)?, rng);
                let psi = sample_option(&policy.server_options(structure, self, c)?, rng);
                self.x[phi] -= 1;
                self.y[psi] -= 1;
                StepCase::BothMatched
            }
            (true, false) => {
                let phi = sample_option(&policy.customer_options(structure, self, s)?, rng);
                self.x[phi] -= 1;
                self.x[c] += 1;
                StepCase::ServerMatched
            }
            (false, true) => {
                let psi = sample_option(&policy.server_options(structure, self, c)?, rng);
                self.y[psi] -= 1;
                self.y[s] += 1;
                StepCase::CustomerMatched
            }
        })
    }

    /// Every possible successor with its exact probability.
    pub fn transitions(
        &self,
        structure: &MatchingStructure,
        (c, s): (usize, usize),
        policy: &Policy,
    ) -> Result<Vec<(Rational, CommutativeState)>, PolicyError> {
        let (server_partner, customer_partner) = classify_arrival(structure, self, c, s);
        let one = rational::one();
        let phis = if server_partner {
            policy.customer_choice_probs(structure, self, s)?
        } else {
            vec![(usize::MAX, one.clone())]
        };
        let psis = if customer_partner {
            policy.server_choice_probs(structure, self, c)?
        } else {
            vec![(usize::MAX, one)]
        };
        let mut out = Vec::with_capacity(phis.len() * psis.len());
        for (phi, p) in &phis {
            for (psi, q) in &psis {
                let mut next = self.clone();
                match (server_partner, customer_partner) {
                    (false, false) => {
                        if !structure.is_matching_edge(c, s) {
                            next.x[c] += 1;
                            next.y[s] += 1;
                        }
                    }
                    (true, true) => {
                        next.x[*phi] -= 1;
                        next.y[*psi] -= 1;
                    }
                    (true, false) => {
                        next.x[*phi] -= 1;
                        next.x[c] += 1;
                    }
                    (false, true) => {
                        next.y[*psi] -= 1;
                        next.y[s] += 1;
                    }
                }
                out.push((p * q, next));
            }
        }
        Ok(out)
    }
}

/// One step on counts; validates the state and rejects word policies.
pub fn step_commutative<R: Rng + ?Sized>(
    structure: &MatchingStructure,
    state: &CommutativeState,
    arrival: (usize, usize),
    policy: &Policy,
    rng: &mut R,
) -> Result<CommutativeState, PolicyError> {
    if policy.kind().uses_words() {
        return Err(PolicyError::WordPolicy(policy.kind()));
    }
    facets::check_state(structure, &state.x, &state.y)?;
    check_arrival(structure, arrival)?;
    let mut next = state.clone();
    next.apply(structure, arrival, policy, rng)?;
    Ok(next)
}

fn check_arrival(structure: &MatchingStructure, (c, s): (usize, usize)) -> Result<(), PolicyError> {
    if c >= structure.num_customers() || s >= structure.num_servers() {
        return Err(PolicyError::InvalidState(format!("arrival ({c}, {s}) out of range")));
    }
    Ok(())
}

impl WordState {
    /// FIFO (oldest eligible) or LIFO (youngest eligible) step in place.
    pub fn apply(
        &mut self,
        structure: &MatchingStructure,
        arrival: (usize, usize),
        kind: PolicyKind,
    ) -> Result<StepCase, PolicyError> {
        Ok(self.apply_detailed(structure, arrival, kind)?.0)
    }

    /// Like [`WordState::apply`], also returning the classes of the buffered
    /// customer and server that were matched.
    pub fn apply_detailed(
        &mut self,
        structure: &MatchingStructure,
        (c, s): (usize, usize),
        kind: PolicyKind,
    ) -> Result<(StepCase, Option<usize>, Option<usize>), PolicyError> {
        let oldest = match kind {
            PolicyKind::Fifo => true,
            PolicyKind::Lifo => false,
            other => return Err(PolicyError::CommutativePolicy(other)),
        };
        let pick = |word: &[u8], allowed: ClassSet| -> Option<usize> {
            if oldest {
                word.iter().position(|&k| allowed.contains(k as usize))
            } else {
                word.iter().rposition(|&k| allowed.contains(k as usize))
            }
        };
        let phi = pick(&self.u, structure.customers_of(s));
        let psi = pick(&self.v, structure.servers_of(c));
        let matched = (phi.map(|i| self.u[i] as usize), psi.map(|j| self.v[j] as usize));
        let case = match (phi, psi) {
            (None, None) => {
                if structure.is_matching_edge(c, s) {
                    StepCase::MatchedTogether
                } else {
                    if self.u.len() >= MAX_WORD_LEN {
                        return Err(PolicyError::BufferOverflow);
                    }
                    self.u.push(c as u8);
                    self.v.push(s as u8);
                    StepCase::Stored
                }
            }
            (Some(i), Some(j)) => {
                self.u.remove(i);
                self.v.remove(j);
                StepCase::BothMatched
            }
            (Some(i), None) => {
                self.u.remove(i);
                self.u.push(c as u8);
                StepCase::ServerMatched
            }
            (None, Some(j)) => {
                self.v.remove(j);
                self.v.push(s as u8);
                StepCase::CustomerMatched
            }
        };
        Ok((case, matched.0, matched.1))
    }
}

pub fn step_word(
    structure: &MatchingStructure,
    state: &WordState,
    arrival: (usize, usize),
    kind: PolicyKind,
) -> Result<WordState, PolicyError> {
    let validated = WordState::new(structure, state.u.clone(), state.v.clone())?;
    check_arrival(structure, arrival)?;
    let mut next = validated;
    next.apply(structure, arrival, kind)?;
    Ok(next)
}

impl BufferState {
    pub fn apply<R: Rng + ?Sized>(
        &mut self,
        structure: &MatchingStructure,
        arrival: (usize, usize),
        policy: &Policy,
        rng: &mut R,
    ) -> Result<StepCase, PolicyError> {
        match self {
            BufferState::Commutative(st) => {
                if policy.kind().uses_words() {
                    return Err(PolicyError::WordPolicy(policy.kind()));
                }
                st.apply(structure, arrival, policy, rng)
            }
            BufferState::Word(w) => w.apply(structure, arrival, policy.kind()),
        }
    }

    pub fn transitions(
        &self,
        structure: &MatchingStructure,
        arrival: (usize, usize),
        policy: &Policy,
    ) -> Result<Vec<(Rational, BufferState)>, PolicyError> {
        match self {
            BufferState::Commutative(st) => {
                if policy.kind().uses_words() {
                    return Err(PolicyError::WordPolicy(policy.kind()));
                }
                Ok(st
                    .transitions(structure, arrival, policy)?
                    .into_iter()
                    .map(|(p, s)| (p, BufferState::Commutative(s)))
                    .collect())
            }
            BufferState::Word(w) => {
                let mut next = w.clone();
                next.apply(structure, arrival, policy.kind())?;
                Ok(vec![(rational::one(), BufferState::Word(next))])
            }
        }
    }

    /// Exact one-step successor distribution, summed over all arrivals.
    pub fn kernel_row(
        &self,
        structure: &MatchingStructure,
        measure: &ArrivalMeasure,
        policy: &Policy,
    ) -> Result<Vec<(Rational, BufferState)>, PolicyError> {
        let mut out: Vec<(Rational, BufferState)> = Vec::new();
        for (c, s) in measure.support() {
            let p = measure.prob(c, s);
            for (q, next) in self.transitions(structure, (c, s), policy)? {
                let w = p * q;
                if w.is_zero() {
                    continue;
                }
                match out.iter_mut().find(|(_, st)| *st == next) {
                    Some(slot) => slot.0 += w,
                    None => out.push((w, next)),
                }
            }
        }
        Ok(out)
    }
}
