//! Max-flow machinery on the network `i -> C -> S -> f`.
//!
//! Capacities may carry a formal infinitesimal `eta`, which turns the strict
//! NCond inequalities into a single max-flow value test.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;
use std::ops::{Add, Sub};

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::model::{ClassSet, Marginals, MatchingStructure};
use crate::rational::{self, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error("NCond is violated")]
    NCondViolated,
    #[error("brute-force NCond is limited to |C| + |S| <= 24")]
    TooLarge,
    #[error("customer total {0} differs from server total {1}")]
    UnequalTotals(u64, u64),
}

/// `base + eta_coeff * eta` with `eta` a positive infinitesimal.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct EtaValue {
    pub base: Rational,
    pub eta_coeff: Rational,
}

impl EtaValue {
    pub fn new(base: Rational, eta_coeff: Rational) -> Self {
        EtaValue { base, eta_coeff }
    }

    pub fn plain(base: Rational) -> Self {
        EtaValue { base, eta_coeff: rational::zero() }
    }

    /// Substitutes a concrete value for `eta`.
    pub fn at(&self, eta: &Rational) -> Rational {
        &self.base + &self.eta_coeff * eta
    }
}

impl Ord for EtaValue {
    fn cmp(&self, other: &Self) -> Ordering {
        self.base.cmp(&other.base).then_with(|| self.eta_coeff.cmp(&other.eta_coeff))
    }
}

impl PartialOrd for EtaValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for EtaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} + {}η",
            rational::to_fraction_string(&self.base),
            rational::to_fraction_string(&self.eta_coeff)
        )
    }
}

impl Add for &EtaValue {
    type Output = EtaValue;
    fn add(self, rhs: &EtaValue) -> EtaValue {
        EtaValue { base: &self.base + &rhs.base, eta_coeff: &self.eta_coeff + &rhs.eta_coeff }
    }
}

impl Sub for &EtaValue {
    type Output = EtaValue;
    fn sub(self, rhs: &EtaValue) -> EtaValue {
        EtaValue { base: &self.base - &rhs.base, eta_coeff: &self.eta_coeff - &rhs.eta_coeff }
    }
}

/// Totally ordered additive group used for capacities and flows.
pub trait Capacity: Clone + Ord + fmt::Debug {
    fn zero() -> Self;
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
}

impl Capacity for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
}

impl Capacity for EtaValue {
    fn zero() -> Self {
        EtaValue::plain(rational::zero())
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
}

impl Capacity for i64 {
    fn zero() -> Self {
        0
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Source,
    Customer(usize),
    Server(usize),
    Sink,
}

#[derive(Debug, Clone)]
pub struct Arc<C> {
    pub from: usize,
    pub to: usize,
    pub capacity: C,
}

/// Directed network with a designated source and sink.
///
/// Arcs are explored in insertion order, which makes augmenting paths and
/// therefore the returned flow deterministic.
#[derive(Debug, Clone)]
pub struct FlowNetwork<C> {
    pub nodes: Vec<Node>,
    pub arcs: Vec<Arc<C>>,
    pub source: usize,
    pub sink: usize,
}

#[derive(Debug, Clone)]
pub struct MaxFlow<C> {
    pub value: C,
    /// Flow on each arc, indexed like `FlowNetwork::arcs`.
    pub flow: Vec<C>,
    /// Nodes reachable from the source in the final residual graph.
    pub source_side: Vec<bool>,
}

impl<C: Capacity> MaxFlow<C> {
    /// Arcs leaving the source side of the minimum cut.
    pub fn cut_arcs<'a>(&'a self, network: &'a FlowNetwork<C>) -> impl Iterator<Item = usize> + 'a {
        network
            .arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| self.source_side[a.from] && !self.source_side[a.to])
            .map(|(i, _)| i)
    }

    pub fn cut_capacity(&self, network: &FlowNetwork<C>) -> C {
        self.cut_arcs(network).fold(C::zero(), |acc, i| acc.plus(&network.arcs[i].capacity))
    }
}

impl<C: Capacity> FlowNetwork<C> {
    /// Breadth-first augmenting paths (Edmonds-Karp).
    pub fn max_flow(&self) -> MaxFlow<C> {
        let n = self.nodes.len();
        // Residual arc 2k is arc k forward, 2k+1 its reverse.
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, a) in self.arcs.iter().enumerate() {
            adj[a.from].push(2 * k);
            adj[a.to].push(2 * k + 1);
        }
        let mut flow: Vec<C> = vec![C::zero(); self.arcs.len()];
        let residual = |flow: &[C], r: usize| -> C {
            let k = r / 2;
            if r % 2 == 0 {
                self.arcs[k].capacity.minus(&flow[k])
            } else {
                flow[k].clone()
            }
        };
        let head = |r: usize| if r % 2 == 0 { self.arcs[r / 2].to } else { self.arcs[r / 2].from };
        let zero = C::zero();
        let mut value = C::zero();
        loop {
            let mut via: Vec<Option<usize>> = vec![None; n];
            let mut seen = vec![false; n];
            seen[self.source] = true;
            let mut queue = VecDeque::from([self.source]);
            while let Some(u) = queue.pop_front() {
                if u == self.sink {
                    break;
                }
                for &r in &adj[u] {
                    let w = head(r);
                    if !seen[w] && residual(&flow, r) > zero {
                        seen[w] = true;
                        via[w] = Some(r);
                        queue.push_back(w);
                    }
                }
            }
            if !seen[self.sink] {
                return MaxFlow { value, flow, source_side: seen };
            }
            let mut path = Vec::new();
            let mut at = self.sink;
            while let Some(r) = via[at] {
                path.push(r);
                at = if r % 2 == 0 { self.arcs[r / 2].from } else { self.arcs[r / 2].to };
            }
            let bottleneck = path
                .iter()
                .map(|&r| residual(&flow, r))
                .min()
                .expect("non-empty augmenting path");
            for &r in &path {
                let k = r / 2;
                flow[k] = if r % 2 == 0 { flow[k].plus(&bottleneck) } else { flow[k].minus(&bottleneck) };
            }
            value = value.plus(&bottleneck);
        }
    }

    /// Conservation at interior nodes and `0 <= flow <= capacity`.
    pub fn is_feasible(&self, flow: &[C]) -> bool {
        let zero = C::zero();
        if flow.len() != self.arcs.len() {
            return false;
        }
        if self.arcs.iter().zip(flow).any(|(a, f)| *f < zero || *f > a.capacity) {
            return false;
        }
        let mut balance = vec![C::zero(); self.nodes.len()];
        for (a, f) in self.arcs.iter().zip(flow) {
            balance[a.from] = balance[a.from].minus(f);
            balance[a.to] = balance[a.to].plus(f);
        }
        balance
            .iter()
            .enumerate()
            .all(|(i, b)| i == self.source || i == self.sink || *b == zero)
    }
}

/// Node and arc layout of the network `N` for a given structure.
///
/// Nodes: source, customers, servers, sink. Arcs: `(i, c)` for every
/// customer, then `E` in canonical order, then `(s, f)` for every server.
#[derive(Debug, Clone)]
pub struct NetworkLayout {
    pub num_customers: usize,
    pub num_servers: usize,
    pub edges: Vec<(usize, usize)>,
}

impl NetworkLayout {
    pub fn new(structure: &MatchingStructure) -> Self {
        NetworkLayout {
            num_customers: structure.num_customers(),
            num_servers: structure.num_servers(),
            edges: structure.matching_edges(),
        }
    }

    pub fn customer_arc(&self, c: usize) -> usize {
        c
    }

    pub fn edge_arc(&self, e: usize) -> usize {
        self.num_customers + e
    }

    pub fn server_arc(&self, s: usize) -> usize {
        self.num_customers + self.edges.len() + s
    }

    pub fn customer_node(&self, c: usize) -> usize {
        1 + c
    }

    pub fn server_node(&self, s: usize) -> usize {
        1 + self.num_customers + s
    }

    pub fn build<C: Capacity>(
        &self,
        customer_cap: impl Fn(usize) -> C,
        server_cap: impl Fn(usize) -> C,
        edge_cap: C,
    ) -> FlowNetwork<C> {
        let (nc, ns) = (self.num_customers, self.num_servers);
        let mut nodes = vec![Node::Source];
        nodes.extend((0..nc).map(Node::Customer));
        nodes.extend((0..ns).map(Node::Server));
        nodes.push(Node::Sink);
        let sink = nodes.len() - 1;
        let mut arcs = Vec::with_capacity(nc + self.edges.len() + ns);
        for c in 0..nc {
            arcs.push(Arc { from: 0, to: self.customer_node(c), capacity: customer_cap(c) });
        }
        for &(c, s) in &self.edges {
            arcs.push(Arc { from: self.customer_node(c), to: self.server_node(s), capacity: edge_cap.clone() });
        }
        for s in 0..ns {
            arcs.push(Arc { from: self.server_node(s), to: sink, capacity: server_cap(s) });
        }
        FlowNetwork { nodes, arcs, source: 0, sink }
    }

    /// Customers on the source side of a cut.
    pub fn source_side_customers(&self, source_side: &[bool]) -> ClassSet {
        ClassSet::from_indices((0..self.num_customers).filter(|&c| source_side[self.customer_node(c)]))
    }
}

/// A subset `U` with `mu_C(U) >= mu_S(S(U))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NCondCertificate {
    pub customers: ClassSet,
    pub customer_mass: Rational,
    pub neighbor_mass: Rational,
}

impl NCondCertificate {
    pub fn describe(&self, structure: &MatchingStructure) -> String {
        format!(
            "U={}: mu_C(U)={} >= mu_S(S(U))={}",
            structure.format_customers(self.customers),
            rational::to_fraction_string(&self.customer_mass),
            rational::to_fraction_string(&self.neighbor_mass)
        )
    }
}

fn unbounded(structure: &MatchingStructure) -> Rational {
    rational::int((structure.num_customers() + structure.num_servers() + 1) as i64)
}

/// Max flow of `N` with capacities `mu_C`, `mu_S` (no perturbation).
pub fn plain_network(structure: &MatchingStructure, marginals: &Marginals) -> (NetworkLayout, FlowNetwork<Rational>) {
    let layout = NetworkLayout::new(structure);
    let net = layout.build(
        |c| marginals.customers[c].clone(),
        |s| marginals.servers[s].clone(),
        unbounded(structure),
    );
    (layout, net)
}

/// `N` with capacities `mu_C(c) - |S(c)| eta` and `mu_S(s) - |C(s)| eta`.
pub fn perturbed_network(structure: &MatchingStructure, marginals: &Marginals) -> (NetworkLayout, FlowNetwork<EtaValue>) {
    let layout = NetworkLayout::new(structure);
    let net = layout.build(
        |c| EtaValue::new(marginals.customers[c].clone(), -rational::int(structure.servers_of(c).len() as i64)),
        |s| EtaValue::new(marginals.servers[s].clone(), -rational::int(structure.customers_of(s).len() as i64)),
        EtaValue::plain(unbounded(structure)),
    );
    (layout, net)
}

/// NCond with large inequalities: the max flow of `N` equals 1.
pub fn check_ncond_leq(structure: &MatchingStructure, marginals: &Marginals) -> bool {
    let (_, net) = plain_network(structure, marginals);
    net.max_flow().value == rational::one()
}

/// NCond (strict) via a single max flow over eta-perturbed capacities.
///
/// Returns a violating subset extracted from the minimum cut when it fails.
pub fn check_ncond_with_certificate(
    structure: &MatchingStructure,
    marginals: &Marginals,
) -> Result<(), NCondCertificate> {
    let (layout, net) = perturbed_network(structure, marginals);
    let result = net.max_flow();
    let target = EtaValue::new(rational::one(), -rational::int(structure.num_matching_edges() as i64));
    if result.value == target {
        return Ok(());
    }
    let u = layout.source_side_customers(&result.source_side);
    Err(NCondCertificate {
        customers: u,
        customer_mass: marginals.customer_mass(u),
        neighbor_mass: marginals.server_mass(structure.servers_of_set(u)),
    })
}

pub fn check_ncond(structure: &MatchingStructure, marginals: &Marginals) -> bool {
    check_ncond_with_certificate(structure, marginals).is_ok()
}

fn bruteforce(structure: &MatchingStructure, marginals: &Marginals, strict: bool) -> Result<bool, FlowError> {
    let (nc, ns) = (structure.num_customers(), structure.num_servers());
    if nc + ns > 24 {
        return Err(FlowError::TooLarge);
    }
    let holds = |lhs: Rational, rhs: Rational| if strict { lhs < rhs } else { lhs <= rhs };
    for u in 1..structure.all_customers().0 {
        let u = ClassSet(u);
        if !holds(marginals.customer_mass(u), marginals.server_mass(structure.servers_of_set(u))) {
            return Ok(false);
        }
    }
    for v in 1..structure.all_servers().0 {
        let v = ClassSet(v);
        if !holds(marginals.server_mass(v), marginals.customer_mass(structure.customers_of_set(v))) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Direct evaluation of all NCond inequalities over proper non-empty subsets.
pub fn ncond_bruteforce(structure: &MatchingStructure, marginals: &Marginals) -> Result<bool, FlowError> {
    bruteforce(structure, marginals, true)
}

pub fn ncond_leq_bruteforce(structure: &MatchingStructure, marginals: &Marginals) -> Result<bool, FlowError> {
    bruteforce(structure, marginals, false)
}

/// A flow on `N` given arc by arc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowAssignment {
    /// `T(i, c)`.
    pub customers: Vec<Rational>,
    /// `T(c, s)` for `E` in canonical order.
    pub edges: Vec<((usize, usize), Rational)>,
    /// `T(s, f)`.
    pub servers: Vec<Rational>,
}

impl FlowAssignment {
    pub fn value(&self) -> Rational {
        self.customers.iter().sum()
    }

    /// Conservation at every customer and server node.
    pub fn is_conservative(&self) -> bool {
        let mut out = vec![rational::zero(); self.customers.len()];
        let mut inflow = vec![rational::zero(); self.servers.len()];
        for ((c, s), t) in &self.edges {
            out[*c] += t;
            inflow[*s] += t;
        }
        out == self.customers && inflow == self.servers
    }
}

fn flow_assignment(layout: &NetworkLayout, flow: &[Rational]) -> FlowAssignment {
    FlowAssignment {
        customers: (0..layout.num_customers).map(|c| flow[layout.customer_arc(c)].clone()).collect(),
        edges: layout
            .edges
            .iter()
            .enumerate()
            .map(|(e, &cs)| (cs, flow[layout.edge_arc(e)].clone()))
            .collect(),
        servers: (0..layout.num_servers).map(|s| flow[layout.server_arc(s)].clone()).collect(),
    }
}

/// A flow of value 1 on `N` that is strictly positive on every matching edge.
///
/// Superposes the uniform flow `eta` on every edge with a scaled max flow of
/// the network whose capacities are the eta-shifted, renormalized marginals.
/// `eta` starts at `1/(2 |E| D)` (`D` the largest marginal denominator) and is
/// halved until the shifted marginals are positive and still satisfy NCond.
pub fn positive_flow(structure: &MatchingStructure, marginals: &Marginals) -> Result<FlowAssignment, FlowError> {
    if !check_ncond(structure, marginals) {
        return Err(FlowError::NCondViolated);
    }
    let n_edges = structure.num_matching_edges() as i64;
    let max_den = marginals
        .customers
        .iter()
        .chain(&marginals.servers)
        .map(|p| p.denom().clone())
        .max()
        .expect("non-empty marginals");
    let mut eta = Rational::new(1.into(), max_den * (2 * n_edges));
    let layout = NetworkLayout::new(structure);
    loop {
        let scale = rational::one() - &eta * rational::int(n_edges);
        let shifted = Marginals {
            customers: (0..structure.num_customers())
                .map(|c| (&marginals.customers[c] - &eta * rational::int(structure.servers_of(c).len() as i64)) / &scale)
                .collect(),
            servers: (0..structure.num_servers())
                .map(|s| (&marginals.servers[s] - &eta * rational::int(structure.customers_of(s).len() as i64)) / &scale)
                .collect(),
        };
        let positive = shifted.customers.iter().chain(&shifted.servers).all(|p| p.is_positive());
        if positive && check_ncond(structure, &shifted) {
            let (_, net) = plain_network(structure, &shifted);
            let tilde = net.max_flow();
            debug_assert_eq!(tilde.value, rational::one());
            let mut flow: Vec<Rational> = tilde.flow.iter().map(|t| t * &scale).collect();
            for c in 0..layout.num_customers {
                flow[layout.customer_arc(c)] += &eta * rational::int(structure.servers_of(c).len() as i64);
            }
            for e in 0..layout.edges.len() {
                flow[layout.edge_arc(e)] += &eta;
            }
            for s in 0..layout.num_servers {
                flow[layout.server_arc(s)] += &eta * rational::int(structure.customers_of(s).len() as i64);
            }
            return Ok(flow_assignment(&layout, &flow));
        }
        eta /= rational::int(2);
    }
}

/// Result of [`perfect_matching`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchingOutcome {
    /// `m(c, s)` for every matching edge with a positive count.
    Perfect(Vec<((usize, usize), u64)>),
    /// Hall violation: `x(U) > y(S(U))`.
    Violated { customers: ClassSet, customer_total: u64, neighbor_total: u64 },
}

/// Perfect matching of buffered counts, or a Hall-violating subset.
pub fn perfect_matching(structure: &MatchingStructure, x: &[u64], y: &[u64]) -> Result<MatchingOutcome, FlowError> {
    let (tx, ty): (u64, u64) = (x.iter().sum(), y.iter().sum());
    if tx != ty {
        return Err(FlowError::UnequalTotals(tx, ty));
    }
    let layout = NetworkLayout::new(structure);
    let net = layout.build(|c| x[c] as i64, |s| y[s] as i64, tx as i64 + 1);
    let result = net.max_flow();
    if result.value == tx as i64 {
        let m = layout
            .edges
            .iter()
            .enumerate()
            .filter_map(|(e, &cs)| {
                let f = result.flow[layout.edge_arc(e)];
                (f > 0).then_some((cs, f as u64))
            })
            .collect();
        return Ok(MatchingOutcome::Perfect(m));
    }
    let u = layout.source_side_customers(&result.source_side);
    Ok(MatchingOutcome::Violated {
        customers: u,
        customer_total: u.iter().map(|c| x[c]).sum(),
        neighbor_total: structure.servers_of_set(u).iter().map(|s| y[s]).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::MatchingStructure;
    use crate::rational::ratio;
    use proptest::prelude::*;

    fn marg(p: &[(i64, i64)], q: &[(i64, i64)]) -> Marginals {
        Marginals {
            customers: p.iter().map(|&(a, b)| ratio(a, b)).collect(),
            servers: q.iter().map(|&(a, b)| ratio(a, b)).collect(),
        }
    }

    fn single_edge() -> MatchingStructure {
        MatchingStructure::from_indices(vec!["1".into()], vec!["1'".into()], &[(0, 0)], &[(0, 0)]).unwrap()
    }

    #[test]
    fn eta_order_is_lexicographic() {
        let a = EtaValue::new(ratio(1, 2), ratio(5, 1));
        let b = EtaValue::new(ratio(1, 2), ratio(6, 1));
        let c = EtaValue::new(ratio(2, 3), ratio(-100, 1));
        assert!(a < b && b < c);
        assert_eq!(&(&a + &b) - &b, a);
    }

    #[test]
    fn nn_max_flow_values() {
        let st = nn();
        let m = nn_example_measure().marginals();
        let (_, net) = plain_network(&st, &m);
        let r = net.max_flow();
        assert_eq!(r.value, rational::one());
        assert!(net.is_feasible(&r.flow));
        assert_eq!(r.cut_capacity(&net), r.value);

        let zero = Marginals { customers: vec![rational::zero(); 3], servers: m.servers.clone() };
        let (_, net) = plain_network(&st, &zero);
        assert_eq!(net.max_flow().value, rational::zero());
    }

    #[test]
    fn fanti_perturbed_flow_is_below_target() {
        let st = nn_fanti();
        let m = uniform_on(3, 3, &NN_F_ANTI).marginals();
        let (_, net) = perturbed_network(&st, &m);
        let r = net.max_flow();
        // The cut {(i,1), (1',f), (2',f)} has capacity 1 - 6 eta.
        let cut = EtaValue::new(rational::one(), ratio(-6, 1));
        assert!(r.value <= cut);
        assert!(r.value < EtaValue::new(rational::one(), ratio(-5, 1)));
        assert_eq!(r.cut_capacity(&net), r.value);
    }

    #[test]
    fn ncond_leq_examples() {
        assert!(check_ncond_leq(&nn(), &nn_example_measure().marginals()));
        assert!(check_ncond_leq(&nn_fanti(), &uniform_on(3, 3, &NN_F_ANTI).marginals()));
        assert!(check_ncond_leq(&single_edge(), &marg(&[(1, 1)], &[(1, 1)])));
    }

    #[test]
    fn ncond_examples_agree_with_bruteforce() {
        let cases = [
            (nn(), nn_example_measure().marginals(), true),
            (nn_fanti(), uniform_on(3, 3, &NN_F_ANTI).marginals(), false),
            (nn(), nn_counterexample_measure().marginals(), true),
            (single_edge(), marg(&[(1, 1)], &[(1, 1)]), true),
        ];
        for (st, m, expected) in cases {
            assert_eq!(check_ncond(&st, &m), expected);
            assert_eq!(ncond_bruteforce(&st, &m).unwrap(), expected);
        }
        let m = nn_example_measure().marginals();
        let u = ClassSet::singleton(2);
        assert!(m.customer_mass(u) < m.server_mass(nn().servers_of_set(u)));
    }

    #[test]
    fn fanti_certificate() {
        let st = nn_fanti();
        let m = uniform_on(3, 3, &NN_F_ANTI).marginals();
        let cert = check_ncond_with_certificate(&st, &m).unwrap_err();
        assert!(!cert.customers.is_empty() && cert.customers != st.all_customers());
        assert!(cert.customer_mass >= cert.neighbor_mass);
        assert!(cert.describe(&st).starts_with("U={"));
    }

    #[test]
    fn bruteforce_size_limit() {
        let n = 13;
        let edges: Vec<_> = (0..n).flat_map(|c| (0..n).map(move |s| (c, s))).collect();
        let st = MatchingStructure::from_indices(
            (0..n).map(|i| format!("c{i}")).collect(),
            (0..n).map(|i| format!("s{i}")).collect(),
            &edges,
            &edges,
        )
        .unwrap();
        let m = Marginals { customers: vec![ratio(1, 13); 13], servers: vec![ratio(1, 13); 13] };
        assert_eq!(ncond_bruteforce(&st, &m), Err(FlowError::TooLarge));
        assert!(check_ncond(&st, &m));
    }

    #[test]
    fn positive_flow_examples() {
        let st = nn();
        let m = nn_example_measure().marginals();
        let t = positive_flow(&st, &m).unwrap();
        assert_eq!(t.value(), rational::one());
        assert!(t.is_conservative());
        assert_eq!(t.edges.len(), 5);
        assert!(t.edges.iter().all(|(_, f)| f.is_positive()));
        assert!(t.customers.iter().zip(&m.customers).all(|(f, cap)| f <= cap));
        assert!(t.servers.iter().zip(&m.servers).all(|(f, cap)| f <= cap));

        let t = positive_flow(&single_edge(), &marg(&[(1, 1)], &[(1, 1)])).unwrap();
        assert_eq!(t.edges, vec![((0, 0), rational::one())]);

        assert_eq!(
            positive_flow(&nn_fanti(), &uniform_on(3, 3, &NN_F_ANTI).marginals()),
            Err(FlowError::NCondViolated)
        );
    }

    #[test]
    fn perfect_matching_examples() {
        let st = nn();
        match perfect_matching(&st, &[1, 1, 0], &[1, 1, 0]).unwrap() {
            MatchingOutcome::Perfect(m) => {
                let total: u64 = m.iter().map(|(_, k)| k).sum();
                assert_eq!(total, 2);
                assert!(m.iter().all(|&((c, s), _)| st.is_matching_edge(c, s)));
            }
            other => panic!("expected a matching, got {other:?}"),
        }
        assert_eq!(
            perfect_matching(&st, &[0, 0, 2], &[0, 0, 2]).unwrap(),
            MatchingOutcome::Violated { customers: ClassSet::singleton(2), customer_total: 2, neighbor_total: 0 }
        );
        assert_eq!(perfect_matching(&st, &[0, 0, 0], &[0, 0, 0]).unwrap(), MatchingOutcome::Perfect(vec![]));
        assert_eq!(perfect_matching(&st, &[1, 0, 0], &[0, 0, 0]), Err(FlowError::UnequalTotals(1, 0)));
    }

    fn weights(n: usize) -> impl Strategy<Value = Vec<i64>> {
        proptest::collection::vec(1i64..4, n)
    }

    fn normalize(w: &[i64]) -> Vec<Rational> {
        let t: i64 = w.iter().sum();
        w.iter().map(|&x| ratio(x, t)).collect()
    }

    proptest! {
        #[test]
        fn ncond_matches_bruteforce_on_nnn(p in weights(4), q in weights(4)) {
            let st = nnn();
            let m = Marginals { customers: normalize(&p), servers: normalize(&q) };
            prop_assert_eq!(check_ncond(&st, &m), ncond_bruteforce(&st, &m).unwrap());
            prop_assert_eq!(check_ncond_leq(&st, &m), ncond_leq_bruteforce(&st, &m).unwrap());
            let (_, net) = plain_network(&st, &m);
            let r = net.max_flow();
            prop_assert!(net.is_feasible(&r.flow));
            prop_assert_eq!(r.cut_capacity(&net), r.value);
        }

        /// Replaying the perturbed computation with a concrete small eta
        /// reproduces the symbolic comparison outcomes.
        #[test]
        fn eta_substitution_is_sound(p in weights(3), q in weights(3)) {
            let st = nn();
            let m = Marginals { customers: normalize(&p), servers: normalize(&q) };
            let (_, net) = perturbed_network(&st, &m);
            let r = net.max_flow();
            let eta = ratio(1, 1_000_000_000);
            let concrete = FlowNetwork {
                nodes: net.nodes.clone(),
                arcs: net.arcs.iter().map(|a| Arc { from: a.from, to: a.to, capacity: a.capacity.at(&eta) }).collect(),
                source: net.source,
                sink: net.sink,
            };
            let flows: Vec<Rational> = r.flow.iter().map(|f| f.at(&eta)).collect();
            prop_assert!(concrete.is_feasible(&flows));
            let cr = concrete.max_flow();
            prop_assert_eq!(cr.value, r.value.at(&eta));
        }
    }
}
