//! Structure-level stability analysis: strong connectivity of the pairing
//! digraph, construction of a stable measure, per-facet linear drifts and
//! drain-to-empty arrival sequences.

use std::collections::VecDeque;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::facets::{self, Facet, FacetError};
use crate::model::{ArrivalMeasure, ClassSet, MatchingStructure, ModelError};
use crate::rational::{self, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("pairing digraph is not strongly connected: no path from customer {customer} to server {server}")]
    NotStronglyConnected { customer: String, server: String },
    #[error("the zero facet has no linear drift")]
    ZeroFacet,
    #[error("structure is not stable: the empty state is not always reachable")]
    UnstableStructure,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Facet(#[from] FacetError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Node of the pairing digraph: customers first, then servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairingNode {
    Customer(usize),
    Server(usize),
}

/// `c -> s` for every matching edge, `s -> c` for every arrival edge.
#[derive(Debug, Clone)]
pub struct PairingDigraph {
    num_customers: usize,
    num_servers: usize,
    succ: Vec<Vec<usize>>,
}

impl PairingDigraph {
    pub fn new(structure: &MatchingStructure) -> Self {
        let (nc, ns) = (structure.num_customers(), structure.num_servers());
        let mut succ = vec![Vec::new(); nc + ns];
        for (c, s) in structure.matching_edges() {
            succ[c].push(nc + s);
        }
        for s in 0..ns {
            succ[nc + s].extend(structure.arrival_customers_of(s).iter());
        }
        PairingDigraph { num_customers: nc, num_servers: ns, succ }
    }

    pub fn num_nodes(&self) -> usize {
        self.succ.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn node(&self, id: usize) -> PairingNode {
        if id < self.num_customers {
            PairingNode::Customer(id)
        } else {
            PairingNode::Server(id - self.num_customers)
        }
    }

    pub fn successors(&self, id: usize) -> &[usize] {
        &self.succ[id]
    }

    /// Strongly connected components (Tarjan), each sorted, in order of
    /// completion.
    pub fn strongly_connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.num_nodes();
        let mut index = vec![usize::MAX; n];
        let mut low = vec![0; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut components = Vec::new();
        let mut next = 0;
        for root in 0..n {
            if index[root] != usize::MAX {
                continue;
            }
            let mut call: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = next;
            low[root] = next;
            next += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut i)) = call.last_mut() {
                if *i < self.succ[v].len() {
                    let w = self.succ[v][*i];
                    *i += 1;
                    if index[w] == usize::MAX {
                        index[w] = next;
                        low[w] = next;
                        next += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(parent, _)) = call.last() {
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        let mut comp = Vec::new();
                        loop {
                            let w = stack.pop().expect("tarjan stack");
                            on_stack[w] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        comp.sort_unstable();
                        components.push(comp);
                    }
                }
            }
        }
        components
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.strongly_connected_components().len() == 1
    }

    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.num_nodes()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &self.succ[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// First `(c, s)` in canonical order with no directed path `c -> s`.
    pub fn unreachable_pair(&self) -> Option<(usize, usize)> {
        (0..self.num_customers).find_map(|c| {
            let seen = self.reachable_from(c);
            (0..self.num_servers).find(|&s| !seen[self.num_customers + s]).map(|s| (c, s))
        })
    }
}

pub fn is_stable_structure(structure: &MatchingStructure) -> bool {
    PairingDigraph::new(structure).is_strongly_connected()
}

/// `Err` carries the certificate pair when the structure is not stable.
pub fn stable_structure_certificate(structure: &MatchingStructure) -> Result<(), AnalysisError> {
    let g = PairingDigraph::new(structure);
    if g.is_strongly_connected() {
        return Ok(());
    }
    let (c, s) = g.unreachable_pair().expect("not strongly connected implies an unreachable pair");
    Err(AnalysisError::NotStronglyConnected {
        customer: structure.customer_label(c).to_string(),
        server: structure.server_label(s).to_string(),
    })
}

/// Solves `a * x = b` exactly by Gauss-Jordan elimination. `a` may have more
/// rows than columns; returns `None` unless the solution is unique and
/// consistent.
pub fn solve_exact(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut r = 0;
    for col in 0..cols {
        let pivot = (r..rows).find(|&i| !a[i][col].is_zero())?;
        a.swap(r, pivot);
        b.swap(r, pivot);
        let inv = rational::one() / &a[r][col];
        for v in a[r].iter_mut() {
            *v *= &inv;
        }
        b[r] *= &inv;
        for i in 0..rows {
            if i == r || a[i][col].is_zero() {
                continue;
            }
            let f = a[i][col].clone();
            for j in col..cols {
                let d = &f * &a[r][j];
                a[i][j] -= d;
            }
            let d = &f * &b[r];
            b[i] -= d;
        }
        r += 1;
    }
    if b[r..].iter().any(|v| !v.is_zero()) {
        return None;
    }
    Some(b.into_iter().take(cols).collect())
}

/// Builds a measure with support `F` satisfying NCond for a stable
/// structure, from the stationary vector of `M_E * M_F`.
pub fn construct_stable_measure(structure: &MatchingStructure) -> Result<ArrivalMeasure, AnalysisError> {
    stable_structure_certificate(structure)?;
    let (nc, ns) = (structure.num_customers(), structure.num_servers());
    let me = |c: usize, s: usize| -> Rational {
        let deg = structure.servers_of(c).len() as i64;
        if structure.is_matching_edge(c, s) {
            rational::ratio(1, deg)
        } else {
            rational::zero()
        }
    };
    let mf = |s: usize, c: usize| -> Rational {
        let deg = structure.arrival_customers_of(s).len() as i64;
        if structure.is_arrival_edge(c, s) {
            rational::ratio(1, deg)
        } else {
            rational::zero()
        }
    };
    let me_m: Vec<Vec<Rational>> = (0..nc).map(|c| (0..ns).map(|s| me(c, s)).collect()).collect();
    let mf_m: Vec<Vec<Rational>> = (0..ns).map(|s| (0..nc).map(|c| mf(s, c)).collect()).collect();
    let p: Vec<Vec<Rational>> = (0..nc)
        .map(|i| (0..nc).map(|j| (0..ns).map(|s| &me_m[i][s] * &mf_m[s][j]).sum()).collect())
        .collect();
    // x (P - I) = 0 and sum x = 1, written column-wise.
    let mut a: Vec<Vec<Rational>> = (0..nc)
        .map(|j| {
            (0..nc)
                .map(|i| if i == j { &p[i][j] - rational::one() } else { p[i][j].clone() })
                .collect()
        })
        .collect();
    a.push(vec![rational::one(); nc]);
    let mut b = vec![rational::zero(); nc];
    b.push(rational::one());
    let x = solve_exact(a, b).expect("irreducible chain has a unique stationary vector");
    let y: Vec<Rational> = (0..ns).map(|s| (0..nc).map(|c| &x[c] * &me_m[c][s]).sum()).collect();
    let table: Vec<Vec<Rational>> = (0..nc).map(|c| (0..ns).map(|s| &y[s] * &mf_m[s][c]).collect()).collect();
    Ok(ArrivalMeasure::for_structure(structure, table)?)
}

/// `1 - mu_C(C◎) - mu_S(S◎) - mu(E ∩ C∘ x S∘)`, the expected one-step change
/// of `|u|` from any state of the facet.
pub fn linear_drift(structure: &MatchingStructure, measure: &ArrivalMeasure, facet: &Facet) -> Result<Rational, AnalysisError> {
    if facet.is_zero() {
        return Err(AnalysisError::ZeroFacet);
    }
    let m = measure.marginals();
    let free_edges: Rational = structure
        .matching_edges()
        .into_iter()
        .filter(|&(c, s)| facet.free_zero_customers.contains(c) && facet.free_zero_servers.contains(s))
        .map(|(c, s)| measure.prob(c, s).clone())
        .sum();
    Ok(rational::one()
        - m.customer_mass(facet.forced_zero_customers)
        - m.server_mass(facet.forced_zero_servers)
        - free_edges)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriftReport {
    pub facet: Facet,
    pub linear_drift: Rational,
    pub scond_satisfied: bool,
}

/// True iff every nonzero facet has negative linear drift; reports every
/// nonzero facet in key order.
pub fn check_scond(structure: &MatchingStructure, measure: &ArrivalMeasure) -> Result<(bool, Vec<DriftReport>), AnalysisError> {
    let mut reports = Vec::new();
    for facet in facets::enumerate_facets(structure)? {
        if facet.is_zero() {
            continue;
        }
        let drift = linear_drift(structure, measure, &facet)?;
        let ok = drift.is_negative();
        reports.push(DriftReport { facet, linear_drift: drift, scond_satisfied: ok });
    }
    Ok((reports.iter().all(|r| r.scond_satisfied), reports))
}

fn validate(structure: &MatchingStructure, measure: &ArrivalMeasure, x: &[u64], y: &[u64]) -> Result<(), AnalysisError> {
    facets::check_state(structure, x, y).map_err(|e| AnalysisError::InvalidState(e.to_string()))?;
    measure
        .check_against(structure)
        .map_err(|e| AnalysisError::InvalidState(e.to_string()))?;
    if !is_stable_structure(structure) {
        return Err(AnalysisError::UnstableStructure);
    }
    Ok(())
}

/// One arrival block that lowers `|u|` by exactly one under every
/// buffer-first policy, from a nonempty state.
pub fn drain_block(
    structure: &MatchingStructure,
    measure: &ArrivalMeasure,
    x: &[u64],
    y: &[u64],
) -> Result<Vec<(usize, usize)>, AnalysisError> {
    validate(structure, measure, x, y)?;
    let u = facets::support(x);
    if u.is_empty() {
        return Ok(Vec::new());
    }
    block_for(structure, u, facets::support(y))
}

fn block_for(structure: &MatchingStructure, u: ClassSet, v: ClassSet) -> Result<Vec<(usize, usize)>, AnalysisError> {
    let forced_c = structure.customers_of_set(v);
    let forced_s = structure.servers_of_set(u);
    for c in forced_c.iter() {
        if let Some(s) = structure.arrival_servers_of(c).intersection(forced_s).iter().next() {
            return Ok(vec![(c, s)]);
        }
    }
    // Multi-source BFS from S◎: s -> c along arrival edges, c -> s' along
    // matching edges; `parent[s']` is the arrival pair that reaches `s'`.
    let ns = structure.num_servers();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; ns];
    let mut seen = forced_s;
    let mut queue: VecDeque<usize> = forced_s.iter().collect();
    while let Some(s) = queue.pop_front() {
        for c in structure.arrival_customers_of(s).iter() {
            if forced_c.contains(c) {
                let mut path = vec![(c, s)];
                let mut cur = s;
                while let Some((pc, ps)) = parent[cur] {
                    path.push((pc, ps));
                    cur = ps;
                }
                path.reverse();
                return Ok(path);
            }
            for s2 in structure.servers_of(c).iter() {
                if !seen.contains(s2) {
                    seen = seen.with(s2);
                    parent[s2] = Some((c, s));
                    queue.push_back(s2);
                }
            }
        }
    }
    Err(AnalysisError::UnstableStructure)
}

/// Applies one arrival picking the lowest-index eligible partner.
fn apply_canonical(structure: &MatchingStructure, x: &mut [u64], y: &mut [u64], (c, s): (usize, usize)) {
    let phi = structure.customers_of(s).iter().find(|&k| x[k] > 0);
    let psi = structure.servers_of(c).iter().find(|&k| y[k] > 0);
    match (phi, psi) {
        (None, None) => {
            if !structure.is_matching_edge(c, s) {
                x[c] += 1;
                y[s] += 1;
            }
        }
        (Some(p), Some(q)) => {
            x[p] -= 1;
            y[q] -= 1;
        }
        (Some(p), None) => {
            x[p] -= 1;
            x[c] += 1;
        }
        (None, Some(q)) => {
            y[q] -= 1;
            y[s] += 1;
        }
    }
}

/// Concatenated drain blocks from `(x, y)` to the empty state, advancing
/// between blocks with lowest-index partner choices.
pub fn drain_to_empty(
    structure: &MatchingStructure,
    measure: &ArrivalMeasure,
    x: &[u64],
    y: &[u64],
) -> Result<Vec<(usize, usize)>, AnalysisError> {
    validate(structure, measure, x, y)?;
    let (mut x, mut y) = (x.to_vec(), y.to_vec());
    let mut out = Vec::new();
    while x.iter().any(|&n| n > 0) {
        let block = block_for(structure, facets::support(&x), facets::support(&y))?;
        for &a in &block {
            apply_canonical(structure, &mut x, &mut y, a);
        }
        out.extend(block);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::flow::check_ncond;
    use crate::model::fixtures::*;
    use crate::rational::ratio;

    #[test]
    fn stable_structures() {
        assert!(is_stable_structure(&nn()));
        assert!(!is_stable_structure(&nn_fanti()));
        assert!(is_stable_structure(&nn_fdiag()));
        let g = PairingDigraph::new(&nn_fdiag());
        assert_eq!(g.num_arcs(), 5 + 3);
        assert!(matches!(
            stable_structure_certificate(&nn_fanti()),
            Err(AnalysisError::NotStronglyConnected { .. })
        ));
    }

    #[test]
    fn stable_measures() {
        let mu = construct_stable_measure(&nn_fdiag()).unwrap();
        assert_eq!(mu.prob(0, 0), &ratio(2, 5));
        assert_eq!(mu.prob(1, 1), &ratio(2, 5));
        assert_eq!(mu.prob(2, 2), &ratio(1, 5));
        let single = MatchingStructure::from_indices(vec!["1".into()], vec!["1'".into()], &[(0, 0)], &[(0, 0)]).unwrap();
        assert_eq!(construct_stable_measure(&single).unwrap().prob(0, 0), &rational::one());
        assert!(matches!(
            construct_stable_measure(&nn_fanti()),
            Err(AnalysisError::NotStronglyConnected { .. })
        ));
        let mu = construct_stable_measure(&nn()).unwrap();
        assert!(check_ncond(&nn(), &mu.marginals()));
    }

    fn facet(st: &MatchingStructure, u: &[usize], v: &[usize]) -> Facet {
        facets::classify_facet(st, ClassSet::from_indices(u.iter().copied()), ClassSet::from_indices(v.iter().copied()))
            .unwrap()
    }

    #[test]
    fn drifts() {
        let st = nn();
        let mu = nn_example_measure();
        assert_eq!(linear_drift(&st, &mu, &facet(&st, &[2], &[2])).unwrap(), ratio(1, 25));
        assert_eq!(linear_drift(&st, &mu, &facet(&st, &[1], &[2])).unwrap(), ratio(-1, 5));
        let zero = facets::classify_facet(&st, ClassSet::EMPTY, ClassSet::EMPTY).unwrap();
        assert_eq!(linear_drift(&st, &mu, &zero), Err(AnalysisError::ZeroFacet));
    }

    #[test]
    fn scond_examples() {
        let st = nn();
        let p = |x: Rational, y: Rational| symmetric_product(&[x.clone(), y.clone(), rational::one() - x - y]);
        assert!(check_scond(&st, &p(ratio(9, 20), ratio(2, 5))).unwrap().0);
        let (ok, reports) = check_scond(&st, &p(ratio(2, 5), ratio(2, 5))).unwrap();
        assert!(!ok);
        let failing: Vec<_> = reports.iter().filter(|r| !r.scond_satisfied).map(|r| r.facet.key()).collect();
        assert_eq!(failing, vec![(ClassSet::singleton(2), ClassSet::singleton(2))]);
        assert!(!check_scond(&nnn(), &symmetric_product(&vec![ratio(1, 4); 4])).unwrap().0);
    }

    #[test]
    fn drain_examples() {
        let st = nn_fdiag();
        let mu = construct_stable_measure(&st).unwrap();
        assert_eq!(drain_to_empty(&st, &mu, &[1, 0, 0], &[1, 0, 0]).unwrap(), vec![(1, 1)]);
        assert!(drain_to_empty(&st, &mu, &[0, 0, 0], &[0, 0, 0]).unwrap().is_empty());
        let anti = nn_fanti();
        let mu_anti = uniform_on(3, 3, &NN_F_ANTI);
        assert_eq!(drain_to_empty(&anti, &mu_anti, &[0, 0, 1], &[0, 0, 1]), Err(AnalysisError::UnstableStructure));
        assert!(matches!(
            drain_to_empty(&st, &mu, &[1, 0, 0], &[0, 1, 0]),
            Err(AnalysisError::InvalidState(_))
        ));
        let seq = drain_to_empty(&st, &mu, &[0, 0, 3], &[0, 0, 3]).unwrap();
        assert!(seq.iter().all(|&(c, s)| st.is_arrival_edge(c, s)));
    }

    #[test]
    fn exact_solver() {
        let a = vec![vec![ratio(2, 1), ratio(1, 1)], vec![ratio(1, 1), ratio(3, 1)]];
        let x = solve_exact(a, vec![ratio(3, 1), ratio(5, 1)]).unwrap();
        assert_eq!(x, vec![ratio(4, 5), ratio(7, 5)]);
        assert!(solve_exact(vec![vec![ratio(1, 1)], vec![ratio(1, 1)]], vec![ratio(1, 1), ratio(2, 1)]).is_none());
    }
}
