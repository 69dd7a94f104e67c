//! Matching structures `(C, S, E, F)` and arrival measures on `C x S`.

use std::fmt;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::rational::{self, Rational};

/// Maximum number of classes on either side; sets are `u64` bitmasks.
pub const MAX_CLASSES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("the matching graph (C, S, E) is not connected: {0}")]
    DisconnectedMatchingGraph(String),
    #[error("class `{0}` has no arrival edge")]
    IsolatedArrivalVertex(String),
    #[error("edge ({0}, {1}) refers to an unknown class")]
    DanglingEdge(String, String),
    #[error("duplicate class label `{0}`")]
    DuplicateLabel(String),
    #[error("empty class set on the {0} side")]
    EmptySide(&'static str),
    #[error("at most {MAX_CLASSES} classes per side are supported, got {0}")]
    TooManyClasses(usize),
    #[error("class label `{0}` is not allowed (labels must be non-empty and avoid `|`)")]
    BadLabel(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("measure support does not match the arrival graph: {0}")]
    SupportMismatch(String),
    #[error("measure table has shape {0}x{1}, expected {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Customer,
    Server,
}

/// A subset of classes on one side, as a bitmask over the canonical order.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassSet(pub u64);

impl ClassSet {
    pub const EMPTY: ClassSet = ClassSet(0);

    pub fn full(n: usize) -> ClassSet {
        if n >= 64 {
            ClassSet(u64::MAX)
        } else {
            ClassSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(i: usize) -> ClassSet {
        ClassSet(1u64 << i)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> ClassSet {
        indices.into_iter().fold(ClassSet::EMPTY, |acc, i| acc.with(i))
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    #[inline]
    pub fn with(self, i: usize) -> ClassSet {
        ClassSet(self.0 | 1u64 << i)
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn union(self, other: ClassSet) -> ClassSet {
        ClassSet(self.0 | other.0)
    }

    #[inline]
    pub fn intersection(self, other: ClassSet) -> ClassSet {
        ClassSet(self.0 & other.0)
    }

    #[inline]
    pub fn difference(self, other: ClassSet) -> ClassSet {
        ClassSet(self.0 & !other.0)
    }

    #[inline]
    pub fn intersects(self, other: ClassSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset(self, other: ClassSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

impl fmt::Debug for ClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Unvalidated input for [`MatchingStructure::new`].
#[derive(Debug, Clone, Default)]
pub struct RawStructure {
    pub customers: Vec<String>,
    pub servers: Vec<String>,
    pub matching_edges: Vec<(String, String)>,
    pub arrival_edges: Vec<(String, String)>,
}

/// A validated bipartite matching structure.
///
/// Classes are identified by their index in the canonical (input) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingStructure {
    customers: Vec<String>,
    servers: Vec<String>,
    /// `S(c)` for every customer.
    servers_of: Vec<ClassSet>,
    /// `C(s)` for every server.
    customers_of: Vec<ClassSet>,
    /// Arrival graph rows: `{s : (c, s) in F}` for every customer.
    arrivals_of: Vec<ClassSet>,
}

fn check_labels(labels: &[String], side: &'static str) -> Result<(), ModelError> {
    if labels.is_empty() {
        return Err(ModelError::EmptySide(side));
    }
    if labels.len() > MAX_CLASSES {
        return Err(ModelError::TooManyClasses(labels.len()));
    }
    for (i, l) in labels.iter().enumerate() {
        if l.is_empty() || l.contains('|') {
            return Err(ModelError::BadLabel(l.clone()));
        }
        if labels[..i].contains(l) {
            return Err(ModelError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

impl MatchingStructure {
    pub fn new(raw: RawStructure) -> Result<Self, ModelError> {
        check_labels(&raw.customers, "customer")?;
        check_labels(&raw.servers, "server")?;
        let index = |labels: &[String], l: &str| labels.iter().position(|x| x == l);
        let resolve = |(c, s): &(String, String)| match (
            index(&raw.customers, c),
            index(&raw.servers, s),
        ) {
            (Some(ci), Some(si)) => Ok((ci, si)),
            _ => Err(ModelError::DanglingEdge(c.clone(), s.clone())),
        };
        let e: Vec<(usize, usize)> = raw.matching_edges.iter().map(resolve).collect::<Result<_, _>>()?;
        let f: Vec<(usize, usize)> = raw.arrival_edges.iter().map(resolve).collect::<Result<_, _>>()?;
        Self::from_indices(raw.customers, raw.servers, &e, &f)
    }

    /// Builds a structure from index pairs; labels are validated as in [`MatchingStructure::new`].
    pub fn from_indices(
        customers: Vec<String>,
        servers: Vec<String>,
        matching_edges: &[(usize, usize)],
        arrival_edges: &[(usize, usize)],
    ) -> Result<Self, ModelError> {
        check_labels(&customers, "customer")?;
        check_labels(&servers, "server")?;
        let (nc, ns) = (customers.len(), servers.len());
        let mut servers_of = vec![ClassSet::EMPTY; nc];
        let mut customers_of = vec![ClassSet::EMPTY; ns];
        let mut arrivals_of = vec![ClassSet::EMPTY; nc];
        let mut arrival_cols = ClassSet::EMPTY;
        for &(c, s) in matching_edges.iter().chain(arrival_edges) {
            if c >= nc || s >= ns {
                return Err(ModelError::DanglingEdge(c.to_string(), s.to_string()));
            }
        }
        for &(c, s) in matching_edges {
            servers_of[c] = servers_of[c].with(s);
            customers_of[s] = customers_of[s].with(c);
        }
        for &(c, s) in arrival_edges {
            arrivals_of[c] = arrivals_of[c].with(s);
            arrival_cols = arrival_cols.with(s);
        }
        let structure = MatchingStructure { customers, servers, servers_of, customers_of, arrivals_of };
        structure.check_connected()?;
        for c in 0..nc {
            if structure.arrivals_of[c].is_empty() {
                return Err(ModelError::IsolatedArrivalVertex(structure.customers[c].clone()));
            }
        }
        for s in 0..ns {
            if !arrival_cols.contains(s) {
                return Err(ModelError::IsolatedArrivalVertex(structure.servers[s].clone()));
            }
        }
        Ok(structure)
    }

    fn check_connected(&self) -> Result<(), ModelError> {
        let (nc, ns) = (self.num_customers(), self.num_servers());
        let mut seen_c = ClassSet::singleton(0);
        let mut seen_s = ClassSet::EMPTY;
        loop {
            let next_s = seen_s.union(self.servers_of_set(seen_c));
            let next_c = seen_c.union(self.customers_of_set(next_s));
            if next_s == seen_s && next_c == seen_c {
                break;
            }
            seen_s = next_s;
            seen_c = next_c;
        }
        if seen_c != ClassSet::full(nc) || seen_s != ClassSet::full(ns) {
            let missing = ClassSet::full(nc)
                .difference(seen_c)
                .iter()
                .map(|c| self.customers[c].clone())
                .chain(ClassSet::full(ns).difference(seen_s).iter().map(|s| self.servers[s].clone()))
                .collect::<Vec<_>>();
            return Err(ModelError::DisconnectedMatchingGraph(format!(
                "classes {{{}}} unreachable from `{}`",
                missing.join(","),
                self.customers[0]
            )));
        }
        Ok(())
    }

    /// Same matching graph, arrival graph replaced. Revalidates.
    pub fn with_arrival_edges(&self, arrival_edges: &[(usize, usize)]) -> Result<Self, ModelError> {
        Self::from_indices(self.customers.clone(), self.servers.clone(), &self.matching_edges(), arrival_edges)
    }

    /// Same matching graph, arrivals set to the support of `measure`.
    pub fn with_arrivals_from(&self, measure: &ArrivalMeasure) -> Result<Self, ModelError> {
        self.with_arrival_edges(&measure.support())
    }

    pub fn num_customers(&self) -> usize {
        self.customers.len()
    }

    pub fn num_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn customers(&self) -> &[String] {
        &self.customers
    }

    pub fn servers(&self) -> &[String] {
        &self.servers
    }

    pub fn customer_label(&self, c: usize) -> &str {
        &self.customers[c]
    }

    pub fn server_label(&self, s: usize) -> &str {
        &self.servers[s]
    }

    pub fn customer_index(&self, label: &str) -> Option<usize> {
        self.customers.iter().position(|l| l == label)
    }

    pub fn server_index(&self, label: &str) -> Option<usize> {
        self.servers.iter().position(|l| l == label)
    }

    pub fn all_customers(&self) -> ClassSet {
        ClassSet::full(self.num_customers())
    }

    pub fn all_servers(&self) -> ClassSet {
        ClassSet::full(self.num_servers())
    }

    /// `S(c)`.
    #[inline]
    pub fn servers_of(&self, c: usize) -> ClassSet {
        self.servers_of[c]
    }

    /// `C(s)`.
    #[inline]
    pub fn customers_of(&self, s: usize) -> ClassSet {
        self.customers_of[s]
    }

    /// `S(U)`.
    pub fn servers_of_set(&self, u: ClassSet) -> ClassSet {
        u.iter().fold(ClassSet::EMPTY, |acc, c| acc.union(self.servers_of[c]))
    }

    /// `C(V)`.
    pub fn customers_of_set(&self, v: ClassSet) -> ClassSet {
        v.iter().fold(ClassSet::EMPTY, |acc, s| acc.union(self.customers_of[s]))
    }

    #[inline]
    pub fn is_matching_edge(&self, c: usize, s: usize) -> bool {
        self.servers_of[c].contains(s)
    }

    pub fn is_arrival_edge(&self, c: usize, s: usize) -> bool {
        self.arrivals_of[c].contains(s)
    }

    /// Arrival graph row of customer `c`.
    pub fn arrival_servers_of(&self, c: usize) -> ClassSet {
        self.arrivals_of[c]
    }

    /// Customers `c` with `(c, s)` in `F`.
    pub fn arrival_customers_of(&self, s: usize) -> ClassSet {
        ClassSet::from_indices((0..self.num_customers()).filter(|&c| self.arrivals_of[c].contains(s)))
    }

    /// E in canonical (customer-major) order.
    pub fn matching_edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_customers())
            .flat_map(|c| self.servers_of[c].iter().map(move |s| (c, s)))
            .collect()
    }

    /// F in canonical order.
    pub fn arrival_edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_customers())
            .flat_map(|c| self.arrivals_of[c].iter().map(move |s| (c, s)))
            .collect()
    }

    pub fn num_matching_edges(&self) -> usize {
        self.servers_of.iter().map(|s| s.len()).sum()
    }

    /// `S(U)` or `C(V)` for a subset given by labels.
    pub fn neighbors(&self, side: Side, subset: &[&str]) -> Result<Vec<String>, ModelError> {
        match side {
            Side::Customer => {
                let mut u = ClassSet::EMPTY;
                for l in subset {
                    u = u.with(self.customer_index(l).ok_or_else(|| ModelError::UnknownClass(l.to_string()))?);
                }
                Ok(self.servers_of_set(u).iter().map(|s| self.servers[s].clone()).collect())
            }
            Side::Server => {
                let mut v = ClassSet::EMPTY;
                for l in subset {
                    v = v.with(self.server_index(l).ok_or_else(|| ModelError::UnknownClass(l.to_string()))?);
                }
                Ok(self.customers_of_set(v).iter().map(|c| self.customers[c].clone()).collect())
            }
        }
    }

    pub fn format_customers(&self, set: ClassSet) -> String {
        format!("{{{}}}", set.iter().map(|c| self.customers[c].as_str()).collect::<Vec<_>>().join(","))
    }

    pub fn format_servers(&self, set: ClassSet) -> String {
        format!("{{{}}}", set.iter().map(|s| self.servers[s].as_str()).collect::<Vec<_>>().join(","))
    }
}

/// Exact probability table on `C x S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalMeasure {
    table: Vec<Vec<Rational>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marginals {
    pub customers: Vec<Rational>,
    pub servers: Vec<Rational>,
}

impl Marginals {
    pub fn customer_mass(&self, u: ClassSet) -> Rational {
        u.iter().map(|c| &self.customers[c]).sum()
    }

    pub fn server_mass(&self, v: ClassSet) -> Rational {
        v.iter().map(|s| &self.servers[s]).sum()
    }
}

impl ArrivalMeasure {
    /// Validates nonnegativity, total mass 1 and full-support marginals.
    pub fn new(table: Vec<Vec<Rational>>) -> Result<Self, ModelError> {
        if table.is_empty() || table[0].is_empty() {
            return Err(ModelError::NotADistribution("empty table".into()));
        }
        let ns = table[0].len();
        if table.iter().any(|r| r.len() != ns) {
            return Err(ModelError::NotADistribution("ragged table".into()));
        }
        if table.iter().flatten().any(|p| p.is_negative()) {
            return Err(ModelError::NotADistribution("negative entry".into()));
        }
        let total: Rational = table.iter().flatten().sum();
        if total != rational::one() {
            return Err(ModelError::NotADistribution(format!(
                "total mass {} != 1",
                rational::to_fraction_string(&total)
            )));
        }
        let m = ArrivalMeasure { table };
        let marg = m.marginals();
        if let Some(c) = marg.customers.iter().position(|p| p.is_zero()) {
            return Err(ModelError::NotADistribution(format!("customer marginal {c} is zero")));
        }
        if let Some(s) = marg.servers.iter().position(|p| p.is_zero()) {
            return Err(ModelError::NotADistribution(format!("server marginal {s} is zero")));
        }
        Ok(m)
    }

    /// Validates and checks `supp(mu) = F` for `structure`.
    pub fn for_structure(structure: &MatchingStructure, table: Vec<Vec<Rational>>) -> Result<Self, ModelError> {
        let m = Self::new(table)?;
        m.check_against(structure)?;
        Ok(m)
    }

    pub fn check_against(&self, structure: &MatchingStructure) -> Result<(), ModelError> {
        let (nc, ns) = (structure.num_customers(), structure.num_servers());
        if self.num_customers() != nc || self.num_servers() != ns {
            return Err(ModelError::ShapeMismatch(self.num_customers(), self.num_servers(), nc, ns));
        }
        for c in 0..nc {
            for s in 0..ns {
                if self.table[c][s].is_zero() == structure.is_arrival_edge(c, s) {
                    return Err(ModelError::SupportMismatch(format!(
                        "({}, {}) has mass {} but {} an arrival edge",
                        structure.customer_label(c),
                        structure.server_label(s),
                        rational::to_fraction_string(&self.table[c][s]),
                        if structure.is_arrival_edge(c, s) { "is" } else { "is not" }
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_customers(&self) -> usize {
        self.table.len()
    }

    pub fn num_servers(&self) -> usize {
        self.table[0].len()
    }

    #[inline]
    pub fn prob(&self, c: usize, s: usize) -> &Rational {
        &self.table[c][s]
    }

    pub fn table(&self) -> &[Vec<Rational>] {
        &self.table
    }

    /// Pairs with positive mass, canonical order.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (c, row) in self.table.iter().enumerate() {
            for (s, p) in row.iter().enumerate() {
                if !p.is_zero() {
                    out.push((c, s));
                }
            }
        }
        out
    }

    /// `mu(U x V)`.
    pub fn mass(&self, u: ClassSet, v: ClassSet) -> Rational {
        u.iter().flat_map(|c| v.iter().map(move |s| (c, s))).map(|(c, s)| &self.table[c][s]).sum()
    }

    pub fn marginals(&self) -> Marginals {
        let ns = self.num_servers();
        let customers = self.table.iter().map(|r| r.iter().sum()).collect();
        let servers = (0..ns).map(|s| self.table.iter().map(|r| &r[s]).sum()).collect();
        Marginals { customers, servers }
    }
}

fn check_distribution(v: &[Rational], what: &str) -> Result<(), ModelError> {
    if v.is_empty() {
        return Err(ModelError::NotADistribution(format!("{what} is empty")));
    }
    if v.iter().any(|p| !p.is_positive()) {
        return Err(ModelError::NotADistribution(format!("{what} has a non-positive entry")));
    }
    let total: Rational = v.iter().sum();
    if total != rational::one() {
        return Err(ModelError::NotADistribution(format!(
            "{what} sums to {}",
            rational::to_fraction_string(&total)
        )));
    }
    Ok(())
}

/// `mu(c, s) = mu_C(c) mu_S(s)`; the implied arrival graph is `C x S`.
pub fn product_measure(customer_marginal: &[Rational], server_marginal: &[Rational]) -> Result<ArrivalMeasure, ModelError> {
    check_distribution(customer_marginal, "customer marginal")?;
    check_distribution(server_marginal, "server marginal")?;
    let table = customer_marginal
        .iter()
        .map(|a| server_marginal.iter().map(|b| a * b).collect())
        .collect();
    ArrivalMeasure::new(table)
}

pub fn marginals(measure: &ArrivalMeasure) -> Marginals {
    measure.marginals()
}

/// Canonical fixtures.
pub mod fixtures {
    use super::*;

    fn labels(prefix_free: &[&str]) -> Vec<String> {
        prefix_free.iter().map(|s| s.to_string()).collect()
    }

    fn full(nc: usize, ns: usize) -> Vec<(usize, usize)> {
        (0..nc).flat_map(|c| (0..ns).map(move |s| (c, s))).collect()
    }

    /// NN matching graph edges, 0-based: (1,2'),(1,3'),(2,1'),(2,2'),(3,1').
    pub const NN_EDGES: [(usize, usize); 5] = [(0, 1), (0, 2), (1, 0), (1, 1), (2, 0)];

    /// NNN matching graph edges: a path 1-1'-... with (i,i') and (i,(i+1)').
    pub const NNN_EDGES: [(usize, usize); 7] = [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3)];

    pub const NN_F_ANTI: [(usize, usize); 3] = [(0, 2), (1, 1), (2, 0)];
    pub const NN_F_DIAG: [(usize, usize); 3] = [(0, 0), (1, 1), (2, 2)];

    fn nn_with(arrivals: &[(usize, usize)]) -> MatchingStructure {
        MatchingStructure::from_indices(labels(&["1", "2", "3"]), labels(&["1'", "2'", "3'"]), &NN_EDGES, arrivals)
            .expect("NN fixture is valid")
    }

    /// NN graph with `F = C x S`.
    pub fn nn() -> MatchingStructure {
        nn_with(&full(3, 3))
    }

    pub fn nn_fanti() -> MatchingStructure {
        nn_with(&NN_F_ANTI)
    }

    pub fn nn_fdiag() -> MatchingStructure {
        nn_with(&NN_F_DIAG)
    }

    /// NNN graph with `F = C x S`.
    pub fn nnn() -> MatchingStructure {
        MatchingStructure::from_indices(
            labels(&["1", "2", "3", "4"]),
            labels(&["1'", "2'", "3'", "4'"]),
            &NNN_EDGES,
            &full(4, 4),
        )
        .expect("NNN fixture is valid")
    }

    /// Symmetric product measure `p x p` on a square structure with `F = C x S`.
    pub fn symmetric_product(p: &[Rational]) -> ArrivalMeasure {
        product_measure(p, p).expect("valid marginal")
    }

    /// The measure with marginals `(2/5, 2/5, 1/5)` on both sides.
    pub fn nn_example_measure() -> ArrivalMeasure {
        symmetric_product(&[rational::ratio(2, 5), rational::ratio(2, 5), rational::ratio(1, 5)])
    }

    /// The measure with marginals `(1/3, 2/5, 4/15)` on both sides.
    pub fn nn_counterexample_measure() -> ArrivalMeasure {
        symmetric_product(&[rational::ratio(1, 3), rational::ratio(2, 5), rational::ratio(4, 15)])
    }

    /// Uniform measure on the given support of an `nc x ns` table.
    pub fn uniform_on(nc: usize, ns: usize, support: &[(usize, usize)]) -> ArrivalMeasure {
        let mut table = vec![vec![rational::zero(); ns]; nc];
        let p = rational::ratio(1, support.len() as i64);
        for &(c, s) in support {
            table[c][s] = p.clone();
        }
        ArrivalMeasure::new(table).expect("uniform measure is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::rational::ratio;
    use proptest::prelude::*;

    fn raw_nn() -> RawStructure {
        let s = |x: &str| x.to_string();
        RawStructure {
            customers: vec![s("1"), s("2"), s("3")],
            servers: vec![s("1'"), s("2'"), s("3'")],
            matching_edges: [("1", "2'"), ("1", "3'"), ("2", "1'"), ("2", "2'"), ("3", "1'")]
                .iter()
                .map(|(a, b)| (s(a), s(b)))
                .collect(),
            arrival_edges: ["1", "2", "3"]
                .iter()
                .flat_map(|c| ["1'", "2'", "3'"].iter().map(move |v| (s(c), s(v))))
                .collect(),
        }
    }

    #[test]
    fn nn_fixture_is_accepted() {
        let st = MatchingStructure::new(raw_nn()).unwrap();
        assert_eq!(st, nn());
        assert_eq!(st.num_matching_edges(), 5);
    }

    #[test]
    fn removing_edge_3_1_disconnects() {
        let mut raw = raw_nn();
        raw.matching_edges.retain(|(c, s)| !(c == "3" && s == "1'"));
        assert!(matches!(MatchingStructure::new(raw), Err(ModelError::DisconnectedMatchingGraph(_))));
    }

    #[test]
    fn class_without_arrival_edge_is_rejected() {
        let mut raw = raw_nn();
        raw.arrival_edges = vec![("1".into(), "1'".into()), ("2".into(), "2'".into())];
        assert_eq!(MatchingStructure::new(raw), Err(ModelError::IsolatedArrivalVertex("3".into())));
    }

    #[test]
    fn dangling_and_duplicate_labels() {
        let mut raw = raw_nn();
        raw.matching_edges.push(("9".into(), "1'".into()));
        assert!(matches!(MatchingStructure::new(raw), Err(ModelError::DanglingEdge(..))));
        let mut raw = raw_nn();
        raw.customers[2] = "1".into();
        assert!(matches!(MatchingStructure::new(raw), Err(ModelError::DuplicateLabel(_))));
    }

    #[test]
    fn neighbor_sets() {
        let st = nn();
        assert_eq!(st.neighbors(Side::Customer, &["3"]).unwrap(), vec!["1'"]);
        assert_eq!(st.neighbors(Side::Server, &["3'"]).unwrap(), vec!["1"]);
        assert!(st.neighbors(Side::Customer, &[]).unwrap().is_empty());
        assert_eq!(st.neighbors(Side::Server, &["x"]), Err(ModelError::UnknownClass("x".into())));
    }

    #[test]
    fn marginals_of_fixture_measures() {
        let m = nn_example_measure().marginals();
        let p = vec![ratio(2, 5), ratio(2, 5), ratio(1, 5)];
        assert_eq!(m.customers, p);
        assert_eq!(m.servers, p);

        let u = uniform_on(3, 3, &NN_F_ANTI).marginals();
        assert_eq!(u.customers, vec![ratio(1, 3); 3]);
        assert_eq!(u.servers, vec![ratio(1, 3); 3]);

        let q = vec![ratio(1, 3), ratio(2, 5), ratio(4, 15)];
        let m = nn_counterexample_measure().marginals();
        assert_eq!(m.customers, q);
        assert_eq!(m.servers, q);
    }

    #[test]
    fn product_measure_entries() {
        assert_eq!(nn_example_measure().prob(1, 1), &ratio(4, 25));
        assert_eq!(nn_counterexample_measure().prob(2, 1), &ratio(8, 75));
        let single = product_measure(&[ratio(1, 1)], &[ratio(1, 1)]).unwrap();
        assert_eq!(single.prob(0, 0), &ratio(1, 1));
        assert!(matches!(
            product_measure(&[ratio(1, 2)], &[ratio(1, 1)]),
            Err(ModelError::NotADistribution(_))
        ));
        assert!(matches!(
            product_measure(&[ratio(1, 1), ratio(0, 1)], &[ratio(1, 1)]),
            Err(ModelError::NotADistribution(_))
        ));
    }

    #[test]
    fn support_must_match_arrival_graph() {
        let fanti = nn_fanti();
        assert!(nn_example_measure().check_against(&fanti).is_err());
        assert!(uniform_on(3, 3, &NN_F_ANTI).check_against(&fanti).is_ok());
        assert_eq!(nn().with_arrivals_from(&uniform_on(3, 3, &NN_F_ANTI)).unwrap(), fanti);
    }

    fn distribution(n: usize) -> impl Strategy<Value = Vec<Rational>> {
        proptest::collection::vec(1i64..50, n).prop_map(|w| {
            let total: i64 = w.iter().sum();
            w.into_iter().map(|x| ratio(x, total)).collect()
        })
    }

    proptest! {
        #[test]
        fn product_marginals_invert(a in distribution(3), b in distribution(4)) {
            let m = product_measure(&a, &b).unwrap().marginals();
            prop_assert_eq!(&m.customers, &a);
            prop_assert_eq!(&m.servers, &b);
            let one = rational::one();
            prop_assert_eq!(m.customers.iter().sum::<Rational>(), one.clone());
            prop_assert_eq!(m.servers.iter().sum::<Rational>(), one);
        }

        #[test]
        fn neighbors_are_monotone(u in 0u64..8, extra in 0u64..8) {
            let st = nnn();
            let small = ClassSet(u);
            let big = ClassSet(u | extra);
            prop_assert!(st.servers_of_set(small).is_subset(st.servers_of_set(big)));
            prop_assert!(st.customers_of_set(small).is_subset(st.customers_of_set(big)));
        }
    }
}
