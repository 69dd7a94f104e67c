//! Facets: the regions of the state space indexed by which classes are
//! present in the buffer.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{ClassSet, MatchingStructure};

/// Facet enumeration is exponential; refuse larger graphs.
pub const MAX_FACET_CLASSES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FacetError {
    #[error("not a facet: ({0}, {1}) is a matching edge")]
    NotAFacet(String, String),
    #[error("a facet has both sides empty or both sides non-empty")]
    MixedEmptiness,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("facet enumeration is limited to {MAX_FACET_CLASSES} classes per side")]
    TooLarge,
}

/// Six-set classification of a facet `(U, V)`.
///
/// `bullet_*` classes are present in the buffer, `forced_zero_*` are matchable
/// with a present class, `free_zero_*` are everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Facet {
    pub bullet_customers: ClassSet,
    pub bullet_servers: ClassSet,
    pub forced_zero_customers: ClassSet,
    pub forced_zero_servers: ClassSet,
    pub free_zero_customers: ClassSet,
    pub free_zero_servers: ClassSet,
}

impl Facet {
    pub fn is_zero(&self) -> bool {
        self.bullet_customers.is_empty()
    }

    pub fn is_saturated(&self) -> bool {
        self.free_zero_customers.is_empty() || self.free_zero_servers.is_empty()
    }

    /// Deduplication key; the other four sets are derived from it.
    pub fn key(&self) -> (ClassSet, ClassSet) {
        (self.bullet_customers, self.bullet_servers)
    }
}

pub fn is_saturated(facet: &Facet) -> bool {
    facet.is_saturated()
}

/// Classification without validity checks; callers guarantee `U x V` avoids `E`.
pub(crate) fn classify_unchecked(structure: &MatchingStructure, u: ClassSet, v: ClassSet) -> Facet {
    let forced_c = structure.customers_of_set(v);
    let forced_s = structure.servers_of_set(u);
    Facet {
        bullet_customers: u,
        bullet_servers: v,
        forced_zero_customers: forced_c,
        forced_zero_servers: forced_s,
        free_zero_customers: structure.all_customers().difference(u).difference(forced_c),
        free_zero_servers: structure.all_servers().difference(v).difference(forced_s),
    }
}

pub fn classify_facet(structure: &MatchingStructure, u: ClassSet, v: ClassSet) -> Result<Facet, FacetError> {
    if u.is_empty() != v.is_empty() {
        return Err(FacetError::MixedEmptiness);
    }
    for c in u.iter() {
        if let Some(s) = structure.servers_of(c).intersection(v).iter().next() {
            return Err(FacetError::NotAFacet(
                structure.customer_label(c).to_string(),
                structure.server_label(s).to_string(),
            ));
        }
    }
    Ok(classify_unchecked(structure, u, v))
}

fn check_size(structure: &MatchingStructure) -> Result<(), FacetError> {
    if structure.num_customers() > MAX_FACET_CLASSES || structure.num_servers() > MAX_FACET_CLASSES {
        return Err(FacetError::TooLarge);
    }
    Ok(())
}

/// All facets, built by repeatedly merging facets that share a side.
///
/// Starts from the non-edges `({i}, {j})`; each round merges distinct pairs of
/// the previous round's facets having equal customer or equal server sides.
/// Terminates when a round yields nothing new. The zero facet is appended.
/// Result is sorted by `(customer mask, server mask)`.
pub fn enumerate_facets(structure: &MatchingStructure) -> Result<Vec<Facet>, FacetError> {
    check_size(structure)?;
    let mut found: BTreeSet<(ClassSet, ClassSet)> = BTreeSet::new();
    let mut fresh: BTreeSet<(ClassSet, ClassSet)> = BTreeSet::new();
    for c in 0..structure.num_customers() {
        for s in structure.all_servers().difference(structure.servers_of(c)).iter() {
            fresh.insert((ClassSet::singleton(c), ClassSet::singleton(s)));
        }
    }
    while !fresh.is_empty() {
        found.extend(fresh.iter().copied());
        let old: Vec<_> = fresh.into_iter().collect();
        fresh = BTreeSet::new();
        for (i, h) in old.iter().enumerate() {
            for k in &old[i + 1..] {
                if h.0 == k.0 || h.1 == k.1 {
                    let merged = (h.0.union(k.0), h.1.union(k.1));
                    if !found.contains(&merged) {
                        fresh.insert(merged);
                    }
                }
            }
        }
    }
    found.insert((ClassSet::EMPTY, ClassSet::EMPTY));
    Ok(found.into_iter().map(|(u, v)| classify_unchecked(structure, u, v)).collect())
}

/// Direct enumeration of every `(U, V)` with `U x V` disjoint from `E`.
pub fn enumerate_facets_bruteforce(structure: &MatchingStructure) -> Result<Vec<Facet>, FacetError> {
    check_size(structure)?;
    let mut out = vec![classify_unchecked(structure, ClassSet::EMPTY, ClassSet::EMPTY)];
    for u in 1..=structure.all_customers().0 {
        let u = ClassSet(u);
        let blocked = structure.servers_of_set(u);
        for v in 1..=structure.all_servers().0 {
            let v = ClassSet(v);
            if !v.intersects(blocked) {
                out.push(classify_unchecked(structure, u, v));
            }
        }
    }
    out.sort_by_key(|f| f.key());
    Ok(out)
}

/// Checks `sum x = sum y` and `x_c y_s = 0` on `E`.
pub fn check_state(structure: &MatchingStructure, x: &[u64], y: &[u64]) -> Result<(), FacetError> {
    if x.len() != structure.num_customers() || y.len() != structure.num_servers() {
        return Err(FacetError::InvalidState("wrong vector length".into()));
    }
    let (tx, ty): (u64, u64) = (x.iter().sum(), y.iter().sum());
    if tx != ty {
        return Err(FacetError::InvalidState(format!("{tx} customers but {ty} servers")));
    }
    for (c, &xc) in x.iter().enumerate() {
        if xc == 0 {
            continue;
        }
        for s in structure.servers_of(c).iter() {
            if y[s] > 0 {
                return Err(FacetError::InvalidState(format!(
                    "matchable pair ({}, {}) both buffered",
                    structure.customer_label(c),
                    structure.server_label(s)
                )));
            }
        }
    }
    Ok(())
}

pub fn support(counts: &[u64]) -> ClassSet {
    ClassSet::from_indices(counts.iter().enumerate().filter(|(_, &n)| n > 0).map(|(i, _)| i))
}

pub fn facet_of_state(structure: &MatchingStructure, x: &[u64], y: &[u64]) -> Result<Facet, FacetError> {
    check_state(structure, x, y)?;
    Ok(classify_unchecked(structure, support(x), support(y)))
}
