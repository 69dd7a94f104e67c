#![allow(dead_code)]

use std::collections::BTreeSet;

use matchstab::model::{ArrivalMeasure, ClassSet, MatchingStructure};
use matchstab::policies::{Policy, PolicyKind, Priorities};
use matchstab::rational::{self, Rational};
use rand::seq::SliceRandom;
use rand::Rng;

pub const SIX: [PolicyKind; 6] = [
    PolicyKind::Fifo,
    PolicyKind::Lifo,
    PolicyKind::Priority,
    PolicyKind::Random,
    PolicyKind::MatchLongest,
    PolicyKind::MatchShortest,
];

pub fn labels(n: usize, suffix: &str) -> Vec<String> {
    (1..=n).map(|i| format!("{i}{suffix}")).collect()
}

fn mask_edges(nc: usize, ns: usize, mask: u32) -> Vec<(usize, usize)> {
    (0..nc * ns).filter(|b| mask >> b & 1 == 1).map(|b| (b / ns, b % ns)).collect()
}

fn all_pairs(nc: usize, ns: usize) -> Vec<(usize, usize)> {
    (0..nc).flat_map(|c| (0..ns).map(move |s| (c, s))).collect()
}

pub fn structure(nc: usize, ns: usize, e: &[(usize, usize)], f: &[(usize, usize)]) -> Option<MatchingStructure> {
    MatchingStructure::from_indices(labels(nc, ""), labels(ns, "'"), e, f).ok()
}

fn canonical(nc: usize, ns: usize, mask: u32, perms_c: &[Vec<usize>], perms_s: &[Vec<usize>]) -> u32 {
    let edges = mask_edges(nc, ns, mask);
    let mut best = u32::MAX;
    for pc in perms_c {
        for ps in perms_s {
            let m = edges.iter().fold(0u32, |m, &(c, s)| m | 1 << (pc[c] * ns + ps[s]));
            best = best.min(m);
        }
    }
    best
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Every connected matching graph with at most `max` classes per side, one
/// per isomorphism class (customer and server permutations), with `F` the
/// complete bipartite graph.
pub fn connected_structures_up_to_iso(max: usize) -> Vec<MatchingStructure> {
    let mut out = Vec::new();
    for nc in 1..=max {
        for ns in 1..=max {
            let (pc, ps) = (permutations(nc), permutations(ns));
            let mut seen = BTreeSet::new();
            for mask in 1u32..1 << (nc * ns) {
                let e = mask_edges(nc, ns, mask);
                let Some(st) = structure(nc, ns, &e, &all_pairs(nc, ns)) else { continue };
                if seen.insert(canonical(nc, ns, mask, &pc, &ps)) {
                    out.push(st);
                }
            }
        }
    }
    out
}

/// A random connected structure with at most `max` classes per side and an
/// arrival graph covering every class.
pub fn random_structure<R: Rng>(rng: &mut R, max: usize) -> MatchingStructure {
    loop {
        let (nc, ns) = (rng.gen_range(1..=max), rng.gen_range(1..=max));
        let pe = rng.gen_range(0.2..0.9);
        let pf = rng.gen_range(0.2..0.9);
        let e: Vec<_> = all_pairs(nc, ns).into_iter().filter(|_| rng.gen_bool(pe)).collect();
        let f: Vec<_> = all_pairs(nc, ns).into_iter().filter(|_| rng.gen_bool(pf)).collect();
        if let Some(st) = structure(nc, ns, &e, &f) {
            return st;
        }
    }
}

/// A random measure with support exactly `F`. Small weights make ties in the
/// NCond inequalities likely.
pub fn random_measure<R: Rng>(rng: &mut R, st: &MatchingStructure) -> ArrivalMeasure {
    let hi = if rng.gen_bool(0.5) { 3 } else { 40 };
    let (nc, ns) = (st.num_customers(), st.num_servers());
    let w: Vec<Vec<i64>> = (0..nc)
        .map(|c| (0..ns).map(|s| if st.is_arrival_edge(c, s) { rng.gen_range(1..=hi) } else { 0 }).collect())
        .collect();
    let total: i64 = w.iter().flatten().sum();
    let table = w.iter().map(|r| r.iter().map(|&v| rational::ratio(v, total)).collect()).collect();
    ArrivalMeasure::for_structure(st, table).expect("weights cover F")
}

/// Strict rankings of the matching neighbours, shuffled.
pub fn random_priorities<R: Rng>(rng: &mut R, st: &MatchingStructure) -> Priorities {
    let (nc, ns) = (st.num_customers(), st.num_servers());
    let mut a = vec![vec![0u32; ns]; nc];
    let mut b = vec![vec![0u32; ns]; nc];
    for c in 0..nc {
        let mut ss: Vec<usize> = st.servers_of(c).iter().collect();
        ss.shuffle(rng);
        for (r, s) in ss.into_iter().enumerate() {
            a[c][s] = r as u32 + 1;
        }
    }
    for s in 0..ns {
        let mut cs: Vec<usize> = st.customers_of(s).iter().collect();
        cs.shuffle(rng);
        for (r, c) in cs.into_iter().enumerate() {
            b[c][s] = r as u32 + 1;
        }
    }
    Priorities::new(st, a, b).expect("rankings are valid")
}

pub fn build_policy<R: Rng>(rng: &mut R, kind: PolicyKind, st: &MatchingStructure, mu: &ArrivalMeasure) -> Policy {
    let pr = random_priorities(rng, st);
    Policy::build(kind, st, mu, Some(&pr)).expect("policy builds")
}

pub fn set(indices: &[usize]) -> ClassSet {
    ClassSet::from_indices(indices.iter().copied())
}

pub fn sym(x: Rational, y: Rational) -> ArrivalMeasure {
    let z = rational::one() - &x - &y;
    matchstab::model::fixtures::symmetric_product(&[x, y, z])
}

/// All vectors of length `n` with entries summing to `total`.
pub fn compositions(n: usize, total: u64) -> Vec<Vec<u64>> {
    if n == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|first| {
            compositions(n - 1, total - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

/// Whether a perfect matching of counts exists, by exhaustive assignment of
/// each customer unit to an adjacent server unit.
pub fn perfect_matching_bruteforce(st: &MatchingStructure, x: &[u64], y: &[u64]) -> bool {
    fn go(st: &MatchingStructure, x: &mut [u64], y: &mut [u64]) -> bool {
        let Some(c) = x.iter().position(|&n| n > 0) else { return y.iter().all(|&n| n == 0) };
        for s in st.servers_of(c).iter() {
            if y[s] > 0 {
                x[c] -= 1;
                y[s] -= 1;
                let ok = go(st, x, y);
                x[c] += 1;
                y[s] += 1;
                if ok {
                    return true;
                }
            }
        }
        false
    }
    go(st, &mut x.to_vec(), &mut y.to_vec())
}

/// Applies one arrival to counts picking the lowest-index eligible partner.
pub fn apply_lowest(st: &MatchingStructure, x: &mut [u64], y: &mut [u64], (c, s): (usize, usize)) {
    let phi = (0..x.len()).find(|&k| x[k] > 0 && st.is_matching_edge(k, s));
    let psi = (0..y.len()).find(|&k| y[k] > 0 && st.is_matching_edge(c, k));
    match (phi, psi) {
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
        (None, None) => {
            if !st.is_matching_edge(c, s) {
                x[c] += 1;
                y[s] += 1;
            }
        }
    }
}
