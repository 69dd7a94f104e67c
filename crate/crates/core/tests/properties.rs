mod common;

use common::*;
use matchstab::analysis;
use matchstab::chains;
use matchstab::facets;
use matchstab::flow::{self, EtaValue};
use matchstab::io::builtin_model;
use matchstab::model::{self, fixtures, ClassSet, MatchingStructure, Side};
use matchstab::policies::{BufferState, CommutativeState, Policy, PolicyKind, StepCase, WordState};
use matchstab::rational::{self, ratio, Rational};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn subsets(n: usize) -> impl Iterator<Item = ClassSet> {
    (0..1u64 << n).map(ClassSet)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rational_round_trip(n in -10_000i64..10_000, d in 1i64..10_000) {
        let r = ratio(n, d);
        prop_assert_eq!(rational::parse(&rational::to_fraction_string(&r)).unwrap(), r);
    }

    #[test]
    fn product_marginals_invert(seed: u64) {
        let mut r = rng(seed);
        let draw = |r: &mut Xoshiro256PlusPlus, n: usize| -> Vec<Rational> {
            let w: Vec<i64> = (0..n).map(|_| r.gen_range(1..50)).collect();
            let t: i64 = w.iter().sum();
            w.iter().map(|&v| ratio(v, t)).collect()
        };
        let (a, b) = (draw(&mut r, 4), draw(&mut r, 3));
        let m = model::product_measure(&a, &b).unwrap().marginals();
        prop_assert_eq!(&m.customers, &a);
        prop_assert_eq!(&m.servers, &b);
        prop_assert_eq!(m.customers.iter().sum::<Rational>(), rational::one());
        prop_assert_eq!(m.servers.iter().sum::<Rational>(), rational::one());
    }

    #[test]
    fn neighbors_monotone(seed: u64) {
        let mut r = rng(seed);
        let st = random_structure(&mut r, 5);
        let nc = st.num_customers();
        for u in subsets(nc) {
            let wider = u.with(r.gen_range(0..nc));
            prop_assert!(st.servers_of_set(u).is_subset(st.servers_of_set(wider)));
            let labels: Vec<&str> = u.iter().map(|c| st.customer_label(c)).collect();
            let named = st.neighbors(Side::Customer, &labels).unwrap();
            let expect: Vec<String> = st.servers_of_set(u).iter().map(|s| st.server_label(s).to_string()).collect();
            prop_assert_eq!(named, expect);
        }
    }

    #[test]
    fn facets_match_definition(seed: u64) {
        let st = random_structure(&mut rng(seed), 5);
        let fast = facets::enumerate_facets(&st).unwrap();
        prop_assert_eq!(&fast, &facets::enumerate_facets_bruteforce(&st).unwrap());
        let mut direct = vec![(ClassSet::EMPTY, ClassSet::EMPTY)];
        for u in subsets(st.num_customers()).skip(1) {
            for v in subsets(st.num_servers()).skip(1) {
                if !st.servers_of_set(u).intersects(v) {
                    direct.push((u, v));
                }
            }
        }
        let mut keys: Vec<_> = fast.iter().map(|f| f.key()).collect();
        keys.sort();
        direct.sort();
        prop_assert_eq!(keys, direct);
        let (all_c, all_s) = (st.all_customers(), st.all_servers());
        for f in &fast {
            let cs = [f.bullet_customers, f.forced_zero_customers, f.free_zero_customers];
            let ss = [f.bullet_servers, f.forced_zero_servers, f.free_zero_servers];
            for parts in [(cs, all_c), (ss, all_s)] {
                let (p, all) = parts;
                prop_assert_eq!(p[0].union(p[1]).union(p[2]), all);
                prop_assert!(!p[0].intersects(p[1]) && !p[0].intersects(p[2]) && !p[1].intersects(p[2]));
            }
            let again = facets::classify_facet(&st, f.bullet_customers, f.bullet_servers).unwrap();
            prop_assert_eq!(&again, f);
            prop_assert_eq!(f.is_saturated(), f.free_zero_customers.is_empty() || f.free_zero_servers.is_empty());
        }
    }

    #[test]
    fn ncond_leq_matches_bruteforce(seed: u64) {
        let mut r = rng(seed);
        let st = random_structure(&mut r, 4);
        for _ in 0..20 {
            let m = random_measure(&mut r, &st).marginals();
            prop_assert_eq!(flow::check_ncond_leq(&st, &m), flow::ncond_leq_bruteforce(&st, &m).unwrap());
            prop_assert_eq!(flow::check_ncond(&st, &m), flow::ncond_bruteforce(&st, &m).unwrap());
        }
    }

    #[test]
    fn max_flow_equals_min_cut(seed: u64) {
        let mut r = rng(seed);
        let st = random_structure(&mut r, 5);
        let m = random_measure(&mut r, &st).marginals();
        let (_, net) = flow::plain_network(&st, &m);
        let mf = net.max_flow();
        prop_assert_eq!(mf.cut_capacity(&net), mf.value.clone());
        prop_assert!(net.is_feasible(&mf.flow));
        let (_, pnet) = flow::perturbed_network(&st, &m);
        let pf = pnet.max_flow();
        prop_assert_eq!(pf.cut_capacity(&pnet), pf.value.clone());
    }

    #[test]
    fn eta_comparisons_survive_substitution(a in -50i64..50, b in -50i64..50, c in -50i64..50, d in -50i64..50) {
        let x = EtaValue::new(ratio(a, 7), ratio(b, 3));
        let y = EtaValue::new(ratio(c, 7), ratio(d, 3));
        let eta = ratio(1, 1_000_000_000);
        prop_assert_eq!(x.cmp(&y), x.at(&eta).cmp(&y.at(&eta)));
    }

    #[test]
    fn positive_flow_contract(seed: u64) {
        let mut r = rng(seed);
        let st = random_structure(&mut r, 4);
        let m = random_measure(&mut r, &st).marginals();
        match flow::positive_flow(&st, &m) {
            Ok(t) => {
                prop_assert!(flow::check_ncond(&st, &m));
                prop_assert!(t.is_conservative());
                prop_assert_eq!(t.value(), rational::one());
                prop_assert!(t.edges.iter().all(|(_, v)| v > &rational::zero()));
                prop_assert_eq!(t.edges.len(), st.num_matching_edges());
                for (c, v) in t.customers.iter().enumerate() {
                    prop_assert_eq!(v, &m.customers[c]);
                }
            }
            Err(_) => prop_assert!(!flow::check_ncond(&st, &m)),
        }
    }

    #[test]
    fn scond_implies_ncond(seed: u64) {
        let mut r = rng(seed);
        let st = random_structure(&mut r, 4);
        for _ in 0..10 {
            let mu = random_measure(&mut r, &st);
            if analysis::check_scond(&st, &mu).unwrap().0 {
                prop_assert!(flow::check_ncond(&st, &mu.marginals()));
            }
        }
    }

    #[test]
    fn stable_measure_contract(seed: u64) {
        let st = random_structure(&mut rng(seed), 4);
        match analysis::construct_stable_measure(&st) {
            Ok(mu) => {
                prop_assert!(analysis::is_stable_structure(&st));
                prop_assert!(mu.check_against(&st).is_ok());
                prop_assert!(flow::check_ncond(&st, &mu.marginals()));
            }
            Err(_) => prop_assert!(!analysis::is_stable_structure(&st)),
        }
    }

    #[test]
    fn drift_identity_on_random_structures(seed: u64) {
        let mut r = rng(seed);
        let st = random_structure(&mut r, 4);
        let mu = random_measure(&mut r, &st);
        for kind in SIX {
            let policy = build_policy(&mut r, kind, &st, &mu);
            for f in facets::enumerate_facets(&st).unwrap().iter().filter(|f| !f.is_zero()) {
                prop_assert_eq!(
                    chains::exact_one_step_drift(&st, &mu, &policy, f).unwrap(),
                    analysis::linear_drift(&st, &mu, f).unwrap()
                );
            }
        }
    }
}

fn step_is_admissible(
    st: &MatchingStructure,
    before: &CommutativeState,
    after: &CommutativeState,
    (c, s): (usize, usize),
    case: StepCase,
) -> bool {
    let partner_for_s = (0..before.x.len()).any(|k| before.x[k] > 0 && st.is_matching_edge(k, s));
    let partner_for_c = (0..before.y.len()).any(|k| before.y[k] > 0 && st.is_matching_edge(c, k));
    let expected_case = match (partner_for_s, partner_for_c) {
        (true, true) => StepCase::BothMatched,
        (true, false) => StepCase::ServerMatched,
        (false, true) => StepCase::CustomerMatched,
        (false, false) if st.is_matching_edge(c, s) => StepCase::MatchedTogether,
        (false, false) => StepCase::Stored,
    };
    let dx: i64 = after.x.iter().sum::<u64>() as i64 - before.x.iter().sum::<u64>() as i64;
    let expected_dx = match expected_case {
        StepCase::Stored => 1,
        StepCase::MatchedTogether | StepCase::ServerMatched | StepCase::CustomerMatched => 0,
        StepCase::BothMatched => -1,
    };
    case == expected_case && dx == expected_dx
}

#[test]
fn state_validity_and_buffer_first() {
    let mut r = rng(21);
    let steps = 1_000_000;
    for (st, mu) in [
        (fixtures::nn(), fixtures::nn_counterexample_measure()),
        (fixtures::nnn(), builtin_model("nnn").unwrap().measure.unwrap()),
    ] {
        let sampler = chains::ArrivalSampler::new(&mu);
        for kind in PolicyKind::ALL {
            if kind == PolicyKind::Flow && !flow::check_ncond(&st, &mu.marginals()) {
                continue;
            }
            let policy = build_policy(&mut r, kind, &st, &mu);
            let mut state = BufferState::empty(&st, kind);
            for _ in 0..steps {
                let before = state.counts(&st);
                let a = sampler.sample(&mut r);
                let case = state.apply(&st, a, &policy, &mut r).unwrap();
                let after = state.counts(&st);
                facets::facet_of_state(&st, &after.x, &after.y).unwrap();
                assert!(step_is_admissible(&st, &before, &after, a, case), "{kind:?} {before:?} {a:?} {case:?}");
                if state.total() > 60 {
                    state = BufferState::empty(&st, kind);
                }
            }
        }
    }
}

#[test]
fn word_steps_project_to_commutative_steps() {
    let mut r = rng(22);
    for (st, mu) in [
        (fixtures::nn(), fixtures::nn_example_measure()),
        (fixtures::nnn(), builtin_model("nnn").unwrap().measure.unwrap()),
    ] {
        let sampler = chains::ArrivalSampler::new(&mu);
        for kind in [PolicyKind::Fifo, PolicyKind::Lifo] {
            let mut w = WordState::empty();
            for _ in 0..200_000 {
                let before = w.commutative_image(&st);
                let (c, s) = sampler.sample(&mut r);
                let old = w.clone();
                let (case, mc, ms) = w.apply_detailed(&st, (c, s), kind).unwrap();
                let (mut x, mut y) = (before.x.clone(), before.y.clone());
                match (mc, ms) {
                    (Some(p), Some(q)) => {
                        assert!(x[p] > 0 && y[q] > 0 && st.is_matching_edge(p, s) && st.is_matching_edge(c, q));
                        x[p] -= 1;
                        y[q] -= 1;
                    }
                    (Some(p), None) => {
                        assert!(x[p] > 0 && st.is_matching_edge(p, s));
                        x[p] -= 1;
                        x[c] += 1;
                    }
                    (None, Some(q)) => {
                        assert!(y[q] > 0 && st.is_matching_edge(c, q));
                        y[q] -= 1;
                        y[s] += 1;
                    }
                    (None, None) if case == StepCase::Stored => {
                        x[c] += 1;
                        y[s] += 1;
                    }
                    (None, None) => {}
                }
                let after = w.commutative_image(&st);
                assert_eq!((after.x.clone(), after.y.clone()), (x, y), "{kind:?} {old:?} {c} {s}");
                assert!(step_is_admissible(&st, &before, &after, (c, s), case));
                if let Some(p) = mc {
                    let first = old.u.iter().position(|&k| st.is_matching_edge(k as usize, s)).unwrap();
                    let last = old.u.iter().rposition(|&k| st.is_matching_edge(k as usize, s)).unwrap();
                    let pick = if kind == PolicyKind::Fifo { first } else { last };
                    assert_eq!(old.u[pick] as usize, p);
                }
                if w.total() > 40 {
                    w = WordState::empty();
                }
            }
        }
    }
}

#[test]
fn ml_matches_longest_queue() {
    let st = fixtures::nn();
    let mu = fixtures::nn_example_measure();
    let sampler = chains::ArrivalSampler::new(&mu);
    let mut r = rng(23);
    let mut state = CommutativeState::empty(&st);
    for _ in 0..100_000 {
        let (c, s) = sampler.sample(&mut r);
        let before = state.clone();
        let next = state.clone();
        let alternatives = next.transitions(&st, (c, s), &Policy::MatchLongest).unwrap();
        state.apply(&st, (c, s), &Policy::MatchLongest, &mut r).unwrap();
        // Every admissible choice of partner classes, exhaustively.
        let phi: Vec<usize> = (0..3).filter(|&k| before.x[k] > 0 && st.is_matching_edge(k, s)).collect();
        let psi: Vec<usize> = (0..3).filter(|&k| before.y[k] > 0 && st.is_matching_edge(c, k)).collect();
        if phi.len() > 1 {
            let longest = phi.iter().map(|&k| before.x[k]).max().unwrap();
            for (_, alt) in &alternatives {
                let p = (0..3).find(|&k| alt.x[k] < before.x[k]).unwrap_or(c);
                assert_eq!(before.x[p], longest);
            }
        }
        if psi.len() > 1 {
            let longest = psi.iter().map(|&k| before.y[k]).max().unwrap();
            for (_, alt) in &alternatives {
                let q = (0..3).find(|&k| alt.y[k] < before.y[k]).unwrap_or(s);
                assert_eq!(before.y[q], longest);
            }
        }
        assert!(alternatives.iter().any(|(_, alt)| *alt == state));
        if state.total() > 50 {
            state = CommutativeState::empty(&st);
        }
    }
}

#[test]
fn drain_from_every_reachable_state() {
    let mut r = rng(24);
    for (st, mu) in [
        (fixtures::nn(), fixtures::nn_example_measure()),
        (fixtures::nnn(), analysis::construct_stable_measure(&fixtures::nnn()).unwrap()),
        (fixtures::nn_fdiag(), analysis::construct_stable_measure(&fixtures::nn_fdiag()).unwrap()),
    ] {
        let policy = build_policy(&mut r, PolicyKind::Random, &st, &mu);
        for b in chains::reach_set(&st, &mu, &policy, 4).unwrap() {
            let c = b.counts(&st);
            let seq = analysis::drain_to_empty(&st, &mu, &c.x, &c.y).unwrap();
            let (mut x, mut y) = (c.x.clone(), c.y.clone());
            for a in seq {
                apply_lowest(&st, &mut x, &mut y, a);
            }
            assert!(x.iter().chain(&y).all(|&n| n == 0), "{c:?}");
        }
    }
}

#[test]
fn estimated_drift_within_four_sigma() {
    let mut r = rng(25);
    for (st, mu) in [
        (fixtures::nn(), fixtures::nn_example_measure()),
        (fixtures::nnn(), builtin_model("nnn").unwrap().measure.unwrap()),
    ] {
        let policy = build_policy(&mut r, PolicyKind::Random, &st, &mu);
        for f in facets::enumerate_facets(&st).unwrap().iter().filter(|f| !f.is_zero()) {
            let est = chains::estimate_facet_drift(&st, &mu, &policy, f, 100_000, r.gen()).unwrap();
            let exact = rational::to_f64(&analysis::linear_drift(&st, &mu, f).unwrap());
            assert!((est.mean - exact).abs() <= 4.0 * est.std_error + 1e-12, "{:?}: {} vs {exact}", f.key(), est.mean);
        }
    }
}

#[test]
fn simulation_is_deterministic() {
    let st = fixtures::nn();
    let mu = fixtures::nn_counterexample_measure();
    for kind in PolicyKind::ALL {
        let policy = Policy::build(kind, &st, &mu, builtin_model("nn-counterexample").unwrap().priorities.as_ref()).unwrap();
        let a = chains::simulate(&st, &mu, &policy, 20_000, 99).unwrap();
        let b = chains::simulate(&st, &mu, &policy, 20_000, 99).unwrap();
        assert_eq!(a, b, "{kind:?}");
    }
}
