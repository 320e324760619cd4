use h2sync::cases;
use h2sync::closedloop::{assemble, cross_check};
use h2sync::conditions::{check_disturbance_match, check_stabilizable, full_report};
use h2sync::graph::{random_spanning_tree_graph, reduced_spectrum_check, zero_eigenvalue_count};
use h2sync::linalg::{norm2, spectral_abscissa, Mat};
use h2sync::protocol::{synthesize, synthesize_p1, ProtocolKind};
use h2sync::sim::{simulate, Noise, SimConfig};
use h2sync::{AgentModel, CommGraph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mat(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| Mat::from_row_slice(rows, cols, &v))
}

fn random_graph(seed: u64, n: usize, extra: usize) -> CommGraph {
    random_spanning_tree_graph(&mut ChaCha8Rng::seed_from_u64(seed), n, extra)
}

fn perturbed(m: &Mat, noise: &[f64]) -> Mat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] + 1e-12 * noise[(i * m.ncols() + j) % noise.len()])
}

fn mutated_models() -> Vec<(AgentModel, CommGraph)> {
    let base = cases::triple_integrator();
    let g = cases::case1_graph();
    let mut unstable = base.clone();
    unstable.a[(0, 0)] = 1.0;
    let mut unmatched = base.clone();
    unmatched.e = Mat::from_row_slice(3, 1, &[0.0, 1.0, 1.0]);
    let mut nonminphase = base.clone();
    nonminphase.c = Mat::from_row_slice(1, 3, &[-1.0, 1.0, 0.0]);
    let broken = CommGraph::from_edges(3, &[(1, 0, 1.0)]).unwrap();
    let mut out = vec![
        (base.clone(), g.clone()),
        (unstable, g.clone()),
        (unmatched, g.clone()),
        (nonminphase, g.clone()),
        (base.clone(), broken),
        (base, cases::case2_graph()),
    ];
    let full: Vec<_> = out.iter().map(|(m, g)| (m.with_full_state(), g.clone())).collect();
    out.extend(full);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reduced_laplacian_carries_the_nonzero_spectrum(
        seed in any::<u64>(), n in 2..=15usize, extra in 0..=20usize,
    ) {
        let lp = random_graph(seed, n, extra).laplacian();
        prop_assert!(reduced_spectrum_check(&lp, 1e-8).is_ok());
        prop_assert_eq!(zero_eigenvalue_count(&lp).unwrap(), 1);
    }

    #[test]
    fn spanning_tree_existence_is_invariant_under_relabelling(
        seed in any::<u64>(), n in 2..=10usize, drop in 0..40usize,
        perm in Just((0..10usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let g = random_graph(seed, n, n);
        // deleting an edge may or may not break the tree
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = g.adjacency()[(i, j)];
                if w != 0.0 {
                    edges.push((i, j, w));
                }
            }
        }
        if !edges.is_empty() {
            edges.remove(drop % edges.len());
        }
        let g = CommGraph::from_edges(n, &edges).unwrap();
        let perm: Vec<usize> = perm.into_iter().filter(|&k| k < n).collect();
        prop_assert_eq!(g.has_spanning_tree(), g.permuted(&perm).unwrap().has_spanning_tree());
    }

    #[test]
    fn matched_disturbances_are_recovered(
        (b, r) in (2..=6usize, 1..=3usize, 1..=3usize)
            .prop_flat_map(|(n, m, w)| (mat(n, m.min(n)), mat(m.min(n), w))),
    ) {
        let e = &b * &r;
        let (ok, x) = check_disturbance_match(&b, &e).unwrap();
        prop_assert!(ok);
        prop_assert!(norm2(&(&b * x - &e)) <= 1e-9 * (1.0 + norm2(&e)));
    }

    #[test]
    fn protocol1_assemblies_agree(
        (a, b) in (1..=3usize, 1..=2usize)
            .prop_flat_map(|(n, m)| (mat(n, n), mat(n, m)))
            .prop_map(|(a, b)| {
                // shift into the closed left half plane, eigenvalues on the axis allowed
                let shift = spectral_abscissa(&a).unwrap().max(0.0);
                let n = a.nrows();
                (a - Mat::identity(n, n) * shift, b)
            })
            .prop_filter("not stabilizable", |(a, b)| check_stabilizable(a, b).unwrap()),
        seed in any::<u64>(), agents in 2..=5usize, rho in 1.0f64..6.0,
    ) {
        let n = a.nrows();
        let model = AgentModel::new(a, b.clone(), Mat::identity(n, n), b).unwrap();
        let g = random_graph(seed, agents, agents / 2);
        let real = synthesize_p1(&model, rho).unwrap();
        let (_, _, rel) = cross_check(&model, &real, &g.laplacian()).unwrap();
        prop_assert!(rel < 1e-6, "relative gap {}", rel);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn solvability_verdicts_ignore_tiny_perturbations(
        noise in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        for (model, g) in mutated_models() {
            let want = full_report(&model, &g).unwrap().failed_conditions();
            let mut m = model.clone();
            m.a = perturbed(&model.a, &noise);
            m.b = perturbed(&model.b, &noise[1..]);
            m.e = perturbed(&model.e, &noise[2..]);
            if model.c != Mat::identity(3, 3) {
                m.c = perturbed(&model.c, &noise[3..]);
            }
            let got = full_report(&m, &g).unwrap().failed_conditions();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn closed_loops_are_hurwitz_on_random_networks(
        seed in any::<u64>(), agents in 2..=8usize, rho in 1.0f64..12.0,
    ) {
        let g = random_graph(seed, agents, agents);
        let lp = g.laplacian();
        let m = cases::triple_integrator();
        for (kind, model) in [(ProtocolKind::P1, m.with_full_state()), (ProtocolKind::P2, m.clone())] {
            let real = synthesize(&model, kind, rho, None).unwrap();
            let cl = assemble(&model, &real, &lp).unwrap();
            prop_assert!(cl.spectral_abscissa().unwrap() < 0.0, "{} at rho = {}", kind, rho);
        }
    }
}

#[test]
fn protocol2_assemblies_agree_on_both_cases() {
    let m = cases::triple_integrator();
    for g in [cases::case1_graph(), cases::case2_graph()] {
        for rho in cases::RHOS {
            let real = synthesize(&m, ProtocolKind::P2, rho, Some(cases::DELTA)).unwrap();
            let (_, _, rel) = cross_check(&m, &real, &g.laplacian()).unwrap();
            assert!(rel < 1e-6, "relative gap {rel} at rho = {rho}");
        }
    }
}

#[test]
fn synthesis_and_simulation_are_deterministic() {
    let m = cases::triple_integrator();
    let a = synthesize(&m, ProtocolKind::P2, 4.0, None).unwrap();
    let b = synthesize(&m, ProtocolKind::P2, 4.0, None).unwrap();
    assert_eq!(a.to_text(), b.to_text());

    let mut cfg = SimConfig::new(m, cases::case1_graph(), a);
    cfg.t_final = 5.0;
    cfg.seed = 42;
    cfg.noise = Noise::White;
    let r1 = simulate(&cfg).unwrap();
    let r2 = simulate(&cfg).unwrap();
    assert_eq!(r1.states, r2.states);
    assert_eq!(r1.rms_sync_error.to_bits(), r2.rms_sync_error.to_bits());
    cfg.seed = 43;
    assert_ne!(simulate(&cfg).unwrap().states, r1.states);
}
