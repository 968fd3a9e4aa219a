use cachecast::gf::Field;
use cachecast::network::{fixture, load_topology, CostFamily, Instance, NetworkBuilder, Scenario, Units, FIXTURES};
use cachecast::optimizer::{
    avg_kappa, edge_loads, grad_kappa, grad_mu, kkt_residual, objective, round, solve, step, FlowState, SolverConfig,
};
use cachecast::Parallelism;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: u32 = 20;

fn experiment_b(name: &str) -> f64 {
    match name {
        "butterfly" => 3.6,
        "service" => 5.0,
        _ => 6.0,
    }
}

fn fixture_instance(name: &str, scenario: Scenario, cache: CostFamily) -> Instance {
    let net = load_topology(fixture(name).unwrap()).unwrap();
    Instance::preset(net.with_scenario(scenario).with_cache_cost(cache), experiment_b(name), 100).unwrap()
}

/// S -> D, mm1 capacity 2, one destination.
fn single_edge(rounds: usize, sparsity: f64, dest_cache: Option<CostFamily>) -> Instance {
    let mut b = NetworkBuilder::new(2, 1).edge(0, 1, 2.0);
    if let Some(cost) = dest_cache {
        b = b.cache(1, cost);
    }
    Instance::new(b.build().unwrap(), 1.0, sparsity, rounds, Field::new(2).unwrap(), Units::Raw).unwrap()
}

/// Random interior state: every flow strictly positive and every load at
/// most ~half the capacity; `κ` strictly inside (0, 1) where eligible.
fn random_state(inst: &Instance, rng: &mut ChaCha8Rng) -> FlowState {
    let mut s = FlowState::zeros(inst);
    for t in 0..s.terminals {
        for (e, edge) in inst.network.edges().iter().enumerate() {
            s.set_mu(t, e, rng.gen_range(0.05..0.45) * edge.capacity);
        }
    }
    for i in 0..s.nodes {
        if inst.network.cache_eligible(i) {
            s.kappa[i] = rng.gen_range(0.05..0.95);
        }
    }
    s
}

#[test]
fn zero_state_costs_nothing() {
    for name in FIXTURES {
        for cache in [CostFamily::Zero, CostFamily::Linear { slope: 1.0 }, CostFamily::Quadratic { coeff: 1.0 }] {
            let inst = fixture_instance(name, Scenario::All, cache);
            assert_eq!(objective(&FlowState::zeros(&inst), &inst, N), 0.0);
        }
    }
}

#[test]
fn single_edge_objective_by_hand() {
    // f(1) = 1 / (2 - 1) = 1 in round 1 and again in the one later round.
    let inst = single_edge(2, 0.0, None);
    let mut s = FlowState::zeros(&inst);
    s.set_mu(0, 0, 1.0);
    assert!((objective(&s, &inst, N) - 2.0).abs() < 1e-12);
}

#[test]
fn flipping_kappa_changes_only_the_later_rounds_block() {
    // S -> R -> D with R caching at linear cost 3. Flipping κ_R replaces
    // f(σ_SR) by f_R(σ_R) + f(2ε) in each of the M - 1 later rounds.
    let net = NetworkBuilder::new(3, 1)
        .edge(0, 1, 2.0)
        .edge(1, 2, 2.0)
        .cache(1, CostFamily::Linear { slope: 3.0 })
        .build()
        .unwrap();
    let inst = Instance::new(net, 1.0, 0.25, 5, Field::new(2).unwrap(), Units::Raw).unwrap();
    let mut s = FlowState::zeros(&inst);
    s.set_mu(0, 0, 1.0);
    s.set_mu(0, 1, 1.0);
    let before = objective(&s, &inst, N);
    s.kappa[1] = 1.0;
    let after = objective(&s, &inst, N);
    let f = |x: f64| x / (2.0 - x);
    let expected = 4.0 * (3.0 * 1.0 + f(0.5) - f(1.0));
    assert!((after - before - expected).abs() < 1e-12, "{} vs {expected}", after - before);
}

#[test]
fn update_load_in_bits_mode_scales_with_the_field() {
    let net = NetworkBuilder::new(2, 1).edge(0, 1, 40.0).cache(1, CostFamily::Zero).build().unwrap();
    let field = Field::new(37).unwrap();
    let inst = Instance::new(net, 4.0, 1.0, 2, field, Units::Bits).unwrap();
    let bits = 37f64.log2();
    assert!((inst.update_load() - 2.0 * bits).abs() < 1e-12);
    let mut s = FlowState::zeros(&inst);
    s.set_mu(0, 0, inst.demand());
    s.kappa[1] = 1.0;
    let f = |x: f64| x / (40.0 - x);
    let expected = f(4.0 * bits) + f(2.0 * bits);
    assert!((objective(&s, &inst, N) - expected).abs() < 1e-9);
}

#[test]
fn gradients_match_central_differences() {
    for name in FIXTURES {
        for cache in [CostFamily::Linear { slope: 1.0 }, CostFamily::Quadratic { coeff: 1.0 }] {
            let inst = fixture_instance(name, Scenario::All, cache);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..100 {
                let s = random_state(&inst, &mut rng);
                for t in 0..s.terminals {
                    for e in 0..s.edges {
                        let h = 1e-6 * s.mu(t, e);
                        let (mut up, mut down) = (s.clone(), s.clone());
                        up.set_mu(t, e, s.mu(t, e) + h);
                        down.set_mu(t, e, s.mu(t, e) - h);
                        let fd = (objective(&up, &inst, N) - objective(&down, &inst, N)) / (2.0 * h);
                        let g = grad_mu(&s, &inst, N, t, e);
                        assert!((fd - g).abs() <= 1e-5 * g.abs().max(1.0), "{name} mu t{t} e{e}: fd {fd} vs {g}");
                    }
                }
                for i in 0..s.nodes {
                    let h = 1e-3;
                    let (mut up, mut down) = (s.clone(), s.clone());
                    up.kappa[i] += h;
                    down.kappa[i] -= h;
                    let fd = (objective(&up, &inst, N) - objective(&down, &inst, N)) / (2.0 * h);
                    let g = grad_kappa(&s, &inst, N, i);
                    assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "{name} kappa {i}: fd {fd} vs {g}");
                }
            }
        }
    }
}

#[test]
fn single_terminal_share_is_one() {
    let inst = single_edge(3, 0.0, None);
    let mut s = FlowState::zeros(&inst);
    s.set_mu(0, 0, 0.5);
    // f'(0.5) = 2 / 1.5² with weight 1 + (M - 1).
    let expected = 2.0 / 2.25 * 3.0;
    assert!((grad_mu(&s, &inst, N, 0, 0) - expected).abs() < 1e-12);
}

#[test]
fn idle_terminal_on_a_busy_edge_has_zero_gradient() {
    let inst = fixture_instance("butterfly", Scenario::No, CostFamily::Zero);
    let mut s = FlowState::zeros(&inst);
    s.set_mu(0, 0, 1.0);
    assert_eq!(grad_mu(&s, &inst, N, 1, 0), 0.0);
    assert!(grad_mu(&s, &inst, N, 0, 0) > 0.0);
}

#[test]
fn kappa_gradient_vanishes_when_updates_cost_as_much_as_payloads() {
    // σ_SR = 2ε and a free cache: caching neither helps nor hurts.
    let net = NetworkBuilder::new(3, 1).edge(0, 1, 2.0).edge(1, 2, 2.0).cache(1, CostFamily::Zero).build().unwrap();
    let inst = Instance::new(net, 1.0, 0.25, 4, Field::new(2).unwrap(), Units::Raw).unwrap();
    let mut s = FlowState::zeros(&inst);
    s.set_mu(0, 0, 0.5);
    s.set_mu(0, 1, 0.5);
    assert!(grad_kappa(&s, &inst, N, 1).abs() < 1e-12);
    let costly = inst.with_network(inst.network.with_cache_cost(CostFamily::Linear { slope: 100.0 }));
    assert!(grad_kappa(&s, &costly, N, 1) > 0.0);
}

#[test]
fn objective_is_convex_in_flows_and_affine_in_kappa() {
    for name in FIXTURES {
        let inst = fixture_instance(name, Scenario::All, CostFamily::Quadratic { coeff: 1.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_state(&inst, &mut rng);
            let mut b = random_state(&inst, &mut rng);
            b.kappa.clone_from(&a.kappa);
            let mut mid = a.clone();
            for (m, (x, y)) in mid.mu.iter_mut().zip(a.mu.iter().zip(&b.mu)) {
                *m = 0.5 * (x + y);
            }
            let (fa, fb, fm) = (objective(&a, &inst, N), objective(&b, &inst, N), objective(&mid, &inst, N));
            assert!(fm <= 0.5 * (fa + fb) + 1e-9 * fa.abs().max(1.0));

            let i = rng.gen_range(1..a.nodes);
            let at = |k: f64| {
                let mut s = a.clone();
                s.kappa[i] = k;
                objective(&s, &inst, N)
            };
            let second = at(0.0) - 2.0 * at(0.5) + at(1.0);
            assert!(second.abs() <= 1e-9 * at(0.5).abs().max(1.0));
        }
    }
}

proptest! {
    #[test]
    fn smooth_load_dominates_every_terminal_flow(flows in prop::collection::vec(0.0f64..1.0, 18)) {
        let inst = fixture_instance("butterfly", Scenario::No, CostFamily::Zero);
        let mut s = FlowState::zeros(&inst);
        s.mu.copy_from_slice(&flows);
        let loads = edge_loads(&s, &inst, N);
        for e in 0..s.edges {
            let max = (0..s.terminals).map(|t| s.mu(t, e)).fold(0.0, f64::max);
            prop_assert!(loads[e] >= max);
            prop_assert!(loads[e] <= max * 2f64.powf(1.0 / N as f64) + 1e-15);
        }
    }
}

#[test]
fn analytic_kkt_point_is_a_fixed_point() {
    // μ = 1 is the only feasible flow; ∂Ψ/∂μ = f'(1)·(1 + (M - 1)) = 2·2,
    // balanced by p_D - p_S = 4.
    let inst = single_edge(2, 0.0, None);
    let mut s = FlowState::zeros(&inst);
    s.set_mu(0, 0, 1.0);
    s.p[1] = 4.0;
    assert!(kkt_residual(&s, &inst, N).max() < 1e-12);
    for disc in [cachecast::optimizer::Discretization::Euler, cachecast::optimizer::Discretization::LinearlyImplicit] {
        let cfg = SolverConfig { discretization: disc, ..SolverConfig::default() };
        let next = step(&s, &cfg, &inst).unwrap();
        for (a, b) in next.mu.iter().zip(&s.mu).chain(next.p.iter().zip(&s.p)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn multipliers_stay_nonnegative() {
    let inst = fixture_instance("butterfly", Scenario::All, CostFamily::Linear { slope: 1.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = random_state(&inst, &mut rng);
    for v in s.lambda.iter_mut().chain(s.gamma_lo.iter_mut()).chain(s.gamma_hi.iter_mut()) {
        *v = rng.gen_range(0.0..2.0);
    }
    let cfg = SolverConfig { discretization: cachecast::optimizer::Discretization::Euler, step_size: 1e-3, ..SolverConfig::default() };
    for _ in 0..10_000 {
        s = step(&s, &cfg, &inst).unwrap();
        assert!(s.lambda.iter().chain(&s.gamma_lo).chain(&s.gamma_hi).all(|&v| v >= 0.0));
        assert!(s.mu.iter().all(|&v| v >= 0.0));
        assert!(s.kappa.iter().all(|&k| (0.0..=1.0).contains(&k)));
    }
}

#[test]
fn butterfly_no_caching_settles() {
    let inst = fixture_instance("butterfly", Scenario::No, CostFamily::Zero);
    let report = solve(&inst, &SolverConfig::default()).unwrap();
    assert!(report.converged, "kkt {:?}", report.kkt);
    assert!(report.last_decile_variation() < 0.01);
    let first = report.trace.first().unwrap();
    let last = report.trace.last().unwrap();
    assert!(last.conservation < first.conservation.max(1e-3));
    assert!(last.conservation < 1e-3);
    assert_eq!(last.lyapunov, 0.0);
    // Ψ never rises again once it is within 1% of the final value.
    let settle = report.trace.iter().position(|p| (p.objective - report.objective).abs() < 0.01 * report.objective).unwrap();
    for w in report.trace[settle..].windows(2) {
        assert!((w[1].objective - w[0].objective).abs() < 0.01 * report.objective);
    }
}

#[test]
fn tiny_demand_costs_almost_nothing() {
    let net = load_topology(fixture("service").unwrap()).unwrap();
    let inst = Instance::preset(net, 1e-6, 100).unwrap();
    let report = solve(&inst, &SolverConfig::default()).unwrap();
    assert!(report.objective < 1e-3, "{}", report.objective);
}

#[test]
fn zero_cost_caching_never_hurts() {
    for name in FIXTURES {
        let psi: Vec<f64> = Scenario::COMPARED
            .iter()
            .map(|&sc| solve(&fixture_instance(name, sc, CostFamily::Zero), &SolverConfig::default()).unwrap().objective)
            .collect();
        let tol = 1e-3 * psi[0];
        assert!(psi[0] + tol >= psi[1] && psi[0] + tol >= psi[2], "{name}: {psi:?}");
        assert!(psi[3] <= psi[1] + tol && psi[3] <= psi[2] + tol, "{name}: {psi:?}");
    }
}

#[test]
fn max_iters_zero_returns_the_initial_state() {
    let inst = fixture_instance("cdn", Scenario::No, CostFamily::Zero);
    let cfg = SolverConfig { max_iters: 0, ..SolverConfig::default() };
    let report = solve(&inst, &cfg).unwrap();
    assert_eq!(report.iterations, 0);
    assert_eq!(report.state, cachecast::optimizer::initial_state(&inst, &cfg));
}

#[test]
fn rounding_follows_kappa() {
    let inst = fixture_instance("service", Scenario::All, CostFamily::Zero);
    let mut s = FlowState::zeros(&inst);
    s.kappa = vec![0.0, 1.0, 0.0, 0.3, 1.0, 0.0];
    let draws = 10_000;
    let mut hits = 0;
    for seed in 0..draws {
        let p = round(&s, &inst, N, seed);
        assert!(!p.delta[0] && p.delta[1] && !p.delta[2] && p.delta[4] && !p.delta[5]);
        hits += p.delta[3] as usize;
    }
    let mean = hits as f64 / draws as f64;
    let se = (0.3f64 * 0.7 / draws as f64).sqrt();
    assert!((mean - 0.3).abs() < 3.0 * se, "{mean}");
}

#[test]
fn rounding_respects_pins() {
    let inst = fixture_instance("service", Scenario::Peer, CostFamily::Zero);
    let mut s = FlowState::zeros(&inst);
    s.kappa = vec![1.0; 6];
    let p = round(&s, &inst, N, 1);
    assert_eq!(p.delta, vec![false, false, false, true, true, true]);
}

#[test]
fn peak_rates_sit_below_the_aggregate() {
    let inst = fixture_instance("butterfly", Scenario::All, CostFamily::Zero);
    let report = solve(&inst, &SolverConfig::default()).unwrap();
    let p = round(&report.state, &inst, N, 0);
    for (peak, agg) in p.peak.iter().zip(&p.rates) {
        assert!(peak <= agg && *agg <= peak * 2f64.powf(1.0 / N as f64) + 1e-12);
    }
    for (d, peak) in p.symbol_dims(10.0).iter().zip(&p.peak) {
        assert!(*d as f64 >= peak * 10.0 - 1e-2 && (*d as f64) < peak * 10.0 + 1.0);
    }
}

#[test]
fn solves_are_deterministic_and_parallel_runs_match() {
    let inst = fixture_instance("service", Scenario::All, CostFamily::Linear { slope: 0.5 });
    let cfg = SolverConfig::default();
    assert_eq!(solve(&inst, &cfg).unwrap(), solve(&inst, &cfg).unwrap());
    let seq = avg_kappa(&inst, &cfg, 4, Parallelism::Sequential).unwrap();
    let par = avg_kappa(&inst, &cfg, 4, Parallelism::Parallel).unwrap();
    assert_eq!(seq, par);
    assert!(seq.unconverged.is_empty());
}

#[test]
fn invalid_configs_are_rejected() {
    let inst = single_edge(2, 0.0, None);
    for cfg in [
        SolverConfig { norm_exponent: 3, ..SolverConfig::default() },
        SolverConfig { step_size: 0.0, ..SolverConfig::default() },
        SolverConfig { gains: cachecast::optimizer::Gains { g: -1.0, ..Default::default() }, ..SolverConfig::default() },
    ] {
        assert!(solve(&inst, &cfg).is_err());
    }
    assert!(avg_kappa(&inst, &SolverConfig::default(), 0, Parallelism::Sequential).is_err());
}
