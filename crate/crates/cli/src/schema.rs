/// Output file reference, shown by `--help` and mirrored in the README.
pub const SCHEMA: &str = "\
OUTPUT FILES (written to --out; tables follow --format csv|json)

solve
  solve_trace.{csv,json}   one row per trace sample
    iteration       solver iteration
    psi             relaxed cost at that iteration
    conservation    largest flow-conservation violation
    stationarity    largest stationarity violation (flows and caching variables)
    lyapunov        Lyapunov value relative to the final state
  solve_state.json
    topology, scenario, cache_cost, frame_size, sparsity, rounds, seed
    converged, iterations, psi, last_decile_variation
    kkt             stationarity_mu, stationarity_kappa, conservation,
                    primal_feasibility, dual_feasibility, complementarity
    nodes[]         node (1-based), label, eligible, kappa,
                    potentials (one per destination)
    edges[]         from, to (labels), rate (aggregate), flows (one per destination)

simulate
  simulate_ledger.{csv,json}   one row per round
    round           round number, from 1
    symbols_sent    symbols sent over all edges
    symbols_cached  symbols held in all caches
    communication   link cost of the round
    caching         storage cost of the round (0 in round 1)
    total           communication + caching
  simulate_summary.json
    topology, scenario, cache_cost, frame_size (B), frame_symbols,
    sparsity_symbols, rounds, seed
    solver_converged, solver_iterations, psi (relaxed cost)
    modulus (field size q), bits_per_symbol, load_per_symbol
    cached_nodes    labels of the nodes that cache
    edges[]         from, to, rate (aggregate), peak (largest single-destination
                    flow), symbols
    code_attempts   random draws needed for a decodable network code
    decode_exact    every destination reproduced every frame
    oracle_match    every node output matched a cache-free run
    psi_s           realized cost summed over rounds
    psi_star        analytical bound on psi_s

place
  place.{csv,json}   one row per node other than the source
    node, label, destination
    linear          mean caching variable under linear cache cost
    quadratic       mean caching variable under quadratic cache cost
  place_summary.json
    topology, frame_size, sparsity, rounds, runs, seed, linear, quadratic,
    unconverged_linear, unconverged_quadratic (seeds of runs that hit --max-iters)

sweep
  sweep.{csv,json}   one row per frame size and scenario
    frame_size, scenario, psi, converged, iterations
    psi_s, psi_star, decode_exact   filled only with --simulate

EXIT STATUS
  0  success
  1  invalid input or a failed stage (message on stderr)
  2  solve: the solver hit --max-iters before converging (files are still written)
  3  simulate: a destination failed to decode
";
