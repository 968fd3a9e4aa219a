//! Rate and cache-placement optimization.
//!
//! Minimizes the relaxed cost `Ψ(μ, κ)` over per-terminal virtual flows `μ`
//! and cache probabilities `κ` with projected primal-dual dynamics, monitors
//! KKT residuals and a quadratic Lyapunov value, and rounds `κ` to integral
//! cache decisions.

mod model;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{max_flow_assignment, Instance, Scenario};
use crate::par::{map_indexed, Parallelism};

pub(crate) use model::Model;

/// Gain constants of the six dynamics (`μ`, `κ`, `p`, `λ`, `γ⁻`, `γ⁺`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub k: f64,
    pub h: f64,
    pub g: f64,
    pub m: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Gains { k: 1.0, h: 1.0, g: 1.0, m: 1.0, alpha: 1.0, beta: 1.0 }
    }
}

impl Gains {
    /// Gains used by [`SolverConfig::default`]. Potentials react fast and
    /// cache variables slowly, which keeps `κ` from flipping between its
    /// bounds while the flows are still moving.
    pub fn tuned() -> Self {
        Gains { g: 1e5, h: 1e-4, ..Gains::default() }
    }
}

/// Time discretization of the continuous dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// Explicit forward Euler on every variable.
    Euler,
    /// Linearly implicit Euler: the stiff `μ` and `p` directions are
    /// integrated with a diagonal Jacobian estimate, and `p` sees the fresh `μ`.
    LinearlyImplicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarmStart {
    /// Every terminal's flow starts as a maximum flow scaled to the demand.
    MaxFlow,
    /// All flows start at zero.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Exponent `n` of the `ℓⁿ` surrogate for the max over terminals.
    pub norm_exponent: u32,
    pub gains: Gains,
    /// Time step `η`.
    pub step_size: f64,
    pub max_iters: usize,
    /// KKT residual below which the run stops.
    pub tolerance: f64,
    /// Iterations between trace samples and convergence checks.
    pub trace_every: usize,
    pub discretization: Discretization,
    pub warm_start: WarmStart,
    /// Start `κ` uniformly at random instead of at 0.5.
    pub randomize_kappa: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            norm_exponent: 20,
            gains: Gains::tuned(),
            step_size: 0.1,
            max_iters: 200_000,
            tolerance: 1e-3,
            trace_every: 100,
            discretization: Discretization::LinearlyImplicit,
            warm_start: WarmStart::MaxFlow,
            randomize_kappa: false,
            seed: 0,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        let g = &self.gains;
        let gains = [g.k, g.h, g.g, g.m, g.alpha, g.beta];
        if self.norm_exponent < 2 || !self.norm_exponent.is_multiple_of(2) {
            return Err(Error::InvalidInstance(format!("norm exponent {} must be even and >= 2", self.norm_exponent)));
        }
        if !gains.iter().all(|&x| x.is_finite() && x > 0.0) {
            return Err(Error::InvalidInstance("gains must be positive".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidInstance("step size must be positive".into()));
        }
        if self.trace_every == 0 {
            return Err(Error::InvalidInstance("trace interval must be positive".into()));
        }
        Ok(())
    }
}

/// Every primal and dual variable. Per-terminal vectors are stored
/// terminal-major: `mu[t * edges + e]`, `p[t * nodes + i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub terminals: usize,
    pub edges: usize,
    pub nodes: usize,
    pub mu: Vec<f64>,
    pub kappa: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma_lo: Vec<f64>,
    pub gamma_hi: Vec<f64>,
}

impl FlowState {
    pub fn mu(&self, t: usize, e: usize) -> f64 {
        self.mu[t * self.edges + e]
    }

    pub fn set_mu(&mut self, t: usize, e: usize, value: f64) {
        self.mu[t * self.edges + e] = value;
    }

    pub fn potential(&self, t: usize, i: usize) -> f64 {
        self.p[t * self.nodes + i]
    }

    /// All-zero state shaped for `inst`.
    pub fn zeros(inst: &Instance) -> Self {
        Model::new(inst, 2).zero_state()
    }
}

/// `Ψ` at `state`; `+inf` if an mm1 link is overloaded.
pub fn objective(state: &FlowState, inst: &Instance, norm_exponent: u32) -> f64 {
    Model::new(inst, norm_exponent).objective(&state.mu, &state.kappa)
}

/// `∂Ψ/∂μ` for terminal slot `t` (0-based among destinations) on edge `e`.
pub fn grad_mu(state: &FlowState, inst: &Instance, norm_exponent: u32, t: usize, e: usize) -> f64 {
    let model = Model::new(inst, norm_exponent);
    let loads = model.loads(&state.mu);
    let mut g = vec![0.0; state.mu.len()];
    model.grad_mu_into(&state.mu, &state.kappa, &loads, &mut g);
    g[t * state.edges + e]
}

/// `∂Ψ/∂κ_i`.
pub fn grad_kappa(state: &FlowState, inst: &Instance, norm_exponent: u32, node: usize) -> f64 {
    let model = Model::new(inst, norm_exponent);
    let loads = model.loads(&state.mu);
    let mut g = vec![0.0; state.nodes];
    model.grad_kappa_into(&loads, &mut g);
    g[node]
}

/// Per-edge `σ̃` at `state`.
pub fn edge_loads(state: &FlowState, inst: &Instance, norm_exponent: u32) -> Vec<f64> {
    Model::new(inst, norm_exponent).loads(&state.mu).edge
}

/// Largest violation in each family of optimality conditions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// `∂Ψ/∂μ + q` on active flows, its negative part on idle ones.
    pub stationarity_mu: f64,
    /// Projected `∂Ψ/∂κ` on eligible nodes.
    pub stationarity_kappa: f64,
    /// `max |y - θ|`.
    pub conservation: f64,
    /// Negative parts of `μ`, `κ` and `1 - κ`.
    pub primal_feasibility: f64,
    /// Negative parts of `λ`, `γ⁻`, `γ⁺`.
    pub dual_feasibility: f64,
    /// `|λ μ|`, `|γ⁻ κ|`, `|γ⁺ (1 - κ)|`.
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        [
            self.stationarity_mu,
            self.stationarity_kappa,
            self.conservation,
            self.primal_feasibility,
            self.dual_feasibility,
            self.complementarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub conservation: f64,
    pub stationarity: f64,
    /// Lyapunov value relative to the final state.
    pub lyapunov: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub state: FlowState,
    pub objective: f64,
    pub kkt: KktResidual,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

impl SolveReport {
    /// Relative spread of `Ψ` over the last tenth of the trace.
    pub fn last_decile_variation(&self) -> f64 {
        let n = self.trace.len();
        if n == 0 {
            return 0.0;
        }
        let tail = &self.trace[n - (n / 10).max(1)..];
        let lo = tail.iter().map(|p| p.objective).fold(f64::INFINITY, f64::min);
        let hi = tail.iter().map(|p| p.objective).fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / self.objective.abs().max(f64::MIN_POSITIVE)
    }
}

/// Quadratic Lyapunov value `V` between two states under constant gains.
pub fn lyapunov(state: &FlowState, reference: &FlowState, gains: &Gains) -> f64 {
    let sq = |a: &[f64], b: &[f64], gain: f64| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / (2.0 * gain);
    sq(&state.mu, &reference.mu, gains.k)
        + sq(&state.kappa, &reference.kappa, gains.h)
        + sq(&state.p, &reference.p, gains.g)
        + sq(&state.lambda, &reference.lambda, gains.m)
        + sq(&state.gamma_lo, &reference.gamma_lo, gains.alpha)
        + sq(&state.gamma_hi, &reference.gamma_hi, gains.beta)
}

/// Working buffers for the dynamics.
struct Workspace {
    grad_mu: Vec<f64>,
    grad_kappa: Vec<f64>,
    curvature: Vec<f64>,
    outflow: Vec<f64>,
    trial_mu: Vec<f64>,
    trial_kappa: Vec<f64>,
    tau: Vec<f64>,
}

impl Workspace {
    fn new(model: &Model) -> Self {
        let flows = model.terminals * model.edges;
        Workspace {
            grad_mu: vec![0.0; flows],
            grad_kappa: vec![0.0; model.nodes],
            curvature: vec![0.0; flows],
            outflow: vec![0.0; model.terminals * model.nodes],
            trial_mu: vec![0.0; flows],
            trial_kappa: vec![0.0; model.nodes],
            tau: vec![0.0; flows],
        }
    }
}

/// Maximum number of step halvings before a step is declared divergent.
const MAX_HALVINGS: usize = 60;

/// Advances `state` by one time step of the dynamics.
pub fn step(state: &FlowState, cfg: &SolverConfig, inst: &Instance) -> Result<FlowState> {
    cfg.validate()?;
    let model = Model::new(inst, cfg.norm_exponent);
    let mut next = state.clone();
    let mut ws = Workspace::new(&model);
    advance(&model, cfg, &mut next, &mut ws, 0)?;
    Ok(next)
}

fn advance(model: &Model, cfg: &SolverConfig, state: &mut FlowState, ws: &mut Workspace, iteration: usize) -> Result<()> {
    let g = &cfg.gains;
    let (te, tn) = (model.edges, model.nodes);
    let loads = model.loads(&state.mu);
    model.grad_mu_into(&state.mu, &state.kappa, &loads, &mut ws.grad_mu);
    model.grad_kappa_into(&loads, &mut ws.grad_kappa);
    let implicit = cfg.discretization == Discretization::LinearlyImplicit;
    if implicit {
        model.curvature_into(&state.mu, &state.kappa, &loads, &mut ws.curvature);
    }
    model.net_outflow_into(&state.mu, &mut ws.outflow);

    let mut eta = cfg.step_size;
    let mut halvings = 0;
    loop {
        for t in 0..model.terminals {
            for e in 0..te {
                let idx = t * te + e;
                let q = state.p[t * tn + model.tail[e]] - state.p[t * tn + model.head[e]];
                let drift = -ws.grad_mu[idx] - q + state.lambda[idx];
                let tau = if implicit {
                    eta * g.k / (1.0 + eta * g.k * ws.curvature[idx])
                } else {
                    eta * g.k
                };
                ws.tau[idx] = tau;
                ws.trial_mu[idx] = (state.mu[idx] + tau * drift).max(0.0);
            }
        }
        for i in 0..tn {
            ws.trial_kappa[i] = if model.eligible[i] {
                let drift = -ws.grad_kappa[i] - state.gamma_hi[i] + state.gamma_lo[i];
                (state.kappa[i] + eta * g.h * drift).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        let psi = model.objective(&ws.trial_mu, &ws.trial_kappa);
        if psi.is_finite() {
            break;
        }
        halvings += 1;
        if halvings > MAX_HALVINGS {
            return Err(Error::NonFinite { iteration });
        }
        eta *= 0.5;
    }

    // Dual updates use the pre-step primal values under explicit Euler and
    // the fresh ones under the implicit scheme.
    if implicit {
        model.net_outflow_into(&ws.trial_mu, &mut ws.outflow);
    }
    for t in 0..model.terminals {
        for i in 0..tn {
            let idx = t * tn + i;
            let residual = ws.outflow[idx] - model.theta[idx];
            let rate = if implicit {
                // Diagonal of ∂y_i/∂p_i is minus the summed flow step sizes
                // of the edges incident to i.
                let incident: f64 = model.out_edges[i]
                    .iter()
                    .chain(&model.in_edges[i])
                    .map(|&e| ws.tau[t * te + e])
                    .sum();
                eta * g.g / (1.0 + eta * g.g * 2.0 * incident)
            } else {
                eta * g.g
            };
            state.p[idx] += rate * residual;
        }
    }
    for idx in 0..state.lambda.len() {
        let drive = projected(-state.mu[idx], state.lambda[idx]);
        state.lambda[idx] = (state.lambda[idx] + eta * g.m * drive).max(0.0);
    }
    for i in 0..tn {
        let lo = projected(-state.kappa[i], state.gamma_lo[i]);
        let hi = projected(state.kappa[i] - 1.0, state.gamma_hi[i]);
        state.gamma_lo[i] = (state.gamma_lo[i] + eta * g.alpha * lo).max(0.0);
        state.gamma_hi[i] = (state.gamma_hi[i] + eta * g.beta * hi).max(0.0);
    }
    state.mu.copy_from_slice(&ws.trial_mu);
    state.kappa.copy_from_slice(&ws.trial_kappa);
    if state.p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { iteration });
    }
    Ok(())
}

/// `(y)⁺_x`: `y` when `x > 0`, otherwise `max(y, 0)`.
#[inline]
pub fn projected(y: f64, x: f64) -> f64 {
    if x > 0.0 {
        y
    } else {
        y.max(0.0)
    }
}

/// KKT residual of `state`.
pub fn kkt_residual(state: &FlowState, inst: &Instance, norm_exponent: u32) -> KktResidual {
    let model = Model::new(inst, norm_exponent);
    residual_with(&model, state)
}

fn residual_with(model: &Model, state: &FlowState) -> KktResidual {
    let (te, tn) = (model.edges, model.nodes);
    let loads = model.loads(&state.mu);
    let mut gm = vec![0.0; state.mu.len()];
    let mut gk = vec![0.0; tn];
    let mut y = vec![0.0; model.terminals * tn];
    model.grad_mu_into(&state.mu, &state.kappa, &loads, &mut gm);
    model.grad_kappa_into(&loads, &mut gk);
    model.net_outflow_into(&state.mu, &mut y);
    let mut r = KktResidual::default();
    for t in 0..model.terminals {
        for e in 0..te {
            let idx = t * te + e;
            let q = state.p[t * tn + model.tail[e]] - state.p[t * tn + model.head[e]];
            let reduced = gm[idx] + q;
            // Natural residual |μ - max(0, μ - ∇)|: flows decaying towards
            // zero are judged by their size, not by the gradient.
            let v = if state.mu[idx] >= reduced { reduced.abs() } else { state.mu[idx] };
            r.stationarity_mu = r.stationarity_mu.max(v);
            r.primal_feasibility = r.primal_feasibility.max(-state.mu[idx]);
            r.dual_feasibility = r.dual_feasibility.max(-state.lambda[idx]);
            r.complementarity = r.complementarity.max((state.lambda[idx] * state.mu[idx]).abs());
        }
    }
    for i in 0..tn {
        if model.eligible[i] {
            let k = state.kappa[i];
            let v = if k <= 0.0 {
                (-gk[i]).max(0.0)
            } else if k >= 1.0 {
                gk[i].max(0.0)
            } else {
                gk[i].abs()
            };
            r.stationarity_kappa = r.stationarity_kappa.max(v);
        }
        r.primal_feasibility = r.primal_feasibility.max(-state.kappa[i]).max(state.kappa[i] - 1.0);
        r.dual_feasibility = r.dual_feasibility.max(-state.gamma_lo[i]).max(-state.gamma_hi[i]);
        r.complementarity = r
            .complementarity
            .max((state.gamma_lo[i] * state.kappa[i]).abs())
            .max((state.gamma_hi[i] * (1.0 - state.kappa[i])).abs());
    }
    for (v, th) in y.iter().zip(&model.theta) {
        r.conservation = r.conservation.max((v - th).abs());
    }
    r
}

/// Initial state: warm-started flows, zero duals, `κ = 0.5` (or random) on
/// eligible nodes.
pub fn initial_state(inst: &Instance, cfg: &SolverConfig) -> FlowState {
    let model = Model::new(inst, cfg.norm_exponent);
    let net = &inst.network;
    let mut state = model.zero_state();
    if cfg.warm_start == WarmStart::MaxFlow {
        let caps: Vec<f64> = net.edges().iter().map(|e| e.capacity).collect();
        for (t, dest) in net.destination_nodes().enumerate() {
            let (value, flow) = max_flow_assignment(net, &caps, net.source(), dest);
            let scale = model.demand / value;
            for (e, f) in flow.into_iter().enumerate() {
                state.set_mu(t, e, f * scale);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..model.nodes {
        if model.eligible[i] {
            state.kappa[i] = if cfg.randomize_kappa { rng.gen_range(0.0..=1.0) } else { 0.5 };
        }
    }
    state
}

/// Runs the dynamics from [`initial_state`] until the KKT residual drops
/// below the tolerance or the iteration budget is spent.
pub fn solve(inst: &Instance, cfg: &SolverConfig) -> Result<SolveReport> {
    solve_from(inst, cfg, initial_state(inst, cfg))
}

pub fn solve_from(inst: &Instance, cfg: &SolverConfig, mut state: FlowState) -> Result<SolveReport> {
    cfg.validate()?;
    let model = Model::new(inst, cfg.norm_exponent);
    let mut ws = Workspace::new(&model);
    let mut snapshots: Vec<(usize, f64, KktResidual, FlowState)> = Vec::new();
    let record = |it: usize, s: &FlowState, snaps: &mut Vec<(usize, f64, KktResidual, FlowState)>| {
        let kkt = residual_with(&model, s);
        snaps.push((it, model.objective(&s.mu, &s.kappa), kkt, s.clone()));
        kkt
    };
    let mut kkt = record(0, &state, &mut snapshots);
    let mut iterations = 0;
    while iterations < cfg.max_iters && kkt.max() >= cfg.tolerance {
        advance(&model, cfg, &mut state, &mut ws, iterations)?;
        iterations += 1;
        if iterations % cfg.trace_every == 0 || iterations == cfg.max_iters {
            kkt = record(iterations, &state, &mut snapshots);
        }
    }
    if snapshots.last().map(|s| s.0) != Some(iterations) {
        kkt = record(iterations, &state, &mut snapshots);
    }
    let trace = snapshots
        .iter()
        .map(|(it, psi, r, s)| TracePoint {
            iteration: *it,
            objective: *psi,
            conservation: r.conservation,
            stationarity: r.stationarity_mu.max(r.stationarity_kappa),
            lyapunov: lyapunov(s, &state, &cfg.gains),
        })
        .collect();
    Ok(SolveReport {
        objective: model.objective(&state.mu, &state.kappa),
        converged: kkt.max() < cfg.tolerance,
        kkt,
        iterations,
        state,
        trace,
    })
}

/// Integral cache decisions and the per-edge rates they are paired with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub delta: Vec<bool>,
    /// Per-edge `ℓⁿ` aggregate `σ̃`, in load units.
    pub rates: Vec<f64>,
    /// Per-edge largest single-destination flow, the rate a network code
    /// actually has to carry. Never above `rates`.
    pub peak: Vec<f64>,
}

impl Placement {
    /// Symbols per edge when one load unit carries `symbols_per_unit`
    /// symbols, from the peak rates. Hundredths of a symbol left over from
    /// an approximate solve are dropped.
    pub fn symbol_dims(&self, symbols_per_unit: f64) -> Vec<usize> {
        self.peak.iter().map(|&r| (r * symbols_per_unit - 1e-2).ceil().max(0.0) as usize).collect()
    }
}

/// Independent Bernoulli(`κ_i`) cache decisions on eligible nodes.
pub fn round(state: &FlowState, inst: &Instance, norm_exponent: u32, seed: u64) -> Placement {
    let net = &inst.network;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = (0..net.node_count())
        .map(|i| {
            let draw: f64 = rng.gen();
            net.cache_eligible(i) && draw < state.kappa[i]
        })
        .collect();
    let peak = (0..state.edges)
        .map(|e| (0..state.terminals).map(|t| state.mu(t, e)).fold(0.0, f64::max))
        .collect();
    Placement { delta, rates: edge_loads(state, inst, norm_exponent), peak }
}

/// Mean final `κ` over independent runs with every non-source node eligible.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KappaAverage {
    pub mean: Vec<f64>,
    pub runs: usize,
    /// Seeds of runs that hit the iteration budget before converging.
    pub unconverged: Vec<u64>,
}

pub fn avg_kappa(inst: &Instance, cfg: &SolverConfig, runs: usize, par: Parallelism) -> Result<KappaAverage> {
    if runs == 0 {
        return Err(Error::InvalidInstance("at least one run is required".into()));
    }
    let all = inst.with_network(inst.network.with_scenario(Scenario::All));
    let reports = map_indexed(par, runs, |r| {
        let run_cfg = SolverConfig { seed: cfg.seed.wrapping_add(r as u64), randomize_kappa: true, ..cfg.clone() };
        solve(&all, &run_cfg).map(|rep| (run_cfg.seed, rep))
    });
    let mut mean = vec![0.0; all.network.node_count()];
    let mut unconverged = Vec::new();
    for report in reports {
        let (seed, rep) = report?;
        if !rep.converged {
            unconverged.push(seed);
        }
        for (m, k) in mean.iter_mut().zip(&rep.state.kappa) {
            *m += k;
        }
    }
    mean.iter_mut().for_each(|m| *m /= runs as f64);
    Ok(KappaAverage { mean, runs, unconverged })
}
