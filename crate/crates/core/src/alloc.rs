//! Power allocation over the diagonalized streams.
//!
//! After diagonalization, every design reduces to a separable problem of
//! the form
//!
//! ```text
//!   minimize    sum_t 1 / (gain_t * omega_t * delta_t)
//!   subject to  sum_t w_t * omega_t <= p_s,   omega_t > 0
//!               sum_t delta_t       <= p_d,   delta_t > 0
//! ```
//!
//! which is convex (each summand `1/(a x y)` is strictly convex on the
//! positive orthant). [`solve_allocation`] solves it by alternating exact
//! block updates; [`brute_force_allocation`] is the independent grid
//! oracle used to certify the solver in tests. The composite all-relay
//! design has per-stream relay weights in the delta budget and is handled
//! by [`composite_allocation_heuristic`].

use thiserror::Error;

/// Default solver tolerance on the KKT residual.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default normalized grid step of the oracle.
pub const ORACLE_GRID_STEP: f64 = 1e-3;
/// The oracle refuses problems with more terms than this.
pub const ORACLE_MAX_TERMS: usize = 4;
/// Iteration cap of the alternating solver.
const MAX_ITERATIONS: usize = 10_000;

use crate::positive;

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("nonpositive input: {0}")]
    NonPositive(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("oracle guard: {0} terms exceed the limit of {ORACLE_MAX_TERMS}")]
    OracleGuard(usize),
    #[error("term count mismatch: {0}")]
    TermCount(String),
}

/// A separable allocation problem over positive streams.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    gains: Vec<f64>,
    source_weights: Vec<f64>,
    p_s: f64,
    p_d: f64,
    term_map: Vec<(usize, usize)>,
}

impl AllocationProblem {
    /// `gains` are the squared singular values of the active streams;
    /// `source_weights` multiply each `omega_t` in the source budget.
    /// `term_map[t] = (relay, local_index)` records where stream `t`
    /// lives, for subset bookkeeping.
    pub fn new(
        gains: Vec<f64>,
        source_weights: Vec<f64>,
        p_s: f64,
        p_d: f64,
        term_map: Option<Vec<(usize, usize)>>,
    ) -> Result<Self, AllocError> {
        if gains.is_empty() {
            return Err(AllocError::TermCount("no terms".into()));
        }
        if gains.len() != source_weights.len() {
            return Err(AllocError::LengthMismatch(format!(
                "{} gains vs {} source weights",
                gains.len(),
                source_weights.len()
            )));
        }
        if !gains.iter().all(|&g| positive(g)) {
            return Err(AllocError::NonPositive("gains must be > 0".into()));
        }
        if !source_weights.iter().all(|&w| positive(w)) {
            return Err(AllocError::NonPositive("source weights must be > 0".into()));
        }
        if !positive(p_s) || !positive(p_d) {
            return Err(AllocError::NonPositive(format!(
                "budgets must be > 0, got p_s = {p_s}, p_d = {p_d}"
            )));
        }
        let term_map = match term_map {
            Some(map) => {
                if map.len() != gains.len() {
                    return Err(AllocError::LengthMismatch(format!(
                        "{} term map entries for {} terms",
                        map.len(),
                        gains.len()
                    )));
                }
                map
            }
            None => (0..gains.len()).map(|t| (0, t)).collect(),
        };
        Ok(Self {
            gains,
            source_weights,
            p_s,
            p_d,
            term_map,
        })
    }

    /// Problem with unit source weights.
    pub fn uniform_weights(gains: Vec<f64>, p_s: f64, p_d: f64) -> Result<Self, AllocError> {
        let weights = vec![1.0; gains.len()];
        Self::new(gains, weights, p_s, p_d, None)
    }

    pub fn terms(&self) -> usize {
        self.gains.len()
    }
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }
    pub fn source_weights(&self) -> &[f64] {
        &self.source_weights
    }
    pub fn p_s(&self) -> f64 {
        self.p_s
    }
    pub fn p_d(&self) -> f64 {
        self.p_d
    }
    pub fn term_map(&self) -> &[(usize, usize)] {
        &self.term_map
    }

    fn objective(&self, omega: &[f64], delta: &[f64]) -> f64 {
        objective_value(&self.gains, omega, delta)
    }

    /// Dimensionless KKT residual: spread of the stationarity ratios plus
    /// relative budget slack.
    fn kkt_residual(&self, omega: &[f64], delta: &[f64]) -> f64 {
        let t = self.terms();
        let mut mu = Vec::with_capacity(t);
        let mut nu = Vec::with_capacity(t);
        for i in 0..t {
            mu.push(
                1.0 / (self.gains[i] * omega[i] * omega[i] * delta[i] * self.source_weights[i]),
            );
            nu.push(1.0 / (self.gains[i] * omega[i] * delta[i] * delta[i]));
        }
        let spread = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter()
                .map(|&x| (x / mean - 1.0).abs())
                .fold(0.0_f64, f64::max)
        };
        let used_s: f64 = omega
            .iter()
            .zip(&self.source_weights)
            .map(|(o, w)| o * w)
            .sum();
        let used_d: f64 = delta.iter().sum();
        spread(&mu)
            + spread(&nu)
            + (used_s / self.p_s - 1.0).abs()
            + (used_d / self.p_d - 1.0).abs()
    }
}

/// Solution of an allocation problem. For certified solutions all entries
/// are strictly positive and both budgets are tight.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    pub omega: Vec<f64>,
    pub delta: Vec<f64>,
    /// Achieved objective value.
    pub objective: f64,
    pub kkt_residual: f64,
    /// True when produced by the convex solver; false for heuristic or
    /// oracle output.
    pub certified: bool,
}

fn check_positive(name: &str, v: &[f64]) -> Result<(), AllocError> {
    if !v.iter().all(|&x| positive(x)) {
        return Err(AllocError::NonPositive(format!("{name} must be > 0")));
    }
    Ok(())
}

fn objective_value(gains: &[f64], x: &[f64], y: &[f64]) -> f64 {
    gains
        .iter()
        .zip(x.iter().zip(y.iter()))
        .map(|(&g, (&a, &b))| 1.0 / (g * a * b))
        .sum()
}

/// Single-relay cost: sum over the `omega.len()` strongest streams of
/// `1 / (lambda_l^2 * omega * delta)`, with `singular_values` and `delta`
/// aligned and in increasing order.
pub fn eval_f1(omega: &[f64], delta: &[f64], singular_values: &[f64]) -> Result<f64, AllocError> {
    let n_s = singular_values.len();
    let n_b = omega.len();
    if delta.len() != n_s {
        return Err(AllocError::LengthMismatch(format!(
            "{} delta entries for {} singular values",
            delta.len(),
            n_s
        )));
    }
    if n_b > n_s {
        return Err(AllocError::LengthMismatch(format!(
            "{n_b} omega entries exceed {n_s} singular values"
        )));
    }
    check_positive("omega", omega)?;
    check_positive("delta", delta)?;
    check_positive("singular values", singular_values)?;
    let shift = n_s - n_b;
    Ok((0..n_b)
        .map(|l| {
            let lam = singular_values[shift + l];
            1.0 / (lam * lam * omega[l] * delta[shift + l])
        })
        .sum())
}

/// Subset cost: per-relay gains `[lambda_i(l)]^2` with `delta_i(l)`, and
/// `omega` indexed by the running offset of the per-relay stream counts.
pub fn eval_f2(
    subset_gains: &[Vec<f64>],
    omega: &[f64],
    deltas: &[Vec<f64>],
) -> Result<f64, AllocError> {
    if subset_gains.len() != deltas.len() {
        return Err(AllocError::TermCount(format!(
            "{} gain blocks vs {} delta blocks",
            subset_gains.len(),
            deltas.len()
        )));
    }
    let total: usize = subset_gains.iter().map(Vec::len).sum();
    if omega.len() != total {
        return Err(AllocError::TermCount(format!(
            "{} omega entries for {} subset streams",
            omega.len(),
            total
        )));
    }
    check_positive("omega", omega)?;
    let mut acc = 0.0;
    let mut offset = 0;
    for (g_i, d_i) in subset_gains.iter().zip(deltas) {
        if g_i.len() != d_i.len() {
            return Err(AllocError::TermCount(
                "per-relay gain and delta lengths differ".into(),
            ));
        }
        check_positive("gains", g_i)?;
        check_positive("delta", d_i)?;
        for l in 0..g_i.len() {
            acc += 1.0 / (g_i[l] * omega[offset + l] * d_i[l]);
        }
        offset += g_i.len();
    }
    Ok(acc)
}

/// Composite all-relay cost: streams share the per-stream sum of the
/// relay powers, `sum_l 1 / (omega_l * lambda^2(dn + l) * sum_i
/// delta_i(dn + l))` with `dn = n_s - n_b`.
pub fn eval_f0(
    omega: &[f64],
    deltas: &[Vec<f64>],
    composite_singular_values: &[f64],
) -> Result<f64, AllocError> {
    let n_s = composite_singular_values.len();
    let n_b = omega.len();
    if n_b > n_s {
        return Err(AllocError::LengthMismatch(format!(
            "{n_b} omega entries exceed {n_s} singular values"
        )));
    }
    check_positive("omega", omega)?;
    check_positive("singular values", composite_singular_values)?;
    for d in deltas {
        if d.len() != n_s {
            return Err(AllocError::LengthMismatch(
                "each relay delta must have one entry per singular value".into(),
            ));
        }
        check_positive("delta", d)?;
    }
    let shift = n_s - n_b;
    Ok((0..n_b)
        .map(|l| {
            let lam = composite_singular_values[shift + l];
            let dsum: f64 = deltas.iter().map(|d| d[shift + l]).sum();
            1.0 / (omega[l] * lam * lam * dsum)
        })
        .sum())
}

/// Exact minimizer of `sum_t c_t / x_t` subject to `sum_t w_t x_t = p`:
/// `x_t` proportional to `sqrt(c_t / w_t)`.
fn budget_step(costs: &[f64], weights: &[f64], p: f64, out: &mut [f64]) {
    let norm: f64 = costs
        .iter()
        .zip(weights)
        .map(|(&c, &w)| (c * w).sqrt())
        .sum();
    for t in 0..costs.len() {
        out[t] = p * (costs[t] / weights[t]).sqrt() / norm;
    }
}

/// Solve the convex allocation problem by alternating exact budget
/// updates until the KKT residual falls below `tol`.
pub fn solve_allocation(
    problem: &AllocationProblem,
    tol: f64,
) -> Result<AllocationSolution, AllocError> {
    if !positive(tol) {
        return Err(AllocError::InvalidTolerance(tol));
    }
    let t = problem.terms();

    // Normalize the gains by their geometric mean so the iteration works
    // on well-scaled numbers even for deep-fade channels; the optimal
    // point is invariant and the objective rescales exactly.
    let log_gm = problem.gains.iter().map(|g| g.ln()).sum::<f64>() / t as f64;
    let gm = log_gm.exp();
    let gains: Vec<f64> = problem.gains.iter().map(|g| g / gm).collect();
    let weights = &problem.source_weights;
    let ones = vec![1.0; t];

    let mut omega = vec![0.0; t];
    let mut delta = vec![problem.p_d / t as f64; t];
    let mut costs = vec![0.0; t];

    let scaled = AllocationProblem {
        gains: gains.clone(),
        source_weights: weights.clone(),
        p_s: problem.p_s,
        p_d: problem.p_d,
        term_map: problem.term_map.clone(),
    };

    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        for i in 0..t {
            costs[i] = 1.0 / (gains[i] * delta[i]);
        }
        budget_step(&costs, weights, problem.p_s, &mut omega);
        for i in 0..t {
            costs[i] = 1.0 / (gains[i] * omega[i]);
        }
        budget_step(&costs, &ones, problem.p_d, &mut delta);
        residual = scaled.kkt_residual(&omega, &delta);
        if residual < tol {
            break;
        }
    }

    let objective = objective_value(&gains, &omega, &delta) / gm;
    Ok(AllocationSolution {
        omega,
        delta,
        objective,
        kkt_residual: residual,
        certified: true,
    })
}

/// All strictly positive simplex points whose free coordinates lie on the
/// `subdiv + 1` point lattice of the box `center +- half` (clamped to the
/// unit cube); the last coordinate absorbs the remainder.
fn simplex_lattice(dim: usize, center: &[f64], half: f64, subdiv: usize) -> Vec<Vec<f64>> {
    let d = dim - 1;
    let step = 2.0 * half / subdiv as f64;
    let mut nodes = Vec::new();
    let mut idx = vec![0usize; d];
    'outer: loop {
        let mut node = vec![0.0; dim];
        let mut sum = 0.0;
        let mut ok = true;
        for k in 0..d {
            let x = (center[k] - half + idx[k] as f64 * step).clamp(0.0, 1.0);
            node[k] = x;
            sum += x;
            if x <= 0.0 {
                ok = false;
            }
        }
        if ok && sum < 1.0 {
            node[d] = 1.0 - sum;
            nodes.push(node);
        }
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot <= subdiv {
                continue 'outer;
            }
            *slot = 0;
        }
        return nodes;
    }
}

/// Enumerate a lattice over the product of the two budget simplices,
/// shrinking the search box around the incumbent until the normalized
/// step reaches `grid_step`. Test oracle only; guarded to small sizes.
pub fn brute_force_allocation(
    problem: &AllocationProblem,
    grid_step: f64,
) -> Result<AllocationSolution, AllocError> {
    let t = problem.terms();
    if t > ORACLE_MAX_TERMS {
        return Err(AllocError::OracleGuard(t));
    }
    if !positive(grid_step) {
        return Err(AllocError::InvalidTolerance(grid_step));
    }

    // Simplex coordinates: theta_t = w_t * omega_t / p_s and
    // psi_t = delta_t / p_d. In them the objective is
    // sum_t k_t / (theta_t psi_t) with a fixed coefficient vector k.
    let to_omega = |theta: &[f64]| -> Vec<f64> {
        (0..t)
            .map(|i| problem.p_s * theta[i] / problem.source_weights[i])
            .collect()
    };
    let to_delta = |psi: &[f64]| -> Vec<f64> { (0..t).map(|i| problem.p_d * psi[i]).collect() };

    if t == 1 {
        let omega = to_omega(&[1.0]);
        let delta = to_delta(&[1.0]);
        let objective = problem.objective(&omega, &delta);
        let kkt_residual = problem.kkt_residual(&omega, &delta);
        return Ok(AllocationSolution {
            omega,
            delta,
            objective,
            kkt_residual,
            certified: false,
        });
    }

    let coeff: Vec<f64> = (0..t)
        .map(|i| problem.source_weights[i] / (problem.gains[i] * problem.p_s * problem.p_d))
        .collect();

    const SUBDIV: usize = 12;
    const SHRINK: f64 = 0.65;
    let d = t - 1;

    let mut center_theta = vec![0.5; d];
    let mut center_psi = vec![0.5; d];
    let mut half = 0.5;

    let mut best_theta = vec![1.0 / t as f64; t];
    let mut best_psi = vec![1.0 / t as f64; t];
    let mut best_obj = f64::INFINITY;

    loop {
        let step = 2.0 * half / SUBDIV as f64;
        let theta_nodes = simplex_lattice(t, &center_theta, half, SUBDIV);
        let psi_nodes = simplex_lattice(t, &center_psi, half, SUBDIV);
        // reciprocal of every delta-side node, reused across the theta scan
        let psi_inv: Vec<Vec<f64>> = psi_nodes
            .iter()
            .map(|node| node.iter().map(|&x| 1.0 / x).collect())
            .collect();

        let mut scaled = vec![0.0; t];
        for theta in &theta_nodes {
            for i in 0..t {
                scaled[i] = coeff[i] / theta[i];
            }
            for (j, inv) in psi_inv.iter().enumerate() {
                let mut obj = 0.0;
                for i in 0..t {
                    obj += scaled[i] * inv[i];
                }
                if obj < best_obj {
                    best_obj = obj;
                    best_theta.copy_from_slice(theta);
                    best_psi.copy_from_slice(&psi_nodes[j]);
                }
            }
        }

        if step <= grid_step {
            break;
        }
        center_theta.copy_from_slice(&best_theta[..d]);
        center_psi.copy_from_slice(&best_psi[..d]);
        half *= SHRINK;
    }

    let omega = to_omega(&best_theta);
    let delta = to_delta(&best_psi);
    let kkt_residual = problem.kkt_residual(&omega, &delta);
    Ok(AllocationSolution {
        omega,
        delta,
        objective: best_obj,
        kkt_residual,
        certified: false,
    })
}

/// Allocation problem of the composite all-relay design. Stream `l`
/// carries gain `lambda^2` and every relay can contribute power to it at
/// a relay-specific cost in the delta budget.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeProblem {
    /// Squared singular values of the active streams.
    pub gains: Vec<f64>,
    /// `delta_weights[relay][stream]`: budget cost of a unit of relay
    /// power on that stream.
    pub delta_weights: Vec<Vec<f64>>,
    pub p_s: f64,
    pub p_d: f64,
}

impl CompositeProblem {
    pub fn new(
        gains: Vec<f64>,
        delta_weights: Vec<Vec<f64>>,
        p_s: f64,
        p_d: f64,
    ) -> Result<Self, AllocError> {
        if gains.is_empty() {
            return Err(AllocError::TermCount("no streams".into()));
        }
        check_positive("gains", &gains)?;
        if delta_weights.is_empty() {
            return Err(AllocError::TermCount("no relays".into()));
        }
        for w in &delta_weights {
            if w.len() != gains.len() {
                return Err(AllocError::LengthMismatch(
                    "delta weights must have one entry per stream".into(),
                ));
            }
            check_positive("delta weights", w)?;
        }
        if !positive(p_s) || !positive(p_d) {
            return Err(AllocError::NonPositive("budgets must be > 0".into()));
        }
        Ok(Self {
            gains,
            delta_weights,
            p_s,
            p_d,
        })
    }

    pub fn streams(&self) -> usize {
        self.gains.len()
    }
    pub fn relays(&self) -> usize {
        self.delta_weights.len()
    }
}

/// Best-effort allocation for the composite design.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeAllocation {
    pub omega: Vec<f64>,
    /// Total relay power carried by each stream.
    pub stream_delta: Vec<f64>,
    /// Relay chosen to carry each stream's power.
    pub assigned_relay: Vec<usize>,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Always false: the composite problem is not certified against the
    /// oracle.
    pub certified: bool,
}

/// Multi-start alternating minimization for the composite problem.
///
/// The delta step is the exact block minimizer: for a given stream, a
/// unit of budget buys the most power on the relay with the smallest
/// weight, so each stream's relay power concentrates there and the step
/// reduces to the closed-form budget rule. The omega step is the same
/// rule with unit weights.
pub fn composite_allocation_heuristic(
    problem: &CompositeProblem,
    tol: f64,
    restarts: usize,
) -> Result<CompositeAllocation, AllocError> {
    if !positive(tol) {
        return Err(AllocError::InvalidTolerance(tol));
    }
    let n = problem.streams();

    // Cheapest relay per stream; ties go to the lowest relay index.
    let mut assigned = vec![0usize; n];
    let mut wstar = vec![f64::INFINITY; n];
    for (i, weights) in problem.delta_weights.iter().enumerate() {
        for l in 0..n {
            if weights[l] < wstar[l] {
                wstar[l] = weights[l];
                assigned[l] = i;
            }
        }
    }

    // With the assignment fixed, what remains is a convex problem in
    // (omega, stream sums). Swapping the variable roles turns the
    // weighted delta budget into a source-weight budget, which gives the
    // KKT residual directly.
    let swapped = AllocationProblem::new(
        problem.gains.clone(),
        wstar.clone(),
        problem.p_d,
        problem.p_s,
        Some(assigned.iter().enumerate().map(|(l, &r)| (r, l)).collect()),
    )?;

    let ones = vec![1.0; n];
    let mut best: Option<CompositeAllocation> = None;
    let restarts = restarts.max(1);
    for start in 0..restarts {
        // Deterministic spread of starting points across restarts.
        let mut delta: Vec<f64> = (0..n)
            .map(|l| 1.0 + ((start * n + l) % 7) as f64 * 0.25)
            .collect();
        let scale: f64 = problem.p_d / delta.iter().zip(&wstar).map(|(d, w)| d * w).sum::<f64>();
        for d in &mut delta {
            *d *= scale;
        }
        let mut omega = vec![0.0; n];
        let mut costs = vec![0.0; n];
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_ITERATIONS {
            for l in 0..n {
                costs[l] = 1.0 / (problem.gains[l] * delta[l]);
            }
            budget_step(&costs, &ones, problem.p_s, &mut omega);
            for l in 0..n {
                costs[l] = 1.0 / (problem.gains[l] * omega[l]);
            }
            budget_step(&costs, &wstar, problem.p_d, &mut delta);
            residual = swapped.kkt_residual(&delta, &omega);
            if residual < tol {
                break;
            }
        }
        let objective = objective_value(&problem.gains, &omega, &delta);
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(CompositeAllocation {
                omega,
                stream_delta: delta,
                assigned_relay: assigned.clone(),
                objective,
                kkt_residual: residual,
                certified: false,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Hessian of `f(x, y) = 1 / (a x (y_1 + ... + y_n))` at a positive
/// point, laid out as `(n + 1) x (n + 1)` with `x` first.
pub fn hessian_summand(a: f64, x: f64, y: &[f64]) -> Result<nalgebra::DMatrix<f64>, AllocError> {
    if !positive(a) || !positive(x) {
        return Err(AllocError::NonPositive("a and x must be > 0".into()));
    }
    check_positive("y", y)?;
    let n = y.len();
    let s: f64 = y.iter().sum();
    let dxx = 2.0 / (a * x.powi(3) * s);
    let dxy = 1.0 / (a * x * x * s * s);
    let dyy = 2.0 / (a * x * s.powi(3));
    let mut h = nalgebra::DMatrix::zeros(n + 1, n + 1);
    h[(0, 0)] = dxx;
    for j in 1..=n {
        h[(0, j)] = dxy;
        h[(j, 0)] = dxy;
        for i in 1..=n {
            h[(i, j)] = dyy;
        }
    }
    Ok(h)
}
