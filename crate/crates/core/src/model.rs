//! Signal model of the two-hop relay network.
//!
//! A source with `n_s` antennas precodes a block of `n_b` symbols through
//! `F0`, `n_c` relays with `n_r` antennas each apply amplify-and-forward
//! matrices `F_i`, and a destination with `n_d` antennas equalizes the
//! received vector. This module holds the dimension bookkeeping, the
//! composite channel matrices, the noise covariances, the Wiener equalizer,
//! and the evaluators for every cost in the relaxation chain.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc::AllocationSolution;
use crate::designs::AntennaSubset;
use crate::positive;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Absolute tolerance for entrywise matrix comparisons.
pub const ENTRY_TOL: f64 = 1e-9;
/// Relative tolerance for trace comparisons.
pub const TRACE_TOL: f64 = 1e-6;
/// A singular value below `RANK_TOL` times the largest one counts as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Relative slack allowed on the power constraints of a finished design.
pub const POWER_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid power budget: {0}")]
    InvalidBudget(String),
    #[error("Cholesky factorization failed on a matrix expected to be positive definite")]
    FactorizationFailed,
}

/// Antenna and relay counts of the network.
///
/// Construction enforces the rank-feasibility assumptions: `n_b <= n_s`
/// (precoder can be full column rank) and `n_s <= n_c * n_r`, `n_s <= n_d`
/// (the dual-hop channel can be full column rank).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDims {
    n_b: usize,
    n_s: usize,
    n_r: usize,
    n_c: usize,
    n_d: usize,
}

impl NetworkDims {
    pub fn new(
        n_b: usize,
        n_s: usize,
        n_r: usize,
        n_c: usize,
        n_d: usize,
    ) -> Result<Self, ModelError> {
        if n_b == 0 || n_s == 0 || n_r == 0 || n_c == 0 || n_d == 0 {
            return Err(ModelError::InvalidDims(
                "all antenna and relay counts must be positive".into(),
            ));
        }
        if n_b > n_s {
            return Err(ModelError::InvalidDims(format!(
                "block length n_b = {n_b} exceeds source antennas n_s = {n_s}"
            )));
        }
        if n_s > n_c * n_r {
            return Err(ModelError::InvalidDims(format!(
                "n_s = {n_s} exceeds total relay antennas n_c * n_r = {}",
                n_c * n_r
            )));
        }
        if n_s > n_d {
            return Err(ModelError::InvalidDims(format!(
                "n_s = {n_s} exceeds destination antennas n_d = {n_d}"
            )));
        }
        Ok(Self {
            n_b,
            n_s,
            n_r,
            n_c,
            n_d,
        })
    }

    /// All node antenna counts equal to `n`, with `n_c` relays.
    pub fn square(n: usize, n_c: usize) -> Result<Self, ModelError> {
        Self::new(n, n, n, n_c, n)
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }
    pub fn n_s(&self) -> usize {
        self.n_s
    }
    pub fn n_r(&self) -> usize {
        self.n_r
    }
    pub fn n_c(&self) -> usize {
        self.n_c
    }
    pub fn n_d(&self) -> usize {
        self.n_d
    }

    /// Total number of relay antennas `n_c * n_r`.
    pub fn relay_antennas(&self) -> usize {
        self.n_c * self.n_r
    }

    /// Whether `n_d > n_b`, required by the closed-form expected inverse
    /// trace. Designs stay well defined when this fails.
    pub fn supports_closed_form(&self) -> bool {
        self.n_d > self.n_b
    }
}

/// Power thresholds at the source and (summed over relays) at the
/// destination side, in linear scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub p_s: f64,
    pub p_d: f64,
}

impl PowerBudget {
    pub fn new(p_s: f64, p_d: f64) -> Result<Self, ModelError> {
        if !positive(p_s) || !positive(p_d) {
            return Err(ModelError::InvalidBudget(format!(
                "budgets must be strictly positive, got p_s = {p_s}, p_d = {p_d}"
            )));
        }
        Ok(Self { p_s, p_d })
    }

    /// Equal source and relay budgets, `p_tot` each.
    pub fn symmetric(p_tot: f64) -> Result<Self, ModelError> {
        Self::new(p_tot, p_tot)
    }
}

/// First-hop composite channel: the row-stack of the per-relay blocks
/// `H_i`, each `n_r x n_s`.
///
/// Design construction takes this type rather than the full
/// [`ChannelRealization`], so the second-hop realization is unreachable
/// from any design path by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstHopChannel {
    dims: NetworkDims,
    h: CMatrix,
}

impl FirstHopChannel {
    pub fn new(dims: NetworkDims, h: CMatrix) -> Result<Self, ModelError> {
        if h.nrows() != dims.relay_antennas() || h.ncols() != dims.n_s() {
            return Err(ModelError::DimensionMismatch(format!(
                "first-hop matrix is {}x{}, expected {}x{}",
                h.nrows(),
                h.ncols(),
                dims.relay_antennas(),
                dims.n_s()
            )));
        }
        Ok(Self { dims, h })
    }

    pub fn dims(&self) -> NetworkDims {
        self.dims
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.h
    }

    /// The `n_r x n_s` block of relay `i` (zero-based).
    pub fn relay_block(&self, relay: usize) -> CMatrix {
        assert!(relay < self.dims.n_c(), "relay index out of range");
        self.h
            .rows(relay * self.dims.n_r(), self.dims.n_r())
            .into_owned()
    }

    /// True when the composite matrix has full column rank `n_s`.
    pub fn has_full_column_rank(&self) -> bool {
        let svd = self.h.clone().svd(false, false);
        let max = svd.singular_values.max();
        max > 0.0 && svd.singular_values.iter().all(|&s| s > RANK_TOL * max)
    }
}

/// A realization of both hops: first-hop `h` and second-hop `g`, the
/// latter being the column-concatenation of the per-relay `n_d x n_r`
/// blocks `G_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    first_hop: FirstHopChannel,
    g: CMatrix,
}

impl ChannelRealization {
    pub fn new(dims: NetworkDims, h: CMatrix, g: CMatrix) -> Result<Self, ModelError> {
        let first_hop = FirstHopChannel::new(dims, h)?;
        if g.nrows() != dims.n_d() || g.ncols() != dims.relay_antennas() {
            return Err(ModelError::DimensionMismatch(format!(
                "second-hop matrix is {}x{}, expected {}x{}",
                g.nrows(),
                g.ncols(),
                dims.n_d(),
                dims.relay_antennas()
            )));
        }
        Ok(Self { first_hop, g })
    }

    pub fn dims(&self) -> NetworkDims {
        self.first_hop.dims
    }

    pub fn first_hop(&self) -> &FirstHopChannel {
        &self.first_hop
    }

    pub fn h(&self) -> &CMatrix {
        &self.first_hop.h
    }

    pub fn g(&self) -> &CMatrix {
        &self.g
    }

    pub fn relay_block_h(&self, relay: usize) -> CMatrix {
        self.first_hop.relay_block(relay)
    }

    /// The `n_d x n_r` second-hop block of relay `i` (zero-based).
    pub fn relay_block_g(&self, relay: usize) -> CMatrix {
        let dims = self.dims();
        assert!(relay < dims.n_c(), "relay index out of range");
        self.g.columns(relay * dims.n_r(), dims.n_r()).into_owned()
    }
}

/// Which transceiver construction produced a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignKind {
    /// SVD of the composite first-hop matrix, all relays recruited.
    Composite,
    /// Best single relay, all others silent.
    SingleRelay,
    /// Best subset of antennas across relays.
    Jar,
}

impl DesignKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DesignKind::Composite => "composite",
            DesignKind::SingleRelay => "single-relay",
            DesignKind::Jar => "jar",
        }
    }
}

impl std::fmt::Display for DesignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which antennas carry nonzero relaying weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    /// Every antenna of every relay (composite design).
    AllAntennas,
    /// Every antenna of one relay, all other relays silent.
    Relay(usize),
    /// An explicit antenna subset spread over the relays.
    Subset(AntennaSubset),
}

impl Selection {
    /// Zero-based local antenna indices active on `relay`.
    pub fn active_antennas(&self, dims: NetworkDims, relay: usize) -> Vec<usize> {
        match self {
            Selection::AllAntennas => (0..dims.n_r()).collect(),
            Selection::Relay(i) => {
                if relay == *i {
                    (0..dims.n_r()).collect()
                } else {
                    Vec::new()
                }
            }
            Selection::Subset(subset) => subset.antennas_on_relay(relay),
        }
    }
}

/// Counters recorded while a design was constructed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DesignDiagnostics {
    /// Number of allocation subproblems solved.
    pub allocation_solves: usize,
    /// Subsets discarded as rank deficient during subset search.
    pub skipped_subsets: usize,
}

/// A complete transceiver design: source precoder, per-relay blocks, the
/// selection that places the blocks, and the power allocation behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDesign {
    dims: NetworkDims,
    pub kind: DesignKind,
    /// Source precoder, `n_s x n_b`.
    pub f0: CMatrix,
    /// Per-relay relaying blocks; block `i` is square with one row per
    /// antenna active on relay `i` (possibly zero-dimensional).
    pub f_blocks: Vec<CMatrix>,
    pub selection: Selection,
    pub allocation: AllocationSolution,
    pub diagnostics: DesignDiagnostics,
}

impl NetworkDesign {
    pub fn new(
        dims: NetworkDims,
        kind: DesignKind,
        f0: CMatrix,
        f_blocks: Vec<CMatrix>,
        selection: Selection,
        allocation: AllocationSolution,
        diagnostics: DesignDiagnostics,
    ) -> Result<Self, ModelError> {
        if f0.nrows() != dims.n_s() || f0.ncols() != dims.n_b() {
            return Err(ModelError::DimensionMismatch(format!(
                "precoder is {}x{}, expected {}x{}",
                f0.nrows(),
                f0.ncols(),
                dims.n_s(),
                dims.n_b()
            )));
        }
        if f_blocks.len() != dims.n_c() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} relay blocks for {} relays",
                f_blocks.len(),
                dims.n_c()
            )));
        }
        for (i, block) in f_blocks.iter().enumerate() {
            let active = selection.active_antennas(dims, i).len();
            if block.nrows() != active || block.ncols() != active {
                return Err(ModelError::DimensionMismatch(format!(
                    "relay {i} block is {}x{}, selection activates {active} antennas",
                    block.nrows(),
                    block.ncols()
                )));
            }
        }
        Ok(Self {
            dims,
            kind,
            f0,
            f_blocks,
            selection,
            allocation,
            diagnostics,
        })
    }

    pub fn dims(&self) -> NetworkDims {
        self.dims
    }

    /// The full `(n_c n_r) x (n_c n_r)` block-diagonal relay matrix, with
    /// each block embedded at its active antenna rows and columns.
    pub fn full_relay_matrix(&self) -> CMatrix {
        let active: Vec<Vec<usize>> = (0..self.dims.n_c())
            .map(|i| self.selection.active_antennas(self.dims, i))
            .collect();
        embed_relay_blocks(self.dims, &active, &self.f_blocks)
    }

    /// Average transmitted source power `tr(F0 F0^H)`.
    pub fn source_power(&self) -> f64 {
        self.f0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Total average relay power `tr(F^H F)`.
    pub fn relay_power(&self) -> f64 {
        self.f_blocks
            .iter()
            .flat_map(|b| b.iter())
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// Both power constraints hold up to the configured relative slack.
    pub fn is_feasible(&self, budget: &PowerBudget) -> bool {
        self.source_power() <= budget.p_s * (1.0 + POWER_TOL)
            && self.relay_power() <= budget.p_d * (1.0 + POWER_TOL)
    }
}

/// Canonical embedding of per-relay blocks into the full relay matrix.
///
/// `active[i]` lists the zero-based local antennas of relay `i` that carry
/// the rows and columns of `blocks[i]`; everything else stays zero.
pub fn embed_relay_blocks(dims: NetworkDims, active: &[Vec<usize>], blocks: &[CMatrix]) -> CMatrix {
    let m = dims.relay_antennas();
    let mut full = CMatrix::zeros(m, m);
    for (i, block) in blocks.iter().enumerate() {
        let base = i * dims.n_r();
        let rows = &active[i];
        debug_assert_eq!(block.nrows(), rows.len());
        for (br, &ar) in rows.iter().enumerate() {
            for (bc, &ac) in rows.iter().enumerate() {
                full[(base + ar, base + ac)] = block[(br, bc)];
            }
        }
    }
    full
}

/// Report of the cost evaluators along the relaxation chain, from the
/// exact conditional MSE trace down to the reduced first-hop-only cost.
///
/// For any realization, `relaxed_cost <= conditional_mse_trace` and
/// `relaxed_cost < upper_bound_cost` whenever the latter is finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseReport {
    /// `tr[(I + C^H Kvv^{-1} C)^{-1}]`, the conditional MMSE.
    pub conditional_mse_trace: f64,
    /// `tr[(I + C^H C)^{-1}]`, the relaxed cost with whitened noise.
    pub relaxed_cost: f64,
    /// `tr[(C^H C)^{-1}]`, infinite when `C^H C` is singular.
    pub upper_bound_cost: f64,
    /// `tr[(F0^H H^H F^H F H F0)^{-1}]`, the first-hop-only cost.
    pub reduced_cost: f64,
}

/// Dual-hop channel matrix `C = G F H F0`.
pub fn dual_hop_matrix(
    design: &NetworkDesign,
    ch: &ChannelRealization,
) -> Result<CMatrix, ModelError> {
    if design.dims() != ch.dims() {
        return Err(ModelError::DimensionMismatch(
            "design and channel dimensions differ".into(),
        ));
    }
    let f = design.full_relay_matrix();
    Ok(ch.g() * f * ch.h() * &design.f0)
}

/// Conditional covariance of the equivalent destination noise,
/// `Kvv = G F F^H G^H + I`.
pub fn noise_covariance_kvv(design: &NetworkDesign, ch: &ChannelRealization) -> CMatrix {
    let f = design.full_relay_matrix();
    let gf = ch.g() * f;
    let n_d = ch.dims().n_d();
    &gf * gf.adjoint() + CMatrix::identity(n_d, n_d)
}

/// Conditional covariance of the stacked relay inputs,
/// `Kzz = H F0 F0^H H^H + I`. Depends on the first hop only.
pub fn kzz(design: &NetworkDesign, first_hop: &FirstHopChannel) -> CMatrix {
    let hf0 = first_hop.matrix() * &design.f0;
    let m = first_hop.dims().relay_antennas();
    &hf0 * hf0.adjoint() + CMatrix::identity(m, m)
}

/// Wiener (linear MMSE) equalizer `D = C^H (C C^H + Kvv)^{-1}`.
pub fn wiener_equalizer(c: &CMatrix, kvv: &CMatrix) -> Result<CMatrix, ModelError> {
    if kvv.nrows() != c.nrows() || !kvv.is_square() {
        return Err(ModelError::DimensionMismatch(
            "noise covariance must be square matching the rows of C".into(),
        ));
    }
    let s = c * c.adjoint() + kvv;
    let chol = s.cholesky().ok_or(ModelError::FactorizationFailed)?;
    // D^H = S^{-1} C, solved column by column through the factorization.
    let dh = chol.solve(c);
    Ok(dh.adjoint())
}

/// `tr[(I + C^H Kvv^{-1} C)^{-1}]` from the matrices directly.
pub fn mse_trace_from_parts(c: &CMatrix, kvv: &CMatrix) -> Result<f64, ModelError> {
    let chol = kvv
        .clone()
        .cholesky()
        .ok_or(ModelError::FactorizationFailed)?;
    let kinv_c = chol.solve(c);
    let n_b = c.ncols();
    let m = CMatrix::identity(n_b, n_b) + c.adjoint() * kinv_c;
    let mchol = m.cholesky().ok_or(ModelError::FactorizationFailed)?;
    Ok(mchol.inverse().trace().re)
}

/// Trace of the conditional MSE matrix achieved by the Wiener equalizer,
/// `tr[(I + C^H Kvv^{-1} C)^{-1}]`. Always in `(0, n_b]`.
pub fn conditional_mse_trace(
    design: &NetworkDesign,
    ch: &ChannelRealization,
) -> Result<f64, ModelError> {
    let c = dual_hop_matrix(design, ch)?;
    let kvv = noise_covariance_kvv(design, ch);
    mse_trace_from_parts(&c, &kvv)
}

/// MSE trace for an arbitrary equalizer `D`:
/// `tr[(D C - I)(D C - I)^H + D Kvv D^H]`.
pub fn mse_trace_with_equalizer(c: &CMatrix, kvv: &CMatrix, d: &CMatrix) -> f64 {
    let n_b = c.ncols();
    let e = d * c - CMatrix::identity(n_b, n_b);
    let signal: f64 = e.iter().map(|z| z.norm_sqr()).sum();
    let noise = (d * kvv * d.adjoint()).trace().re;
    signal + noise
}

/// Trace of the inverse of a Hermitian PSD matrix through its eigenvalues;
/// `+inf` when any eigenvalue is nonpositive or below `RANK_TOL` times the
/// largest one.
pub fn hermitian_inverse_trace(m: &CMatrix) -> f64 {
    // Symmetrize to shed the numerical skew part before the eigensolve.
    let sym = (m + m.adjoint()).scale(0.5);
    let eigs = sym.symmetric_eigen().eigenvalues;
    let max = eigs.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 || eigs.iter().any(|&l| l <= RANK_TOL * max) {
        return f64::INFINITY;
    }
    eigs.iter().map(|&l| 1.0 / l).sum()
}

/// `R = F0^H H^H F^H F H F0`, the matrix behind the reduced cost.
pub fn reduced_cost_matrix(design: &NetworkDesign, first_hop: &FirstHopChannel) -> CMatrix {
    let f = design.full_relay_matrix();
    let fhf0 = f * first_hop.matrix() * &design.f0;
    fhf0.adjoint() * fhf0
}

/// Evaluate every cost along the relaxation chain for one realization.
pub fn relaxation_chain_costs(
    design: &NetworkDesign,
    ch: &ChannelRealization,
) -> Result<MseReport, ModelError> {
    let c = dual_hop_matrix(design, ch)?;
    let kvv = noise_covariance_kvv(design, ch);
    let conditional = mse_trace_from_parts(&c, &kvv)?;

    let n_b = c.ncols();
    let chc = c.adjoint() * &c;
    let relaxed = {
        let m = CMatrix::identity(n_b, n_b) + &chc;
        let chol = m.cholesky().ok_or(ModelError::FactorizationFailed)?;
        chol.inverse().trace().re
    };
    let upper_bound = hermitian_inverse_trace(&chc);
    let reduced = hermitian_inverse_trace(&reduced_cost_matrix(design, ch.first_hop()));

    Ok(MseReport {
        conditional_mse_trace: conditional,
        relaxed_cost: relaxed,
        upper_bound_cost: upper_bound,
        reduced_cost: reduced,
    })
}

/// Received vector at the destination: `r = C b + G F w + n`, with the
/// noise realizations supplied by the caller.
pub fn received_signal(
    b: &CVector,
    design: &NetworkDesign,
    ch: &ChannelRealization,
    w: &CVector,
    n: &CVector,
) -> Result<CVector, ModelError> {
    let dims = ch.dims();
    if b.len() != dims.n_b() || w.len() != dims.relay_antennas() || n.len() != dims.n_d() {
        return Err(ModelError::DimensionMismatch(
            "symbol or noise vector length does not match the network dimensions".into(),
        ));
    }
    let f = design.full_relay_matrix();
    let c = ch.g() * &f * ch.h() * &design.f0;
    Ok(c * b + ch.g() * f * w + n)
}
