//! The three transceiver constructions.
//!
//! All of them diagonalize `F0^H (H^H F^H F H) F0` through singular value
//! decompositions of the first hop, differing in which portion of the
//! first-hop matrix they decompose:
//!
//! * [`design_composite`] uses the SVD of the composite matrix and keeps
//!   every relay in play; its power allocation is a best-effort heuristic.
//! * [`design_single_relay`] uses the per-relay SVDs and silences all
//!   relays except the best one.
//! * [`design_jar`] searches every subset of `n_b` antennas across the
//!   relays and solves a certified allocation per subset.
//!
//! Singular values are kept in increasing order throughout, so rightmost
//! columns of the factors always pair with the strongest directions.

use thiserror::Error;

use crate::alloc::{
    composite_allocation_heuristic, solve_allocation, AllocError, AllocationProblem,
    AllocationSolution, CompositeProblem,
};
use crate::model::{
    CMatrix, DesignDiagnostics, DesignKind, FirstHopChannel, ModelError, NetworkDesign,
    NetworkDims, PowerBudget, Selection, C64, RANK_TOL,
};

/// Subsets with more candidate combinations than this are refused.
pub const DEFAULT_SUBSET_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("rank deficiency: {0}")]
    RankDeficient(String),
    #[error("unsupported dimensions: {0}")]
    UnsupportedDims(String),
    #[error("no proper antenna subset exists when n_b equals the total antenna count")]
    DegenerateFullSubset,
    #[error("subset count {0} exceeds the cap of {1}")]
    SubsetCapExceeded(usize, usize),
    #[error("every antenna subset was rank deficient for this channel")]
    AllSubsetsSkipped,
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Thin singular value decomposition with the singular values (and the
/// paired columns of both factors) arranged in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    u: CMatrix,
    lambdas: Vec<f64>,
    v: CMatrix,
}

impl SvdFactors {
    pub fn compute(m: &CMatrix) -> Result<Self, DesignError> {
        let k = m.nrows().min(m.ncols());
        let svd = m.clone().svd(true, true);
        let u_desc = svd.u.expect("u requested");
        let vt_desc = svd.v_t.expect("v_t requested");
        // nalgebra sorts descending; flip to the increasing convention.
        let mut u = CMatrix::zeros(m.nrows(), k);
        let mut v = CMatrix::zeros(m.ncols(), k);
        let mut lambdas = vec![0.0; k];
        for (j, lambda) in lambdas.iter_mut().enumerate() {
            let src = k - 1 - j;
            *lambda = svd.singular_values[src];
            u.set_column(j, &u_desc.column(src));
            v.set_column(j, &vt_desc.row(src).adjoint());
        }
        let factors = Self { u, lambdas, v };
        debug_assert!(
            factors.reconstruction_residual(m) <= 1e-9 * m.norm().max(1e-300),
            "SVD reconstruction residual too large"
        );
        Ok(factors)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn u(&self) -> &CMatrix {
        &self.u
    }

    pub fn v(&self) -> &CMatrix {
        &self.v
    }

    /// Rightmost `k` columns of the left factor (largest singular values).
    pub fn u_right(&self, k: usize) -> CMatrix {
        self.u.columns(self.u.ncols() - k, k).into_owned()
    }

    /// Rightmost `k` columns of the right factor (largest singular values).
    pub fn v_right(&self, k: usize) -> CMatrix {
        self.v.columns(self.v.ncols() - k, k).into_owned()
    }

    /// Number of singular values above `RANK_TOL` times the largest.
    pub fn rank(&self) -> usize {
        let max = self.lambdas.last().copied().unwrap_or(0.0);
        if max <= 0.0 {
            return 0;
        }
        self.lambdas.iter().filter(|&&s| s > RANK_TOL * max).count()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.lambdas.len()
    }

    pub fn reconstruction_residual(&self, m: &CMatrix) -> f64 {
        let k = self.lambdas.len();
        let mut sigma = CMatrix::zeros(k, k);
        for (i, &s) in self.lambdas.iter().enumerate() {
            sigma[(i, i)] = C64::new(s, 0.0);
        }
        (&self.u * sigma * self.v.adjoint() - m).norm()
    }
}

/// An ordered choice of `n_b` antennas across the relays. Pairs are
/// zero-based `(relay, antenna)` and kept sorted by relay then antenna so
/// equal subsets compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AntennaSubset {
    pairs: Vec<(usize, usize)>,
    per_relay_counts: Vec<usize>,
}

impl AntennaSubset {
    pub fn new(dims: NetworkDims, mut pairs: Vec<(usize, usize)>) -> Result<Self, DesignError> {
        pairs.sort_unstable();
        pairs.dedup();
        if pairs.is_empty() {
            return Err(DesignError::UnsupportedDims("empty antenna subset".into()));
        }
        for &(relay, antenna) in &pairs {
            if relay >= dims.n_c() || antenna >= dims.n_r() {
                return Err(DesignError::UnsupportedDims(format!(
                    "pair (relay {relay}, antenna {antenna}) outside the network"
                )));
            }
        }
        let mut per_relay_counts = vec![0; dims.n_c()];
        for &(relay, _) in &pairs {
            per_relay_counts[relay] += 1;
        }
        Ok(Self {
            pairs,
            per_relay_counts,
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn per_relay_counts(&self) -> &[usize] {
        &self.per_relay_counts
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Zero-based local antenna indices selected on `relay`, ascending.
    pub fn antennas_on_relay(&self, relay: usize) -> Vec<usize> {
        self.pairs
            .iter()
            .filter(|&&(r, _)| r == relay)
            .map(|&(_, a)| a)
            .collect()
    }

    /// Row indices into the composite first-hop matrix.
    pub fn row_indices(&self, dims: NetworkDims) -> Vec<usize> {
        self.pairs
            .iter()
            .map(|&(r, a)| r * dims.n_r() + a)
            .collect()
    }
}

/// All size-`n_b` antenna subsets in lexicographic canonical order.
/// Errors when `n_b` equals the total antenna count, where the only
/// candidate is the degenerate all-antenna choice handled by the
/// composite design.
pub fn enumerate_subsets(dims: NetworkDims) -> Result<Vec<AntennaSubset>, DesignError> {
    let total = dims.relay_antennas();
    let n_b = dims.n_b();
    if n_b == total {
        return Err(DesignError::DegenerateFullSubset);
    }
    let mut subsets = Vec::new();
    let mut combo: Vec<usize> = (0..n_b).collect();
    loop {
        let pairs = combo
            .iter()
            .map(|&g| (g / dims.n_r(), g % dims.n_r()))
            .collect();
        subsets.push(AntennaSubset::new(dims, pairs)?);
        // advance the combination in lexicographic order
        let mut i = n_b;
        loop {
            if i == 0 {
                return Ok(subsets);
            }
            i -= 1;
            if combo[i] != i + total - n_b {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..n_b {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

/// Per-relay row blocks of the first hop restricted to a subset; relays
/// with no selected antenna contribute an empty block.
pub fn partition_channel(first_hop: &FirstHopChannel, subset: &AntennaSubset) -> Vec<CMatrix> {
    let dims = first_hop.dims();
    let h = first_hop.matrix();
    (0..dims.n_c())
        .map(|relay| {
            let antennas = subset.antennas_on_relay(relay);
            let mut block = CMatrix::zeros(antennas.len(), dims.n_s());
            for (bi, &a) in antennas.iter().enumerate() {
                block.set_row(bi, &h.row(relay * dims.n_r() + a));
            }
            block
        })
        .collect()
}

fn diag_sqrt(values: &[f64]) -> CMatrix {
    let n = values.len();
    let mut d = CMatrix::zeros(n, n);
    for (i, &v) in values.iter().enumerate() {
        d[(i, i)] = C64::new(v.sqrt(), 0.0);
    }
    d
}

/// First `cols` columns of the identity, the fixed choice for the
/// semi-unitary factor of the relaying matrices.
fn identity_columns(rows: usize, cols: usize) -> CMatrix {
    let mut q = CMatrix::zeros(rows, cols);
    for i in 0..cols {
        q[(i, i)] = C64::new(1.0, 0.0);
    }
    q
}

/// Single-relay selection: per-relay SVD designs, certified allocations,
/// and the relay with the smallest achieved cost wins.
pub fn design_single_relay(
    first_hop: &FirstHopChannel,
    budget: &PowerBudget,
    tol: f64,
) -> Result<NetworkDesign, DesignError> {
    let dims = first_hop.dims();
    if dims.n_s() > dims.n_r() {
        return Err(DesignError::UnsupportedDims(format!(
            "single-relay design needs n_s <= n_r, got n_s = {} > n_r = {}",
            dims.n_s(),
            dims.n_r()
        )));
    }
    let n_b = dims.n_b();
    let n_s = dims.n_s();
    let shift = n_s - n_b;

    let mut best: Option<(usize, SvdFactors, AllocationSolution)> = None;
    let mut solves = 0;
    for relay in 0..dims.n_c() {
        let block = first_hop.relay_block(relay);
        let svd = SvdFactors::compute(&block)?;
        if !svd.is_full_rank() {
            return Err(DesignError::RankDeficient(format!(
                "first-hop block of relay {relay} is not full column rank"
            )));
        }
        let gains: Vec<f64> = (0..n_b)
            .map(|l| {
                let lam = svd.lambdas()[shift + l];
                lam * lam
            })
            .collect();
        let problem = AllocationProblem::new(
            gains,
            vec![1.0; n_b],
            budget.p_s,
            budget.p_d,
            Some((0..n_b).map(|l| (relay, shift + l)).collect()),
        )?;
        let solution = solve_allocation(&problem, tol)?;
        solves += 1;
        if best
            .as_ref()
            .is_none_or(|(_, _, s)| solution.objective < s.objective)
        {
            best = Some((relay, svd, solution));
        }
    }
    let (i_opt, svd, allocation) = best.expect("at least one relay");

    let f0 = svd.v_right(n_b) * diag_sqrt(&allocation.omega);
    // Delta spreads over all n_s stream directions; the weak directions
    // below the shift carry no power.
    let mut delta_full = vec![0.0; n_s];
    delta_full[shift..].copy_from_slice(&allocation.delta);
    let q = identity_columns(dims.n_r(), n_s);
    let f_opt = q * diag_sqrt(&delta_full) * svd.u().adjoint();

    let f_blocks = (0..dims.n_c())
        .map(|i| {
            if i == i_opt {
                f_opt.clone()
            } else {
                CMatrix::zeros(0, 0)
            }
        })
        .collect();

    Ok(NetworkDesign::new(
        dims,
        DesignKind::SingleRelay,
        f0,
        f_blocks,
        Selection::Relay(i_opt),
        allocation,
        DesignDiagnostics {
            allocation_solves: solves,
            skipped_subsets: 0,
        },
    )?)
}

/// Joint antenna-and-relay selection: exhaustively evaluate every
/// `n_b`-antenna subset and keep the one with the smallest allocated
/// cost. Rank-deficient subsets are skipped, not fatal.
pub fn design_jar(
    first_hop: &FirstHopChannel,
    budget: &PowerBudget,
    tol: f64,
) -> Result<NetworkDesign, DesignError> {
    design_jar_capped(first_hop, budget, tol, DEFAULT_SUBSET_CAP)
}

pub fn design_jar_capped(
    first_hop: &FirstHopChannel,
    budget: &PowerBudget,
    tol: f64,
    subset_cap: usize,
) -> Result<NetworkDesign, DesignError> {
    let dims = first_hop.dims();
    if dims.n_b() != dims.n_s() {
        return Err(DesignError::UnsupportedDims(format!(
            "subset selection is defined for n_b = n_s, got n_b = {}, n_s = {}",
            dims.n_b(),
            dims.n_s()
        )));
    }
    let n_b = dims.n_b();
    let subsets = enumerate_subsets(dims)?;
    if subsets.len() > subset_cap {
        return Err(DesignError::SubsetCapExceeded(subsets.len(), subset_cap));
    }

    struct Candidate {
        subset: AntennaSubset,
        svds: Vec<Option<SvdFactors>>,
        v_combined: CMatrix,
        solution: AllocationSolution,
    }

    let mut best: Option<Candidate> = None;
    let mut solves = 0;
    let mut skipped = 0;
    'subsets: for subset in subsets {
        let blocks = partition_channel(first_hop, &subset);
        let mut svds: Vec<Option<SvdFactors>> = Vec::with_capacity(dims.n_c());
        let mut v_combined = CMatrix::zeros(n_b, n_b);
        let mut gains = Vec::with_capacity(n_b);
        let mut term_map = Vec::with_capacity(n_b);
        let mut col = 0;
        for (relay, block) in blocks.iter().enumerate() {
            if block.nrows() == 0 {
                svds.push(None);
                continue;
            }
            let svd = SvdFactors::compute(block)?;
            if !svd.is_full_rank() {
                log::debug!(
                    "skipping subset {:?}: relay {relay} block rank deficient",
                    subset.pairs()
                );
                skipped += 1;
                continue 'subsets;
            }
            for (l, &lam) in svd.lambdas().iter().enumerate() {
                gains.push(lam * lam);
                term_map.push((relay, l));
            }
            let v = svd.v();
            for j in 0..v.ncols() {
                v_combined.set_column(col, &v.column(j));
                col += 1;
            }
            svds.push(Some(svd));
        }
        debug_assert_eq!(col, n_b);

        // Source weights are the diagonal of (V^H V)^{-1}; a badly
        // conditioned V means the subset cannot be diagonalized.
        let vhv = v_combined.adjoint() * &v_combined;
        let Some(chol) = vhv.clone().cholesky() else {
            log::debug!("skipping subset {:?}: combined V singular", subset.pairs());
            skipped += 1;
            continue;
        };
        let vhv_inv = chol.inverse();
        let cond_ok = {
            let eigs = vhv.symmetric_eigen().eigenvalues;
            let max = eigs.iter().cloned().fold(0.0_f64, f64::max);
            eigs.iter().all(|&l| l > RANK_TOL * max)
        };
        if !cond_ok {
            log::debug!("skipping subset {:?}: combined V singular", subset.pairs());
            skipped += 1;
            continue;
        }
        let source_weights: Vec<f64> = (0..n_b).map(|l| vhv_inv[(l, l)].re).collect();

        let problem = AllocationProblem::new(
            gains,
            source_weights,
            budget.p_s,
            budget.p_d,
            Some(term_map),
        )?;
        let solution = solve_allocation(&problem, tol)?;
        solves += 1;
        if best
            .as_ref()
            .is_none_or(|c| solution.objective < c.solution.objective)
        {
            best = Some(Candidate {
                subset,
                svds,
                v_combined,
                solution,
            });
        }
    }

    let Some(candidate) = best else {
        return Err(DesignError::AllSubsetsSkipped);
    };
    let Candidate {
        subset,
        svds,
        v_combined,
        solution,
    } = candidate;

    // F0 = (V^H)^{-1} Omega^{1/2}
    let omega_sqrt = diag_sqrt(&solution.omega);
    let f0 = v_combined
        .adjoint()
        .lu()
        .solve(&omega_sqrt)
        .expect("combined V checked nonsingular");

    let mut f_blocks = Vec::with_capacity(dims.n_c());
    let mut offset = 0;
    for svd in &svds {
        match svd {
            None => f_blocks.push(CMatrix::zeros(0, 0)),
            Some(svd) => {
                let n_i = svd.lambdas().len();
                let delta_i = &solution.delta[offset..offset + n_i];
                f_blocks.push(diag_sqrt(delta_i) * svd.u().adjoint());
                offset += n_i;
            }
        }
    }

    Ok(NetworkDesign::new(
        dims,
        DesignKind::Jar,
        f0,
        f_blocks,
        Selection::Subset(subset),
        solution,
        DesignDiagnostics {
            allocation_solves: solves,
            skipped_subsets: skipped,
        },
    )?)
}

/// Composite all-relay design from the SVD of the composite first-hop
/// matrix. The allocation is the multi-start heuristic; the result is
/// structurally diagonalizing but not certified optimal.
pub fn design_composite(
    first_hop: &FirstHopChannel,
    budget: &PowerBudget,
    restarts: usize,
) -> Result<NetworkDesign, DesignError> {
    let dims = first_hop.dims();
    if dims.n_s() > dims.n_r() {
        return Err(DesignError::UnsupportedDims(format!(
            "composite design needs n_s <= n_r, got n_s = {} > n_r = {}",
            dims.n_s(),
            dims.n_r()
        )));
    }
    let n_b = dims.n_b();
    let n_s = dims.n_s();
    let shift = n_s - n_b;

    let svd = SvdFactors::compute(first_hop.matrix())?;
    if !svd.is_full_rank() {
        return Err(DesignError::RankDeficient(
            "composite first-hop matrix is not full column rank".into(),
        ));
    }

    // Per-relay row blocks of the tall left factor and their pseudo
    // inverses; each must be full column rank for the inversion to exist.
    let mut u_blocks = Vec::with_capacity(dims.n_c());
    let mut pinv_blocks = Vec::with_capacity(dims.n_c());
    let mut uhu_inv_diag = Vec::with_capacity(dims.n_c());
    for relay in 0..dims.n_c() {
        let u_i = svd.u().rows(relay * dims.n_r(), dims.n_r()).into_owned();
        let uhu = u_i.adjoint() * &u_i;
        let eigs = uhu.clone().symmetric_eigen().eigenvalues;
        let max = eigs.iter().cloned().fold(0.0_f64, f64::max);
        if max <= 0.0 || eigs.iter().any(|&l| l <= RANK_TOL * max) {
            return Err(DesignError::RankDeficient(format!(
                "left-factor block of relay {relay} is not full column rank"
            )));
        }
        let uhu_inv = uhu
            .clone()
            .cholesky()
            .ok_or_else(|| {
                DesignError::RankDeficient(format!(
                    "left-factor block of relay {relay} is numerically singular"
                ))
            })?
            .inverse();
        let diag: Vec<f64> = (0..n_s).map(|l| uhu_inv[(l, l)].re).collect();
        pinv_blocks.push(&uhu_inv * u_i.adjoint());
        uhu_inv_diag.push(diag);
        u_blocks.push(u_i);
    }

    let gains: Vec<f64> = (0..n_b)
        .map(|l| {
            let lam = svd.lambdas()[shift + l];
            lam * lam
        })
        .collect();
    let delta_weights: Vec<Vec<f64>> = uhu_inv_diag
        .iter()
        .map(|d| (0..n_b).map(|l| d[shift + l]).collect())
        .collect();
    let problem = CompositeProblem::new(gains, delta_weights, budget.p_s, budget.p_d)?;
    let heur = composite_allocation_heuristic(&problem, crate::alloc::DEFAULT_TOL, restarts)?;

    let f0 = svd.v_right(n_b) * diag_sqrt(&heur.omega);

    let q = identity_columns(dims.n_r(), n_s);
    let mut delta_flat = vec![0.0; dims.n_c() * n_s];
    let mut f_blocks = Vec::with_capacity(dims.n_c());
    for relay in 0..dims.n_c() {
        let mut delta_i = vec![0.0; n_s];
        for l in 0..n_b {
            if heur.assigned_relay[l] == relay {
                delta_i[shift + l] = heur.stream_delta[l];
            }
        }
        delta_flat[relay * n_s..(relay + 1) * n_s].copy_from_slice(&delta_i);
        f_blocks.push(&q * diag_sqrt(&delta_i) * &pinv_blocks[relay]);
    }

    let allocation = AllocationSolution {
        omega: heur.omega,
        delta: delta_flat,
        objective: heur.objective,
        kkt_residual: heur.kkt_residual,
        certified: false,
    };

    Ok(NetworkDesign::new(
        dims,
        DesignKind::Composite,
        f0,
        f_blocks,
        Selection::AllAntennas,
        allocation,
        DesignDiagnostics {
            allocation_solves: 0,
            skipped_subsets: 0,
        },
    )?)
}

/// Off-diagonal mass of `F0^H (H^H F^H F H) F0` relative to its diagonal,
/// the quantity every design drives to zero.
pub fn diagonalization_residual(design: &NetworkDesign, first_hop: &FirstHopChannel) -> f64 {
    let r = crate::model::reduced_cost_matrix(design, first_hop);
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            let m = r[(i, j)].norm();
            if i == j {
                diag += m;
            } else {
                off += m;
            }
        }
    }
    if diag == 0.0 {
        f64::INFINITY
    } else {
        off / diag
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChannelRealization;
    use crate::randgen::{sample_cscg_matrix, SeedSpec, StreamLabel};
    use approx::assert_relative_eq;

    fn channel(dims: NetworkDims, seed: u64) -> FirstHopChannel {
        let h = sample_cscg_matrix(
            dims.relay_antennas(),
            dims.n_s(),
            &SeedSpec::new(seed, 0, StreamLabel::ChannelH),
        );
        FirstHopChannel::new(dims, h).unwrap()
    }

    #[test]
    fn svd_factors_increasing_and_reconstructing() {
        let dims = NetworkDims::new(2, 2, 2, 2, 4).unwrap();
        let ch = channel(dims, 1);
        let svd = SvdFactors::compute(ch.matrix()).unwrap();
        assert_eq!(svd.lambdas().len(), 2);
        assert!(svd.lambdas()[0] <= svd.lambdas()[1]);
        assert!(svd.reconstruction_residual(ch.matrix()) <= 1e-9 * ch.matrix().norm());
        assert!(svd.is_full_rank());
        // right blocks have the requested widths
        assert_eq!(svd.u_right(1).ncols(), 1);
        assert_eq!(svd.v_right(2).ncols(), 2);
    }

    #[test]
    fn svd_detects_rank_deficiency() {
        let col = sample_cscg_matrix(4, 1, &SeedSpec::new(2, 0, StreamLabel::ChannelH));
        let mut m = CMatrix::zeros(4, 2);
        m.set_column(0, &col.column(0));
        m.set_column(1, &col.column(0).scale(2.0));
        let svd = SvdFactors::compute(&m).unwrap();
        assert_eq!(svd.rank(), 1);
        assert!(!svd.is_full_rank());
    }

    #[test]
    fn subset_enumeration_counts() {
        let d22 = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
        assert_eq!(enumerate_subsets(d22).unwrap().len(), 6);

        let d21 = NetworkDims::new(1, 1, 1, 2, 1).unwrap();
        let subsets = enumerate_subsets(d21).unwrap();
        assert_eq!(subsets.len(), 2);
        assert_eq!(subsets[0].pairs(), &[(0, 0)]);
        assert_eq!(subsets[1].pairs(), &[(1, 0)]);

        let d32 = NetworkDims::new(2, 2, 2, 3, 2).unwrap();
        let subsets = enumerate_subsets(d32).unwrap();
        assert_eq!(subsets.len(), 15);
        let mut unique = subsets.clone();
        unique.dedup();
        assert_eq!(unique.len(), 15);
    }

    #[test]
    fn subset_enumeration_rejects_degenerate() {
        let dims = NetworkDims::new(2, 2, 1, 2, 2).unwrap(); // n_b == n_c * n_r
        assert!(matches!(
            enumerate_subsets(dims),
            Err(DesignError::DegenerateFullSubset)
        ));
    }

    #[test]
    fn partition_full_relay_subset_is_relay_block() {
        let dims = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
        let ch = channel(dims, 3);
        let subset = AntennaSubset::new(dims, vec![(0, 0), (0, 1)]).unwrap();
        let blocks = partition_channel(&ch, &subset);
        assert_eq!(blocks[0], ch.relay_block(0));
        assert_eq!(blocks[1].nrows(), 0);
    }

    #[test]
    fn partition_matches_gather_oracle() {
        let dims = NetworkDims::new(2, 2, 2, 3, 2).unwrap();
        let ch = channel(dims, 4);
        let subset = AntennaSubset::new(dims, vec![(0, 1), (2, 0)]).unwrap();
        let blocks = partition_channel(&ch, &subset);
        let h = ch.matrix();
        // relay 0 antenna 1 is global row 1; relay 2 antenna 0 is row 4
        for c in 0..dims.n_s() {
            assert_eq!(blocks[0][(0, c)], h[(1, c)]);
            assert_eq!(blocks[2][(0, c)], h[(4, c)]);
        }
        assert_eq!(blocks[1].nrows(), 0);
    }

    #[test]
    fn disjoint_subsets_select_disjoint_rows() {
        let dims = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
        let s1 = AntennaSubset::new(dims, vec![(0, 0), (0, 1)]).unwrap();
        let s2 = AntennaSubset::new(dims, vec![(1, 0), (1, 1)]).unwrap();
        let r1 = s1.row_indices(dims);
        let r2 = s2.row_indices(dims);
        assert!(r1.iter().all(|i| !r2.contains(i)));
    }

    proptest::proptest! {
        #[test]
        fn subsets_compare_equal_regardless_of_pair_order(
            mut picks in proptest::collection::vec(0usize..12, 1..6),
        ) {
            let dims = NetworkDims::new(3, 3, 3, 4, 3).unwrap();
            picks.sort_unstable();
            picks.dedup();
            let pairs: Vec<(usize, usize)> =
                picks.iter().map(|&g| (g / 3, g % 3)).collect();
            let mut shuffled = pairs.clone();
            shuffled.reverse();
            let a = AntennaSubset::new(dims, pairs).unwrap();
            let b = AntennaSubset::new(dims, shuffled).unwrap();
            proptest::prop_assert_eq!(&a, &b);
            let total: usize = a.per_relay_counts().iter().sum();
            proptest::prop_assert_eq!(total, a.len());
            let rows = a.row_indices(dims);
            proptest::prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn single_relay_siso_picks_strongest_channel() {
        let dims = NetworkDims::new(1, 1, 1, 2, 1).unwrap();
        let mut h = CMatrix::zeros(2, 1);
        h[(0, 0)] = C64::new(2.0, 0.0);
        h[(1, 0)] = C64::new(-1.0, 0.0);
        let ch = FirstHopChannel::new(dims, h).unwrap();
        let budget = PowerBudget::symmetric(4.0).unwrap();
        let design = design_single_relay(&ch, &budget, 1e-10).unwrap();
        assert_eq!(design.selection, Selection::Relay(0));
        // no precoding gain dimensions: F0 = sqrt(p_s)
        assert_relative_eq!(design.f0[(0, 0)].re, 2.0, epsilon = 1e-9);
        assert_relative_eq!(design.f0[(0, 0)].im, 0.0, epsilon = 1e-12);
        assert_eq!(design.diagnostics.allocation_solves, 2);
    }

    #[test]
    fn single_relay_with_one_relay_is_unconditional() {
        let dims = NetworkDims::new(2, 2, 2, 1, 2).unwrap();
        let ch = channel(dims, 5);
        let budget = PowerBudget::symmetric(2.0).unwrap();
        let design = design_single_relay(&ch, &budget, 1e-9).unwrap();
        assert_eq!(design.selection, Selection::Relay(0));
        assert_eq!(design.diagnostics.allocation_solves, 1);
    }

    #[test]
    fn single_relay_selection_matches_oracle_allocation() {
        use crate::alloc::brute_force_allocation;
        let dims = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
        let budget = PowerBudget::symmetric(3.0).unwrap();
        for seed in 0..10 {
            let ch = channel(dims, 100 + seed);
            let design = design_single_relay(&ch, &budget, 1e-10).unwrap();
            let mut best_relay = 0;
            let mut best_obj = f64::INFINITY;
            for relay in 0..dims.n_c() {
                let svd = SvdFactors::compute(&ch.relay_block(relay)).unwrap();
                let gains: Vec<f64> = svd.lambdas().iter().map(|l| l * l).collect();
                let p = AllocationProblem::uniform_weights(gains, budget.p_s, budget.p_d).unwrap();
                let oracle = brute_force_allocation(&p, 1e-3).unwrap();
                if oracle.objective < best_obj {
                    best_obj = oracle.objective;
                    best_relay = relay;
                }
            }
            assert_eq!(
                design.selection,
                Selection::Relay(best_relay),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn jar_equals_single_relay_in_siso() {
        let budget = PowerBudget::symmetric(2.5).unwrap();
        for seed in 0..20 {
            let dims = NetworkDims::new(1, 1, 1, 3, 1).unwrap();
            let ch = channel(dims, 200 + seed);
            let sr = design_single_relay(&ch, &budget, 1e-10).unwrap();
            let jar = design_jar(&ch, &budget, 1e-10).unwrap();
            let sr_relay = match sr.selection {
                Selection::Relay(i) => i,
                _ => unreachable!(),
            };
            let jar_relay = match &jar.selection {
                Selection::Subset(s) => s.pairs()[0].0,
                _ => unreachable!(),
            };
            assert_eq!(sr_relay, jar_relay, "seed {seed}");
            assert!((&sr.f0 - &jar.f0).norm() < 1e-10);
            assert!(
                (&sr.full_relay_matrix() - jar.full_relay_matrix()).norm() < 1e-10,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn jar_single_relay_subset_cost_equals_f1() {
        // When a subset covers exactly one relay's antennas and the block
        // is square, the combined V is unitary, the source weights are
        // one, and the subset cost coincides with the single-relay cost.
        let dims = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
        let budget = PowerBudget::symmetric(3.0).unwrap();
        for seed in 0..10 {
            let ch = channel(dims, 300 + seed);
            for relay in 0..2 {
                let subset = AntennaSubset::new(dims, vec![(relay, 0), (relay, 1)]).unwrap();
                let blocks = partition_channel(&ch, &subset);
                let svd = SvdFactors::compute(&blocks[relay]).unwrap();
                let gains: Vec<f64> = svd.lambdas().iter().map(|l| l * l).collect();
                let vhv = svd.v().adjoint() * svd.v();
                let weights: Vec<f64> = (0..2)
                    .map(|l| vhv.clone().cholesky().unwrap().inverse()[(l, l)].re)
                    .collect();
                for w in &weights {
                    assert_relative_eq!(*w, 1.0, epsilon = 1e-9);
                }
                let p_subset =
                    AllocationProblem::new(gains.clone(), weights, budget.p_s, budget.p_d, None)
                        .unwrap();
                let p_relay =
                    AllocationProblem::uniform_weights(gains, budget.p_s, budget.p_d).unwrap();
                let a = solve_allocation(&p_subset, 1e-10).unwrap();
                let b = solve_allocation(&p_relay, 1e-10).unwrap();
                assert_relative_eq!(a.objective, b.objective, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn jar_never_worse_than_single_relay() {
        let budget = PowerBudget::symmetric(4.0).unwrap();
        for seed in 0..10 {
            let dims = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
            let ch = channel(dims, 400 + seed);
            let sr = design_single_relay(&ch, &budget, 1e-10).unwrap();
            let jar = design_jar(&ch, &budget, 1e-10).unwrap();
            assert!(
                jar.allocation.objective <= sr.allocation.objective * (1.0 + 1e-9),
                "seed {seed}: jar {} vs single {}",
                jar.allocation.objective,
                sr.allocation.objective
            );
        }
    }

    #[test]
    fn jar_counts_solves_per_subset() {
        let dims = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
        let ch = channel(dims, 7);
        let budget = PowerBudget::symmetric(2.0).unwrap();
        let design = design_jar(&ch, &budget, 1e-9).unwrap();
        assert_eq!(
            design.diagnostics.allocation_solves + design.diagnostics.skipped_subsets,
            6
        );
    }

    #[test]
    fn designs_are_feasible_and_diagonalizing() {
        let budget = PowerBudget::symmetric(5.0).unwrap();
        for seed in 0..10 {
            let dims = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
            let ch = channel(dims, 500 + seed);
            let designs = [
                design_single_relay(&ch, &budget, 1e-10).unwrap(),
                design_jar(&ch, &budget, 1e-10).unwrap(),
                design_composite(&ch, &budget, 3).unwrap(),
            ];
            for design in &designs {
                assert!(design.is_feasible(&budget), "{:?} infeasible", design.kind);
                let resid = diagonalization_residual(design, &ch);
                assert!(
                    resid < 1e-8,
                    "{:?} off-diagonal residual {resid}",
                    design.kind
                );
            }
        }
    }

    #[test]
    fn composite_collapses_to_single_relay_objective_when_one_relay() {
        let dims = NetworkDims::new(2, 2, 2, 1, 2).unwrap();
        let budget = PowerBudget::symmetric(3.0).unwrap();
        for seed in 0..10 {
            let ch = channel(dims, 600 + seed);
            let composite = design_composite(&ch, &budget, 4).unwrap();
            let single = design_single_relay(&ch, &budget, 1e-10).unwrap();
            assert_relative_eq!(
                composite.allocation.objective,
                single.allocation.objective,
                max_relative = 1e-6
            );
            assert!(diagonalization_residual(&composite, &ch) < 1e-8);
        }
    }

    #[test]
    fn short_blocks_use_strongest_directions() {
        // n_b < n_s: only the strongest n_b singular directions carry
        // power, through the index shift in the allocation.
        let dims = NetworkDims::new(1, 2, 2, 2, 2).unwrap();
        let budget = PowerBudget::symmetric(3.0).unwrap();
        for seed in 0..5 {
            let ch = channel(dims, 800 + seed);
            for design in [
                design_single_relay(&ch, &budget, 1e-10).unwrap(),
                design_composite(&ch, &budget, 3).unwrap(),
            ] {
                assert!(design.is_feasible(&budget));
                let r = crate::model::reduced_cost_matrix(&design, &ch);
                let cost = crate::model::hermitian_inverse_trace(&r);
                assert_relative_eq!(cost, design.allocation.objective, max_relative = 1e-6);
            }
            // the single-relay cost must match the best relay's strongest
            // singular value under the full budgets
            let sr = design_single_relay(&ch, &budget, 1e-10).unwrap();
            let best: f64 = (0..2)
                .map(|i| {
                    let svd = SvdFactors::compute(&ch.relay_block(i)).unwrap();
                    *svd.lambdas().last().unwrap()
                })
                .fold(0.0, f64::max);
            let expected = 1.0 / (best * best * budget.p_s * budget.p_d);
            assert_relative_eq!(sr.allocation.objective, expected, max_relative = 1e-8);
        }
    }

    #[test]
    fn selection_invariant_under_source_rotation() {
        // Right-multiplying H by a unitary matrix rotates the source side
        // and must not change which relay or subset wins, nor the cost.
        let dims = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
        let budget = PowerBudget::symmetric(3.0).unwrap();
        for seed in 0..5 {
            let ch = channel(dims, 700 + seed);
            let rot = {
                let m =
                    sample_cscg_matrix(2, 2, &SeedSpec::new(900 + seed, 0, StreamLabel::ChannelG));
                let qr = m.qr();
                qr.q()
            };
            let rotated = FirstHopChannel::new(dims, ch.matrix() * rot).unwrap();
            let a = design_single_relay(&ch, &budget, 1e-10).unwrap();
            let b = design_single_relay(&rotated, &budget, 1e-10).unwrap();
            assert_eq!(a.selection, b.selection);
            assert_relative_eq!(
                a.allocation.objective,
                b.allocation.objective,
                max_relative = 1e-8
            );
            let ja = design_jar(&ch, &budget, 1e-10).unwrap();
            let jb = design_jar(&rotated, &budget, 1e-10).unwrap();
            assert_eq!(ja.selection, jb.selection);
            assert_relative_eq!(
                ja.allocation.objective,
                jb.allocation.objective,
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn reduced_cost_matches_allocation_objective() {
        // The diagonalization makes tr(R^{-1}) equal the allocated cost.
        let dims = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
        let budget = PowerBudget::symmetric(3.0).unwrap();
        let ch = channel(dims, 8);
        for design in [
            design_single_relay(&ch, &budget, 1e-10).unwrap(),
            design_jar(&ch, &budget, 1e-10).unwrap(),
            design_composite(&ch, &budget, 3).unwrap(),
        ] {
            let r = crate::model::reduced_cost_matrix(&design, &ch);
            let cost = crate::model::hermitian_inverse_trace(&r);
            assert_relative_eq!(cost, design.allocation.objective, max_relative = 1e-6);
        }
    }

    #[test]
    fn rank_deficient_relay_block_is_an_error() {
        let dims = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
        let good = sample_cscg_matrix(4, 2, &SeedSpec::new(55, 0, StreamLabel::ChannelH));
        let mut h = good.clone();
        // relay 0 block: second column = 2 * first column
        for r in 0..2 {
            h[(r, 1)] = h[(r, 0)] * C64::new(2.0, 0.0);
        }
        let ch = FirstHopChannel::new(dims, h).unwrap();
        let budget = PowerBudget::symmetric(2.0).unwrap();
        assert!(matches!(
            design_single_relay(&ch, &budget, 1e-9),
            Err(DesignError::RankDeficient(_))
        ));
        // subset search skips the broken subsets but still succeeds
        let jar = design_jar(&ch, &budget, 1e-9).unwrap();
        assert!(jar.diagnostics.skipped_subsets > 0);
    }

    #[test]
    fn wide_source_is_rejected_where_unsupported() {
        // n_s > n_r cannot satisfy the semi-unitary relay factor
        let dims = NetworkDims::new(2, 2, 1, 3, 2).unwrap();
        let ch = channel(dims, 56);
        let budget = PowerBudget::symmetric(2.0).unwrap();
        assert!(matches!(
            design_composite(&ch, &budget, 2),
            Err(DesignError::UnsupportedDims(_))
        ));
        assert!(matches!(
            design_single_relay(&ch, &budget, 1e-9),
            Err(DesignError::UnsupportedDims(_))
        ));
    }

    #[test]
    fn designs_ignore_second_hop() {
        // Two realizations equal in H but different in G must produce
        // bit-identical designs.
        let dims = NetworkDims::new(2, 2, 2, 2, 2).unwrap();
        let budget = PowerBudget::symmetric(2.0).unwrap();
        let h = sample_cscg_matrix(4, 2, &SeedSpec::new(31, 0, StreamLabel::ChannelH));
        let g1 = sample_cscg_matrix(2, 4, &SeedSpec::new(31, 0, StreamLabel::ChannelG));
        let g2 = sample_cscg_matrix(2, 4, &SeedSpec::new(32, 0, StreamLabel::ChannelG));
        let ch1 = ChannelRealization::new(dims, h.clone(), g1).unwrap();
        let ch2 = ChannelRealization::new(dims, h, g2).unwrap();
        for (a, b) in [
            (
                design_single_relay(ch1.first_hop(), &budget, 1e-9).unwrap(),
                design_single_relay(ch2.first_hop(), &budget, 1e-9).unwrap(),
            ),
            (
                design_jar(ch1.first_hop(), &budget, 1e-9).unwrap(),
                design_jar(ch2.first_hop(), &budget, 1e-9).unwrap(),
            ),
            (
                design_composite(ch1.first_hop(), &budget, 3).unwrap(),
                design_composite(ch2.first_hop(), &budget, 3).unwrap(),
            ),
        ] {
            assert_eq!(a.f0, b.f0);
            assert_eq!(a.f_blocks, b.f_blocks);
            assert_eq!(a.selection, b.selection);
        }
    }
}
