//! Predictive-state reparameterization: operators over the side-information
//! coordinate, normalized predictive states of blind histories, and numeric
//! certificates for the well-conditioning bounds.
//!
//! For a model with emission matrix E (|I| x M) and a left inverse G (GE = I)
//! the step operator for an observed pair y = (o, s') at x = (s, a) is
//! `B(y|x) = E diag([P(o, s'|m, s, a)]_m) G`, and `b0 = E w` for the mixing
//! vector w. Operators are never materialized as dense |I| x |I| matrices on
//! the hot path; applying one costs two small mat-vecs through the latent
//! coordinate. A step-0 operator built from `init_dist` carries the initial
//! state distribution, so a full product over a trajectory reproduces the
//! joint probability of (iota, tau) up to the policy factor.

use std::sync::Arc;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::env::LmdpPsi;
use crate::error::{Error, Result};

/// Relative singular-value cutoff for rank decisions.
const RANK_TOL: f64 = 1e-9;
/// Entries of a propagated state in [-CLAMP_TOL, 0) are rounded up to zero;
/// the true entries are probabilities of side-information futures.
const CLAMP_TOL: f64 = 1e-12;
/// A state with total mass at or below this is an unreachable history.
const ZERO_MASS: f64 = 1e-300;

pub fn emission_matrix(emission: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = emission.len();
    let cols = emission.first().map(|r| r.len()).unwrap_or(0);
    DMatrix::from_fn(rows, cols, |i, j| emission[i][j])
}

/// Column rank of an emission table under the relative cutoff.
pub fn emission_rank(emission: &[Vec<f64>]) -> usize {
    let e = emission_matrix(emission);
    if e.ncols() == 0 || e.nrows() == 0 {
        return 0;
    }
    let sv = e.svd(false, false).singular_values;
    let top = sv.max();
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * top).count()
}

/// Moore-Penrose least-squares left inverse. All trajectory probabilities are
/// invariant to the particular choice because operator products telescope
/// through G E = I.
pub fn left_inverse(emission: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = emission.ncols();
    let svd = emission.clone().svd(true, true);
    let top = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > RANK_TOL * top)
        .count();
    if rank < m {
        return Err(Error::RankDeficient(svd.singular_values.iter().copied().collect()));
    }
    svd.pseudo_inverse(RANK_TOL * top)
        .map_err(|e| Error::Lp(e.to_string()))
}

/// Left inverse minimizing the induced l1->l1 norm, found by linear
/// programming. This is the inverse used by the conditioning certificates:
/// the well-conditioning bound is existential over left inverses, and the
/// minimum-norm one realizes it.
pub fn balanced_left_inverse(emission: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n_i, m) = (emission.nrows(), emission.ncols());
    if emission_rank_dm(emission) < m {
        let sv = emission.clone().svd(false, false).singular_values;
        return Err(Error::RankDeficient(sv.iter().copied().collect()));
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    // G[i][j] = gp[i][j] - gn[i][j], plus the norm bound t.
    let gp: Vec<Vec<_>> = (0..m)
        .map(|_| (0..n_i).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect())
        .collect();
    let gn: Vec<Vec<_>> = (0..m)
        .map(|_| (0..n_i).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect())
        .collect();
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    for i in 0..m {
        for col in 0..m {
            let mut terms = Vec::with_capacity(2 * n_i);
            for j in 0..n_i {
                let e = emission[(j, col)];
                terms.push((gp[i][j], e));
                terms.push((gn[i][j], -e));
            }
            let rhs = if i == col { 1.0 } else { 0.0 };
            lp.add_constraint(&terms, ComparisonOp::Eq, rhs);
        }
    }
    for j in 0..n_i {
        let mut terms = Vec::with_capacity(2 * m + 1);
        for i in 0..m {
            terms.push((gp[i][j], 1.0));
            terms.push((gn[i][j], 1.0));
        }
        terms.push((t, -1.0));
        lp.add_constraint(&terms, ComparisonOp::Le, 0.0);
    }
    let sol = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;
    Ok(DMatrix::from_fn(m, n_i, |i, j| sol[gp[i][j]] - sol[gn[i][j]]))
}

fn emission_rank_dm(e: &DMatrix<f64>) -> usize {
    let sv = e.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * top).count()
}

/// Operators of one model, shared immutably.
#[derive(Debug, Clone)]
pub struct PsrOperators {
    pub model: Arc<LmdpPsi>,
    pub emission: DMatrix<f64>,
    pub left_inv: DMatrix<f64>,
    pub b0: DVector<f64>,
}

/// Builds operators with the Moore-Penrose left inverse.
pub fn build_operators(model: &Arc<LmdpPsi>) -> Result<PsrOperators> {
    let emission = emission_matrix(&model.emission);
    let left_inv = left_inverse(&emission)?;
    Ok(build_operators_with(model, emission, left_inv))
}

/// Builds operators with an explicitly supplied left inverse (used to verify
/// that probabilities do not depend on the choice).
pub fn build_operators_with(
    model: &Arc<LmdpPsi>,
    emission: DMatrix<f64>,
    left_inv: DMatrix<f64>,
) -> PsrOperators {
    let w = DVector::from_row_slice(&model.mixing);
    let b0 = &emission * &w;
    PsrOperators {
        model: Arc::clone(model),
        emission,
        left_inv,
        b0,
    }
}

impl PsrOperators {
    fn latent(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.left_inv * v
    }

    fn lift(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.emission * u
    }

    /// Applies the step-0 operator for the entered state `s1`.
    pub fn apply_init(&self, s1: usize, v: &DVector<f64>) -> DVector<f64> {
        let mut u = self.latent(v);
        for m in 0..self.model.num_contexts {
            u[m] *= self.model.init_dist[m][s1];
        }
        self.lift(&u)
    }

    /// Applies B(o, s_next | s, a); `s_next = None` is the horizon-final
    /// operator where the successor state is dropped.
    pub fn apply_step(
        &self,
        s: usize,
        a: usize,
        o: usize,
        s_next: Option<usize>,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let mut u = self.latent(v);
        for m in 0..self.model.num_contexts {
            u[m] *= self.model.step_factor(m, s, a, o, s_next);
        }
        self.lift(&u)
    }

    /// Materializes an operator as a dense |I| x |I| matrix (diagnostics and
    /// small-scale checks only).
    pub fn step_matrix(&self, s: usize, a: usize, o: usize, s_next: Option<usize>) -> DMatrix<f64> {
        let m_n = self.model.num_contexts;
        let diag =
            DVector::from_fn(m_n, |m, _| self.model.step_factor(m, s, a, o, s_next));
        &self.emission * DMatrix::from_diagonal(&diag) * &self.left_inv
    }
}

/// The (unnormalized and normalized) predictive state of a blind history
/// prefix. `t` is the decision step the prefix has reached; `b_bar` is `None`
/// exactly when the history has zero mass under the model.
#[derive(Debug, Clone)]
pub struct PsrState {
    pub b: DVector<f64>,
    pub b_bar: Option<DVector<f64>>,
    pub t: usize,
}

/// Clamps tiny negative entries to zero and returns the l1 mass together
/// with the normalized vector (`None` when the mass is numerically zero).
pub fn clamp_normalize(mut b: DVector<f64>) -> (DVector<f64>, f64, Option<DVector<f64>>) {
    for x in b.iter_mut() {
        if *x < 0.0 && *x >= -CLAMP_TOL {
            *x = 0.0;
        }
    }
    let norm = b.iter().map(|x| x.abs()).sum::<f64>();
    let b_bar = if norm > ZERO_MASS { Some(&b / norm) } else { None };
    (b, norm, b_bar)
}

impl PsrState {
    /// State before anything has been observed: b = b0.
    pub fn initial(ops: &PsrOperators) -> PsrState {
        PsrState::from_raw(ops.b0.clone(), 0)
    }

    fn from_raw(b: DVector<f64>, t: usize) -> PsrState {
        let (b, _, b_bar) = clamp_normalize(b);
        PsrState { b, b_bar, t }
    }

    pub fn mass(&self) -> f64 {
        self.b.iter().map(|x| x.abs()).sum()
    }

    pub fn is_zero_mass(&self) -> bool {
        self.b_bar.is_none()
    }

    /// Absorbs the entered initial state (decision step 1 begins).
    pub fn advance_init(&self, ops: &PsrOperators, s1: usize) -> PsrState {
        PsrState::from_raw(ops.apply_init(s1, &self.b), 1)
    }

    /// Absorbs one completed step (a, o, s_next) taken from state `s`.
    pub fn advance(&self, ops: &PsrOperators, s: usize, a: usize, o: usize, s_next: usize) -> PsrState {
        PsrState::from_raw(ops.apply_step(s, a, o, Some(s_next), &self.b), self.t + 1)
    }

    /// Absorbs the final step of the horizon, where no successor state is
    /// recorded.
    pub fn finish(&self, ops: &PsrOperators, s: usize, a: usize, o: usize) -> PsrState {
        PsrState::from_raw(ops.apply_step(s, a, o, None, &self.b), self.t + 1)
    }
}

/// A blind history prefix tau_t = (s_1, a_1, o_1, ..., s_t): the entered
/// state plus the completed steps, each recorded as (action, observation,
/// next state).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryPrefix {
    pub s1: usize,
    pub steps: Vec<(usize, usize, usize)>,
}

/// Predictive state of a history prefix, by left-multiplying operators in
/// order. Unreachable prefixes yield a zero-mass state, not an error.
pub fn psr_state(ops: &PsrOperators, prefix: &HistoryPrefix) -> PsrState {
    let mut state = PsrState::initial(ops).advance_init(ops, prefix.s1);
    let mut s = prefix.s1;
    for &(a, o, s_next) in &prefix.steps {
        state = state.advance(ops, s, a, o, s_next);
        s = s_next;
    }
    state
}

/// PSR route to the joint probability of (iota, tau) under a blind policy:
/// the telescoped operator product applied to b0, times the policy factor.
pub fn psr_trajectory_probability(
    ops: &PsrOperators,
    policy: &crate::planning::BlindPolicy,
    iota: usize,
    traj: &crate::env::TrajectoryRecord,
) -> f64 {
    let h = traj.steps.len();
    let mut v = ops.apply_init(traj.steps[0].state, &ops.b0);
    for (t, step) in traj.steps.iter().enumerate() {
        let s_next = traj.steps.get(t + 1).map(|st| st.state);
        v = ops.apply_step(step.state, step.action, step.obs, s_next, &v);
        debug_assert!(t < h);
    }
    v[iota] * crate::env::policy_factor(policy, traj)
}

enum Score<'a> {
    /// Sum over all side-information coordinates: terminal score ||E u||_1.
    Full,
    /// A fixed symbol iota: terminal score |E[iota, :] . u|.
    Row(&'a [f64]),
}

/// Certifier for the well-conditioning constants of one model. Holds the
/// minimum-l1-norm left inverse whose columns are the extreme points the
/// outer maximization ranges over.
pub struct ConditioningCertifier {
    model: Arc<LmdpPsi>,
    emission: DMatrix<f64>,
    start_vectors: Vec<DVector<f64>>,
}

impl ConditioningCertifier {
    pub fn new(model: &Arc<LmdpPsi>) -> Result<Self> {
        let emission = emission_matrix(&model.emission);
        let balanced = balanced_left_inverse(&emission)?;
        let start_vectors = (0..balanced.ncols())
            .map(|j| balanced.column(j).clone_owned())
            .collect();
        Ok(ConditioningCertifier {
            model: Arc::clone(model),
            emission,
            start_vectors,
        })
    }

    /// Induced l1->l1 norm of the certifying left inverse.
    pub fn left_inverse_norm(&self) -> f64 {
        self.start_vectors
            .iter()
            .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Exact well-conditioning constant at (t, x): the maximum over unit-l1
    /// vectors b and deterministic blind continuations of the summed future
    /// weight sum_{iota, omega} pi(omega) |psi(omega, iota | x)^T b|. The
    /// outer maximum is taken over the l1-ball vertices; the inner one by
    /// backward enumeration over futures.
    pub fn constant(&self, t: usize, x: (usize, usize), budget: u64) -> Result<f64> {
        self.max_over_vertices(t, x, Score::Full, budget)
    }

    /// Conditional counterpart at a fixed side-information symbol: the sum
    /// runs over futures only.
    pub fn conditional(&self, iota: usize, t: usize, x: (usize, usize), budget: u64) -> Result<f64> {
        let row: Vec<f64> = (0..self.emission.ncols())
            .map(|m| self.emission[(iota, m)])
            .collect();
        self.max_over_vertices(t, x, Score::Row(&row), budget)
    }

    fn max_over_vertices(&self, t: usize, x: (usize, usize), score: Score, budget: u64) -> Result<f64> {
        if t == 0 || t > self.model.horizon {
            return Err(Error::Config(format!("step {t} outside 1..={}", self.model.horizon)));
        }
        let mut best: f64 = 0.0;
        for u0 in &self.start_vectors {
            let mut nodes = 0u64;
            let v = self.action_value(t, x.0, x.1, u0, &score, &mut nodes, budget)?;
            best = best.max(v);
        }
        Ok(best)
    }

    fn score_of(&self, u: &DVector<f64>, score: &Score) -> f64 {
        match score {
            Score::Full => (&self.emission * u).iter().map(|x| x.abs()).sum(),
            Score::Row(row) => u
                .iter()
                .zip(row.iter())
                .map(|(ui, ri)| ui * ri)
                .sum::<f64>()
                .abs(),
        }
    }

    fn action_value(
        &self,
        t: usize,
        s: usize,
        a: usize,
        u: &DVector<f64>,
        score: &Score,
        nodes: &mut u64,
        budget: u64,
    ) -> Result<f64> {
        *nodes += 1;
        if *nodes > budget {
            return Err(Error::Budget { needed: *nodes, limit: budget });
        }
        let theta = &self.model;
        let m_n = theta.num_contexts;
        let mut total = 0.0;
        if t == theta.horizon {
            for o in 0..theta.num_obs {
                let scaled = DVector::from_fn(m_n, |m, _| u[m] * theta.obs(m, s, a, o));
                total += self.score_of(&scaled, score);
            }
            return Ok(total);
        }
        for o in 0..theta.num_obs {
            for s_next in 0..theta.num_states {
                let scaled =
                    DVector::from_fn(m_n, |m, _| u[m] * theta.step_factor(m, s, a, o, Some(s_next)));
                if scaled.iter().all(|x| *x == 0.0) {
                    continue;
                }
                let mut best = 0.0f64;
                for a_next in 0..theta.num_actions {
                    let v = self.action_value(t + 1, s_next, a_next, &scaled, score, nodes, budget)?;
                    best = best.max(v);
                }
                total += best;
            }
        }
        Ok(total)
    }
}

/// Quantizes a stochastic vector for memoization keys: twelve decimal digits,
/// far below any decision margin at desk scale.
pub fn quantize12(v: &[f64]) -> Vec<i64> {
    v.iter().map(|x| (x * 1e12).round() as i64).collect()
}
