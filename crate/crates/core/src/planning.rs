//! Exact finite-horizon planning: optimal blind and informed policies by
//! belief-state backward induction, the trajectory-bonus planner used by pure
//! exploration, a brute-force policy-enumeration oracle, and exact policy
//! evaluation by tree enumeration.
//!
//! Policies are stored as tables keyed by a filter statistic (a Bayes
//! posterior over contexts, or a normalized predictive state), quantized to
//! twelve decimal digits. A policy carries the model it was planned in; when
//! executed on a different environment, histories that are unreachable under
//! the planning model fall back to a fixed action.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::LmdpPsi;
use crate::error::{Error, Result};
use crate::psr::{clamp_normalize, quantize12, PsrOperators};

/// Which part of the history blind policies may condition on. The default is
/// the full (state, action, observation) prefix; the state-only restriction
/// drops past observations from the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditioning {
    FullHistory,
    StateOnly,
}

/// Memoization / table key: decision step, current state, quantized filter
/// statistic.
pub type TableKey = (u32, u32, Vec<i64>);

pub fn table_key(t: usize, s: usize, stat: &[f64]) -> TableKey {
    (t as u32, s as u32, quantize12(stat))
}

/// The sufficient statistic a table policy conditions on.
#[derive(Clone)]
pub enum Filter {
    /// Posterior over latent contexts under the filtering model, starting
    /// from `prior` (normalized; for per-symbol policies this is the
    /// side-information-tilted prior).
    Bayes {
        model: Arc<LmdpPsi>,
        prior: Vec<f64>,
        conditioning: Conditioning,
    },
    /// Normalized predictive state propagated by the filtering model's
    /// operators.
    Psr { ops: Arc<PsrOperators> },
}

impl std::fmt::Debug for Filter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Filter::Bayes { prior, conditioning, .. } => f
                .debug_struct("Bayes")
                .field("prior", prior)
                .field("conditioning", conditioning)
                .finish(),
            Filter::Psr { .. } => f.debug_struct("Psr").finish(),
        }
    }
}

/// Filter value along one history; `None` marks a history with zero mass
/// under the filtering model.
#[derive(Debug, Clone)]
pub enum FilterState {
    Bayes(Option<Vec<f64>>),
    Psr(Option<DVector<f64>>),
}

impl FilterState {
    pub fn is_zero_mass(&self) -> bool {
        match self {
            FilterState::Bayes(v) => v.is_none(),
            FilterState::Psr(v) => v.is_none(),
        }
    }

    fn stat(&self) -> Option<Vec<f64>> {
        match self {
            FilterState::Bayes(Some(v)) => Some(v.clone()),
            FilterState::Psr(Some(v)) => Some(v.iter().copied().collect()),
            _ => None,
        }
    }
}

fn normalize_in_place(v: &mut [f64]) -> f64 {
    let z: f64 = v.iter().sum();
    if z > 0.0 {
        for x in v.iter_mut() {
            *x /= z;
        }
    }
    z
}

impl Filter {
    /// Filter value after entering the initial state `s1`.
    pub fn begin(&self, s1: usize) -> FilterState {
        match self {
            Filter::Bayes { model, prior, .. } => {
                let mut v: Vec<f64> = (0..model.num_contexts)
                    .map(|m| prior[m] * model.init_dist[m][s1])
                    .collect();
                let z = normalize_in_place(&mut v);
                FilterState::Bayes((z > 0.0).then_some(v))
            }
            Filter::Psr { ops } => {
                let st = crate::psr::PsrState::initial(ops).advance_init(ops, s1);
                FilterState::Psr(st.b_bar)
            }
        }
    }

    /// Absorbs one completed step (s, a, o, s_next).
    pub fn advance(&self, st: &FilterState, s: usize, a: usize, o: usize, s_next: usize) -> FilterState {
        match (self, st) {
            (Filter::Bayes { model, conditioning, .. }, FilterState::Bayes(Some(v))) => {
                let mut nv: Vec<f64> = (0..model.num_contexts)
                    .map(|m| {
                        let step = match conditioning {
                            Conditioning::FullHistory => model.step_factor(m, s, a, o, Some(s_next)),
                            Conditioning::StateOnly => model.trans(m, s, a, s_next),
                        };
                        v[m] * step
                    })
                    .collect();
                let z = normalize_in_place(&mut nv);
                FilterState::Bayes((z > 0.0).then_some(nv))
            }
            (Filter::Psr { ops }, FilterState::Psr(Some(b_bar))) => {
                let raw = ops.apply_step(s, a, o, Some(s_next), b_bar);
                let (_, _, b_bar) = clamp_normalize(raw);
                FilterState::Psr(b_bar)
            }
            (Filter::Bayes { .. }, FilterState::Bayes(None)) => FilterState::Bayes(None),
            (Filter::Psr { .. }, FilterState::Psr(None)) => FilterState::Psr(None),
            _ => unreachable!("filter/state kind mismatch"),
        }
    }

    fn key(&self, t: usize, s: usize, st: &FilterState) -> Option<TableKey> {
        st.stat().map(|v| table_key(t, s, &v))
    }

    fn model(&self) -> &Arc<LmdpPsi> {
        match self {
            Filter::Bayes { model, .. } => model,
            Filter::Psr { ops } => &ops.model,
        }
    }
}

/// A deterministic policy stored as filter-key -> action.
#[derive(Debug, Clone)]
pub struct PolicyTable {
    pub filter: Filter,
    pub actions: HashMap<TableKey, usize>,
    pub fallback_action: usize,
    pub num_actions: usize,
}

/// A policy that ignores the side-information symbol.
#[derive(Debug, Clone)]
pub enum BlindPolicy {
    Table(Arc<PolicyTable>),
    /// Deterministic Markov policy: an action per (step, state).
    Markov { actions: Vec<Vec<usize>>, num_actions: usize },
    /// Uniformly random over all actions; the stochastic baseline.
    Uniform { num_actions: usize },
}

impl BlindPolicy {
    pub fn uniform(model: &LmdpPsi) -> BlindPolicy {
        BlindPolicy::Uniform { num_actions: model.num_actions }
    }

    pub fn cursor(&self) -> BlindCursor<'_> {
        BlindCursor { policy: self, state: None, t: 0 }
    }

    /// Stable content hash of the decision table.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        match self {
            BlindPolicy::Uniform { num_actions } => {
                hasher.update(format!("uniform:{num_actions}"));
            }
            BlindPolicy::Markov { actions, num_actions } => {
                hasher.update(format!("markov:{num_actions}:{actions:?}"));
            }
            BlindPolicy::Table(table) => {
                hasher.update(format!(
                    "table:fallback={}:filter={:?}\n",
                    table.fallback_action, table.filter
                ));
                let mut entries: Vec<(&TableKey, &usize)> = table.actions.iter().collect();
                entries.sort();
                for (k, a) in entries {
                    hasher.update(format!("{};{};{:?}=>{}\n", k.0, k.1, k.2, a));
                }
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Expands the policy over the reachable prefix tree of its filtering
    /// model into a serializable decision tree (prefix string -> action).
    pub fn decision_tree(&self, budget: u64) -> Result<serde_json::Value> {
        let mut map = serde_json::Map::new();
        match self {
            BlindPolicy::Uniform { num_actions } => {
                map.insert("kind".into(), "uniform".into());
                map.insert("num_actions".into(), (*num_actions).into());
            }
            BlindPolicy::Markov { actions, .. } => {
                map.insert("kind".into(), "markov".into());
                map.insert("actions".into(), serde_json::to_value(actions)?);
            }
            BlindPolicy::Table(table) => {
                map.insert("kind".into(), "table".into());
                let model = table.filter.model().clone();
                let mut nodes = serde_json::Map::new();
                let mut count = 0u64;
                for s1 in 0..model.num_states {
                    let st = table.filter.begin(s1);
                    if st.is_zero_mass() {
                        continue;
                    }
                    expand_tree(
                        &model,
                        table,
                        &mut nodes,
                        &format!("s{s1}"),
                        1,
                        s1,
                        &st,
                        &mut count,
                        budget,
                    )?;
                }
                map.insert("nodes".into(), serde_json::Value::Object(nodes));
            }
        }
        Ok(serde_json::Value::Object(map))
    }
}

#[allow(clippy::too_many_arguments)]
fn expand_tree(
    model: &Arc<LmdpPsi>,
    table: &PolicyTable,
    out: &mut serde_json::Map<String, serde_json::Value>,
    prefix: &str,
    t: usize,
    s: usize,
    st: &FilterState,
    count: &mut u64,
    budget: u64,
) -> Result<()> {
    *count += 1;
    if *count > budget {
        return Err(Error::Budget { needed: *count, limit: budget });
    }
    let action = lookup_action(table, t, s, st);
    out.insert(prefix.to_string(), action.into());
    if t == model.horizon {
        return Ok(());
    }
    for o in 0..model.num_obs {
        for s_next in 0..model.num_states {
            let child = table.filter.advance(st, s, action, o, s_next);
            if child.is_zero_mass() {
                continue;
            }
            let key = format!("{prefix}|a{action},o{o},s{s_next}");
            expand_tree(model, table, out, &key, t + 1, s_next, &child, count, budget)?;
        }
    }
    Ok(())
}

fn lookup_action(table: &PolicyTable, t: usize, s: usize, st: &FilterState) -> usize {
    table
        .filter
        .key(t, s, st)
        .and_then(|k| table.actions.get(&k).copied())
        .unwrap_or(table.fallback_action)
}

/// Streaming executor of a blind policy along one episode. Call
/// `action_distribution(s_t)` at each decision step, then `advance` with the
/// completed step.
pub struct BlindCursor<'a> {
    policy: &'a BlindPolicy,
    state: Option<FilterState>,
    t: usize,
}

impl BlindCursor<'_> {
    pub fn action_distribution(&mut self, s: usize) -> Vec<f64> {
        if self.t == 0 {
            self.t = 1;
            if let BlindPolicy::Table(table) = self.policy {
                self.state = Some(table.filter.begin(s));
            }
        }
        match self.policy {
            BlindPolicy::Uniform { num_actions } => {
                vec![1.0 / *num_actions as f64; *num_actions]
            }
            BlindPolicy::Markov { actions, num_actions } => {
                let mut dist = vec![0.0; *num_actions];
                dist[actions[self.t - 1][s]] = 1.0;
                dist
            }
            BlindPolicy::Table(table) => {
                let st = self.state.as_ref().unwrap();
                let action = lookup_action(table, self.t, s, st);
                let mut dist = vec![0.0; table.num_actions];
                dist[action] = 1.0;
                dist
            }
        }
    }

    pub fn advance(&mut self, s: usize, a: usize, o: usize, s_next: usize) {
        if let BlindPolicy::Table(table) = self.policy {
            if let Some(st) = self.state.take() {
                self.state = Some(table.filter.advance(&st, s, a, o, s_next));
            }
        }
        self.t += 1;
    }
}

/// A policy that may condition on the side-information symbol: one blind
/// policy per symbol, or a single shared blind policy.
#[derive(Debug, Clone)]
pub enum InformedPolicy {
    Shared(BlindPolicy),
    PerIota(Vec<BlindPolicy>),
}

impl InformedPolicy {
    pub fn shared(policy: BlindPolicy) -> InformedPolicy {
        InformedPolicy::Shared(policy)
    }

    pub fn component(&self, iota: usize) -> &BlindPolicy {
        match self {
            InformedPolicy::Shared(p) => p,
            InformedPolicy::PerIota(ps) => &ps[iota],
        }
    }

    pub fn cursor(&self, iota: usize) -> BlindCursor<'_> {
        self.component(iota).cursor()
    }

    pub fn content_hash(&self) -> String {
        match self {
            InformedPolicy::Shared(p) => p.content_hash(),
            InformedPolicy::PerIota(ps) => {
                let mut hasher = Sha256::new();
                for (iota, p) in ps.iter().enumerate() {
                    hasher.update(format!("{iota}:{}\n", p.content_hash()));
                }
                hex::encode(hasher.finalize())
            }
        }
    }
}

/// Per-(t, s, a) quadratic forms for the elliptical trajectory bonus. Cells
/// never visited stay at the regularizer and are served implicitly.
#[derive(Debug, Clone)]
pub struct BonusTables {
    pub lambda0: f64,
    pub dim: usize,
    /// Inverse matrices for visited cells, keyed by (t, s, a).
    pub inverses: HashMap<(usize, usize, usize), DMatrix<f64>>,
}

impl BonusTables {
    pub fn fresh(lambda0: f64, dim: usize) -> BonusTables {
        BonusTables { lambda0, dim, inverses: HashMap::new() }
    }

    /// The bonus ||b_bar||_{Lambda^{-1}} at cell (t, s, a).
    pub fn bonus(&self, t: usize, s: usize, a: usize, b_bar: &DVector<f64>) -> f64 {
        match self.inverses.get(&(t, s, a)) {
            Some(inv) => (b_bar.transpose() * inv * b_bar)[(0, 0)].max(0.0).sqrt(),
            None => (b_bar.dot(b_bar) / self.lambda0).sqrt(),
        }
    }
}

/// Inputs of the bonus-objective planner: the optimistic model's operators
/// and the current bonus tables.
#[derive(Debug, Clone)]
pub struct BonusSpec {
    pub ops: Arc<PsrOperators>,
    pub tables: BonusTables,
}

/// What a policy is scored on.
pub enum Objective<'a> {
    /// Expected cumulative decoded reward.
    Value,
    /// Expected cumulative elliptical bonus of the blind history, embedded by
    /// the reference model in `spec`.
    Bonus(&'a BonusSpec),
}

/// Exact expectation of the chosen objective under `theta`, by enumeration
/// of the (side info, trajectory) tree.
pub fn evaluate_policy(
    theta: &Arc<LmdpPsi>,
    policy: &InformedPolicy,
    objective: Objective<'_>,
    budget: u64,
) -> Result<f64> {
    let mut nodes = 0u64;
    match (policy, &objective) {
        // A shared blind policy makes every iota equivalent for the value
        // objective; one pass with the untilted mixture suffices.
        (InformedPolicy::Shared(blind), Objective::Value) => {
            eval_blind_pass(theta, blind, &objective, None, &mut nodes, budget)
        }
        (InformedPolicy::Shared(blind), Objective::Bonus(_)) => {
            eval_blind_pass(theta, blind, &objective, None, &mut nodes, budget)
        }
        (InformedPolicy::PerIota(per), _) => {
            let mut total = 0.0;
            for (iota, blind) in per.iter().enumerate() {
                total += eval_blind_pass(theta, blind, &objective, Some(iota), &mut nodes, budget)?;
            }
            Ok(total)
        }
    }
}

fn eval_blind_pass(
    theta: &Arc<LmdpPsi>,
    policy: &BlindPolicy,
    objective: &Objective<'_>,
    iota: Option<usize>,
    nodes: &mut u64,
    budget: u64,
) -> Result<f64> {
    let m_n = theta.num_contexts;
    let mut total = 0.0;
    for s1 in 0..theta.num_states {
        let w: Vec<f64> = (0..m_n)
            .map(|m| {
                let tilt = iota.map(|i| theta.emission[i][m]).unwrap_or(1.0);
                theta.mixing[m] * tilt * theta.init_dist[m][s1]
            })
            .collect();
        if w.iter().sum::<f64>() == 0.0 {
            continue;
        }
        let filter_state = policy_begin(policy, s1);
        let ref_state = match objective {
            Objective::Bonus(spec) => {
                let st = crate::psr::PsrState::initial(&spec.ops).advance_init(&spec.ops, s1);
                Some(st.b_bar)
            }
            Objective::Value => None,
        };
        total += eval_walk(
            theta,
            policy,
            objective,
            1,
            s1,
            &w,
            &filter_state,
            ref_state.as_ref(),
            nodes,
            budget,
        )?;
    }
    Ok(total)
}

fn policy_begin(policy: &BlindPolicy, s1: usize) -> Option<FilterState> {
    match policy {
        BlindPolicy::Table(table) => Some(table.filter.begin(s1)),
        _ => None,
    }
}

fn policy_dist(policy: &BlindPolicy, t: usize, s: usize, st: &Option<FilterState>) -> Vec<f64> {
    match policy {
        BlindPolicy::Uniform { num_actions } => vec![1.0 / *num_actions as f64; *num_actions],
        BlindPolicy::Markov { actions, num_actions } => {
            let mut dist = vec![0.0; *num_actions];
            dist[actions[t - 1][s]] = 1.0;
            dist
        }
        BlindPolicy::Table(table) => {
            let st = st.as_ref().expect("table policy has a filter state");
            let action = lookup_action(table, t, s, st);
            let mut dist = vec![0.0; table.num_actions];
            dist[action] = 1.0;
            dist
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn eval_walk(
    theta: &Arc<LmdpPsi>,
    policy: &BlindPolicy,
    objective: &Objective<'_>,
    t: usize,
    s: usize,
    w: &[f64],
    filter_state: &Option<FilterState>,
    ref_state: Option<&Option<DVector<f64>>>,
    nodes: &mut u64,
    budget: u64,
) -> Result<f64> {
    *nodes += 1;
    if *nodes > budget {
        return Err(Error::Budget { needed: *nodes, limit: budget });
    }
    let dist = policy_dist(policy, t, s, filter_state);
    let mass: f64 = w.iter().sum();
    let mut total = 0.0;
    for (a, pa) in dist.iter().enumerate() {
        if *pa == 0.0 {
            continue;
        }
        let immediate = match objective {
            Objective::Value => (0..theta.num_contexts)
                .map(|m| w[m] * theta.expected_reward(m, s, a))
                .sum::<f64>(),
            Objective::Bonus(spec) => match ref_state {
                Some(Some(b_bar)) => mass * spec.tables.bonus(t, s, a, b_bar),
                // Histories with no mass under the reference model carry no
                // bonus.
                _ => 0.0,
            },
        };
        total += pa * immediate;
        if t == theta.horizon {
            continue;
        }
        for o in 0..theta.num_obs {
            for s_next in 0..theta.num_states {
                let w_next: Vec<f64> = (0..theta.num_contexts)
                    .map(|m| w[m] * theta.step_factor(m, s, a, o, Some(s_next)))
                    .collect();
                if w_next.iter().sum::<f64>() == 0.0 {
                    continue;
                }
                let fs_next = filter_state.as_ref().map(|st| match policy {
                    BlindPolicy::Table(table) => table.filter.advance(st, s, a, o, s_next),
                    _ => unreachable!("only table policies carry filter state"),
                });
                let ref_next = ref_state.map(|rs| match rs {
                    Some(b_bar) => {
                        let spec = match objective {
                            Objective::Bonus(spec) => spec,
                            Objective::Value => unreachable!(),
                        };
                        let raw = spec.ops.apply_step(s, a, o, Some(s_next), b_bar);
                        let (_, _, nb) = clamp_normalize(raw);
                        nb
                    }
                    None => None,
                });
                total += pa
                    * eval_walk(
                        theta,
                        policy,
                        objective,
                        t + 1,
                        s_next,
                        &w_next,
                        &fs_next,
                        ref_next.as_ref(),
                        nodes,
                        budget,
                    )?;
            }
        }
    }
    Ok(total)
}

/// A planner result: the argmax policy and its exact objective value under
/// the planning model.
#[derive(Debug, Clone)]
pub struct Planned {
    pub policy: BlindPolicy,
    pub value: f64,
}

/// Optimal blind policy by backward induction on (t, state, posterior).
pub fn plan_blind_optimal(
    model: &Arc<LmdpPsi>,
    conditioning: Conditioning,
    budget: u64,
) -> Result<Planned> {
    plan_with_prior(model, model.mixing.clone(), conditioning, budget)
}

/// Optimal blind policy for a tilted prior over contexts (the per-symbol
/// subproblem of informed planning).
pub fn plan_with_prior(
    model: &Arc<LmdpPsi>,
    prior: Vec<f64>,
    conditioning: Conditioning,
    budget: u64,
) -> Result<Planned> {
    let filter = Filter::Bayes { model: Arc::clone(model), prior: prior.clone(), conditioning };
    let mut memo: HashMap<TableKey, (f64, usize)> = HashMap::new();
    let mut nodes = 0u64;
    let mut value = 0.0;
    for s1 in 0..model.num_states {
        let p_s1: f64 = (0..model.num_contexts)
            .map(|m| prior[m] * model.init_dist[m][s1])
            .sum();
        if p_s1 == 0.0 {
            continue;
        }
        let st = filter.begin(s1);
        value += p_s1 * plan_node(model, &filter, 1, s1, &st, &mut memo, &mut nodes, budget)?;
    }
    let table = PolicyTable {
        filter,
        actions: memo.into_iter().map(|(k, (_, a))| (k, a)).collect(),
        fallback_action: 0,
        num_actions: model.num_actions,
    };
    Ok(Planned { policy: BlindPolicy::Table(Arc::new(table)), value })
}

#[allow(clippy::too_many_arguments)]
fn plan_node(
    model: &Arc<LmdpPsi>,
    filter: &Filter,
    t: usize,
    s: usize,
    st: &FilterState,
    memo: &mut HashMap<TableKey, (f64, usize)>,
    nodes: &mut u64,
    budget: u64,
) -> Result<f64> {
    let key = filter.key(t, s, st).expect("planner only visits reachable nodes");
    if let Some((v, _)) = memo.get(&key) {
        return Ok(*v);
    }
    *nodes += 1;
    if *nodes > budget {
        return Err(Error::Budget { needed: *nodes, limit: budget });
    }
    let belief = match st {
        FilterState::Bayes(Some(v)) => v.clone(),
        _ => unreachable!("blind planner uses the Bayes filter"),
    };
    let conditioning = match filter {
        Filter::Bayes { conditioning, .. } => *conditioning,
        Filter::Psr { .. } => unreachable!(),
    };
    let mut best = f64::NEG_INFINITY;
    let mut best_action = 0usize;
    for a in 0..model.num_actions {
        let mut q: f64 = (0..model.num_contexts)
            .map(|m| belief[m] * model.expected_reward(m, s, a))
            .sum();
        if t < model.horizon {
            match conditioning {
                Conditioning::FullHistory => {
                    for o in 0..model.num_obs {
                        for s_next in 0..model.num_states {
                            let p: f64 = (0..model.num_contexts)
                                .map(|m| belief[m] * model.step_factor(m, s, a, o, Some(s_next)))
                                .sum();
                            if p == 0.0 {
                                continue;
                            }
                            let child = filter.advance(st, s, a, o, s_next);
                            q += p * plan_node(model, filter, t + 1, s_next, &child, memo, nodes, budget)?;
                        }
                    }
                }
                Conditioning::StateOnly => {
                    // Observations do not enter the filter; branch on states
                    // only, with any observation index as a placeholder.
                    for s_next in 0..model.num_states {
                        let p: f64 = (0..model.num_contexts)
                            .map(|m| belief[m] * model.trans(m, s, a, s_next))
                            .sum();
                        if p == 0.0 {
                            continue;
                        }
                        let child = filter.advance(st, s, a, 0, s_next);
                        q += p * plan_node(model, filter, t + 1, s_next, &child, memo, nodes, budget)?;
                    }
                }
            }
        }
        if q > best {
            best = q;
            best_action = a;
        }
    }
    memo.insert(key, (best, best_action));
    Ok(best)
}

/// A planned informed policy with its exact value.
#[derive(Debug, Clone)]
pub struct PlannedInformed {
    pub policy: InformedPolicy,
    pub value: f64,
}

/// Optimal informed policy: an independent blind plan per side-information
/// symbol under the tilted prior, combined by the symbol marginals.
pub fn plan_informed_optimal(
    model: &Arc<LmdpPsi>,
    conditioning: Conditioning,
    budget: u64,
) -> Result<PlannedInformed> {
    let mut per = Vec::with_capacity(model.num_side_info);
    let mut value = 0.0;
    for iota in 0..model.num_side_info {
        let p_iota = model.iota_marginal(iota);
        if p_iota == 0.0 {
            // Never observed; any component works.
            per.push(BlindPolicy::uniform(model));
            continue;
        }
        let mut prior: Vec<f64> = (0..model.num_contexts)
            .map(|m| model.mixing[m] * model.emission[iota][m])
            .collect();
        normalize_in_place(&mut prior);
        let planned = plan_with_prior(model, prior, conditioning, budget)?;
        value += p_iota * planned.value;
        per.push(planned.policy);
    }
    Ok(PlannedInformed { policy: InformedPolicy::PerIota(per), value })
}

/// Exact maximizer of the expected cumulative bonus over blind policies, by
/// backward induction on the raw history tree of the reference model. The
/// bonus depends on the history only through (t, x, normalized state), which
/// is what gets memoized.
pub fn plan_bonus_optimal(spec: &BonusSpec, budget: u64) -> Result<Planned> {
    let model = Arc::clone(&spec.ops.model);
    let filter = Filter::Psr { ops: Arc::clone(&spec.ops) };
    let mut memo: HashMap<TableKey, (f64, usize)> = HashMap::new();
    let mut nodes = 0u64;
    let mut value = 0.0;
    for s1 in 0..model.num_states {
        let st = crate::psr::PsrState::initial(&spec.ops).advance_init(&spec.ops, s1);
        let mass = st.mass();
        if let Some(b_bar) = st.b_bar {
            value += mass * bonus_node(spec, &model, 1, s1, &b_bar, &mut memo, &mut nodes, budget)?;
        }
    }
    let table = PolicyTable {
        filter,
        actions: memo.into_iter().map(|(k, (_, a))| (k, a)).collect(),
        fallback_action: 0,
        num_actions: model.num_actions,
    };
    Ok(Planned { policy: BlindPolicy::Table(Arc::new(table)), value })
}

#[allow(clippy::too_many_arguments)]
fn bonus_node(
    spec: &BonusSpec,
    model: &Arc<LmdpPsi>,
    t: usize,
    s: usize,
    b_bar: &DVector<f64>,
    memo: &mut HashMap<TableKey, (f64, usize)>,
    nodes: &mut u64,
    budget: u64,
) -> Result<f64> {
    let key = table_key(t, s, b_bar.as_slice());
    if let Some((v, _)) = memo.get(&key) {
        return Ok(*v);
    }
    *nodes += 1;
    if *nodes > budget {
        return Err(Error::Budget { needed: *nodes, limit: budget });
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_action = 0usize;
    for a in 0..model.num_actions {
        let mut q = spec.tables.bonus(t, s, a, b_bar);
        if t < model.horizon {
            for o in 0..model.num_obs {
                for s_next in 0..model.num_states {
                    let raw = spec.ops.apply_step(s, a, o, Some(s_next), b_bar);
                    let (_, mass, child) = clamp_normalize(raw);
                    if let Some(child) = child {
                        q += mass * bonus_node(spec, model, t + 1, s_next, &child, memo, nodes, budget)?;
                    }
                }
            }
        }
        if q > best {
            best = q;
            best_action = a;
        }
    }
    memo.insert(key, (best, best_action));
    Ok(best)
}

/// Which class the enumeration oracle searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyClass {
    Blind,
    Informed,
}

/// One node of the explicit prefix tree the oracle assigns actions to.
struct TreeNode {
    t: usize,
    s: usize,
    /// Children per action: (o, s_next, child node id).
    children: Vec<Vec<(usize, usize, usize)>>,
}

fn build_prefix_tree(model: &LmdpPsi) -> (Vec<TreeNode>, Vec<usize>) {
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut roots = Vec::new();
    for s1 in 0..model.num_states {
        let root = add_node(model, &mut nodes, 1, s1);
        roots.push(root);
    }
    (nodes, roots)
}

fn add_node(model: &LmdpPsi, nodes: &mut Vec<TreeNode>, t: usize, s: usize) -> usize {
    let id = nodes.len();
    nodes.push(TreeNode { t, s, children: vec![Vec::new(); model.num_actions] });
    if t < model.horizon {
        for a in 0..model.num_actions {
            let mut kids = Vec::new();
            for o in 0..model.num_obs {
                for s_next in 0..model.num_states {
                    // Keep a branch if any context can produce it.
                    let reachable = (0..model.num_contexts)
                        .any(|m| model.step_factor(m, s, a, o, Some(s_next)) > 0.0);
                    if reachable {
                        let child = add_node(model, nodes, t + 1, s_next);
                        kids.push((o, s_next, child));
                    }
                }
            }
            nodes[id].children[a] = kids;
        }
    }
    id
}

/// Exhaustive maximum over deterministic policies in the class, ties broken
/// by lexicographic (lowest) action assignment. Independent of the belief
/// machinery: policies are raw prefix-tree action tables evaluated by
/// direct weighted tree walks.
pub fn enumerate_policies_oracle(
    model: &Arc<LmdpPsi>,
    class: PolicyClass,
    objective: Objective<'_>,
    max_policies: u64,
) -> Result<f64> {
    let (nodes, roots) = build_prefix_tree(model);
    let n_assign = nodes.len();
    let mut count = 1f64;
    for _ in 0..n_assign {
        count *= model.num_actions as f64;
        if count > max_policies as f64 {
            return Err(Error::Budget { needed: count as u64, limit: max_policies });
        }
    }
    match class {
        PolicyClass::Blind => {
            let best = best_over_assignments(model, &nodes, &roots, &objective, None)?;
            Ok(best)
        }
        PolicyClass::Informed => {
            let mut total = 0.0;
            for iota in 0..model.num_side_info {
                if model.iota_marginal(iota) == 0.0 {
                    continue;
                }
                total += best_over_assignments(model, &nodes, &roots, &objective, Some(iota))?;
            }
            Ok(total)
        }
    }
}

fn best_over_assignments(
    model: &Arc<LmdpPsi>,
    nodes: &[TreeNode],
    roots: &[usize],
    objective: &Objective<'_>,
    iota: Option<usize>,
) -> Result<f64> {
    let mut assignment = vec![0usize; nodes.len()];
    let mut best = f64::NEG_INFINITY;
    loop {
        let v = assignment_value(model, nodes, roots, &assignment, objective, iota);
        if v > best {
            best = v;
        }
        // Odometer increment in lexicographic order.
        let mut i = nodes.len();
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            assignment[i] += 1;
            if assignment[i] < model.num_actions {
                break;
            }
            assignment[i] = 0;
        }
    }
}

fn assignment_value(
    model: &Arc<LmdpPsi>,
    nodes: &[TreeNode],
    roots: &[usize],
    assignment: &[usize],
    objective: &Objective<'_>,
    iota: Option<usize>,
) -> f64 {
    let mut total = 0.0;
    for (s1, root) in roots.iter().enumerate() {
        let w: Vec<f64> = (0..model.num_contexts)
            .map(|m| {
                let tilt = iota.map(|i| model.emission[i][m]).unwrap_or(1.0);
                model.mixing[m] * tilt * model.init_dist[m][s1]
            })
            .collect();
        if w.iter().sum::<f64>() == 0.0 {
            continue;
        }
        let ref_state = match objective {
            Objective::Bonus(spec) => {
                let st = crate::psr::PsrState::initial(&spec.ops).advance_init(&spec.ops, s1);
                Some(st.b_bar)
            }
            Objective::Value => None,
        };
        total += assignment_walk(model, nodes, *root, assignment, objective, &w, ref_state.as_ref());
    }
    total
}

fn assignment_walk(
    model: &Arc<LmdpPsi>,
    nodes: &[TreeNode],
    node_id: usize,
    assignment: &[usize],
    objective: &Objective<'_>,
    w: &[f64],
    ref_state: Option<&Option<DVector<f64>>>,
) -> f64 {
    let node = &nodes[node_id];
    let a = assignment[node_id];
    let mut total = match objective {
        Objective::Value => (0..model.num_contexts)
            .map(|m| w[m] * model.expected_reward(m, node.s, a))
            .sum::<f64>(),
        Objective::Bonus(spec) => match ref_state {
            Some(Some(b_bar)) => w.iter().sum::<f64>() * spec.tables.bonus(node.t, node.s, a, b_bar),
            _ => 0.0,
        },
    };
    for &(o, s_next, child) in &node.children[a] {
        let w_next: Vec<f64> = (0..model.num_contexts)
            .map(|m| w[m] * model.step_factor(m, node.s, a, o, Some(s_next)))
            .collect();
        if w_next.iter().sum::<f64>() == 0.0 {
            continue;
        }
        let ref_next = ref_state.map(|rs| match rs {
            Some(b_bar) => {
                let spec = match objective {
                    Objective::Bonus(spec) => spec,
                    Objective::Value => unreachable!(),
                };
                let raw = spec.ops.apply_step(node.s, a, o, Some(s_next), b_bar);
                let (_, _, nb) = clamp_normalize(raw);
                nb
            }
            None => None,
        });
        total += assignment_walk(model, nodes, child, assignment, objective, &w_next, ref_next.as_ref());
    }
    total
}
