//! Monotone bivariate regression over a finite partially ordered covariate set.
//!
//! Node sets are `u64` bitmasks. Fits use the upper-set form of the min-max
//! formula, `g(z) = min_{x': z not in x'} max_{x > x'} T(P_{x \ x'})`, over all
//! pairs of nested upper sets, so the cost grows with the square of the number
//! of upper sets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::audit::{check_simultaneous_with, AuditOptions, Comparison};
use crate::error::{Error, Result};
use crate::functional::{cmp_f64, lower_quantile_sorted, upper_quantile_sorted, Bound, FunctionalSpec, WeightFunction};
use crate::joint::{fit_g2_given_g1, relative_weights, same_values, ConvergenceConfig, PairKind};
use crate::monotone::{pooled_fit, Direction, MonotoneFit};
use crate::sample::ChainSample;

/// Largest supported number of nodes.
pub const DEFAULT_NODE_CAP: usize = 20;
/// Largest number of upper sets for which fits are attempted.
pub const DEFAULT_UPPER_SET_CAP: usize = 4096;

/// A finite poset with observations at every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosetSample {
    nodes: Vec<String>,
    /// Covering relations `(a, b)` with `a < b`, i.e. the transitive reduction.
    edges: Vec<(usize, usize)>,
    groups: Vec<Vec<f64>>,
    /// `up[i]`: nodes `j` with `i <= j`, including `i`.
    up: Vec<u64>,
    /// `down[i]`: nodes `j` with `j <= i`, including `i`.
    down: Vec<u64>,
    /// Nodes ordered so that every node precedes its successors.
    topo: Vec<usize>,
}

fn bit(i: usize) -> u64 {
    1u64 << i
}

fn members(mask: u64) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

impl PosetSample {
    /// Build from node ids, relations `a <= b` between ids and per-node responses.
    pub fn new(nodes: Vec<String>, relations: &[(String, String)], groups: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_cap(nodes, relations, groups, DEFAULT_NODE_CAP)
    }

    pub fn with_cap(
        nodes: Vec<String>,
        relations: &[(String, String)],
        groups: Vec<Vec<f64>>,
        node_cap: usize,
    ) -> Result<Self> {
        let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        if index.len() != nodes.len() {
            return Err(Error::InvalidParameter("duplicate node id".into()));
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::UnknownNode(name.to_string()))
        };
        let edges = relations
            .iter()
            .map(|(a, b)| Ok((lookup(a)?, lookup(b)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_indices_with_cap(nodes, &edges, groups, node_cap)
    }

    /// Build from relations `(a, b)` meaning `nodes[a] <= nodes[b]`.
    pub fn from_indices(nodes: Vec<String>, edges: &[(usize, usize)], groups: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_indices_with_cap(nodes, edges, groups, DEFAULT_NODE_CAP)
    }

    fn from_indices_with_cap(
        nodes: Vec<String>,
        edges: &[(usize, usize)],
        groups: Vec<Vec<f64>>,
        node_cap: usize,
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let cap = node_cap.min(64);
        if n > cap {
            return Err(Error::TooLarge {
                what: "nodes",
                actual: n,
                limit: cap,
            });
        }
        if groups.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: groups.len(),
            });
        }
        if let Some(i) = groups.iter().position(|g| g.is_empty()) {
            return Err(Error::InvalidParameter(format!(
                "node {:?} has no observations",
                nodes[i]
            )));
        }
        if groups.iter().flatten().any(|y| !y.is_finite()) {
            return Err(Error::InvalidParameter("observations must be finite".into()));
        }
        let mut succ = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::UnknownNode(format!("#{}", a.max(b))));
            }
            if a != b {
                succ[a].push(b);
            }
        }
        let topo = topological_order(&succ)
            .map_err(|cycle| Error::Cycle(cycle.into_iter().map(|i| nodes[i].clone()).collect()))?;
        let mut up = vec![0u64; n];
        for &v in topo.iter().rev() {
            up[v] = bit(v);
            for &w in &succ[v] {
                up[v] |= up[w];
            }
        }
        let mut down = vec![0u64; n];
        for (i, &u) in up.iter().enumerate() {
            for j in members(u) {
                down[j] |= bit(i);
            }
        }
        let mut reduced = Vec::new();
        for i in 0..n {
            let strict_up = up[i] & !bit(i);
            for j in members(strict_up) {
                let between = strict_up & down[j] & !bit(j);
                if between == 0 {
                    reduced.push((i, j));
                }
            }
        }
        Ok(PosetSample {
            nodes,
            edges: reduced,
            groups,
            up,
            down,
            topo,
        })
    }

    /// The total order of a chain sample, with node ids `z0, z1, ...`.
    /// Chains are accepted up to 64 nodes since they have few upper sets.
    pub fn from_chain(sample: &ChainSample) -> Result<Self> {
        let n = sample.len();
        let nodes = (0..n).map(|i| format!("z{i}")).collect();
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_indices_with_cap(nodes, &edges, sample.groups().to_vec(), 64)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn n_obs(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn full_mask(&self) -> u64 {
        if self.len() == 64 {
            u64::MAX
        } else {
            bit(self.len()) - 1
        }
    }

    /// `a <= b` in the partial order.
    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.up[a] & bit(b) != 0
    }

    pub fn is_upper_set(&self, mask: u64) -> bool {
        members(mask).all(|i| self.up[i] & !mask == 0)
    }

    pub fn is_lower_set(&self, mask: u64) -> bool {
        members(mask).all(|i| self.down[i] & !mask == 0)
    }

    /// Node indices in an order compatible with the partial order.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Whether every pair of nodes is comparable.
    pub fn is_chain(&self) -> bool {
        (0..self.len()).all(|i| (self.up[i] | self.down[i]) == self.full_mask())
    }

    /// The chain sample of a totally ordered poset, in increasing order.
    pub fn as_chain(&self) -> Option<ChainSample> {
        if !self.is_chain() {
            return None;
        }
        let z = (0..self.len()).map(|i| i as f64).collect();
        let groups = self.topo.iter().map(|&i| self.groups[i].clone()).collect();
        ChainSample::from_groups(z, groups).ok()
    }

    fn chain_order(&self, values: &[f64]) -> Vec<f64> {
        self.topo.iter().map(|&i| values[i]).collect()
    }

    fn unchain_order(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        for (&i, &v) in self.topo.iter().zip(values) {
            out[i] = v;
        }
        out
    }

    /// Subposet on `mask` with the induced order. Returns it with the original
    /// indices of its nodes.
    pub fn induced(&self, mask: u64) -> Result<(PosetSample, Vec<usize>)> {
        let keep: Vec<usize> = members(mask & self.full_mask()).collect();
        if keep.is_empty() {
            return Err(Error::EmptyInput);
        }
        let pos: HashMap<usize, usize> = keep.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let mut edges = Vec::new();
        for &i in &keep {
            for j in members(self.up[i] & mask & !bit(i)) {
                edges.push((pos[&i], pos[&j]));
            }
        }
        let nodes = keep.iter().map(|&i| self.nodes[i].clone()).collect();
        let groups = keep.iter().map(|&i| self.groups[i].clone()).collect();
        Ok((Self::from_indices_with_cap(nodes, &edges, groups, 64)?, keep))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: len,
            });
        }
        Ok(())
    }

    fn check_weights(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "weights must be positive and finite, got {w}"
            )));
        }
        Ok(())
    }
}

/// Kahn's algorithm; on failure returns a cycle as a node sequence whose
/// consecutive entries (and last to first) are related.
fn topological_order(succ: &[Vec<usize>]) -> Result<Vec<usize>, Vec<usize>> {
    let n = succ.len();
    let mut indeg = vec![0usize; n];
    for s in succ {
        for &j in s {
            indeg[j] += 1;
        }
    }
    let mut stack: Vec<usize> = (0..n).rev().filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = stack.pop() {
        order.push(v);
        for &w in succ[v].iter().rev() {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                stack.push(w);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Every remaining node has a remaining predecessor, so walking
    // predecessors inside the remainder must revisit a node.
    let remaining: Vec<bool> = indeg.iter().map(|&d| d > 0).collect();
    let mut pred = vec![Vec::new(); n];
    for (i, s) in succ.iter().enumerate() {
        for &j in s {
            pred[j].push(i);
        }
    }
    let start = (0..n).find(|&i| remaining[i]).expect("a node on a cycle");
    let mut seen = vec![usize::MAX; n];
    let mut path = Vec::new();
    let mut v = start;
    while seen[v] == usize::MAX {
        seen[v] = path.len();
        path.push(v);
        v = *pred[v]
            .iter()
            .find(|&&u| remaining[u])
            .expect("remaining nodes have remaining predecessors");
    }
    let mut cycle = path[seen[v]..].to_vec();
    cycle.reverse();
    Err(cycle)
}

/// Every upper set of a poset, each exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperSetFamily {
    sets: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl UpperSetFamily {
    pub fn sets(&self) -> &[u64] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn contains(&self, mask: u64) -> bool {
        self.index.contains_key(&mask)
    }

    pub fn position(&self, mask: u64) -> Option<usize> {
        self.index.get(&mask).copied()
    }

    /// Each set as a list of node ids.
    pub fn named(&self, poset: &PosetSample) -> Vec<Vec<String>> {
        self.sets
            .iter()
            .map(|&m| members(m).map(|i| poset.nodes[i].clone()).collect())
            .collect()
    }
}

/// Enumerate all upper sets by deciding nodes from the top of the order down:
/// a node may join only if all of its strict successors already have.
pub fn enumerate_upper_sets(poset: &PosetSample) -> Result<UpperSetFamily> {
    enumerate_upper_sets_capped(poset, usize::MAX)
}

pub fn enumerate_upper_sets_capped(poset: &PosetSample, max_sets: usize) -> Result<UpperSetFamily> {
    let order: Vec<usize> = poset.topo.iter().rev().copied().collect();
    let mut sets = Vec::new();
    let mut stack = vec![(0usize, 0u64)];
    while let Some((k, mask)) = stack.pop() {
        if k == order.len() {
            sets.push(mask);
            if sets.len() > max_sets {
                return Err(Error::TooLarge {
                    what: "upper sets",
                    actual: sets.len(),
                    limit: max_sets,
                });
            }
            continue;
        }
        let v = order[k];
        stack.push((k + 1, mask));
        if poset.up[v] & !bit(v) & !mask == 0 {
            stack.push((k + 1, mask | bit(v)));
        }
    }
    sets.sort_by_key(|m| (m.count_ones(), *m));
    let index = sets.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    Ok(UpperSetFamily { sets, index })
}

/// `T` of the weighted observations on the nodes in `mask`.
fn set_functional(groups: &[Vec<f64>], weights: &[f64], mask: u64, spec: &FunctionalSpec, bound: Bound) -> f64 {
    match *spec {
        FunctionalSpec::Mean => {
            let (mut s, mut w) = (0.0, 0.0);
            for i in members(mask) {
                s += weights[i] * groups[i].iter().sum::<f64>();
                w += weights[i] * groups[i].len() as f64;
            }
            s / w
        }
        FunctionalSpec::Quantile { alpha } => {
            let mut obs: Vec<(f64, f64)> = members(mask)
                .flat_map(|i| groups[i].iter().map(move |&y| (y, weights[i])))
                .collect();
            obs.sort_by(|a, b| cmp_f64(&a.0, &b.0));
            let total: f64 = obs.iter().map(|o| o.1).sum();
            match bound {
                Bound::Lower => lower_quantile_sorted(&obs, total, alpha),
                Bound::Upper => upper_quantile_sorted(&obs, total, alpha),
            }
        }
    }
}

/// Both upper-set min-max forms of the increasing fit:
/// `min_{x': z not in x'} max_{x > x'} T` and `max_{x: z in x} min_{x' < x} T`.
fn upper_set_minmax(
    poset: &PosetSample,
    family: &UpperSetFamily,
    groups: &[Vec<f64>],
    weights: &[f64],
    spec: &FunctionalSpec,
    bound: Bound,
) -> (Vec<f64>, Vec<f64>) {
    let sets = family.sets();
    let mut max_over_supersets = vec![f64::NEG_INFINITY; sets.len()];
    let mut min_over_subsets = vec![f64::INFINITY; sets.len()];
    for (a, &x) in sets.iter().enumerate() {
        for (b, &xp) in sets.iter().enumerate() {
            if xp == x || xp & !x != 0 {
                continue;
            }
            let t = set_functional(groups, weights, x & !xp, spec, bound);
            if t > max_over_supersets[b] {
                max_over_supersets[b] = t;
            }
            if t < min_over_subsets[a] {
                min_over_subsets[a] = t;
            }
        }
    }
    let n = poset.len();
    let mut min_max = vec![f64::INFINITY; n];
    let mut max_min = vec![f64::NEG_INFINITY; n];
    for (k, &x) in sets.iter().enumerate() {
        for z in 0..n {
            if x & bit(z) == 0 {
                min_max[z] = min_max[z].min(max_over_supersets[k]);
            } else {
                max_min[z] = max_min[z].max(min_over_subsets[k]);
            }
        }
    }
    (min_max, max_min)
}

fn family_for_fit(poset: &PosetSample) -> Result<UpperSetFamily> {
    enumerate_upper_sets_capped(poset, DEFAULT_UPPER_SET_CAP)
}

fn assert_forms_agree(a: &[f64], b: &[f64]) {
    debug_assert!(
        a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0)),
        "upper-set min-max forms disagree: {a:?} vs {b:?}"
    );
}

/// Both min-max representations of the weighted increasing fit.
pub fn poset_minmax_representations(
    poset: &PosetSample,
    weights: &[f64],
    spec: &FunctionalSpec,
    bound: Bound,
) -> Result<(Vec<f64>, Vec<f64>)> {
    poset.check_weights(weights)?;
    let family = family_for_fit(poset)?;
    Ok(upper_set_minmax(poset, &family, &poset.groups, weights, spec, bound))
}

/// Weighted increasing fit of `spec` over the poset, one value per node.
pub fn poset_minmax_fit(poset: &PosetSample, weights: &[f64], spec: &FunctionalSpec, bound: Bound) -> Result<Vec<f64>> {
    let (a, b) = poset_minmax_representations(poset, weights, spec, bound)?;
    assert_forms_agree(&a, &b);
    Ok(a)
}

fn node_losses(poset: &PosetSample, g1: &[f64], spec: &FunctionalSpec) -> Vec<Vec<f64>> {
    poset
        .groups
        .iter()
        .zip(g1)
        .map(|(g, &x)| g.iter().map(|&y| spec.base_loss(x, y)).collect())
        .collect()
}

/// Monotone mean fit of the transformed losses `L(g1(z), y)`; decreasing fits
/// are negated increasing fits of the negated losses. Chains use the chain solver.
pub fn poset_fit_g2_given_g1(
    poset: &PosetSample,
    g1: &[f64],
    spec: &FunctionalSpec,
    direction: Direction,
) -> Result<Vec<f64>> {
    if g1.len() != poset.len() {
        return Err(Error::DimensionMismatch {
            expected: poset.len(),
            actual: g1.len(),
        });
    }
    if let Some(chain) = poset.as_chain() {
        let g1 = MonotoneFit::from_monotone(poset.chain_order(g1), Direction::Increasing, Bound::Lower);
        let fit = fit_g2_given_g1(&chain, &g1, spec, direction)?;
        return Ok(poset.unchain_order(fit.values()));
    }
    let sign = match direction {
        Direction::Increasing => 1.0,
        Direction::Decreasing => -1.0,
    };
    let losses: Vec<Vec<f64>> = node_losses(poset, g1, spec)
        .into_iter()
        .map(|g| g.into_iter().map(|v| sign * v).collect())
        .collect();
    let family = family_for_fit(poset)?;
    let ones = vec![1.0; poset.len()];
    let (a, b) = upper_set_minmax(poset, &family, &losses, &ones, &FunctionalSpec::Mean, Bound::Lower);
    assert_forms_agree(&a, &b);
    Ok(a.into_iter().map(|v| sign * v).collect())
}

/// A fitted pair on a poset, indexed like the poset's nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosetFit {
    pub nodes: Vec<String>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub pair: PairKind,
    pub iterations: usize,
    pub converged: bool,
    pub clamp_warnings: usize,
    #[serde(default)]
    pub polish_steps: usize,
}

impl PosetFit {
    pub fn get(&self, node: &str) -> Option<(f64, f64)> {
        let i = self.nodes.iter().position(|n| n == node)?;
        Some((self.g1[i], self.g2[i]))
    }
}

pub fn poset_canonical_pair(poset: &PosetSample, pair: PairKind) -> Result<PosetFit> {
    let spec = pair.spec();
    let g1 = lower_fit(poset, &vec![1.0; poset.len()], &spec)?;
    let g2 = poset_fit_g2_given_g1(poset, &g1, &spec, pair.g2_direction())?;
    Ok(PosetFit {
        nodes: poset.nodes.clone(),
        g1,
        g2,
        pair,
        iterations: 0,
        converged: true,
        clamp_warnings: 0,
        polish_steps: 0,
    })
}

pub fn poset_total_joint_loss(poset: &PosetSample, fit: &PosetFit, w: &WeightFunction) -> Result<f64> {
    poset_joint_loss_values(poset, &fit.pair.spec(), w, &fit.g1, &fit.g2)
}

fn poset_joint_loss_values(
    poset: &PosetSample,
    spec: &FunctionalSpec,
    w: &WeightFunction,
    g1: &[f64],
    g2: &[f64],
) -> Result<f64> {
    poset.check_len(g1.len())?;
    poset.check_len(g2.len())?;
    let mut total = 0.0;
    for &i in &poset.topo {
        let (group, x1, x2) = (&poset.groups[i], g1[i], g2[i]);
        let h = w.h(x2)?;
        let big_h = w.primitive(x2)?;
        for &y in group {
            total += big_h + h * (spec.base_loss(x1, y) - x2);
        }
    }
    Ok(total)
}

/// Lower `g1` fit with node weights `h(g2)` rescaled to sum to the number of
/// observations. Returns the fit and the number of clamped weight evaluations.
/// Chains use the chain solver, so alternating runs match it step for step.
pub fn poset_fit_g1_given_g2(
    poset: &PosetSample,
    g2: &[f64],
    spec: &FunctionalSpec,
    w: &WeightFunction,
) -> Result<(Vec<f64>, usize)> {
    poset.check_len(g2.len())?;
    // Normalized in topological order so chains reproduce the chain solver's weights.
    let mult: Vec<usize> = poset.topo.iter().map(|&i| poset.groups[i].len()).collect();
    let (weights, clamps) = relative_weights(&poset.chain_order(g2), &mult, w)?;
    Ok((lower_fit(poset, &poset.unchain_order(&weights), spec)?, clamps))
}

/// Lower increasing fit; chains go through the chain solver.
fn lower_fit(poset: &PosetSample, weights: &[f64], spec: &FunctionalSpec) -> Result<Vec<f64>> {
    match poset.as_chain() {
        Some(chain) => {
            let fit = pooled_fit(
                &chain,
                &poset.chain_order(weights),
                spec,
                Direction::Increasing,
                Bound::Lower,
            )?;
            Ok(poset.unchain_order(fit.values()))
        }
        None => poset_minmax_fit(poset, weights, spec, Bound::Lower),
    }
}

/// Alternating minimization on a poset, with the same stopping rule,
/// iteration count and fixed-point polish as the chain solver.
pub fn poset_alternating_solve(
    poset: &PosetSample,
    pair: PairKind,
    w: &WeightFunction,
    cfg: &ConvergenceConfig,
) -> Result<PosetFit> {
    let spec = pair.spec();
    let mut fit = poset_canonical_pair(poset, pair)?;
    let mut loss = poset_total_joint_loss(poset, &fit, w)?;
    if poset.len() == 1 {
        return Ok(fit);
    }
    fit.converged = false;
    for _ in 0..cfg.max_iterations {
        let (g1, clamps) = poset_fit_g1_given_g2(poset, &fit.g2, &spec, w)?;
        fit.clamp_warnings += clamps;
        if g1 == fit.g1 {
            fit.converged = true;
            break;
        }
        let g2 = poset_fit_g2_given_g1(poset, &g1, &spec, pair.g2_direction())?;
        let new_loss = poset_joint_loss_values(poset, &spec, w, &g1, &g2)?;
        if !(loss - new_loss >= cfg.improvement_threshold(loss, poset.n_obs())) {
            fit.converged = true;
            break;
        }
        fit.g1 = g1;
        fit.g2 = g2;
        fit.iterations += 1;
        loss = new_loss;
    }
    if fit.converged {
        fit.converged = false;
        for _ in 0..cfg.max_iterations {
            let (g1, clamps) = poset_fit_g1_given_g2(poset, &fit.g2, &spec, w)?;
            fit.clamp_warnings += clamps;
            let g2 = poset_fit_g2_given_g1(poset, &g1, &spec, pair.g2_direction())?;
            if same_values(&g1, &fit.g1) && same_values(&g2, &fit.g2) {
                fit.converged = true;
                break;
            }
            let new_loss = poset_joint_loss_values(poset, &spec, w, &g1, &g2)?;
            if new_loss - loss > cfg.improvement_threshold(loss, poset.n_obs()) {
                break;
            }
            fit.g1 = g1;
            fit.g2 = g2;
            fit.polish_steps += 1;
            loss = loss.min(new_loss);
        }
    }
    Ok(fit)
}

/// One sublevel set `{z : g2(z) <= level}` of the canonical `g2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetCheck {
    pub nodes: Vec<String>,
    pub mask: u64,
    pub g2_level: f64,
    pub restricted_loss: f64,
    pub refit_loss: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosetSimultaneityReport {
    pub simultaneous: bool,
    pub checked_sets: Vec<LevelSetCheck>,
    pub tolerance: f64,
    /// Verdict of the chain criterion when the poset is totally ordered.
    pub chain_verdict: Option<bool>,
    /// Set when `chain_verdict` differs from `simultaneous`.
    pub chain_disagreement: bool,
}

fn base_loss_on(poset: &PosetSample, nodes: &[usize], values: &[f64], spec: &FunctionalSpec) -> f64 {
    nodes
        .iter()
        .zip(values)
        .map(|(&i, &x)| poset.groups[i].iter().map(|&y| spec.base_loss(x, y)).sum::<f64>())
        .sum()
}

/// Check every proper sublevel set of the canonical `g2`: the canonical `g1`
/// restricted to it must agree with a lower refit there.
pub fn poset_check_simultaneous(poset: &PosetSample, pair: PairKind, tol: f64) -> Result<PosetSimultaneityReport> {
    poset_check_simultaneous_with(poset, pair, tol, Comparison::default())
}

pub fn poset_check_simultaneous_with(
    poset: &PosetSample,
    pair: PairKind,
    tol: f64,
    comparison: Comparison,
) -> Result<PosetSimultaneityReport> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter("tolerance must be nonnegative".into()));
    }
    let spec = pair.spec();
    let fit = poset_canonical_pair(poset, pair)?;
    let mut levels = fit.g2.clone();
    levels.sort_by(cmp_f64);
    levels.dedup();
    let full = poset.full_mask();
    let mut checked = Vec::new();
    for &level in &levels {
        let mask = (0..poset.len())
            .filter(|&i| fit.g2[i] <= level)
            .fold(0u64, |m, i| m | bit(i));
        if mask == full {
            continue;
        }
        let (sub, keep) = poset.induced(mask)?;
        let refit = poset_minmax_fit(&sub, &vec![1.0; sub.len()], &spec, Bound::Lower)?;
        let restricted: Vec<f64> = keep.iter().map(|&i| fit.g1[i]).collect();
        let restricted_loss = base_loss_on(poset, &keep, &restricted, &spec);
        let refit_loss = base_loss_on(poset, &keep, &refit, &spec);
        let passed = match comparison {
            Comparison::Values => restricted
                .iter()
                .zip(&refit)
                .all(|(a, b)| (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)),
            Comparison::Loss => (restricted_loss - refit_loss).abs() <= tol * refit_loss.abs().max(1.0),
        };
        checked.push(LevelSetCheck {
            nodes: keep.iter().map(|&i| poset.nodes[i].clone()).collect(),
            mask,
            g2_level: level,
            restricted_loss,
            refit_loss,
            passed,
        });
    }
    let simultaneous = checked.iter().all(|c| c.passed);
    let chain_verdict = match poset.as_chain() {
        Some(chain) => {
            let opts = AuditOptions {
                tolerance: tol,
                comparison,
                ..AuditOptions::default()
            };
            Some(check_simultaneous_with(&chain, pair, &opts)?.simultaneous)
        }
        None => None,
    };
    Ok(PosetSimultaneityReport {
        simultaneous,
        checked_sets: checked,
        tolerance: tol,
        chain_disagreement: chain_verdict.is_some_and(|v| v != simultaneous),
        chain_verdict,
    })
}

/// Upper sets minimizing `sum_{z in x} w_z sum_k V(eta, y_zk)`.
pub fn minimizing_upper_sets(
    poset: &PosetSample,
    family: &UpperSetFamily,
    weights: &[f64],
    spec: &FunctionalSpec,
    eta: f64,
) -> Result<Vec<u64>> {
    poset.check_weights(weights)?;
    let per_node: Vec<f64> = poset
        .groups
        .iter()
        .zip(weights)
        .map(|(g, w)| w * g.iter().map(|&y| spec.identification(eta, y)).sum::<f64>())
        .collect();
    let sums: Vec<f64> = family
        .sets()
        .iter()
        .map(|&m| members(m).map(|i| per_node[i]).sum())
        .collect();
    let scale = sums.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(family
        .sets()
        .iter()
        .zip(&sums)
        .filter(|(_, &s)| s <= min + 1e-12 * scale)
        .map(|(&m, _)| m)
        .collect())
}
