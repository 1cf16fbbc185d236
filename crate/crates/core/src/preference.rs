//! The three-question decision procedure and the resulting preference order.
//!
//! Q1: does a system beat random guessing (MAR below the α-quantile of P0)?
//! Q2: is the difference between two systems significant at α?
//! Q3: is Glass's Δ at least the practical threshold?
//!
//! Strict preferences feed a partial order whose transitive reduction is the
//! Hasse diagram. Indifference is recorded separately and is not transitive.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::accuracy::{absolute_residuals, mar, PredictionRun};
use crate::baseline::BaselineDistribution;
use crate::effect::{glass_delta, glass_delta_from_residuals, EffectCategory};
use crate::error::{Error, Result};
use crate::inference::{mann_whitney_u, wilcoxon_signed_rank, Tail};
use crate::summary;

/// Label of the random-guessing pseudo-system.
pub const GUESSING_ID: &str = "P0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailPolicy {
    TwoSided,
    /// One-sided in the direction of the lower-MAR system.
    OneSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Paired when both runs cover the same case ids, unpaired otherwise.
    Auto,
    Paired,
    Unpaired,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig {
    pub alpha: f64,
    pub delta_threshold: f64,
    pub tail: TailPolicy,
    pub pairing: Pairing,
    /// Keep strict edges between systems that both fail Q1.
    pub include_not_predicting: bool,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            delta_threshold: 0.2,
            tail: TailPolicy::TwoSided,
            pairing: Pairing::Auto,
            include_not_predicting: false,
        }
    }
}

impl DecisionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::OutOfRange(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.delta_threshold >= 0.0) {
            return Err(Error::OutOfRange(format!("delta threshold {} must be nonnegative", self.delta_threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Q1Outcome {
    pub pass: bool,
    pub mar: f64,
    /// MAR of guessing at quantile α.
    pub threshold: f64,
    /// Share of guessing runs at least as accurate.
    pub empirical_p: f64,
}

/// Checks that the run's actuals are the baseline's evaluation set, possibly
/// repeated (repeated cross-validation).
fn check_same_evaluation_set(run: &PredictionRun, baseline: &BaselineDistribution) -> Result<()> {
    let base = baseline.actuals();
    let mismatch = || {
        Error::MismatchedEvaluationSet(format!(
            "run {} has {} actuals, baseline was built on {}",
            run.system_id(),
            run.len(),
            base.len()
        ))
    };
    if base.is_empty() || !run.len().is_multiple_of(base.len()) {
        return Err(mismatch());
    }
    let repeats = run.len() / base.len();
    let mut expected: Vec<f64> = base.iter().flat_map(|&v| std::iter::repeat_n(v, repeats)).collect();
    expected.sort_by(f64::total_cmp);
    let mut got = run.actuals().to_vec();
    got.sort_by(f64::total_cmp);
    if got != expected {
        return Err(mismatch());
    }
    Ok(())
}

/// Q1: passes when the run's MAR is strictly below the α-quantile of guessing.
pub fn q1_better_than_guessing(run: &PredictionRun, baseline: &BaselineDistribution, alpha: f64) -> Result<Q1Outcome> {
    check_same_evaluation_set(run, baseline)?;
    let threshold = baseline.quantile(alpha)?;
    let m = mar(run);
    Ok(Q1Outcome { pass: m < threshold, mar: m, threshold, empirical_p: baseline.empirical_p(m) })
}

/// Relation between the left and right system; "precedes" means "is worse than".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    LeftPrecedesRight,
    RightPrecedesLeft,
    Indifferent,
    Incomparable,
}

impl Relation {
    pub fn swapped(self) -> Self {
        match self {
            Relation::LeftPrecedesRight => Relation::RightPrecedesLeft,
            Relation::RightPrecedesLeft => Relation::LeftPrecedesRight,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    SignedRank,
    MannWhitney,
    Guessing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub q1_left: Option<bool>,
    pub q1_right: Option<bool>,
    pub mar_left: Option<f64>,
    pub mar_right: Option<f64>,
    pub test: Option<TestKind>,
    pub p_value: Option<f64>,
    pub delta_magnitude: Option<f64>,
    pub delta_category: Option<EffectCategory>,
    /// The rank test pointed the other way from the MAR ordering.
    pub direction_conflict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub left_id: String,
    pub right_id: String,
    pub relation: Relation,
    pub evidence: Evidence,
    /// Both systems failed Q1, so neither is predicting at all.
    pub not_predicting: bool,
}

impl PairVerdict {
    /// Same verdict with the two sides exchanged.
    pub fn swapped(&self) -> Self {
        let e = &self.evidence;
        Self {
            left_id: self.right_id.clone(),
            right_id: self.left_id.clone(),
            relation: self.relation.swapped(),
            evidence: Evidence {
                q1_left: e.q1_right,
                q1_right: e.q1_left,
                mar_left: e.mar_right,
                mar_right: e.mar_left,
                ..e.clone()
            },
            not_predicting: self.not_predicting,
        }
    }

    /// `(worse, better)` for strict verdicts.
    pub fn strict_edge(&self) -> Option<(&str, &str)> {
        match self.relation {
            Relation::LeftPrecedesRight => Some((&self.left_id, &self.right_id)),
            Relation::RightPrecedesLeft => Some((&self.right_id, &self.left_id)),
            _ => None,
        }
    }
}

/// Applies Q2 and Q3 to already computed evidence. The lower-MAR side is the
/// candidate for preference; Q1 only tags the verdict.
pub fn decide(evidence: &Evidence, config: &DecisionConfig) -> (Relation, bool) {
    let not_predicting = evidence.q1_left == Some(false) && evidence.q1_right == Some(false);
    let (Some(ml), Some(mr)) = (evidence.mar_left, evidence.mar_right) else {
        return (Relation::Incomparable, false);
    };
    let significant = evidence.p_value.is_some_and(|p| p < config.alpha);
    let meaningful = evidence.delta_magnitude.is_some_and(|d| d >= config.delta_threshold);
    if !significant || !meaningful || evidence.direction_conflict || ml == mr {
        return (Relation::Indifferent, not_predicting);
    }
    let (relation, better_q1, worse_q1) = if ml < mr {
        (Relation::RightPrecedesLeft, evidence.q1_left, evidence.q1_right)
    } else {
        (Relation::LeftPrecedesRight, evidence.q1_right, evidence.q1_left)
    };
    // a system failing Q1 never wins against one that passes
    if better_q1 == Some(false) && worse_q1 == Some(true) {
        return (Relation::Indifferent, not_predicting);
    }
    (relation, not_predicting)
}

enum Aligned {
    Paired(Vec<f64>, Vec<f64>),
    Unpaired(Vec<f64>, Vec<f64>),
}

fn align(run1: &PredictionRun, run2: &PredictionRun, pairing: Pairing) -> Result<Aligned> {
    let r1 = absolute_residuals(run1);
    let r2 = absolute_residuals(run2);
    if pairing == Pairing::Unpaired {
        return Ok(Aligned::Unpaired(r1, r2));
    }
    if run1.case_ids() == run2.case_ids() {
        if run1.actuals() != run2.actuals() {
            return Err(Error::MismatchedPairing(format!(
                "{} and {} disagree on actual values",
                run1.system_id(),
                run2.system_id()
            )));
        }
        return Ok(Aligned::Paired(r1, r2));
    }
    let index: HashMap<&str, usize> = run2.case_ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let same_set = run1.len() == run2.len()
        && index.len() == run2.len()
        && run1.case_ids().iter().all(|id| index.contains_key(id.as_str()));
    if !same_set {
        return match pairing {
            Pairing::Paired => Err(Error::MismatchedPairing(format!(
                "{} and {} do not cover the same cases",
                run1.system_id(),
                run2.system_id()
            ))),
            _ => Ok(Aligned::Unpaired(r1, r2)),
        };
    }
    let mut aligned = Vec::with_capacity(r1.len());
    for (i, id) in run1.case_ids().iter().enumerate() {
        let j = index[id.as_str()];
        if run1.actuals()[i] != run2.actuals()[j] {
            return Err(Error::MismatchedPairing(format!("case {id} has different actuals")));
        }
        aligned.push(r2[j]);
    }
    Ok(Aligned::Paired(r1, aligned))
}

/// Runs Q1–Q3 on two systems evaluated over the same data set.
pub fn evaluate_pair(
    run1: &PredictionRun,
    run2: &PredictionRun,
    baseline: &BaselineDistribution,
    config: &DecisionConfig,
) -> Result<PairVerdict> {
    config.validate()?;
    let mut evidence = Evidence {
        q1_left: None,
        q1_right: None,
        mar_left: None,
        mar_right: None,
        test: None,
        p_value: None,
        delta_magnitude: None,
        delta_category: None,
        direction_conflict: false,
    };
    let verdict = |relation, evidence, not_predicting| PairVerdict {
        left_id: run1.system_id().to_string(),
        right_id: run2.system_id().to_string(),
        relation,
        evidence,
        not_predicting,
    };

    if let (Some(d1), Some(d2)) = (run1.dataset(), run2.dataset()) {
        if d1 != d2 {
            // MAR is not comparable across data sets
            return Ok(verdict(Relation::Incomparable, evidence, false));
        }
    }

    let q1 = q1_better_than_guessing(run1, baseline, config.alpha)?;
    let q2 = q1_better_than_guessing(run2, baseline, config.alpha)?;
    evidence.q1_left = Some(q1.pass);
    evidence.q1_right = Some(q2.pass);
    evidence.mar_left = Some(q1.mar);
    evidence.mar_right = Some(q2.mar);

    let left_better = q1.mar <= q2.mar;
    let tail = match config.tail {
        TailPolicy::TwoSided => Tail::TwoSided,
        TailPolicy::OneSided if left_better => Tail::Less,
        TailPolicy::OneSided => Tail::Greater,
    };

    let (res1, res2, test) = match align(run1, run2, config.pairing)? {
        Aligned::Paired(a, b) => {
            let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let test = match wilcoxon_signed_rank(&diffs, tail) {
                Ok(t) => Some(t),
                Err(Error::AllDifferencesZero) => None,
                Err(e) => return Err(e),
            };
            evidence.test = Some(TestKind::SignedRank);
            (a, b, test)
        }
        Aligned::Unpaired(a, b) => {
            let test = mann_whitney_u(&a, &b, tail)?;
            evidence.test = Some(TestKind::MannWhitney);
            (a, b, Some(test))
        }
    };
    evidence.p_value = Some(test.as_ref().map_or(1.0, |t| t.p_value));
    if test.is_some() {
        evidence.direction_conflict = conflicts_with_mar(evidence.test, q1.mar, q2.mar, &res1, &res2);
    }

    let (treatment, control) = if left_better { (&res1, &res2) } else { (&res2, &res1) };
    let effect = glass_delta_from_residuals(treatment, control)?;
    evidence.delta_magnitude = Some(effect.magnitude);
    evidence.delta_category = Some(effect.category);

    let (relation, not_predicting) = decide(&evidence, config);
    Ok(verdict(relation, evidence, not_predicting))
}

/// True when the rank statistic puts the higher-MAR system ahead.
fn conflicts_with_mar(
    kind: Option<TestKind>,
    mar_left: f64,
    mar_right: f64,
    res_left: &[f64],
    res_right: &[f64],
) -> bool {
    if mar_left == mar_right {
        return false;
    }
    // U of the left residuals, or W+ of (left − right), against its null mean:
    // above it means the left residuals tend to be larger.
    let (statistic, null_mean) = match kind {
        Some(TestKind::MannWhitney) => {
            let pooled: Vec<f64> = res_left.iter().chain(res_right).copied().collect();
            let (ranks, _) = summary::midranks(&pooled);
            let n1 = res_left.len() as f64;
            let u = ranks[..res_left.len()].iter().sum::<f64>() - n1 * (n1 + 1.0) / 2.0;
            (u, n1 * res_right.len() as f64 / 2.0)
        }
        _ => {
            let diffs: Vec<f64> = res_left.iter().zip(res_right).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
            let (ranks, _) = summary::midranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
            let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
            let n = diffs.len() as f64;
            (w_plus, n * (n + 1.0) / 4.0)
        }
    };
    (mar_left < mar_right && statistic > null_mean) || (mar_left > mar_right && statistic < null_mean)
}

/// Q1 expressed as a verdict between the guessing pseudo-system and `run`.
pub fn versus_guessing(
    run: &PredictionRun,
    baseline: &BaselineDistribution,
    config: &DecisionConfig,
) -> Result<PairVerdict> {
    config.validate()?;
    let q1 = q1_better_than_guessing(run, baseline, config.alpha)?;
    let relation = if q1.pass {
        Relation::LeftPrecedesRight
    } else if q1.empirical_p > 1.0 - config.alpha {
        Relation::RightPrecedesLeft
    } else {
        Relation::Indifferent
    };
    let effect = glass_delta(q1.mar, baseline.mean_mar, baseline.sd_abs_residuals).ok();
    Ok(PairVerdict {
        left_id: GUESSING_ID.to_string(),
        right_id: run.system_id().to_string(),
        relation,
        evidence: Evidence {
            q1_left: None,
            q1_right: Some(q1.pass),
            mar_left: Some(baseline.mean_mar),
            mar_right: Some(q1.mar),
            test: Some(TestKind::Guessing),
            p_value: Some(q1.empirical_p),
            delta_magnitude: effect.as_ref().map(|e| e.magnitude),
            delta_category: effect.as_ref().map(|e| e.category),
            direction_conflict: false,
        },
        not_predicting: false,
    })
}

/// Every system against guessing, then every unordered pair of systems in
/// input order.
pub fn compare_all(
    runs: &[PredictionRun],
    baseline: &BaselineDistribution,
    config: &DecisionConfig,
) -> Result<Vec<PairVerdict>> {
    let mut verdicts = runs.iter().map(|r| versus_guessing(r, baseline, config)).collect::<Result<Vec<_>>>()?;
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            verdicts.push(evaluate_pair(a, b, baseline, config)?);
        }
    }
    Ok(verdicts)
}

/// Strict preferences and indifferences over a set of prediction systems.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PreferenceGraph {
    pub nodes: BTreeSet<String>,
    /// `(worse, better)` pairs.
    pub strict_edges: BTreeSet<(String, String)>,
    /// Unordered pairs stored with the smaller label first.
    pub indifferences: BTreeSet<(String, String)>,
    pub verdicts: Vec<PairVerdict>,
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl PreferenceGraph {
    /// Builds a graph directly from edges; rejects cycles and conflicts.
    pub fn from_edges<'a>(
        nodes: impl IntoIterator<Item = &'a str>,
        strict: impl IntoIterator<Item = (&'a str, &'a str)>,
        indifferent: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut g = PreferenceGraph::default();
        g.nodes.extend(nodes.into_iter().map(str::to_string));
        for (w, b) in strict {
            g.nodes.insert(w.to_string());
            g.nodes.insert(b.to_string());
            g.strict_edges.insert((w.to_string(), b.to_string()));
        }
        for (a, b) in indifferent {
            g.nodes.insert(a.to_string());
            g.nodes.insert(b.to_string());
            g.indifferences.insert(unordered(a, b));
        }
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (w, b) in &self.strict_edges {
            if self.indifferences.contains(&unordered(w, b)) {
                return Err(Error::ConflictingVerdicts(w.clone(), b.clone()));
            }
        }
        if let Some(cycle) = find_cycle(&self.nodes, &self.strict_edges) {
            return Err(Error::CycleDetected(cycle));
        }
        Ok(())
    }

    /// All `(worse, better)` pairs implied by transitivity.
    pub fn closure(&self) -> BTreeSet<(String, String)> {
        let (names, reach) = reachability(&self.nodes, &self.strict_edges);
        let mut out = BTreeSet::new();
        for (i, row) in reach.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if r {
                    out.insert((names[i].clone(), names[j].clone()));
                }
            }
        }
        out
    }

    /// Systems nothing is strictly worse than.
    pub fn minimal_elements(&self) -> Vec<String> {
        let better: BTreeSet<&String> = self.strict_edges.iter().map(|(_, b)| b).collect();
        self.nodes.iter().filter(|n| !better.contains(n)).cloned().collect()
    }
}

/// Assembles verdicts into a preference graph. Strict verdicts between two
/// non-predicting systems are left out unless `include_not_predicting`.
pub fn build_order(verdicts: &[PairVerdict], include_not_predicting: bool) -> Result<PreferenceGraph> {
    let mut g = PreferenceGraph::default();
    let mut seen: BTreeMap<(String, String), Relation> = BTreeMap::new();
    for v in verdicts {
        g.nodes.insert(v.left_id.clone());
        g.nodes.insert(v.right_id.clone());
        if v.left_id == v.right_id {
            continue;
        }
        let key = unordered(&v.left_id, &v.right_id);
        let normalized = if key.0 == v.left_id { v.relation } else { v.relation.swapped() };
        if let Some(prev) = seen.insert(key.clone(), normalized) {
            if prev != normalized {
                let both_strict = matches!(prev, Relation::LeftPrecedesRight | Relation::RightPrecedesLeft)
                    && matches!(normalized, Relation::LeftPrecedesRight | Relation::RightPrecedesLeft);
                if !both_strict {
                    return Err(Error::ConflictingVerdicts(key.0, key.1));
                }
                // opposite strict verdicts fall through to the cycle check
            }
        }
        match v.relation {
            Relation::Indifferent => {
                g.indifferences.insert(key);
            }
            Relation::LeftPrecedesRight | Relation::RightPrecedesLeft => {
                if v.not_predicting && !include_not_predicting {
                    continue;
                }
                let (w, b) = v.strict_edge().expect("strict relation");
                g.strict_edges.insert((w.to_string(), b.to_string()));
            }
            Relation::Incomparable => {}
        }
    }
    g.verdicts = verdicts.to_vec();
    g.validate()?;
    Ok(g)
}

fn index_of(nodes: &BTreeSet<String>) -> (Vec<String>, HashMap<&str, usize>) {
    let names: Vec<String> = nodes.iter().cloned().collect();
    let idx = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    (names, idx)
}

fn adjacency(nodes: &BTreeSet<String>, edges: &BTreeSet<(String, String)>) -> (Vec<String>, Vec<Vec<usize>>) {
    let (names, idx) = index_of(nodes);
    let mut adj = vec![Vec::new(); names.len()];
    for (a, b) in edges {
        adj[idx[a.as_str()]].push(idx[b.as_str()]);
    }
    (names, adj)
}

fn find_cycle(nodes: &BTreeSet<String>, edges: &BTreeSet<(String, String)>) -> Option<Vec<String>> {
    let (names, adj) = adjacency(nodes, edges);
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; names.len()];
    let mut stack: Vec<usize> = Vec::new();

    fn visit(u: usize, adj: &[Vec<usize>], state: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        state[u] = 1;
        stack.push(u);
        for &v in &adj[u] {
            if state[v] == 1 {
                let start = stack.iter().position(|&s| s == v).expect("on stack");
                let mut cycle = stack[start..].to_vec();
                cycle.push(v);
                return Some(cycle);
            }
            if state[v] == 0 {
                if let Some(c) = visit(v, adj, state, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        state[u] = 2;
        None
    }

    for u in 0..names.len() {
        if state[u] == 0 {
            if let Some(c) = visit(u, &adj, &mut state, &mut stack) {
                return Some(c.into_iter().map(|i| names[i].clone()).collect());
            }
        }
    }
    None
}

fn reachability(nodes: &BTreeSet<String>, edges: &BTreeSet<(String, String)>) -> (Vec<String>, Vec<Vec<bool>>) {
    let (names, adj) = adjacency(nodes, edges);
    let n = names.len();
    let mut reach = vec![vec![false; n]; n];
    for s in 0..n {
        let mut stack = adj[s].clone();
        while let Some(v) = stack.pop() {
            if !reach[s][v] {
                reach[s][v] = true;
                stack.extend(&adj[v]);
            }
        }
    }
    (names, reach)
}

/// Cover pairs `(lower, upper)`: `lower ≺ upper` with nothing strictly between.
pub fn hasse_edges(graph: &PreferenceGraph) -> Result<Vec<(String, String)>> {
    if let Some(cycle) = find_cycle(&graph.nodes, &graph.strict_edges) {
        return Err(Error::CycleDetected(cycle));
    }
    let (names, reach) = reachability(&graph.nodes, &graph.strict_edges);
    let n = names.len();
    let mut covers = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if reach[u][v] && !(0..n).any(|w| reach[u][w] && reach[w][v]) {
                covers.push((names[u].clone(), names[v].clone()));
            }
        }
    }
    Ok(covers)
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering: cover edges point from worse to better with the better
/// system drawn above; indifferences are dashed and undirected.
pub fn emit_dot(graph: &PreferenceGraph) -> Result<String> {
    let covers = hasse_edges(graph)?;
    let mut out = String::from("digraph preferences {\n  rankdir=BT;\n  node [shape=box];\n");
    for n in &graph.nodes {
        out.push_str(&format!("  {};\n", dot_id(n)));
    }
    for (lo, hi) in &covers {
        out.push_str(&format!("  {} -> {};\n", dot_id(lo), dot_id(hi)));
    }
    for (a, b) in &graph.indifferences {
        out.push_str(&format!("  {} -> {} [style=dashed, dir=none, constraint=false];\n", dot_id(a), dot_id(b)));
    }
    out.push_str("}\n");
    Ok(out)
}
