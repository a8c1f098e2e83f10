//! Structure-recovery metrics: TPR, FDR, SHD, and the structural
//! intervention distance.
//!
//! Conventions follow the usual continuous-structure-learning evaluation
//! pipeline: a reversed edge counts as a false discovery (and earns no TPR
//! credit) and costs 1 in SHD.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Dag;

/// Directed-edge confusion counts between an estimate and the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GraphConfusion {
    pub true_positive: usize,
    /// Predicted edges whose endpoints are non-adjacent in the truth.
    pub false_positive: usize,
    /// Predicted edges present in the truth with flipped orientation.
    pub reversed: usize,
    /// True edges absent from the estimate in either orientation.
    pub missing: usize,
    pub predicted_edges: usize,
    pub true_edges: usize,
}

impl GraphConfusion {
    pub fn compute(est: &Dag, truth: &Dag) -> Result<Self> {
        if est.d() != truth.d() {
            return Err(Error::dims(format!(
                "estimate has d={}, truth has d={}",
                est.d(),
                truth.d()
            )));
        }
        let mut tp = 0;
        let mut fp = 0;
        let mut rev = 0;
        for (s, t) in est.edges() {
            if truth.has_edge(s, t) {
                tp += 1;
            } else if truth.has_edge(t, s) {
                rev += 1;
            } else {
                fp += 1;
            }
        }
        let mut missing = 0;
        for (s, t) in truth.edges() {
            if !est.has_edge(s, t) && !est.has_edge(t, s) {
                missing += 1;
            }
        }
        Ok(GraphConfusion {
            true_positive: tp,
            false_positive: fp,
            reversed: rev,
            missing,
            predicted_edges: est.edge_count(),
            true_edges: truth.edge_count(),
        })
    }
}

/// Metric bundle for one estimate/truth pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub tpr: f64,
    pub fdr: f64,
    pub shd: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sid: Option<usize>,
    pub runtime_s: f64,
}

/// TPR, FDR, and SHD (reversal cost 1). SID is computed separately.
pub fn evaluate_graph(est: &Dag, truth: &Dag) -> Result<MetricsReport> {
    let c = GraphConfusion::compute(est, truth)?;
    let tpr = if c.true_edges == 0 {
        0.0
    } else {
        c.true_positive as f64 / c.true_edges as f64
    };
    let fdr = (c.reversed + c.false_positive) as f64 / c.predicted_edges.max(1) as f64;
    let shd = c.missing + c.false_positive + c.reversed;
    Ok(MetricsReport {
        tpr,
        fdr,
        shd,
        sid: None,
        runtime_s: 0.0,
    })
}

/// Nodes with a directed path from `from` (excluding `from` itself).
fn descendants(dag: &Dag, from: usize) -> Vec<bool> {
    dag.descendants(from)
}

/// Nodes with a directed path to `to`, including `to`.
fn ancestors_incl(dag: &Dag, to: usize) -> Vec<bool> {
    let d = dag.d();
    let mut seen = vec![false; d];
    seen[to] = true;
    let mut stack = vec![to];
    while let Some(v) = stack.pop() {
        for p in dag.parents(v) {
            if !seen[p] {
                seen[p] = true;
                stack.push(p);
            }
        }
    }
    seen
}

/// d-separation by reachability over (node, entry-direction) states.
/// `blocked_from_source` removes the given source->child edges first
/// (the proper-backdoor modification).
fn d_connected(
    dag: &Dag,
    source: usize,
    target: usize,
    given: &[bool],
    removed_source_children: &[bool],
) -> bool {
    let d = dag.d();
    // ancestors of the conditioning set, including the set itself
    let mut anc_given = given.to_vec();
    let mut stack: Vec<usize> = (0..d).filter(|&v| given[v]).collect();
    while let Some(v) = stack.pop() {
        for p in dag.parents(v) {
            if !anc_given[p] {
                anc_given[p] = true;
                stack.push(p);
            }
        }
    }

    let edge_removed = |s: usize, t: usize| s == source && removed_source_children[t];

    // state: (node, arrived-from-child?)
    let mut visited = vec![[false; 2]; d];
    let mut queue: Vec<(usize, bool)> = vec![(source, true)];
    while let Some((v, from_child)) = queue.pop() {
        if visited[v][usize::from(from_child)] {
            continue;
        }
        visited[v][usize::from(from_child)] = true;
        if v == target && !given[v] {
            return true;
        }
        if from_child {
            if !given[v] {
                for p in dag.parents(v) {
                    if !edge_removed(p, v) {
                        queue.push((p, true));
                    }
                }
                for c in dag.children(v) {
                    if !edge_removed(v, c) {
                        queue.push((c, false));
                    }
                }
            }
        } else {
            if !given[v] {
                for c in dag.children(v) {
                    if !edge_removed(v, c) {
                        queue.push((c, false));
                    }
                }
            }
            if anc_given[v] {
                for p in dag.parents(v) {
                    if !edge_removed(p, v) {
                        queue.push((p, true));
                    }
                }
            }
        }
    }
    false
}

/// Is the parent set `pa_est(i)` a valid adjustment set for the ordered pair
/// `(i, j)` in the true graph?
fn parent_adjustment_valid(truth: &Dag, i: usize, j: usize, z: &[bool]) -> bool {
    let d = truth.d();
    let de_i = descendants(truth, i);
    if z[j] {
        // The estimate claims j is a parent of i, hence unaffected by the
        // intervention; correct exactly when j is not a true descendant.
        return !de_i[j];
    }
    let an_j = ancestors_incl(truth, j);
    // nodes (other than i) on a directed path i -> ... -> j
    let causal: Vec<bool> = (0..d).map(|v| de_i[v] && an_j[v]).collect();
    // forbidden: descendants (inclusive) of causal nodes
    let mut forbidden = vec![false; d];
    for v in 0..d {
        if causal[v] {
            forbidden[v] = true;
            for (u, item) in descendants(truth, v).into_iter().enumerate() {
                if item {
                    forbidden[u] = true;
                }
            }
        }
    }
    if (0..d).any(|v| z[v] && forbidden[v]) {
        return false;
    }
    // proper-backdoor graph: drop the first edge of every causal path
    !d_connected(truth, i, j, z, &causal)
}

/// Structural intervention distance: ordered pairs `(i, j)` whose
/// interventional distribution `p(x_j | do(x_i))` comes out wrong when the
/// estimated parent set of `i` is used as the adjustment set in the truth.
pub fn sid(est: &Dag, truth: &Dag) -> Result<usize> {
    if est.d() != truth.d() {
        return Err(Error::dims(format!(
            "estimate has d={}, truth has d={}",
            est.d(),
            truth.d()
        )));
    }
    let d = truth.d();
    let mut wrong = 0;
    for i in 0..d {
        let mut z = vec![false; d];
        for p in est.parents(i) {
            z[p] = true;
        }
        for j in 0..d {
            if i == j {
                continue;
            }
            if !parent_adjustment_valid(truth, i, j, &z) {
                wrong += 1;
            }
        }
    }
    Ok(wrong)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sample_dag, GraphKind, GraphModel};

    fn chain3() -> Dag {
        Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn perfect_estimate_scores_clean() {
        let truth = chain3();
        let report = evaluate_graph(&truth, &truth).unwrap();
        assert_eq!(report.tpr, 1.0);
        assert_eq!(report.fdr, 0.0);
        assert_eq!(report.shd, 0);
    }

    #[test]
    fn reversed_edge_counts_once() {
        let truth = chain3();
        let est = Dag::from_edges(3, &[(0, 1), (2, 1)]).unwrap();
        let report = evaluate_graph(&est, &truth).unwrap();
        assert_eq!(report.tpr, 0.5);
        assert_eq!(report.fdr, 0.5);
        assert_eq!(report.shd, 1);
    }

    #[test]
    fn empty_estimate_misses_everything() {
        let truth = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 10, 77).unwrap();
        let est = Dag::empty(10);
        let report = evaluate_graph(&est, &truth).unwrap();
        assert_eq!(report.tpr, 0.0);
        assert_eq!(report.fdr, 0.0);
        assert_eq!(report.shd, truth.edge_count());
    }

    #[test]
    fn shd_zero_iff_graphs_equal() {
        let a = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 8, 1).unwrap();
        let b = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 8, 2).unwrap();
        assert_eq!(evaluate_graph(&a, &a).unwrap().shd, 0);
        if a != b {
            assert!(evaluate_graph(&a, &b).unwrap().shd > 0);
        }
    }

    #[test]
    fn shd_symmetric_for_reversal_free_disagreements_and_pure_reversals() {
        // extra/missing edges swap roles; both are distance 1
        let a = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let b = Dag::from_edges(3, &[(0, 1)]).unwrap();
        assert_eq!(
            evaluate_graph(&a, &b).unwrap().shd,
            evaluate_graph(&b, &a).unwrap().shd
        );
        let r1 = Dag::from_edges(2, &[(0, 1)]).unwrap();
        let r2 = Dag::from_edges(2, &[(1, 0)]).unwrap();
        assert_eq!(evaluate_graph(&r1, &r2).unwrap().shd, 1);
        assert_eq!(evaluate_graph(&r2, &r1).unwrap().shd, 1);
    }

    #[test]
    fn sid_zero_on_itself() {
        let truth = chain3();
        assert_eq!(sid(&truth, &truth).unwrap(), 0);
        for seed in 0..20 {
            let g = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 6, seed).unwrap();
            assert_eq!(sid(&g, &g).unwrap(), 0, "seed {seed}");
        }
    }

    #[test]
    fn sid_empty_estimate_against_chain() {
        let truth = chain3();
        let est = Dag::empty(3);
        assert_eq!(sid(&est, &truth).unwrap(), 3);
    }

    #[test]
    fn sid_single_reversed_edge() {
        let truth = Dag::from_edges(2, &[(0, 1)]).unwrap();
        let est = Dag::from_edges(2, &[(1, 0)]).unwrap();
        assert_eq!(sid(&est, &truth).unwrap(), 2);
    }

    #[test]
    fn sid_bounded_by_ordered_pairs() {
        for seed in 0..30 {
            let truth = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 5, seed).unwrap();
            let est = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 5, seed + 1000).unwrap();
            let s = sid(&est, &truth).unwrap();
            assert!(s <= 5 * 4, "sid {s}");
        }
    }

    #[test]
    fn confusion_accounting_holds() {
        for seed in 0..30 {
            let truth = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 7, seed).unwrap();
            let est = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 7, seed + 99).unwrap();
            let c = GraphConfusion::compute(&est, &truth).unwrap();
            assert_eq!(c.predicted_edges, c.true_positive + c.reversed + c.false_positive);
            // every true edge is matched, reversed, or missing
            let mut reversed_of_true = 0;
            for (s, t) in truth.edges() {
                if !est.has_edge(s, t) && est.has_edge(t, s) {
                    reversed_of_true += 1;
                }
            }
            assert_eq!(c.true_edges, c.true_positive + reversed_of_true + c.missing);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = Dag::empty(3);
        let b = Dag::empty(4);
        assert!(evaluate_graph(&a, &b).is_err());
        assert!(sid(&a, &b).is_err());
    }
}
