//! Best-first branch-and-bound over the binary variables.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use crate::error::Result;

use super::model::{MiqpModel, VarId};
use super::qp::{solve_relaxation, QpOptions, Relaxation, RelaxationStatus};
use super::{NodeRecord, SolveConfig, SolveResult, SolveStatus};

/// A relaxation value within this distance of 0 or 1 counts as integral.
pub const INTEGRALITY_TOLERANCE: f64 = 1e-6;

struct Node {
    id: usize,
    depth: usize,
    fixings: Vec<(VarId, bool)>,
    bound: f64,
    relaxation: Relaxation,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: the "greatest" node is popped first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Incumbent {
    objective: f64,
    assignment: Vec<f64>,
}

struct Search<'a> {
    model: &'a MiqpModel,
    cfg: &'a SolveConfig,
    qp: QpOptions,
    binaries: Vec<VarId>,
    incumbent: Option<Incumbent>,
    tried: HashMap<Vec<bool>, ()>,
    started: Instant,
}

impl Search<'_> {
    fn prune_tolerance(&self, inc: f64) -> f64 {
        self.cfg.absolute_gap.max(self.cfg.relative_mip_gap * inc.abs())
    }

    fn can_prune(&self, bound: f64) -> bool {
        match &self.incumbent {
            Some(inc) => bound >= inc.objective - self.prune_tolerance(inc.objective),
            None => false,
        }
    }

    /// Fixes every binary to its rounded value and solves the remaining QP.
    fn try_rounding(&mut self, x: &[f64], nodes: usize, bound: f64) -> Result<()> {
        let key: Vec<bool> = self.binaries.iter().map(|&j| x[j] >= 0.5).collect();
        if self.tried.insert(key.clone(), ()).is_some() {
            return Ok(());
        }
        let fixings: Vec<(VarId, bool)> = self.binaries.iter().copied().zip(key).collect();
        let r = solve_relaxation(self.model, &fixings, &self.qp)?;
        if r.status != RelaxationStatus::Optimal {
            return Ok(());
        }
        let better = self
            .incumbent
            .as_ref()
            .map_or(true, |inc| r.objective < inc.objective);
        if better {
            self.incumbent = Some(Incumbent {
                objective: r.objective,
                assignment: r.assignment,
            });
            if self.cfg.verbose {
                let bound = bound.min(r.objective);
                println!(
                    "incumbent  nodes {:>7}  objective {:>16.6}  bound {:>16.6}  gap {:>9.3e}  {:>8.3}s",
                    nodes,
                    r.objective,
                    bound,
                    (r.objective - bound) / r.objective.abs().max(1e-10),
                    self.started.elapsed().as_secs_f64()
                );
            }
        }
        Ok(())
    }

    fn most_fractional(&self, node: &Node) -> Option<VarId> {
        let x = &node.relaxation.assignment;
        let mut best: Option<(VarId, f64)> = None;
        for &j in &self.binaries {
            if node.fixings.iter().any(|(k, _)| *k == j) {
                continue;
            }
            let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
            if frac > INTEGRALITY_TOLERANCE && best.map_or(true, |(_, b)| frac > b) {
                best = Some((j, frac));
            }
        }
        best.map(|(j, _)| j)
    }
}

pub fn branch_and_bound(model: &MiqpModel, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.check()?;
    let started = Instant::now();
    let mut search = Search {
        model,
        cfg,
        qp: QpOptions::with_kkt_tolerance(cfg.qp_kkt_tolerance),
        binaries: model.binaries(),
        incumbent: None,
        tried: HashMap::new(),
        started,
    };
    let mut records = Vec::new();
    let root = solve_relaxation(model, &[], &search.qp)?;
    if root.status == RelaxationStatus::Infeasible {
        return Ok(SolveResult::infeasible(
            root.certificate.unwrap_or_default(),
            1,
            started.elapsed().as_secs_f64(),
        ));
    }
    if cfg.record_nodes {
        records.push(NodeRecord {
            fixings: Vec::new(),
            bound: root.bound,
        });
    }
    // cheap incumbents from the root point: nearest rounding, then all-up
    search.try_rounding(&root.assignment, 1, root.bound)?;
    let mut up = root.assignment.clone();
    for &j in &search.binaries {
        if up[j] > INTEGRALITY_TOLERANCE {
            up[j] = 1.0;
        }
    }
    search.try_rounding(&up, 1, root.bound)?;

    let mut heap = BinaryHeap::new();
    let mut next_id = 1;
    heap.push(Node {
        id: 0,
        depth: 0,
        fixings: Vec::new(),
        bound: root.bound,
        relaxation: root,
    });
    let mut nodes = 0usize;
    // smallest bound among subtrees closed without exploring them
    let mut closed_bound = f64::INFINITY;
    let mut status = SolveStatus::Optimal;
    let mut frontier_bound = f64::INFINITY;

    while let Some(node) = heap.pop() {
        if let Some(inc) = &search.incumbent {
            let gap = inc.objective - node.bound;
            if gap <= cfg.absolute_gap {
                frontier_bound = node.bound;
                status = SolveStatus::Optimal;
                break;
            }
            if gap <= cfg.relative_mip_gap * inc.objective.abs() {
                frontier_bound = node.bound;
                status = SolveStatus::GapReached;
                break;
            }
        }
        if nodes >= cfg.node_limit {
            frontier_bound = node.bound;
            status = SolveStatus::NodeLimit;
            break;
        }
        if cfg.time_limit.is_some_and(|t| started.elapsed().as_secs_f64() >= t) {
            frontier_bound = node.bound;
            status = SolveStatus::TimeLimit;
            break;
        }
        nodes += 1;
        if search.can_prune(node.bound) {
            closed_bound = closed_bound.min(node.bound);
            continue;
        }
        let Some(j) = search.most_fractional(&node) else {
            // integral relaxation: this subtree is solved by its rounding
            search.try_rounding(&node.relaxation.assignment, nodes, node.bound)?;
            closed_bound = closed_bound.min(node.bound);
            continue;
        };
        let mut f0 = node.fixings.clone();
        f0.push((j, false));
        let mut f1 = node.fixings;
        f1.push((j, true));
        let qp = &search.qp;
        let (r0, r1) = rayon::join(
            || solve_relaxation(model, &f0, qp),
            || solve_relaxation(model, &f1, qp),
        );
        for (fixings, r) in [(f0, r0?), (f1, r1?)] {
            if r.status == RelaxationStatus::Infeasible {
                continue;
            }
            let bound = r.bound.max(node.bound);
            if cfg.record_nodes {
                records.push(NodeRecord {
                    fixings: fixings.clone(),
                    bound,
                });
            }
            if search.can_prune(bound) {
                closed_bound = closed_bound.min(bound);
                continue;
            }
            heap.push(Node {
                id: next_id,
                depth: node.depth + 1,
                fixings,
                bound,
                relaxation: r,
            });
            next_id += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let Some(inc) = search.incumbent else {
        if heap.is_empty() && frontier_bound == f64::INFINITY {
            return Ok(SolveResult::infeasible(
                "every branch is infeasible".into(),
                nodes,
                elapsed,
            ));
        }
        return Ok(SolveResult {
            status,
            assignment: Vec::new(),
            objective: f64::INFINITY,
            best_bound: frontier_bound.min(closed_bound),
            nodes_explored: nodes,
            elapsed_seconds: elapsed,
            node_records: records,
            message: Some("no integer-feasible point found before the limit".into()),
        });
    };
    let best_bound = frontier_bound.min(closed_bound).min(inc.objective);
    let mut assignment = inc.assignment;
    for &j in &search.binaries {
        assignment[j] = assignment[j].round();
    }
    Ok(SolveResult {
        status,
        assignment,
        objective: inc.objective,
        best_bound,
        nodes_explored: nodes,
        elapsed_seconds: elapsed,
        node_records: records,
        message: None,
    })
}
