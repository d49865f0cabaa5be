//! The sensing round loop: selection costs, greedy node selection and
//! ingestion of delivered measurements.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{schur_drop, ConditionalState, GaussianModel, VARIANCE_EPS};

/// Relative tolerance under which two selection costs count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Score of one candidate node: the total conditional variance left on the
/// other unknowns if this node's value were delivered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionCost {
    pub node: usize,
    pub cost: f64,
    /// Total conditional variance of the other unknowns.
    pub beta: f64,
    /// Conditional variance of the node itself.
    pub nu: f64,
    /// Squared norm of the node's conditional cross-covariance with the others.
    pub r_norm_sq: f64,
}

/// How the `Q` nodes of a round are picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionRule {
    /// Pick the best node, condition on it hypothetically, repeat.
    #[default]
    Greedy,
    /// The `Q` smallest single-node costs of the current state.
    TopQ,
}

/// Costs for every unknown node of `cond`, in ascending node order.
///
/// Uses only the conditional covariance. With a single unknown the cost
/// is zero.
pub fn selection_costs(cond: &ConditionalState) -> Vec<SelectionCost> {
    costs_from_cov(cond.cond_cov(), cond.unknown_idx())
}

fn costs_from_cov(cov: &DMatrix<f64>, nodes: &[usize]) -> Vec<SelectionCost> {
    let len = nodes.len();
    if len == 1 {
        let nu = cov[(0, 0)];
        return vec![SelectionCost {
            node: nodes[0],
            cost: 0.0,
            beta: 0.0,
            nu,
            r_norm_sq: 0.0,
        }];
    }
    let trace = cov.trace();
    (0..len)
        .map(|l| {
            let nu = cov[(l, l)];
            let beta = trace - nu;
            let col_sq = cov.column(l).norm_squared();
            let r_norm_sq = (col_sq - nu * nu).max(0.0);
            let cost = if nu <= VARIANCE_EPS {
                beta
            } else {
                (beta - r_norm_sq / nu).clamp(0.0, beta.max(0.0))
            };
            SelectionCost {
                node: nodes[l],
                cost,
                beta,
                nu,
                r_norm_sq,
            }
        })
        .collect()
}

/// Position of the smallest cost; near-ties go to the lowest node index.
fn argmin(costs: &[SelectionCost]) -> usize {
    let min = costs.iter().map(|c| c.cost).fold(f64::INFINITY, f64::min);
    let tol = TIE_TOLERANCE * min.abs().max(1.0);
    costs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.cost <= min + tol)
        .min_by_key(|(_, c)| c.node)
        .map(|(i, _)| i)
        .expect("non-empty cost list")
}

/// Chooses up to `q` unknown nodes to request next.
pub fn select_nodes(cond: &ConditionalState, q: usize, rule: SelectionRule) -> Vec<usize> {
    let unknown = cond.unknown_idx();
    if q >= unknown.len() {
        return unknown.to_vec();
    }
    match rule {
        SelectionRule::Greedy => greedy(cond.cond_cov().clone(), unknown.to_vec(), q),
        SelectionRule::TopQ => {
            let mut costs = selection_costs(cond);
            costs.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.node.cmp(&b.node)));
            costs.into_iter().take(q).map(|c| c.node).collect()
        }
    }
}

fn greedy(mut cov: DMatrix<f64>, mut nodes: Vec<usize>, q: usize) -> Vec<usize> {
    let mut picked = Vec::with_capacity(q);
    while picked.len() < q && !nodes.is_empty() {
        let l = argmin(&costs_from_cov(&cov, &nodes));
        picked.push(nodes.remove(l));
        cov = schur_drop(&cov, l);
    }
    picked
}

/// Conditions `cond` on each delivered `(node, value)` in order. Nodes whose
/// conditional variance has collapsed are taken as determined at their
/// conditional mean instead of being divided through.
pub fn ingest_into(cond: &mut ConditionalState, delivered: &[(usize, f64)]) -> Result<()> {
    check_delivery(cond, delivered.iter().map(|d| d.0))?;
    for &(node, value) in delivered {
        match cond.observe(node, value) {
            Err(Error::DegenerateVariance { .. }) => cond.mark_determined(node, value)?,
            other => other?,
        }
    }
    Ok(())
}

fn check_delivery(cond: &ConditionalState, nodes: impl Iterator<Item = usize>) -> Result<()> {
    let mut seen = Vec::new();
    for node in nodes {
        if cond.local_index(node).is_none() {
            return Err(Error::Contract(format!(
                "node {node} is already known or out of range"
            )));
        }
        if seen.contains(&node) {
            return Err(Error::Contract(format!("node {node} delivered twice")));
        }
        seen.push(node);
    }
    Ok(())
}

/// One simulated sensing session under a single model.
///
/// `target` is the hidden realization; selection reads only the
/// conditional covariance and never looks at it.
#[derive(Debug, Clone)]
pub struct SensingState {
    round: usize,
    acc_idx: Vec<usize>,
    cond: ConditionalState,
    target: DVector<f64>,
}

impl SensingState {
    pub fn new(model: &GaussianModel, target: DVector<f64>) -> Result<Self> {
        if target.len() != model.dim() {
            return Err(Error::Dimension(format!(
                "target has length {} but the model has {} nodes",
                target.len(),
                model.dim()
            )));
        }
        Ok(Self {
            round: 0,
            acc_idx: Vec::new(),
            cond: ConditionalState::prior(model),
            target,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Every node delivered so far, in delivery order.
    pub fn acc_idx(&self) -> &[usize] {
        &self.acc_idx
    }

    pub fn cond(&self) -> &ConditionalState {
        &self.cond
    }

    pub fn unknown_count(&self) -> usize {
        self.cond.unknown_idx().len()
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// `Tr(Cov(u | z))`.
    pub fn mse_theory(&self) -> f64 {
        self.cond.total_variance()
    }

    /// `||u - E[u | z]||^2` against the hidden realization.
    pub fn sqerr_actual(&self) -> f64 {
        self.cond
            .unknown_idx()
            .iter()
            .zip(self.cond.cond_mean().iter())
            .map(|(&node, &est)| (self.target[node] - est).powi(2))
            .sum()
    }

    /// Full-length estimate: delivered values where known, MMSE elsewhere.
    pub fn estimate(&self) -> DVector<f64> {
        let mut est = DVector::zeros(self.cond.dim());
        for (&node, &v) in self.cond.known_idx().iter().zip(self.cond.known_vals()) {
            est[node] = v;
        }
        for (&node, &v) in self
            .cond
            .unknown_idx()
            .iter()
            .zip(self.cond.cond_mean().iter())
        {
            est[node] = v;
        }
        est
    }

    pub fn selection_costs(&self) -> Vec<SelectionCost> {
        selection_costs(&self.cond)
    }

    pub fn select_nodes(&self, q: usize, rule: SelectionRule) -> Vec<usize> {
        select_nodes(&self.cond, q, rule)
    }

    /// Folds in this round's deliveries and advances the round counter.
    pub fn ingest(&self, delivered: &[(usize, f64)]) -> Result<Self> {
        let mut next = self.clone();
        next.ingest_mut(delivered)?;
        Ok(next)
    }

    pub fn ingest_mut(&mut self, delivered: &[(usize, f64)]) -> Result<()> {
        ingest_into(&mut self.cond, delivered)?;
        self.acc_idx.extend(delivered.iter().map(|d| d.0));
        self.round += 1;
        Ok(())
    }

    /// [`Self::ingest_mut`] with the values read from the hidden realization.
    pub fn ingest_nodes(&mut self, nodes: &[usize]) -> Result<()> {
        let delivered: Vec<(usize, f64)> = nodes
            .iter()
            .map(|&n| (n, self.target.get(n).copied().unwrap_or(f64::NAN)))
            .collect();
        self.ingest_mut(&delivered)
    }
}

/// The node order that repeated single-node greedy selection produces when
/// every request succeeds. It depends on the covariance alone.
pub fn polling_order(model: &GaussianModel) -> Vec<usize> {
    greedy(model.cov().clone(), (0..model.dim()).collect(), model.dim())
}
