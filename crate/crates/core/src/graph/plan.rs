//! Pairwise contraction schedules for groups of tensors.

use crate::cache::ReshapeCache;
use crate::error::{invalid, Result, TntError};
use crate::tensor::Tensor;

/// Axis identifier unique within one planning problem.
pub(crate) type AxisId = usize;

/// One operand described by its axes. `partner[id]` is the axis it is summed
/// with, if any; `dim[id]` its dimension.
#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub operands: Vec<Vec<AxisId>>,
    pub partner: Vec<Option<AxisId>>,
    pub dim: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Step {
    Trace { slot: usize, pairs: Vec<(usize, usize)> },
    Pair { x: usize, y: usize, x_axes: Vec<usize>, y_axes: Vec<usize> },
}

/// Precomputed sequence of traces and pairwise contractions ending in a
/// permutation to the requested axis order.
#[derive(Debug, Clone)]
pub struct ListPlan {
    inputs: usize,
    steps: Vec<Step>,
    final_slot: usize,
    final_order: Vec<usize>,
    /// Sum over pairwise steps of the product of all dimensions involved.
    pub cost: u128,
}

impl Problem {
    fn step_cost(&self, x: &[AxisId], y: &[AxisId]) -> u128 {
        let mut c: u128 = 1;
        for &a in x {
            c = c.saturating_mul(self.dim[a] as u128);
        }
        for &b in y {
            if !self.partner[b].is_some_and(|p| x.contains(&p)) {
                c = c.saturating_mul(self.dim[b] as u128);
            }
        }
        c
    }

    fn merged(&self, x: &[AxisId], y: &[AxisId]) -> Vec<AxisId> {
        let keep_x = x.iter().copied().filter(|a| !self.partner[*a].is_some_and(|p| y.contains(&p)));
        let keep_y = y.iter().copied().filter(|b| !self.partner[*b].is_some_and(|p| x.contains(&p)));
        keep_x.chain(keep_y).collect()
    }

    fn connected(&self, x: &[AxisId], y: &[AxisId]) -> (bool, bool) {
        // (any link, any link of dimension above one)
        let mut any = false;
        let mut wide = false;
        for &a in x {
            if let Some(p) = self.partner[a] {
                if y.contains(&p) {
                    any = true;
                    wide |= self.dim[a] > 1;
                }
            }
        }
        (any, wide)
    }

    /// Exhaustive search over pairwise orders. Each choice `(i, j)`, `i < j`,
    /// merges operand `j` into position `i`. Ties keep the lexicographically first.
    fn best_order(&self, ops: &[Vec<AxisId>]) -> (u128, Vec<(usize, usize)>) {
        if ops.len() <= 1 {
            return (0, Vec::new());
        }
        let mut best: Option<(u128, Vec<(usize, usize)>)> = None;
        for i in 0..ops.len() {
            for j in i + 1..ops.len() {
                let c = self.step_cost(&ops[i], &ops[j]);
                let mut next = ops.to_vec();
                next[i] = self.merged(&ops[i], &ops[j]);
                next.remove(j);
                let (rest, mut seq) = self.best_order(&next);
                let total = c.saturating_add(rest);
                if best.as_ref().is_none_or(|b| total < b.0) {
                    seq.insert(0, (i, j));
                    best = Some((total, seq));
                }
            }
        }
        best.unwrap()
    }

    /// Supplied order: fold operands left to right, preferring the earliest
    /// operand joined by a link wider than one, then any link, then none.
    fn sequential_order(&self, ops: &[Vec<AxisId>]) -> Vec<(usize, usize)> {
        let mut ops = ops.to_vec();
        let mut seq = Vec::new();
        while ops.len() > 1 {
            let pick = (1..ops.len())
                .find(|&j| self.connected(&ops[0], &ops[j]).1)
                .or_else(|| (1..ops.len()).find(|&j| self.connected(&ops[0], &ops[j]).0))
                .unwrap_or(1);
            seq.push((0, pick));
            ops[0] = self.merged(&ops[0], &ops[pick]);
            ops.remove(pick);
        }
        seq
    }

    fn self_pairs(&self, axes: &[AxisId]) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for (i, &a) in axes.iter().enumerate() {
            if let Some(p) = self.partner[a] {
                if let Some(j) = axes.iter().position(|&x| x == p) {
                    if i < j {
                        pairs.push((i, j));
                    }
                }
            }
        }
        pairs
    }

    /// Schedule using the given pair sequence, or the default strategy when `None`.
    pub fn plan(&self, output: &[AxisId], order: Option<&[(usize, usize)]>) -> Result<ListPlan> {
        let n = self.operands.len();
        if n == 0 {
            return Err(invalid("nothing to contract"));
        }
        let mut steps = Vec::new();
        let mut ops: Vec<Vec<AxisId>> = Vec::with_capacity(n);
        for (slot, axes) in self.operands.iter().enumerate() {
            let pairs = self.self_pairs(axes);
            if pairs.is_empty() {
                ops.push(axes.clone());
            } else {
                let traced: Vec<AxisId> = axes
                    .iter()
                    .copied()
                    .filter(|a| !self.partner[*a].is_some_and(|p| axes.contains(&p)))
                    .collect();
                steps.push(Step::Trace { slot, pairs });
                ops.push(traced);
            }
        }
        let seq = match order {
            Some(o) => o.to_vec(),
            None if (3..=4).contains(&n) => self.best_order(&ops).1,
            None => self.sequential_order(&ops),
        };
        if seq.len() != n - 1 {
            return Err(invalid(format!("a pair order for {n} operands needs {} steps, got {}", n - 1, seq.len())));
        }
        // slots[k] is the physical slot holding logical operand k
        let mut slots: Vec<usize> = (0..n).collect();
        let mut cost: u128 = 0;
        for &(i, j) in &seq {
            if i >= j || j >= ops.len() {
                return Err(invalid(format!("invalid pair ({i}, {j}) with {} operands left", ops.len())));
            }
            let (x, y) = (&ops[i], &ops[j]);
            let mut x_axes = Vec::new();
            let mut y_axes = Vec::new();
            for (pi, &a) in x.iter().enumerate() {
                if let Some(p) = self.partner[a] {
                    if let Some(pj) = y.iter().position(|&b| b == p) {
                        x_axes.push(pi);
                        y_axes.push(pj);
                    }
                }
            }
            cost = cost.saturating_add(self.step_cost(x, y));
            steps.push(Step::Pair { x: slots[i], y: slots[j], x_axes, y_axes });
            ops[i] = self.merged(&ops[i], &ops[j]);
            ops.remove(j);
            slots.remove(j);
        }
        let last = &ops[0];
        if last.len() != output.len() {
            return Err(invalid(format!("{} free axes remain but {} were requested", last.len(), output.len())));
        }
        let final_order = output
            .iter()
            .map(|id| last.iter().position(|a| a == id))
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| TntError::Structural("requested axis is not free after contraction".into()))?;
        Ok(ListPlan { inputs: n, steps, final_slot: slots[0], final_order, cost })
    }
}

impl ListPlan {
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    /// Runs the schedule on tensors given in planning order.
    pub fn execute(&self, inputs: &[&Tensor], cache: Option<&ReshapeCache>) -> Result<Tensor> {
        if inputs.len() != self.inputs {
            return Err(invalid(format!("plan expects {} inputs, got {}", self.inputs, inputs.len())));
        }
        let mut slots: Vec<Option<std::borrow::Cow<'_, Tensor>>> =
            inputs.iter().map(|t| Some(std::borrow::Cow::Borrowed(*t))).collect();
        for step in &self.steps {
            match step {
                Step::Trace { slot, pairs } => {
                    let t = slots[*slot].take().expect("trace operand");
                    slots[*slot] = Some(std::borrow::Cow::Owned(t.partial_trace(pairs)?));
                }
                Step::Pair { x, y, x_axes, y_axes } => {
                    let a = slots[*x].take().expect("left operand");
                    let b = slots[*y].take().expect("right operand");
                    slots[*x] = Some(std::borrow::Cow::Owned(Tensor::contract(&a, x_axes, &b, y_axes, cache)?));
                }
            }
        }
        let t = slots[self.final_slot].take().expect("result");
        if self.final_order.iter().enumerate().all(|(k, &o)| k == o) {
            Ok(t.into_owned())
        } else {
            t.permute(&self.final_order, cache)
        }
    }
}
