//! Nodes with labelled legs, their connections, and the operations that act
//! on groups of connected nodes.

mod functional;
mod network;
mod plan;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use crate::dense::{DenseTensor, FusedLeg, C64};
use crate::error::{invalid, Result, TntError};
use crate::linalg::{SingularSpectrum, TruncationPolicy};
use crate::symmetric::{impose_symmetry_with_flux, ChargedIndex, Direction, Qn};
use crate::system::SystemConfig;
use crate::tensor::Tensor;

pub use functional::{FunctionalDef, FunctionalForm};
pub use network::Network;
pub use plan::ListPlan;

use functional::Functional;
use plan::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    slot: u32,
    generation: u32,
}

impl NodeId {
    pub fn index(self) -> usize {
        self.slot as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}.{}", self.slot, self.generation)
    }
}

#[derive(Debug, Clone)]
struct Leg {
    label: char,
    /// Payload axes carried by this leg; more than one after a fuse.
    axes: Vec<usize>,
    peer: Option<(NodeId, char)>,
    children: Option<Vec<Leg>>,
}

impl Leg {
    fn plain(label: char, axis: usize) -> Self {
        Leg { label, axes: vec![axis], peer: None, children: None }
    }

    fn remap_axes(&mut self, f: &impl Fn(usize) -> usize) {
        for a in &mut self.axes {
            *a = f(*a);
        }
        if let Some(ch) = &mut self.children {
            for c in ch {
                c.remap_axes(f);
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Payload {
    Static(Arc<Tensor>),
    Functional(Functional),
}

#[derive(Debug, Clone)]
struct NodeData {
    legs: Vec<Leg>,
    payload: Payload,
    conj: bool,
    sentinel: bool,
    /// Per-axis charges recorded on a dense payload until every axis has one.
    pending: Vec<Option<ChargedIndex>>,
}

impl NodeData {
    fn leg(&self, label: char) -> Option<&Leg> {
        self.legs.iter().find(|l| l.label == label)
    }

    fn leg_mut(&mut self, label: char) -> Option<&mut Leg> {
        self.legs.iter_mut().find(|l| l.label == label)
    }

    fn payload_dims(&self) -> Vec<usize> {
        match &self.payload {
            Payload::Static(t) => t.dims(),
            Payload::Functional(f) => f.def.dims.clone(),
        }
    }

    fn labels(&self) -> String {
        self.legs.iter().map(|l| l.label).collect()
    }
}

/// Factors produced by [`Graph::svd`].
#[derive(Debug, Clone)]
pub struct SvdNodes {
    pub u: NodeId,
    pub s: NodeId,
    pub vdag: NodeId,
    pub spectrum: SingularSpectrum,
    /// Kept singular values in the order of the new leg.
    pub bond_values: Vec<f64>,
}

/// Owner of every node. Node handles are plain ids into this arena.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Option<NodeData>>,
    generations: Vec<u32>,
    free: Vec<u32>,
    config: Arc<SystemConfig>,
}

fn check_label(c: char) -> Result<()> {
    if c.is_ascii_alphanumeric() {
        Ok(())
    } else {
        Err(invalid(format!("leg label {c:?} is not an ASCII alphanumeric character")))
    }
}

fn check_labels(labels: &str) -> Result<Vec<char>> {
    let out: Vec<char> = labels.chars().collect();
    for (i, &c) in out.iter().enumerate() {
        check_label(c)?;
        if out[..i].contains(&c) {
            return Err(invalid(format!("leg label {c:?} repeated in {labels:?}")));
        }
    }
    Ok(out)
}

/// Parses `"ABC=XYZ"` into the pairs `(A,X), (B,Y), (C,Z)`.
pub fn parse_leg_map(map: &str) -> Result<Vec<(char, char)>> {
    let (from, to) = map.split_once('=').ok_or_else(|| invalid(format!("leg map {map:?} needs the form \"AB=CD\"")))?;
    let from = check_labels(from)?;
    let to = check_labels(to)?;
    if from.len() != to.len() {
        return Err(invalid(format!("leg map {map:?} has sides of different length")));
    }
    Ok(from.into_iter().zip(to).collect())
}

fn apply_map(label: char, map: &[(char, char)]) -> char {
    map.iter().find(|(f, _)| *f == label).map_or(label, |(_, t)| *t)
}

impl Graph {
    pub fn new(config: Arc<SystemConfig>) -> Self {
        Graph { nodes: Vec::new(), generations: Vec::new(), free: Vec::new(), config }
    }

    /// Graph using the process-wide default configuration.
    pub fn with_ambient() -> Self {
        Graph::new(SystemConfig::ambient())
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn config_arc(&self) -> Arc<SystemConfig> {
        self.config.clone()
    }

    pub fn set_config(&mut self, config: Arc<SystemConfig>) {
        self.config = config;
    }

    /// Number of live nodes, sentinels included.
    pub fn len(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.live(id) && self.nodes[id.index()].is_some()
    }

    fn live(&self, id: NodeId) -> bool {
        self.generations.get(id.index()) == Some(&id.generation)
    }

    fn node(&self, id: NodeId) -> Result<&NodeData> {
        if !self.live(id) {
            return Err(TntError::Structural(format!("node {id} does not exist")));
        }
        self.nodes[id.index()].as_ref().ok_or_else(|| TntError::Structural(format!("node {id} does not exist")))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut NodeData> {
        if !self.live(id) {
            return Err(TntError::Structural(format!("node {id} does not exist")));
        }
        self.nodes[id.index()].as_mut().ok_or_else(|| TntError::Structural(format!("node {id} does not exist")))
    }

    fn release(&mut self, id: NodeId) {
        self.nodes[id.index()] = None;
        self.generations[id.index()] = self.generations[id.index()].wrapping_add(1);
        self.free.push(id.slot);
    }

    fn leg(&self, id: NodeId, label: char) -> Result<&Leg> {
        self.node(id)?.leg(label).ok_or_else(|| invalid(format!("node {id} has no leg {label:?}")))
    }

    fn leg_mut(&mut self, id: NodeId, label: char) -> Result<&mut Leg> {
        self.node_mut(id)?.leg_mut(label).ok_or_else(|| invalid(format!("node {id} has no leg {label:?}")))
    }

    fn insert(&mut self, data: NodeData) -> NodeId {
        match self.free.pop() {
            Some(slot) => {
                self.nodes[slot as usize] = Some(data);
                NodeId { slot, generation: self.generations[slot as usize] }
            }
            None => {
                self.nodes.push(Some(data));
                self.generations.push(0);
                NodeId { slot: (self.nodes.len() - 1) as u32, generation: 0 }
            }
        }
    }

    fn insert_tensor(&mut self, tensor: Tensor, legs: Vec<Leg>) -> NodeId {
        let rank = tensor.rank();
        self.insert(NodeData {
            legs,
            payload: Payload::Static(Arc::new(tensor)),
            conj: false,
            sentinel: false,
            pending: vec![None; rank],
        })
    }

    /// New unconnected node with one leg per tensor axis.
    pub fn create(&mut self, tensor: impl Into<Tensor>, labels: &str) -> Result<NodeId> {
        let tensor = tensor.into();
        let labels = check_labels(labels)?;
        if labels.len() != tensor.rank() {
            return Err(invalid(format!("{} labels given for a rank-{} tensor", labels.len(), tensor.rank())));
        }
        let legs = labels.iter().enumerate().map(|(i, &c)| Leg::plain(c, i)).collect();
        Ok(self.insert_tensor(tensor, legs))
    }

    pub fn create_random<R: Rng + ?Sized>(&mut self, labels: &str, dims: &[usize], rng: &mut R) -> Result<NodeId> {
        self.create(DenseTensor::random(dims.to_vec(), rng)?, labels)
    }

    /// Identity matrix with two legs of dimension `dim`.
    pub fn create_identity(&mut self, labels: &str, dim: usize) -> Result<NodeId> {
        self.create(DenseTensor::identity(dim), labels)
    }

    /// Removes a node, leaving its former peers unconnected.
    pub fn free(&mut self, id: NodeId) -> Result<()> {
        let data = self.node(id)?.clone();
        for leg in &data.legs {
            if let Some((p, pl)) = leg.peer {
                if p != id {
                    if let Ok(l) = self.leg_mut(p, pl) {
                        l.peer = None;
                    }
                }
            }
        }
        self.release(id);
        Ok(())
    }

    /// Leg labels in leg order.
    pub fn labels(&self, id: NodeId) -> Result<String> {
        Ok(self.node(id)?.labels())
    }

    pub fn has_leg(&self, id: NodeId, label: char) -> bool {
        self.node(id).is_ok_and(|n| n.leg(label).is_some())
    }

    pub fn leg_dim(&self, id: NodeId, label: char) -> Result<usize> {
        let n = self.node(id)?;
        let dims = n.payload_dims();
        let leg = n.leg(label).ok_or_else(|| invalid(format!("node {id} has no leg {label:?}")))?;
        Ok(leg.axes.iter().map(|&a| dims[a]).product())
    }

    pub fn is_conjugated(&self, id: NodeId) -> Result<bool> {
        Ok(self.node(id)?.conj)
    }

    pub fn is_blocked(&self, id: NodeId) -> Result<bool> {
        let n = self.node(id)?;
        Ok(match &n.payload {
            Payload::Static(t) => t.is_blocked(),
            Payload::Functional(f) => f.def.indices.is_some(),
        })
    }

    pub fn is_sentinel(&self, id: NodeId) -> Result<bool> {
        Ok(self.node(id)?.sentinel)
    }

    /// Charges of a single-axis leg as seen through the conjugate flag.
    pub fn leg_index(&self, id: NodeId, label: char) -> Result<Option<ChargedIndex>> {
        let n = self.node(id)?;
        let leg = n.leg(label).ok_or_else(|| invalid(format!("node {id} has no leg {label:?}")))?;
        if leg.axes.len() != 1 {
            return Ok(None);
        }
        let axis = leg.axes[0];
        let idx = match &n.payload {
            Payload::Static(t) => match t.charges() {
                Some(c) => Some(c[axis].clone()),
                None => n.pending[axis].clone(),
            },
            Payload::Functional(f) => f.def.indices.as_ref().map(|c| c[axis].clone()),
        };
        Ok(idx.map(|i| if n.conj { i.flipped() } else { i }))
    }

    /// Payload as stored, without applying the conjugate flag.
    fn raw_payload(&self, id: NodeId) -> Result<Arc<Tensor>> {
        match &self.node(id)?.payload {
            Payload::Static(t) => Ok(t.clone()),
            Payload::Functional(f) => f.realize(),
        }
    }

    /// Payload with the conjugate flag applied. Shares storage when unflagged.
    pub fn operand(&self, id: NodeId) -> Result<Arc<Tensor>> {
        let t = self.raw_payload(id)?;
        if self.node(id)?.conj {
            Ok(Arc::new(t.conj()))
        } else {
            Ok(t)
        }
    }

    /// Values of the node with axes in leg order (fused legs expanded in
    /// their recorded child order).
    pub fn tensor(&self, id: NodeId) -> Result<Tensor> {
        let t = self.operand(id)?;
        let order: Vec<usize> = self.node(id)?.legs.iter().flat_map(|l| l.axes.iter().copied()).collect();
        if order.iter().enumerate().all(|(k, &o)| k == o) {
            Ok(Arc::unwrap_or_clone(t))
        } else {
            t.permute(&order, self.config.cache())
        }
    }

    /// Returns true when two nodes currently share the same payload storage.
    pub fn shares_payload(&self, a: NodeId, b: NodeId) -> Result<bool> {
        Ok(match (&self.node(a)?.payload, &self.node(b)?.payload) {
            (Payload::Static(x), Payload::Static(y)) => Arc::ptr_eq(x, y),
            (Payload::Functional(x), Payload::Functional(y)) => Arc::ptr_eq(&x.def, &y.def),
            _ => false,
        })
    }

    /// Replaces the payload, keeping labels. Axis `k` of the tensor becomes
    /// leg `k`; fuse records are dropped.
    pub fn set_tensor(&mut self, id: NodeId, tensor: impl Into<Tensor>) -> Result<()> {
        let tensor = tensor.into();
        let n = self.node_mut(id)?;
        if tensor.rank() != n.legs.len() {
            return Err(invalid(format!("node {id} has {} legs but the tensor has rank {}", n.legs.len(), tensor.rank())));
        }
        for (k, leg) in n.legs.iter_mut().enumerate() {
            leg.axes = vec![k];
            leg.children = None;
        }
        n.pending = vec![None; tensor.rank()];
        n.payload = Payload::Static(Arc::new(tensor));
        n.conj = false;
        Ok(())
    }

    /// Multiplies every value by `factor`; other nodes sharing the payload are unaffected.
    pub fn scale(&mut self, id: NodeId, factor: C64) -> Result<()> {
        let t = self.operand(id)?;
        let n = self.node_mut(id)?;
        n.payload = Payload::Static(Arc::new(t.scale(factor)));
        n.conj = false;
        Ok(())
    }

    /// Copy sharing the payload. A conjugate copy only toggles a flag.
    pub fn copy(&mut self, id: NodeId, conjugate: bool, leg_map: Option<&str>) -> Result<NodeId> {
        let src = self.node(id)?;
        let mut data = src.clone();
        data.conj ^= conjugate;
        data.sentinel = false;
        for leg in &mut data.legs {
            leg.peer = None;
        }
        if let Some(map) = leg_map {
            let pairs = parse_leg_map(map)?;
            for (f, _) in &pairs {
                if src.leg(*f).is_none() {
                    return Err(invalid(format!("leg map names missing leg {f:?} of node {id}")));
                }
            }
            for leg in &mut data.legs {
                leg.label = apply_map(leg.label, &pairs);
            }
            check_labels(&data.labels())?;
        }
        Ok(self.insert(data))
    }

    /// Renames legs in place, keeping connections.
    pub fn relabel(&mut self, id: NodeId, leg_map: &str) -> Result<()> {
        let pairs = parse_leg_map(leg_map)?;
        let n = self.node(id)?;
        for (f, _) in &pairs {
            if n.leg(*f).is_none() {
                return Err(invalid(format!("leg map names missing leg {f:?} of node {id}")));
            }
        }
        let mut legs = n.legs.clone();
        for leg in &mut legs {
            leg.label = apply_map(leg.label, &pairs);
        }
        let labels: String = legs.iter().map(|l| l.label).collect();
        check_labels(&labels).map_err(|e| TntError::LabelCollision(e.to_string()))?;
        let updates: Vec<(NodeId, char, char)> =
            legs.iter().filter_map(|l| l.peer.map(|(p, pl)| (p, pl, l.label))).collect();
        self.node_mut(id)?.legs = legs;
        for (p, pl, new) in updates {
            if p == id {
                let pl2 = apply_map(pl, &pairs);
                self.leg_mut(id, pl2)?.peer = Some((id, new));
            } else {
                self.leg_mut(p, pl)?.peer = Some((id, new));
            }
        }
        Ok(())
    }

    /// Records charges on one leg of a dense node. Once every leg carries
    /// charges the payload becomes block-sparse, dropping elements that
    /// violate the symmetry (an error under strict symmetry).
    pub fn set_qn(&mut self, id: NodeId, label: char, index: ChargedIndex) -> Result<()> {
        self.set_qn_with_flux(id, label, index, None)
    }

    pub fn set_qn_with_flux(&mut self, id: NodeId, label: char, index: ChargedIndex, flux: Option<Qn>) -> Result<()> {
        let dim = self.leg_dim(id, label)?;
        if index.dim() != dim {
            return Err(TntError::IncompatibleLegs(format!(
                "leg {label:?} of node {id} has dimension {dim} but {} charges were given",
                index.dim()
            )));
        }
        if let Some(m) = self.config.charges_per_label() {
            if index.m() != m {
                return Err(invalid(format!("expected {m} quantum numbers per label, got {}", index.m())));
            }
        }
        let axis = {
            let leg = self.leg(id, label)?;
            if leg.axes.len() != 1 {
                return Err(TntError::Structural(format!("leg {label:?} of node {id} is fused")));
            }
            leg.axes[0]
        };
        if self.is_blocked(id)? {
            return Err(invalid(format!("node {id} already carries charges")));
        }
        let t = self.operand(id)?;
        let strict = self.config.strict_symmetry;
        let n = self.node_mut(id)?;
        n.pending[axis] = Some(index);
        if n.pending.iter().all(Option::is_some) {
            let indices: Vec<ChargedIndex> = n.pending.iter().flatten().cloned().collect();
            let m = indices[0].m();
            let dense = t.to_dense();
            let (b, discarded) = impose_symmetry_with_flux(&dense, indices, flux.unwrap_or_else(|| Qn::zero(m)))?;
            if strict && discarded > 1e-12 * dense.frobenius_norm().max(1.0) {
                n.pending = vec![None; n.pending.len()];
                return Err(TntError::SymmetryViolation(format!(
                    "node {id} has symmetry-breaking elements of norm {discarded:e}"
                )));
            }
            n.payload = Payload::Static(Arc::new(Tensor::Block(b)));
            n.conj = false;
            n.pending = vec![None; n.pending.len()];
        }
        Ok(())
    }

    /// Connects two unconnected legs of equal dimension.
    pub fn join(&mut self, a: NodeId, la: char, b: NodeId, lb: char) -> Result<()> {
        if a == b && la == lb {
            return Err(invalid(format!("cannot join leg {la:?} of node {a} to itself")));
        }
        for (n, l) in [(a, la), (b, lb)] {
            if let Some((p, pl)) = self.leg(n, l)?.peer {
                return Err(TntError::LegOccupied(format!("leg {l:?} of node {n} is joined to leg {pl:?} of node {p}")));
            }
        }
        let sa = self.node(a)?.sentinel;
        let sb = self.node(b)?.sentinel;
        if sa || sb {
            // sentinels follow whatever they are attached to
            let (s, other, ol) = if sa { (a, b, lb) } else { (b, a, la) };
            let d = self.leg_dim(other, ol)?;
            self.node_mut(s)?.payload = Payload::Static(Arc::new(Tensor::Dense(DenseTensor::zeros(vec![d])?)));
        } else {
            let da = self.leg_dim(a, la)?;
            let db = self.leg_dim(b, lb)?;
            if da != db {
                return Err(TntError::IncompatibleLegs(format!(
                    "leg {la:?} of node {a} has dimension {da}, leg {lb:?} of node {b} has dimension {db}"
                )));
            }
            match (self.leg_index(a, la)?, self.leg_index(b, lb)?) {
                (Some(x), Some(y)) => {
                    if !x.pairs_with(&y) {
                        return Err(TntError::IncompatibleLegs(format!(
                            "charges of leg {la:?} of node {a} and leg {lb:?} of node {b} do not pair"
                        )));
                    }
                }
                (None, None) => {}
                _ if self.config.strict_symmetry => {
                    return Err(TntError::SymmetryViolation(format!(
                        "joining charged and uncharged legs {la:?} of node {a} and {lb:?} of node {b}"
                    )));
                }
                _ => {}
            }
        }
        self.leg_mut(a, la)?.peer = Some((b, lb));
        self.leg_mut(b, lb)?.peer = Some((a, la));
        Ok(())
    }

    /// The node and leg label joined to `label`, if any.
    pub fn peer(&self, id: NodeId, label: char) -> Result<Option<(NodeId, char)>> {
        Ok(self.leg(id, label)?.peer)
    }

    /// Node joined to `label`.
    pub fn find_conn(&self, id: NodeId, label: char) -> Result<NodeId> {
        self.leg(id, label)?
            .peer
            .map(|(p, _)| p)
            .ok_or_else(|| TntError::NotConnected(format!("leg {label:?} of node {id}")))
    }

    /// Disconnects one leg (and its peer).
    pub fn disconnect(&mut self, id: NodeId, label: char) -> Result<()> {
        if let Some((p, pl)) = self.leg(id, label)?.peer {
            self.leg_mut(p, pl)?.peer = None;
            self.leg_mut(id, label)?.peer = None;
        }
        Ok(())
    }

    /// Removes all connections between two nodes.
    pub fn split(&mut self, a: NodeId, b: NodeId) -> Result<()> {
        let labels: Vec<char> =
            self.node(a)?.legs.iter().filter(|l| l.peer.is_some_and(|(p, _)| p == b)).map(|l| l.label).collect();
        for l in labels {
            self.disconnect(a, l)?;
        }
        Ok(())
    }

    /// Places `n` on the connection between `a.la` and `b.lb`.
    pub fn insert_between(&mut self, n: NodeId, na: char, nb: char, a: NodeId, la: char, b: NodeId, lb: char) -> Result<()> {
        if self.leg(a, la)?.peer != Some((b, lb)) {
            return Err(TntError::Structural(format!("leg {la:?} of node {a} is not joined to leg {lb:?} of node {b}")));
        }
        self.disconnect(a, la)?;
        self.join(a, la, n, na)?;
        if let Err(e) = self.join(n, nb, b, lb) {
            self.disconnect(a, la)?;
            self.join(a, la, b, lb)?;
            return Err(e);
        }
        Ok(())
    }

    /// Removes singleton legs.
    pub fn squeeze(&mut self, id: NodeId, labels: &str) -> Result<()> {
        let labels = check_labels(labels)?;
        let mut axes = Vec::new();
        for &l in &labels {
            let leg = self.leg(id, l)?;
            if leg.axes.len() != 1 || self.leg_dim(id, l)? != 1 {
                return Err(TntError::Structural(format!("leg {l:?} of node {id} is not a singleton")));
            }
            if let Some((p, _)) = leg.peer {
                return Err(TntError::Structural(format!("leg {l:?} of node {id} is still joined to node {p}")));
            }
            axes.push(leg.axes[0]);
        }
        let mut t = (*self.raw_payload(id)?).clone();
        let mut sorted = axes.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        for &a in &sorted {
            t = t.remove_singleton(a)?;
        }
        let n = self.node_mut(id)?;
        n.legs.retain(|l| !labels.contains(&l.label));
        let shift = |a: usize| a - sorted.iter().filter(|&&r| r < a).count();
        for leg in &mut n.legs {
            leg.remap_axes(&shift);
        }
        n.pending = n.pending.iter().enumerate().filter(|(a, _)| !sorted.contains(a)).map(|(_, p)| p.clone()).collect();
        n.payload = Payload::Static(Arc::new(t));
        Ok(())
    }

    /// Appends a singleton leg. Blocked nodes need a charge for it; `None`
    /// uses the zero charge.
    pub fn add_leg(&mut self, id: NodeId, label: char, index: Option<ChargedIndex>) -> Result<()> {
        check_label(label)?;
        if self.has_leg(id, label) {
            return Err(TntError::LabelCollision(format!("node {id} already has leg {label:?}")));
        }
        let conj = self.node(id)?.conj;
        let t = self.raw_payload(id)?;
        let pos = t.rank();
        let index = match (&*t, index) {
            (Tensor::Block(b), None) => Some(ChargedIndex::new(Direction::In, vec![Qn::zero(b.m())])?),
            (Tensor::Block(_), Some(i)) => Some(if conj { i.flipped() } else { i }),
            (Tensor::Dense(_), _) => None,
        };
        let t = t.insert_singleton(pos, index)?;
        let n = self.node_mut(id)?;
        n.legs.push(Leg::plain(label, pos));
        n.pending.push(None);
        n.payload = Payload::Static(Arc::new(t));
        Ok(())
    }

    /// Fuses unconnected legs into one leg. Only records are changed.
    pub fn fuse(&mut self, id: NodeId, labels: &str, new_label: char) -> Result<()> {
        let labels = check_labels(labels)?;
        check_label(new_label)?;
        if labels.len() < 2 {
            return Err(invalid("fusing needs at least two legs"));
        }
        let n = self.node(id)?;
        let mut children = Vec::new();
        for &l in &labels {
            let leg = n.leg(l).ok_or_else(|| invalid(format!("node {id} has no leg {l:?}")))?;
            if let Some((p, _)) = leg.peer {
                return Err(TntError::Structural(format!("leg {l:?} of node {id} is joined to node {p}")));
            }
            children.push(leg.clone());
        }
        if n.leg(new_label).is_some() && !labels.contains(&new_label) {
            return Err(TntError::LabelCollision(format!("node {id} already has leg {new_label:?}")));
        }
        let pos = n.legs.iter().position(|l| labels.contains(&l.label)).unwrap();
        let axes = children.iter().flat_map(|c| c.axes.iter().copied()).collect();
        let fused = Leg { label: new_label, axes, peer: None, children: Some(children) };
        let n = self.node_mut(id)?;
        n.legs.retain(|l| !labels.contains(&l.label));
        n.legs.insert(pos, fused);
        Ok(())
    }

    /// Restores the legs recorded by [`Graph::fuse`].
    pub fn unfuse(&mut self, id: NodeId, label: char) -> Result<()> {
        let leg = self.leg(id, label)?.clone();
        if let Some((p, _)) = leg.peer {
            return Err(TntError::Structural(format!("leg {label:?} of node {id} is joined to node {p}")));
        }
        let children = leg.children.ok_or_else(|| invalid(format!("leg {label:?} of node {id} is not fused")))?;
        let n = self.node_mut(id)?;
        let pos = n.legs.iter().position(|l| l.label == label).unwrap();
        n.legs.remove(pos);
        for (k, c) in children.into_iter().enumerate() {
            n.legs.insert(pos + k, c);
        }
        check_labels(&n.labels()).map_err(|e| TntError::LabelCollision(e.to_string()))?;
        Ok(())
    }

    /// Children of a fused leg as `(label, dim)` pairs.
    pub fn fused_children(&self, id: NodeId, label: char) -> Result<Option<FusedLeg>> {
        let leg = self.leg(id, label)?;
        match &leg.children {
            None => Ok(None),
            Some(ch) => {
                let pairs: Vec<(char, usize)> =
                    ch.iter().map(|c| Ok((c.label, self.leg_dim_of(id, c)?))).collect::<Result<_>>()?;
                Ok(Some(FusedLeg::record(&pairs)?))
            }
        }
    }

    fn leg_dim_of(&self, id: NodeId, leg: &Leg) -> Result<usize> {
        let dims = self.node(id)?.payload_dims();
        Ok(leg.axes.iter().map(|&a| dims[a]).product())
    }

    /// Moves the axes of a fused leg next to each other and merges them into one.
    fn materialize_fused(&mut self, id: NodeId, label: char) -> Result<()> {
        let leg = self.leg(id, label)?.clone();
        if leg.axes.len() < 2 {
            return Ok(());
        }
        let t = self.raw_payload(id)?;
        let rank = t.rank();
        let mut order: Vec<usize> = (0..rank).filter(|a| !leg.axes.contains(a)).collect();
        let first = order.len();
        order.extend(&leg.axes);
        let cache = self.config.cache();
        let merged = t.permute(&order, cache)?.merge_axes(first, leg.axes.len(), cache)?;
        let inverse = |a: usize| order.iter().position(|&o| o == a).unwrap();
        let n = self.node_mut(id)?;
        let new_pending: Vec<Option<ChargedIndex>> = vec![None; merged.rank()];
        for l in &mut n.legs {
            if l.label == label {
                l.axes = vec![first];
                l.children = None;
            } else {
                l.remap_axes(&inverse);
            }
        }
        n.pending = new_pending;
        n.payload = Payload::Static(Arc::new(merged));
        Ok(())
    }

    fn matricize_args(&self, id: NodeId, rows: &str, cols: &str) -> Result<(Vec<usize>, Vec<usize>)> {
        let rows = check_labels(rows)?;
        let cols = check_labels(cols)?;
        let n = self.node(id)?;
        let mut seen: Vec<char> = rows.iter().chain(&cols).copied().collect();
        seen.sort_unstable();
        let mut all: Vec<char> = n.legs.iter().map(|l| l.label).collect();
        all.sort_unstable();
        if seen != all {
            return Err(invalid(format!("row legs and column legs must partition the legs {:?} of node {id}", n.labels())));
        }
        let axes = |ls: &[char]| -> Vec<usize> { ls.iter().flat_map(|&c| n.leg(c).unwrap().axes.clone()).collect() };
        Ok((axes(&rows), axes(&cols)))
    }

    /// Values arranged as a matrix over the given row and column legs.
    pub fn matrix(&self, id: NodeId, rows: &str, cols: &str) -> Result<Array2<C64>> {
        let (r, c) = self.matricize_args(id, rows, cols)?;
        let t = self.operand(id)?;
        let mut order = r.clone();
        order.extend(&c);
        let d = t.to_dense().permute(&order, self.config.cache())?;
        let dims = d.dims();
        let nr: usize = dims[..r.len()].iter().product();
        let nc: usize = dims[r.len()..].iter().product();
        Ok(Array2::from_shape_vec((nr, nc), d.into_values()).expect("matrix shape"))
    }

    pub fn first_value(&self, id: NodeId) -> Result<C64> {
        let t = self.operand(id)?;
        let d = t.to_dense();
        Ok(d.values()[0])
    }

    pub fn diagonal(&self, id: NodeId, rows: &str, cols: &str) -> Result<Vec<C64>> {
        let m = self.matrix(id, rows, cols)?;
        Ok(m.diag().to_vec())
    }

    pub fn trace(&self, id: NodeId, rows: &str, cols: &str) -> Result<C64> {
        let m = self.matrix(id, rows, cols)?;
        if m.nrows() != m.ncols() {
            return Err(invalid(format!("trace of a {}x{} matricization of node {id}", m.nrows(), m.ncols())));
        }
        Ok(m.diag().sum())
    }

    /// Matrix form of the values as text, one row per line.
    pub fn print_matrix(&self, id: NodeId, rows: &str, cols: &str) -> Result<String> {
        let m = self.matrix(id, rows, cols)?;
        let mut s = String::new();
        for row in m.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{:+.6e}{:+.6e}i", v.re, v.im)).collect();
            writeln!(s, "{}", cells.join(" ")).unwrap();
        }
        Ok(s)
    }

    /// Metadata description of a node without its values.
    pub fn print_info(&self, id: NodeId) -> Result<String> {
        let n = self.node(id)?;
        let kind = match &n.payload {
            Payload::Static(t) if t.is_blocked() => "block-sparse",
            Payload::Static(_) => "dense",
            Payload::Functional(_) => "functional",
        };
        let mut s = format!("node {id}: {kind}, {} legs", n.legs.len());
        if n.conj {
            s.push_str(", conjugated");
        }
        if n.sentinel {
            s.push_str(", sentinel");
        }
        s.push('\n');
        for leg in &n.legs {
            write!(s, "  leg {} dim {}", leg.label, self.leg_dim_of(id, leg)?).unwrap();
            if let Some(idx) = self.leg_index(id, leg.label)? {
                let dir = match idx.direction() {
                    Direction::In => "in",
                    Direction::Out => "out",
                };
                write!(s, " {dir}").unwrap();
            }
            if let Some(ch) = &leg.children {
                let names: String = ch.iter().map(|c| c.label).collect();
                write!(s, " fused from {names}").unwrap();
            }
            match leg.peer {
                Some((p, pl)) => writeln!(s, " -> {p}.{pl}").unwrap(),
                None => writeln!(s, " free").unwrap(),
            }
        }
        Ok(s)
    }

    /// Operand list and free legs for contracting `nodes` together. Legs
    /// joined between members are summed; all other legs stay free.
    fn problem(&mut self, nodes: &[NodeId]) -> Result<(Problem, Vec<(usize, Leg)>)> {
        for (i, id) in nodes.iter().enumerate() {
            let n = self.node(*id)?;
            if n.sentinel {
                return Err(TntError::Structural(format!("sentinel node {id} cannot be contracted")));
            }
            if nodes[..i].contains(id) {
                return Err(invalid(format!("node {id} listed twice")));
            }
        }
        // fused legs joined to legs with a different axis split are merged first
        let mut to_merge = Vec::new();
        for &id in nodes {
            for leg in &self.node(id)?.legs {
                if let Some((p, pl)) = leg.peer {
                    if nodes.contains(&p) {
                        let other = self.leg(p, pl)?;
                        let same_split = other.axes.len() == leg.axes.len() && {
                            let da = self.node(id)?.payload_dims();
                            let db = self.node(p)?.payload_dims();
                            leg.axes.iter().zip(&other.axes).all(|(&x, &y)| da[x] == db[y])
                        };
                        if !same_split && leg.axes.len() > 1 {
                            to_merge.push((id, leg.label));
                        }
                    }
                }
            }
        }
        for (id, l) in to_merge {
            self.materialize_fused(id, l)?;
        }
        let mut offsets = Vec::with_capacity(nodes.len());
        let mut total = 0;
        for &id in nodes {
            offsets.push(total);
            total += self.node(id)?.payload_dims().len();
        }
        let mut partner = vec![None; total];
        let mut dim = vec![0; total];
        let mut operands = Vec::with_capacity(nodes.len());
        let mut free = Vec::new();
        for (k, &id) in nodes.iter().enumerate() {
            let n = self.node(id)?;
            let dims = n.payload_dims();
            operands.push((offsets[k]..offsets[k] + dims.len()).collect());
            for (a, &d) in dims.iter().enumerate() {
                dim[offsets[k] + a] = d;
            }
            for leg in &n.legs {
                match leg.peer {
                    Some((p, pl)) if nodes.contains(&p) => {
                        let pk = nodes.iter().position(|&x| x == p).unwrap();
                        let other = self.leg(p, pl)?;
                        for (&x, &y) in leg.axes.iter().zip(&other.axes) {
                            partner[offsets[k] + x] = Some(offsets[pk] + y);
                        }
                    }
                    _ => {
                        let mut l = leg.clone();
                        let off = offsets[k];
                        l.remap_axes(&|a| a + off);
                        free.push((k, l));
                    }
                }
            }
        }
        Ok((Problem { operands, partner, dim }, free))
    }

    /// Contraction schedule for `nodes` without performing it. The plan can be
    /// executed repeatedly on tensors with the same axis structure, given in
    /// the order of `nodes` with conjugate flags applied.
    pub fn plan_list(&mut self, output: &str, nodes: &[NodeId]) -> Result<ListPlan> {
        let out = check_labels(output)?;
        let (problem, free) = self.problem(nodes)?;
        if out.len() != free.len() {
            return Err(invalid(format!("{} output labels given for {} free legs", out.len(), free.len())));
        }
        let axes: Vec<usize> = free.iter().flat_map(|(_, l)| l.axes.iter().copied()).collect();
        problem.plan(&axes, None)
    }

    fn contract_group(
        &mut self,
        nodes: &[NodeId],
        labels: Option<Vec<char>>,
        maps: &[Vec<(char, char)>],
        order: Option<&[(usize, usize)]>,
    ) -> Result<NodeId> {
        let (problem, free) = self.problem(nodes)?;
        let labels = match labels {
            Some(ls) => {
                if ls.len() != free.len() {
                    return Err(invalid(format!("{} output labels given for {} free legs", ls.len(), free.len())));
                }
                ls
            }
            None => free.iter().map(|(k, l)| maps.get(*k).map_or(l.label, |m| apply_map(l.label, m))).collect(),
        };
        for (i, c) in labels.iter().enumerate() {
            if labels[..i].contains(c) {
                return Err(TntError::LabelCollision(format!("label {c:?} occurs twice in the result")));
            }
        }
        let out_axes: Vec<usize> = free.iter().flat_map(|(_, l)| l.axes.iter().copied()).collect();
        let plan = problem.plan(&out_axes, order)?;
        let ops: Vec<Arc<Tensor>> = nodes.iter().map(|&id| self.operand(id)).collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = ops.iter().map(|t| t.as_ref()).collect();
        let result = plan.execute(&refs, self.config.cache())?;
        // new axes follow the order of out_axes
        let mut legs = Vec::with_capacity(free.len());
        for ((_, leg), &label) in free.iter().zip(&labels) {
            let mut l = leg.clone();
            l.label = label;
            l.remap_axes(&|a| out_axes.iter().position(|&x| x == a).unwrap());
            legs.push(l);
        }
        for &id in nodes {
            for leg in &mut self.node_mut(id)?.legs {
                leg.peer = None;
            }
            self.release(id);
        }
        let externals: Vec<(NodeId, char, char)> =
            legs.iter().filter_map(|l| l.peer.map(|(p, pl)| (p, pl, l.label))).collect();
        let new = self.insert_tensor(result, legs);
        for (p, pl, label) in externals {
            self.leg_mut(p, pl)?.peer = Some((new, label));
        }
        Ok(new)
    }

    /// Contracts two nodes over every connection between them. Remaining
    /// legs of `a` come first, then those of `b`, relabelled by the optional
    /// leg maps. Contracting a node with itself traces its self-connections.
    pub fn contract_pair(&mut self, a: NodeId, b: NodeId, map_a: Option<&str>, map_b: Option<&str>) -> Result<NodeId> {
        let ma = map_a.map(parse_leg_map).transpose()?.unwrap_or_default();
        let mb = map_b.map(parse_leg_map).transpose()?.unwrap_or_default();
        if a == b {
            return self.contract_group(&[a], None, &[ma], None);
        }
        self.contract_group(&[a, b], None, &[ma, mb], None)
    }

    /// Contracts a group of nodes into one whose free legs, taken in node
    /// order, are relabelled by `output`. Three or four nodes are contracted
    /// in the cheapest pairwise order.
    pub fn contract_list(&mut self, output: &str, nodes: &[NodeId]) -> Result<NodeId> {
        let out = check_labels(output)?;
        self.contract_group(nodes, Some(out), &[], None)
    }

    /// As [`Graph::contract_list`] with an explicit pairwise order: each
    /// `(i, j)` merges the `j`-th remaining operand into the `i`-th.
    pub fn contract_list_ordered(&mut self, output: &str, nodes: &[NodeId], order: &[(usize, usize)]) -> Result<NodeId> {
        let out = check_labels(output)?;
        self.contract_group(nodes, Some(out), &[], Some(order))
    }

    /// Truncated SVD splitting `rows` from the other legs. `labels` names the
    /// new legs: of U, the left and right legs of S, and of V†. External
    /// connections move to U and V†; the original node is removed.
    pub fn svd(&mut self, id: NodeId, rows: &str, labels: &str, policy: &TruncationPolicy) -> Result<SvdNodes> {
        let rows = check_labels(rows)?;
        let new: Vec<char> = labels.chars().collect();
        if new.len() != 4 {
            return Err(invalid(format!("svd needs four new leg labels, got {labels:?}")));
        }
        for &c in &new {
            check_label(c)?;
        }
        let n = self.node(id)?.clone();
        if rows.is_empty() || rows.len() >= n.legs.len() {
            return Err(invalid(format!("row legs {rows:?} must be a nonempty proper subset of {:?}", n.labels())));
        }
        let row_legs: Vec<Leg> =
            rows.iter().map(|&c| n.leg(c).cloned().ok_or_else(|| invalid(format!("node {id} has no leg {c:?}")))).collect::<Result<_>>()?;
        let col_legs: Vec<Leg> = n.legs.iter().filter(|l| !rows.contains(&l.label)).cloned().collect();
        let (u_label, s_left, s_right, v_label) = (new[0], new[1], new[2], new[3]);
        if row_legs.iter().any(|l| l.label == u_label) || col_legs.iter().any(|l| l.label == v_label) || s_left == s_right {
            return Err(TntError::LabelCollision(format!("new labels {labels:?} clash with existing legs")));
        }
        let row_axes: Vec<usize> = row_legs.iter().flat_map(|l| l.axes.iter().copied()).collect();
        let col_axes: Vec<usize> = col_legs.iter().flat_map(|l| l.axes.iter().copied()).collect();
        let t = self.operand(id)?;
        let parts = t.svd(&row_axes, &col_axes, policy, &self.config.svd_settings(), self.config.cache())?;
        let mut u_legs = Vec::new();
        for l in &row_legs {
            let mut l = l.clone();
            l.remap_axes(&|a| row_axes.iter().position(|&x| x == a).unwrap());
            u_legs.push(l);
        }
        u_legs.push(Leg::plain(u_label, row_axes.len()));
        let mut v_legs = vec![Leg::plain(v_label, 0)];
        for l in &col_legs {
            let mut l = l.clone();
            l.remap_axes(&|a| col_axes.iter().position(|&x| x == a).unwrap() + 1);
            v_legs.push(l);
        }
        self.free(id)?;
        let u = self.insert_tensor(parts.u, u_legs.iter().map(|l| Leg { peer: None, ..l.clone() }).collect());
        let s = self.insert_tensor(parts.s, vec![Leg::plain(s_left, 0), Leg::plain(s_right, 1)]);
        let vdag = self.insert_tensor(parts.vdag, v_legs.iter().map(|l| Leg { peer: None, ..l.clone() }).collect());
        for (node, legs) in [(u, &u_legs), (vdag, &v_legs)] {
            for l in legs.iter() {
                if let Some((p, pl)) = l.peer {
                    self.join(node, l.label, p, pl)?;
                }
            }
        }
        self.join(u, u_label, s, s_left)?;
        self.join(s, s_right, vdag, v_label)?;
        Ok(SvdNodes { u, s, vdag, spectrum: parts.spectrum, bond_values: parts.bond_values })
    }

    /// Axis permutation taking `b`'s payload to the axis order of `a`'s,
    /// matching legs by label.
    fn align(&self, a: NodeId, b: NodeId) -> Result<Vec<usize>> {
        let na = self.node(a)?;
        let nb = self.node(b)?;
        let err = || TntError::IncompatibleNodes(format!("nodes {a} and {b} have different legs"));
        if na.legs.len() != nb.legs.len() {
            return Err(err());
        }
        let rank = na.payload_dims().len();
        if nb.payload_dims().len() != rank {
            return Err(err());
        }
        let mut perm = vec![usize::MAX; rank];
        for la in &na.legs {
            let lb = nb.leg(la.label).ok_or_else(err)?;
            if la.axes.len() != lb.axes.len() {
                return Err(err());
            }
            for (&x, &y) in la.axes.iter().zip(&lb.axes) {
                perm[x] = y;
            }
        }
        Ok(perm)
    }

    /// Elementwise sum of two nodes with identical structure.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let perm = self.align(a, b)?;
        let ta = self.operand(a)?;
        let tb = self.operand(b)?.permute(&perm, self.config.cache())?;
        if ta.dims() != tb.dims() {
            return Err(TntError::IncompatibleNodes(format!("nodes {a} and {b} have different dimensions")));
        }
        let sum = ta.add(&tb, self.config.cache()).map_err(|e| TntError::IncompatibleNodes(e.to_string()))?;
        let legs = self.node(a)?.legs.iter().map(|l| Leg { peer: None, ..l.clone() }).collect();
        Ok(self.insert_tensor(sum, legs))
    }

    /// Direct sum expanding the listed legs; all other legs must agree.
    pub fn direct_sum(&mut self, a: NodeId, b: NodeId, expand: &str) -> Result<NodeId> {
        let expand = check_labels(expand)?;
        let perm = self.align(a, b)?;
        let na = self.node(a)?;
        let mut axes = Vec::new();
        for &c in &expand {
            let leg = na.leg(c).ok_or_else(|| invalid(format!("node {a} has no leg {c:?}")))?;
            if leg.axes.len() != 1 {
                return Err(TntError::Structural(format!("leg {c:?} of node {a} is fused")));
            }
            axes.push(leg.axes[0]);
        }
        let ta = self.operand(a)?;
        let tb = self.operand(b)?.permute(&perm, self.config.cache())?;
        let sum = Tensor::direct_sum(&ta, &tb, &axes).map_err(|e| TntError::IncompatibleNodes(e.to_string()))?;
        let legs = self
            .node(a)?
            .legs
            .iter()
            .map(|l| Leg { peer: None, children: if expand.contains(&l.label) { None } else { l.children.clone() }, ..l.clone() })
            .collect();
        Ok(self.insert_tensor(sum, legs))
    }

    /// Functional node `F = exp(Σ p_i o_i)` or `Σ p_i o_i` with all
    /// parameters zero. Leading legs whose dimensions multiply to the operator
    /// size index the rows.
    pub fn func_create(&mut self, def: FunctionalDef, labels: &str) -> Result<NodeId> {
        let labels = check_labels(labels)?;
        if labels.len() != def.dims.len() {
            return Err(invalid(format!("{} labels given for {} dimensions", labels.len(), def.dims.len())));
        }
        let rank = def.dims.len();
        let legs = labels.iter().enumerate().map(|(i, &c)| Leg::plain(c, i)).collect();
        Ok(self.insert(NodeData {
            legs,
            payload: Payload::Functional(Functional::new(Arc::new(def))),
            conj: false,
            sentinel: false,
            pending: vec![None; rank],
        }))
    }

    /// Sets parameter `index` of a functional node; the values are realized
    /// again on next use.
    pub fn set_param(&mut self, id: NodeId, value: C64, index: usize) -> Result<()> {
        match &mut self.node_mut(id)?.payload {
            Payload::Functional(f) => f.set(index, value),
            Payload::Static(_) => Err(invalid(format!("node {id} is not functional"))),
        }
    }

    pub fn params(&self, id: NodeId) -> Result<Vec<C64>> {
        match &self.node(id)?.payload {
            Payload::Functional(f) => Ok(f.params.clone()),
            Payload::Static(_) => Err(invalid(format!("node {id} is not functional"))),
        }
    }

    /// Copies of `ids` preserving their mutual connections; returns the
    /// old-to-new id map.
    fn copy_group(&mut self, ids: &[NodeId], conjugate: bool) -> Result<HashMap<NodeId, NodeId>> {
        let mut map = HashMap::new();
        for &id in ids {
            let sentinel = self.node(id)?.sentinel;
            let c = self.copy(id, conjugate, None)?;
            self.node_mut(c)?.sentinel = sentinel;
            map.insert(id, c);
        }
        for &id in ids {
            let legs = self.node(id)?.legs.clone();
            for l in legs {
                if let Some((p, pl)) = l.peer {
                    if let (Some(&x), Some(&y)) = (map.get(&id), map.get(&p)) {
                        self.leg_mut(x, l.label)?.peer = Some((y, pl));
                    }
                }
            }
        }
        Ok(map)
    }

    /// Free legs of a node, in leg order.
    pub fn free_legs(&self, id: NodeId) -> Result<String> {
        Ok(self.node(id)?.legs.iter().filter(|l| l.peer.is_none()).map(|l| l.label).collect())
    }

    /// Legs joined to another node, with the peer.
    pub fn connections(&self, id: NodeId) -> Result<Vec<(char, NodeId, char)>> {
        Ok(self.node(id)?.legs.iter().filter_map(|l| l.peer.map(|(p, pl)| (l.label, p, pl))).collect())
    }
}
