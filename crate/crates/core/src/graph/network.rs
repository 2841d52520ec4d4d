//! Linked-list networks terminated by two sentinel nodes.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::dense::{DenseTensor, C64};
use crate::error::{Result, TntError};
use crate::tensor::Tensor;

use super::{Graph, Leg, NodeData, NodeId, Payload};

/// Handle to a network: its two terminators plus optional per-bond data.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    start: NodeId,
    end: NodeId,
    /// Schmidt coefficients on bond `k` (between node `k` and `k + 1`).
    pub schmidt: Vec<Option<Vec<f64>>>,
}

const START_LEG: char = 'R';
const END_LEG: char = 'L';

impl Network {
    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn end(&self) -> NodeId {
        self.end
    }
}

impl Graph {
    fn sentinel(&mut self, label: char) -> NodeId {
        self.insert(NodeData {
            legs: vec![Leg::plain(label, 0)],
            payload: Payload::Static(Arc::new(Tensor::Dense(DenseTensor::scalar(C64::new(0.0, 0.0)).reshape(vec![1]).unwrap()))),
            conj: false,
            sentinel: true,
            pending: vec![None],
        })
    }

    /// Empty network: the two terminators joined to each other.
    pub fn network_create(&mut self) -> Network {
        let start = self.sentinel(START_LEG);
        let end = self.sentinel(END_LEG);
        self.leg_mut(start, START_LEG).unwrap().peer = Some((end, END_LEG));
        self.leg_mut(end, END_LEG).unwrap().peer = Some((start, START_LEG));
        Network { start, end, schmidt: Vec::new() }
    }

    /// Node after the start terminator, `None` if the network is empty.
    pub fn find_first(&self, net: &Network) -> Result<Option<NodeId>> {
        let first = self.find_conn(net.start, START_LEG)?;
        Ok(if first == net.end { None } else { Some(first) })
    }

    pub fn find_last(&self, net: &Network) -> Result<Option<NodeId>> {
        let last = self.find_conn(net.end, END_LEG)?;
        Ok(if last == net.start { None } else { Some(last) })
    }

    /// Puts `node` first: its leg `left` joins the start terminator and its
    /// leg `right` joins the previous first node.
    pub fn insert_at_start(&mut self, net: &Network, node: NodeId, left: char, right: char) -> Result<()> {
        let (next, next_leg) = self.peer(net.start, START_LEG)?.ok_or_else(|| TntError::NotConnected("start terminator".into()))?;
        self.disconnect(net.start, START_LEG)?;
        self.join(net.start, START_LEG, node, left)?;
        self.join(node, right, next, next_leg)
    }

    pub fn insert_at_end(&mut self, net: &Network, node: NodeId, left: char, right: char) -> Result<()> {
        let (prev, prev_leg) = self.peer(net.end, END_LEG)?.ok_or_else(|| TntError::NotConnected("end terminator".into()))?;
        self.disconnect(net.end, END_LEG)?;
        self.join(net.end, END_LEG, node, right)?;
        self.join(prev, prev_leg, node, left)
    }

    /// All nodes reachable from the start terminator, terminators excluded,
    /// in breadth-first order following legs in leg order.
    pub fn network_nodes(&self, net: &Network) -> Result<Vec<NodeId>> {
        Ok(self.reachable(net)?.into_iter().filter(|id| *id != net.start && *id != net.end).collect())
    }

    fn reachable(&self, net: &Network) -> Result<Vec<NodeId>> {
        let mut seen = vec![net.start];
        let mut queue = VecDeque::from([net.start]);
        while let Some(id) = queue.pop_front() {
            for leg in &self.node(id)?.legs {
                if let Some((p, _)) = leg.peer {
                    if !seen.contains(&p) {
                        seen.push(p);
                        queue.push_back(p);
                    }
                }
            }
        }
        if !seen.contains(&net.end) {
            seen.push(net.end);
        }
        Ok(seen)
    }

    /// Copy sharing all payloads, optionally conjugated.
    pub fn network_copy(&mut self, net: &Network, conjugate: bool) -> Result<Network> {
        let ids = self.reachable(net)?;
        let map = self.copy_group(&ids, conjugate)?;
        Ok(Network { start: map[&net.start], end: map[&net.end], schmidt: net.schmidt.clone() })
    }

    /// Cuts the connection between `a` and `b`. The part holding `a` keeps
    /// the start terminator, the part holding `b` keeps the end terminator.
    pub fn network_split(&mut self, net: Network, a: NodeId, b: NodeId) -> Result<(Network, Network)> {
        let links: Vec<(char, char)> =
            self.node(a)?.legs.iter().filter_map(|l| l.peer.filter(|(p, _)| *p == b).map(|(_, pl)| (l.label, pl))).collect();
        if links.len() != 1 {
            return Err(TntError::Structural(format!("nodes {a} and {b} must share exactly one connection to split, found {}", links.len())));
        }
        let (la, lb) = links[0];
        self.disconnect(a, la)?;
        let end = self.sentinel(END_LEG);
        let start = self.sentinel(START_LEG);
        self.join(a, la, end, END_LEG)?;
        self.join(start, START_LEG, b, lb)?;
        let left_len = self.network_nodes(&Network { start: net.start, end, schmidt: Vec::new() })?.len();
        let mut left_s = net.schmidt.clone();
        let right_s = left_s.get(left_len..).map(<[_]>::to_vec).unwrap_or_default();
        left_s.truncate(left_len.saturating_sub(1));
        Ok((Network { start: net.start, end, schmidt: left_s }, Network { start, end: net.end, schmidt: right_s }))
    }

    /// Removes the terminators and returns the remaining nodes; their
    /// connections to each other are kept.
    pub fn network_to_node_group(&mut self, net: Network) -> Result<Vec<NodeId>> {
        let nodes = self.network_nodes(&net)?;
        self.free(net.start)?;
        self.free(net.end)?;
        Ok(nodes)
    }

    /// Removes every node of the network.
    pub fn network_free(&mut self, net: Network) -> Result<()> {
        for id in self.reachable(&net)? {
            self.free(id)?;
        }
        Ok(())
    }

    /// Contracts a copy of the network to a number. Free legs (including
    /// those at the terminators) must have dimension one.
    pub fn network_scalar(&mut self, net: &Network) -> Result<C64> {
        let copy = self.network_copy(net, false)?;
        let nodes = self.network_to_node_group(copy)?;
        for &id in &nodes {
            let free = self.free_legs(id)?;
            self.squeeze(id, &free)?;
        }
        let r = self.contract_list("", &nodes)?;
        let v = self.first_value(r)?;
        self.free(r)?;
        Ok(v)
    }
}
