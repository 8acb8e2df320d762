//! Source-to-terminal reliability of a network whose nodes and directed
//! edges fail independently.

use serde::{Deserialize, Serialize};

use super::TrustError;

/// Largest `|nodes| + |edges|` the enumeration oracle accepts.
pub const BRUTEFORCE_LIMIT: usize = 22;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetEdge {
    pub from: usize,
    pub to: usize,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilityNetwork {
    /// Operating probability of each node.
    pub nodes: Vec<f64>,
    pub edges: Vec<NetEdge>,
    pub source: usize,
    pub terminal: usize,
}

fn is_prob(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl ReliabilityNetwork {
    pub fn validate(&self) -> Result<(), TrustError> {
        let n = self.nodes.len();
        if self.source >= n || self.terminal >= n {
            return Err(TrustError::BadNetwork("source or terminal out of range"));
        }
        if !self.nodes.iter().all(|p| is_prob(*p)) {
            return Err(TrustError::BadNetwork("node probability outside [0, 1]"));
        }
        for e in &self.edges {
            if e.from >= n || e.to >= n {
                return Err(TrustError::BadNetwork("edge endpoint out of range"));
            }
            if !is_prob(e.p) {
                return Err(TrustError::BadNetwork("edge probability outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Exact reliability by summing over every up/down assignment.
    pub fn dpr_bruteforce(&self) -> Result<f64, TrustError> {
        self.validate()?;
        let (nv, ne) = (self.nodes.len(), self.edges.len());
        if nv + ne > BRUTEFORCE_LIMIT {
            return Err(TrustError::TooLarge(nv + ne));
        }
        let mut total = 0.0;
        let mut up_nodes = vec![false; nv];
        let mut up_edges = vec![false; ne];
        for mask in 0u32..(1 << (nv + ne)) {
            let mut prob = 1.0;
            for (i, p) in self.nodes.iter().enumerate() {
                up_nodes[i] = mask >> i & 1 == 1;
                prob *= if up_nodes[i] { *p } else { 1.0 - p };
            }
            for (k, e) in self.edges.iter().enumerate() {
                up_edges[k] = mask >> (nv + k) & 1 == 1;
                prob *= if up_edges[k] { e.p } else { 1.0 - e.p };
            }
            if prob != 0.0 && self.connected(&up_nodes, &up_edges) {
                total += prob;
            }
        }
        Ok(total)
    }

    fn connected(&self, up_nodes: &[bool], up_edges: &[bool]) -> bool {
        if !up_nodes[self.source] || !up_nodes[self.terminal] {
            return false;
        }
        let mut seen = vec![false; self.nodes.len()];
        seen[self.source] = true;
        let mut stack = vec![self.source];
        while let Some(u) = stack.pop() {
            if u == self.terminal {
                return true;
            }
            for (k, e) in self.edges.iter().enumerate() {
                if e.from == u && up_edges[k] && up_nodes[e.to] && !seen[e.to] {
                    seen[e.to] = true;
                    stack.push(e.to);
                }
            }
        }
        false
    }

    /// Reliability by edge factoring: `p_s` once, then repeatedly take the
    /// lowest-indexed edge leaving the merged source and either contract it
    /// (edge and head both up) or delete it.
    pub fn dpr_factoring(&self) -> Result<f64, TrustError> {
        self.validate()?;
        let mut merged = vec![false; self.nodes.len()];
        merged[self.source] = true;
        let edges: Vec<(usize, usize, f64)> = self.edges.iter().map(|e| (e.from, e.to, e.p)).collect();
        Ok(self.nodes[self.source] * self.factor(&mut merged, edges, self.nodes.clone()))
    }

    fn factor(&self, merged: &mut [bool], mut edges: Vec<(usize, usize, f64)>, node_p: Vec<f64>) -> f64 {
        if merged[self.terminal] {
            return 1.0;
        }
        // edges into the merged source can never help
        edges.retain(|(_, to, p)| !merged[*to] && *p > 0.0);
        if !reachable(merged, &edges, self.terminal) {
            return 0.0;
        }
        let k = edges.iter().position(|(from, _, _)| merged[*from]).expect("reachable implies a leaving edge");
        let (_, v, pe) = edges.remove(k);
        let q = pe * node_p[v];

        merged[v] = true;
        let contracted = self.factor(merged, edges.clone(), node_p.clone());
        merged[v] = false;
        if q >= 1.0 {
            return contracted;
        }
        // given not (edge up and v up), v is up with probability p_v(1-p_e)/(1-q)
        let mut deleted_p = node_p;
        deleted_p[v] = deleted_p[v] * (1.0 - pe) / (1.0 - q);
        q * contracted + (1.0 - q) * self.factor(merged, edges, deleted_p)
    }
}

fn reachable(merged: &[bool], edges: &[(usize, usize, f64)], terminal: usize) -> bool {
    let mut seen = merged.to_vec();
    let mut stack: Vec<usize> = (0..merged.len()).filter(|i| merged[*i]).collect();
    while let Some(u) = stack.pop() {
        if u == terminal {
            return true;
        }
        for (from, to, _) in edges {
            if *from == u && !seen[*to] {
                seen[*to] = true;
                stack.push(*to);
            }
        }
    }
    false
}
