//! The three conversation graphs and their node-state initializers.
//!
//! Node layout is the same in every graph: response nodes first (response `i`
//! is node `i`), then the graph-specific nodes, then the global node last.

mod build;
mod init;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Span;

pub use build::{build_action_graph, build_discourse_graph, build_semantic_graph, levi_transform, GraphOptions};
pub use init::{GraphInitParams, NgramConfig, NgramEncoder, NodeInitConfig, WordVecTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Word,
    Response,
    Global,
    Subject,
    Predicate,
    Object,
    Intent,
    Discourse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    WordToResponse,
    ResponseToWord,
    SpoToIntent,
    IntentToResponse,
    ResponseToDiscourse,
    DiscourseToResponse,
    ToGlobal,
}

/// Which of the three graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GraphKind {
    /// Semantically related words, `G^c`.
    Semantic,
    /// Actions / intents, `G^a`.
    Action,
    /// Discourse relations, `G^d`.
    Discourse,
}

impl GraphKind {
    pub fn tag(self) -> &'static str {
        match self {
            GraphKind::Semantic => "c",
            GraphKind::Action => "a",
            GraphKind::Discourse => "d",
        }
    }

    fn allows(self, kind: NodeKind) -> bool {
        use NodeKind::*;
        match self {
            GraphKind::Semantic => matches!(kind, Word | Response | Global),
            GraphKind::Action => matches!(kind, Subject | Predicate | Object | Intent | Response | Global),
            GraphKind::Discourse => matches!(kind, Response | Discourse | Global),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Response(usize),
    Word(String),
    /// One role of an SPO triplet: its span and surface tokens.
    Spo { response: usize, triplet: usize, span: Span, tokens: Vec<String> },
    Intent { response: usize, triplet: usize },
    Discourse { src: usize, dst: usize, relation: String },
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeteroGraph {
    pub kind: GraphKind,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub global: usize,
    pub n_responses: usize,
}

impl HeteroGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Node id of response `i`.
    pub fn response_node(&self, i: usize) -> usize {
        debug_assert!(i < self.n_responses);
        i
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.dst == node).count()
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.src == node).count()
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.src == node)
    }

    pub fn in_edges(&self, node: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.dst == node)
    }

    /// Checks the structural invariants shared by every graph: one global
    /// node that only receives, an edge from every other node into it, valid
    /// endpoints, no self-loops, no duplicate typed edges, node kinds allowed
    /// for this graph, and responses occupying the first ids.
    pub fn check(&self) -> Result<(), String> {
        let n = self.nodes.len();
        let globals: Vec<usize> = (0..n).filter(|&i| self.nodes[i].kind == NodeKind::Global).collect();
        if globals != [self.global] {
            return Err(format!("expected exactly one global node at {}, found {:?}", self.global, globals));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !self.kind.allows(node.kind) {
                return Err(format!("node {} has kind {:?}, not allowed in graph {}", i, node.kind, self.kind.tag()));
            }
            if (i < self.n_responses) != (node.kind == NodeKind::Response) {
                return Err(format!("node {} ({:?}) breaks the response-first layout", i, node.kind));
            }
        }
        let mut to_global = alloc::vec![false; n];
        let mut seen = alloc::collections::BTreeSet::new();
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(format!("edge {:?} has an endpoint outside {} nodes", e, n));
            }
            if e.src == e.dst {
                return Err(format!("self-loop on node {}", e.src));
            }
            if e.src == self.global {
                return Err(format!("global node has outgoing edge to {}", e.dst));
            }
            if !seen.insert(*e) {
                return Err(format!("duplicate edge {:?}", e));
            }
            if e.dst == self.global {
                to_global[e.src] = true;
            }
        }
        if let Some(i) = (0..n).find(|&i| i != self.global && !to_global[i]) {
            return Err(format!("node {} has no edge to the global node", i));
        }
        Ok(())
    }

    /// Plain-text listing of nodes and edges.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        self.write_dump(&mut s).expect("writing to a String");
        s
    }

    fn write_dump(&self, s: &mut String) -> fmt::Result {
        writeln!(s, "graph {} nodes={} edges={} global={}", self.kind.tag(), self.nodes.len(), self.edges.len(), self.global)?;
        for (i, node) in self.nodes.iter().enumerate() {
            write!(s, "node {} {:?}", i, node.kind)?;
            match &node.payload {
                Payload::Response(r) => writeln!(s, " response={}", r)?,
                Payload::Word(w) => writeln!(s, " token={:?}", w)?,
                Payload::Spo { response, triplet, span, tokens } => writeln!(
                    s,
                    " response={} triplet={} span=[{},{}) text={:?}",
                    response,
                    triplet,
                    span.start,
                    span.end,
                    tokens.join(" ")
                )?,
                Payload::Intent { response, triplet } => writeln!(s, " response={} triplet={}", response, triplet)?,
                Payload::Discourse { src, dst, relation } => writeln!(s, " link={}->{} relation={}", src, dst, relation)?,
                Payload::Global => writeln!(s)?,
            }
        }
        for e in &self.edges {
            writeln!(s, "edge {} -> {} {:?}", e.src, e.dst, e.kind)?;
        }
        Ok(())
    }
}

/// `G^c`, `G^a` and `G^d` of one conversation. Response `i` is node `i` in each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphBundle {
    pub semantic: HeteroGraph,
    pub action: HeteroGraph,
    pub discourse: HeteroGraph,
}

impl GraphBundle {
    pub fn build(conv: &crate::corpus::Conversation, options: &GraphOptions) -> Self {
        GraphBundle {
            semantic: build_semantic_graph(conv, options),
            action: build_action_graph(conv, options),
            discourse: build_discourse_graph(conv, options),
        }
    }

    pub fn graphs(&self) -> [&HeteroGraph; 3] {
        [&self.semantic, &self.action, &self.discourse]
    }

    pub fn n_responses(&self) -> usize {
        self.semantic.n_responses
    }

    pub fn check(&self) -> Result<(), String> {
        for g in self.graphs() {
            g.check()?;
            if g.n_responses != self.n_responses() {
                return Err(format!("graph {} has {} responses, expected {}", g.kind.tag(), g.n_responses, self.n_responses()));
            }
        }
        Ok(())
    }

    pub fn dump(&self) -> String {
        self.graphs().iter().map(|g| g.dump()).collect()
    }
}

#[cfg(test)]
mod tests;
