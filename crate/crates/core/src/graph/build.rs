use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Edge, EdgeKind, GraphKind, HeteroGraph, Node, NodeKind, Payload};
use crate::corpus::{
    extract_spo_naive, Conversation, DiscourseLink, Speaker, DEFAULT_FILLED_PAUSES, PRONOUNS, STOPWORDS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphOptions {
    /// Tokens that never become word nodes.
    pub stopwords: Vec<String>,
    pub filled_pauses: Vec<String>,
    /// Run the naive SPO rule on interlocutor responses without annotations.
    pub spo_for_interlocutor: bool,
    /// Use adjacency links when a record carries no discourse annotation.
    pub fallback_links: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            stopwords: STOPWORDS.iter().chain(PRONOUNS.iter()).map(|s| s.to_string()).collect(),
            filled_pauses: DEFAULT_FILLED_PAUSES.iter().map(|s| s.to_string()).collect(),
            spo_for_interlocutor: true,
            fallback_links: true,
        }
    }
}

impl GraphOptions {
    fn is_content(&self, token: &str) -> bool {
        token.chars().any(char::is_alphanumeric)
            && !self.stopwords.iter().any(|s| s == token)
            && !self.filled_pauses.iter().any(|s| s == token)
    }
}

fn response_nodes(conv: &Conversation) -> Vec<Node> {
    (0..conv.responses.len()).map(|i| Node { kind: NodeKind::Response, payload: Payload::Response(i) }).collect()
}

/// Appends the global node and an edge into it from every other node.
fn finish(kind: GraphKind, mut nodes: Vec<Node>, mut edges: Vec<Edge>, n_responses: usize) -> HeteroGraph {
    let global = nodes.len();
    edges.extend((0..global).map(|src| Edge { src, dst: global, kind: EdgeKind::ToGlobal }));
    nodes.push(Node { kind: NodeKind::Global, payload: Payload::Global });
    HeteroGraph { kind, nodes, edges, global, n_responses }
}

/// `G^c`: one word node per distinct content token type, linked both ways to
/// every response that contains it.
pub fn build_semantic_graph(conv: &Conversation, options: &GraphOptions) -> HeteroGraph {
    let r = conv.responses.len();
    let mut nodes = response_nodes(conv);
    let mut edges = Vec::new();
    let mut word_id: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, resp) in conv.responses.iter().enumerate() {
        let mut linked: Vec<usize> = Vec::new();
        for t in resp.tokens.iter().filter(|t| options.is_content(t)) {
            let w = *word_id.entry(t.as_str()).or_insert_with(|| {
                nodes.push(Node { kind: NodeKind::Word, payload: Payload::Word(t.clone()) });
                nodes.len() - 1
            });
            if !linked.contains(&w) {
                linked.push(w);
                edges.push(Edge { src: w, dst: i, kind: EdgeKind::WordToResponse });
                edges.push(Edge { src: i, dst: w, kind: EdgeKind::ResponseToWord });
            }
        }
    }
    if word_id.is_empty() {
        log::warn!("conversation `{}` has no content words; semantic graph holds responses only", conv.id);
    }
    finish(GraphKind::Semantic, nodes, edges, r)
}

/// `G^a`: per SPO triplet, subject/predicate/object nodes feed one intent
/// node, which feeds its response. Triplets are never merged.
pub fn build_action_graph(conv: &Conversation, options: &GraphOptions) -> HeteroGraph {
    let r = conv.responses.len();
    let mut nodes = response_nodes(conv);
    let mut edges = Vec::new();
    for (i, resp) in conv.responses.iter().enumerate() {
        let triplets = match &resp.spo {
            Some(t) => t.clone(),
            None if resp.speaker == Speaker::Candidate || options.spo_for_interlocutor => {
                extract_spo_naive(&resp.tokens, None)
            }
            None => Vec::new(),
        };
        for (k, t) in triplets.iter().enumerate() {
            let first = nodes.len();
            for (kind, span) in [NodeKind::Subject, NodeKind::Predicate, NodeKind::Object].into_iter().zip(t.spans()) {
                let tokens = resp.tokens[span.range()].to_vec();
                nodes.push(Node { kind, payload: Payload::Spo { response: i, triplet: k, span, tokens } });
            }
            let intent = nodes.len();
            nodes.push(Node { kind: NodeKind::Intent, payload: Payload::Intent { response: i, triplet: k } });
            edges.extend((first..intent).map(|src| Edge { src, dst: intent, kind: EdgeKind::SpoToIntent }));
            edges.push(Edge { src: intent, dst: i, kind: EdgeKind::IntentToResponse });
        }
    }
    finish(GraphKind::Action, nodes, edges, r)
}

/// Levi transformation: link `k` becomes discourse node `offset + k` with
/// edges `src -> node` and `node -> dst` (responses are nodes `0..`).
pub fn levi_transform(links: &[DiscourseLink], offset: usize) -> (Vec<Node>, Vec<Edge>) {
    let mut nodes = Vec::with_capacity(links.len());
    let mut edges = Vec::with_capacity(2 * links.len());
    for (k, l) in links.iter().enumerate() {
        let d = offset + k;
        nodes.push(Node {
            kind: NodeKind::Discourse,
            payload: Payload::Discourse { src: l.src, dst: l.dst, relation: l.relation.clone() },
        });
        edges.push(Edge { src: l.src, dst: d, kind: EdgeKind::ResponseToDiscourse });
        edges.push(Edge { src: d, dst: l.dst, kind: EdgeKind::DiscourseToResponse });
    }
    (nodes, edges)
}

/// `G^d`: responses plus the Levi-transformed discourse links.
pub fn build_discourse_graph(conv: &Conversation, options: &GraphOptions) -> HeteroGraph {
    let r = conv.responses.len();
    let links = if options.fallback_links { conv.links_or_fallback() } else { conv.links() };
    let mut nodes = response_nodes(conv);
    let (dn, edges) = levi_transform(&links, r);
    nodes.extend(dn);
    finish(GraphKind::Discourse, nodes, edges, r)
}
