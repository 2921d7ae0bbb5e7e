use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{Conversation, DiscourseLink, RelationVocab, Response, Speaker, SpoTriplet};
use crate::tensor::{ParamStore, Tape, Tensor};

fn conv(texts: &[&str]) -> Conversation {
    let rs = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Response::new(i, if i % 2 == 0 { Speaker::Interlocutor } else { Speaker::Candidate }, t))
        .collect();
    Conversation::new("g", 5, rs)
}

fn word_node(g: &HeteroGraph, w: &str) -> usize {
    g.nodes.iter().position(|n| n.payload == Payload::Word(w.to_string())).unwrap()
}

#[test]
fn semantic_graph_links_shared_words() {
    let c = conv(&["i like dogs", "dogs are nice"]);
    let g = build_semantic_graph(&c, &GraphOptions::default());
    g.check().unwrap();
    let dogs = word_node(&g, "dogs");
    let targets: Vec<usize> = g.out_edges(dogs).filter(|e| e.kind == EdgeKind::WordToResponse).map(|e| e.dst).collect();
    assert_eq!(targets, vec![0, 1]);
    // like, dogs, nice
    assert_eq!(g.count(NodeKind::Word), 3);
    assert_eq!(g.n_nodes(), 3 + 2 + 1);
    assert_eq!(g.in_degree(dogs), 2);
    assert_eq!(g.out_degree(dogs), 3);
}

#[test]
fn semantic_graph_all_stopwords() {
    let c = conv(&["um i am so very ."]);
    let g = build_semantic_graph(&c, &GraphOptions::default());
    g.check().unwrap();
    assert_eq!(g.count(NodeKind::Word), 0);
    assert_eq!(g.n_nodes(), 2);
}

#[test]
fn action_graph_shapes() {
    let mut c = conv(&["i like dogs"]);
    let g = build_action_graph(&c, &GraphOptions::default());
    g.check().unwrap();
    assert_eq!(g.count(NodeKind::Intent), 1);
    assert_eq!(g.n_nodes(), 1 + 4 + 1);
    let intent = g.nodes.iter().position(|n| n.kind == NodeKind::Intent).unwrap();
    assert_eq!(g.in_edges(intent).filter(|e| e.kind == EdgeKind::SpoToIntent).count(), 3);
    assert!(g.out_edges(intent).any(|e| e.dst == 0 && e.kind == EdgeKind::IntentToResponse));

    c.responses[0].spo = Some(vec![]);
    let g = build_action_graph(&c, &GraphOptions::default());
    assert_eq!(g.n_nodes(), 2);

    let c = conv(&["i like dogs and we eat rice"]);
    let g = build_action_graph(&c, &GraphOptions::default());
    assert_eq!(g.count(NodeKind::Intent), 2);
    assert_eq!(g.edges.iter().filter(|e| e.kind == EdgeKind::IntentToResponse && e.dst == 0).count(), 2);
}

#[test]
fn interlocutor_spo_can_be_disabled() {
    let c = conv(&["i like dogs"]);
    let opts = GraphOptions { spo_for_interlocutor: false, ..GraphOptions::default() };
    assert_eq!(build_action_graph(&c, &opts).count(NodeKind::Intent), 0);
}

#[test]
fn levi_counts() {
    let (n, e) = levi_transform(&[], 3);
    assert!(n.is_empty() && e.is_empty());
    let c = conv(&["a", "b", "c"]);
    let g = build_discourse_graph(&c, &GraphOptions::default());
    g.check().unwrap();
    assert_eq!(g.n_nodes(), 3 + 2 + 1);
    let link = DiscourseLink { src: 0, dst: 1, relation: "QAP".into() };
    let (n, e) = levi_transform(&[link.clone(), link], 2);
    assert_eq!(n.len(), 2);
    assert_eq!(e.len(), 4);
    assert_ne!(e[0].dst, e[2].dst);
}

#[test]
fn dump_is_stable() {
    let c = conv(&["i like dogs", "dogs are nice"]);
    let b = GraphBundle::build(&c, &GraphOptions::default());
    b.check().unwrap();
    let d = b.dump();
    assert_eq!(d, b.dump());
    assert!(d.starts_with("graph c nodes=6 edges=13 global=5\nnode 0 Response response=0\n"));
    assert!(d.contains("node 2 Word token=\"like\"\n"));
    assert!(d.contains("edge 4 -> 3 DiscourseToResponse") || d.contains("graph d"));
}

#[test]
fn word_table_fallback() {
    let t = WordVecTable::new(2, vec![("a".into(), vec![1.0, 0.0]), ("b".into(), vec![0.0, 3.0])]).unwrap();
    assert_eq!(t.lookup("a"), &[1.0, 0.0]);
    assert_eq!(t.lookup("zzz"), &[0.5, 1.5]);
    assert!(WordVecTable::new(2, vec![]).is_err());
    assert!(WordVecTable::new(2, vec![("a".into(), vec![1.0])]).is_err());
}

fn init_fixture() -> (ParamStore, GraphInitParams, NgramEncoder) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = GraphInitParams::new(
        &mut store,
        &mut rng,
        "graph",
        8,
        &NodeInitConfig { word_dim: 4 },
        &RelationVocab::default(),
        [true, true, true],
    )
    .unwrap();
    let cfg = NgramConfig { embed_dim: 5, channels: 3, widths: vec![2, 3, 4], lstm_hidden: 2 };
    let n = NgramEncoder::new(&mut store, &mut rng, "ngram", 20, 8, &cfg).unwrap();
    (store, p, n)
}

#[test]
fn word_nodes_of_same_type_match_and_oov_uses_mean() {
    let (store, p, _) = init_fixture();
    let table = WordVecTable::random(&["like", "dogs"], 4, 1).unwrap();
    let c = conv(&["i like dogs", "dogs are nice"]);
    let g = build_semantic_graph(&c, &GraphOptions::default());
    let mut tape = Tape::new(&store);
    let resp = tape.constant(Tensor::zeros(&[2, 8]));
    let s = p.init_graph(&mut tape, &g, resp, &table).unwrap();
    let s = tape.value(s).clone();
    assert_eq!(s.shape(), &[6, 8]);
    // "nice" is out of table: projection of the mean vector
    let proj = &p.semantic.as_ref().unwrap().word_proj;
    let mut tape2 = Tape::new(&store);
    let m = tape2.constant(Tensor::matrix(1, 4, table.mean_vector().to_vec()).unwrap());
    let expect = proj.forward(&mut tape2, m).unwrap();
    let nice = word_node(&g, "nice");
    for k in 0..8 {
        assert!((s.get2(nice, k) - tape2.value(expect).get2(0, k)).abs() < 1e-12);
    }
}

#[test]
fn discourse_nodes_share_relation_embeddings() {
    let (store, p, _) = init_fixture();
    let table = WordVecTable::random(&["x"], 4, 1).unwrap();
    let c = conv(&["a", "b", "c", "d"]);
    let g = build_discourse_graph(&c, &GraphOptions::default());
    let mut tape = Tape::new(&store);
    let resp = tape.constant(Tensor::zeros(&[4, 8]));
    let s = p.init_graph(&mut tape, &g, resp, &table).unwrap();
    let s = tape.value(s).clone();
    // links: 0->1 QAP, 1->2 Continuation, 2->3 QAP
    assert_eq!(s.row(4), s.row(6));
    assert_ne!(s.row(4), s.row(5));
    let mut bad = g.clone();
    bad.nodes[4].payload = Payload::Discourse { src: 0, dst: 1, relation: "Nope".into() };
    let mut tape = Tape::new(&store);
    let resp = tape.constant(Tensor::zeros(&[4, 8]));
    assert!(matches!(p.init_graph(&mut tape, &bad, resp, &table), Err(crate::Error::Config(_))));
}

#[test]
fn action_rows_follow_node_order() {
    let (store, p, _) = init_fixture();
    let table = WordVecTable::random(&["like", "dogs", "rice", "eat"], 4, 2).unwrap();
    let c = conv(&["i like dogs and we eat rice"]);
    let g = build_action_graph(&c, &GraphOptions::default());
    let mut tape = Tape::new(&store);
    let resp = tape.constant(Tensor::zeros(&[1, 8]));
    let s = p.init_graph(&mut tape, &g, resp, &table).unwrap();
    let s = tape.value(s).clone();
    assert_eq!(s.rows(), g.n_nodes());
    // both intent nodes start from the shared intent vector
    let intents: Vec<usize> = (0..g.n_nodes()).filter(|&i| g.nodes[i].kind == NodeKind::Intent).collect();
    assert_eq!(intents, vec![4, 8]);
    assert_eq!(s.row(4), s.row(8));
    assert_eq!(s.row(4), store.get(p.action.as_ref().unwrap().intent).data());
    assert_ne!(s.row(2), s.row(6));
}

#[test]
fn response_init_residual_identity() {
    let (mut store, p, _) = init_fixture();
    for (l, _) in [p.response_mlp.0, p.response_mlp.1].iter().map(|l| (l, ())) {
        store.get_mut(l.w).data_mut().iter_mut().for_each(|v| *v = 0.0);
        store.get_mut(l.b).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut tape = Tape::new(&store);
    let hb = tape.constant(Tensor::filled(&[5, 8], 0.3));
    let ng = tape.constant(Tensor::matrix(2, 8, (0..16).map(|i| i as f64).collect()).unwrap());
    let out = p.init_response_nodes(&mut tape, hb, &[(0, 2), (3, 5)], ng).unwrap();
    assert_eq!(tape.value(out), tape.value(ng));
    assert!(p.init_response_nodes(&mut tape, hb, &[(0, 2)], ng).is_err());
}

#[test]
fn ngram_shape_and_order_sensitivity() {
    let (store, _, n) = init_fixture();
    let mut tape = Tape::new(&store);
    let a = n.forward(&mut tape, &[3, 4, 5, 6]).unwrap();
    let b = n.forward(&mut tape, &[6, 5, 4, 3]).unwrap();
    assert_eq!(tape.value(a).shape(), &[1, 8]);
    assert!(tape.value(a).max_abs_diff(tape.value(b)) > 1e-6);
    assert!(n.forward(&mut tape, &[]).is_err());
}

#[test]
fn ngram_conv_gradients_match_finite_differences() {
    let (store, _, n) = init_fixture();
    let report = crate::tensor::grad_check(
        |tape| {
            let y = n.forward(tape, &[3, 4, 5, 6, 7])?;
            let y = tape.tanh(y);
            Ok(tape.sum(y))
        },
        &store,
        1e-4,
        None,
    )
    .unwrap();
    assert!(report.passed(), "{:?}", report);
    assert!(report.groups.iter().any(|g| g.name.contains("conv") && g.checked > 0));
}

#[test]
fn annotated_spo_takes_precedence() {
    let mut c = conv(&["i like dogs"]);
    c.responses[0].spo = Some(vec![SpoTriplet {
        subject: crate::corpus::Span::single(2),
        predicate: crate::corpus::Span::single(1),
        object: crate::corpus::Span::single(0),
    }]);
    let g = build_action_graph(&c, &GraphOptions::default());
    assert!(matches!(&g.nodes[1].payload, Payload::Spo { tokens, .. } if tokens == &vec!["dogs".to_string()]));
}
