use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::embedding::{cosine_distance, mean_embedding, PromptRecord};
use crate::synthetic::{generate_synthetic, SyntheticSpec};

fn set(vectors: &[Vec<f64>]) -> PromptSet {
    PromptSet::new(
        vectors
            .iter()
            .enumerate()
            .map(|(i, v)| PromptRecord {
                id: format!("p{i}"),
                prompt: None,
                embedding: Embedding::new(v.clone()).unwrap(),
            })
            .collect(),
    )
    .unwrap()
}

fn unit(x: f64, y: f64) -> Vec<f64> {
    let n = (x * x + y * y).sqrt();
    vec![x / n, y / n]
}

#[test]
fn single_prompt_is_a_root_leaf() {
    let tree = build_tree(&set(&[vec![1.0, 2.0]])).unwrap();
    assert_eq!(tree.len(), 1);
    assert_eq!(tree.root(), NodeId(0));
    assert!(tree.node(tree.root()).is_leaf());
    assert_eq!(tree.c_max(), 0.0);
    assert_eq!(tree.path_to_root("p0").unwrap(), vec![NodeId(0)]);
}

#[test]
fn identical_pair_has_zero_root_score() {
    let tree = build_tree(&set(&[vec![0.3, 0.7], vec![0.3, 0.7]])).unwrap();
    assert_eq!(tree.len(), 3);
    assert_eq!(tree.c_max(), 0.0);
    assert_eq!(tree.inversion_count(), 0);
    assert_eq!(tree.path_to_root("p1").unwrap(), vec![NodeId(1), NodeId(2)]);
}

#[test]
fn four_point_example_merges_near_pairs_first() {
    let vectors = [
        unit(1.0, 0.0),
        unit(0.99, 0.141),
        unit(0.0, 1.0),
        unit(0.141, 0.99),
    ];
    let prompts = set(&vectors);
    // Pairwise distances by hand: the two near-axis pairs are ~0.01 apart,
    // every cross pair is >= 0.72 apart.
    let e: Vec<Embedding> = vectors
        .iter()
        .map(|v| Embedding::new(v.clone()).unwrap())
        .collect();
    let d01 = cosine_distance(&e[0], &e[1]).unwrap();
    let d23 = cosine_distance(&e[2], &e[3]).unwrap();
    let cross = [(0, 2), (0, 3), (1, 2), (1, 3)]
        .iter()
        .map(|&(a, b)| cosine_distance(&e[a], &e[b]).unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(d01 < cross && d23 < cross);

    let tree = build_tree(&prompts).unwrap();
    let seq = tree.merge_sequence();
    let first: BTreeSet<_> = seq[0].iter().copied().collect();
    let second: BTreeSet<_> = seq[1].iter().copied().collect();
    let pairs = [BTreeSet::from(["p0", "p1"]), BTreeSet::from(["p2", "p3"])];
    assert!(pairs.contains(&first) && pairs.contains(&second) && first != second);
    assert_eq!(seq[2].len(), 4);

    let root = tree.node(tree.root());
    let (a, b) = root.children.unwrap();
    assert!(root.score > tree.node(a).score && root.score > tree.node(b).score);
    assert_eq!(tree.inversion_count(), 0);
    for id in ["p0", "p1", "p2", "p3"] {
        assert_eq!(tree.path_to_root(id).unwrap().len(), 3);
    }
    assert_eq!(
        tree.canonical_form(),
        reference_build_tree(&prompts).unwrap().canonical_form()
    );
}

#[test]
fn three_collinear_points_merge_by_distance() {
    // Points on the line x = 1: angles 0°, 26.6°, 63.4°.
    let prompts = set(&[vec![1.0, 0.0], vec![1.0, 0.5], vec![1.0, 2.0]]);
    let e: Vec<_> = prompts.embeddings().cloned().collect();
    let d01 = cosine_distance(&e[0], &e[1]).unwrap();
    let d12 = cosine_distance(&e[1], &e[2]).unwrap();
    let d02 = cosine_distance(&e[0], &e[2]).unwrap();
    assert!(d01 < d12 && d12 < d02);

    let tree = reference_build_tree(&prompts).unwrap();
    assert_eq!(tree.merge_sequence()[0], vec!["p0", "p1"]);
    assert_eq!(tree.node(NodeId(3)).raw_score, d01);
    let m01 = mean_embedding([&e[0], &e[1]]).unwrap();
    assert_eq!(
        tree.node(NodeId(4)).raw_score,
        cosine_distance(&m01, &e[2]).unwrap()
    );
    assert_eq!(
        build_tree(&prompts).unwrap().canonical_form(),
        tree.canonical_form()
    );
}

#[test]
fn two_prompts_reference_matches() {
    let prompts = set(&[vec![1.0, 0.2], vec![0.1, 1.0]]);
    let a = build_tree(&prompts).unwrap();
    let b = reference_build_tree(&prompts).unwrap();
    assert_eq!(a.canonical_form(), b.canonical_form());
    assert_eq!(a.c_max(), b.c_max());
}

#[test]
fn reference_guard_rail() {
    let big = generate_synthetic(&SyntheticSpec {
        clusters: 65,
        per_cluster: 1,
        dimension: 4,
        jitter: 0.0,
        seed: 0,
    })
    .unwrap();
    assert!(matches!(reference_build_tree(&big), Err(Error::Usage(_))));
}

#[test]
fn unknown_prompt_is_usage_error() {
    let tree = build_tree(&set(&[vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
    assert!(matches!(tree.path_to_root("nope"), Err(Error::Usage(_))));
}

#[test]
fn ties_break_on_smallest_member_ids() {
    // Four identical vectors: every distance is 0, so merges follow id order.
    let prompts = set(&vec![vec![0.6, 0.8]; 4]);
    let tree = build_tree(&prompts).unwrap();
    let seq = tree.merge_sequence();
    assert_eq!(seq[0], vec!["p0", "p1"]);
    assert_eq!(seq[1], vec!["p0", "p1", "p2"]);
    assert_eq!(
        tree.canonical_form(),
        reference_build_tree(&prompts).unwrap().canonical_form()
    );
    for node in tree.nodes() {
        assert_eq!(node.score, 0.0);
        for (v, want) in node.embedding.values().iter().zip([0.6, 0.8]) {
            assert!((v - want).abs() < 1e-15);
        }
    }
}

#[test]
fn planted_clusters_are_recovered() {
    let spec = SyntheticSpec {
        clusters: 4,
        per_cluster: 8,
        dimension: 32,
        jitter: 0.02,
        seed: 11,
    };
    let prompts = generate_synthetic(&spec).unwrap();
    let tree = build_tree(&prompts).unwrap();
    let last: Vec<NodeId> = (tree.len() - 3..tree.len()).map(NodeId).collect();
    let mut subtrees = Vec::new();
    for &id in &last {
        let (a, b) = tree.node(id).children.unwrap();
        for c in [a, b] {
            if !last.contains(&c) {
                subtrees.push(tree.members(c));
            }
        }
    }
    let mut got: Vec<BTreeSet<usize>> = subtrees
        .into_iter()
        .map(|m| m.into_iter().map(|i| spec.label_of(i)).collect())
        .collect();
    got.sort();
    let want: Vec<BTreeSet<usize>> = (0..4).map(|c| BTreeSet::from([c])).collect();
    assert_eq!(got, want);
}

#[test]
fn json_round_trip() {
    let prompts = generate_synthetic(&SyntheticSpec {
        clusters: 3,
        per_cluster: 4,
        dimension: 8,
        jitter: 0.1,
        seed: 2,
    })
    .unwrap();
    let tree = build_tree(&prompts).unwrap();
    let json = tree.to_json(Some("abc".into())).unwrap();
    let (back, hash) = EmbeddingTree::from_json(&json).unwrap();
    assert_eq!(back, tree);
    assert_eq!(hash.as_deref(), Some("abc"));

    let mut file = tree.to_file(None);
    file.nodes[0].members = vec!["other".into()];
    assert!(EmbeddingTree::from_file(&file).is_err());
}

#[test]
fn member_means_follow_new_embeddings() {
    let prompts = set(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
    let other = set(&[vec![2.0, 0.0], vec![0.0, 4.0], vec![2.0, 2.0]]);
    let tree = build_tree(&prompts).unwrap();
    let moved = tree.with_member_means(&other).unwrap();
    for node in moved.nodes() {
        let members = moved.members(node.id);
        let want = mean_embedding(members.iter().map(|&i| &other.items()[i].embedding)).unwrap();
        for (x, y) in node.embedding.values().iter().zip(want.values()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert_eq!(node.score, tree.node(node.id).score);
    }
}

fn prompt_sets(max_n: usize, dim: usize) -> impl Strategy<Value = PromptSet> {
    prop::collection::vec(
        prop::collection::vec(-1.0f32..1.0, dim)
            .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f32>() > 1e-3),
        1..=max_n,
    )
    .prop_map(|rows| {
        set(&rows
            .iter()
            .map(|r| r.iter().map(|&x| f64::from(x)).collect())
            .collect::<Vec<_>>())
    })
}

proptest! {
    #[test]
    fn structural_invariants(prompts in prompt_sets(24, 4)) {
        let tree = build_tree(&prompts).unwrap();
        let n = prompts.len();
        prop_assert_eq!(tree.len(), 2 * n - 1);
        prop_assert_eq!(tree.nodes().iter().filter(|x| !x.is_leaf()).count(), n - 1);
        prop_assert_eq!(tree.members(tree.root()), (0..n).collect::<Vec<_>>());
        prop_assert_eq!(tree.c_max(), tree.node(tree.root()).score);
        for node in tree.nodes() {
            match node.children {
                None => {
                    prop_assert_eq!(node.score, 0.0);
                    prop_assert_eq!(tree.members(node.id).len(), 1);
                }
                Some((a, b)) => {
                    let ma = tree.members(a);
                    let mb = tree.members(b);
                    prop_assert!(ma.iter().all(|x| !mb.contains(x)));
                    let mut union = ma.clone();
                    union.extend(&mb);
                    union.sort_unstable();
                    prop_assert_eq!(union, tree.members(node.id));
                }
            }
            if let Some(p) = node.parent {
                prop_assert!(node.score <= tree.node(p).score);
            }
            let members = tree.members(node.id);
            let mean = mean_embedding(members.iter().map(|&i| &prompts.items()[i].embedding)).unwrap();
            for (x, y) in node.embedding.values().iter().zip(mean.values()) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300) + 1e-15,
                    "node {} mean {} vs {}", node.id, x, y);
            }
        }
        let inversions = tree.nodes().iter()
            .filter(|x| x.parent.is_some_and(|p| x.raw_score > tree.node(p).score))
            .count();
        prop_assert_eq!(inversions, tree.inversion_count());
    }

    #[test]
    fn duplicated_prompts_have_zero_scores(v in prop::collection::vec(0.1f32..1.0, 3), n in 1usize..80) {
        let row: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
        let tree = build_tree(&set(&vec![row; n])).unwrap();
        prop_assert_eq!(tree.c_max(), 0.0);
        prop_assert!(tree.nodes().iter().all(|x| x.score == 0.0 && x.raw_score == 0.0));
    }
}
