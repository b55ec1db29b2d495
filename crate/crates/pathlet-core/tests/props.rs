//! Property tests for the enumeration, matrix, and ingestion invariants.

use pathlet_core::candidates::{build_matrices, enumerate_candidates};
use pathlet_core::model::{split_at_revisits, EdgeRecord, RoadGraph, Trajectory};
use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

fn corpus_strategy() -> impl Strategy<Value = Vec<Trajectory>> {
    // up to 8 sequences of up to 8 symbols over an alphabet of 6
    prop::collection::vec(prop::collection::vec(0u32..6, 1..8), 0..8).prop_map(|seqs| {
        seqs.into_iter()
            .enumerate()
            .map(|(i, edge_seq)| Trajectory {
                traj_id: i as u64,
                edge_seq,
            })
            .collect()
    })
}

/// Complete digraph on 3 nodes: edge id encodes the ordered node pair, so
/// arbitrary walks are easy to produce and stay contiguous.
fn complete_graph() -> (RoadGraph, Vec<(u64, u64)>) {
    let mut pairs = Vec::new();
    for a in 0..3u64 {
        for b in 0..3u64 {
            if a != b {
                pairs.push((a, b));
            }
        }
    }
    let edges = pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| EdgeRecord {
            edge_id: i as u32,
            from_node: a,
            to_node: b,
            geometry: None,
        })
        .collect();
    (RoadGraph::new(edges).unwrap(), pairs)
}

proptest! {
    #[test]
    fn supports_match_recount(trajs in corpus_strategy(), max_len in 1usize..5, c_min in 1u32..4) {
        let set = enumerate_candidates(&trajs, max_len, c_min);
        // independent recount
        let mut counts: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
        for t in &trajs {
            let mut seen = BTreeSet::new();
            for s in 0..t.edge_seq.len() {
                for e in s + 1..=t.edge_seq.len() {
                    if e - s <= max_len {
                        seen.insert(t.edge_seq[s..e].to_vec());
                    }
                }
            }
            for sub in seen {
                *counts.entry(sub).or_insert(0) += 1;
            }
        }
        for (i, seq) in set.seqs().iter().enumerate() {
            prop_assert_eq!(set.supports()[i], counts[seq]);
            prop_assert!(seq.len() == 1 || set.supports()[i] >= c_min);
        }
        // every singleton that occurs anywhere is retained
        for (seq, _) in &counts {
            if seq.len() == 1 {
                prop_assert!(set.singleton_row(seq[0]).is_some());
            }
        }
    }

    #[test]
    fn matrices_are_consistent_and_coverable(trajs in corpus_strategy(), c_min in 1u32..4) {
        let set = enumerate_candidates(&trajs, 4, c_min);
        let mats = build_matrices(&trajs, &set, 6).unwrap();
        let m_sums = mats.edge_traj.col_sums();
        for (j, t) in trajs.iter().enumerate() {
            let distinct: BTreeSet<_> = t.edge_seq.iter().collect();
            prop_assert_eq!(m_sums[j], distinct.len());
        }
        let d_sums = mats.edge_cand.col_sums();
        for (p, seq) in set.seqs().iter().enumerate() {
            let distinct: BTreeSet<_> = seq.iter().collect();
            prop_assert_eq!(d_sums[p], distinct.len());
        }
        // feasibility: every incidence entry has a covering candidate
        for (e, t) in mats.edge_traj.entries() {
            let coverable = mats.edge_cand.row(e).iter().any(|&p| {
                let seq = set.seq(p);
                trajs[t as usize]
                    .edge_seq
                    .windows(seq.len())
                    .any(|w| w == seq)
            });
            prop_assert!(coverable, "entry ({}, {}) has no covering candidate", e, t);
        }
    }

    #[test]
    fn split_segments_are_simple_and_rebuild_the_walk(choices in prop::collection::vec(0u8..2, 1..24), start in 0u64..3) {
        let (graph, pairs) = complete_graph();
        // drive a random contiguous walk, repeats allowed
        let mut at = start;
        let mut walk = Vec::new();
        for c in choices {
            let options: Vec<u32> = (0..pairs.len() as u32)
                .filter(|&e| pairs[e as usize].0 == at)
                .collect();
            let e = options[c as usize % options.len()];
            walk.push(e);
            at = pairs[e as usize].1;
        }
        let segments = split_at_revisits(0, &walk, &graph).unwrap();
        let rebuilt: Vec<u32> = segments.iter().flatten().copied().collect();
        prop_assert_eq!(rebuilt, walk);
        for seg in &segments {
            prop_assert!(graph.is_path(seg));
            let set: BTreeSet<_> = seg.iter().collect();
            prop_assert_eq!(set.len(), seg.len());
        }
    }
}
