//! Multi-level learning end to end: partitioned learning, lifting tokens
//! into coarser pathlets, and the unified dictionary.

use pathlet_core::decomposer::{cover_ratio, Decomposer};
use pathlet_core::hierarchy::{
    build_partition, learn_hierarchical, learn_level, lift_level, unify,
};
use pathlet_core::model::{Dictionary, DictionaryOrigin, Pathlet, Trajectory};
use pathlet_core::pipeline::{learn_flat, LearnParams};
use pathlet_core::rounding::ThetaMode;
use pathlet_core::synth::{gen_synthetic, SynthParams};

fn params(theta: f64) -> LearnParams {
    LearnParams {
        theta_mode: ThetaMode::Explicit,
        theta_explicit: Some(theta),
        c_min: 2,
        ..LearnParams::default()
    }
}

fn hand_dictionary(level: u32, seqs: &[&[u32]]) -> Dictionary {
    Dictionary {
        pathlets: seqs
            .iter()
            .enumerate()
            .map(|(i, s)| Pathlet {
                pathlet_id: i as u32,
                edge_seq: s.to_vec(),
                level,
                support: 1,
                cell: None,
                children: None,
            })
            .collect(),
        origin: DictionaryOrigin {
            lambda: 0.1,
            theta: 1.0,
            seed: 0,
            level,
            cell: None,
            config_hash: None,
        },
    }
}

fn token_trajs(seqs: &[&[u32]]) -> Vec<Trajectory> {
    seqs.iter()
        .enumerate()
        .map(|(i, s)| Trajectory {
            traj_id: i as u64,
            edge_seq: s.to_vec(),
        })
        .collect()
}

#[test]
fn degenerate_partition_matches_flat_learning() {
    // all edge midpoints coincide, so one cell holds the whole map and
    // per-cell learning degenerates to flat learning
    let corpus = gen_synthetic(&SynthParams {
        grid: 5,
        n_corridors: 2,
        corridor_len: 4,
        n_trajs: 30,
        noise: 1.0,
        seed: 4,
        spacing: 100.0,
    });
    let mut edges = corpus.graph.edges().to_vec();
    for e in &mut edges {
        e.geometry = Some(vec![(0.0, 0.0), (2.0, 0.0)]);
    }
    let flat_graph = pathlet_core::model::RoadGraph::new(edges).unwrap();
    let p = params(8.0);
    let tree = build_partition(&flat_graph, 1).unwrap();
    assert!(
        (0..corpus.graph.n_edges() as u32).all(|e| tree.cell_of(e) == 0),
        "all edges should fall into one cell"
    );
    let level = learn_level(&corpus.trajectories, &tree, &p).unwrap();
    // flat learning of the same single-cell instance, same seed derivation
    let flat = learn_flat(
        &corpus.trajectories,
        corpus.graph.n_edges(),
        tree.depth(),
        Some(0),
        &p,
    )
    .unwrap();
    assert_eq!(level.dictionary.pathlets, flat.dictionary.pathlets);
}

#[test]
fn disjoint_cells_learn_independent_union() {
    // grid split at depth 1; craft one trajectory entirely inside each half
    let corpus = gen_synthetic(&SynthParams {
        grid: 6,
        n_corridors: 2,
        corridor_len: 3,
        n_trajs: 40,
        noise: 0.0,
        seed: 12,
        spacing: 100.0,
    });
    let tree = build_partition(&corpus.graph, 1).unwrap();
    let p = params(6.0);
    let level = learn_level(&corpus.trajectories, &tree, &p).unwrap();
    // every sub-trajectory is covered: tokenization succeeded for all
    assert_eq!(level.token_seqs.len(), corpus.trajectories.len());
    for t in &level.token_seqs {
        assert!(!t.edge_seq.is_empty());
    }
    // pathlets keep their cell provenance and stay within one cell
    for pl in &level.dictionary.pathlets {
        let cell = pl.cell.expect("leaf-level pathlets carry their cell");
        for &e in &pl.edge_seq {
            assert_eq!(tree.cell_of(e), cell);
        }
    }
}

#[test]
fn shared_token_pair_lifts_into_single_super_pathlet() {
    // every trajectory is the same 2-token sequence: the lift should select
    // the pair as one super-pathlet (brute force over token segmentations:
    // pair costs 1 + 2*lambda*|T| versus singles 2 + 2*lambda*|T|)
    let finer = hand_dictionary(2, &[&[0, 1], &[2, 3]]);
    let tokens = token_trajs(&[&[0, 1], &[0, 1], &[0, 1], &[0, 1]]);
    let p = LearnParams {
        theta_mode: ThetaMode::Explicit,
        theta_explicit: Some(4.0),
        c_min: 1,
        ..LearnParams::default()
    };
    let lifted = lift_level(&tokens, &finer, &p).unwrap();
    let pair = lifted
        .dictionary
        .pathlets
        .iter()
        .find(|pl| pl.children.as_deref() == Some(&[0, 1]))
        .expect("pair super-pathlet missing");
    assert_eq!(pair.edge_seq, vec![0, 1, 2, 3], "expansion concatenates children");
    assert_eq!(pair.level, 1);
    // the pair dominates: every re-tokenized trajectory is a single token
    for t in &lifted.token_seqs {
        assert_eq!(t.edge_seq.len(), 1);
    }
}

#[test]
fn unshared_tokens_lift_to_singleton_super_pathlets() {
    let finer = hand_dictionary(1, &[&[0], &[1], &[2], &[3]]);
    let tokens = token_trajs(&[&[0, 1], &[2, 3]]);
    let p = LearnParams {
        theta_mode: ThetaMode::Explicit,
        theta_explicit: Some(4.0),
        c_min: 2,
        ..LearnParams::default()
    };
    let lifted = lift_level(&tokens, &finer, &p).unwrap();
    // no token pair is shared between trajectories; with c_min = 2 only the
    // singleton candidates survive, so every super-pathlet has one child
    for pl in &lifted.dictionary.pathlets {
        assert_eq!(pl.children.as_ref().unwrap().len(), 1);
    }
}

#[test]
fn lifting_single_token_trajectories_cannot_grow_the_dictionary() {
    let finer = hand_dictionary(1, &[&[0, 1], &[2, 3], &[4, 5]]);
    let tokens = token_trajs(&[&[0], &[1], &[0], &[2]]);
    let p = LearnParams {
        theta_mode: ThetaMode::Explicit,
        theta_explicit: Some(4.0),
        c_min: 1,
        ..LearnParams::default()
    };
    let lifted = lift_level(&tokens, &finer, &p).unwrap();
    assert!(lifted.dictionary.size() <= finer.size());
}

#[test]
fn unified_dictionary_never_raises_cost_over_finest_level() {
    let corpus = gen_synthetic(&SynthParams {
        grid: 8,
        n_corridors: 3,
        corridor_len: 6,
        n_trajs: 80,
        noise: 1.0,
        seed: 31,
        spacing: 100.0,
    });
    let p = params(4.0);
    let (unified, _) =
        learn_hierarchical(&corpus.trajectories, &corpus.graph, 1, 2, &p).unwrap();
    assert_eq!(unified.levels.len(), 2);
    let finest = unified
        .levels
        .iter()
        .find(|d| d.origin.level == 1)
        .unwrap();

    let finest_dec = Decomposer::new(&finest.pathlets);
    let unified_dec = Decomposer::new(&unified.column_pathlets());
    let (cov_f, _) = cover_ratio(&corpus.trajectories, &finest_dec);
    let (cov_u, _) = cover_ratio(&corpus.trajectories, &unified_dec);
    assert_eq!(cov_f, 1.0, "repair guarantees finest-level cover");
    assert_eq!(cov_u, 1.0, "unified dictionary preserves coverage");
    let mut cost_f = 0usize;
    let mut cost_u = 0usize;
    for t in &corpus.trajectories {
        cost_f += finest_dec.decompose(t).cost;
        cost_u += unified_dec.decompose(t).cost;
    }
    assert!(
        cost_u <= cost_f,
        "unified cost {cost_u} exceeds finest-only cost {cost_f}"
    );
}

#[test]
fn unify_keeps_identical_expansions_at_different_levels() {
    let g = pathlet_core::synth::grid_graph(4, 100.0);
    let east: Vec<u32> = (0..2)
        .map(|c| {
            g.edges()
                .iter()
                .find(|e| e.from_node == c && e.to_node == c + 1)
                .unwrap()
                .edge_id
        })
        .collect();
    let a = hand_dictionary(1, &[&east]);
    let mut b = hand_dictionary(0, &[&east]);
    b.pathlets[0].children = Some(vec![0]);
    let uni = unify(vec![a, b], &g).unwrap();
    assert_eq!(uni.size(), 2, "no cross-level deduplication");
    assert_eq!(uni.columns[0].level, 0, "column order is level-major");
    assert_eq!(uni.columns[1].level, 1);
}
