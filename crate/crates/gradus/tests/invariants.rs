//! Property-based invariants: randomized inputs exercising the contracts
//! the rest of the system leans on (tokenization, hashing, label ranges,
//! edit-distance metric axioms, encoder output shape, mixture fits).

use approx::assert_relative_eq;
use proptest::prelude::*;

use gradus::ast::AstTree;
use gradus::eval::{average_precision, mrr_at_k};
use gradus::refine::{fit_gmm_1d, normalized_tree_edit_distance, tree_edit_distance};
use gradus::synth::{similarity_label, HashedBagAnnotator, SimilarityAnnotator};
use gradus::text::{derive_seed, tokenize, unit_fraction};
use gradus::train::{EncoderModel, Pooling};

// --- strategies -----------------------------------------------------------

/// Trees as parent-pointer vectors: node `i > 0` hangs off `parents[i-1] % i`.
fn tree_strategy(max_nodes: usize) -> impl Strategy<Value = AstTree> {
    (
        prop::collection::vec(any::<usize>(), 0..max_nodes),
        prop::collection::vec(0usize..4, 1..=max_nodes),
    )
        .prop_map(|(parents, labels)| {
            let names = ["alpha", "beta", "gamma", "delta"];
            let mut tree = AstTree::new(names[labels[0]]);
            let mut ids = vec![tree.root()];
            for (i, parent_raw) in parents.iter().enumerate() {
                let label = names[labels[(i + 1) % labels.len()]];
                let parent = ids[parent_raw % ids.len()];
                ids.push(tree.add_node(parent, label));
            }
            tree
        })
}

fn render_compact(tree: &AstTree, id: usize, out: &mut String) {
    out.push_str(&tree.node(id).label);
    let children = &tree.node(id).children;
    if !children.is_empty() {
        out.push('(');
        for (i, &c) in children.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            render_compact(tree, c, out);
        }
        out.push(')');
    }
}

// --- properties -----------------------------------------------------------

proptest! {
    #[test]
    fn tokens_are_lowercase_alphanumeric_and_stable(text in ".{0,200}") {
        let tokens = tokenize(&text);
        prop_assert_eq!(&tokens, &tokenize(&text));
        for t in &tokens {
            prop_assert!(!t.is_empty());
            prop_assert!(t.chars().all(|c| c.is_alphanumeric()));
            // Already in lowercase form (some chars, e.g. math-bold capitals,
            // have no lowercase mapping and stay as they are).
            prop_assert_eq!(t, &t.to_lowercase());
        }
    }

    #[test]
    fn tokenization_distributes_over_concatenation(
        a in "[a-zA-Z0-9_ ]{0,60}",
        b in "[a-zA-Z0-9_ ]{0,60}",
    ) {
        let mut joined = tokenize(&a);
        joined.extend(tokenize(&b));
        prop_assert_eq!(tokenize(&format!("{a} {b}")), joined);
    }

    #[test]
    fn unit_fraction_stays_in_the_unit_interval(root in any::<u64>(), id in ".{0,40}") {
        let f = unit_fraction(root, "holdout", &id);
        prop_assert!((0.0..1.0).contains(&f));
        prop_assert_eq!(f, unit_fraction(root, "holdout", &id));
    }

    #[test]
    fn derived_seeds_are_deterministic(root in any::<u64>(), label in ".{0,40}") {
        prop_assert_eq!(derive_seed(root, &label), derive_seed(root, &label));
    }

    #[test]
    fn similarity_labels_are_bounded_and_monotone(
        a in -1.0f64..=1.0,
        b in -1.0f64..=1.0,
    ) {
        let (la, lb) = (similarity_label(a), similarity_label(b));
        prop_assert!((0.0..1.0).contains(&la));
        prop_assert!((0.0..1.0).contains(&lb));
        if a <= b {
            prop_assert!(la <= lb);
        }
    }

    #[test]
    fn hashed_bag_self_similarity_is_unity(text in "[a-z]{1,12}( [a-z]{1,12}){0,10}") {
        let annotator = HashedBagAnnotator { buckets: 256 };
        let vectors = annotator
            .embed_batch(&[text.clone(), text.clone()])
            .expect("alphabetic text always tokenizes");
        let dot: f64 = vectors[0].iter().zip(&vectors[1]).map(|(x, y)| x * y).sum();
        let n0: f64 = vectors[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        let n1: f64 = vectors[1].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_relative_eq!(dot / (n0 * n1), 1.0, max_relative = 1e-12);
        prop_assert!((0.0..1.0).contains(&similarity_label(dot / (n0 * n1))));
    }

    #[test]
    fn edit_distance_satisfies_metric_axioms(
        x in tree_strategy(6),
        y in tree_strategy(6),
        z in tree_strategy(6),
    ) {
        let dxy = tree_edit_distance(&x, &y);
        let dyx = tree_edit_distance(&y, &x);
        prop_assert_eq!(dxy, dyx, "symmetry");
        prop_assert_eq!(tree_edit_distance(&x, &x), 0, "identity");
        let dxz = tree_edit_distance(&x, &z);
        let dyz = tree_edit_distance(&y, &z);
        prop_assert!(dxz <= dxy + dyz, "triangle: {dxz} > {dxy} + {dyz}");
        prop_assert!(dxy <= x.node_count() + y.node_count(), "delete-all upper bound");

        let norm = normalized_tree_edit_distance(&x, &y);
        prop_assert!((0.0..=1.0).contains(&norm));
    }

    #[test]
    fn compact_rendering_round_trips(tree in tree_strategy(8)) {
        let mut compact = String::new();
        render_compact(&tree, tree.root(), &mut compact);
        let parsed = AstTree::from_compact(&compact).expect("rendered form parses");
        prop_assert_eq!(parsed.node_count(), tree.node_count());
        prop_assert_eq!(tree_edit_distance(&parsed, &tree), 0);
    }

    #[test]
    fn rank_metrics_stay_in_the_unit_interval(
        ranks in prop::collection::vec(1usize..50, 1..20),
        k in 1usize..50,
    ) {
        let mrr = mrr_at_k(&ranks, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&mrr));
    }

    #[test]
    fn average_precision_stays_in_the_unit_interval(
        ordering in Just((0usize..20).collect::<Vec<_>>()).prop_shuffle(),
        relevant in prop::collection::hash_set(0usize..20, 1..8),
    ) {
        let ap = average_precision(&ordering, &relevant);
        prop_assert!((0.0..=1.0).contains(&ap), "ap = {ap}");
    }

    #[test]
    fn encoder_outputs_are_unit_length_and_deterministic(
        text in "[a-z]{1,10}( [a-z]{1,10}){0,8}",
        seed in any::<u64>(),
    ) {
        let model = EncoderModel::new(128, 16, Pooling::Mean, seed);
        let e1 = model.encode(&text).unwrap();
        let e2 = model.encode(&text).unwrap();
        prop_assert_eq!(&e1, &e2);
        prop_assert_eq!(e1.len(), 16);
        prop_assert!(e1.iter().all(|v| v.is_finite()));
        let norm: f64 = e1.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_relative_eq!(norm, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn mixture_fit_orders_components_and_bounds_the_threshold(
        lo_center in 0.05f64..0.35,
        hi_center in 0.65f64..0.95,
        jitter in prop::collection::vec(-0.04f64..0.04, 40..120),
    ) {
        let samples: Vec<f64> = jitter
            .iter()
            .enumerate()
            .map(|(i, j)| if i % 2 == 0 { lo_center + j } else { hi_center + j })
            .collect();
        let fit = fit_gmm_1d(&samples, 100, 1e-6, 0).unwrap();
        prop_assert!(fit.mu1 <= fit.mu2);
        prop_assert!(fit.s_star >= fit.mu1 - 1e-9 && fit.s_star <= fit.mu2 + 1e-9);
        prop_assert!((0.0..=1.0).contains(&fit.weight1));
        for w in fit.log_likelihood_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
    }
}
