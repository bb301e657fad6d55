//! Ordered tree edit distance with unit costs (insert, delete, relabel),
//! computed by the Zhang–Shasha dynamic program over keyroot pairs.

use crate::ast::AstTree;

struct Flat {
    /// Labels in postorder.
    labels: Vec<String>,
    /// `lml[i]`: postorder index of the leftmost leaf of the subtree at
    /// postorder node `i`.
    lml: Vec<usize>,
    /// Keyroots in increasing postorder: for every distinct leftmost leaf,
    /// the highest node having it.
    keyroots: Vec<usize>,
}

fn flatten(tree: &AstTree) -> Flat {
    let order = tree.postorder();
    let n = order.len();
    let mut post_of = vec![0usize; tree.node_count()];
    for (i, &id) in order.iter().enumerate() {
        post_of[id] = i;
    }
    let mut labels = Vec::with_capacity(n);
    let mut lml = vec![0usize; n];
    for (i, &id) in order.iter().enumerate() {
        labels.push(tree.node(id).label.clone());
        let node = tree.node(id);
        lml[i] = if node.children.is_empty() {
            i
        } else {
            // Postorder visits children first; leftmost leaf of the first
            // child is also ours.
            lml[post_of[node.children[0]]]
        };
    }
    let mut seen = std::collections::HashSet::new();
    let mut keyroots = Vec::new();
    // Scanning from the end keeps only the highest node per leftmost leaf.
    for i in (0..n).rev() {
        if seen.insert(lml[i]) {
            keyroots.push(i);
        }
    }
    keyroots.reverse();
    Flat { labels, lml, keyroots }
}

/// Edit distance between two ordered labeled trees with unit costs.
pub fn tree_edit_distance(a: &AstTree, b: &AstTree) -> usize {
    let fa = flatten(a);
    let fb = flatten(b);
    let (n1, n2) = (fa.labels.len(), fb.labels.len());
    let mut td = vec![vec![0usize; n2]; n1];

    for &i in &fa.keyroots {
        for &j in &fb.keyroots {
            // Forest distance over the subtrees rooted at keyroots i and j.
            let li = fa.lml[i];
            let lj = fb.lml[j];
            let m = i - li + 2;
            let n = j - lj + 2;
            let mut fd = vec![vec![0usize; n]; m];
            for di in 1..m {
                fd[di][0] = fd[di - 1][0] + 1;
            }
            for dj in 1..n {
                fd[0][dj] = fd[0][dj - 1] + 1;
            }
            for di in 1..m {
                for dj in 1..n {
                    let i1 = li + di - 1;
                    let j1 = lj + dj - 1;
                    if fa.lml[i1] == li && fb.lml[j1] == lj {
                        // Both prefixes are whole trees: allow relabel.
                        let rel = usize::from(fa.labels[i1] != fb.labels[j1]);
                        fd[di][dj] = (fd[di - 1][dj] + 1)
                            .min(fd[di][dj - 1] + 1)
                            .min(fd[di - 1][dj - 1] + rel);
                        td[i1][j1] = fd[di][dj];
                    } else {
                        // Split at the leftmost leaves and reuse the stored
                        // subtree distance.
                        let fi = fa.lml[i1] - li;
                        let fj = fb.lml[j1] - lj;
                        fd[di][dj] = (fd[di - 1][dj] + 1)
                            .min(fd[di][dj - 1] + 1)
                            .min(fd[fi][fj] + td[i1][j1]);
                    }
                }
            }
        }
    }
    td[n1 - 1][n2 - 1]
}

/// Distance normalized by total node count, in `[0, 1]`.
pub fn normalized_tree_edit_distance(a: &AstTree, b: &AstTree) -> f64 {
    tree_edit_distance(a, b) as f64 / (a.node_count() + b.node_count()) as f64
}
