//! Duplicate-free enumeration of connected vertex subsets of a small graph.
//!
//! Rooted growth in the style of ESU: every subset is grown from its minimal
//! vertex, and a candidate is only admitted to the extension set if it is
//! larger than the root and not already adjacent to the current subset. Each
//! connected subset is then produced along exactly one path, so no seen-set is
//! needed.

/// Visits every connected subset `S` of the graph given by `adj` whose total
/// `weight` is at most `budget`. Subsets are passed as the order in which they
/// were grown (not sorted). Weights must be positive.
pub(crate) fn for_each_connected_subset<F>(
    adj: &[Vec<usize>],
    weight: &[usize],
    budget: usize,
    mut visit: F,
) where
    F: FnMut(&[usize]),
{
    let n = adj.len();
    debug_assert_eq!(weight.len(), n);
    let mut covered = vec![0u32; n];
    let mut subset = Vec::new();
    for root in 0..n {
        if weight[root] > budget {
            continue;
        }
        subset.push(root);
        cover(adj, &mut covered, root, 1);
        let ext: Vec<usize> = adj[root].iter().copied().filter(|&u| u > root).collect();
        grow(
            adj,
            weight,
            budget - weight[root],
            root,
            &mut subset,
            ext,
            &mut covered,
            &mut visit,
        );
        cover(adj, &mut covered, root, -1);
        subset.pop();
    }
}

fn cover(adj: &[Vec<usize>], covered: &mut [u32], v: usize, delta: i32) {
    let apply = |c: &mut u32| {
        if delta > 0 {
            *c += 1
        } else {
            *c -= 1
        }
    };
    apply(&mut covered[v]);
    for &u in &adj[v] {
        apply(&mut covered[u]);
    }
}

#[allow(clippy::too_many_arguments)]
fn grow<F>(
    adj: &[Vec<usize>],
    weight: &[usize],
    remaining: usize,
    root: usize,
    subset: &mut Vec<usize>,
    mut ext: Vec<usize>,
    covered: &mut [u32],
    visit: &mut F,
) where
    F: FnMut(&[usize]),
{
    visit(subset);
    while let Some(w) = ext.pop() {
        if weight[w] > remaining {
            continue;
        }
        // exclusive neighbourhood of w relative to the current subset
        let mut next = ext.clone();
        for &u in &adj[w] {
            if u > root && covered[u] == 0 && !next.contains(&u) {
                next.push(u);
            }
        }
        subset.push(w);
        cover(adj, covered, w, 1);
        grow(
            adj,
            weight,
            remaining - weight[w],
            root,
            subset,
            next,
            covered,
            visit,
        );
        cover(adj, covered, w, -1);
        subset.pop();
    }
}
