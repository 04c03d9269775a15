//! Maximum bipartite matching by augmenting paths. Deterministic: left
//! nodes are processed in order and adjacency lists are scanned as given.

/// Computes a maximum matching from left nodes to right nodes.
///
/// `adj[l]` lists the right nodes reachable from left node `l`. Returns
/// `match_of_left` where `match_of_left[l]` is the matched right node.
pub fn maximum_matching(adj: &[Vec<usize>], n_right: usize) -> Vec<Option<usize>> {
    let mut match_of_left = vec![None; adj.len()];
    let mut match_of_right: Vec<Option<usize>> = vec![None; n_right];
    let mut seen = vec![false; n_right];
    for left in 0..adj.len() {
        seen.fill(false);
        if augment(adj, left, &mut seen, &mut match_of_left, &mut match_of_right) {
            // matched
        }
    }
    match_of_left
}

/// Size of the maximum matching.
pub fn maximum_matching_size(adj: &[Vec<usize>], n_right: usize) -> usize {
    maximum_matching(adj, n_right)
        .iter()
        .filter(|m| m.is_some())
        .count()
}

/// True when every left node can be matched to a distinct right node.
pub fn has_perfect_matching(adj: &[Vec<usize>], n_right: usize) -> bool {
    maximum_matching_size(adj, n_right) == adj.len()
}

fn augment(
    adj: &[Vec<usize>],
    left: usize,
    seen: &mut [bool],
    match_of_left: &mut [Option<usize>],
    match_of_right: &mut [Option<usize>],
) -> bool {
    for &right in &adj[left] {
        if seen[right] {
            continue;
        }
        seen[right] = true;
        let free = match match_of_right[right] {
            None => true,
            Some(other) => augment(adj, other, seen, match_of_left, match_of_right),
        };
        if free {
            match_of_left[left] = Some(right);
            match_of_right[right] = Some(left);
            return true;
        }
    }
    false
}
