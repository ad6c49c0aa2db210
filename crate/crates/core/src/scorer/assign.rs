//! Maximum-weight one-to-one assignment (Hungarian method with potentials).

/// Matches rows to columns maximizing the summed weight. Returns
/// `(row, col)` pairs sorted by row; pairs with zero weight are dropped, so
/// unmatched speakers are allowed on either side.
pub fn optimal_mapping(weights: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = weights.len();
    let cols = weights.iter().map(Vec::len).max().unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let n = rows.max(cols);
    let max_w = weights
        .iter()
        .flatten()
        .copied()
        .fold(0.0f64, f64::max);
    let cost = |i: usize, j: usize| -> f64 {
        let w = weights.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0.0);
        max_w - w
    };

    // 1-based arrays; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let i = owner[j];
            (i >= 1 && i <= rows && j <= cols).then(|| (i - 1, j - 1))
        })
        .filter(|&(i, j)| weights[i].get(j).copied().unwrap_or(0.0) > 0.0)
        .collect();
    pairs.sort_unstable();
    pairs
}
