//! Kuhn-Munkres assignment with potentials, O(n^2 m).

/// Minimize total cost over injective row -> column assignments.
///
/// Rectangular matrices are fine; with more rows than columns the surplus
/// rows stay unassigned. Returns `assignment[row] = Some(col)`.
pub fn assign_min(cost: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        // transpose so the augmenting search runs with rows <= cols
        let mut tc = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                tc[j * rows + i] = cost[i * cols + j];
            }
        }
        let col_to_row = assign_min(&tc, cols, rows);
        let mut out = vec![None; rows];
        for (c, r) in col_to_row.iter().enumerate() {
            if let Some(r) = r {
                out[*r] = Some(c);
            }
        }
        return out;
    }

    let n = rows;
    let m = cols;
    let at = |i: usize, j: usize| cost[(i - 1) * m + (j - 1)];

    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; rows];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Maximize total score; pairs with zero score are left unmatched.
pub fn assign_max(score: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    let neg: Vec<f64> = score.iter().map(|s| -s).collect();
    let mut out = assign_min(&neg, rows, cols);
    for (i, slot) in out.iter_mut().enumerate() {
        if let Some(j) = *slot {
            if score[i * cols + j] <= 0.0 {
                *slot = None;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Min cost over maximum-cardinality assignments: exactly
    /// `rows - cols` rows may be skipped when rows exceed cols.
    fn brute_force_min(cost: &[f64], rows: usize, cols: usize) -> f64 {
        fn rec(
            cost: &[f64],
            rows: usize,
            cols: usize,
            row: usize,
            skips: usize,
            used: &mut Vec<bool>,
        ) -> f64 {
            if row == rows {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            if skips > 0 {
                best = rec(cost, rows, cols, row + 1, skips - 1, used);
            }
            for j in 0..cols {
                if !used[j] {
                    used[j] = true;
                    let c = cost[row * cols + j] + rec(cost, rows, cols, row + 1, skips, used);
                    used[j] = false;
                    best = best.min(c);
                }
            }
            best
        }
        let skips = rows.saturating_sub(cols);
        rec(cost, rows, cols, 0, skips, &mut vec![false; cols])
    }

    fn total(cost: &[f64], cols: usize, asg: &[Option<usize>]) -> f64 {
        asg.iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| cost[i * cols + j]))
            .sum()
    }

    #[test]
    fn classic_3x3() {
        let cost = vec![4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let asg = assign_min(&cost, 3, 3);
        assert_eq!(asg, vec![Some(1), Some(0), Some(2)]);
        assert_eq!(total(&cost, 3, &asg), 5.0);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for case in 0..200 {
            let rows = rng.gen_range(1..=6);
            let cols = rng.gen_range(1..=6);
            let cost: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(0.0..10.0)).collect();
            let asg = assign_min(&cost, rows, cols);
            let got = total(&cost, cols, &asg);
            let want = brute_force_min(&cost, rows, cols);
            assert!(
                (got - want).abs() < 1e-9,
                "case {}: {} vs {} ({}x{})",
                case,
                got,
                want,
                rows,
                cols
            );
            // injectivity
            let mut seen = vec![false; cols];
            for j in asg.iter().flatten() {
                assert!(!seen[*j]);
                seen[*j] = true;
            }
        }
    }

    #[test]
    fn max_drops_zero_score_pairs() {
        let score = vec![5.0, 0.0, 0.0, 0.0];
        let asg = assign_max(&score, 2, 2);
        assert_eq!(asg[0], Some(0));
        assert_eq!(asg[1], None);
    }
}
