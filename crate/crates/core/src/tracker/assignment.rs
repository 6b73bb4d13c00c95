//! Maximum-total-score assignment between track prefixes and detections.
//!
//! Classic O(n^3) Hungarian algorithm with potentials over a negated,
//! square-padded score matrix. Pairs scoring below the floor are stripped
//! from the optimal assignment afterwards and reported unmatched.

use alloc::vec::Vec;

/// Row-major score matrix, `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "score matrix shape mismatch");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Assignment outcome; indices refer to the input matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Matching {
    /// Matched (row, col) pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Hungarian assignment maximizing total score, then unmatching every pair
/// whose score is below `floor`.
#[allow(clippy::needless_range_loop)] // potentials update walks indices
pub fn hungarian(scores: &ScoreMatrix, floor: f64) -> Matching {
    let rows = scores.rows();
    let cols = scores.cols();
    if rows == 0 || cols == 0 {
        return Matching {
            pairs: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        };
    }

    // Pad to square; dummy cells carry score 0 (cost 0), which never beats
    // a real pairing under maximization since costs are -score.
    let n = rows.max(cols);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -scores.at(i, j)
        } else {
            0.0
        }
    };

    // Potentials-based Hungarian, 1-indexed internally.
    let inf = f64::INFINITY;
    let mut u = alloc::vec![0.0; n + 1];
    let mut v = alloc::vec![0.0; n + 1];
    let mut col_match = alloc::vec![0usize; n + 1]; // col -> row
    let mut way = alloc::vec![0usize; n + 1];
    for i in 1..=n {
        col_match[0] = i;
        let mut j0 = 0usize;
        let mut minv = alloc::vec![inf; n + 1];
        let mut used = alloc::vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_match[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
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
            for j in 0..=n {
                if used[j] {
                    u[col_match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_match[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_match[j0] = col_match[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut matched_row = alloc::vec![None::<usize>; rows];
    for j in 1..=n {
        let i = col_match[j];
        if i >= 1 && i <= rows && j <= cols {
            matched_row[i - 1] = Some(j - 1);
        }
    }

    let mut out = Matching::default();
    let mut col_taken = alloc::vec![false; cols];
    for (i, m) in matched_row.iter().enumerate() {
        match m {
            Some(j) if scores.at(i, *j) >= floor => {
                out.pairs.push((i, *j));
                col_taken[*j] = true;
            }
            _ => out.unmatched_rows.push(i),
        }
    }
    out.unmatched_cols = (0..cols).filter(|&j| !col_taken[j]).collect();
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use itertools::Itertools;
    use rand::Rng;

    /// Brute force over all injective assignments of the smaller side.
    pub(crate) fn brute_force_best(scores: &ScoreMatrix) -> f64 {
        let rows = scores.rows();
        let cols = scores.cols();
        if rows == 0 || cols == 0 {
            return 0.0;
        }
        if rows <= cols {
            (0..cols)
                .permutations(rows)
                .map(|perm| {
                    perm.iter()
                        .enumerate()
                        .map(|(i, &j)| scores.at(i, j))
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        } else {
            (0..rows)
                .permutations(cols)
                .map(|perm| {
                    perm.iter()
                        .enumerate()
                        .map(|(j, &i)| scores.at(i, j))
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        }
    }

    fn total(scores: &ScoreMatrix, m: &Matching) -> f64 {
        m.pairs.iter().map(|&(i, j)| scores.at(i, j)).sum()
    }

    #[test]
    fn one_by_one_floor() {
        let hi = ScoreMatrix::new(1, 1, alloc::vec![0.9]);
        let m = hungarian(&hi, 0.5);
        assert_eq!(m.pairs, alloc::vec![(0, 0)]);
        assert!(m.unmatched_rows.is_empty() && m.unmatched_cols.is_empty());

        let lo = ScoreMatrix::new(1, 1, alloc::vec![0.3]);
        let m = hungarian(&lo, 0.5);
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_rows, alloc::vec![0]);
        assert_eq!(m.unmatched_cols, alloc::vec![0]);
    }

    #[test]
    fn empty_matrices() {
        let m = hungarian(&ScoreMatrix::new(0, 3, alloc::vec![]), 0.0);
        assert_eq!(m.unmatched_cols, alloc::vec![0, 1, 2]);
        let m = hungarian(&ScoreMatrix::new(2, 0, alloc::vec![]), 0.0);
        assert_eq!(m.unmatched_rows, alloc::vec![0, 1]);
    }

    #[test]
    fn prefers_globally_optimal_assignment() {
        // Greedy would take (0,0)=0.9 and be stuck with (1,1)=0.1 (total 1.0);
        // optimum is 0.8 + 0.7 = 1.5.
        let s = ScoreMatrix::new(2, 2, alloc::vec![0.9, 0.8, 0.7, 0.1]);
        let m = hungarian(&s, 0.0);
        assert_eq!(m.pairs, alloc::vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn random_matrices_match_brute_force() {
        let mut rng = crate::sim::stream_rng(99, &[0xA551]);
        for case in 0..200 {
            let rows = rng.random_range(1..=6);
            let cols = rng.random_range(1..=6);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
            let s = ScoreMatrix::new(rows, cols, data);
            let m = hungarian(&s, f64::NEG_INFINITY);
            let got = total(&s, &m);
            let best = brute_force_best(&s);
            assert!(
                (got - best).abs() < 1e-9,
                "case {case}: hungarian {got} vs brute force {best} on {s:?}"
            );
            assert_eq!(m.pairs.len(), rows.min(cols));
        }
    }

    #[test]
    fn floor_strips_weak_pairs_only() {
        let s = ScoreMatrix::new(2, 2, alloc::vec![0.9, 0.0, 0.0, 0.2]);
        let m = hungarian(&s, 0.5);
        assert_eq!(m.pairs, alloc::vec![(0, 0)]);
        assert_eq!(m.unmatched_rows, alloc::vec![1]);
        assert_eq!(m.unmatched_cols, alloc::vec![1]);
    }
}
