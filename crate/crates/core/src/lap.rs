//! Rectangular linear assignment with forbidden entries.
//!
//! Rows and columns may stay unmatched at zero cost, so the solver returns
//! the partial one-to-one assignment of minimum total cost that uses no
//! forbidden entry. Internally the `r x c` problem is embedded in a square
//! `(r + c)` problem with one private "unmatched" slot per row and per column,
//! solved with the shortest-augmenting-path Hungarian method. Among optimal
//! assignments the lexicographically smallest is returned: row 0 takes the
//! lowest column it can while staying optimal, then row 1, and so on, with
//! "unmatched" ranked after every real column.

/// Row-major cost matrix; `None` marks a forbidden pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Option<f64>>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![None; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut m = Self::new(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.entries[row * self.cols + col]
    }

    /// Stores a cost; non-finite values are stored as forbidden.
    pub fn set(&mut self, row: usize, col: usize, cost: Option<f64>) {
        self.entries[row * self.cols + col] = cost.filter(|c| c.is_finite());
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    /// Total cost of the matches, summed in row order.
    pub fn total_cost(&self, costs: &CostMatrix) -> f64 {
        self.matches
            .iter()
            .map(|&(i, j)| costs.get(i, j).expect("matched entries are admissible"))
            .sum()
    }
}

pub fn solve(costs: &CostMatrix) -> Assignment {
    let (r, c) = (costs.rows, costs.cols);
    if costs.is_empty() || costs.entries.iter().all(Option::is_none) {
        return Assignment {
            matches: Vec::new(),
            unmatched_rows: (0..r).collect(),
            unmatched_cols: (0..c).collect(),
        };
    }

    let n = r + c;
    let square = Square::embed(costs);
    let (row_to_col, u, v) = hungarian(&square);

    let scale = costs
        .entries
        .iter()
        .flatten()
        .fold(1.0f64, |acc, x| acc.max(x.abs()));
    let tol = 1e-9 * scale;
    let tight = |i: usize, j: usize| match square.get(i, j) {
        Some(a) => a - u[i] - v[j] <= tol,
        None => false,
    };
    let row_to_col = lexicographic_min(n, r, row_to_col, tight);

    let mut out = Assignment::default();
    let mut col_used = vec![false; c];
    for (i, &j) in row_to_col.iter().enumerate().take(r) {
        if j < c {
            out.matches.push((i, j));
            col_used[j] = true;
        } else {
            out.unmatched_rows.push(i);
        }
    }
    out.unmatched_cols = (0..c).filter(|&j| !col_used[j]).collect();
    out
}

/// Square embedding: real block, row-unmatched diagonal, column-unmatched
/// diagonal and a zero block joining the two dummy sides.
struct Square<'a> {
    costs: &'a CostMatrix,
    r: usize,
    c: usize,
}

impl<'a> Square<'a> {
    fn embed(costs: &'a CostMatrix) -> Self {
        Self {
            costs,
            r: costs.rows,
            c: costs.cols,
        }
    }

    fn n(&self) -> usize {
        self.r + self.c
    }

    fn get(&self, i: usize, j: usize) -> Option<f64> {
        match (i < self.r, j < self.c) {
            (true, true) => self.costs.get(i, j),
            (true, false) => (j - self.c == i).then_some(0.0),
            (false, true) => (i - self.r == j).then_some(0.0),
            (false, false) => Some(0.0),
        }
    }
}

/// Shortest augmenting path Hungarian method (potentials form). Returns the
/// row assignment and dual potentials `u`, `v` with `a[i][j] - u[i] - v[j] >= 0`
/// and equality on assigned pairs.
fn hungarian(a: &Square<'_>) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = a.n();
    let inf = f64::INFINITY;
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                if let Some(cost) = a.get(i0 - 1, j - 1) {
                    let cur = cost - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            debug_assert!(delta.is_finite(), "embedding always admits a perfect matching");
            for j in 0..=n {
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

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Every perfect matching inside the tight (zero reduced cost) subgraph is
/// optimal. Walk the real rows in order and move each to the smallest tight
/// column that still admits a perfect matching of the remaining rows.
fn lexicographic_min(
    n: usize,
    real_rows: usize,
    mut row_to_col: Vec<usize>,
    tight: impl Fn(usize, usize) -> bool,
) -> Vec<usize> {
    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    let mut fixed = vec![false; n];
    let mut fixed_col = vec![false; n];
    let mut visited = vec![false; n];

    for i in 0..real_rows {
        for j in 0..n {
            if j == row_to_col[i] {
                break;
            }
            if fixed_col[j] || !tight(i, j) {
                continue;
            }
            // Move i to j: the displaced row k must reach i's old column via
            // an alternating path that avoids fixed rows and column j.
            let k = col_to_row[j];
            let old = row_to_col[i];
            visited.fill(false);
            visited[j] = true;
            let mut trial_r2c = row_to_col.clone();
            let mut trial_c2r = col_to_row.clone();
            trial_r2c[i] = j;
            trial_c2r[j] = i;
            // free old column, then find an augmenting path from k to it
            let target_free = old;
            if augment(k, target_free, &tight, &fixed, &mut visited, &mut trial_r2c, &mut trial_c2r, i) {
                row_to_col = trial_r2c;
                col_to_row = trial_c2r;
                break;
            }
        }
        fixed[i] = true;
        fixed_col[row_to_col[i]] = true;
    }
    row_to_col
}

/// Depth-first alternating path from `row` to the free column `free`, with
/// `moving` (the row just reassigned) and fixed rows excluded.
#[allow(clippy::too_many_arguments)]
fn augment(
    row: usize,
    free: usize,
    tight: &impl Fn(usize, usize) -> bool,
    fixed: &[bool],
    visited: &mut [bool],
    r2c: &mut [usize],
    c2r: &mut [usize],
    moving: usize,
) -> bool {
    let n = r2c.len();
    for j in 0..n {
        if visited[j] || !tight(row, j) {
            continue;
        }
        visited[j] = true;
        let owner = c2r[j];
        let reachable = if j == free {
            true
        } else if owner == moving || fixed[owner] {
            false
        } else {
            augment(owner, free, tight, fixed, visited, r2c, c2r, moving)
        };
        if reachable {
            r2c[row] = j;
            c2r[j] = row;
            return true;
        }
    }
    false
}
