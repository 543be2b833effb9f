//! MDL co-clustering of a binary matrix by alternating row/column
//! reassignment with group-split proposals.
//!
//! The total description length is the model cost (group counts, assignment
//! maps, per-block one-counts) plus the combinatorial code cost of each
//! block given its density. Reassignment passes move rows (columns) to the
//! group whose block densities explain them most cheaply; a split proposal
//! bisects the most expensive group and is kept only when the total
//! codelength strictly decreases. Row-only and column-only splits cannot
//! break the symmetry of a balanced matrix, so a paired row+column split is
//! proposed before giving up.

use crate::util::log2_binomial;

/// Group-count cap; desk-scale matrices never benefit from more.
const MAX_GROUPS: usize = 24;
const IMPROVEMENT_EPS: f64 = 1e-9;
/// Density clamp for reassignment costs; a zero-density block effectively
/// forbids rows with ones there.
const DENSITY_EPS: f64 = 1e-12;

/// Dense binary matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<bool>,
}

impl BinaryMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        BinaryMatrix { rows, cols, data: vec![false; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<bool>>) -> Self {
        let r = rows.len();
        let c = rows.first().map(Vec::len).unwrap_or(0);
        let mut m = BinaryMatrix::new(r, c);
        for (i, row) in rows.into_iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.into_iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn ones(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }

    /// Fraction of ones over all cells.
    pub fn mean_density(&self) -> f64 {
        if self.rows * self.cols == 0 {
            0.0
        } else {
            self.ones() as f64 / (self.rows * self.cols) as f64
        }
    }
}

/// Result of [`cross_associate`]: contiguous group ids per row and column,
/// the final codelength in bits, and the codelength after every accepted
/// move (monotone non-increasing).
#[derive(Debug, Clone)]
pub struct CoClustering {
    pub row_groups: Vec<usize>,
    pub col_groups: Vec<usize>,
    pub k: usize,
    pub l: usize,
    pub codelength: f64,
    pub codelength_history: Vec<f64>,
}

impl CoClustering {
    /// Ones and size of the `(row group, col group)` block.
    pub fn block(&self, m: &BinaryMatrix, g: usize, h: usize) -> (u64, u64) {
        let mut ones = 0u64;
        let mut rows = 0u64;
        let mut cols = 0u64;
        for r in 0..m.rows {
            if self.row_groups[r] == g {
                rows += 1;
            }
        }
        for c in 0..m.cols {
            if self.col_groups[c] == h {
                cols += 1;
            }
        }
        for r in 0..m.rows {
            if self.row_groups[r] != g {
                continue;
            }
            for c in 0..m.cols {
                if self.col_groups[c] == h && m.get(r, c) {
                    ones += 1;
                }
            }
        }
        (ones, rows * cols)
    }

    /// Block density, zero for empty blocks.
    pub fn density(&self, m: &BinaryMatrix, g: usize, h: usize) -> f64 {
        let (ones, size) = self.block(m, g, h);
        if size == 0 {
            0.0
        } else {
            ones as f64 / size as f64
        }
    }
}

/// Universal code length for a positive integer (Rissanen's log*).
fn log_star(n: usize) -> f64 {
    let mut total = 1.5186; // normalizer
    let mut x = (n.max(1) as f64).log2();
    while x > 0.0 {
        total += x;
        x = x.log2();
    }
    total
}

struct State<'a> {
    m: &'a BinaryMatrix,
    row_g: Vec<usize>,
    col_g: Vec<usize>,
    k: usize,
    l: usize,
}

impl<'a> State<'a> {
    fn new(m: &'a BinaryMatrix) -> Self {
        State { m, row_g: vec![0; m.rows], col_g: vec![0; m.cols], k: 1, l: 1 }
    }

    fn snapshot(&self) -> (Vec<usize>, Vec<usize>, usize, usize) {
        (self.row_g.clone(), self.col_g.clone(), self.k, self.l)
    }

    fn restore(&mut self, snap: (Vec<usize>, Vec<usize>, usize, usize)) {
        self.row_g = snap.0;
        self.col_g = snap.1;
        self.k = snap.2;
        self.l = snap.3;
    }

    fn group_sizes(&self) -> (Vec<u64>, Vec<u64>) {
        let mut rsz = vec![0u64; self.k];
        let mut csz = vec![0u64; self.l];
        for &g in &self.row_g {
            rsz[g] += 1;
        }
        for &h in &self.col_g {
            csz[h] += 1;
        }
        (rsz, csz)
    }

    fn block_ones(&self) -> Vec<u64> {
        let mut ones = vec![0u64; self.k * self.l];
        for r in 0..self.m.rows {
            let g = self.row_g[r];
            for c in 0..self.m.cols {
                if self.m.get(r, c) {
                    ones[g * self.l + self.col_g[c]] += 1;
                }
            }
        }
        ones
    }

    fn total_codelength(&self) -> f64 {
        let (rsz, csz) = self.group_sizes();
        let ones = self.block_ones();
        let mut total = log_star(self.k) + log_star(self.l);
        total += self.m.rows as f64 * (self.k as f64).log2();
        total += self.m.cols as f64 * (self.l as f64).log2();
        for g in 0..self.k {
            for h in 0..self.l {
                let d = rsz[g] * csz[h];
                let n = ones[g * self.l + h];
                total += ((d + 1) as f64).log2();
                total += log2_binomial(d, n);
            }
        }
        total
    }

    /// Per-(row, col-group) one counts.
    fn row_profiles(&self) -> Vec<Vec<u64>> {
        let mut rc = vec![vec![0u64; self.l]; self.m.rows];
        for r in 0..self.m.rows {
            for c in 0..self.m.cols {
                if self.m.get(r, c) {
                    rc[r][self.col_g[c]] += 1;
                }
            }
        }
        rc
    }

    fn col_profiles(&self) -> Vec<Vec<u64>> {
        let mut cc = vec![vec![0u64; self.k]; self.m.cols];
        for r in 0..self.m.rows {
            let g = self.row_g[r];
            for c in 0..self.m.cols {
                if self.m.get(r, c) {
                    cc[c][g] += 1;
                }
            }
        }
        cc
    }

    fn densities(&self) -> Vec<f64> {
        let (rsz, csz) = self.group_sizes();
        let ones = self.block_ones();
        (0..self.k * self.l)
            .map(|idx| {
                let d = rsz[idx / self.l] * csz[idx % self.l];
                if d == 0 {
                    0.5
                } else {
                    (ones[idx] as f64 / d as f64).clamp(DENSITY_EPS, 1.0 - DENSITY_EPS)
                }
            })
            .collect()
    }

    fn row_pass(&mut self) {
        let p = self.densities();
        let (_, csz) = self.group_sizes();
        let rc = self.row_profiles();
        for r in 0..self.m.rows {
            let cost_of = |g: usize| -> f64 {
                let mut cost = 0.0;
                for h in 0..self.l {
                    let density = p[g * self.l + h];
                    let ones = rc[r][h] as f64;
                    let zeros = csz[h] as f64 - ones;
                    cost -= ones * density.log2() + zeros * (1.0 - density).log2();
                }
                cost
            };
            // A row moves only on strict improvement; among equally better
            // groups the smallest index wins.
            let mut best = (cost_of(self.row_g[r]), self.row_g[r]);
            for g in 0..self.k {
                if g == self.row_g[r] {
                    continue;
                }
                let cost = cost_of(g);
                if cost < best.0 - 1e-12 {
                    best = (cost, g);
                }
            }
            self.row_g[r] = best.1;
        }
    }

    fn col_pass(&mut self) {
        let p = self.densities();
        let (rsz, _) = self.group_sizes();
        let cc = self.col_profiles();
        for c in 0..self.m.cols {
            let cost_of = |h: usize| -> f64 {
                let mut cost = 0.0;
                for g in 0..self.k {
                    let density = p[g * self.l + h];
                    let ones = cc[c][g] as f64;
                    let zeros = rsz[g] as f64 - ones;
                    cost -= ones * density.log2() + zeros * (1.0 - density).log2();
                }
                cost
            };
            let mut best = (cost_of(self.col_g[c]), self.col_g[c]);
            for h in 0..self.l {
                if h == self.col_g[c] {
                    continue;
                }
                let cost = cost_of(h);
                if cost < best.0 - 1e-12 {
                    best = (cost, h);
                }
            }
            self.col_g[c] = best.1;
        }
    }

    /// Renumber groups contiguously, dropping emptied ones.
    fn compact(&mut self) {
        let remap = |assign: &mut Vec<usize>, count: usize| -> usize {
            let mut used = vec![false; count];
            for &g in assign.iter() {
                used[g] = true;
            }
            let mut map = vec![0usize; count];
            let mut next = 0;
            for (g, &u) in used.iter().enumerate() {
                if u {
                    map[g] = next;
                    next += 1;
                }
            }
            for g in assign.iter_mut() {
                *g = map[*g];
            }
            next.max(1)
        };
        self.k = remap(&mut self.row_g, self.k);
        self.l = remap(&mut self.col_g, self.l);
    }

    /// Alternate row/column passes until the total stops improving; a pass
    /// that would increase the total is reverted, so the return value never
    /// exceeds `starting total`.
    fn shuffle(&mut self) -> f64 {
        let mut current = self.total_codelength();
        loop {
            let snap = self.snapshot();
            self.row_pass();
            self.col_pass();
            self.compact();
            let new = self.total_codelength();
            if new < current - IMPROVEMENT_EPS {
                current = new;
            } else {
                if new > current + IMPROVEMENT_EPS {
                    self.restore(snap);
                }
                return current;
            }
        }
    }

    /// Group with the highest per-member code cost (the most heterogeneous
    /// one); `None` if no group has two members to split.
    fn costliest_group(&self, rows: bool) -> Option<usize> {
        let (rsz, csz) = self.group_sizes();
        let ones = self.block_ones();
        let (count, sizes) = if rows { (self.k, &rsz) } else { (self.l, &csz) };
        let mut best: Option<(f64, usize)> = None;
        for g in 0..count {
            if sizes[g] < 2 {
                continue;
            }
            let mut cost = 0.0;
            let other = if rows { self.l } else { self.k };
            for h in 0..other {
                let (d, n) = if rows {
                    (rsz[g] * csz[h], ones[g * self.l + h])
                } else {
                    (rsz[h] * csz[g], ones[h * self.l + g])
                };
                cost += log2_binomial(d, n);
            }
            let per_member = cost / sizes[g] as f64;
            if best.map_or(true, |(b, _)| per_member > b) {
                best = Some((per_member, g));
            }
        }
        best.map(|(_, g)| g)
    }

    /// Deterministically bisect `group` on raw profiles: seed A is the
    /// member farthest from the group mean, seed B the member farthest
    /// from A, members join the nearer seed. Returns false when the group
    /// is homogeneous (no split possible).
    fn bisect(&mut self, group: usize, rows: bool) -> bool {
        let members: Vec<usize> = if rows {
            (0..self.m.rows).filter(|&r| self.row_g[r] == group).collect()
        } else {
            (0..self.m.cols).filter(|&c| self.col_g[c] == group).collect()
        };
        if members.len() < 2 {
            return false;
        }
        let profile_len = if rows { self.m.cols } else { self.m.rows };
        let profile = |i: usize, at: usize| -> f64 {
            let v = if rows { self.m.get(i, at) } else { self.m.get(at, i) };
            if v {
                1.0
            } else {
                0.0
            }
        };
        let mut mean = vec![0.0f64; profile_len];
        for &i in &members {
            for (at, m) in mean.iter_mut().enumerate() {
                *m += profile(i, at);
            }
        }
        for m in &mut mean {
            *m /= members.len() as f64;
        }
        let l1_to_mean = |i: usize| -> f64 {
            (0..profile_len).map(|at| (profile(i, at) - mean[at]).abs()).sum()
        };
        let seed_a = *members
            .iter()
            .max_by(|&&a, &&b| l1_to_mean(a).partial_cmp(&l1_to_mean(b)).unwrap().then(b.cmp(&a)))
            .unwrap();
        let l1_between = |a: usize, b: usize| -> f64 {
            (0..profile_len).map(|at| (profile(a, at) - profile(b, at)).abs()).sum()
        };
        let seed_b = *members
            .iter()
            .filter(|&&i| i != seed_a)
            .max_by(|&&a, &&b| {
                l1_between(a, seed_a).partial_cmp(&l1_between(b, seed_a)).unwrap().then(b.cmp(&a))
            })
            .unwrap();
        if l1_between(seed_a, seed_b) == 0.0 {
            return false; // every member identical
        }
        let new_group = if rows { self.k } else { self.l };
        let mut moved = 0;
        for &i in &members {
            if i == seed_a {
                continue;
            }
            let to_b = i == seed_b || l1_between(i, seed_b) < l1_between(i, seed_a);
            if to_b {
                if rows {
                    self.row_g[i] = new_group;
                } else {
                    self.col_g[i] = new_group;
                }
                moved += 1;
            }
        }
        if moved == 0 || moved == members.len() {
            return false;
        }
        if rows {
            self.k += 1;
        } else {
            self.l += 1;
        }
        true
    }

    /// Try one split proposal; keep it only on strict improvement.
    fn try_split(&mut self, split_rows: bool, split_cols: bool, before: f64) -> Option<f64> {
        if (split_rows && self.k >= MAX_GROUPS) || (split_cols && self.l >= MAX_GROUPS) {
            return None;
        }
        let snap = self.snapshot();
        let mut changed = false;
        if split_rows {
            if let Some(g) = self.costliest_group(true) {
                changed |= self.bisect(g, true);
            }
        }
        if split_cols {
            if let Some(h) = self.costliest_group(false) {
                changed |= self.bisect(h, false);
            }
        }
        if !changed {
            self.restore(snap);
            return None;
        }
        let after = self.shuffle();
        if after < before - IMPROVEMENT_EPS {
            Some(after)
        } else {
            self.restore(snap);
            None
        }
    }
}

/// Co-cluster a binary matrix, growing row and column groups while the MDL
/// codelength strictly decreases.
pub fn cross_associate(m: &BinaryMatrix) -> CoClustering {
    let mut state = State::new(m);
    if m.rows == 0 || m.cols == 0 {
        return CoClustering {
            row_groups: state.row_g,
            col_groups: state.col_g,
            k: 1,
            l: 1,
            codelength: 0.0,
            codelength_history: vec![0.0],
        };
    }
    let mut current = state.shuffle();
    let mut history = vec![current];
    loop {
        let accepted = state
            .try_split(true, false, current)
            .or_else(|| state.try_split(false, true, current))
            .or_else(|| state.try_split(true, true, current));
        match accepted {
            Some(new) => {
                assert!(
                    new <= current + 1e-6,
                    "codelength increased on an accepted move: {current} -> {new}"
                );
                current = new;
                history.push(current);
            }
            None => break,
        }
    }
    for w in history.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "codelength history is not monotone");
    }
    CoClustering {
        row_groups: state.row_g,
        col_groups: state.col_g,
        k: state.k,
        l: state.l,
        codelength: current,
        codelength_history: history,
    }
}
