//! Binary decision trees shared by the CART, random-forest and boosted learners.
//!
//! Trees are grown depth-first from per-feature presorted sample lists, so a
//! level costs O(samples x features) regardless of depth. Split candidates are
//! midpoints between consecutive distinct values; ties in gain keep the lowest
//! feature index, then the lowest threshold.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Split feature, or [`LEAF`].
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Prediction at this node (class fraction or boosted leaf weight).
    pub value: f64,
    /// Sample weight reaching the node (row count, or hessian sum).
    pub weight: f64,
    /// Node risk under the growth criterion (Gini: count x impurity).
    pub risk: f64,
    /// Criterion gain of this node's split; 0 for leaves.
    pub gain: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_of(x)].value
    }

    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return i;
            }
            i = if x[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize;
        }
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| !n.is_leaf())
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Visit every leaf that some hybrid of `x` and `b` can reach. The
    /// callback receives the leaf value and the diverging splits on its path
    /// as `(feature, taken_from_x)`; the leaf is reached exactly by the
    /// coalitions containing every `from_x` feature and no `from_b` feature.
    pub fn for_each_hybrid_leaf<F: FnMut(f64, &[(usize, bool)])>(&self, x: &[f64], b: &[f64], mut visit: F) {
        let mut path = Vec::new();
        self.walk(0, x, b, &mut path, &mut visit);
    }

    fn walk<F: FnMut(f64, &[(usize, bool)])>(&self, i: usize, x: &[f64], b: &[f64], path: &mut Vec<(usize, bool)>, visit: &mut F) {
        let n = &self.nodes[i];
        if n.is_leaf() {
            visit(n.value, path);
            return;
        }
        let f = n.feature as usize;
        let x_left = x[f] <= n.threshold;
        let b_left = b[f] <= n.threshold;
        let child = |left: bool| if left { n.left } else { n.right } as usize;
        if x_left == b_left {
            return self.walk(child(x_left), x, b, path, visit);
        }
        if let Some(&(_, from_x)) = path.iter().find(|(g, _)| *g == f) {
            return self.walk(child(if from_x { x_left } else { b_left }), x, b, path, visit);
        }
        path.push((f, true));
        self.walk(child(x_left), x, b, path, visit);
        path.pop();
        path.push((f, false));
        self.walk(child(b_left), x, b, path, visit);
        path.pop();
    }

    /// Adds `scale * f(x_S, b_~S)` to `table[S]` for every coalition bitmask
    /// `S` (bit j set = feature j taken from `x`).
    pub fn accumulate_coalitions(&self, x: &[f64], b: &[f64], scale: f64, table: &mut [f64]) {
        let full = table.len() - 1;
        self.for_each_hybrid_leaf(x, b, |value, path| {
            let (from_x, from_b) = masks(path);
            let free = full & !(from_x | from_b);
            let mut sub = free;
            loop {
                table[from_x | sub] += scale * value;
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & free;
            }
        });
    }

    /// Adds this tree's hybrid predictions to `h` in Moebius form: after all
    /// trees and backgrounds are accumulated, [`subset_sum`] turns `h` into
    /// the coalition table. A leaf costs `2^|from_b|` writes instead of one
    /// write per coalition.
    pub fn accumulate_moebius(&self, x: &[f64], b: &[f64], scale: f64, h: &mut [f64]) {
        self.for_each_hybrid_leaf(x, b, |value, path| {
            let (from_x, from_b) = masks(path);
            let v = scale * value;
            let mut sub = from_b;
            loop {
                let sign = if sub.count_ones() % 2 == 0 { v } else { -v };
                h[from_x | sub] += sign;
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & from_b;
            }
        });
    }

    /// Adds `scale` times the exact Shapley values of the game
    /// `S -> f(x_S, b_~S)` to `phi`. A leaf reached by coalitions holding all
    /// of `A` and none of `B` contributes `v (|A|-1)! |B|! / (|A|+|B|)!` to
    /// each member of `A` and minus `v |A|! (|B|-1)! / (|A|+|B|)!` to each
    /// member of `B`.
    pub fn accumulate_shapley(&self, x: &[f64], b: &[f64], scale: f64, phi: &mut [f64]) {
        self.for_each_hybrid_leaf(x, b, |value, path| {
            if path.is_empty() {
                return;
            }
            let na = path.iter().filter(|p| p.1).count();
            let nb = path.len() - na;
            let c = binomial(na + nb, na);
            let v = scale * value;
            for &(j, from_x) in path {
                if from_x {
                    phi[j] += v / (na as f64 * c);
                } else {
                    phi[j] -= v / (nb as f64 * c);
                }
            }
        });
    }

    /// Adds `scale * f(row with feature j = values[k])` to slot `k` of the
    /// difference array `diff` (length `values.len() + 1`, see
    /// [`finish_sweep`]). `values` must be ascending. Each leaf reachable by
    /// varying feature `j` is visited once.
    pub fn accumulate_sweep(&self, row: &[f64], j: usize, values: &[f64], scale: f64, diff: &mut [f64]) {
        self.sweep(0, row, j, values, (f64::NEG_INFINITY, f64::INFINITY), scale, diff);
    }

    fn sweep(&self, i: usize, row: &[f64], j: usize, values: &[f64], (lo, hi): (f64, f64), scale: f64, diff: &mut [f64]) {
        let n = &self.nodes[i];
        if n.is_leaf() {
            let start = values.partition_point(|&v| v <= lo);
            let end = values.partition_point(|&v| v <= hi);
            if start < end {
                diff[start] += scale * n.value;
                diff[end] -= scale * n.value;
            }
            return;
        }
        let f = n.feature as usize;
        if f != j {
            let next = if row[f] <= n.threshold { n.left } else { n.right };
            return self.sweep(next as usize, row, j, values, (lo, hi), scale, diff);
        }
        if lo < n.threshold {
            self.sweep(n.left as usize, row, j, values, (lo, hi.min(n.threshold)), scale, diff);
        }
        if hi > n.threshold {
            self.sweep(n.right as usize, row, j, values, (lo.max(n.threshold), hi), scale, diff);
        }
    }
}

/// Prefix-sums a difference array from [`Tree::accumulate_sweep`] into the
/// swept values, dropping the trailing slot.
pub fn finish_sweep(mut diff: Vec<f64>) -> Vec<f64> {
    for k in 1..diff.len() {
        diff[k] += diff[k - 1];
    }
    diff.pop();
    diff
}

fn masks(path: &[(usize, bool)]) -> (usize, usize) {
    path.iter().fold((0, 0), |(a, b), &(j, from_x)| if from_x { (a | 1 << j, b) } else { (a, b | 1 << j) })
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

/// In-place subset-sum transform: `h[S] <- sum of h[U] over U subset of S`.
pub fn subset_sum(h: &mut [f64]) {
    let mut bit = 1;
    while bit < h.len() {
        for s in 0..h.len() {
            if s & bit != 0 {
                h[s] += h[s ^ bit];
            }
        }
        bit <<= 1;
    }
}

/// Sufficient statistics for a node: `[count, positives]` for Gini trees,
/// `[gradient sum, hessian sum]` for boosted trees.
pub(crate) type Stats = [f64; 2];

pub(crate) trait Criterion {
    fn stats_of(&self, row: usize) -> Stats;
    /// Gain of the split, or `None` when the split is not admissible.
    fn gain(&self, parent: Stats, left: Stats, right: Stats) -> Option<f64>;
    fn leaf_value(&self, s: Stats) -> f64;
    fn risk(&self, s: Stats) -> f64;
    fn weight(&self, s: Stats) -> f64;
    fn is_pure(&self, s: Stats) -> bool;
}

/// Gini impurity on binary labels, with optional minimum bucket size and
/// minimum absolute risk decrease (rpart's cp pre-check).
pub(crate) struct Gini<'a> {
    pub labels: &'a [f64],
    pub min_bucket: f64,
    pub min_decrease: f64,
}

fn gini_risk(s: Stats) -> f64 {
    if s[0] <= 0.0 {
        0.0
    } else {
        2.0 * s[1] * (s[0] - s[1]) / s[0]
    }
}

impl Criterion for Gini<'_> {
    fn stats_of(&self, row: usize) -> Stats {
        [1.0, self.labels[row]]
    }
    fn gain(&self, parent: Stats, left: Stats, right: Stats) -> Option<f64> {
        if left[0] < self.min_bucket || right[0] < self.min_bucket {
            return None;
        }
        let d = gini_risk(parent) - gini_risk(left) - gini_risk(right);
        (d > 1e-12 && d >= self.min_decrease).then_some(d)
    }
    fn leaf_value(&self, s: Stats) -> f64 {
        s[1] / s[0]
    }
    fn risk(&self, s: Stats) -> f64 {
        gini_risk(s)
    }
    fn weight(&self, s: Stats) -> f64 {
        s[0]
    }
    fn is_pure(&self, s: Stats) -> bool {
        s[1] <= 0.0 || s[1] >= s[0]
    }
}

/// Second-order boosting criterion (L2-regularized leaf weights).
pub(crate) struct Newton<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
    pub min_child_weight: f64,
}

impl Newton<'_> {
    fn score(&self, s: Stats) -> f64 {
        s[0] * s[0] / (s[1] + self.lambda)
    }
}

impl Criterion for Newton<'_> {
    fn stats_of(&self, row: usize) -> Stats {
        [self.grad[row], self.hess[row]]
    }
    fn gain(&self, parent: Stats, left: Stats, right: Stats) -> Option<f64> {
        if left[1] < self.min_child_weight || right[1] < self.min_child_weight {
            return None;
        }
        let g = 0.5 * (self.score(left) + self.score(right) - self.score(parent));
        (g > 1e-12).then_some(g)
    }
    fn leaf_value(&self, s: Stats) -> f64 {
        -s[0] / (s[1] + self.lambda)
    }
    fn risk(&self, s: Stats) -> f64 {
        -0.5 * self.score(s)
    }
    fn weight(&self, s: Stats) -> f64 {
        s[1]
    }
    fn is_pure(&self, _: Stats) -> bool {
        false
    }
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_split: usize,
    /// Features tried per node; `None` tries all.
    pub mtry: Option<usize>,
}

/// Row order of every column of a training matrix, computed once and shared
/// by all trees grown on that matrix.
pub(crate) struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: ArrayView2<'_, f64>) -> Self {
        let order = x
            .columns()
            .into_iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
                idx
            })
            .collect();
        Self { order }
    }

    /// Slot lists (positions in `rows`) in ascending feature order.
    fn slots(&self, n_rows: usize, rows: &[usize]) -> Vec<Vec<u32>> {
        // Chain the slots of each row: head[r] -> next[s] -> ...
        let mut head = vec![u32::MAX; n_rows];
        let mut next = vec![u32::MAX; rows.len()];
        for (s, &r) in rows.iter().enumerate().rev() {
            next[s] = head[r];
            head[r] = s as u32;
        }
        self.order
            .iter()
            .map(|ord| {
                let mut out = Vec::with_capacity(rows.len());
                for &r in ord {
                    let mut s = head[r as usize];
                    while s != u32::MAX {
                        out.push(s);
                        s = next[s as usize];
                    }
                }
                out
            })
            .collect()
    }
}

/// Grow a tree on `rows` (indices into `x`, repeats allowed). `presorted`
/// must come from the same `x`.
pub(crate) fn grow<C: Criterion>(
    x: ArrayView2<'_, f64>,
    presorted: &Presorted,
    rows: &[usize],
    criterion: &C,
    params: &GrowParams,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let p = x.ncols();
    // Column-major copy: split scans walk one feature at a time.
    let cols: Vec<Vec<f64>> = (0..p).map(|f| rows.iter().map(|&r| x[[r, f]]).collect()).collect();
    let sorted = presorted.slots(x.nrows(), rows);
    let slot_stats: Vec<Stats> = rows.iter().map(|&r| criterion.stats_of(r)).collect();
    let mut grower = Grower { cols, slot_stats, criterion, params, nodes: Vec::new(), go_left: vec![false; rows.len()] };
    grower.build(sorted, 0, rng);
    Tree { nodes: grower.nodes }
}

struct Grower<'a, C> {
    cols: Vec<Vec<f64>>,
    slot_stats: Vec<Stats>,
    criterion: &'a C,
    params: &'a GrowParams,
    nodes: Vec<Node>,
    go_left: Vec<bool>,
}

impl<C: Criterion> Grower<'_, C> {
    fn build(&mut self, sorted: Vec<Vec<u32>>, depth: usize, rng: &mut ChaCha8Rng) -> u32 {
        let slots = &sorted[0];
        let mut total = [0.0, 0.0];
        for &s in slots {
            let st = self.slot_stats[s as usize];
            total[0] += st[0];
            total[1] += st[1];
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: LEAF,
            right: LEAF,
            value: self.criterion.leaf_value(total),
            weight: self.criterion.weight(total),
            risk: self.criterion.risk(total),
            gain: 0.0,
        });
        if depth >= self.params.max_depth || slots.len() < self.params.min_split || self.criterion.is_pure(total) {
            return id;
        }

        let p = self.cols.len();
        let features: Vec<usize> = match self.params.mtry {
            Some(m) if m < p => {
                let mut f = sample(rng, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };

        let mut best: Option<(usize, f64, f64)> = None;
        for &f in &features {
            let order = &sorted[f];
            let col = &self.cols[f];
            let mut left = [0.0, 0.0];
            for k in 0..order.len() - 1 {
                let s = order[k] as usize;
                let st = self.slot_stats[s];
                left[0] += st[0];
                left[1] += st[1];
                let v = col[s];
                let next = col[order[k + 1] as usize];
                if v >= next {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                if let Some(g) = self.criterion.gain(total, left, right) {
                    if best.is_none_or(|(_, _, bg)| g > bg) {
                        let mut thr = 0.5 * (v + next);
                        if thr >= next {
                            thr = v;
                        }
                        best = Some((f, thr, g));
                    }
                }
            }
        }
        let Some((f, thr, gain)) = best else { return id };

        for &s in &sorted[f] {
            self.go_left[s as usize] = self.cols[f][s as usize] <= thr;
        }
        let (mut lsorted, mut rsorted) = (Vec::with_capacity(p), Vec::with_capacity(p));
        for list in &sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.iter().partition(|&&s| self.go_left[s as usize]);
            lsorted.push(l);
            rsorted.push(r);
        }
        drop(sorted);
        let left = self.build(lsorted, depth + 1, rng);
        let right = self.build(rsorted, depth + 1, rng);
        let node = &mut self.nodes[id as usize];
        node.feature = f as u32;
        node.threshold = thr;
        node.left = left;
        node.right = right;
        node.gain = gain;
        id
    }
}

/// Cost-complexity (weakest-link) pruning: repeatedly collapses the internal
/// node with the smallest per-leaf risk reduction while that reduction is at
/// most `alpha`. Returns a compacted tree.
pub(crate) fn prune_cost_complexity(tree: &Tree, alpha: f64) -> Tree {
    let mut nodes = tree.nodes.clone();
    loop {
        let mut weakest: Option<(usize, f64)> = None;
        subtree_stats(&nodes, 0, &mut |i, leaves, leaf_risk| {
            let g = (nodes_risk(&nodes, i) - leaf_risk) / (leaves as f64 - 1.0);
            if weakest.is_none_or(|(_, w)| g < w) {
                weakest = Some((i, g));
            }
        });
        match weakest {
            Some((i, g)) if g <= alpha => {
                let n = &mut nodes[i];
                n.feature = LEAF;
                n.left = LEAF;
                n.right = LEAF;
                n.gain = 0.0;
            }
            _ => break,
        }
    }
    compact(&nodes)
}

fn nodes_risk(nodes: &[Node], i: usize) -> f64 {
    nodes[i].risk
}

/// Post-order walk reporting (node, leaf count, summed leaf risk) for every
/// internal node; returns the same pair for node `i`.
fn subtree_stats(nodes: &[Node], i: usize, visit: &mut impl FnMut(usize, usize, f64)) -> (usize, f64) {
    let n = &nodes[i];
    if n.is_leaf() {
        return (1, n.risk);
    }
    let (ll, lr) = subtree_stats(nodes, n.left as usize, visit);
    let (rl, rr) = subtree_stats(nodes, n.right as usize, visit);
    visit(i, ll + rl, lr + rr);
    (ll + rl, lr + rr)
}

fn compact(nodes: &[Node]) -> Tree {
    let mut out = Vec::new();
    fn copy(nodes: &[Node], i: usize, out: &mut Vec<Node>) -> u32 {
        let id = out.len() as u32;
        out.push(nodes[i]);
        if !nodes[i].is_leaf() {
            let l = copy(nodes, nodes[i].left as usize, out);
            let r = copy(nodes, nodes[i].right as usize, out);
            out[id as usize].left = l;
            out[id as usize].right = r;
        }
        id
    }
    copy(nodes, 0, &mut out);
    Tree { nodes: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn gini_tree(x: ArrayView2<'_, f64>, y: &[f64], min_bucket: f64) -> Tree {
        let crit = Gini { labels: y, min_bucket, min_decrease: 0.0 };
        let rows: Vec<usize> = (0..y.len()).collect();
        let params = GrowParams { max_depth: 30, min_split: 2, mtry: None };
        grow(x, &Presorted::new(x), &rows, &crit, &params, &mut crate::seed::rng(0))
    }

    #[test]
    fn single_split_on_separable_feature() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]];
        let y = [0.0, 0.0, 1.0, 1.0];
        let t = gini_tree(x.view(), &y, 1.0);
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.nodes[0].feature, 0);
        assert_eq!(t.nodes[0].threshold, 2.5);
        assert!((t.nodes[0].gain - 2.0).abs() < 1e-12);
        assert_eq!(t.predict_row(&[1.5, 0.0]), 0.0);
        assert_eq!(t.predict_row(&[3.5, 0.0]), 1.0);
    }

    #[test]
    fn equal_gain_prefers_lower_feature() {
        let x = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]];
        let y = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(gini_tree(x.view(), &y, 1.0).nodes[0].feature, 0);
    }

    #[test]
    fn pruning_at_full_alpha_leaves_root() {
        let x = array![[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]];
        let y = [0.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let t = gini_tree(x.view(), &y, 1.0);
        assert!(t.nodes.len() > 1);
        let pruned = prune_cost_complexity(&t, t.nodes[0].risk);
        assert_eq!(pruned.nodes.len(), 1);
        assert!((pruned.predict_row(&[1.0]) - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(prune_cost_complexity(&t, 0.0).nodes.len(), t.nodes.len());
    }

    #[test]
    fn coalition_table_matches_hybrid_predictions() {
        let x = array![
            [0.1, 0.9, 0.3],
            [0.8, 0.2, 0.6],
            [0.4, 0.5, 0.9],
            [0.9, 0.7, 0.1],
            [0.2, 0.3, 0.4],
            [0.6, 0.8, 0.7]
        ];
        let y = [0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let t = gini_tree(x.view(), &y, 1.0);
        let xr = [0.15, 0.75, 0.65];
        let br = [0.85, 0.25, 0.35];
        let mut table = vec![0.0; 8];
        t.accumulate_coalitions(&xr, &br, 1.0, &mut table);
        for (mask, &v) in table.iter().enumerate() {
            let hybrid: Vec<f64> = (0..3).map(|j| if mask >> j & 1 == 1 { xr[j] } else { br[j] }).collect();
            assert_eq!(v, t.predict_row(&hybrid), "mask {mask}");
        }
    }

    fn deep_tree() -> (Tree, Vec<[f64; 4]>) {
        use rand::Rng;
        let mut rng = crate::seed::rng(12);
        let x = ndarray::Array2::from_shape_fn((80, 4), |_| rng.random::<f64>());
        let y: Vec<f64> = x.outer_iter().map(|r| f64::from((r[0] - r[1]) * r[2] + 0.2 * r[3] > 0.05)).collect();
        let t = gini_tree(x.view(), &y, 1.0);
        let pts = (0..6).map(|_| [0; 4].map(|_| rng.random::<f64>())).collect();
        (t, pts)
    }

    #[test]
    fn moebius_form_matches_direct_table() {
        let (t, pts) = deep_tree();
        for w in pts.windows(2) {
            let mut direct = vec![0.0; 16];
            let mut h = vec![0.0; 16];
            t.accumulate_coalitions(&w[0], &w[1], 0.5, &mut direct);
            t.accumulate_moebius(&w[0], &w[1], 0.5, &mut h);
            subset_sum(&mut h);
            for (a, b) in direct.iter().zip(&h) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_shapley_matches_enumeration() {
        let (t, pts) = deep_tree();
        let weight = |s: usize| 1.0 / (4.0 * binomial(3, s));
        for w in pts.windows(2) {
            let mut table = vec![0.0; 16];
            t.accumulate_coalitions(&w[0], &w[1], 1.0, &mut table);
            let mut phi = vec![0.0; 4];
            t.accumulate_shapley(&w[0], &w[1], 1.0, &mut phi);
            for (j, got) in phi.iter().enumerate() {
                let want: f64 = (0..16usize)
                    .filter(|s| s >> j & 1 == 0)
                    .map(|s| weight(s.count_ones() as usize) * (table[s | 1 << j] - table[s]))
                    .sum();
                assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            }
        }
    }
}
