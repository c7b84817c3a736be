//! CART random forest.
//!
//! Leaves keep the training-row indices that reached them so the conditional
//! sampler can draw observed values from a leaf. Splits maximise
//! `S_L²/n_L + S_R²/n_R`, which is variance reduction for real targets and,
//! since `Σy² = Σy` on {0,1} labels, Gini reduction for binary ones.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{invalid, Error, Result};
use crate::learners::Learner;
use crate::rng::Stream;
use crate::stats::logit;

/// Probability clamp applied before converting binary forest votes to logits.
pub const PROBA_CLAMP: f64 = 1e-3;

/// Candidate features per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `⌊√p⌋`, at least one.
    #[default]
    Sqrt,
    All,
    /// Capped at `p`.
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, p: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((p as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => p,
            MaxFeatures::Count(k) => k.clamp(1, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: None, min_leaf: 5, bootstrap: true, max_features: MaxFeatures::Sqrt }
    }
}

impl ForestConfig {
    pub fn with_depth(mut self, depth: Option<usize>) -> Self {
        self.max_depth = depth;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// `value` is the node mean, used when the tree is cut above this split.
    Split { feature: usize, threshold: f64, value: f64, left: usize, right: usize },
    Leaf { value: f64, members: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Index of the leaf reached by `row`.
    pub fn leaf_index(&self, row: ArrayView1<f64>) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right, .. } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { .. } => return at,
            }
        }
    }

    /// Prediction of this tree cut at `depth` (`None` = uncut).
    pub fn predict_row_at_depth(&self, row: ArrayView1<f64>, depth: Option<usize>) -> f64 {
        let mut at = 0;
        let mut d = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, value, left, right } => {
                    if depth.is_some_and(|m| d >= m) {
                        return *value;
                    }
                    at = if row[*feature] <= *threshold { *left } else { *right };
                    d += 1;
                }
                Node::Leaf { value, .. } => return *value,
            }
        }
    }

    /// Copy with every split at `depth` turned into a leaf holding the
    /// members of the leaves below it.
    pub fn truncated(&self, depth: usize) -> Tree {
        fn members(nodes: &[Node], at: usize, out: &mut Vec<u32>) {
            match &nodes[at] {
                Node::Leaf { members: m, .. } => out.extend_from_slice(m),
                Node::Split { left, right, .. } => {
                    members(nodes, *left, out);
                    members(nodes, *right, out);
                }
            }
        }
        fn copy(src: &[Node], at: usize, d: usize, depth: usize, out: &mut Vec<Node>) -> usize {
            let id = out.len();
            match &src[at] {
                Node::Split { value, .. } if d >= depth => {
                    let mut m = Vec::new();
                    members(src, at, &mut m);
                    out.push(Node::Leaf { value: *value, members: m });
                }
                Node::Split { feature, threshold, value, left, right } => {
                    out.push(Node::Split { feature: *feature, threshold: *threshold, value: *value, left: 0, right: 0 });
                    let l = copy(src, *left, d + 1, depth, out);
                    let r = copy(src, *right, d + 1, depth, out);
                    if let Node::Split { left, right, .. } = &mut out[id] {
                        *left = l;
                        *right = r;
                    }
                }
                leaf => out.push(leaf.clone()),
            }
            id
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        copy(&self.nodes, 0, 0, depth, &mut nodes);
        Tree { nodes }
    }

    /// `(value, members)` of the leaf reached by `row`.
    pub fn leaf(&self, row: ArrayView1<f64>) -> (f64, &[u32]) {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { value, members } => (*value, members),
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.leaf(row).0
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub task: Task,
    pub n_features: usize,
    pub config: ForestConfig,
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    /// Rows of each feature in ascending value order, over the whole data.
    order: &'a [Vec<u32>],
    min_leaf: usize,
    max_depth: Option<usize>,
    mtry: usize,
    /// Row drawn into each slot of the current tree's sample.
    rows: Vec<u32>,
    /// Target of each slot.
    ys: Vec<f64>,
    /// Per feature, `(value, slot)` in ascending value order. Every node owns
    /// the same contiguous range in all of them.
    sorted: Vec<Vec<(f64, u32)>>,
    goes_left: Vec<bool>,
    tmp: Vec<(f64, u32)>,
    /// `recip[k] = 1 / k`.
    recip: Vec<f64>,
}

impl Builder<'_> {
    fn best_split(&self, lo: usize, hi: usize, stream: Stream) -> Option<(usize, f64)> {
        let n = hi - lo;
        let total: f64 = self.sorted[0][lo..hi].iter().map(|&(_, s)| self.ys[s as usize]).sum();
        let parent = total * total / n as f64;
        let tol = 1e-12 * (1.0 + parent.abs());
        let mut best: Option<(usize, usize)> = None;
        let mut best_score = parent + tol;
        let p = self.cols.len();
        let features: Vec<usize> = if self.mtry >= p { (0..p).collect() } else { sample(&mut stream.rng(), p, self.mtry).into_vec() };
        let first = self.min_leaf - 1;
        for f in features {
            let seg = &self.sorted[f][lo..hi];
            let mut left: f64 = seg[..first].iter().map(|e| self.ys[e.1 as usize]).sum();
            // split after position i leaves i + 1 samples on the left
            for i in first..n - self.min_leaf {
                left += self.ys[seg[i].1 as usize];
                if seg[i].0 == seg[i + 1].0 {
                    continue;
                }
                let right = total - left;
                let score = left * left * self.recip[i + 1] + right * right * self.recip[n - i - 1];
                if score > best_score {
                    best_score = score;
                    best = Some((f, i));
                }
            }
        }
        best.map(|(f, i)| {
            let seg = &self.sorted[f][lo..hi];
            let (a, b) = (seg[i].0, seg[i + 1].0);
            let thr = 0.5 * (a + b);
            (f, if thr >= b { a } else { thr })
        })
    }

    /// Stable partition of `lo..hi` in the feature orderings; returns the
    /// size of the left part. Only the first ordering is kept up to date
    /// when neither child can split again.
    fn partition(&mut self, lo: usize, hi: usize, feature: usize, threshold: f64, children_split: bool) -> usize {
        let mut n_left = 0;
        for &(v, s) in &self.sorted[feature][lo..hi] {
            let l = v <= threshold;
            self.goes_left[s as usize] = l;
            n_left += l as usize;
        }
        let can_split = |k: usize| k >= 2 * self.min_leaf;
        let n_sorted = if children_split && (can_split(n_left) || can_split(hi - lo - n_left)) { self.sorted.len() } else { 1 };
        let len = hi - lo;
        self.tmp.resize(len, (0.0, 0));
        for f in 0..n_sorted {
            let seg = &mut self.sorted[f][lo..hi];
            // branch-free: every entry is written to both sides, and only
            // the cursor of its own side advances
            let (mut w, mut t) = (0, 0);
            for i in 0..len {
                let e = seg[i];
                let l = self.goes_left[e.1 as usize] as usize;
                seg[w] = e;
                self.tmp[t] = e;
                w += l;
                t += 1 - l;
            }
            seg[w..].copy_from_slice(&self.tmp[..t]);
            debug_assert_eq!(w, n_left);
        }
        n_left
    }

    /// Each node draws its candidate features from a stream keyed by its path
    /// from the root, so a tree grown with `max_depth = d` is exactly the
    /// deeper tree cut at `d`.
    fn build(&mut self, rows: Vec<u32>, stream: Stream) -> Tree {
        let m = rows.len();
        // counting sort of slots by row, then expand each feature's global order
        let mut start = vec![0u32; self.y.len() + 1];
        for &r in &rows {
            start[r as usize + 1] += 1;
        }
        for i in 0..self.y.len() {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut by_row = vec![0u32; m];
        for (s, &r) in rows.iter().enumerate() {
            by_row[fill[r as usize] as usize] = s as u32;
            fill[r as usize] += 1;
        }
        self.ys = rows.iter().map(|&r| self.y[r as usize]).collect();
        self.rows = rows;
        self.goes_left.resize(m, false);
        for (f, order) in self.order.iter().enumerate() {
            let col = &self.cols[f];
            let out = &mut self.sorted[f];
            out.clear();
            for &r in order {
                let v = col[r as usize];
                out.extend(by_row[start[r as usize] as usize..start[r as usize + 1] as usize].iter().map(|&s| (v, s)));
            }
        }

        let mut nodes = Vec::new();
        // (range, depth, node stream, slot to patch in parent)
        let mut stack: Vec<(usize, usize, usize, Stream, Option<(usize, bool)>)> = vec![(0, m, 0, stream, None)];
        while let Some((lo, hi, depth, node_stream, parent)) = stack.pop() {
            let id = nodes.len();
            if let Some((pid, is_left)) = parent {
                if let Node::Split { left, right, .. } = &mut nodes[pid] {
                    if is_left {
                        *left = id;
                    } else {
                        *right = id;
                    }
                }
            }
            let count = hi - lo;
            let value = self.sorted[0][lo..hi].iter().map(|&(_, s)| self.ys[s as usize]).sum::<f64>() / count as f64;
            let can_split = self.max_depth.is_none_or(|d| depth < d) && count >= 2 * self.min_leaf;
            match if can_split { self.best_split(lo, hi, node_stream) } else { None } {
                Some((feature, threshold)) => {
                    let deeper = self.max_depth.is_none_or(|d| depth + 1 < d);
                    let n_left = self.partition(lo, hi, feature, threshold, deeper);
                    nodes.push(Node::Split { feature, threshold, value, left: usize::MAX, right: usize::MAX });
                    stack.push((lo + n_left, hi, depth + 1, node_stream.child(1), Some((id, false))));
                    stack.push((lo, lo + n_left, depth + 1, node_stream.child(0), Some((id, true))));
                }
                None => {
                    let members = self.sorted[0][lo..hi].iter().map(|&(_, s)| self.rows[s as usize]).collect();
                    nodes.push(Node::Leaf { value, members });
                }
            }
        }
        Tree { nodes }
    }
}

pub fn fit_random_forest(data: &Dataset, config: &ForestConfig, stream: Stream) -> Result<RandomForest> {
    let (n, p) = (data.n(), data.p());
    if config.n_trees == 0 {
        return invalid("forest needs at least one tree");
    }
    if config.min_leaf == 0 {
        return invalid("min_leaf must be positive");
    }
    if n < 2 * config.min_leaf {
        return invalid(format!("n = {n} is smaller than 2 * min_leaf = {}", 2 * config.min_leaf));
    }
    if p == 0 {
        return invalid("forest needs at least one feature");
    }
    let x = data.x();
    let cols: Vec<Vec<f64>> = (0..p).map(|f| x.column(f).to_vec()).collect();
    let y = data.y.to_vec();
    let mtry = config.max_features.resolve(p);
    let order: Vec<Vec<u32>> = cols
        .iter()
        .map(|c| {
            let mut o: Vec<u32> = (0..n as u32).collect();
            o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
            o
        })
        .collect();
    let mut builder = Builder {
        cols: &cols,
        y: &y,
        order: &order,
        min_leaf: config.min_leaf,
        max_depth: config.max_depth,
        mtry,
        rows: Vec::new(),
        ys: Vec::new(),
        sorted: vec![Vec::with_capacity(n); p],
        goes_left: Vec::new(),
        tmp: Vec::with_capacity(n),
        recip: (0..=n).map(|k| if k == 0 { 0.0 } else { 1.0 / k as f64 }).collect(),
    };
    let trees = (0..config.n_trees)
        .map(|t| {
            let tree_stream = stream.child(t as u64);
            let rows: Vec<u32> = if config.bootstrap {
                let mut rng = tree_stream.tagged("bootstrap").rng();
                (0..n).map(|_| rng.random_range(0..n as u32)).collect()
            } else {
                (0..n as u32).collect()
            };
            builder.build(rows, tree_stream.tagged("nodes"))
        })
        .collect();
    Ok(RandomForest { trees, task: data.task, n_features: p, config: config.clone() })
}

impl RandomForest {
    fn check(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.ncols() });
        }
        Ok(())
    }

    /// Average of per-tree leaf values: the mean for regression and the
    /// positive-class frequency for binary targets.
    pub fn predict_raw(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check(&x)?;
        let k = self.trees.len() as f64;
        Ok(x.rows().into_iter().map(|row| self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / k).collect())
    }

    /// [`predict_raw`](Self::predict_raw) of the forest cut at `depth`.
    pub fn predict_raw_at_depth(&self, x: ArrayView2<f64>, depth: Option<usize>) -> Result<Array1<f64>> {
        self.check(&x)?;
        let k = self.trees.len() as f64;
        Ok(x.rows().into_iter().map(|row| self.trees.iter().map(|t| t.predict_row_at_depth(row, depth)).sum::<f64>() / k).collect())
    }

    /// Same forest with every tree cut at `depth`.
    pub fn truncated(&self, depth: usize) -> RandomForest {
        RandomForest {
            trees: self.trees.iter().map(|t| t.truncated(depth)).collect(),
            task: self.task,
            n_features: self.n_features,
            config: self.config.clone().with_depth(Some(self.config.max_depth.map_or(depth, |d| d.min(depth)))),
        }
    }
}

impl Learner for RandomForest {
    fn task(&self) -> Task {
        self.task
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let raw = self.predict_raw(x)?;
        Ok(match self.task {
            Task::Regression => raw,
            Task::Binary => raw.mapv(|p| logit(p.clamp(PROBA_CLAMP, 1.0 - PROBA_CLAMP))),
        })
    }
}
