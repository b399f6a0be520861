//! CART regression trees with vector-valued leaves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or at `min_samples_leaf`.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

/// Row-major design matrix and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub n_features: usize,
    pub n_outputs: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(x: Vec<T>, y: Vec<T>, n_features: usize, n_outputs: usize) -> Result<Self> {
        if n_features == 0 || n_outputs == 0 {
            return Err(Error::InvalidArgument("dataset needs features and outputs".into()));
        }
        if x.len() % n_features != 0 || y.len() % n_outputs != 0 || x.len() / n_features != y.len() / n_outputs {
            return Err(crate::error::dim("dataset", x.len() / n_features, y.len() / n_outputs));
        }
        if x.is_empty() {
            return Err(Error::Empty("training set"));
        }
        Ok(Self {
            x,
            y,
            n_features,
            n_outputs,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.n_features
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn target(&self, i: usize) -> &[T] {
        &self.y[i * self.n_outputs..(i + 1) * self.n_outputs]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        value: Vec<T>,
    },
}

/// Nodes are stored flat; index 0 is the root. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RegressionTree<T> {
    pub nodes: Vec<Node<T>>,
    pub n_features: usize,
    pub n_outputs: usize,
}

/// Sum over outputs of within-group squared error, before and after a split,
/// as `parent - (left + right)`.
pub fn variance_reduction<T: Scalar>(data: &Dataset<T>, rows: &[usize], feature: usize, threshold: T) -> T {
    let sse = |idx: &mut dyn Iterator<Item = usize>| -> T {
        let idx: Vec<usize> = idx.collect();
        if idx.is_empty() {
            return T::zero();
        }
        let n = T::lit(idx.len() as f64);
        let mut total = T::zero();
        for d in 0..data.n_outputs {
            let mean = idx.iter().map(|&i| data.target(i)[d]).sum::<T>() / n;
            total += idx.iter().map(|&i| (data.target(i)[d] - mean).powi(2)).sum::<T>();
        }
        total
    };
    let parent = sse(&mut rows.iter().copied());
    let left = sse(&mut rows.iter().copied().filter(|&i| data.row(i)[feature] <= threshold));
    let right = sse(&mut rows.iter().copied().filter(|&i| data.row(i)[feature] > threshold));
    parent - left - right
}

struct Best<T> {
    feature: usize,
    /// Position in the feature's sorted order after which the split falls.
    cut: usize,
    threshold: T,
    score: T,
}

struct Builder<'a, T> {
    data: &'a Dataset<T>,
    cfg: TreeConfig,
    nodes: Vec<Node<T>>,
    side: Vec<bool>,
}

impl<T: Scalar> Builder<'_, T> {
    fn leaf_value(&self, rows: &[usize]) -> Vec<T> {
        let n = T::lit(rows.len() as f64);
        (0..self.data.n_outputs)
            .map(|d| rows.iter().map(|&i| self.data.target(i)[d]).sum::<T>() / n)
            .collect()
    }

    /// Maximizes `sum_d (S_L^2 / n_L + S_R^2 / n_R)`, which is equivalent to
    /// minimizing the children's summed squared error.
    fn best_split(&self, orders: &[Vec<usize>]) -> Option<Best<T>> {
        let data = self.data;
        let d_out = data.n_outputs;
        let n = orders[0].len();
        let min_leaf = self.cfg.min_samples_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let mut total = vec![T::zero(); d_out];
        for &i in &orders[0] {
            for (t, &y) in total.iter_mut().zip(data.target(i)) {
                *t += y;
            }
        }
        let nf = T::lit(n as f64);
        let parent: T = total.iter().map(|&s| s * s).sum::<T>() / nf;
        let tol = T::lit(1e-12) * (parent.abs() + T::one());

        let mut best: Option<Best<T>> = None;
        let mut left = vec![T::zero(); d_out];
        for (f, order) in orders.iter().enumerate() {
            left.iter_mut().for_each(|v| *v = T::zero());
            for pos in 0..n - 1 {
                let i = order[pos];
                for (l, &y) in left.iter_mut().zip(data.target(i)) {
                    *l += y;
                }
                let n_left = pos + 1;
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let a = data.row(i)[f];
                let b = data.row(order[pos + 1])[f];
                if a == b {
                    continue;
                }
                let nl = T::lit(n_left as f64);
                let nr = T::lit((n - n_left) as f64);
                let mut score = T::zero();
                for (&l, &t) in left.iter().zip(&total) {
                    let r = t - l;
                    score += l * l / nl + r * r / nr;
                }
                if score - parent > tol && best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(Best {
                        feature: f,
                        cut: pos,
                        threshold: (a + b) / T::lit(2.0),
                        score,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, orders: Vec<Vec<usize>>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: Vec::new() });
        let can_split = self.cfg.max_depth.is_none_or(|m| depth < m);
        let split = if can_split { self.best_split(&orders) } else { None };
        let Some(best) = split else {
            self.nodes[id] = Node::Leaf {
                value: self.leaf_value(&orders[0]),
            };
            return id;
        };
        // mark left rows, then stably partition every feature order
        for (pos, &i) in orders[best.feature].iter().enumerate() {
            self.side[i] = pos <= best.cut;
        }
        let mut lefts = Vec::with_capacity(orders.len());
        let mut rights = Vec::with_capacity(orders.len());
        for order in orders {
            let (l, r): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| self.side[i]);
            lefts.push(l);
            rights.push(r);
        }
        let left = self.grow(lefts, depth + 1);
        let right = self.grow(rights, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }
}

impl<T: Scalar> RegressionTree<T> {
    /// Grows a tree on `rows` of `data` (duplicates allowed, as produced by
    /// bootstrap resampling).
    pub fn fit(data: &Dataset<T>, rows: &[usize], cfg: TreeConfig) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("training set"));
        }
        // expand rows into distinct positions so duplicates stay separate samples
        let local = Dataset {
            x: rows.iter().flat_map(|&i| data.row(i).iter().copied()).collect(),
            y: rows.iter().flat_map(|&i| data.target(i).iter().copied()).collect(),
            n_features: data.n_features,
            n_outputs: data.n_outputs,
        };
        let n = rows.len();
        let orders = (0..data.n_features)
            .map(|f| {
                let mut o: Vec<usize> = (0..n).collect();
                o.sort_by(|&a, &b| {
                    local.row(a)[f]
                        .partial_cmp(&local.row(b)[f])
                        .expect("finite features")
                        .then(a.cmp(&b))
                });
                o
            })
            .collect();
        let mut b = Builder {
            data: &local,
            cfg,
            nodes: Vec::new(),
            side: vec![false; n],
        };
        b.grow(orders, 0);
        Ok(Self {
            nodes: b.nodes,
            n_features: data.n_features,
            n_outputs: data.n_outputs,
        })
    }

    pub fn predict(&self, x: &[T]) -> &[T] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Root split as `(feature, threshold)`, if the root is not a leaf.
    pub fn root_split(&self) -> Option<(usize, T)> {
        match &self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }
}
