//! CART classification tree with Gini impurity.
//!
//! Numeric columns split on a threshold (`value <= t` goes left); categorical
//! columns split on subset membership. For two classes the best subset is found
//! exactly by ordering categories on their class-1 frequency; for more classes
//! each one-vs-rest ordering is swept and the best prefix kept. Values the node
//! never saw in training (unknown categories, missing cells) follow the child that
//! received more training records.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dataset::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ColumnKind {
    Categorical { cardinality: usize },
    Numeric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 12,
            min_leaf: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitRule {
    Threshold(f64),
    /// `members[c]` is true when category `c` goes left.
    Members(Vec<bool>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub column: usize,
    pub rule: SplitRule,
    pub left: usize,
    pub right: usize,
    pub default_left: bool,
    /// Weighted Gini decrease `n·G(node) − n_l·G(left) − n_r·G(right)`.
    pub decrease: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub counts: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    columns: Vec<ColumnKind>,
    n_classes: usize,
    nodes: Vec<Node>,
}

/// `n · Gini(counts)`, i.e. `n − Σc²/n`.
fn weighted_gini(counts: &[u32]) -> f64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    if n == 0 {
        return 0.0;
    }
    let sq: u64 = counts.iter().map(|&c| (c as u64) * (c as u64)).sum();
    n as f64 - sq as f64 / n as f64
}

fn total(counts: &[u32]) -> usize {
    counts.iter().map(|&c| c as usize).sum()
}

struct Candidate {
    column: usize,
    rule: SplitRule,
    default_left: bool,
    decrease: f64,
}

struct Builder<'a> {
    columns: &'a [ColumnKind],
    rows: &'a [Vec<Value>],
    labels: &'a [usize],
    n_classes: usize,
    params: TreeParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_classes];
        for &i in idx {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let counts = self.counts(idx);
        let node_id = self.nodes.len();
        self.nodes.push(Node {
            counts: counts.clone(),
            split: None,
        });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf.max(1) {
            return node_id;
        }
        let parent = weighted_gini(&counts);
        let mut best: Option<Candidate> = None;
        for column in 0..self.columns.len() {
            let found = match self.columns[column] {
                ColumnKind::Numeric => self.best_threshold(idx, column, parent),
                ColumnKind::Categorical { cardinality } => {
                    self.best_subset(idx, column, cardinality, parent)
                }
            };
            if let Some(c) = found {
                if best.as_ref().is_none_or(|b| c.decrease > b.decrease) {
                    best = Some(c);
                }
            }
        }
        // Zero-gain splits are allowed on impure nodes (XOR-like interactions).
        let Some(mut best) = best else { return node_id };
        if best.decrease < -1e-9 {
            return node_id;
        }
        best.decrease = best.decrease.max(0.0);

        let mut goes_left: Vec<bool> = idx
            .iter()
            .map(|&i| route(&best.rule, best.default_left, &self.rows[i][best.column]))
            .collect();
        // stable partition
        let mut left: Vec<usize> = Vec::new();
        let mut right: Vec<usize> = Vec::new();
        for (&i, l) in idx.iter().zip(goes_left.drain(..)) {
            if l {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        let l = self.grow(&mut left, depth + 1);
        let r = self.grow(&mut right, depth + 1);
        self.nodes[node_id].split = Some(Split {
            column: best.column,
            rule: best.rule,
            left: l,
            right: r,
            default_left: best.default_left,
            decrease: best.decrease,
        });
        node_id
    }

    fn best_threshold(&self, idx: &[usize], column: usize, parent: f64) -> Option<Candidate> {
        let mut pairs: Vec<(f64, usize)> = idx
            .iter()
            .filter_map(|&i| self.rows[i][column].as_num().map(|v| (v, self.labels[i])))
            .collect();
        if pairs.len() < 2 {
            return None;
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut right = vec![0u32; self.n_classes];
        for &(_, y) in &pairs {
            right[y] += 1;
        }
        let mut left = vec![0u32; self.n_classes];
        let n = pairs.len();
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<(f64, f64, usize)> = None;
        for i in 0..n - 1 {
            let y = pairs[i].1;
            left[y] += 1;
            right[y] -= 1;
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let nl = i + 1;
            if nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let decrease = parent - weighted_gini(&left) - weighted_gini(&right);
            if best.is_none_or(|b| decrease > b.0) {
                let threshold = pairs[i].0 + (pairs[i + 1].0 - pairs[i].0) / 2.0;
                best = Some((decrease, threshold, nl));
            }
        }
        best.map(|(decrease, threshold, nl)| Candidate {
            column,
            rule: SplitRule::Threshold(threshold),
            default_left: 2 * nl >= n,
            decrease,
        })
    }

    fn best_subset(
        &self,
        idx: &[usize],
        column: usize,
        cardinality: usize,
        parent: f64,
    ) -> Option<Candidate> {
        let m = self.n_classes;
        let mut table = vec![vec![0u32; m]; cardinality];
        for &i in idx {
            if let Some(c) = self.rows[i][column].as_cat() {
                if c < cardinality {
                    table[c][self.labels[i]] += 1;
                }
            }
        }
        let present: Vec<usize> = (0..cardinality).filter(|&c| total(&table[c]) > 0).collect();
        if present.len() < 2 {
            return None;
        }
        let n: usize = present.iter().map(|&c| total(&table[c])).sum();
        let min_leaf = self.params.min_leaf.max(1);
        let orderings = if m == 2 { 1 } else { m };

        let mut best: Option<(f64, Vec<usize>, usize)> = None;
        for class in (0..orderings).map(|c| if m == 2 { 1 } else { c }) {
            let mut order = present.clone();
            // stable sort keeps category order for equal frequencies
            order.sort_by(|&a, &b| {
                let fa = table[a][class] as f64 / total(&table[a]) as f64;
                let fb = table[b][class] as f64 / total(&table[b]) as f64;
                fa.total_cmp(&fb)
            });
            let mut left = vec![0u32; m];
            let mut right = vec![0u32; m];
            for &c in &order {
                for y in 0..m {
                    right[y] += table[c][y];
                }
            }
            let mut nl = 0usize;
            for j in 0..order.len() - 1 {
                let c = order[j];
                for y in 0..m {
                    left[y] += table[c][y];
                    right[y] -= table[c][y];
                }
                nl += total(&table[c]);
                if nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let decrease = parent - weighted_gini(&left) - weighted_gini(&right);
                if best.as_ref().is_none_or(|b| decrease > b.0) {
                    best = Some((decrease, order[..=j].to_vec(), nl));
                }
            }
        }
        best.map(|(decrease, left_set, nl)| {
            let default_left = 2 * nl >= n;
            let mut members = vec![default_left; cardinality];
            for &c in &present {
                members[c] = false;
            }
            for &c in &left_set {
                members[c] = true;
            }
            Candidate {
                column,
                rule: SplitRule::Members(members),
                default_left,
                decrease,
            }
        })
    }
}

fn route(rule: &SplitRule, default_left: bool, value: &Value) -> bool {
    match (rule, value) {
        (SplitRule::Threshold(t), Value::Num(v)) => *v <= *t,
        (SplitRule::Members(members), Value::Cat(c)) => {
            members.get(*c as usize).copied().unwrap_or(default_left)
        }
        _ => default_left,
    }
}

impl DecisionTree {
    /// Grows a tree on `rows` (one `Value` per column) with class indices `labels`.
    pub fn fit(
        columns: Vec<ColumnKind>,
        rows: &[Vec<Value>],
        labels: &[usize],
        n_classes: usize,
        params: TreeParams,
    ) -> Result<Self, ModelError> {
        if rows.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        assert_eq!(rows.len(), labels.len());
        assert!(labels.iter().all(|&y| y < n_classes));
        let mut builder = Builder {
            columns: &columns,
            rows,
            labels,
            n_classes,
            params,
            nodes: Vec::new(),
        };
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        builder.grow(&mut idx, 0);
        let nodes = builder.nodes;
        Ok(DecisionTree {
            columns,
            n_classes,
            nodes,
        })
    }

    /// A single-leaf tree with the given class counts.
    pub fn constant(columns: Vec<ColumnKind>, counts: Vec<u32>) -> Self {
        DecisionTree {
            columns,
            n_classes: counts.len(),
            nodes: vec![Node {
                counts,
                split: None,
            }],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn columns(&self) -> &[ColumnKind] {
        &self.columns
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i].split {
                None => 0,
                Some(s) => 1 + go(nodes, s.left).max(go(nodes, s.right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaf(&self, row: &[Value]) -> &Node {
        let mut i = 0;
        while let Some(split) = &self.nodes[i].split {
            i = if route(&split.rule, split.default_left, &row[split.column]) {
                split.left
            } else {
                split.right
            };
        }
        &self.nodes[i]
    }

    /// Laplace-smoothed leaf frequencies `(count_c + 1) / (n_leaf + m)`.
    pub fn predict_scores(&self, row: &[Value]) -> Vec<f64> {
        let leaf = self.leaf(row);
        let n = total(&leaf.counts) as f64;
        let m = self.n_classes as f64;
        leaf.counts
            .iter()
            .map(|&c| (c as f64 + 1.0) / (n + m))
            .collect()
    }

    /// Majority class at the leaf; ties go to the lower class index.
    pub fn predict_class(&self, row: &[Value]) -> usize {
        argmax(
            &self
                .leaf(row)
                .counts
                .iter()
                .map(|&c| c as f64)
                .collect::<Vec<_>>(),
        )
    }

    /// Total impurity decrease per column, normalized to sum to 1 (all zeros
    /// when the tree never splits).
    pub fn importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.columns.len()];
        for node in &self.nodes {
            if let Some(s) = &node.split {
                imp[s.column] += s.decrease;
            }
        }
        let sum: f64 = imp.iter().sum();
        if sum > 0.0 {
            for v in imp.iter_mut() {
                *v /= sum;
            }
        }
        imp
    }

    /// Whether any split tests `column`.
    pub fn splits_on(&self, column: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| n.split.as_ref().is_some_and(|s| s.column == column))
    }
}

/// Index of the first maximum.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(c: u32) -> Value {
        Value::Cat(c)
    }

    #[test]
    fn single_class_gives_depth_zero() {
        let rows = vec![
            vec![Value::Num(1.0)],
            vec![Value::Num(2.0)],
            vec![Value::Num(3.0)],
        ];
        let tree = DecisionTree::fit(
            vec![ColumnKind::Numeric],
            &rows,
            &[1, 1, 1],
            2,
            TreeParams::default(),
        )
        .unwrap();
        assert_eq!(tree.depth(), 0);
        assert_eq!(tree.predict_class(&[Value::Num(9.0)]), 1);
        // (3 + 1) / (3 + 2)
        assert!((tree.predict_scores(&[Value::Num(0.0)])[1] - 0.8).abs() < 1e-12);
        assert_eq!(tree.importance(), vec![0.0]);
    }

    #[test]
    fn xor_is_learned_exactly() {
        // Root: either column splits 2/2 with both halves still 50/50, so the
        // gain is zero and the first column wins. Each child then splits on
        // the other column into pure leaves: (0,0)→0, (0,1)→1, (1,0)→1, (1,1)→0.
        let pts = [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0)];
        let rows: Vec<Vec<Value>> = pts.iter().map(|&(a, b, _)| vec![cat(a), cat(b)]).collect();
        let labels: Vec<usize> = pts.iter().map(|&(_, _, y)| y).collect();
        let cols = vec![ColumnKind::Categorical { cardinality: 2 }; 2];
        let tree = DecisionTree::fit(
            cols,
            &rows,
            &labels,
            2,
            TreeParams {
                max_depth: 2,
                min_leaf: 1,
            },
        )
        .unwrap();
        assert_eq!(tree.depth(), 2);
        for &(a, b, y) in &pts {
            assert_eq!(tree.predict_class(&[cat(a), cat(b)]), y, "({a},{b})");
        }
    }

    #[test]
    fn laplace_confidence_for_pure_leaf() {
        // leaf {A: 9, B: 0}, m = 2 → (9 + 1) / (9 + 2) = 10/11
        let tree = DecisionTree::constant(vec![ColumnKind::Numeric], vec![9, 0]);
        let s = tree.predict_scores(&[Value::Num(0.0)]);
        assert!((s[0] - 10.0 / 11.0).abs() < 1e-12);
        assert!((s[0] + s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_split_and_importance() {
        let rows: Vec<Vec<Value>> = (0..20)
            .map(|i| vec![Value::Num(i as f64), cat((i % 3) as u32)])
            .collect();
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let cols = vec![
            ColumnKind::Numeric,
            ColumnKind::Categorical { cardinality: 3 },
        ];
        let tree = DecisionTree::fit(cols, &rows, &labels, 2, TreeParams::default()).unwrap();
        assert_eq!(tree.depth(), 1);
        match &tree.nodes()[0].split.as_ref().unwrap().rule {
            SplitRule::Threshold(t) => assert_eq!(*t, 9.5),
            other => panic!("{other:?}"),
        }
        assert_eq!(tree.importance(), vec![1.0, 0.0]);
        assert!(tree.splits_on(0));
        assert!(!tree.splits_on(1));
    }

    #[test]
    fn unknown_category_goes_to_larger_child() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let c = if i < 20 { 0 } else { 1 };
            rows.push(vec![cat(c)]);
            labels.push(c as usize);
        }
        let cols = vec![ColumnKind::Categorical { cardinality: 3 }];
        let tree = DecisionTree::fit(cols, &rows, &labels, 2, TreeParams::default()).unwrap();
        assert_eq!(tree.predict_class(&[cat(2)]), 0);
        assert_eq!(tree.predict_class(&[cat(7)]), 0);
        assert_eq!(tree.predict_class(&[Value::Missing]), 0);
    }

    #[test]
    fn min_leaf_is_respected() {
        let rows: Vec<Vec<Value>> = (0..12).map(|i| vec![Value::Num(i as f64)]).collect();
        let labels: Vec<usize> = (0..12).map(|i| usize::from(i == 0)).collect();
        let tree = DecisionTree::fit(
            vec![ColumnKind::Numeric],
            &rows,
            &labels,
            2,
            TreeParams {
                max_depth: 5,
                min_leaf: 5,
            },
        )
        .unwrap();
        for node in tree.nodes() {
            assert!(total(&node.counts) >= 5);
        }
    }

    #[test]
    fn empty_training_set() {
        assert!(matches!(
            DecisionTree::fit(
                vec![ColumnKind::Numeric],
                &[],
                &[],
                2,
                TreeParams::default()
            ),
            Err(ModelError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn multiclass_subset_split() {
        // three categories, each mapping to its own class
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            rows.push(vec![cat((i % 3) as u32)]);
            labels.push(i % 3);
        }
        let cols = vec![ColumnKind::Categorical { cardinality: 3 }];
        let tree = DecisionTree::fit(cols, &rows, &labels, 3, TreeParams::default()).unwrap();
        for c in 0..3 {
            assert_eq!(tree.predict_class(&[cat(c)]), c as usize);
        }
    }
}
