//! Regression forest over the unit hypercube with categorical subset
//! splits. Trees keep enough structure to be marginalized exactly.

use rand::Rng;

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Values in `[0, 1]`.
    Continuous,
    /// Values are category indices `0..k`.
    Categorical(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { trees: 32, max_depth: 12, min_samples_split: 2, bootstrap: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    /// Left iff `x < threshold`.
    Threshold(f64),
    /// Left iff the category is in the set.
    Subset(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(f64),
    Split { feature: usize, rule: SplitRule, left: Box<Node>, right: Box<Node> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub root: Node,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(v) => return *v,
                Node::Split { feature, rule, left, right } => {
                    node = if goes_left(rule, x[*feature]) { left } else { right };
                }
            }
        }
    }
}

fn goes_left(rule: &SplitRule, v: f64) -> bool {
    match rule {
        SplitRule::Threshold(t) => v < *t,
        SplitRule::Subset(s) => s.get(v as usize).copied().unwrap_or(false),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub kinds: Vec<FeatureKind>,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], kinds: &[FeatureKind], config: &ForestConfig) -> Forest {
        assert_eq!(x.len(), y.len());
        let n = y.len();
        let d = kinds.len();
        let mtry = ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1));
        let trees = (0..config.trees)
            .map(|t| {
                let mut rng = seed::rng(seed::derive(
                    "forest-tree",
                    &[&config.seed.to_le_bytes(), &(t as u64).to_le_bytes()],
                ));
                let rows: Vec<usize> = if config.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let builder = Builder { x, y, kinds, mtry, config };
                Tree { root: builder.grow(rows, 0, &mut rng) }
            })
            .collect();
        Forest { kinds: kinds.to_vec(), trees }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    kinds: &'a [FeatureKind],
    mtry: usize,
    config: &'a ForestConfig,
}

struct Candidate {
    sse: f64,
    feature: usize,
    rule: SplitRule,
}

fn mean(ys: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = ys.fold((0.0, 0usize), |(s, n), y| (s + y, n + 1));
    s / n as f64
}

impl Builder<'_> {
    fn grow<R: Rng>(&self, rows: Vec<usize>, depth: usize, rng: &mut R) -> Node {
        let value = mean(rows.iter().map(|&r| self.y[r]));
        if depth >= self.config.max_depth || rows.len() < self.config.min_samples_split {
            return Node::Leaf(value);
        }
        let sse0: f64 = rows.iter().map(|&r| (self.y[r] - value).powi(2)).sum();
        if sse0 <= 1e-12 * rows.len() as f64 {
            return Node::Leaf(value);
        }
        // partial Fisher-Yates for the feature subset
        let mut features: Vec<usize> = (0..self.kinds.len()).collect();
        for i in 0..self.mtry {
            let j = rng.random_range(i..features.len());
            features.swap(i, j);
        }
        let mut best: Option<Candidate> = None;
        for &f in &features[..self.mtry] {
            if let Some(c) = self.best_split(&rows, f) {
                if best.as_ref().is_none_or(|b| c.sse < b.sse) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best.filter(|b| b.sse < sse0 * (1.0 - 1e-12)) else {
            return Node::Leaf(value);
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| goes_left(&best.rule, self.x[i][best.feature]));
        Node::Split {
            feature: best.feature,
            rule: best.rule,
            left: Box::new(self.grow(l, depth + 1, rng)),
            right: Box::new(self.grow(r, depth + 1, rng)),
        }
    }

    /// Sweeps an ordering of groups (distinct values or categories) and
    /// returns the prefix split with the lowest summed squared error.
    fn sweep(groups: &[(f64, usize, f64, f64)]) -> Option<(usize, f64)> {
        // (key, count, sum, sum of squares)
        let total_n: usize = groups.iter().map(|g| g.1).sum();
        let total_s: f64 = groups.iter().map(|g| g.2).sum();
        let total_q: f64 = groups.iter().map(|g| g.3).sum();
        let (mut n, mut s, mut q) = (0usize, 0.0, 0.0);
        let mut best: Option<(usize, f64)> = None;
        for (i, g) in groups[..groups.len().saturating_sub(1)].iter().enumerate() {
            n += g.1;
            s += g.2;
            q += g.3;
            let (rn, rs, rq) = (total_n - n, total_s - s, total_q - q);
            let sse = (q - s * s / n as f64) + (rq - rs * rs / rn as f64);
            if best.is_none_or(|(_, b)| sse < b) {
                best = Some((i, sse));
            }
        }
        best
    }

    fn best_split(&self, rows: &[usize], f: usize) -> Option<Candidate> {
        let mut groups: Vec<(f64, usize, f64, f64)> = Vec::new();
        match self.kinds[f] {
            FeatureKind::Continuous => {
                let mut vals: Vec<(f64, f64)> = rows.iter().map(|&r| (self.x[r][f], self.y[r])).collect();
                vals.sort_by(|a, b| a.0.total_cmp(&b.0));
                for (v, y) in vals {
                    match groups.last_mut() {
                        Some(g) if g.0 == v => {
                            g.1 += 1;
                            g.2 += y;
                            g.3 += y * y;
                        }
                        _ => groups.push((v, 1, y, y * y)),
                    }
                }
                let (i, sse) = Self::sweep(&groups)?;
                let threshold = 0.5 * (groups[i].0 + groups[i + 1].0);
                Some(Candidate { sse, feature: f, rule: SplitRule::Threshold(threshold) })
            }
            FeatureKind::Categorical(k) => {
                let mut acc = vec![(0usize, 0.0, 0.0); k];
                for &r in rows {
                    let c = (self.x[r][f] as usize).min(k - 1);
                    acc[c].0 += 1;
                    acc[c].1 += self.y[r];
                    acc[c].2 += self.y[r] * self.y[r];
                }
                let mut present: Vec<(usize, (usize, f64, f64))> =
                    acc.into_iter().enumerate().filter(|(_, a)| a.0 > 0).collect();
                // ordering categories by mean response makes prefix splits optimal
                present.sort_by(|a, b| (a.1 .1 / a.1 .0 as f64).total_cmp(&(b.1 .1 / b.1 .0 as f64)).then(a.0.cmp(&b.0)));
                groups = present.iter().map(|(c, a)| (*c as f64, a.0, a.1, a.2)).collect();
                let (i, sse) = Self::sweep(&groups)?;
                let mut left = vec![false; k];
                for g in &groups[..=i] {
                    left[g.0 as usize] = true;
                }
                Some(Candidate { sse, feature: f, rule: SplitRule::Subset(left) })
            }
        }
    }
}
