//! First-order functional ANOVA over a fitted forest. Each tree is a
//! piecewise-constant function on axis-aligned boxes, so its marginals
//! under the uniform measure can be computed exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::forest::{FeatureKind, Forest, ForestConfig, Node, SplitRule, Tree};
use super::AnalysisError;
use crate::configspace::{ParamKind, SearchSpace};
use crate::priorband::RunHistory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    /// Mean over trees of the parameter's share of the total variance.
    pub importance: f64,
    /// Spread of that share across trees.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImportanceReport {
    pub parameters: BTreeMap<String, ImportanceEntry>,
}

impl ImportanceReport {
    pub fn importance(&self, name: &str) -> Option<f64> {
        self.parameters.get(name).map(|e| e.importance)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
enum Domain {
    Interval(f64, f64),
    Set(Vec<bool>),
}

impl Domain {
    fn full(kind: FeatureKind) -> Domain {
        match kind {
            FeatureKind::Continuous => Domain::Interval(0.0, 1.0),
            FeatureKind::Categorical(k) => Domain::Set(vec![true; k]),
        }
    }

    fn fraction(&self) -> f64 {
        match self {
            Domain::Interval(lo, hi) => (hi - lo).max(0.0),
            Domain::Set(s) => s.iter().filter(|&&b| b).count() as f64 / s.len() as f64,
        }
    }
}

/// Width of one cell of a feature and a membership test for leaf domains.
type Cell = (f64, Box<dyn Fn(&Domain) -> bool>);

struct LeafBox {
    value: f64,
    domains: Vec<Domain>,
}

fn collect_leaves(node: &Node, domains: &mut Vec<Domain>, out: &mut Vec<LeafBox>, cuts: &mut [Vec<f64>]) {
    match node {
        Node::Leaf(v) => out.push(LeafBox { value: *v, domains: domains.clone() }),
        Node::Split { feature, rule, left, right } => {
            let saved = domains[*feature].clone();
            let (l, r) = match (rule, &saved) {
                (SplitRule::Threshold(t), Domain::Interval(lo, hi)) => {
                    let t = t.clamp(*lo, *hi);
                    cuts[*feature].push(t);
                    (Domain::Interval(*lo, t), Domain::Interval(t, *hi))
                }
                (SplitRule::Subset(s), Domain::Set(cur)) => (
                    Domain::Set(cur.iter().zip(s).map(|(a, b)| *a && *b).collect()),
                    Domain::Set(cur.iter().zip(s).map(|(a, b)| *a && !*b).collect()),
                ),
                _ => unreachable!("split rule matches feature kind"),
            };
            domains[*feature] = l;
            collect_leaves(left, domains, out, cuts);
            domains[*feature] = r;
            collect_leaves(right, domains, out, cuts);
            domains[*feature] = saved;
        }
    }
}

/// Per-feature first-order variance shares of one tree, or `None` when the
/// tree is constant.
fn tree_shares(tree: &Tree, kinds: &[FeatureKind]) -> Option<Vec<f64>> {
    let d = kinds.len();
    let mut leaves = Vec::new();
    let mut cuts = vec![Vec::new(); d];
    let mut domains: Vec<Domain> = kinds.iter().map(|&k| Domain::full(k)).collect();
    collect_leaves(&tree.root, &mut domains, &mut leaves, &mut cuts);

    let fractions: Vec<Vec<f64>> = leaves.iter().map(|l| l.domains.iter().map(Domain::fraction).collect()).collect();
    let volume = |i: usize| fractions[i].iter().product::<f64>();
    let f0: f64 = leaves.iter().enumerate().map(|(i, l)| l.value * volume(i)).sum();
    let total: f64 = leaves.iter().enumerate().map(|(i, l)| l.value * l.value * volume(i)).sum::<f64>() - f0 * f0;
    if total <= 1e-15 * (1.0 + f0 * f0) {
        return None;
    }

    let shares = (0..d)
        .map(|f| {
            let others: Vec<f64> = (0..leaves.len())
                .map(|i| (0..d).filter(|&j| j != f).map(|j| fractions[i][j]).product())
                .collect();
            // cells of feature f: the finest partition its cuts induce
            let cells: Vec<Cell> = match kinds[f] {
                FeatureKind::Continuous => {
                    let mut pts = cuts[f].clone();
                    pts.push(0.0);
                    pts.push(1.0);
                    pts.sort_by(f64::total_cmp);
                    pts.dedup();
                    pts.windows(2)
                        .filter(|w| w[1] > w[0])
                        .map(|w| {
                            let mid = 0.5 * (w[0] + w[1]);
                            let inside: Box<dyn Fn(&Domain) -> bool> = Box::new(move |dom| match dom {
                                Domain::Interval(lo, hi) => *lo <= mid && mid < *hi,
                                Domain::Set(_) => false,
                            });
                            (w[1] - w[0], inside)
                        })
                        .collect()
                }
                FeatureKind::Categorical(k) => (0..k)
                    .map(|c| {
                        let inside: Box<dyn Fn(&Domain) -> bool> = Box::new(move |dom| match dom {
                            Domain::Set(s) => s[c],
                            Domain::Interval(..) => false,
                        });
                        (1.0 / k as f64, inside)
                    })
                    .collect(),
            };
            let second_moment: f64 = cells
                .iter()
                .map(|(w, inside)| {
                    let a: f64 = leaves
                        .iter()
                        .zip(&others)
                        .filter(|(l, _)| inside(&l.domains[f]))
                        .map(|(l, o)| l.value * o)
                        .sum();
                    w * a * a
                })
                .sum();
            ((second_moment - f0 * f0) / total).clamp(0.0, 1.0)
        })
        .collect();
    Some(shares)
}

/// First-order importances of a fitted forest. Constant trees are skipped;
/// if every tree is constant all importances are zero.
pub fn forest_importance(forest: &Forest, names: &[String]) -> ImportanceReport {
    let per_tree: Vec<Vec<f64>> = forest.trees.iter().filter_map(|t| tree_shares(t, &forest.kinds)).collect();
    let parameters = names
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let entry = if per_tree.is_empty() {
                ImportanceEntry { importance: 0.0, variance: 0.0 }
            } else {
                let n = per_tree.len() as f64;
                let m = per_tree.iter().map(|s| s[f]).sum::<f64>() / n;
                let v = per_tree.iter().map(|s| (s[f] - m).powi(2)).sum::<f64>() / n;
                ImportanceEntry { importance: m, variance: v }
            };
            (name.clone(), entry)
        })
        .collect();
    ImportanceReport { parameters }
}

/// Fits a forest to `(x, y)` and reports first-order importances.
pub fn fanova_first_order_data(
    x: &[Vec<f64>],
    y: &[f64],
    kinds: &[FeatureKind],
    names: &[String],
    config: &ForestConfig,
) -> Result<ImportanceReport, AnalysisError> {
    if x.len() < 2 || config.trees == 0 {
        return Err(AnalysisError::InsufficientData);
    }
    let spread = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if spread.1 - spread.0 <= 0.0 {
        let zero = ImportanceEntry { importance: 0.0, variance: 0.0 };
        return Ok(ImportanceReport { parameters: names.iter().map(|n| (n.clone(), zero)).collect() });
    }
    let forest = Forest::fit(x, y, kinds, config);
    Ok(forest_importance(&forest, names))
}

/// Importances of the space's parameters for the primary cost, using each
/// configuration's cost at its highest evaluated budget.
pub fn fanova_first_order(
    space: &SearchSpace,
    history: &RunHistory,
    trees: usize,
    seed: u64,
) -> Result<ImportanceReport, AnalysisError> {
    let latest = history.latest();
    let mut distinct: Vec<String> = latest.iter().map(|t| t.configuration.key()).collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(AnalysisError::InsufficientData);
    }
    let kinds: Vec<FeatureKind> = space
        .parameters()
        .iter()
        .map(|p| match (p.kind, p.cardinality()) {
            (ParamKind::Categorical, Some(k)) => FeatureKind::Categorical(k),
            _ => FeatureKind::Continuous,
        })
        .collect();
    let names: Vec<String> = space.parameters().iter().map(|p| p.name.clone()).collect();
    let mut x = Vec::with_capacity(latest.len());
    for t in &latest {
        let u = space.normalize(&t.configuration)?;
        x.push(
            u.iter()
                .zip(&kinds)
                .map(|(&v, k)| match k {
                    FeatureKind::Categorical(k) => (v * (*k as f64 - 1.0)).round(),
                    FeatureKind::Continuous => v,
                })
                .collect(),
        );
    }
    let y: Vec<f64> = latest.iter().map(|t| t.cost.expect("ok trial").primary).collect();
    let config = ForestConfig { trees, seed, ..Default::default() };
    fanova_first_order_data(&x, &y, &kinds, &names, &config)
}
