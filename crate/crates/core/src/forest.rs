//! Random-forest regression for the per-beat inter-lead lag.
//!
//! Trees are CART regressors grown on bootstrap samples with `mtry` candidate
//! features per node. Every tree draws from its own ChaCha stream keyed by
//! the tree index, so the result does not depend on thread scheduling.

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{TrainingSet, FEATURE_COUNT, FEATURE_NAMES};
use crate::lead::LeadId;
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("insufficient training data: {n} samples, at least {min} required")]
    InsufficientData { n: usize, min: usize },
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
    #[error("feature vector has {got} values, model expects {expected}")]
    FeatureCount { got: usize, expected: usize },
    #[error("model file: {0}")]
    Format(String),
}

/// Smallest training set accepted for a lag model.
pub const MIN_TRAINING_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    /// Candidate features per split.
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
    /// Grow each tree on a bootstrap resample; off means every tree sees the
    /// full training set once.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            mtry: (FEATURE_COUNT as f64).sqrt().floor() as usize,
            min_leaf: 5,
            max_depth: None,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self, n_features: usize) -> Result<(), ForestError> {
        if self.trees == 0 {
            return Err(ForestError::InvalidConfig("tree count must be at least 1".into()));
        }
        if self.mtry == 0 || self.mtry > n_features {
            return Err(ForestError::InvalidConfig(format!(
                "mtry must lie in 1..={n_features}, got {}",
                self.mtry
            )));
        }
        if self.min_leaf == 0 {
            return Err(ForestError::InvalidConfig("min_leaf must be at least 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(ForestError::InvalidConfig("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<T> {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
        /// Decrease in summed squared error achieved by this split.
        gain: T,
    },
    Leaf {
        value: T,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tree<T> {
    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn predict(&self, x: &[T]) -> T {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => k = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn split_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], k: usize) -> usize {
            match &nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Grower<'a, T> {
    rows: &'a [&'a [T]],
    y: &'a [T],
    config: &'a ForestConfig,
    n_features: usize,
    nodes: Vec<Node<T>>,
}

struct BestSplit<T> {
    feature: usize,
    threshold: T,
    gain: T,
}

impl<T: Real> Grower<'_, T> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: T::zero() });
        let first = self.y[idx[0]];
        let constant = idx.iter().all(|&i| self.y[i] == first);
        let depth_ok = self.config.max_depth.is_none_or(|d| depth < d);
        let split = if !constant && depth_ok && idx.len() >= 2 * self.config.min_leaf {
            self.best_split(&idx, rng)
        } else {
            None
        };
        match split {
            None => {
                let value = if constant {
                    first
                } else {
                    idx.iter().map(|&i| self.y[i]).sum::<T>() / T::from_count(idx.len())
                };
                self.nodes[id] = Node::Leaf { value };
            }
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.into_iter().partition(|&i| self.rows[i][s.feature] <= s.threshold);
                let left = self.grow(l, depth + 1, rng);
                let right = self.grow(r, depth + 1, rng);
                self.nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                    gain: s.gain,
                };
            }
        }
        id
    }

    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit<T>> {
        let n = idx.len();
        let nf = T::from_count(n);
        let total: T = idx.iter().map(|&i| self.y[i]).sum();
        let parent_sse: T = {
            let m = total / nf;
            idx.iter().map(|&i| (self.y[i] - m) * (self.y[i] - m)).sum()
        };
        let mut features = index::sample(rng, self.n_features, self.config.mtry).into_vec();
        features.sort_unstable();
        let min_leaf = self.config.min_leaf;
        let mut best: Option<BestSplit<T>> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| {
                self.rows[a][f]
                    .partial_cmp(&self.rows[b][f])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut left_sum = T::zero();
            for k in 0..n - 1 {
                left_sum += self.y[order[k]];
                let nl = k + 1;
                let lo = self.rows[order[k]][f];
                let hi = self.rows[order[k + 1]][f];
                if nl < min_leaf || n - nl < min_leaf || lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                // SSE decrease = sum_l^2/n_l + sum_r^2/n_r - total^2/n
                let gain = left_sum * left_sum / T::from_count(nl) + right_sum * right_sum / T::from_count(n - nl)
                    - total * total / nf;
                if gain <= parent_sse * T::lit(1e-12) {
                    continue;
                }
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = (lo + hi) / T::lit(2.0);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Ensemble regressor; prediction is the mean over trees, clamped to the
/// training response range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest<T> {
    trees: Vec<Tree<T>>,
    n_features: usize,
    response_min: T,
    response_max: T,
}

impl<T: Real> RandomForest<T> {
    pub fn trees(&self) -> &[Tree<T>] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn response_range(&self) -> (T, T) {
        (self.response_min, self.response_max)
    }

    pub fn predict(&self, x: &[T]) -> Result<T, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::FeatureCount {
                got: x.len(),
                expected: self.n_features,
            });
        }
        let sum: T = self.trees.iter().map(|t| t.predict(x)).sum();
        let mean = sum / T::from_count(self.trees.len());
        Ok(mean.max(self.response_min).min(self.response_max))
    }

    /// Summed split gain per feature, normalised to sum 1 (all zero when no
    /// tree has a split).
    pub fn feature_importance(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.n_features];
        for t in &self.trees {
            for node in &t.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    acc[*feature] += *gain;
                }
            }
        }
        let total: T = acc.iter().copied().sum();
        if total > T::zero() {
            for v in &mut acc {
                *v /= total;
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestFit<T> {
    pub forest: RandomForest<T>,
    /// Out-of-bag RMSE over rows left out by at least one tree.
    pub oob_rmse: Option<T>,
}

/// Fits a forest on `rows` (all of equal width) against `y`.
pub fn fit_forest<T: Real, R: AsRef<[T]> + Sync>(
    rows: &[R],
    y: &[T],
    config: &ForestConfig,
) -> Result<ForestFit<T>, ForestError> {
    let n = rows.len();
    if n == 0 || n != y.len() {
        return Err(ForestError::InsufficientData {
            n: n.min(y.len()),
            min: 1,
        });
    }
    let n_features = rows[0].as_ref().len();
    if let Some(bad) = rows.iter().find(|r| r.as_ref().len() != n_features) {
        return Err(ForestError::FeatureCount {
            got: bad.as_ref().len(),
            expected: n_features,
        });
    }
    config.validate(n_features)?;
    let views: Vec<&[T]> = rows.iter().map(|r| r.as_ref()).collect();

    let grown: Vec<(Tree<T>, Vec<bool>)> = (0..config.trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64);
            let mut in_bag = vec![false; n];
            let idx: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            for &i in &idx {
                in_bag[i] = true;
            }
            let mut g = Grower {
                rows: &views,
                y,
                config,
                n_features,
                nodes: Vec::new(),
            };
            g.grow(idx, 0, &mut rng);
            (Tree { nodes: g.nodes }, in_bag)
        })
        .collect();

    let mut oob_sum = vec![T::zero(); n];
    let mut oob_count = vec![0usize; n];
    for (tree, in_bag) in &grown {
        for i in (0..n).filter(|&i| !in_bag[i]) {
            oob_sum[i] += tree.predict(views[i]);
            oob_count[i] += 1;
        }
    }
    let scored: Vec<T> = (0..n)
        .filter(|&i| oob_count[i] > 0)
        .map(|i| {
            let e = oob_sum[i] / T::from_count(oob_count[i]) - y[i];
            e * e
        })
        .collect();
    let oob_rmse = (!scored.is_empty()).then(|| crate::scalar::mean(&scored).sqrt());

    let response_min = y.iter().copied().fold(T::infinity(), T::min);
    let response_max = y.iter().copied().fold(T::neg_infinity(), T::max);
    Ok(ForestFit {
        forest: RandomForest {
            trees: grown.into_iter().map(|(t, _)| t).collect(),
            n_features,
            response_min,
            response_max,
        },
        oob_rmse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n: usize,
    pub oob_rmse_ms: Option<f64>,
    pub importance: Vec<(String, f64)>,
}

/// Lag regressor for one (missing, current) lead pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LagModel<T> {
    pub missing: LeadId,
    pub current: LeadId,
    pub config: ForestConfig,
    pub forest: RandomForest<T>,
    pub summary: TrainingSummary,
}

/// Trains the lag model for the training set's lead pair.
pub fn train_forest<T: Real>(data: &TrainingSet<T>, config: &ForestConfig) -> Result<LagModel<T>, ForestError> {
    let n = data.samples.len();
    if n < MIN_TRAINING_SAMPLES {
        return Err(ForestError::InsufficientData {
            n,
            min: MIN_TRAINING_SAMPLES,
        });
    }
    let rows: Vec<&[T]> = data.samples.iter().map(|s| s.features.as_slice()).collect();
    let y: Vec<T> = data.samples.iter().map(|s| s.lag_ms).collect();
    let fit = fit_forest(&rows, &y, config)?;
    let importance = fit
        .forest
        .feature_importance()
        .into_iter()
        .zip(FEATURE_NAMES)
        .map(|(v, name)| (name.to_string(), v.as_f64()))
        .collect();
    Ok(LagModel {
        missing: data.missing,
        current: data.current,
        config: config.clone(),
        summary: TrainingSummary {
            n,
            oob_rmse_ms: fit.oob_rmse.map(Real::as_f64),
            importance,
        },
        forest: fit.forest,
    })
}

impl<T: Real> LagModel<T> {
    /// Predicted lag in ms for one feature vector.
    pub fn predict(&self, x: &[T]) -> Result<T, ForestError> {
        self.forest.predict(x)
    }

    pub fn feature_importance(&self) -> Vec<T> {
        self.forest.feature_importance()
    }

    /// Serialises to the versioned text format. Floats are written as the
    /// hex bit pattern of their `f64` value, so reloading is exact.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "{MODEL_MAGIC}");
        let _ = writeln!(s, "pair {} {}", self.missing, self.current);
        let _ = writeln!(s, "features {} {}", self.forest.n_features, FEATURE_NAMES.join(" "));
        let _ = writeln!(
            s,
            "config trees {} mtry {} min_leaf {} max_depth {} seed {} bootstrap {}",
            c.trees,
            c.mtry,
            c.min_leaf,
            c.max_depth.map_or("none".to_string(), |d| d.to_string()),
            c.seed,
            u8::from(c.bootstrap)
        );
        let _ = writeln!(
            s,
            "summary n {} oob_rmse {}",
            self.summary.n,
            self.summary.oob_rmse_ms.map_or("none".to_string(), hex)
        );
        let imp: Vec<String> = self.summary.importance.iter().map(|(_, v)| hex(*v)).collect();
        let _ = writeln!(s, "importance {}", imp.join(" "));
        let _ = writeln!(
            s,
            "range {} {}",
            hex(self.forest.response_min.as_f64()),
            hex(self.forest.response_max.as_f64())
        );
        for (b, tree) in self.forest.trees.iter().enumerate() {
            let _ = writeln!(s, "tree {b} {}", tree.nodes.len());
            for node in &tree.nodes {
                let _ = match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        gain,
                    } => writeln!(
                        s,
                        "S {feature} {} {left} {right} {}",
                        hex(threshold.as_f64()),
                        hex(gain.as_f64())
                    ),
                    Node::Leaf { value } => writeln!(s, "L {}", hex(value.as_f64())),
                };
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ForestError> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| ForestError::Format(format!("unexpected end of file, expected {what}")))
        };
        if next("magic")?.trim() != MODEL_MAGIC {
            return Err(ForestError::Format("not a lag model file".into()));
        }
        let pair = fields(next("pair")?, "pair")?;
        let lead = |s: &str| s.parse::<LeadId>().map_err(|e| ForestError::Format(e.to_string()));
        let (missing, current) = match pair.as_slice() {
            [a, b] => (lead(a)?, lead(b)?),
            _ => return Err(ForestError::Format("bad pair line".into())),
        };
        let feats = fields(next("features")?, "features")?;
        let n_features: usize = num(feats.first().copied())?;
        let names: Vec<&str> = feats[1..].to_vec();
        if n_features != FEATURE_COUNT || names != FEATURE_NAMES {
            return Err(ForestError::Format("feature ordering does not match this build".into()));
        }
        let cfg = fields(next("config")?, "config")?;
        let kv = |key: &str| -> Result<&str, ForestError> {
            cfg.iter()
                .position(|t| *t == key)
                .and_then(|p| cfg.get(p + 1).copied())
                .ok_or_else(|| ForestError::Format(format!("config lacks {key}")))
        };
        let config = ForestConfig {
            trees: num(Some(kv("trees")?))?,
            mtry: num(Some(kv("mtry")?))?,
            min_leaf: num(Some(kv("min_leaf")?))?,
            max_depth: match kv("max_depth")? {
                "none" => None,
                d => Some(num(Some(d))?),
            },
            seed: num(Some(kv("seed")?))?,
            bootstrap: kv("bootstrap")? == "1",
        };
        let summ = fields(next("summary")?, "summary")?;
        let n: usize = num(summ.get(1).copied())?;
        let oob_rmse_ms = match summ.get(3).copied() {
            Some("none") => None,
            other => Some(unhex(other)?),
        };
        let imp = fields(next("importance")?, "importance")?;
        let importance = imp
            .iter()
            .zip(FEATURE_NAMES)
            .map(|(v, name)| Ok((name.to_string(), unhex(Some(v))?)))
            .collect::<Result<Vec<_>, ForestError>>()?;
        let range = fields(next("range")?, "range")?;
        let response_min = T::lit(unhex(range.first().copied())?);
        let response_max = T::lit(unhex(range.get(1).copied())?);
        let mut trees = Vec::with_capacity(config.trees);
        for b in 0..config.trees {
            let head = fields(next("tree")?, "tree")?;
            if head.first().copied() != Some(&b.to_string()) {
                return Err(ForestError::Format(format!("expected tree {b}")));
            }
            let count: usize = num(head.get(1).copied())?;
            let mut nodes = Vec::with_capacity(count);
            for _ in 0..count {
                let line = next("node")?;
                let t: Vec<&str> = line.split_whitespace().collect();
                let node = match t.first().copied() {
                    Some("S") if t.len() == 6 => Node::Split {
                        feature: num(Some(t[1]))?,
                        threshold: T::lit(unhex(Some(t[2]))?),
                        left: num(Some(t[3]))?,
                        right: num(Some(t[4]))?,
                        gain: T::lit(unhex(Some(t[5]))?),
                    },
                    Some("L") if t.len() == 2 => Node::Leaf {
                        value: T::lit(unhex(Some(t[1]))?),
                    },
                    _ => return Err(ForestError::Format(format!("bad node line {line:?}"))),
                };
                if let Node::Split {
                    feature, left, right, ..
                } = node
                {
                    if feature >= n_features || left >= count || right >= count {
                        return Err(ForestError::Format(format!("node references out of range: {line:?}")));
                    }
                }
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(ForestError::Format(format!("tree {b} has no nodes")));
            }
            trees.push(Tree { nodes });
        }
        if next("end")?.trim() != "end" {
            return Err(ForestError::Format("missing end marker".into()));
        }
        Ok(LagModel {
            missing,
            current,
            config,
            forest: RandomForest {
                trees,
                n_features,
                response_min,
                response_max,
            },
            summary: TrainingSummary {
                n,
                oob_rmse_ms,
                importance,
            },
        })
    }
}

const MODEL_MAGIC: &str = "leadsynth-lagmodel v1";

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn unhex(s: Option<&str>) -> Result<f64, ForestError> {
    let s = s.ok_or_else(|| ForestError::Format("missing float".into()))?;
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| ForestError::Format(format!("bad float {s:?}")))
}

fn num<F: std::str::FromStr>(s: Option<&str>) -> Result<F, ForestError> {
    let s = s.ok_or_else(|| ForestError::Format("missing integer".into()))?;
    s.parse().map_err(|_| ForestError::Format(format!("bad integer {s:?}")))
}

fn fields<'a>(line: &'a str, key: &str) -> Result<Vec<&'a str>, ForestError> {
    let mut t = line.split_whitespace();
    if t.next() != Some(key) {
        return Err(ForestError::Format(format!("expected {key} line, got {line:?}")));
    }
    Ok(t.collect())
}
