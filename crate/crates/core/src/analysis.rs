//! Hierarchical clustering of channels, either by their coefficient profiles
//! or by the correlation of their intrinsic modes.
//!
//! Agglomeration keeps a full distance matrix and applies the Lance–Williams
//! update for the chosen linkage; equal distances are broken by the lowest
//! `(i, j)` cluster slot. Merge ids follow the usual convention: leaves are
//! `0..N`, merge `s` creates cluster `N + s`.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, ArrayView3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::pearson;
use crate::sparse::CoefficientMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

impl FromStr for Linkage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(Error::config(format!("unknown linkage '{other}'"))),
        }
    }
}

impl std::fmt::Display for Linkage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    /// `1 − Pearson correlation`, in `[0, 2]`.
    Correlation,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "correlation" => Ok(Metric::Correlation),
            other => Err(Error::config(format!("unknown metric '{other}'"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Correlation => "correlation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub leaf_labels: Vec<String>,
    pub linkage: Linkage,
    pub metric: Metric,
    /// Leaves with zero variance under the correlation metric.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged_leaves: Vec<usize>,
}

/// Pairwise distances between the rows of `points`.
pub fn pairwise_distances(points: ArrayView2<'_, f64>, metric: Metric) -> (Array2<f64>, Vec<usize>) {
    let n = points.nrows();
    let mut d = Array2::zeros((n, n));
    let mut flagged = Vec::new();
    if metric == Metric::Correlation {
        for i in 0..n {
            let row = points.row(i);
            let mean = row.sum() / row.len() as f64;
            if row.iter().all(|&v| v == mean) {
                flagged.push(i);
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = match metric {
                Metric::Euclidean => points
                    .row(i)
                    .iter()
                    .zip(points.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
                Metric::Correlation => 1.0 - pearson(points.row(i), points.row(j)),
            };
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    (d, flagged)
}

/// Agglomerates `N ≥ 2` items from a symmetric distance matrix.
pub fn agglomerate(dist: ArrayView2<'_, f64>, linkage: Linkage) -> Result<Vec<Merge>> {
    let n = dist.nrows();
    if dist.ncols() != n {
        return Err(Error::dim(format!("distance matrix is {}×{}", n, dist.ncols())));
    }
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 items to cluster, got {n}")));
    }
    if dist.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite distance"));
    }
    let mut d = dist.to_owned();
    let mut active = vec![true; n];
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if active[j] && d[[i, j]] < best.0 {
                    best = (d[[i, j]], i, j);
                }
            }
        }
        let (height, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for m in 0..n {
            if !active[m] || m == i || m == j {
                continue;
            }
            let v = match linkage {
                Linkage::Single => d[[i, m]].min(d[[j, m]]),
                Linkage::Complete => d[[i, m]].max(d[[j, m]]),
                Linkage::Average => (ni * d[[i, m]] + nj * d[[j, m]]) / (ni + nj),
            };
            d[[i, m]] = v;
            d[[m, i]] = v;
        }
        let (a, b) = (id[i].min(id[j]), id[i].max(id[j]));
        size[i] += size[j];
        active[j] = false;
        id[i] = n + step;
        merges.push(Merge {
            a,
            b,
            height,
            size: size[i],
        });
    }
    Ok(merges)
}

fn checked_labels(labels: &[String], n: usize) -> Result<Vec<String>> {
    if labels.is_empty() {
        return Ok((0..n).map(|i| format!("ch{i}")).collect());
    }
    if labels.len() != n {
        return Err(Error::dim(format!("{} labels for {n} leaves", labels.len())));
    }
    Ok(labels.to_vec())
}

/// Clusters the rows of `points`.
pub fn cluster_points(
    points: ArrayView2<'_, f64>,
    labels: &[String],
    metric: Metric,
    linkage: Linkage,
) -> Result<Dendrogram> {
    let leaf_labels = checked_labels(labels, points.nrows())?;
    let (dist, flagged_leaves) = pairwise_distances(points, metric);
    if !flagged_leaves.is_empty() {
        log::warn!("{} zero-variance channel(s) placed at distance 1", flagged_leaves.len());
    }
    Ok(Dendrogram {
        merges: agglomerate(dist.view(), linkage)?,
        leaf_labels,
        linkage,
        metric,
        flagged_leaves,
    })
}

/// Clusters channels by their coefficient profiles (the columns of `A`).
/// Empty `labels` default to `ch0, ch1, …`.
pub fn cluster_coefficients(
    a: &CoefficientMatrix,
    labels: &[String],
    linkage: Linkage,
) -> Result<Dendrogram> {
    cluster_points(a.values().t(), labels, Metric::Euclidean, linkage)
}

/// Clusters channels by the correlation of one mode's per-channel signals.
/// `mode` is `T × C`.
pub fn cluster_modes(mode: ArrayView2<'_, f64>, labels: &[String], linkage: Linkage) -> Result<Dendrogram> {
    if mode.nrows() < 3 {
        return Err(Error::invalid(format!("need at least 3 samples, got {}", mode.nrows())));
    }
    cluster_points(mode.t(), labels, Metric::Correlation, linkage)
}

/// [`cluster_modes`] for every mode of a `K × T × C` array.
pub fn cluster_all_modes(modes: ArrayView3<'_, f64>, labels: &[String], linkage: Linkage) -> Result<Vec<Dendrogram>> {
    (0..modes.len_of(Axis(0)))
        .into_par_iter()
        .map(|k| cluster_modes(modes.index_axis(Axis(0), k), labels, linkage))
        .collect()
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.leaf_labels.len()
    }

    /// Leaves below cluster `id`, in left-to-right order.
    pub fn members(&self, id: usize) -> Vec<usize> {
        let n = self.n_leaves();
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            if c < n {
                out.push(c);
            } else {
                let m = &self.merges[c - n];
                stack.push(m.b);
                stack.push(m.a);
            }
        }
        out
    }

    fn height_of(&self, id: usize) -> f64 {
        let n = self.n_leaves();
        if id < n {
            0.0
        } else {
            self.merges[id - n].height
        }
    }

    /// Clusters left after undoing the last `k − 1` merges: the leaves of a
    /// tree truncated to at most `k` leaves. Sorted by id.
    pub fn cut_clusters(&self, k: usize) -> Vec<usize> {
        let n = self.n_leaves();
        let k = k.clamp(1, n);
        let kept = n - k;
        let mut roots: Vec<usize> = (0..n).collect();
        for (s, m) in self.merges.iter().take(kept).enumerate() {
            roots.retain(|&c| c != m.a && c != m.b);
            roots.push(n + s);
        }
        roots.sort_unstable();
        roots
    }

    /// Flat cluster label per leaf for `k` clusters, numbered by lowest leaf.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let mut labels = vec![0; self.n_leaves()];
        let mut groups: Vec<Vec<usize>> = self.cut_clusters(k).into_iter().map(|r| self.members(r)).collect();
        groups.sort_by_key(|g| g.iter().copied().min());
        for (cluster, members) in groups.into_iter().enumerate() {
            for leaf in members {
                labels[leaf] = cluster;
            }
        }
        labels
    }

    /// Newick text; with `max_leaves`, subtrees below the cut are collapsed
    /// into single leaves labelled `first_label+count`.
    pub fn to_newick(&self, max_leaves: Option<usize>) -> String {
        let n = self.n_leaves();
        let collapsed: Vec<usize> = match max_leaves {
            Some(k) if k < n => self.cut_clusters(k).into_iter().filter(|&c| c >= n).collect(),
            _ => Vec::new(),
        };
        let root = n + self.merges.len() - 1;
        let mut s = String::new();
        self.newick_node(root, None, &collapsed, &mut s);
        s.push(';');
        s
    }

    fn newick_node(&self, id: usize, parent: Option<f64>, collapsed: &[usize], s: &mut String) {
        let n = self.n_leaves();
        let h = self.height_of(id);
        if id < n {
            s.push_str(&newick_label(&self.leaf_labels[id]));
        } else if collapsed.contains(&id) {
            let members = self.members(id);
            let label = format!("{}+{}", self.leaf_labels[members[0]], members.len() - 1);
            s.push_str(&newick_label(&label));
        } else {
            let m = self.merges[id - n];
            s.push('(');
            self.newick_node(m.a, Some(h), collapsed, s);
            s.push(',');
            self.newick_node(m.b, Some(h), collapsed, s);
            s.push(')');
        }
        if let Some(p) = parent {
            // Collapsed subtrees hang from their parent like a leaf at height 0.
            let own = if id >= n && collapsed.contains(&id) { 0.0 } else { h };
            let _ = write!(s, ":{}", p - own);
        }
    }

    /// Serializable merge list; with `max_leaves`, only the merges above the
    /// cut are listed and each collapsed cluster is reported with its members.
    pub fn export(&self, max_leaves: Option<usize>) -> DendrogramExport {
        let n = self.n_leaves();
        let cut = match max_leaves {
            Some(k) if k < n => k,
            _ => n,
        };
        let skipped = n - cut;
        let collapsed = self
            .cut_clusters(cut)
            .into_iter()
            .filter(|&c| c >= n)
            .map(|id| CollapsedCluster {
                id,
                height: self.height_of(id),
                members: self.members(id),
            })
            .collect();
        DendrogramExport {
            leaf_labels: self.leaf_labels.clone(),
            linkage: self.linkage,
            metric: self.metric,
            merges: self
                .merges
                .iter()
                .enumerate()
                .skip(skipped)
                .map(|(s, m)| ExportedMerge {
                    id: n + s,
                    a: m.a,
                    b: m.b,
                    height: m.height,
                    size: m.size,
                })
                .collect(),
            collapsed,
            flagged_leaves: self.flagged_leaves.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedMerge {
    pub id: usize,
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapsedCluster {
    pub id: usize,
    pub height: f64,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramExport {
    pub leaf_labels: Vec<String>,
    pub linkage: Linkage,
    pub metric: Metric,
    pub merges: Vec<ExportedMerge>,
    pub collapsed: Vec<CollapsedCluster>,
    pub flagged_leaves: Vec<usize>,
}

fn newick_label(label: &str) -> String {
    if label.chars().any(|c| "()[]':;,_ \t".contains(c)) {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}
