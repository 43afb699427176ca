//! Histogram-split regression trees over pre-binned features.

use serde::{Deserialize, Serialize};

/// Upper bound on bins per feature; bin indices fit in a `u8`.
pub const MAX_BINS: usize = 256;

/// Per-feature cut points. A value `x` falls in bin
/// `#{cuts c : c < x}`, so "bin <= b" is the same as `x <= cuts[b]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Binning {
    pub cuts: Vec<Vec<f64>>,
    /// Column-major bin codes, `codes[feature][sample]`.
    pub codes: Vec<Vec<u8>>,
}

impl Binning {
    pub fn fit(x: &[Vec<f64>], max_bins: usize) -> Self {
        let dim = x.first().map_or(0, Vec::len);
        let max_bins = max_bins.clamp(2, MAX_BINS);
        let mut cuts = Vec::with_capacity(dim);
        let mut codes = Vec::with_capacity(dim);
        for f in 0..dim {
            let mut col: Vec<f64> = x.iter().map(|r| r[f]).collect();
            col.sort_by(f64::total_cmp);
            let n = col.len();
            let mut distinct: Vec<(f64, usize)> = Vec::new();
            for &v in &col {
                match distinct.last_mut() {
                    Some((last, c)) if *last == v => *c += 1,
                    _ => distinct.push((v, 1)),
                }
            }
            let mut fc = Vec::new();
            if distinct.len() <= max_bins {
                for w in distinct.windows(2) {
                    fc.push(0.5 * (w[0].0 + w[1].0));
                }
            } else {
                let per_bin = n as f64 / max_bins as f64;
                let mut cum = 0usize;
                let mut next = per_bin;
                for w in distinct.windows(2) {
                    cum += w[0].1;
                    if cum as f64 >= next {
                        fc.push(0.5 * (w[0].0 + w[1].0));
                        while next <= cum as f64 {
                            next += per_bin;
                        }
                        if fc.len() + 1 >= max_bins {
                            break;
                        }
                    }
                }
            }
            let column: Vec<u8> = x.iter().map(|r| bin_of(&fc, r[f])).collect();
            cuts.push(fc);
            codes.push(column);
        }
        Binning { cuts, codes }
    }

    pub fn n_bins(&self, f: usize) -> usize {
        self.cuts[f].len() + 1
    }
}

fn bin_of(cuts: &[f64], x: f64) -> u8 {
    cuts.partition_point(|&c| c < x) as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature as usize] <= threshold { left as usize } else { right as usize };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

/// In-bag sample: index, bootstrap multiplicity and effective weight
/// (multiplicity times sample weight).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Bagged {
    pub index: u32,
    pub count: u32,
    pub weight: f64,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    w: f64,
    s: f64,
    n: u32,
}

struct Best {
    gain: f64,
    feature: usize,
    bin: usize,
}

/// Grows one tree on the in-bag samples, maximizing weighted squared-error
/// reduction. Ties resolve to the lowest feature, then the lowest cut.
pub(crate) fn grow(binning: &Binning, y: &[f64], mut samples: Vec<Bagged>, params: TreeParams) -> Tree {
    let dim = binning.cuts.len();
    let mut nodes: Vec<Node> = Vec::new();
    let mut hist = vec![Acc::default(); MAX_BINS];
    // (node slot, range start, range end, depth)
    let mut stack: Vec<(usize, usize, usize, usize)> = Vec::new();
    nodes.push(Node::Leaf { value: 0.0 });
    stack.push((0, 0, samples.len(), 0));
    let min_leaf = params.min_samples_leaf.max(1) as u32;

    while let Some((slot, lo, hi, depth)) = stack.pop() {
        let node = &samples[lo..hi];
        let mut total = Acc::default();
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for b in node {
            let yi = y[b.index as usize];
            total.w += b.weight;
            total.s += b.weight * yi;
            total.n += b.count;
            ymin = ymin.min(yi);
            ymax = ymax.max(yi);
        }
        let value = if total.w > 0.0 { total.s / total.w } else { 0.0 };
        if depth >= params.max_depth || total.n < 2 * min_leaf || ymin == ymax || total.w <= 0.0 {
            nodes[slot] = Node::Leaf { value };
            continue;
        }

        let parent_score = total.s * total.s / total.w;
        let mut best: Option<Best> = None;
        for f in 0..dim {
            let nb = binning.n_bins(f);
            if nb < 2 {
                continue;
            }
            let h = &mut hist[..nb];
            h.fill(Acc::default());
            let codes = &binning.codes[f];
            for b in node {
                let a = &mut h[codes[b.index as usize] as usize];
                a.w += b.weight;
                a.s += b.weight * y[b.index as usize];
                a.n += b.count;
            }
            let mut left = Acc::default();
            for (bin, a) in h.iter().enumerate().take(nb - 1) {
                left.w += a.w;
                left.s += a.s;
                left.n += a.n;
                let right_n = total.n - left.n;
                if left.n < min_leaf {
                    continue;
                }
                if right_n < min_leaf {
                    break;
                }
                let right_w = total.w - left.w;
                if left.w <= 0.0 || right_w <= 0.0 {
                    continue;
                }
                let right_s = total.s - left.s;
                let gain = left.s * left.s / left.w + right_s * right_s / right_w - parent_score;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Best { gain, feature: f, bin });
                }
            }
        }

        let Some(best) = best.filter(|b| b.gain > 1e-12 * parent_score.abs().max(1e-12)) else {
            nodes[slot] = Node::Leaf { value };
            continue;
        };

        let codes = &binning.codes[best.feature];
        let node = &mut samples[lo..hi];
        let mut split = 0;
        for i in 0..node.len() {
            if codes[node[i].index as usize] as usize <= best.bin {
                node.swap(i, split);
                split += 1;
            }
        }
        let left_slot = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[slot] = Node::Split {
            feature: best.feature as u32,
            threshold: binning.cuts[best.feature][best.bin],
            left: left_slot as u32,
            right: (left_slot + 1) as u32,
        };
        stack.push((left_slot + 1, lo + split, hi, depth + 1));
        stack.push((left_slot, lo, lo + split, depth + 1));
    }
    Tree { nodes }
}
