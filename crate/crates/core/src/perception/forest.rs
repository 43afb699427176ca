//! Bagged regression trees with per-sample weights.
//!
//! Weights enter twice: bootstrap draws are proportional to the weights, and
//! split scores and leaf means are weighted by multiplicity times weight.
//! Samples are put into key order before anything random happens, so the
//! fitted model depends only on the keyed multiset of samples and the seed.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tree::{grow, Bagged, Binning, Tree, TreeParams};
use super::{FlowPredictor, TrainingSet};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fingerprint::Fingerprinter;
use crate::rng;

pub const FORMAT_NAME: &str = "paxload-flow-forest";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Histogram bins per feature for split search.
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 200, max_depth: 12, min_samples_leaf: 2, max_bins: 64, seed: 0 }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config("n_trees, max_depth and min_samples_leaf must be > 0".into()));
        }
        if !(2..=super::tree::MAX_BINS).contains(&self.max_bins) {
            return Err(Error::Config(format!("max_bins must be within [2, {}]", super::tree::MAX_BINS)));
        }
        Ok(())
    }
}

/// Two independent ensembles, one per flow direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedTreeRegressor {
    pub dim: usize,
    pub params: ForestParams,
    pub board: Vec<Tree>,
    pub alight: Vec<Tree>,
}

fn mean_of(trees: &[Tree], x: &[f64]) -> f64 {
    trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64
}

/// Weighted bootstrap of `n` draws over cumulative weights.
fn bootstrap(cumulative: &[f64], seed: u64, tag: &str, tree: usize) -> Vec<u32> {
    let n = cumulative.len();
    let total = cumulative[n - 1];
    let mut counts = vec![0u32; n];
    let mut r = rng::stream(seed, tag, tree as u64);
    for _ in 0..n {
        let u = rand::Rng::random::<f64>(&mut r) * total;
        let i = cumulative.partition_point(|&c| c <= u).min(n - 1);
        counts[i] += 1;
    }
    counts
}

impl BaggedTreeRegressor {
    pub fn fit(data: &TrainingSet, params: &ForestParams) -> Result<Self> {
        Self::fit_with(data, params, Exec::default()).map(|(m, _)| m)
    }

    /// Fits both ensembles and also returns out-of-bag `(board, alight)`
    /// predictions in input order. A sample that is in-bag for every tree
    /// falls back to the full-ensemble prediction.
    pub fn fit_with(data: &TrainingSet, params: &ForestParams, exec: Exec) -> Result<(Self, Vec<(f64, f64)>)> {
        data.validate()?;
        params.validate()?;
        let n = data.len();
        let dim = data.x[0].len();

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (data.keys[i], i));
        let x: Vec<Vec<f64>> = order.iter().map(|&i| data.x[i].clone()).collect();
        let yb: Vec<f64> = order.iter().map(|&i| data.board[i]).collect();
        let ya: Vec<f64> = order.iter().map(|&i| data.alight[i]).collect();
        let w: Vec<f64> = order.iter().map(|&i| data.weights[i]).collect();
        let cumulative: Vec<f64> = w
            .iter()
            .scan(0.0, |acc, &wi| {
                *acc += wi;
                Some(*acc)
            })
            .collect();

        let binning = Binning::fit(&x, params.max_bins);
        let tp = TreeParams { max_depth: params.max_depth, min_samples_leaf: params.min_samples_leaf };
        let nt = params.n_trees;
        let grown: Vec<(Tree, Vec<u32>)> = exec.map(2 * nt, |j| {
            let (y, tag, t) = if j < nt { (&yb, "forest-board", j) } else { (&ya, "forest-alight", j - nt) };
            let counts = bootstrap(&cumulative, params.seed, tag, t);
            let bag: Vec<Bagged> = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| Bagged { index: i as u32, count: c, weight: f64::from(c) * w[i] })
                .collect();
            (grow(&binning, y, bag, tp), counts)
        });

        let (board_part, alight_part) = grown.split_at(nt);
        let model = BaggedTreeRegressor {
            dim,
            params: *params,
            board: board_part.iter().map(|(t, _)| t.clone()).collect(),
            alight: alight_part.iter().map(|(t, _)| t.clone()).collect(),
        };

        let oob_canonical: Vec<(f64, f64)> = exec.map(n, |i| {
            let side = |part: &[(Tree, Vec<u32>)], all: &[Tree]| {
                let (mut s, mut c) = (0.0, 0usize);
                for (t, counts) in part {
                    if counts[i] == 0 {
                        s += t.predict(&x[i]);
                        c += 1;
                    }
                }
                if c > 0 { s / c as f64 } else { mean_of(all, &x[i]) }
            };
            (side(board_part, &model.board).max(0.0), side(alight_part, &model.alight).max(0.0))
        });
        let mut oob = vec![(0.0, 0.0); n];
        for (pos, &i) in order.iter().enumerate() {
            oob[i] = oob_canonical[pos];
        }
        Ok((model, oob))
    }

    pub fn fingerprint(&self) -> String {
        let mut f = Fingerprinter::default();
        f.bytes(FORMAT_NAME.as_bytes()).u64(self.dim as u64).json(&self.params);
        for tree in self.board.iter().chain(&self.alight) {
            f.u64(tree.nodes.len() as u64);
            for node in &tree.nodes {
                match *node {
                    super::tree::Node::Leaf { value } => {
                        f.bytes(&[0]).f64(value);
                    }
                    super::tree::Node::Split { feature, threshold, left, right } => {
                        f.bytes(&[1]).u64(u64::from(feature)).f64(threshold).u64(u64::from(left)).u64(u64::from(right));
                    }
                }
            }
        }
        f.hex()
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Envelope<'a> {
            format: &'a str,
            version: u32,
            model: &'a BaggedTreeRegressor,
        }
        serde_json::to_writer(w, &Envelope { format: FORMAT_NAME, version: FORMAT_VERSION, model: self })
            .map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Envelope {
            format: String,
            version: u32,
            model: serde_json::Value,
        }
        let env: Envelope = serde_json::from_reader(r).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if env.format != FORMAT_NAME {
            return Err(Error::ModelFormat(format!("unexpected format {:?}", env.format)));
        }
        if env.version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", env.version)));
        }
        serde_json::from_value(env.model).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl FlowPredictor for BaggedTreeRegressor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_raw(&self, x: &[f64]) -> (f64, f64) {
        (mean_of(&self.board, x), mean_of(&self.alight, x))
    }
}
