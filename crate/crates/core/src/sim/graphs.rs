//! Ground-truth precision matrices for the four simulated graph families.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PlnError, Result};
use crate::linalg;
use crate::model::TrueNetwork;

/// Diagonal matrices with a smallest eigenvalue at or below this are shifted.
pub const PD_THRESHOLD: f64 = 0.05;
/// Extra diagonal margin added on top of `|lambda_min|`.
pub const PD_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFamily {
    Banded,
    Random,
    Scalefree,
    Blocked,
}

impl std::str::FromStr for GraphFamily {
    type Err = PlnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "banded" => Ok(GraphFamily::Banded),
            "random" => Ok(GraphFamily::Random),
            "scalefree" | "scale-free" => Ok(GraphFamily::Scalefree),
            "blocked" => Ok(GraphFamily::Blocked),
            other => Err(PlnError::InvalidArgument(format!("unknown graph family {other:?}"))),
        }
    }
}

impl std::fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GraphFamily::Banded => "banded",
            GraphFamily::Random => "random",
            GraphFamily::Scalefree => "scalefree",
            GraphFamily::Blocked => "blocked",
        };
        f.write_str(s)
    }
}

fn default_edge_value() -> f64 {
    0.3
}
fn default_band_width() -> usize {
    2
}
fn default_edge_prob() -> f64 {
    0.1
}
fn default_neg_prob() -> f64 {
    0.2
}
fn default_blocks() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub family: GraphFamily,
    pub p: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_edge_value")]
    pub edge_value: f64,
    #[serde(default = "default_band_width")]
    pub band_width: usize,
    #[serde(default = "default_edge_prob")]
    pub edge_prob: f64,
    #[serde(default = "default_neg_prob")]
    pub neg_prob: f64,
    #[serde(default = "default_blocks")]
    pub n_blocks: usize,
}

impl GraphSpec {
    pub fn new(family: GraphFamily, p: usize, seed: u64) -> Self {
        GraphSpec {
            family,
            p,
            seed,
            edge_value: default_edge_value(),
            band_width: default_band_width(),
            edge_prob: default_edge_prob(),
            neg_prob: default_neg_prob(),
            n_blocks: default_blocks(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PlnError::InvalidArgument(m));
        if self.p < 2 {
            return bad(format!("p must be at least 2, got {}", self.p));
        }
        if !self.edge_value.is_finite() {
            return bad("edge value must be finite".into());
        }
        match self.family {
            GraphFamily::Banded if self.band_width < 1 => bad("band width must be at least 1".into()),
            GraphFamily::Random | GraphFamily::Blocked
                if !(self.edge_prob > 0.0 && self.edge_prob < 1.0) =>
            {
                bad(format!("edge probability must lie in (0, 1), got {}", self.edge_prob))
            }
            GraphFamily::Random if !(0.0..=1.0).contains(&self.neg_prob) => {
                bad(format!("negative-edge probability must lie in [0, 1], got {}", self.neg_prob))
            }
            GraphFamily::Blocked if self.n_blocks == 0 || self.p % self.n_blocks != 0 => bad(format!(
                "p not divisible by blocks ({} % {})",
                self.p, self.n_blocks
            )),
            _ => Ok(()),
        }
    }
}

/// Unit-diagonal precision matrix with the family's edge pattern, before any
/// positive-definiteness fix.
pub fn raw_graph(spec: &GraphSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let p = spec.p;
    let mut theta = DMatrix::<f64>::identity(p, p);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let set = |theta: &mut DMatrix<f64>, i: usize, j: usize, v: f64| {
        theta[(i, j)] = v;
        theta[(j, i)] = v;
    };
    match spec.family {
        GraphFamily::Banded => {
            for i in 0..p {
                for j in (i + 1)..p.min(i + spec.band_width + 1) {
                    set(&mut theta, i, j, spec.edge_value);
                }
            }
        }
        GraphFamily::Random => {
            for i in 0..p {
                for j in (i + 1)..p {
                    if rng.random::<f64>() < spec.edge_prob {
                        let v = if rng.random::<f64>() < spec.neg_prob {
                            -spec.edge_value
                        } else {
                            spec.edge_value
                        };
                        set(&mut theta, i, j, v);
                    }
                }
            }
        }
        GraphFamily::Scalefree => {
            // Linear preferential attachment, one edge per arriving node.
            // `ends` lists every edge endpoint, so a uniform draw from it is a
            // degree-proportional draw of a node.
            let mut ends: Vec<usize> = vec![0, 1];
            set(&mut theta, 0, 1, spec.edge_value);
            for v in 2..p {
                let u = ends[rng.random_range(0..ends.len())];
                set(&mut theta, u, v, spec.edge_value);
                ends.push(u);
                ends.push(v);
            }
        }
        GraphFamily::Blocked => {
            let size = p / spec.n_blocks;
            for b in 0..spec.n_blocks {
                let range = b * size..(b + 1) * size;
                for i in range.clone() {
                    for j in (i + 1)..range.end {
                        if rng.random::<f64>() < spec.edge_prob {
                            set(&mut theta, i, j, spec.edge_value);
                        }
                    }
                }
            }
        }
    }
    Ok(theta)
}

/// Shifts the diagonal by `|lambda_min| + 0.1` when `lambda_min <= 0.05`.
pub fn make_pd(theta_raw: &DMatrix<f64>) -> Result<TrueNetwork> {
    linalg::check_symmetric(theta_raw, 1e-12)?;
    let min = linalg::min_eigenvalue(theta_raw);
    let mut theta = theta_raw.clone();
    if min <= PD_THRESHOLD {
        let shift = min.abs() + PD_MARGIN;
        for i in 0..theta.nrows() {
            theta[(i, i)] += shift;
        }
    }
    TrueNetwork::new(theta)
}

pub fn gen_graph(spec: &GraphSpec) -> Result<TrueNetwork> {
    make_pd(&raw_graph(spec)?)
}
