use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::simulate::{make_true_model, CausalPlacement, DegeneratePolicy, TrueModel};
use crate::{Error, Result};

/// Cells with `n·p` above this need an explicit opt-in.
pub const DESK_SCALE_MAX_NP: usize = 10_000_000;

/// A scalar or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<usize> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

impl From<usize> for OneOrMany {
    fn from(v: usize) -> Self {
        OneOrMany::One(v)
    }
}

impl From<Vec<usize>> for OneOrMany {
    fn from(v: Vec<usize>) -> Self {
        OneOrMany::Many(v)
    }
}

/// How the `n`, `p` and `m` lists combine into cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Cartesian product, `n` slowest and `m` fastest.
    #[default]
    Grid,
    /// Element-wise; length-1 lists are broadcast.
    Zip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    #[default]
    Snp,
    Gaussian,
}

fn default_replications() -> usize {
    100
}

fn default_degenerate() -> DegeneratePolicy {
    DegeneratePolicy::Resample
}

/// One JSON document describing a sweep. Exactly one of `h2_target` and
/// `gamma0` sets the signal strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: OneOrMany,
    pub p: OneOrMany,
    pub m: OneOrMany,
    #[serde(default)]
    pub sweep: SweepMode,
    pub sigma_eps_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h2_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default)]
    pub design_kind: DesignKind,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub emit_limits: bool,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub causal: CausalPlacement,
    #[serde(default = "default_degenerate")]
    pub degenerate: DegeneratePolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub n: usize,
    pub p: usize,
    pub m: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults: one cell `n = 500, p = 5000, m = 5000`,
    /// `σε² = 0.4`, `h² = 0.6`, 100 replications.
    pub fn desk_default(master_seed: u64) -> Self {
        Self {
            n: 500.into(),
            p: 5000.into(),
            m: 5000.into(),
            sweep: SweepMode::Grid,
            sigma_eps_sq: 0.4,
            h2_target: Some(0.6),
            gamma0: None,
            design_kind: DesignKind::Snp,
            replications: default_replications(),
            master_seed,
            output_path: None,
            emit_limits: false,
            mu: 0.0,
            causal: CausalPlacement::Leading,
            degenerate: default_degenerate(),
            threads: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.sigma_eps_sq > 0.0 && self.sigma_eps_sq.is_finite()) {
            return bad(format!("sigma_eps_sq {} must be positive", self.sigma_eps_sq));
        }
        match (self.h2_target, self.gamma0) {
            (Some(h), None) if !(h > 0.0 && h < 1.0) => return bad(format!("h2_target {h} outside (0, 1)")),
            (None, Some(g)) if !(g >= 0.0 && g.is_finite()) => return bad(format!("gamma0 {g} must be >= 0")),
            (Some(_), Some(_)) | (None, None) => return bad("set exactly one of h2_target and gamma0".into()),
            _ => {}
        }
        if !self.mu.is_finite() {
            return bad("mu must be finite".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        self.cells().map(|_| ())
    }

    /// The cells in run order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let (ns, ps, ms) = (self.n.values(), self.p.values(), self.m.values());
        if ns.is_empty() || ps.is_empty() || ms.is_empty() {
            return Err(Error::Config("n, p and m lists must be nonempty".into()));
        }
        let mut triples = Vec::new();
        match self.sweep {
            SweepMode::Grid => {
                for &n in &ns {
                    for &p in &ps {
                        for &m in &ms {
                            triples.push((n, p, m));
                        }
                    }
                }
            }
            SweepMode::Zip => {
                let len = ns.len().max(ps.len()).max(ms.len());
                let pick = |v: &[usize], i: usize| -> Result<usize> {
                    match v.len() {
                        1 => Ok(v[0]),
                        l if l == len => Ok(v[i]),
                        l => Err(Error::Config(format!("zip sweep: list of length {l}, expected 1 or {len}"))),
                    }
                };
                for i in 0..len {
                    triples.push((pick(&ns, i)?, pick(&ps, i)?, pick(&ms, i)?));
                }
            }
        }
        triples
            .into_iter()
            .enumerate()
            .map(|(index, (n, p, m))| {
                if n < 2 {
                    return Err(Error::Config(format!("cell {index}: n = {n} must be at least 2")));
                }
                if m == 0 || m > p {
                    return Err(Error::Config(format!("cell {index}: need 1 <= m <= p, got m={m}, p={p}")));
                }
                Ok(Cell { index, n, p, m })
            })
            .collect()
    }

    pub fn true_model(&self, cell: &Cell) -> Result<TrueModel> {
        let model = match (self.h2_target, self.gamma0) {
            (Some(h), _) => make_true_model(cell.p, cell.m, self.sigma_eps_sq, h)?,
            (None, Some(g)) => TrueModel::from_gamma0(cell.p, cell.m, self.sigma_eps_sq, g)?,
            (None, None) => return Err(Error::Config("set exactly one of h2_target and gamma0".into())),
        };
        Ok(model.with_mu(self.mu))
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// ignoring `output_path` and `threads`, which do not affect results.
    pub fn hash(&self) -> Result<String> {
        let canonical = Self { output_path: None, threads: None, ..self.clone() };
        let text = serde_json::to_string(&canonical)?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(hex::encode(&digest[..8]))
    }
}
