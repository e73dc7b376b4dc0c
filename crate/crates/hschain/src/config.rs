//! Run configuration shared by fit/score/stream. Precedence: CLI flags
//! override config-file values override defaults.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Projection dimension K.
    pub projection_dims: usize,
    /// Ensemble size M.
    pub chains: usize,
    /// Chain depth L.
    pub levels: usize,
    /// Count-min sketch rows r and columns w.
    pub cms_rows: usize,
    pub cms_cols: usize,
    /// Bernoulli subsampling rate for chain fitting, in (0, 1].
    pub sample_rate: f64,
    /// Assumed outlier fraction used to binarize a ranking; optional.
    pub contamination: Option<f64>,
    pub run_seed: u64,
    pub threads: usize,
    /// Number of data partitions; 0 means threads * 4.
    pub partitions: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            projection_dims: 50,
            chains: 100,
            levels: 20,
            cms_rows: 10,
            cms_cols: 100,
            sample_rate: 1.0,
            contamination: None,
            run_seed: 0,
            threads: std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1),
            partitions: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k", self.projection_dims),
            ("chains", self.chains),
            ("levels", self.levels),
            ("rows", self.cms_rows),
            ("cols", self.cms_cols),
            ("threads", self.threads),
        ] {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::Config("sample_rate must be in (0, 1]".into()));
        }
        if let Some(c) = self.contamination {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::Config("contamination must be in (0, 1)".into()));
            }
        }
        Ok(())
    }

    pub fn effective_partitions(&self) -> usize {
        if self.partitions == 0 {
            self.threads * 4
        } else {
            self.partitions
        }
    }

    /// Apply `key = value` pairs from a config file over the current values.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key=value", path.display(), lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::Config(format!("{}:{}: bad {what} value {value:?}", path.display(), lineno + 1))
            };
            match key {
                "k" => self.projection_dims = value.parse().map_err(|_| bad("k"))?,
                "chains" => self.chains = value.parse().map_err(|_| bad("chains"))?,
                "levels" => self.levels = value.parse().map_err(|_| bad("levels"))?,
                "rows" => self.cms_rows = value.parse().map_err(|_| bad("rows"))?,
                "cols" => self.cms_cols = value.parse().map_err(|_| bad("cols"))?,
                "sample_rate" => self.sample_rate = value.parse().map_err(|_| bad("sample_rate"))?,
                "contamination" => {
                    self.contamination = Some(value.parse().map_err(|_| bad("contamination"))?)
                }
                "seed" => self.run_seed = value.parse().map_err(|_| bad("seed"))?,
                "threads" => self.threads = value.parse().map_err(|_| bad("threads"))?,
                "partitions" => self.partitions = value.parse().map_err(|_| bad("partitions"))?,
                other => {
                    return Err(Error::Config(format!(
                        "{}:{}: unknown key {other:?}",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Ok(())
    }
}
