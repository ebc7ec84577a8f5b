use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use sparsescene::condkernel::checkpoint::Checkpoint;
use sparsescene::condkernel::ToyWeights;
use sparsescene::stylekit::StyleDistribution;
use sparsescene::Vocabulary;

use crate::state::{Settings, DEFAULT_MAX_RES};

#[derive(Debug, Clone, Parser)]
#[command(name = "sparsescene-server", about = "HTTP API for sparse scene editing and previews")]
pub struct Config {
    /// Directory holding scenes, token files and the fitted distribution.
    #[arg(long, env = "SPARSESCENE_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Port to listen on (all interfaces).
    #[arg(long, env = "SPARSESCENE_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Vocabulary JSON: {"classes": [...], "attributes": [...]}.
    #[arg(long, env = "SPARSESCENE_VOCAB")]
    pub vocab: PathBuf,
    /// Toy generator checkpoint. Without it, previews use weights
    /// initialized from the request seed.
    #[arg(long, env = "SPARSESCENE_WEIGHTS")]
    pub weights: Option<PathBuf>,
    /// Style distribution JSON to start with.
    #[arg(long, env = "SPARSESCENE_DIST")]
    pub dist: Option<PathBuf>,
    /// Largest raster or preview resolution accepted.
    #[arg(long, env = "SPARSESCENE_MAX_RES", default_value_t = DEFAULT_MAX_RES)]
    pub max_res: u32,
}

impl Config {
    pub fn settings(&self) -> anyhow::Result<Settings> {
        let vocab = Vocabulary::from_json(
            &fs::read(&self.vocab).with_context(|| format!("reading {}", self.vocab.display()))?,
        )
        .with_context(|| format!("parsing {}", self.vocab.display()))?;
        let weights = match &self.weights {
            None => None,
            Some(p) => {
                let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                let ck = Checkpoint::from_bytes(&bytes).with_context(|| format!("parsing {}", p.display()))?;
                Some(ToyWeights::from_checkpoint(&ck).with_context(|| format!("loading {}", p.display()))?)
            }
        };
        let dist = match &self.dist {
            None => None,
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Some(
                    StyleDistribution::from_json(&text, &vocab.classes, &vocab.attributes)
                        .with_context(|| format!("parsing {}", p.display()))?,
                )
            }
        };
        let mut s = Settings::new(&self.data_dir, vocab);
        s.weights = weights;
        s.dist = dist;
        s.max_res = self.max_res;
        Ok(s)
    }
}
