//! Subcommand implementations. Each gets a [`Ctx`]: the parsed config,
//! its hash, the effective seed, the output directory, and the quiet
//! flag.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use insight::data::{self, Dataset};
use insight::model::SurrogateCheckpoint;

use crate::artifacts::Provenance;
use crate::config::RunConfig;

pub mod bench;
pub mod datagen;
pub mod eval;
pub mod gradcheck;
pub mod size;
pub mod sweep;
pub mod train;

pub struct Ctx {
    pub run: RunConfig,
    pub hash: String,
    pub seed: u64,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Ctx {
    pub fn prov(&self) -> Provenance {
        Provenance::new(&self.hash, self.seed)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn say(&self, text: &str) {
        if !self.quiet {
            println!("{text}");
        }
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    data::load_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

pub fn load_surrogate(path: &Path) -> Result<SurrogateCheckpoint> {
    SurrogateCheckpoint::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
}
