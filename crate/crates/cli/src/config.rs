//! Resolving a `ModelConfig` from a preset, an optional TOML file and flags.

use std::fs;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use kws_core::model::ModelConfig;
use kws_core::{FeatureKind, SdcConfig};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-size model.
    Full,
    /// Reduced model that trains on a single CPU core.
    Desk,
}

impl Preset {
    fn config(self) -> ModelConfig {
        match self {
            Preset::Full => ModelConfig::default(),
            Preset::Desk => ModelConfig::desk(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML file with model, `[front_end]` and `[sdc]` settings.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Base values for keys the config file leaves out.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long)]
    pub feature: Option<FeatureKind>,
    /// SDC parameters as N-d-p-k, e.g. 40-1-3-8. N also sets the mel band count.
    #[arg(long)]
    pub sdc: Option<SdcConfig>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Keys in the file override the preset; flags override both.
pub fn resolve(args: &ConfigArgs) -> Result<ModelConfig> {
    let mut table: Table = toml::from_str(&args.preset.config().to_toml()).expect("preset is valid TOML");
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        merge(&mut table, file);
    }
    let mut cfg = ModelConfig::from_toml(&toml::to_string(&table)?).context("resolving configuration")?;
    if let Some(kind) = args.feature {
        cfg.feature = kind;
    }
    if let Some(sdc) = args.sdc {
        cfg.sdc = sdc;
        cfg.front_end.num_mel = sdc.n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().context("resolving configuration")?;
    log::info!("resolved configuration:\n{}", cfg.to_toml());
    Ok(cfg)
}
