//! Flat key=value run configuration with command-line overrides.

use std::path::{Path, PathBuf};

/// Values a run can pick up from a config file; command-line flags take
/// precedence over file values, which take precedence over defaults.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub dataset_dir: Option<PathBuf>,
    pub dmax: Option<f64>,
    pub channels: Option<usize>,
    pub lr: Option<f64>,
    pub decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub checkpoint_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a config file. Unknown keys are rejected.
    pub fn parse_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| format!("line {}: invalid {what} `{value}`", lineno + 1);
            match key {
                "dataset_dir" => cfg.dataset_dir = Some(PathBuf::from(value)),
                "dmax" => cfg.dmax = Some(value.parse().map_err(|_| bad("dmax"))?),
                "channels" => cfg.channels = Some(value.parse().map_err(|_| bad("channels"))?),
                "lr" => cfg.lr = Some(value.parse().map_err(|_| bad("lr"))?),
                "decay" => cfg.decay = Some(value.parse().map_err(|_| bad("decay"))?),
                "batch_size" => {
                    cfg.batch_size = Some(value.parse().map_err(|_| bad("batch_size"))?)
                }
                "epochs" => cfg.epochs = Some(value.parse().map_err(|_| bad("epochs"))?),
                "seed" => cfg.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "checkpoint_path" => cfg.checkpoint_path = Some(PathBuf::from(value)),
                "output_dir" => cfg.output_dir = Some(PathBuf::from(value)),
                other => return Err(format!("line {}: unknown key `{other}`", lineno + 1)),
            }
        }
        Ok(cfg)
    }

    /// Overlays `other` (higher precedence) on top of `self`.
    pub fn overlay(mut self, other: RunConfig) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if other.$field.is_some() { self.$field = other.$field; })*
            };
        }
        take!(
            dataset_dir,
            dmax,
            channels,
            lr,
            decay,
            batch_size,
            epochs,
            seed,
            checkpoint_path,
            output_dir
        );
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let dir = std::env::temp_dir();
        let path = dir.join("densemapnet_cfg_test.cfg");
        std::fs::write(&path, "dmax=32\nchannels=3\nlr=0.001\n# comment\nseed=7\n").unwrap();
        let cfg = RunConfig::parse_file(&path).unwrap();
        assert_eq!(cfg.dmax, Some(32.0));
        assert_eq!(cfg.seed, Some(7));

        std::fs::write(&path, "drax=32\n").unwrap();
        let err = RunConfig::parse_file(&path).unwrap_err();
        assert!(err.contains("unknown key"), "{err}");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn overlay_prefers_new_values() {
        let base = RunConfig {
            dmax: Some(32.0),
            seed: Some(1),
            ..RunConfig::default()
        };
        let over = RunConfig {
            dmax: Some(64.0),
            ..RunConfig::default()
        };
        let merged = base.overlay(over);
        assert_eq!(merged.dmax, Some(64.0));
        assert_eq!(merged.seed, Some(1));
    }
}
