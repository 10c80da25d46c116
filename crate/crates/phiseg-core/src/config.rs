//! Training configuration and its text format: `key = value` lines under
//! `[model]`, `[train]`, `[data]`, `[loss]`, `[filter]` sections, `#`
//! comments, unknown keys rejected. Serialization emits every key, so the
//! file doubles as the documentation of the defaults.

use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::model::EncoderSpec;
use crate::spectral::{FilterKind, FilterSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    // [model]
    pub levels: usize,
    pub channels: Vec<usize>,
    pub in_channels: usize,
    // [train]
    pub lr0: f64,
    pub t_max: usize,
    pub eta_min: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub grad_clip: f64,
    // [data]
    pub augment: bool,
    pub multiscale: bool,
    // [loss]
    pub alpha: f64,
    pub beta: f64,
    // [filter]
    pub filter_kind: FilterKind,
    pub gamma: f64,
    pub gamma_square_weight: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            levels: 5,
            channels: vec![8, 16, 32, 64, 128],
            in_channels: 1,
            lr0: 1e-4,
            t_max: 25,
            eta_min: 1e-7,
            epochs: 30,
            batch_size: 4,
            seed: 42,
            grad_clip: 5.0,
            augment: true,
            multiscale: true,
            alpha: 0.01,
            beta: 1.0,
            filter_kind: FilterKind::Lowpass,
            gamma: 3.0,
            gamma_square_weight: true,
        }
    }
}

fn fmt_channels(ch: &[usize]) -> String {
    ch.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn encoder_spec(&self) -> EncoderSpec {
        EncoderSpec {
            levels: self.levels,
            channels: self.channels.clone(),
            in_channels: self.in_channels,
        }
    }

    pub fn filter_spec(&self) -> FilterSpec {
        FilterSpec {
            kind: self.filter_kind,
            gamma: self.gamma,
            gamma_square_weight: self.gamma_square_weight,
        }
    }

    pub fn loss_weights(&self) -> Result<LossWeights> {
        LossWeights::new(self.alpha, self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_spec().validate()?;
        self.loss_weights()?;
        let positive = [
            ("train.lr0", self.lr0),
            ("train.eta_min", self.eta_min),
            ("filter.gamma", self.gamma),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidArgument {
                    op: "config",
                    message: format!("{name} must be positive and finite, got {v}"),
                });
            }
        }
        if self.t_max == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument {
                op: "config",
                message: "train.t_max and train.batch_size must be positive".into(),
            });
        }
        if self.grad_clip < 0.0 {
            return Err(Error::InvalidArgument {
                op: "config",
                message: format!("train.grad_clip must be >= 0 (0 disables), got {}", self.grad_clip),
            });
        }
        Ok(())
    }

    /// Canonical text form; `parse` inverts it exactly.
    pub fn serialize(&self) -> String {
        format!(
            "[model]\n\
             levels = {}\n\
             channels = {}\n\
             in_channels = {}\n\
             \n\
             [train]\n\
             lr0 = {}\n\
             t_max = {}\n\
             eta_min = {}\n\
             epochs = {}\n\
             batch_size = {}\n\
             seed = {}\n\
             grad_clip = {}\n\
             \n\
             [data]\n\
             augment = {}\n\
             multiscale = {}\n\
             \n\
             [loss]\n\
             alpha = {}\n\
             beta = {}\n\
             \n\
             [filter]\n\
             kind = {}\n\
             gamma = {}\n\
             gamma_square_weight = {}\n",
            self.levels,
            fmt_channels(&self.channels),
            self.in_channels,
            self.lr0,
            self.t_max,
            self.eta_min,
            self.epochs,
            self.batch_size,
            self.seed,
            self.grad_clip,
            self.augment,
            self.multiscale,
            self.alpha,
            self.beta,
            self.filter_kind.as_str(),
            self.gamma,
            self.gamma_square_weight,
        )
    }

    /// Parse the text form, starting from the defaults: a file only needs
    /// the keys it overrides.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = lineno + 1;
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                if !["model", "train", "data", "loss", "filter"].contains(&name) {
                    return Err(Error::Config {
                        line: lineno,
                        message: format!("unknown section [{name}]"),
                    });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Config {
                line: lineno,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set_key(&section, key.trim(), value.trim(), lineno)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one `section.key=value` override (the CLI --set flag).
    pub fn apply_set(&mut self, assignment: &str) -> Result<()> {
        let (path, value) = assignment.split_once('=').ok_or(Error::Config {
            line: 0,
            message: format!("override must look like section.key=value, got `{assignment}`"),
        })?;
        let (section, key) = path.trim().split_once('.').ok_or(Error::Config {
            line: 0,
            message: format!("override key must be section.key, got `{path}`"),
        })?;
        self.set_key(section, key, value.trim(), 0)?;
        self.validate()
    }

    fn set_key(&mut self, section: &str, key: &str, value: &str, line: usize) -> Result<()> {
        let bad_value = |what: &str| Error::Config {
            line,
            message: format!("cannot parse `{value}` as {what} for {section}.{key}"),
        };
        macro_rules! parse_as {
            ($ty:ty, $what:expr) => {
                value.parse::<$ty>().map_err(|_| bad_value($what))?
            };
        }
        match (section, key) {
            ("model", "levels") => self.levels = parse_as!(usize, "an integer"),
            ("model", "channels") => {
                let mut out = Vec::new();
                for part in value.split(',') {
                    out.push(part.trim().parse::<usize>().map_err(|_| bad_value("a channel list"))?);
                }
                self.channels = out;
            }
            ("model", "in_channels") => self.in_channels = parse_as!(usize, "an integer"),
            ("train", "lr0") => self.lr0 = parse_as!(f64, "a float"),
            ("train", "t_max") => self.t_max = parse_as!(usize, "an integer"),
            ("train", "eta_min") => self.eta_min = parse_as!(f64, "a float"),
            ("train", "epochs") => self.epochs = parse_as!(usize, "an integer"),
            ("train", "batch_size") => self.batch_size = parse_as!(usize, "an integer"),
            ("train", "seed") => self.seed = parse_as!(u64, "an integer"),
            ("train", "grad_clip") => self.grad_clip = parse_as!(f64, "a float"),
            ("data", "augment") => self.augment = parse_as!(bool, "a bool"),
            ("data", "multiscale") => self.multiscale = parse_as!(bool, "a bool"),
            ("loss", "alpha") => self.alpha = parse_as!(f64, "a float"),
            ("loss", "beta") => self.beta = parse_as!(f64, "a float"),
            ("filter", "kind") => {
                self.filter_kind = FilterKind::parse(value).ok_or_else(|| bad_value(
                    "a filter kind (lowpass|leaky|highpass|none)",
                ))?
            }
            ("filter", "gamma") => self.gamma = parse_as!(f64, "a float"),
            ("filter", "gamma_square_weight") => self.gamma_square_weight = parse_as!(bool, "a bool"),
            _ => {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key `{section}.{key}`"),
                })
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialize_parse_roundtrip() {
        let cfg = TrainConfig::default();
        let text = cfg.serialize();
        let back = TrainConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);

        let mut modified = cfg.clone();
        modified.alpha = 1.0;
        modified.eta_min = 3.5e-9;
        modified.filter_kind = FilterKind::Highpass;
        modified.channels = vec![4, 8];
        modified.levels = 2;
        let back = TrainConfig::parse(&modified.serialize()).unwrap();
        assert_eq!(back, modified);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "# top comment\n[loss]\nalpha = 0.5 # tail comment\n\nbeta = 2\n";
        let cfg = TrainConfig::parse(text).unwrap();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.beta, 2.0);
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        assert!(matches!(
            TrainConfig::parse("[loss]\ngamma = 1\n"),
            Err(Error::Config { line: 2, .. })
        ));
        assert!(matches!(
            TrainConfig::parse("[optimizer]\n"),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(TrainConfig::parse("[train]\nlr0 == 3\n").is_err());
    }

    #[test]
    fn set_overrides_win() {
        let mut cfg = TrainConfig::parse("[loss]\nalpha = 0.5\n").unwrap();
        cfg.apply_set("loss.alpha=1.0").unwrap();
        assert_eq!(cfg.alpha, 1.0);
        cfg.apply_set("filter.kind=none").unwrap();
        assert_eq!(cfg.filter_kind, FilterKind::None);
        assert!(cfg.apply_set("loss.delta=1").is_err());
        assert!(cfg.apply_set("loss.alpha").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        assert!(TrainConfig::parse("[train]\nlr0 = 0\n").is_err());
        assert!(TrainConfig::parse("[model]\nchannels = 8,16\n").is_err()); // len != levels
        let ok = TrainConfig::parse("[model]\nlevels = 2\nchannels = 8,16\n").unwrap();
        assert_eq!(ok.levels, 2);
    }
}
