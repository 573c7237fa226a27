//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment and blank lines are
//! ignored. `preset` selects the starting point (`desk` or `full`)
//! wherever it appears, and every other key is applied on top of it in
//! order. Later entries win, which is how command-line overrides work.
//!
//! | key | meaning |
//! |---|---|
//! | `preset` | `desk` (small CPU model) or `full` (ViT-Base geometry) |
//! | `image_side`, `patch`, `dim`, `layers`, `heads`, `ff_mult` | encoder geometry |
//! | `attention_scale` | `model` (√D) or `head` (√(D/M)) |
//! | `aggregator`, `head_hidden` | temporal aggregator and head width |
//! | `frames`, `work_side`, `interpolate`, `midpoint` | clip preprocessing |
//! | `flow_smoothness`, `flow_iterations`, `flow_levels`, `flow_warps` | flow solver |
//! | `input`, `flow_scale` | encoder input format and flow normalization |
//! | `lr`, `min_lr`, `weight_decay`, `momentum`, `batch_size`, `epochs`, `seed` | training |
//! | `protocol` | `cde` or `sde:<dataset>` |

use std::fmt::Write as _;
use std::str::FromStr;

use crate::dataset::Dataset;
use crate::encoder::AttentionScale;
use crate::error::{Error, Result};
use crate::evaluation::ProtocolKind;
use crate::model::ModelConfig;
use crate::pipeline::PreprocessConfig;
use crate::preprocess::MidpointMode;
use crate::temporal::Aggregator;
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Full,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            _ => Err(Error::Config(format!("unknown preset {s:?} (expected desk or full)"))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Full => "full",
        }
    }
}

/// Everything a run needs apart from the data. The class count is not a
/// key: it comes from the protocol's label set (see [`Config::model`]).
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub preset: Preset,
    model: ModelConfig,
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    pub protocol: ProtocolKind,
}

impl Config {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Config {
                preset,
                model: ModelConfig::desk(Aggregator::Mean, 2),
                preprocess: PreprocessConfig::desk(),
                train: TrainConfig::with_epochs(100),
                protocol: ProtocolKind::Sde(Dataset::Synth),
            },
            Preset::Full => {
                let mut model = ModelConfig::desk(Aggregator::Lstm, 2);
                model.embed.image_side = 384;
                model.embed.patch = 16;
                model.embed.dim = 768;
                model.encoder.dim = 768;
                model.encoder.layers = 12;
                model.encoder.heads = 12;
                model.head_hidden = 768;
                Config {
                    preset,
                    model,
                    preprocess: PreprocessConfig {
                        frames: 11,
                        work_side: 384,
                        image_side: 384,
                        ..PreprocessConfig::desk()
                    },
                    // The epoch count is not published; 100 is a placeholder.
                    train: TrainConfig::with_epochs(100),
                    protocol: ProtocolKind::Cde,
                }
            }
        }
    }

    /// Model configuration for a protocol with `classes` classes.
    pub fn model(&self, classes: usize) -> ModelConfig {
        ModelConfig { classes, ..self.model }
    }

    pub fn aggregator(&self) -> Aggregator {
        self.model.aggregator
    }

    pub fn patch(&self) -> usize {
        self.model.embed.patch
    }

    /// Resolves `(key, value)` entries: the last `preset` entry picks the
    /// base, the rest apply in order.
    pub fn resolve<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let entries: Vec<_> = entries.into_iter().collect();
        let preset = match entries.iter().rev().find(|(k, _)| *k == "preset") {
            Some((_, v)) => v.parse()?,
            None => Preset::Desk,
        };
        let mut cfg = Config::preset(preset);
        for (k, v) in entries.iter().filter(|(k, _)| *k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses config text, then applies `overrides` (`key=value`).
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut entries = parse_entries(text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Config::resolve(entries.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Config::parse_with_overrides(text, &[])
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let p = &mut self.preprocess;
        let t = &mut self.train;
        match key {
            "image_side" => {
                let v = num(key, value)?;
                m.embed.image_side = v;
                p.image_side = v;
            }
            "patch" => m.embed.patch = num(key, value)?,
            "dim" => {
                let v = num(key, value)?;
                m.embed.dim = v;
                m.encoder.dim = v;
            }
            "layers" => m.encoder.layers = num(key, value)?,
            "heads" => m.encoder.heads = num(key, value)?,
            "ff_mult" => m.encoder.ff_mult = num(key, value)?,
            "attention_scale" => {
                m.encoder.scale = match value {
                    "model" => AttentionScale::Model,
                    "head" => AttentionScale::Head,
                    _ => return Err(bad(key, value, "model or head")),
                }
            }
            "aggregator" => m.aggregator = value.parse()?,
            "head_hidden" => m.head_hidden = num(key, value)?,
            "frames" => p.frames = num(key, value)?,
            "work_side" => p.work_side = num(key, value)?,
            "flow_smoothness" => p.flow.smoothness_weight = num(key, value)?,
            "flow_iterations" => p.flow.iterations = num(key, value)?,
            "flow_levels" => p.flow.pyramid_levels = num(key, value)?,
            "flow_warps" => p.flow.warps = num(key, value)?,
            "midpoint" => {
                p.midpoint = match value {
                    "blend" => MidpointMode::Blend,
                    "flow_warp" => MidpointMode::FlowWarp,
                    _ => return Err(bad(key, value, "blend or flow_warp")),
                }
            }
            "interpolate" => p.interpolate = num(key, value)?,
            "input" => {
                p.input = value.parse()?;
                m.embed.channels = p.input.channels();
            }
            "flow_scale" => p.scale = value.parse()?,
            "lr" => t.lr = num(key, value)?,
            "min_lr" => t.min_lr = num(key, value)?,
            "weight_decay" => t.weight_decay = num(key, value)?,
            "momentum" => t.momentum = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "protocol" => self.protocol = value.parse()?,
            "preset" => return Err(Error::Config("preset must be resolved before other keys".into())),
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model(2).validate()?;
        self.preprocess.validate()?;
        self.train.validate()?;
        if self.model.embed.channels != self.preprocess.input.channels() {
            return Err(Error::Config("encoder channels disagree with the input format".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value; parses back to `self`.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let p = &self.preprocess;
        let t = &self.train;
        let scale = match m.encoder.scale {
            AttentionScale::Model => "model",
            AttentionScale::Head => "head",
        };
        let midpoint = match p.midpoint {
            MidpointMode::Blend => "blend",
            MidpointMode::FlowWarp => "flow_warp",
        };
        let protocol = match self.protocol {
            ProtocolKind::Cde => "cde".to_string(),
            ProtocolKind::Sde(d) => format!("sde:{d}"),
        };
        let rows: [(&str, String); 28] = [
            ("preset", self.preset.name().into()),
            ("image_side", m.embed.image_side.to_string()),
            ("patch", m.embed.patch.to_string()),
            ("dim", m.embed.dim.to_string()),
            ("layers", m.encoder.layers.to_string()),
            ("heads", m.encoder.heads.to_string()),
            ("ff_mult", m.encoder.ff_mult.to_string()),
            ("attention_scale", scale.into()),
            ("aggregator", m.aggregator.name().into()),
            ("head_hidden", m.head_hidden.to_string()),
            ("frames", p.frames.to_string()),
            ("work_side", p.work_side.to_string()),
            ("flow_smoothness", p.flow.smoothness_weight.to_string()),
            ("flow_iterations", p.flow.iterations.to_string()),
            ("flow_levels", p.flow.pyramid_levels.to_string()),
            ("flow_warps", p.flow.warps.to_string()),
            ("midpoint", midpoint.into()),
            ("interpolate", p.interpolate.to_string()),
            ("input", p.input.name().into()),
            ("flow_scale", p.scale.to_string()),
            ("lr", t.lr.to_string()),
            ("min_lr", t.min_lr.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("momentum", t.momentum.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("epochs", t.epochs.to_string()),
            ("seed", t.seed.to_string()),
            ("protocol", protocol),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("{key}: invalid value {value:?} (expected {expected})"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

/// Splits config text into `(key, value)` pairs.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c.preset, Preset::Desk);
        assert_eq!(c.aggregator(), Aggregator::Mean);
        assert_eq!(c.model(3), ModelConfig::desk(Aggregator::Mean, 3));
        assert_eq!(c.preprocess, PreprocessConfig::desk());
        assert_eq!(c.train.lr, 1e-3);
        assert_eq!(c.train.batch_size, 4);
    }

    #[test]
    fn full_geometry() {
        let c = Config::parse("preset = full").unwrap();
        let m = c.model(3);
        assert_eq!(m.embed.num_patches(), 576);
        assert_eq!((m.dim(), m.encoder.layers, m.encoder.heads), (768, 12, 12));
        assert_eq!(m.aggregator, Aggregator::Lstm);
        assert_eq!(c.preprocess.frames, 11);
        assert_eq!(c.protocol, ProtocolKind::Cde);
    }

    #[test]
    fn text_round_trip() {
        let text = "# run\nlr = 0.01\naggregator = lstm  # temporal\ninput = raw\nprotocol = sde:CASME2\nflow_scale = 2.5\n";
        let c = Config::parse(text).unwrap();
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.model(2).embed.channels, 2);
        assert_eq!(c.protocol, ProtocolKind::Sde(Dataset::Casme2));
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
        assert_eq!(Config::parse(&Config::preset(Preset::Full).to_text()).unwrap(), Config::preset(Preset::Full));
    }

    #[test]
    fn overrides_win_and_preset_applies_first() {
        let c = Config::parse_with_overrides("epochs = 7\npreset = desk", &["epochs=9".into(), "preset=full".into()]).unwrap();
        assert_eq!(c.preset, Preset::Full);
        assert_eq!(c.train.epochs, 9);
    }

    #[test]
    fn diagnostics() {
        let err = Config::parse("lr 0.1").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        assert!(Config::parse("colour = red").unwrap_err().to_string().contains("colour"));
        assert!(Config::parse("epochs = -1").is_err());
        assert!(Config::parse("frames = 4").is_err());
        assert!(Config::parse("heads = 3").is_err());
        assert!(Config::parse_with_overrides("", &["lr".into()]).is_err());
    }
}
