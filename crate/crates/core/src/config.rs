//! Flat `key=value` configuration maps.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::offgrid::{GridSpec, ModelKind, OffGridConfig};
use crate::ongrid::OnGridConfig;
use crate::train::{DatasetKind, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse `key=value` lines. Blank lines and lines starting with `#` are
    /// skipped; whitespace around keys and values is trimmed.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, found {line:?}"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            if map.0.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(map)
    }

    /// One `key=value` line per entry, sorted by key.
    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        self.0.insert(key.into(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let raw = self.raw(key).ok_or_else(|| Error::Config(format!("missing key {key:?}")))?;
        raw.parse()
            .map_err(|e| Error::Config(format!("bad value {raw:?} for {key:?}: {e}")))
    }

    /// Overwrite entries with those of `other`.
    pub fn merge(&mut self, other: &ConfigMap) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    /// Fail on any key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }
}

pub const TRAIN_KEYS: [&str; 7] = [
    "epochs",
    "tasks_per_epoch",
    "batch_size",
    "learning_rate",
    "seed",
    "dataset",
    "model",
];

impl TrainConfig {
    pub fn write_entries(&self, map: &mut ConfigMap) {
        map.set("epochs", self.epochs);
        map.set("tasks_per_epoch", self.tasks_per_epoch);
        map.set("batch_size", self.batch_size);
        map.set("learning_rate", self.learning_rate);
        map.set("seed", self.seed);
        map.set("dataset", self.dataset);
        map.set("model", self.model);
    }

    pub fn from_entries(map: &ConfigMap) -> Result<Self> {
        let cfg = TrainConfig {
            epochs: map.get("epochs")?,
            tasks_per_epoch: map.get("tasks_per_epoch")?,
            batch_size: map.get("batch_size")?,
            learning_rate: map.get("learning_rate")?,
            seed: map.get("seed")?,
            dataset: map.get::<DatasetKind>("dataset")?,
            model: map.get::<ModelKind>("model")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const OFFGRID_KEYS: [&str; 10] = [
    "points_per_unit",
    "margin",
    "self_channels",
    "fused_channels",
    "unet_base",
    "unet_levels",
    "kernel_size",
    "out_channels",
    "grid_self_channels",
    "normalize_decoder",
];

impl OffGridConfig {
    pub fn write_entries(&self, map: &mut ConfigMap) {
        map.set("points_per_unit", self.grid.points_per_unit);
        map.set("margin", self.grid.margin);
        map.set("self_channels", self.self_channels);
        map.set("fused_channels", self.fused_channels);
        map.set("unet_base", self.unet_base);
        map.set("unet_levels", self.unet_levels);
        map.set("kernel_size", self.kernel_size);
        map.set("out_channels", self.out_channels);
        map.set("grid_self_channels", self.grid_self_channels);
        map.set("normalize_decoder", self.normalize_decoder);
    }

    pub fn from_entries(map: &ConfigMap) -> Result<Self> {
        let cfg = OffGridConfig {
            grid: GridSpec {
                points_per_unit: map.get("points_per_unit")?,
                margin: map.get("margin")?,
            },
            self_channels: map.get("self_channels")?,
            fused_channels: map.get("fused_channels")?,
            unet_base: map.get("unet_base")?,
            unet_levels: map.get("unet_levels")?,
            kernel_size: map.get("kernel_size")?,
            out_channels: map.get("out_channels")?,
            grid_self_channels: map.get("grid_self_channels")?,
            normalize_decoder: map.get("normalize_decoder")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const ONGRID_KEYS: [&str; 8] = [
    "channels",
    "self_channels",
    "cross_channels",
    "target_channels",
    "kernel_size",
    "unet_base",
    "unet_levels",
    "out_channels",
];

impl OnGridConfig {
    pub fn write_entries(&self, map: &mut ConfigMap) {
        map.set("channels", self.channels);
        map.set("self_channels", self.self_channels);
        map.set("cross_channels", self.cross_channels);
        map.set("target_channels", self.target_channels);
        map.set("kernel_size", self.kernel_size);
        map.set("unet_base", self.unet_base);
        map.set("unet_levels", self.unet_levels);
        map.set("out_channels", self.out_channels);
    }

    pub fn from_entries(map: &ConfigMap) -> Result<Self> {
        let cfg = OnGridConfig {
            channels: map.get("channels")?,
            self_channels: map.get("self_channels")?,
            cross_channels: map.get("cross_channels")?,
            target_channels: map.get("target_channels")?,
            kernel_size: map.get("kernel_size")?,
            unet_base: map.get("unet_base")?,
            unet_levels: map.get("unet_levels")?,
            out_channels: map.get("out_channels")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
