use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cgan::CganConfig;
use crate::channel::DatasetSpec;
use crate::error::{Error, Result};
use crate::esprit::EspritConfig;
use crate::lstm::{PhaseLoss, PhaseTrainConfig};
use crate::nn::AdamConfig;
use crate::preprocess::{LabelSource, ProfileConfig, SnrDomain};

/// Which part of the data a stage uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    /// The samples the generator was trained on.
    CganTrain,
    /// Everything else.
    HeldOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Generator training samples drawn from each dataset.
    pub cgan_train_per_dataset: usize,
    pub lstm_train: Subset,
    pub evaluation: Subset,
    /// Caps the per-epoch generator validation set (balanced over datasets).
    pub cgan_val_limit: Option<usize>,
    /// Caps the evaluation set (balanced over datasets).
    pub evaluation_limit: Option<usize>,
}

/// How per-antenna time-domain errors are pooled per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NseDomain {
    /// NSE of every antenna's profiled response, averaged.
    #[default]
    PerAntenna,
    /// One NSE over all antennas together.
    WholeMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    /// Seeds the splits and all measurement noise.
    pub seed: u64,
    pub datasets: Vec<DatasetSpec>,
    pub split: SplitConfig,
    pub profile: ProfileConfig,
    pub sequence_seed: u64,
    pub snr_domain: SnrDomain,
    pub labels: LabelSource,
    pub cgan: CganConfig,
    pub lstm: PhaseTrainConfig,
    pub esprit: EspritConfig,
    pub run_esprit: bool,
    pub nse_domain: NseDomain,
    /// Relative paths resolve against the output root.
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// CPU-sized run: 64 training and 32 test channels, 10 epochs per network.
    pub fn desk() -> Self {
        let mut cgan = CganConfig {
            epochs: 10,
            seed: 11,
            ..Default::default()
        };
        cgan.init.init_std = 0.02;
        cgan.adam.lr = 1e-3;
        let mut lstm = PhaseTrainConfig {
            epochs: 10,
            batch_size: 8,
            adam: AdamConfig {
                lr: 1e-2,
                ..Default::default()
            },
            loss: PhaseLoss::WrappedMse,
            seed: 12,
            ..Default::default()
        };
        lstm.net.residual = true;
        Self {
            name: "desk".into(),
            seed: 10,
            datasets: vec![DatasetSpec::standard(3, 48, 1), DatasetSpec::standard(5, 48, 2)],
            split: SplitConfig {
                cgan_train_per_dataset: 32,
                lstm_train: Subset::CganTrain,
                evaluation: Subset::HeldOut,
                cgan_val_limit: None,
                evaluation_limit: None,
            },
            profile: ProfileConfig::default(),
            sequence_seed: 13,
            snr_domain: SnrDomain::ProfiledWindow,
            labels: LabelSource::Noiseless,
            cgan,
            lstm,
            esprit: EspritConfig::default(),
            run_esprit: true,
            nse_domain: NseDomain::PerAntenna,
            output_dir: "desk".into(),
        }
    }

    /// Full-size run: two datasets of 1500 channels, 600 generator training
    /// samples, 150 generator and 50 phase-network epochs. Takes days on a CPU.
    pub fn full() -> Self {
        Self {
            name: "full".into(),
            seed: 20,
            datasets: vec![DatasetSpec::standard(3, 1500, 1), DatasetSpec::standard(5, 1500, 2)],
            split: SplitConfig {
                cgan_train_per_dataset: 300,
                lstm_train: Subset::HeldOut,
                evaluation: Subset::CganTrain,
                cgan_val_limit: Some(64),
                evaluation_limit: None,
            },
            profile: ProfileConfig::default(),
            sequence_seed: 23,
            snr_domain: SnrDomain::ProfiledWindow,
            labels: LabelSource::Noiseless,
            cgan: CganConfig {
                seed: 21,
                ..Default::default()
            },
            lstm: PhaseTrainConfig {
                seed: 22,
                ..Default::default()
            },
            esprit: EspritConfig::default(),
            run_esprit: true,
            nse_domain: NseDomain::PerAntenna,
            output_dir: "full".into(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(Error::Config(format!("unknown preset {other:?}, expected desk or full"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("experiment needs at least one dataset".into()));
        }
        let first = &self.datasets[0];
        for d in &self.datasets {
            d.validate()?;
            if (d.num_antennas, d.num_subcarriers, d.spacing, d.convention)
                != (first.num_antennas, first.num_subcarriers, first.spacing, first.convention)
            {
                return Err(Error::Config("datasets must share array and subcarrier layout".into()));
            }
            if d.num_samples <= self.split.cgan_train_per_dataset {
                return Err(Error::Config(format!(
                    "dataset with {} samples leaves nothing after {} generator training samples",
                    d.num_samples, self.split.cgan_train_per_dataset
                )));
            }
        }
        if self.split.cgan_train_per_dataset == 0 {
            return Err(Error::Config("generator needs training samples".into()));
        }
        if self.split.cgan_val_limit == Some(0) || self.split.evaluation_limit == Some(0) {
            return Err(Error::Config("subset limits must be positive".into()));
        }
        self.profile.validate(first.num_subcarriers)?;
        self.cgan.validate()?;
        self.lstm.adam.validate()?;
        if self.lstm.batch_size == 0 {
            return Err(Error::Config("phase network batch size must be positive".into()));
        }
        if self.esprit.subarray_len > first.num_subcarriers {
            return Err(Error::Config("ESPRIT subarray longer than the band".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Output directory under `root`.
    pub fn output_path(&self, root: &Path) -> PathBuf {
        if self.output_dir.is_absolute() {
            self.output_dir.clone()
        } else {
            root.join(&self.output_dir)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [ExperimentConfig::desk(), ExperimentConfig::full()] {
            cfg.validate().unwrap();
            assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
        let full = ExperimentConfig::full();
        assert_eq!(full.datasets.iter().map(|d| d.num_samples).sum::<usize>(), 3000);
        assert_eq!(2 * full.split.cgan_train_per_dataset, 600);
        assert_eq!((full.cgan.epochs, full.lstm.epochs), (150, 50));
        let desk = ExperimentConfig::desk();
        assert_eq!(2 * desk.split.cgan_train_per_dataset, 64);
        assert_eq!(desk.datasets.iter().map(|d| d.num_samples).sum::<usize>() - 64, 32);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ExperimentConfig::desk();
        cfg.split.cgan_train_per_dataset = 48;
        assert!(cfg.validate().unwrap_err().is_config());
        let mut cfg = ExperimentConfig::desk();
        cfg.datasets[1].num_subcarriers = 600;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_json("{").is_err());
        assert!(ExperimentConfig::preset("huge").is_err());
    }
}
