use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, NseDomain, Subset};
use super::{export_report, nse, Method, NseReport};
use crate::cgan::{train_cgan, write_history_csv, Cgan, CganSample, EpochRecord};
use crate::channel::{
    add_awgn, add_noise_with_variance, expand_zero_rows, full_channel, measured_rows, sample_params, ArrayGeometry,
    ChannelMatrix, MultipathParams,
};
use crate::error::{Error, Result};
use crate::esprit::{self, EspritEstimate};
use crate::lstm::{train_phase_net, write_phase_history_csv, PhaseEpoch, PhaseNet};
use crate::preprocess::{
    build_lstm_inputs, chain_noise_variance, combine_mag_phase, gen_sequence, magnitude_of, mixed_chain, CirSource,
    MixingSequence, PhaseChains, PhaseSample,
};
use crate::rng;

pub const DATASET_FILE: &str = "dataset.json";
pub const CGAN_CHECKPOINT: &str = "cgan.ckpt";
pub const CGAN_HISTORY: &str = "cgan_history.csv";
pub const LSTM_CHECKPOINT: &str = "lstm.ckpt";
pub const LSTM_HISTORY: &str = "lstm_history.csv";
pub const ESPRIT_ESTIMATES: &str = "esprit_estimates.csv";
pub const REPORT_DIR: &str = "report";

/// Multipath parameters of one channel. Channels and measurement noise are
/// regenerated from these and the experiment seed on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub dataset: usize,
    pub params: MultipathParams,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    name: String,
    samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub samples: Vec<SampleRecord>,
    cgan_train: Vec<usize>,
    held_out: Vec<usize>,
}

/// Round-robin merge so that every prefix is balanced over datasets.
fn interleave(groups: Vec<Vec<usize>>) -> Vec<usize> {
    let longest = groups.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest).flat_map(|i| groups.iter().filter_map(move |g| g.get(i).copied())).collect()
}

impl Experiment {
    pub fn generate(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut samples = Vec::new();
        for (d, spec) in config.datasets.iter().enumerate() {
            for i in 0..spec.num_samples {
                let mut r = rng::stream(spec.seed, i as u64);
                samples.push(SampleRecord {
                    id: samples.len(),
                    dataset: d,
                    params: sample_params(spec, &mut r),
                });
            }
        }
        Self::with_samples(config, samples)
    }

    fn with_samples(config: ExperimentConfig, samples: Vec<SampleRecord>) -> Result<Self> {
        let mut train = Vec::new();
        let mut rest = Vec::new();
        for d in 0..config.datasets.len() {
            let mut ids: Vec<usize> = samples.iter().filter(|s| s.dataset == d).map(|s| s.id).collect();
            if ids.len() != config.datasets[d].num_samples {
                return Err(Error::Format(format!(
                    "dataset {d} holds {} samples, config expects {}",
                    ids.len(),
                    config.datasets[d].num_samples
                )));
            }
            rand::seq::SliceRandom::shuffle(
                ids.as_mut_slice(),
                &mut rng::stream(rng::derive(config.seed, "split"), d as u64),
            );
            let k = config.split.cgan_train_per_dataset;
            rest.push(ids.split_off(k));
            train.push(ids);
        }
        Ok(Self {
            config,
            samples,
            cgan_train: interleave(train),
            held_out: interleave(rest),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = DatasetFile {
            name: self.config.name.clone(),
            samples: self.samples.clone(),
        };
        let json = serde_json::to_string(&file).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(config: ExperimentConfig, path: &Path) -> Result<Self> {
        config.validate()?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: DatasetFile =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if file.name != config.name {
            return Err(Error::Config(format!(
                "{} was generated for experiment {:?}, not {:?}",
                path.display(),
                file.name,
                config.name
            )));
        }
        if file.samples.iter().enumerate().any(|(i, s)| s.id != i || s.dataset >= config.datasets.len()) {
            return Err(Error::Format(format!("{}: inconsistent sample ids", path.display())));
        }
        Self::with_samples(config, file.samples)
    }

    pub fn subset(&self, s: Subset) -> &[usize] {
        match s {
            Subset::CganTrain => &self.cgan_train,
            Subset::HeldOut => &self.held_out,
        }
    }

    /// Evaluation ids after the configured limit.
    pub fn evaluation_ids(&self) -> &[usize] {
        let ids = self.subset(self.config.split.evaluation);
        &ids[..self.config.split.evaluation_limit.map_or(ids.len(), |n| n.min(ids.len()))]
    }

    fn reference(&self) -> &crate::channel::DatasetSpec {
        &self.config.datasets[0]
    }

    pub fn geometry(&self) -> ArrayGeometry {
        self.reference().geometry().expect("validated geometry")
    }

    pub fn num_paths(&self, id: usize) -> usize {
        self.samples[id].params.len()
    }

    pub fn channel(&self, id: usize) -> ChannelMatrix {
        full_channel(&self.samples[id].params, &self.geometry(), self.reference().num_subcarriers)
    }

    /// Noisy full-resolution rows `H_c`.
    pub fn measured(&self, id: usize, h: &ChannelMatrix) -> ChannelMatrix {
        let spec = &self.config.datasets[self.samples[id].dataset];
        let mut r = rng::stream(rng::derive(self.config.seed, "measured"), id as u64);
        add_awgn(&measured_rows(h, spec.convention), spec.snr_db, &mut r)
    }

    /// `H + Z` for the 1-bit chain, with noise independent of `H_c`.
    pub fn chain_measurement(&self, id: usize, h: &ChannelMatrix) -> Result<ChannelMatrix> {
        let spec = &self.config.datasets[self.samples[id].dataset];
        let var = chain_noise_variance(h, &self.config.profile, spec.snr_db, self.config.snr_domain)?;
        let mut r = rng::stream(rng::derive(self.config.seed, "chain"), id as u64);
        Ok(add_noise_with_variance(h, var, &mut r))
    }

    pub fn sequence(&self) -> MixingSequence {
        gen_sequence(self.config.profile.window, self.config.sequence_seed)
    }

    pub fn cgan_sample(&self, id: usize, with_label: bool) -> Result<CganSample> {
        let h = self.channel(id);
        let hce = expand_zero_rows(&self.measured(id, &h), self.reference().convention);
        CganSample::new(&hce, with_label.then_some(&h), self.config.cgan.scale_factor)
    }

    pub fn cgan_samples(&self, ids: &[usize], with_label: bool) -> Result<Vec<CganSample>> {
        ids.iter().map(|&id| self.cgan_sample(id, with_label)).collect()
    }

    /// Time-domain signals of one channel given its generator estimate.
    pub fn phase_chains(&self, id: usize, generated: &ChannelMatrix) -> Result<PhaseChains> {
        let h = self.channel(id);
        let noisy = self.chain_measurement(id, &h)?;
        build_lstm_inputs(generated, &h, &noisy, &self.sequence(), &self.config.profile, self.config.labels)
    }
}

/// Generator estimates for `ids`, inferred in small batches.
pub fn generate_channels(exp: &Experiment, model: &mut Cgan, ids: &[usize]) -> Result<Vec<ChannelMatrix>> {
    let mut out = Vec::with_capacity(ids.len());
    for chunk in ids.chunks(16) {
        out.extend(model.infer(&exp.cgan_samples(chunk, false)?)?);
    }
    Ok(out)
}

fn atomic_save(path: &Path, save: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    save(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Trains the generator on the training subset, checkpointing after every
/// epoch into `dir`.
pub fn train_cgan_stage(
    exp: &Experiment,
    dir: &Path,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(Cgan, Vec<EpochRecord>)> {
    let mut run = || -> Result<_> {
        let train = exp.cgan_samples(exp.subset(Subset::CganTrain), true)?;
        let held = exp.subset(Subset::HeldOut);
        let n_val = exp.config.split.cgan_val_limit.map_or(held.len(), |n| n.min(held.len()));
        let val = exp.cgan_samples(&held[..n_val], true)?;
        info!("training generator on {} samples, validating on {}", train.len(), val.len());
        let mut history = Vec::new();
        train_cgan(&train, &val, &exp.config.cgan, |rec, model| {
            history.push(rec.clone());
            atomic_save(&dir.join(CGAN_CHECKPOINT), |p| model.save(p, rec.epoch))?;
            write_history_csv(&dir.join(CGAN_HISTORY), &history)?;
            progress(rec);
            Ok(())
        })
    };
    run().map_err(|e| e.in_stage("train-cgan"))
}

/// Phase-network sequences (one per antenna) for `ids`.
pub fn phase_samples(exp: &Experiment, ids: &[usize], generated: &[ChannelMatrix]) -> Result<Vec<PhaseSample>> {
    let mut out = Vec::with_capacity(ids.len() * exp.reference().num_antennas);
    for (&id, g) in ids.iter().zip(generated) {
        out.extend(exp.phase_chains(id, g)?.samples);
    }
    Ok(out)
}

pub fn train_lstm_stage(exp: &Experiment, cgan: &mut Cgan, dir: &Path) -> Result<(PhaseNet, Vec<PhaseEpoch>)> {
    let mut run = || -> Result<_> {
        let train_ids = exp.subset(exp.config.split.lstm_train);
        let train = phase_samples(exp, train_ids, &generate_channels(exp, cgan, train_ids)?)?;
        let val_ids = exp.evaluation_ids();
        let val = phase_samples(exp, val_ids, &generate_channels(exp, cgan, val_ids)?)?;
        info!("training phase network on {} sequences", train.len());
        let (net, history) = train_phase_net(&train, &val, &exp.config.lstm)?;
        atomic_save(&dir.join(LSTM_CHECKPOINT), |p| net.save(p, exp.config.lstm.epochs))?;
        write_phase_history_csv(&dir.join(LSTM_HISTORY), &history)?;
        Ok((net, history))
    };
    run().map_err(|e| e.in_stage("train-lstm"))
}

pub type EspritResults = BTreeMap<usize, std::result::Result<EspritEstimate, String>>;

/// ESPRIT on the noisy full-resolution rows with the true model order.
/// Per-sample failures are kept, not raised.
pub fn esprit_stage(exp: &Experiment, ids: &[usize], dir: Option<&Path>) -> Result<EspritResults> {
    let run = || -> Result<_> {
        let geom = exp.geometry().constrained(exp.reference().convention)?;
        let mut out = BTreeMap::new();
        for &id in ids {
            let hc = exp.measured(id, &exp.channel(id));
            let res = esprit::estimate(&hc, exp.num_paths(id), &geom, &exp.config.esprit);
            if let Err(e) = &res {
                warn!("ESPRIT failed on sample {id}: {e}");
            }
            out.insert(id, res.map_err(|e| e.to_string()));
        }
        if let Some(dir) = dir {
            let ok: Vec<(usize, EspritEstimate)> =
                out.iter().filter_map(|(&id, r)| r.as_ref().ok().map(|e| (id, e.clone()))).collect();
            esprit::write_estimates_csv(&dir.join(ESPRIT_ESTIMATES), &ok)?;
        }
        Ok(out)
    };
    run().map_err(|e| e.in_stage("run-esprit"))
}

/// Per-sample NSE of profiled responses against the noiseless ones.
pub fn chain_nse(truth: &[Vec<Complex64>], estimate: &[Vec<Complex64>], domain: NseDomain) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::Shape(format!("{} reference and {} estimated rows", truth.len(), estimate.len())));
    }
    match domain {
        NseDomain::PerAntenna => {
            let mut total = 0.0;
            for (t, e) in truth.iter().zip(estimate) {
                total += nse(t, e)?;
            }
            Ok(total / truth.len() as f64)
        }
        NseDomain::WholeMatrix => nse(&truth.concat(), &estimate.concat()),
    }
}

/// Computes every method's NSE on `ids`. `generated[k]` is the generator
/// estimate of `ids[k]`; ESPRIT columns are filled from `esprit` when given.
pub fn evaluate_stage(
    exp: &Experiment,
    ids: &[usize],
    generated: &[ChannelMatrix],
    net: &PhaseNet,
    esprit: Option<&EspritResults>,
) -> Result<NseReport> {
    let run = || -> Result<_> {
        if generated.len() != ids.len() {
            return Err(Error::Shape(format!("{} estimates for {} samples", generated.len(), ids.len())));
        }
        let domain = exp.config.nse_domain;
        let full_geom = exp.geometry();
        let n_sub = exp.reference().num_subcarriers;
        let mut report = NseReport::new();
        for (&id, g) in ids.iter().zip(generated) {
            let chains = exp.phase_chains(id, g)?;
            let taps = |c: &[crate::preprocess::ProfiledCir]| c.iter().map(|p| p.taps.clone()).collect::<Vec<_>>();
            let truth = taps(&chains.truth);
            let gen = taps(&chains.generated);
            let mut combined = Vec::with_capacity(gen.len());
            for (s, g) in chains.samples.iter().zip(&gen) {
                combined.push(combine_mag_phase(&magnitude_of(g), &net.refine(&s.inputs)?)?);
            }
            let mut row = vec![
                (Method::Measurement, Some(chain_nse(&truth, &taps(&chains.noisy), domain)?)),
                (Method::Cgan, Some(chain_nse(&truth, &gen, domain)?)),
                (Method::CganLstm, Some(chain_nse(&truth, &combined, domain)?)),
            ];
            let paths = exp.num_paths(id);
            if let (Some(results), Some(m)) = (esprit, Method::esprit(paths)) {
                match results.get(&id) {
                    Some(Ok(est)) => {
                        let rec = esprit::reconstruct_channel(est, &full_geom, n_sub);
                        let est_chain = mixed_chain(&rec, &exp.config.profile, &exp.sequence(), CirSource::Reconstructed)?;
                        row.push((m, Some(chain_nse(&truth, &taps(&est_chain), domain)?)));
                    }
                    _ => {
                        report.record_failure(m);
                        row.push((m, None));
                    }
                }
            }
            report.push(id, paths, &row);
        }
        Ok(report)
    };
    run().map_err(|e| e.in_stage("evaluate"))
}

/// Paths of the artefacts of one run.
pub fn output_dir(config: &ExperimentConfig, root: &Path) -> Result<PathBuf> {
    let dir = config.output_path(root);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Full run: data, generator, phase network, ESPRIT, evaluation and report
/// files under the configured output directory.
pub fn run_pipeline(config: &ExperimentConfig, root: &Path) -> Result<NseReport> {
    let dir = output_dir(config, root)?;
    let exp = Experiment::generate(config.clone()).map_err(|e| e.in_stage("gen-data"))?;
    exp.save(&dir.join(DATASET_FILE)).map_err(|e| e.in_stage("gen-data"))?;
    std::fs::write(dir.join("config.json"), config.to_json()).map_err(|e| Error::io(&dir, e).in_stage("gen-data"))?;
    let (mut cgan, history) = train_cgan_stage(&exp, &dir, |r| {
        info!("cgan epoch {}: loss_D {:.4} loss_G {:.4} val NSE {:.4}", r.epoch, r.loss_d, r.loss_g, r.val_nse)
    })?;
    info!("generator trained for {} epochs", history.len() - 1);
    let (net, _) = train_lstm_stage(&exp, &mut cgan, &dir)?;
    let ids = exp.evaluation_ids();
    let esprit = if config.run_esprit {
        Some(esprit_stage(&exp, ids, Some(&dir))?)
    } else {
        None
    };
    let generated = generate_channels(&exp, &mut cgan, ids).map_err(|e| e.in_stage("evaluate"))?;
    let report = evaluate_stage(&exp, ids, &generated, &net, esprit.as_ref())?;
    export_report(&report, &dir.join(REPORT_DIR)).map_err(|e| e.in_stage("report"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::PhaseNetConfig;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk();
        cfg.datasets[0].num_samples = 5;
        cfg.datasets[1].num_samples = 4;
        cfg.split.cgan_train_per_dataset = 2;
        cfg
    }

    #[test]
    fn splits_are_balanced_disjoint_and_complete() {
        let exp = Experiment::generate(tiny()).unwrap();
        let train = exp.subset(Subset::CganTrain);
        let held = exp.subset(Subset::HeldOut);
        assert_eq!(train.len(), 4);
        assert_eq!(held.len(), 5);
        let ds = |ids: &[usize]| ids.iter().map(|&i| exp.samples[i].dataset).collect::<Vec<_>>();
        assert_eq!(ds(train), vec![0, 1, 0, 1]);
        assert_eq!(ds(held), vec![0, 1, 0, 1, 0]);
        let mut all: Vec<usize> = train.iter().chain(held).copied().collect();
        all.sort();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn generation_is_deterministic_and_persists() {
        let a = Experiment::generate(tiny()).unwrap();
        let b = Experiment::generate(tiny()).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.measured(3, &a.channel(3)), b.measured(3, &b.channel(3)));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(DATASET_FILE);
        a.save(&path).unwrap();
        let c = Experiment::load(tiny(), &path).unwrap();
        assert_eq!(c.samples, a.samples);
        assert_eq!(c.subset(Subset::HeldOut), a.subset(Subset::HeldOut));
        let mut other = tiny();
        other.name = "other".into();
        assert!(Experiment::load(other, &path).unwrap_err().is_config());
    }

    #[test]
    fn measurement_noise_is_independent_of_the_chain_noise() {
        let exp = Experiment::generate(tiny()).unwrap();
        let h = exp.channel(0);
        let hc = exp.measured(0, &h);
        let chain = exp.chain_measurement(0, &h).unwrap();
        let direct = measured_rows(&chain, exp.reference().convention);
        assert_ne!(hc, direct);
        assert_eq!(hc.shape(), (4, 1200));
    }

    #[test]
    fn perfect_generator_and_identity_refiner_are_exact() {
        let mut cfg = tiny();
        for d in &mut cfg.datasets {
            d.snr_db = f64::INFINITY;
        }
        let exp = Experiment::generate(cfg).unwrap();
        let ids = exp.subset(Subset::HeldOut).to_vec();
        let perfect: Vec<ChannelMatrix> = ids.iter().map(|&i| exp.channel(i)).collect();
        let net = PhaseNet::new(
            PhaseNetConfig {
                residual: true,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let esprit = esprit_stage(&exp, &ids, None).unwrap();
        let report = evaluate_stage(&exp, &ids, &perfect, &net, Some(&esprit)).unwrap();
        for m in [Method::Measurement, Method::Cgan, Method::CganLstm] {
            let v = report.method_values(m);
            assert_eq!(v.len(), ids.len());
            assert!(v.iter().all(|&x| x < 1e-10), "{m:?}: {v:?}");
        }
        let esprit_vals: Vec<f64> =
            report.method_values(Method::Esprit3).into_iter().chain(report.method_values(Method::Esprit5)).collect();
        assert_eq!(esprit_vals.len(), ids.len());
        assert!(esprit_vals.iter().all(|&x| x < 1e-8), "{esprit_vals:?}");
    }

    #[test]
    fn stage_errors_are_tagged() {
        let exp = Experiment::generate(tiny()).unwrap();
        let net = PhaseNet::new(PhaseNetConfig::default(), 0).unwrap();
        let err = evaluate_stage(&exp, &[0, 1], &[], &net, None).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "evaluate", .. }));
        assert_eq!(err.exit_code(), 2);
    }
}
