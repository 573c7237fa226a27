use super::protocol::{run_loso, EvalItem, ProtocolSpec, Report};
use crate::dataset::SampleRecord;
use crate::error::{Error, Result};
use crate::model::{predict, ClipInput, ModelConfig, ModelWeights};
use crate::training::{train, TrainConfig, TrainSample};

/// Seed of one fold: the run seed mixed with an FNV-1a hash of the held-out
/// subject, so a fold's result does not depend on which other subjects exist.
pub fn fold_seed(seed: u64, subject: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in subject.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Trains a fresh model per LOSO fold and scores the held-out subject.
///
/// `clips[i]` is the encoder input of `records[i]`. `model.classes` must
/// equal the protocol's label-set size. Each fold starts from `init` when
/// given, otherwise from [`ModelWeights::init`] seeded with [`fold_seed`];
/// the fold seed also drives shuffling.
pub fn run_protocol(
    records: &[SampleRecord],
    clips: &[ClipInput],
    spec: &ProtocolSpec,
    model: &ModelConfig,
    tc: &TrainConfig,
    init: Option<&ModelWeights>,
) -> Result<Report> {
    if records.len() != clips.len() {
        return Err(Error::InvalidArgument(format!(
            "{} records but {} clips",
            records.len(),
            clips.len()
        )));
    }
    if model.classes != spec.label_set.len() {
        return Err(Error::Config(format!(
            "model has {} classes but protocol {} has {}",
            model.classes,
            spec.kind,
            spec.label_set.len()
        )));
    }
    if let Some(w) = init {
        w.check_shapes(model)?;
    }
    let items = spec.select(records)?;
    let sample = |item: &EvalItem| TrainSample {
        id: item.sample_id.clone(),
        clip: clips[item.record].clone(),
        label: item.class,
    };
    run_loso(&spec.kind.to_string(), &spec.label_set, &items, |fold| {
        let seed = fold_seed(tc.seed, &fold.subject);
        let start = match init {
            Some(w) => w.clone(),
            None => ModelWeights::init(model, seed)?,
        };
        let train_set: Vec<TrainSample> = fold.train.iter().map(|&i| sample(&items[i])).collect();
        let fold_tc = TrainConfig { seed, ..tc.clone() };
        let trained = train(&start, model, &train_set, &fold_tc, |_| {}).map_err(|e| Error::UntrainableFold {
            subject: fold.subject.clone(),
            detail: e.to_string(),
        })?;
        fold.test
            .iter()
            .map(|&i| predict(&trained.weights, model, &clips[items[i].record]))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::evaluation::ProtocolKind;
    use crate::numerics::Tensor;
    use crate::temporal::Aggregator;
    use std::path::PathBuf;

    fn record(id: &str, subject: &str, label: &str) -> SampleRecord {
        SampleRecord {
            sample_id: id.into(),
            dataset: Dataset::Synth,
            subject_id: subject.into(),
            frames_dir: PathBuf::new(),
            onset: 0,
            apex: 1,
            offset: 2,
            label: label.into(),
            landmarks_dir: None,
        }
    }

    fn clip(cfg: &ModelConfig, class: usize) -> ClipInput {
        let n = cfg.embed.num_patches();
        let len = cfg.embed.patch_len();
        let sign = if class == 0 { 1.0 } else { -1.0 };
        let frame = Tensor::from_fn(&[n, len], |i| sign * ((i % 7) as f64 / 7.0 - 0.2)).unwrap();
        ClipInput {
            frames: vec![frame; 2],
        }
    }

    #[test]
    fn two_subjects_four_samples() {
        let records = vec![
            record("a0", "s1", "up"),
            record("a1", "s1", "down"),
            record("b0", "s2", "up"),
            record("b1", "s2", "down"),
        ];
        let spec = ProtocolSpec::new(ProtocolKind::Sde(Dataset::Synth), &records).unwrap();
        assert_eq!(spec.label_set, ["down", "up"]);
        let cfg = ModelConfig::desk(Aggregator::Mean, 2);
        let clips: Vec<ClipInput> = records.iter().map(|r| clip(&cfg, (r.label == "up") as usize)).collect();
        let tc = TrainConfig {
            lr: 1e-2,
            ..TrainConfig::with_epochs(30)
        };
        let report = run_protocol(&records, &clips, &spec, &cfg, &tc, None).unwrap();
        assert_eq!(report.folds.len(), 2);
        assert_eq!(report.pooled.confusion.iter().flatten().sum::<u64>(), 4);
        assert_eq!(report.pooled.accuracy, 1.0, "{report:?}");
        let again = run_protocol(&records, &clips, &spec, &cfg, &tc, None).unwrap();
        assert_eq!(again, report);
    }

    #[test]
    fn mismatches_are_rejected() {
        let records = vec![record("a0", "s1", "x"), record("b0", "s2", "y")];
        let spec = ProtocolSpec::new(ProtocolKind::Sde(Dataset::Synth), &records).unwrap();
        let cfg = ModelConfig::desk(Aggregator::Mean, 3);
        let clips = vec![clip(&cfg, 0), clip(&cfg, 1)];
        let tc = TrainConfig::with_epochs(1);
        assert!(run_protocol(&records, &clips, &spec, &cfg, &tc, None).is_err());
        let cfg2 = ModelConfig { classes: 2, ..cfg };
        assert!(run_protocol(&records, &clips[..1], &spec, &cfg2, &tc, None).is_err());
    }

    #[test]
    fn fold_seed_depends_on_subject_only() {
        assert_eq!(fold_seed(3, "sub01"), fold_seed(3, "sub01"));
        assert_ne!(fold_seed(3, "sub01"), fold_seed(3, "sub02"));
        assert_ne!(fold_seed(3, "sub01"), fold_seed(4, "sub01"));
    }
}
