//! End-to-end experiment for one seed: corpora, source pretraining, the three
//! fine-tuning modes and the comparison table.

use std::path::{Path, PathBuf};

use crate::autodiff::checkpoint::CheckpointBundle;
use crate::config::RunConfig;
use crate::data::{build_corpora, read_manifest, ClipPool, Split};
use crate::error::{Error, Result};
use crate::eval::{compare_modes, ComparisonTable, MetricsReport};
use crate::training::{cdc_pool_for, finetune, pretrain, write_step_log, FinetuneMode, RunOutputs, StepLog};

pub struct ExperimentOutput {
    pub table: ComparisonTable,
    pub reports: Vec<MetricsReport>,
    pub pretrain_logs: Vec<StepLog>,
    pub finetune_logs: Vec<(FinetuneMode, Vec<StepLog>)>,
    pub checkpoints: Vec<(FinetuneMode, CheckpointBundle)>,
}

/// Loaded source and target splits.
pub struct Pools {
    pub source_train: ClipPool,
    pub target_train: ClipPool,
    pub target_test: ClipPool,
}

impl Pools {
    pub fn load(source_manifest: &Path, target_manifest: &Path, cfg: &RunConfig) -> Result<Self> {
        let src = read_manifest(source_manifest)?;
        let tgt = read_manifest(target_manifest)?;
        Ok(Self {
            source_train: ClipPool::load(&src, Split::Train, &cfg.dsp)?,
            target_train: ClipPool::load(&tgt, Split::Train, &cfg.dsp)?,
            target_test: ClipPool::load(&tgt, Split::Test, &cfg.dsp)?,
        })
    }
}

/// Runs everything under `dir` with `seed` driving both corpus synthesis and
/// training. Artifacts are written when `dir` is given.
pub fn run_experiment(config: &RunConfig, seed: u64, dir: &Path) -> Result<ExperimentOutput> {
    let mut cfg = config.clone();
    cfg.train.seed = seed;
    cfg.data.seed = seed;
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let snapshot = dir.join("config.toml");
    std::fs::write(&snapshot, cfg.to_toml()).map_err(|e| Error::io(&snapshot, e))?;

    let paths = build_corpora(&dir.join("data"), &cfg.data.corpus(), seed, cfg.dsp.sample_rate)?;
    let pools = Pools::load(&paths.source_manifest, &paths.target_manifest, &cfg)?;
    let outputs = RunOutputs::default();

    let pre = pretrain(&pools.source_train, &cfg, &outputs)?;
    pre.bundle.save(&dir.join("pretrain.avck"))?;
    write_step_log(&dir.join("pretrain.log.jsonl"), &pre.logs, cfg.train.log_interval)?;

    let cdc_pool = cdc_pool_for(
        cfg.cdc.pool,
        Some(pools.source_train.clone()),
        &pools.target_train,
    )?;
    let mut checkpoints = Vec::new();
    let mut finetune_logs = Vec::new();
    for mode in FinetuneMode::ALL {
        let out = finetune(
            &pre.bundle,
            &pools.target_train,
            Some(&cdc_pool),
            mode,
            &cfg,
            &outputs,
        )?;
        let stem = format!("finetune_{}", mode.as_str());
        out.bundle.save(&dir.join(format!("{stem}.avck")))?;
        write_step_log(&dir.join(format!("{stem}.log.jsonl")), &out.logs, cfg.train.log_interval)?;
        checkpoints.push((mode, out.bundle));
        finetune_logs.push((mode, out.logs));
    }

    let refs: Vec<(FinetuneMode, &CheckpointBundle)> = checkpoints.iter().map(|(m, b)| (*m, b)).collect();
    let (table, reports) = compare_modes(&refs, &pools.target_train, &pools.target_test, &cfg.dsp, &cfg.eval)?;
    table.save(dir)?;
    Ok(ExperimentOutput {
        table,
        reports,
        pretrain_logs: pre.logs,
        finetune_logs,
        checkpoints,
    })
}

/// `<root>/seed<N>`
pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::tests::tiny_config;

    #[test]
    fn tiny_experiment_writes_everything() {
        let mut cfg = tiny_config();
        cfg.data.source_speakers = 2;
        cfg.data.utterances_per_speaker = 2;
        cfg.data.target_utterances = 4;
        cfg.data.target_train = 2;
        cfg.data.utterance_seconds = 0.3;
        let d = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, 3, d.path()).unwrap();
        assert_eq!(out.table.rows.len(), 3);
        assert_eq!(out.reports.len(), 6);
        assert_eq!(out.finetune_logs[0].1.len(), 0);
        for name in ["config.toml", "pretrain.avck", "finetune_cdc.avck", "finetune_cdc.log.jsonl", "comparison.json", "comparison.txt"] {
            assert!(d.path().join(name).is_file(), "{name}");
        }
        let none = out.table.row(FinetuneMode::None).unwrap();
        assert_eq!(none.gap_mr_stft, none.test_mr_stft - none.train_mr_stft);
    }
}
