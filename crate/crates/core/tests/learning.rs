use vocadapt::config::RunConfig;
use vocadapt::data::{synth_speaker, ClipPool, SpeakerSpec};
use vocadapt::eval::evaluate_checkpoint;
use vocadapt::rng::SplitMix64;
use vocadapt::training::{RunOutputs, Trainer};

// ~1 min in the optimised test profile
#[test]
fn two_thousand_steps_halve_the_untrained_loss() {
    let cfg = RunConfig::default();
    let mut rng = SplitMix64::new(11);
    let mut clips = Vec::new();
    for s in 0..4 {
        let spec = SpeakerSpec::random_adult(&mut rng);
        for u in 0..4 {
            clips.push(synth_speaker(&spec, 1.0, 100 * s + u, cfg.dsp.sample_rate).unwrap());
        }
    }
    let pool = ClipPool::from_clips(clips);
    let held = ClipPool::from_clips(pool.clips[..4].to_vec());

    let mut t = Trainer::pretrain(&cfg).unwrap();
    let score = |t: &Trainer| {
        evaluate_checkpoint(&t.bundle(), &held, "train", "probe", &cfg.dsp, &cfg.eval)
            .unwrap()
            .mr_stft
            .mean
    };
    let before = score(&t);
    t.run(2000, &pool, None, &RunOutputs::default()).unwrap();
    let after = score(&t);
    assert!(after <= 0.5 * before, "MR-STFT {before:.3} -> {after:.3}");
}
