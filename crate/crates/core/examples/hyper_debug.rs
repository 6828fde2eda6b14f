use braggfit::harness::{run_trial_study, StudyOptions};
use braggfit::lsq::Method;
use braggfit::synth::TrialConfig;

fn main() {
    let config = TrialConfig { trials_per_group: 4, n_groups: 2, seed: 2026, ..TrialConfig::default() };
    let options = StudyOptions { methods: vec![Method::CrossCorrelation], ..StudyOptions::default() };
    let out = run_trial_study(&config, &options).unwrap();
    for r in out.records.iter().take(8) {
        println!("g{} t{} failed={} err={:.1} msg={:?}", r.group, r.trial, r.failed, r.error_micro, r.message);
    }
}
