#![allow(dead_code)]

pub mod props;

use std::sync::OnceLock;

use wrom::config::ExperimentConfig;
use wrom::experiment::{self, OfflineOutput};
use wrom::pod;
use wrom::store::simulate_all;
use wrom::transport::DiscreteIcdf;
use wrom::Snapshot;

/// One bundled setup regenerated in memory, trained and compared with POD.
pub struct ExampleData {
    pub config: ExperimentConfig,
    pub snapshots: Vec<Snapshot>,
    pub icdfs: Vec<DiscreteIcdf>,
    pub offline: OfflineOutput,
    /// `(mean, max)` POD relative L1 error per mode count.
    pub pod: Vec<(f64, f64)>,
}

impl ExampleData {
    fn build(config: ExperimentConfig) -> Self {
        let snapshots = simulate_all(&config).expect("simulation");
        let icdfs = experiment::training_icdfs(&snapshots, &config).expect("icdfs");
        let offline = experiment::offline(&config, &snapshots, &config.greedy).expect("offline stage");
        let cols: Vec<Vec<f64>> = snapshots.iter().map(|s| s.values.clone()).collect();
        let basis = pod::compute(&cols).expect("pod");
        let pod = pod::summarize(&pod::error_table(&basis, &cols));
        Self {
            config,
            snapshots,
            icdfs,
            offline,
            pod,
        }
    }

    pub fn n_gbar(&self, eps: f64) -> Option<usize> {
        experiment::n_gbar(&self.offline.training, eps)
    }

    pub fn n_pod(&self, eps: f64) -> Option<usize> {
        pod::first_below(&self.pod, eps, pod::ErrorStat::Mean)
    }
}

pub fn example1() -> &'static ExampleData {
    static DATA: OnceLock<ExampleData> = OnceLock::new();
    DATA.get_or_init(|| ExampleData::build(ExperimentConfig::example1()))
}

pub fn example2() -> &'static ExampleData {
    static DATA: OnceLock<ExampleData> = OnceLock::new();
    DATA.get_or_init(|| ExampleData::build(ExperimentConfig::example2()))
}

pub fn show(n: Option<usize>) -> String {
    n.map_or_else(|| "-".to_string(), |n| n.to_string())
}
