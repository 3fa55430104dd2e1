//! Serialized outputs: JSON reports, delta CSVs and simulation manifests.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::forest::SubsampleDiagnostics;
use crate::permtest::{ImportanceReport, PermTestResult, TestSnapshot};
use crate::simbench::{replicate_seeds, SimConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// JSON form of one permutation test. The permuted deltas go to a CSV side file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub feature: String,
    pub delta_observed: f64,
    pub p_value: f64,
    pub z_score: f64,
    pub n_perm: usize,
    pub degenerate: bool,
    pub mse_original: f64,
    pub mse_muted: f64,
    pub diagnostics: SubsampleDiagnostics,
    pub config: TestSnapshot,
}

impl TestReport {
    pub fn from_result(r: &PermTestResult) -> Self {
        TestReport {
            schema_version: SCHEMA_VERSION,
            feature: r.config.feature_label.clone(),
            delta_observed: r.delta_observed,
            p_value: r.p_value,
            z_score: r.z_score,
            n_perm: r.n_perm(),
            degenerate: r.degenerate,
            mse_original: r.mse_original,
            mse_muted: r.mse_muted,
            diagnostics: r.diagnostics,
            config: r.config.clone(),
        }
    }

    pub fn summary_line(&self) -> String {
        summary_line(&self.feature, self.p_value, self.z_score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceJson {
    pub schema_version: u32,
    pub warnings: Vec<String>,
    pub entries: Vec<TestReport>,
}

impl ImportanceJson {
    pub fn from_report(r: &ImportanceReport) -> Self {
        ImportanceJson {
            schema_version: SCHEMA_VERSION,
            warnings: r.warnings.clone(),
            entries: r.entries.iter().map(|e| TestReport::from_result(&e.result)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub schema_version: u32,
    pub diagnostics: SubsampleDiagnostics,
}

/// Full configuration of a simulation run plus every replicate's seeds,
/// indexed `[grid][replicate]` as `[data, forest, permutation, muting]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub schema_version: u32,
    pub config: SimConfig,
    pub curve_files: Vec<String>,
    pub replicate_seeds: Vec<Vec<[u64; 4]>>,
}

impl SimManifest {
    pub fn new(config: &SimConfig, curve_files: Vec<String>) -> Self {
        let seeds = (0..config.grid.len())
            .map(|g| (0..config.replicates).map(|r| replicate_seeds(config.master_seed, g, r)).collect())
            .collect();
        SimManifest {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            curve_files,
            replicate_seeds: seeds,
        }
    }
}

/// Number formatting shared by the console and the JSON files.
pub fn json_number(x: f64) -> String {
    serde_json::to_string(&x).expect("f64 serializes")
}

/// `feature=<label> p_value=<p> z_score=<z>`.
pub fn summary_line(label: &str, p: f64, z: f64) -> String {
    format!("feature={label} p_value={} z_score={}", json_number(p), json_number(z))
}

/// `perm,delta` with one line per permutation.
pub fn write_deltas_csv<W: Write>(deltas: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["perm", "delta"])?;
    for (j, d) in deltas.iter().enumerate() {
        w.write_record([j.to_string(), json_number(*d)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::subsample_diagnostics;
    use crate::simbench::SimModel;

    #[test]
    fn summary_numbers_use_json_formatting() {
        assert_eq!(summary_line("x1", 0.5, -1.25), "feature=x1 p_value=0.5 z_score=-1.25");
        assert_eq!(json_number(1.0 / 3.0), serde_json::to_string(&(1.0f64 / 3.0)).unwrap());
    }

    #[test]
    fn deltas_csv_layout() {
        let mut buf = Vec::new();
        write_deltas_csv(&[0.5, -2.0], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "perm,delta\n0,0.5\n1,-2.0\n");
    }

    #[test]
    fn diagnose_report_round_trips() {
        let r = DiagnoseReport {
            schema_version: SCHEMA_VERSION,
            diagnostics: subsample_diagnostics(10, 2, 2),
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<DiagnoseReport>(&s).unwrap(), r);
    }

    #[test]
    fn manifest_lists_seeds_per_replicate() {
        let mut cfg = SimConfig::desk(SimModel::Model1 { beta: 10.0, sigma: 10.0 });
        cfg.replicates = 3;
        let m = SimManifest::new(&cfg, vec!["curve.csv".into()]);
        assert_eq!(m.replicate_seeds.len(), cfg.grid.len());
        assert_eq!(m.replicate_seeds[0].len(), 3);
        assert_eq!(m.replicate_seeds[1][2], replicate_seeds(cfg.master_seed, 1, 2));
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<SimManifest>(&s).unwrap(), m);
    }
}
