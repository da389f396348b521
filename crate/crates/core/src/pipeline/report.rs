//! Report structures and emission. Every report embeds the config hash and
//! seed list and contains no timestamps or absolute paths, so identical runs
//! produce identical bytes.

use crate::attack::AttackReport;
use crate::defense::DefenseRow;
use crate::train::Metrics;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Table-style functionality comparison on clean data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalityReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub metric_definitions: String,
    pub rows: Vec<FunctionalityRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalityRow {
    pub task: String,
    pub metric: String,
    pub clean_mean: f64,
    pub clean_per_seed: Vec<f64>,
    pub backdoored_mean: f64,
    pub backdoored_per_seed: Vec<f64>,
    /// 100 * (clean - backdoored) / clean on the means.
    pub relative_drop_pct: f64,
}

impl FunctionalityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for row in &self.rows {
            out.push(',');
            out.push_str(&row.task);
        }
        out.push('\n');
        for (label, pick) in [
            ("clean_dm", 0usize),
            ("backdoored", 1),
            ("relative_drop_pct", 2),
        ] {
            out.push_str(label);
            for row in &self.rows {
                let v = match pick {
                    0 => row.clean_mean,
                    1 => row.backdoored_mean,
                    _ => row.relative_drop_pct,
                };
                out.push_str(&format!(",{v:.2}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-seed and mean cells for one (task, segment) attack grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackGridRow {
    pub task: String,
    pub metric: String,
    pub target_segment: String,
    pub clean_dm_on_clean: f64,
    pub clean_dm_on_triggered: f64,
    pub clean_dm_relative_drop_pct: f64,
    pub backdoored_on_clean: f64,
    pub backdoored_on_triggered: f64,
    pub backdoored_relative_drop_pct: f64,
    pub per_seed: Vec<AttackReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackGridReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub strategy: String,
    pub n_triggers: u8,
    pub metric_definitions: String,
    pub rows: Vec<AttackGridRow>,
}

impl AttackGridReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "task,segment,metric,clean_dm_on_clean,clean_dm_on_triggered,clean_dm_relative_drop_pct,backdoored_on_clean,backdoored_on_triggered,backdoored_relative_drop_pct\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}\n",
                row.task,
                row.target_segment,
                row.metric,
                row.clean_dm_on_clean,
                row.clean_dm_on_triggered,
                row.clean_dm_relative_drop_pct,
                row.backdoored_on_clean,
                row.backdoored_on_triggered,
                row.backdoored_relative_drop_pct,
            ));
        }
        out
    }
}

/// The defense three-bar grid over tasks and trigger counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseGridReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub metric_definitions: String,
    pub rows: Vec<DefenseGridRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseGridRow {
    pub task: String,
    pub n_triggers: u8,
    pub clean_mean: f64,
    pub triggered_mean: f64,
    pub filtered_mean: f64,
    pub trigger_recall_mean: f64,
    pub full_removal_rate_mean: f64,
    pub per_seed: Vec<DefenseRow>,
}

impl DefenseGridReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "task,n_triggers,clean,triggered,filtered,trigger_recall,full_removal_rate\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{:.2},{:.2},{:.2},{:.4},{:.4}\n",
                row.task,
                row.n_triggers,
                row.clean_mean,
                row.triggered_mean,
                row.filtered_mean,
                row.trigger_recall_mean,
                row.full_removal_rate_mean,
            ));
        }
        out
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

pub(crate) fn primary_of(metrics: &Metrics, kind: crate::corpus::TaskKind) -> f64 {
    metrics.primary(kind)
}

/// Serializes a report as pretty JSON plus a CSV twin, atomically.
pub(crate) fn write_report<T: Serialize>(
    dir: &Path,
    name: &str,
    report: &T,
    csv: &str,
) -> Result<(), std::io::Error> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    atomic_write_text(&dir.join(format!("{name}.json")), &json)?;
    atomic_write_text(&dir.join(format!("{name}.csv")), csv)?;
    Ok(())
}

pub(crate) fn atomic_write_text(path: &Path, text: &str) -> Result<(), std::io::Error> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
