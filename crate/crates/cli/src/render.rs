//! Report rendering: a fixed-width human format (stable enough for
//! snapshot tests) and json-lines with one self-contained object per line.

use serde::Serialize;
use tq_core::bench::BenchReport;
use tq_core::checkpoint::{Encoding, TensorRecord};
use tq_core::CompressionReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Human,
    JsonLines,
}

#[derive(Serialize)]
struct RecordLine<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    name: &'a str,
    encoding: Encoding,
    rows: u64,
    cols: u64,
    params: u64,
    granularity: Option<String>,
    width: Option<String>,
    data_bytes: u64,
    scale_bytes: u64,
}

#[derive(Serialize)]
struct ReportLine<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(flatten)]
    report: &'a CompressionReport,
}

fn record_aux(rec: &TensorRecord) -> String {
    match rec.encoding {
        Encoding::PackedTernary => rec.granularity.unwrap().to_string(),
        Encoding::DenseReal => rec.width.unwrap().to_string(),
    }
}

pub fn print_records(records: &[TensorRecord], format: OutputFormat) {
    match format {
        OutputFormat::Human => {
            println!(
                "{:<24} {:<15} {:>7} {:>7} {:<10} {:>12} {:>11}",
                "name", "encoding", "rows", "cols", "aux", "data-bytes", "scale-bytes"
            );
            for rec in records {
                println!(
                    "{:<24} {:<15} {:>7} {:>7} {:<10} {:>12} {:>11}",
                    rec.name,
                    rec.encoding.to_string(),
                    rec.rows,
                    rec.cols,
                    record_aux(rec),
                    rec.data_len,
                    rec.scale_len
                );
            }
        }
        OutputFormat::JsonLines => {
            for rec in records {
                let line = RecordLine {
                    kind: "record",
                    name: &rec.name,
                    encoding: rec.encoding,
                    rows: rec.rows,
                    cols: rec.cols,
                    params: rec.param_count(),
                    granularity: rec.granularity.map(|g| g.to_string()),
                    width: rec.width.map(|w| w.to_string()),
                    data_bytes: rec.data_len,
                    scale_bytes: rec.scale_len,
                };
                println!("{}", serde_json::to_string(&line).expect("record serializes"));
            }
        }
    }
}

pub fn print_compression_report(report: &CompressionReport, format: OutputFormat) {
    match format {
        OutputFormat::Human => {
            println!(
                "params    total {}  quantized {}  fraction {:.6}",
                report.total_params, report.quantized_params, report.quantized_fraction
            );
            println!(
                "stored    packed {} B  scales {} B  passthrough {} B  total {} B",
                report.packed_payload_bytes,
                report.scale_bytes,
                report.passthrough_bytes,
                report.stored_bytes
            );
            println!(
                "baseline  {} B at {} B/param",
                report.baseline_bytes, report.baseline_width_bytes
            );
            println!("ratio     {:.4}x", report.ratio);
        }
        OutputFormat::JsonLines => {
            let line = ReportLine { kind: "report", report };
            println!("{}", serde_json::to_string(&line).expect("report serializes"));
        }
    }
}

#[derive(Serialize)]
struct PathLine<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(flatten)]
    stats: &'a tq_core::bench::PathStats,
}

pub fn print_bench_report(report: &BenchReport, format: OutputFormat) {
    match format {
        OutputFormat::Human => {
            println!(
                "shape {}x{}  repetitions {}",
                report.rows, report.cols, report.repetitions
            );
            println!(
                "{:<16} {:>13} {:>13} {:>13}",
                "path", "median-ns", "min-ns", "weight-bytes"
            );
            for e in &report.entries {
                println!(
                    "{:<16} {:>13} {:>13} {:>13}",
                    e.path.to_string(),
                    e.median_ns,
                    e.min_ns,
                    e.weight_bytes
                );
            }
        }
        OutputFormat::JsonLines => {
            for stats in &report.entries {
                let line = PathLine { kind: "path", stats };
                println!("{}", serde_json::to_string(&line).expect("stats serialize"));
            }
        }
    }
}
