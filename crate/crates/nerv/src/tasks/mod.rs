//! Application evaluations: denoising, temporal interpolation, ablation
//! sweeps, and rate-distortion reporting.

pub mod evals;
pub mod filters;
pub mod noise;

pub use evals::{
    ablation_sweep, denoise_eval, interpolation_eval, rd_report, AblationAxis, DenoiseReport,
    InterpReport,
};
pub use filters::{filter_baseline, FilterKind, FILTER_KINDS};
pub use noise::{add_noise, NoisePattern, NoiseSpec};

use std::path::Path;

use crate::error::Result;

/// One row of an evaluation report; unset fields stay empty in the CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalRecord {
    pub label: String,
    pub params: Option<u64>,
    pub bpp: Option<f64>,
    pub psnr: Option<f64>,
    pub ms_ssim: Option<f64>,
    pub encode_seconds: Option<f64>,
    pub decode_fps: Option<f64>,
}

impl EvalRecord {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Self::default()
        }
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn records_to_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from("label,params,bpp,psnr,ms_ssim,encode_seconds,decode_fps\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.label,
            opt(&r.params),
            opt(&r.bpp),
            opt(&r.psnr),
            opt(&r.ms_ssim),
            opt(&r.encode_seconds),
            opt(&r.decode_fps),
        ));
    }
    out
}

pub fn write_records_csv(records: &[EvalRecord], path: &Path) -> Result<()> {
    std::fs::write(path, records_to_csv(records))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_empty_cells_for_unset_fields() {
        let mut r = EvalRecord::new("nerv");
        r.psnr = Some(31.5);
        let csv = records_to_csv(&[r]);
        assert!(csv.contains("nerv,,,31.5,,,\n"), "{csv}");
    }
}
