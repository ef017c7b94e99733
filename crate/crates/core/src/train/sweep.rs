//! Quality-factor sweeps: degrade, restore, measure, tabulate.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::plot::svg_line_chart;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::jpeg::{compress_simulate, Subsampling};
use crate::metrics::{display_db, QualityReport};
use crate::model::{restore_image, Model};

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub path: String,
    pub qf: u8,
    /// Per-side downscale denominator used in resolution sweeps (1 = native).
    pub scale_denominator: usize,
    pub report: QualityReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// (qf, mean psnr, mean ssim, mean psnr_b, mean ipsnr) per quality factor.
    pub qf_means: Vec<(u8, f64, f64, f64, f64)>,
}

impl SweepResult {
    pub fn mean_ipsnr_at(&self, qf: u8) -> Option<f64> {
        self.qf_means.iter().find(|m| m.0 == qf).map(|m| m.4)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{},scale_denominator", QualityReport::csv_header());
        for row in &self.rows {
            let _ = writeln!(out, "{},{}", row.report.csv_row(&row.path, Some(row.qf)), row.scale_denominator);
        }
        for (qf, psnr, ssim, psnr_b, ipsnr) in &self.qf_means {
            let _ = writeln!(
                out,
                "mean,{},{:.4},{:.6},{:.4},{:.4},false,",
                qf,
                display_db(*psnr),
                ssim,
                display_db(*psnr_b),
                display_db(*ipsnr)
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv()).map_err(|e| Error::io(path.as_ref(), e))
    }

    fn ipsnr_series(&self, name: &str) -> (String, Vec<(f64, f64)>) {
        (
            name.to_string(),
            self.qf_means
                .iter()
                .map(|(qf, _, _, _, ipsnr)| (*qf as f64, display_db(*ipsnr)))
                .collect(),
        )
    }

    pub fn write_svg(&self, path: impl AsRef<Path>, series_name: &str) -> Result<()> {
        let svg = svg_line_chart(
            "Mean IPSNR vs quality factor",
            "quality factor",
            "IPSNR (dB)",
            &[self.ipsnr_series(series_name)],
        );
        std::fs::write(path.as_ref(), svg).map_err(|e| Error::io(path.as_ref(), e))
    }
}

fn evaluate_one(
    model: &Model<f32>,
    name: &str,
    image: &ImageBuffer,
    qf: u8,
    scale_denominator: usize,
    subsampling: Subsampling,
) -> Result<SweepRow> {
    let (degraded, luma, chroma) = compress_simulate(image, qf, subsampling)?;
    let chroma_ref = if image.is_gray() { None } else { Some(&chroma) };
    let restored = restore_image(model, &degraded, &luma, chroma_ref)?;
    let report = QualityReport::compute_with_degraded(image, &degraded, &restored)?;
    Ok(SweepRow { path: name.to_string(), qf, scale_denominator, report })
}

fn aggregate(rows: &[SweepRow], qfs: &[u8]) -> Vec<(u8, f64, f64, f64, f64)> {
    qfs.iter()
        .map(|&qf| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.qf == qf).collect();
            let n = group.len().max(1) as f64;
            let sum = group.iter().fold((0.0, 0.0, 0.0, 0.0), |acc, r| {
                (
                    acc.0 + display_db(r.report.psnr),
                    acc.1 + r.report.ssim,
                    acc.2 + display_db(r.report.psnr_b),
                    acc.3 + display_db(r.report.ipsnr.unwrap_or(0.0)),
                )
            });
            (qf, sum.0 / n, sum.1 / n, sum.2 / n, sum.3 / n)
        })
        .collect()
}

/// Runs every (image, qf) cell once: simulate at `qf`, restore with the
/// model, compute the quality report including IPSNR.
pub fn sweep_eval(
    model: &Model<f32>,
    testset: &[(String, ImageBuffer)],
    qfs: &[u8],
    subsampling: Subsampling,
) -> Result<SweepResult> {
    if testset.is_empty() {
        return Err(Error::Dataset("empty test set".into()));
    }
    if qfs.is_empty() {
        return Err(Error::invalid("sweep_eval", "no quality factors given"));
    }
    let mut rows = Vec::with_capacity(testset.len() * qfs.len());
    for (name, image) in testset {
        for &qf in qfs {
            rows.push(evaluate_one(model, name, image, qf, 1, subsampling)?);
        }
    }
    let qf_means = aggregate(&rows, qfs);
    Ok(SweepResult { rows, qf_means })
}

/// Resolution study: each denominator d shrinks the test images to 1/d
/// per side before the sweep. Returns one result per denominator.
pub fn resolution_sweep(
    model: &Model<f32>,
    testset: &[(String, ImageBuffer)],
    qfs: &[u8],
    denominators: &[usize],
    subsampling: Subsampling,
) -> Result<Vec<(usize, SweepResult)>> {
    let mut out = Vec::new();
    for &d in denominators {
        if d == 0 {
            return Err(Error::invalid("resolution_sweep", "denominator must be positive"));
        }
        let scaled: Vec<(String, ImageBuffer)> = testset
            .iter()
            .map(|(name, img)| {
                let w = (img.width() / d).max(16);
                let h = (img.height() / d).max(16);
                Ok((format!("{}@1/{}", name, d), img.resize_bilinear(w, h)?))
            })
            .collect::<Result<_>>()?;
        let mut result = sweep_eval(model, &scaled, qfs, subsampling)?;
        for row in &mut result.rows {
            row.scale_denominator = d;
        }
        out.push((d, result));
    }
    Ok(out)
}

/// One chart with a line per denominator, mirroring the resolution
/// study presentation.
pub fn write_resolution_svg(
    results: &[(usize, SweepResult)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let series: Vec<(String, Vec<(f64, f64)>)> = results
        .iter()
        .map(|(d, r)| {
            (
                format!("1/{} per side", d),
                r.qf_means
                    .iter()
                    .map(|(qf, _, _, _, ipsnr)| (*qf as f64, display_db(*ipsnr)))
                    .collect(),
            )
        })
        .collect();
    let svg = svg_line_chart("Mean IPSNR vs quality factor by resolution", "quality factor", "IPSNR (dB)", &series);
    std::fs::write(path.as_ref(), svg).map_err(|e| Error::io(path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::synth::synth_image;

    fn tiny_testset(n: usize) -> Vec<(String, ImageBuffer)> {
        (0..n)
            .map(|i| (format!("img{}", i), synth_image(48, 48, true, 1000 + i as u64)))
            .collect()
    }

    #[test]
    fn identity_model_has_zero_ipsnr_everywhere() {
        let model: Model<f32> = Model::zeros(ModelConfig::toy(true)).unwrap();
        let testset = tiny_testset(2);
        let qfs = [10u8, 30, 50];
        let result = sweep_eval(&model, &testset, &qfs, Subsampling::S420).unwrap();
        assert_eq!(result.rows.len(), 6);
        for row in &result.rows {
            assert_eq!(row.report.ipsnr.unwrap(), 0.0, "qf {}", row.qf);
        }
        for &qf in &qfs {
            assert_eq!(result.mean_ipsnr_at(qf).unwrap(), 0.0);
        }
    }

    #[test]
    fn per_qf_row_count_equals_testset_size() {
        let model: Model<f32> = Model::zeros(ModelConfig::toy(true)).unwrap();
        let testset = tiny_testset(3);
        let result = sweep_eval(&model, &testset, &[20, 40], Subsampling::S420).unwrap();
        for qf in [20u8, 40] {
            assert_eq!(result.rows.iter().filter(|r| r.qf == qf).count(), 3);
        }
    }

    #[test]
    fn empty_inputs_are_errors() {
        let model: Model<f32> = Model::zeros(ModelConfig::toy(true)).unwrap();
        assert!(sweep_eval(&model, &[], &[10], Subsampling::S420).is_err());
        let testset = tiny_testset(1);
        assert!(sweep_eval(&model, &testset, &[], Subsampling::S420).is_err());
    }

    #[test]
    fn csv_and_svg_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let model: Model<f32> = Model::zeros(ModelConfig::toy(true)).unwrap();
        let result = sweep_eval(&model, &tiny_testset(1), &[10, 50], Subsampling::S420).unwrap();
        let csv_path = dir.path().join("sweep.csv");
        let svg_path = dir.path().join("sweep.svg");
        result.write_csv(&csv_path).unwrap();
        result.write_svg(&svg_path, "toy").unwrap();
        let csv = std::fs::read_to_string(csv_path).unwrap();
        assert!(csv.starts_with("path,qf,psnr,ssim,psnr_b,ipsnr,exact_match,scale_denominator"));
        assert_eq!(csv.lines().filter(|l| l.starts_with("mean,")).count(), 2);
        assert!(std::fs::read_to_string(svg_path).unwrap().contains("<polyline"));
    }

    #[test]
    fn resolution_sweep_shrinks_per_side() {
        let model: Model<f32> = Model::zeros(ModelConfig::toy(true)).unwrap();
        let testset = vec![("big".to_string(), synth_image(96, 64, true, 5))];
        let results = resolution_sweep(&model, &testset, &[30], &[2, 3], Subsampling::S420).unwrap();
        assert_eq!(results.len(), 2);
        assert!(results[0].1.rows[0].path.contains("@1/2"));
        assert_eq!(results[1].1.rows[0].scale_denominator, 3);
    }
}
