use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::metrics::{detection_statistic, max_f1, roc_auc, GroundTruthMask, MaxF1, RocCurve};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::localization::{localize, FingerprintProvider, LocalizationConfig};

/// Suffix tried first when looking up the mask of `<stem>.<ext>`;
/// `<stem>.png` in the mask directory is the fallback.
pub const MASK_SUFFIX: &str = "_mask";

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageKind {
    /// Manipulated image with a ground-truth mask.
    Fake,
    /// Pristine image, used only for detection.
    Real,
}

impl std::fmt::Display for ImageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ImageKind::Fake => "fake",
            ImageKind::Real => "real",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    /// `f1` is absent for real images.
    Ok { f1: Option<MaxF1>, score: f64 },
    Skipped(String),
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub name: String,
    pub kind: ImageKind,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub records: Vec<ImageRecord>,
    /// Unweighted mean of the per-image max-F1; `None` when no fake image
    /// was evaluated.
    pub mean_f1: Option<f64>,
    /// Fake vs real detection; `None` without scored images of both kinds.
    pub roc: Option<RocCurve>,
}

impl EvalReport {
    fn count(&self, f: impl Fn(&Outcome) -> bool) -> usize {
        self.records.iter().filter(|r| f(&r.outcome)).count()
    }

    pub fn total(&self) -> usize {
        self.records.len()
    }

    pub fn successes(&self) -> usize {
        self.count(|o| matches!(o, Outcome::Ok { .. }))
    }

    pub fn skipped(&self) -> usize {
        self.count(|o| matches!(o, Outcome::Skipped(_)))
    }

    pub fn failed(&self) -> usize {
        self.count(|o| matches!(o, Outcome::Failed(_)))
    }

    pub fn scores(&self, kind: ImageKind) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.kind == kind)
            .filter_map(|r| match r.outcome {
                Outcome::Ok { score, .. } => Some(score),
                _ => None,
            })
            .collect()
    }

    /// Plain-text report: a header line, one tab-separated record per
    /// image, a `[summary]` block of `key = value` lines and, when an AUC
    /// exists, a `[roc]` block of `fpr<TAB>tpr` points.
    pub fn to_text(&self) -> String {
        let mut s = String::from("kind\tname\tstatus\tmax_f1\tthreshold\torientation\tscore\tdetail\n");
        for r in &self.records {
            let line = match &r.outcome {
                Outcome::Ok { f1: Some(m), score } => format!(
                    "ok\t{}\t{}\t{}\t{score}\t",
                    m.f1, m.threshold, m.orientation
                ),
                Outcome::Ok { f1: None, score } => format!("ok\t-\t-\t-\t{score}\t"),
                Outcome::Skipped(why) => format!("skipped\t-\t-\t-\t-\t{}", one_line(why)),
                Outcome::Failed(why) => format!("failed\t-\t-\t-\t-\t{}", one_line(why)),
            };
            writeln!(s, "{}\t{}\t{line}", r.kind, r.name).unwrap();
        }
        s.push_str("[summary]\n");
        writeln!(s, "total = {}", self.total()).unwrap();
        writeln!(s, "succeeded = {}", self.successes()).unwrap();
        writeln!(s, "skipped = {}", self.skipped()).unwrap();
        writeln!(s, "failed = {}", self.failed()).unwrap();
        writeln!(s, "mean_f1 = {}", opt(self.mean_f1)).unwrap();
        writeln!(s, "auc = {}", opt(self.roc.as_ref().map(|r| r.auc))).unwrap();
        if let Some(roc) = &self.roc {
            s.push_str("[roc]\n");
            for (fpr, tpr) in &roc.points {
                writeln!(s, "{fpr}\t{tpr}").unwrap();
            }
        }
        s
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let width = self.records.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        let mut s = format!("{:<width$}  kind  status   max-F1  score\n", "name");
        for r in &self.records {
            let (status, f1, score) = match &r.outcome {
                Outcome::Ok { f1, score } => (
                    "ok".to_string(),
                    f1.map_or("-".into(), |m| format!("{:.3}", m.f1)),
                    format!("{score:.3}"),
                ),
                Outcome::Skipped(why) => (format!("skipped ({})", one_line(why)), "-".into(), "-".into()),
                Outcome::Failed(why) => (format!("failed ({})", one_line(why)), "-".into(), "-".into()),
            };
            if status == "ok" {
                writeln!(s, "{:<width$}  {:<4}  {status:<7}  {f1:>6}  {score:>5}", r.name, r.kind).unwrap();
            } else {
                writeln!(s, "{:<width$}  {:<4}  {status}", r.name, r.kind).unwrap();
            }
        }
        writeln!(
            s,
            "{} images: {} ok, {} skipped, {} failed",
            self.total(),
            self.successes(),
            self.skipped(),
            self.failed()
        )
        .unwrap();
        writeln!(
            s,
            "mean max-F1 {}, AUC {}",
            self.mean_f1.map_or("undefined".into(), |v| format!("{v:.4}")),
            self.roc.as_ref().map_or("undefined".into(), |r| format!("{:.4}", r.auc))
        )
        .unwrap();
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("undefined".to_string(), |v| v.to_string())
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\t'], " ")
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files of `dir`, sorted by file name, minus mask files.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::from(e).at_path(dir))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::from(e).at_path(dir))?.path();
        let is_mask = path
            .file_stem()
            .and_then(|s| s.to_str())
            .is_some_and(|s| s.ends_with(MASK_SUFFIX));
        if path.is_file() && is_image(&path) && !is_mask {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Mask of `image` in `mask_dir`: `<stem>_mask.png`, else `<stem>.png`
/// (unless that is the image itself).
pub fn find_mask(image: &Path, mask_dir: &Path) -> Option<PathBuf> {
    let stem = image.file_stem()?.to_str()?;
    let suffixed = mask_dir.join(format!("{stem}{MASK_SUFFIX}.png"));
    if suffixed.is_file() {
        return Some(suffixed);
    }
    let plain = mask_dir.join(format!("{stem}.png"));
    (plain.is_file() && plain != image).then_some(plain)
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

struct Job {
    image: PathBuf,
    kind: ImageKind,
    mask: Option<PathBuf>,
}

fn run_job(job: &Job, providers: &[&dyn FingerprintProvider], config: &LocalizationConfig) -> Outcome {
    let mask = match (&job.kind, &job.mask) {
        (ImageKind::Real, _) => None,
        (ImageKind::Fake, None) => return Outcome::Skipped("no mask".into()),
        (ImageKind::Fake, Some(p)) => match GroundTruthMask::load(p) {
            Ok(m) => Some(m),
            Err(e) => return Outcome::Skipped(format!("mask: {e}")),
        },
    };
    let img = match GrayImage::load(&job.image) {
        Ok(img) => img,
        Err(e) => return Outcome::Failed(format!("load: {e}")),
    };
    if let Some(m) = &mask {
        if m.dims() != img.dims() {
            let ((mw, mh), (w, h)) = (m.dims(), img.dims());
            return Outcome::Skipped(format!("mask is {mw}x{mh}, image is {w}x{h}"));
        }
        if m.is_degenerate() {
            return Outcome::Skipped("mask has a single class".into());
        }
    }
    let loc = match localize(&img, providers, config) {
        Ok(loc) => loc,
        Err(e) => return Outcome::Failed(e.to_string()),
    };
    let heat = loc.heatmap.field();
    let score = match detection_statistic(heat.samples()) {
        Ok(s) => s,
        Err(e) => return Outcome::Failed(format!("detection: {e}")),
    };
    let f1 = match mask.map(|m| max_f1(heat, &m)).transpose() {
        Ok(f) => f.flatten(),
        Err(e) => return Outcome::Failed(format!("f1: {e}")),
    };
    Outcome::Ok { f1, score }
}

/// Localizes every image of `fake_dir` (scored against its mask from
/// `mask_dir`) and of the optional `real_dir`, on `workers` threads.
/// Per-image problems become skipped or failed records; records keep the
/// sorted file order whatever the worker count.
pub fn evaluate_dataset(
    fake_dir: &Path,
    mask_dir: &Path,
    real_dir: Option<&Path>,
    providers: &[&dyn FingerprintProvider],
    config: &LocalizationConfig,
    workers: usize,
) -> Result<EvalReport> {
    if providers.is_empty() {
        return Err(Error::invalid("evaluation needs at least one fingerprint provider"));
    }
    config.validate()?;
    if !mask_dir.is_dir() {
        return Err(Error::invalid("mask directory does not exist").at_path(mask_dir));
    }
    let mut jobs: Vec<Job> = list_images(fake_dir)?
        .into_iter()
        .map(|image| {
            let mask = find_mask(&image, mask_dir);
            Job { image, kind: ImageKind::Fake, mask }
        })
        .collect();
    if jobs.iter().all(|j| j.mask.is_none()) {
        return Err(Error::invalid(format!(
            "no image of {} has a mask in {}",
            fake_dir.display(),
            mask_dir.display()
        )));
    }
    if let Some(dir) = real_dir {
        jobs.extend(list_images(dir)?.into_iter().map(|image| Job {
            image,
            kind: ImageKind::Real,
            mask: None,
        }));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let outcomes: Vec<Outcome> =
        pool.install(|| jobs.par_iter().map(|j| run_job(j, providers, config)).collect());
    let records: Vec<ImageRecord> = jobs
        .iter()
        .zip(outcomes)
        .map(|(j, outcome)| ImageRecord {
            name: file_name(&j.image),
            kind: j.kind,
            outcome,
        })
        .collect();
    let f1s: Vec<f64> = records
        .iter()
        .filter_map(|r| match r.outcome {
            Outcome::Ok { f1: Some(m), .. } => Some(m.f1),
            _ => None,
        })
        .collect();
    let mean_f1 = (!f1s.is_empty()).then(|| f1s.iter().sum::<f64>() / f1s.len() as f64);
    let mut report = EvalReport {
        records,
        mean_f1,
        roc: None,
    };
    let (fake, real) = (report.scores(ImageKind::Fake), report.scores(ImageKind::Real));
    if !fake.is_empty() && !real.is_empty() {
        report.roc = Some(roc_auc(&fake, &real)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::HighpassProvider;

    fn write_png(path: &Path, img: &GrayImage) {
        img.save_png(path).unwrap();
    }

    #[test]
    fn mask_lookup_prefers_the_suffix() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let img = GrayImage::filled(8, 8, 1.0);
        for name in ["a.png", "a_mask.png", "b.jpg", "b.png", "c.png"] {
            write_png(&d.join(name), &img);
        }
        assert_eq!(find_mask(&d.join("a.png"), d), Some(d.join("a_mask.png")));
        assert_eq!(find_mask(&d.join("b.jpg"), d), Some(d.join("b.png")));
        assert_eq!(find_mask(&d.join("c.png"), d), None);
        let names: Vec<String> = list_images(d).unwrap().iter().map(|p| file_name(p)).collect();
        assert_eq!(names, ["a.png", "b.jpg", "b.png", "c.png"]);
    }

    #[test]
    fn all_zero_mask_is_skipped_and_mean_is_undefined() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let img = GrayImage::from_fn(64, 64, |x, y| ((x * 31 + y * 17) % 251) as f64);
        write_png(&d.join("only.png"), &img);
        write_png(&d.join("only_mask.png"), &GrayImage::filled(64, 64, 0.0));
        let report = evaluate_dataset(
            d,
            d,
            None,
            &[&HighpassProvider],
            &LocalizationConfig::desk(),
            1,
        )
        .unwrap();
        assert_eq!((report.total(), report.skipped()), (1, 1));
        assert_eq!(report.mean_f1, None);
        assert!(report.to_text().contains("mean_f1 = undefined"));
    }

    #[test]
    fn no_masks_at_all_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("x.png"), &GrayImage::filled(40, 40, 3.0));
        let masks = tempfile::tempdir().unwrap();
        let err = evaluate_dataset(
            dir.path(),
            masks.path(),
            None,
            &[&HighpassProvider],
            &LocalizationConfig::desk(),
            1,
        )
        .unwrap_err();
        assert!(err.is_input_error());
    }
}
