//! Evaluation metrics: Fréchet distance between Gaussian feature fits,
//! character/word error rates, and the per-writer averaged Fréchet distance.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::image::TextImage;

/// Regularizer added to both covariances when the matrix square root fails.
pub const SQRT_EPSILON: f64 = 1e-6;
/// Relative tolerance for negative covariance eigenvalues.
pub const PSD_TOLERANCE: f64 = 1e-6;

/// Maps images to fixed-length feature vectors.
pub trait FeatureExtractor {
    fn dim(&self) -> usize;
    fn extract(&self, images: &[TextImage]) -> Result<Vec<Vec<f64>>>;
}

/// Mean and unbiased covariance of a feature sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub count: usize,
}

impl FeatureStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, count: usize) -> Result<Self> {
        let m = mean.len();
        if cov.nrows() != m || cov.ncols() != m {
            return Err(Error::Metric(format!(
                "covariance is {}x{}, mean has length {m}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if count < 2 {
            return Err(Error::Metric(format!("need at least 2 samples, got {count}")));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-9 * scale {
            return Err(Error::Metric("covariance is not symmetric".into()));
        }
        Ok(Self { mean, cov, count })
    }

    pub fn from_features(features: &[Vec<f64>]) -> Result<Self> {
        let n = features.len();
        if n < 2 {
            return Err(Error::Metric(format!("need at least 2 samples, got {n}")));
        }
        let m = features[0].len();
        if features.iter().any(|f| f.len() != m) {
            return Err(Error::Metric("feature vectors differ in length".into()));
        }
        let mut mean = DVector::zeros(m);
        for f in features {
            mean += DVector::from_column_slice(f);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(m, m);
        for f in features {
            let d = DVector::from_column_slice(f) - &mean;
            cov += &d * d.transpose();
        }
        cov /= (n - 1) as f64;
        // Exact symmetry regardless of summation rounding.
        let cov = (&cov + cov.transpose()) * 0.5;
        Self::new(mean, cov, n)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn collect_stats(images: &[TextImage], extractor: &dyn FeatureExtractor) -> Result<FeatureStats> {
    if images.len() < 2 {
        return Err(Error::Metric(format!(
            "need at least 2 images, got {}",
            images.len()
        )));
    }
    let features = extractor.extract(images)?;
    if features.len() != images.len() || features.iter().any(|f| f.len() != extractor.dim()) {
        return Err(Error::Metric(format!(
            "extractor returned features that do not match {} images of dimension {}",
            images.len(),
            extractor.dim()
        )));
    }
    FeatureStats::from_features(&features)
}

fn check_psd(cov: &DMatrix<f64>, which: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let eig = SymmetricEigen::new(cov.clone());
    let max = eig.eigenvalues.amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE * max {
        return Err(Error::Metric(format!(
            "{which} covariance is not positive semi-definite (eigenvalue {min:e})"
        )));
    }
    Ok(eig)
}

fn psd_sqrt(eig: &SymmetricEigen<f64, nalgebra::Dyn>) -> DMatrix<f64> {
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Tr((A B)^{1/2}) for PSD A, B via the symmetric form A^{1/2} B A^{1/2}.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let sa = psd_sqrt(&check_psd(a, "first")?);
    let m = &sa * b * &sa;
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    Ok(eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum())
}

/// ‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2}).
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Metric(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    check_psd(&a.cov, "first")?;
    check_psd(&b.cov, "second")?;
    let diff = (&a.mean - &b.mean).norm_squared();
    let mut tr_sqrt = trace_sqrt_product(&a.cov, &b.cov)?;
    let (mut tr_a, mut tr_b) = (a.cov.trace(), b.cov.trace());
    if !tr_sqrt.is_finite() {
        let eye = DMatrix::<f64>::identity(a.dim(), a.dim()) * SQRT_EPSILON;
        let (ra, rb) = (&a.cov + &eye, &b.cov + &eye);
        tr_sqrt = trace_sqrt_product(&ra, &rb)?;
        tr_a = ra.trace();
        tr_b = rb.trace();
        if !tr_sqrt.is_finite() {
            return Err(Error::Metric("matrix square root did not converge".into()));
        }
    }
    Ok((diff + tr_a + tr_b - 2.0 * tr_sqrt).max(0.0))
}

/// Levenshtein distance over arbitrary token sequences.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character error rate: edit distance over characters / reference length.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<char> = reference.chars().collect();
    if r.is_empty() {
        return Err(Error::Metric("empty reference".into()));
    }
    let h: Vec<char> = hypothesis.chars().collect();
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

/// Word error rate over whitespace-separated tokens.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    if r.is_empty() {
        return Err(Error::Metric("reference has no words".into()));
    }
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

/// Corpus-level rates: summed edit distances over summed reference lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    pub cer: f64,
    pub wer: f64,
    pub lines: usize,
}

pub fn corpus_error_rates(pairs: &[(String, String)]) -> Result<ErrorRates> {
    let (mut ce, mut cn, mut we, mut wn) = (0usize, 0usize, 0usize, 0usize);
    for (i, (r, h)) in pairs.iter().enumerate() {
        let rc: Vec<char> = r.chars().collect();
        let rw: Vec<&str> = r.split_whitespace().collect();
        if rw.is_empty() {
            return Err(Error::Metric(format!("reference line {} is empty", i + 1)));
        }
        let hc: Vec<char> = h.chars().collect();
        let hw: Vec<&str> = h.split_whitespace().collect();
        ce += edit_distance(&rc, &hc);
        cn += rc.len();
        we += edit_distance(&rw, &hw);
        wn += rw.len();
    }
    if pairs.is_empty() {
        return Err(Error::Metric("no lines to score".into()));
    }
    Ok(ErrorRates {
        cer: ce as f64 / cn as f64,
        wer: we as f64 / wn as f64,
        lines: pairs.len(),
    })
}

/// Unweighted mean of per-writer Fréchet distances.
pub fn per_writer_fid(
    real_by_writer: &BTreeMap<String, Vec<TextImage>>,
    fake_by_writer: &BTreeMap<String, Vec<TextImage>>,
    extractor: &dyn FeatureExtractor,
) -> Result<f64> {
    if real_by_writer.is_empty() {
        return Err(Error::Metric("no writers".into()));
    }
    if !real_by_writer.keys().eq(fake_by_writer.keys()) {
        return Err(Error::Metric("real and generated writer sets differ".into()));
    }
    let mut total = 0.0;
    for (writer, real) in real_by_writer {
        let fake = &fake_by_writer[writer];
        if real.len() < 2 || fake.len() < 2 {
            return Err(Error::Metric(format!(
                "writer {writer:?} needs at least 2 real and 2 generated images"
            )));
        }
        let a = collect_stats(real, extractor)?;
        let b = collect_stats(fake, extractor)?;
        total += frechet_distance(&a, &b)?;
    }
    Ok(total / real_by_writer.len() as f64)
}
