//! Datasets: seeded Gaussian-blob generation (the desk-scale stand-in for
//! image benchmarks) and a label,f0,f1,... CSV loader.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Feature matrix (n_samples × n_features, row-major f32) plus class
/// labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f32>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f32>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if n_features == 0 || n_classes == 0 {
            return Err(Error::Contract("dataset dims must be positive".into()));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::Contract(format!(
                "feature matrix {} does not match {} samples × {} features",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Contract(format!(
                "label {bad} exceeds class count {n_classes}"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            n_features,
            n_classes,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Split off the first `n_train` samples; the rest become the second
    /// dataset. Labels are interleaved by construction, so both halves
    /// stay near-balanced.
    pub fn split(&self, n_train: usize) -> Result<(Dataset, Dataset)> {
        if n_train == 0 || n_train >= self.n_samples() {
            return Err(Error::Contract(format!(
                "split point {n_train} outside 1..{}",
                self.n_samples()
            )));
        }
        let cut = n_train * self.n_features;
        let train = Dataset {
            features: self.features[..cut].to_vec(),
            labels: self.labels[..n_train].to_vec(),
            n_features: self.n_features,
            n_classes: self.n_classes,
        };
        let val = Dataset {
            features: self.features[cut..].to_vec(),
            labels: self.labels[n_train..].to_vec(),
            n_features: self.n_features,
            n_classes: self.n_classes,
        };
        Ok((train, val))
    }

    /// Write as CSV with a `label,f0,...` header.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "label")?;
        for i in 0..self.n_features {
            write!(out, ",f{i}")?;
        }
        writeln!(out)?;
        for s in 0..self.n_samples() {
            write!(out, "{}", self.labels[s])?;
            for v in self.sample(s) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Gaussian blobs: each class gets a seeded random center in R^d, samples
/// are center + isotropic noise with standard deviation `spread`. Labels
/// are assigned round-robin, so class counts differ by at most one.
pub fn gen_synthetic(
    seed: u64,
    n_samples: usize,
    input_dim: usize,
    classes: usize,
    spread: f32,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Contract("need at least two classes".into()));
    }
    if n_samples < classes {
        return Err(Error::Contract(format!(
            "need at least one sample per class ({n_samples} < {classes})"
        )));
    }
    if input_dim == 0 {
        return Err(Error::Contract("input_dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let centers: Vec<f32> = (0..classes * input_dim)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let mut features = Vec::with_capacity(n_samples * input_dim);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let c = i % classes;
        let center = &centers[c * input_dim..(c + 1) * input_dim];
        for &cv in center {
            let noise: f32 = normal.sample(&mut rng);
            features.push(cv + spread * noise);
        }
        labels.push(c);
    }
    Dataset::new(features, labels, input_dim, classes)
}

/// Parse `label,f0,f1,...` rows. An optional header line starting with
/// "label" is skipped; the feature count is inferred from the first data
/// row. When `declared_classes` is given every label must stay below it;
/// otherwise classes = max label + 1.
pub fn load_csv(path: &Path, declared_classes: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, declared_classes)
}

fn parse_csv(text: &str, declared_classes: Option<usize>) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut n_features: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 && trimmed.split(',').next().map(str::trim) == Some("label") {
            continue;
        }
        let mut fields = trimmed.split(',');
        let label_field = fields.next().unwrap().trim();
        let label: usize = label_field.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("label '{label_field}' is not a non-negative integer"),
        })?;
        let mut row = Vec::new();
        for f in fields {
            let f = f.trim();
            let v: f32 = f.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("feature '{f}' is not a number"),
            })?;
            row.push(v);
        }
        match n_features {
            None => {
                if row.is_empty() {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "row has a label but no features".into(),
                    });
                }
                n_features = Some(row.len());
            }
            Some(n) if n != row.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("row has {} features, expected {n}", row.len()),
                });
            }
            _ => {}
        }
        if let Some(k) = declared_classes {
            if label >= k {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("label {label} >= declared class count {k}"),
                });
            }
        }
        labels.push(label);
        features.extend_from_slice(&row);
    }
    let n_features = n_features.ok_or(Error::Parse {
        line: 1,
        msg: "no data rows".into(),
    })?;
    let classes = declared_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Dataset::new(features, labels, n_features, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_is_deterministic() {
        let a = gen_synthetic(7, 100, 4, 5, 1.0).unwrap();
        let b = gen_synthetic(7, 100, 4, 5, 1.0).unwrap();
        assert_eq!(a.labels(), b.labels());
        let ab: Vec<u32> = a.features.iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u32> = b.features.iter().map(|v| v.to_bits()).collect();
        assert_eq!(ab, bb);
        let c = gen_synthetic(8, 100, 4, 5, 1.0).unwrap();
        let cb: Vec<u32> = c.features.iter().map(|v| v.to_bits()).collect();
        assert_ne!(ab, cb);
    }

    #[test]
    fn gen_balanced_counts() {
        let d = gen_synthetic(7, 1000, 16, 10, 1.0).unwrap();
        for class in 0..10 {
            assert_eq!(d.labels().iter().filter(|&&l| l == class).count(), 100);
        }
        let odd = gen_synthetic(1, 101, 4, 10, 1.0).unwrap();
        let counts: Vec<usize> = (0..10)
            .map(|c| odd.labels().iter().filter(|&&l| l == c).count())
            .collect();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn gen_zero_spread_collapses_classes() {
        let d = gen_synthetic(3, 40, 4, 4, 0.0).unwrap();
        // All samples of a class are the center itself; a nearest-center
        // classifier is exact.
        let mut centers: Vec<Vec<f32>> = vec![Vec::new(); 4];
        for i in 0..d.n_samples() {
            let c = d.label(i);
            if centers[c].is_empty() {
                centers[c] = d.sample(i).to_vec();
            } else {
                assert_eq!(centers[c], d.sample(i).to_vec());
            }
        }
        let correct = (0..d.n_samples())
            .filter(|&i| {
                let nearest = (0..4)
                    .min_by(|&a, &b| {
                        let da: f32 = centers[a]
                            .iter()
                            .zip(d.sample(i))
                            .map(|(x, y)| (x - y) * (x - y))
                            .sum();
                        let db: f32 = centers[b]
                            .iter()
                            .zip(d.sample(i))
                            .map(|(x, y)| (x - y) * (x - y))
                            .sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                nearest == d.label(i)
            })
            .count();
        assert_eq!(correct, d.n_samples());
    }

    #[test]
    fn csv_parses_basic_rows() {
        let d = parse_csv("0,1.0,2.0\n1,3.0,4.0", None).unwrap();
        assert_eq!(d.n_samples(), 2);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.n_classes(), 2);
        assert_eq!(d.sample(1), &[3.0, 4.0]);
    }

    #[test]
    fn csv_header_is_optional_and_equivalent(){
        let no_header = parse_csv("0,1.0,2.0\n1,3.0,4.0", None).unwrap();
        let with_header = parse_csv("label,f0,f1\n0,1.0,2.0\n1,3.0,4.0", None).unwrap();
        assert_eq!(no_header.labels(), with_header.labels());
        assert_eq!(no_header.features, with_header.features);
    }

    #[test]
    fn csv_ragged_row_errors_with_line() {
        match parse_csv("0,1.0,2.0\n1,3.0", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_non_numeric_errors_with_line() {
        match parse_csv("0,1.0\n1,abc", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_label_beyond_declared_classes_errors() {
        match parse_csv("0,1.0\n5,2.0", Some(3)) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("declared class count"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_roundtrip_through_save() {
        let d = gen_synthetic(2, 30, 3, 3, 0.7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blobs.csv");
        d.save_csv(&path).unwrap();
        let back = load_csv(&path, Some(3)).unwrap();
        assert_eq!(back.labels(), d.labels());
        assert_eq!(back.n_features(), d.n_features());
    }

    #[test]
    fn split_keeps_balance_and_sizes() {
        let d = gen_synthetic(4, 300, 4, 3, 1.0).unwrap();
        let (train, val) = d.split(200).unwrap();
        assert_eq!(train.n_samples(), 200);
        assert_eq!(val.n_samples(), 100);
        assert_eq!(train.n_classes(), 3);
    }
}
