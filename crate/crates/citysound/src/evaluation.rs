//! Evaluation protocols: accuracy, confusion matrices, pair-scheme
//! marginalisation, the multi-label splicing measure with threshold
//! binarisation, per-class recall tables, and city feature distances.
//!
//! Argmax ties are always broken toward the lowest index.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::{City, CITIES};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::labels::LabelScheme;

/// Geographic distances in miles between the six cities, one row per
/// unordered pair, ordered nearest first. Used as the presentation order of
/// the feature-distance table.
pub const CITY_DISTANCE_MILES: [(City, City, u32); 15] = [
    (City::London, City::Paris, 234),
    (City::Helsinki, City::Stockholm, 302),
    (City::Barcelona, City::Paris, 620),
    (City::Paris, City::Vienna, 721),
    (City::Barcelona, City::London, 829),
    (City::London, City::Vienna, 867),
    (City::Stockholm, City::Vienna, 876),
    (City::Helsinki, City::Vienna, 1007),
    (City::Barcelona, City::Vienna, 1034),
    (City::London, City::Stockholm, 1083),
    (City::Paris, City::Stockholm, 1094),
    (City::Helsinki, City::London, 1384),
    (City::Helsinki, City::Paris, 1395),
    (City::Barcelona, City::Stockholm, 1642),
    (City::Barcelona, City::Helsinki, 1897),
];

/// First index of the maximum (ties to the lowest index).
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..row.len() {
        if row[i] > row[best] {
            best = i;
        }
    }
    best
}

/// Per-sample class scores under one labelling scheme.
#[derive(Debug, Clone)]
pub struct PredictionMatrix {
    pub scores: Vec<f64>,
    pub n_classes: usize,
    pub scheme: LabelScheme,
    pub sample_ids: Vec<String>,
}

impl PredictionMatrix {
    pub fn new(scores: Vec<f64>, scheme: LabelScheme, sample_ids: Vec<String>) -> Self {
        let n_classes = if sample_ids.is_empty() { 0 } else { scores.len() / sample_ids.len() };
        PredictionMatrix { scores, n_classes, scheme, sample_ids }
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n_classes..(i + 1) * self.n_classes]
    }

    fn check_alignment(&self, truth_len: usize) -> Result<()> {
        if self.n_samples() == 0 {
            return Err(Error::EmptyInput("no predictions to evaluate".into()));
        }
        if truth_len != self.n_samples() {
            return Err(Error::Shape(format!(
                "{} truth labels for {} predictions",
                truth_len,
                self.n_samples()
            )));
        }
        Ok(())
    }
}

/// Fraction of rows whose argmax equals the true class.
pub fn accuracy(pred: &PredictionMatrix, truth: &[usize]) -> Result<f64> {
    pred.check_alignment(truth.len())?;
    let correct = truth
        .iter()
        .enumerate()
        .filter(|(i, &t)| argmax(pred.row(*i)) == t)
        .count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Integer confusion counts, true class by predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<usize>,
    pub n_classes: usize,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    #[inline]
    pub fn at(&self, true_class: usize, predicted: usize) -> usize {
        self.counts[true_class * self.n_classes + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n_classes).map(|i| self.at(i, i)).sum()
    }

    pub fn row_sum(&self, true_class: usize) -> usize {
        self.counts[true_class * self.n_classes..(true_class + 1) * self.n_classes]
            .iter()
            .sum()
    }

    /// CSV with predicted-class names in the header and the true-class name
    /// leading each row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true_class");
        for name in &self.class_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (i, name) in self.class_names.iter().enumerate() {
            let _ = write!(out, "{name}");
            for j in 0..self.n_classes {
                let _ = write!(out, ",{}", self.at(i, j));
            }
            out.push('\n');
        }
        out
    }

    /// Binary 8-bit PGM image, counts scaled to the full grey range.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        let mut bytes = format!("P5\n{} {}\n255\n", self.n_classes, self.n_classes).into_bytes();
        bytes.extend(self.counts.iter().map(|&c| ((c * 255) / max) as u8));
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

/// Count (true, predicted) pairs from row argmaxes.
pub fn confusion(
    pred: &PredictionMatrix,
    truth: &[usize],
    class_names: Vec<String>,
) -> Result<ConfusionMatrix> {
    pred.check_alignment(truth.len())?;
    let n = pred.n_classes;
    if class_names.len() != n {
        return Err(Error::Shape(format!(
            "{} class names for {n} classes",
            class_names.len()
        )));
    }
    let mut counts = vec![0usize; n * n];
    for (i, &t) in truth.iter().enumerate() {
        if t >= n {
            return Err(Error::Index(format!("true class {t} out of range {n}")));
        }
        counts[t * n + argmax(pred.row(i))] += 1;
    }
    Ok(ConfusionMatrix { counts, n_classes: n, class_names })
}

/// Component accuracies of a pair scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMarginals {
    /// Scene accuracy for pair60, group accuracy for grouped_pair18.
    pub scene_or_group: f64,
    pub city: f64,
    /// Both components right, i.e. the pair argmax exactly correct.
    pub joint: f64,
}

/// Marginalise pair-scheme predictions: argmax over the full pair space,
/// decode to components, score each separately plus jointly.
///
/// `truth` holds pair indices in the scheme's own layout.
pub fn pair_marginals(pred: &PredictionMatrix, truth: &[usize]) -> Result<PairMarginals> {
    if !matches!(pred.scheme, LabelScheme::Pair60 | LabelScheme::GroupedPair18) {
        return Err(Error::Scheme(format!(
            "pair marginals need a pair scheme, got {}",
            pred.scheme
        )));
    }
    pred.check_alignment(truth.len())?;
    let n = truth.len() as f64;
    let (mut comp, mut city, mut joint) = (0usize, 0usize, 0usize);
    for (i, &t) in truth.iter().enumerate() {
        let p = argmax(pred.row(i));
        if p / 6 == t / 6 {
            comp += 1;
        }
        if p % 6 == t % 6 {
            city += 1;
        }
        if p == t {
            joint += 1;
        }
    }
    Ok(PairMarginals {
        scene_or_group: comp as f64 / n,
        city: city as f64 / n,
        joint: joint as f64 / n,
    })
}

/// Result of the 16-class multi-label protocol.
#[derive(Debug, Clone)]
pub struct MultilabelReport {
    pub scene_accuracy: f64,
    pub city_accuracy: f64,
    pub joint_accuracy: f64,
    /// scores >= threshold, row-major over the 16 classes.
    pub binarized: Vec<bool>,
    pub threshold: f64,
}

/// Splice the 16-class prediction matrix into scene (0..10) and city
/// (10..16) sub-matrices, score each by argmax, and report the binarised
/// matrix at the global threshold alongside.
///
/// `truth` holds (scene index 0..10, city index 0..6) per sample.
pub fn multilabel_evaluate(
    pred: &PredictionMatrix,
    truth: &[(usize, usize)],
    threshold: f64,
) -> Result<MultilabelReport> {
    if pred.scheme != LabelScheme::Multilabel16 || pred.n_classes != 16 {
        return Err(Error::Scheme(format!(
            "multi-label evaluation needs 16-class predictions, got {} under {}",
            pred.n_classes, pred.scheme
        )));
    }
    pred.check_alignment(truth.len())?;
    let n = truth.len() as f64;
    let (mut scene, mut city, mut joint) = (0usize, 0usize, 0usize);
    for (i, &(ts, tc)) in truth.iter().enumerate() {
        let row = pred.row(i);
        let ps = argmax(&row[0..10]);
        let pc = argmax(&row[10..16]);
        let s_ok = ps == ts;
        let c_ok = pc == tc;
        scene += usize::from(s_ok);
        city += usize::from(c_ok);
        joint += usize::from(s_ok && c_ok);
    }
    Ok(MultilabelReport {
        scene_accuracy: scene as f64 / n,
        city_accuracy: city as f64 / n,
        joint_accuracy: joint as f64 / n,
        binarized: pred.scores.iter().map(|&v| v >= threshold).collect(),
        threshold,
    })
}

/// Per-class recall with macro average over the defined rows.
#[derive(Debug, Clone)]
pub struct PerClassAccuracy {
    pub class_names: Vec<String>,
    /// Recall per true class; `None` where the class has no support.
    pub recall: Vec<Option<f64>>,
    pub macro_average: f64,
}

/// Recall per true class (confusion diagonal over row sum); zero-support
/// classes are undefined and excluded from the macro average.
pub fn per_class_accuracy(
    pred: &PredictionMatrix,
    truth: &[usize],
    class_names: Vec<String>,
) -> Result<PerClassAccuracy> {
    let cm = confusion(pred, truth, class_names)?;
    let mut recall = Vec::with_capacity(cm.n_classes);
    let mut sum = 0.0;
    let mut defined = 0usize;
    for i in 0..cm.n_classes {
        let support = cm.row_sum(i);
        if support == 0 {
            recall.push(None);
        } else {
            let r = cm.at(i, i) as f64 / support as f64;
            recall.push(Some(r));
            sum += r;
            defined += 1;
        }
    }
    let macro_average = if defined == 0 { f64::NAN } else { sum / defined as f64 };
    Ok(PerClassAccuracy { class_names: cm.class_names, recall, macro_average })
}

/// One row of the city distance table.
#[derive(Debug, Clone, PartialEq)]
pub struct CityDistanceRow {
    pub city_a: City,
    pub city_b: City,
    pub miles: u32,
    pub feature_euclidean: f64,
}

/// Pairwise Euclidean distances between per-city mean feature vectors,
/// presented in the geographic (miles) order.
#[derive(Debug, Clone)]
pub struct CityDistanceTable {
    pub rows: Vec<CityDistanceRow>,
}

impl CityDistanceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("city_a,city_b,miles,feature_euclidean\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.city_a, r.city_b, r.miles, r.feature_euclidean);
        }
        out
    }

    pub fn get(&self, a: City, b: City) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| (r.city_a, r.city_b) == (a, b) || (r.city_a, r.city_b) == (b, a))
            .map(|r| r.feature_euclidean)
    }
}

/// Mean feature vector per city (over all frames of all its matrices, per
/// bin), then pairwise Euclidean distances for all 15 city pairs.
pub fn city_feature_distances(features: &[(City, &FeatureMatrix)]) -> Result<CityDistanceTable> {
    let n_bins = features
        .first()
        .map(|(_, fm)| fm.n_bins)
        .ok_or_else(|| Error::EmptyInput("no feature matrices".into()))?;

    let mut sums = vec![vec![0.0f64; n_bins]; 6];
    let mut frames = [0usize; 6];
    for (city, fm) in features {
        if fm.n_bins != n_bins {
            return Err(Error::Shape(format!(
                "mixed bin counts: {} vs {n_bins}",
                fm.n_bins
            )));
        }
        let c = city.index();
        frames[c] += fm.n_frames;
        for t in 0..fm.n_frames {
            for (acc, &v) in sums[c].iter_mut().zip(fm.row(t)) {
                *acc += f64::from(v);
            }
        }
    }
    for (i, &city) in CITIES.iter().enumerate() {
        if frames[i] == 0 {
            return Err(Error::Stratum(format!("no training features for city '{city}'")));
        }
        for v in &mut sums[i] {
            *v /= frames[i] as f64;
        }
    }

    let rows = CITY_DISTANCE_MILES
        .iter()
        .map(|&(a, b, miles)| {
            let d2: f64 = sums[a.index()]
                .iter()
                .zip(&sums[b.index()])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            CityDistanceRow { city_a: a, city_b: b, miles, feature_euclidean: d2.sqrt() }
        })
        .collect();
    Ok(CityDistanceTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(rows: Vec<Vec<f64>>, scheme: LabelScheme) -> PredictionMatrix {
        let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
        let scores = rows.into_iter().flatten().collect();
        PredictionMatrix::new(scores, scheme, ids)
    }

    #[test]
    fn perfect_predictions_score_one() {
        let p = pm(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            LabelScheme::Grouped3,
        );
        assert_eq!(accuracy(&p, &[0, 1, 2]).unwrap(), 1.0);
    }

    #[test]
    fn uniform_rows_tie_break_to_first() {
        let p = pm(vec![vec![1.0 / 6.0; 6]; 4], LabelScheme::City6);
        // first-index rule: every row predicts class 0
        assert_eq!(accuracy(&p, &[1, 2, 3, 4]).unwrap(), 0.0);
        assert_eq!(accuracy(&p, &[0, 0, 1, 0]).unwrap(), 0.75);
    }

    #[test]
    fn empty_predictions_rejected() {
        let p = pm(vec![], LabelScheme::City6);
        assert!(matches!(accuracy(&p, &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn confusion_diagonal_for_perfect() {
        let p = pm(
            vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            LabelScheme::City6,
        );
        let cm = confusion(&p, &[0, 0, 1], vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(cm.at(0, 0), 2);
        assert_eq!(cm.at(1, 1), 1);
        assert_eq!(cm.trace(), 3);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn confusion_single_off_diagonal() {
        let mut scores = vec![0.0; 6];
        scores[5] = 0.9;
        let p = PredictionMatrix::new(scores, LabelScheme::City6, vec!["x".into()]);
        let names = (0..6).map(|i| format!("c{i}")).collect();
        let cm = confusion(&p, &[2], names).unwrap();
        assert_eq!(cm.at(2, 5), 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn pair_marginals_perfect_and_bounds() {
        let mut rows = Vec::new();
        let truth: Vec<usize> = (0..18).collect();
        for t in &truth {
            let mut r = vec![0.0; 18];
            r[*t] = 1.0;
            rows.push(r);
        }
        let p = pm(rows, LabelScheme::GroupedPair18);
        let m = pair_marginals(&p, &truth).unwrap();
        assert_eq!((m.scene_or_group, m.city, m.joint), (1.0, 1.0, 1.0));
    }

    #[test]
    fn pair_marginals_rejects_non_pair_scheme() {
        let p = pm(vec![vec![1.0, 0.0]], LabelScheme::City6);
        assert!(matches!(pair_marginals(&p, &[0]), Err(Error::Scheme(_))));
    }

    #[test]
    fn multilabel_two_hot_perfect() {
        let mut rows = Vec::new();
        let truth = vec![(3usize, 2usize), (9, 5)];
        for &(s, c) in &truth {
            let mut r = vec![0.0; 16];
            r[s] = 1.0;
            r[10 + c] = 1.0;
            rows.push(r);
        }
        let p = pm(rows, LabelScheme::Multilabel16);
        let rep = multilabel_evaluate(&p, &truth, 0.4).unwrap();
        assert_eq!(
            (rep.scene_accuracy, rep.city_accuracy, rep.joint_accuracy),
            (1.0, 1.0, 1.0)
        );
        assert_eq!(rep.binarized.iter().filter(|&&b| b).count(), 4);
    }

    #[test]
    fn multilabel_scene_right_city_wrong() {
        let truth = vec![(0usize, 0usize); 3];
        let mut rows = Vec::new();
        for _ in 0..3 {
            let mut r = vec![0.0; 16];
            r[0] = 0.9; // scene right
            r[10 + 3] = 0.9; // city wrong
            rows.push(r);
        }
        let p = pm(rows, LabelScheme::Multilabel16);
        let rep = multilabel_evaluate(&p, &truth, 0.4).unwrap();
        assert_eq!(rep.scene_accuracy, 1.0);
        assert_eq!(rep.city_accuracy, 0.0);
        assert_eq!(rep.joint_accuracy, 0.0);
    }

    #[test]
    fn per_class_zero_support_excluded() {
        let p = pm(vec![vec![1.0, 0.0, 0.0], vec![0.9, 0.1, 0.0]], LabelScheme::Grouped3);
        let names = vec!["x".into(), "y".into(), "z".into()];
        let r = per_class_accuracy(&p, &[0, 1], names).unwrap();
        assert_eq!(r.recall[0], Some(1.0));
        assert_eq!(r.recall[1], Some(0.0));
        assert_eq!(r.recall[2], None);
        assert!((r.macro_average - 0.5).abs() < 1e-12);
    }

    #[test]
    fn city_distances_identical_and_constant() {
        // city A constant 0, city B constant 1 across 128 bins -> sqrt(128)
        let zero = FeatureMatrix::new(4, 128);
        let one = FeatureMatrix { values: vec![1.0; 4 * 128], n_frames: 4, n_bins: 128 };
        let features: Vec<(City, &FeatureMatrix)> = CITIES
            .iter()
            .map(|&c| (c, if c == City::Barcelona { &one } else { &zero }))
            .collect();
        let table = city_feature_distances(&features).unwrap();
        assert_eq!(table.rows.len(), 15);
        let d = table.get(City::Barcelona, City::Paris).unwrap();
        assert!((d - 128f64.sqrt()).abs() < 1e-9, "{d}");
        let same = table.get(City::London, City::Paris).unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn miles_constants_spot_checks() {
        let lp = CITY_DISTANCE_MILES
            .iter()
            .find(|(a, b, _)| (*a, *b) == (City::London, City::Paris))
            .unwrap();
        assert_eq!(lp.2, 234);
        let hs = CITY_DISTANCE_MILES
            .iter()
            .find(|(a, b, _)| (*a, *b) == (City::Helsinki, City::Stockholm))
            .unwrap();
        assert_eq!(hs.2, 302);
        // ordered by miles ascending
        assert!(CITY_DISTANCE_MILES.windows(2).all(|w| w[0].2 <= w[1].2));
    }

    #[test]
    fn missing_city_rejected() {
        let fm = FeatureMatrix::new(2, 8);
        let features = vec![(City::Barcelona, &fm)];
        assert!(matches!(city_feature_distances(&features), Err(Error::Stratum(_))));
    }
}
