//! Stratified k-fold cross-validation splits.
//!
//! Each record is assigned to the stratum of its rarest class (by global
//! box count), so rare classes are spread over all folds. Within a stratum
//! records are shuffled, the strata are concatenated, and positions are dealt
//! round-robin into folds: every fold and every stratum differs from its
//! exact share by at most one record. A fold's held-out part is split into
//! validation and test the same way, with a running-rounding allocation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotationRecord, TileRef};
use crate::taxonomy::{CellClass, ClassCounts};

/// Stratum of a record: its rarest class, or `None` for boxless tiles.
pub type Stratum = Option<CellClass>;

fn stratum_name(s: Stratum) -> String {
    s.map_or_else(|| "empty".to_string(), |c| c.name().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InsufficientPolicy {
    Error,
    Warn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    pub folds: usize,
    /// Share of a fold's held-out records used for validation; the rest is test.
    pub validation_fraction: f64,
    pub seed: u64,
    pub insufficient: InsufficientPolicy,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { folds: 5, validation_fraction: 0.7, seed: 0, insufficient: InsufficientPolicy::Warn }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error("stratum `{stratum}` has {records} records, fewer than {folds} folds")]
    InsufficientData { stratum: String, records: usize, folds: usize },
    #[error("need at least 2 folds and a validation fraction in [0, 1]")]
    InvalidConfig,
    #[error("duplicate tile reference {0}")]
    DuplicateTile(TileRef),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub validation: Vec<TileRef>,
    pub test: Vec<TileRef>,
}

impl Fold {
    pub fn held_out(&self) -> impl Iterator<Item = &TileRef> {
        self.validation.iter().chain(&self.test)
    }

    pub fn held_out_len(&self) -> usize {
        self.validation.len() + self.test.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub folds: Vec<Fold>,
    /// Stratum name of every record.
    pub strata: BTreeMap<String, Vec<TileRef>>,
    pub warnings: Vec<String>,
}

impl SplitPlan {
    /// Records not held out by `fold`.
    pub fn training<'a>(&self, fold: usize, records: &'a [AnnotationRecord]) -> TrainingView<'a> {
        let held: BTreeSet<&TileRef> = self.folds[fold].held_out().collect();
        TrainingView { fold, records: records.iter().filter(|r| !held.contains(&r.tile)).collect() }
    }
}

/// The training portion of one fold. Augmented and oversampled records are
/// generated from this view only, so held-out tiles never leak into training.
#[derive(Debug, Clone)]
pub struct TrainingView<'a> {
    pub fold: usize,
    records: Vec<&'a AnnotationRecord>,
}

impl<'a> TrainingView<'a> {
    pub fn records(&self) -> &[&'a AnnotationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn stratum_of(record: &AnnotationRecord, global: &ClassCounts) -> Stratum {
    record.boxes.iter().map(|b| b.cls).min_by_key(|&c| (global.get(c), c.id()))
}

/// Running-rounding allocation: item `i` goes to the first part iff
/// `round((i+1)·f) > round(i·f)`. Any prefix of `n` items holds `round(n·f)`,
/// any contiguous run of `m` items holds `m·f` within one.
fn first_part(i: usize, f: f64) -> bool {
    ((i + 1) as f64 * f).round() > (i as f64 * f).round()
}

pub fn stratified_split(records: &[AnnotationRecord], config: &SplitConfig) -> Result<SplitPlan, SplitError> {
    let k = config.folds;
    if k < 2 || !(0.0..=1.0).contains(&config.validation_fraction) {
        return Err(SplitError::InvalidConfig);
    }
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(&r.tile) {
            return Err(SplitError::DuplicateTile(r.tile.clone()));
        }
    }

    let global = records.iter().fold(ClassCounts::default(), |acc, r| acc.merged(&r.class_counts()));
    let mut strata: BTreeMap<Stratum, Vec<TileRef>> = BTreeMap::new();
    for r in records {
        strata.entry(stratum_of(r, &global)).or_default().push(r.tile.clone());
    }

    let mut warnings = Vec::new();
    for (s, members) in &strata {
        if members.len() < k {
            let err = SplitError::InsufficientData { stratum: stratum_name(*s), records: members.len(), folds: k };
            match config.insufficient {
                InsufficientPolicy::Error => return Err(err),
                InsufficientPolicy::Warn => {
                    log::warn!("{err}");
                    warnings.push(err.to_string());
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dealt: Vec<Vec<(Stratum, TileRef)>> = vec![Vec::new(); k];
    let mut position = 0usize;
    for (s, members) in &mut strata {
        members.sort();
        members.shuffle(&mut rng);
        for t in members.iter() {
            dealt[position % k].push((*s, t.clone()));
            position += 1;
        }
    }

    let mut folds = Vec::with_capacity(k);
    for (index, members) in dealt.into_iter().enumerate() {
        let mut fold = Fold { index, validation: Vec::new(), test: Vec::new() };
        // one allocation run over the whole fold: the fold total is exact
        // and each stratum (a contiguous sub-run) stays within one record
        for (i, (_, t)) in members.iter().enumerate() {
            if first_part(i, config.validation_fraction) {
                fold.validation.push(t.clone());
            } else {
                fold.test.push(t.clone());
            }
        }
        folds.push(fold);
    }

    for (s, members) in &strata {
        let members: BTreeSet<&TileRef> = members.iter().collect();
        let empty_test = folds.iter().filter(|f| !f.test.iter().any(|t| members.contains(t))).count();
        if members.len() >= k && empty_test > 0 {
            let msg = format!("stratum `{}` has no test record in {empty_test} of {k} folds", stratum_name(*s));
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let strata = strata
        .into_iter()
        .map(|(s, mut members)| {
            members.sort();
            (stratum_name(s), members)
        })
        .collect();
    Ok(SplitPlan { seed: config.seed, folds, strata, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AnnotatedBox;
    use crate::geometry::BBox;
    use crate::wsi::GridCoord;

    fn record(i: usize, classes: &[CellClass]) -> AnnotationRecord {
        let tile = TileRef::grid(format!("s{}", i / 300), GridCoord::new((i % 300 / 20) as u32, (i % 20) as u32));
        let boxes = classes.iter().map(|&c| AnnotatedBox::human(BBox::new(0.5, 0.5, 0.1, 0.1), c)).collect();
        AnnotationRecord::new(tile, boxes)
    }

    fn corpus(n: usize) -> Vec<AnnotationRecord> {
        (0..n)
            .map(|i| match i % 10 {
                0 => record(i, &[CellClass::Neutrophil, CellClass::Blast]),
                1..=3 => record(i, &[CellClass::Blast]),
                4 => record(i, &[CellClass::Eosinophil, CellClass::Neutrophil]),
                5 => record(i, &[]),
                _ => record(i, &[CellClass::Neutrophil]),
            })
            .collect()
    }

    #[test]
    fn thousand_tiles_five_folds() {
        let records = corpus(1000);
        let plan = stratified_split(&records, &SplitConfig::default()).unwrap();
        assert_eq!(plan.folds.len(), 5);
        for f in &plan.folds {
            assert_eq!(f.held_out_len(), 200);
            assert_eq!(f.validation.len(), 140);
            assert_eq!(f.test.len(), 60);
            assert_eq!(plan.training(f.index, &records).len(), 800);
        }
        // folds partition the records
        let all: BTreeSet<&TileRef> = plan.folds.iter().flat_map(|f| f.held_out()).collect();
        assert_eq!(all.len(), 1000);
        assert!(plan.warnings.is_empty(), "{:?}", plan.warnings);
    }

    #[test]
    fn per_stratum_shares_within_one() {
        let records = corpus(997);
        let cfg = SplitConfig { seed: 3, ..Default::default() };
        let plan = stratified_split(&records, &cfg).unwrap();
        for members in plan.strata.values() {
            let n = members.len() as f64;
            for f in &plan.folds {
                let held: Vec<&TileRef> = f.held_out().filter(|t| members.contains(t)).collect();
                assert!((held.len() as f64 - n / 5.0).abs() <= 1.0);
                let val = f.validation.iter().filter(|t| members.contains(t)).count() as f64;
                assert!((val - 0.7 * held.len() as f64).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let records = corpus(300);
        let a = stratified_split(&records, &SplitConfig { seed: 9, ..Default::default() }).unwrap();
        let b = stratified_split(&records, &SplitConfig { seed: 9, ..Default::default() }).unwrap();
        let c = stratified_split(&records, &SplitConfig { seed: 10, ..Default::default() }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.folds, c.folds);
    }

    #[test]
    fn rare_class_follows_policy() {
        // seven basophils spread over three tiles
        let mut records = corpus(100);
        records.push(record(1000, &[CellClass::Basophil, CellClass::Basophil, CellClass::Basophil]));
        records.push(record(1001, &[CellClass::Basophil, CellClass::Basophil]));
        records.push(record(1002, &[CellClass::Basophil, CellClass::Basophil, CellClass::Neutrophil]));
        let strict = SplitConfig { insufficient: InsufficientPolicy::Error, ..Default::default() };
        assert_eq!(
            stratified_split(&records, &strict),
            Err(SplitError::InsufficientData { stratum: "basophil".into(), records: 3, folds: 5 })
        );
        let plan = stratified_split(&records, &SplitConfig::default()).unwrap();
        assert!(plan.warnings.iter().any(|w| w.contains("basophil")));
        assert_eq!(plan.folds.iter().map(Fold::held_out_len).sum::<usize>(), 103);
    }

    #[test]
    fn seven_single_instance_tiles_leave_test_folds_empty() {
        let mut records = corpus(100);
        for i in 0..7 {
            records.push(record(2000 + i, &[CellClass::Basophil]));
        }
        let plan = stratified_split(&records, &SplitConfig::default()).unwrap();
        assert!(plan.warnings.iter().any(|w| w.contains("basophil") && w.contains("no test record")), "{:?}", plan.warnings);
    }

    #[test]
    fn rejects_duplicates_and_bad_config() {
        let mut records = corpus(20);
        records.push(records[0].clone());
        assert!(matches!(stratified_split(&records, &SplitConfig::default()), Err(SplitError::DuplicateTile(_))));
        let cfg = SplitConfig { folds: 1, ..Default::default() };
        assert_eq!(stratified_split(&corpus(20), &cfg), Err(SplitError::InvalidConfig));
    }
}
