use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use crate::model::rng_for;
use crate::{Error, Result};

use super::{Label, RecordingMeta};

pub const FOLDS: usize = 4;
/// Fold value of recordings used only for training.
pub const TRAIN_ONLY: i32 = -1;

/// Validation fold of every recording (`TRAIN_ONLY` when none).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub folds: BTreeMap<String, i32>,
}

impl FoldAssignment {
    pub fn fold_of(&self, id: &str) -> Option<i32> {
        self.folds.get(id).copied()
    }

    pub fn validation_ids(&self, fold: i32) -> BTreeSet<&str> {
        self.folds.iter().filter(|(_, &f)| f == fold).map(|(k, _)| k.as_str()).collect()
    }
}

/// Four validation folds with equal normal and abnormal counts.
///
/// Without a manifest each fold takes `⌊min(n_normal, n_abnormal)/4⌋`
/// recordings of each class, sampled without replacement. A `fold0`
/// manifest is used verbatim as fold 0 and folds 1–3 are balanced from the
/// rest. Recordings left over are in every training set.
pub fn make_folds(metas: &[RecordingMeta], fold0: Option<&BTreeSet<String>>, seed: u64) -> Result<FoldAssignment> {
    if metas.len() < 2 * FOLDS {
        return Err(Error::arg("metas", format!("need at least {} recordings, got {}", 2 * FOLDS, metas.len())));
    }
    let mut folds = BTreeMap::new();
    for m in metas {
        if folds.insert(m.id.clone(), TRAIN_ONLY).is_some() {
            return Err(Error::arg("metas", format!("duplicate recording id {}", m.id)));
        }
    }
    let mut first_sampled = 0;
    if let Some(pinned) = fold0 {
        for id in pinned {
            let slot = folds
                .get_mut(id)
                .ok_or_else(|| Error::arg("fold0", format!("manifest names unknown recording {id}")))?;
            *slot = 0;
        }
        first_sampled = 1;
    }
    let mut pools: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    for m in metas {
        if folds[&m.id] == TRAIN_ONLY {
            pools[usize::from(m.label == Label::Abnormal)].push(&m.id);
        }
    }
    let sampled = FOLDS - first_sampled;
    let per_fold = pools[0].len().min(pools[1].len()) / sampled;
    if per_fold == 0 {
        return Err(Error::arg(
            "metas",
            format!(
                "{} normal and {} abnormal recordings cannot fill {sampled} balanced folds",
                pools[0].len(),
                pools[1].len()
            ),
        ));
    }
    let mut rng = rng_for(seed, "folds");
    for pool in &mut pools {
        pool.shuffle(&mut rng);
        for (i, id) in pool.iter().take(per_fold * sampled).enumerate() {
            folds.insert(id.to_string(), (first_sampled + i / per_fold) as i32);
        }
    }
    Ok(FoldAssignment { folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metas(normal: usize, abnormal: usize) -> Vec<RecordingMeta> {
        (0..normal)
            .map(|i| RecordingMeta::new(format!("n{i:03}"), Label::Normal))
            .chain((0..abnormal).map(|i| RecordingMeta::new(format!("x{i:03}"), Label::Abnormal)))
            .collect()
    }

    fn counts(a: &FoldAssignment, m: &[RecordingMeta], fold: i32) -> (usize, usize) {
        m.iter().filter(|r| a.fold_of(&r.id) == Some(fold)).fold((0, 0), |(n, x), r| match r.label {
            Label::Normal => (n + 1, x),
            Label::Abnormal => (n, x + 1),
        })
    }

    #[test]
    fn forty_each_gives_ten_plus_ten() {
        let m = metas(40, 40);
        let a = make_folds(&m, None, 1).unwrap();
        for f in 0..4 {
            assert_eq!(counts(&a, &m, f), (10, 10));
        }
        assert_eq!(counts(&a, &m, TRAIN_ONLY), (0, 0));
    }

    #[test]
    fn imbalanced_classes_follow_the_minority() {
        let m = metas(158, 42);
        let a = make_folds(&m, None, 2).unwrap();
        for f in 0..4 {
            assert_eq!(counts(&a, &m, f), (10, 10));
        }
        assert_eq!(counts(&a, &m, TRAIN_ONLY), (118, 2));
    }

    #[test]
    fn manifest_pins_fold_zero() {
        let m = metas(40, 40);
        let pinned: BTreeSet<String> = ["n000", "n001", "x005"].iter().map(|s| s.to_string()).collect();
        let a = make_folds(&m, Some(&pinned), 3).unwrap();
        let zero: BTreeSet<String> = a.validation_ids(0).into_iter().map(String::from).collect();
        assert_eq!(zero, pinned);
        for f in 1..4 {
            let (n, x) = counts(&a, &m, f);
            assert_eq!(n, x);
            // Pinning took two normals and one abnormal: min(38, 39) / 3.
            assert_eq!(n, 38 / 3);
        }
        let unknown: BTreeSet<String> = ["zzz".to_string()].into();
        assert!(make_folds(&m, Some(&unknown), 3).is_err());
    }

    #[test]
    fn seeded_and_deterministic() {
        let m = metas(30, 20);
        assert_eq!(make_folds(&m, None, 9).unwrap(), make_folds(&m, None, 9).unwrap());
        assert_ne!(make_folds(&m, None, 9).unwrap(), make_folds(&m, None, 10).unwrap());
    }

    #[test]
    fn rejects_tiny_or_single_class_sets() {
        assert!(make_folds(&metas(3, 3), None, 0).is_err());
        assert!(make_folds(&metas(20, 0), None, 0).is_err());
        assert!(make_folds(&metas(20, 3), None, 0).is_err());
        let mut dup = metas(10, 10);
        dup.push(dup[0].clone());
        assert!(make_folds(&dup, None, 0).is_err());
    }
}
