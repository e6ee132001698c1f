use std::collections::BTreeSet;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

/// Subjects in sorted order and the folds over them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSpec {
    pub subjects: Vec<String>,
    pub folds: Vec<Fold>,
}

fn sorted_unique(subjects: &[String]) -> Result<Vec<String>> {
    let set: BTreeSet<&String> = subjects.iter().collect();
    if set.len() != subjects.len() {
        return Err(Error::Invalid("duplicate subject identifiers".into()));
    }
    Ok(set.into_iter().cloned().collect())
}

/// One fold per subject, holding that subject out.
pub fn loso_folds(subjects: &[String]) -> Result<FoldSpec> {
    let subjects = sorted_unique(subjects)?;
    if subjects.len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    let folds = subjects
        .iter()
        .enumerate()
        .map(|(index, held)| Fold {
            index,
            train: subjects.iter().filter(|s| *s != held).cloned().collect(),
            validation: vec![held.clone()],
        })
        .collect();
    Ok(FoldSpec { subjects, folds })
}

/// A single fold validating on `validation` and training on the rest.
pub fn holdout_fold(subjects: &[String], validation: &[String]) -> Result<FoldSpec> {
    let subjects = sorted_unique(subjects)?;
    let held = sorted_unique(validation)?;
    if let Some(missing) = held.iter().find(|h| !subjects.contains(h)) {
        return Err(Error::Invalid(format!("validation subject `{missing}` is not in the dataset")));
    }
    let train: Vec<String> = subjects.iter().filter(|s| !held.contains(s)).cloned().collect();
    if train.is_empty() || held.is_empty() {
        return Err(Error::EmptyDataset("holdout leaves an empty train or validation set".into()));
    }
    Ok(FoldSpec {
        subjects,
        folds: vec![Fold {
            index: 0,
            train,
            validation: held,
        }],
    })
}
