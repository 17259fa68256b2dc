use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sampling::Sample;
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};

/// Train/test split of a labelled dataset with classes `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub train: Vec<Sample<T>>,
    pub test: Vec<Sample<T>>,
    pub dim: usize,
    pub n_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    /// Checks dimensions, unique ids, and that every class `0..n` appears in
    /// both splits.
    pub fn new(train: Vec<Sample<T>>, test: Vec<Sample<T>>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("feature dimension must be >= 1"));
        }
        let mut ids = BTreeSet::new();
        for s in train.iter().chain(&test) {
            if s.features.len() != dim {
                return Err(Error::input(format!(
                    "sample {} has {} features, expected {dim}",
                    s.id,
                    s.features.len()
                )));
            }
            if !ids.insert(s.id) {
                return Err(Error::input(format!("sample id {} is not unique", s.id)));
            }
        }
        let train_classes: BTreeSet<usize> = train.iter().map(|s| s.label).collect();
        let test_classes: BTreeSet<usize> = test.iter().map(|s| s.label).collect();
        let n_classes = train_classes.len();
        if n_classes == 0 {
            return Err(Error::input("training split is empty"));
        }
        if train_classes.iter().next_back() != Some(&(n_classes - 1)) {
            return Err(Error::input("class labels must be contiguous from 0"));
        }
        if test_classes != train_classes {
            return Err(Error::input("train and test splits must contain the same classes"));
        }
        Ok(Self {
            train,
            test,
            dim,
            n_classes,
        })
    }

    pub fn train_of<'a>(&'a self, classes: &'a [usize]) -> impl Iterator<Item = &'a Sample<T>> + 'a {
        self.train.iter().filter(move |s| classes.contains(&s.label))
    }

    pub fn test_of<'a>(&'a self, classes: &'a [usize]) -> impl Iterator<Item = &'a Sample<T>> + 'a {
        self.test.iter().filter(move |s| classes.contains(&s.label))
    }
}

/// A `(train, test)` pair of sample lists.
pub type Split<T> = (Vec<Sample<T>>, Vec<Sample<T>>);

/// Per class, a seeded shuffle puts `floor(0.8 * n)` samples in train and the
/// rest in test. Both outputs are sorted by id.
pub fn stratified_split<T: Scalar>(
    samples: Vec<Sample<T>>,
    seed: u64,
) -> Split<T> {
    let mut by_class = crate::sampling::pools_by_class(&samples);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (&class, pool) in by_class.iter_mut() {
        pool.shuffle(&mut rng_from_seed(derive_seed(seed, &[class as u64])));
        let n_train = pool.len() * 4 / 5;
        test.extend(pool.split_off(n_train));
        train.append(pool);
    }
    train.sort_by_key(|s| s.id);
    test.sort_by_key(|s| s.id);
    (train, test)
}

/// Isotropic Gaussian blobs: class `c` is centred at `separation * u_c` with
/// `u_c ~ N(0, I)` and has unit-variance noise. Ids are `c * per_class + i`.
pub fn generate_blobs<T: Scalar>(
    n_classes: usize,
    samples_per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Split<T>> {
    if dim < 1 {
        return Err(Error::config("blob dimension must be >= 1"));
    }
    if n_classes == 0 || samples_per_class == 0 {
        return Err(Error::config("blob counts must be positive"));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::config(format!("separation must be >= 0, got {separation}")));
    }
    let mut center_rng = rng_from_seed(derive_seed(seed, &[0]));
    let centers: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut center_rng);
                    separation * z
                })
                .collect()
        })
        .collect();
    let mut noise_rng = rng_from_seed(derive_seed(seed, &[1]));
    let mut samples = Vec::with_capacity(n_classes * samples_per_class);
    for (c, center) in centers.iter().enumerate() {
        for i in 0..samples_per_class {
            let features = center
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut noise_rng);
                    T::of(m + z)
                })
                .collect();
            samples.push(Sample::new((c * samples_per_class + i) as u64, features, c));
        }
    }
    Ok(stratified_split(samples, derive_seed(seed, &[2])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_counts() {
        let (train, test) = generate_blobs::<f64>(10, 100, 2, 3.0, 1).unwrap();
        assert_eq!(train.len(), 800);
        assert_eq!(test.len(), 200);
        let labels: BTreeSet<usize> = train.iter().map(|s| s.label).collect();
        assert_eq!(labels.len(), 10);
        let ids: BTreeSet<u64> = train.iter().chain(&test).map(|s| s.id).collect();
        assert_eq!(ids.len(), 1000);
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = generate_blobs::<f64>(3, 20, 4, 2.0, 9).unwrap();
        let b = generate_blobs::<f64>(3, 20, 4, 2.0, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_blobs::<f64>(3, 20, 4, 2.0, 10).unwrap());
    }

    #[test]
    fn zero_dim_is_a_configuration_error() {
        assert!(matches!(
            generate_blobs::<f64>(3, 20, 0, 2.0, 9),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dataset_validation() {
        let (train, test) = generate_blobs::<f64>(3, 10, 2, 1.0, 0).unwrap();
        let ds = Dataset::new(train.clone(), test.clone(), 2).unwrap();
        assert_eq!(ds.n_classes, 3);
        let no_class_two: Vec<_> = test.iter().filter(|s| s.label != 2).cloned().collect();
        assert!(Dataset::new(train, no_class_two, 2).is_err());
    }
}
