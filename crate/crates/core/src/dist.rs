//! Finite outcome → probability tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

/// A finite probability table keyed by an ordered outcome type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistTable<K: Ord> {
    pub entries: BTreeMap<K, f64>,
}

impl<K: Ord + Clone> Default for DistTable<K> {
    fn default() -> Self {
        DistTable { entries: BTreeMap::new() }
    }
}

impl<K: Ord + Clone> DistTable<K> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds mass to an outcome (accumulating duplicates).
    pub fn add(&mut self, key: K, mass: f64) {
        *self.entries.entry(key).or_insert(0.0) += mass;
    }

    pub fn get(&self, key: &K) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().copied().collect::<CompensatedSum>().value()
    }

    /// Outcomes carrying strictly positive mass.
    pub fn support(&self) -> Vec<K> {
        self.entries.iter().filter(|(_, v)| **v > 0.0).map(|(k, _)| k.clone()).collect()
    }

    /// Checks that the table sums to 1 within `tol`.
    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let t = self.total();
        if (t - 1.0).abs() > tol {
            return Err(Error::invalid(format!("probability table sums to {t}, not 1")));
        }
        Ok(())
    }

    /// Divides every entry by the total mass.
    pub fn normalized(&self) -> Result<Self> {
        let t = self.total();
        if !(t > 0.0) {
            return Err(Error::invalid("cannot normalize a table with no mass"));
        }
        Ok(DistTable { entries: self.entries.iter().map(|(k, v)| (k.clone(), v / t)).collect() })
    }

    /// Pushes the table forward through `f`.
    pub fn map<K2: Ord + Clone>(&self, mut f: impl FnMut(&K) -> K2) -> DistTable<K2> {
        let mut out = DistTable::new();
        for (k, v) in &self.entries {
            out.add(f(k), *v);
        }
        out
    }

    /// E[f(outcome)].
    pub fn expect(&self, mut f: impl FnMut(&K) -> f64) -> f64 {
        self.entries.iter().map(|(k, v)| v * f(k)).collect::<CompensatedSum>().value()
    }
}

impl<K: Ord + Clone> FromIterator<(K, f64)> for DistTable<K> {
    fn from_iter<I: IntoIterator<Item = (K, f64)>>(iter: I) -> Self {
        let mut t = DistTable::new();
        for (k, v) in iter {
            t.add(k, v);
        }
        t
    }
}

impl DistTable<usize> {
    pub fn mean(&self) -> f64 {
        self.expect(|k| *k as f64)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|k| (*k as f64 - m).powi(2))
    }
}
