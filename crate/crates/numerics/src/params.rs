use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::array::Array;
use crate::error::{NumericsError, Result};

/// How a parameter array is filled at registration time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Normal(0, std) with resampling outside two standard deviations.
    TruncNormal { std: f64 },
    Normal { std: f64 },
    Uniform { lo: f64, hi: f64 },
    Const(f64),
}

impl Init {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Init::TruncNormal { std } => {
                if std == 0.0 {
                    return 0.0;
                }
                let n = Normal::new(0.0, std).expect("std must be positive");
                loop {
                    let v = n.sample(rng);
                    if v.abs() <= 2.0 * std {
                        return v;
                    }
                }
            }
            Init::Normal { std } => Normal::new(0.0, std).expect("std must be positive").sample(rng),
            Init::Uniform { lo, hi } => rng.gen_range(lo..hi),
            Init::Const(v) => v,
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: Array<f32>,
    init: Init,
}

/// Named parameter arrays. Name order (BTreeMap) fixes every iteration
/// order downstream: gradient application, checkpoint layout, reports.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Entry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(NumericsError::DuplicateParam(name.to_string()));
        }
        let mut value = Array::zeros(shape);
        for v in value.data_mut() {
            *v = init.sample(rng) as f32;
        }
        value.requires_grad = true;
        self.entries.insert(name.to_string(), Entry { value, init });
        Ok(())
    }

    /// Insert an existing array, e.g. when restoring a checkpoint section.
    pub fn insert_array(&mut self, name: &str, mut value: Array<f32>) {
        value.requires_grad = true;
        self.entries.insert(name.to_string(), Entry { value, init: Init::Const(0.0) });
    }

    pub fn get(&self, name: &str) -> Result<&Array<f32>> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Array<f32>> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn init_of(&self, name: &str) -> Result<Init> {
        self.entries
            .get(name)
            .map(|e| e.init)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array<f32>)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Move all entries of `other` in, failing on name collisions.
    pub fn absorb(&mut self, other: ParamSet) -> Result<()> {
        for (name, entry) in other.entries {
            if self.entries.contains_key(&name) {
                return Err(NumericsError::DuplicateParam(name));
            }
            self.entries.insert(name, entry);
        }
        Ok(())
    }

    /// Total scalar count across all arrays.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|e| e.value.numel()).sum()
    }
}
