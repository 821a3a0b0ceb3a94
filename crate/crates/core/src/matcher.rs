//! Few-shot instance matcher: one-hot attribute features, nearest centroid,
//! distance threshold.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::grounder::{Attributes, SceneObservation};
use crate::memory::NamingRecord;
use crate::rng::{derive_str, rng_for};
use crate::scalar::Scalar;
use crate::scene::{ObjectLibrary, SizeClass};
use crate::BBox;

/// Feature vector: concatenated category, color, size and shape blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVec<T = f64>(pub Vec<T>);

impl<T: Scalar> FeatureVec<T> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .fold(T::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b))
            .sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> FeatureVec<U> {
        FeatureVec(self.0.iter().map(|v| U::lit(v.to_f64_lossy())).collect())
    }
}

/// Mean of equally sized vectors; `None` when empty or dimensions differ.
pub fn centroid<T: Scalar>(vs: &[FeatureVec<T>]) -> Option<FeatureVec<T>> {
    let dim = vs.first()?.dim();
    if vs.iter().any(|v| v.dim() != dim) {
        return None;
    }
    let n = T::from_usize(vs.len())?;
    let mut c = vec![T::zero(); dim];
    for v in vs {
        for (acc, x) in c.iter_mut().zip(&v.0) {
            *acc = *acc + *x;
        }
    }
    Some(FeatureVec(c.into_iter().map(|x| x / n).collect()))
}

/// Attribute vocabulary fixing the layout of feature vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpace {
    categories: Vec<String>,
    colors: Vec<String>,
    shapes: Vec<String>,
}

impl FeatureSpace {
    pub fn from_library(library: &ObjectLibrary) -> Self {
        Self {
            categories: library.categories().into_iter().collect(),
            colors: library.colors().into_iter().collect(),
            shapes: library.shapes().into_iter().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.categories.len() + self.colors.len() + SizeClass::ALL.len() + self.shapes.len()
    }

    /// Noise-free encoding. Values outside the vocabulary leave their block zero.
    pub fn encode<T: Scalar>(&self, attrs: &Attributes) -> FeatureVec<T> {
        let mut v = vec![T::zero(); self.dim()];
        let mut set = |offset: usize, idx: Option<usize>| {
            if let Some(i) = idx {
                v[offset + i] = T::one();
            }
        };
        let pos = |list: &[String], w: &str| list.iter().position(|x| x == w);
        set(0, pos(&self.categories, &attrs.category));
        let off = self.categories.len();
        for c in &attrs.colors {
            set(off, pos(&self.colors, c));
        }
        let off = off + self.colors.len();
        set(off, Some(attrs.size.index()));
        let off = off + SizeClass::ALL.len();
        set(off, pos(&self.shapes, &attrs.shape));
        FeatureVec(v)
    }

    /// Encoding plus i.i.d. Gaussian noise of scale `sigma`.
    pub fn embed<T: Scalar>(&self, attrs: &Attributes, sigma: f64, seed: u64) -> FeatureVec<T> {
        let mut v = self.encode::<T>(attrs);
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma validated as finite and >= 0");
            let mut rng = rng_for(seed);
            for x in &mut v.0 {
                *x = *x + T::lit(normal.sample(&mut rng));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedInstance {
    pub instance_id: String,
    pub bbox: BBox,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDecision {
    pub best: Option<MatchedInstance>,
    pub tau: f64,
    pub accepted: bool,
    /// More than one instance lies within `tau` of the centroid.
    pub duplicate_risk: bool,
}

/// Nearest-centroid decision over the observed instances. Each instance's
/// embedding draws noise from its own seeded stream.
pub fn match_named(
    space: &FeatureSpace,
    record: &NamingRecord,
    obs: &SceneObservation,
    sigma: f64,
    tau: f64,
    seed: u64,
) -> MatchDecision {
    let Some(c) = centroid(&record.observations) else {
        return MatchDecision {
            best: None,
            tau,
            accepted: false,
            duplicate_risk: false,
        };
    };
    let mut scored: Vec<(f64, &str, BBox)> = obs
        .instances
        .iter()
        .map(|o| {
            let e: FeatureVec = space.embed(&o.attributes, sigma, derive_str(seed, &o.instance_id));
            (e.distance(&c), o.instance_id.as_str(), o.bbox)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let within = scored.iter().filter(|s| s.0 <= tau).count();
    let best = scored.first().map(|(d, id, bbox)| MatchedInstance {
        instance_id: id.to_string(),
        bbox: *bbox,
        distance: *d,
    });
    let accepted = best.as_ref().is_some_and(|b| b.distance <= tau);
    MatchDecision {
        best,
        tau,
        accepted,
        duplicate_risk: within > 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(cat: &str, colors: &[&str]) -> Attributes {
        Attributes {
            category: cat.into(),
            colors: colors.iter().map(|c| c.to_string()).collect(),
            size: SizeClass::Medium,
            shape: "cylindrical".into(),
        }
    }

    #[test]
    fn encoding_is_one_hot() {
        let space = FeatureSpace::from_library(&ObjectLibrary::builtin());
        let v: FeatureVec = space.encode(&attrs("bottle", &["brown"]));
        assert_eq!(v.dim(), space.dim());
        assert_eq!(v.0.iter().filter(|x| **x == 1.0).count(), 4);
        assert_eq!(v.0.iter().sum::<f64>(), 4.0);
    }

    #[test]
    fn single_block_difference_is_sqrt_two() {
        let space = FeatureSpace::from_library(&ObjectLibrary::builtin());
        let a: FeatureVec = space.encode(&attrs("bottle", &["brown"]));
        let b: FeatureVec = space.encode(&attrs("bottle", &["green"]));
        assert!((a.distance(&b) - 2f64.sqrt()).abs() < 1e-12);
        let a32: FeatureVec<f32> = a.cast();
        let b32: FeatureVec<f32> = b.cast();
        assert!((a32.distance(&b32) - 2f32.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn embedding_is_seeded() {
        let space = FeatureSpace::from_library(&ObjectLibrary::builtin());
        let a = attrs("can", &["red"]);
        let x: FeatureVec = space.embed(&a, 0.1, 5);
        assert_eq!(x, space.embed(&a, 0.1, 5));
        assert_ne!(x, space.embed(&a, 0.1, 6));
        assert_eq!(space.embed::<f64>(&a, 0.0, 5), space.encode(&a));
    }

    #[test]
    fn centroid_rejects_mixed_dims() {
        assert!(centroid(&[FeatureVec(vec![1.0]), FeatureVec(vec![1.0, 2.0])]).is_none());
        assert_eq!(
            centroid(&[FeatureVec(vec![1.0, 0.0]), FeatureVec(vec![0.0, 1.0])]),
            Some(FeatureVec(vec![0.5, 0.5]))
        );
    }
}
