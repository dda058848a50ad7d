//! Label schemes: pure mappings from clip metadata to class targets.
//!
//! Scenes and cities are indexed alphabetically; scene groups in
//! indoor/outdoor/transport order. Pair schemes are scene-major
//! (`scene_idx * 6 + city_idx`). Reports print names, never raw indices,
//! so the index layout stays an internal convention.

use std::fmt;
use std::str::FromStr;

use crate::dataset::{City, ClipMeta, Scene, CITIES, SCENES};
use crate::error::{Error, Result};

/// The three scene groups, in listing order.
pub const GROUPS: [SceneGroup; 3] = [SceneGroup::Indoor, SceneGroup::Outdoor, SceneGroup::Transport];

/// Coarse scene category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneGroup {
    Indoor,
    Outdoor,
    Transport,
}

impl SceneGroup {
    pub fn index(self) -> usize {
        GROUPS.iter().position(|&g| g == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SceneGroup::Indoor => "indoor",
            SceneGroup::Outdoor => "outdoor",
            SceneGroup::Transport => "transport",
        }
    }
}

impl fmt::Display for SceneGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Map a scene to its group: airport/shopping_mall/metro_station are indoor;
/// the street scenes, square, and park are outdoor; tram/bus/metro transport.
pub fn group_of(scene: Scene) -> SceneGroup {
    match scene {
        Scene::Airport | Scene::ShoppingMall | Scene::MetroStation => SceneGroup::Indoor,
        Scene::StreetPedestrian | Scene::PublicSquare | Scene::StreetTraffic | Scene::Park => {
            SceneGroup::Outdoor
        }
        Scene::Tram | Scene::Bus | Scene::Metro => SceneGroup::Transport,
    }
}

/// One of the seven experiment labelling schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelScheme {
    /// 6-way city classification.
    City6,
    /// 10-way scene classification.
    Scene10,
    /// 60 scene-city pair classes.
    Pair60,
    /// 3 grouped-scene classes.
    Grouped3,
    /// 18 grouped-scene x city pair classes.
    GroupedPair18,
    /// 16 classes (10 scenes + 6 cities), two hot per sample.
    Multilabel16,
    /// Two softmax heads: 10 scenes and 6 cities.
    Multitask,
}

/// Class count of a scheme: one output, or two for the two-head scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cardinality {
    Single(usize),
    Dual(usize, usize),
}

/// Target produced by [`encode`], in index form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// One-hot schemes: the hot class index.
    Single(usize),
    /// Multilabel16: the scene-range and city-range hot positions.
    TwoHot(usize, usize),
    /// Multitask: per-head class indices (scene, city).
    Dual(usize, usize),
}

/// Decoded class identity for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecodedClass {
    pub scene: Option<Scene>,
    pub group: Option<SceneGroup>,
    pub city: Option<City>,
}

impl LabelScheme {
    pub const ALL: [LabelScheme; 7] = [
        LabelScheme::City6,
        LabelScheme::Scene10,
        LabelScheme::Pair60,
        LabelScheme::Grouped3,
        LabelScheme::GroupedPair18,
        LabelScheme::Multilabel16,
        LabelScheme::Multitask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LabelScheme::City6 => "city6",
            LabelScheme::Scene10 => "scene10",
            LabelScheme::Pair60 => "pair60",
            LabelScheme::Grouped3 => "grouped3",
            LabelScheme::GroupedPair18 => "grouped_pair18",
            LabelScheme::Multilabel16 => "multilabel16",
            LabelScheme::Multitask => "multitask",
        }
    }

    pub fn cardinality(self) -> Cardinality {
        match self {
            LabelScheme::City6 => Cardinality::Single(6),
            LabelScheme::Scene10 => Cardinality::Single(10),
            LabelScheme::Pair60 => Cardinality::Single(60),
            LabelScheme::Grouped3 => Cardinality::Single(3),
            LabelScheme::GroupedPair18 => Cardinality::Single(18),
            LabelScheme::Multilabel16 => Cardinality::Single(16),
            LabelScheme::Multitask => Cardinality::Dual(10, 6),
        }
    }

    /// Width of the (first) output vector.
    pub fn n_classes(self) -> usize {
        match self.cardinality() {
            Cardinality::Single(n) => n,
            Cardinality::Dual(a, _) => a,
        }
    }

    /// Ordered class names. Multitask returns the scene names; its city head
    /// uses [`CITIES`] directly.
    pub fn class_names(self) -> Vec<String> {
        match self {
            LabelScheme::City6 => CITIES.iter().map(|c| c.to_string()).collect(),
            LabelScheme::Scene10 | LabelScheme::Multitask => {
                SCENES.iter().map(|s| s.to_string()).collect()
            }
            LabelScheme::Grouped3 => GROUPS.iter().map(|g| g.to_string()).collect(),
            LabelScheme::Pair60 => SCENES
                .iter()
                .flat_map(|s| CITIES.iter().map(move |c| format!("{s}_{c}")))
                .collect(),
            LabelScheme::GroupedPair18 => GROUPS
                .iter()
                .flat_map(|g| CITIES.iter().map(move |c| format!("{g}_{c}")))
                .collect(),
            LabelScheme::Multilabel16 => SCENES
                .iter()
                .map(|s| s.to_string())
                .chain(CITIES.iter().map(|c| c.to_string()))
                .collect(),
        }
    }
}

impl FromStr for LabelScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LabelScheme::ALL
            .iter()
            .copied()
            .find(|sch| sch.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown label scheme '{s}'")))
    }
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Encode clip metadata as a target under the given scheme.
pub fn encode(meta: &ClipMeta, scheme: LabelScheme) -> Target {
    let s = meta.scene.index();
    let c = meta.city.index();
    match scheme {
        LabelScheme::City6 => Target::Single(c),
        LabelScheme::Scene10 => Target::Single(s),
        LabelScheme::Pair60 => Target::Single(s * 6 + c),
        LabelScheme::Grouped3 => Target::Single(group_of(meta.scene).index()),
        LabelScheme::GroupedPair18 => Target::Single(group_of(meta.scene).index() * 6 + c),
        LabelScheme::Multilabel16 => Target::TwoHot(s, 10 + c),
        LabelScheme::Multitask => Target::Dual(s, c),
    }
}

/// Encode as dense target vector(s): one vector per head.
pub fn encode_vectors(meta: &ClipMeta, scheme: LabelScheme) -> Vec<Vec<f64>> {
    match encode(meta, scheme) {
        Target::Single(i) => vec![one_hot(i, scheme.n_classes())],
        Target::TwoHot(a, b) => {
            let mut v = vec![0.0; 16];
            v[a] = 1.0;
            v[b] = 1.0;
            vec![v]
        }
        Target::Dual(s, c) => vec![one_hot(s, 10), one_hot(c, 6)],
    }
}

fn one_hot(index: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    v
}

/// Decode a class index back to its scene/group/city identity.
///
/// Exact inverse of [`encode`] on each scheme's range. Multitask decodes a
/// single head via `decode_head`.
pub fn decode(index: usize, scheme: LabelScheme) -> Result<DecodedClass> {
    let check = |n: usize| {
        if index >= n {
            Err(Error::Index(format!("index {index} out of range for {scheme} ({n} classes)")))
        } else {
            Ok(())
        }
    };
    match scheme {
        LabelScheme::City6 => {
            check(6)?;
            Ok(DecodedClass { city: Some(CITIES[index]), ..Default::default() })
        }
        LabelScheme::Scene10 => {
            check(10)?;
            Ok(DecodedClass { scene: Some(SCENES[index]), ..Default::default() })
        }
        LabelScheme::Grouped3 => {
            check(3)?;
            Ok(DecodedClass { group: Some(GROUPS[index]), ..Default::default() })
        }
        LabelScheme::Pair60 => {
            check(60)?;
            Ok(DecodedClass {
                scene: Some(SCENES[index / 6]),
                city: Some(CITIES[index % 6]),
                ..Default::default()
            })
        }
        LabelScheme::GroupedPair18 => {
            check(18)?;
            Ok(DecodedClass {
                group: Some(GROUPS[index / 6]),
                city: Some(CITIES[index % 6]),
                ..Default::default()
            })
        }
        LabelScheme::Multilabel16 => {
            check(16)?;
            if index < 10 {
                Ok(DecodedClass { scene: Some(SCENES[index]), ..Default::default() })
            } else {
                Ok(DecodedClass { city: Some(CITIES[index - 10]), ..Default::default() })
            }
        }
        LabelScheme::Multitask => Err(Error::Scheme(
            "multitask has two heads; decode each with decode_head".into(),
        )),
    }
}

/// Decode one head of the multitask scheme (head 0 = scene, head 1 = city).
pub fn decode_head(head: usize, index: usize) -> Result<DecodedClass> {
    match head {
        0 => decode(index, LabelScheme::Scene10),
        1 => decode(index, LabelScheme::City6),
        _ => Err(Error::Index(format!("multitask has heads 0 and 1, got {head}"))),
    }
}
