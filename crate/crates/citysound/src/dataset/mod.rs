//! Corpus ingestion: clip metadata, manifests, splits, and synthetic data.
//!
//! Real corpora arrive as a TSV manifest plus PCM WAV files whose names follow
//! the `<scene>-<city>-<location>-<segment>-<device>.wav` convention. The
//! synthetic generator in [`synth`] produces desk-scale labelled soundscapes
//! with the same metadata shape so every downstream stage can be exercised
//! without the 24-hour corpus.

mod synth;
mod wav;

pub use synth::{synthesize_dataset, SynthConfig};
pub use wav::{decode_wav, decode_wav_reader, encode_wav, encode_wav_writer};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The ten acoustic scenes, in alphabetical order.
pub const SCENES: [Scene; 10] = [
    Scene::Airport,
    Scene::Bus,
    Scene::Metro,
    Scene::MetroStation,
    Scene::Park,
    Scene::PublicSquare,
    Scene::ShoppingMall,
    Scene::StreetPedestrian,
    Scene::StreetTraffic,
    Scene::Tram,
];

/// The six recording cities, in alphabetical order.
pub const CITIES: [City; 6] = [
    City::Barcelona,
    City::Helsinki,
    City::London,
    City::Paris,
    City::Stockholm,
    City::Vienna,
];

/// Acoustic scene label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scene {
    Airport,
    Bus,
    Metro,
    MetroStation,
    Park,
    PublicSquare,
    ShoppingMall,
    StreetPedestrian,
    StreetTraffic,
    Tram,
}

impl Scene {
    /// Index in alphabetical order (0..10).
    pub fn index(self) -> usize {
        SCENES.iter().position(|&s| s == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scene::Airport => "airport",
            Scene::Bus => "bus",
            Scene::Metro => "metro",
            Scene::MetroStation => "metro_station",
            Scene::Park => "park",
            Scene::PublicSquare => "public_square",
            Scene::ShoppingMall => "shopping_mall",
            Scene::StreetPedestrian => "street_pedestrian",
            Scene::StreetTraffic => "street_traffic",
            Scene::Tram => "tram",
        }
    }
}

impl FromStr for Scene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SCENES
            .iter()
            .copied()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::Vocabulary(format!("scene '{s}' is not one of the ten scenes")))
    }
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Recording city label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum City {
    Barcelona,
    Helsinki,
    London,
    Paris,
    Stockholm,
    Vienna,
}

impl City {
    /// Index in alphabetical order (0..6).
    pub fn index(self) -> usize {
        CITIES.iter().position(|&c| c == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            City::Barcelona => "barcelona",
            City::Helsinki => "helsinki",
            City::London => "london",
            City::Paris => "paris",
            City::Stockholm => "stockholm",
            City::Vienna => "vienna",
        }
    }
}

impl FromStr for City {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CITIES
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Vocabulary(format!("city '{s}' is not one of the six cities")))
    }
}

impl fmt::Display for City {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Metadata for one 10-second corpus segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipMeta {
    /// Filename stem, unique within a corpus.
    pub id: String,
    pub scene: Scene,
    pub city: City,
    pub location_id: u32,
    pub segment_id: u32,
    pub device: String,
    /// Path to the audio file (may be relative to the manifest's audio root).
    pub path: PathBuf,
}

/// Decoded mono waveform plus its provenance.
#[derive(Debug, Clone)]
pub struct AudioClip {
    /// Mono samples in [-1, 1].
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub meta: ClipMeta,
}

/// Train/validation/test partition of a clip list.
#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: Vec<ClipMeta>,
    pub validation: Vec<ClipMeta>,
    pub test: Vec<ClipMeta>,
}

impl DatasetSplit {
    /// Build a split from three explicit manifests (the official challenge
    /// partition) instead of re-splitting. Disjointness by id is enforced.
    pub fn from_manifests(
        train: &Path,
        validation: &Path,
        test: &Path,
        audio_root: &Path,
        verify_files: bool,
    ) -> Result<Self> {
        let split = DatasetSplit {
            train: load_manifest(train, audio_root, verify_files)?,
            validation: load_manifest(validation, audio_root, verify_files)?,
            test: load_manifest(test, audio_root, verify_files)?,
        };
        let mut seen = std::collections::HashSet::new();
        for m in split.iter_all() {
            if !seen.insert(m.id.clone()) {
                return Err(Error::Consistency(format!(
                    "clip '{}' appears in more than one split manifest",
                    m.id
                )));
            }
        }
        Ok(split)
    }

    pub fn iter_all(&self) -> impl Iterator<Item = &ClipMeta> {
        self.train
            .iter()
            .chain(self.validation.iter())
            .chain(self.test.iter())
    }
}

/// Format the canonical clip filename for a metadata tuple.
pub fn format_clip_name(
    scene: Scene,
    city: City,
    location_id: u32,
    segment_id: u32,
    device: &str,
) -> String {
    format!("{scene}-{city}-{location_id}-{segment_id}-{device}.wav")
}

/// Parse `<scene>-<city>-<loc>-<seg>-<dev>.wav` into a [`ClipMeta`].
///
/// The scene and city tokens are validated against the fixed vocabularies.
pub fn parse_clip_name(filename: &str) -> Result<ClipMeta> {
    let name = Path::new(filename)
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Format(format!("'{filename}' has no valid file name")))?;
    let stem = name
        .strip_suffix(".wav")
        .ok_or_else(|| Error::Format(format!("'{name}' does not end in .wav")))?;

    let fields: Vec<&str> = stem.split('-').collect();
    if fields.len() != 5 {
        return Err(Error::Format(format!(
            "'{name}' has {} dash-separated fields, expected 5",
            fields.len()
        )));
    }

    let scene: Scene = fields[0].parse()?;
    let city: City = fields[1].parse()?;
    let location_id: u32 = fields[2]
        .parse()
        .map_err(|_| Error::Format(format!("location id '{}' is not an integer", fields[2])))?;
    let segment_id: u32 = fields[3]
        .parse()
        .map_err(|_| Error::Format(format!("segment id '{}' is not an integer", fields[3])))?;

    Ok(ClipMeta {
        id: stem.to_string(),
        scene,
        city,
        location_id,
        segment_id,
        device: fields[4].to_string(),
        path: PathBuf::from(filename),
    })
}

/// Load a TSV manifest: one clip per line, column 1 a relative WAV path,
/// optional column 2 a scene label cross-checked against the filename.
///
/// With `verify_files` set, every referenced audio file must exist under
/// `audio_root`.
pub fn load_manifest(path: &Path, audio_root: &Path, verify_files: bool) -> Result<Vec<ClipMeta>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read manifest {}: {e}", path.display())))?;
    let mut clips = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        // A header line is tolerated, matching the DCASE meta files.
        if lineno == 0 && line.starts_with("filename") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let mut meta = parse_clip_name(cols[0])
            .map_err(|e| prefix_line(e, path, lineno + 1))?;
        if cols.len() >= 2 && !cols[1].is_empty() {
            let labelled: Scene = cols[1]
                .parse()
                .map_err(|e| prefix_line(e, path, lineno + 1))?;
            if labelled != meta.scene {
                return Err(Error::Consistency(format!(
                    "{}:{}: scene column '{}' disagrees with filename scene '{}'",
                    path.display(),
                    lineno + 1,
                    labelled,
                    meta.scene
                )));
            }
        }
        meta.path = audio_root.join(cols[0]);
        if verify_files && !meta.path.is_file() {
            return Err(Error::MissingFile(meta.path));
        }
        clips.push(meta);
    }
    Ok(clips)
}

fn prefix_line(e: Error, path: &Path, lineno: usize) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}:{}: {m}", path.display(), lineno)),
        Error::Vocabulary(m) => Error::Vocabulary(format!("{}:{}: {m}", path.display(), lineno)),
        other => other,
    }
}

/// Deterministic stratified split by (scene, city) pair.
///
/// Within each stratum the clip order is shuffled by a ChaCha stream keyed to
/// `seed`, then counts are assigned by the largest-remainder rule with ties
/// broken in (train, validation, test) order.
pub fn stratified_split(
    clips: &[ClipMeta],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    let (ft, fv, fe) = fractions;
    if ft < 0.0 || fv < 0.0 || fe < 0.0 || (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions ({ft}, {fv}, {fe}) must be nonnegative and sum to 1"
        )));
    }

    // BTreeMap keyed by (scene idx, city idx) fixes the stratum order.
    let mut strata: BTreeMap<(usize, usize), Vec<&ClipMeta>> = BTreeMap::new();
    for m in clips {
        strata
            .entry((m.scene.index(), m.city.index()))
            .or_default()
            .push(m);
    }

    let all_positive = ft > 0.0 && fv > 0.0 && fe > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit::default();

    for ((scene_idx, city_idx), mut members) in strata {
        if all_positive && members.len() < 3 {
            return Err(Error::Stratum(format!(
                "stratum ({}, {}) has {} clips, need at least 3 for a three-way split",
                SCENES[scene_idx], CITIES[city_idx], members.len()
            )));
        }
        members.shuffle(&mut rng);
        let counts = largest_remainder(members.len(), [ft, fv, fe]);
        let (a, b) = (counts[0], counts[0] + counts[1]);
        split.train.extend(members[..a].iter().map(|m| (*m).clone()));
        split
            .validation
            .extend(members[a..b].iter().map(|m| (*m).clone()));
        split.test.extend(members[b..].iter().map(|m| (*m).clone()));
    }
    Ok(split)
}

/// Apportion `n` items to three bins by largest remainder; ties go to the
/// earlier bin.
fn largest_remainder(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    // Sort by descending remainder, index order breaking ties.
    order.sort_by(|&i, &j| {
        let ri = exact[i] - exact[i].floor();
        let rj = exact[j] - exact[j].floor();
        rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
    });
    for k in 0..(n - assigned) {
        counts[order[k % 3]] += 1;
    }
    [counts[0], counts[1], counts[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(scene: Scene, city: City, loc: u32, seg: u32) -> ClipMeta {
        let name = format_clip_name(scene, city, loc, seg, "a");
        parse_clip_name(&name).unwrap()
    }

    #[test]
    fn parse_airport_barcelona() {
        let m = parse_clip_name("airport-barcelona-0-0-a.wav").unwrap();
        assert_eq!(m.scene, Scene::Airport);
        assert_eq!(m.city, City::Barcelona);
        assert_eq!(m.location_id, 0);
        assert_eq!(m.segment_id, 0);
        assert_eq!(m.device, "a");
        assert_eq!(m.id, "airport-barcelona-0-0-a");
    }

    #[test]
    fn parse_tram_vienna() {
        let m = parse_clip_name("tram-vienna-285-8639-a.wav").unwrap();
        assert_eq!(m.scene, Scene::Tram);
        assert_eq!(m.city, City::Vienna);
        assert_eq!(m.location_id, 285);
        assert_eq!(m.segment_id, 8639);
    }

    #[test]
    fn parse_rejects_unknown_scene() {
        let err = parse_clip_name("beach-london-1-2-a.wav").unwrap_err();
        assert!(matches!(err, Error::Vocabulary(_)), "got {err:?}");
    }

    #[test]
    fn parse_rejects_wrong_field_count() {
        let err = parse_clip_name("airport-barcelona-0-a.wav").unwrap_err();
        assert!(matches!(err, Error::Format(_)), "got {err:?}");
    }

    #[test]
    fn parse_inverts_formatter() {
        for &scene in &SCENES {
            for &city in &CITIES {
                let name = format_clip_name(scene, city, 12, 345, "b");
                let m = parse_clip_name(&name).unwrap();
                assert_eq!((m.scene, m.city, m.location_id, m.segment_id), (scene, city, 12, 345));
                assert_eq!(m.device, "b");
            }
        }
    }

    #[test]
    fn manifest_roundtrip_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("meta.tsv");
        fs::write(
            &manifest,
            "tram-vienna-1-2-a.wav\nairport-paris-3-4-a.wav\nbus-london-5-6-a.wav\n",
        )
        .unwrap();
        let clips = load_manifest(&manifest, dir.path(), false).unwrap();
        assert_eq!(clips.len(), 3);
        assert_eq!(clips[0].scene, Scene::Tram);
        assert_eq!(clips[1].city, City::Paris);
        assert_eq!(clips[2].scene, Scene::Bus);
    }

    #[test]
    fn manifest_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("meta.tsv");
        fs::write(&manifest, "").unwrap();
        assert!(load_manifest(&manifest, dir.path(), false).unwrap().is_empty());
    }

    #[test]
    fn manifest_scene_column_crosscheck() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("meta.tsv");
        fs::write(&manifest, "tram-vienna-1-2-a.wav\ttram\n").unwrap();
        assert_eq!(load_manifest(&manifest, dir.path(), false).unwrap().len(), 1);

        fs::write(&manifest, "tram-vienna-1-2-a.wav\tbus\n").unwrap();
        let err = load_manifest(&manifest, dir.path(), false).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)), "got {err:?}");
    }

    #[test]
    fn manifest_missing_file_when_verifying() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("meta.tsv");
        fs::write(&manifest, "tram-vienna-1-2-a.wav\n").unwrap();
        let err = load_manifest(&manifest, dir.path(), true).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)), "got {err:?}");
    }

    #[test]
    fn split_degenerate_all_train() {
        let clips: Vec<ClipMeta> = SCENES
            .iter()
            .flat_map(|&s| CITIES.iter().map(move |&c| meta(s, c, 0, 0)))
            .collect();
        let split = stratified_split(&clips, (1.0, 0.0, 0.0), 7).unwrap();
        assert_eq!(split.train.len(), 60);
        assert!(split.validation.is_empty() && split.test.is_empty());
    }

    #[test]
    fn split_deterministic_for_seed() {
        let clips: Vec<ClipMeta> = SCENES
            .iter()
            .flat_map(|&s| {
                CITIES
                    .iter()
                    .flat_map(move |&c| (0..10).map(move |i| meta(s, c, i, i)))
            })
            .collect();
        let a = stratified_split(&clips, (0.7, 0.15, 0.15), 1).unwrap();
        let b = stratified_split(&clips, (0.7, 0.15, 0.15), 1).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn split_small_stratum_rejected() {
        let clips = vec![meta(Scene::Tram, City::Vienna, 0, 0), meta(Scene::Tram, City::Vienna, 0, 1)];
        let err = stratified_split(&clips, (0.7, 0.15, 0.15), 1).unwrap_err();
        assert!(matches!(err, Error::Stratum(_)), "got {err:?}");
    }

    #[test]
    fn largest_remainder_ten_per_stratum() {
        // 10 * (0.7, 0.15, 0.15) = (7, 1.5, 1.5): the tie goes to validation.
        assert_eq!(largest_remainder(10, [0.7, 0.15, 0.15]), [7, 2, 1]);
        assert_eq!(largest_remainder(5, [0.7, 0.15, 0.15]), [3, 1, 1]);
        assert_eq!(largest_remainder(0, [0.7, 0.15, 0.15]), [0, 0, 0]);
    }
}
