//! Dataset manifests and the per-angle / per-power / all-data split schemes.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synthgen::{Condition, RecordingVariable, ANGLES_DEG, THROTTLES_PCT};

pub const MANIFEST_HEADER: [&str; 5] = ["path", "angle_deg", "throttle_pct", "condition", "split"];
pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "unassigned" | "" => Ok(Split::Unassigned),
            other => Err(Error::MalformedManifest(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Location of the WAV file, relative to the manifest's directory.
    pub path: String,
    pub variable: RecordingVariable,
    pub split: Split,
}

impl ManifestEntry {
    pub fn new(path: impl Into<String>, variable: RecordingVariable) -> Self {
        Self {
            path: path.into(),
            variable,
            split: Split::Unassigned,
        }
    }

    pub fn condition(&self) -> Condition {
        self.variable.condition()
    }

    /// Identifier used in score files: the file stem.
    pub fn clip_id(&self) -> &str {
        let name = self.path.rsplit(['/', '\\']).next().unwrap_or(&self.path);
        name.strip_suffix(".wav").unwrap_or(name)
    }

    fn sort_key(&self) -> (Condition, u16, u8, &str) {
        (
            self.variable.condition(),
            self.variable.angle_deg(),
            self.variable.throttle_pct(),
            &self.path,
        )
    }
}

/// Ordered list of entries with unique paths, sorted by
/// (condition, angle, throttle, path).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(mut entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.path.is_empty() {
                return Err(Error::MalformedManifest("empty path".into()));
            }
            if !seen.insert(e.path.as_str()) {
                return Err(Error::MalformedManifest(format!("duplicate path {}", e.path)));
            }
        }
        entries.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter()
    }

    pub fn with_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split, condition: Condition) -> usize {
        self.with_split(split).filter(|e| e.condition() == condition).count()
    }

    /// Order-preserving subset of entries whose variable satisfies `pred`.
    pub fn filter(&self, pred: impl Fn(&RecordingVariable) -> bool) -> Manifest {
        Manifest {
            entries: self.entries.iter().filter(|e| pred(&e.variable)).cloned().collect(),
        }
    }

    /// Fails if any abnormal entry is assigned to train.
    pub fn check_train_is_normal(&self) -> Result<()> {
        match self
            .with_split(Split::Train)
            .find(|e| e.condition().is_abnormal())
        {
            Some(e) => Err(Error::AbnormalInTrain(e.path.clone())),
            None => Ok(()),
        }
    }

    pub fn has_assignments(&self) -> bool {
        self.entries.iter().any(|e| e.split != Split::Unassigned)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| Error::MalformedManifest(e.to_string());
        w.write_record(MANIFEST_HEADER).map_err(fail)?;
        for e in &self.entries {
            w.write_record([
                e.path.as_str(),
                &e.variable.angle_deg().to_string(),
                &e.variable.throttle_pct().to_string(),
                e.condition().as_str(),
                e.split.as_str(),
            ])
            .map_err(fail)?;
        }
        w.into_inner().map_err(|e| Error::MalformedManifest(e.to_string()))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let fail = |e: csv::Error| Error::MalformedManifest(e.to_string());
        let header = r.headers().map_err(fail)?;
        if header.iter().ne(MANIFEST_HEADER) {
            return Err(Error::MalformedManifest(format!("unexpected header {header:?}")));
        }
        let mut entries = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(fail)?;
            let bad = |what: &str| Error::MalformedManifest(format!("row {}: bad {what}", line + 2));
            let angle = rec[1].parse().map_err(|_| bad("angle_deg"))?;
            let throttle = rec[2].parse().map_err(|_| bad("throttle_pct"))?;
            let condition = rec[3].parse().map_err(|_| bad("condition"))?;
            let variable = RecordingVariable::new(angle, throttle, condition).map_err(|_| bad("variable"))?;
            entries.push(ManifestEntry {
                path: rec[0].to_string(),
                variable,
                split: rec[4].parse()?,
            });
        }
        Manifest::new(entries)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub(crate) fn merge(self, other: Manifest) -> Result<Manifest> {
        let mut entries = self.entries;
        entries.extend(other.entries);
        Manifest::new(entries)
    }
}

/// Scans `root` for WAV files named by the synthetic corpus convention.
/// Returns the manifest and the names of `.wav` files that could not be parsed.
pub fn scan_manifest(root: &Path) -> Result<(Manifest, Vec<String>)> {
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for item in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let item = item.map_err(|e| Error::io(root, e))?;
        let name = item.file_name().to_string_lossy().into_owned();
        if !name.ends_with(".wav") {
            continue;
        }
        match RecordingVariable::parse_file_name(&name) {
            Ok((variable, _)) => entries.push(ManifestEntry::new(name, variable)),
            Err(_) => skipped.push(name),
        }
    }
    skipped.sort();
    Ok((Manifest::new(entries)?, skipped))
}

pub fn build_manifest(root: &Path) -> Result<Manifest> {
    let (manifest, skipped) = scan_manifest(root)?;
    if !skipped.is_empty() {
        log::warn!("skipped {} unparsable file(s) in {}", skipped.len(), root.display());
    }
    Ok(manifest)
}

/// Train/test partitioning scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    PerAngle(u16),
    PerPower(u8),
    All,
}

impl Scheme {
    pub fn includes(&self, v: &RecordingVariable) -> bool {
        match *self {
            Scheme::PerAngle(a) => v.angle_deg() == a,
            Scheme::PerPower(t) => v.throttle_pct() == t,
            Scheme::All => true,
        }
    }

    /// The eleven dataset variants: six angles, four powers, all data.
    pub fn variants() -> Vec<Scheme> {
        ANGLES_DEG
            .iter()
            .map(|&a| Scheme::PerAngle(a))
            .chain(THROTTLES_PCT.iter().map(|&t| Scheme::PerPower(t)))
            .chain(std::iter::once(Scheme::All))
            .collect()
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::PerAngle(a) => write!(f, "angle-{a}"),
            Scheme::PerPower(t) => write!(f, "power-{t}"),
            Scheme::All => f.write_str("all"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown scheme {s:?} (all, angle-<deg>, power-<pct>)"));
        if s == "all" {
            return Ok(Scheme::All);
        }
        if let Some(a) = s.strip_prefix("angle-") {
            let a = a.parse().map_err(|_| bad())?;
            return if ANGLES_DEG.contains(&a) { Ok(Scheme::PerAngle(a)) } else { Err(bad()) };
        }
        if let Some(t) = s.strip_prefix("power-") {
            let t = t.parse().map_err(|_| bad())?;
            return if THROTTLES_PCT.contains(&t) { Ok(Scheme::PerPower(t)) } else { Err(bad()) };
        }
        Err(bad())
    }
}

/// Restricts `m` to `scheme` and assigns splits: a seeded `test_fraction` of
/// the normal entries goes to test, the rest to train, and every abnormal
/// entry goes to test.
pub fn split(m: &Manifest, scheme: Scheme, test_fraction: f64, seed: u64) -> Result<Manifest> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction {test_fraction} must be in (0, 1)"
        )));
    }
    let mut subset = m.filter(|v| scheme.includes(v));
    if subset.is_empty() {
        return Err(Error::EmptySubset(scheme.to_string()));
    }
    let mut normal: Vec<usize> = subset
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.condition().is_abnormal())
        .map(|(i, _)| i)
        .collect();
    let n = normal.len();
    let n_test = if n >= 2 {
        ((test_fraction * n as f64).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    normal.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for e in subset.entries.iter_mut() {
        e.split = if e.condition().is_abnormal() { Split::Test } else { Split::Train };
    }
    for &i in &normal[..n_test] {
        subset.entries[i].split = Split::Test;
    }
    Ok(subset)
}
