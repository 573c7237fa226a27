//! Sample manifests: one CSV row per clip.
//!
//! Columns (header required): `sample_id, dataset, subject_id, frames_dir,
//! onset, apex, offset, label` and optionally `landmarks_dir`. Relative
//! directories resolve against the manifest's own directory. Frame files
//! are named by their integer index with optional zero padding, e.g.
//! `00012.png`; landmark files likewise, e.g. `00012.txt`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const REQUIRED_COLUMNS: [&str; 8] = [
    "sample_id",
    "dataset",
    "subject_id",
    "frames_dir",
    "onset",
    "apex",
    "offset",
    "label",
];

const FRAME_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "bmp", "pgm", "ppm"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dataset {
    SmicHs,
    Casme2,
    Samm,
    Synth,
}

impl Dataset {
    pub const ALL: [Dataset; 4] = [Dataset::SmicHs, Dataset::Casme2, Dataset::Samm, Dataset::Synth];

    pub fn name(self) -> &'static str {
        match self {
            Dataset::SmicHs => "SMIC-HS",
            Dataset::Casme2 => "CASME2",
            Dataset::Samm => "SAMM",
            Dataset::Synth => "SYNTH",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dataset::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown dataset {s:?} (expected SMIC-HS, CASME2, SAMM or SYNTH)")))
    }
}

/// One clip as listed in a manifest, with directories already resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub dataset: Dataset,
    pub subject_id: String,
    pub frames_dir: PathBuf,
    pub onset: usize,
    pub apex: usize,
    pub offset: usize,
    pub label: String,
    pub landmarks_dir: Option<PathBuf>,
}

impl SampleRecord {
    pub fn frame_count(&self) -> usize {
        self.offset - self.onset + 1
    }

    fn err(&self, detail: impl Into<String>) -> Error {
        Error::Sample {
            sample_id: self.sample_id.clone(),
            detail: detail.into(),
        }
    }

    /// Paths of frames `onset..=offset`.
    pub fn frame_paths(&self) -> Result<Vec<PathBuf>> {
        let index = index_dir(&self.frames_dir, &FRAME_EXTENSIONS).map_err(|e| self.err(e.to_string()))?;
        (self.onset..=self.offset)
            .map(|i| {
                index.get(&i).cloned().ok_or_else(|| {
                    self.err(format!("missing frame file for index {i} in {}", self.frames_dir.display()))
                })
            })
            .collect()
    }

    /// Landmark file paths for `onset..=offset`, if a directory is given.
    pub fn landmark_paths(&self) -> Result<Option<Vec<PathBuf>>> {
        let Some(dir) = &self.landmarks_dir else {
            return Ok(None);
        };
        let index = index_dir(dir, &["txt", "pts"]).map_err(|e| self.err(e.to_string()))?;
        (self.onset..=self.offset)
            .map(|i| {
                index
                    .get(&i)
                    .cloned()
                    .ok_or_else(|| self.err(format!("missing landmark file for index {i} in {}", dir.display())))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

/// Maps integer file stems to paths for files with one of `extensions`.
fn index_dir(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<usize, PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.iter().any(|x| x.eq_ignore_ascii_case(e)));
        let stem = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<usize>().ok());
        if let (true, Some(i)) = (ext_ok, stem) {
            if let Some(prev) = out.insert(i, path.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "frame index {i} appears twice: {} and {}",
                    prev.display(),
                    path.display()
                )));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub records: Vec<SampleRecord>,
}

impl Manifest {
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.sample_id.as_str()) {
                return Err(Error::Sample {
                    sample_id: r.sample_id.clone(),
                    detail: "duplicate sample_id".into(),
                });
            }
            if r.onset > r.apex || r.apex > r.offset {
                return Err(r.err(format!(
                    "expected onset <= apex <= offset, got {}, {}, {}",
                    r.onset, r.apex, r.offset
                )));
            }
        }
        Ok(Manifest { records })
    }

    /// Reads and validates a manifest, including the presence of every
    /// frame file between onset and offset.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let manifest = Manifest::parse(&text, base).map_err(|e| match e {
            Error::Manifest { detail, .. } => Error::Manifest {
                path: path.to_path_buf(),
                detail,
            },
            other => other,
        })?;
        for r in &manifest.records {
            r.frame_paths()?;
            r.landmark_paths()?;
        }
        Ok(manifest)
    }

    /// Parses manifest text; relative directories resolve against `base`.
    /// Does not touch the file system.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let bad = |detail: String| Error::Manifest {
            path: PathBuf::new(),
            detail,
        };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let col: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let missing: Vec<&str> = REQUIRED_COLUMNS.iter().copied().filter(|c| !col.contains_key(c)).collect();
        if !missing.is_empty() {
            return Err(bad(format!("missing column(s): {}", missing.join(", "))));
        }
        let landmarks_col = col.get("landmarks_dir").copied();

        let mut records = Vec::new();
        for (n, row) in reader.records().enumerate() {
            let row = row?;
            let line = n + 2;
            let field = |name: &str| row.get(col[name]).unwrap_or("").to_string();
            let sample_id = field("sample_id");
            if sample_id.is_empty() {
                return Err(bad(format!("line {line}: empty sample_id")));
            }
            let index = |name: &str| {
                field(name).parse::<usize>().map_err(|_| Error::Sample {
                    sample_id: sample_id.clone(),
                    detail: format!("line {line}: {name} {:?} is not a frame index", field(name)),
                })
            };
            let resolve = |p: &str| {
                let p = Path::new(p);
                if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    base.join(p)
                }
            };
            let dataset = field("dataset").parse::<Dataset>().map_err(|e| Error::Sample {
                sample_id: sample_id.clone(),
                detail: format!("line {line}: {e}"),
            })?;
            let landmarks_dir = landmarks_col
                .and_then(|i| row.get(i))
                .filter(|s| !s.is_empty())
                .map(resolve);
            records.push(SampleRecord {
                dataset,
                subject_id: field("subject_id"),
                frames_dir: resolve(&field("frames_dir")),
                onset: index("onset")?,
                apex: index("apex")?,
                offset: index("offset")?,
                label: field("label"),
                landmarks_dir,
                sample_id,
            });
        }
        Manifest::new(records)
    }

    /// Serializes with paths written relative to `base` where possible.
    pub fn to_csv(&self, base: &Path) -> Result<String> {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
        header.push("landmarks_dir");
        w.write_record(&header)?;
        for r in &self.records {
            w.write_record([
                r.sample_id.clone(),
                r.dataset.name().to_string(),
                r.subject_id.clone(),
                rel(&r.frames_dir),
                r.onset.to_string(),
                r.apex.to_string(),
                r.offset.to_string(),
                r.label.clone(),
                r.landmarks_dir.as_deref().map(rel).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new("."));
        fs::write(path, self.to_csv(base)?).map_err(|e| Error::io(path, e))
    }

    /// Mean onset-to-offset frame count per dataset.
    pub fn mean_frame_counts(&self) -> BTreeMap<Dataset, f64> {
        let mut acc: BTreeMap<Dataset, (usize, usize)> = BTreeMap::new();
        for r in &self.records {
            let e = acc.entry(r.dataset).or_default();
            e.0 += r.frame_count();
            e.1 += 1;
        }
        acc.into_iter().map(|(d, (sum, n))| (d, sum as f64 / n as f64)).collect()
    }

    pub fn subjects(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> = self.records.iter().map(|r| r.subject_id.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "sample_id,dataset,subject_id,frames_dir,onset,apex,offset,label\n";

    fn parse(rows: &str) -> Result<Manifest> {
        Manifest::parse(&format!("{HEADER}{rows}"), Path::new("/data"))
    }

    #[test]
    fn well_formed_rows() {
        let m = parse("a,SMIC-HS,s1,clips/a,0,3,6,negative\nb,casme2,s2,/abs/b,2,2,9,happiness\nc,SAMM,s1,c,1,4,5,Anger\n").unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(m.records[0].frames_dir, PathBuf::from("/data/clips/a"));
        assert_eq!(m.records[1].frames_dir, PathBuf::from("/abs/b"));
        assert_eq!(m.records[1].dataset, Dataset::Casme2);
        assert_eq!(m.records[2].frame_count(), 5);
        assert_eq!(m.subjects(), vec!["s1", "s2"]);
        let means = m.mean_frame_counts();
        assert_eq!(means[&Dataset::SmicHs], 7.0);
    }

    #[test]
    fn distinct_diagnostics() {
        let missing = Manifest::parse("sample_id,dataset,frames_dir\n", Path::new(".")).unwrap_err();
        assert!(matches!(&missing, Error::Manifest { detail, .. } if detail.contains("subject_id") && detail.contains("onset")));

        match parse("x1,SAMM,s,d,5,3,8,Anger\n").unwrap_err() {
            Error::Sample { sample_id, detail } => {
                assert_eq!(sample_id, "x1");
                assert!(detail.contains("onset <= apex"));
            }
            e => panic!("{e:?}"),
        }
        match parse("x1,SAMM,s,d,0,3,8,Anger\nx1,SAMM,s,d,0,3,8,Anger\n").unwrap_err() {
            Error::Sample { sample_id, detail } => {
                assert_eq!(sample_id, "x1");
                assert!(detail.contains("duplicate"));
            }
            e => panic!("{e:?}"),
        }
        assert!(parse("x1,OTHER,s,d,0,3,8,Anger\n").is_err());
        assert!(parse("x1,SAMM,s,d,zero,3,8,Anger\n").is_err());
    }

    #[test]
    fn missing_frames_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("clip");
        fs::create_dir(&frames).unwrap();
        for i in [0, 1, 3] {
            fs::write(frames.join(format!("{i:05}.png")), b"").unwrap();
        }
        let path = dir.path().join("m.csv");
        fs::write(&path, format!("{HEADER}a,SYNTH,s,clip,0,1,3,x\n")).unwrap();
        match Manifest::load(&path).unwrap_err() {
            Error::Sample { sample_id, detail } => {
                assert_eq!(sample_id, "a");
                assert!(detail.contains("index 2"), "{detail}");
            }
            e => panic!("{e:?}"),
        }
        fs::write(&path, format!("{HEADER}a,SYNTH,s,clip,0,1,1,x\n")).unwrap();
        let m = Manifest::load(&path).unwrap();
        assert_eq!(m.records[0].frame_paths().unwrap().len(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let m = parse("a,SMIC-HS,s1,clips/a,0,3,6,negative\n").unwrap();
        let text = m.to_csv(Path::new("/data")).unwrap();
        assert!(text.contains("clips/a"));
        assert_eq!(Manifest::parse(&text, Path::new("/data")).unwrap(), m);
    }
}
