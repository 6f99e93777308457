//! Plain-text dataset manifest.
//!
//! ```text
//! # comment
//! provenance=phantom
//! sequences=DWI,TTP,Tmax
//! subject=S000 dims=8x96x96 label=S000/label.ptf DWI=S000/DWI.ptf TTP=S000/TTP.ptf Tmax=S000/Tmax.ptf
//! ```
//!
//! Header keys come before the first `subject=` line. Subject lines are
//! whitespace-separated `key=value` tokens; any token other than `subject`,
//! `dims` and `label` names a sequence volume. Relative paths resolve
//! against the manifest's directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;

use super::{io_err, DataError};

pub const DEFAULT_SEQUENCES: [&str; 3] = ["DWI", "TTP", "Tmax"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Isles,
    Phantom,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Isles => "isles",
            Provenance::Phantom => "phantom",
        })
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "isles" => Ok(Provenance::Isles),
            "phantom" => Ok(Provenance::Phantom),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    /// Sequence name to volume path, as written in the manifest.
    pub volumes: IndexMap<String, PathBuf>,
    pub label: PathBuf,
    /// `depth x height x width`, when declared.
    pub dims: Option<[usize; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub provenance: Provenance,
    /// Sequences fed to the network, in channel order.
    pub sequences: Vec<String>,
    pub subjects: Vec<SubjectRecord>,
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
}

fn parse_dims(s: &str) -> Option<[usize; 3]> {
    let parts: Vec<usize> = s.split('x').map(|p| p.parse().ok()).collect::<Option<_>>()?;
    (parts.len() == 3 && parts.iter().all(|&p| p > 0)).then(|| [parts[0], parts[1], parts[2]])
}

impl Manifest {
    pub fn parse(text: &str, root: &Path) -> Result<Self, DataError> {
        let err = |line: usize, detail: String| DataError::Manifest { line, detail };
        let mut provenance = None;
        let mut sequences: Option<Vec<String>> = None;
        let mut subjects: Vec<SubjectRecord> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with("subject=") {
                let mut rec = SubjectRecord {
                    id: String::new(),
                    volumes: IndexMap::new(),
                    label: PathBuf::new(),
                    dims: None,
                };
                for tok in line.split_whitespace() {
                    let (k, v) = tok
                        .split_once('=')
                        .ok_or_else(|| err(line_no, format!("token `{tok}` is not key=value")))?;
                    if v.is_empty() {
                        return Err(err(line_no, format!("empty value for `{k}`")));
                    }
                    match k {
                        "subject" => rec.id = v.to_string(),
                        "label" => rec.label = PathBuf::from(v),
                        "dims" => {
                            rec.dims = Some(parse_dims(v).ok_or_else(|| err(line_no, format!("bad dims `{v}`")))?)
                        }
                        seq => {
                            if rec.volumes.insert(seq.to_string(), PathBuf::from(v)).is_some() {
                                return Err(err(line_no, format!("sequence `{seq}` listed twice")));
                            }
                        }
                    }
                }
                if rec.label.as_os_str().is_empty() {
                    return Err(err(line_no, format!("subject `{}` has no label", rec.id)));
                }
                if subjects.iter().any(|s| s.id == rec.id) {
                    return Err(err(line_no, format!("duplicate subject id `{}`", rec.id)));
                }
                subjects.push(rec);
                continue;
            }
            if !subjects.is_empty() {
                return Err(err(line_no, "header key after subject lines".into()));
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("`{line}` is not key=value")))?;
            match k.trim() {
                "provenance" => provenance = Some(v.trim().parse().map_err(|e| err(line_no, e))?),
                "sequences" => {
                    let list: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
                    if list.iter().any(String::is_empty) {
                        return Err(err(line_no, "empty sequence name".into()));
                    }
                    sequences = Some(list);
                }
                other => return Err(err(line_no, format!("unknown key `{other}`"))),
            }
        }
        let sequences = sequences.unwrap_or_else(|| DEFAULT_SEQUENCES.iter().map(|s| s.to_string()).collect());
        for s in &subjects {
            for seq in &sequences {
                if !s.volumes.contains_key(seq) {
                    return Err(DataError::Subject {
                        subject: s.id.clone(),
                        detail: format!("no `{seq}` volume"),
                    });
                }
            }
        }
        Ok(Manifest {
            provenance: provenance.unwrap_or(Provenance::Isles),
            sequences,
            subjects,
            root: root.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let root = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, root)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_string()).map_err(io_err(path))
    }

    pub fn ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.id.clone()).collect()
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectRecord> {
        self.subjects.iter().find(|s| s.id == id)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "provenance={}", self.provenance)?;
        writeln!(f, "sequences={}", self.sequences.join(","))?;
        for s in &self.subjects {
            write!(f, "subject={}", s.id)?;
            if let Some([d, h, w]) = s.dims {
                write!(f, " dims={d}x{h}x{w}")?;
            }
            write!(f, " label={}", s.label.display())?;
            for (k, v) in &s.volumes {
                write!(f, " {k}={}", v.display())?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "# test\nprovenance=phantom\nsequences=DWI,TTP,Tmax\n\
        subject=A dims=2x32x32 label=A/l.ptf DWI=A/d.ptf TTP=A/t.ptf Tmax=A/m.ptf CBF=A/c.ptf\n\
        subject=B label=B/l.ptf DWI=B/d.ptf TTP=B/t.ptf Tmax=B/m.ptf\n";

    #[test]
    fn parse_and_reserialize() {
        let m = Manifest::parse(TEXT, Path::new("/data")).unwrap();
        assert_eq!(m.provenance, Provenance::Phantom);
        assert_eq!(m.ids(), vec!["A", "B"]);
        assert_eq!(m.subjects[0].dims, Some([2, 32, 32]));
        assert!(m.subjects[0].volumes.contains_key("CBF"));
        assert_eq!(m.resolve(&m.subjects[1].label), PathBuf::from("/data/B/l.ptf"));
        let again = Manifest::parse(&m.to_string(), Path::new("/data")).unwrap();
        assert_eq!(again, m);
        assert_eq!(again.to_string(), m.to_string());
    }

    #[test]
    fn rejects_duplicates_missing_and_unknown() {
        let dup = format!("{TEXT}subject=A label=x DWI=a TTP=b Tmax=c\n");
        assert!(Manifest::parse(&dup, Path::new(".")).is_err());
        let missing = "subject=A label=x DWI=a TTP=b\n";
        assert!(matches!(
            Manifest::parse(missing, Path::new(".")),
            Err(DataError::Subject { .. })
        ));
        assert!(Manifest::parse("colour=blue\n", Path::new(".")).is_err());
        assert!(Manifest::parse("subject=A DWI=a TTP=b Tmax=c\n", Path::new(".")).is_err());
    }
}
