//! Recorded demonstrations and their newline-delimited JSON file format.
//!
//! A file starts with a header record `{"labels": [...], "rate_hz": f}` and is
//! followed by one sample per line, either in the bimanual layout
//! `{"t", "left": {"p", "q"}, "right": {"p", "q"}}` or the generic layout
//! `{"t", "y": [...], "q"?: [[w,x,y,z], ...]}`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::{self, Quat};

pub const BIMANUAL_LABELS: [&str; 6] =
    ["left_x", "left_y", "left_z", "right_x", "right_y", "right_z"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Arbitrary channels, optional orientations.
    Generic,
    /// Six channels (left xyz, right xyz) and two orientations (left, right).
    Bimanual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub y: Vec<f64>,
    /// One orientation per arm; empty when the demonstration carries none.
    pub q: Vec<Quat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub labels: Vec<String>,
    pub rate_hz: f64,
    pub layout: Layout,
    pub samples: Vec<Sample>,
}

impl Demonstration {
    pub fn new(labels: Vec<String>, rate_hz: f64, layout: Layout, samples: Vec<Sample>) -> Result<Self> {
        let demo = Demonstration { labels, rate_hz, layout, samples };
        demo.validate()?;
        Ok(demo)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::invalid("demonstration has no samples"))?;
        if first.t != 0.0 {
            return Err(Error::invalid(format!("first timestamp is {} (must be 0)", first.t)));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::invalid("rate_hz must be positive"));
        }
        let n = first.y.len();
        let n_q = first.q.len();
        if n == 0 {
            return Err(Error::invalid("samples need at least one channel"));
        }
        if self.labels.len() != n {
            return Err(Error::invalid(format!(
                "{} labels for {} channels",
                self.labels.len(),
                n
            )));
        }
        if self.layout == Layout::Bimanual && (n != 6 || n_q != 2) {
            return Err(Error::invalid("bimanual layout needs 6 channels and 2 orientations"));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.y.len() != n || s.q.len() != n_q {
                return Err(Error::invalid(format!("sample {i} has inconsistent dimension")));
            }
            if s.y.iter().any(|v| !v.is_finite()) || !s.t.is_finite() {
                return Err(Error::invalid(format!("sample {i} is not finite")));
            }
            for q in &s.q {
                let norm = q.quaternion().norm();
                if (norm - 1.0).abs() > quat::UNIT_TOL {
                    return Err(Error::invalid(format!("sample {i} quaternion norm {norm}")));
                }
            }
            if i > 0 && s.t <= self.samples[i - 1].t {
                return Err(Error::invalid(format!("timestamps not increasing at sample {i}")));
            }
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.samples[0].y.len()
    }

    pub fn n_orientations(&self) -> usize {
        self.samples[0].q.len()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.y[c]).collect()
    }

    /// Splits a bimanual recording into left and right single-arm demos
    /// (three channels and one orientation each).
    pub fn split_arms(&self) -> Result<(Demonstration, Demonstration)> {
        if self.layout != Layout::Bimanual {
            return Err(Error::invalid("split_arms needs a bimanual demonstration"));
        }
        let arm = |offset: usize, qi: usize| Demonstration {
            labels: vec!["x".into(), "y".into(), "z".into()],
            rate_hz: self.rate_hz,
            layout: Layout::Generic,
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    t: s.t,
                    y: s.y[offset..offset + 3].to_vec(),
                    q: vec![s.q[qi]],
                })
                .collect(),
        };
        Ok((arm(0, 0), arm(3, 1)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path)
    }

    pub fn read(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let mut header: Option<Header> = None;
        let mut layout: Option<Layout> = None;
        let mut samples = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::parse(origin, format!("line {}: {msg}", lineno + 1));
            if header.is_none() {
                header = Some(serde_json::from_str(line).map_err(|e| at(e.to_string()))?);
                continue;
            }
            let rec: Record = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
            let (this_layout, sample) = rec.into_sample().map_err(|e| at(e.to_string()))?;
            match layout {
                None => layout = Some(this_layout),
                Some(l) if l != this_layout => return Err(at("mixed record layouts".into())),
                _ => {}
            }
            samples.push(sample);
        }
        let header = header.ok_or_else(|| Error::parse(origin, "missing header record"))?;
        let demo = Demonstration {
            labels: header.labels,
            rate_hz: header.rate_hz,
            layout: layout.unwrap_or(Layout::Generic),
            samples,
        };
        demo.validate().map_err(|e| Error::parse(origin, e.to_string()))?;
        Ok(demo)
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        let header = Header { labels: self.labels.clone(), rate_hz: self.rate_hz };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for s in &self.samples {
            let line = match self.layout {
                Layout::Bimanual => serde_json::to_string(&BimanualRecord {
                    t: s.t,
                    left: ArmPose { p: [s.y[0], s.y[1], s.y[2]], q: quat::to_wxyz(&s.q[0]) },
                    right: ArmPose { p: [s.y[3], s.y[4], s.y[5]], q: quat::to_wxyz(&s.q[1]) },
                })?,
                Layout::Generic => serde_json::to_string(&GenericRecord {
                    t: s.t,
                    y: s.y.clone(),
                    q: (!s.q.is_empty()).then(|| s.q.iter().map(quat::to_wxyz).collect()),
                })?,
            };
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    labels: Vec<String>,
    rate_hz: f64,
}

#[derive(Serialize, Deserialize)]
struct ArmPose {
    p: [f64; 3],
    q: [f64; 4],
}

#[derive(Serialize)]
struct BimanualRecord {
    t: f64,
    left: ArmPose,
    right: ArmPose,
}

#[derive(Serialize)]
struct GenericRecord {
    t: f64,
    y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<Vec<[f64; 4]>>,
}

#[derive(Deserialize)]
struct Record {
    t: f64,
    left: Option<ArmPose>,
    right: Option<ArmPose>,
    y: Option<Vec<f64>>,
    q: Option<Vec<[f64; 4]>>,
}

impl Record {
    fn into_sample(self) -> Result<(Layout, Sample)> {
        match (self.left, self.right, self.y) {
            (Some(l), Some(r), None) => {
                let mut y = l.p.to_vec();
                y.extend_from_slice(&r.p);
                let q = vec![quat::from_wxyz(l.q)?, quat::from_wxyz(r.q)?];
                Ok((Layout::Bimanual, Sample { t: self.t, y, q }))
            }
            (None, None, Some(y)) => {
                let q = self
                    .q
                    .unwrap_or_default()
                    .into_iter()
                    .map(quat::from_wxyz)
                    .collect::<Result<Vec<_>>>()?;
                Ok((Layout::Generic, Sample { t: self.t, y, q }))
            }
            _ => Err(Error::invalid("record needs either left+right or y")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic(ts: &[f64]) -> Demonstration {
        Demonstration {
            labels: vec!["a".into()],
            rate_hz: 10.0,
            layout: Layout::Generic,
            samples: ts.iter().map(|&t| Sample { t, y: vec![t], q: vec![] }).collect(),
        }
    }

    #[test]
    fn rejects_non_increasing_time() {
        assert!(generic(&[0.0, 0.1, 0.1]).validate().is_err());
        assert!(generic(&[0.1, 0.2]).validate().is_err());
        assert!(generic(&[0.0, 0.1, 0.2]).validate().is_ok());
    }

    #[test]
    fn parses_bimanual_records() {
        let text = r#"{"labels":["left_x","left_y","left_z","right_x","right_y","right_z"],"rate_hz":100}
{"t":0,"left":{"p":[0,0.2,1],"q":[1,0,0,0]},"right":{"p":[0,-0.2,1],"q":[1,0,0,0]}}
{"t":0.01,"left":{"p":[0.01,0.2,1],"q":[1,0,0,0]},"right":{"p":[0.01,-0.2,1],"q":[0,1,0,0]}}
"#;
        let demo = Demonstration::read(text.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(demo.layout, Layout::Bimanual);
        assert_eq!(demo.n_channels(), 6);
        let (l, r) = demo.split_arms().unwrap();
        assert_eq!(l.samples[1].y, vec![0.01, 0.2, 1.0]);
        assert_eq!(r.samples[1].y, vec![0.01, -0.2, 1.0]);
        assert_eq!(quat::to_wxyz(&r.samples[1].q[0]), [0.0, 1.0, 0.0, 0.0]);

        let mut buf = Vec::new();
        demo.write(&mut buf).unwrap();
        let again = Demonstration::read(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(again, demo);
    }

    #[test]
    fn rejects_mixed_layouts_and_missing_header() {
        let mixed = r#"{"labels":["a"],"rate_hz":1}
{"t":0,"y":[1]}
{"t":1,"left":{"p":[0,0,0],"q":[1,0,0,0]},"right":{"p":[0,0,0],"q":[1,0,0,0]}}
"#;
        assert!(Demonstration::read(mixed.as_bytes(), Path::new("m")).is_err());
        assert!(Demonstration::read("".as_bytes(), Path::new("m")).is_err());
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        let text = r#"{"labels":["a"],"rate_hz":1}
{"t":0,"y":[1],"q":[[1,0,0,0.1]]}
"#;
        assert!(Demonstration::read(text.as_bytes(), Path::new("m")).is_err());
    }
}
