//! Path files: `{"n": n, "t": [...], "frames": [[row-major 2n x n]...]}`,
//! with an optional `"meta"` object. Floats are written with 17
//! significant digits.

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lagrangian::{LagrangianFrame, SampledLagrangianPath};
use crate::matlib::{RealMatrix, Tolerances};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathFile {
    pub n: usize,
    pub t: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Value>,
}

/// Compact JSON with every float printed as `d.dddddddddddddddde±x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + std::io::Write>(&mut self, w: &mut W, v: f32) -> std::io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

/// Serializes `value` with [`SeventeenDigits`]. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits);
    value.serialize(&mut ser).expect("serialization into memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

impl PathFile {
    pub fn from_path(path: &SampledLagrangianPath, meta: Option<Value>) -> Self {
        let frames = path
            .frames()
            .iter()
            .map(|f| {
                let m = f.matrix();
                (0..m.nrows())
                    .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
                    .collect()
            })
            .collect();
        Self {
            n: path.n(),
            t: path.nodes().to_vec(),
            frames,
            meta,
        }
    }

    pub fn to_path(&self, tol: &Tolerances) -> Result<SampledLagrangianPath> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidPath("n must be positive".into()));
        }
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                if f.len() != 2 * n * n {
                    return Err(Error::InvalidPath(format!(
                        "frame {i} has {} entries, expected {}",
                        f.len(),
                        2 * n * n
                    )));
                }
                Ok(RealMatrix::from_row_slice(2 * n, n, f))
            })
            .collect::<Result<Vec<_>>>()?;
        SampledLagrangianPath::new(self.t.clone(), frames, None, tol)
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidPath(format!("malformed path JSON: {e}")))
    }
}

pub fn load_path(s: &str, tol: &Tolerances) -> Result<SampledLagrangianPath> {
    PathFile::parse(s)?.to_path(tol)
}

pub fn save_path(path: &SampledLagrangianPath, meta: Option<Value>) -> String {
    to_json(&PathFile::from_path(path, meta))
}

/// A single frame: `{"n": n, "frame": [row-major 2n x n]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameFile {
    pub n: usize,
    pub frame: Vec<f64>,
}

/// Reads a frame file, or the first frame of a path file.
pub fn load_frame(s: &str, tol: &Tolerances) -> Result<LagrangianFrame> {
    if let Ok(f) = serde_json::from_str::<FrameFile>(s) {
        if f.n == 0 || f.frame.len() != 2 * f.n * f.n {
            return Err(Error::InvalidPath(format!(
                "frame has {} entries, expected {}",
                f.frame.len(),
                2 * f.n * f.n
            )));
        }
        return LagrangianFrame::new(RealMatrix::from_row_slice(2 * f.n, f.n, &f.frame), tol);
    }
    Ok(load_path(s, tol)?.first().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamgen::rotation_path;

    #[test]
    fn round_trip_is_exact() {
        let tol = Tolerances::default();
        let p = rotation_path(&[1.0, 2.5], (0.0, 3.0), 17, &tol).unwrap();
        let s = save_path(&p, Some(serde_json::json!({"source": "rotation"})));
        let q = load_path(&s, &tol).unwrap();
        assert_eq!(p.nodes(), q.nodes());
        for (a, b) in p.frames().iter().zip(q.frames()) {
            assert_eq!(a.matrix(), b.matrix());
        }
        assert_eq!(PathFile::parse(&s).unwrap().meta.unwrap()["source"], "rotation");
    }

    #[test]
    fn frames_from_either_format() {
        let tol = Tolerances::default();
        let f = load_frame(r#"{"n":1,"frame":[0.6,0.8]}"#, &tol).unwrap();
        assert_eq!(f.matrix()[(1, 0)], 0.8);
        let f = load_frame(r#"{"n":1,"t":[0,1],"frames":[[1,0],[0,1]]}"#, &tol).unwrap();
        assert_eq!(f.matrix()[(0, 0)], 1.0);
        assert!(load_frame(r#"{"n":2,"frame":[1,0]}"#, &tol).is_err());
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(to_json(&[0.1f64]), "[1.0000000000000001e-1]");
        assert_eq!(to_json(&serde_json::json!({"x": 2.0})), "{\"x\":2.0000000000000000e0}");
    }

    #[test]
    fn rejects_bad_files() {
        let tol = Tolerances::default();
        assert!(load_path("{\"n\": 1, \"t\": [0, 1]", &tol).is_err());
        let wrong_len = r#"{"n":1,"t":[0,1],"frames":[[0,1],[0]]}"#;
        assert!(matches!(load_path(wrong_len, &tol), Err(Error::InvalidPath(_))));
        let not_increasing = r#"{"n":1,"t":[1,0],"frames":[[0,1],[0,1]]}"#;
        assert!(load_path(not_increasing, &tol).is_err());
        let not_lagrangian = r#"{"n":1,"t":[0,1],"frames":[[0,0],[0,1]]}"#;
        assert!(load_path(not_lagrangian, &tol).is_err());
    }
}
