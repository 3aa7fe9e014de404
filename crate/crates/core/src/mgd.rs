//! The MGD text raster format.
//!
//! ```text
//! MGD 1 <rows> <cols> <channels>
//! <v(0,0,0)> <v(0,0,1)> ...
//! ```
//!
//! The header line is matched exactly. Values are whitespace separated,
//! row-major with the channel index fastest, and must be finite. Writers
//! emit one pixel per line with 17 significant digits, which round-trips
//! every `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &str = "MGD";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MgdFile {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<f64>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

impl MgdFile {
    pub fn new(rows: usize, cols: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::InvalidArgument(
                "MGD dimensions must be positive".into(),
            ));
        }
        check_len("MGD payload", rows * cols * channels, data.len())?;
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("MGD payload"));
        }
        Ok(Self {
            rows,
            cols,
            channels,
            data,
        })
    }

    /// One channel per pixel.
    pub fn from_vector(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, 1, data)
    }

    /// Pixel-by-channel matrix (N × channels) laid out over a raster.
    pub fn from_matrix(rows: usize, cols: usize, m: &Matrix<f64>) -> Result<Self> {
        check_len("MGD matrix rows", rows * cols, m.rows())?;
        Self::new(rows, cols, m.cols(), m.as_slice().to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn to_matrix(&self) -> Matrix<f64> {
        Matrix::from_vec(self.pixels(), self.channels, self.data.clone()).expect("sizes checked")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        let header = lines
            .next()
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .unwrap_or("");
        let tokens: Vec<&str> = header.split(' ').collect();
        if tokens.len() != 5 {
            return Err(parse_err(
                1,
                "header must be `MGD 1 <rows> <cols> <channels>`",
            ));
        }
        if tokens[0] != MAGIC {
            return Err(parse_err(1, "bad magic, expected MGD"));
        }
        if tokens[1] != "1" {
            return Err(parse_err(1, format!("unsupported version `{}`", tokens[1])));
        }
        let mut dims = [0usize; 3];
        for (d, tok) in dims.iter_mut().zip(&tokens[2..]) {
            let v: usize = tok
                .parse()
                .map_err(|_| parse_err(1, format!("bad dimension `{tok}`")))?;
            if v == 0 || v.to_string() != *tok {
                return Err(parse_err(1, format!("bad dimension `{tok}`")));
            }
            *d = v;
        }
        let [rows, cols, channels] = dims;
        let expected = rows
            .checked_mul(cols)
            .and_then(|x| x.checked_mul(channels))
            .ok_or_else(|| parse_err(1, "dimensions overflow"))?;

        let mut data = Vec::with_capacity(expected.min(1 << 24));
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            for tok in line.split_ascii_whitespace() {
                if data.len() == expected {
                    return Err(parse_err(line_no, format!("more than {expected} values")));
                }
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad number `{tok}`")))?;
                if !v.is_finite() {
                    return Err(parse_err(line_no, format!("non-finite value `{tok}`")));
                }
                data.push(v);
            }
        }
        if data.len() != expected {
            return Err(parse_err(
                0,
                format!("expected {expected} values, found {}", data.len()),
            ));
        }
        Ok(Self {
            rows,
            cols,
            channels,
            data,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(24 * (self.data.len() + 1));
        writeln!(
            out,
            "{MAGIC} {VERSION} {} {} {}",
            self.rows, self.cols, self.channels
        )
        .expect("write to string");
        for pixel in self.data.chunks(self.channels) {
            let mut first = true;
            for v in pixel {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{v:.16e}").expect("write to string");
            }
            out.push('\n');
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes =
            std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes).map_err(|_| parse_err(0, "file is not valid UTF-8"))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}
