use std::io::{self, Write};

use super::EnvError;

/// Grayscale screen with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn blank(height: usize, width: usize) -> Self {
        Frame {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    /// Builds a frame, clamping every value into `[0, 1]`.
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self, EnvError> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(EnvError::InvalidFrame {
                height,
                width,
                len: values.len(),
            });
        }
        let data = values
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Ok(Frame {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, value: f64) {
        self.data[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Paints a `scale`×`scale` block for board cell `(row, col)`.
    pub(crate) fn fill_cell(&mut self, row: usize, col: usize, scale: usize, value: f64) {
        for y in row * scale..(row + 1) * scale {
            for x in col * scale..(col + 1) * scale {
                self.set(y, x, value);
            }
        }
    }

    /// Binary PGM (`P5`, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.data.iter().map(|&v| to_byte(v)).collect();
        out.write_all(&bytes)
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.data.len() + 16);
        self.write_pgm(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    /// Parses a binary PGM with maxval 255.
    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self, EnvError> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(EnvError::BadImage("truncated header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "P5" {
            return Err(EnvError::BadImage(format!("magic {}", fields[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| EnvError::BadImage(format!("bad header field {s}")))
        };
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(EnvError::BadImage(format!("maxval {maxval}")));
        }
        let raster = bytes
            .get(pos..pos + width * height)
            .ok_or_else(|| EnvError::BadImage("truncated raster".into()))?;
        let values = raster.iter().map(|&b| f64::from(b) / 255.0).collect();
        Frame::from_values(height, width, values)
    }
}

pub(crate) fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Resampling weights for one axis: `out[i] = Σ_j w[i][j] · in[j]`.
fn axis_weights(src: usize, dst: usize) -> Result<Vec<Vec<(usize, f64)>>, EnvError> {
    if dst > src && !dst.is_multiple_of(src) {
        return Err(EnvError::InvalidTarget {
            extent: src,
            target: dst,
        });
    }
    // Output cell i covers [i·src/dst, (i+1)·src/dst) in source units.
    // Work in units of 1/dst so all bounds are integers.
    let mut weights = Vec::with_capacity(dst);
    for i in 0..dst {
        let lo = i * src;
        let hi = (i + 1) * src;
        let mut row = Vec::new();
        for j in lo / dst..hi.div_ceil(dst).min(src) {
            let overlap = hi.min((j + 1) * dst) - lo.max(j * dst);
            if overlap > 0 {
                row.push((j, overlap as f64 / src as f64));
            }
        }
        weights.push(row);
    }
    Ok(weights)
}

/// Resizes by area averaging (or integer replication when enlarging).
pub fn preprocess(raw: &Frame, target_h: usize, target_w: usize) -> Result<Frame, EnvError> {
    if target_h == 0 || target_w == 0 {
        return Err(EnvError::InvalidTarget {
            extent: raw.height.max(raw.width),
            target: 0,
        });
    }
    if target_h == raw.height && target_w == raw.width {
        return Ok(raw.clone());
    }
    let wy = axis_weights(raw.height, target_h)?;
    let wx = axis_weights(raw.width, target_w)?;
    // horizontal pass
    let mut tmp = vec![0.0; raw.height * target_w];
    for y in 0..raw.height {
        let src = &raw.data[y * raw.width..(y + 1) * raw.width];
        for (x, row) in wx.iter().enumerate() {
            tmp[y * target_w + x] = row.iter().map(|&(j, w)| w * src[j]).sum();
        }
    }
    let mut out = vec![0.0; target_h * target_w];
    for (y, col) in wy.iter().enumerate() {
        for x in 0..target_w {
            out[y * target_w + x] = col.iter().map(|&(j, w)| w * tmp[j * target_w + x]).sum();
        }
    }
    Frame::from_values(target_h, target_w, out)
}
