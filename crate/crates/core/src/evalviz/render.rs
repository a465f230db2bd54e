use std::io::{self, Write};

use crate::agent::Geometry;
use crate::envs::{to_byte, Frame};

use super::EvalError;

/// Brightness kept by pixels with zero attention.
pub const DIM_FACTOR: f64 = 0.4;

/// Attention overlay for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionFrame {
    pub base: Frame,
    pub weights: Vec<f64>,
    /// Splatted heat before display scaling.
    pub raw_heat: Vec<f64>,
    /// `raw_heat / max(raw_heat)`, in `[0, 1]`.
    pub heat: Vec<f64>,
    pub action: Option<usize>,
    pub q_values: Vec<f64>,
}

impl AttentionFrame {
    /// Heat normalized to unit sum.
    pub fn density(&self) -> Vec<f64> {
        let total: f64 = self.raw_heat.iter().sum();
        if total <= 0.0 {
            return vec![0.0; self.raw_heat.len()];
        }
        self.raw_heat.iter().map(|h| h / total).collect()
    }

    /// Base frame dimmed outside the attended region.
    pub fn composite(&self) -> Vec<f64> {
        self.base
            .values()
            .iter()
            .zip(&self.heat)
            .map(|(v, h)| v * (DIM_FACTOR + (1.0 - DIM_FACTOR) * h))
            .collect()
    }

    /// RGB bytes: the composite in gray with the heat added to red.
    pub fn rgb(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.heat.len() * 3);
        for (g, h) in self.composite().iter().zip(&self.heat) {
            let gray = to_byte(*g);
            out.push(to_byte(g + 0.5 * h));
            out.push(gray);
            out.push(gray);
        }
        out
    }
}

/// Input-pixel rectangles `(top, left, size)` of every final-layer cell, row-major.
pub fn receptive_fields(geometry: &Geometry) -> Result<Vec<(usize, usize, usize)>, EvalError> {
    let side = geometry
        .grid_side()
        .map_err(|e| EvalError::Geometry(e.to_string()))?;
    let (size, jump) = geometry.receptive_field();
    Ok((0..side * side)
        .map(|i| ((i / side) * jump, (i % side) * jump, size))
        .collect())
}

/// Splats each weight uniformly over its cell's receptive field.
///
/// Each pixel's heat is divided by the number of fields covering it, so a
/// uniform weight vector yields a uniform map and the total heat equals
/// `Σ_i w_i · a_i`, where `a_i` is field `i`'s coverage-weighted area.
pub fn render_attention(
    frame: &Frame,
    weights: &[f64],
    geometry: &Geometry,
) -> Result<AttentionFrame, EvalError> {
    let (h, w) = (geometry.input_height, geometry.input_width);
    if frame.height() != h || frame.width() != w {
        return Err(EvalError::Geometry(format!(
            "frame {}x{} but geometry expects {h}x{w}",
            frame.height(),
            frame.width()
        )));
    }
    let fields = receptive_fields(geometry)?;
    if weights.len() != fields.len() {
        return Err(EvalError::Geometry(format!(
            "{} weights for {} locations",
            weights.len(),
            fields.len()
        )));
    }
    let coverage = coverage(&fields, h, w);
    let mut raw = vec![0.0; h * w];
    for (&(top, left, size), &wt) in fields.iter().zip(weights) {
        for y in top..(top + size).min(h) {
            for x in left..(left + size).min(w) {
                raw[y * w + x] += wt;
            }
        }
    }
    for (r, &c) in raw.iter_mut().zip(&coverage) {
        if c > 0 {
            *r /= c as f64;
        }
    }
    let max = raw.iter().copied().fold(0.0, f64::max);
    let heat = if max > 0.0 {
        raw.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; raw.len()]
    };
    Ok(AttentionFrame {
        base: frame.clone(),
        weights: weights.to_vec(),
        raw_heat: raw,
        heat,
        action: None,
        q_values: Vec::new(),
    })
}

/// Number of receptive fields covering each pixel.
pub(crate) fn coverage(fields: &[(usize, usize, usize)], h: usize, w: usize) -> Vec<u32> {
    let mut count = vec![0u32; h * w];
    for &(top, left, size) in fields {
        for y in top..(top + size).min(h) {
            for x in left..(left + size).min(w) {
                count[y * w + x] += 1;
            }
        }
    }
    count
}

/// Binary PPM (P6, maxval 255).
pub fn write_ppm<W: Write>(mut out: W, width: usize, height: usize, rgb: &[u8]) -> io::Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("{} bytes for a {width}x{height} RGB image", rgb.len()),
        ));
    }
    write!(out, "P6\n{width} {height}\n255\n")?;
    out.write_all(rgb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_fields_tile_the_input() {
        let g = Geometry::paper();
        let f = receptive_fields(&g).unwrap();
        assert_eq!(f.len(), 49);
        assert_eq!(f[0], (0, 0, 36));
        assert_eq!(f[48], (48, 48, 36));
        assert!(coverage(&f, 84, 84).iter().all(|&c| c > 0));
    }

    #[test]
    fn uniform_weights_give_flat_heat() {
        let g = Geometry::small();
        let frame = Frame::blank(24, 24);
        let af = render_attention(&frame, &[1.0 / 25.0; 25], &g).unwrap();
        assert!(af.heat.iter().all(|&v| (v - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn ppm_header() {
        let mut buf = Vec::new();
        write_ppm(&mut buf, 2, 1, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(&buf[..11], b"P6\n2 1\n255\n");
        assert_eq!(buf.len(), 17);
        assert!(write_ppm(Vec::new(), 2, 2, &[0]).is_err());
    }
}
