//! 8-bit PGM previews (P5, maxval 255) of multichannel images: channels are
//! laid side by side and the whole image is min-max scaled, so a generated
//! sample can be eyeballed with any image viewer.

use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};

use handwave_core::Tensor;

pub fn write_pgm(path: &Path, img: &Tensor<f32>) -> Result<()> {
    let dims = img.dims().to_vec();
    ensure!(dims.len() == 3, "expected a [C, H, W] image, got {dims:?}");
    let (c, h, w) = (dims[0], dims[1], dims[2]);
    let data = img.data();
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for &v in data.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    let scale = |v: f32| -> u8 {
        if span <= 0.0 {
            0
        } else {
            (255.0 * (v - lo) / span).round() as u8
        }
    };

    let mut bytes = Vec::with_capacity(32 + c * h * w);
    bytes.extend_from_slice(format!("P5\n{} {}\n255\n", c * w, h).as_bytes());
    for y in 0..h {
        for ch in 0..c {
            for x in 0..w {
                bytes.push(scale(data[(ch * h + y) * w + x]));
            }
        }
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::from_vec(&[2, 2, 3], (0..12).map(|i| i as f32).collect()).unwrap();
        let path = dir.path().join("x.pgm");
        write_pgm(&path, &img).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"P5\n6 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(px.len(), 12);
        // row 0 is channel-0 row 0 then channel-1 row 0
        assert_eq!(px[0], 0); // value 0 -> min
        assert_eq!(px[3], (255.0f32 * 6.0 / 11.0).round() as u8); // value 6
        assert_eq!(px[11], 255); // value 11 -> max

        // constant image maps to zeros, not NaN garbage
        let flat = Tensor::from_vec(&[1, 2, 2], vec![3.0; 4]).unwrap();
        write_pgm(&path, &flat).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes[b"P5\n2 2\n255\n".len()..].iter().all(|&b| b == 0));
    }
}
