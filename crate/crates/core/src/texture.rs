//! Local texture descriptors: Kirsch compass responses, Local Directional
//! Pattern (LDP) codes and Local Binary Pattern (LBP) codes.
//!
//! Neighbours of a pixel are enumerated clockwise starting at the top-left:
//!
//! ```text
//! 0 1 2
//! 7 . 3
//! 6 5 4
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{Modality, VideoClip};

/// Default number of prominent directions in an LDP code.
pub const LDP_DEFAULT_K: usize = 3;

/// Luminance weights applied to R, G and B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// `(row, col)` of ring position `i` in a 3x3 window.
const RING: [(usize, usize); 8] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (1, 2),
    (2, 2),
    (2, 1),
    (2, 0),
    (1, 0),
];

/// The eight Kirsch compass masks: East, Northeast, North, Northwest, West,
/// Southwest, South, Southeast.
///
/// Mask 0 has its `5` coefficients on the right column; every following mask
/// moves the three `5`s one ring step counter-clockwise.
pub const KIRSCH_MASKS: [[[f64; 3]; 3]; 8] = build_kirsch_masks();

const fn build_kirsch_masks() -> [[[f64; 3]; 3]; 8] {
    let mut masks = [[[0.0; 3]; 3]; 8];
    let mut dir = 0;
    while dir < 8 {
        // East puts 5s on ring slots 2, 3, 4; rotating CCW subtracts one slot.
        let first = (2 + 8 - dir) % 8;
        let mut slot = 0;
        while slot < 8 {
            let (r, c) = RING[slot];
            let offset = (slot + 8 - first) % 8;
            masks[dir][r][c] = if offset < 3 { 5.0 } else { -3.0 };
            slot += 1;
        }
        dir += 1;
    }
    masks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DescriptorKind {
    Ldp,
    Lbp,
}

impl DescriptorKind {
    pub fn modality(self) -> Modality {
        match self {
            DescriptorKind::Ldp => Modality::Ldp,
            DescriptorKind::Lbp => Modality::Lbp,
        }
    }
}

impl std::str::FromStr for DescriptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ldp" => Ok(DescriptorKind::Ldp),
            "lbp" => Ok(DescriptorKind::Lbp),
            other => Err(Error::Modality(format!("unknown descriptor `{other}`"))),
        }
    }
}

/// An interleaved 8-bit frame, `height x width x channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

/// Real-valued luminance in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Geometry(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::Parameter(format!("gray value {v} is outside [0, 255]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// 3x3 window centred on `(x, y)` with replicated borders.
    pub fn window(&self, x: usize, y: usize) -> [[f64; 3]; 3] {
        let mut w = [[0.0; 3]; 3];
        for (r, row) in w.iter_mut().enumerate() {
            let yy = (y + r).saturating_sub(1).min(self.height - 1);
            for (c, v) in row.iter_mut().enumerate() {
                let xx = (x + c).saturating_sub(1).min(self.width - 1);
                *v = self.get(xx, yy);
            }
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeFrame {
    pub width: usize,
    pub height: usize,
    pub codes: Vec<u8>,
    pub kind: DescriptorKind,
}

pub fn to_grayscale(frame: &RgbFrame) -> Result<GrayFrame> {
    if frame.channels != 3 {
        return Err(Error::Modality(format!(
            "expected 3 colour channels, got {}",
            frame.channels
        )));
    }
    if frame.width < 3 || frame.height < 3 {
        return Err(Error::Geometry(format!(
            "frame {}x{} is smaller than 3x3",
            frame.width, frame.height
        )));
    }
    if frame.data.len() != frame.width * frame.height * 3 {
        return Err(Error::Geometry("frame buffer size mismatch".into()));
    }
    let pixels = frame
        .data
        .chunks_exact(3)
        .map(|px| {
            LUMA_WEIGHTS[0] * f64::from(px[0])
                + LUMA_WEIGHTS[1] * f64::from(px[1])
                + LUMA_WEIGHTS[2] * f64::from(px[2])
        })
        .map(|v| v.clamp(0.0, 255.0))
        .collect();
    GrayFrame::new(frame.width, frame.height, pixels)
}

pub fn kirsch_responses(patch: &[[f64; 3]; 3]) -> [f64; 8] {
    let mut out = [0.0; 8];
    for (dir, mask) in KIRSCH_MASKS.iter().enumerate() {
        let mut acc = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                acc += mask[r][c] * patch[r][c];
            }
        }
        out[dir] = acc;
    }
    out
}

/// Sets bit `i` for each of the `k` largest `|m_i|`, ties going to the lower
/// direction index.
pub fn ldp_code(responses: &[f64; 8], k: usize) -> Result<u8> {
    if !(1..=8).contains(&k) {
        return Err(Error::Parameter(format!("LDP k={k} is outside 1..=8")));
    }
    let mut order: [usize; 8] = [0, 1, 2, 3, 4, 5, 6, 7];
    // stable sort keeps lower indices first among equal magnitudes
    order.sort_by(|&a, &b| responses[b].abs().total_cmp(&responses[a].abs()));
    Ok(order[..k].iter().fold(0u8, |code, &i| code | (1 << i)))
}

pub fn lbp_code(patch: &[[f64; 3]; 3]) -> u8 {
    let center = patch[1][1];
    RING.iter()
        .enumerate()
        .filter(|(_, &(r, c))| patch[r][c] >= center)
        .fold(0u8, |code, (i, _)| code | (1 << i))
}

/// Code image of a gray frame with replicate padding.
pub fn code_frame(gray: &GrayFrame, kind: DescriptorKind) -> CodeFrame {
    let mut codes = Vec::with_capacity(gray.width * gray.height);
    for y in 0..gray.height {
        for x in 0..gray.width {
            let w = gray.window(x, y);
            let code = match kind {
                DescriptorKind::Ldp => {
                    ldp_code(&kirsch_responses(&w), LDP_DEFAULT_K).expect("default k is valid")
                }
                DescriptorKind::Lbp => lbp_code(&w),
            };
            codes.push(code);
        }
    }
    CodeFrame {
        width: gray.width,
        height: gray.height,
        codes,
        kind,
    }
}

/// Luminance of frame `t` of clip `b`, scaled to `[0, 255]`.
pub fn clip_frame_gray(clip: &VideoClip, b: usize, t: usize) -> Result<GrayFrame> {
    let shape = clip.shape();
    if clip.modality() != Modality::Rgb || shape.channels != 3 {
        return Err(Error::Modality(format!(
            "descriptors need an RGB clip, got {} with {} channels",
            clip.modality(),
            shape.channels
        )));
    }
    let plane = shape.height * shape.width;
    let start = clip.offset(b, t, 0, 0, 0);
    let frame = &clip.data()[start..start + 3 * plane];
    let pixels = (0..plane)
        .map(|i| {
            let rgb = [frame[i], frame[plane + i], frame[2 * plane + i]];
            let luma: f64 = rgb
                .iter()
                .zip(LUMA_WEIGHTS)
                .map(|(&v, w)| w * f64::from(v) * 255.0)
                .sum();
            luma.clamp(0.0, 255.0)
        })
        .collect();
    GrayFrame::new(shape.width, shape.height, pixels)
}

/// Converts an RGB clip batch to an LDP or LBP clip of identical shape.
///
/// Codes are divided by 255 and replicated over three channels.
pub fn descriptor_video(clip: &VideoClip, kind: DescriptorKind) -> Result<VideoClip> {
    let shape = clip.shape();
    if clip.modality() != Modality::Rgb {
        return Err(Error::Modality(format!(
            "descriptor input must be RGB, got {}",
            clip.modality()
        )));
    }
    if shape.height < 3 || shape.width < 3 {
        return Err(Error::Geometry(format!(
            "frames {}x{} are smaller than 3x3",
            shape.height, shape.width
        )));
    }
    let plane = shape.height * shape.width;
    let mut data = vec![0.0f32; clip.data().len()];
    for b in 0..clip.batch() {
        for t in 0..shape.frames {
            let gray = clip_frame_gray(clip, b, t)?;
            let codes = code_frame(&gray, kind);
            let start = clip.offset(b, t, 0, 0, 0);
            for c in 0..3 {
                let out = &mut data[start + c * plane..start + (c + 1) * plane];
                for (o, &code) in out.iter_mut().zip(&codes.codes) {
                    *o = f32::from(code) / 255.0;
                }
            }
        }
    }
    VideoClip::new(
        shape,
        data,
        kind.modality(),
        clip.clip_ids().to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::ClipShape;

    #[test]
    fn grayscale_examples() {
        let frame = |px: [u8; 3]| RgbFrame {
            width: 3,
            height: 3,
            channels: 3,
            data: px.repeat(9),
        };
        assert_eq!(to_grayscale(&frame([255, 255, 255])).unwrap().get(1, 1), 255.0);
        assert_eq!(to_grayscale(&frame([0, 0, 0])).unwrap().get(1, 1), 0.0);
        let red = to_grayscale(&frame([255, 0, 0])).unwrap().get(0, 0);
        assert!((red - 76.245).abs() < 1e-12);
    }

    #[test]
    fn grayscale_rejects_non_rgb() {
        let frame = RgbFrame {
            width: 3,
            height: 3,
            channels: 4,
            data: vec![0; 36],
        };
        assert!(matches!(to_grayscale(&frame), Err(Error::Modality(_))));
    }

    #[test]
    fn kirsch_masks_are_zero_sum_rotations() {
        assert_eq!(
            KIRSCH_MASKS[0],
            [[-3.0, -3.0, 5.0], [-3.0, 0.0, 5.0], [-3.0, -3.0, 5.0]]
        );
        // North
        assert_eq!(
            KIRSCH_MASKS[2],
            [[5.0, 5.0, 5.0], [-3.0, 0.0, -3.0], [-3.0, -3.0, -3.0]]
        );
        for mask in &KIRSCH_MASKS {
            let sum: f64 = mask.iter().flatten().sum();
            assert_eq!(sum, 0.0);
        }
    }

    #[test]
    fn constant_patch_has_no_response() {
        assert_eq!(kirsch_responses(&[[10.0; 3]; 3]), [0.0; 8]);
    }

    #[test]
    fn ldp_examples() {
        assert_eq!(ldp_code(&[4.0; 8], 3).unwrap(), 7);
        assert_eq!(
            ldp_code(&[9.0, 1.0, 8.0, 1.0, 7.0, 1.0, 1.0, 1.0], 3).unwrap(),
            0b0001_0101
        );
        assert_eq!(
            ldp_code(&[-9.0, 1.0, 8.0, 1.0, -7.0, 1.0, 1.0, 1.0], 3).unwrap(),
            0b0001_0101
        );
        assert!(matches!(ldp_code(&[0.0; 8], 0), Err(Error::Parameter(_))));
        assert!(matches!(ldp_code(&[0.0; 8], 9), Err(Error::Parameter(_))));
        assert_eq!(ldp_code(&[1.0; 8], 8).unwrap(), 255);
    }

    #[test]
    fn lbp_examples() {
        assert_eq!(lbp_code(&[[7.0; 3]; 3]), 255);
        assert_eq!(
            lbp_code(&[[1.0, 1.0, 1.0], [1.0, 9.0, 1.0], [1.0, 1.0, 1.0]]),
            0
        );
        assert_eq!(
            lbp_code(&[[5.0, 1.0, 1.0], [1.0, 3.0, 1.0], [1.0, 1.0, 9.0]]),
            17
        );
    }

    #[test]
    fn replicated_border_window() {
        let gray = GrayFrame::new(3, 3, (0..9).map(f64::from).collect()).unwrap();
        assert_eq!(
            gray.window(0, 0),
            [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [3.0, 3.0, 4.0]]
        );
    }

    #[test]
    fn descriptor_video_of_constant_clip() {
        let shape = ClipShape::new(2, 3, 4, 5);
        let clip = VideoClip::new(shape, vec![0.4; shape.len()], Modality::Rgb, vec!["c".into()])
            .unwrap();
        let ldp = descriptor_video(&clip, DescriptorKind::Ldp).unwrap();
        assert_eq!(ldp.shape(), shape);
        assert_eq!(ldp.modality(), Modality::Ldp);
        assert!(ldp.data().iter().all(|&v| v == 7.0 / 255.0));

        let lbp = descriptor_video(&clip, DescriptorKind::Lbp).unwrap();
        assert!(lbp.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn descriptor_video_rejects_non_rgb() {
        let shape = ClipShape::new(2, 3, 4, 4);
        let clip = VideoClip::zeros(shape, Modality::Ldp, vec!["c".into()]).unwrap();
        assert!(matches!(
            descriptor_video(&clip, DescriptorKind::Lbp),
            Err(Error::Modality(_))
        ));
    }
}
