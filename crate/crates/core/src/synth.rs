//! Synthetic 8×8 digit images for desk-scale experiments.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{ImageTensor, LabeledDataset};
use crate::rng::stream;

pub const DIGIT_SIDE: usize = 8;

const GLYPHS: [[&str; 8]; 10] = [
    [
        "........", "..####..", ".#....#.", ".#....#.", ".#....#.", ".#....#.", "..####..", "........",
    ],
    [
        "........", "...##...", "..###...", "...##...", "...##...", "...##...", "..####..", "........",
    ],
    [
        "........", "..####..", ".#....#.", "......#.", "....##..", "..##....", ".######.", "........",
    ],
    [
        "........", ".#####..", "......#.", "..####..", "......#.", "......#.", ".#####..", "........",
    ],
    [
        "........", ".#...#..", ".#...#..", ".######.", ".....#..", ".....#..", ".....#..", "........",
    ],
    [
        "........", ".######.", ".#......", ".#####..", "......#.", "......#.", ".#####..", "........",
    ],
    [
        "........", "..####..", ".#......", ".#####..", ".#....#.", ".#....#.", "..####..", "........",
    ],
    [
        "........", ".######.", "......#.", ".....#..", "....#...", "...#....", "...#....", "........",
    ],
    [
        "........", "..####..", ".#....#.", "..####..", ".#....#.", ".#....#.", "..####..", "........",
    ],
    [
        "........", "..####..", ".#....#.", ".#....#.", "..#####.", "......#.", "..####..", "........",
    ],
];

fn glyph_on(digit: usize, y: i64, x: i64) -> bool {
    let side = DIGIT_SIDE as i64;
    (0..side).contains(&y) && (0..side).contains(&x) && GLYPHS[digit][y as usize].as_bytes()[x as usize] == b'#'
}

/// `n` noisy digit images, labels cycling through 0..=9.
///
/// Each image is a fixed glyph shifted by up to one pixel per axis, drawn
/// with a random stroke intensity, random dropped stroke pixels, a faint
/// right-hand smear and additive background noise.
pub fn digits(n: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream(seed, &[i as u64]);
        let digit = i % 10;
        let dx: i64 = rng.gen_range(-1..=1);
        let dy: i64 = rng.gen_range(-1..=1);
        let ink: f64 = rng.gen_range(0.55..1.0);
        let smear: f64 = rng.gen_range(0.0..0.45);
        let image = ImageTensor::from_fn(DIGIT_SIDE, DIGIT_SIDE, 1, |y, x, _| {
            let (sy, sx) = (y as i64 - dy, x as i64 - dx);
            let mut v = rng.gen_range(0.0..0.2);
            if glyph_on(digit, sy, sx) && rng.gen::<f64>() > 0.08 {
                v += ink * rng.gen_range(0.8..1.0);
            } else if glyph_on(digit, sy, sx - 1) {
                v += smear * ink;
            }
            v
        });
        images.push(image);
        labels.push(digit);
    }
    LabeledDataset::new(images, labels, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_are_seeded_and_balanced() {
        let a = digits(50, 4).unwrap();
        assert_eq!(a, digits(50, 4).unwrap());
        assert_ne!(a, digits(50, 5).unwrap());
        assert_eq!(a.dims(), Some((8, 8, 1)));
        for c in 0..10 {
            assert_eq!(a.labels().iter().filter(|&&l| l == c).count(), 5);
        }
        assert!(digits(0, 1).is_err());
    }
}
