//! Bundled toy setting: synthetic 8×8 digits and a small dropout MLP.

use hmrsel_core::model::{train_toy, TrainSpec};
use hmrsel_core::{synth, ImageTensor, LabeledDataset, MlpModel};

use crate::error::Result;
use crate::idx::quantize;

pub const SAMPLES: usize = 1500;
pub const SPLIT: usize = 500;
pub const DATA_SEED: u64 = 1;
pub const TRAIN_SEED: u64 = 7;
pub const EPOCHS: usize = 100;
pub const LEARNING_RATE: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: LabeledDataset,
    pub calibration: LabeledDataset,
    pub test: LabeledDataset,
}

/// Synthetic digits with pixels already on the 8-bit grid, so writing them
/// to IDX and reading them back is lossless.
pub fn digits(n: usize, seed: u64) -> Result<LabeledDataset> {
    let raw = synth::digits(n, seed)?;
    let images = raw
        .images()
        .iter()
        .map(|im| {
            let (h, w, c) = im.dims();
            let px = im.data().iter().map(|&v| f64::from(quantize(v)) / 255.0).collect();
            ImageTensor::new(h, w, c, px)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LabeledDataset::new(images, raw.labels().to_vec(), raw.num_classes())?)
}

/// Equal train / calibration / test thirds of `3 · split` digits.
pub fn splits(split: usize, seed: u64) -> Result<Splits> {
    let all = digits(3 * split, seed)?;
    let (train, rest) = all.split_at(split);
    let (calibration, test) = rest.split_at(split);
    Ok(Splits {
        train,
        calibration,
        test,
    })
}

pub fn train(data: &LabeledDataset, seed: u64) -> Result<MlpModel> {
    Ok(train_toy(&TrainSpec::default(), data, EPOCHS, LEARNING_RATE, seed)?)
}
