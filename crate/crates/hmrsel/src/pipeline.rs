//! Glue between the configuration and the core library.

use hmrsel_core::metrics::{Objectives, ReferenceBank};
use hmrsel_core::model::{fgsm, train_toy, TrainSpec};
use hmrsel_core::rng::stream;
use hmrsel_core::search::{random_sets, Selector};
use hmrsel_core::uncertainty::{lower_bound, noise_dataset, profile, set_feasibility};
use hmrsel_core::{
    CertaintyProfile, CoverageCriterion, HmrChain, Individual, LabeledDataset, MlpModel, ObjectiveVector,
    ThresholdGrid, ValidityBound,
};

use crate::config::{IdxPair, RunConfig};
use crate::error::Result;
use crate::idx::load_idx;
use crate::toy;

const TAG_BASELINE: u64 = 0xba5e;
const TAG_NOISE: u64 = 0x4015e;

#[derive(Debug, Clone)]
pub struct Data {
    pub train: LabeledDataset,
    pub calibration: LabeledDataset,
    pub test: LabeledDataset,
    pub ood: Option<LabeledDataset>,
}

/// Loads the configured IDX splits, filling gaps with synthetic digits.
pub fn load_data(cfg: &RunConfig) -> Result<Data> {
    let d = &cfg.data;
    let mut synthetic = None;
    let mut split = |pair: &Option<IdxPair>, pick: fn(toy::Splits) -> LabeledDataset| -> Result<LabeledDataset> {
        match pair {
            Some(p) => load_idx(&p.images, &p.labels, d.num_classes),
            None => {
                if synthetic.is_none() {
                    synthetic = Some(toy::splits(d.synthetic_split, d.synthetic_seed)?);
                }
                Ok(pick(synthetic.clone().expect("just built")))
            }
        }
    };
    Ok(Data {
        train: split(&d.train, |s| s.train)?,
        calibration: split(&d.calibration, |s| s.calibration)?,
        test: split(&d.test, |s| s.test)?,
        ood: d
            .ood
            .as_ref()
            .map(|p| load_idx(&p.images, &p.labels, d.num_classes))
            .transpose()?,
    })
}

pub fn train_model(cfg: &RunConfig, train: &LabeledDataset) -> Result<MlpModel> {
    let t = &cfg.train;
    let spec = TrainSpec {
        hidden: t.hidden.clone(),
        dropout: t.dropout.clone(),
    };
    Ok(train_toy(&spec, train, t.epochs, t.learning_rate, t.seed)?)
}

/// Sound and noise profiles and the validity bound derived from them.
#[derive(Debug, Clone)]
pub struct BoundProfiles {
    pub grid: ThresholdGrid,
    pub sound: CertaintyProfile,
    pub noise: CertaintyProfile,
    pub bound: ValidityBound,
}

/// Profiles are taken with the reporting sample count and the run seed,
/// the same dropout streams the final verification uses.
pub fn build_bound(model: &MlpModel, calibration: &LabeledDataset, cfg: &RunConfig) -> Result<BoundProfiles> {
    let u = &cfg.uncertainty;
    let grid = ThresholdGrid::uniform(u.grid_step)?;
    let sound = profile(model, calibration, u.report_samples, cfg.seed, &grid)?;
    let dims = calibration.dims().ok_or(hmrsel_core::Error::EmptyDataset)?;
    let n = u.noise_count.unwrap_or(calibration.len());
    let noise_data = noise_dataset(dims, n, model.num_classes(), hmrsel_core::rng::derive_seed(cfg.seed, &[TAG_NOISE]))?;
    let noise = profile(model, &noise_data, u.report_samples, cfg.seed, &grid)?;
    let bound = lower_bound(&sound, &noise)?;
    Ok(BoundProfiles {
        grid,
        sound,
        noise,
        bound,
    })
}

pub fn fgsm_dataset(model: &MlpModel, data: &LabeledDataset, epsilon: f64) -> Result<LabeledDataset> {
    let images = data
        .images()
        .iter()
        .zip(data.labels())
        .map(|(im, &l)| fgsm(model, im, l, epsilon))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LabeledDataset::new(images, data.labels().to_vec(), data.num_classes())?)
}

/// Everything a [`Selector`] borrows besides the model and the data.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub profiles: BoundProfiles,
    pub bank: Option<ReferenceBank>,
}

/// DSA references are traces of the training split.
pub fn prepare(model: &MlpModel, data: &Data, cfg: &RunConfig) -> Result<Prepared> {
    let profiles = build_bound(model, &data.calibration, cfg)?;
    let bank = match cfg.coverage.criterion {
        CoverageCriterion::Nc => None,
        CoverageCriterion::Dsa => Some(ReferenceBank::from_dataset(
            model,
            &data.train,
            cfg.coverage.dsa_bank_cap,
            cfg.seed,
        )?),
    };
    Ok(Prepared { profiles, bank })
}

pub fn selector<'a>(
    model: &'a MlpModel,
    calibration: &'a LabeledDataset,
    prepared: &'a Prepared,
    cfg: &'a RunConfig,
) -> Result<Selector<'a>> {
    let objectives = Objectives::new(model, &cfg.coverage, prepared.bank.as_ref())?;
    Ok(Selector::new(
        objectives,
        calibration,
        &prepared.profiles.bound,
        cfg.search.clone(),
        cfg.bounds.clone(),
        cfg.uncertainty.clone(),
    )?)
}

/// `cfg.baseline_sets` random sets assessed like a final front.
pub fn random_baseline(selector: &Selector<'_>, cfg: &RunConfig) -> Result<Vec<Individual>> {
    let mut rng = stream(cfg.seed, &[TAG_BASELINE]);
    let sets = random_sets(cfg.baseline_sets, &cfg.search, &cfg.bounds, &mut rng);
    Ok(selector.assess(&sets)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objectives: ObjectiveVector,
    /// Follow-up inputs the set produces: one per input and active relation.
    pub generated_images: usize,
}

/// Objectives and validity of `chains` over all of `data`.
pub fn evaluate_set(
    model: &MlpModel,
    data: &LabeledDataset,
    chains: &[HmrChain],
    prepared: &Prepared,
    cfg: &RunConfig,
) -> Result<Evaluation> {
    let mut objectives = Objectives::new(model, &cfg.coverage, prepared.bank.as_ref())?.evaluate(data, chains)?;
    let u = &cfg.uncertainty;
    objectives.feasible = set_feasibility(
        chains,
        model,
        data,
        &prepared.profiles.bound,
        u.report_samples,
        cfg.seed,
        u.tolerance,
    )?;
    let active = chains.iter().filter(|c| !c.is_identity()).count();
    Ok(Evaluation {
        objectives,
        generated_images: data.len() * active,
    })
}
