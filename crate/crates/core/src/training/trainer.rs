use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{composite_loss, kernel_traces, MiniBatch};
use super::optimizer::{adamw_step, AdamState};
use super::weighting::{BrdrWeighting, CkWeighting, Group, Weighting, WeightingKind, GROUPS};
use super::TrainConfig;
use crate::autodiff::ParamGradient;
use crate::fsio::write_atomic;
use crate::models::{FunctionTable, OperatorModel, PointBatch};
use crate::pde::{sample_collocation, sample_residual_points, CollocationCounts, PdeSpec};
use crate::rng::{stream, stream_rng, StreamRng};
use crate::solvers::Dataset;
use crate::stats::rel_l2;
use crate::{Error, Result};

/// One row of the convergence curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Iterations completed.
    pub iteration: usize,
    /// Training wall-clock seconds (evaluation excluded).
    pub seconds: f64,
    pub mean_rel_l2_percent: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub curve: Vec<CurvePoint>,
    /// Composite loss at every iteration.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub total_seconds: f64,
    pub seconds_per_iteration: f64,
}

impl TrainRecord {
    pub const CSV_HEADER: &'static str = "iteration,seconds,mean_rel_l2_percent";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.curve {
            let _ = writeln!(out, "{},{:.6},{:.6e}", p.iteration, p.seconds, p.mean_rel_l2_percent);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let text = self.to_csv();
        write_atomic(path, |w| Ok(std::io::Write::write_all(w, text.as_bytes())?))
    }

    /// Parses the CSV written by [`TrainRecord::to_csv`] (curve only).
    pub fn from_csv(text: &str) -> Result<Vec<CurvePoint>> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(Self::CSV_HEADER) {
            return Err(Error::Format("training curve header mismatch".into()));
        }
        lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 3 {
                    return Err(Error::Format(format!("bad curve row '{l}'")));
                }
                let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("{e}: '{s}'")));
                Ok(CurvePoint {
                    iteration: f[0].trim().parse().map_err(|e| Error::Format(format!("{e}")))?,
                    seconds: num(f[1])?,
                    mean_rel_l2_percent: num(f[2])?,
                })
            })
            .collect()
    }
}

/// Relative L² error (percent) of the model on each of the first `limit`
/// test functions, over the full stored grid.
pub fn test_errors(model: &OperatorModel, dataset: &Dataset, limit: Option<usize>) -> Result<Vec<f64>> {
    let n = limit.unwrap_or(usize::MAX).min(dataset.test.len());
    if n == 0 {
        return Err(Error::UndefinedMetric("empty test set".into()));
    }
    let solutions = dataset
        .test
        .solutions
        .as_ref()
        .ok_or_else(|| Error::Contract("test split has no reference solutions".into()))?;
    let table = FunctionTable::new(model, (0..n).map(|i| dataset.test.sensors.row(i).to_slice().expect("contiguous rows")))?;
    let ts = dataset.t_axis.coords();
    let xs = dataset.x_axis.coords();
    (0..n)
        .map(|f| {
            let points = PointBatch::from_points(ts.iter().flat_map(|&t| xs.iter().map(move |&x| (f, t, x))));
            let pred = model.predict(&table, &points)?;
            let reference: Vec<f64> = solutions.index_axis(ndarray::Axis(0), f).iter().copied().collect();
            rel_l2(&pred, &reference)
        })
        .collect()
}

/// Mean of [`test_errors`].
pub fn evaluate_test_error(model: &OperatorModel, dataset: &Dataset, limit: Option<usize>) -> Result<f64> {
    let errors = test_errors(model, dataset, limit)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Point pools and batch composition for one run.
struct Sampler {
    spec: PdeSpec,
    functions: usize,
    initial: Vec<(usize, f64)>,
    boundary: Vec<(usize, f64)>,
    /// `None` means fresh uniform residual points every iteration.
    residual: Option<Vec<(usize, f64, f64)>>,
    counts: [usize; GROUPS],
    rng: StreamRng,
}

impl Sampler {
    fn new(spec: &PdeSpec, functions: usize, cfg: &TrainConfig) -> Result<Self> {
        let c = cfg.collocation;
        let fresh = cfg.weighting == WeightingKind::Ck && c.residual_grid.is_none();
        let pool_counts = if fresh {
            CollocationCounts {
                residual: 1,
                ..c
            }
        } else {
            c
        };
        let pools = sample_collocation(spec, &pool_counts, functions, cfg.seed)?;
        let per = [
            c.residual_per_function(),
            c.initial,
            if spec.kind.is_periodic() { 0 } else { c.boundary },
        ];
        let total: usize = per.iter().sum();
        let residual = (cfg.batch_size as f64 * per[0] as f64 / total as f64).round() as usize;
        let boundary = (cfg.batch_size as f64 * per[2] as f64 / total as f64).round() as usize;
        let mut counts = [residual.max(1), 0, if per[2] > 0 { boundary.max(1) } else { 0 }];
        counts[1] = cfg.batch_size.saturating_sub(counts[0] + counts[2]).max(1);
        Ok(Self {
            spec: *spec,
            functions,
            initial: pools.initial,
            boundary: pools.boundary,
            residual: if fresh { None } else { Some(pools.residual) },
            counts,
            rng: stream_rng(cfg.seed, stream::MINIBATCH),
        })
    }

    fn pool_sizes(&self) -> [usize; GROUPS] {
        [
            self.residual.as_ref().map_or(0, Vec::len),
            self.initial.len(),
            self.boundary.len(),
        ]
    }

    fn next(&mut self) -> MiniBatch {
        let rng = &mut self.rng;
        let mut batch = MiniBatch::default();
        match &self.residual {
            Some(pool) => {
                let idx: Vec<usize> = (0..self.counts[0]).map(|_| rng.random_range(0..pool.len())).collect();
                batch.residual = idx.iter().map(|&i| pool[i]).collect();
                batch.residual_idx = Some(idx);
            }
            None => batch.residual = sample_residual_points(&self.spec, self.functions, self.counts[0], rng),
        }
        batch.initial_idx = (0..self.counts[1]).map(|_| rng.random_range(0..self.initial.len())).collect();
        batch.initial = batch.initial_idx.iter().map(|&i| self.initial[i]).collect();
        if !self.boundary.is_empty() {
            batch.boundary_idx = (0..self.counts[2]).map(|_| rng.random_range(0..self.boundary.len())).collect();
            batch.boundary = batch.boundary_idx.iter().map(|&i| self.boundary[i]).collect();
        }
        batch
    }
}

/// A training run in progress; [`train_run`] drives it to completion.
pub struct Trainer<'a> {
    pub model: OperatorModel,
    spec: PdeSpec,
    cfg: &'a TrainConfig,
    table: FunctionTable,
    sampler: Sampler,
    weighting: Box<dyn Weighting>,
    adam: AdamState,
    grad: ParamGradient,
    trace_rng: StreamRng,
    iteration: usize,
    last_finite_loss: Option<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(model: OperatorModel, dataset: &Dataset, spec: &PdeSpec, cfg: &'a TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if dataset.pde != *spec {
            return Err(Error::Contract(format!(
                "dataset was generated for {:?}, training requested {:?}",
                dataset.pde, spec
            )));
        }
        if model.sensor_grid() != dataset.sensor_grid {
            return Err(Error::Contract("model sensor grid differs from the dataset's".into()));
        }
        let functions = cfg.train_functions.unwrap_or(usize::MAX).min(dataset.train.len());
        if functions == 0 {
            return Err(Error::Config("no training functions".into()));
        }
        let table = FunctionTable::new(
            &model,
            (0..functions).map(|i| dataset.train.sensors.row(i).to_slice().expect("contiguous rows")),
        )?;
        let sampler = Sampler::new(spec, functions, cfg)?;
        let weighting: Box<dyn Weighting> = match cfg.weighting {
            WeightingKind::Ck => Box::new(CkWeighting::new([true, true, !spec.kind.is_periodic()])),
            WeightingKind::Brdr => Box::new(BrdrWeighting::new(sampler.pool_sizes(), cfg.brdr_decay, cfg.brdr_clamp)),
        };
        let adam = AdamState::new(model.params().num_params());
        let grad = ParamGradient::zeros_like(model.params());
        Ok(Self {
            model,
            spec: *spec,
            cfg,
            table,
            sampler,
            weighting,
            adam,
            grad,
            trace_rng: stream_rng(cfg.seed, stream::WEIGHTING),
            iteration: 0,
            last_finite_loss: None,
        })
    }

    pub fn weights(&self) -> &super::WeightState {
        self.weighting.state()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One optimisation step; returns the composite loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let it = self.iteration;
        let batch = self.sampler.next();
        if it % self.cfg.weight_update_period == 0 {
            let traces = if self.weighting.needs_traces() {
                Some(kernel_traces(
                    &self.model,
                    &self.table,
                    &self.spec,
                    &batch,
                    self.cfg.ck_subsample,
                    &mut self.trace_rng,
                )?)
            } else {
                None
            };
            self.weighting.update(it, traces.as_ref());
        }
        self.grad.scale(0.0);
        let terms = composite_loss(
            &self.model,
            &self.table,
            &self.spec,
            &batch,
            self.weighting.state(),
            Some(&mut self.grad),
        )?;
        if !terms.loss.is_finite() || !self.grad.is_finite() {
            return Err(Error::Divergence {
                iteration: Some(it),
                loss: terms.loss,
                last_finite_loss: self.last_finite_loss,
            });
        }
        if let Some(idx) = &batch.residual_idx {
            self.weighting.observe(Group::Residual, idx, &terms.squared[0]);
        }
        self.weighting.observe(Group::Initial, &batch.initial_idx, &terms.squared[1]);
        self.weighting.observe(Group::Boundary, &batch.boundary_idx, &terms.squared[2]);
        let lr = self.cfg.lr_at(it);
        adamw_step(self.model.params_mut(), &self.grad, &mut self.adam, &self.cfg.adam, lr).map_err(|e| match e {
            Error::Divergence { .. } => Error::Divergence {
                iteration: Some(it),
                loss: terms.loss,
                last_finite_loss: self.last_finite_loss,
            },
            other => other,
        })?;
        if !self.model.params().is_finite() {
            return Err(Error::Divergence {
                iteration: Some(it),
                loss: terms.loss,
                last_finite_loss: self.last_finite_loss,
            });
        }
        self.last_finite_loss = Some(terms.loss);
        self.iteration += 1;
        Ok(terms.loss)
    }
}

/// Trains `model` on the training split and records the test-error curve.
pub fn train_run(model: OperatorModel, dataset: &Dataset, spec: &PdeSpec, cfg: &TrainConfig) -> Result<(OperatorModel, TrainRecord)> {
    train_run_observed(model, dataset, spec, cfg, |_| {})
}

/// As [`train_run`], calling `on_eval` after each curve point.
pub fn train_run_observed(
    model: OperatorModel,
    dataset: &Dataset,
    spec: &PdeSpec,
    cfg: &TrainConfig,
    mut on_eval: impl FnMut(&CurvePoint),
) -> Result<(OperatorModel, TrainRecord)> {
    let mut trainer = Trainer::new(model, dataset, spec, cfg)?;
    let mut record = TrainRecord::default();
    let mut clock = Duration::ZERO;
    for it in 0..cfg.iterations {
        let start = Instant::now();
        let loss = trainer.step()?;
        clock += start.elapsed();
        record.losses.push(loss);
        let done = it + 1;
        if done % cfg.eval_period == 0 || done == cfg.iterations {
            let err = evaluate_test_error(&trainer.model, dataset, cfg.eval_functions)?;
            let point = CurvePoint {
                iteration: done,
                seconds: clock.as_secs_f64(),
                mean_rel_l2_percent: err,
            };
            on_eval(&point);
            record.curve.push(point);
        }
    }
    record.iterations = cfg.iterations;
    record.total_seconds = clock.as_secs_f64();
    record.seconds_per_iteration = if cfg.iterations > 0 {
        record.total_seconds / cfg.iterations as f64
    } else {
        0.0
    };
    Ok((trainer.model, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Architecture, EmbeddingSpec, UniformGrid, VariantKind, VariantSpec};
    use crate::pde::PdeKind;
    use crate::solvers::{generate_dataset, GenerationConfig};
    use crate::training::WeightState;

    fn toy(kind: PdeKind, train: usize) -> Dataset {
        let mut g = GenerationConfig::default_for(PdeSpec::default_for(kind), 3);
        g.shape.train = train;
        g.shape.test = 2;
        g.spectral_size = 1024;
        g.spectral_dt = 1e-3;
        g.jobs = 1;
        generate_dataset(&g).unwrap()
    }

    fn model(kind: VariantKind, grid: UniformGrid, emb: EmbeddingSpec) -> OperatorModel {
        let arch = Architecture {
            width: 12,
            depth: 2,
            latent: 12,
        };
        OperatorModel::new(VariantSpec::new(kind, emb, &[1, 2]).unwrap(), arch, grid, 1).unwrap()
    }

    fn small_cfg(kind: PdeKind) -> TrainConfig {
        let mut cfg = TrainConfig::default_for(kind);
        cfg.iterations = 100;
        cfg.batch_size = 300;
        cfg.eval_period = 50;
        cfg.weight_update_period = 25;
        cfg.ck_subsample = 8;
        cfg
    }

    #[test]
    fn zero_iterations_return_initial_params() {
        let data = toy(PdeKind::DiffusionReaction, 1);
        let m = model(VariantKind::TL, data.sensor_grid, EmbeddingSpec::none(1.0));
        let before = m.params().clone();
        let mut cfg = small_cfg(PdeKind::DiffusionReaction);
        cfg.iterations = 0;
        let (trained, rec) = train_run(m, &data, &data.pde, &cfg).unwrap();
        assert_eq!(trained.params(), &before);
        assert!(rec.curve.is_empty() && rec.losses.is_empty());
    }

    #[test]
    fn diffusion_reaction_toy_loss_decreases() {
        let data = toy(PdeKind::DiffusionReaction, 1);
        let m = model(VariantKind::Vanilla, data.sensor_grid, EmbeddingSpec::none(1.0));
        let cfg = small_cfg(PdeKind::DiffusionReaction);
        let (_, rec) = train_run(m, &data, &data.pde, &cfg).unwrap();
        assert_eq!(rec.losses.len(), 100);
        assert!(rec.losses[99] < rec.losses[0], "{} vs {}", rec.losses[99], rec.losses[0]);
        assert_eq!(rec.curve.iter().map(|p| p.iteration).collect::<Vec<_>>(), vec![50, 100]);
        assert!(rec.curve[1].seconds > rec.curve[0].seconds);
        assert!(rec.seconds_per_iteration > 0.0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let data = toy(PdeKind::Advection, 2);
        let cfg = small_cfg(PdeKind::Advection);
        let run = || {
            let m = model(VariantKind::BxTL, data.sensor_grid, EmbeddingSpec::none(1.0));
            let (trained, rec) = train_run(m, &data, &data.pde, &cfg).unwrap();
            (trained.params().to_flat(), rec.losses)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(la, lb);
    }

    #[test]
    fn unit_weights_give_plain_mean_of_squares() {
        let data = toy(PdeKind::Advection, 2);
        let m = model(VariantKind::TL, data.sensor_grid, EmbeddingSpec::none(1.0));
        let cfg = small_cfg(PdeKind::Advection);
        let table = FunctionTable::from_samples(&m, &data.samples(crate::solvers::Split::Train)).unwrap();
        let mut sampler = Sampler::new(&data.pde, 2, &cfg).unwrap();
        let batch = sampler.next();
        let terms = composite_loss(&m, &table, &data.pde, &batch, &WeightState::uniform(), None).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let nb_points = batch.boundary.len() as f64;
        let want = mean(&terms.squared[0]) + mean(&terms.squared[1]) + terms.squared[2].iter().sum::<f64>() / nb_points;
        assert!((terms.loss - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        for (pde, kind) in [
            (PdeKind::Advection, VariantKind::TL),
            (PdeKind::DiffusionReaction, VariantKind::Modified),
            (PdeKind::Burgers, VariantKind::BxTF),
            (PdeKind::Kdv, VariantKind::BxTG),
        ] {
            let data = toy(pde, 2);
            let emb = if pde.is_periodic() {
                EmbeddingSpec::deterministic(2, data.pde.length)
            } else {
                EmbeddingSpec::none(1.0)
            };
            let mut m = model(kind, data.sensor_grid, emb);
            let mut cfg = small_cfg(pde);
            cfg.batch_size = 40;
            if pde == PdeKind::Kdv {
                cfg.collocation.residual_grid = Some((3, 4));
            }
            let table = FunctionTable::from_samples(&m, &data.samples(crate::solvers::Split::Train)).unwrap();
            let mut sampler = Sampler::new(&data.pde, 2, &cfg).unwrap();
            let batch = sampler.next();
            let mut weights = WeightState::uniform();
            weights.group = [0.7, 1.9, 0.4];
            let mut grad = ParamGradient::zeros_like(m.params());
            composite_loss(&m, &table, &data.pde, &batch, &weights, Some(&mut grad)).unwrap();
            let flat = m.params().to_flat();
            let dir: Vec<f64> = (0..flat.len()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
            let loss_at = |m: &mut OperatorModel, h: f64| {
                let p: Vec<f64> = flat.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
                m.params_mut().set_flat(&p);
                composite_loss(m, &table, &data.pde, &batch, &weights, None).unwrap().loss
            };
            let h = 1e-5;
            let fd = (loss_at(&mut m, h) - loss_at(&mut m, -h)) / (2.0 * h);
            let an = grad.dot_flat(&dir);
            assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{pde}/{kind}: {fd} vs {an}");
        }
    }

    #[test]
    fn mismatched_spec_is_rejected() {
        let data = toy(PdeKind::DiffusionReaction, 1);
        let m = model(VariantKind::TL, data.sensor_grid, EmbeddingSpec::none(1.0));
        let other = PdeSpec::diffusion_reaction(0.02, 0.01);
        assert!(matches!(
            train_run(m, &data, &other, &small_cfg(PdeKind::DiffusionReaction)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn curve_csv_round_trip() {
        let rec = TrainRecord {
            curve: vec![
                CurvePoint {
                    iteration: 1000,
                    seconds: 1.5,
                    mean_rel_l2_percent: 12.25,
                },
                CurvePoint {
                    iteration: 1500,
                    seconds: 2.25,
                    mean_rel_l2_percent: 3.5,
                },
            ],
            ..Default::default()
        };
        let csv = rec.to_csv();
        assert!(csv.starts_with("iteration,seconds,mean_rel_l2_percent\n"));
        assert_eq!(TrainRecord::from_csv(&csv).unwrap(), rec.curve);
    }
}
