use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3};

use super::dataset::{write_f64s, write_header, DataSplit, Dataset, DatasetShape, Split};
use super::grf::{draw_periodic_field, kdv_coefficients, positive_velocity, GrfSpec, RbfSampler};
use super::spectral::{Downsample, SpectralKind, SpectralSettings, CONTOUR_POINTS};
use super::{solve_advection, solve_diffusion_reaction, solve_spectral_etdrk4, DIFFUSION_DT};
use crate::fsio::write_atomic;
use crate::models::UniformGrid;
use crate::pde::{PdeKind, PdeSpec};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Samples solved and written per chunk when streaming to disk.
const CHUNK: usize = 64;

/// Distribution of the input functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InputFamily {
    Grf(GrfSpec),
    /// `a·sin(2πx/L) + b·cos(2πx/L)` with `a, b ~ N(0, 1)`.
    FirstHarmonic,
}

impl InputFamily {
    pub fn default_for(kind: PdeKind) -> Self {
        match kind {
            PdeKind::Advection | PdeKind::DiffusionReaction => InputFamily::Grf(GrfSpec::rbf_default()),
            PdeKind::Burgers => InputFamily::Grf(GrfSpec::periodic_default()),
            PdeKind::Kdv => InputFamily::FirstHarmonic,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationConfig {
    pub pde: PdeSpec,
    pub input: InputFamily,
    pub shape: DatasetShape,
    pub seed: u64,
    /// Fine grid size for the spectral solvers.
    pub spectral_size: usize,
    pub spectral_dt: f64,
    pub diffusion_dt: f64,
    /// Worker threads; 0 picks the available parallelism.
    pub jobs: usize,
}

impl GenerationConfig {
    pub fn default_for(pde: PdeSpec, seed: u64) -> Self {
        Self {
            input: InputFamily::default_for(pde.kind),
            shape: DatasetShape::default_for(pde.kind),
            pde,
            seed,
            spectral_size: 4096,
            spectral_dt: 1e-4,
            diffusion_dt: DIFFUSION_DT,
            jobs: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pde.validate()?;
        let s = &self.shape;
        if s.train == 0 || s.test == 0 || s.m < 3 || s.n_t < 2 || s.n_x < 3 {
            return Err(Error::Config(format!("invalid dataset shape {s:?}")));
        }
        match (self.pde.kind.is_periodic(), self.input) {
            (false, InputFamily::Grf(g @ GrfSpec::Rbf { .. })) | (true, InputFamily::Grf(g @ GrfSpec::PeriodicSpectral { .. })) => {
                g.validate()?
            }
            (true, InputFamily::FirstHarmonic) => {}
            (_, input) => {
                return Err(Error::Config(format!(
                    "input family {input:?} does not suit equation {}",
                    self.pde.kind
                )))
            }
        }
        if self.pde.kind.is_periodic() {
            if self.spectral_size < 16 || !(self.spectral_dt > 0.0) {
                return Err(Error::Config("invalid spectral solver settings".into()));
            }
            if (s.m - 1) / 2 >= self.spectral_size / 3 {
                return Err(Error::Config("sensor grid resolves modes beyond the dealiased spectral band".into()));
            }
        } else if !(self.diffusion_dt > 0.0) {
            return Err(Error::Config("invalid diffusion time step".into()));
        }
        Ok(())
    }

    fn sensor_grid(&self) -> UniformGrid {
        UniformGrid::new(0.0, self.pde.length, self.shape.m)
    }

    fn spectral_settings(&self) -> SpectralSettings {
        let s = self.spectral_size;
        let intervals = self.shape.n_x - 1;
        let downsample = if s % intervals == 0 {
            Downsample::StridePlusEndpoint { stride: s / intervals }
        } else {
            Downsample::Interpolate { points: self.shape.n_x }
        };
        SpectralSettings {
            size: s,
            dt: self.spectral_dt,
            n_t: self.shape.n_t,
            length: self.pde.length,
            downsample,
        }
    }

    /// Seed of record `index` within `split`.
    pub fn sample_seed(&self, split: Split, index: usize) -> u64 {
        let base = derive_seed(self.seed, split as u64);
        derive_seed(base, index as u64)
    }

    /// Human-readable sidecar recording everything needed to regenerate the file.
    pub fn sidecar(&self) -> String {
        let mut out = String::new();
        let s = &self.shape;
        let c = self.pde.coefficient_array();
        let _ = writeln!(out, "format = PIDS1");
        let _ = writeln!(out, "equation = {}", self.pde.kind);
        let _ = writeln!(out, "length = {}", self.pde.length);
        let _ = writeln!(out, "coefficients = D:{} k:{} nu:{} delta:{}", c[0], c[1], c[2], c[3]);
        let _ = writeln!(out, "train = {}\ntest = {}\nsensors = {}\nn_t = {}\nn_x = {}", s.train, s.test, s.m, s.n_t, s.n_x);
        let input = match self.input {
            InputFamily::Grf(GrfSpec::Rbf { length_scale, scale }) => format!("rbf length_scale={length_scale} scale={scale}"),
            InputFamily::Grf(GrfSpec::PeriodicSpectral { amplitude, shift, power }) => {
                format!("periodic_spectral amplitude={amplitude} shift={shift} power={power}")
            }
            InputFamily::FirstHarmonic => "first_harmonic a,b~N(0,1)".to_string(),
        };
        let _ = writeln!(out, "input = {input}");
        if self.pde.kind == PdeKind::Advection {
            let _ = writeln!(out, "input_postprocess = v - min(v) + 1");
        }
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "sample_seeds = splitmix(splitmix(seed, split), index)");
        let solver = match self.pde.kind {
            PdeKind::Advection => "lax_wendroff cfl<=0.5 outflow=linear_extrapolation".to_string(),
            PdeKind::DiffusionReaction => format!("crank_nicolson+heun dt={}", self.diffusion_dt),
            PdeKind::Burgers | PdeKind::Kdv => {
                let settings = self.spectral_settings();
                format!(
                    "etdrk4 s={} dt={} contour_points={CONTOUR_POINTS} dealias=2/3 downsample={:?}",
                    settings.size, settings.dt, settings.downsample
                )
            }
        };
        let _ = writeln!(out, "solver = {solver}");
        out
    }
}

/// Per-dataset state reused across samples (the factorised covariance).
struct Generator<'a> {
    cfg: &'a GenerationConfig,
    grid: UniformGrid,
    rbf: Option<RbfSampler>,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a GenerationConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.sensor_grid();
        let rbf = match cfg.input {
            InputFamily::Grf(GrfSpec::Rbf { length_scale, scale }) => Some(RbfSampler::new(&grid, length_scale, scale)?),
            _ => None,
        };
        Ok(Self { cfg, grid, rbf })
    }

    /// Sensor values and, for periodic kinds, the initial condition on the fine grid.
    fn input(&self, seed: u64) -> (Vec<f64>, Option<Vec<f64>>) {
        let cfg = self.cfg;
        let length = cfg.pde.length;
        match cfg.input {
            InputFamily::Grf(GrfSpec::Rbf { .. }) => {
                let v = self.rbf.as_ref().expect("rbf sampler").sample(seed);
                let u = if cfg.pde.kind == PdeKind::Advection { positive_velocity(&v) } else { v };
                (u, None)
            }
            InputFamily::Grf(GrfSpec::PeriodicSpectral { amplitude, shift, power }) => {
                let field = draw_periodic_field(amplitude, shift, power, length, (self.grid.points - 1) / 2, seed);
                (field.eval_grid(&self.grid), Some(field.periodic_samples(cfg.spectral_size)))
            }
            InputFamily::FirstHarmonic => {
                let (a, b) = kdv_coefficients(seed);
                let w = 2.0 * std::f64::consts::PI / length;
                let f = |x: f64| a * (w * x).sin() + b * (w * x).cos();
                let sensors = self.grid.coords().into_iter().map(f).collect();
                let fine = (0..cfg.spectral_size).map(|j| f(j as f64 * length / cfg.spectral_size as f64)).collect();
                (sensors, Some(fine))
            }
        }
    }

    fn sensors(&self, split: Split, index: usize) -> Vec<f64> {
        self.input(self.cfg.sample_seed(split, index)).0
    }

    fn solve(&self, split: Split, index: usize) -> Result<(Vec<f64>, Array2<f64>)> {
        let cfg = self.cfg;
        let (u, fine) = self.input(cfg.sample_seed(split, index));
        let s = &cfg.shape;
        let out = match cfg.pde.kind {
            PdeKind::Advection => solve_advection(&u, &self.grid, s.n_t, s.n_x),
            PdeKind::DiffusionReaction => {
                let c = cfg.pde.coefficient_array();
                solve_diffusion_reaction(&u, &self.grid, c[0], c[1], s.n_t, s.n_x, cfg.diffusion_dt)
            }
            PdeKind::Burgers | PdeKind::Kdv => {
                let kind = match cfg.pde.kind {
                    PdeKind::Burgers => SpectralKind::Burgers {
                        viscosity: cfg.pde.viscosity.unwrap_or(0.0),
                    },
                    _ => SpectralKind::Kdv {
                        dispersion: cfg.pde.dispersion.unwrap_or(0.0),
                    },
                };
                solve_spectral_etdrk4(fine.as_deref().expect("fine initial condition"), kind, &cfg.spectral_settings())
            }
        }
        .map_err(|e| {
            let detail = match e {
                Error::Generation(m) => m,
                other => other.to_string(),
            };
            Error::Generation(format!("{} sample {index}: {detail}", split.name()))
        })?;
        Ok((u, out.solution))
    }

    /// Solves `range` of `split`, in parallel when enabled; the first failing
    /// index (lowest) is reported.
    fn solve_range(&self, split: Split, range: std::ops::Range<usize>, pool: &Pool) -> Result<Vec<Array2<f64>>> {
        let results: Vec<Result<(Vec<f64>, Array2<f64>)>> = pool.map(range, |i| self.solve(split, i));
        results.into_iter().map(|r| r.map(|(_, sol)| sol)).collect()
    }
}

/// Thin wrapper so the sequential build needs no rayon.
struct Pool {
    #[cfg(feature = "parallel")]
    inner: Option<rayon::ThreadPool>,
}

impl Pool {
    fn new(jobs: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            let threads = if jobs == 0 {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
            } else {
                jobs
            };
            let inner = if threads > 1 {
                rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok()
            } else {
                None
            };
            Pool { inner }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = jobs;
            Pool {}
        }
    }

    fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, range: std::ops::Range<usize>, f: F) -> Vec<T> {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.inner {
            use rayon::prelude::*;
            return pool.install(|| range.into_par_iter().map(&f).collect());
        }
        range.map(f).collect()
    }
}

/// One record: sensor values and reference solution `[n_t × n_x]`.
pub fn generate_sample(cfg: &GenerationConfig, split: Split, index: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    Generator::new(cfg)?.solve(split, index)
}

/// Generates the whole dataset in memory.
pub fn generate_dataset(cfg: &GenerationConfig) -> Result<Dataset> {
    let generator = Generator::new(cfg)?;
    let pool = Pool::new(cfg.jobs);
    let s = cfg.shape;
    let (sensor_grid, t_axis, x_axis) = Dataset::axes(&cfg.pde, &s)?;
    let build = |split: Split, n: usize| -> Result<DataSplit> {
        let sols = generator.solve_range(split, 0..n, &pool)?;
        let sensors = Array2::from_shape_fn((n, s.m), |_| 0.0);
        let mut sensors = sensors;
        for i in 0..n {
            sensors.row_mut(i).assign(&ndarray::ArrayView1::from(&generator.sensors(split, i)));
        }
        let mut solutions = Array3::zeros((n, s.n_t, s.n_x));
        for (i, sol) in sols.into_iter().enumerate() {
            solutions.index_axis_mut(ndarray::Axis(0), i).assign(&sol);
        }
        Ok(DataSplit {
            sensors,
            solutions: Some(solutions),
        })
    };
    Ok(Dataset {
        pde: cfg.pde,
        sensor_grid,
        t_axis,
        x_axis,
        train: build(Split::Train, s.train)?,
        test: build(Split::Test, s.test)?,
    })
}

/// Streams the dataset to `path` in bounded memory and writes the metadata
/// sidecar `<path>.meta`. Nothing is left behind on failure.
pub fn write_dataset(cfg: &GenerationConfig, path: &Path) -> Result<()> {
    let generator = Generator::new(cfg)?;
    let pool = Pool::new(cfg.jobs);
    let s = cfg.shape;
    let chunk = CHUNK.max(4 * cfg.jobs);
    write_atomic(path, |w| {
        write_header(w, &cfg.pde, &s)?;
        for (split, n) in [(Split::Train, s.train), (Split::Test, s.test)] {
            for i in 0..n {
                write_f64s(w, generator.sensors(split, i).into_iter())?;
            }
            let mut start = 0;
            while start < n {
                let end = (start + chunk).min(n);
                for sol in generator.solve_range(split, start..end, &pool)? {
                    write_f64s(w, sol.iter().copied())?;
                }
                start = end;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    let meta = sidecar_path(path);
    let result = write_atomic(&meta, |w| Ok(w.write_all(cfg.sidecar().as_bytes())?));
    if result.is_err() {
        let _ = std::fs::remove_file(path);
    }
    result
}

pub(crate) fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta");
    path.with_file_name(name)
}
