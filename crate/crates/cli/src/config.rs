//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! `equation` is required and fixes the defaults every other key overrides.
//! Unknown or repeated keys are errors. [`ExperimentConfig::emit`] writes every
//! key, and parsing the emitted text gives back the same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use opnet_core::models::{Architecture, EmbeddingMode, EmbeddingSpec, VariantKind, VariantSpec};
use opnet_core::pde::{PdeKind, PdeSpec};
use opnet_core::solvers::{DatasetShape, GenerationConfig, GrfSpec, InputFamily};
use opnet_core::training::TrainConfig;
use opnet_core::{Error, Result};
use sha2::{Digest, Sha256};

/// Every accepted key with a one-line description, in emission order.
pub const KEYS: &[(&str, &str)] = &[
    ("equation", "advection | diffusion_reaction | burgers | kdv"),
    ("diffusion", "diffusion coefficient D (diffusion_reaction)"),
    ("reaction", "reaction coefficient k (diffusion_reaction)"),
    ("viscosity", "viscosity (burgers)"),
    ("dispersion", "dispersion coefficient (kdv)"),
    ("out", "output directory"),
    ("dataset", "dataset path (default <out>/<equation>.pids)"),
    ("data_seed", "seed for input-function draws"),
    ("train_size", "training functions to generate"),
    ("test_size", "test functions to generate"),
    ("sensors", "sensor count m"),
    ("n_t", "stored time points"),
    ("n_x", "stored space points"),
    ("input", "rbf:<length>:<scale> | periodic:<amplitude>:<shift>:<power> | first_harmonic"),
    ("spectral_size", "fine grid for the spectral solvers"),
    ("spectral_dt", "time step for the spectral solvers"),
    ("diffusion_dt", "time step for the diffusion-reaction solver"),
    ("variants", "comma-separated variant names"),
    ("baseline", "variant compared against"),
    ("seeds", "comma-separated training seeds"),
    ("width", "hidden width of branch and trunk"),
    ("depth", "hidden layers of branch and trunk"),
    ("latent", "branch/trunk output width"),
    ("embedding", "none | deterministic:<order> | random:<count>:<scale>"),
    ("fourier_modes", "comma-separated mode indices for TF/BxTF"),
    ("iterations", "optimizer steps per run"),
    ("batch_size", "points per step across all loss groups"),
    ("lr0", "initial learning rate"),
    ("transition_steps", "learning-rate decay transition"),
    ("decay_rate", "learning-rate decay factor per transition"),
    ("beta1", "AdamW first-moment decay"),
    ("beta2", "AdamW second-moment decay"),
    ("eps", "AdamW epsilon"),
    ("weight_decay", "AdamW decoupled weight decay"),
    ("weighting", "ck | brdr"),
    ("weight_update_period", "iterations between weight updates"),
    ("eval_period", "iterations between test evaluations"),
    ("ck_subsample", "points per group for CK traces"),
    ("brdr_decay", "BRDR moving-average decay"),
    ("brdr_clamp", "<lo>,<hi> bounds for BRDR point weights"),
    ("initial_points", "initial-condition points per function"),
    ("boundary_points", "boundary times per function"),
    ("residual_points", "random residual points per function"),
    ("residual_grid", "none | <n_t>x<n_x> fixed residual grid"),
    ("train_functions", "all | n (use the first n training functions)"),
    ("eval_functions", "all | n (evaluate on the first n test functions)"),
    ("jobs", "worker threads (0 = available parallelism)"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub pde: PdeSpec,
    pub out: PathBuf,
    pub dataset: Option<PathBuf>,
    pub data_seed: u64,
    pub shape: DatasetShape,
    pub input: InputFamily,
    pub spectral_size: usize,
    pub spectral_dt: f64,
    pub diffusion_dt: f64,
    pub variants: Vec<VariantKind>,
    pub baseline: VariantKind,
    pub seeds: Vec<u64>,
    pub arch: Architecture,
    pub embedding: EmbeddingSpec,
    pub fourier_modes: Vec<usize>,
    /// `seed` is replaced per run.
    pub train: TrainConfig,
    pub jobs: usize,
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key} = '{value}': {why}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn limit(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "all" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_lines(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(key, _)| *key == k) {
            return Err(Error::Config(format!("line {}: unknown key '{k}'", n + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: key '{k}' given twice", n + 1)));
        }
    }
    Ok(map)
}

impl ExperimentConfig {
    /// Defaults for one equation.
    pub fn default_for(pde: PdeSpec) -> Self {
        let kind = pde.kind;
        let gen = GenerationConfig::default_for(pde, 0);
        Self {
            pde,
            out: PathBuf::from("runs"),
            dataset: None,
            data_seed: 0,
            shape: gen.shape,
            input: gen.input,
            spectral_size: gen.spectral_size,
            spectral_dt: gen.spectral_dt,
            diffusion_dt: gen.diffusion_dt,
            variants: vec![VariantKind::Modified],
            baseline: VariantKind::Modified,
            seeds: vec![0],
            arch: Architecture::default_for(kind),
            embedding: EmbeddingSpec::default_for(&pde),
            fourier_modes: opnet_core::models::default_fourier_modes(kind),
            train: TrainConfig::default_for(kind),
            jobs: 1,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = parse_lines(text)?;
        let eq = map
            .remove("equation")
            .ok_or_else(|| Error::Config("missing required key 'equation'".into()))?;
        let kind: PdeKind = eq.parse()?;
        let mut pde = PdeSpec::default_for(kind);
        let coef = |map: &mut BTreeMap<String, String>, key: &str, allowed: bool, slot: &mut Option<f64>| -> Result<()> {
            if let Some(v) = map.remove(key) {
                if !allowed {
                    return Err(bad(key, &v, format!("not a parameter of {kind}")));
                }
                *slot = Some(num(key, &v)?);
            }
            Ok(())
        };
        coef(&mut map, "diffusion", kind == PdeKind::DiffusionReaction, &mut pde.diffusion)?;
        coef(&mut map, "reaction", kind == PdeKind::DiffusionReaction, &mut pde.reaction)?;
        coef(&mut map, "viscosity", kind == PdeKind::Burgers, &mut pde.viscosity)?;
        coef(&mut map, "dispersion", kind == PdeKind::Kdv, &mut pde.dispersion)?;
        pde.validate()?;

        let mut cfg = Self::default_for(pde);
        for (key, value) in &map {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` override (not `equation` or coefficients).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let t = &mut self.train;
        match key {
            "out" => self.out = PathBuf::from(v),
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "data_seed" => self.data_seed = num(key, v)?,
            "train_size" => self.shape.train = num(key, v)?,
            "test_size" => self.shape.test = num(key, v)?,
            "sensors" => self.shape.m = num(key, v)?,
            "n_t" => self.shape.n_t = num(key, v)?,
            "n_x" => self.shape.n_x = num(key, v)?,
            "input" => self.input = parse_input(v)?,
            "spectral_size" => self.spectral_size = num(key, v)?,
            "spectral_dt" => self.spectral_dt = num(key, v)?,
            "diffusion_dt" => self.diffusion_dt = num(key, v)?,
            "variants" => self.variants = list(key, v)?,
            "baseline" => self.baseline = num(key, v)?,
            "seeds" => self.seeds = list(key, v)?,
            "width" => self.arch.width = num(key, v)?,
            "depth" => self.arch.depth = num(key, v)?,
            "latent" => self.arch.latent = num(key, v)?,
            "embedding" => self.embedding = parse_embedding(v, self.pde.length)?,
            "fourier_modes" => self.fourier_modes = list(key, v)?,
            "iterations" => t.iterations = num(key, v)?,
            "batch_size" => t.batch_size = num(key, v)?,
            "lr0" => t.lr0 = num(key, v)?,
            "transition_steps" => t.transition_steps = num(key, v)?,
            "decay_rate" => t.decay_rate = num(key, v)?,
            "beta1" => t.adam.beta1 = num(key, v)?,
            "beta2" => t.adam.beta2 = num(key, v)?,
            "eps" => t.adam.eps = num(key, v)?,
            "weight_decay" => t.adam.weight_decay = num(key, v)?,
            "weighting" => t.weighting = v.parse()?,
            "weight_update_period" => t.weight_update_period = num(key, v)?,
            "eval_period" => t.eval_period = num(key, v)?,
            "ck_subsample" => t.ck_subsample = num(key, v)?,
            "brdr_decay" => t.brdr_decay = num(key, v)?,
            "brdr_clamp" => {
                let b: Vec<f64> = list(key, v)?;
                if b.len() != 2 {
                    return Err(bad(key, v, "expected <lo>,<hi>"));
                }
                t.brdr_clamp = (b[0], b[1]);
            }
            "initial_points" => t.collocation.initial = num(key, v)?,
            "boundary_points" => t.collocation.boundary = num(key, v)?,
            "residual_points" => t.collocation.residual = num(key, v)?,
            "residual_grid" => {
                t.collocation.residual_grid = if v == "none" {
                    None
                } else {
                    let (a, b) = v.split_once('x').ok_or_else(|| bad(key, v, "expected <n_t>x<n_x>"))?;
                    Some((num(key, a)?, num(key, b)?))
                }
            }
            "train_functions" => t.train_functions = limit(key, v)?,
            "eval_functions" => t.eval_functions = limit(key, v)?,
            "jobs" => self.jobs = num(key, v)?,
            "equation" | "diffusion" | "reaction" | "viscosity" | "dispersion" => {
                return Err(Error::Config(format!("'{key}' can only be set in the configuration file")));
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Checks everything a command could later trip over.
    pub fn validate(&self) -> Result<()> {
        self.generation().validate()?;
        self.arch.validate()?;
        self.train.validate()?;
        if self.variants.is_empty() {
            return Err(Error::Config("variants must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut seen = self.variants.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variants.len() {
            return Err(Error::Config("variants are repeated".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds are repeated".into()));
        }
        for &kind in self.variants.iter().chain([&self.baseline]) {
            let spec = self.variant_spec(kind)?;
            if kind.trunk_has_fourier() {
                if let Some(&k) = spec.fourier_modes.iter().find(|&&k| 2 * k >= self.shape.m) {
                    return Err(Error::Truncation {
                        index: k,
                        limit: self.shape.m / 2,
                    });
                }
            }
        }
        if self.pde.kind.is_periodic() && !matches!(self.embedding.mode, EmbeddingMode::Deterministic { .. }) {
            return Err(Error::Config(
                "periodic equations need a deterministic embedding so the boundary holds exactly".into(),
            ));
        }
        Ok(())
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset
            .clone()
            .unwrap_or_else(|| self.out.join(format!("{}.pids", self.pde.kind)))
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            pde: self.pde,
            input: self.input,
            shape: self.shape,
            seed: self.data_seed,
            spectral_size: self.spectral_size,
            spectral_dt: self.spectral_dt,
            diffusion_dt: self.diffusion_dt,
            jobs: self.jobs,
        }
    }

    pub fn variant_spec(&self, kind: VariantKind) -> Result<VariantSpec> {
        VariantSpec::new(kind, self.embedding, &self.fourier_modes)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    /// Every key, one per line, in registry order.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let p = &self.pde;
        let t = &self.train;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("equation", p.kind.to_string());
        for (k, c) in [
            ("diffusion", p.diffusion),
            ("reaction", p.reaction),
            ("viscosity", p.viscosity),
            ("dispersion", p.dispersion),
        ] {
            if let Some(c) = c {
                kv(k, c.to_string());
            }
        }
        kv("out", self.out.display().to_string());
        if let Some(d) = &self.dataset {
            kv("dataset", d.display().to_string());
        }
        kv("data_seed", self.data_seed.to_string());
        kv("train_size", self.shape.train.to_string());
        kv("test_size", self.shape.test.to_string());
        kv("sensors", self.shape.m.to_string());
        kv("n_t", self.shape.n_t.to_string());
        kv("n_x", self.shape.n_x.to_string());
        kv("input", emit_input(&self.input));
        kv("spectral_size", self.spectral_size.to_string());
        kv("spectral_dt", self.spectral_dt.to_string());
        kv("diffusion_dt", self.diffusion_dt.to_string());
        kv("variants", join(&self.variants));
        kv("baseline", self.baseline.to_string());
        kv("seeds", join(&self.seeds));
        kv("width", self.arch.width.to_string());
        kv("depth", self.arch.depth.to_string());
        kv("latent", self.arch.latent.to_string());
        kv("embedding", emit_embedding(&self.embedding));
        kv("fourier_modes", join(&self.fourier_modes));
        kv("iterations", t.iterations.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("lr0", t.lr0.to_string());
        kv("transition_steps", t.transition_steps.to_string());
        kv("decay_rate", t.decay_rate.to_string());
        kv("beta1", t.adam.beta1.to_string());
        kv("beta2", t.adam.beta2.to_string());
        kv("eps", t.adam.eps.to_string());
        kv("weight_decay", t.adam.weight_decay.to_string());
        kv("weighting", t.weighting.name().to_string());
        kv("weight_update_period", t.weight_update_period.to_string());
        kv("eval_period", t.eval_period.to_string());
        kv("ck_subsample", t.ck_subsample.to_string());
        kv("brdr_decay", t.brdr_decay.to_string());
        kv("brdr_clamp", format!("{},{}", t.brdr_clamp.0, t.brdr_clamp.1));
        let c = &t.collocation;
        kv("initial_points", c.initial.to_string());
        kv("boundary_points", c.boundary.to_string());
        kv("residual_points", c.residual.to_string());
        kv(
            "residual_grid",
            c.residual_grid.map_or("none".into(), |(a, b)| format!("{a}x{b}")),
        );
        let lim = |l: Option<usize>| l.map_or("all".to_string(), |n| n.to_string());
        kv("train_functions", lim(t.train_functions));
        kv("eval_functions", lim(t.eval_functions));
        kv("jobs", self.jobs.to_string());
        s
    }

    /// SHA-256 of [`ExperimentConfig::emit`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.emit().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_input(v: &str) -> Result<InputFamily> {
    let parts: Vec<&str> = v.split(':').collect();
    let f = |i: usize| num::<f64>("input", parts[i]);
    let input = match (parts[0], parts.len()) {
        ("first_harmonic", 1) => InputFamily::FirstHarmonic,
        ("rbf", 3) => InputFamily::Grf(GrfSpec::Rbf {
            length_scale: f(1)?,
            scale: f(2)?,
        }),
        ("periodic", 4) => InputFamily::Grf(GrfSpec::PeriodicSpectral {
            amplitude: f(1)?,
            shift: f(2)?,
            power: f(3)?,
        }),
        _ => return Err(bad("input", v, "unrecognised input family")),
    };
    Ok(input)
}

fn emit_input(input: &InputFamily) -> String {
    match *input {
        InputFamily::FirstHarmonic => "first_harmonic".into(),
        InputFamily::Grf(GrfSpec::Rbf { length_scale, scale }) => format!("rbf:{length_scale}:{scale}"),
        InputFamily::Grf(GrfSpec::PeriodicSpectral { amplitude, shift, power }) => {
            format!("periodic:{amplitude}:{shift}:{power}")
        }
    }
}

fn parse_embedding(v: &str, length: f64) -> Result<EmbeddingSpec> {
    let parts: Vec<&str> = v.split(':').collect();
    let spec = match (parts[0], parts.len()) {
        ("none", 1) => EmbeddingSpec::none(length),
        ("deterministic", 2) => EmbeddingSpec::deterministic(num("embedding", parts[1])?, length),
        ("random", 3) => EmbeddingSpec::random(num("embedding", parts[1])?, num("embedding", parts[2])?, length),
        _ => return Err(bad("embedding", v, "unrecognised embedding")),
    };
    spec.validate()?;
    Ok(spec)
}

fn emit_embedding(e: &EmbeddingSpec) -> String {
    match e.mode {
        EmbeddingMode::None => "none".into(),
        EmbeddingMode::Deterministic { max_order } => format!("deterministic:{max_order}"),
        EmbeddingMode::Random { count, scale } => format!("random:{count}:{scale}"),
    }
}

/// The registry as a commented template.
pub fn key_reference() -> String {
    KEYS.iter().map(|(k, d)| format!("# {k:<22} {d}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use opnet_core::training::WeightingKind;

    #[test]
    fn defaults_follow_the_equation() {
        let c = ExperimentConfig::parse("equation = kdv\n").unwrap();
        assert_eq!((c.shape.train, c.shape.test, c.shape.n_t, c.shape.n_x), (500, 100, 101, 129));
        assert_eq!(c.arch.width, 128);
        assert_eq!(c.dataset_path(), PathBuf::from("runs/kdv.pids"));
        let a = ExperimentConfig::parse("equation = advection").unwrap();
        assert_eq!((a.shape.train, a.shape.test), (1000, 100));
        assert_eq!(a.train.weighting, WeightingKind::Brdr);
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# toy\nequation = diffusion_reaction\nreaction = 0.02 # stronger\nvariants = vanilla, TL\nseeds = 3,4\nresidual_grid = 10x20\neval_functions = 5\nbrdr_clamp = 0.01,100\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.pde.reaction, Some(0.02));
        assert_eq!(c.variants, vec![VariantKind::Vanilla, VariantKind::TL]);
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.train.collocation.residual_grid, Some((10, 20)));
        assert_eq!(c.train.eval_functions, Some(5));
        assert_eq!(c.train.brdr_clamp, (0.01, 100.0));
    }

    #[test]
    fn emit_parse_round_trip() {
        for kind in PdeKind::ALL {
            let mut c = ExperimentConfig::default_for(PdeSpec::default_for(kind));
            c.variants = vec![VariantKind::BxTF, VariantKind::Vanilla];
            c.train.lr0 = 0.1 + 0.2;
            c.train.eval_functions = Some(7);
            c.dataset = Some("d/x.pids".into());
            let back = ExperimentConfig::parse(&c.emit()).unwrap();
            assert_eq!(back, c, "{kind}");
            assert_eq!(back.hash(), c.hash());
        }
    }

    #[test]
    fn rejects_bad_input() {
        let cases = [
            "",
            "variants = TL",
            "equation = heat",
            "equation = advection\nwidht = 3",
            "equation = advection\nwidth = 3\nwidth = 4",
            "equation = advection\nviscosity = 0.1",
            "equation = advection\nwidth = -1",
            "equation = advection\nvariants = TL,TL",
            "equation = advection\nlr0 = 0",
            "equation = burgers\nembedding = none",
            "equation = burgers\nvariants = TF\nfourier_modes = 60",
            "equation = advection\ninput = rbf:0.2",
            "no equals sign",
        ];
        for text in cases {
            assert!(
                matches!(ExperimentConfig::parse(text), Err(Error::Config(_)) | Err(Error::Truncation { .. })),
                "{text:?}"
            );
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::parse("equation = advection").unwrap();
        let mut b = a.clone();
        b.train.iterations += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
