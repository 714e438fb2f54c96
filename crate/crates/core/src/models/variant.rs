use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::pde::{PdeKind, PdeSpec};
use crate::{Error, Result};

/// The eight branch/trunk wirings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariantKind {
    Vanilla,
    Modified,
    Bx,
    TL,
    BxTL,
    BxTG,
    TF,
    BxTF,
}

impl VariantKind {
    pub const ALL: [VariantKind; 8] = [
        VariantKind::Vanilla,
        VariantKind::Modified,
        VariantKind::Bx,
        VariantKind::TL,
        VariantKind::BxTL,
        VariantKind::BxTG,
        VariantKind::TF,
        VariantKind::BxTF,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Vanilla => "vanilla",
            VariantKind::Modified => "modified",
            VariantKind::Bx => "Bx",
            VariantKind::TL => "TL",
            VariantKind::BxTL => "BxTL",
            VariantKind::BxTG => "BxTG",
            VariantKind::TF => "TF",
            VariantKind::BxTF => "BxTF",
        }
    }

    /// Branch receives the (embedded) query coordinate `x`.
    pub fn branch_has_x(self) -> bool {
        matches!(
            self,
            VariantKind::Bx | VariantKind::BxTL | VariantKind::BxTG | VariantKind::BxTF
        )
    }

    /// Trunk receives the interpolated local value `u(x)`.
    pub fn trunk_has_local(self) -> bool {
        matches!(self, VariantKind::TL | VariantKind::BxTL)
    }

    /// Trunk receives the full sensor vector.
    pub fn trunk_has_global(self) -> bool {
        self == VariantKind::BxTG
    }

    /// Trunk receives truncated Fourier coefficients of `u`.
    pub fn trunk_has_fourier(self) -> bool {
        matches!(self, VariantKind::TF | VariantKind::BxTF)
    }

    pub fn is_modified(self) -> bool {
        self == VariantKind::Modified
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

/// How spatial coordinates are lifted before entering a network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EmbeddingMode {
    /// The raw coordinate.
    None,
    /// `sin(2πkx/L), cos(2πkx/L)` for `k = 1..=max_order`.
    Deterministic { max_order: usize },
    /// `sin(ω_j x + φ_j), cos(ω_j x + φ_j)` for `count` seeded draws with
    /// `ω ~ N(0, (2π·scale)²)`, `φ ~ U[0, 2π)`.
    Random { count: usize, scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub mode: EmbeddingMode,
    /// Spatial period `L`.
    pub length: f64,
}

impl EmbeddingSpec {
    pub fn none(length: f64) -> Self {
        Self {
            mode: EmbeddingMode::None,
            length,
        }
    }

    pub fn deterministic(max_order: usize, length: f64) -> Self {
        Self {
            mode: EmbeddingMode::Deterministic { max_order },
            length,
        }
    }

    pub fn random(count: usize, scale: f64, length: f64) -> Self {
        Self {
            mode: EmbeddingMode::Random { count, scale },
            length,
        }
    }

    /// Per-equation embedding: none for advection, 150 random draws for
    /// diffusion–reaction, harmonics up to 4/6/8 for Burgers' by viscosity
    /// (1e-2, 1e-3, 1e-4) and up to 12 for KdV.
    pub fn default_for(pde: &PdeSpec) -> Self {
        match pde.kind {
            PdeKind::Advection => Self::none(pde.length),
            PdeKind::DiffusionReaction => Self::random(150, 1.0, pde.length),
            PdeKind::Burgers => {
                let nu = pde.viscosity.unwrap_or(1e-2);
                let order = if nu >= 10f64.powf(-2.5) {
                    4
                } else if nu >= 10f64.powf(-3.5) {
                    6
                } else {
                    8
                };
                Self::deterministic(order, pde.length)
            }
            PdeKind::Kdv => Self::deterministic(12, pde.length),
        }
    }

    /// Number of features one embedded coordinate produces.
    pub fn dim(&self) -> usize {
        match self.mode {
            EmbeddingMode::None => 1,
            EmbeddingMode::Deterministic { max_order } => 2 * max_order,
            EmbeddingMode::Random { count, .. } => 2 * count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::Config(format!("embedding length {} must be positive", self.length)));
        }
        match self.mode {
            EmbeddingMode::Deterministic { max_order: 0 } => {
                Err(Error::Config("deterministic embedding needs max order >= 1".into()))
            }
            EmbeddingMode::Random { count: 0, .. } => {
                Err(Error::Config("random embedding needs at least one draw".into()))
            }
            EmbeddingMode::Random { scale, .. } if !(scale > 0.0 && scale.is_finite()) => {
                Err(Error::Config(format!("random embedding scale {scale} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Variant, embedding and Fourier truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub kind: VariantKind,
    pub embedding: EmbeddingSpec,
    /// Mode indices `Λ`; non-empty only for TF and BxTF.
    pub fourier_modes: Vec<usize>,
}

/// Default `Λ`: `{0, 1}` for KdV, `{0, …, 4}` otherwise.
pub fn default_fourier_modes(kind: PdeKind) -> Vec<usize> {
    match kind {
        PdeKind::Kdv => vec![0, 1],
        _ => (0..=4).collect(),
    }
}

impl VariantSpec {
    /// `kind` with the equation's default embedding and `Λ`.
    pub fn default_for(kind: VariantKind, pde: &PdeSpec) -> Result<Self> {
        Self::new(kind, EmbeddingSpec::default_for(pde), &default_fourier_modes(pde.kind))
    }

    /// Builds a spec, dropping `modes` for kinds that do not use them.
    pub fn new(kind: VariantKind, embedding: EmbeddingSpec, modes: &[usize]) -> Result<Self> {
        embedding.validate()?;
        let fourier_modes = if kind.trunk_has_fourier() {
            if modes.is_empty() {
                return Err(Error::Config(format!("variant {kind} needs a non-empty Fourier index set")));
            }
            let mut m = modes.to_vec();
            m.sort_unstable();
            m.dedup();
            m
        } else {
            Vec::new()
        };
        Ok(Self {
            kind,
            embedding,
            fourier_modes,
        })
    }
}
