use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SneError};
use crate::numerics::{NamedTensors, Parameters, RngStream, Tensor2};
use crate::patching::ContextSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sibling {
    /// Fed the near context; the only estimator used at decode time.
    Source,
    /// Fed the distant context; present only during training.
    Co,
}

impl Sibling {
    pub fn prefix(self) -> &'static str {
        match self {
            Sibling::Source => "src",
            Sibling::Co => "co",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Elman,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipMode {
    None,
    /// Gates the co-estimator only.
    SkipF,
    /// Gates the source estimator only.
    SkipB,
    SkipBoth,
}

impl SkipMode {
    pub fn gates(self, sibling: Sibling) -> bool {
        matches!(
            (self, sibling),
            (SkipMode::SkipBoth, _) | (SkipMode::SkipF, Sibling::Co) | (SkipMode::SkipB, Sibling::Source)
        )
    }
}

macro_rules! text_enum {
    ($ty:ty, $what:literal, { $($variant:path => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = SneError;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($variant),)+
                    other => Err(SneError::Config(format!(concat!("unknown ", $what, " '{}'"), other))),
                }
            }
        }
    };
}

text_enum!(CellKind, "cell", { CellKind::Lstm => "lstm", CellKind::Elman => "elman" });
text_enum!(SkipMode, "skip mode", {
    SkipMode::None => "none",
    SkipMode::SkipF => "skipf",
    SkipMode::SkipB => "skipb",
    SkipMode::SkipBoth => "skipboth",
});

/// Architecture of a sibling estimator pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub state_dim: usize,
    pub patch_edge: usize,
    pub context: ContextSpec,
    /// One block-to-hidden matrix shared by all context positions.
    pub tied: bool,
    pub cell: CellKind,
    pub skip: SkipMode,
    /// Feed the target's own dequantized block as an extra input and predict a
    /// correction on top of it.
    pub anchor: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            state_dim: 32,
            patch_edge: 8,
            context: ContextSpec::default(),
            tied: true,
            cell: CellKind::Lstm,
            skip: SkipMode::None,
            anchor: true,
        }
    }
}

pub(crate) const LSTM_GATES: [&str; 4] = ["i", "f", "o", "g"];

impl ModelConfig {
    pub fn block_len(&self) -> usize {
        self.patch_edge * self.patch_edge
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.patch_edge == 0 {
            return Err(SneError::Config("state_dim and patch_edge must be positive".into()));
        }
        self.context.validate()
    }

    /// Names and shapes of every tensor one sibling owns.
    pub fn sibling_shapes(&self, sibling: Sibling) -> Vec<(String, (usize, usize))> {
        let p = sibling.prefix();
        let (h, e) = (self.state_dim, self.block_len());
        let mut out = Vec::new();
        if self.tied {
            out.push((format!("{p}.ctx"), (h, e)));
        } else {
            for i in 0..self.context.n() {
                out.push((format!("{p}.ctx.{i}"), (h, e)));
            }
        }
        if self.anchor {
            out.push((format!("{p}.anchor"), (h, e)));
        }
        match self.cell {
            CellKind::Lstm => {
                for g in LSTM_GATES {
                    out.push((format!("{p}.lstm.wx_{g}"), (h, h)));
                    out.push((format!("{p}.lstm.wh_{g}"), (h, h)));
                    out.push((format!("{p}.lstm.b_{g}"), (h, 1)));
                }
            }
            CellKind::Elman => {
                out.push((format!("{p}.elman.u"), (h, h)));
                out.push((format!("{p}.elman.v"), (h, h)));
            }
        }
        if self.skip.gates(sibling) {
            out.push((format!("{p}.skip.w"), (1, h)));
            out.push((format!("{p}.skip.b"), (1, 1)));
        }
        out
    }

    pub fn shared_shapes(&self) -> Vec<(String, (usize, usize))> {
        vec![
            ("dec.u".into(), (self.block_len(), self.state_dim)),
            ("dec.c".into(), (self.block_len(), 1)),
            ("comm.w_err".into(), (self.state_dim, self.state_dim)),
        ]
    }

    pub fn all_shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut all = self.sibling_shapes(Sibling::Source);
        all.extend(self.sibling_shapes(Sibling::Co));
        all.extend(self.shared_shapes());
        all
    }
}

/// True for tensors that only the training-time co-estimator side needs.
pub fn is_co_estimator_tensor(name: &str) -> bool {
    name.starts_with("co.") || name == "comm.w_err"
}

/// All trainable tensors of the sibling pair, keyed by name.
#[derive(Clone, Debug, PartialEq)]
pub struct SneParams {
    pub config: ModelConfig,
    tensors: NamedTensors,
}

impl SneParams {
    /// Every entry drawn from `U(-scale, scale)`, in name order.
    pub fn init(config: ModelConfig, rng: &mut RngStream, scale: f64) -> Result<Self> {
        config.validate()?;
        let mut tensors = BTreeMap::new();
        let mut shapes = config.all_shapes();
        shapes.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, (r, c)) in shapes {
            tensors.insert(name, rng.uniform_tensor(r, c, -scale, scale));
        }
        Ok(SneParams { config, tensors })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config.all_shapes().into_iter().map(|(n, (r, c))| (n, Tensor2::zeros(r, c))).collect();
        Ok(SneParams { config, tensors })
    }

    /// Wraps loaded tensors, checking the shape of every one that is present.
    pub fn from_tensors(config: ModelConfig, tensors: NamedTensors) -> Result<Self> {
        config.validate()?;
        let expected: BTreeMap<_, _> = config.all_shapes().into_iter().collect();
        for (name, t) in &tensors {
            match expected.get(name) {
                Some(&shape) if shape == t.shape() => {}
                Some(&shape) => return Err(SneError::shape("checkpoint tensor", shape, t.shape())),
                None => return Err(SneError::Checkpoint(format!("unexpected tensor '{name}'"))),
            }
        }
        Ok(SneParams { config, tensors })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor2> {
        self.tensors.get(name).ok_or_else(|| SneError::Checkpoint(format!("missing tensor '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor2> {
        self.tensors.get_mut(name).ok_or_else(|| SneError::Checkpoint(format!("missing tensor '{name}'")))
    }

    pub fn set(&mut self, name: &str, value: Tensor2) -> Result<()> {
        let slot = self.get_mut(name)?;
        if slot.shape() != value.shape() {
            return Err(SneError::shape("set", slot.shape(), value.shape()));
        }
        *slot = value;
        Ok(())
    }

    pub fn tensors(&self) -> &NamedTensors {
        &self.tensors
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    /// Drops the co-estimator and the communication matrix.
    pub fn without_co_estimator(&self) -> SneParams {
        SneParams {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .filter(|(n, _)| !is_co_estimator_tensor(n))
                .map(|(n, t)| (n.clone(), t.clone()))
                .collect(),
        }
    }

    /// Checks that everything decoding with the source estimator needs is present.
    pub fn require_source(&self, skip: SkipMode) -> Result<()> {
        let mut config = self.config.clone();
        config.skip = skip;
        let needed = config
            .sibling_shapes(Sibling::Source)
            .into_iter()
            .map(|(n, _)| n)
            .chain(["dec.u".to_string(), "dec.c".to_string()]);
        for name in needed {
            if !self.tensors.contains_key(&name) {
                return Err(SneError::Checkpoint(format!("missing source tensor '{name}'")));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor2::is_finite)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor2::len).sum()
    }
}

impl Parameters for SneParams {
    fn named(&self) -> &NamedTensors {
        &self.tensors
    }

    fn named_mut(&mut self) -> &mut NamedTensors {
        &mut self.tensors
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_config() {
        let cfg = ModelConfig { state_dim: 8, patch_edge: 4, skip: SkipMode::SkipF, ..ModelConfig::default() };
        let p = SneParams::init(cfg.clone(), &mut RngStream::new(1), 0.05).unwrap();
        assert_eq!(p.get("src.ctx").unwrap().shape(), (8, 16));
        assert_eq!(p.get("dec.u").unwrap().shape(), (16, 8));
        assert_eq!(p.get("comm.w_err").unwrap().shape(), (8, 8));
        assert!(p.contains("co.skip.w") && !p.contains("src.skip.w"));
        assert!(p.tensors().values().all(|t| t.max_abs() <= 0.05));

        let untied = ModelConfig { tied: false, ..cfg };
        let p = SneParams::zeros(untied).unwrap();
        assert!(p.contains("co.ctx.3") && !p.contains("co.ctx"));
    }

    #[test]
    fn stripping_keeps_source_and_head() {
        let p = SneParams::init(ModelConfig::default(), &mut RngStream::new(2), 0.05).unwrap();
        let stripped = p.without_co_estimator();
        assert!(stripped.tensors().keys().all(|k| !k.starts_with("co.") && k != "comm.w_err"));
        stripped.require_source(SkipMode::None).unwrap();
        assert!(stripped.require_source(SkipMode::SkipB).is_err());
    }

    #[test]
    fn skip_mode_gating() {
        assert!(SkipMode::SkipF.gates(Sibling::Co) && !SkipMode::SkipF.gates(Sibling::Source));
        assert!(SkipMode::SkipB.gates(Sibling::Source) && !SkipMode::SkipB.gates(Sibling::Co));
        assert!(SkipMode::SkipBoth.gates(Sibling::Source) && SkipMode::SkipBoth.gates(Sibling::Co));
        assert!(!SkipMode::None.gates(Sibling::Source));
        assert_eq!("skipboth".parse::<SkipMode>().unwrap(), SkipMode::SkipBoth);
        assert_eq!(CellKind::Elman.to_string(), "elman");
    }
}
