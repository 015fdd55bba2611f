use serde::{Deserialize, Serialize};

use crate::data::GraphMode;
use crate::error::{KgcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Mlp,
    Rgcn,
    Compgcn,
    Kbgat,
}

impl EncoderKind {
    pub fn label(self) -> &'static str {
        match self {
            EncoderKind::Mlp => "MLP",
            EncoderKind::Rgcn => "RGCN",
            EncoderKind::Compgcn => "CompGCN",
            EncoderKind::Kbgat => "KBGAT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    #[serde(alias = "rectifier")]
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Number of layers K.
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Uniform width used when `dims` is absent.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Explicit widths d_0..d_K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_leaky_slope")]
    pub leaky_slope: f64,
}

fn default_layers() -> usize {
    2
}

fn default_dim() -> usize {
    200
}

fn default_leaky_slope() -> f64 {
    0.2
}

impl EncoderConfig {
    pub fn new(kind: EncoderKind, layers: usize, dim: usize) -> Self {
        EncoderConfig {
            kind,
            layers,
            dim,
            dims: None,
            activation: Activation::Tanh,
            leaky_slope: default_leaky_slope(),
        }
    }

    /// Resolved widths d_0..d_K.
    pub fn widths(&self) -> Vec<usize> {
        self.dims
            .clone()
            .unwrap_or_else(|| vec![self.dim; self.layers + 1])
    }

    pub fn output_dim(&self) -> usize {
        *self.widths().last().unwrap_or(&self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(KgcError::config("encoder: layers must be at least 1"));
        }
        let w = self.widths();
        if w.len() != self.layers + 1 {
            return Err(KgcError::config(format!(
                "encoder: dims has {} entries, expected layers+1 = {}",
                w.len(),
                self.layers + 1
            )));
        }
        if w.contains(&0) {
            return Err(KgcError::config("encoder: widths must be positive"));
        }
        if self.kind == EncoderKind::Kbgat && w.iter().any(|&d| d != w[0]) {
            return Err(KgcError::config(
                "encoder: kbgat shares one relation table across layers, so all widths must be equal",
            ));
        }
        if !self.leaky_slope.is_finite() {
            return Err(KgcError::config("encoder: leaky_slope must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Distmult,
    Conve,
}

impl ScorerKind {
    pub fn label(self) -> &'static str {
        match self {
            ScorerKind::Distmult => "DistMult",
            ScorerKind::Conve => "ConvE",
        }
    }
}

/// Where DistMult takes its relation diagonal from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalSource {
    /// The encoder's final relation embedding.
    RelationEmbedding,
    /// A separate table with one row per base relation; `r` and its inverse share a row.
    IndependentTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    /// DistMult only. Defaults to `independent_table` for rgcn, `relation_embedding` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<DiagonalSource>,
    /// ConvE reshape of each embedding; `rows * cols` must equal the embedding width.
    #[serde(default = "default_rows")]
    pub reshape_rows: usize,
    #[serde(default = "default_cols")]
    pub reshape_cols: usize,
    #[serde(default = "default_filters")]
    pub filters: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default)]
    pub input_dropout: f64,
    #[serde(default)]
    pub feature_dropout: f64,
    #[serde(default)]
    pub hidden_dropout: f64,
    #[serde(default = "default_true")]
    pub tail_bias: bool,
}

fn default_rows() -> usize {
    10
}

fn default_cols() -> usize {
    20
}

fn default_filters() -> usize {
    32
}

fn default_kernel() -> usize {
    3
}

fn default_true() -> bool {
    true
}

impl ScorerConfig {
    pub fn distmult() -> Self {
        ScorerConfig {
            kind: ScorerKind::Distmult,
            diagonal: None,
            reshape_rows: default_rows(),
            reshape_cols: default_cols(),
            filters: default_filters(),
            kernel: default_kernel(),
            input_dropout: 0.0,
            feature_dropout: 0.0,
            hidden_dropout: 0.0,
            tail_bias: true,
        }
    }

    pub fn conve(rows: usize, cols: usize, filters: usize, kernel: usize) -> Self {
        ScorerConfig {
            kind: ScorerKind::Conve,
            reshape_rows: rows,
            reshape_cols: cols,
            filters,
            kernel,
            ..Self::distmult()
        }
    }

    pub fn diagonal_for(&self, encoder: EncoderKind) -> DiagonalSource {
        self.diagonal.unwrap_or(match encoder {
            EncoderKind::Rgcn => DiagonalSource::IndependentTable,
            _ => DiagonalSource::RelationEmbedding,
        })
    }

    /// Spatial size of the convolution output.
    pub fn conv_output(&self) -> (usize, usize) {
        (
            (2 * self.reshape_rows + 1).saturating_sub(self.kernel),
            (self.reshape_cols + 1).saturating_sub(self.kernel),
        )
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.kind != ScorerKind::Conve {
            return Ok(());
        }
        if self.reshape_rows * self.reshape_cols != dim {
            return Err(KgcError::config(format!(
                "scorer: reshape {}x{} does not cover embedding width {dim}",
                self.reshape_rows, self.reshape_cols
            )));
        }
        if self.filters == 0 || self.kernel == 0 {
            return Err(KgcError::config("scorer: filters and kernel must be positive"));
        }
        if self.kernel > 2 * self.reshape_rows || self.kernel > self.reshape_cols {
            return Err(KgcError::config(format!(
                "scorer: kernel {} exceeds the stacked {}x{} input",
                self.kernel,
                2 * self.reshape_rows,
                self.reshape_cols
            )));
        }
        for (name, p) in [
            ("input_dropout", self.input_dropout),
            ("feature_dropout", self.feature_dropout),
            ("hidden_dropout", self.hidden_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(KgcError::config(format!("scorer: {name} {p} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub graph_mode: GraphMode,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.scorer.validate(self.encoder.output_dim())
    }

    /// Short display name such as `CompGCN+ConvE`.
    pub fn label(&self) -> String {
        format!("{}+{}", self.encoder.kind.label(), self.scorer.kind.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_minimal_json() {
        let cfg: ModelConfig = serde_json::from_str(
            r#"{"encoder":{"kind":"compgcn"},"scorer":{"kind":"conve"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.encoder.widths(), vec![200, 200, 200]);
        assert_eq!(cfg.scorer.conv_output(), (18, 18));
        assert_eq!(cfg.graph_mode, GraphMode::Original);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: std::result::Result<EncoderConfig, _> =
            serde_json::from_str(r#"{"kind":"mlp","widht":3}"#);
        assert!(r.is_err());
    }

    #[test]
    fn conve_reshape_must_cover_width() {
        let s = ScorerConfig::conve(2, 3, 1, 2);
        assert!(s.validate(8).is_err());
        assert!(s.validate(6).is_ok());
    }

    #[test]
    fn kbgat_needs_uniform_widths() {
        let mut e = EncoderConfig::new(EncoderKind::Kbgat, 2, 8);
        e.dims = Some(vec![8, 4, 8]);
        assert!(e.validate().is_err());
    }

    #[test]
    fn rgcn_defaults_to_independent_diagonal() {
        let s = ScorerConfig::distmult();
        assert_eq!(s.diagonal_for(EncoderKind::Rgcn), DiagonalSource::IndependentTable);
        assert_eq!(s.diagonal_for(EncoderKind::Mlp), DiagonalSource::RelationEmbedding);
    }
}
