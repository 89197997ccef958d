use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// How patch positions are encoded before the first layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionalEncoding {
    #[default]
    Learned,
    Sinusoidal,
}

/// Shape of the Siamese ViT and its two prediction heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub depth: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub mlp_ratio: usize,
    /// Hidden widths of the classification MLP; empty means `[D, D/2]`.
    pub cls_hidden: Vec<usize>,
    /// Hidden widths of the scoring MLP; empty means `[D/2]`.
    pub score_hidden: Vec<usize>,
    pub positional: PositionalEncoding,
    pub layer_norm_eps: f64,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_height: 64,
            image_width: 64,
            channels: 3,
            patch_size: 8,
            depth: 4,
            heads: 4,
            embed_dim: 64,
            mlp_ratio: 4,
            cls_hidden: Vec::new(),
            score_hidden: Vec::new(),
            positional: PositionalEncoding::Learned,
            layer_norm_eps: 1e-5,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.image_height == 0 || self.image_width == 0 {
            return Err(invalid("image and patch sizes must be positive"));
        }
        if self.image_height % self.patch_size != 0 || self.image_width % self.patch_size != 0 {
            return Err(invalid(format!(
                "image {}×{} is not divisible by patch size {}",
                self.image_height, self.image_width, self.patch_size
            )));
        }
        if self.channels == 0 || self.embed_dim == 0 || self.heads == 0 || self.mlp_ratio == 0 {
            return Err(invalid("channels, embed_dim, heads and mlp_ratio must be positive"));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(invalid(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        if self.layer_norm_eps <= 0.0 || self.init_std < 0.0 {
            return Err(invalid("layer_norm_eps must be positive and init_std non-negative"));
        }
        if self.cls_hidden_dims().iter().chain(&self.score_hidden_dims()).any(|&w| w == 0) {
            return Err(invalid("head hidden widths must be positive"));
        }
        Ok(())
    }

    pub fn grid_rows(&self) -> usize {
        self.image_height / self.patch_size
    }

    pub fn grid_cols(&self) -> usize {
        self.image_width / self.patch_size
    }

    /// Number of patch tokens `N = HW/P²`.
    pub fn num_patches(&self) -> usize {
        self.grid_rows() * self.grid_cols()
    }

    /// Sequence length including the CLS token.
    pub fn seq_len(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn cls_hidden_dims(&self) -> Vec<usize> {
        if self.cls_hidden.is_empty() {
            vec![self.embed_dim, (self.embed_dim / 2).max(1)]
        } else {
            self.cls_hidden.clone()
        }
    }

    pub fn score_hidden_dims(&self) -> Vec<usize> {
        if self.score_hidden.is_empty() {
            vec![(self.embed_dim / 2).max(1)]
        } else {
            self.score_hidden.clone()
        }
    }
}
