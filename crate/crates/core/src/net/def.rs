//! Network architecture description.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::ReprKind;

pub const COMMAND_WIDTH: usize = 4;
pub const OUTPUT_WIDTH: usize = 2;
pub const SINGLE_DENSE: [usize; 2] = [512, 512];
pub const DUAL_PRIMARY_DENSE: [usize; 2] = [480, 480];
pub const DUAL_SEMANTIC_DENSE: [usize; 2] = [32, 32];
/// Hidden widths of the head; the output layer follows.
pub const HEAD_HIDDEN: [usize; 2] = [256, 64];
pub const DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvDef {
    pub kernel: usize,
    pub channels: usize,
    pub stride: usize,
}

impl ConvDef {
    pub const fn new(kernel: usize, channels: usize, stride: usize) -> Self {
        Self { kernel, channels, stride }
    }

    /// Output extent for an input extent with `kernel / 2` zero padding.
    pub fn out_extent(&self, n: usize) -> usize {
        (n + 2 * (self.kernel / 2) - self.kernel) / self.stride + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDef {
    pub in_channels: usize,
    pub convs: Vec<ConvDef>,
    pub dense: Vec<usize>,
}

impl EncoderDef {
    /// `(channels, height, width)` after each conv layer.
    pub fn conv_dims(&self, height: usize, width: usize) -> Vec<(usize, usize, usize)> {
        let (mut h, mut w) = (height, width);
        self.convs
            .iter()
            .map(|c| {
                h = c.out_extent(h);
                w = c.out_extent(w);
                (c.channels, h, w)
            })
            .collect()
    }

    pub fn flatten_len(&self, height: usize, width: usize) -> usize {
        self.conv_dims(height, width).last().map_or(self.in_channels * height * width, |&(c, h, w)| c * h * w)
    }

    pub fn feature_width(&self) -> usize {
        *self.dense.last().expect("encoder has dense layers")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDef {
    pub width: usize,
    pub height: usize,
    pub encoder1: EncoderDef,
    /// Semantic-image encoder of the dual variant.
    pub encoder2: Option<EncoderDef>,
    pub head: Vec<usize>,
    pub command_width: usize,
    pub output_width: usize,
    pub dropout: f64,
}

/// Five stride-2 convolutions: 256x192 input flattens to 8x6x64.
pub fn reference_convs() -> Vec<ConvDef> {
    vec![ConvDef::new(5, 24, 2), ConvDef::new(3, 36, 2), ConvDef::new(3, 48, 2), ConvDef::new(3, 64, 2), ConvDef::new(3, 64, 2)]
}

/// Four narrow stride-2 convolutions for 64x48 desk-scale runs.
pub fn compact_convs() -> Vec<ConvDef> {
    vec![ConvDef::new(5, 8, 2), ConvDef::new(3, 16, 2), ConvDef::new(3, 24, 2), ConvDef::new(3, 32, 2)]
}

impl NetworkDef {
    pub fn single(in_channels: usize, width: usize, height: usize, convs: Vec<ConvDef>) -> Self {
        Self {
            width,
            height,
            encoder1: EncoderDef { in_channels, convs, dense: SINGLE_DENSE.to_vec() },
            encoder2: None,
            head: HEAD_HIDDEN.to_vec(),
            command_width: COMMAND_WIDTH,
            output_width: OUTPUT_WIDTH,
            dropout: DROPOUT,
        }
    }

    pub fn dual(in_channels: usize, width: usize, height: usize, convs: Vec<ConvDef>) -> Self {
        Self {
            width,
            height,
            encoder1: EncoderDef { in_channels, convs: convs.clone(), dense: DUAL_PRIMARY_DENSE.to_vec() },
            encoder2: Some(EncoderDef { in_channels: 1, convs, dense: DUAL_SEMANTIC_DENSE.to_vec() }),
            head: HEAD_HIDDEN.to_vec(),
            command_width: COMMAND_WIDTH,
            output_width: OUTPUT_WIDTH,
            dropout: DROPOUT,
        }
    }

    /// Dual-encoder exactly when the kind carries a semantic image.
    pub fn for_kind(kind: ReprKind, width: usize, height: usize, convs: Vec<ConvDef>) -> Self {
        if kind.has_semantic() {
            Self::dual(kind.primary_channels(), width, height, convs)
        } else {
            Self::single(kind.primary_channels(), width, height, convs)
        }
    }

    /// 256x192 input with [`reference_convs`].
    pub fn reference(kind: ReprKind) -> Self {
        Self::for_kind(kind, 256, 192, reference_convs())
    }

    /// 64x48 input with [`compact_convs`].
    pub fn compact(kind: ReprKind) -> Self {
        Self::for_kind(kind, 64, 48, compact_convs())
    }

    /// 16x12 dual-encoder net with two small convolutions.
    pub fn miniature_dual() -> Self {
        Self::dual(1, 16, 12, vec![ConvDef::new(3, 3, 2), ConvDef::new(3, 4, 2)])
    }

    pub fn is_dual(&self) -> bool {
        self.encoder2.is_some()
    }

    pub fn encoder(&self, index: usize) -> Option<&EncoderDef> {
        match index {
            0 => Some(&self.encoder1),
            1 => self.encoder2.as_ref(),
            _ => None,
        }
    }

    /// Length of the concatenated vector entering the head.
    pub fn concat_width(&self) -> usize {
        self.encoder1.feature_width() + self.encoder2.as_ref().map_or(0, |e| e.feature_width()) + self.command_width
    }

    pub fn primary_len(&self) -> usize {
        self.encoder1.in_channels * self.width * self.height
    }

    pub fn semantic_len(&self) -> usize {
        self.encoder2.as_ref().map_or(0, |e| e.in_channels * self.width * self.height)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Shape(m));
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidDimensions { width: self.width, height: self.height });
        }
        for enc in std::iter::once(&self.encoder1).chain(self.encoder2.as_ref()) {
            if enc.in_channels == 0 || enc.convs.is_empty() {
                return bad("encoder needs input channels and at least one conv layer".into());
            }
            for c in &enc.convs {
                if c.kernel == 0 || c.kernel % 2 == 0 || c.stride == 0 || c.channels == 0 {
                    return bad(format!("bad conv layer {c:?}"));
                }
            }
        }
        match &self.encoder2 {
            None if self.encoder1.dense != SINGLE_DENSE => {
                return bad(format!("single encoder dense widths must be {SINGLE_DENSE:?}"));
            }
            Some(e2) if self.encoder1.dense != DUAL_PRIMARY_DENSE || e2.dense != DUAL_SEMANTIC_DENSE => {
                return bad(format!("dual encoder dense widths must be {DUAL_PRIMARY_DENSE:?} and {DUAL_SEMANTIC_DENSE:?}"));
            }
            Some(e2) if e2.in_channels != 1 => return bad("semantic encoder takes one channel".into()),
            _ => {}
        }
        if self.head.len() != 2 || self.head.contains(&0) {
            return bad("head has two hidden layers before the output layer".into());
        }
        if self.command_width != COMMAND_WIDTH || self.output_width != OUTPUT_WIDTH {
            return bad("command width is 4 and output width is 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::OutOfRange { what: "dropout", value: self.dropout });
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("architecture serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
