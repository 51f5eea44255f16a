use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recurrent::OutputPeephole;

/// Network family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    /// Plain UNet fed all phases stacked on the channel axis.
    UnetBaseline,
    /// UNet whose double-conv blocks are a Conv-LSTM plus one convolution.
    LUnet,
    /// L-UNet without pooling/upsampling; encoder blocks use dilated kernels.
    AlUnet,
}

impl Arch {
    pub fn is_recurrent(self) -> bool {
        !matches!(self, Arch::UnetBaseline)
    }

    pub fn resamples(self) -> bool {
        !matches!(self, Arch::AlUnet)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::UnetBaseline => "unet",
            Arch::LUnet => "lunet",
            Arch::AlUnet => "alunet",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unet" | "unet-baseline" | "baseline" => Ok(Arch::UnetBaseline),
            "lunet" | "l-unet" => Ok(Arch::LUnet),
            "alunet" | "al-unet" => Ok(Arch::AlUnet),
            other => Err(Error::config("arch", format!("unknown architecture `{other}` (unet|lunet|alunet)"))),
        }
    }
}

/// Dilation rates of the three-level AL-UNet encoder.
pub const DEFAULT_ATROUS_RATES: [usize; 3] = [1, 2, 5];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub arch: Arch,
    pub depth: usize,
    /// Channels per phase.
    pub in_bands: usize,
    pub phases: usize,
    pub base_channels: usize,
    pub kernel_size: usize,
    /// 1 for a sigmoid change/no-change head, `2^phases` for the multi-phase
    /// softmax head.
    pub num_classes: usize,
    /// Per-level dilation (AL-UNet only). `None` means the default prefix of
    /// `[1, 2, 5]`.
    pub atrous_rates: Option<Vec<usize>>,
    pub peephole: bool,
    pub output_peephole: OutputPeephole,
    /// Seed of the parameter initializer.
    pub init_seed: u64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            arch: Arch::LUnet,
            depth: 3,
            in_bands: 3,
            phases: 2,
            base_channels: 16,
            kernel_size: 3,
            num_classes: 1,
            atrous_rates: None,
            peephole: true,
            output_peephole: OutputPeephole::Previous,
            init_seed: 0,
        }
    }
}

impl ArchConfig {
    pub fn new(arch: Arch) -> Self {
        ArchConfig {
            arch,
            ..Default::default()
        }
    }

    /// Channel width of encoder level `level` (1-based).
    pub fn width(&self, level: usize) -> usize {
        self.base_channels << (level - 1)
    }

    /// Number of input channels of the first layer.
    pub fn input_channels(&self) -> usize {
        match self.arch {
            Arch::UnetBaseline => self.phases * self.in_bands,
            _ => self.in_bands,
        }
    }

    /// Dilation used by every block of level `level` (1-based); 1 unless the
    /// architecture is AL-UNet.
    pub fn dilation(&self, level: usize) -> usize {
        match self.arch {
            Arch::AlUnet => self.rates()[level - 1],
            _ => 1,
        }
    }

    fn rates(&self) -> Vec<usize> {
        match &self.atrous_rates {
            Some(r) => r.clone(),
            None => DEFAULT_ATROUS_RATES.iter().copied().take(self.depth).collect(),
        }
    }

    /// Spatial dims must be divisible by this factor.
    pub fn spatial_multiple(&self) -> usize {
        if self.arch.resamples() {
            1 << (self.depth - 1)
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("depth", "must be at least 1"));
        }
        if self.depth > 8 {
            return Err(Error::config("depth", "deeper than 8 levels is not supported"));
        }
        if self.in_bands == 0 {
            return Err(Error::config("in_bands", "must be positive"));
        }
        if self.phases < 2 || self.phases > 8 {
            return Err(Error::config("phases", format!("must be in 2..=8, got {}", self.phases)));
        }
        if self.base_channels == 0 {
            return Err(Error::config("base_channels", "must be positive"));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::config("kernel_size", format!("must be odd, got {}", self.kernel_size)));
        }
        let multi = 1usize << self.phases;
        if self.num_classes != 1 && self.num_classes != multi {
            return Err(Error::config(
                "num_classes",
                format!("must be 1 (binary) or 2^phases = {multi}, got {}", self.num_classes),
            ));
        }
        match (self.arch, &self.atrous_rates) {
            (Arch::AlUnet, Some(r)) => {
                if r.len() != self.depth {
                    return Err(Error::config(
                        "atrous_rates",
                        format!("needs one rate per level ({}), got {r:?}", self.depth),
                    ));
                }
                if r.contains(&0) {
                    return Err(Error::config("atrous_rates", "rates must be positive"));
                }
            }
            (Arch::AlUnet, None) if self.depth > DEFAULT_ATROUS_RATES.len() => {
                return Err(Error::config(
                    "atrous_rates",
                    format!("no default rates for depth {}; list them explicitly", self.depth),
                ));
            }
            (Arch::UnetBaseline | Arch::LUnet, Some(_)) => {
                return Err(Error::config("atrous_rates", "only valid for al-unet"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Checks an input `T×N×C×H×W` shape against this config.
    pub fn validate_input(&self, shape: &[usize]) -> Result<()> {
        let [t, _, c, h, w] = match *shape {
            [t, n, c, h, w] => [t, n, c, h, w],
            _ => {
                return Err(Error::invalid_shape(
                    "model input",
                    format!("expected T×N×C×H×W, got {shape:?}"),
                ))
            }
        };
        if t != self.phases {
            return Err(Error::invalid_shape(
                "model input",
                format!("config expects {} phases, input has {t}", self.phases),
            ));
        }
        if c != self.in_bands {
            return Err(Error::invalid_shape(
                "model input",
                format!("config expects {} bands per phase, input has {c}", self.in_bands),
            ));
        }
        let m = self.spatial_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::invalid_shape(
                "model input",
                format!("spatial dims {h}×{w} must be divisible by {m} for depth {}", self.depth),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_double_per_level() {
        let c = ArchConfig::default();
        assert_eq!([c.width(1), c.width(2), c.width(3)], [16, 32, 64]);
    }

    #[test]
    fn field_level_diagnostics() {
        let mut c = ArchConfig::new(Arch::LUnet);
        c.kernel_size = 4;
        assert!(c.validate().unwrap_err().to_string().contains("kernel_size"));
        let mut c = ArchConfig::new(Arch::LUnet);
        c.atrous_rates = Some(vec![1, 2, 5]);
        assert!(c.validate().unwrap_err().to_string().contains("atrous_rates"));
        let mut c = ArchConfig::new(Arch::AlUnet);
        c.atrous_rates = Some(vec![1, 2]);
        assert!(c.validate().is_err());
        let mut c = ArchConfig::new(Arch::AlUnet);
        c.num_classes = 3;
        assert!(c.validate().unwrap_err().to_string().contains("num_classes"));
    }

    #[test]
    fn arch_names_parse() {
        for (s, a) in [("unet", Arch::UnetBaseline), ("l-unet", Arch::LUnet), ("AlUnet", Arch::AlUnet)] {
            assert_eq!(s.parse::<Arch>().unwrap(), a);
        }
        assert!("dasnet".parse::<Arch>().is_err());
    }

    #[test]
    fn input_divisibility() {
        let c = ArchConfig::default();
        assert!(c.validate_input(&[2, 1, 3, 64, 64]).is_ok());
        assert!(c.validate_input(&[2, 1, 3, 62, 64]).is_err());
        let a = ArchConfig::new(Arch::AlUnet);
        assert!(a.validate_input(&[2, 1, 3, 62, 63]).is_ok());
    }
}
