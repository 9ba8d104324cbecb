use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// U-Net family member: `depth` encoder/decoder blocks starting at
/// `base_filters` and doubling per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UNetConfig {
    pub depth: usize,
    pub base_filters: usize,
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
}

impl UNetConfig {
    pub const DEFAULT_KERNEL: usize = 3;
    pub const DEFAULT_IN: usize = 13;
    pub const DEFAULT_OUT: usize = 12;
    pub const DEFAULT_HW: usize = 384;

    pub fn new(depth: usize, base_filters: usize) -> Self {
        UNetConfig {
            depth,
            base_filters,
            kernel: Self::DEFAULT_KERNEL,
            in_channels: Self::DEFAULT_IN,
            out_channels: Self::DEFAULT_OUT,
            height: Self::DEFAULT_HW,
            width: Self::DEFAULT_HW,
        }
    }

    pub fn with_input(mut self, height: usize, width: usize) -> Self {
        self.height = height;
        self.width = width;
        self
    }

    pub fn with_kernel(mut self, kernel: usize) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Filters of encoder block `i` (1-based): `f * 2^(i-1)`.
    pub fn filters(&self, block: usize) -> usize {
        self.base_filters << (block - 1)
    }

    pub fn filter_ladder(&self) -> Vec<usize> {
        (1..=self.depth).map(|i| self.filters(i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_filters == 0 {
            return Err(Error::contract("depth and base filters must be at least 1"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::contract(format!(
                "kernel size must be odd, got {}",
                self.kernel
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::contract("channel counts must be positive"));
        }
        let div = 1usize << self.depth;
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(div) || !self.width.is_multiple_of(div) {
            return Err(Error::contract(format!(
                "{}: input {}×{} must have H and W divisible by 2^{} = {div}",
                self, self.height, self.width, self.depth
            )));
        }
        Ok(())
    }
}

impl fmt::Display for UNetConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U{}-{}", self.depth, self.base_filters)
    }
}

impl FromStr for UNetConfig {
    type Err = Error;

    /// Parses `U{d}-{f}` with positive integers `d` and `f`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |token: &str| Error::ModelName {
            name: s.to_string(),
            token: token.to_string(),
        };
        let rest = s
            .strip_prefix('U')
            .ok_or_else(|| bad(s.get(..1).unwrap_or("")))?;
        let (d, f) = rest.split_once('-').ok_or_else(|| bad(rest))?;
        let parse = |tok: &str| -> Result<usize> {
            if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad(tok));
            }
            match tok.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(bad(tok)),
            }
        };
        let depth = parse(d)?;
        let filters = parse(f)?;
        if depth >= usize::BITS as usize || filters.checked_shl(depth as u32 - 1).is_none() {
            return Err(bad(d));
        }
        Ok(UNetConfig::new(depth, filters))
    }
}
