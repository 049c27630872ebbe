use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, ArrayView2, Axis, CowArray, Ix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Left: synthetic → real. Right: real → real.
    #[serde(rename = "smcae")]
    Smcae,
    /// Left: synthetic → synthetic. Right: real → real.
    #[serde(rename = "smcae-ii")]
    SmcaeII,
    /// One channel over the pooled tasks of [`Variant::Smcae`].
    #[serde(rename = "sae-i")]
    SaeI,
    /// One channel, synthetic → real.
    #[serde(rename = "sae-ii")]
    SaeII,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Smcae, Variant::SmcaeII, Variant::SaeI, Variant::SaeII];

    pub fn is_two_channel(self) -> bool {
        matches!(self, Variant::Smcae | Variant::SmcaeII)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Smcae => "smcae",
            Variant::SmcaeII => "smcae-ii",
            Variant::SaeI => "sae-i",
            Variant::SaeII => "sae-ii",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant {s:?} (expected one of smcae, smcae-ii, sae-i, sae-ii)"
                ))
            })
    }
}

/// An (input, target) pair of row-aligned matrices.
#[derive(Clone, Debug)]
pub struct ChannelData<'a> {
    pub input: CowArray<'a, f64, Ix2>,
    pub target: CowArray<'a, f64, Ix2>,
}

impl<'a> ChannelData<'a> {
    pub fn new(input: CowArray<'a, f64, Ix2>, target: CowArray<'a, f64, Ix2>) -> Result<Self> {
        if input.nrows() != target.nrows() {
            return Err(Error::shape("paired instance count", input.nrows(), target.nrows()));
        }
        if input.nrows() == 0 {
            return Err(Error::Empty("channel data"));
        }
        Ok(Self { input, target })
    }

    pub fn borrowed(input: ArrayView2<'a, f64>, target: ArrayView2<'a, f64>) -> Result<Self> {
        Self::new(input.into(), target.into())
    }

    pub fn len(&self) -> usize {
        self.input.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.input.nrows() == 0
    }
}

/// Per-channel training data for one variant.
#[derive(Clone, Debug)]
pub struct ChannelSet<'a> {
    pub left: ChannelData<'a>,
    pub right: Option<ChannelData<'a>>,
}

impl<'a> ChannelSet<'a> {
    pub fn is_two_channel(&self) -> bool {
        self.right.is_some()
    }

    pub fn input_dim(&self) -> usize {
        self.left.input.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.left.target.ncols()
    }

    pub fn channels(&self) -> impl Iterator<Item = &ChannelData<'a>> {
        std::iter::once(&self.left).chain(self.right.as_ref())
    }
}

/// Binds synthetic and real feature matrices to each channel's input and target.
pub fn build_variant<'a>(
    variant: Variant,
    x_s: ArrayView2<'a, f64>,
    x_r: ArrayView2<'a, f64>,
) -> Result<ChannelSet<'a>> {
    if x_s.nrows() != x_r.nrows() {
        return Err(Error::shape("paired instance count", x_s.nrows(), x_r.nrows()));
    }
    if x_s.ncols() != x_r.ncols() {
        return Err(Error::shape("synthetic vs real feature dimension", x_r.ncols(), x_s.ncols()));
    }
    let set = match variant {
        Variant::Smcae => ChannelSet {
            left: ChannelData::borrowed(x_s, x_r)?,
            right: Some(ChannelData::borrowed(x_r, x_r)?),
        },
        Variant::SmcaeII => ChannelSet {
            left: ChannelData::borrowed(x_s, x_s)?,
            right: Some(ChannelData::borrowed(x_r, x_r)?),
        },
        Variant::SaeI => {
            let input = concatenate(Axis(0), &[x_s, x_r]).expect("column counts checked");
            let target = concatenate(Axis(0), &[x_r, x_r]).expect("column counts checked");
            ChannelSet {
                left: ChannelData::new(input.into(), target.into())?,
                right: None,
            }
        }
        Variant::SaeII => ChannelSet {
            left: ChannelData::borrowed(x_s, x_r)?,
            right: None,
        },
    };
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bindings() {
        let xs = array![[0.1, 0.2], [0.3, 0.4]];
        let xr = array![[0.5, 0.6], [0.7, 0.8]];

        let b = build_variant(Variant::Smcae, xs.view(), xr.view()).unwrap();
        assert_eq!(b.left.input, xs);
        assert_eq!(b.left.target, xr);
        let r = b.right.unwrap();
        assert_eq!(r.input, xr);
        assert_eq!(r.target, xr);

        let b = build_variant(Variant::SmcaeII, xs.view(), xr.view()).unwrap();
        assert_eq!(b.left.input, xs);
        assert_eq!(b.left.target, xs);
        assert_eq!(b.right.unwrap().input, xr);

        let b = build_variant(Variant::SaeI, xs.view(), xr.view()).unwrap();
        assert!(b.right.is_none());
        assert_eq!(b.left.len(), 4);
        assert_eq!(b.left.input, array![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6], [0.7, 0.8]]);
        assert_eq!(b.left.target, array![[0.5, 0.6], [0.7, 0.8], [0.5, 0.6], [0.7, 0.8]]);

        let b = build_variant(Variant::SaeII, xs.view(), xr.view()).unwrap();
        assert!(b.right.is_none());
        assert_eq!(b.left.input, xs);
        assert_eq!(b.left.target, xr);
    }

    #[test]
    fn unpaired_rejected() {
        let xs = array![[0.1, 0.2]];
        let xr = array![[0.5, 0.6], [0.7, 0.8]];
        assert!(build_variant(Variant::Smcae, xs.view(), xr.view()).is_err());
    }

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("SMCAE_II".parse::<Variant>().unwrap(), Variant::SmcaeII);
        assert!("sae-iii".parse::<Variant>().is_err());
    }
}
