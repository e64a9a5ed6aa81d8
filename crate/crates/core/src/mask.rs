//! Binary retain-masks over the layers of a model.
//!
//! A mask is the coalition encoding of the layer game: bit `i` set means
//! layer `i` is kept. The canonical text form is a string of `0`/`1`
//! characters with layer 0 leftmost.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerState {
    On,
    Off,
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    /// Builds a mask from explicit bits. An empty bit vector is rejected.
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Mask { bits })
    }

    pub fn full(layer_count: usize) -> Self {
        assert!(layer_count > 0, "mask needs at least one layer");
        Mask {
            bits: vec![true; layer_count],
        }
    }

    pub fn empty(layer_count: usize) -> Self {
        assert!(layer_count > 0, "mask needs at least one layer");
        Mask {
            bits: vec![false; layer_count],
        }
    }

    /// Mask with exactly the given layers retained.
    pub fn from_retained(layer_count: usize, retained: &[usize]) -> Result<Self> {
        let mut mask = Mask::empty(layer_count);
        for &i in retained {
            mask.set(i, true)?;
        }
        Ok(mask)
    }

    /// Low `layer_count` bits of `code`, bit `i` of the integer being layer `i`.
    pub fn from_u64(layer_count: usize, code: u64) -> Self {
        assert!(layer_count > 0 && layer_count <= 64);
        Mask {
            bits: (0..layer_count).map(|i| code >> i & 1 == 1).collect(),
        }
    }

    pub fn to_u64(&self) -> Option<u64> {
        if self.bits.len() > 64 {
            return None;
        }
        Some(
            self.bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .fold(0u64, |acc, (i, _)| acc | 1 << i),
        )
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    /// Always false; masks have at least one layer.
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, layer: usize) -> Option<bool> {
        self.bits.get(layer).copied()
    }

    pub fn is_retained(&self, layer: usize) -> bool {
        self.bits.get(layer).copied().unwrap_or(false)
    }

    /// Number of retained layers.
    pub fn hamming_weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn retained(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn removed(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (!b).then_some(i))
    }

    fn set(&mut self, layer: usize, value: bool) -> Result<()> {
        let layer_count = self.bits.len();
        let bit = self.bits.get_mut(layer).ok_or(Error::IndexOutOfRange {
            index: layer,
            layer_count,
        })?;
        *bit = value;
        Ok(())
    }

    /// Copy of this mask with `layer` forced to `state`.
    pub fn apply_layer(&self, layer: usize, state: LayerState) -> Result<Mask> {
        let mut out = self.clone();
        out.set(layer, state == LayerState::On)?;
        Ok(out)
    }

    pub fn with_layer(&self, layer: usize) -> Result<Mask> {
        self.apply_layer(layer, LayerState::On)
    }

    pub fn without_layer(&self, layer: usize) -> Result<Mask> {
        self.apply_layer(layer, LayerState::Off)
    }

    pub(crate) fn ensure_len(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(Error::MaskLengthMismatch {
                expected,
                actual: self.len(),
            });
        }
        Ok(())
    }
}

pub fn mask_from_string(text: &str) -> Result<Mask> {
    text.parse()
}

impl FromStr for Mask {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        if text.is_empty() {
            return Err(Error::EmptyInput);
        }
        let bits = text
            .chars()
            .enumerate()
            .map(|(position, ch)| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::InvalidCharacter { ch, position }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mask { bits })
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self
            .bits
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask({self})")
    }
}

impl Serialize for Mask {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(s: &str) -> Mask {
        s.parse().unwrap()
    }

    #[test]
    fn parses_canonical_text() {
        let full = m("1111");
        assert_eq!(full.bits(), &[true, true, true, true]);
        assert_eq!(full.hamming_weight(), 4);

        let alt = m("1010");
        assert_eq!(alt.bits(), &[true, false, true, false]);
        assert_eq!(alt.hamming_weight(), 2);
    }

    #[test]
    fn rejects_bad_text() {
        assert!(matches!(
            mask_from_string("102"),
            Err(Error::InvalidCharacter { ch: '2', position: 2 })
        ));
        assert!(matches!(mask_from_string(""), Err(Error::EmptyInput)));
    }

    #[test]
    fn apply_layer_examples() {
        let base = m("1010");
        assert_eq!(base.apply_layer(1, LayerState::On).unwrap(), m("1110"));
        assert_eq!(base.apply_layer(0, LayerState::Off).unwrap(), m("0010"));
        assert_eq!(base.apply_layer(1, LayerState::Off).unwrap(), m("1010"));
        assert!(matches!(
            base.apply_layer(4, LayerState::On),
            Err(Error::IndexOutOfRange { index: 4, layer_count: 4 })
        ));
    }

    #[test]
    fn u64_codes_round_trip() {
        let mask = Mask::from_u64(5, 0b10011);
        assert_eq!(mask.to_string(), "11001");
        assert_eq!(mask.to_u64(), Some(0b10011));
    }

    #[test]
    fn serde_uses_text_form() {
        let json = serde_json::to_string(&m("0110")).unwrap();
        assert_eq!(json, "\"0110\"");
        let back: Mask = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m("0110"));
        assert!(serde_json::from_str::<Mask>("\"01x\"").is_err());
    }

    fn arb_mask() -> impl Strategy<Value = Mask> {
        prop::collection::vec(any::<bool>(), 1..80).prop_map(|bits| Mask::from_bits(bits).unwrap())
    }

    proptest! {
        #[test]
        fn text_round_trip(mask in arb_mask()) {
            prop_assert_eq!(mask_from_string(&mask.to_string()).unwrap(), mask);
        }

        #[test]
        fn apply_layer_is_idempotent(mask in arb_mask(), layer in 0usize..80, on in any::<bool>()) {
            let layer = layer % mask.len();
            let state = if on { LayerState::On } else { LayerState::Off };
            let once = mask.apply_layer(layer, state).unwrap();
            prop_assert_eq!(once.apply_layer(layer, state).unwrap(), once);
        }

        #[test]
        fn on_off_differ_by_one(mask in arb_mask(), layer in 0usize..80) {
            let layer = layer % mask.len();
            let on = mask.with_layer(layer).unwrap().hamming_weight();
            let off = mask.without_layer(layer).unwrap().hamming_weight();
            prop_assert_eq!(on - off, 1);
        }
    }
}
