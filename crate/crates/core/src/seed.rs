//! Seed bytes to flag selections.
//!
//! Each flag reads the byte(s) at its layout offset. Switches and the
//! enable byte of integer flags use `byte % 2`, so exactly half of all byte
//! values enable a flag. An enum with `k` values uses `byte % (k + 1)`:
//! zero leaves it off and `r` picks the `r`-th listed value. Bytes past the
//! end of the catalog are ignored; flags whose bytes are missing are off.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{render_flag, FlagCatalog, FlagKind, FlagState};

/// Raw genome mutated by a campaign. Any byte string is a valid seed.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(#[serde(with = "hex::serde")] pub Vec<u8>);

impl Seed {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({})", self.to_hex())
    }
}

impl From<Vec<u8>> for Seed {
    fn from(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }
}

/// Decoded per-flag states plus the command tokens they render to.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlagSelection {
    states: Vec<FlagState>,
    rendered: Vec<String>,
}

impl FlagSelection {
    /// Builds a selection from explicit states, rendering them against `catalog`.
    ///
    /// Panics if `states` does not match the catalog in length and kind.
    pub fn from_states(catalog: &FlagCatalog, states: Vec<FlagState>) -> Self {
        assert_eq!(states.len(), catalog.len(), "selection length must match catalog");
        let rendered = catalog
            .flags()
            .iter()
            .zip(&states)
            .flat_map(|(spec, &state)| render_flag(spec, state).expect("state valid for kind"))
            .collect();
        Self { states, rendered }
    }

    /// All flags off.
    pub fn empty(catalog: &FlagCatalog) -> Self {
        Self::from_states(catalog, vec![FlagState::Off; catalog.len()])
    }

    pub fn states(&self) -> &[FlagState] {
        &self.states
    }

    pub fn rendered(&self) -> &[String] {
        &self.rendered
    }

    pub fn is_selected(&self, index: usize) -> bool {
        self.states.get(index).is_some_and(|s| s.is_selected())
    }

    /// Catalog indices of every selected flag, ascending.
    pub fn selected_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_selected())
            .map(|(i, _)| i)
    }
}

/// Decodes `seed` against `catalog`. Pure and total.
pub fn map_seed(catalog: &FlagCatalog, seed: &Seed) -> FlagSelection {
    let bytes = seed.as_bytes();
    let states = catalog
        .flags()
        .iter()
        .zip(catalog.layout())
        .map(|(spec, span)| {
            let Some(&first) = bytes.get(span.offset) else {
                return FlagState::Off;
            };
            match &spec.kind {
                FlagKind::Switch => {
                    if first % 2 == 1 {
                        FlagState::On
                    } else {
                        FlagState::Off
                    }
                }
                FlagKind::Enum(values) => {
                    let r = first as usize % (values.len() + 1);
                    if r == 0 {
                        FlagState::Off
                    } else {
                        FlagState::Choice(r - 1)
                    }
                }
                FlagKind::Uint => match bytes.get(span.offset + 1) {
                    Some(&value) if first % 2 == 1 => FlagState::Value(value),
                    _ => FlagState::Off,
                },
            }
        })
        .collect();
    FlagSelection::from_states(catalog, states)
}
