use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Atrium {
    Ra,
    La,
}

impl Atrium {
    pub fn other(self) -> Atrium {
        match self {
            Atrium::Ra => Atrium::La,
            Atrium::La => Atrium::Ra,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Endo,
    Epi,
    Through,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Wall,
    Svc,
    Ivc,
    Tv,
    Cs,
    Raa,
    Ct,
    Pm,
    San,
    Bb,
    FoRim,
    Mv,
    Rpv,
    Rspv,
    Ripv,
    Lpv,
    Lspv,
    Lipv,
    Laa,
}

impl Structure {
    pub const ALL: [Structure; 19] = [
        Structure::Wall,
        Structure::Svc,
        Structure::Ivc,
        Structure::Tv,
        Structure::Cs,
        Structure::Raa,
        Structure::Ct,
        Structure::Pm,
        Structure::San,
        Structure::Bb,
        Structure::FoRim,
        Structure::Mv,
        Structure::Rpv,
        Structure::Rspv,
        Structure::Ripv,
        Structure::Lpv,
        Structure::Lspv,
        Structure::Lipv,
        Structure::Laa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Structure::Wall => "wall",
            Structure::Svc => "svc",
            Structure::Ivc => "ivc",
            Structure::Tv => "tv",
            Structure::Cs => "cs",
            Structure::Raa => "raa",
            Structure::Ct => "ct",
            Structure::Pm => "pm",
            Structure::San => "san",
            Structure::Bb => "bb",
            Structure::FoRim => "fo_rim",
            Structure::Mv => "mv",
            Structure::Rpv => "rpv",
            Structure::Rspv => "rspv",
            Structure::Ripv => "ripv",
            Structure::Lpv => "lpv",
            Structure::Lspv => "lspv",
            Structure::Lipv => "lipv",
            Structure::Laa => "laa",
        }
    }

    /// Tissue-bearing structures that terminate at a mesh hole.
    pub fn is_orifice(self) -> bool {
        matches!(
            self,
            Structure::Svc
                | Structure::Ivc
                | Structure::Tv
                | Structure::Cs
                | Structure::Mv
                | Structure::Rpv
                | Structure::Rspv
                | Structure::Ripv
                | Structure::Lpv
                | Structure::Lspv
                | Structure::Lipv
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub name: String,
    pub value: u16,
    pub atrium: Atrium,
    pub layer: Layer,
    pub structure: Structure,
}

/// Bijection between integer element tags and anatomical meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCatalog {
    entries: Vec<LabelEntry>,
    #[serde(skip)]
    by_value: BTreeMap<u16, usize>,
    #[serde(skip)]
    by_key: BTreeMap<(Atrium, Structure, Layer), usize>,
}

impl LabelCatalog {
    pub fn new(entries: Vec<LabelEntry>) -> Result<Self> {
        let mut by_value = BTreeMap::new();
        let mut by_key = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if by_value.insert(e.value, i).is_some() {
                return Err(Error::Catalog(format!("duplicate tag value {}", e.value)));
            }
            if by_key.insert((e.atrium, e.structure, e.layer), i).is_some() {
                return Err(Error::Catalog(format!("duplicate entry for `{}`", e.name)));
            }
        }
        Ok(LabelCatalog { entries, by_value, by_key })
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn entry(&self, value: u16) -> Option<&LabelEntry> {
        self.by_value.get(&value).map(|&i| &self.entries[i])
    }

    pub fn value(&self, atrium: Atrium, structure: Structure, layer: Layer) -> Option<u16> {
        self.by_key.get(&(atrium, structure, layer)).map(|&i| self.entries[i].value)
    }

    pub fn require(&self, atrium: Atrium, structure: Structure, layer: Layer) -> Result<u16> {
        self.value(atrium, structure, layer).ok_or_else(|| {
            Error::Catalog(format!("no tag for {atrium:?}/{}/{layer:?}", structure.name()))
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            entries: Vec<LabelEntry>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        Self::new(raw.entries)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}

impl Default for LabelCatalog {
    fn default() -> Self {
        let mut entries = Vec::new();
        for (ai, atrium) in [Atrium::Ra, Atrium::La].into_iter().enumerate() {
            for (si, s) in Structure::ALL.into_iter().enumerate() {
                for (li, layer) in [Layer::Endo, Layer::Epi, Layer::Through].into_iter().enumerate() {
                    let prefix = if atrium == Atrium::Ra { "ra" } else { "la" };
                    let suffix = match layer {
                        Layer::Endo => "endo",
                        Layer::Epi => "epi",
                        Layer::Through => "through",
                    };
                    entries.push(LabelEntry {
                        name: format!("{prefix}_{}_{suffix}", s.name()),
                        value: (1000 * (ai + 1) + 10 * (si + 1) + li + 1) as u16,
                        atrium,
                        layer,
                        structure: s,
                    });
                }
            }
        }
        LabelCatalog::new(entries).expect("default catalog is a bijection")
    }
}
