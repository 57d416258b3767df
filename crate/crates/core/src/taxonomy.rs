//! The closed 19-class cell/object taxonomy.
//!
//! Integer ids are fixed by declaration order and are what annotation files
//! and detector backends exchange.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Neutrophil,
    Metamyelocyte,
    Myelocyte,
    Promyelocyte,
    Blast,
    Erythroblast,
    MegakaryocyteNucleus,
    Lymphocyte,
    Monocyte,
    PlasmaCell,
    Eosinophil,
    Basophil,
    Megakaryocyte,
    Debris,
    Histiocyte,
    MastCell,
    Platelet,
    PlateletClump,
    OtherCell,
}

use CellClass::*;

impl CellClass {
    pub const COUNT: usize = 19;

    pub const ALL: [CellClass; 19] = [
        Neutrophil,
        Metamyelocyte,
        Myelocyte,
        Promyelocyte,
        Blast,
        Erythroblast,
        MegakaryocyteNucleus,
        Lymphocyte,
        Monocyte,
        PlasmaCell,
        Eosinophil,
        Basophil,
        Megakaryocyte,
        Debris,
        Histiocyte,
        MastCell,
        Platelet,
        PlateletClump,
        OtherCell,
    ];

    /// Classes entering the convergence vector and the NDC percentages.
    pub const NDC: [CellClass; 12] = [
        Neutrophil,
        Metamyelocyte,
        Myelocyte,
        Promyelocyte,
        Blast,
        Erythroblast,
        Lymphocyte,
        Monocyte,
        PlasmaCell,
        Eosinophil,
        Basophil,
        Megakaryocyte,
    ];

    /// Classes compared against manual differential counts.
    pub const MANUAL_NDC: [CellClass; 10] = [
        Neutrophil,
        Metamyelocyte,
        Myelocyte,
        Promyelocyte,
        Blast,
        Lymphocyte,
        Monocyte,
        Eosinophil,
        PlasmaCell,
        Erythroblast,
    ];

    /// Detection evaluation set (basophil, mast cell and other cell are too
    /// rare or too heterogeneous to score).
    pub const EVALUATED: [CellClass; 16] = [
        Neutrophil,
        Metamyelocyte,
        Myelocyte,
        Promyelocyte,
        Blast,
        Erythroblast,
        MegakaryocyteNucleus,
        Lymphocyte,
        Monocyte,
        PlasmaCell,
        Eosinophil,
        Megakaryocyte,
        Debris,
        Histiocyte,
        Platelet,
        PlateletClump,
    ];

    /// Numerator classes of the myeloid-to-erythroid ratio.
    pub const MYELOID: [CellClass; 6] =
        [Blast, Promyelocyte, Myelocyte, Metamyelocyte, Neutrophil, Eosinophil];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u32) -> Option<CellClass> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Neutrophil => "neutrophil",
            Metamyelocyte => "metamyelocyte",
            Myelocyte => "myelocyte",
            Promyelocyte => "promyelocyte",
            Blast => "blast",
            Erythroblast => "erythroblast",
            MegakaryocyteNucleus => "megakaryocyte_nucleus",
            Lymphocyte => "lymphocyte",
            Monocyte => "monocyte",
            PlasmaCell => "plasma_cell",
            Eosinophil => "eosinophil",
            Basophil => "basophil",
            Megakaryocyte => "megakaryocyte",
            Debris => "debris",
            Histiocyte => "histiocyte",
            MastCell => "mast_cell",
            Platelet => "platelet",
            PlateletClump => "platelet_clump",
            OtherCell => "other_cell",
        }
    }

    pub fn is_ndc(self) -> bool {
        Self::NDC.contains(&self)
    }
}

impl fmt::Display for CellClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown cell class name `{0}`")]
pub struct UnknownClassName(pub String);

impl FromStr for CellClass {
    type Err = UnknownClassName;

    /// Accepts canonical snake_case names as well as the spaced, capitalised
    /// labels annotation tools tend to write ("Plasma cell").
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let normalized: String = s
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
            .collect();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == normalized)
            .ok_or_else(|| UnknownClassName(s.to_string()))
    }
}

/// Dense per-class table indexed by class id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ClassCounts(pub [u64; CellClass::COUNT]);

impl ClassCounts {
    pub fn get(&self, class: CellClass) -> u64 {
        self.0[class.index()]
    }

    pub fn add(&mut self, class: CellClass, n: u64) {
        self.0[class.index()] += n;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn subtotal(&self, classes: &[CellClass]) -> u64 {
        classes.iter().map(|&c| self.get(c)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellClass, u64)> + '_ {
        CellClass::ALL.iter().map(move |&c| (c, self.get(c)))
    }

    pub fn merged(&self, other: &ClassCounts) -> ClassCounts {
        let mut out = *self;
        for (o, v) in out.0.iter_mut().zip(other.0.iter()) {
            *o += v;
        }
        out
    }
}

impl Serialize for ClassCounts {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(CellClass::COUNT))?;
        for (class, n) in self.iter() {
            map.serialize_entry(class.name(), &n)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ClassCounts {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = std::collections::BTreeMap::<String, u64>::deserialize(deserializer)?;
        let mut counts = ClassCounts::default();
        for (name, n) in raw {
            let class: CellClass = name.parse().map_err(serde::de::Error::custom)?;
            counts.add(class, n);
        }
        Ok(counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_follow_declaration_order() {
        for (i, c) in CellClass::ALL.iter().enumerate() {
            assert_eq!(c.id() as usize, i);
            assert_eq!(CellClass::from_id(i as u32), Some(*c));
        }
        assert_eq!(CellClass::from_id(4), Some(Blast));
        assert_eq!(CellClass::from_id(19), None);
    }

    #[test]
    fn names_parse_back() {
        for c in CellClass::ALL {
            assert_eq!(c.name().parse::<CellClass>().unwrap(), c);
        }
        assert_eq!("Plasma cell".parse::<CellClass>().unwrap(), PlasmaCell);
        assert!("granulocyte".parse::<CellClass>().is_err());
    }

    #[test]
    fn subsets_have_expected_sizes() {
        assert_eq!(CellClass::NDC.len(), 12);
        assert_eq!(CellClass::MANUAL_NDC.len(), 10);
        assert_eq!(CellClass::EVALUATED.len(), 16);
        assert!(!CellClass::EVALUATED.contains(&Basophil));
        assert!(!CellClass::EVALUATED.contains(&MastCell));
        assert!(!CellClass::EVALUATED.contains(&OtherCell));
    }

    #[test]
    fn counts_serialize_by_name() {
        let mut c = ClassCounts::default();
        c.add(Blast, 3);
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"blast\":3"));
        let back: ClassCounts = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
