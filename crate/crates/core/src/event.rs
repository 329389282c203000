//! Events over the coarse partition: subsets of coarse-atom indices.

use serde::{Deserialize, Serialize};

/// A subset of the coarse atoms, i.e. an element of the conditioning
/// algebra. Stored as a membership mask so that the universe size travels
/// with the event.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    mask: Vec<bool>,
}

impl Event {
    pub fn empty(n_atoms: usize) -> Self {
        Event { mask: vec![false; n_atoms] }
    }

    pub fn full(n_atoms: usize) -> Self {
        Event { mask: vec![true; n_atoms] }
    }

    pub fn from_indices(n_atoms: usize, indices: &[usize]) -> Self {
        let mut mask = vec![false; n_atoms];
        for &i in indices {
            assert!(i < n_atoms, "atom index {i} out of range for {n_atoms} atoms");
            mask[i] = true;
        }
        Event { mask }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Event { mask }
    }

    pub fn n_atoms(&self) -> usize {
        self.mask.len()
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.mask.get(atom).copied().unwrap_or(false)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.iter().all(|&m| !m)
    }

    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn complement(&self) -> Event {
        Event { mask: self.mask.iter().map(|&m| !m).collect() }
    }

    pub fn union(&self, other: &Event) -> Event {
        assert_eq!(self.n_atoms(), other.n_atoms());
        Event {
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a | b)
                .collect(),
        }
    }

    pub fn intersect(&self, other: &Event) -> Event {
        assert_eq!(self.n_atoms(), other.n_atoms());
        Event {
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a & b)
                .collect(),
        }
    }

    pub fn is_disjoint(&self, other: &Event) -> bool {
        self.intersect(other).is_empty()
    }

    /// True when `events` are pairwise disjoint and their union is the full
    /// index set.
    pub fn is_partition(events: &[Event], n_atoms: usize) -> bool {
        let mut seen = vec![false; n_atoms];
        for e in events {
            if e.n_atoms() != n_atoms {
                return false;
            }
            for i in e.indices() {
                if seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Serialize, Deserialize)]
struct EventRepr {
    n_atoms: usize,
    atoms: Vec<usize>,
}

impl Serialize for Event {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        EventRepr { n_atoms: self.n_atoms(), atoms: self.indices() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Event {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = EventRepr::deserialize(deserializer)?;
        for &i in &repr.atoms {
            if i >= repr.n_atoms {
                return Err(serde::de::Error::custom(format!(
                    "atom index {} out of range for {} atoms",
                    i, repr.n_atoms
                )));
            }
        }
        Ok(Event::from_indices(repr.n_atoms, &repr.atoms))
    }
}
