//! Discrete remappings J → I: the algebra behind rearrangements, copies,
//! deletions, weave permutations and flattening.
//!
//! A remapping is stored as the list of source indices, one per output slot,
//! together with an explicit codomain size (the empty-domain case would lose
//! it otherwise).

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Remapping {
    targets: Vec<usize>,
    cod_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RemappingClass {
    /// Every source slot used exactly once.
    Bijection,
    /// Every source slot used at most once (drops are fine, no copying).
    DeletionCompatible,
    /// Some source slot used more than once.
    General,
}

impl Remapping {
    pub fn new(targets: Vec<usize>, cod_size: usize) -> Result<Remapping> {
        if let Some(&bad) = targets.iter().find(|&&t| t >= cod_size) {
            return Err(Error::Domain(format!(
                "remapping target {bad} out of range for codomain size {cod_size}"
            )));
        }
        Ok(Remapping { targets, cod_size })
    }

    pub fn identity(n: usize) -> Remapping {
        Remapping { targets: (0..n).collect(), cod_size: n }
    }

    /// δⁿ: n output slots all drawing from a single source slot.
    pub fn copy(n: usize) -> Remapping {
        Remapping { targets: vec![0; n], cod_size: 1 }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn dom_size(&self) -> usize {
        self.targets.len()
    }

    pub fn cod_size(&self) -> usize {
        self.cod_size
    }

    pub fn is_identity(&self) -> bool {
        self.cod_size == self.targets.len() && self.targets.iter().enumerate().all(|(j, &t)| j == t)
    }

    /// Multiplicity with which source slot `i` is used.
    pub fn count(&self, i: usize) -> Result<usize> {
        if i >= self.cod_size {
            return Err(Error::Domain(format!(
                "slot {i} out of range for codomain size {}",
                self.cod_size
            )));
        }
        Ok(self.targets.iter().filter(|&&t| t == i).count())
    }

    /// Diagrammatic order: the rearrangement of `first` runs before the
    /// rearrangement of `then`, so the underlying functions compose the
    /// other way round: k ↦ first(then(k)).
    pub fn compose(first: &Remapping, then: &Remapping) -> Result<Remapping> {
        if then.cod_size != first.dom_size() {
            return Err(Error::Composition(format!(
                "remapping sizes disagree: second has codomain {}, first has domain {}",
                then.cod_size,
                first.dom_size()
            )));
        }
        Ok(Remapping {
            targets: then.targets.iter().map(|&k| first.targets[k]).collect(),
            cod_size: first.cod_size,
        })
    }

    /// Concatenates remappings segment by segment, offsetting each segment's
    /// sources by the codomain sizes before it.
    pub fn direct_sum(parts: &[Remapping]) -> Remapping {
        let mut targets = Vec::new();
        let mut cod_size = 0;
        for p in parts {
            targets.extend(p.targets.iter().map(|&t| t + cod_size));
            cod_size += p.cod_size;
        }
        Remapping { targets, cod_size }
    }

    /// Refines a remapping of segments into a remapping of the individual
    /// slots, given each source segment's length.
    pub fn flatten(&self, lengths: &[usize]) -> Result<Remapping> {
        if lengths.len() != self.cod_size {
            return Err(Error::Domain(format!(
                "flatten needs {} segment lengths, got {}",
                self.cod_size,
                lengths.len()
            )));
        }
        let mut starts = Vec::with_capacity(lengths.len());
        let mut total: usize = 0;
        for &l in lengths {
            starts.push(total);
            total = total.checked_add(l).ok_or(Error::Overflow("flatten segment lengths"))?;
        }
        let mut targets = Vec::new();
        for &s in &self.targets {
            for l in 0..lengths[s] {
                targets.push(starts[s] + l);
            }
        }
        Ok(Remapping { targets, cod_size: total })
    }

    pub fn classify(&self) -> RemappingClass {
        let mut counts = vec![0usize; self.cod_size];
        for &t in &self.targets {
            counts[t] += 1;
        }
        if counts.iter().all(|&c| c == 1) {
            RemappingClass::Bijection
        } else if counts.iter().all(|&c| c <= 1) {
            RemappingClass::DeletionCompatible
        } else {
            RemappingClass::General
        }
    }

    /// Inverse of a bijection.
    pub fn inverse(&self) -> Result<Remapping> {
        if self.classify() != RemappingClass::Bijection {
            return Err(Error::Domain("only bijections can be inverted".into()));
        }
        let mut targets = vec![0; self.cod_size];
        for (j, &t) in self.targets.iter().enumerate() {
            targets[t] = j;
        }
        Ok(Remapping { targets, cod_size: self.dom_size() })
    }
}
