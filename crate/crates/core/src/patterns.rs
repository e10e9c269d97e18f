//! Named sets of current patterns on the outer boundary.

use std::fmt;
use std::str::FromStr;

use crate::bem::CurrentPattern;
use crate::error::{Error, Result};
use crate::harmonics;
use crate::mesh::TriangleMesh;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PatternSet {
    /// The three degree-1 harmonics.
    Yl1,
    /// Degrees 1 and 2, eight patterns.
    #[default]
    Yl12,
    /// `g = cos(theta)`.
    SingleCos,
}

impl PatternSet {
    pub fn name(&self) -> &'static str {
        match self {
            PatternSet::Yl1 => "yl1",
            PatternSet::Yl12 => "yl12",
            PatternSet::SingleCos => "single-cos",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PatternSet::Yl1 => 3,
            PatternSet::Yl12 => 8,
            PatternSet::SingleCos => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Patterns sampled at the centroids of `sigma`, each with zero net current.
    pub fn build(&self, sigma: &TriangleMesh) -> Result<Vec<CurrentPattern>> {
        if let PatternSet::SingleCos = self {
            return Ok(vec![CurrentPattern::from_function(sigma, |p| p.z / p.norm())?]);
        }
        let degree = if *self == PatternSet::Yl1 { 1 } else { 2 };
        let count = harmonics::harmonic_count(degree);
        let mut table = vec![vec![0.0; sigma.len()]; count];
        let mut y = vec![0.0; count];
        for (i, p) in sigma.panels().iter().enumerate() {
            harmonics::evaluate(&p.centroid.normalize(), degree, &mut y);
            for k in 0..count {
                table[k][i] = y[k];
            }
        }
        table
            .into_iter()
            .map(|values| {
                let mean = values.iter().zip(sigma.panels()).map(|(g, p)| g * p.area).sum::<f64>() / sigma.total_area();
                CurrentPattern::new(values.into_iter().map(|g| g - mean).collect(), sigma)
            })
            .collect()
    }
}

impl fmt::Display for PatternSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "yl1" => Ok(PatternSet::Yl1),
            "yl12" => Ok(PatternSet::Yl12),
            "single-cos" => Ok(PatternSet::SingleCos),
            other => Err(Error::Parse(format!("unknown pattern set '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    #[test]
    fn sizes_and_names() {
        let sigma = icosphere(1.5, 2);
        for set in [PatternSet::Yl1, PatternSet::Yl12, PatternSet::SingleCos] {
            let patterns = set.build(&sigma).unwrap();
            assert_eq!(patterns.len(), set.len());
            assert!(patterns.iter().all(|p| p.len() == sigma.len()));
            assert_eq!(set.name().parse::<PatternSet>().unwrap(), set);
        }
        assert!("yl3".parse::<PatternSet>().is_err());
        assert_eq!(PatternSet::default(), PatternSet::Yl12);
    }
}
