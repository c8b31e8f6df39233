// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringMethod {
    LinearMarker,
    CentroidPlusShape,
    ShapeOnly,
    GrassmannShape,
    CentroidPlusGrassmannShape,
    CentroidPlusRotation,
    ProcrustesRotation,
    SphericalMarker,
    EdgeDose,
    HammingPath,
    RandomRotation,
    RandomGrassmann,
    RandomGrassmannMatched,
    EqualNormNoise,
    CentroidOnly,
    RandomCentroid,
    CentroidPlusGrassmannControl,
    GrassmannRotationOnly,
    GrassmannBasisPreserve,
    ShapePermSameSite,
    ShapeReflectionSameSite,
    ShapeCrossPromptSameSite,
    ShapeCrossPromptCorruptSameSite,
    CleanDeltaWrongSite,
}

use SteeringMethod::*;

impl SteeringMethod {
    pub const ALL: [SteeringMethod; 24] = [
        LinearMarker,
        CentroidPlusShape,
        ShapeOnly,
        GrassmannShape,
        CentroidPlusGrassmannShape,
        CentroidPlusRotation,
        ProcrustesRotation,
        SphericalMarker,
        EdgeDose,
        HammingPath,
        RandomRotation,
        RandomGrassmann,
        RandomGrassmannMatched,
        EqualNormNoise,
        CentroidOnly,
        RandomCentroid,
        CentroidPlusGrassmannControl,
        GrassmannRotationOnly,
        GrassmannBasisPreserve,
        ShapePermSameSite,
        ShapeReflectionSameSite,
        ShapeCrossPromptSameSite,
        ShapeCrossPromptCorruptSameSite,
        CleanDeltaWrongSite,
    ];

    /// The main steering table's 19 method rows.
    pub const DEFAULT: [SteeringMethod; 19] = [
        LinearMarker,
        CentroidPlusShape,
        ShapeOnly,
        GrassmannShape,
        CentroidPlusGrassmannShape,
        CentroidPlusRotation,
        ProcrustesRotation,
        SphericalMarker,
        EdgeDose,
        HammingPath,
        RandomRotation,
        RandomGrassmann,
        RandomGrassmannMatched,
        EqualNormNoise,
        CentroidOnly,
        RandomCentroid,
        CentroidPlusGrassmannControl,
        GrassmannRotationOnly,
        GrassmannBasisPreserve,
    ];

    /// Methods of the site-and-ordering audit.
    pub const SITE_ORDER: [SteeringMethod; 8] = [
        ShapeOnly,
        ShapeCrossPromptSameSite,
        ShapeCrossPromptCorruptSameSite,
        ShapePermSameSite,
        ShapeReflectionSameSite,
        CleanDeltaWrongSite,
        CentroidOnly,
        EqualNormNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LinearMarker => "linear_marker",
            CentroidPlusShape => "centroid_plus_shape",
            ShapeOnly => "shape_only",
            GrassmannShape => "grassmann_shape",
            CentroidPlusGrassmannShape => "centroid_plus_grassmann_shape",
            CentroidPlusRotation => "centroid_plus_rotation",
            ProcrustesRotation => "procrustes_rotation",
            SphericalMarker => "spherical_marker",
            EdgeDose => "edge_dose",
            HammingPath => "hamming_path",
            RandomRotation => "random_rotation",
            RandomGrassmann => "random_grassmann",
            RandomGrassmannMatched => "random_grassmann_matched",
            EqualNormNoise => "equal_norm_noise",
            CentroidOnly => "centroid_only",
            RandomCentroid => "random_centroid",
            CentroidPlusGrassmannControl => "centroid_plus_grassmann_control",
            GrassmannRotationOnly => "grassmann_rotation_only",
            GrassmannBasisPreserve => "grassmann_basis_preserve",
            ShapePermSameSite => "shape_perm_same_site",
            ShapeReflectionSameSite => "shape_reflection_same_site",
            ShapeCrossPromptSameSite => "shape_cross_prompt_same_site",
            ShapeCrossPromptCorruptSameSite => "shape_cross_prompt_corrupt_same_site",
            CleanDeltaWrongSite => "clean_delta_wrong_site",
        }
    }

    pub fn needs_donor(self) -> bool {
        matches!(self, ShapeCrossPromptSameSite | ShapeCrossPromptCorruptSameSite)
    }

    pub fn patches_wrong_sites(self) -> bool {
        self == CleanDeltaWrongSite
    }
}

impl std::fmt::Display for SteeringMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SteeringMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown steering method {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_through_serde_and_parse() {
        for m in SteeringMethod::ALL {
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
            assert_eq!(m.name().parse::<SteeringMethod>().unwrap(), m);
        }
        assert_eq!(
            ShapeCrossPromptCorruptSameSite.to_string(),
            "shape_cross_prompt_corrupt_same_site"
        );
        let mut names: Vec<&str> = SteeringMethod::ALL.iter().map(|m| m.name()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 24);
    }
}
