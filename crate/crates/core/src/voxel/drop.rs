use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::SparseVoxelTensor;
use crate::boxes::GroundTruthBox;
use crate::error::{Error, Result};

/// Removes `floor(fraction * eligible)` voxels chosen uniformly at random.
///
/// With `exclude`, voxels whose column center lies inside any box are never
/// eligible. Boxes must be in the tensor's own BEV cell coordinates.
pub fn random_drop(
    t: &SparseVoxelTensor,
    fraction: f64,
    seed: u64,
    exclude: Option<&[GroundTruthBox]>,
) -> Result<SparseVoxelTensor> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!(
            "drop fraction must be in [0, 1], got {fraction}"
        )));
    }
    let eligible: Vec<usize> = t
        .coords()
        .iter()
        .enumerate()
        .filter(|(_, c)| match exclude {
            Some(boxes) => !boxes.iter().any(|b| b.contains_column(**c)),
            None => true,
        })
        .map(|(i, _)| i)
        .collect();
    let n_drop = (fraction * eligible.len() as f64).floor() as usize;
    if n_drop == 0 {
        return Ok(t.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dropped = vec![false; t.len()];
    for k in rand::seq::index::sample(&mut rng, eligible.len(), n_drop) {
        dropped[eligible[k]] = true;
    }
    Ok(t.retain_rows(|i, _| !dropped[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::Coord3;

    fn line(n: i32) -> SparseVoxelTensor {
        let coords: Vec<Coord3> = (0..n).map(|i| Coord3::new(i, 0, 0)).collect();
        let feats = (0..n).map(|i| i as f32).collect();
        SparseVoxelTensor::new(coords, feats, 1).unwrap()
    }

    #[test]
    fn zero_and_full() {
        let t = line(50);
        assert_eq!(random_drop(&t, 0.0, 1, None).unwrap(), t);
        assert!(random_drop(&t, 1.0, 1, None).unwrap().is_empty());
        assert!(random_drop(&t, 1.5, 1, None).is_err());
    }

    #[test]
    fn exclusion_counts() {
        let t = line(100);
        // covers columns x = 0..=19 on row y = 0
        let b = GroundTruthBox::new([9.5, 0.0], [10.0, 0.5], 0.0);
        let inside = t.coords().iter().filter(|c| b.contains_column(**c)).count();
        assert_eq!(inside, 20);
        let out = random_drop(&t, 0.3, 9, Some(&[b])).unwrap();
        assert_eq!(out.len(), 100 - (0.3f64 * 80.0).floor() as usize);
        assert_eq!(out.len(), 76);
        for x in 0..20 {
            assert!(out.coords().contains(&Coord3::new(x, 0, 0)));
        }
    }

    #[test]
    fn seeded_reproducible() {
        let t = line(200);
        let a = random_drop(&t, 0.37, 42, None).unwrap();
        let b = random_drop(&t, 0.37, 42, None).unwrap();
        assert_eq!(a, b);
        let c = random_drop(&t, 0.37, 43, None).unwrap();
        assert_ne!(a, c);
    }
}
