//! Dihedral (D4) patch augmentation: rotations and flips of the spatial
//! grid, spectra untouched.

use rand::Rng;

use super::CarenetError;
use crate::spectra::Patch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum D4 {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipHorizontal,
    FlipVertical,
    Transpose,
    AntiTranspose,
}

impl D4 {
    pub const ALL: [D4; 8] = [
        D4::Identity,
        D4::Rot90,
        D4::Rot180,
        D4::Rot270,
        D4::FlipHorizontal,
        D4::FlipVertical,
        D4::Transpose,
        D4::AntiTranspose,
    ];

    pub fn random<R: Rng>(rng: &mut R) -> D4 {
        D4::ALL[rng.gen_range(0..8)]
    }

    /// Source pixel for output pixel `(r, c)` in an `n × n` grid.
    pub fn source(self, r: usize, c: usize, n: usize) -> (usize, usize) {
        let m = n - 1;
        match self {
            D4::Identity => (r, c),
            D4::Rot90 => (c, m - r),
            D4::Rot180 => (m - r, m - c),
            D4::Rot270 => (m - c, r),
            D4::FlipHorizontal => (r, m - c),
            D4::FlipVertical => (m - r, c),
            D4::Transpose => (c, r),
            D4::AntiTranspose => (m - c, m - r),
        }
    }
}

pub fn apply_d4(patch: &Patch, t: D4) -> Patch {
    let (n, ch) = (patch.size, patch.channels);
    let mut data = vec![0.0f32; patch.data.len()];
    for r in 0..n {
        for c in 0..n {
            let (sr, sc) = t.source(r, c, n);
            data[(r * n + c) * ch..][..ch].copy_from_slice(patch.pixel(sr, sc));
        }
    }
    Patch {
        data,
        ..patch.clone()
    }
}

/// Applies one transform drawn uniformly from D4.
pub fn augment_patch<R: Rng>(patch: &Patch, rng: &mut R) -> Result<(Patch, D4), CarenetError> {
    if patch.size == 0 || patch.data.len() != patch.size * patch.size * patch.channels {
        return Err(CarenetError::Input(format!(
            "patch of {} values is not a square {}×{}×{} block",
            patch.data.len(),
            patch.size,
            patch.size,
            patch.channels
        )));
    }
    let t = D4::random(rng);
    Ok((apply_d4(patch, t), t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn patch(n: usize, ch: usize) -> Patch {
        Patch {
            size: n,
            channels: ch,
            data: (0..n * n * ch).map(|i| i as f32).collect(),
            origin: (0, 32),
            zero_count: 3,
            sample_id: "S".into(),
            patient_id: "P".into(),
        }
    }

    #[test]
    fn rot180_is_involution_and_group_closes() {
        let p = patch(5, 2);
        assert_eq!(apply_d4(&apply_d4(&p, D4::Rot180), D4::Rot180), p);
        assert_eq!(apply_d4(&apply_d4(&p, D4::Rot90), D4::Rot270), p);
        let mut seen: Vec<Vec<f32>> = D4::ALL.iter().map(|&t| apply_d4(&p, t).data).collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn spectra_multiset_preserved() {
        let p = patch(4, 3);
        let sorted = |q: &Patch| {
            let mut px: Vec<Vec<f32>> = q.data.chunks(3).map(|c| c.to_vec()).collect();
            px.sort_by(|a, b| a.partial_cmp(b).unwrap());
            px
        };
        for t in D4::ALL {
            let q = apply_d4(&p, t);
            assert_eq!(sorted(&q), sorted(&p));
            assert_eq!((q.origin, q.zero_count), (p.origin, p.zero_count));
        }
    }

    #[test]
    fn seeded_sequence_reproducible() {
        let p = patch(3, 1);
        let seq = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| augment_patch(&p, &mut rng).unwrap().1)
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(4), seq(4));
        let bad = Patch {
            data: vec![0.0; 5],
            ..p
        };
        assert!(augment_patch(&bad, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
