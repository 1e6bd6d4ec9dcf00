use rand::Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::jpeg_sim::{self, CompressionClassRegistry};

/// `-1`: both patches share a compression history; `+1`: they differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairLabel {
    Same,
    Different,
}

impl PairLabel {
    pub fn value(self) -> i8 {
        match self {
            PairLabel::Same => -1,
            PairLabel::Different => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub k1: GrayImage,
    pub k2: GrayImage,
    pub label: PairLabel,
    pub class1: String,
    pub class2: String,
}

/// Draws an uncompressed crop position uniformly.
fn random_crop<R: Rng + ?Sized>(src: &GrayImage, crop: usize, rng: &mut R) -> Result<GrayImage> {
    let x = rng.random_range(0..=src.width() - crop);
    let y = rng.random_range(0..=src.height() - crop);
    src.crop(x, y, crop, crop)
}

/// Builds one training pair from `source`.
///
/// Both crops are taken before compression so the 8x8 block grid is aligned
/// with the patch. `crop` must be a multiple of 8.
pub fn make_pair<R: Rng + ?Sized>(
    source: &GrayImage,
    registry: &CompressionClassRegistry,
    crop: usize,
    same_probability: f64,
    rng: &mut R,
) -> Result<PatchPair> {
    if crop == 0 || crop % 8 != 0 {
        return Err(Error::invalid(format!("crop size {crop} is not a positive multiple of 8")));
    }
    if source.width() < crop || source.height() < crop {
        return Err(Error::invalid(format!(
            "source {}x{} smaller than the {crop}x{crop} crop",
            source.width(),
            source.height()
        )));
    }
    if registry.len() < 2 {
        return Err(Error::invalid("pair sampling needs at least two compression classes"));
    }
    if !(0.0..=1.0).contains(&same_probability) {
        return Err(Error::invalid("same-history probability must be in [0, 1]"));
    }
    let tables = registry.tables();
    let c1 = rng.random_range(0..tables.len());
    let same = rng.random_bool(same_probability);
    let c2 = if same {
        c1
    } else {
        // uniform over the other classes
        let r = rng.random_range(0..tables.len() - 1);
        if r >= c1 {
            r + 1
        } else {
            r
        }
    };
    let a = random_crop(source, crop, rng)?;
    let b = random_crop(source, crop, rng)?;
    Ok(PatchPair {
        k1: jpeg_sim::compress(&a, &tables[c1])?,
        k2: jpeg_sim::compress(&b, &tables[c2])?,
        label: if same { PairLabel::Same } else { PairLabel::Different },
        class1: tables[c1].label().to_string(),
        class2: tables[c2].label().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn source() -> GrayImage {
        GrayImage::from_fn(64, 56, |x, y| ((x * 37 + y * 91) % 256) as f64)
    }

    #[test]
    fn forced_different_branch() {
        let reg = CompressionClassRegistry::from_qfs(&[30, 90]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = make_pair(&source(), &reg, 48, 0.0, &mut rng).unwrap();
            assert_ne!(p.class1, p.class2);
            assert_eq!(p.label.value(), 1);
        }
        let p = make_pair(&source(), &reg, 48, 1.0, &mut rng).unwrap();
        assert_eq!(p.class1, p.class2);
        assert_eq!(p.label.value(), -1);
    }

    #[test]
    fn same_fraction_concentrates() {
        let reg = CompressionClassRegistry::from_qfs(&[30, 50, 90]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let src = GrayImage::filled(48, 48, 100.0);
        let same = (0..10_000)
            .filter(|_| {
                make_pair(&src, &reg, 48, 0.5, &mut rng).unwrap().label == PairLabel::Same
            })
            .count();
        let frac = same as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "{frac}");
    }

    #[test]
    fn replay_is_identical() {
        let reg = CompressionClassRegistry::standard();
        let a = make_pair(&source(), &reg, 48, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = make_pair(&source(), &reg, 48, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let reg = CompressionClassRegistry::from_qfs(&[30, 90]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let small = GrayImage::filled(40, 64, 0.0);
        assert!(matches!(
            make_pair(&small, &reg, 48, 0.5, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
        let one = CompressionClassRegistry::from_qfs(&[30]).unwrap();
        assert!(make_pair(&source(), &one, 48, 0.5, &mut rng).is_err());
    }
}
