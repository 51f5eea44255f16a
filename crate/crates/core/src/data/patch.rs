use crate::error::{Error, Result};
use crate::tensor::{ClassMap, Real, Tensor};

/// Row-major sliding-window crops of an image stack (any rank ≥ 2, spatial
/// axes last) and its aligned `1×H×W` label.
pub fn patchify<T: Real>(
    images: &Tensor<T>,
    label: &ClassMap,
    patch: usize,
    stride: usize,
) -> Result<Vec<(Tensor<T>, ClassMap)>> {
    let rank = images.rank();
    if rank < 2 {
        return Err(Error::invalid_shape("patchify", "images need two spatial axes"));
    }
    let (h, w) = (images.shape()[rank - 2], images.shape()[rank - 1]);
    if label.shape() != [1, h, w] {
        return Err(Error::shape("patchify (images vs label)", images.shape(), &label.shape()));
    }
    if patch == 0 || stride == 0 {
        return Err(Error::InvalidArgument("patch and stride must be positive".into()));
    }
    if patch > h || patch > w {
        return Err(Error::InvalidArgument(format!("patch {patch} exceeds image {h}×{w}")));
    }
    let planes = images.len() / (h * w);
    let mut lead = images.shape()[..rank - 2].to_vec();
    lead.extend([patch, patch]);
    let mut out = Vec::new();
    for y0 in (0..=h - patch).step_by(stride) {
        for x0 in (0..=w - patch).step_by(stride) {
            let mut data = Vec::with_capacity(planes * patch * patch);
            for p in 0..planes {
                for y in y0..y0 + patch {
                    let row = (p * h + y) * w;
                    data.extend_from_slice(&images.data()[row + x0..row + x0 + patch]);
                }
            }
            let mut classes = Vec::with_capacity(patch * patch);
            for y in y0..y0 + patch {
                classes.extend_from_slice(&label.classes[y * w + x0..y * w + x0 + patch]);
            }
            out.push((Tensor::new(lead.clone(), data)?, ClassMap::new(1, patch, patch, classes)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiling_counts() {
        let img = Tensor::<f32>::from_fn([2, 3, 64, 64], |i| i as f32);
        let lab = ClassMap::new(1, 64, 64, (0..64 * 64).map(|i| (i % 2) as u32).collect()).unwrap();
        assert_eq!(patchify(&img, &lab, 32, 32).unwrap().len(), 4);
        assert_eq!(patchify(&img, &lab, 32, 16).unwrap().len(), 9);
        let whole = patchify(&img, &lab, 64, 7).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].0, img);
        assert_eq!(whole[0].1, lab);
        assert!(patchify(&img, &lab, 65, 1).is_err());
    }

    #[test]
    fn non_overlapping_patches_partition() {
        let img = Tensor::<f32>::from_fn([1, 4, 6], |i| i as f32);
        let lab = ClassMap::new(1, 4, 6, (0..24).collect()).unwrap();
        let parts = patchify(&img, &lab, 2, 2).unwrap();
        assert_eq!(parts.len(), 6);
        let mut seen: Vec<u32> = parts.iter().flat_map(|(_, l)| l.classes.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..24).collect::<Vec<_>>());
        for (t, l) in &parts {
            let as_img: Vec<u32> = t.data().iter().map(|&v| v as u32).collect();
            assert_eq!(as_img, l.classes, "image and label patches aligned");
        }
    }
}
