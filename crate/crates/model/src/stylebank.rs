//! Per-writer latent style vectors.

use rand::Rng;
use tch::{nn, Kind, Tensor};

use crate::convert::tensor_to_f64;
use crate::error::{Error, Result};
use crate::layers::Init;

/// A point in style space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStyleVector {
    pub values: Vec<f32>,
}

impl LatentStyleVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("style vector has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Copy with element `k` set to `v` clamped into `bounds`.
    pub fn set_element(&self, k: usize, v: f32, bounds: &StyleBounds) -> Result<Self> {
        if k >= self.dim() {
            return Err(Error::InvalidArgument(format!(
                "element {k} out of range for dimension {}",
                self.dim()
            )));
        }
        bounds.check_dim(self.dim())?;
        let mut out = self.clone();
        out.values[k] = v.clamp(bounds.lo[k], bounds.hi[k]);
        Ok(out)
    }

    /// `[1, d]` tensor of the given kind.
    pub fn to_tensor(&self, kind: Kind) -> Tensor {
        Tensor::from_slice(&self.values).view([1, -1]).to_kind(kind)
    }
}

/// `(1 - t) a + t b`; the endpoints return exact copies.
pub fn interpolate(a: &LatentStyleVector, b: &LatentStyleVector, t: f64) -> Result<LatentStyleVector> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t must lie in [0, 1], got {t}")));
    }
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| ((1.0 - t) * x as f64 + t * y as f64) as f32)
        .collect();
    Ok(LatentStyleVector { values })
}

/// Per-dimension minimum and maximum over the stored writers.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleBounds {
    pub lo: Vec<f32>,
    pub hi: Vec<f32>,
}

impl StyleBounds {
    fn check_dim(&self, d: usize) -> Result<()> {
        if self.lo.len() != d {
            return Err(Error::Shape(format!(
                "bounds have dimension {}, vector has {d}",
                self.lo.len()
            )));
        }
        Ok(())
    }

    pub fn clamp(&self, z: &LatentStyleVector) -> Result<LatentStyleVector> {
        self.check_dim(z.dim())?;
        let values = z
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| v.clamp(self.lo[k], self.hi[k]))
            .collect();
        Ok(LatentStyleVector { values })
    }

    pub fn midpoint(&self) -> Vec<f32> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Independent uniform draw in every dimension.
    pub fn sample(&self, rng: &mut impl Rng) -> LatentStyleVector {
        let values = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| if l < h { rng.random_range(l..=h) } else { l })
            .collect();
        LatentStyleVector { values }
    }
}

/// A trainable `d x n` table, one column per writer.
#[derive(Debug)]
pub struct StyleBank {
    pub table: Tensor,
    dim: usize,
    writers: usize,
}

impl StyleBank {
    pub fn new(path: &nn::Path, init: &mut Init, dim: usize, writers: usize) -> Result<Self> {
        if dim == 0 || writers == 0 {
            return Err(Error::InvalidArgument(
                "style bank needs a positive dimension and at least one writer".into(),
            ));
        }
        let table = path.var_copy("table", &init.normal(&[dim as i64, writers as i64], 0.02));
        Ok(Self { table, dim, writers })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.writers
    }

    pub fn is_empty(&self) -> bool {
        self.writers == 0
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.writers {
            return Err(Error::InvalidArgument(format!(
                "writer index {index} out of range for {} writers",
                self.writers
            )));
        }
        Ok(())
    }

    pub fn lookup(&self, index: usize) -> Result<LatentStyleVector> {
        self.check_index(index)?;
        let col = self.table.detach().select(1, index as i64).to_kind(Kind::Float);
        Ok(LatentStyleVector {
            values: Vec::<f32>::try_from(&col.contiguous())?,
        })
    }

    /// Differentiable `[B, d]` gather of the given writers' columns.
    pub fn select(&self, indices: &[usize]) -> Result<Tensor> {
        for &i in indices {
            self.check_index(i)?;
        }
        let idx: Vec<i64> = indices.iter().map(|&i| i as i64).collect();
        Ok(self.table.index_select(1, &Tensor::from_slice(&idx)).transpose(0, 1))
    }

    pub fn bounds(&self) -> Result<StyleBounds> {
        let t = self.table.detach();
        let lo = tensor_to_f64(&t.amin([1], false))?;
        let hi = tensor_to_f64(&t.amax([1], false))?;
        Ok(StyleBounds {
            lo: lo.into_iter().map(|v| v as f32).collect(),
            hi: hi.into_iter().map(|v| v as f32).collect(),
        })
    }

    pub fn sample_style(&self, rng: &mut impl Rng) -> Result<LatentStyleVector> {
        Ok(self.bounds()?.sample(rng))
    }

    /// Every column as an f32 matrix, writer-major.
    pub fn columns(&self) -> Result<Vec<LatentStyleVector>> {
        (0..self.writers).map(|i| self.lookup(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tch::nn::VarStore;
    use tch::Device;

    fn bank(n: usize) -> (VarStore, StyleBank) {
        let vs = VarStore::new(Device::Cpu);
        let b = StyleBank::new(&vs.root(), &mut Init::new(9), 4, n).unwrap();
        (vs, b)
    }

    #[test]
    fn lookup_and_range() {
        let (_vs, b) = bank(2);
        assert_eq!(b.lookup(1).unwrap(), b.lookup(1).unwrap());
        assert!(b.lookup(2).is_err());
        let sel = b.select(&[1, 0]).unwrap();
        assert_eq!(sel.size(), vec![2, 4]);
    }

    #[test]
    fn single_writer_sampling_is_point_mass() {
        let (_vs, b) = bank(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let col = b.lookup(0).unwrap();
        for _ in 0..10 {
            assert_eq!(b.sample_style(&mut rng).unwrap(), col);
        }
    }

    #[test]
    fn set_element_clamps_and_preserves() {
        let (_vs, b) = bank(3);
        let bounds = b.bounds().unwrap();
        let z = b.lookup(0).unwrap();
        let mid = 0.5 * (bounds.lo[2] + bounds.hi[2]);
        let inside = z.set_element(2, mid, &bounds).unwrap();
        assert_eq!(inside.values[2], mid);
        let above = z.set_element(2, 100.0, &bounds).unwrap();
        assert_eq!(above.values[2], bounds.hi[2]);
        for k in [0, 1, 3] {
            assert_eq!(above.values[k].to_bits(), z.values[k].to_bits());
        }
        assert!(z.set_element(4, 0.0, &bounds).is_err());
    }

    #[test]
    fn interpolation_endpoints() {
        let a = LatentStyleVector::new(vec![0.1, -0.3]).unwrap();
        let b = LatentStyleVector::new(vec![0.7, 0.3]).unwrap();
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap(), b);
        let m = interpolate(&a, &b, 0.5).unwrap();
        assert!((m.values[0] - 0.4).abs() < 1e-7 && m.values[1].abs() < 1e-7);
        assert!(interpolate(&a, &b, 1.5).is_err());
    }

    #[test]
    fn uniform_box_mean() {
        let bounds = StyleBounds {
            lo: vec![0.0; 5],
            hi: vec![2.0; 5],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sums = [0.0f64; 5];
        for _ in 0..10_000 {
            for (s, v) in sums.iter_mut().zip(bounds.sample(&mut rng).values) {
                *s += v as f64;
            }
        }
        for s in sums {
            let mean = s / 10_000.0;
            assert!((0.95..=1.05).contains(&mean), "{mean}");
        }
    }
}
