//! Conversions between `ndarray` images and torch tensors.

use ndarray::{Array2, Array3, Array4};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

pub fn from_array3(a: &Array3<f32>) -> Tensor {
    let (c, h, w) = a.dim();
    let data: Vec<f32> = a.iter().copied().collect();
    Tensor::from_slice(&data).view([c as i64, h as i64, w as i64])
}

pub fn from_array2(a: &Array2<f32>) -> Tensor {
    let (h, w) = a.dim();
    let data: Vec<f32> = a.iter().copied().collect();
    Tensor::from_slice(&data).view([h as i64, w as i64])
}

/// Stack `(C, H, W)` arrays into an `(N, C, H, W)` float tensor.
pub fn batch3(items: &[&Array3<f32>]) -> Tensor {
    let parts: Vec<Tensor> = items.iter().map(|a| from_array3(a)).collect();
    Tensor::stack(&parts, 0)
}

/// Stack `(H, W)` greyscale arrays into `(N, 1, H, W)`.
pub fn batch2(items: &[&Array2<f32>]) -> Tensor {
    let parts: Vec<Tensor> = items.iter().map(|a| from_array2(a).unsqueeze(0)).collect();
    Tensor::stack(&parts, 0)
}

pub fn to_array3(t: &Tensor) -> Result<Array3<f32>> {
    let size = t.size();
    if size.len() != 3 {
        return Err(Error::arg(format!("expected a rank-3 tensor, got {size:?}")));
    }
    let data: Vec<f32> = Vec::try_from(&t.to_kind(Kind::Float).contiguous().view([-1]))?;
    Array3::from_shape_vec((size[0] as usize, size[1] as usize, size[2] as usize), data)
        .map_err(|e| Error::arg(e.to_string()))
}

pub fn to_array4(t: &Tensor) -> Result<Array4<f32>> {
    let size = t.size();
    if size.len() != 4 {
        return Err(Error::arg(format!("expected a rank-4 tensor, got {size:?}")));
    }
    let data: Vec<f32> = Vec::try_from(&t.to_kind(Kind::Float).contiguous().view([-1]))?;
    let dims = (size[0] as usize, size[1] as usize, size[2] as usize, size[3] as usize);
    Array4::from_shape_vec(dims, data).map_err(|e| Error::arg(e.to_string()))
}

pub fn to_vec_f64(t: &Tensor) -> Result<Vec<f64>> {
    Ok(Vec::try_from(&t.to_kind(Kind::Double).contiguous().view([-1]))?)
}

pub fn scalar(t: &Tensor) -> f64 {
    t.double_value(&[])
}

/// Whether every element is finite.
pub fn all_finite(t: &Tensor) -> bool {
    t.isfinite().all().int64_value(&[]) != 0
}
