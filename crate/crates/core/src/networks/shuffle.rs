//! Sub-pixel rearrangement between channel groups and spatial blocks.

use tch::Tensor;

use crate::error::{Error, Result};

fn with_batch(input: &Tensor) -> Result<(Tensor, bool)> {
    match input.dim() {
        3 => Ok((input.unsqueeze(0), true)),
        4 => Ok((input.shallow_clone(), false)),
        d => Err(Error::arg(format!("pixel shuffle expects rank 3 or 4, got rank {d}"))),
    }
}

/// `(…, c·r², h, w) → (…, c, h·r, w·r)` with
/// `out[c, y·r + dy, x·r + dx] = in[c·r² + dy·r + dx, y, x]`.
pub fn pixel_shuffle(input: &Tensor, r: i64) -> Result<Tensor> {
    if r < 1 {
        return Err(Error::arg(format!("upscale factor must be >= 1, got {r}")));
    }
    let (x, squeeze) = with_batch(input)?;
    let [n, channels, h, w] = <[i64; 4]>::try_from(x.size()).expect("rank 4");
    if channels % (r * r) != 0 {
        return Err(Error::arg(format!(
            "pixel shuffle: {channels} channels not divisible by r² = {}",
            r * r
        )));
    }
    let c = channels / (r * r);
    let out = x
        .view([n, c, r, r, h, w])
        .permute([0, 1, 4, 2, 5, 3])
        .reshape([n, c, h * r, w * r]);
    Ok(if squeeze { out.squeeze_dim(0) } else { out })
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(input: &Tensor, r: i64) -> Result<Tensor> {
    if r < 1 {
        return Err(Error::arg(format!("downscale factor must be >= 1, got {r}")));
    }
    let (x, squeeze) = with_batch(input)?;
    let [n, c, hr, wr] = <[i64; 4]>::try_from(x.size()).expect("rank 4");
    if hr % r != 0 || wr % r != 0 {
        return Err(Error::arg(format!("pixel unshuffle: {hr}x{wr} not divisible by {r}")));
    }
    let (h, w) = (hr / r, wr / r);
    let out = x
        .view([n, c, h, r, w, r])
        .permute([0, 1, 3, 5, 2, 4])
        .reshape([n, c * r * r, h, w]);
    Ok(if squeeze { out.squeeze_dim(0) } else { out })
}
