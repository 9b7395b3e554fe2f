//! Contrast-limited adaptive histogram equalization.

use crate::imaging::GrayImage;

/// Tile `i` of `n` over a length `len` axis spans `[i*len/n, (i+1)*len/n)`.
fn tile_bounds(len: u32, n: u32) -> Vec<(usize, usize)> {
    (0..n)
        .map(|i| {
            let a = (u64::from(i) * u64::from(len) / u64::from(n)) as usize;
            let b = (u64::from(i + 1) * u64::from(len) / u64::from(n)) as usize;
            (a, b)
        })
        .collect()
}

/// For each coordinate on an axis: (lower tile, upper tile, upper weight),
/// interpolating between tile centers and clamping beyond the outer ones.
fn blend_taps(len: u32, tiles: &[(usize, usize)]) -> Vec<(usize, usize, f32)> {
    let centers: Vec<f32> = tiles
        .iter()
        .map(|&(a, b)| (a + b - 1) as f32 / 2.0)
        .collect();
    let last = centers.len() - 1;
    let mut seg = 0usize;
    (0..len as usize)
        .map(|p| {
            let p = p as f32;
            if p <= centers[0] {
                return (0, 0, 0.0);
            }
            if p >= centers[last] {
                return (last, last, 0.0);
            }
            while centers[seg + 1] < p {
                seg += 1;
            }
            let w = (p - centers[seg]) / (centers[seg + 1] - centers[seg]);
            (seg, seg + 1, w)
        })
        .collect()
}

/// Clipped, redistributed cumulative histogram scaled to [0, 255].
///
/// Bins are tile fractions and the clip is `clip_limit / 256` of the tile, so
/// tiles of unequal area with the same content share one mapping.
fn tile_lut(hist: &[u32; 256], area: usize, clip_limit: f64) -> [f32; 256] {
    let area_f = area as f64;
    let mut bins: [f64; 256] = std::array::from_fn(|i| f64::from(hist[i]) / area_f);
    if clip_limit > 0.0 {
        let clip = clip_limit / 256.0;
        let mut excess = 0.0;
        for b in bins.iter_mut() {
            if *b > clip {
                excess += *b - clip;
                *b = clip;
            }
        }
        let share = excess / 256.0;
        bins.iter_mut().for_each(|b| *b += share);
    }
    let mut lut = [0f32; 256];
    let mut cdf = 0.0;
    for (v, b) in bins.iter().enumerate() {
        cdf += b;
        lut[v] = (cdf * 255.0) as f32;
    }
    lut
}

/// CLAHE over a `tiles`×`tiles` grid; images narrower or shorter than the
/// grid are equalized with a single global (still clipped) histogram.
pub fn equalize_adaptive(img: &GrayImage, tiles: u32, clip_limit: f64) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let n = if tiles == 0 || w < tiles || h < tiles {
        1
    } else {
        tiles
    };
    let xt = tile_bounds(w, n);
    let yt = tile_bounds(h, n);
    let data = img.data();
    let stride = w as usize;

    let mut luts = Vec::with_capacity((n * n) as usize);
    for &(y0, y1) in &yt {
        for &(x0, x1) in &xt {
            let mut hist = [0u32; 256];
            for y in y0..y1 {
                for &v in &data[y * stride + x0..y * stride + x1] {
                    hist[v as usize] += 1;
                }
            }
            luts.push(tile_lut(&hist, (y1 - y0) * (x1 - x0), clip_limit));
        }
    }

    let xs = blend_taps(w, &xt);
    let ys = blend_taps(h, &yt);
    let n = n as usize;
    let mut out = Vec::with_capacity(data.len());
    for (y, &(ty0, ty1, wy)) in ys.iter().enumerate() {
        let row = &data[y * stride..(y + 1) * stride];
        for (&v, &(tx0, tx1, wx)) in row.iter().zip(&xs) {
            let v = v as usize;
            let a = luts[ty0 * n + tx0][v];
            let b = luts[ty0 * n + tx1][v];
            let c = luts[ty1 * n + tx0][v];
            let d = luts[ty1 * n + tx1][v];
            let top = a + (b - a) * wx;
            let bottom = c + (d - c) * wx;
            let val = top + (bottom - top) * wy;
            out.push(val.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(w, h, out).expect("dimensions preserved")
}
