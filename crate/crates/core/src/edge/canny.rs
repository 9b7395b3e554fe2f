//! Edge thinning and hysteresis linking.

use crate::imaging::GrayImage;

use super::{EdgeError, GradientField, InfoMatrix};

/// tan(22.5°) and tan(67.5°): sector boundaries for direction quantization.
const TAN_22_5: f64 = 0.414_213_562_373_095_03;
const TAN_67_5: f64 = 2.414_213_562_373_095;

/// Direction bin of a gradient folded into [0°, 180°).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

/// Quantizes `atan2(gy, gx)` to the nearest of 0/45/90/135 degrees (mod 180)
/// using ratio tests instead of trigonometry.
#[inline]
pub fn sector(gx: i16, gy: i16) -> Sector {
    let ax = f64::from(gx.unsigned_abs());
    let ay = f64::from(gy.unsigned_abs());
    if ay < TAN_22_5 * ax || (ax == 0.0 && ay == 0.0) {
        Sector::Deg0
    } else if ay > TAN_67_5 * ax {
        Sector::Deg90
    } else if (gx > 0) == (gy > 0) {
        Sector::Deg45
    } else {
        Sector::Deg135
    }
}

/// 8-bit edge strength: `min(255, round(magnitude / 4))`.
#[inline]
pub fn quantize_magnitude(m: f32) -> u8 {
    (m / 4.0).round().min(255.0) as u8
}

/// Keeps a pixel only where its magnitude is at least that of both neighbours
/// along the quantized gradient direction; survivors are scaled to 8 bits.
pub fn non_max_suppress(g: &GradientField) -> GrayImage {
    let (w, h) = (g.width(), g.height());
    let mag = g.magnitude();
    let (gx, gy) = (g.gx(), g.gy());
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(h - 1);
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(w - 1);
            // image y grows downward, so a (+,+) gradient points to the lower right
            let (a, b) = match sector(gx[i], gy[i]) {
                Sector::Deg0 => (mag[y * w + xl], mag[y * w + xr]),
                Sector::Deg90 => (mag[yu * w + x], mag[yd * w + x]),
                Sector::Deg45 => (mag[yu * w + xl], mag[yd * w + xr]),
                Sector::Deg135 => (mag[yd * w + xl], mag[yu * w + xr]),
            };
            if m >= a && m >= b {
                out[i] = quantize_magnitude(m);
            }
        }
    }
    GrayImage::new(w as u32, h as u32, out).expect("dimensions preserved")
}

/// Pixels `>= high` seed edges; pixels in `[low, high)` join when 8-connected
/// (transitively) to a seed.
pub fn hysteresis_threshold(nms: &GrayImage, low: u8, high: u8) -> Result<InfoMatrix, EdgeError> {
    if low == 0 || low >= high {
        return Err(EdgeError::BadThresholds { low, high });
    }
    let (w, h) = (nms.width() as usize, nms.height() as usize);
    let data = nms.data();
    let mut bits = vec![0u8; w * h];
    let mut stack = Vec::new();
    for seed in 0..w * h {
        if data[seed] < high || bits[seed] != 0 {
            continue;
        }
        bits[seed] = 1;
        stack.push(seed);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if bits[j] == 0 && data[j] >= low {
                        bits[j] = 1;
                        stack.push(j);
                    }
                }
            }
        }
    }
    Ok(InfoMatrix::from_bits(h, w, bits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(w: usize, h: usize, f: impl Fn(usize, usize) -> (i16, i16)) -> GradientField {
        let mut gx = Vec::new();
        let mut gy = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let (a, b) = f(x, y);
                gx.push(a);
                gy.push(b);
            }
        }
        GradientField::from_components(w, h, gx, gy)
    }

    #[test]
    fn sector_agrees_with_atan2_binning() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20_000 {
            let gx: i16 = rng.gen_range(-1020..=1020);
            let gy: i16 = rng.gen_range(-1020..=1020);
            if gx == 0 && gy == 0 {
                continue;
            }
            let mut deg = (gy as f64).atan2(gx as f64).to_degrees();
            if deg < 0.0 {
                deg += 180.0;
            }
            let want = if !(22.5..157.5).contains(&deg) {
                Sector::Deg0
            } else if deg < 67.5 {
                Sector::Deg45
            } else if deg < 112.5 {
                Sector::Deg90
            } else {
                Sector::Deg135
            };
            assert_eq!(sector(gx, gy), want, "gx={gx} gy={gy}");
        }
    }

    #[test]
    fn single_ridge_survives_unchanged() {
        // horizontal gradient of raw strength 400 (100 in 8-bit units) along column 4
        let g = field(9, 7, |x, _| if x == 4 { (400, 0) } else { (0, 0) });
        let out = non_max_suppress(&g);
        for y in 0..7 {
            for x in 0..9 {
                assert_eq!(out.get(x, y), if x == 4 { 100 } else { 0 });
            }
        }
    }

    /// Survivors of a 1-D profile under ">= both neighbours" with zero padding.
    fn local_maxima(profile: &[i16]) -> Vec<bool> {
        (0..profile.len())
            .map(|i| {
                let left = if i == 0 { 0 } else { profile[i - 1] };
                let right = profile.get(i + 1).copied().unwrap_or(0);
                profile[i] > 0 && profile[i] >= left && profile[i] >= right
            })
            .collect()
    }

    #[test]
    fn three_wide_ridges_thin_to_their_local_maxima() {
        let levels = [40i16, 80, 120];
        let mut flat_profiles = 0;
        for &a in &levels {
            for &b in &levels {
                for &c in &levels {
                    let profile = [a, b, c];
                    let g = field(9, 3, |x, _| {
                        if (3..6).contains(&x) {
                            (profile[x - 3], 0)
                        } else {
                            (0, 0)
                        }
                    });
                    let out = non_max_suppress(&g);
                    let kept: Vec<bool> = (3..6).map(|x| out.get(x as u32, 1) > 0).collect();
                    assert_eq!(kept, local_maxima(&profile), "profile {profile:?}");
                    let width = kept.iter().filter(|&&k| k).count();
                    if a == b && b == c {
                        // ties are kept, so a perfectly flat plateau is not thinned
                        assert_eq!(width, 3);
                        flat_profiles += 1;
                    } else {
                        assert!(width <= 2, "profile {profile:?} kept {width}");
                    }
                }
            }
        }
        assert_eq!(flat_profiles, 3);
    }

    #[test]
    fn zero_field_gives_zero_output() {
        let g = field(5, 5, |_, _| (0, 0));
        assert!(non_max_suppress(&g).data().iter().all(|&v| v == 0));
    }

    #[test]
    fn magnitudes_saturate_at_255() {
        let g = field(3, 3, |x, y| if (x, y) == (1, 1) { (1020, 1020) } else { (0, 0) });
        assert_eq!(non_max_suppress(&g).get(1, 1), 255);
    }

    #[test]
    fn threshold_validation() {
        let img = GrayImage::filled(3, 3, 0);
        assert!(matches!(hysteresis_threshold(&img, 150, 50), Err(EdgeError::BadThresholds { .. })));
        assert!(hysteresis_threshold(&img, 50, 50).is_err());
        assert!(hysteresis_threshold(&img, 0, 50).is_err());
    }

    #[test]
    fn all_low_or_all_high() {
        let low = GrayImage::filled(6, 4, 49);
        assert_eq!(hysteresis_threshold(&low, 50, 150).unwrap().count_ones(), 0);
        let high = GrayImage::filled(6, 4, 150);
        assert_eq!(hysteresis_threshold(&high, 50, 150).unwrap().count_ones(), 24);
    }

    /// Reachability by repeated relaxation until nothing changes.
    fn hysteresis_oracle(img: &GrayImage, low: u8, high: u8) -> Vec<bool> {
        let (w, h) = (img.width() as i64, img.height() as i64);
        let mut on: Vec<bool> = img.data().iter().map(|&v| v >= high).collect();
        loop {
            let mut changed = false;
            for y in 0..h {
                for x in 0..w {
                    let i = (y * w + x) as usize;
                    if on[i] || img.data()[i] < low {
                        continue;
                    }
                    let touches = (-1..=1).any(|dy| {
                        (-1..=1).any(|dx| {
                            let (nx, ny) = (x + dx, y + dy);
                            nx >= 0 && ny >= 0 && nx < w && ny < h && on[(ny * w + nx) as usize]
                        })
                    });
                    if touches {
                        on[i] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                return on;
            }
        }
    }

    #[test]
    fn weak_chain_between_strong_pixels() {
        let mut data = vec![0u8; 12 * 8];
        // diagonal-then-straight chain from (1,1) to (8,4)
        let chain = [(1, 1), (2, 2), (3, 3), (4, 4), (5, 4), (6, 4), (7, 4), (8, 4)];
        for &(x, y) in &chain {
            data[y * 12 + x] = 80;
        }
        data[12 + 1] = 200;
        data[4 * 12 + 8] = 200;
        data[7 * 12 + 11] = 80; // isolated weak pixel
        let img = GrayImage::new(12, 8, data).unwrap();
        let m = hysteresis_threshold(&img, 50, 150).unwrap();
        for &(x, y) in &chain {
            assert!(m.get(y, x), "({x},{y})");
        }
        assert!(!m.get(7, 11));
        assert_eq!(m.count_ones(), chain.len());
        let oracle = hysteresis_oracle(&img, 50, 150);
        assert_eq!(m.bits().iter().map(|&b| b != 0).collect::<Vec<_>>(), oracle);
    }

    proptest! {
        #[test]
        fn hysteresis_matches_flood_oracle(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_fn(16, 11, |_, _| rng.gen());
            let m = hysteresis_threshold(&img, 90, 200).unwrap();
            let oracle = hysteresis_oracle(&img, 90, 200);
            prop_assert_eq!(m.bits().iter().map(|&b| b != 0).collect::<Vec<_>>(), oracle);
        }

        #[test]
        fn raising_thresholds_never_adds_pixels(seed in any::<u64>(), low in 1u8..200, high in 2u8..=255, dl in 0u8..40, dh in 0u8..40) {
            prop_assume!(low < high);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_fn(20, 14, |_, _| rng.gen());
            let base = hysteresis_threshold(&img, low, high).unwrap();
            let low2 = low.saturating_add(dl);
            let high2 = high.saturating_add(dh);
            prop_assume!(low2 < high2);
            let raised = hysteresis_threshold(&img, low2, high2).unwrap();
            prop_assert!(raised.is_subset_of(&base));
        }
    }
}
