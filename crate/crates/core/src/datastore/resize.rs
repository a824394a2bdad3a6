use crate::datastore::stack::BandStack;

/// Per-band bilinear resampling with half-pixel centres.
///
/// Source coordinate of target index `i` is `(i + 0.5)·src/target − 0.5`,
/// clamped to `[0, src − 1]`. Matching dimensions return an exact copy.
pub fn resize_bilinear(stack: &BandStack, target_h: usize, target_w: usize) -> BandStack {
    assert!(target_h > 0 && target_w > 0, "resize target must be positive");
    if stack.height == target_h && stack.width == target_w {
        return stack.clone();
    }
    let rows = taps(stack.height, target_h);
    let cols = taps(stack.width, target_w);
    let mut data = Vec::with_capacity(stack.bands.len() * target_h * target_w);
    for b in 0..stack.bands.len() {
        let plane = stack.plane(b);
        let at = |y: usize, x: usize| plane[y * stack.width + x] as f64;
        for &(y0, y1, fy) in &rows {
            for &(x0, x1, fx) in &cols {
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                data.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    BandStack { height: target_h, width: target_w, data, ..stack.clone() }
}

/// `(lower index, upper index, upper weight)` per target index.
fn taps(src: usize, target: usize) -> Vec<(usize, usize, f64)> {
    (0..target)
        .map(|i| {
            let c = ((i as f64 + 0.5) * src as f64 / target as f64 - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = c.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, c - lo as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::sensor::Satellite;
    use crate::datastore::stack::fixtures::stack;

    #[test]
    fn same_size_is_bit_identical() {
        let s = stack(Satellite::PS, &["B"], 2, 3, vec![0.1, 0.7, 0.3, 0.9, 1e-7, 0.5]);
        assert_eq!(resize_bilinear(&s, 2, 3), s);
    }

    #[test]
    fn two_by_two_to_one_pixel() {
        let s = stack(Satellite::PS, &["B"], 2, 2, vec![0.0, 1.0, 2.0, 3.0]);
        let r = resize_bilinear(&s, 1, 1);
        assert_eq!(r.data, vec![1.5]);
    }

    #[test]
    fn constants_stay_constant() {
        let s = stack(Satellite::PS, &["B", "G"], 4, 5, [vec![0.25f32; 20], vec![0.75; 20]].concat());
        for (h, w) in [(3, 3), (7, 7), (19, 19), (1, 9)] {
            let r = resize_bilinear(&s, h, w);
            assert!(r.plane(0).iter().all(|&v| v == 0.25));
            assert!(r.plane(1).iter().all(|&v| v == 0.75));
        }
    }
}
