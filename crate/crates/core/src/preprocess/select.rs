/// `frames` indices centered on `apex`, clamped to `[0, len − 1]`.
///
/// Out-of-range positions repeat the nearest boundary frame, so the result
/// always has exactly `frames` entries in temporal order.
pub fn select_frames(len: usize, apex: usize, frames: usize) -> Vec<usize> {
    assert!(len > 0, "select_frames on an empty sequence");
    let half = (frames / 2) as isize;
    let last = len as isize - 1;
    let apex = (apex as isize).min(last);
    (-half..frames as isize - half)
        .map(|o| (apex + o).clamp(0, last) as usize)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interior_window() {
        assert_eq!(select_frames(30, 15, 11), (10..=20).collect::<Vec<_>>());
    }

    #[test]
    fn left_boundary_duplicates() {
        assert_eq!(select_frames(12, 2, 11), vec![0, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn exact_fit() {
        assert_eq!(select_frames(11, 5, 11), (0..=10).collect::<Vec<_>>());
        assert_eq!(select_frames(1, 0, 3), vec![0, 0, 0]);
    }

    proptest! {
        #[test]
        fn always_f_valid_indices(len in 1usize..60, apex_frac in 0.0f64..1.0, half in 0usize..8) {
            let f = 2 * half + 1;
            let apex = ((len - 1) as f64 * apex_frac) as usize;
            let idx = select_frames(len, apex, f);
            prop_assert_eq!(idx.len(), f);
            prop_assert!(idx.iter().all(|&i| i < len));
            prop_assert!(idx.contains(&apex));
            prop_assert_eq!(idx[half], apex);
            prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
