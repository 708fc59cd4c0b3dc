/// Halves `initial` every 20 epochs (`epoch` counts from 0).
pub fn lr_at_epoch(initial: f64, epoch: usize) -> f64 {
    annealed_lr(initial, epoch, 20, 0.5)
}

/// `initial · factor^⌊epoch / every⌋`.
pub fn annealed_lr(initial: f64, epoch: usize, every: usize, factor: f64) -> f64 {
    let steps = epoch / every.max(1);
    initial * factor.powi(steps as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(lr_at_epoch(1e-4, 0), 1e-4);
        assert_eq!(lr_at_epoch(1e-4, 19), 1e-4);
        assert_eq!(lr_at_epoch(1e-4, 20), 5e-5);
        assert_eq!(lr_at_epoch(2.5e-4, 45), 2.5e-4 / 4.0);
    }

    proptest! {
        #[test]
        fn non_increasing_and_piecewise_constant(e in 0usize..500) {
            prop_assert!(lr_at_epoch(1.0, e + 1) <= lr_at_epoch(1.0, e));
            if (e + 1) % 20 != 0 {
                prop_assert_eq!(lr_at_epoch(1.0, e + 1), lr_at_epoch(1.0, e));
            }
        }
    }
}
