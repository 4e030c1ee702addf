//! Projection onto the ε-interior of the probability simplex.

use crate::error::{Error, Result};

/// Lower bound kept on every strategy weight and relative intensity.
pub const FLOOR_EPS: f64 = 1e-6;

/// Tolerance on `|sum - 1|` for a vector to count as already on the simplex.
pub const SUM_TOL: f64 = 1e-12;

/// Clamps `v` to components `>= floor` and rescales it to sum to one.
///
/// Negative entries are treated as zero. Components that would fall below
/// `floor` after rescaling are pinned at `floor` and the remaining mass is
/// shared proportionally among the others, so the result satisfies both
/// constraints exactly (up to one rounding step on the sum). Vectors that
/// already satisfy them are returned unchanged.
pub fn validate_simplex(v: &[f64], floor: f64) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    project_in_place(&mut out, floor)?;
    Ok(out)
}

pub(crate) fn project_in_place(v: &mut [f64], floor: f64) -> Result<()> {
    let n = v.len();
    if n == 0 {
        return Err(Error::InvalidStrategy("empty weight vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidStrategy(format!("non-finite weights {v:?}")));
    }
    if !(floor >= 0.0 && floor * (n as f64) < 1.0) {
        return Err(Error::config(format!(
            "floor {floor} leaves no mass for {n} components"
        )));
    }
    if v.iter().all(|&x| x <= 0.0) {
        return Err(Error::InvalidStrategy(format!(
            "no positive weight in {v:?}"
        )));
    }
    let sum: f64 = v.iter().sum();
    if v.iter().all(|&x| x >= floor) && (sum - 1.0).abs() <= SUM_TOL {
        return Ok(());
    }

    for x in v.iter_mut() {
        *x = x.max(0.0);
    }
    let mut pinned = vec![false; n];
    loop {
        let n_pinned = pinned.iter().filter(|&&p| p).count();
        let free_mass = 1.0 - n_pinned as f64 * floor;
        let free_sum: f64 = v
            .iter()
            .zip(&pinned)
            .filter(|(_, &p)| !p)
            .map(|(x, _)| *x)
            .sum();
        let mut changed = false;
        for i in 0..n {
            if pinned[i] {
                continue;
            }
            // free_sum > 0: at least one positive entry is never pinned,
            // because pinning only happens to entries below the average.
            let scaled = v[i] * free_mass / free_sum;
            if scaled < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            for i in 0..n {
                v[i] = if pinned[i] { floor } else { v[i] * free_mass / free_sum };
            }
            break;
        }
    }

    // Push the residual rounding error into the largest component.
    let residual = 1.0 - v.iter().sum::<f64>();
    let imax = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    v[imax] += residual;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_on_valid_input() {
        assert_eq!(validate_simplex(&[0.3, 0.7], FLOOR_EPS).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn clamps_zero_component() {
        let v = validate_simplex(&[1.0, 0.0], FLOOR_EPS).unwrap();
        assert_eq!(v[1], FLOOR_EPS);
        assert!((v[0] - (1.0 - FLOOR_EPS)).abs() < 1e-15);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_all_nonpositive() {
        assert!(matches!(
            validate_simplex(&[-1.0, -1.0], FLOOR_EPS),
            Err(Error::InvalidStrategy(_))
        ));
        assert!(validate_simplex(&[0.0, 0.0, 0.0], FLOOR_EPS).is_err());
        assert!(validate_simplex(&[f64::NAN, 1.0], FLOOR_EPS).is_err());
    }

    #[test]
    fn rescales_unnormalized() {
        let v = validate_simplex(&[2.0, 6.0], FLOOR_EPS).unwrap();
        assert!((v[0] - 0.25).abs() < 1e-15);
        assert!((v[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn cascading_pins() {
        // After the first pin the remaining small entry must be pinned too.
        let v = validate_simplex(&[1.0, 1.5e-6, 0.0], 1e-6).unwrap();
        assert!(v.iter().all(|&x| x >= 1e-6));
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn projection_lands_on_floor_simplex(
            v in prop::collection::vec(-0.5f64..2.0, 1..8),
        ) {
            prop_assume!(v.iter().any(|&x| x > 0.0));
            let out = validate_simplex(&v, FLOOR_EPS).unwrap();
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= SUM_TOL);
            for x in &out {
                prop_assert!(*x >= FLOOR_EPS * (1.0 - 1e-12));
            }
        }

        #[test]
        fn projection_is_idempotent(v in prop::collection::vec(0.0f64..1.0, 2..6)) {
            prop_assume!(v.iter().any(|&x| x > 0.0));
            let once = validate_simplex(&v, FLOOR_EPS).unwrap();
            let twice = validate_simplex(&once, FLOOR_EPS).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
