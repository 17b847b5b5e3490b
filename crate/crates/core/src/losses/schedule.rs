use crate::error::{Error, Result};

/// Contrastive-group weight `0.1·exp(4·(1 − t/t_max)²)`.
///
/// Decays from `0.1·e⁴` at `t = 0` to exactly `0.1` at `t = t_max`.
pub fn lambda_schedule(t: usize, t_max: usize) -> Result<f64> {
    if t_max == 0 {
        return Err(Error::invalid("lambda_schedule: t_max must be positive"));
    }
    if t > t_max {
        return Err(Error::invalid(format!("lambda_schedule: t = {t} exceeds t_max = {t_max}")));
    }
    let r = 1.0 - t as f64 / t_max as f64;
    Ok(0.1 * (4.0 * r * r).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(lambda_schedule(600, 600).unwrap(), 0.1);
        assert!((lambda_schedule(0, 600).unwrap() - 5.459815003314424).abs() < 1e-9);
        assert!(lambda_schedule(601, 600).is_err());
        assert!(lambda_schedule(0, 0).is_err());
    }

    #[test]
    fn nonincreasing() {
        let v: Vec<f64> = (0..=1000).map(|t| lambda_schedule(t, 1000).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
        let max_jump = v.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        assert!(max_jump < 0.05);
    }
}
