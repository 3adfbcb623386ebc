use super::density::{js_divergence, DiscreteDistribution};
use crate::{Error, Result};

/// Discriminator outputs are clamped to `[D_CLAMP, 1 - D_CLAMP]` before logs.
pub const D_CLAMP: f64 = 1e-12;
/// `ln 4`, the depth of the global minimum of the value function.
pub const LN_4: f64 = 2.0 * std::f64::consts::LN_2;

fn check_support(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Distribution(format!("supports differ ({a} vs {b})")))
    }
}

/// `D*(x) = p_data(x) / (p_data(x) + p_g(x))`, with `0/0 = 1/2`.
pub fn optimal_discriminator(p_data: &DiscreteDistribution, p_g: &DiscreteDistribution) -> Result<Vec<f64>> {
    check_support(p_data.len(), p_g.len())?;
    Ok(p_data
        .probs()
        .iter()
        .zip(p_g.probs())
        .map(|(&a, &b)| if a + b == 0.0 { 0.5 } else { a / (a + b) })
        .collect())
}

/// `V = E_{p_data}[ln D] + E_{p_g}[ln(1 - D)]`. Zero-probability points do
/// not contribute.
pub fn gan_value(p_data: &DiscreteDistribution, p_g: &DiscreteDistribution, d: &[f64]) -> Result<f64> {
    check_support(p_data.len(), p_g.len())?;
    check_support(p_data.len(), d.len())?;
    if d.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Distribution("discriminator outputs must lie in [0, 1]".into()));
    }
    let mut value = 0.0;
    for ((&a, &b), &di) in p_data.probs().iter().zip(p_g.probs()).zip(d) {
        let di = di.clamp(D_CLAMP, 1.0 - D_CLAMP);
        if a > 0.0 {
            value += a * di.ln();
        }
        if b > 0.0 {
            value += b * (1.0 - di).ln();
        }
    }
    Ok(value)
}

/// `-ln 4 + 2 JS(p_data || p_g)`.
pub fn virtual_criterion(p_data: &DiscreteDistribution, p_g: &DiscreteDistribution) -> Result<f64> {
    let js = js_divergence(&p_data.clone().into(), &p_g.clone().into())?;
    Ok(-LN_4 + 2.0 * js)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn discriminator_examples() {
        let p = dist(&[0.2, 0.8]);
        assert_eq!(optimal_discriminator(&p, &p).unwrap(), vec![0.5, 0.5]);
        let a = dist(&[1.0, 0.0]);
        let b = dist(&[0.0, 1.0]);
        assert_eq!(optimal_discriminator(&a, &b).unwrap(), vec![1.0, 0.0]);
        let z = dist(&[0.5, 0.5, 0.0]);
        assert_eq!(optimal_discriminator(&z, &z).unwrap()[2], 0.5);
        assert!(optimal_discriminator(&a, &z).is_err());
    }

    #[test]
    fn value_examples() {
        let p = dist(&[0.3, 0.7]);
        assert!((gan_value(&p, &p, &[0.5, 0.5]).unwrap() + 1.386294).abs() < 1e-6);
        let a = dist(&[1.0, 0.0]);
        let b = dist(&[0.0, 1.0]);
        let d = optimal_discriminator(&a, &b).unwrap();
        assert!(gan_value(&a, &b, &d).unwrap().abs() < 1e-9);
        assert!(virtual_criterion(&a, &b).unwrap().abs() < 1e-15);
        assert_eq!(virtual_criterion(&p, &p).unwrap(), -(4.0f64).ln());
        assert!(gan_value(&a, &b, &[1.5, 0.0]).is_err());
        assert!(gan_value(&a, &b, &[0.5]).is_err());
    }

    #[test]
    fn clamp_keeps_value_finite() {
        let a = dist(&[1.0, 0.0]);
        let b = dist(&[0.0, 1.0]);
        let worst = gan_value(&a, &b, &[0.0, 1.0]).unwrap();
        assert!(worst.is_finite());
        // 1 - (1 - D_CLAMP) carries a relative rounding error near 1e-4
        assert!((worst - 2.0 * D_CLAMP.ln()).abs() < 1e-3);
    }
}
