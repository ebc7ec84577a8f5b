use super::StyleError;
use crate::tensor::Tensor;

/// Below this angle slerp falls back to linear interpolation.
pub const OMEGA_EPS: f64 = 1e-6;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `sin((1−t)Ω)/sin Ω · a + sin(tΩ)/sin Ω · b`, Ω the angle between `a` and `b`.
pub fn slerp(a: &[f64], b: &[f64], t: f64) -> Result<Vec<f64>, StyleError> {
    if a.len() != b.len() {
        return Err(StyleError::LengthMismatch(a.len(), b.len()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(StyleError::BadT(t));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(StyleError::ZeroVector);
    }
    let cos = (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0);
    let omega = cos.acos();
    if omega < OMEGA_EPS {
        return Ok(a.iter().zip(b).map(|(x, y)| x * (1.0 - t) + y * t).collect());
    }
    if std::f64::consts::PI - omega < OMEGA_EPS {
        return Err(StyleError::AntiParallel);
    }
    let s = omega.sin();
    let (ca, cb) = (((1.0 - t) * omega).sin() / s, (t * omega).sin() / s);
    Ok(a.iter().zip(b).map(|(x, y)| ca * x + cb * y).collect())
}

/// `steps` tables at `t = k/(steps−1)`, slerping row by row. A 1-D tensor is
/// a single row. Rows equal in both endpoints are carried through unchanged.
pub fn interpolate_styles(a: &Tensor, b: &Tensor, steps: usize) -> Result<Vec<Tensor>, StyleError> {
    if steps < 2 {
        return Err(StyleError::TooFewSteps(steps));
    }
    if a.shape() != b.shape() {
        return Err(StyleError::LengthMismatch(a.len(), b.len()));
    }
    let width = *a.shape().last().unwrap_or(&0);
    let rows = if width == 0 { 0 } else { a.len() / width };
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 / (steps - 1) as f64;
        let mut data = Vec::with_capacity(a.len());
        for r in 0..rows {
            let (ra, rb) = (&a.data()[r * width..(r + 1) * width], &b.data()[r * width..(r + 1) * width]);
            if ra == rb {
                data.extend_from_slice(ra);
            } else {
                data.extend(slerp(ra, rb, t)?);
            }
        }
        out.push(Tensor::new(a.shape().to_vec(), data).expect("same shape"));
    }
    Ok(out)
}
