use crate::error::{Error, Result};
use crate::records::Label;

/// Cohen's kappa for two annotators over binary labels.
///
/// Chance agreement uses the product of the two marginals. When chance
/// agreement is 1 (both annotators used a single, identical class) the
/// statistic is undefined; it is reported as 1 if observed agreement is
/// perfect and 0 otherwise.
pub fn cohen_kappa(a: &[Label], b: &[Label]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("annotation lists"));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|l| l.is_positive()).count() as f64 / n;
    let pb = b.iter().filter(|l| l.is_positive()).count() as f64 / n;
    let p_o = agree / n;
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if p_e >= 1.0 {
        return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
