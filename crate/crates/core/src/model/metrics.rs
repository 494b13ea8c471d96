use crate::error::{check_len, Error, Result};

pub fn mse(x_true: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_len("mse operands", x_true.len(), x_hat.len())?;
    if x_true.is_empty() {
        return Err(Error::invalid("mse of empty vectors"));
    }
    Ok(x_true.iter().zip(x_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x_true.len() as f64)
}

pub fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Input SNR in dB: `10 log10(N E[x²] / (M σ_z²))`, with E[x²] the empirical
/// mean square of `x` and N its length.
pub fn snr_db(x: &[f64], m: usize, sigma_z_sq: f64) -> Result<f64> {
    if sigma_z_sq <= 0.0 {
        return Err(Error::invalid("SNR is undefined for zero noise variance"));
    }
    if m == 0 || x.is_empty() {
        return Err(Error::invalid("SNR needs M >= 1 and a nonempty signal"));
    }
    Ok(snr_db_from_moment(mean_square(x), x.len(), m, sigma_z_sq))
}

pub fn snr_db_from_moment(e_x2: f64, n: usize, m: usize, sigma_z_sq: f64) -> f64 {
    10.0 * ((n as f64 * e_x2) / (m as f64 * sigma_z_sq)).log10()
}

/// Noise variance that yields `snr_db` for a signal with second moment `e_x2`.
pub fn noise_var_for_snr(e_x2: f64, n: usize, m: usize, snr_db: f64) -> f64 {
    n as f64 * e_x2 / (m as f64 * 10f64.powf(snr_db / 10.0))
}

/// Output SDR in dB: `10 log10(E[x²] / MSE)`. Exact recovery gives `+∞`.
pub fn sdr_db(x_true: &[f64], x_hat: &[f64]) -> Result<f64> {
    let err = mse(x_true, x_hat)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (mean_square(x_true) / err).log10())
}
