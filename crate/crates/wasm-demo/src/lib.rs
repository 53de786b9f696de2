//! wasm-bindgen entry points for the static page in `www/`.
//!
//! Each export returns a flat `Float64Array` and wraps a plain Rust function
//! of the same name in [`series`]; errors surface as JS exceptions.

use wasm_bindgen::prelude::*;

pub mod series {
    use gram_spectra::ensembles::{CovarianceKind, DesignSpec, EntryLaw};
    use gram_spectra::gramsolve::{gd_solve_recorded, initial_point, make_system, BMode, InitMode};
    use gram_spectra::linalg::singular_values;
    use gram_spectra::mc::{sweep_gamma_design, Engine, Statistic};
    use gram_spectra::rng::StreamKey;
    use gram_spectra::Result;

    /// Mean κ(X) across a γ grid at fixed `n`.
    ///
    /// Layout: `[γ₀, mean₀, stderr₀, γ₁, mean₁, stderr₁, …]`.
    pub fn kappa_sweep(n: usize, gammas: &[f64], trials: u64, seed: u64) -> Result<Vec<f64>> {
        let rows = sweep_gamma_design(
            n,
            gammas,
            &CovarianceKind::Identity,
            EntryLaw::Gaussian,
            Statistic::Kappa,
            1.0,
            trials,
            seed,
            &Engine::new(1)?,
        )?;
        Ok(rows
            .iter()
            .flat_map(|r| [r.gamma, r.estimate.mean, r.estimate.stderr])
            .collect())
    }

    /// Singular values of one Gaussian `n × p` draw over `√n`, then the
    /// limiting edges `|1 - √γ|` and `1 + √γ`.
    pub fn spectrum(n: usize, p: usize, seed: u64) -> Result<Vec<f64>> {
        let x = DesignSpec::gaussian(n, p)?.sample(&mut StreamKey::new(seed, 0).generator())?;
        let root_n = (n as f64).sqrt();
        let mut out: Vec<f64> = singular_values(&x)?.iter().map(|s| s / root_n).collect();
        let g = (p as f64 / n as f64).sqrt();
        out.extend([(1.0 - g).abs(), 1.0 + g]);
        Ok(out)
    }

    /// Relative gaps `gap_t / gap_0` of gradient descent from the worst-case
    /// start, up to `epsilon` or `max_iter`.
    pub fn gd_trace(n: usize, p: usize, epsilon: f64, max_iter: u64, seed: u64) -> Result<Vec<f64>> {
        let mut rng = StreamKey::new(seed, 0).generator();
        let x = DesignSpec::gaussian(n, p)?.sample(&mut rng)?;
        let sys = make_system(&x, BMode::RandomInRange, &mut rng)?;
        let theta0 = initial_point(&sys, InitMode::Worstcase, &mut rng)?;
        let (trace, _) = gd_solve_recorded(&sys, &theta0, epsilon, max_iter)?;
        let g0 = trace.iterates_gap[0];
        Ok(trace
            .iterates_gap
            .iter()
            .map(|g| if g0 > 0.0 { g / g0 } else { 0.0 })
            .collect())
    }
}

fn js(e: gram_spectra::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn kappa_sweep(n: usize, gammas: &[f64], trials: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    series::kappa_sweep(n, gammas, trials.into(), seed.into()).map_err(js)
}

#[wasm_bindgen]
pub fn spectrum(n: usize, p: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    series::spectrum(n, p, seed.into()).map_err(js)
}

#[wasm_bindgen]
pub fn gd_trace(n: usize, p: usize, epsilon: f64, max_iter: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    series::gd_trace(n, p, epsilon, max_iter.into(), seed.into()).map_err(js)
}
