use rand::Rng;

use super::SamplerState;
use crate::data::Dataset;
use crate::dist::truncated_unit_normal;

/// Redraw every latent probit variable from its truncated normal given the
/// current fits.
///
/// `phi1 > 0` exactly on rows with `y = 1`; on rows with `y < 1`,
/// `phi0 > 0` exactly when `y = 0`. `phi0` on `y = 1` rows is left alone.
pub fn sample_latent_phi(state: &mut SamplerState, data: &Dataset) {
    let SamplerState {
        phi1,
        phi0,
        f1,
        f0,
        rng,
        ..
    } = state;
    draw_phi(data, f1, f0, phi1, phi0, rng);
}

pub(crate) fn draw_phi<R: Rng + ?Sized>(
    data: &Dataset,
    f1: &[f64],
    f0: &[f64],
    phi1: &mut [f64],
    phi0: &mut [f64],
    rng: &mut R,
) {
    for i in 0..data.n() {
        let one = data.is_one(i);
        phi1[i] = truncated_unit_normal(f1[i], one, rng);
        if !one {
            phi0[i] = truncated_unit_normal(f0[i], data.is_zero(i), rng);
        }
    }
}
