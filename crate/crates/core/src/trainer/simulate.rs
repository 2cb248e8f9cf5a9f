use std::time::Instant;

use crate::error::{invalid, Result};
use crate::geometry::{add, denormalize_displacement, idw_interpolate, DisplacementField, TriMesh, Units, Vec3};
use crate::network::Model;
use crate::synth::CaseSamples;

use super::normalize_samples;

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Predicted post-operative skin, same faces as the input.
    pub mesh: TriMesh,
    /// Predicted movement of every skin vertex, mm.
    pub vertex_disp: Vec<Vec3>,
    /// Wall-clock seconds from normalisation to the finished mesh.
    pub seconds: f64,
}

/// Predict the post-operative skin mesh of one case: normalise the sampled
/// points, run the model, bring the movement back to mm, interpolate it to
/// every skin vertex (inverse distance, 3 neighbours) and add it.
pub fn simulate(model: &Model, skin: &TriMesh, samples: &CaseSamples) -> Result<Simulation> {
    let start = Instant::now();
    let cfg = &model.config;
    model
        .params
        .check_against(cfg)
        .map_err(|e| invalid(format!("checkpoint does not match its configuration: {e}")))?;
    let (inputs, _, norm) = normalize_samples(samples, cfg)?;
    let pred = model.predict(&inputs)?;
    let mm = denormalize_displacement(&DisplacementField::new(pred, Units::Normalized)?, &norm)?;
    let values: Vec<f64> = mm.vectors().iter().flatten().copied().collect();
    let src = &samples.skin[..cfg.n_points()];
    let interp = idw_interpolate(src, &values, 3, skin.vertices(), 3)?;
    let vertex_disp: Vec<Vec3> = interp.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    let moved = skin.vertices().iter().zip(&vertex_disp).map(|(p, d)| add(*p, *d)).collect();
    let mesh = skin.with_vertices(moved)?;
    Ok(Simulation {
        mesh,
        vertex_disp,
        seconds: start.elapsed().as_secs_f64(),
    })
}
