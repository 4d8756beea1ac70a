#![allow(dead_code)]

use ehsched::network::{Area, BsParams, ChannelModel, RadioParams};
use ehsched::{Position, Topology};

/// MBS at the center and one SBS at `site` with `n_ue` UEs a few meters away.
pub fn single_sbs(site: Position, n_ue: usize) -> Topology {
    clustered(&[site], n_ue)
}

/// One SBS per site, each with `per_site` UEs huddled around it, so every
/// SBS has users under the all-ON association.
pub fn clustered(sites: &[Position], per_site: usize) -> Topology {
    let mut bs = vec![BsParams::new(
        0,
        Position::new(250.0, 250.0),
        &RadioParams::default_mbs(),
    )];
    let mut ue = Vec::new();
    for (j, p) in sites.iter().enumerate() {
        bs.push(BsParams::new(j + 1, *p, &RadioParams::default_sbs()));
        for k in 0..per_site {
            ue.push(Position::new(p.x + 1.5 * k as f64, p.y + 3.0));
        }
    }
    Topology::new(
        Area::default(),
        bs,
        ue,
        ehsched::units::dbm_to_watts(-104.0),
        ChannelModel::default(),
    )
    .unwrap()
}
