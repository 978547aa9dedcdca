//! Multi-view fusion of scored context elements into object instances.
//!
//! Candidates arrive sorted by descending score. Each one joins the first
//! group whose seed (highest-scoring member) is close in KL divergence,
//! otherwise it seeds a new group. A group is kept when its seed score times
//! the support bonus clears `beta`; its position is the softmax-weighted mean
//! of member positions.

use super::{Cluster, Scored};
use crate::error::{Error, Result};
use crate::types::{bonus_f, kl_divergence, FusionParams, Gaussian2D, Point3};

/// Indices into the candidate list; `members[0]` is the seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub members: Vec<usize>,
}

impl Group {
    pub fn seed(&self) -> usize {
        self.members[0]
    }
}

fn check_sorted(candidates: &[Scored<'_>]) -> Result<()> {
    if candidates.windows(2).any(|w| w[0].score < w[1].score) {
        return Err(Error::invalid("fusion candidates must be sorted by descending score"));
    }
    Ok(())
}

/// Greedy grouping: membership is tested as KL(candidate ‖ seed) < lambda.
pub fn group_candidates(candidates: &[Scored<'_>], params: &FusionParams) -> Result<Vec<Group>> {
    check_sorted(candidates)?;
    let gaussians =
        candidates.iter().map(|c| Gaussian2D::for_element(c.element, params.alpha)).collect::<Result<Vec<_>>>()?;
    let mut groups: Vec<Group> = Vec::new();
    for (i, g) in gaussians.iter().enumerate() {
        match groups.iter_mut().find(|group| kl_divergence(g, &gaussians[group.seed()]) < params.lambda) {
            Some(group) => group.members.push(i),
            None => groups.push(Group { members: vec![i] }),
        }
    }
    Ok(groups)
}

/// Group candidates and emit the surviving clusters, best first.
pub fn multiview_fuse(candidates: &[Scored<'_>], params: &FusionParams) -> Result<Vec<Cluster>> {
    let groups = group_candidates(candidates, params)?;
    let mut clusters = Vec::new();
    for group in &groups {
        let seed_score = candidates[group.seed()].score;
        let score = seed_score * bonus_f(group.members.len(), params.t)?;
        if score <= params.beta {
            continue;
        }
        // exp(S_i) weights, shifted by the seed score for stability.
        let (mut wsum, mut x, mut y, mut z) = (0.0, 0.0, 0.0, 0.0);
        for &m in &group.members {
            let w = (candidates[m].score - seed_score).exp();
            let p = candidates[m].element.position;
            wsum += w;
            x += w * p.x;
            y += w * p.y;
            z += w * p.z;
        }
        clusters.push(Cluster {
            position: Point3::new(x / wsum, y / wsum, z / wsum),
            score,
            support: group.members.len(),
        });
    }
    clusters.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(clusters)
}
