//! Affine least-squares fits of planar positions against scan index.

use crate::error::{Error, Result};
use crate::geometry::Position;

/// `x(t) = x0 + vx * t`, `y(t) = y0 + vy * t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTrack {
    pub origin: Position,
    pub velocity: Position,
}

impl AffineTrack {
    pub fn at(&self, t: f64) -> Position {
        Position::new(self.origin.x + self.velocity.x * t, self.origin.y + self.velocity.y * t)
    }
}

/// Fits x and y independently as affine functions of `t`.
///
/// Needs at least two distinct time stamps.
pub fn fit_affine<I>(samples: I) -> Result<AffineTrack>
where
    I: IntoIterator<Item = (f64, Position)>,
    I::IntoIter: Clone,
{
    let it = samples.into_iter();
    let n = it.clone().count() as f64;
    if n < 2.0 {
        return Err(Error::DegenerateFit(format!("{n} samples")));
    }
    let (st, sx, sy) = it
        .clone()
        .fold((0.0, 0.0, 0.0), |(a, b, c), (t, p)| (a + t, b + p.x, c + p.y));
    let (mt, mx, my) = (st / n, sx / n, sy / n);
    let (mut stt, mut stx, mut sty) = (0.0, 0.0, 0.0);
    for (t, p) in it {
        let dt = t - mt;
        stt += dt * dt;
        stx += dt * (p.x - mx);
        sty += dt * (p.y - my);
    }
    if stt <= 0.0 {
        return Err(Error::DegenerateFit("all samples share one scan".into()));
    }
    let (vx, vy) = (stx / stt, sty / stt);
    Ok(AffineTrack {
        origin: Position::new(mx - vx * mt, my - vy * mt),
        velocity: Position::new(vx, vy),
    })
}
