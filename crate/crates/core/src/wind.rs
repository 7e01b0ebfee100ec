//! Storm wind-field prediction on a km-scale grid.
//!
//! A storm is described by a track of timed center positions plus the three
//! parameters of the Holland radial wind profile: maximum intensity `vm`
//! (m/s), radius of maximum winds `rm` (km) and shape parameter `b`. The
//! surface wind speed at distance `r` from the center is
//!
//! ```text
//! v(r) = vm * (rm/r)^(b/2) * exp(1 - (rm/r)^b)^(1/2)
//! ```
//!
//! which peaks at `v = vm` for `r = rm` and decays to zero in both
//! directions. Wind speeds are evaluated once per hour while the storm is
//! over the network, on a grid of square cells (side ~1 km).

use thiserror::Error;

use crate::geometry::Point2;
use crate::scalar::Scalar;

/// Distances below this are clamped before evaluating the radial profile,
/// which is singular at `r = 0`. Cells are ~1 km wide, so 0.1 km is well
/// below any physically meaningful center-to-cell distance.
pub const R_CLAMP_KM: f64 = 0.1;

#[derive(Debug, Error)]
pub enum WindError {
    #[error("storm track needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint times must be strictly increasing (violation at index {0})")]
    UnsortedWaypoints(usize),
    #[error("waypoints span [{span_start}, {span_end}] h but must cover the storm window [{t1}, {t2}] h")]
    WindowNotCovered {
        span_start: f64,
        span_end: f64,
        t1: f64,
        t2: f64,
    },
    #[error("storm parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("storm window invalid: t2 = {t2} must exceed t1 = {t1}")]
    EmptyWindow { t1: f64, t2: f64 },
    #[error("time {t} h outside the waypoint span [{start}, {end}] h")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },
    #[error("radius r = {0} km is singular or negative; clamp before calling")]
    SingularRadius(f64),
    #[error("grid cell ids must be unique, duplicate id {0}")]
    DuplicateCellId(i64),
    #[error("grid side must be positive, got {0}")]
    NonPositiveSide(f64),
}

/// Identifier of a wind-grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId(pub i64);

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A square grid cell, identified by `id`, centered at `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell<T> {
    pub id: CellId,
    pub center: Point2<T>,
}

/// A collection of equally sized square cells.
#[derive(Debug, Clone)]
pub struct Grid<T> {
    side: T,
    cells: Vec<GridCell<T>>,
}

impl<T: Scalar> Grid<T> {
    pub fn new(side: T, cells: Vec<GridCell<T>>) -> Result<Self, WindError> {
        if side <= T::zero() {
            return Err(WindError::NonPositiveSide(side.f64()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &cells {
            if !seen.insert(c.id) {
                return Err(WindError::DuplicateCellId(c.id.0));
            }
        }
        Ok(Self { side, cells })
    }

    pub fn side(&self) -> T {
        self.side
    }

    pub fn cells(&self) -> &[GridCell<T>] {
        &self.cells
    }

    /// Axis-aligned bounds of a cell: `(xmin, xmax, ymin, ymax)`.
    pub fn cell_bounds(&self, cell: &GridCell<T>) -> (T, T, T, T) {
        let half = self.side / T::c(2.0);
        (
            cell.center.x - half,
            cell.center.x + half,
            cell.center.y - half,
            cell.center.y + half,
        )
    }

    /// The first cell (in listing order) whose closed box contains `p`.
    pub fn locate(&self, p: Point2<T>) -> Option<&GridCell<T>> {
        self.cells.iter().find(|c| {
            let (x0, x1, y0, y1) = self.cell_bounds(c);
            p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1
        })
    }
}

/// A timed storm-center waypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint<T> {
    /// Hours since the start of the forecast clock.
    pub t: T,
    /// Center position in planar km.
    pub pos: Point2<T>,
}

/// A forecast storm track with Holland wind-profile parameters.
///
/// Invariants are established at construction: waypoints strictly
/// increasing in time and covering `[t1, t2]`, positive `vm`, `rm`, `b`,
/// and `t2 > t1`.
#[derive(Debug, Clone)]
pub struct StormTrack<T> {
    waypoints: Vec<Waypoint<T>>,
    pub vm: T,
    pub rm: T,
    pub b: T,
    pub t1: T,
    pub t2: T,
}

impl<T: Scalar> StormTrack<T> {
    pub fn new(
        waypoints: Vec<Waypoint<T>>,
        vm: T,
        rm: T,
        b: T,
        t1: T,
        t2: T,
    ) -> Result<Self, WindError> {
        if waypoints.len() < 2 {
            return Err(WindError::TooFewWaypoints(waypoints.len()));
        }
        for (i, w) in waypoints.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(WindError::UnsortedWaypoints(i + 1));
            }
        }
        for (name, value) in [("vm", vm), ("rm", rm), ("b", b)] {
            if value <= T::zero() {
                return Err(WindError::NonPositiveParameter {
                    name,
                    value: value.f64(),
                });
            }
        }
        if t2 <= t1 {
            return Err(WindError::EmptyWindow {
                t1: t1.f64(),
                t2: t2.f64(),
            });
        }
        let span_start = waypoints.first().unwrap().t;
        let span_end = waypoints.last().unwrap().t;
        if span_start > t1 || span_end < t2 {
            return Err(WindError::WindowNotCovered {
                span_start: span_start.f64(),
                span_end: span_end.f64(),
                t1: t1.f64(),
                t2: t2.f64(),
            });
        }
        Ok(Self {
            waypoints,
            vm,
            rm,
            b,
            t1,
            t2,
        })
    }

    pub fn waypoints(&self) -> &[Waypoint<T>] {
        &self.waypoints
    }

    /// Storm-center position at time `t`, by piecewise-linear interpolation
    /// between waypoints.
    pub fn storm_center_at(&self, t: T) -> Result<Point2<T>, WindError> {
        let start = self.waypoints.first().unwrap().t;
        let end = self.waypoints.last().unwrap().t;
        if t < start || t > end {
            return Err(WindError::TimeOutOfRange {
                t: t.f64(),
                start: start.f64(),
                end: end.f64(),
            });
        }
        let right = self
            .waypoints
            .iter()
            .position(|w| w.t >= t)
            .expect("t within span");
        if self.waypoints[right].t == t {
            return Ok(self.waypoints[right].pos);
        }
        let a = &self.waypoints[right - 1];
        let b = &self.waypoints[right];
        let s = (t - a.t) / (b.t - a.t);
        Ok(a.pos.lerp(&b.pos, s))
    }

    /// Radial Holland wind speed at distance `r` km from the storm center.
    pub fn holland_velocity(&self, r: T) -> Result<T, WindError> {
        if r <= T::zero() {
            return Err(WindError::SingularRadius(r.f64()));
        }
        let ratio = self.rm / r;
        let ratio_b = ratio.powf(self.b);
        let v = self.vm * ratio.powf(self.b / T::c(2.0)) * ((T::one() - ratio_b) / T::c(2.0)).exp();
        Ok(v)
    }

    /// Hourly sample times over the storm window: `t1, t1+1, ...`, one per
    /// hour of `[t1, t2)` (`Δt = 1 h` fixed).
    pub fn storm_hours(&self) -> Vec<T> {
        let span = (self.t2 - self.t1).f64();
        let n = span.ceil() as usize;
        (0..n).map(|i| self.t1 + T::c(i as f64)).collect()
    }
}

/// Wind speed sample for one cell at one hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindSample<T> {
    pub cell: CellId,
    pub t: T,
    /// Wind speed, m/s.
    pub v: T,
    /// Distance from the cell center to the storm center, km.
    pub r: T,
}

/// Wind speed in every grid cell at time `t`.
///
/// Distances below [`R_CLAMP_KM`] are clamped before evaluating the radial
/// profile.
pub fn wind_field_at<T: Scalar>(
    track: &StormTrack<T>,
    grid: &Grid<T>,
    t: T,
) -> Result<Vec<WindSample<T>>, WindError> {
    let center = track.storm_center_at(t)?;
    let clamp = T::c(R_CLAMP_KM);
    grid.cells()
        .iter()
        .map(|cell| {
            let r = cell.center.distance(&center);
            let v = track.holland_velocity(r.max(clamp))?;
            Ok(WindSample {
                cell: cell.id,
                t,
                v,
                r,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn track(waypoints: Vec<(f64, f64, f64)>, vm: f64, rm: f64, b: f64) -> StormTrack<f64> {
        let t1 = waypoints.first().unwrap().0;
        let t2 = waypoints.last().unwrap().0;
        StormTrack::new(
            waypoints
                .into_iter()
                .map(|(t, x, y)| Waypoint {
                    t,
                    pos: Point2::new(x, y),
                })
                .collect(),
            vm,
            rm,
            b,
            t1,
            t2,
        )
        .unwrap()
    }

    fn unit_grid(centers: &[(i64, f64, f64)]) -> Grid<f64> {
        Grid::new(
            1.0,
            centers
                .iter()
                .map(|&(id, x, y)| GridCell {
                    id: CellId(id),
                    center: Point2::new(x, y),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn center_at_waypoint_time_is_waypoint() {
        let tr = track(vec![(0.0, 0.0, 0.0), (2.0, 10.0, 0.0)], 40.0, 30.0, 1.5);
        let p = tr.storm_center_at(2.0).unwrap();
        assert_eq!((p.x, p.y), (10.0, 0.0));
    }

    #[test]
    fn center_at_midpoint() {
        let tr = track(vec![(0.0, 0.0, 0.0), (2.0, 10.0, 0.0)], 40.0, 30.0, 1.5);
        let p = tr.storm_center_at(1.0).unwrap();
        assert_eq!((p.x, p.y), (5.0, 0.0));
    }

    #[test]
    fn center_three_waypoints_matches_two_point_oracle() {
        // Independent oracle: plain two-point interpolation on the second leg.
        let tr = track(
            vec![(0.0, 0.0, 0.0), (1.0, 10.0, 4.0), (2.0, 16.0, 12.0)],
            40.0,
            30.0,
            1.5,
        );
        let t = 1.5;
        let s = (t - 1.0) / (2.0 - 1.0);
        let oracle = (10.0 + (16.0 - 10.0) * s, 4.0 + (12.0 - 4.0) * s);
        let p = tr.storm_center_at(t).unwrap();
        assert_relative_eq!(p.x, oracle.0, max_relative = 1e-15);
        assert_relative_eq!(p.y, oracle.1, max_relative = 1e-15);
        assert_eq!((p.x, p.y), (13.0, 8.0));
    }

    #[test]
    fn center_out_of_range_errors() {
        let tr = track(vec![(0.0, 0.0, 0.0), (2.0, 10.0, 0.0)], 40.0, 30.0, 1.5);
        assert!(matches!(
            tr.storm_center_at(2.5),
            Err(WindError::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn holland_peak_at_rm_equals_vm() {
        let tr = track(vec![(0.0, 0.0, 0.0), (2.0, 10.0, 0.0)], 40.0, 30.0, 1.5);
        assert_eq!(tr.holland_velocity(30.0).unwrap(), 40.0);
    }

    #[test]
    fn holland_decays_far_from_center() {
        let tr = track(vec![(0.0, 0.0, 0.0), (2.0, 10.0, 0.0)], 40.0, 30.0, 1.5);
        let far = tr.holland_velocity(30.0e6).unwrap();
        let farther = tr.holland_velocity(30.0e7).unwrap();
        assert!(far >= 0.0 && far < 1e-2);
        assert!(farther < far, "profile keeps decaying toward zero");
    }

    #[test]
    fn holland_matches_direct_substitution_oracle() {
        // Frozen from an independent scalar evaluation of the radial profile
        // at Vm=40, Rm=30, B=1.5, r=60.
        let tr = track(vec![(0.0, 0.0, 0.0), (2.0, 10.0, 0.0)], 40.0, 30.0, 1.5);
        assert_relative_eq!(
            tr.holland_velocity(60.0).unwrap(),
            32.85954853260226,
            max_relative = 1e-14
        );
    }

    #[test]
    fn holland_zero_radius_is_singular() {
        let tr = track(vec![(0.0, 0.0, 0.0), (2.0, 10.0, 0.0)], 40.0, 30.0, 1.5);
        assert!(matches!(
            tr.holland_velocity(0.0),
            Err(WindError::SingularRadius(_))
        ));
    }

    #[test]
    fn holland_max_at_rm_and_decreasing_beyond() {
        let tr = track(vec![(0.0, 0.0, 0.0), (24.0, 10.0, 0.0)], 40.0, 30.0, 1.5);
        let peak = tr.holland_velocity(30.0).unwrap();
        let mut prev = peak;
        for i in 1..=2000 {
            let r = 30.0 + 0.5 * i as f64;
            let v = tr.holland_velocity(r).unwrap();
            assert!(v < prev, "profile must strictly decrease beyond rm");
            assert!(v <= peak);
            prev = v;
        }
        // and below rm the profile stays under the peak
        for i in 1..100 {
            let r = 30.0 * i as f64 / 100.0;
            assert!(tr.holland_velocity(r).unwrap() < peak);
        }
    }

    #[test]
    fn wind_field_clamps_at_center() {
        let tr = track(vec![(0.0, 0.0, 0.0), (2.0, 0.0, 0.0)], 40.0, 30.0, 1.5);
        let grid = unit_grid(&[(0, 0.0, 0.0)]);
        let samples = wind_field_at(&tr, &grid, 1.0).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].r, 0.0);
        assert_eq!(
            samples[0].v,
            tr.holland_velocity(R_CLAMP_KM).unwrap(),
            "clamped to eps"
        );
    }

    #[test]
    fn wind_field_radial_symmetry() {
        let tr = track(vec![(0.0, 0.0, 0.0), (2.0, 0.0, 0.0)], 40.0, 30.0, 1.5);
        let grid = unit_grid(&[(0, 12.0, 5.0), (1, -5.0, 12.0)]);
        let samples = wind_field_at(&tr, &grid, 0.5).unwrap();
        assert_relative_eq!(samples[0].v, samples[1].v, max_relative = 1e-14);
    }

    #[test]
    fn wind_field_matches_per_cell_oracle() {
        let tr = track(vec![(0.0, -1.0, 2.0), (6.0, 5.0, 2.0)], 45.0, 25.0, 1.3);
        let mut cells = Vec::new();
        let mut id = 0;
        for i in -1..=1 {
            for j in -1..=1 {
                cells.push((id, 10.0 + i as f64, -3.0 + j as f64));
                id += 1;
            }
        }
        let grid = unit_grid(&cells);
        let t = 2.5;
        let samples = wind_field_at(&tr, &grid, t).unwrap();
        // cell-by-cell scalar substitution oracle
        let cx = -1.0 + (5.0 - -1.0) * (t / 6.0);
        let cy = 2.0;
        for (s, &(_, x, y)) in samples.iter().zip(&cells) {
            let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt().max(R_CLAMP_KM);
            let ratio: f64 = 25.0 / r;
            let oracle = 45.0 * ratio.powf(1.3 / 2.0) * (1.0 - ratio.powf(1.3)).exp().sqrt();
            assert_relative_eq!(s.v, oracle, max_relative = 1e-12);
        }
    }

    #[test]
    fn storm_hours_covers_window() {
        let tr = track(vec![(0.0, 0.0, 0.0), (24.0, 10.0, 0.0)], 40.0, 30.0, 1.5);
        let hours = tr.storm_hours();
        assert_eq!(hours.len(), 24);
        assert_eq!(hours[0], 0.0);
        assert_eq!(*hours.last().unwrap(), 23.0);
    }

    #[test]
    fn invalid_tracks_rejected() {
        let wp = |t: f64| Waypoint {
            t,
            pos: Point2::new(0.0, 0.0),
        };
        assert!(StormTrack::new(vec![wp(0.0)], 40.0, 30.0, 1.5, 0.0, 1.0).is_err());
        assert!(StormTrack::new(vec![wp(0.0), wp(0.0)], 40.0, 30.0, 1.5, 0.0, 1.0).is_err());
        assert!(StormTrack::new(vec![wp(0.0), wp(1.0)], -40.0, 30.0, 1.5, 0.0, 1.0).is_err());
        assert!(StormTrack::new(vec![wp(0.0), wp(1.0)], 40.0, 30.0, 1.5, 0.0, 2.0).is_err());
        assert!(StormTrack::new(vec![wp(0.0), wp(1.0)], 40.0, 30.0, 1.5, 1.0, 1.0).is_err());
    }
}
