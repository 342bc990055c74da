use serde::{Deserialize, Serialize};

use super::Vec2;

/// Geometric description of a convex domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Interval { a: f64, b: f64 },
    Disk { center: [f64; 2], radius: f64 },
    Ellipse { center: [f64; 2], radii: [f64; 2] },
    Rectangle { lo: [f64; 2], hi: [f64; 2] },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Shape::Interval { .. } => "interval",
            Shape::Disk { .. } => "disk",
            Shape::Ellipse { .. } => "ellipse",
            Shape::Rectangle { .. } => "rectangle",
        }
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        match *self {
            Shape::Interval { a, b } => b - a,
            Shape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Ellipse { radii, .. } => std::f64::consts::PI * radii[0] * radii[1],
            Shape::Rectangle { lo, hi } => (hi[0] - lo[0]) * (hi[1] - lo[1]),
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Shape::Interval { a, b } => b - a,
            Shape::Disk { radius, .. } => 2.0 * radius,
            Shape::Ellipse { radii, .. } => 2.0 * radii[0].max(radii[1]),
            Shape::Rectangle { lo, hi } => (hi[0] - lo[0]).hypot(hi[1] - lo[1]),
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`; the second coordinate is zero in 1D.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Shape::Interval { a, b } => ([a, 0.0], [b, 0.0]),
            Shape::Disk { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Shape::Ellipse { center, radii } => (
                [center[0] - radii[0], center[1] - radii[1]],
                [center[0] + radii[0], center[1] + radii[1]],
            ),
            Shape::Rectangle { lo, hi } => (lo, hi),
        }
    }

    pub fn is_uniformly_convex(&self) -> bool {
        matches!(self, Shape::Interval { .. } | Shape::Disk { .. } | Shape::Ellipse { .. })
    }

    /// Convex defining function: negative inside, zero on the boundary, with
    /// unit gradient on the boundary. Implemented as the signed distance.
    pub fn defining_function(&self, p: Vec2) -> f64 {
        match *self {
            Shape::Interval { a, b } => (a - p.x).max(p.x - b),
            Shape::Disk { center, radius } => (p - Vec2::from(center)).norm() - radius,
            Shape::Ellipse { center, radii } => {
                let q = p - Vec2::from(center);
                let (closest, inside) = ellipse_closest_point(q, radii);
                let d = (q - closest).norm();
                if inside {
                    -d
                } else {
                    d
                }
            }
            Shape::Rectangle { lo, hi } => {
                let dx = (lo[0] - p.x).max(p.x - hi[0]);
                let dy = (lo[1] - p.y).max(p.y - hi[1]);
                if dx <= 0.0 && dy <= 0.0 {
                    dx.max(dy)
                } else {
                    dx.max(0.0).hypot(dy.max(0.0))
                }
            }
        }
    }

    /// Outer unit normal at the boundary point closest to `p`
    /// (the gradient of the defining function away from the medial axis).
    pub fn outer_normal(&self, p: Vec2) -> Vec2 {
        match *self {
            Shape::Interval { a, b } => {
                if (p.x - a).abs() <= (p.x - b).abs() {
                    Vec2::new(-1.0, 0.0)
                } else {
                    Vec2::new(1.0, 0.0)
                }
            }
            Shape::Disk { center, .. } => {
                let q = p - Vec2::from(center);
                let n = q.norm();
                if n == 0.0 {
                    Vec2::new(1.0, 0.0)
                } else {
                    q / n
                }
            }
            Shape::Ellipse { center, radii } => {
                let q = p - Vec2::from(center);
                let (c, _) = ellipse_closest_point(q, radii);
                Vec2::new(c.x / (radii[0] * radii[0]), c.y / (radii[1] * radii[1])).normalize()
            }
            Shape::Rectangle { lo, hi } => {
                let gaps = [p.x - lo[0], hi[0] - p.x, p.y - lo[1], hi[1] - p.y];
                let normals = [
                    Vec2::new(-1.0, 0.0),
                    Vec2::new(1.0, 0.0),
                    Vec2::new(0.0, -1.0),
                    Vec2::new(0.0, 1.0),
                ];
                let k = (0..4)
                    .min_by(|&i, &j| gaps[i].partial_cmp(&gaps[j]).unwrap())
                    .unwrap();
                normals[k]
            }
        }
    }

    /// Area of the intersection of the axis-aligned box `[x0,x1]×[y0,y1]` with the domain (2D only).
    pub fn box_intersection_area(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        match *self {
            Shape::Interval { .. } => 0.0,
            Shape::Rectangle { lo, hi } => {
                let w = (x[1].min(hi[0]) - x[0].max(lo[0])).max(0.0);
                let h = (y[1].min(hi[1]) - y[0].max(lo[1])).max(0.0);
                w * h
            }
            Shape::Disk { center, radius } => {
                radius
                    * radius
                    * unit_disk_box_area(
                        [(x[0] - center[0]) / radius, (x[1] - center[0]) / radius],
                        [(y[0] - center[1]) / radius, (y[1] - center[1]) / radius],
                    )
            }
            Shape::Ellipse { center, radii } => {
                radii[0]
                    * radii[1]
                    * unit_disk_box_area(
                        [(x[0] - center[0]) / radii[0], (x[1] - center[0]) / radii[0]],
                        [(y[0] - center[1]) / radii[1], (y[1] - center[1]) / radii[1]],
                    )
            }
        }
    }
}

/// Closest point on the centered ellipse with semi-axes `radii` to `q`, and whether `q` is inside.
fn ellipse_closest_point(q: Vec2, radii: [f64; 2]) -> (Vec2, bool) {
    let inside = (q.x / radii[0]).powi(2) + (q.y / radii[1]).powi(2) < 1.0;
    // Work in the first quadrant with the major axis first.
    let swap = radii[1] > radii[0];
    let (a, b) = if swap { (radii[1], radii[0]) } else { (radii[0], radii[1]) };
    let (px, py) = if swap { (q.y.abs(), q.x.abs()) } else { (q.x.abs(), q.y.abs()) };

    let (cx, cy) = if py > 1e-14 * b {
        // Lagrange multiplier t solves sum (r_i p_i / (r_i^2 + t))^2 = 1 on (-b^2, inf).
        let g = |t: f64| (a * px / (a * a + t)).powi(2) + (b * py / (b * b + t)).powi(2) - 1.0;
        let mut lo = -b * b + 1e-15 * b * b;
        let mut hi = a * (px * px + py * py).sqrt() + a * a;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        (a * a * px / (a * a + t), b * b * py / (b * b + t))
    } else if a == b {
        if px == 0.0 {
            (0.0, b)
        } else {
            (a, 0.0)
        }
    } else {
        // On the major axis.
        let limit = (a * a - b * b) / a;
        if px < limit {
            let x = a * a * px / (a * a - b * b);
            (x, b * (1.0 - (x / a).powi(2)).max(0.0).sqrt())
        } else {
            (a, 0.0)
        }
    };
    let (cx, cy) = if swap { (cy, cx) } else { (cx, cy) };
    (Vec2::new(cx.copysign(q.x), cy.copysign(q.y)), inside)
}

/// Exact area of `[x0,x1]×[y0,y1]` intersected with the unit disk.
fn unit_disk_box_area(x: [f64; 2], y: [f64; 2]) -> f64 {
    let lo = x[0].max(-1.0);
    let hi = x[1].min(1.0);
    if hi <= lo || y[1] <= y[0] {
        return 0.0;
    }
    let s = |u: f64| (1.0 - u * u).max(0.0).sqrt();
    // Antiderivative of s.
    let big_s = |u: f64| {
        let u = u.clamp(-1.0, 1.0);
        0.5 * (u * s(u) + u.asin())
    };
    let mut cuts = vec![lo, hi];
    for &yy in &y {
        if yy.abs() < 1.0 {
            let u = s(yy);
            for c in [-u, u] {
                if c > lo && c < hi {
                    cuts.push(c);
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (u0, u1) = (w[0], w[1]);
        if u1 <= u0 {
            continue;
        }
        let m = 0.5 * (u0 + u1);
        let sm = s(m);
        let upper_is_s = sm <= y[1];
        let lower_is_s = -sm >= y[0];
        let upper = if upper_is_s { sm } else { y[1] };
        let lower = if lower_is_s { -sm } else { y[0] };
        if upper <= lower {
            continue;
        }
        let int_s = big_s(u1) - big_s(u0);
        let du = u1 - u0;
        let up = if upper_is_s { int_s } else { y[1] * du };
        let low = if lower_is_s { -int_s } else { y[0] * du };
        area += up - low;
    }
    area.max(0.0)
}
