//! Closest point on an axis-aligned ellipsoid.
//!
//! Robust bisection on the Lagrange multiplier after reflecting the query into
//! the first octant and sorting the axes in decreasing order. Handles points
//! inside and outside the ellipsoid, and the degenerate cases where the query
//! lies on a coordinate plane.

fn robust_length(v: &[f64]) -> f64 {
    let m = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * v.iter().map(|x| (x / m).powi(2)).sum::<f64>().sqrt()
}

// Root of sum_i (r_i z_i / (s + r_i))^2 - 1 with r_last = 1.
fn bisect_root(r: &[f64], z: &[f64], g: f64) -> f64 {
    let n = r.len();
    let numer: Vec<f64> = r.iter().zip(z).map(|(ri, zi)| ri * zi).collect();
    let mut s0 = z[n - 1] - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { robust_length(&numer) - 1.0 };
    let mut s = 0.0;
    for _ in 0..2200 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let gs: f64 = numer
            .iter()
            .zip(r)
            .map(|(ni, ri)| (ni / (s + ri)).powi(2))
            .sum::<f64>()
            - 1.0;
        if gs > 0.0 {
            s0 = s;
        } else if gs < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

// e0 >= e1 > 0, y0, y1 >= 0.
fn ellipse(e: [f64; 2], y: [f64; 2]) -> [f64; 2] {
    if y[1] > 0.0 {
        if y[0] > 0.0 {
            let z = [y[0] / e[0], y[1] / e[1]];
            let g = z[0] * z[0] + z[1] * z[1] - 1.0;
            if g != 0.0 {
                let r0 = (e[0] / e[1]).powi(2);
                let s = bisect_root(&[r0, 1.0], &z, g);
                [r0 * y[0] / (s + r0), y[1] / (s + 1.0)]
            } else {
                y
            }
        } else {
            [0.0, e[1]]
        }
    } else {
        let numer = e[0] * y[0];
        let denom = e[0] * e[0] - e[1] * e[1];
        if numer < denom {
            let xde = numer / denom;
            [e[0] * xde, e[1] * (1.0 - xde * xde).max(0.0).sqrt()]
        } else {
            [e[0], 0.0]
        }
    }
}

// e0 >= e1 >= e2 > 0, y >= 0 component-wise.
fn ellipsoid_sorted(e: [f64; 3], y: [f64; 3]) -> [f64; 3] {
    if y[2] > 0.0 {
        if y[1] > 0.0 {
            if y[0] > 0.0 {
                let z = [y[0] / e[0], y[1] / e[1], y[2] / e[2]];
                let g = z.iter().map(|v| v * v).sum::<f64>() - 1.0;
                if g != 0.0 {
                    let r0 = (e[0] / e[2]).powi(2);
                    let r1 = (e[1] / e[2]).powi(2);
                    let s = bisect_root(&[r0, r1, 1.0], &z, g);
                    [r0 * y[0] / (s + r0), r1 * y[1] / (s + r1), y[2] / (s + 1.0)]
                } else {
                    y
                }
            } else {
                let [x1, x2] = ellipse([e[1], e[2]], [y[1], y[2]]);
                [0.0, x1, x2]
            }
        } else if y[0] > 0.0 {
            let [x0, x2] = ellipse([e[0], e[2]], [y[0], y[2]]);
            [x0, 0.0, x2]
        } else {
            [0.0, 0.0, e[2]]
        }
    } else {
        let d0 = e[0] * e[0] - e[2] * e[2];
        let d1 = e[1] * e[1] - e[2] * e[2];
        let n0 = e[0] * y[0];
        let n1 = e[1] * y[1];
        if n0 < d0 && n1 < d1 {
            let xde0 = n0 / d0;
            let xde1 = n1 / d1;
            let discr = 1.0 - xde0 * xde0 - xde1 * xde1;
            if discr > 0.0 {
                return [e[0] * xde0, e[1] * xde1, e[2] * discr.sqrt()];
            }
        }
        let [x0, x1] = ellipse([e[0], e[1]], [y[0], y[1]]);
        [x0, x1, 0.0]
    }
}

/// Closest point on the ellipsoid `sum (x_i / e_i)^2 = 1` to `p`, and the
/// Euclidean distance to it.
pub fn closest_point_on_ellipsoid(semi_axes: [f64; 3], p: [f64; 3]) -> ([f64; 3], f64) {
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| semi_axes[j].total_cmp(&semi_axes[i]));
    let e = order.map(|i| semi_axes[i]);
    let y = order.map(|i| p[i].abs());
    let x = ellipsoid_sorted(e, y);

    let mut closest = [0.0; 3];
    for (k, &i) in order.iter().enumerate() {
        closest[i] = x[k].copysign(if p[i] == 0.0 { 1.0 } else { p[i] });
    }
    let dist = robust_length(&[closest[0] - p[0], closest[1] - p[1], closest[2] - p[2]]);
    (closest, dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_surface(e: [f64; 3], x: [f64; 3]) -> f64 {
        (0..3).map(|i| (x[i] / e[i]).powi(2)).sum::<f64>() - 1.0
    }

    // Brute-force minimum over a dense angular grid, refined locally.
    fn brute(e: [f64; 3], p: [f64; 3]) -> f64 {
        let mut best = (f64::MAX, 0.0, 0.0);
        let n = 400;
        for i in 0..=n {
            let th = std::f64::consts::PI * i as f64 / n as f64;
            for j in 0..(2 * n) {
                let ph = std::f64::consts::PI * j as f64 / n as f64;
                let q = [
                    e[0] * th.sin() * ph.cos(),
                    e[1] * th.sin() * ph.sin(),
                    e[2] * th.cos(),
                ];
                let d = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2)).sqrt();
                if d < best.0 {
                    best = (d, th, ph);
                }
            }
        }
        let (mut d, mut th, mut ph) = best;
        let mut h = std::f64::consts::PI / n as f64;
        for _ in 0..60 {
            let mut improved = false;
            for (dt, dp) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
                let (t2, p2) = (th + dt, ph + dp);
                let q = [
                    e[0] * t2.sin() * p2.cos(),
                    e[1] * t2.sin() * p2.sin(),
                    e[2] * t2.cos(),
                ];
                let dd = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2)).sqrt();
                if dd < d {
                    (d, th, ph, improved) = (dd, t2, p2, true);
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
        d
    }

    #[test]
    fn matches_brute_force_inside_and_outside() {
        let e = [160.0, 120.0, 110.0];
        let pts = [
            [10.0, 20.0, 105.0],
            [10.0, 20.0, 130.0],
            [-50.0, 70.0, 40.0],
            [150.0, -5.0, 12.0],
            [0.0, 0.0, 100.0],
            [0.0, 30.0, 0.0],
            [3.0, 0.0, -90.0],
        ];
        for p in pts {
            let (x, d) = closest_point_on_ellipsoid(e, p);
            assert!(on_surface(e, x).abs() < 1e-9, "{p:?} -> {x:?}");
            let b = brute(e, p);
            assert!((d - b).abs() < 1e-6, "{p:?}: {d} vs {b}");
        }
    }

    #[test]
    fn centre_goes_to_shortest_axis() {
        let (x, d) = closest_point_on_ellipsoid([160.0, 120.0, 110.0], [0.0, 0.0, 0.0]);
        assert_eq!(d, 110.0);
        assert_eq!(x[2].abs(), 110.0);
    }

    #[test]
    fn unsorted_axes() {
        let (x, d) = closest_point_on_ellipsoid([50.0, 80.0, 200.0], [0.0, 0.0, 230.0]);
        assert!((d - 30.0).abs() < 1e-12);
        assert!((x[2] - 200.0).abs() < 1e-12);
    }
}
