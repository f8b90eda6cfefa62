//! Exact propagators for a Bloch vector under a constant effective field.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Rotation matrix for dr/dt = Ω × r over `t` seconds, Ω in rad/s.
pub fn rotation_matrix(omega: Vec3, t: f64) -> Mat3 {
    let norm = (omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]).sqrt();
    let theta = norm * t;
    if norm == 0.0 || theta == 0.0 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let n = [omega[0] / norm, omega[1] / norm, omega[2] / norm];
    let (s, c) = theta.sin_cos();
    let k = 1.0 - c;
    [
        [c + n[0] * n[0] * k, n[0] * n[1] * k - n[2] * s, n[0] * n[2] * k + n[1] * s],
        [n[1] * n[0] * k + n[2] * s, c + n[1] * n[1] * k, n[1] * n[2] * k - n[0] * s],
        [n[2] * n[0] * k - n[1] * s, n[2] * n[1] * k + n[0] * s, c + n[2] * n[2] * k],
    ]
}

pub fn apply(m: &Mat3, r: Vec3) -> Vec3 {
    std::array::from_fn(|i| m[i][0] * r[0] + m[i][1] * r[1] + m[i][2] * r[2])
}

pub fn compose(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

/// Effective field of a drive with Rabi frequency `omega` (rad/s), phase
/// `phase` (rad) and detuning `delta` (rad/s).
pub fn drive_field(omega: f64, phase: f64, delta: f64) -> Vec3 {
    let (s, c) = phase.sin_cos();
    [omega * c, omega * s, delta]
}

/// Free precession of the transverse components by `angle` radians.
pub fn precess(r: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    [r[0] * c - r[1] * s, r[0] * s + r[1] * c, r[2]]
}

pub fn norm(r: Vec3) -> f64 {
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}
