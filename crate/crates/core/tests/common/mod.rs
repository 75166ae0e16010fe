//! Test oracles: double-double arithmetic for the output spectrum and an
//! adaptive Gauss–Kronrod integrator.

#![allow(dead_code, clippy::excessive_precision)]

use std::ops::{Add, Div, Mul, Sub};

use spinmem::rng::{Channel, CounterRng};
use spinmem::ExperimentParams;

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`, about 106 bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const PI: Dd = Dd {
        hi: std::f64::consts::PI,
        lo: 1.2246467991473532e-16,
    };

    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + Dd {
            hi: -o.hi,
            lo: -o.lo,
        }
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::new(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

/// Output PSD by direct substitution, evaluated in double-double:
/// `ε_y S_x/2 + ¼a²S_x²/((Ω−ω)² + Γ²)·(a²J_x²S_xε_z/2 + 2ΓJ_x + 2k)` with
/// angular `Ω`, `ω`, `Γ`.
pub fn phi_oracle(p: &ExperimentParams, freq_hz: f64) -> f64 {
    let d = Dd::new;
    let two_pi = d(2.0) * Dd::PI;
    let a = d(p.coupling_a);
    let sx = d(p.flux_sx);
    let jx = d(p.spin_jx);
    let det = two_pi * (d(p.larmor_hz) - d(freq_hz));
    let gamma = two_pi * d(p.gamma_hz);
    let a2 = a * a;
    let lorentz = d(0.25) * a2 * sx * sx / (det * det + gamma * gamma);
    let drive = a2 * jx * jx * sx * d(p.eps_z) / d(2.0) + d(2.0) * gamma * jx + d(2.0) * d(p.tech_noise_k);
    (d(p.eps_y) * sx / d(2.0) + lorentz * drive).to_f64()
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Kronrod estimate and |Kronrod − Gauss| on `[a, b]`.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive G7K15 quadrature to relative tolerance `rel_tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let mut parts = vec![(a, b, gk15(f, a, b))];
    for _ in 0..20_000 {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= rel_tol * total.abs() {
            return total;
        }
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].2 .1.total_cmp(&parts[j].2 .1))
            .expect("non-empty");
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(f, lo, mid)));
        parts.push((mid, hi, gk15(f, mid, hi)));
    }
    panic!("quadrature did not converge on [{a}, {b}]");
}

/// Deterministic uniform stream for drawing random parameter sets.
pub struct Draws {
    rng: CounterRng,
    step: u64,
    spare: Option<f64>,
}

impl Draws {
    pub fn new(seed: u64) -> Self {
        Draws {
            rng: CounterRng::new(seed, 0),
            step: 0,
            spare: None,
        }
    }

    pub fn uniform(&mut self) -> f64 {
        if let Some(u) = self.spare.take() {
            return u;
        }
        let (u, v) = self.rng.uniform_pair(self.step, Channel::Langevin);
        self.step += 1;
        self.spare = Some(v);
        u
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn log_range(&mut self, lo: f64, hi: f64) -> f64 {
        (lo.ln() + (hi.ln() - lo.ln()) * self.uniform()).exp()
    }

    /// Parameters spread over several decades around the default set.
    pub fn params(&mut self) -> ExperimentParams {
        let larmor_hz = self.log_range(500.0, 50_000.0);
        ExperimentParams {
            coupling_a: self.log_range(1e-11, 1e-7),
            flux_sx: self.log_range(1e10, 1e15),
            spin_jx: self.log_range(1e8, 1e13),
            larmor_hz,
            gamma_hz: self.log_range(1e-3, 0.1) * larmor_hz,
            eps_y: self.log_range(0.1, 10.0),
            eps_z: self.log_range(0.1, 10.0),
            tech_noise_k: if self.uniform() < 0.5 {
                0.0
            } else {
                self.log_range(1e6, 1e14)
            },
        }
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}
