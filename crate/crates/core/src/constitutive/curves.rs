//! Normalized along-fibre response curves.
//!
//! Every curve comes with its derivative so the tangent can be built
//! without finite differences. Force-velocity knots and coefficients are
//! expressed in the normalized rate `x = epsbar / epsbar0`.

/// Passive muscle fibre response and its derivative.
pub fn passive_muscle(l: f64) -> (f64, f64) {
    if l <= 1.0 {
        (0.0, 0.0)
    } else if l <= 1.25 {
        let d = l - 1.0;
        (2.353 * d * d, 2.0 * 2.353 * d)
    } else if l <= 1.5 {
        let d = l - 1.25;
        (3.44 * d * d + 1.18 * d + 0.147, 2.0 * 3.44 * d + 1.18)
    } else if l <= 1.65 {
        let d = l - 1.5;
        (0.427 * d * d + 2.90 * d + 0.656, 2.0 * 0.427 * d + 2.90)
    } else {
        (3.023 * (l - 1.65) + 1.1, 3.023)
    }
}

pub fn passive_fibre_stress(lambdabar: f64) -> f64 {
    passive_muscle(lambdabar).0
}

const FL_TERMS: [(f64, f64, f64); 7] = [
    (0.642, 1.29, 0.629),
    (0.325, 5.31, -4.52),
    (0.328, 6.74, 1.69),
    (0.015, 19.8, -7.39),
    (0.139, 8.04, 2.54),
    (0.0018, 32.2, -6.45),
    (0.012, 23.2, -2.64),
];

pub const FL_SUPPORT: (f64, f64) = (0.4, 1.75);

/// Active force-length response at the shifted stretch `l`, clamped at zero.
pub fn force_length(l: f64) -> (f64, f64) {
    if !(FL_SUPPORT.0..=FL_SUPPORT.1).contains(&l) {
        return (0.0, 0.0);
    }
    let (mut v, mut dv) = (0.0, 0.0);
    for (amp, freq, phase) in FL_TERMS {
        let arg = freq * l + phase;
        v += amp * arg.sin();
        dv += amp * freq * arg.cos();
    }
    if v <= 0.0 {
        (0.0, 0.0)
    } else {
        (v, dv)
    }
}

pub fn active_force_length(lambdabar: f64, c_sarco: f64) -> f64 {
    force_length(lambdabar + c_sarco).0
}

pub const FV_KNOTS: [f64; 5] = [-1.2, -0.25, 0.0, 0.05, 0.75];
pub const FV_PLATEAU: f64 = 1.5950;

/// Force-velocity factor. Below the first knot the fibre cannot hold load.
///
/// Pieces are closed on the left so the printed constants hold exactly at
/// the knots, e.g. the factor is 1 at zero rate.
pub fn force_velocity(epsbar: f64, epsbar0: f64) -> f64 {
    let x = epsbar / epsbar0;
    let [x1, x2, x3, x4, x5] = FV_KNOTS;
    let cubic = |d: f64, c: [f64; 4]| ((c[0] * d + c[1]) * d + c[2]) * d + c[3];
    if x <= x1 {
        0.0
    } else if x < x2 {
        cubic(x - x1, [0.2579, 0.1431, 0.0, 0.0])
    } else if x < x3 {
        cubic(x - x2, [29.8255, -0.9435, 0.9703, 0.3503])
    } else if x < x4 {
        cubic(x - x3, [-3165.6847, 186.1961, 6.0908, 1.0])
    } else if x < x5 {
        cubic(x - x4, [0.6882, -1.4139, 0.9678, 1.3743])
    } else {
        FV_PLATEAU
    }
}

/// Which linear coefficient to use on the aponeurosis/tendon piece over [1.01, 1.02].
///
/// The printed value 0.327640 leaves a jump of 0.1 at 1.02. `Continuous`
/// uses 10.327640, which closes the gap and also matches the slope of the
/// next piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApoVariant {
    #[default]
    Continuous,
    Printed,
}

impl ApoVariant {
    fn linear_coefficient(self) -> f64 {
        match self {
            ApoVariant::Continuous => 10.327640,
            ApoVariant::Printed => 0.327640,
        }
    }
}

/// Width of the optional blend that removes the 0.01 step at `lambda = 1`.
pub const APO_BLEND_WIDTH: f64 = 5e-4;

fn apo_raw(l: f64, variant: ApoVariant) -> (f64, f64) {
    if l <= 1.0 {
        (0.0, 0.0)
    } else if l <= 1.01 {
        let d = l - 1.0;
        (
            515.882034 * d * d + 0.01 * d + 0.01,
            2.0 * 515.882034 * d + 0.01,
        )
    } else if l <= 1.02 {
        let d = l - 1.01;
        let b = variant.linear_coefficient();
        (
            600.590242 * d * d + b * d + 0.06168820,
            2.0 * 600.590242 * d + b,
        )
    } else if l <= 1.15 {
        let d = l - 1.02;
        (
            -9.975321 * d * d + 22.3394455 * d + 0.2250236,
            -2.0 * 9.975321 * d + 22.3394455,
        )
    } else {
        (19.7458618 * (l - 1.15) + 2.960568, 19.7458618)
    }
}

/// Aponeurosis/tendon fibre response and derivative.
pub fn apo_ten(l: f64, variant: ApoVariant, regularized: bool) -> (f64, f64) {
    if regularized && l > 1.0 && l < 1.0 + APO_BLEND_WIDTH {
        // Linear ramp from 0 to the curve value at the end of the blend.
        let end = 1.0 + APO_BLEND_WIDTH;
        let (v_end, _) = apo_raw(end, variant);
        let slope = v_end / APO_BLEND_WIDTH;
        return (slope * (l - 1.0), slope);
    }
    apo_raw(l, variant)
}

pub fn apo_ten_fibre_stress(lambdabar: f64) -> f64 {
    apo_ten(lambdabar, ApoVariant::Printed, false).0
}
