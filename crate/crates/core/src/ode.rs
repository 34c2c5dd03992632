//! Dormand–Prince 8(5,3) with 7th-order dense output.
//!
//! Step control follows Hairer's DOP853: error norm mixing the 5th and 3rd
//! order embedded estimates, step factor bounded in [1/3, 6] with safety 0.9.

// tableau constants are quoted to the digits of the published coefficients
#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Controls {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_max: f64,
}

impl Default for Controls {
    fn default() -> Self {
        Controls { rtol: 1e-10, atol: 1e-12, max_steps: 200_000, h_max: f64::INFINITY }
    }
}

pub trait System {
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &mut [f64])> System for F {
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self(t, y, dy)
    }
}

/// Continuous extension over one accepted step.
#[derive(Clone, Debug)]
pub struct Dense {
    pub t_old: f64,
    pub h: f64,
    cont: [Vec<f64>; 8],
}

impl Dense {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.cont[0].len()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = (t - self.t_old) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        for i in 0..out.len() {
            let conpar = c[4][i] + (c[5][i] + (c[6][i] + c[7][i] * s) * s1) * s;
            out[i] = c[0][i] + (c[1][i] + (c[2][i] + (c[3][i] + conpar * s1) * s) * s1) * s;
        }
    }
}

pub struct StepInfo<'a> {
    pub t_old: f64,
    pub t_new: f64,
    pub y_old: &'a [f64],
    pub y_new: &'a [f64],
    pub dense: Option<&'a Dense>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Continue,
    Stop,
}

/// Integrates from `t0` to `t_end` (forward only). `on_step` sees every
/// accepted step and may stop early; the returned state is where the
/// integration ended.
pub fn integrate<S: System + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    ctrl: &Controls,
    dense: bool,
    mut on_step: impl FnMut(&StepInfo) -> Step,
) -> Result<(f64, Vec<f64>)> {
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    if t_end <= t0 {
        return Ok((t, y));
    }
    let span = t_end - t0;
    let mut k: [Vec<f64>; 13] = std::array::from_fn(|_| vec![0.0; n]);
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut k_new = vec![0.0; n];
    sys.rhs(t, &y, &mut k[0]);
    let mut h = initial_step(sys, t, &y, &k[0], ctrl).min(span);
    let mut last_rejected = false;
    let mut steps = 0usize;
    let mut dense_buf: Option<Dense> = None;

    loop {
        if steps >= ctrl.max_steps {
            return Err(fail(t, &y, "maximum number of steps reached"));
        }
        if h.abs() < 1e-14 * t.abs().max(1.0) || !h.is_finite() {
            return Err(fail(t, &y, "step size underflow"));
        }
        let last = t + h >= t_end || (t_end - (t + h)) < 1e-12 * span;
        if last {
            h = t_end - t;
        }
        steps += 1;

        // stages 2..12
        for s in 1..12 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s].iter().enumerate() {
                    if *a != 0.0 {
                        acc += a * k[j][i];
                    }
                }
                y_stage[i] = y[i] + h * acc;
            }
            let (_, rest) = k.split_at_mut(s);
            sys.rhs(t + C[s] * h, &y_stage, &mut rest[0]);
        }
        // 8th order solution and error estimate
        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..n {
            let mut inc = 0.0;
            for (j, b) in B.iter().enumerate() {
                inc += b * k[j][i];
            }
            y_new[i] = y[i] + h * inc;
            let sk = ctrl.atol + ctrl.rtol * y[i].abs().max(y_new[i].abs());
            let e2 = inc - BHH[0] * k[0][i] - BHH[1] * k[8][i] - BHH[2] * k[11][i];
            let mut e1 = 0.0;
            for (j, e) in ER.iter().enumerate() {
                e1 += e * k[j][i];
            }
            err2 += (e2 / sk).powi(2);
            err += (e1 / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err * (1.0 / (deno * n as f64)).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            last_rejected = true;
            continue;
        }
        let fac11 = err.powf(1.0 / 8.0);
        let fac = (fac11 / SAFE).clamp(1.0 / 6.0, 3.0);
        let mut h_new = h / fac;

        if err <= 1.0 {
            sys.rhs(t + h, &y_new, &mut k_new);
            if dense {
                dense_buf = Some(build_dense(sys, t, h, &y, &y_new, &k, &k_new));
            }
            let info = StepInfo {
                t_old: t,
                t_new: if last { t_end } else { t + h },
                y_old: &y,
                y_new: &y_new,
                dense: dense_buf.as_ref(),
            };
            let verdict = on_step(&info);
            t = info.t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k[0], &mut k_new);
            if last || verdict == Step::Stop {
                return Ok((t, y));
            }
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
        } else {
            h_new = h / (fac11 / SAFE).min(3.0);
            last_rejected = true;
        }
        h = h_new.min(ctrl.h_max);
    }
}

fn fail(t: f64, y: &[f64], reason: &str) -> Error {
    let mut row = vec![t];
    row.extend_from_slice(y);
    Error::Integration { t, reason: reason.into(), partial: vec![row] }
}

fn initial_step<S: System + ?Sized>(sys: &S, t: f64, y: &[f64], f0: &[f64], ctrl: &Controls) -> f64 {
    let n = y.len();
    let sk: Vec<f64> = y.iter().map(|v| ctrl.atol + ctrl.rtol * v.abs()).collect();
    let dnf: f64 = (0..n).map(|i| (f0[i] / sk[i]).powi(2)).sum();
    let dny: f64 = (0..n).map(|i| (y[i] / sk[i]).powi(2)).sum();
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
    h = h.min(ctrl.h_max);
    let y1: Vec<f64> = (0..n).map(|i| y[i] + h * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t + h, &y1, &mut f1);
    let der2 = (0..n).map(|i| ((f1[i] - f0[i]) / sk[i]).powi(2)).sum::<f64>().sqrt() / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h.abs() * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(1.0 / 8.0)
    };
    (100.0 * h).min(h1).min(ctrl.h_max)
}

#[allow(clippy::too_many_arguments)]
fn build_dense<S: System + ?Sized>(
    sys: &S,
    t: f64,
    h: f64,
    y: &[f64],
    y_new: &[f64],
    k: &[Vec<f64>; 13],
    k_new: &[f64],
) -> Dense {
    let n = y.len();
    let mut cont: [Vec<f64>; 8] = std::array::from_fn(|_| vec![0.0; n]);
    for i in 0..n {
        let ydiff = y_new[i] - y[i];
        let bspl = h * k[0][i] - ydiff;
        cont[0][i] = y[i];
        cont[1][i] = ydiff;
        cont[2][i] = bspl;
        cont[3][i] = ydiff - h * k_new[i] - bspl;
    }
    // extra stages 14..16; stage 13 is f(t + h, y_new)
    let mut ks: [Vec<f64>; 16] = std::array::from_fn(|_| vec![0.0; n]);
    for j in 0..12 {
        ks[j].copy_from_slice(&k[j]);
    }
    ks[12].copy_from_slice(k_new);
    let mut y_stage = vec![0.0; n];
    for (s, row) in A_EXTRA.iter().enumerate() {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, a) in row.iter().enumerate() {
                if *a != 0.0 {
                    acc += a * ks[j][i];
                }
            }
            y_stage[i] = y[i] + h * acc;
        }
        let (_, rest) = ks.split_at_mut(13 + s);
        sys.rhs(t + C_EXTRA[s] * h, &y_stage, &mut rest[0]);
    }
    for (r, drow) in D.iter().enumerate() {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, d) in drow.iter().enumerate() {
                if *d != 0.0 {
                    acc += d * ks[j][i];
                }
            }
            cont[4 + r][i] = h * acc;
        }
    }
    Dense { t_old: t, h, cont }
}

const SAFE: f64 = 0.9;

const C: [f64; 12] = [
    0.0,
    0.526001519587677318785587544488E-01,
    0.789002279381515978178381316732E-01,
    0.118350341907227396726757197510E+00,
    0.281649658092772603273242802490E+00,
    0.333333333333333333333333333333E+00,
    0.25E+00,
    0.307692307692307692307692307692E+00,
    0.651282051282051282051282051282E+00,
    0.6E+00,
    0.857142857142857142857142857142E+00,
    1.0,
];

const C_EXTRA: [f64; 3] = [0.1, 0.2, 0.777777777777777777777777777778];

// Row s holds the coefficients of stage s+1 on stages 1..s.
const A: [[f64; 11]; 12] = [
    [0.0; 11],
    [5.26001519587677318785587544488E-2, 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.],
    [1.97250569845378994544595329183E-2, 5.91751709536136983633785987549E-2, 0., 0., 0., 0., 0., 0., 0., 0., 0.],
    [2.95875854768068491816892993775E-2, 0., 8.87627564304205475450678981324E-2, 0., 0., 0., 0., 0., 0., 0., 0.],
    [
        2.41365134159266685502369798665E-1, 0., -8.84549479328286085344864962717E-1,
        9.24834003261792003115737966543E-1, 0., 0., 0., 0., 0., 0., 0.,
    ],
    [
        3.7037037037037037037037037037E-2, 0., 0., 1.70828608729473871279604482173E-1,
        1.25467687566822425016691814123E-1, 0., 0., 0., 0., 0., 0.,
    ],
    [
        3.7109375E-2, 0., 0., 1.70252211019544039314978060272E-1,
        6.02165389804559606850219397283E-2, -1.7578125E-2, 0., 0., 0., 0., 0.,
    ],
    [
        3.70920001185047927108779319836E-2, 0., 0., 1.70383925712239993810214054705E-1,
        1.07262030446373284651809199168E-1, -1.53194377486244017527936158236E-2,
        8.27378916381402288758473766002E-3, 0., 0., 0., 0.,
    ],
    [
        6.24110958716075717114429577812E-1, 0., 0., -3.36089262944694129406857109825E0,
        -8.68219346841726006818189891453E-1, 2.75920996994467083049415600797E1,
        2.01540675504778934086186788979E1, -4.34898841810699588477366255144E1, 0., 0., 0.,
    ],
    [
        4.77662536438264365890433908527E-1, 0., 0., -2.48811461997166764192642586468E0,
        -5.90290826836842996371446475743E-1, 2.12300514481811942347288949897E1,
        1.52792336328824235832596922938E1, -3.32882109689848629194453265587E1,
        -2.03312017085086261358222928593E-2, 0., 0.,
    ],
    [
        -9.3714243008598732571704021658E-1, 0., 0., 5.18637242884406370830023853209E0,
        1.09143734899672957818500254654E0, -8.14978701074692612513997267357E0,
        -1.85200656599969598641566180701E1, 2.27394870993505042818970056734E1,
        2.49360555267965238987089396762E0, -3.0467644718982195003823669022E0, 0.,
    ],
    [
        2.27331014751653820792359768449E0, 0., 0., -1.05344954667372501984066689879E1,
        -2.00087205822486249909675718444E0, -1.79589318631187989172765950534E1,
        2.79488845294199600508499808837E1, -2.85899827713502369474065508674E0,
        -8.87285693353062954433549289258E0, 1.23605671757943030647266201528E1,
        6.43392746015763530355970484046E-1,
    ],
];

const B: [f64; 12] = [
    5.42937341165687622380535766363E-2,
    0.,
    0.,
    0.,
    0.,
    4.45031289275240888144113950566E0,
    1.89151789931450038304281599044E0,
    -5.8012039600105847814672114227E0,
    3.1116436695781989440891606237E-1,
    -1.52160949662516078556178806805E-1,
    2.01365400804030348374776537501E-1,
    4.47106157277725905176885569043E-2,
];

// indices 0, 8, 11 (stages 1, 9, 12)
const BHH: [f64; 3] = [
    0.244094488188976377952755905512E+00,
    0.733846688281611857341361741547E+00,
    0.220588235294117647058823529412E-01,
];

const ER: [f64; 12] = [
    0.1312004499419488073250102996E-01,
    0.,
    0.,
    0.,
    0.,
    -0.1225156446376204440720569753E+01,
    -0.4957589496572501915214079952E+00,
    0.1664377182454986536961530415E+01,
    -0.3503288487499736816886487290E+00,
    0.3341791187130174790297318841E+00,
    0.8192320648511571246570742613E-01,
    -0.2235530786388629525884427845E-01,
];

// Stages 14..16 over stages 1..13 (stage 13 is f at the new point) and
// the previous extra stages.
const A_EXTRA: [[f64; 15]; 3] = [
    [
        5.61675022830479523392909219681E-2, 0., 0., 0., 0., 0., 2.53500210216624811088794765333E-1,
        -2.46239037470802489917441475441E-1, -1.24191423263816360469010140626E-1,
        1.5329179827876569731206322685E-1, 8.20105229563468988491666602057E-3,
        7.56789766054569976138603589584E-3, -8.298E-3, 0., 0.,
    ],
    [
        3.18346481635021405060768473261E-2, 0., 0., 0., 0., 2.83009096723667755288322961402E-2,
        5.35419883074385676223797384372E-2, -5.49237485713909884646569340306E-2, 0., 0.,
        -1.08347328697249322858509316994E-4, 3.82571090835658412954920192323E-4,
        -3.40465008687404560802977114492E-4, 1.41312443674632500278074618366E-1, 0.,
    ],
    [
        -4.28896301583791923408573538692E-1, 0., 0., 0., 0., -4.69762141536116384314449447206E0,
        7.68342119606259904184240953878E0, 4.06898981839711007970213554331E0,
        3.56727187455281109270669543021E-1, 0., 0., 0., -1.39902416515901462129418009734E-3,
        2.9475147891527723389556272149E0, -9.15095847217987001081870187138E0,
    ],
];

// Dense output weights over stages 1..16.
const D: [[f64; 16]; 4] = [
    [
        -0.84289382761090128651353491142E+01, 0., 0., 0., 0., 0.56671495351937776962531783590E+00,
        -0.30689499459498916912797304727E+01, 0.23846676565120698287728149680E+01,
        0.21170345824450282767155149946E+01, -0.87139158377797299206789907490E+00,
        0.22404374302607882758541771650E+01, 0.63157877876946881815570249290E+00,
        -0.88990336451333310820698117400E-01, 0.18148505520854727256656404962E+02,
        -0.91946323924783554000451984436E+01, -0.44360363875948939664310572000E+01,
    ],
    [
        0.10427508642579134603413151009E+02, 0., 0., 0., 0., 0.24228349177525818288430175319E+03,
        0.16520045171727028198505394887E+03, -0.37454675472269020279518312152E+03,
        -0.22113666853125306036270938578E+02, 0.77334326684722638389603898808E+01,
        -0.30674084731089398182061213626E+02, -0.93321305264302278729567221706E+01,
        0.15697238121770843886131091075E+02, -0.31139403219565177677282850411E+02,
        -0.93529243588444783865713862664E+01, 0.35816841486394083752465898540E+02,
    ],
    [
        0.19985053242002433820987653617E+02, 0., 0., 0., 0., -0.38703730874935176555105901742E+03,
        -0.18917813819516756882830838328E+03, 0.52780815920542364900561016686E+03,
        -0.11573902539959630126141871134E+02, 0.68812326946963000169666922661E+01,
        -0.10006050966910838403183860980E+01, 0.77771377980534432092869265740E+00,
        -0.27782057523535084065932004339E+01, -0.60196695231264120758267380846E+02,
        0.84320405506677161018159903784E+02, 0.11992291136182789328035130030E+02,
    ],
    [
        -0.25693933462703749003312586129E+02, 0., 0., 0., 0., -0.15418974869023643374053993627E+03,
        -0.23152937917604549567536039109E+03, 0.35763911791061412378285349910E+03,
        0.93405324183624310003907691704E+02, -0.37458323136451633156875139351E+02,
        0.10409964950896230045147246184E+03, 0.29840293426660503123344363579E+02,
        -0.43533456590011143754432175058E+02, 0.96324553959188282948394950600E+02,
        -0.39177261675615439165231486172E+02, -0.14972683625798562581422125276E+03,
    ],
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_to_tolerance() {
        let sys = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let (t, y) = integrate(&sys, 0.0, &[1.0], 5.0, &Controls::default(), false, |_| Step::Continue)
            .unwrap();
        assert_eq!(t, 5.0);
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn harmonic_oscillator_and_dense_output() {
        let sys = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let mut worst: f64 = 0.0;
        let mut steps = 0;
        let (_, y) = integrate(&sys, 0.0, &[0.0, 1.0], 20.0, &Controls::default(), true, |s| {
            steps += 1;
            let d = s.dense.unwrap();
            for j in 1..8 {
                let tm = s.t_old + (s.t_new - s.t_old) * j as f64 / 8.0;
                let v = d.eval(tm);
                worst = worst.max((v[0] - tm.sin()).abs()).max((v[1] - tm.cos()).abs());
            }
            // endpoints are reproduced exactly
            assert!((d.eval(s.t_new)[0] - s.y_new[0]).abs() < 1e-13);
            Step::Continue
        })
        .unwrap();
        assert!((y[0] - 20f64.sin()).abs() < 1e-9);
        assert!(worst < 1e-9, "dense error {worst}");
        assert!(steps < 200);
    }

    #[test]
    fn early_stop_and_blowup() {
        let sys = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        // y = 1/(1 - t) blows up at t = 1
        let r = integrate(&sys, 0.0, &[1.0], 2.0, &Controls::default(), false, |_| Step::Continue);
        match r {
            Err(Error::Integration { t, .. }) => assert!((t - 1.0).abs() < 1e-6, "{t}"),
            other => panic!("{other:?}"),
        }
        let (t, _) =
            integrate(&sys, 0.0, &[1.0], 0.9, &Controls::default(), false, |s| {
                if s.t_new > 0.5 { Step::Stop } else { Step::Continue }
            })
            .unwrap();
        assert!(t > 0.5 && t < 0.9);
    }
}
