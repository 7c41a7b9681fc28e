//! Monte Carlo validation of the probabilistic claims: fair square
//! crossings, circuit sandwiches, the four-strip floor, nodal trapping,
//! positive association, crossing composition, and law symmetries.

use signperc::constants::{
    estimate_alpha_s, phi_bound, AlphaCurvePoint, DecorrBudget,
};
use signperc::coloring::Coloring;
use signperc::coupling::{tv_exact, BlockGaussian};
use signperc::experiments::{
    fkg_check, run, small_box_positivity, EventSpec, Experiment, FieldSpec,
};
use signperc::kernels::Kernel;
use signperc::lattice::{enumerate, Box2, Enumeration, Lattice};
use signperc::percolation::{
    crosses, cross_to_window, four_strip_link, quad_nodal_crossing, Color, Quad, SidePair,
};
use signperc::sampler::{CirculantGrid, RasterGrid};

const EPS: f64 = 0.5;

/// Joint sampler for hand-rolled replicate loops: one circulant grid per
/// window, with exact integer mapping from lattice keys to raster cells.
struct Rig {
    e: Enumeration,
    grid: CirculantGrid,
    idx: Vec<usize>,
}

impl Rig {
    fn new(kernel: &Kernel, window: &Box2, eps: f64) -> Rig {
        let lattice = Lattice::face_centered_square(eps).unwrap();
        let e = enumerate(&lattice, window);
        let raster = RasterGrid::covering(window, eps / 2.0).unwrap();
        let grid = CirculantGrid::auto(kernel, &raster).unwrap();
        let raster = grid.grid().clone();
        let idx = e
            .keys
            .iter()
            .map(|&(i, j)| raster.index((i - raster.i0) as usize, (j - raster.j0) as usize))
            .collect();
        Rig { e, grid, idx }
    }

    fn coloring(&self, seed: u64) -> Coloring {
        let f = self.grid.sample(seed);
        Coloring::from_signs(self.idx.iter().map(|&i| f.values[i] >= 0.0))
    }
}

fn se(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt().max(1.0 / n)
}

fn crossing_estimate(scale: f64, rho: f64, reps: u64, seed: u64) -> (f64, f64) {
    let exp = Experiment::new(
        FieldSpec::Kernel(Kernel::bargmann_fock()),
        EPS,
        EventSpec::Crossing { rho, color: Color::Black },
        vec![scale],
        reps,
        seed,
    );
    let row = &run(&exp).unwrap().rows[0];
    (row.p_hat, se(row.p_hat, reps as f64))
}

#[test]
fn square_crossing_probability_is_one_half() {
    let exp = Experiment::new(
        FieldSpec::Kernel(Kernel::bargmann_fock()),
        EPS,
        EventSpec::Crossing { rho: 1.0, color: Color::Black },
        vec![4.0],
        4000,
        0x5157,
    );
    let row = &run(&exp).unwrap().rows[0];
    assert!(
        row.wilson_lo <= 0.5 && 0.5 <= row.wilson_hi,
        "99% interval [{}, {}] misses 1/2",
        row.wilson_lo,
        row.wilson_hi
    );
}

#[test]
fn circuit_probability_sandwich() {
    // Gluing crossings of aspect-4 rectangles around the annulus bounds the
    // circuit from below; a single aspect-2 crossing contains it from above.
    let s = 4.0;
    let reps = 4000;
    let (f4, se4) = crossing_estimate(s, 4.0, reps, 11);
    let (f2, se2) = crossing_estimate(s, 2.0, reps, 12);
    let exp = Experiment::new(
        FieldSpec::Kernel(Kernel::bargmann_fock()),
        EPS,
        EventSpec::Circuit { ratio: 2.0, color: Color::Black },
        vec![s],
        reps,
        13,
    );
    let row = &run(&exp).unwrap().rows[0];
    let (pa, sea) = (row.p_hat, se(row.p_hat, reps as f64));

    let floor = (f4 - 3.0 * se4).max(0.0).powi(4);
    assert!(
        pa + 3.0 * sea >= floor,
        "P[circuit] = {pa} fell below the glued floor {floor}"
    );
    let ceiling = f2 + 3.0 * se2;
    assert!(
        pa - 3.0 * sea <= ceiling,
        "P[circuit] = {pa} exceeded the aspect-2 ceiling {ceiling}"
    );
}

#[test]
fn four_strip_floor_clears_q1() {
    // Scan the alpha grid; at the estimated alpha the four-strip event must
    // clear the plug-in floor Q1(c0_hat).
    let s = 4.0;
    let reps = 800u64;
    let window = Box2::centered(s / 2.0 + EPS).unwrap();
    let rig = Rig::new(&Kernel::bargmann_fock(), &window, EPS);
    let alphas = [0.0, 0.25, 0.5, 0.75, 1.0];

    let mut x_counts = [0u64; 5];
    let mut h0_counts = [0u64; 5];
    let mut hs_counts = [0u64; 5];
    let mut square_count = 0u64;
    for rep in 0..reps {
        let c = rig.coloring(0xA1FA + rep);
        if cross_to_window(&rig.e, &c, s, -s / 2.0, s / 2.0, false).unwrap().occurred {
            square_count += 1;
        }
        for (k, &alpha) in alphas.iter().enumerate() {
            if four_strip_link(&rig.e, &c, s, alpha).unwrap().occurred {
                x_counts[k] += 1;
            }
            if cross_to_window(&rig.e, &c, s, 0.0, alpha, false).unwrap().occurred {
                h0_counts[k] += 1;
            }
            if cross_to_window(&rig.e, &c, s, alpha, s / 2.0, false).unwrap().occurred {
                hs_counts[k] += 1;
            }
        }
    }

    let n = reps as f64;
    let c0_hat = square_count as f64 / n;
    let curve: Vec<AlphaCurvePoint> = alphas
        .iter()
        .enumerate()
        .map(|(k, &alpha)| {
            let p_x = x_counts[k] as f64 / n;
            let h0 = h0_counts[k] as f64 / n;
            let hs = hs_counts[k] as f64 / n;
            AlphaCurvePoint {
                alpha,
                p_x,
                se_x: se(p_x, n),
                h_gap: h0 - hs,
                se_gap: se(h0, n) + se(hs, n),
            }
        })
        .collect();

    let est = estimate_alpha_s(s, &curve, c0_hat).unwrap();
    assert!(est.p1_met, "no alpha on the grid reached the Q1 floor");
    let q1_hat = (5.0 * c0_hat.ln() - 12.0 * std::f64::consts::LN_2).exp();
    let at_hat = curve.iter().find(|p| p.alpha == est.alpha_hat).unwrap();
    assert!(
        at_hat.p_x - 3.0 * at_hat.se_x >= q1_hat,
        "P[X({})] = {} does not clear Q1 = {q1_hat}",
        est.alpha_hat,
        at_hat.p_x
    );
}

#[test]
fn nodal_trap_beats_decorrelated_product() {
    // Trap = black crossing above the gap AND white crossing below it.
    let s = 4.0;
    let rho = 2.0;
    let gap = 1.0;
    let reps = 1500u64;
    let window = Box2::new([rho * s / 2.0, s / 2.0], (rho * s).max(s) / 2.0 + EPS).unwrap();
    let rig = Rig::new(&Kernel::bargmann_fock(), &window, EPS);

    let quad = Quad::new(0.0, rho * s, 0.0, s, SidePair::LeftRight).unwrap();
    let mid = s / 2.0;
    let upper = Quad::new(0.0, rho * s, mid + gap / 2.0, s, SidePair::LeftRight).unwrap();
    let lower = Quad::new(0.0, rho * s, 0.0, mid - gap / 2.0, SidePair::LeftRight).unwrap();

    let (mut trap, mut black, mut white) = (0u64, 0u64, 0u64);
    for rep in 0..reps {
        let c = rig.coloring(0x70AD + rep);
        if quad_nodal_crossing(&rig.e, &c, &quad, gap, false).unwrap().occurred {
            trap += 1;
        }
        if crosses(&rig.e, &c, &upper, Color::Black, false).unwrap().occurred {
            black += 1;
        }
        if crosses(&rig.e, &c, &lower, Color::White, false).unwrap().occurred {
            white += 1;
        }
    }
    let n = reps as f64;
    let (pt, pb, pw) = (trap as f64 / n, black as f64 / n, white as f64 / n);

    // The decorrelation budget from the kernel certificate; vacuous at this
    // separation (the constants are astronomically conservative), asserted
    // anyway because it is the inequality on offer.
    let budget = DecorrBudget::from_kernel(&Kernel::bargmann_fock(), 2.0 / (EPS * EPS)).unwrap();
    let area = 2.0 * rho * s * (s - gap) / 2.0;
    let phi = phi_bound(&budget, area, (-0.5 * gap * gap).exp()).unwrap();
    assert!(pt >= pb * pw - phi);

    // The statistical content: at this separation the trap probability
    // already matches the independent product within Monte Carlo error.
    let slack = 3.0 * (se(pt, n) + pb * se(pw, n) + pw * se(pb, n));
    assert!(
        pt >= pb * pw - slack,
        "P[trap] = {pt} fell below product {} - {slack}",
        pb * pw
    );
}

#[test]
fn fkg_margin_within_error_on_disjoint_rectangles() {
    let quad_a = Quad::new(0.0, 4.0, 0.0, 2.0, SidePair::LeftRight).unwrap();
    let quad_b = Quad::new(0.0, 4.0, 3.0, 5.0, SidePair::LeftRight).unwrap();
    let report = fkg_check(
        &FieldSpec::Kernel(Kernel::bargmann_fock()),
        EPS,
        &quad_a,
        &quad_b,
        2000,
        0xF406,
    )
    .unwrap();
    assert!(
        report.margin >= -3.0 * report.std_error,
        "association margin {} below -3 x {}",
        report.margin,
        report.std_error
    );
}

#[test]
fn crossing_composition_inequality() {
    // Longer rectangles decompose into overlapping shorter ones:
    // f(1 + i k) >= f(1 + k)^i f(1)^(i-1), checked with propagated error.
    let s = 4.0;
    let kappa = 0.5;
    let reps = 4000;
    let (f1, se1) = crossing_estimate(s, 1.0, reps, 21);
    let (fk, sek) = crossing_estimate(s, 1.0 + kappa, reps, 22);
    for (i, seed) in [(2u32, 23), (3u32, 24)] {
        let (fi, sei) = crossing_estimate(s, 1.0 + f64::from(i) * kappa, reps, seed);
        let rhs = fk.powi(i as i32) * f1.powi(i as i32 - 1);
        let slack = 3.0 * (sei + f64::from(i) * sek + f64::from(i - 1) * se1);
        assert!(
            fi >= rhs - slack,
            "i = {i}: f = {fi} below composed bound {rhs} - {slack}"
        );
    }
}

#[test]
fn vertex_color_law_is_symmetric() {
    // Centered Gaussians put equal mass on both signs.
    let window = Box2::centered(1.0).unwrap();
    let rig = Rig::new(&Kernel::bargmann_fock(), &window, EPS);
    let center = rig
        .e
        .keys
        .iter()
        .position(|&(i, j)| i == 0 && j == 0)
        .expect("origin is a lattice vertex");
    let reps = 4000u64;
    let black = (0..reps)
        .filter(|&rep| rig.coloring(0xB1AC + rep).is_black(center as u32))
        .count() as f64;
    let p = black / reps as f64;
    let bound = 3.0 / (2.0 * (reps as f64).sqrt());
    assert!((p - 0.5).abs() <= bound, "P[black] = {p} strays from 1/2 by > {bound}");
}

#[test]
fn crossing_probability_nonincreasing_in_aspect() {
    let s = 4.0;
    let reps = 4000;
    let (p1, s1) = crossing_estimate(s, 1.0, reps, 31);
    let (p2, s2) = crossing_estimate(s, 2.0, reps, 32);
    let joint = (s1 * s1 + s2 * s2).sqrt();
    assert!(
        p2 <= p1 + 3.0 * joint,
        "aspect-2 estimate {p2} above aspect-1 estimate {p1}"
    );
}

#[test]
fn positivity_probability_monotone_in_box_size() {
    // One joint sample drives every box, so monotonicity is exact.
    let rows = small_box_positivity(
        &Kernel::bargmann_fock(),
        &[0.25, 0.5, 1.0],
        0.25,
        400,
        0x90B0,
    )
    .unwrap();
    assert_eq!(rows.len(), 3);
    for w in rows.windows(2) {
        assert!(
            w[1].p_hat <= w[0].p_hat,
            "positivity rose with the box: {} -> {}",
            w[0].p_hat,
            w[1].p_hat
        );
    }
    assert!(rows[0].p_hat > 0.0, "quarter-box positivity should be common");
}

#[test]
fn equicorrelated_tv_monotone_in_eta() {
    let mut last = -1.0;
    for eta in [0.1, 0.2, 0.4] {
        let bg = BlockGaussian::cross_identity(2, 2, eta).unwrap();
        let tv = tv_exact(&bg).unwrap();
        assert!(
            tv.value + tv.error_bound >= last,
            "tv fell as eta rose to {eta}: {} < {last}",
            tv.value
        );
        last = tv.value - tv.error_bound;
    }
}
