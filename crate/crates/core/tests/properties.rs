use fhn_spde::config::{parse_override, Config};
use fhn_spde::io::{read_field_dump, write_field_dump};
use fhn_spde::kernel::{bump_phi, uniformity, CutoffKernel, KernelDecomposition};
use fhn_spde::noise::SpaceTimeLattice;
use fhn_spde::objects::{stochastic_convolution, wick_powers, ConvolutionKind};
use fhn_spde::renorm::{drift_constants, CubicCoefficients};
use fhn_spde::rng::realisation_seed;
use fhn_spde::scaling::{minimal_image, parabolic_norm, Scaling, SpacetimePoint};
use fhn_spde::solver::{heat_smooth, l2_norm, renormalised_drift};
use fhn_spde::renorm::{ConstantMode, RenormConstants};
use proptest::prelude::*;
use std::sync::OnceLock;

fn coefficient() -> impl Strategy<Value = f64> {
    -3.0..3.0f64
}

fn coefficients() -> impl Strategy<Value = CubicCoefficients> {
    prop::collection::vec(coefficient(), 11).prop_map(|c| CubicCoefficients {
        alpha1: c[0],
        alpha2: c[1],
        beta1: c[2],
        beta2: c[3],
        beta3: c[4],
        gamma1: c[5],
        gamma2: c[6],
        gamma3: c[7],
        gamma4: c[8],
        a1: c[9],
        a2: c[10],
    })
}

fn decomposition() -> &'static KernelDecomposition {
    static KD: OnceLock<KernelDecomposition> = OnceLock::new();
    KD.get_or_init(|| KernelDecomposition::new(3, 4, CutoffKernel::new(1.0, -1.0, 1.0).unwrap()).unwrap())
}

fn small_lattice() -> SpaceTimeLattice {
    SpaceTimeLattice::new(2, 8, 1.0, 1.0 / 64.0, 4).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bump_partition_of_unity(t in -1e3..1e3f64) {
        let base = t.floor() as i64;
        let s: f64 = (-3..=3).map(|j| bump_phi((base + j) as f64 - t)).sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn parabolic_norm_is_homogeneous(t in -2.0..2.0f64, x in prop::array::uniform3(-2.0..2.0f64), lambda in 0.01..10.0f64) {
        let s = Scaling::parabolic(3);
        let z = SpacetimePoint::new(t, &x);
        let scaled = parabolic_norm(&s.dilate(&z, lambda), &s);
        prop_assert!((scaled - lambda * parabolic_norm(&z, &s)).abs() <= 1e-12 * (1.0 + scaled));
    }

    #[test]
    fn minimal_image_lands_in_half_open_cell(dx in -100.0..100.0f64, side in 0.1..10.0f64) {
        let r = minimal_image(dx, side);
        prop_assert!(r >= -0.5 * side && r < 0.5 * side);
        let k = ((dx - r) / side).round();
        prop_assert!((dx - r - k * side).abs() <= 1e-9 * (1.0 + dx.abs()));
    }

    #[test]
    fn drift_constant_ratios(c in coefficients(), k1 in 0.0..100.0f64, k2 in 0.0..10.0f64) {
        let (c0, c1, c2) = drift_constants(&c, k1, k2);
        let scale = 1e-13 * (1.0 + c0.abs() + c1.abs() + c2.abs()) * 10.0;
        prop_assert!((c0 * 3.0 * c.gamma1 - c1 * c.beta1).abs() <= scale);
        prop_assert!((c1 * c.gamma2 - c2 * 3.0 * c.gamma1).abs() <= scale);
    }

    #[test]
    fn drift_shift_is_affine_in_u(c in coefficients(), k1 in 0.0..10.0f64, u in -2.0..2.0f64, v in -2.0..2.0f64) {
        // the counterterm adds c0 + c1 u + c2 v to the bare drift
        let k = RenormConstants::new(0.1, ConstantMode::Lattice, &c, k1, 0.3);
        let got = renormalised_drift(&[u], &[v], &c, &k)[0];
        let want = c.f(u, v) + k.c0 + k.c1 * u + k.c2 * v;
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn uniformity_is_scale_invariant(v in prop::collection::vec(1e-6..1.0f64, 1..20), c in 1e-3..1e3f64) {
        let a = uniformity("x", v.clone(), 10.0);
        let b = uniformity("x", v.iter().map(|x| x * c), 10.0);
        prop_assert_eq!(a.pass, b.pass);
        prop_assert!((b.max / b.median - a.max / a.median).abs() <= 1e-9 * a.max / a.median);
    }

    #[test]
    fn kq_pieces_vanish_outside_support(
        piece in 0usize..200,
        t in -0.5..3.0f64,
        x in prop::array::uniform3(-1.5..1.5f64),
    ) {
        let kd = decomposition();
        let pieces = kd.index_set();
        let (n, m) = pieces[piece % pieces.len()];
        let z = SpacetimePoint::new(t, &x);
        let shift = kd.shift(n, m);
        let s = kd.scaling();
        let outside = parabolic_norm(&z.sub(&shift), s) > kd.support_radius(n);
        if outside {
            prop_assert_eq!(kd.kq_piece(n, m, &z).unwrap(), 0.0);
        }
    }

    #[test]
    fn heat_convolution_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, seed in 0u64..1000) {
        let lat = small_lattice();
        let len = lat.n_steps * lat.sites();
        let f: Vec<f64> = (0..len).map(|i| fhn_spde::rng::gaussian_at(seed, 0, i as u64)).collect();
        let g: Vec<f64> = (0..len).map(|i| fhn_spde::rng::gaussian_at(seed, 1, i as u64)).collect();
        let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        for kind in [ConvolutionKind::Heat, ConvolutionKind::QConvolved(CutoffKernel::new(1.0, -1.0, 1.0).unwrap())] {
            let cf = stochastic_convolution(&lat, &f, kind).unwrap();
            let cg = stochastic_convolution(&lat, &g, kind).unwrap();
            let cm = stochastic_convolution(&lat, &mix, kind).unwrap();
            for ((m, x), y) in cm.values.iter().zip(&cf.values).zip(&cg.values) {
                prop_assert!((m - (a * x + b * y)).abs() <= 1e-12 * (1.0 + m.abs()));
            }
        }
    }

    #[test]
    fn heat_smoothing_contracts(seed in 0u64..1000, delta in 0.0..0.1f64) {
        let lat = small_lattice();
        let f: Vec<f64> = (0..lat.sites()).map(|i| fhn_spde::rng::gaussian_at(seed, 2, i as u64)).collect();
        let s = heat_smooth(&f, &lat, delta);
        prop_assert!(l2_norm(&s, &lat) <= l2_norm(&f, &lat) * (1.0 + 1e-12));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((mean(&s) - mean(&f)).abs() <= 1e-12);
    }

    #[test]
    fn wick_powers_are_hermite(psi in prop::collection::vec(-3.0..3.0f64, 1..10), c1 in 0.0..5.0f64) {
        let (w2, w3) = wick_powers(&psi, c1);
        for ((p, a), b) in psi.iter().zip(&w2).zip(&w3) {
            prop_assert!((a - (p * p - c1)).abs() <= 1e-12 * (1.0 + c1));
            prop_assert!((b - (p * p * p - 3.0 * c1 * p)).abs() <= 1e-11 * (1.0 + c1));
        }
    }

    #[test]
    fn realisation_seeds_do_not_collide(seed in any::<u64>()) {
        let mut s: Vec<u64> = (0..64).map(|r| realisation_seed(seed, r)).collect();
        s.sort_unstable();
        s.dedup();
        prop_assert_eq!(s.len(), 64);
    }

    #[test]
    fn integer_overrides_round_trip(n in 1usize..1000, seed in any::<u32>()) {
        let mut t = toml::Table::new();
        t.insert("n".into(), parse_override("n", &n.to_string()).unwrap());
        t.insert("seed".into(), parse_override("seed", &seed.to_string()).unwrap());
        t.insert("side".into(), parse_override("side", "2").unwrap());
        let cfg = Config::from_table(t).unwrap();
        prop_assert_eq!((cfg.n, cfg.seed, cfg.side), (n, seed as u64, 2.0));
    }

    #[test]
    fn field_dump_round_trips(values in prop::collection::vec(any::<f64>(), 64), seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let lat = small_lattice();
        write_field_dump(&path, &lat, seed, &[&values]).unwrap();
        let back = read_field_dump(&path).unwrap();
        prop_assert_eq!(back.seed, seed);
        prop_assert_eq!(back.lattice, lat);
        for (a, b) in back.slices[0].iter().zip(&values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
