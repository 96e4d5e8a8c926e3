//! Property tests for the invariants each module promises.

use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;

use anisotilt::corr2d::{build_autocorr_grid, Component, LagVector, TiltAutocorr2D};
use anisotilt::friedest::{estimate_r0, r0_from_sigma, spectral_ratio, tukey_window_2d, EstimatorOptions};
use anisotilt::image::Image;
use anisotilt::imageio::{parse_config, quantize, read_image, write_image, BitDepth, RunConfig};
use anisotilt::mitigation::{bma_register, dewarp, fuse, wiener_filter, MatchCost, MitigationConfig, RegistrationKind};
use anisotilt::otf::{tilt_otf_variance, wiener_transfer, OtfModel};
use anisotilt::regmodel::{registration_budget, RegistrationSpec};
use anisotilt::stats::{fried_parameter, tabulate_correlations, tilt_variance};
use anisotilt::synth::{degrade_sequence, procedural_scene, warp_image, SynthConfig, TiltField};
use anisotilt::{Cn2Profile, ImageSequence, OpticalConfig};
use rustfft::num_complex::Complex64;

fn camera() -> OpticalConfig {
    OpticalConfig::reference_camera()
}

fn lag_grid() -> &'static TiltAutocorr2D {
    static GRID: OnceLock<TiltAutocorr2D> = OnceLock::new();
    GRID.get_or_init(|| build_autocorr_grid(&camera(), &Cn2Profile::constant(1e-15), 6).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn textured(rows: usize, cols: usize, seed: u64) -> Image {
    procedural_scene(rows, cols, seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optics_derived_quantities(d in 0.05f64..1.0, ratio in 2.0f64..20.0, lambda in 0.4e-6f64..2.0e-6, pitch in 1e-6f64..2e-5) {
        let l = d * ratio;
        let cfg = OpticalConfig::new(d, l, lambda, 5000.0, pitch).unwrap();
        prop_assert!(rel(cfg.f_number(), l / d) < 1e-12);
        prop_assert!(rel(cfg.angle_per_pixel() * l, pitch) < 1e-12);
    }

    #[test]
    fn otf_factors_bounded_and_unit_at_origin(r0 in 0.01f64..0.5, alpha in -0.5f64..0.99, x in 0.0f64..1.2) {
        let m = OtfModel::new(camera(), r0, alpha).unwrap();
        let rho = x * camera().cutoff();
        for f in [m.diffraction(0.0), m.short_exposure(0.0), m.long_exposure(0.0), m.tilt(0.0), m.combined(0.0)] {
            prop_assert_eq!(f, 1.0);
        }
        for f in [m.diffraction(rho), m.short_exposure(rho), m.long_exposure(rho), m.tilt(rho), m.combined(rho)] {
            prop_assert!((0.0..=1.0).contains(&f));
        }
        if x >= 1.0 {
            prop_assert_eq!(m.combined(rho), 0.0);
        }
    }

    #[test]
    fn short_exposure_times_full_tilt_is_long_exposure(r0 in 0.01f64..0.5, x in 0.0f64..1.0) {
        let m = OtfModel::new(camera(), r0, 0.0).unwrap();
        let rho = x * camera().cutoff();
        let lhs = m.short_exposure(rho) * m.tilt(rho);
        prop_assert!(rel(lhs, m.long_exposure(rho)) <= 1e-12 || (lhs - m.long_exposure(rho)).abs() < 1e-300);
    }

    #[test]
    fn tilt_otf_widths_are_reciprocal(r0 in 0.01f64..0.5, alpha in -1.0f64..0.999) {
        let m = OtfModel::new(camera(), r0, alpha).unwrap();
        prop_assert!(rel(m.tilt_variance_freq() * m.tilt_variance_spatial(), 1.0 / (4.0 * PI * PI)) < 1e-12);
    }

    #[test]
    fn wiener_gain_bounded(re in -2.0f64..2.0, im in -2.0f64..2.0, gamma in 1e-6f64..1.0) {
        let g = wiener_transfer(&[Complex64::new(re, im)], gamma).unwrap()[0];
        prop_assert!(g.norm() <= 1.0 / (2.0 * gamma.sqrt()) * (1.0 + 1e-12));
    }

    #[test]
    fn r0_sigma_round_trip(r0 in 0.01f64..0.5, alpha in -0.5f64..0.95) {
        let sigma = tilt_otf_variance(&camera(), r0, alpha).unwrap().sqrt();
        prop_assert!(rel(r0_from_sigma(sigma, alpha, &camera()).unwrap(), r0) < 1e-12);
    }

    #[test]
    fn r0_strictly_decreasing_in_alpha(sigma in 1e4f64..1e6, a in -0.5f64..0.9, step in 0.001f64..0.09) {
        let lo = r0_from_sigma(sigma, a, &camera()).unwrap();
        let hi = r0_from_sigma(sigma, a + step, &camera()).unwrap();
        prop_assert!(hi < lo);
    }

    #[test]
    fn tukey_window_symmetric_and_bounded(rows in 8usize..40, cols in 8usize..40, taper in 0.0f64..1.0) {
        let w = tukey_window_2d(rows, cols, taper).unwrap();
        for r in 0..rows {
            for c in 0..cols {
                let v = w.get(r, c);
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v, w.get(rows - 1 - r, c));
                prop_assert_eq!(v, w.get(r, cols - 1 - c));
            }
        }
    }

    #[test]
    fn spectral_ratio_scale_invariant(seed in 0u64..1000, c in 0.01f64..100.0) {
        let long = textured(16, 16, seed).map(f64::abs);
        let short = textured(16, 16, seed + 1).map(|v| v.abs() + 1.0);
        let a = spectral_ratio(&long, &short).unwrap();
        let b = spectral_ratio(&long.map(|v| v * c), &short.map(|v| v * c)).unwrap();
        prop_assert_eq!(&a.valid, &b.valid);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn fuse_preserves_mean(seed in 0u64..1000, k in 1usize..6) {
        let frames: Vec<Image> = (0..k as u64).map(|i| textured(12, 10, seed + i)).collect();
        let fused = fuse(&frames).unwrap();
        let mean_in = frames.iter().map(Image::mean).sum::<f64>() / k as f64;
        prop_assert!((fused.mean() - mean_in).abs() < 1e-12 * mean_in.abs().max(1.0));
    }

    #[test]
    fn wiener_with_unit_otf_and_no_noise_is_identity(seed in 0u64..1000) {
        let img = textured(20, 24, seed);
        let out = wiener_filter(&img, |_| 1.0, 0.0).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn quantize_is_idempotent(vals in prop::collection::vec(-100.0f64..70000.0, 64), sixteen in any::<bool>()) {
        let depth = if sixteen { BitDepth::Sixteen } else { BitDepth::Eight };
        let img = Image::new(8, 8, vals).unwrap();
        let (q, _) = quantize(&img, depth);
        let back = Image::new(8, 8, q.iter().map(|&v| v as f64).collect()).unwrap();
        let (q2, counts) = quantize(&back, depth);
        prop_assert_eq!(q, q2);
        prop_assert_eq!(counts.below + counts.above, 0);
    }

    #[test]
    fn lag_fields_are_consistent(n1 in -6i64..=6, n2 in -6i64..=6) {
        let g = lag_grid();
        let n = LagVector::new(n1, n2);
        let neg = LagVector::new(-n1, -n2);
        let swap = LagVector::new(n2, n1);
        let xx = g.get(Component::Xx, n).unwrap();
        let yy = g.get(Component::Yy, n).unwrap();
        let xy = g.get(Component::Xy, n).unwrap();
        prop_assert!((g.get(Component::Total, n).unwrap() - (xx + yy)).abs() <= 1e-12 * (xx + yy).abs());
        prop_assert_eq!(xx, g.get(Component::Yy, swap).unwrap());
        for c in [Component::Xx, Component::Yy, Component::Xy, Component::Total] {
            prop_assert_eq!(g.get(c, n).unwrap(), g.get(c, neg).unwrap());
        }
        if n1 == 0 || n2 == 0 {
            prop_assert!(xy.abs() < 1e-12 * xx.abs());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn statistics_scale_linearly_with_cn2(c in 0.05f64..20.0) {
        let base = Cn2Profile::constant(1e-15);
        let scaled = base.scaled(c);
        let t0 = tilt_variance(&camera(), &base).unwrap();
        let t1 = tilt_variance(&camera(), &scaled).unwrap();
        prop_assert!(rel(t1.px2, c * t0.px2) < 1e-9);
        let r0 = fried_parameter(&camera(), &base).unwrap();
        prop_assert!(rel(fried_parameter(&camera(), &scaled).unwrap(), r0 * c.powf(-0.6)) < 1e-9);
        let a = tabulate_correlations(&camera(), &base, 10.0, 0.5).unwrap();
        let b = tabulate_correlations(&camera(), &scaled, 10.0, 0.5).unwrap();
        for (x, y) in a.parallel().iter().zip(b.parallel()).chain(a.perpendicular().iter().zip(b.perpendicular())) {
            prop_assert!(rel(*y, c * x) < 1e-9);
        }
        prop_assert!(rel(a.parallel()[0], a.perpendicular()[0]) < 1e-6);
    }

    #[test]
    fn alpha_is_independent_of_turbulence_strength(c in 0.1f64..20.0, m in 1usize..15, eps in 0.0f64..0.2) {
        let base = Cn2Profile::constant(1e-15);
        let a = registration_budget(&camera(), &base, m, eps).unwrap().alpha;
        let b = registration_budget(&camera(), &base.scaled(c), m, eps).unwrap().alpha;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn warp_then_dewarp_recovers_interior(dx in -3i32..=3, dy in -3i32..=3, seed in 0u64..100) {
        let img = textured(32, 32, seed);
        let mut shift = TiltField::zeros(32, 32);
        shift.x = shift.x.map(|_| dx as f64);
        shift.y = shift.y.map(|_| dy as f64);
        let back = dewarp(&warp_image(&img, &shift).unwrap(), &shift).unwrap();
        for r in 4..28 {
            for c in 4..28 {
                prop_assert!((back.get(r, c) - img.get(r, c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bma_recovers_rigid_integer_shifts(dx in -4i32..=4, dy in -4i32..=4, seed in 0u64..100) {
        let proto = textured(44, 44, seed);
        let mut shift = TiltField::zeros(44, 44);
        shift.x = shift.x.map(|_| dx as f64);
        shift.y = shift.y.map(|_| dy as f64);
        let frame = warp_image(&proto, &shift).unwrap();
        let field = bma_register(&frame, &proto, 4, 6, MatchCost::Sad).unwrap();
        let interior: Vec<_> = field
            .shifts
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let (bx, by) = (field.centers_x[i % field.centers_x.len()], field.centers_y[i / field.centers_x.len()]);
                (10.0..34.0).contains(&bx) && (10.0..34.0).contains(&by)
            })
            .map(|(_, s)| *s)
            .collect();
        prop_assert!(!interior.is_empty());
        for s in interior {
            prop_assert_eq!(s, [dx, dy]);
            prop_assert!(s[0].unsigned_abs() as usize <= field.search_radius);
        }
        let restored = fuse(&[dewarp(&frame, &field.dense()).unwrap()]).unwrap();
        for r in 12..32 {
            for c in 12..32 {
                prop_assert!((restored.get(r, c) - proto.get(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn image_round_trip_is_bit_exact(vals in prop::collection::vec(0u16..=65535, 80), sixteen in any::<bool>(), pgm in any::<bool>()) {
        let depth = if sixteen { BitDepth::Sixteen } else { BitDepth::Eight };
        let max = depth.max_value() as u16;
        let img = Image::new(8, 10, vals.iter().map(|&v| (v.min(max)) as f64).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(if pgm { "x.pgm" } else { "x.png" });
        write_image(&img, &path, depth).unwrap();
        let back = read_image(&path).unwrap();
        prop_assert_eq!(back.bit_depth, depth);
        prop_assert_eq!(back.image.data(), img.data());
    }

    #[test]
    fn config_parse_print_parse_fixpoint(
        m in 1usize..50,
        s in 1usize..20,
        gamma in 0.0f64..0.1,
        reg in prop::sample::select(vec![RegistrationKind::None, RegistrationKind::Global, RegistrationKind::Bma]),
        seed in prop::option::of(any::<u32>()),
        cn2 in prop::option::of(1e-17f64..1e-13),
        taper in 0.0f64..1.0,
    ) {
        let mut cfg = RunConfig::new(camera(), cn2.map(Cn2Profile::constant));
        cfg.options.seed = seed.map(u64::from);
        cfg.options.mitigation = MitigationConfig { half_width: m, search_radius: s, gamma, registration: reg, ..MitigationConfig::default() };
        cfg.options.estimator = EstimatorOptions { taper, ..EstimatorOptions::default() };
        let text = cfg.to_toml().unwrap();
        let parsed = parse_config(&text).unwrap();
        prop_assert_eq!(&parsed, &cfg);
        prop_assert_eq!(parsed.to_toml().unwrap(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn estimate_is_invariant_to_intensity_scale(seed in 0u64..1000, c in 0.1f64..10.0) {
        let truth = textured(64, 64, seed).map(|v| 100.0 + 30.0 * v);
        let scfg = SynthConfig::new(camera(), Cn2Profile::constant(1e-15), 8, 0.5, seed);
        let seq = degrade_sequence(&truth, &scfg).unwrap().sequence;
        let opts = EstimatorOptions::default();
        let a = estimate_r0(&seq, &RegistrationSpec::None, &camera(), &opts).unwrap();
        let b = estimate_r0(&seq.scaled(c), &RegistrationSpec::None, &camera(), &opts).unwrap();
        prop_assert!(rel(b.r0, a.r0) < 1e-9, "{} vs {} rel {:e}", a.r0, b.r0, rel(b.r0, a.r0));
    }

    #[test]
    fn synthesis_is_reproducible(seed in any::<u64>()) {
        let truth = textured(32, 32, 1);
        let scfg = SynthConfig::new(camera(), Cn2Profile::constant(5e-16), 3, 1.0, seed);
        let a = degrade_sequence(&truth, &scfg).unwrap();
        let b = degrade_sequence(&truth, &scfg).unwrap();
        prop_assert_eq!(a.sequence, b.sequence);
    }

    #[test]
    fn estimator_pipeline_is_pure(seed in 0u64..1000) {
        let truth = textured(48, 48, seed).map(|v| 100.0 + 30.0 * v);
        let seq = degrade_sequence(&truth, &SynthConfig::new(camera(), Cn2Profile::constant(1e-15), 6, 1.0, seed)).unwrap().sequence;
        let spec = RegistrationSpec::Global { epsilon: 0.0 };
        let opts = EstimatorOptions::default();
        let a = estimate_r0(&seq, &spec, &camera(), &opts).unwrap();
        let b = estimate_r0(&ImageSequence::new(seq.frames().to_vec()).unwrap(), &spec, &camera(), &opts).unwrap();
        prop_assert_eq!(a.r0.to_bits(), b.r0.to_bits());
    }
}
