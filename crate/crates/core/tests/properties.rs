use mvanc_core::acoustics::{design_bandpass_fir, generate_noise, NoiseDistribution, NoiseSpec};
use mvanc_core::complexity::{ops_mcalms, ops_mcfxlms, CountParams};
use mvanc_core::dsp::{convolve_stream, FirFilter, TapBuffer};
use mvanc_core::pipeline::noise_reduction_db;
use proptest::prelude::*;

fn stream(f: &FirFilter, x: &[f64]) -> Vec<f64> {
    let mut buf = TapBuffer::new(f.len()).unwrap();
    x.iter()
        .map(|&v| {
            buf.push(v);
            convolve_stream(&buf, f)
        })
        .collect()
}

fn taps() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..24)
}

proptest! {
    #[test]
    fn convolution_is_linear(
        h in taps(),
        x in prop::collection::vec(-5.0f64..5.0, 1..120),
        y_seed in prop::collection::vec(-5.0f64..5.0, 120),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let f = FirFilter::new(h).unwrap();
        let y = &y_seed[..x.len()];
        let mix: Vec<f64> = x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        let lhs = stream(&f, &mix);
        let (sx, sy) = (stream(&f, &x), stream(&f, y));
        let bound = f.taps().iter().map(|t| t.abs()).sum::<f64>() * 40.0;
        for n in 0..x.len() {
            prop_assert!((lhs[n] - (a * sx[n] + b * sy[n])).abs() <= 1e-12 * bound);
        }
    }

    #[test]
    fn convolution_is_shift_invariant(h in taps(), x in prop::collection::vec(-5.0f64..5.0, 1..80), shift in 0usize..10) {
        let f = FirFilter::new(h).unwrap();
        let mut delayed = vec![0.0; shift];
        delayed.extend(&x);
        let a = stream(&f, &x);
        let b = stream(&f, &delayed);
        prop_assert_eq!(&b[shift..], &a[..]);
    }

    #[test]
    fn streaming_is_pure(h in taps(), x in prop::collection::vec(-5.0f64..5.0, 1..80)) {
        let f = FirFilter::new(h).unwrap();
        prop_assert_eq!(stream(&f, &x), stream(&f, &x));
    }

    #[test]
    fn nr_ignores_common_scaling(
        d in prop::collection::vec(0.1f64..2.0, 64),
        e in prop::collection::vec(0.1f64..2.0, 64),
        k in 0.01f64..100.0,
        window in 1usize..32,
    ) {
        let base = noise_reduction_db(&d, &e, window).unwrap();
        let ds: Vec<f64> = d.iter().map(|v| v * k).collect();
        let es: Vec<f64> = e.iter().map(|v| v * k).collect();
        let scaled = noise_reduction_db(&ds, &es, window).unwrap();
        for (p, q) in base.values.iter().zip(&scaled.values) {
            prop_assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn bandpass_design_is_seed_deterministic(seed in any::<u64>(), n in 8usize..200) {
        let a = design_bandpass_fir(500.0, 5000.0, 16_000.0, n, seed).unwrap();
        let b = design_bandpass_fir(500.0, 5000.0, 16_000.0, n, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn noise_is_seed_deterministic(seed in any::<u64>(), uniform in any::<bool>()) {
        let dist = if uniform { NoiseDistribution::Uniform } else { NoiseDistribution::Gaussian };
        let spec = NoiseSpec::new(dist, (800.0, 1800.0), 16_000.0, seed).with_snr_db(40.0);
        prop_assert_eq!(generate_noise(&spec, 700).unwrap(), generate_noise(&spec, 700).unwrap());
    }

    #[test]
    fn counts_grow_with_every_length(
        j in 1u64..12, k in 1u64..12, m in 1u64..12,
        n_x in 1u64..1024, n_h in 1u64..512, l in 1u64..512,
    ) {
        let p = CountParams::new(j, k, m, n_x, n_h, l).unwrap();
        for bigger in [
            CountParams::new(j, k, m, 2 * n_x, n_h, l).unwrap(),
            CountParams::new(j, k, m, n_x, 2 * n_h, l).unwrap(),
            CountParams::new(j, k, m, n_x, n_h, 2 * l).unwrap(),
        ] {
            for f in [ops_mcalms, ops_mcfxlms] {
                let (a, b) = (f(p).unwrap(), f(bigger).unwrap());
                prop_assert!(b.multiplications > a.multiplications);
                prop_assert!(b.additions >= a.additions);
            }
        }
    }
}
