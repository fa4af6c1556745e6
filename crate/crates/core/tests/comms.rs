mod common;

use closedloop::comms::{
    equilibrium_concentration, equilibrium_with_ones_fraction, first_wrap_delay, isi_decompose, peak_time,
    received_signal, single_shot, transition_time, BitSequence, TransitionTime,
};
use closedloop::spectral::{rx_signal, solve};
use closedloop::{ChannelConfig, DampingProfile, Error, TimeGrid, TimeSeries};
use common::*;
use proptest::prelude::*;

fn short_config() -> ChannelConfig {
    ChannelConfig {
        truncation_order: 60,
        ..distributed_config()
    }
}

#[test]
fn decomposition_sums_to_total() {
    let config = short_config();
    let seq = BitSequence::new(vec![true, false, true, true, false, true, false, false, true, true], 5.0, 0.0).unwrap();
    let grid = TimeGrid::new(0.0, 0.1, 2001);
    let d = isi_decompose(&config, &scenario1_rx(), &seq, &grid, 0.8).unwrap();
    assert!(d.sum_defect() < 1e-12, "{:e}", d.sum_defect());
    for s in [&d.desired, &d.channel, &d.inter_loop, &d.offset, &d.open] {
        assert!(s.same_grid(&d.total));
    }
}

#[test]
fn all_zero_sequence_gives_silence() {
    let config = short_config();
    let seq = BitSequence::new(vec![false; 8], 5.0, 0.0).unwrap();
    let grid = TimeGrid::new(0.0, 0.1, 601);
    let d = isi_decompose(&config, &scenario1_rx(), &seq, &grid, 0.8).unwrap();
    for s in [&d.total, &d.desired, &d.channel, &d.inter_loop, &d.offset] {
        assert_eq!(s.max_abs(), 0.0);
    }
    assert_eq!(d.transition_time, TransitionTime::NotReached);
}

#[test]
fn received_signal_is_linear_in_the_bits() {
    let config = short_config();
    let grid = TimeGrid::new(0.0, 0.1, 801);
    let shot = rx_signal(&solve(&config, &grid).unwrap(), &scenario1_rx()).unwrap();
    let seq = |bits: &[u8]| BitSequence::new(bits.iter().map(|&b| b == 1).collect(), 5.0, 0.0).unwrap();
    let both = received_signal(&shot, &seq(&[1, 0, 1, 0])).unwrap();
    let first = received_signal(&shot, &seq(&[1, 0, 0, 0])).unwrap();
    let third = received_signal(&shot, &seq(&[0, 0, 1, 0])).unwrap();
    let sum = TimeSeries::new(0.0, 0.1, first.values.iter().zip(&third.values).map(|(a, b)| a + b).collect());
    assert!(both.max_abs_diff(&sum) < 1e-12 * both.max_abs());
    // a release at 10 s is the single shot delayed by 100 samples
    for k in 100..grid.n_samples {
        assert_eq!(third.values[k], shot.values[k - 100]);
    }
    assert!(third.values[..100].iter().all(|&v| v == 0.0));
}

#[test]
fn response_scales_with_release_size() {
    let grid = TimeGrid::new(0.0, 0.5, 201);
    let rx = scenario1_rx();
    let base = short_config();
    let doubled = ChannelConfig {
        n_molecules: 2 * base.n_molecules,
        ..base.clone()
    };
    let a = single_shot(&base, &rx, &grid).unwrap();
    let b = single_shot(&doubled, &rx, &grid).unwrap();
    for (x, y) in [(&a.closed_rx, &b.closed_rx), (&a.open_rx, &b.open_rx), (&a.direct_rx, &b.direct_rx)] {
        assert!(y.max_abs_diff(&x.scaled(2.0)) < 1e-10 * y.max_abs());
    }
}

#[test]
fn direct_path_equals_closed_loop_before_first_wrap() {
    let config = short_config();
    let grid = TimeGrid::new(0.0, 0.1, 1201);
    let shot = single_shot(&config, &scenario1_rx(), &grid).unwrap();
    assert!(shot.first_wrap > 0.0 && shot.first_wrap < 120.0);
    for k in (0..grid.n_samples).filter(|&k| grid.time(k) < shot.first_wrap) {
        assert_eq!(shot.direct_rx.values[k], shot.closed_rx.values[k]);
    }
}

#[test]
fn first_wrap_takes_the_shorter_way_round() {
    let config = ChannelConfig::standard();
    let rx = scenario1_rx();
    // downstream route is 6 - 2.1 = 3.9 m, upstream is 6 + 1.5 = 7.5 m
    let tau = first_wrap_delay(&config, &rx);
    let front = config.v_eff * tau + 6.0 * (2.0 * config.d_eff * tau).sqrt();
    assert!((front - 3.9).abs() < 1e-9);
}

#[test]
fn peak_time_approaches_travel_time_when_advection_dominates() {
    let mut config = ChannelConfig::standard();
    config.d_eff = 1e-9;
    let tp = peak_time(&config, 0.0, 2.0, 3.0).unwrap();
    assert!((tp - 23.0).abs() < 1e-6);
    // with diffusion the peak arrives earlier
    let tp = peak_time(&ChannelConfig::standard(), 0.0, 2.0, 3.0).unwrap();
    assert!(tp < 23.0);
}

#[test]
fn equilibrium_follows_release_rate() {
    let config = ChannelConfig::standard();
    let a = equilibrium_concentration(&config, 5.0).unwrap();
    let b = equilibrium_concentration(&config, 10.0).unwrap();
    assert!((a - 2.0 * b).abs() < 1e-12 * a);
    // 10⁴·0.5 / (5·(0.05·0.6 + 0.01·5.4))
    assert!((a - 5000.0 / (5.0 * 0.084)).abs() < 1e-9 * a);
    let all_ones = equilibrium_with_ones_fraction(&config, 5.0, 1.0).unwrap();
    assert!((all_ones - 2.0 * a).abs() < 1e-12 * a);
    let none = config.with_damping(DampingProfile::none(6.0));
    assert!(matches!(equilibrium_concentration(&none, 5.0), Err(Error::NoEquilibrium)));
}

#[test]
fn transition_time_on_synthetic_series() {
    let grid = TimeGrid::new(0.0, 1.0, 10);
    let series = |v: &[f64]| TimeSeries::on_grid(&grid, v.to_vec());
    let zeros = series(&[0.0; 10]);
    let rx = series(&[0.0, 5.0, 4.0, 3.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
    let c0 = series(&[0.0, 0.5, 1.0, 2.0, 1.0, 1.7, 1.8, 1.9, 1.7, 1.8]);
    let t = transition_time(&c0, &zeros, &rx, &zeros, 0.8, 0.0).unwrap();
    assert_eq!(t, TransitionTime::Reached(5.0));
    let t = transition_time(&c0, &zeros, &rx, &zeros, 0.86, 0.0).unwrap();
    assert_eq!(t, TransitionTime::Reached(9.0));
    let t = transition_time(&c0, &zeros, &rx, &zeros, 0.99, 0.0).unwrap();
    assert_eq!(t, TransitionTime::NotReached);
    assert!(transition_time(&c0, &zeros, &rx, &zeros, 1.0, 0.0).is_err());
}

#[test]
fn misaligned_sequence_is_rejected() {
    let grid = TimeGrid::new(0.0, 0.3, 100);
    let shot = TimeSeries::zeros(&grid);
    let seq = BitSequence::new(vec![true, true], 1.0, 0.0).unwrap();
    assert!(received_signal(&shot, &seq).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn balanced_sequences_have_one_one_per_pair(pairs in 1usize..200, seed in any::<u64>()) {
        let seq = BitSequence::random_balanced(2 * pairs, 5.0, 0.0, seed).unwrap();
        prop_assert_eq!(seq.len(), 2 * pairs);
        for pair in seq.bits.chunks(2) {
            prop_assert!(pair[0] != pair[1]);
        }
        prop_assert_eq!(seq.ones_fraction(), 0.5);
    }

    #[test]
    fn superposition_counts_releases(bits in proptest::collection::vec(any::<bool>(), 1..20)) {
        let grid = TimeGrid::new(0.0, 1.0, 100);
        let ones = TimeSeries::on_grid(&grid, vec![1.0; 100]);
        let seq = BitSequence::new(bits.clone(), 5.0, 0.0).unwrap();
        let r = received_signal(&ones, &seq).unwrap();
        for k in 0..grid.n_samples {
            let released = bits.iter().enumerate().filter(|&(p, &b)| b && 5 * p <= k).count();
            prop_assert_eq!(r.values[k], released as f64);
        }
    }
}
