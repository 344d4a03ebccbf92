use ncrc_core::channel::{Channel, ChannelConfig, Receiver};
use ncrc_core::queueing::{DataQueue, PowerQueue};
use ncrc_core::rateless::{MulticastReception, UnicastReception};
use ncrc_core::repair::RepairFlow;
use ncrc_core::scheduler::{FlowView, NcRc, PowerSet};
use ncrc_core::sim::{classify_stability, StabilityRule, Verdict};
use proptest::prelude::*;

proptest! {
    #[test]
    fn queue_identity(initial in 0.0..100.0f64, steps in prop::collection::vec((0.0..50.0f64, 0.0..30.0f64), 1..200)) {
        let mut q = DataQueue::new(initial);
        for (service, arrivals) in steps {
            let before = q.backlog;
            let out = q.step(service, arrivals);
            prop_assert!(out <= before + 1e-12 && out <= service + 1e-12);
            prop_assert!(q.backlog >= 0.0);
            prop_assert!(q.identity_holds());
        }
    }

    #[test]
    fn power_queue_bounds_average_power(levels in prop::collection::vec(prop::sample::select(vec![0.0, 5.0, 10.0, 20.0]), 1..500)) {
        let mut z = PowerQueue::new(10.0);
        let mut spent = 0.0;
        for p in &levels {
            let prev = z.z;
            z.step(*p);
            spent += p;
            prop_assert_eq!(z.z, (prev - 10.0f64).max(0.0) + p);
        }
        let t = levels.len() as f64;
        prop_assert!(spent / t <= 10.0 + z.z / t + 1e-9);
        prop_assert!(z.rate_bound_holds());
    }

    #[test]
    fn unicast_overshoot_below_one_slot(m in 1.0..200.0f64, eps in 0.0..0.5f64, mis in prop::collection::vec(0.0..5.0f64, 1..400)) {
        let mut r = UnicastReception::new(m, eps);
        for mi in mis {
            let before = r.accumulated;
            if r.step(true, mi) {
                let total = before + mi;
                prop_assert!(total >= m * (1.0 + eps));
                prop_assert!(total < m * (1.0 + eps) + 5.0 + 1e-9);
                prop_assert_eq!(r.accumulated, 0.0);
            } else {
                prop_assert!(r.accumulated < r.threshold());
            }
        }
    }

    #[test]
    fn session_length_is_max_over_members(mis in prop::collection::vec(prop::collection::vec(0.0..5.0f64, 3), 1..300)) {
        let mut rx = MulticastReception::new(3, 20.0, 0.0);
        for slot in &mis {
            if let Some(end) = rx.step(true, slot) {
                let max = rx.member_lengths.iter().filter_map(|h| h.last().copied()).max().unwrap();
                prop_assert_eq!(end.length, max);
                prop_assert!(end.accumulated.iter().all(|&a| a >= 20.0));
            }
        }
    }

    #[test]
    fn settlement_conserves_the_message(register in 0.0..100.0f64, eps in 0.0..0.3f64, backlog in 0.0..200.0f64) {
        let mut flow = RepairFlow::new(0, 1, 40.0, eps, backlog);
        let s = flow.settle(1, register);
        prop_assert!((s.collected + s.residual - 40.0).abs() <= 1e-12);
        prop_assert!(s.collected >= 0.0 && s.residual >= 0.0);
        prop_assert!(flow.backlog_covers_pending());
    }

    #[test]
    fn decision_invariant_to_power_of_two_scaling(
        backlogs in prop::collection::vec(0.0..500.0f64, 3),
        mis in prop::collection::vec(prop::collection::vec(0.0..5.0f64, 3), 2),
        z in 0.0..100.0f64,
        k in -3i32..6,
    ) {
        let ps = PowerSet::new(vec![10.0, 20.0], 10.0, true).unwrap();
        let policy = NcRc::new(&ps, 5.0, 1.0, 0.0);
        let mut sorted: Vec<Vec<f64>> = mis.clone();
        for v in sorted.iter_mut() {
            v[0] = 0.0;
            v.sort_by(f64::total_cmp);
        }
        let views = |c: f64| vec![
            FlowView::Unicast { backlog: backlogs[0] * c, expected_mi: &sorted[0], message_bits: 40.0 },
            FlowView::Multicast { backlog: backlogs[1] * c, code_index: 4, sum_lengths: 50, message_bits: 40.0 },
            FlowView::Unicast { backlog: backlogs[2] * c, expected_mi: &sorted[1], message_bits: 40.0 },
        ];
        let c = 2f64.powi(k);
        let a = policy.decide(z, &views(1.0));
        let b = policy.decide(z * c, &views(c));
        prop_assert_eq!(a.flow, b.flow);
        prop_assert_eq!(a.power, b.power);
        prop_assert_eq!(a.index, b.index);
    }

    #[test]
    fn constant_traces_are_stable(level in 0.0..1e6f64, quantum in 1.0..100.0f64) {
        let trace = vec![level; 10_000];
        let (v, slope) = classify_stability(&trace, quantum, StabilityRule::default()).unwrap();
        prop_assert_eq!(v, Verdict::Stable);
        prop_assert!(slope.abs() < 1e-9);
    }

    #[test]
    fn bins_partition_the_ergodic_mean(rho in 0.05..0.95f64, snr in 0.0..20.0f64, p in 1.0..20.0f64, bins in 1usize..6) {
        let mut cfg = ChannelConfig::uniform(1, &[], snr, rho);
        cfg.quant_bins = bins;
        let ch = Channel::new(cfg, 10.0).unwrap();
        let rx = Receiver::Unicast(0);
        let avg: f64 = (0..bins).map(|b| ch.bin_expected_mi(rx, b, p)).sum::<f64>() / bins as f64;
        prop_assert!((avg - ch.ergodic_mi(rx, p)).abs() < 1e-6);
        for b in 1..bins {
            prop_assert!(ch.bin_expected_mi(rx, b, p) >= ch.bin_expected_mi(rx, b - 1, p) - 1e-12);
        }
    }
}
