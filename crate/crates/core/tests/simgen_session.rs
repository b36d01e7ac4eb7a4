use leadsynth::record::slice_record;
use leadsynth::simgen::{
    generate, simulate_handheld_session, HandheldSession, LagFunction, SessionSegment, SimError, SynthConfig,
    MAX_SHIFT_MS,
};
use leadsynth::LeadId;
use proptest::prelude::*;

#[test]
fn three_segments_with_gaps_are_exact_slices() {
    let s = generate::<f64>(&SynthConfig::linear_lag_fixture(500.0, 100.0), 1).unwrap();
    let leads = [LeadId::I, LeadId::V2, LeadId::AVF];
    let session = HandheldSession::sequential(&leads, 0.0, 30.0, 2.0);
    assert_eq!(session.gap_s(), 4.0);
    let out = simulate_handheld_session(&s.record, &session).unwrap();
    assert_eq!(out.len(), 3);
    for (k, (seg, &lead)) in out.iter().zip(&leads).enumerate() {
        let t0 = k as f64 * 32.0;
        let want = slice_record(&s.record, t0, t0 + 30.0, &[lead]).unwrap();
        assert_eq!(seg.leads(), vec![lead]);
        assert_eq!(seg.samples(), want.samples());
        assert_eq!(seg.start_time(), t0);
        assert_eq!(seg.len(), 15_000);
    }
}

#[test]
fn one_segment_over_the_whole_record_is_the_lead() {
    let s = generate::<f64>(&SynthConfig::default(), 2).unwrap();
    let session = HandheldSession {
        segments: vec![SessionSegment {
            lead: LeadId::V4,
            t_start: 0.0,
            t_end: s.record.duration(),
        }],
    };
    let out = simulate_handheld_session(&s.record, &session).unwrap();
    assert_eq!(out[0].lead(LeadId::V4).unwrap(), s.record.lead(LeadId::V4).unwrap());
}

#[test]
fn bad_schedules_are_rejected() {
    let s = generate::<f64>(
        &SynthConfig {
            duration_s: 20.0,
            ..SynthConfig::default()
        },
        3,
    )
    .unwrap();
    let seg = |lead, t_start, t_end| SessionSegment { lead, t_start, t_end };
    for segments in [
        vec![seg(LeadId::I, 0.0, 10.0), seg(LeadId::II, 8.0, 15.0)],
        vec![seg(LeadId::I, 5.0, 30.0)],
        vec![seg(LeadId::I, 5.0, 5.0)],
        vec![],
        vec![seg(LeadId::X, 0.0, 5.0)],
    ] {
        let r = simulate_handheld_session(&s.record, &HandheldSession { segments });
        assert!(matches!(r, Err(SimError::ScheduleOutOfRange(_))), "{r:?}");
    }
}

#[test]
fn identical_leads_without_lag_or_noise() {
    let t = SynthConfig::default().leads[3].1;
    let cfg = SynthConfig {
        duration_s: 10.0,
        leads: vec![(LeadId::I, t), (LeadId::II, t), (LeadId::V1, t)],
        ..SynthConfig::default()
    };
    let s = generate::<f64>(&cfg, 4).unwrap();
    assert_eq!(s.record.lead(LeadId::I), s.record.lead(LeadId::II));
    assert_eq!(s.record.lead(LeadId::I), s.record.lead(LeadId::V1));
}

#[test]
fn linear_lag_truth_matches_the_formula() {
    let cfg = SynthConfig {
        duration_s: 30.0,
        lags: vec![(
            LeadId::V3,
            LagFunction::LinearInRr {
                slope: 0.02,
                rr_ref_ms: 800.0,
                intercept_ms: 0.0,
                initial_ms: 0.0,
            },
        )],
        ..SynthConfig::default()
    };
    let s = generate::<f64>(&cfg, 5).unwrap();
    let t = &s.truth;
    let n = t.lead(LeadId::V3).unwrap().r_times_s.len();
    assert!(n > 30);
    for k in 1..n {
        let want = 0.02 * (t.rr_ms[k] - 800.0);
        let got = t.lag_ms(LeadId::V3, LeadId::II, k).unwrap();
        assert!((got - want).abs() < 1e-6, "beat {k}: {got} vs {want}");
    }
}

#[test]
fn excessive_lag_is_rejected() {
    let cfg = SynthConfig {
        lags: vec![(LeadId::V1, LagFunction::Constant { ms: MAX_SHIFT_MS + 1.0 })],
        ..SynthConfig::default()
    };
    assert!(matches!(generate::<f64>(&cfg, 0), Err(SimError::InvalidConfig(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn same_seed_same_record(seed in 0u64..10_000) {
        let cfg = SynthConfig { duration_s: 5.0, snr_db: Some(15.0), drift_mv: 0.2, ..SynthConfig::linear_lag_fixture(500.0, 5.0) };
        let a = generate::<f64>(&cfg, seed).unwrap();
        let b = generate::<f64>(&cfg, seed).unwrap();
        prop_assert_eq!(a.record, b.record);
        prop_assert_eq!(a.truth, b.truth);
    }
}
