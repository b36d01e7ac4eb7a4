use leadsynth::record::{
    encode_format16, parse_header, parse_header_bytes, read_csv_record, read_record, slice_record, write_record_csv,
    MultiLeadRecord, Payload,
};
use leadsynth::LeadId;
use proptest::prelude::*;

fn record(n: usize, fs: f64, seed: u64) -> MultiLeadRecord<f64> {
    let leads = [LeadId::I, LeadId::II, LeadId::V3]
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let s = (0..n)
                .map(|i| ((i as f64 * 0.37 + k as f64 + seed as f64).sin() * 1.7).round() / 1000.0 * 997.0)
                .collect();
            (l, s)
        })
        .collect();
    MultiLeadRecord::from_leads("r", fs, leads, 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slice_composition(seed in 0u64..1000, a in 0u32..40, b in 1u32..30, c in 0u32..20, d in 1u32..10) {
        // times on a 0.1 s grid so every bound lands on a sample
        let r = record(1000, 10.0, seed);
        let (t0, t1) = (a as f64, (a + b + c + d) as f64);
        prop_assume!(t1 <= 100.0);
        let (u0, u1) = (c as f64, (c + d) as f64);
        let outer = slice_record(&r, t0, t1, &r.leads()).unwrap();
        let inner = slice_record(&outer, u0, u1, &[LeadId::II]).unwrap();
        let direct = slice_record(&r, t0 + u0, t0 + u1, &[LeadId::II]).unwrap();
        prop_assert_eq!(inner.samples(), direct.samples());
        prop_assert!((inner.start_time() - direct.start_time()).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip(values in prop::collection::vec(-5.0f64..5.0, 2..200), fs in prop::sample::select(vec![250.0, 360.0, 500.0, 1000.0])) {
        let r = MultiLeadRecord::from_leads("rt", fs, vec![(LeadId::AVL, values.clone()), (LeadId::V6, values.iter().map(|v| -v).collect())], 0.0).unwrap();
        let mut out = Vec::new();
        write_record_csv(&r, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let back: MultiLeadRecord<f64> = read_csv_record("rt", &text).unwrap();
        prop_assert_eq!(back.samples(), r.samples());
        prop_assert_eq!(back.fs(), fs);
        let mut again = Vec::new();
        write_record_csv(&back, &mut again).unwrap();
        prop_assert_eq!(String::from_utf8(again).unwrap(), text);
    }

    #[test]
    fn format16_round_trip_within_one_count(values in prop::collection::vec(-10.0f64..10.0, 1..100)) {
        let r = MultiLeadRecord::from_leads("f", 1000.0, vec![(LeadId::I, values.clone()), (LeadId::X, values.clone())], 0.0).unwrap();
        let (header, bytes) = encode_format16(&r, &[200.0, 1000.0]);
        let back: MultiLeadRecord<f64> = read_record(&header, Payload::Binary(&bytes)).unwrap();
        for (k, gain) in [200.0, 1000.0].iter().enumerate() {
            for (a, b) in back.samples()[k].iter().zip(&values) {
                prop_assert!((a - b).abs() <= 0.5 / gain + 1e-12);
            }
        }
    }

    #[test]
    fn header_parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        let _ = parse_header_bytes(&bytes);
    }

    #[test]
    fn header_parser_survives_mutated_headers(cut in 0usize..120, junk in "[ -~]{0,12}") {
        let base = "s0010_re 2 1000 38400\ns0010_re.dat 16 2000 16 0 -489 -8337 0 i\ns0010_re.dat 16 2000 16 0 -458 -8775 0 ii\n";
        let mut text = base[..cut.min(base.len())].to_string();
        text.push_str(&junk);
        if let Ok(h) = parse_header(&text) {
            prop_assert!(h.lead_count() >= 1);
            prop_assert!(h.fs > 0.0);
        }
    }
}
