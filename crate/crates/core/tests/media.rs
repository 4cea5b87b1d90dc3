use cellgate::call::g711;
use cellgate::call::jitter::JitterBuffer;
use cellgate::call::rtp::{RtpPacket, RtpSender, PT_PCMU, SAMPLES_PER_FRAME};
use proptest::prelude::*;

fn energy(s: &[i16]) -> f64 {
    s.iter().map(|&x| (x as f64) * (x as f64)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, ..ProptestConfig::default() })]

    #[test]
    fn packet_roundtrip(
        pt in 0u8..128,
        marker in any::<bool>(),
        seq in any::<u16>(),
        ts in any::<u32>(),
        ssrc in any::<u32>(),
        payload in prop::collection::vec(any::<u8>(), 0..400),
    ) {
        let p = RtpPacket { payload_type: pt, marker, seq, timestamp: ts, ssrc, payload };
        prop_assert_eq!(RtpPacket::parse(&p.to_bytes()).unwrap(), p);
    }

    #[test]
    fn parse_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = RtpPacket::parse(&bytes);
    }

    /// Stream monotonicity, starting close to both wrap points.
    #[test]
    fn sender_is_monotone_across_wrap(
        ssrc in any::<u32>(),
        seq in prop_oneof![any::<u16>(), (u16::MAX - 20)..=u16::MAX],
        ts in prop_oneof![any::<u32>(), (u32::MAX - 5000)..=u32::MAX],
        n in 2usize..200,
    ) {
        let mut tx = RtpSender::new(ssrc, seq, ts);
        let pkts: Vec<_> = (0..n).map(|_| tx.packet(vec![0xFF; SAMPLES_PER_FRAME])).collect();
        prop_assert!(pkts[0].marker);
        for w in pkts.windows(2) {
            prop_assert_eq!(w[1].seq, w[0].seq.wrapping_add(1));
            prop_assert_eq!(w[1].timestamp, w[0].timestamp.wrapping_add(160));
            prop_assert_eq!(w[1].ssrc, ssrc);
            prop_assert!(!w[1].marker);
            prop_assert_eq!(w[1].payload_type, PT_PCMU);
        }
        prop_assert_eq!(tx.sent(), n as u64);
    }

    /// A pure tone keeps its energy through a µ-law roundtrip within 1 dB.
    #[test]
    fn tone_energy_within_one_db(freq in 100.0f64..3400.0, amp in 200.0f64..32000.0, phase in 0.0f64..std::f64::consts::TAU) {
        let pcm: Vec<i16> = (0..8000)
            .map(|n| (amp * (2.0 * std::f64::consts::PI * freq * n as f64 / 8000.0 + phase).sin()).round() as i16)
            .collect();
        let back = g711::decode_frame(&g711::encode_frame(&pcm));
        let db = 10.0 * (energy(&back) / energy(&pcm)).log10();
        prop_assert!(db.abs() < 1.0, "{} dB", db);
    }

    #[test]
    fn mulaw_decode_encode_fixed_point(code in any::<u8>()) {
        let s = g711::decode(code);
        // 0x7F and 0xFF both decode to zero; zero encodes to 0xFF
        let want = if code == 0x7F { 0xFF } else { code };
        prop_assert_eq!(g711::encode(s), want);
    }

    /// Whatever order frames arrive in, playout is in sequence order and
    /// every frame is played once, counted late, or still waiting for priming.
    #[test]
    fn jitter_buffer_reorders(
        start in any::<u16>(),
        n in 1usize..80,
        swaps in prop::collection::vec((any::<prop::sample::Index>(), 0usize..3), 0..40),
        depth in 1usize..5,
    ) {
        let mut order: Vec<usize> = (0..n).collect();
        for (i, d) in swaps {
            let i = i.index(n);
            let j = (i + d).min(n - 1);
            order.swap(i, j);
        }
        let mut jb = JitterBuffer::new(depth);
        let mut played = Vec::new();
        let mut concealed = 0u64;
        for &k in &order {
            jb.push(start.wrapping_add(k as u16), k);
            if let Some(f) = jb.pop() {
                match f {
                    Some(k) => played.push(k),
                    None => concealed += 1,
                }
            }
        }
        while let Some(f) = jb.pop() {
            match f {
                Some(k) => played.push(k),
                None => concealed += 1,
            }
        }
        prop_assert!(played.windows(2).all(|w| w[0] < w[1]), "{:?}", played);
        prop_assert_eq!(played.len() as u64 + jb.late + jb.len() as u64, n as u64);
        prop_assert_eq!(jb.concealed, concealed);
    }
}
