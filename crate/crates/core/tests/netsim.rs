mod support;

use cnmt_core::netsim::{realized_tx, BandwidthModel, RttTrace, TraceSpec};
use support::oracle::{rtt_linear_scan, RefRng};

#[test]
fn step_lookup_matches_linear_scan() {
    let mut rng = RefRng::new(21);
    let mut t = 0.0;
    let mut samples = Vec::new();
    for _ in 0..300 {
        samples.push((t, 5.0 + 100.0 * rng.uniform()));
        t += 0.1 + 10.0 * rng.uniform();
    }
    let trace = RttTrace::new("rand", samples.clone()).unwrap();
    for _ in 0..10_000 {
        let q = -5.0 + (t + 20.0) * rng.uniform();
        assert_eq!(trace.rtt_at(q), rtt_linear_scan(&samples, q), "t={q}");
    }
    for &(off, rtt) in &samples {
        assert_eq!(trace.rtt_at(off), rtt);
    }
}

#[test]
fn presets_lookup_matches_linear_scan() {
    for name in ["cp1", "cp2"] {
        let trace = TraceSpec::preset(name, 1).unwrap().generate().unwrap();
        let mut rng = RefRng::new(2);
        let end = trace.samples().last().unwrap().0 + 100.0;
        for _ in 0..2000 {
            let q = end * rng.uniform();
            assert_eq!(trace.rtt_at(q), rtt_linear_scan(trace.samples(), q));
        }
    }
}

#[test]
fn realized_tx_reference_values() {
    // 100 Mbps, 2 bytes/token: (n + m) * 16 bits / 100_000 bits per ms
    let bw = BandwidthModel::new(100.0, 2.0).unwrap();
    let trace = RttTrace::new("t", vec![(0.0, 40.0), (60.0, 80.0)]).unwrap();
    assert!((realized_tx(&trace, &bw, 10.0, 20.0, 20.0) - 40.0064).abs() < 1e-12);
    assert!((realized_tx(&trace, &bw, 60.0, 20.0, 20.0) - 80.0064).abs() < 1e-12);
    let slow = BandwidthModel::new(1.0, 2.0).unwrap();
    assert!((realized_tx(&trace, &slow, 0.0, 10.0, 10.0) - 40.32).abs() < 1e-12);
}

#[test]
fn trace_csv_roundtrip_is_lossless() {
    let trace = TraceSpec::cp2(9).generate().unwrap();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let back = RttTrace::read_csv("cp2", &buf[..]).unwrap();
    assert_eq!(back.samples(), trace.samples());
    let mut again = Vec::new();
    back.write_csv(&mut again).unwrap();
    assert_eq!(buf, again);
}
