use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unisim::core::WaveformSet;
use unisim::waveform_io::{format_value, CsvError};
use unisim::{parse_netlist, read_waveforms, run_startup, write_waveforms, Settings};

fn csv_string(wf: &WaveformSet) -> String {
    let mut buf = Vec::new();
    write_waveforms(wf, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn two_points_one_signal_is_three_lines() {
    let wf = WaveformSet {
        time: vec![0.0, 0.5],
        names: vec!["v(x)".into()],
        columns: vec![vec![1.0, -2.25]],
    };
    let text = csv_string(&wf);
    assert_eq!(text, "time,v(x)\n0,1\n0.5,-2.25\n");
    assert_eq!(text.lines().count(), 3);
    assert!(!text.contains('\r'));
    assert!(text.lines().all(|l| !l.ends_with(',')));
}

#[test]
fn values_use_the_shortest_round_trip_form() {
    let cases = [
        (0.0, "0"),
        (-0.0, "-0"),
        (0.1, "0.1"),
        (1.0 / 3.0, "0.3333333333333333"),
        (1.642385348798774e-5, "1.642385348798774e-5"),
        (1e-7, "1e-7"),
        (1e20, "1e20"),
        (123456.0, "123456"),
        (375.00746, "375.00746"),
    ];
    for (v, text) in cases {
        assert_eq!(format_value(v), text);
    }
}

#[test]
fn reader_reproduces_written_bits() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draw = |rng: &mut ChaCha8Rng| loop {
        let v = f64::from_bits(rng.gen());
        if v.is_finite() {
            return v;
        }
    };
    let n = 200;
    let wf = WaveformSet {
        time: (0..n).map(|k| k as f64 * 1e-4).collect(),
        names: vec!["a".into(), "b".into(), "c".into()],
        columns: vec![
            (0..n).map(|_| draw(&mut rng)).collect(),
            (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect(),
            vec![f64::MIN_POSITIVE / 8.0, -0.0, f64::MAX, f64::MIN, 5e-324]
                .into_iter()
                .cycle()
                .take(n)
                .collect(),
        ],
    };
    let back = read_waveforms(csv_string(&wf).as_bytes()).unwrap();
    assert_eq!(back.names, wf.names);
    let bits = |w: &WaveformSet| -> Vec<u64> {
        w.time.iter().chain(w.columns.iter().flatten()).map(|v| v.to_bits()).collect()
    };
    assert_eq!(bits(&back), bits(&wf));
}

#[test]
fn reader_rejects_foreign_files() {
    assert!(matches!(read_waveforms("t,x\n0,1\n".as_bytes()), Err(CsvError::MissingTime)));
    assert!(matches!(read_waveforms("time,x\n0,one\n".as_bytes()), Err(CsvError::Number { row: 1, .. })));
    assert!(matches!(read_waveforms("time,x\n0,1,2\n".as_bytes()), Err(CsvError::Csv(_))));
}

#[test]
fn columns_follow_registration_order_and_runs_repeat_exactly() {
    let netlist = parse_netlist(include_str!("../netlists/rl.net")).unwrap();
    let flags = Settings {
        t_end: Some(0.05),
        ..Settings::default()
    };
    let first = csv_string(&run_startup(&netlist, flags).unwrap().waveforms);
    let header = first.lines().next().unwrap();
    assert_eq!(header, "time,v(in),v(mid),i(V1),i(L1)");
    assert_eq!(first.lines().count(), 52);
    for _ in 0..3 {
        let again = parse_netlist(include_str!("../netlists/rl.net")).unwrap();
        assert_eq!(csv_string(&run_startup(&again, flags).unwrap().waveforms), first);
    }
}
