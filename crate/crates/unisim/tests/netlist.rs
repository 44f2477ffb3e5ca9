use proptest::prelude::*;
use unisim::core::circuit::{ElementKind, NodeRef};
use unisim::netlist::{RecordKind, Units};
use unisim::{parse_netlist, AnalysisKind, NetlistError};

const MOTOR20HP: &str = include_str!("../netlists/motor20hp.net");
const RL: &str = include_str!("../netlists/rl.net");
const TWOBUS_PQ: &str = include_str!("../netlists/twobus_pq.net");
const TWOBUS_PV: &str = include_str!("../netlists/twobus_pv.net");

const MINIMAL: &str = "ground 0
node n1
V V1 n1 0 1
R R1 n1 0 1
analysis steady
";

fn parse_err(text: &str) -> NetlistError {
    parse_netlist(text).expect_err("netlist should be rejected")
}

#[test]
fn minimal_file_parses() {
    let n = parse_netlist(MINIMAL).unwrap();
    // one source record plus one resistor record
    assert_eq!(n.elements.len(), 2);
    assert_eq!(n.elements[0].kind, RecordKind::VoltageSource);
    assert_eq!(n.elements[1].kind, RecordKind::Resistor);
    assert_eq!(n.circuit.elements().len(), 2);
    assert_eq!(n.ground, "0");
    assert_eq!(n.units, Units::Si);
    assert_eq!(n.directive(AnalysisKind::Steady).unwrap().line, 5);
}

#[test]
fn undeclared_node_is_a_validation_error_naming_it() {
    let err = parse_err("ground 0\nnode a\nV V1 a 0 1\nR R1 a nowhere 5\n");
    assert!(!err.is_parse());
    assert_eq!((err.line(), err.column()), (4, 8));
    assert!(err.reason().contains("`nowhere`"), "{err}");
    assert!(err.to_string().contains("line 4"));
}

#[test]
fn bundled_motor_encodes_the_reference_machine() {
    let n = parse_netlist(MOTOR20HP).unwrap();
    let p = n.motor("m1").unwrap();
    assert_eq!(p.rs, 0.2761);
    assert_eq!(p.rr, 0.1645);
    assert_eq!(p.lls, 2.191e-3);
    assert_eq!(p.llr, 2.191e-3);
    assert_eq!(p.lm, 76.14e-3);
    assert_eq!(p.inertia, 0.1);
    assert_eq!(p.damping, 0.01771);
    assert_eq!(p.poles, 2);
    assert_eq!(p.load_torque.coefficients, vec![10.0]);
    assert_eq!(p.v_ll, 460.0);
    assert_eq!(p.frequency, 60.0);
    assert_eq!(*p, unisim::core::MotorParams::reference_20hp());
    // one supply record becomes three phase sources
    assert_eq!(n.elements.len(), 2);
    assert_eq!(n.circuit.elements().len(), 4);
    assert!(n.circuit.element_by_name("grid.b").is_some());
}

#[test]
fn golden_netlists_parse() {
    for text in [MOTOR20HP, RL, TWOBUS_PQ, TWOBUS_PV] {
        parse_netlist(text).unwrap();
    }
    let pq = parse_netlist(TWOBUS_PQ).unwrap();
    assert_eq!(pq.units, Units::PerUnit);
    assert_eq!(pq.title.as_deref(), Some("two-bus power flow, PQ load"));
    assert_eq!(pq.nodes, ["slack", "mid", "load"]);
}

#[test]
fn syntax_and_semantics_are_distinct_categories() {
    let syntax = [
        "ground 0\nnode a\nR R1 a 0 one\n",
        "ground 0\nnode a\nR R1 a 0\n",
        "ground 0\nnode a\nR R1 a 0 1 2\n",
        "ground 0\nnode a\nX X1 a 0\n",
        "ground 0\nnode a\nV V1 a 0 1 phase=\n",
        "ground 0\nnode a\nV V1 a 0 1 freq=3\n",
        "ground 0\nnode a\nV V1 a 0 1 phase=1 phase=2\n",
        "ground 0\nnode a\nR R1 a 0 inf\n",
        "ground 0\nnode a,b\n",
        "units metric\n",
        "analysis sweep\n",
        "analysis steady dt=1e-3\n",
        "ground 0\nnode a\nS S1 a 0 ajar\n",
    ];
    for text in syntax {
        assert!(parse_err(text).is_parse(), "{text:?}");
    }
    let semantic = [
        "node a\nV V1 a 0 1\n",
        "ground 0\nground 1\n",
        "ground 0\nnode a\nR R1 a 0 -1\n",
        "ground 0\nnode a\nR R1 a 0 1\nR R1 a 0 2\n",
        "ground 0\nnode a a\n",
        "ground 0\nnode 0\n",
        "ground 0\nnode a b\nR R1 a 0 1\n",
        "ground 0\nnode a\nV V1 a 0 1\nH H1 a 0 R9 2\n",
        "ground 0\nnode a\nR R1 a 0 1\nH H1 a 0 R1 2\n",
        "ground 0\nnode a\nL L1 a 0 1\nL L2 a 0 1\nK K1 L1 L2 1.5\n",
        "ground 0\nnode a\nL L1 a 0 1\nK K1 L1 L1 0.5\n",
        "ground 0\nnode a\nL L1 a 0 1\nR R1 a 0 1\nK K1 L1 R1 0.5\n",
        "ground 0\nnode a\nS S1 a 0 open toggle=0.2,0.1\n",
        "analysis transient dt=0\n",
        "ground 0\nnode a b c\nsupply s a b c vll=460\n",
        "units pu\nfreq 60\nground 0\nnode a b c\nsupply s a b c vll=1\nmotor m a b c rs=1 rr=1 lls=1 llr=1 lm=1 j=1 poles=2\n",
        "freq 50\nground 0\nnode a b c\nsupply s a b c vll=1\nmotor m a b c rs=1 rr=1 lls=1 llr=1 lm=1 j=1 poles=2 f=60\n",
        "freq 60\nground 0\nnode a b c\nsupply s a b c vll=1\nmotor m a b c rs=1 rr=1 lls=1 llr=1 lm=1 j=1 poles=3\n",
        "freq 60\nground 0\nnode a b c\nsupply s a b c vll=1\nmotor m a b c rs=1 rr=0 lls=1 llr=1 lm=1 j=1 poles=2\n",
        "freq 60\nground 0\nnode a b c\nR R1 a b 1\nR R2 b c 1\nR R3 c 0 1\nmotor m a b c rs=1 rr=1 lls=1 llr=1 lm=1 j=1 poles=2\n",
    ];
    for text in semantic {
        let err = parse_err(text);
        assert!(!err.is_parse(), "{text:?}: {err}");
        assert!(err.line() >= 1 && err.column() >= 1);
    }
}

#[test]
fn errors_point_at_the_offending_field() {
    let err = parse_err("ground 0\nnode a\nV V1 a 0 1 phase=abc\n");
    assert_eq!((err.line(), err.column()), (3, 18));
    let err = parse_err("ground 0\nnode a\n  R R1 a 0 -4  # comment\n");
    assert_eq!((err.line(), err.column()), (3, 12));
    let err = parse_err("ground 0\nnode a\nR R1 a\n");
    assert_eq!(err.line(), 3);
    assert!(err.reason().contains("node b"));
    let err = parse_err("ground 0\nnode a b\nR R1 a 0 1\n");
    assert_eq!((err.line(), err.column()), (2, 8));
    let err = parse_err("");
    assert!(!err.is_parse() && err.line() == 1);
}

#[test]
fn coupled_coils_share_one_block() {
    let text = "ground 0
node p s src
V V1 src 0 2
R R1 src p 1
L Lp p 0 1
R R2 s 0 3
L Ls s 0 1
K K1 Lp Ls 0.5
";
    let n = parse_netlist(text).unwrap();
    let g = &n.circuit;
    let block = g.element(g.element_by_name("Lp").unwrap());
    match &block.kind {
        ElementKind::Inductors { coils, inductance } => {
            assert_eq!(coils.len(), 2);
            assert_eq!(coils[1].label, "Ls");
            assert_eq!(inductance, &vec![1.0, 0.5, 0.5, 1.0]);
        }
        other => panic!("{other:?}"),
    }
    assert!(g.element_by_name("Ls").is_none());

    let with_h = format!("{text}node q\nH H1 q 0 Ls 2\nR R3 q 0 1\n");
    let n = parse_netlist(&with_h).unwrap();
    let h = n.circuit.element(n.circuit.element_by_name("H1").unwrap());
    match &h.kind {
        ElementKind::Ccvs { control, .. } => {
            assert_eq!(control.element, n.circuit.element_by_name("Lp").unwrap());
            assert_eq!(control.coil, 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn supply_phases_and_switch_records() {
    let n = parse_netlist(
        "freq 50\nground 0\nnode a b c d\nsupply s a b c vll=400 phase=30\nR Ra a d 1\nR Rb b d 1\nR Rc c d 1\nS S1 d 0 closed toggle=0.1,0.2\nH H1 d 0 s.b 0.5\n",
    );
    let n = n.unwrap();
    let g = &n.circuit;
    let ElementKind::VoltageSource { source, p, .. } = &g.element(g.element_by_name("s.c").unwrap()).kind else {
        panic!()
    };
    assert_eq!(*p, g.node_by_name("c").unwrap());
    let expected = 400.0 * (2.0f64 / 3.0).sqrt();
    assert!((source.amplitude - expected).abs() < 1e-12);
    // phase c lags a by 240 degrees: 30 - 240 wraps to 150
    assert!((source.phase - 150f64.to_radians()).abs() < 1e-12);
    let ElementKind::Switch { closed, toggles, .. } = &g.element(g.element_by_name("S1").unwrap()).kind else {
        panic!()
    };
    assert!(*closed);
    assert_eq!(toggles, &vec![0.1, 0.2]);
    assert_ne!(g.node_by_name("d"), Some(NodeRef::GROUND));
}

#[test]
fn directives_merge_by_kind() {
    let n = parse_netlist(MOTOR20HP).unwrap();
    let c = n.settings(AnalysisKind::Compare);
    assert_eq!((c.dt, c.t_end, c.tol, c.max_nr), (Some(1e-4), Some(1.5), Some(1e-9), Some(50)));
    // compare settings drive a plain transient when none is given
    assert_eq!(n.settings(AnalysisKind::Transient), c);
    let s = n.settings(AnalysisKind::Steady);
    assert_eq!((s.dt, s.max_nr), (None, None));

    let err = parse_err("ground 0\nnode a\nR R1 a 0 1\nanalysis steady\nanalysis steady tol=1e-6\n");
    assert!(err.reason().contains("twice") || err.line() == 5, "{err}");
}

#[test]
fn keywords_are_case_insensitive_and_comments_ignored() {
    let text = "# header\nGROUND 0 # trailing\nNode n1\n\n   \nv V1 n1 0 1\nr R1 n1 0 1\nAnalysis Steady TOL=1e-8\n";
    let n = parse_netlist(text).unwrap();
    assert_eq!(n.directive(AnalysisKind::Steady).unwrap().settings.tol, Some(1e-8));
}

fn mutate(base: &str, edits: &[(usize, u8, u8)]) -> String {
    let mut bytes = base.as_bytes().to_vec();
    for &(pos, op, b) in edits {
        if bytes.is_empty() {
            bytes.push(b);
            continue;
        }
        let at = pos % bytes.len();
        match op % 3 {
            0 => bytes[at] = b,
            1 => {
                bytes.remove(at);
            }
            _ => bytes.insert(at, b),
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,400}") {
        if let Err(e) = parse_netlist(&text) {
            prop_assert!(e.line() >= 1 && e.column() >= 1);
        }
    }

    #[test]
    fn mutated_golden_files_never_panic(
        which in 0usize..4,
        edits in prop::collection::vec((any::<usize>(), any::<u8>(), prop::sample::select(b" =#\n.,-0123456789abcdeLKHSVRIlv".to_vec())), 1..12),
    ) {
        let base = [MOTOR20HP, RL, TWOBUS_PQ, TWOBUS_PV][which];
        if let Err(e) = parse_netlist(&mutate(base, &edits)) {
            prop_assert!(e.line() >= 1 && e.column() >= 1);
        }
    }

    #[test]
    fn token_soup_never_panics(tokens in prop::collection::vec(prop::sample::select(vec![
        "ground", "node", "R", "L", "K", "V", "I", "G", "H", "S", "PQ", "PV", "supply", "motor", "analysis",
        "units", "freq", "title", "0", "a", "b", "c", "1", "-1", "0.5", "1e300", "steady", "transient", "compare",
        "open", "closed", "p=1", "q=0", "v=1", "vll=460", "phase=30", "toggle=0.1", "rs=1", "poles=2", "dt=1e-3",
        "tend=1", "max_nr=0", "tl=1,2", "\n", "\n", "\n", "#", "=",
    ]), 0..80)) {
        let text = tokens.join(" ");
        if let Err(e) = parse_netlist(&text) {
            prop_assert!(e.line() >= 1 && e.column() >= 1);
        }
    }
}
