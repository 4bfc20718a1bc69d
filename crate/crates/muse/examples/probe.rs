use std::time::Instant;
use muse::oracle::{self, FiniteDomain, Value};

fn main() {
    let p = muse::frontend::parse_problem(&std::fs::read_to_string("fixtures/loop.sem").unwrap(), "loop.sem").unwrap().problem;
    let pt = muse::frontend::parse_problem(&std::fs::read_to_string("fixtures/loop_tot.sem").unwrap(), "t.sem").unwrap().problem;
    let s = muse::frontend::parse_solution(&std::fs::read_to_string("fixtures/loop.sol").unwrap(), "loop.sol", &p).unwrap();
    let d = FiniteDomain::new(0, 6).unwrap();
    let t0 = Instant::now();
    let v1 = oracle::oracle_verify(&p, &s, &d).unwrap();
    println!("oracle loop: {v1} in {:?}", t0.elapsed());
    let t0 = Instant::now();
    let v2 = oracle::oracle_verify(&pt, &s, &d).unwrap();
    println!("oracle loop_tot: {v2} in {:?}", t0.elapsed());
    let term = s.term_for("f_loop").unwrap();
    for x in 0..=3i64 {
        let t0 = Instant::now();
        let args = vec![Value::Int(x), Value::Int(0), Value::Int(0), Value::Int(2*x)];
        let ok = oracle::bounded_derivation(&p, "Sem_L", term, &args, 20).unwrap();
        println!("derivation x={x}: {ok} in {:?}", t0.elapsed());
    }
}
