use ltlab_core::chareps::Character;
use ltlab_core::fields::qp;
use ltlab_core::lubin_tate::*;
use ltlab_core::padic::FieldElem;
use ltlab_core::phigamma::*;
use ltlab_core::series::*;

fn main() {
    let f = qp(3, 30).unwrap();
    let g = FormalGroup::special(&f);
    let t1 = torsion_tower(&g, 1).unwrap();
    let delta = Character::trivial(&f).unwrap();
    let m = RankOneModule::new(&g, delta).unwrap();
    for j in [0i64, 3, 6] {
        let x = FieldElem::from_i64(&f, j, WIDE_PREC);
        let el = EtaSpanElem { module: m.clone(), terms: vec![(x.clone(), OmegaScalar::one(&f, WIDE_PREC))] };
        let via_span = el.psi_big().unwrap().to_series(8).unwrap();
        let via_trace = psi_big_torsion(&g, &t1, &el.to_series(32).unwrap());
        match via_trace {
            Err(e) => println!("j={j}: trace err {e}"),
            Ok(tr) => {
                let d = via_span.truncate_pi(6).sub(&tr.truncate_pi(6));
                let bad: Vec<(i64, Vec<(i64, Option<String>, i64)>)> = d.coeffs().iter().filter(|(_, c)| !c.is_zero_at_prec())
                    .map(|(k, c)| (*k, c.terms().iter().filter(|(_, x)| !x.is_zero_at_prec()).map(|(mm, x)| (*mm, x.val_pi().ok().map(|v| v.to_string()), x.prec_pi())).collect())).collect();
                println!("j={j}: bad {bad:?}");
            }
        }
    }
}
