//! Hyperparameter tables.

use std::collections::BTreeMap;

use vfm_core::optim::{Method, Schedule};
use vfm_core::OptimizerConfig;

use crate::config::{opt, HyperTable};

/// Exponent `a` of the decaying LR schedule `gamma0 / k^a`.
pub const LR_DECAY: f64 = 0.25;

type Row = (&'static str, [(Method, f64, bool, usize); 3]);

const S: Method = Method::Sgd;
const A: Method = Method::Adam;

fn table(rows: &[Row]) -> BTreeMap<String, BTreeMap<String, OptimizerConfig>> {
    let mut out: BTreeMap<String, BTreeMap<String, OptimizerConfig>> = BTreeMap::new();
    for (model, cells) in rows {
        for (id, &(method, gamma, decay, steps)) in ["pbl_6m", "pbl_2w", "ol"].iter().zip(cells) {
            let schedule = if decay { Schedule::PowerDecay(LR_DECAY) } else { Schedule::Constant };
            out.entry(id.to_string())
                .or_default()
                .insert(model.to_string(), opt(method, gamma, schedule, steps));
        }
    }
    out
}

/// Settings published with the original field study (training on all
/// measurements, then on well tests only). They were searched on field data
/// and are offered for comparison; the synthetic study defaults to [`tuned`].
pub fn field() -> HyperTable {
    let all: [Row; 6] = [
        ("lr", [(S, 1e-2, true, 1), (S, 1e-1, true, 1), (S, 0.5, false, 20)]),
        ("nn", [(A, 1e-4, false, 1), (A, 1e-3, false, 1), (A, 1e-5, false, 20)]),
        ("mtl", [(A, 1e-4, false, 1), (A, 1e-3, false, 1), (A, 1e-6, false, 20)]),
        ("hem", [(A, 1e-3, false, 1), (A, 1e-3, false, 1), (S, 1e-2, false, 20)]),
        ("ham", [(A, 1e-3, false, 1), (A, 1e-3, false, 1), (S, 1e-5, false, 20)]),
        ("mm", [(A, 1e-3, false, 1), (A, 1e-3, false, 1), (A, 1e-2, false, 10)]),
    ];
    let welltest: [Row; 6] = [
        ("lr", [(S, 1e-4, true, 1), (S, 0.5, true, 1), (S, 1e-3, true, 1)]),
        ("nn", [(A, 1e-4, false, 1), (A, 1e-3, false, 1), (S, 1e-4, false, 20)]),
        ("mtl", [(A, 1e-5, false, 1), (A, 1e-5, false, 1), (A, 1e-5, false, 20)]),
        ("hem", [(A, 1e-3, false, 1), (A, 1e-4, false, 1), (S, 1e-10, false, 20)]),
        ("ham", [(A, 1e-5, false, 1), (A, 1e-5, false, 1), (A, 1e-5, false, 20)]),
        ("mm", [(A, 1e-3, false, 1), (A, 1e-3, false, 1), (A, 1e-2, false, 10)]),
    ];
    BTreeMap::from([("all".to_string(), table(&all)), ("welltest".to_string(), table(&welltest))])
}

/// Settings selected by `vfm tune` on the built-in synthetic scenarios
/// (study seed 7).
pub fn tuned() -> HyperTable {
    let all: [Row; 6] = [
        ("lr", [(S, 1e-1, true, 1), (S, 1e-1, true, 1), (S, 1e-3, false, 10)]),
        ("nn", [(A, 1e-1, false, 1), (A, 1e-1, false, 1), (A, 1e-3, false, 10)]),
        ("mtl", [(A, 1e-1, false, 1), (A, 1e-1, false, 1), (A, 1e-4, false, 10)]),
        ("hem", [(A, 1e-1, false, 1), (A, 1e-1, false, 1), (A, 1e-3, false, 10)]),
        ("ham", [(A, 1e-1, false, 1), (A, 1e-1, false, 1), (A, 1e-2, false, 1)]),
        ("mm", [(A, 1e-1, false, 1), (A, 1e-1, false, 1), (A, 1e-3, false, 20)]),
    ];
    let welltest: [Row; 6] = [
        ("lr", [(S, 1e-5, true, 1), (S, 1e-2, true, 1), (S, 1e-6, true, 20)]),
        ("nn", [(A, 1e-2, false, 1), (A, 1e-1, false, 1), (S, 0.5, false, 10)]),
        ("mtl", [(A, 1e-3, false, 1), (A, 1e-3, false, 1), (S, 1e-2, false, 10)]),
        ("hem", [(A, 1e-2, false, 1), (A, 1e-1, false, 1), (S, 0.5, false, 20)]),
        ("ham", [(A, 1e-1, false, 1), (A, 1e-1, false, 1), (A, 1e-1, false, 20)]),
        ("mm", [(A, 1e-1, false, 1), (A, 1e-1, false, 1), (A, 0.5, false, 10)]),
    ];
    BTreeMap::from([("all".to_string(), table(&all)), ("welltest".to_string(), table(&welltest))])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_cells() {
        let t = field();
        let lr_ol = t["all"]["ol"]["lr"];
        assert_eq!((lr_ol.method, lr_ol.gamma0, lr_ol.steps), (Method::Sgd, 0.5, 20));
        assert_eq!(lr_ol.schedule, Schedule::Constant);
        let lr_pbl = t["welltest"]["pbl_2w"]["lr"];
        assert_eq!(lr_pbl.schedule, Schedule::PowerDecay(LR_DECAY));
        assert_eq!(t["welltest"]["ol"]["hem"].gamma0, 1e-10);
        for case in t.values() {
            for method in case.values() {
                assert_eq!(method.len(), 6);
            }
        }
    }
}
