//! Checkpoints: configuration, every network parameter and running
//! statistic, all optimizer moments, random stream states, progress and the
//! whitening statistics, in one integrity-checked archive.

use std::path::Path;

use crate::archive::{Archive, BlockData};
use crate::data::WhiteningStats;
use crate::optim::{AdamState, Moments};
use crate::params::ParamStore;
use crate::rng;

use super::{TrainConfig, TrainError, Trainer};

pub const CHECKPOINT_LAST: &str = "last.ckpt";
pub const CHECKPOINT_BEST: &str = "best.ckpt";

fn push_params(a: &mut Archive, prefix: &str, store: &ParamStore) {
    for (name, e) in store.iter() {
        a.push(format!("{prefix}/{name}"), BlockData::F32(e.value.clone()));
    }
}

fn push_opt(a: &mut Archive, name: &str, st: &AdamState) {
    a.push(format!("opt/{name}/t"), BlockData::U64(vec![st.t]));
    for (p, m) in &st.moments {
        a.push(format!("opt/{name}/m/{p}"), BlockData::F32(m.m.clone()));
        a.push(format!("opt/{name}/v/{p}"), BlockData::F32(m.v.clone()));
    }
}

pub fn to_archive(t: &Trainer) -> Archive {
    let mut a = Archive::new();
    a.push("config", BlockData::Bytes(t.config().to_kv().into_bytes()));
    a.push("state/epoch", BlockData::U64(vec![t.epoch as u64]));
    a.push(
        "state/best",
        BlockData::F64(t.best.map(|(m, e)| vec![m, e as f64]).unwrap_or_default()),
    );
    a.push("state/history", BlockData::F64(t.history.iter().flatten().copied().collect()));
    a.push("state/fold", BlockData::U64(t.fold.map(|f| vec![f as u64]).unwrap_or_default()));
    for (name, r) in [("pairing", &t.pairing), ("shuffle", &t.shuffle), ("order", &t.order)] {
        a.push(format!("rng/{name}"), BlockData::Bytes(rng::save_state(r)));
    }
    for (name, store) in t.stores() {
        push_params(&mut a, name, store);
    }
    for (name, st) in [
        ("seg", &t.seg_opt),
        ("adv", &t.adv_opt),
        ("d1", &t.d1_opt),
        ("d2", &t.d2_opt),
        ("d3", &t.d3_opt),
    ] {
        push_opt(&mut a, name, st);
    }
    if let Some(w) = &t.whitening {
        a.push("whitening/sequences", BlockData::Bytes(w.sequences.join("\n").into_bytes()));
        a.push("whitening/mean", BlockData::F64(w.mean.clone()));
        a.push("whitening/std", BlockData::F64(w.std.clone()));
    }
    a
}

fn load_params(a: &Archive, prefix: &str, store: &mut ParamStore) -> Result<(), TrainError> {
    let names: Vec<String> = store.names().map(str::to_owned).collect();
    for name in &names {
        let v = a.tensor(&format!("{prefix}/{name}"))?;
        store
            .set(name, v.clone())
            .map_err(|e| TrainError::Checkpoint(format!("{prefix}/{name}: {e}")))?;
    }
    let stored = a
        .blocks()
        .iter()
        .filter(|(n, _)| n.strip_prefix(prefix).is_some_and(|r| r.starts_with('/')))
        .count();
    if stored != names.len() {
        return Err(TrainError::Checkpoint(format!(
            "`{prefix}` has {stored} stored entries, network has {}",
            names.len()
        )));
    }
    Ok(())
}

fn load_opt(a: &Archive, name: &str, store: &ParamStore, st: &mut AdamState) -> Result<(), TrainError> {
    st.t = single_u64(a, &format!("opt/{name}/t"))?;
    st.moments.clear();
    for p in store.names() {
        let m = a.get(&format!("opt/{name}/m/{p}"));
        let v = a.get(&format!("opt/{name}/v/{p}"));
        match (m, v) {
            (Some(BlockData::F32(m)), Some(BlockData::F32(v))) => {
                if m.dims() != store.get(p).unwrap().dims() || v.dims() != m.dims() {
                    return Err(TrainError::Checkpoint(format!("optimizer `{name}` moments of `{p}` have wrong dims")));
                }
                st.moments.insert(p.to_owned(), Moments { m: m.clone(), v: v.clone() });
            }
            (None, None) => {}
            _ => return Err(TrainError::Checkpoint(format!("optimizer `{name}` moments of `{p}` are incomplete"))),
        }
    }
    Ok(())
}

fn single_u64(a: &Archive, name: &str) -> Result<u64, TrainError> {
    match a.u64s(name)? {
        [v] => Ok(*v),
        other => Err(TrainError::Checkpoint(format!("`{name}` holds {} values", other.len()))),
    }
}

pub fn from_archive(a: &Archive) -> Result<Trainer, TrainError> {
    let text = std::str::from_utf8(a.bytes("config")?)
        .map_err(|_| TrainError::Checkpoint("configuration is not UTF-8".into()))?;
    let cfg = TrainConfig::parse_kv(text)?;
    let mut t = Trainer::new(cfg)?;
    t.epoch = single_u64(a, "state/epoch")? as usize;
    t.best = match a.f64s("state/best")? {
        [] => None,
        [m, e] => Some((*m, *e as usize)),
        _ => return Err(TrainError::Checkpoint("malformed `state/best`".into())),
    };
    let hist = a.f64s("state/history")?;
    if hist.len() % 3 != 0 {
        return Err(TrainError::Checkpoint("malformed `state/history`".into()));
    }
    t.history = hist.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    t.fold = match a.u64s("state/fold")? {
        [] => None,
        [f] => Some(*f as usize),
        _ => return Err(TrainError::Checkpoint("malformed `state/fold`".into())),
    };
    for (name, slot) in [("pairing", &mut t.pairing), ("shuffle", &mut t.shuffle), ("order", &mut t.order)] {
        *slot = rng::restore_state(a.bytes(&format!("rng/{name}"))?)
            .ok_or_else(|| TrainError::Checkpoint(format!("bad state for stream `{name}`")))?;
    }
    load_params(a, "seg", t.seg.params_mut())?;
    load_params(a, "d1", t.d1.params_mut())?;
    load_params(a, "d2", t.d2.params_mut())?;
    load_params(a, "d3", t.d3.params_mut())?;
    load_opt(a, "seg", t.seg.params(), &mut t.seg_opt)?;
    load_opt(a, "adv", t.seg.params(), &mut t.adv_opt)?;
    load_opt(a, "d1", t.d1.params(), &mut t.d1_opt)?;
    load_opt(a, "d2", t.d2.params(), &mut t.d2_opt)?;
    load_opt(a, "d3", t.d3.params(), &mut t.d3_opt)?;
    if a.get("whitening/sequences").is_some() {
        let seqs = std::str::from_utf8(a.bytes("whitening/sequences")?)
            .map_err(|_| TrainError::Checkpoint("sequence names are not UTF-8".into()))?;
        let w = WhiteningStats {
            sequences: seqs.split('\n').map(str::to_owned).collect(),
            mean: a.f64s("whitening/mean")?.to_vec(),
            std: a.f64s("whitening/std")?.to_vec(),
        };
        if w.mean.len() != w.sequences.len() || w.std.len() != w.sequences.len() {
            return Err(TrainError::Checkpoint("whitening statistics do not match sequences".into()));
        }
        t.whitening = Some(w);
    }
    Ok(t)
}

pub fn save_checkpoint(t: &Trainer, path: &Path) -> Result<(), TrainError> {
    Ok(to_archive(t).save(path)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Trainer, TrainError> {
    from_archive(&Archive::load(path)?)
}
