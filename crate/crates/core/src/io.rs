//! Ensemble files: the `MOTC1` columnar binary format and CSV.
//!
//! Binary layout, all little-endian: the magic bytes `MOTC1`, then
//! `d: u32` (ambient coordinates per point), `n_steps: u64`, `n_paths: u64`,
//! `T: f64`, `seed: u64`, `n_slots: u64` and `n_slots` recorded grid indices
//! as `u64`. Each path follows as `n_slots * d` coordinates and `n_slots`
//! local times, all `f64`.

use crate::diffusion::{Ensemble, PathSample, SimConfig};
use crate::error::{Error, Result};
use crate::transport::{CostMatrix, PlanEntry};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 5] = b"MOTC1";

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn write_header<W: Write>(w: &mut W, d: usize, n_steps: usize, n_paths: usize, t: f64, seed: u64, slots: &[usize]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&(n_steps as u64).to_le_bytes())?;
    w.write_all(&(n_paths as u64).to_le_bytes())?;
    w.write_all(&t.to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&(slots.len() as u64).to_le_bytes())?;
    for &s in slots {
        w.write_all(&(s as u64).to_le_bytes())?;
    }
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_ensemble<W: Write>(w: &mut W, ens: &Ensemble) -> Result<()> {
    write_header(w, ens.ambient, ens.cfg.n_steps, ens.len(), ens.cfg.t, ens.cfg.seed, &ens.steps)?;
    for p in &ens.paths {
        write_f64s(w, p.coords())?;
        write_f64s(w, &p.local_time)?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| format_err("truncated header"))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|_| format_err("truncated path data"))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn read_ensemble<R: Read>(r: &mut R) -> Result<Ensemble> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| format_err("missing magic"))?;
    if &magic != MAGIC {
        return Err(format_err("bad magic bytes"));
    }
    let mut d = [0u8; 4];
    r.read_exact(&mut d).map_err(|_| format_err("truncated header"))?;
    let d = u32::from_le_bytes(d) as usize;
    let n_steps = read_u64(r)? as usize;
    let n_paths = read_u64(r)? as usize;
    let t = f64::from_bits(read_u64(r)?);
    let seed = read_u64(r)?;
    let n_slots = read_u64(r)? as usize;
    if d == 0 || n_slots == 0 || n_slots > n_steps + 1 {
        return Err(format_err("inconsistent header"));
    }
    let steps = (0..n_slots).map(|_| read_u64(r).map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
    if steps.windows(2).any(|w| w[0] >= w[1]) || steps.last().is_some_and(|&s| s > n_steps) {
        return Err(format_err("recorded steps are not increasing grid indices"));
    }
    let mut paths = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let coords = read_f64s(r, n_slots * d)?;
        let lt = read_f64s(r, n_slots)?;
        paths.push(PathSample::from_parts(d, coords, lt));
    }
    Ok(Ensemble { cfg: SimConfig::new(t, n_steps, n_paths, seed), ambient: d, steps, paths })
}

/// Long-format CSV: one row per path and recorded time.
pub fn write_ensemble_csv<W: Write>(w: W, ens: &Ensemble) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["path".to_string(), "step".into(), "t".into()];
    header.extend((1..=ens.ambient).map(|i| format!("x{i}")));
    header.push("local_time".into());
    out.write_record(&header).map_err(csv_err)?;
    for (k, p) in ens.paths.iter().enumerate() {
        for (slot, &step) in ens.steps.iter().enumerate() {
            let mut row = vec![k.to_string(), step.to_string(), ens.cfg.time(step).to_string()];
            row.extend(p.point(slot).as_slice().iter().map(|x| x.to_string()));
            row.push(p.local_time[slot].to_string());
            out.write_record(&row).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Cost matrix in the binary layout, one row per path with a single slot.
pub fn write_cost_matrix<W: Write>(w: &mut W, c: &CostMatrix) -> Result<()> {
    write_header(w, c.cols(), 0, c.rows(), 0.0, 0, &[0])?;
    for i in 0..c.rows() {
        write_f64s(w, &c.data()[i * c.cols()..(i + 1) * c.cols()])?;
        write_f64s(w, &[0.0])?;
    }
    Ok(())
}

pub fn write_plan_csv<W: Write>(w: W, plan: &[PlanEntry]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["i", "j", "mass"]).map_err(csv_err)?;
    for e in plan {
        out.write_record([e.i.to_string(), e.j.to_string(), e.mass.to_string()]).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
