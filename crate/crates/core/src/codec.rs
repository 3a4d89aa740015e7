//! One handle over every sketch family, with JSON and binary encodings.
//!
//! JSON: `{"version", "type", "m", "params", "salt", "state"}` where reals
//! in `state` are decimal strings that parse back to the same bits.
//! Binary: `CSKT`, version byte, type byte, then little-endian fields.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::baselines::{BaselineAlgo, RegisterSketch, Registers, MINCOUNT_K};
use crate::error::{domain, Error, Result};
use crate::estimate::{Estimate, StreamElement};
use crate::hash::{HashConfig, HashDistribution};
use crate::exact::ExactSum;
use crate::order::{MaxSketch, MaxState};
use crate::projection::ProjectionSketch;

pub const FORMAT_VERSION: u64 = 1;
pub const MAGIC: &[u8; 4] = b"CSKT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchType {
    MaxUniform,
    MaxExp,
    MaxGeom,
    Kth,
    Bernoulli,
    Projection,
    Loglog,
    Hll,
    Mincount,
}

const ALL_TYPES: [SketchType; 9] = [
    SketchType::MaxUniform,
    SketchType::MaxExp,
    SketchType::MaxGeom,
    SketchType::Kth,
    SketchType::Bernoulli,
    SketchType::Projection,
    SketchType::Loglog,
    SketchType::Hll,
    SketchType::Mincount,
];

impl SketchType {
    pub fn name(&self) -> &'static str {
        match self {
            SketchType::MaxUniform => "max-uniform",
            SketchType::MaxExp => "max-exp",
            SketchType::MaxGeom => "max-geom",
            SketchType::Kth => "kth",
            SketchType::Bernoulli => "bernoulli",
            SketchType::Projection => "projection",
            SketchType::Loglog => "loglog",
            SketchType::Hll => "hll",
            SketchType::Mincount => "mincount",
        }
    }

    fn tag(&self) -> u8 {
        ALL_TYPES.iter().position(|t| t == self).expect("listed") as u8 + 1
    }

    fn from_tag(tag: u8) -> Result<Self> {
        ALL_TYPES
            .get((tag as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown type tag {tag}")))
    }
}

impl fmt::Display for SketchType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SketchType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_TYPES
            .iter()
            .find(|t| t.name() == s)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown sketch type {s:?}")))
    }
}

/// Construction parameters; only the ones the type needs are read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchParams {
    pub q: f64,
    pub p: f64,
    pub alpha: f64,
    pub k: usize,
    /// Projection only: reject deletions in exchange for faster updates.
    #[serde(default)]
    pub insert_only: bool,
}

impl Default for SketchParams {
    fn default() -> Self {
        Self {
            q: 0.5,
            p: 0.01,
            alpha: 0.05,
            k: 3,
            insert_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sketch {
    Max(MaxSketch),
    Projection(ProjectionSketch),
    Register(RegisterSketch),
}

fn config_for(kind: SketchType, m: usize, salt: u64, params: &SketchParams) -> Result<HashConfig> {
    let dist = match kind {
        SketchType::MaxUniform | SketchType::Kth => HashDistribution::Uniform01,
        SketchType::MaxExp => HashDistribution::ExponentialMean1,
        SketchType::MaxGeom => HashDistribution::Geometric { q: params.q },
        SketchType::Bernoulli => HashDistribution::Bernoulli { p: params.p },
        SketchType::Projection => HashDistribution::PositiveStable { alpha: params.alpha },
        _ => unreachable!("register sketches carry no hash configuration"),
    };
    HashConfig::new(m, salt, dist)
}

fn baseline_of(kind: SketchType) -> Option<BaselineAlgo> {
    match kind {
        SketchType::Loglog => Some(BaselineAlgo::LogLog),
        SketchType::Hll => Some(BaselineAlgo::HyperLogLog),
        SketchType::Mincount => Some(BaselineAlgo::MinCount),
        _ => None,
    }
}

impl Sketch {
    pub fn new(kind: SketchType, m: usize, salt: u64, params: &SketchParams) -> Result<Self> {
        if let Some(algo) = baseline_of(kind) {
            return Ok(Sketch::Register(RegisterSketch::new(algo, m, salt)?));
        }
        let cfg = config_for(kind, m, salt, params)?;
        Ok(match kind {
            SketchType::Kth => Sketch::Max(MaxSketch::new_kth(cfg, params.k)?),
            SketchType::Projection => Sketch::Projection(ProjectionSketch::with_mode(cfg, params.insert_only)?),
            _ => Sketch::Max(MaxSketch::new(cfg)?),
        })
    }

    pub fn kind(&self) -> SketchType {
        match self {
            Sketch::Max(s) => match (s.state(), s.config().distribution()) {
                (MaxState::TopK { .. }, _) => SketchType::Kth,
                (_, HashDistribution::Uniform01) => SketchType::MaxUniform,
                (_, HashDistribution::ExponentialMean1) => SketchType::MaxExp,
                (_, HashDistribution::Geometric { .. }) => SketchType::MaxGeom,
                _ => SketchType::Bernoulli,
            },
            Sketch::Projection(_) => SketchType::Projection,
            Sketch::Register(r) => match r.algo() {
                BaselineAlgo::LogLog => SketchType::Loglog,
                BaselineAlgo::HyperLogLog => SketchType::Hll,
                BaselineAlgo::MinCount => SketchType::Mincount,
            },
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Sketch::Max(s) => s.m(),
            Sketch::Projection(s) => s.m(),
            Sketch::Register(s) => s.m(),
        }
    }

    pub fn salt(&self) -> u64 {
        match self {
            Sketch::Max(s) => s.config().global_salt(),
            Sketch::Projection(s) => s.config().global_salt(),
            Sketch::Register(s) => s.salt(),
        }
    }

    pub fn params(&self) -> SketchParams {
        let mut p = SketchParams::default();
        let dist = match self {
            Sketch::Max(s) => {
                p.k = s.k();
                Some(s.config().distribution())
            }
            Sketch::Projection(s) => {
                p.insert_only = s.is_insert_only();
                Some(s.config().distribution())
            }
            Sketch::Register(_) => None,
        };
        match dist {
            Some(HashDistribution::Geometric { q }) => p.q = q,
            Some(HashDistribution::Bernoulli { p: b }) => p.p = b,
            Some(HashDistribution::PositiveStable { alpha }) => p.alpha = alpha,
            _ => {}
        }
        p
    }

    pub fn update(&mut self, item: &[u8], d: i64) -> Result<()> {
        match self {
            Sketch::Max(s) => s.update(item, d),
            Sketch::Projection(s) => s.update(item, d),
            Sketch::Register(s) => s.update(item, d),
        }
    }

    pub fn update_element(&mut self, elem: &StreamElement) -> Result<()> {
        self.update(&elem.item, elem.d)
    }

    pub fn merge_from(&mut self, other: &Sketch) -> Result<()> {
        match (self, other) {
            (Sketch::Max(a), Sketch::Max(b)) => a.merge_from(b),
            (Sketch::Projection(a), Sketch::Projection(b)) => a.merge_from(b),
            (Sketch::Register(a), Sketch::Register(b)) => a.merge_from(b),
            (a, b) => Err(Error::Incompatible(format!(
                "cannot merge a {} sketch with a {} sketch",
                a.kind(),
                b.kind()
            ))),
        }
    }

    pub fn estimate(&self, level: f64) -> Result<Estimate> {
        match self {
            Sketch::Max(s) => s.estimate(level),
            Sketch::Projection(s) => s.estimate(level),
            Sketch::Register(s) => s.estimate(level),
        }
    }

    pub fn state_bytes(&self) -> usize {
        match self {
            Sketch::Max(s) => s.state_bytes(),
            Sketch::Projection(s) => s.state_bytes(),
            Sketch::Register(s) => s.state_bytes(),
        }
    }

    fn params_json(&self) -> Value {
        let p = self.params();
        match self.kind() {
            SketchType::MaxGeom => json!({ "q": p.q }),
            SketchType::Bernoulli => json!({ "p": p.p }),
            SketchType::Projection => json!({ "alpha": p.alpha, "insert_only": p.insert_only }),
            SketchType::Kth => json!({ "k": p.k }),
            _ => json!({}),
        }
    }

    fn state_json(&self) -> Value {
        let real = |x: f64| Value::String(x.to_string());
        match self {
            Sketch::Max(s) => match s.state() {
                MaxState::Continuous(v) => v.iter().map(|&x| real(x)).collect(),
                MaxState::Geometric(v) => json!(v),
                MaxState::Bernoulli(words) => (0..s.m())
                    .map(|j| json!((words[j / 64] >> (j % 64)) & 1))
                    .collect(),
                MaxState::TopK { lists, .. } => lists
                    .iter()
                    .map(|l| l.iter().map(|&x| real(x)).collect::<Value>())
                    .collect(),
            },
            Sketch::Projection(s) => s
                .accumulators()
                .iter()
                .map(|a| Value::String(a.to_string()))
                .collect(),
            Sketch::Register(r) => match r.registers() {
                Registers::Ranks(v) => json!(v),
                Registers::Mins(v) => v
                    .iter()
                    .map(|b| b.iter().map(|&x| real(x)).collect::<Value>())
                    .collect(),
            },
        }
    }

    pub fn to_json_value(&self) -> Value {
        json!({
            "version": FORMAT_VERSION,
            "type": self.kind().name(),
            "m": self.m(),
            "params": self.params_json(),
            "salt": self.salt(),
            "state": self.state_json(),
        })
    }

    pub fn to_json(&self) -> String {
        self.to_json_value().to_string()
    }

    pub fn from_json(text: &str) -> Result<Sketch> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_json_value(&v)
    }

    pub fn from_json_value(v: &Value) -> Result<Sketch> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Format("sketch document must be an object".into()))?;
        let version = field(obj, "version")?.as_u64();
        if version != Some(FORMAT_VERSION) {
            return Err(Error::Format(format!("unsupported version {:?}", field(obj, "version")?)));
        }
        let kind: SketchType = field(obj, "type")?
            .as_str()
            .ok_or_else(|| Error::Format("type must be a string".into()))?
            .parse()?;
        let m = as_usize(field(obj, "m")?)?;
        let salt = field(obj, "salt")?
            .as_u64()
            .ok_or_else(|| Error::Format("salt must be an unsigned integer".into()))?;
        let params_obj = field(obj, "params")?
            .as_object()
            .ok_or_else(|| Error::Format("params must be an object".into()))?;
        let mut params = SketchParams::default();
        for (key, slot) in [("q", &mut params.q), ("p", &mut params.p), ("alpha", &mut params.alpha)] {
            if let Some(x) = params_obj.get(key) {
                *slot = x
                    .as_f64()
                    .ok_or_else(|| Error::Format(format!("param {key} must be a number")))?;
            }
        }
        if let Some(k) = params_obj.get("k") {
            params.k = as_usize(k)?;
        }
        if let Some(b) = params_obj.get("insert_only") {
            params.insert_only = b
                .as_bool()
                .ok_or_else(|| Error::Format("param insert_only must be a boolean".into()))?;
        }
        let state = field(obj, "state")?
            .as_array()
            .ok_or_else(|| Error::Format("state must be an array".into()))?;
        if state.len() != m {
            return Err(Error::Format(format!("state holds {} entries for m = {m}", state.len())));
        }
        if let Some(algo) = baseline_of(kind) {
            let regs = if algo == BaselineAlgo::MinCount {
                let mut mins = Vec::with_capacity(m);
                for entry in state {
                    let vals = reals(entry)?;
                    if vals.len() != MINCOUNT_K {
                        return Err(Error::Format("MinCount buckets hold three values".into()));
                    }
                    mins.push([vals[0], vals[1], vals[2]]);
                }
                Registers::Mins(mins)
            } else {
                Registers::Ranks(
                    state
                        .iter()
                        .map(|x| as_usize(x).and_then(|r| u8::try_from(r).map_err(|_| bad_num())))
                        .collect::<Result<_>>()?,
                )
            };
            return Ok(Sketch::Register(RegisterSketch::from_registers(algo, m, salt, regs)?));
        }
        let cfg = config_for(kind, m, salt, &params)?;
        Ok(match kind {
            SketchType::MaxUniform | SketchType::MaxExp => {
                let slots = state.iter().map(real_of).collect::<Result<_>>()?;
                Sketch::Max(MaxSketch::from_state(cfg, MaxState::Continuous(slots))?)
            }
            SketchType::MaxGeom => {
                let slots = state
                    .iter()
                    .map(|x| as_usize(x).and_then(|y| u32::try_from(y).map_err(|_| bad_num())))
                    .collect::<Result<_>>()?;
                Sketch::Max(MaxSketch::from_state(cfg, MaxState::Geometric(slots))?)
            }
            SketchType::Bernoulli => {
                let mut words = vec![0u64; m.div_ceil(64)];
                for (j, x) in state.iter().enumerate() {
                    match x.as_u64() {
                        Some(0) => {}
                        Some(1) => words[j / 64] |= 1 << (j % 64),
                        _ => return Err(Error::Format("Bernoulli state holds bits".into())),
                    }
                }
                Sketch::Max(MaxSketch::from_state(cfg, MaxState::Bernoulli(words))?)
            }
            SketchType::Kth => {
                let lists = state.iter().map(reals).collect::<Result<_>>()?;
                Sketch::Max(MaxSketch::from_state(
                    cfg,
                    MaxState::TopK { k: params.k, lists },
                )?)
            }
            SketchType::Projection => {
                let acc = state
                    .iter()
                    .map(|x| {
                        x.as_str()
                            .ok_or_else(|| Error::Format("projection entries are hex strings".into()))?
                            .parse::<ExactSum>()
                    })
                    .collect::<Result<_>>()?;
                Sketch::Projection(ProjectionSketch::from_state(cfg, params.insert_only, acc)?)
            }
            _ => unreachable!("register types returned above"),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.state_bytes());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION as u8);
        out.push(self.kind().tag());
        out.extend_from_slice(&(self.m() as u64).to_le_bytes());
        out.extend_from_slice(&self.salt().to_le_bytes());
        let p = self.params();
        match self.kind() {
            SketchType::MaxGeom => out.extend_from_slice(&p.q.to_le_bytes()),
            SketchType::Bernoulli => out.extend_from_slice(&p.p.to_le_bytes()),
            SketchType::Projection => {
                out.extend_from_slice(&p.alpha.to_le_bytes());
                out.push(p.insert_only as u8);
            }
            SketchType::Kth => out.extend_from_slice(&(p.k as u64).to_le_bytes()),
            _ => {}
        }
        match self {
            Sketch::Max(s) => match s.state() {
                MaxState::Continuous(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                MaxState::Geometric(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                MaxState::Bernoulli(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                MaxState::TopK { lists, .. } => {
                    for l in lists {
                        out.extend_from_slice(&(l.len() as u32).to_le_bytes());
                        l.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                    }
                }
            },
            Sketch::Projection(s) => {
                for a in s.accumulators() {
                    let (lo, limbs) = a.parts();
                    out.extend_from_slice(&lo.to_le_bytes());
                    out.extend_from_slice(&(limbs.len() as u32).to_le_bytes());
                    limbs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
            }
            Sketch::Register(r) => match r.registers() {
                Registers::Ranks(v) => out.extend_from_slice(v),
                Registers::Mins(v) => v
                    .iter()
                    .flatten()
                    .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            },
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Sketch> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing CSKT magic".into()));
        }
        let version = r.u8()?;
        if version as u64 != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = SketchType::from_tag(r.u8()?)?;
        let m = usize::try_from(r.u64()?).map_err(|_| bad_num())?;
        if m == 0 || m > 1 << 28 {
            return Err(Error::Format(format!("implausible m = {m}")));
        }
        let salt = r.u64()?;
        let mut params = SketchParams::default();
        match kind {
            SketchType::MaxGeom => params.q = r.f64()?,
            SketchType::Bernoulli => params.p = r.f64()?,
            SketchType::Projection => {
                params.alpha = r.f64()?;
                params.insert_only = match r.u8()? {
                    0 => false,
                    1 => true,
                    b => return Err(Error::Format(format!("bad insert-only flag {b}"))),
                };
            }
            SketchType::Kth => params.k = usize::try_from(r.u64()?).map_err(|_| bad_num())?,
            _ => {}
        }
        let sketch = if let Some(algo) = baseline_of(kind) {
            let regs = if algo == BaselineAlgo::MinCount {
                let mut mins = Vec::with_capacity(m);
                for _ in 0..m {
                    mins.push([r.f64()?, r.f64()?, r.f64()?]);
                }
                Registers::Mins(mins)
            } else {
                Registers::Ranks(r.take(m)?.to_vec())
            };
            Sketch::Register(RegisterSketch::from_registers(algo, m, salt, regs)?)
        } else {
            let cfg = config_for(kind, m, salt, &params)?;
            match kind {
                SketchType::MaxUniform | SketchType::MaxExp => {
                    let v = (0..m).map(|_| r.f64()).collect::<Result<_>>()?;
                    Sketch::Max(MaxSketch::from_state(cfg, MaxState::Continuous(v))?)
                }
                SketchType::MaxGeom => {
                    let v = (0..m).map(|_| r.u32()).collect::<Result<_>>()?;
                    Sketch::Max(MaxSketch::from_state(cfg, MaxState::Geometric(v))?)
                }
                SketchType::Bernoulli => {
                    let v = (0..m.div_ceil(64)).map(|_| r.u64()).collect::<Result<_>>()?;
                    Sketch::Max(MaxSketch::from_state(cfg, MaxState::Bernoulli(v))?)
                }
                SketchType::Kth => {
                    let mut lists = Vec::with_capacity(m);
                    for _ in 0..m {
                        let len = r.u32()? as usize;
                        if len > params.k {
                            return Err(Error::Format("top-k list longer than k".into()));
                        }
                        lists.push((0..len).map(|_| r.f64()).collect::<Result<_>>()?);
                    }
                    Sketch::Max(MaxSketch::from_state(cfg, MaxState::TopK { k: params.k, lists })?)
                }
                SketchType::Projection => {
                    let mut acc = Vec::with_capacity(m);
                    for _ in 0..m {
                        let lo = r.u64()? as i64;
                        let len = r.u32()? as usize;
                        if len > (bytes.len() - r.pos) / 8 {
                            return Err(Error::Format("accumulator longer than the payload".into()));
                        }
                        let limbs = (0..len).map(|_| r.u64()).collect::<Result<_>>()?;
                        acc.push(ExactSum::from_parts(lo, limbs)?);
                    }
                    Sketch::Projection(ProjectionSketch::from_state(cfg, params.insert_only, acc)?)
                }
                _ => unreachable!("register types handled above"),
            }
        };
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the sketch payload",
                bytes.len() - r.pos
            )));
        }
        Ok(sketch)
    }

    /// Decodes either encoding, telling them apart by the magic bytes.
    pub fn decode(bytes: &[u8]) -> Result<Sketch> {
        if bytes.starts_with(MAGIC) {
            Self::from_bytes(bytes)
        } else {
            let text = std::str::from_utf8(bytes)
                .map_err(|_| Error::Format("sketch is neither binary nor UTF-8 JSON".into()))?;
            Self::from_json(text)
        }
    }
}

fn bad_num() -> Error {
    Error::Format("number out of range".into())
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::Format(format!("missing field {key:?}")))
}

fn as_usize(v: &Value) -> Result<usize> {
    v.as_u64()
        .and_then(|x| usize::try_from(x).ok())
        .ok_or_else(|| Error::Format(format!("expected a non-negative integer, found {v}")))
}

fn real_of(v: &Value) -> Result<f64> {
    v.as_str()
        .ok_or_else(|| Error::Format(format!("expected a decimal string, found {v}")))?
        .parse::<f64>()
        .map_err(|e| Error::Format(e.to_string()))
}

fn reals(v: &Value) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::Format(format!("expected an array of decimal strings, found {v}")))?
        .iter()
        .map(real_of)
        .collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated sketch frame".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
}

/// Parses a `sketch` input line, `<item>[TAB<d>]`; blank lines yield `None`.
pub fn parse_line(line: &str) -> Result<Option<StreamElement>> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.is_empty() {
        return Ok(None);
    }
    match line.split_once('\t') {
        None => Ok(Some(StreamElement::insert(line.as_bytes().to_vec()))),
        Some((item, d)) => {
            let d: i64 = d
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad quantity {d:?} for item {item:?}")))?;
            Ok(Some(StreamElement::new(item.as_bytes().to_vec(), d)))
        }
    }
}

/// Convenience check used by the CLI when parameters do not apply.
pub fn validate_params(kind: SketchType, params: &SketchParams) -> Result<()> {
    match kind {
        SketchType::MaxGeom if !(params.q > 0.0 && params.q < 1.0) => Err(domain("q must lie in (0, 1)")),
        SketchType::Bernoulli if !(params.p > 0.0 && params.p < 1.0) => Err(domain("p must lie in (0, 1)")),
        SketchType::Projection if !(params.alpha > 0.0 && params.alpha < 1.0) => {
            Err(domain("alpha must lie in (0, 1)"))
        }
        SketchType::Kth if params.k == 0 => Err(domain("k must be at least 1")),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn populated(kind: SketchType) -> Sketch {
        let params = SketchParams {
            q: 10.0 / 11.0,
            p: 0.02,
            alpha: 0.05,
            k: 3,
            insert_only: false,
        };
        let m = 64;
        let mut s = Sketch::new(kind, m, 77, &params).unwrap();
        for i in 0..400u32 {
            s.update(&i.to_le_bytes(), 1).unwrap();
        }
        s
    }

    #[test]
    fn json_and_binary_round_trip_bit_exactly() {
        for kind in ALL_TYPES {
            let s = populated(kind);
            let back = Sketch::from_json(&s.to_json()).unwrap();
            assert_eq!(back, s, "{kind} json");
            assert_eq!(back.to_bytes(), s.to_bytes());
            let back = Sketch::from_bytes(&s.to_bytes()).unwrap();
            assert_eq!(back, s, "{kind} binary");
            assert_eq!(Sketch::decode(&s.to_bytes()).unwrap(), s);
            assert_eq!(Sketch::decode(s.to_json().as_bytes()).unwrap(), s);
        }
    }

    #[test]
    fn empty_sketches_round_trip() {
        for kind in ALL_TYPES {
            let s = Sketch::new(kind, 16, 1, &SketchParams::default()).unwrap();
            assert_eq!(Sketch::from_json(&s.to_json()).unwrap(), s, "{kind}");
            assert_eq!(Sketch::from_bytes(&s.to_bytes()).unwrap(), s, "{kind}");
        }
    }

    #[test]
    fn envelope_fields() {
        let v = populated(SketchType::MaxGeom).to_json_value();
        assert_eq!(v["version"], 1);
        assert_eq!(v["type"], "max-geom");
        assert_eq!(v["m"], 64);
        assert_eq!(v["salt"], 77);
        assert_eq!(v["params"]["q"], 10.0 / 11.0);
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let bytes = populated(SketchType::MaxUniform).to_bytes();
        assert!(matches!(Sketch::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Sketch::from_bytes(&extra).is_err());
        assert!(Sketch::from_json("{\"version\": 2}").is_err());
        assert!(Sketch::from_json("not json").is_err());
        let mut v = populated(SketchType::MaxUniform).to_json_value();
        v["state"][0] = json!("0.5");
        assert!(matches!(Sketch::from_json_value(&v), Err(Error::InvalidState(_))));
    }

    #[test]
    fn mismatched_merge() {
        let mut a = populated(SketchType::MaxUniform);
        let b = populated(SketchType::Hll);
        assert!(matches!(a.merge_from(&b), Err(Error::Incompatible(_))));
    }

    #[test]
    fn line_parsing() {
        assert_eq!(parse_line("").unwrap(), None);
        assert_eq!(parse_line("abc").unwrap(), Some(StreamElement::new(b"abc".to_vec(), 1)));
        assert_eq!(parse_line("abc\t-4\r").unwrap(), Some(StreamElement::new(b"abc".to_vec(), -4)));
        assert!(parse_line("abc\tx").is_err());
    }
}
