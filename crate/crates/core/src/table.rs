//! Value tables over the pre- or post-decision lattice and their file formats.
//!
//! Binary layout (little endian): magic `SBVT`, `u32` version, `u8` layout
//! (0 pre, 1 post), `u32` M, `u64` T, `u32` R_max, `u32` L_max, `u32` price
//! states, `u32` level count, the levels as `f64`, `u64` periods, `u64` states
//! per period, then every value as `f64` in period-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::lattice::{Layout, StateSpace};
use crate::market::BidGrid;

const MAGIC: &[u8; 4] = b"SBVT";
const VERSION: u32 = 1;
const CSV_TAG: &str = "#storebid-table";

/// Everything needed to interpret a table's state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TableShape {
    pub settlements_per_hour: usize,
    pub horizon: usize,
    pub r_max: u32,
    pub l_max: u32,
    pub price_states: usize,
    pub levels: Vec<f64>,
}

impl TableShape {
    pub fn of(d: &Dynamics) -> TableShape {
        let cfg = d.config();
        TableShape {
            settlements_per_hour: cfg.settlements_per_hour,
            horizon: cfg.horizon,
            r_max: cfg.r_max,
            l_max: cfg.l_max,
            price_states: d.space().num_price_states(),
            levels: cfg.grid.levels().to_vec(),
        }
    }

    pub fn grid(&self) -> Result<BidGrid> {
        BidGrid::from_levels(self.levels.clone())
    }

    pub fn periods(&self, layout: Layout) -> usize {
        match layout {
            Layout::Pre => self.horizon + 1,
            Layout::Post => self.horizon,
        }
    }
}

/// Period-indexed values: pre-decision tables cover `t = 0..=T`, post-decision
/// tables `t = 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    layout: Layout,
    shape: TableShape,
    block: usize,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(layout: Layout, shape: TableShape) -> Result<ValueTable> {
        let grid = shape.grid()?;
        let space = StateSpace::from_parts(shape.r_max, shape.l_max, &grid, shape.price_states);
        let block = space.num_states(layout);
        let periods = shape.periods(layout);
        Ok(ValueTable {
            layout,
            values: vec![0.0; block * periods],
            shape,
            block,
        })
    }

    pub fn for_dynamics(layout: Layout, d: &Dynamics) -> ValueTable {
        ValueTable::zeros(layout, TableShape::of(d)).expect("dynamics grid is valid")
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn shape(&self) -> &TableShape {
        &self.shape
    }

    pub fn periods(&self) -> usize {
        self.shape.periods(self.layout)
    }

    pub fn states_per_period(&self) -> usize {
        self.block
    }

    pub fn period(&self, t: usize) -> &[f64] {
        &self.values[t * self.block..(t + 1) * self.block]
    }

    pub fn period_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.block..(t + 1) * self.block]
    }

    #[inline]
    pub fn get(&self, t: usize, index: usize) -> f64 {
        self.values[t * self.block + index]
    }

    #[inline]
    pub fn set(&mut self, t: usize, index: usize, v: f64) {
        self.values[t * self.block + index] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Checks that the table was built for the same lattice as `d`.
    pub fn check_compatible(&self, d: &Dynamics) -> Result<()> {
        let want = TableShape::of(d);
        if self.shape != want {
            return Err(Error::Config(format!(
                "value table shape {:?} does not match the problem {:?}",
                self.shape, want
            )));
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        let s = &self.shape;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[match self.layout {
            Layout::Pre => 0u8,
            Layout::Post => 1u8,
        }])?;
        w.write_all(&(s.settlements_per_hour as u32).to_le_bytes())?;
        w.write_all(&(s.horizon as u64).to_le_bytes())?;
        w.write_all(&s.r_max.to_le_bytes())?;
        w.write_all(&s.l_max.to_le_bytes())?;
        w.write_all(&(s.price_states as u32).to_le_bytes())?;
        w.write_all(&(s.levels.len() as u32).to_le_bytes())?;
        for v in &s.levels {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.periods() as u64).to_le_bytes())?;
        w.write_all(&(self.block as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<ValueTable> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a value table file".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported table version {version}")));
        }
        let mut layout = [0u8; 1];
        r.read_exact(&mut layout)?;
        let layout = match layout[0] {
            0 => Layout::Pre,
            1 => Layout::Post,
            x => return Err(Error::Format(format!("unknown layout flag {x}"))),
        };
        let m = read_u32(r)? as usize;
        let horizon = read_u64(r)? as usize;
        let r_max = read_u32(r)?;
        let l_max = read_u32(r)?;
        let price_states = read_u32(r)? as usize;
        let n_levels = read_u32(r)? as usize;
        if n_levels > u16::MAX as usize {
            return Err(Error::Format("level count out of range".into()));
        }
        let levels = (0..n_levels).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let shape = TableShape {
            settlements_per_hour: m,
            horizon,
            r_max,
            l_max,
            price_states,
            levels,
        };
        let mut table = ValueTable::zeros(layout, shape).map_err(|e| Error::Format(e.to_string()))?;
        let periods = read_u64(r)? as usize;
        let block = read_u64(r)? as usize;
        if periods != table.periods() || block != table.block {
            return Err(Error::Format(format!(
                "header claims {periods}x{block} values, shape implies {}x{}",
                table.periods(),
                table.block
            )));
        }
        for v in table.values.iter_mut() {
            *v = read_f64(r)?;
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after table values".into()));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ValueTable> {
        let mut r = BufReader::new(File::open(path)?);
        ValueTable::read_binary(&mut r)
    }

    /// CSV export: one metadata line, a header, then one row per state.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let s = &self.shape;
        let grid = s.grid()?;
        let space = StateSpace::from_parts(s.r_max, s.l_max, &grid, s.price_states);
        let mut w = BufWriter::new(w);
        let levels: Vec<String> = s.levels.iter().map(|v| v.to_string()).collect();
        writeln!(
            w,
            "{CSV_TAG} v{VERSION} layout={} m={} horizon={} r_max={} l_max={} price_states={} levels={}",
            layout_name(self.layout),
            s.settlements_per_hour,
            s.horizon,
            s.r_max,
            s.l_max,
            s.price_states,
            levels.join(";")
        )?;
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t", "price_state", "resource", "lifetime", "prev_low", "prev_high"];
        if self.layout == Layout::Post {
            header.extend(["bid_low", "bid_high"]);
        }
        header.push("value");
        out.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for t in 0..self.periods() {
            for i in 0..self.block {
                row.clear();
                let (pre, bid) = match self.layout {
                    Layout::Pre => (space.pre_state(i), None),
                    Layout::Post => {
                        let p = space.post_state(i);
                        (p.state, Some(p.bid))
                    }
                };
                let prev = grid.pair(pre.prev_bid);
                row.push(t.to_string());
                row.push(pre.price_state.to_string());
                row.push(pre.resource.to_string());
                row.push(pre.lifetime.to_string());
                row.push(prev.low.to_string());
                row.push(prev.high.to_string());
                if let Some(b) = bid {
                    let b = grid.pair(b);
                    row.push(b.low.to_string());
                    row.push(b.high.to_string());
                }
                row.push(self.get(t, i).to_string());
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<ValueTable> {
        let mut r = BufReader::new(r);
        let mut meta = String::new();
        r.read_line(&mut meta)?;
        let meta = meta.trim_end();
        let rest = meta
            .strip_prefix(CSV_TAG)
            .ok_or_else(|| Error::Format("missing table metadata line".into()))?;
        let mut fields = std::collections::HashMap::new();
        for tok in rest.split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                fields.insert(k, v);
            } else if tok != format!("v{VERSION}") {
                return Err(Error::Format(format!("unsupported table tag {tok}")));
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Format(format!("metadata lacks {k}")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse::<u64>()
                .map_err(|e| Error::Format(format!("bad {k}: {e}")))
        };
        let layout = match get("layout")? {
            "pre" => Layout::Pre,
            "post" => Layout::Post,
            x => return Err(Error::Format(format!("unknown layout {x}"))),
        };
        let levels = get("levels")?
            .split(';')
            .map(|v| v.parse::<f64>().map_err(|e| Error::Format(format!("bad level {v}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let shape = TableShape {
            settlements_per_hour: num("m")? as usize,
            horizon: num("horizon")? as usize,
            r_max: num("r_max")? as u32,
            l_max: num("l_max")? as u32,
            price_states: num("price_states")? as usize,
            levels,
        };
        let mut table = ValueTable::zeros(layout, shape).map_err(|e| Error::Format(e.to_string()))?;
        let grid = table.shape.grid()?;
        let space = StateSpace::from_parts(table.shape.r_max, table.shape.l_max, &grid, table.shape.price_states);
        let mut seen = vec![false; table.values.len()];
        let mut reader = csv::Reader::from_reader(r);
        let level = |v: &str| -> Result<usize> {
            let x: f64 = v.parse().map_err(|e| Error::Format(format!("bad level {v}: {e}")))?;
            grid.level_index(x)
                .ok_or_else(|| Error::Format(format!("{x} is not a grid level")))
        };
        for rec in reader.records() {
            let rec = rec?;
            let want = if layout == Layout::Post { 9 } else { 7 };
            if rec.len() != want {
                return Err(Error::Format(format!("row has {} fields, expected {want}", rec.len())));
            }
            let int = |i: usize| -> Result<usize> {
                rec[i].parse().map_err(|e| Error::Format(format!("bad integer {}: {e}", &rec[i])))
            };
            let t = int(0)?;
            let ps = int(1)?;
            let r = int(2)?;
            let l = int(3)?;
            if t >= table.periods() || ps >= table.shape.price_states || r > table.shape.r_max as usize || l > table.shape.l_max as usize {
                return Err(Error::Format(format!("row out of range: {:?}", rec)));
            }
            let prev = grid
                .pair_index(level(&rec[4])?, level(&rec[5])?)
                .ok_or_else(|| Error::Format("infeasible previous bid".into()))?;
            let pre = space.pre_index(&crate::market::State {
                resource: r as u32,
                lifetime: l as u32,
                prev_bid: prev,
                price_state: ps,
            });
            let (idx, value_col) = match layout {
                Layout::Pre => (pre, 6),
                Layout::Post => {
                    let bid = grid
                        .pair_index(level(&rec[6])?, level(&rec[7])?)
                        .ok_or_else(|| Error::Format("infeasible bid".into()))?;
                    (pre * space.num_pairs() + bid, 8)
                }
            };
            let v: f64 = rec[value_col]
                .parse()
                .map_err(|e| Error::Format(format!("bad value {}: {e}", &rec[value_col])))?;
            let k = t * table.block + idx;
            if seen[k] {
                return Err(Error::Format(format!("duplicate row for t={t}, state {idx}")));
            }
            seen[k] = true;
            table.values[k] = v;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Format(format!(
                "table CSV misses period {} state {}",
                missing / table.block,
                missing % table.block
            )));
        }
        Ok(table)
    }
}

pub fn layout_name(layout: Layout) -> &'static str {
    match layout {
        Layout::Pre => "pre",
        Layout::Post => "post",
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("value table file is truncated".into())
    } else {
        Error::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape() -> TableShape {
        TableShape {
            settlements_per_hour: 1,
            horizon: 3,
            r_max: 2,
            l_max: 1,
            price_states: 2,
            levels: vec![15.0, 40.5, 85.0],
        }
    }

    fn filled(layout: Layout, seed: u64) -> ValueTable {
        let mut t = ValueTable::zeros(layout, shape()).unwrap();
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        for v in t.values_mut() {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = f64::from_bits((x >> 12) | 0x3ff0_0000_0000_0000) * 1e3 - 1.7e3;
        }
        t
    }

    #[test]
    fn periods_per_layout() {
        assert_eq!(ValueTable::zeros(Layout::Pre, shape()).unwrap().periods(), 4);
        assert_eq!(ValueTable::zeros(Layout::Post, shape()).unwrap().periods(), 3);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        for layout in [Layout::Pre, Layout::Post] {
            let t = filled(layout, 5);
            let mut buf = Vec::new();
            t.write_binary(&mut buf).unwrap();
            let back = ValueTable::read_binary(&mut buf.as_slice()).unwrap();
            assert_eq!(back.layout(), layout);
            assert!(t.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
            assert_eq!(back.shape(), t.shape());
            assert!(ValueTable::read_binary(&mut &buf[..buf.len() - 3]).is_err());
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        for layout in [Layout::Pre, Layout::Post] {
            let t = filled(layout, 9);
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            let back = ValueTable::read_csv(buf.as_slice()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            ValueTable::read_binary(&mut &b"nope"[..]),
            Err(Error::Format(_))
        ));
        assert!(ValueTable::read_csv(&b"t,value\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_doubles_round_trip(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..50)) {
            let mut t = ValueTable::zeros(Layout::Pre, shape()).unwrap();
            for (slot, v) in t.values_mut().iter_mut().zip(values.iter().cycle()) {
                *slot = *v;
            }
            let mut bin = Vec::new();
            t.write_binary(&mut bin).unwrap();
            prop_assert_eq!(&ValueTable::read_binary(&mut bin.as_slice()).unwrap(), &t);
            let mut csv = Vec::new();
            t.write_csv(&mut csv).unwrap();
            prop_assert_eq!(&ValueTable::read_csv(csv.as_slice()).unwrap(), &t);
        }
    }
}
