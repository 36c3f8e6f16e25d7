use std::collections::HashMap;

use thiserror::Error;

use crate::codec::{RegPacket, RespOpcode};
use crate::dut::{
    IspConfig, IP_STRIDE, ISP_ID_VALUE, REG_CLAMP_MAX, REG_CLAMP_MIN, REG_ENABLE, REG_FRAMES,
    REG_GAIN, REG_ID, REG_OFFSET,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    RW,
    RO,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Register {
    pub name: String,
    pub addr: u32,
    pub access: Access,
    pub reset: u32,
    /// Hardware may change it; reads update the mirror without a check.
    pub volatile: bool,
    pub mirror: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegMapError {
    #[error("no register named `{0}`")]
    UnknownRegister(String),
    #[error("register `{0}` is read-only")]
    ReadOnly(String),
    #[error("address {0:#x} is not word-aligned")]
    Unaligned(u32),
    #[error("address {0:#x} is already mapped")]
    DuplicateAddress(u32),
    #[error("register name `{0}` is already used")]
    DuplicateName(String),
}

/// Register map with a mirrored copy of what the hardware should hold.
#[derive(Debug, Clone, Default)]
pub struct RegModel {
    regs: Vec<Register>,
    by_name: HashMap<String, usize>,
    by_addr: HashMap<u32, usize>,
    check_reads: bool,
    mismatches: Vec<String>,
}

impl RegModel {
    pub fn new() -> Self {
        Self {
            check_reads: true,
            ..Self::default()
        }
    }

    pub fn add(
        &mut self,
        name: &str,
        addr: u32,
        access: Access,
        reset: u32,
    ) -> Result<(), RegMapError> {
        self.add_reg(name, addr, access, reset, false)
    }

    fn add_reg(
        &mut self,
        name: &str,
        addr: u32,
        access: Access,
        reset: u32,
        volatile: bool,
    ) -> Result<(), RegMapError> {
        if !addr.is_multiple_of(4) {
            return Err(RegMapError::Unaligned(addr));
        }
        if self.by_addr.contains_key(&addr) {
            return Err(RegMapError::DuplicateAddress(addr));
        }
        if self.by_name.contains_key(name) {
            return Err(RegMapError::DuplicateName(name.to_string()));
        }
        self.by_name.insert(name.to_string(), self.regs.len());
        self.by_addr.insert(addr, self.regs.len());
        self.regs.push(Register {
            name: name.to_string(),
            addr,
            access,
            reset,
            volatile,
            mirror: reset,
        });
        Ok(())
    }

    /// `count` RW words named `r0..` at `base + 4*i`, reset 0.
    pub fn regfile_map(base: u32, count: usize) -> Self {
        let mut m = Self::new();
        for i in 0..count {
            m.add(&format!("r{i}"), base + 4 * i as u32, Access::RW, 0)
                .expect("generated map is well-formed");
        }
        m
    }

    /// Register blocks of `ips` chained IPs, named `ip<i>.<REG>`, each
    /// block `IP_STRIDE` apart.
    pub fn isp_map(base: u32, ips: usize) -> Self {
        let mut m = Self::new();
        let d = IspConfig::default();
        for i in 0..ips {
            let b = base + i as u32 * IP_STRIDE;
            let rw = [
                ("ENABLE", REG_ENABLE, d.enable as u32),
                ("GAIN", REG_GAIN, d.gain as u32),
                ("OFFSET", REG_OFFSET, d.offset as u16 as u32),
                ("CLAMP_MIN", REG_CLAMP_MIN, d.clamp_min as u32),
                ("CLAMP_MAX", REG_CLAMP_MAX, d.clamp_max as u32),
            ];
            for (n, off, reset) in rw {
                m.add(&format!("ip{i}.{n}"), b + off, Access::RW, reset)
                    .expect("generated map is well-formed");
            }
            m.add_reg(
                &format!("ip{i}.ID"),
                b + REG_ID,
                Access::RO,
                ISP_ID_VALUE,
                false,
            )
            .expect("generated map is well-formed");
            m.add_reg(
                &format!("ip{i}.FRAMES"),
                b + REG_FRAMES,
                Access::RO,
                0,
                true,
            )
            .expect("generated map is well-formed");
        }
        m
    }

    pub fn set_check_reads(&mut self, on: bool) {
        self.check_reads = on;
    }

    pub fn registers(&self) -> &[Register] {
        &self.regs
    }

    pub fn get(&self, name: &str) -> Result<&Register, RegMapError> {
        self.by_name
            .get(name)
            .map(|&i| &self.regs[i])
            .ok_or_else(|| RegMapError::UnknownRegister(name.to_string()))
    }

    pub fn by_addr(&self, addr: u32) -> Option<&Register> {
        self.by_addr.get(&addr).map(|&i| &self.regs[i])
    }

    pub fn mirror(&self, name: &str) -> Result<u32, RegMapError> {
        self.get(name).map(|r| r.mirror)
    }

    /// Adapter: a full-word write item. RO registers are refused.
    pub fn write_item(&self, name: &str, value: u32) -> Result<RegPacket, RegMapError> {
        let r = self.get(name)?;
        if r.access == Access::RO {
            return Err(RegMapError::ReadOnly(name.to_string()));
        }
        Ok(RegPacket::write(r.addr, value, 0xf))
    }

    pub fn read_item(&self, name: &str) -> Result<RegPacket, RegMapError> {
        Ok(RegPacket::read(self.get(name)?.addr))
    }

    /// Updates mirrors from a completed transaction. Successful writes are
    /// predicted; successful reads are checked against the mirror (unless
    /// volatile or checking is off) and then adopted. Returns `false` on a
    /// mirror mismatch.
    pub fn predict(&mut self, rsp: &RegPacket) -> bool {
        if !rsp.r_req || rsp.r_opc != RespOpcode::Ok as u8 {
            return true;
        }
        let Some(&i) = self.by_addr.get(&rsp.addr) else {
            return true;
        };
        let r = &mut self.regs[i];
        if rsp.is_write() {
            if r.access == Access::RW {
                r.mirror = merge(r.mirror, rsp.data, rsp.be);
            }
            return true;
        }
        let ok = !self.check_reads || r.volatile || r.mirror == rsp.r_data;
        if !ok {
            self.mismatches.push(format!(
                "{}: read {:#010x}, mirror {:#010x}",
                r.name, rsp.r_data, r.mirror
            ));
        }
        r.mirror = rsp.r_data;
        ok
    }

    pub fn mismatches(&self) -> &[String] {
        &self.mismatches
    }

    pub fn reset(&mut self) {
        for r in &mut self.regs {
            r.mirror = r.reset;
        }
    }

    /// Configuration of IP `ip` as mirrored, for maps built by `isp_map`.
    pub fn isp_config(&self, ip: usize) -> Result<IspConfig, RegMapError> {
        let m = |n: &str| self.mirror(&format!("ip{ip}.{n}"));
        Ok(IspConfig::from_words(
            m("ENABLE")?,
            m("GAIN")?,
            m("OFFSET")?,
            m("CLAMP_MIN")?,
            m("CLAMP_MAX")?,
        ))
    }
}

fn merge(old: u32, data: u32, be: u8) -> u32 {
    (0..4).fold(old, |acc, i| {
        if be & (1 << i) != 0 {
            let m = 0xffu32 << (8 * i);
            (acc & !m) | (data & m)
        } else {
            acc
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok_read(addr: u32, v: u32) -> RegPacket {
        RegPacket::read(addr).with_response(v, RespOpcode::Ok)
    }

    #[test]
    fn write_predicts_then_read_matches() {
        let mut m = RegModel::isp_map(0, 1);
        let w = m.write_item("ip0.GAIN", 0x0200).unwrap();
        assert!(m.predict(&w.with_response(0, RespOpcode::Ok)));
        assert_eq!(m.mirror("ip0.GAIN").unwrap(), 0x0200);
        assert!(m.predict(&ok_read(REG_GAIN, 0x0200)));
        assert!(m.mismatches().is_empty());
    }

    #[test]
    fn ro_reset_value_and_refusal() {
        let m = RegModel::isp_map(0x1000, 2);
        assert_eq!(m.mirror("ip1.ID").unwrap(), ISP_ID_VALUE);
        assert_eq!(m.get("ip1.ID").unwrap().addr, 0x1000 + IP_STRIDE + REG_ID);
        assert_eq!(
            m.write_item("ip1.ID", 1),
            Err(RegMapError::ReadOnly("ip1.ID".into()))
        );
        assert!(matches!(
            m.read_item("nope"),
            Err(RegMapError::UnknownRegister(_))
        ));
    }

    #[test]
    fn mismatch_is_recorded_and_adopted() {
        let mut m = RegModel::regfile_map(0, 4);
        assert!(!m.predict(&ok_read(8, 5)));
        assert_eq!(m.mismatches().len(), 1);
        assert_eq!(m.mirror("r2").unwrap(), 5);
    }

    #[test]
    fn error_responses_leave_mirror() {
        let mut m = RegModel::regfile_map(0, 4);
        let w = RegPacket::write(4, 9, 0xf).with_response(0, RespOpcode::Error);
        m.predict(&w);
        assert_eq!(m.mirror("r1").unwrap(), 0);
    }

    #[test]
    fn map_validation() {
        let mut m = RegModel::new();
        m.add("a", 0, Access::RW, 0).unwrap();
        assert_eq!(
            m.add("b", 0, Access::RW, 0),
            Err(RegMapError::DuplicateAddress(0))
        );
        assert_eq!(m.add("c", 2, Access::RW, 0), Err(RegMapError::Unaligned(2)));
        assert!(m.add("a", 4, Access::RW, 0).is_err());
    }
}
