use std::hint::black_box;

use crate::kernel::{Kernel, ModelFault, Process, ProcessIo, SimError};

const SCRATCH_WORDS: usize = 16;

/// Emulates design size: `gate_factor` units of busywork per evaluated
/// cycle on private state. Touches no signals.
#[derive(Debug, Clone)]
pub struct ComplexityKnob {
    gate_factor: u32,
    scratch: [u64; SCRATCH_WORDS],
}

impl ComplexityKnob {
    pub fn new(gate_factor: u32) -> Self {
        let mut scratch = [0u64; SCRATCH_WORDS];
        for (i, w) in scratch.iter_mut().enumerate() {
            *w = 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1);
        }
        Self {
            gate_factor,
            scratch,
        }
    }

    pub fn gate_factor(&self) -> u32 {
        self.gate_factor
    }

    /// One unit: a mixing pass over the scratch array.
    fn unit(&mut self) {
        let mut carry = self.scratch[SCRATCH_WORDS - 1];
        for w in &mut self.scratch {
            carry ^= carry << 13;
            carry ^= carry >> 7;
            carry ^= carry << 17;
            *w = w.wrapping_add(carry);
        }
    }

    pub fn checksum(&self) -> u64 {
        self.scratch.iter().fold(0, |a, w| a ^ w)
    }

    /// Registered only when `gate_factor > 0`.
    pub fn register(self, k: &mut Kernel, key: &str) -> Result<(), SimError> {
        if self.gate_factor == 0 {
            return Ok(());
        }
        k.register_process(key, Box::new(self)).map(|_| ())
    }
}

impl Process for ComplexityKnob {
    fn eval(&mut self, _io: &mut ProcessIo<'_>) -> Result<(), ModelFault> {
        for _ in 0..self.gate_factor {
            self.unit();
        }
        black_box(&self.scratch);
        Ok(())
    }
}
