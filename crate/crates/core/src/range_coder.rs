//! 32-bit range coder with carry propagation and byte-aligned output.
//!
//! Frequencies are integers summing to `1 << TOTAL_BITS`. The symbol whose
//! cumulative range ends at the total absorbs the rounding remainder of the
//! range, so the coder wastes nothing on the last symbol.

pub const TOTAL_BITS: u32 = 16;
pub const TOTAL: u32 = 1 << TOTAL_BITS;
const TOP: u32 = 1 << 24;

#[derive(Debug, Default)]
pub struct Encoder {
    low: u64,
    range: u32,
    out: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            out: Vec::new(),
        }
    }

    fn carry(&mut self) {
        for b in self.out.iter_mut().rev() {
            let (v, overflow) = b.overflowing_add(1);
            *b = v;
            if !overflow {
                return;
            }
        }
        // A carry out of the first byte cannot happen: low + range never
        // exceeds the initial interval.
        unreachable!("range coder carry past start of stream");
    }

    pub fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum + freq <= TOTAL);
        let r = self.range >> TOTAL_BITS;
        self.low += r as u64 * cum as u64;
        self.range = if cum + freq == TOTAL {
            self.range - r * cum
        } else {
            r * freq
        };
        if self.low >> 32 != 0 {
            self.low &= 0xFFFF_FFFF;
            self.carry();
        }
        while self.range < TOP {
            self.out.push((self.low >> 24) as u8);
            self.low = (self.low << 8) & 0xFFFF_FFFF;
            self.range <<= 8;
        }
    }

    /// Emits the fewest bytes that pin a value inside the final interval.
    /// The decoder pads with zero bytes.
    pub fn finish(mut self) -> Vec<u8> {
        let hi = self.low + self.range as u64 - 1;
        for m in 0..=4u32 {
            let step = 1u64 << (32 - 8 * m);
            let v = self.low.div_ceil(step) * step;
            if v <= hi {
                let mut v = v;
                if v >> 32 != 0 {
                    v &= 0xFFFF_FFFF;
                    self.carry();
                }
                for k in 0..m {
                    self.out.push((v >> (24 - 8 * k)) as u8);
                }
                return self.out;
            }
        }
        unreachable!("range is never empty")
    }

    pub fn bytes_so_far(&self) -> usize {
        self.out.len()
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut d = Self {
            data,
            pos: 0,
            code: 0,
            range: u32::MAX,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Bytes consumed so far, counting zero padding past the end.
    pub fn consumed(&self) -> usize {
        self.pos
    }

    /// Decodes one symbol given the same frequency table the encoder used.
    pub fn decode(&mut self, freqs: &[u32]) -> usize {
        let r = self.range >> TOTAL_BITS;
        let target = (self.code / r).min(TOTAL - 1);
        let mut cum = 0u32;
        let mut sym = freqs.len() - 1;
        for (i, &f) in freqs.iter().enumerate() {
            if target < cum + f {
                sym = i;
                break;
            }
            cum += f;
        }
        let freq = freqs[sym];
        self.code -= r * cum;
        self.range = if cum + freq == TOTAL {
            self.range - r * cum
        } else {
            r * freq
        };
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte() as u32;
            self.range <<= 8;
        }
        sym
    }
}
