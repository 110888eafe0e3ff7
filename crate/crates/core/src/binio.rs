//! Little-endian cursor shared by the binary file formats.

/// Reads fixed-width little-endian values, reporting the offset at which the
/// input ran out.
pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

/// The read at `offset` needed `needed` bytes but fewer remained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ShortRead {
    pub offset: usize,
    pub needed: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], ShortRead> {
        if self.remaining() < n {
            return Err(ShortRead {
                offset: self.pos,
                needed: n,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ShortRead> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    pub fn u8(&mut self) -> Result<u8, ShortRead> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16, ShortRead> {
        self.array().map(u16::from_le_bytes)
    }

    pub fn u32(&mut self) -> Result<u32, ShortRead> {
        self.array().map(u32::from_le_bytes)
    }

    pub fn u64(&mut self) -> Result<u64, ShortRead> {
        self.array().map(u64::from_le_bytes)
    }

    pub fn f32(&mut self) -> Result<f32, ShortRead> {
        self.array().map(f32::from_le_bytes)
    }

    /// `count` consecutive f32 values.
    pub fn f32s(&mut self, count: usize) -> Result<Vec<f32>, ShortRead> {
        let needed = count.checked_mul(4).ok_or(ShortRead {
            offset: self.pos,
            needed: usize::MAX,
        })?;
        let bytes = self.take(needed)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_le_and_reports_short_offset() {
        let bytes = [1, 0, 2, 0, 0, 0, 0, 0, 128, 63];
        let mut c = Cursor::new(&bytes);
        assert_eq!(c.u16().unwrap(), 1);
        assert_eq!(c.u32().unwrap(), 2);
        assert_eq!(c.f32().unwrap(), 1.0);
        assert_eq!(
            c.u8(),
            Err(ShortRead {
                offset: 10,
                needed: 1
            })
        );
    }
}
