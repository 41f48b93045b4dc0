use crate::error::{check_len, Result};

/// Anything that owns trainable parameters laid out as a fixed list of
/// contiguous blocks. Gradients, optimizer moments and checkpoints all use the
/// flattened concatenation of these blocks in declaration order.
pub trait Parameters {
    fn param_blocks(&self) -> Vec<&[f64]>;

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for block in self.param_blocks() {
            out.extend_from_slice(block);
        }
        out
    }

    fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        check_len("set_flat_params", self.num_params(), values.len())?;
        let mut offset = 0;
        for block in self.param_blocks_mut() {
            let n = block.len();
            block.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Human-readable location of the flat parameter index, used in errors.
    fn describe_param(&self, index: usize) -> String {
        let mut offset = 0;
        for (b, block) in self.param_blocks().iter().enumerate() {
            if index < offset + block.len() {
                return format!("block {b} offset {}", index - offset);
            }
            offset += block.len();
        }
        format!("index {index} (out of range)")
    }
}

/// `target <- polyak * target + (1 - polyak) * online`.
///
/// `polyak = 1` freezes the target; `polyak = 0` copies the online weights.
pub fn polyak_update<P: Parameters>(target: &mut P, online: &P, polyak: f64) {
    let src = online.param_blocks();
    for (dst, src) in target.param_blocks_mut().into_iter().zip(src) {
        for (d, s) in dst.iter_mut().zip(src) {
            *d = polyak * *d + (1.0 - polyak) * s;
        }
    }
}
