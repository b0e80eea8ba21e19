use std::fs;
use std::path::Path;

use crate::error::{dim_err, Error, Result};
use crate::tensor::{Element, Tensor};

fn to_byte(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Frame `f` of a `[F, C, H, W]` video in `[-1, 1]` as a binary PPM: P6
/// for three channels, otherwise P5 from the first channel.
pub fn frame_ppm<E: Element>(video: &Tensor<E>, f: usize) -> Result<Vec<u8>> {
    let [frames, c, h, w] = match video.shape() {
        &[a, b, c, d] => [a, b, c, d],
        other => return Err(dim_err!("expected [F, C, H, W], got {:?}", other)),
    };
    if f >= frames {
        return Err(dim_err!("frame {f} of {frames}"));
    }
    let hw = h * w;
    let base = f * c * hw;
    let px = |ch: usize, i: usize| to_byte(video.data()[base + ch * hw + i].to_f64());
    let mut out;
    if c == 3 {
        out = format!("P6\n{w} {h}\n255\n").into_bytes();
        for i in 0..hw {
            out.extend((0..3).map(|ch| px(ch, i)));
        }
    } else {
        out = format!("P5\n{w} {h}\n255\n").into_bytes();
        out.extend((0..hw).map(|i| px(0, i)));
    }
    Ok(out)
}

/// Writes `{prefix}_f{frame:03}.ppm` for every frame.
pub fn write_frames<E: Element>(dir: &Path, prefix: &str, video: &Tensor<E>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in 0..video.shape().first().copied().unwrap_or(0) {
        let path = dir.join(format!("{prefix}_f{f:03}.ppm"));
        fs::write(&path, frame_ppm(video, f)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
