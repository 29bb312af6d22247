//! Writes and reads a .vol3 file and shows the decoder's error cases.

use beloss::pipeline::io::{decode_volume, encode_volume, read_volume, write_volume, VOL3_HEADER_LEN};
use beloss::volume::Volume;

fn main() -> beloss::Result<()> {
    let v = Volume::from_fn((4, 3, 2), (0.8, 0.8, 2.5), |x, y, z| (x + 10 * y + 100 * z) as f64)?;
    let dir = std::env::temp_dir().join("beloss_volume_io");
    std::fs::create_dir_all(&dir).map_err(|e| beloss::Error::io(&dir, e))?;
    let path = dir.join("ramp.vol3");
    write_volume(&path, &v)?;
    let back = read_volume(&path)?;
    println!("round trip equal: {}  ({} bytes)", back == v, VOL3_HEADER_LEN + 8 * v.len());

    let good = encode_volume(&v);
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    let mut bad_dtype = good.clone();
    bad_dtype[44] = 7;
    let cases: [(&str, &[u8]); 4] = [
        ("bad magic", &bad_magic),
        ("truncated", &good[..good.len() - 3]),
        ("unsupported dtype", &bad_dtype),
        ("trailing bytes", &[good.as_slice(), &[0u8; 5]].concat()),
    ];
    for (name, bytes) in cases {
        println!("{name:<18} -> {}", decode_volume(bytes).unwrap_err());
    }
    Ok(())
}
