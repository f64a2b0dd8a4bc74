//! Writes and reads back the little-endian tensor container used for every
//! prediction and label file.

use uqfair::tensor::{read_tensor, write_tensor, Tensor};

pub fn run_example() {
    let t = Tensor::from_f64(vec![2, 3], vec![0.5, 0.25, 0.25, 0.1, 0.1, 0.8]).unwrap();
    let bytes = t.encode();
    println!("{} values of {:?} -> {} bytes (header {} bytes)", t.numel(), t.dtype(), bytes.len(), bytes.len() - 8 * t.numel());
    println!("magic {:?}", std::str::from_utf8(&bytes[..4]).unwrap());
    assert_eq!(Tensor::decode(&bytes).unwrap(), t);

    let labels = Tensor::from_u8(vec![2, 2, 2], vec![0, 1, 2, 3, 0, 0, 1, 1]).unwrap();
    let path = std::env::temp_dir().join(format!("uqfair-tensor-{}.uqt", std::process::id()));
    write_tensor(&labels, &path).unwrap();
    let back = read_tensor(&path).unwrap();
    println!("label map {:?} round-trips: {}", back.dims(), back == labels);
    std::fs::remove_file(&path).unwrap();

    match Tensor::decode(&bytes[..bytes.len() - 1]) {
        Err(e) => println!("truncated file: {e}"),
        Ok(_) => unreachable!(),
    }
}

#[allow(dead_code)]
fn main() {
    run_example();
}
