use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SmcaeModel;
use crate::error::{Error, Result};

const FORMAT: &str = "smcae-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize)]
struct ContainerRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a SmcaeModel,
}

#[derive(Deserialize)]
struct Container {
    format: String,
    version: u32,
    model: SmcaeModel,
}

/// Writes the model as JSON. Floats round-trip exactly.
pub fn write_model<W: Write>(model: &SmcaeModel, w: W) -> Result<()> {
    let c = ContainerRef { format: FORMAT, version: MODEL_VERSION, model };
    serde_json::to_writer(w, &c)?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<SmcaeModel> {
    let c: Container = serde_json::from_reader(r)?;
    if c.format != FORMAT {
        return Err(Error::InvalidArgument(format!("not a model file (format tag {:?})", c.format)));
    }
    if c.version != MODEL_VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            c.version
        )));
    }
    c.model.validate()?;
    Ok(c.model)
}

pub fn save_model(model: &SmcaeModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SmcaeModel> {
    read_model(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smcae::{train_stack, SmcaeConfig, Variant};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs = Array2::from_shape_fn((8, 5), |_| rng.random_range(0.1..0.9));
        let xr = Array2::from_shape_fn((8, 5), |_| rng.random_range(0.1..0.9));
        let cfg = SmcaeConfig {
            layer_sizes: vec![3, 2],
            max_iterations: 15,
            ..Default::default()
        };
        let model = train_stack(xs.view(), xr.view(), Variant::Smcae, &cfg).unwrap();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back, model);
        let a: Vec<u64> = model.layers[0].to_flat().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.layers[0].to_flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_foreign_json() {
        let err = read_model(br#"{"format":"other","version":1,"model":null}"#.as_slice());
        assert!(err.is_err());
    }
}
