//! Renders a handful of procedural lesions, prints their captions and the
//! condition vectors those captions encode to.
//!
//!     cargo run --release --example lesion_dataset -- [out_dir]

use std::path::PathBuf;

use rectiflow::lesiondata::{caption, encode_caption, generation_prompt, render_lesion, sample_params, Label};
use rectiflow::numerics::Rng;

fn main() -> rectiflow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rectiflow-lesions"));
    std::fs::create_dir_all(&out).map_err(|e| rectiflow::Error::Config(e.to_string()))?;

    let mut rng = Rng::new(3);
    for label in Label::ALL {
        for i in 0..3 {
            let params = sample_params(label, &mut rng);
            let record = caption(&params);
            let cond = encode_caption(&record.text)?;
            let path = out.join(format!("{label}_{i}.ppm"));
            render_lesion(&params, 32)?.write_ppm(&path)?;
            println!("{}", path.display());
            println!(
                "  A {:.2}  B {:.2}  C {:.2}  levels {:?}",
                params.asymmetry, params.border_irregularity, params.color_variation, record.levels
            );
            println!("  {}", record.text);
            println!("  condition {:?}", cond.values());
        }
    }
    let prompt = generation_prompt(Label::Malignant);
    println!("{prompt:?} -> {:?}", encode_caption(&prompt)?.values());
    Ok(())
}
