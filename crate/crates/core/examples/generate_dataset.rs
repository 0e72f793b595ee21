//! Generate the small synthetic benchmark, normalize it and write it to disk.

use mmal::datagen::{generate, load_dataset, save_dataset, DatasetFormat, GeneratorConfig};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "out/example-data".into());
    let cfg = GeneratorConfig {
        seed: 11,
        ..GeneratorConfig::desk()
    };
    let data = generate(&cfg)?;
    for (split, sessions) in [("train", &data.train), ("test", &data.test)] {
        for s in sessions.iter() {
            println!("{split:<5} subject {:>2}: {:>3} windows, class counts {:?}", s.subject, s.len(), s.class_counts());
        }
    }

    let (normalized, norm) = data.normalized()?;
    println!("fitted {} modality normalizers", norm.means.len());
    save_dataset(dir.as_ref(), &normalized, DatasetFormat::Binary)?;
    let back = load_dataset(dir.as_ref())?;
    assert_eq!(back, normalized);
    println!("wrote and re-read {dir}");
    Ok(())
}
