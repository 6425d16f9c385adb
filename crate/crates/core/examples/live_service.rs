//! Starts the annotation service on synthetic images, posts two strokes as a
//! client would, and waits for a prediction trained on them.
//!
//! cargo run --release --example live_service

use std::time::{Duration, Instant};

use icontrain::trainer::{serve, synthesize_dataset, ProjectConfig, SynthConfig};
use serde_json::{json, Value};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let dir = tempfile::tempdir()?;
    let image_dir = dir.path().join("images");
    std::fs::create_dir_all(&image_dir)?;
    let data = synthesize_dataset(&SynthConfig { seed: 1, n_images: 2, size: 256, ..Default::default() })?;
    for s in &data {
        s.image.save_png(&image_dir.join(format!("{}.png", s.id)))?;
    }
    let config = ProjectConfig {
        image_dir,
        work_dir: dir.path().join("work"),
        listen: "127.0.0.1:0".into(),
        patch_size: 31,
        batch_size: 512,
        warmup_samples: 1024,
        ..Default::default()
    };
    let handle = serve(config)?;
    let base = format!("http://{}", handle.addr());
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();

    let images: Value = agent.get(&format!("{base}/images")).call()?.body_mut().read_json()?;
    println!("images: {images}");
    let id = data[0].id.as_str();
    let membrane: Vec<[usize; 2]> = (0..256 * 256)
        .filter(|&i| data[0].truth.labels[i] == 0)
        .step_by(40)
        .map(|i| [i % 256, i / 256])
        .collect();
    let interior: Vec<[usize; 2]> = (0..256 * 256)
        .filter(|&i| data[0].truth.labels[i] != 0)
        .step_by(400)
        .map(|i| [i % 256, i / 256])
        .collect();
    let mut last = 0;
    for (class, pixels) in [(1, membrane), (0, interior)] {
        let body = json!({ "image_id": id, "class": class, "pixels": pixels, "author": "demo" });
        let reply: Value = agent.post(&format!("{base}/annotations")).send_json(&body)?.body_mut().read_json()?;
        last = reply["seq"].as_u64().unwrap_or(0);
        println!("stroke accepted as seq {last}");
    }

    let start = Instant::now();
    while start.elapsed() < Duration::from_secs(120) {
        let mut resp = agent.get(&format!("{base}/predictions/{id}")).call()?;
        match resp.status().as_u16() {
            200 => {
                let header = |n: &str| resp.headers().get(n).and_then(|v| v.to_str().ok()).unwrap_or("").to_string();
                let through: u64 = header("X-Trained-Through-Seq").parse().unwrap_or(0);
                if through >= last {
                    let (rev, stride) = (header("X-Model-Revision"), header("X-Stride"));
                    let bytes = resp.body_mut().read_to_vec()?;
                    println!(
                        "map after {:.1}s: revision {rev}, stride {stride}, {} bytes",
                        start.elapsed().as_secs_f64(),
                        bytes.len()
                    );
                    break;
                }
            }
            code => {
                let status: Value = agent.get(&format!("{base}/status")).call()?.body_mut().read_json()?;
                println!("HTTP {code}; iteration {} warm-up left {}", status["iteration"], status["warmup_remaining"]);
            }
        }
        std::thread::sleep(Duration::from_millis(500));
    }
    handle.shutdown();
    Ok(())
}
