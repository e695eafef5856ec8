//! Analytic gradients of the full model against central finite differences.

use mscnn_spu::gradcheck::{gradcheck, GradcheckSetup};

fn main() -> mscnn_spu::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let report = gradcheck(&GradcheckSetup::tiny(seed))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    println!("passed: {}", report.passed());
    Ok(())
}
