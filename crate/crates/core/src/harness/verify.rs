use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::verify::{certify, Certificate, VerifyOptions};

/// Runs both certificate suites. With an output directory, writes
/// `certificate.csv` and the verify section of `report.txt` there. A violated property is not an
/// error here; callers inspect [`Certificate::passed`].
pub fn cmd_verify(opts: &VerifyOptions, out_dir: Option<&Path>) -> Result<Certificate> {
    let cert = certify(opts)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("certificate.csv"), cert.to_csv())?;
        super::write_report_section(dir, "verify", &cert.summary())?;
    }
    Ok(cert)
}
