use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// CSV writer whose first line is `# schema: <schema>`. Read such files with
/// `csv::ReaderBuilder::comment(Some(b'#'))`.
pub(crate) fn schema_writer(
    path: impl AsRef<Path>,
    schema: &str,
) -> Result<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# schema: {schema}")?;
    Ok(csv::Writer::from_writer(f))
}

pub(crate) fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
