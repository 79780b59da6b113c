use std::fmt::Display;
use std::path::{Path, PathBuf};

use crate::error::Result;

/// A CSV file under construction. Rendering puts `# key=value` comment lines first,
/// then the column header, then the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    comments: Vec<String>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            comments: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    pub fn row(&mut self, values: Vec<String>) {
        assert_eq!(values.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(values);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c == name || c.split('[').next() == Some(name))
    }

    pub fn render(&self) -> Result<String> {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        Ok(out)
    }
}

pub fn fmt<T: Display>(v: T) -> String {
    v.to_string()
}

pub fn fmt_opt<T: Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Result of one experiment verb: files to write and a text summary for the terminal.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub files: Vec<(String, String)>,
    pub tables: Vec<Table>,
    pub summary: String,
}

impl RunOutput {
    pub fn push_table(&mut self, table: Table) -> Result<()> {
        self.files.push((format!("{}.csv", table.name), table.render()?));
        self.tables.push(table);
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, contents) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, contents)?;
            written.push(path);
        }
        Ok(written)
    }
}
