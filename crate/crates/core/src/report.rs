//! Tabular output shared by the library writers and the command line.

use std::io::Write;

/// Header, data rows and `#`-prefixed trailer lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub trailer: Vec<String>,
}

/// Seventeen significant digits, enough to round-trip an `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, fields: &[&str]) {
        self.trailer.push(format!("#{}", fields.join(",")));
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        for line in &self.trailer {
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Right-aligned columns separated by two spaces.
    pub fn write_pretty<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (wd, cell) in widths.iter_mut().zip(row) {
                *wd = (*wd).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, &wd)| format!("{c:>wd$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        writeln!(w, "{}", line(&self.header))?;
        for row in &self.rows {
            writeln!(w, "{}", line(row))?;
        }
        for t in &self.trailer {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_pretty() {
        let mut t = Table::new(&["j", "value"]);
        t.push(vec!["4".into(), num(0.5)]);
        t.push(vec!["10".into(), num(-1.25)]);
        t.note(&["max", "1"]);
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "j,value\n4,5.0000000000000000e-1\n10,-1.2500000000000000e0\n#max,1\n"
        );
        let mut pretty = Vec::new();
        t.write_pretty(&mut pretty).unwrap();
        let text = String::from_utf8(pretty).unwrap();
        let header = format!(" j  {:>21}\n", "value");
        assert!(text.starts_with(&header), "{text}");
        assert!(text.contains("\n10  -1.2500000000000000e0\n"));
    }
}
