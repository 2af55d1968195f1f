//! Schema JSON and population CSV files.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use effortsim_core::schema::SchemaFile;
use effortsim_core::{FeatureSchema, Individual, Population};

use crate::error::{HarnessError, Result};

pub fn parse_schema(text: &str) -> Result<FeatureSchema> {
    let file: SchemaFile = serde_json::from_str(text).map_err(|e| HarnessError::config(format!("schema: {e}")))?;
    FeatureSchema::from_file(file).map_err(|e| HarnessError::config(e.to_string()))
}

pub fn load_schema(path: &Path) -> Result<FeatureSchema> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
    parse_schema(&text)
}

pub fn schema_json(schema: &FeatureSchema) -> String {
    to_json(&schema.to_file())
}

/// Pretty JSON with a trailing newline. Field order follows the types.
pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// `;` when the header holds more semicolons than commas, else `,`.
pub fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.matches(';').count() > header.matches(',').count() {
        b';'
    } else {
        b','
    }
}

/// Parses CSV text with a header row naming every schema feature and the
/// label. Extra columns are ignored; level-coded features hold level names.
pub fn read_population(text: &str, schema: Arc<FeatureSchema>) -> Result<Population> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(text))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| HarnessError::data(e.to_string()))?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::data(format!("missing column `{name}`")))
    };
    let cols = schema.names().iter().map(|n| column(n)).collect::<Result<Vec<_>>>()?;
    let label_col = column(schema.label())?;
    let sens = schema.sensitive_index();

    let mut individuals = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HarnessError::data(format!("row {row}: {e}")))?;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let mut x = Vec::with_capacity(cols.len());
        for (k, &c) in cols.iter().enumerate() {
            let raw = cell(c);
            let v = match schema.feature(k).kind.levels() {
                Some(_) => schema.level_index(k, raw).ok_or_else(|| {
                    HarnessError::data(format!("row {row}: `{raw}` is not a level of `{}`", schema.feature(k).name))
                })? as f64,
                None => parse_number(raw).ok_or_else(|| {
                    HarnessError::data(format!("row {row}: cannot parse `{raw}` in `{}`", schema.feature(k).name))
                })?,
            };
            x.push(v);
        }
        let y = parse_number(cell(label_col))
            .ok_or_else(|| HarnessError::data(format!("row {row}: cannot parse label `{}`", cell(label_col))))?;
        let group = schema.group_of(x[sens])?;
        individuals.push(Individual { x, y, group });
    }
    let pop = Population::new(schema.clone(), individuals)?;
    if let Some(levels) = schema.feature(sens).kind.levels() {
        for (g, name) in levels.iter().enumerate() {
            if pop.group_size(effortsim_core::GroupId(g as u32)) == 0 {
                return Err(HarnessError::data(format!("group `{name}` has no rows")));
            }
        }
    }
    Ok(pop)
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn load_csv(path: &Path, schema: Arc<FeatureSchema>) -> Result<Population> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    read_population(&text, schema)
}

/// Writes a population in the input format (comma separated, level names).
pub fn write_population(pop: &Population) -> String {
    let schema = pop.schema();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = schema.names();
    header.push(schema.label().to_string());
    w.write_record(&header).expect("in-memory write");
    for ind in pop.individuals() {
        let mut rec: Vec<String> = ind
            .x
            .iter()
            .enumerate()
            .map(|(k, &v)| match schema.feature(k).kind.levels() {
                Some(levels) => levels[v as usize].clone(),
                None => v.to_string(),
            })
            .collect();
        rec.push(ind.y.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"{
        "features": [
            {"name": "sex", "kind": "immutable", "levels": ["F", "M"], "mutable": false},
            {"name": "tutor", "kind": "categorical", "levels": ["A", "B"], "mutable": true},
            {"name": "hours", "kind": "numerical_monotone", "direction": "increasing", "mutable": true}
        ],
        "sensitive": "sex",
        "label": "grade"
    }"#;

    fn schema() -> Arc<FeatureSchema> {
        Arc::new(parse_schema(SCHEMA).unwrap())
    }

    #[test]
    fn reads_semicolons_and_quotes() {
        let text = "\"sex\";\"tutor\";\"hours\";\"other\";\"grade\"\n\"F\";\"A\";1.5;x;12\n\"M\";\"B\";0.1;y;9\n";
        let pop = read_population(text, schema()).unwrap();
        assert_eq!(pop.len(), 2);
        assert_eq!(pop.individual(0).x, vec![0.0, 0.0, 1.5]);
        assert_eq!(pop.individual(1).y, 9.0);
    }

    #[test]
    fn unknown_level_is_an_error() {
        let text = "sex,tutor,hours,grade\nF,Z,1,3\nM,A,1,3\n";
        assert!(matches!(read_population(text, schema()), Err(HarnessError::Data(_))));
    }

    #[test]
    fn missing_column_and_bad_cell() {
        assert!(read_population("sex,tutor,grade\nF,A,1\n", schema()).is_err());
        assert!(read_population("sex,tutor,hours,grade\nF,A,abc,1\nM,A,1,1\n", schema()).is_err());
    }

    #[test]
    fn empty_group_is_an_error() {
        assert!(read_population("sex,tutor,hours,grade\nF,A,1,1\n", schema()).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let text = "sex,tutor,hours,grade\nF,A,0.1,3\nM,B,2.7182818284590455,1e-7\n";
        let pop = read_population(text, schema()).unwrap();
        let again = read_population(&write_population(&pop), schema()).unwrap();
        assert_eq!(pop, again);
        assert_eq!(write_population(&again), write_population(&pop));
    }

    #[test]
    fn bad_schema_is_a_config_error() {
        assert!(matches!(parse_schema("{}"), Err(HarnessError::Config(_))));
    }
}
