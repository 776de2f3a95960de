use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::ItemId;

/// Real-valued attribute labels keyed by item id.
///
/// Coarse ordinal labels (age groups, decades) arrive already encoded as
/// integer ranks `0..K-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeLabels {
    attribute_name: String,
    values: BTreeMap<ItemId, f64>,
}

impl AttributeLabels {
    pub fn new(attribute_name: impl Into<String>, values: BTreeMap<ItemId, f64>) -> Result<Self> {
        if let Some((id, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("label for {id} is {v}")));
        }
        Ok(Self {
            attribute_name: attribute_name.into(),
            values,
        })
    }

    pub fn attribute_name(&self) -> &str {
        &self.attribute_name
    }

    pub fn with_attribute_name(mut self, name: impl Into<String>) -> Self {
        self.attribute_name = name.into();
        self
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.values.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ItemId, f64)> {
        self.values.iter().map(|(k, v)| (k, *v))
    }

    /// Labels for `ids` in order; ids without a label are collected into one error.
    pub fn values_for<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<f64>> {
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            match self.get(id.as_ref()) {
                Some(v) => out.push(v),
                None => missing.push(id.as_ref().to_string()),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::consistency("ids have no label", missing))
        }
    }
}

pub fn load_labels_csv(path: &Path) -> Result<AttributeLabels> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels_csv(&text)
}

/// Parses a CSV with header exactly `id,value`. The attribute name is left
/// empty; the manifest supplies it.
pub fn parse_labels_csv(text: &str) -> Result<AttributeLabels> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("labels header: {e}")))?;
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "value" {
        return Err(Error::Format(format!(
            "labels header must be exactly `id,value`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut values = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("labels row {}: {e}", line + 2)))?;
        if record.len() != 2 {
            return Err(Error::Format(format!(
                "labels row {} has {} fields",
                line + 2,
                record.len()
            )));
        }
        let id = ItemId::new(&record[0])?;
        let value: f64 = record[1].trim().parse().map_err(|_| {
            Error::Parse(format!("labels row {}: {:?} is not a number", line + 2, &record[1]))
        })?;
        if !value.is_finite() {
            return Err(Error::Parse(format!(
                "labels row {}: value {value} is not finite",
                line + 2
            )));
        }
        if values.insert(id.clone(), value).is_some() {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    AttributeLabels::new("", values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simple_file() {
        let labels = parse_labels_csv("id,value\na,21\nb,60\n").unwrap();
        assert_eq!(labels.get("a"), Some(21.0));
        assert_eq!(labels.get("b"), Some(60.0));
        assert_eq!(labels.len(), 2);
        let labels = parse_labels_csv("id,value\na,3.5\n").unwrap();
        assert_eq!(labels.get("a"), Some(3.5));
    }

    #[test]
    fn crlf_line_endings() {
        let labels = parse_labels_csv("id,value\r\na,1\r\nb,2\r\n").unwrap();
        assert_eq!(labels.get("b"), Some(2.0));
    }

    #[test]
    fn duplicate_id() {
        let err = parse_labels_csv("id,value\na,1\na,2\n").unwrap_err();
        assert_eq!(err.code(), "DuplicateId");
    }

    #[test]
    fn unparsable_value() {
        assert_eq!(
            parse_labels_csv("id,value\na,old\n").unwrap_err().code(),
            "ParseError"
        );
        assert_eq!(
            parse_labels_csv("id,value\na,NaN\n").unwrap_err().code(),
            "ParseError"
        );
    }

    #[test]
    fn missing_header() {
        assert_eq!(parse_labels_csv("a,1\nb,2\n").unwrap_err().code(), "FormatError");
        assert_eq!(parse_labels_csv("").unwrap_err().code(), "FormatError");
        assert_eq!(
            parse_labels_csv("id,value,extra\na,1,2\n").unwrap_err().code(),
            "FormatError"
        );
    }

    #[test]
    fn values_for_reports_missing() {
        let labels = parse_labels_csv("id,value\na,1\n").unwrap();
        match labels.values_for(&["a", "c"]).unwrap_err() {
            Error::Consistency { ids, .. } => assert_eq!(ids, ["c"]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
