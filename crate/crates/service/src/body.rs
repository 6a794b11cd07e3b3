//! Request-body decoding with field paths in error reports.

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use modkin::Composition;

use crate::error::ApiError;
use crate::API_VERSION;

pub struct Fields {
    map: Map<String, Value>,
}

impl Fields {
    pub fn parse(bytes: &[u8]) -> Result<Self, ApiError> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| {
            ApiError::bad_request(
                "ParseError",
                format!("malformed JSON at line {}, column {}: {e}", e.line(), e.column()),
                None,
            )
        })?;
        let Value::Object(mut map) = value else {
            return Err(ApiError::bad_request(
                "ParseError",
                "request body must be a JSON object",
                None,
            ));
        };
        if let Some(v) = map.remove("version") {
            if v != API_VERSION {
                return Err(ApiError::bad_request(
                    "UnsupportedVersion",
                    format!("expected version {API_VERSION:?}"),
                    Some("version".into()),
                ));
            }
        }
        Ok(Self { map })
    }

    pub fn optional<T: DeserializeOwned>(&mut self, name: &str) -> Result<Option<T>, ApiError> {
        match self.map.remove(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => decode(v, name).map(Some),
        }
    }

    pub fn required<T: DeserializeOwned>(&mut self, name: &str) -> Result<T, ApiError> {
        self.optional(name)?
            .ok_or_else(|| ApiError::bad_request("MissingField", format!("missing field {name:?}"), Some(name.into())))
    }

    /// Like [`Fields::required`], but points at the offending unit on failure.
    pub fn composition(&mut self) -> Result<Composition, ApiError> {
        let Some(v) = self.map.remove("composition") else {
            return Err(ApiError::bad_request(
                "MissingField",
                "missing field \"composition\"",
                Some("composition".into()),
            ));
        };
        if let Some(Value::Array(units)) = v.get("units") {
            for (i, u) in units.iter().enumerate() {
                decode::<modkin::ModularUnit>(u.clone(), &format!("composition.units[{i}]"))?;
            }
        }
        decode(v, "composition")
    }

    pub fn finish(self) -> Result<(), ApiError> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(ApiError::bad_request(
                "UnknownField",
                format!("unknown field {k:?}"),
                Some(k.clone()),
            )),
        }
    }
}

fn decode<T: DeserializeOwned>(v: Value, path: &str) -> Result<T, ApiError> {
    serde_json::from_value(v).map_err(|e| ApiError::bad_request("InvalidField", e.to_string(), Some(path.into())))
}
