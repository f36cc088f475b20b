use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

/// Wire token for an annotation nobody could assign.
pub const UNLABELED: &str = "-";

/// An annotation that may be explicitly unlabeled. Unlabeled values never
/// enter a score or a distribution.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Label<T> {
    Labeled(T),
    #[default]
    Unlabeled,
}

impl<T> Label<T> {
    pub fn get(&self) -> Option<&T> {
        match self {
            Label::Labeled(v) => Some(v),
            Label::Unlabeled => None,
        }
    }

    pub fn is_labeled(&self) -> bool {
        matches!(self, Label::Labeled(_))
    }
}

impl<T: Copy> Label<T> {
    pub fn value(&self) -> Option<T> {
        self.get().copied()
    }
}

impl<T> From<Option<T>> for Label<T> {
    fn from(v: Option<T>) -> Self {
        v.map_or(Label::Unlabeled, Label::Labeled)
    }
}

/// Values an annotation can hold on the wire.
pub trait LabelValue: Sized {
    fn from_json(v: &Value) -> Option<Self>;
    fn to_json(&self) -> Value;
}

impl LabelValue for String {
    fn from_json(v: &Value) -> Option<Self> {
        v.as_str().map(str::to_owned)
    }
    fn to_json(&self) -> Value {
        Value::String(self.clone())
    }
}

impl LabelValue for f64 {
    fn from_json(v: &Value) -> Option<Self> {
        v.as_f64()
    }
    fn to_json(&self) -> Value {
        serde_json::Number::from_f64(*self).map_or(Value::Null, Value::Number)
    }
}

impl LabelValue for u8 {
    fn from_json(v: &Value) -> Option<Self> {
        if let Some(n) = v.as_u64() {
            return u8::try_from(n).ok();
        }
        // accept 3.0 but not 2.5
        v.as_f64()
            .filter(|f| f.fract() == 0.0 && (0.0..=255.0).contains(f))
            .map(|f| f as u8)
    }
    fn to_json(&self) -> Value {
        Value::from(*self)
    }
}

impl<T: LabelValue> Serialize for Label<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Label::Labeled(v) => v.to_json().serialize(s),
            Label::Unlabeled => s.serialize_str(UNLABELED),
        }
    }
}

impl<'de, T: LabelValue> Deserialize<'de> for Label<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        match &v {
            Value::Null => Ok(Label::Unlabeled),
            Value::String(s) if s == UNLABELED => Ok(Label::Unlabeled),
            other => T::from_json(other)
                .map(Label::Labeled)
                .ok_or_else(|| D::Error::custom(format!("unexpected annotation value {other}"))),
        }
    }
}

/// A correction payload: text, number, or the unlabeled marker.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Unlabeled,
    Text(String),
    Number(f64),
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Unlabeled => f.write_str(UNLABELED),
            FieldValue::Text(t) => f.write_str(t),
            FieldValue::Number(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for FieldValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            FieldValue::Unlabeled => s.serialize_str(UNLABELED),
            FieldValue::Text(t) => s.serialize_str(t),
            FieldValue::Number(n) => s.serialize_f64(*n),
        }
    }
}

impl<'de> Deserialize<'de> for FieldValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Null => Ok(FieldValue::Unlabeled),
            Value::String(s) if s == UNLABELED => Ok(FieldValue::Unlabeled),
            Value::String(s) => Ok(FieldValue::Text(s)),
            Value::Number(n) => n
                .as_f64()
                .map(FieldValue::Number)
                .ok_or_else(|| D::Error::custom("number out of range")),
            other => Err(D::Error::custom(format!("unexpected value {other}"))),
        }
    }
}
