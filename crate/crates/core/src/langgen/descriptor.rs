use serde::{Deserialize, Serialize};

use crate::scene::SizeClass;

/// Attribute-level reference to an object, from the pronoun "it" up to
/// category plus colors, size and shape.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Descriptor {
    /// Head noun as written: a library category, an alias, or a foreign noun.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub colors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<SizeClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub pronoun: bool,
    /// Content words the vocabulary does not recognise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unmatched: Vec<String>,
}

impl Descriptor {
    pub fn pronoun() -> Self {
        Self {
            pronoun: true,
            ..Self::default()
        }
    }

    pub fn category(word: impl Into<String>) -> Self {
        Self {
            category: Some(word.into()),
            ..Self::default()
        }
    }

    pub fn with_colors<I, S>(mut self, colors: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.colors = colors.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_size(mut self, size: SizeClass) -> Self {
        self.size = Some(size);
        self
    }

    pub fn with_shape(mut self, shape: impl Into<String>) -> Self {
        self.shape = Some(shape.into());
        self
    }

    /// Number of attribute fields present (colors count as one field).
    pub fn field_count(&self) -> usize {
        usize::from(self.category.is_some())
            + usize::from(!self.colors.is_empty())
            + usize::from(self.size.is_some())
            + usize::from(self.shape.is_some())
    }

    pub fn is_valid(&self) -> bool {
        if self.pronoun {
            self.field_count() == 0 && self.unmatched.is_empty()
        } else {
            self.field_count() > 0 || !self.unmatched.is_empty()
        }
    }

    /// Realization-bank key, e.g. `cat+col`. `None` when the descriptor has
    /// no category or carries unmatched words.
    pub fn bank_key(&self) -> Option<String> {
        if self.pronoun {
            return Some("pronoun".into());
        }
        if self.category.is_none() || !self.unmatched.is_empty() {
            return None;
        }
        let mut key = String::from("cat");
        if !self.colors.is_empty() {
            key.push_str("+col");
        }
        if self.size.is_some() {
            key.push_str("+size");
        }
        if self.shape.is_some() {
            key.push_str("+shape");
        }
        Some(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pronoun_excludes_fields() {
        assert!(Descriptor::pronoun().is_valid());
        let mut d = Descriptor::pronoun();
        d.category = Some("bottle".into());
        assert!(!d.is_valid());
        assert!(!Descriptor::default().is_valid());
    }

    #[test]
    fn keys() {
        let d = Descriptor::category("bottle").with_colors(["brown"]).with_shape("round");
        assert_eq!(d.bank_key().as_deref(), Some("cat+col+shape"));
        assert_eq!(d.field_count(), 3);
    }

    #[test]
    fn serde_omits_absent_fields() {
        let d = Descriptor::category("bottle").with_colors(["brown"]);
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            r#"{"category":"bottle","colors":["brown"]}"#
        );
    }
}
