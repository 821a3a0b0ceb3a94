use crate::error::{Error, Result};
use crate::grounder::parse::{is_name_phrase, parse_descriptor_strict};
use crate::langgen::{ConfusionTable, NameLexicon, RefExprBank, TemplateBank};
use crate::scene::ObjectLibrary;
use crate::vocab::{tokenize, Lexicon};

/// Everything the generator and the parser share: the template grammar,
/// the referring-expression bank, names, confusions and the lexicon built
/// from them and the object library.
#[derive(Debug, Clone)]
pub struct Grammar {
    pub lexicon: Lexicon,
    pub templates: TemplateBank,
    pub refexprs: RefExprBank,
    pub names: NameLexicon,
    pub confusions: ConfusionTable,
}

impl Grammar {
    pub fn new(
        library: &ObjectLibrary,
        templates: TemplateBank,
        refexprs: RefExprBank,
        names: NameLexicon,
        confusions: ConfusionTable,
    ) -> Result<Self> {
        let lexicon = Lexicon::new(library, confusions.words(), templates.all_words());
        let grammar = Self {
            lexicon,
            templates,
            refexprs,
            names,
            confusions,
        };
        for name in grammar.names.names() {
            let toks = tokenize(name);
            if toks.len() != name.split_whitespace().count() {
                return Err(Error::Validation(format!(
                    "name {name:?} contains punctuation the tokenizer drops"
                )));
            }
            if !is_name_phrase(&grammar.lexicon, &toks)
                || parse_descriptor_strict(&grammar.lexicon, &toks).is_some()
            {
                return Err(Error::Validation(format!(
                    "name {name:?} collides with the instruction vocabulary"
                )));
            }
        }
        Ok(grammar)
    }

    pub fn builtin(library: &ObjectLibrary) -> Result<Self> {
        Self::new(
            library,
            TemplateBank::builtin(),
            RefExprBank::builtin(),
            NameLexicon::builtin(),
            ConfusionTable::builtin(),
        )
    }
}
