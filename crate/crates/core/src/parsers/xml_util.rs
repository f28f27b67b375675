use quick_xml::events::BytesStart;

use crate::error::{Error, Result};

/// Looks up an attribute by local name, unescaped.
pub(crate) fn attr(e: &BytesStart<'_>, name: &str, context: &str) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|err| Error::parse(context, err))?;
        if a.key.as_ref() == name.as_bytes() {
            let v = a.unescape_value().map_err(|err| Error::parse(context, err))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}
