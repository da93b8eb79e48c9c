//! `--set key.path=value` edits applied to the configuration as JSON.

use lrppo::Error;
use serde_json::Value;

/// Sets the value at a dotted path. The path must already exist in the
/// defaults-filled configuration; the value is read as JSON when it parses
/// and as a plain string otherwise.
pub fn apply(config: &mut Value, edit: &str) -> Result<(), Error> {
    let (key, raw) = edit
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {edit:?} is not of the form key=value")))?;
    if key.is_empty() {
        return Err(Error::Config(format!("override {edit:?} has an empty key")));
    }
    let mut slot = &mut *config;
    for part in key.split('.') {
        slot = match slot {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(move |i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("unknown configuration key {key:?}")))?;
    }
    *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sets_nested_numbers_and_strings() {
        let mut v = json!({"stage3": {"ppo": {"n_iters": 50, "ratio_mode": "partial_order"}}});
        apply(&mut v, "stage3.ppo.n_iters=7").unwrap();
        apply(&mut v, "stage3.ppo.ratio_mode=original").unwrap();
        assert_eq!(v, json!({"stage3": {"ppo": {"n_iters": 7, "ratio_mode": "original"}}}));
    }

    #[test]
    fn indexes_into_arrays() {
        let mut v = json!({"seeds": [0, 1]});
        apply(&mut v, "seeds.1=9").unwrap();
        assert_eq!(v, json!({"seeds": [0, 9]}));
        apply(&mut v, "seeds=[3,4,5]").unwrap();
        assert_eq!(v, json!({"seeds": [3, 4, 5]}));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = json!({"stage1": {"epochs": 3}});
        assert!(matches!(apply(&mut v, "stage1.epochz=4"), Err(Error::Config(_))));
        assert!(matches!(apply(&mut v, "stage1.epochs.deeper=4"), Err(Error::Config(_))));
        assert!(matches!(apply(&mut v, "no_equals_sign"), Err(Error::Config(_))));
        assert_eq!(v, json!({"stage1": {"epochs": 3}}));
    }
}
