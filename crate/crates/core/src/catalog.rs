//! Intervention content pool and resolution from an attribute vector to a
//! concrete intervention.
//!
//! The on-disk format is tab-separated UTF-8 with one row per dialog node and
//! the header
//! `intervention_id, text, node, intervention_type, emotional_regulation,
//! therapy_group, location, duration_seconds`. Rows of one intervention must
//! be contiguous and agree on the attribute columns and duration; a row's
//! `intervention_type` may refine the first row's (`exercise_short` under
//! `exercise`). Lines starting with `#` are comments.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AttributeSchema, AttributeVector};
use crate::error::{Error, Result};

pub const MAX_DURATION_SECONDS: u32 = 60;

/// Attribute whose value `both` stands for either of the other values.
const LOCATION: &str = "location";
const WILDCARD: &str = "both";

const HEADER: [&str; 8] = [
    "intervention_id",
    "text",
    "node",
    "intervention_type",
    "emotional_regulation",
    "therapy_group",
    "location",
    "duration_seconds",
];

const STARTER: &str = include_str!("../data/starter_catalog.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogNode {
    pub node: String,
    pub text: String,
    /// Row-level type; may refine the entry's type, e.g. `exercise_short`.
    pub node_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub id: String,
    /// Conversation lines in delivery order.
    pub node_texts: Vec<DialogNode>,
    pub intervention_type: String,
    pub emotional_regulation: String,
    pub therapy_group: String,
    pub location: String,
    pub duration_seconds: u32,
}

impl InterventionSpec {
    fn attribute(&self, name: &str) -> Option<&str> {
        match name {
            "emotional_regulation" => Some(&self.emotional_regulation),
            "therapy_group" => Some(&self.therapy_group),
            "location" => Some(&self.location),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Catalog {
    schema: AttributeSchema,
    entries: Vec<InterventionSpec>,
    #[serde(skip)]
    actions: Vec<AttributeVector>,
}

#[derive(Deserialize)]
struct RawRow {
    intervention_id: String,
    text: String,
    node: String,
    intervention_type: String,
    emotional_regulation: String,
    therapy_group: String,
    location: String,
    duration_seconds: String,
}

fn node_number(node: &str) -> Option<u32> {
    node.strip_prefix("node_id_")?.parse().ok().filter(|n| *n >= 1)
}

impl Catalog {
    /// Validates entries against `schema`. The schema must consist of the
    /// catalog's three attribute columns (in any order).
    pub fn new(schema: AttributeSchema, entries: Vec<InterventionSpec>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Catalog("catalog has no entries".into()));
        }
        for attr in schema.attributes() {
            if !matches!(
                attr.name.as_str(),
                "emotional_regulation" | "therapy_group" | "location"
            ) {
                return Err(Error::Catalog(format!(
                    "schema attribute `{}` has no catalog column",
                    attr.name
                )));
            }
        }
        let mut ids = HashSet::new();
        let mut actions = Vec::with_capacity(entries.len());
        for e in &entries {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Catalog(format!("duplicate intervention id `{}`", e.id)));
            }
            actions.push(check_entry(&schema, e)?);
        }
        Ok(Catalog {
            schema,
            entries,
            actions,
        })
    }

    /// The shipped starter catalog under the default schema.
    pub fn starter() -> Self {
        Catalog::from_dsv(STARTER, AttributeSchema::intervention_default())
            .expect("starter catalog is valid")
    }

    pub fn load(path: impl AsRef<Path>, schema: AttributeSchema) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Catalog::from_dsv(&text, schema)
    }

    pub fn from_dsv(text: &str, schema: AttributeSchema) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .quoting(false)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::CatalogRow {
                row: 1,
                message: format!("header must be {}", HEADER.join("\t")),
            });
        }
        let mut entries: Vec<InterventionSpec> = Vec::new();
        let mut closed: HashSet<String> = HashSet::new();
        for record in reader.records() {
            let record = record?;
            let row = record.position().map_or(0, |p| p.line() as usize);
            let fail = |message: String| Error::CatalogRow { row, message };
            let raw: RawRow = record.deserialize(Some(&headers)).map_err(|e| fail(e.to_string()))?;
            let duration: u32 = raw
                .duration_seconds
                .trim()
                .parse()
                .map_err(|_| fail(format!("bad duration `{}`", raw.duration_seconds)))?;
            let continues = entries.last().is_some_and(|e| e.id == raw.intervention_id);
            if continues {
                let e = entries.last_mut().expect("checked above");
                if e.intervention_type != raw.intervention_type
                    && !raw.intervention_type.starts_with(&e.intervention_type)
                    && !e.intervention_type.starts_with(&raw.intervention_type)
                {
                    // node-level subtypes such as exercise / exercise_short
                    // are tolerated; unrelated types are not
                    return Err(fail(format!(
                        "intervention_type `{}` conflicts with `{}`",
                        raw.intervention_type, e.intervention_type
                    )));
                }
                if e.emotional_regulation != raw.emotional_regulation
                    || e.therapy_group != raw.therapy_group
                    || e.location != raw.location
                    || e.duration_seconds != duration
                {
                    return Err(fail(format!(
                        "attributes of `{}` differ between its rows",
                        raw.intervention_id
                    )));
                }
                if e.node_texts.iter().any(|n| n.node == raw.node) {
                    return Err(fail(format!("duplicate node `{}`", raw.node)));
                }
                e.node_texts.push(DialogNode {
                    node: raw.node,
                    text: raw.text,
                    node_type: raw.intervention_type,
                });
            } else {
                if let Some(prev) = entries.last() {
                    closed.insert(prev.id.clone());
                }
                if closed.contains(&raw.intervention_id) {
                    return Err(fail(format!(
                        "duplicate intervention id `{}`",
                        raw.intervention_id
                    )));
                }
                let spec = InterventionSpec {
                    id: raw.intervention_id,
                    node_texts: vec![DialogNode {
                        node: raw.node,
                        text: raw.text,
                        node_type: raw.intervention_type.clone(),
                    }],
                    intervention_type: raw.intervention_type,
                    emotional_regulation: raw.emotional_regulation,
                    therapy_group: raw.therapy_group,
                    location: raw.location,
                    duration_seconds: duration,
                };
                check_entry(&schema, &spec).map_err(|e| fail(e.to_string()))?;
                entries.push(spec);
            }
            let last = entries.last().expect("pushed above");
            if node_number(&last.node_texts.last().expect("non-empty").node).is_none() {
                return Err(fail("node ids must look like node_id_<n>".into()));
            }
        }
        for e in &mut entries {
            e.node_texts
                .sort_by_key(|n| node_number(&n.node).expect("validated"));
        }
        Catalog::new(schema, entries)
    }

    /// Writes the catalog back in the on-disk format.
    pub fn to_dsv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(b'\t')
            .quote_style(csv::QuoteStyle::Never)
            .from_writer(Vec::new());
        w.write_record(HEADER)?;
        for e in &self.entries {
            let dur = e.duration_seconds.to_string();
            for n in &e.node_texts {
                w.write_record([
                    e.id.as_str(),
                    n.text.as_str(),
                    n.node.as_str(),
                    n.node_type.as_str(),
                    e.emotional_regulation.as_str(),
                    e.therapy_group.as_str(),
                    e.location.as_str(),
                    dur.as_str(),
                ])?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Catalog(format!("writer flush failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Catalog(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn entries(&self) -> &[InterventionSpec] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry `i`'s attribute values as a schema vector.
    pub fn action_of(&self, i: usize) -> &AttributeVector {
        &self.actions[i]
    }

    /// `(matched, exact)` attribute counts of entry `i` against `a`.
    pub fn match_score(&self, i: usize, a: &AttributeVector) -> (usize, usize) {
        let own = &self.actions[i];
        let mut matched = 0;
        let mut exact = 0;
        for (p, attr) in self.schema.attributes().iter().enumerate() {
            let (want, have) = (a.0[p], own.0[p]);
            if want == have {
                matched += 1;
                exact += 1;
            } else if attr.name == LOCATION
                && (attr.values[want] == WILDCARD || attr.values[have] == WILDCARD)
            {
                matched += 1;
            }
        }
        (matched, exact)
    }

    /// Picks the entry matching the most attribute values, preferring exact
    /// matches over `both`, and draws uniformly among equally good entries.
    pub fn resolve<R: Rng + ?Sized>(&self, a: &AttributeVector, rng: &mut R) -> Result<&InterventionSpec> {
        Ok(&self.entries[self.resolve_index(a, rng)?])
    }

    /// Index form of [`resolve`](Self::resolve).
    pub fn resolve_index<R: Rng + ?Sized>(&self, a: &AttributeVector, rng: &mut R) -> Result<usize> {
        if self.entries.is_empty() {
            return Err(Error::Catalog("cannot resolve against an empty catalog".into()));
        }
        self.schema.validate(a)?;
        let scores: Vec<(usize, usize)> = (0..self.entries.len()).map(|i| self.match_score(i, a)).collect();
        let best = *scores.iter().max().expect("non-empty");
        let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
        Ok(if ties.len() == 1 {
            ties[0]
        } else {
            ties[rng.random_range(0..ties.len())]
        })
    }
}

fn check_entry(schema: &AttributeSchema, e: &InterventionSpec) -> Result<AttributeVector> {
    if e.id.trim().is_empty() {
        return Err(Error::Catalog("empty intervention id".into()));
    }
    if e.duration_seconds == 0 || e.duration_seconds > MAX_DURATION_SECONDS {
        return Err(Error::Catalog(format!(
            "`{}` lasts {} s; must be 1..={MAX_DURATION_SECONDS}",
            e.id, e.duration_seconds
        )));
    }
    if e.node_texts.is_empty() {
        return Err(Error::Catalog(format!("`{}` has no dialog nodes", e.id)));
    }
    let mut values = Vec::with_capacity(schema.len());
    for attr in schema.attributes() {
        let v = e.attribute(&attr.name).expect("schema checked");
        match attr.index_of(v) {
            Some(i) => values.push(i),
            None => {
                return Err(Error::Catalog(format!(
                    "unknown {} value `{v}` in `{}`",
                    attr.name, e.id
                )))
            }
        }
    }
    Ok(AttributeVector(values))
}

impl<'de> Deserialize<'de> for Catalog {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            schema: AttributeSchema,
            entries: Vec<InterventionSpec>,
        }
        let raw = Raw::deserialize(d)?;
        Catalog::new(raw.schema, raw.entries).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn starter() -> Catalog {
        Catalog::starter()
    }

    fn entry<'a>(c: &'a Catalog, id: &str) -> &'a InterventionSpec {
        c.entries().iter().find(|e| e.id == id).unwrap()
    }

    #[test]
    fn starter_has_sixteen_entries_covering_every_value() {
        let c = starter();
        assert_eq!(c.len(), 16);
        for (p, k) in c.schema().sizes().into_iter().enumerate() {
            for v in 0..k {
                assert!((0..c.len()).any(|i| c.action_of(i).0[p] == v));
            }
        }
    }

    #[test]
    fn published_rows_load_with_their_attributes() {
        let c = starter();
        let m = entry(&c, "meditation_breath_focus");
        assert_eq!(
            (m.emotional_regulation.as_str(), m.therapy_group.as_str(), m.location.as_str()),
            ("response_modulation", "meta_cognitive", "both")
        );
        assert_eq!(m.node_texts.len(), 4);
        assert_eq!(m.node_texts[0].node, "node_id_1");
        let s = entry(&c, "scribbling_quickdraw");
        assert_eq!(
            (s.emotional_regulation.as_str(), s.therapy_group.as_str(), s.location.as_str()),
            ("attention_deployment", "meta_cognitive", "both")
        );
    }

    const HEAD: &str = "intervention_id\ttext\tnode\tintervention_type\temotional_regulation\ttherapy_group\tlocation\tduration_seconds\n";

    fn parse(body: &str) -> Result<Catalog> {
        Catalog::from_dsv(&format!("{HEAD}{body}"), AttributeSchema::intervention_default())
    }

    #[test]
    fn unknown_location_rejected_with_row() {
        let err = parse("x\thi\tnode_id_1\tswim\tresponse_modulation\tsomatic\tunderwater\t30\n").unwrap_err();
        match err {
            Error::CatalogRow { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains("underwater"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn malformed_rows_rejected() {
        let ok = "a\thi\tnode_id_1\tt\tresponse_modulation\tsomatic\tindoor\t30\n";
        assert!(parse(ok).is_ok());
        // duration over a minute
        assert!(parse("a\thi\tnode_id_1\tt\tresponse_modulation\tsomatic\tindoor\t61\n").is_err());
        // id reappears after another id
        let dup = format!("{ok}b\thi\tnode_id_1\tt\tresponse_modulation\tsomatic\tindoor\t30\n{ok}");
        assert!(matches!(parse(&dup), Err(Error::CatalogRow { row: 4, .. })));
        // inconsistent attributes within an id
        let split = format!("{ok}a\tyo\tnode_id_2\tt\tresponse_modulation\tsomatic\toutdoor\t30\n");
        assert!(parse(&split).is_err());
        // bad node id
        assert!(parse("a\thi\tstart\tt\tresponse_modulation\tsomatic\tindoor\t30\n").is_err());
        // missing column
        assert!(parse("a\thi\tnode_id_1\tt\tresponse_modulation\tsomatic\tindoor\n").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn dsv_roundtrip_is_identity() {
        let c = starter();
        let again = Catalog::from_dsv(&c.to_dsv().unwrap(), c.schema().clone()).unwrap();
        assert_eq!(again, c);
        let json: Catalog = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(json, c);
    }

    #[test]
    fn stretching_resolves_for_somatic_indoor() {
        let c = starter();
        let a = c
            .schema()
            .vector(&["response_modulation", "somatic", "indoor"])
            .unwrap();
        for seed in 0..20 {
            let e = c.resolve(&a, &mut rng_from(seed)).unwrap();
            assert_eq!(e.id, "exercise_neck_stretch");
            assert!(e.intervention_type.starts_with("exercise"));
        }
    }

    #[test]
    fn resolved_entry_has_maximal_score() {
        let c = starter();
        let mut rng = rng_from(8);
        let sizes = c.schema().sizes();
        for er in 0..sizes[0] {
            for tg in 0..sizes[1] {
                for loc in 0..sizes[2] {
                    let a = AttributeVector(vec![er, tg, loc]);
                    let got = c.resolve(&a, &mut rng).unwrap();
                    let gi = c.entries().iter().position(|e| e.id == got.id).unwrap();
                    let best = (0..c.len()).map(|i| c.match_score(i, &a)).max().unwrap();
                    assert_eq!(c.match_score(gi, &a), best);
                }
            }
        }
    }

    #[test]
    fn resolution_is_seeded() {
        let c = starter();
        let a = c
            .schema()
            .vector(&["cognitive_change", "somatic", "outdoor"])
            .unwrap();
        let draw = |s| {
            let mut rng = rng_from(s);
            (0..10)
                .map(|_| c.resolve(&a, &mut rng).unwrap().id.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }
}
