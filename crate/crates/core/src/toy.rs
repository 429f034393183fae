//! The three-entertainer toy catalogue used throughout the documentation
//! and tests.
//!
//! `i1` is a DJ available for every event, `i2` a band for weddings and
//! corporate events and `i3` a magician (an "entertainer") for birthdays and
//! kids' parties. `Q1` asks for the type of entertainment and `Q2` for the
//! type of event; both are latent clones of properties `C1` and `C2`.

/// Property-free toy model: `Q1` untagged, `Q2` elicited with the uniform
/// joint strategy.
pub const TOY_CATALOG: &str = r#"{
  "items": [
    {"id": "i1", "label": "DJ available for all type of events",
     "properties": {"C1": ["dj"], "C2": ["wedding", "corporate", "birthday", "kids_party"]}},
    {"id": "i2", "label": "Band available for weddings and corporate events",
     "properties": {"C1": ["band"], "C2": ["wedding", "corporate"]}},
    {"id": "i3", "label": "Magician available for birthdays and parties for kids",
     "properties": {"C1": ["entertainer"], "C2": ["birthday", "kids_party"]}}
  ],
  "questions": [
    {"id": "Q1", "prompt": "Which entertainment are you looking for?",
     "answers": [{"id": "dj", "label": "DJ"}, {"id": "band", "label": "Band"},
                 {"id": "musician", "label": "Musician"}, {"id": "entertainer", "label": "Entertainer"}],
     "properties": ["C1"]},
    {"id": "Q2", "prompt": "Which event are you organizing?",
     "answers": [{"id": "wedding", "label": "Wedding"}, {"id": "corporate", "label": "Corporate event"},
                 {"id": "birthday", "label": "Birthday"}, {"id": "kids_party", "label": "Party for kids"}],
     "properties": ["C2"], "strategy": "ujs"}
  ],
  "properties": [
    {"id": "C1", "clone_of": "Q1"},
    {"id": "C2", "clone_of": "Q2"}
  ]
}"#;

/// Property-layer toy model: entertainment type depends on the event type,
/// with expert rows for `P(C1 | C2)` (before feasibility revision) and the
/// event marginal `(2/3, 1/9, 1/9, 1/9)`.
pub const TOY_PROPERTY_CATALOG: &str = r#"{
  "items": [
    {"id": "i1", "label": "DJ available for all type of events",
     "properties": {"C1": ["dj"], "C2": ["wedding", "corporate", "birthday", "kids_party"]}},
    {"id": "i2", "label": "Band available for weddings and corporate events",
     "properties": {"C1": ["band"], "C2": ["wedding", "corporate"]}},
    {"id": "i3", "label": "Magician available for birthdays and parties for kids",
     "properties": {"C1": ["entertainer"], "C2": ["birthday", "kids_party"]}}
  ],
  "questions": [
    {"id": "Q1", "prompt": "Which entertainment are you looking for?",
     "answers": [{"id": "dj", "label": "DJ"}, {"id": "band", "label": "Band"},
                 {"id": "musician", "label": "Musician"}, {"id": "entertainer", "label": "Entertainer"}],
     "properties": ["C1"]},
    {"id": "Q2", "prompt": "Which event are you organizing?",
     "answers": [{"id": "wedding", "label": "Wedding"}, {"id": "corporate", "label": "Corporate event"},
                 {"id": "birthday", "label": "Birthday"}, {"id": "kids_party", "label": "Party for kids"}],
     "properties": ["C2"]}
  ],
  "properties": [
    {"id": "C1", "clone_of": "Q1", "parents": ["C2"]},
    {"id": "C2", "clone_of": "Q2"}
  ],
  "expert_tables": {
    "property_tables": [
      {"property": "C2", "rows": [{"probs": ["2/3", "1/9", "1/9", "1/9"]}]},
      {"property": "C1", "rows": [
        {"given": {"C2": "wedding"},    "probs": ["1/3", "1/6", "1/3", "1/6"]},
        {"given": {"C2": "corporate"},  "probs": ["1/6", "1/3", "1/6", "1/3"]},
        {"given": {"C2": "birthday"},   "probs": ["1/3", "1/6", "1/6", "1/3"]},
        {"given": {"C2": "kids_party"}, "probs": ["1/3", "1/3", "1/6", "1/6"]}
      ]}
    ]
  }
}"#;
