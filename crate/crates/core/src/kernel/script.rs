use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::crypto::OracleMode;

/// Raw message bytes. Serialized as plain text when printable UTF-8,
/// otherwise as `hex:` followed by lowercase hex.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bytes(pub Vec<u8>);

impl Bytes {
    pub fn from_text(s: &str) -> Self {
        Self(s.as_bytes().to_vec())
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s.strip_prefix("hex:") {
            Some(h) => hex::decode(h).map(Bytes).map_err(|e| format!("bad hex `{s}`: {e}")),
            None => Ok(Bytes::from_text(s)),
        }
    }

    pub fn render(&self) -> String {
        match std::str::from_utf8(&self.0) {
            Ok(s) if !s.starts_with("hex:") && s.chars().all(|c| !c.is_control()) => s.to_string(),
            _ => format!("hex:{}", hex::encode(&self.0)),
        }
    }
}

impl Serialize for Bytes {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for Bytes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Bytes;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a text string or a `hex:` string")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Bytes, E> {
                Bytes::parse(v).map_err(E::custom)
            }
        }
        d.deserialize_str(V)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_plus_one_rounds: Option<u64>,
    /// Delay of the time-lock layer under simultaneous broadcast.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tle_delay: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quota: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authority: Option<usize>,
    /// Extra rounds simulated after the last scripted event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drain: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CipherRef {
    /// The `nth` ciphertext (in encryption order) of `party`, once a
    /// Retrieve has revealed it to that party's environment.
    Retrieved { party: usize, nth: usize },
    Raw(Bytes),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Input {
    Broadcast { msg: Bytes },
    AdvanceClock,
    Enc { msg: Bytes, tau: i64 },
    Retrieve,
    Dec { cipher: CipherRef, tau: i64 },
    Urs,
    Init,
    Vote { candidate: u32 },
}

impl Input {
    pub fn name(&self) -> &'static str {
        match self {
            Input::Broadcast { .. } => "broadcast",
            Input::AdvanceClock => "advance_clock",
            Input::Enc { .. } => "enc",
            Input::Retrieve => "retrieve",
            Input::Dec { .. } => "dec",
            Input::Urs => "urs",
            Input::Init => "init",
            Input::Vote { .. } => "vote",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Activation {
    pub round: u64,
    pub party: usize,
    pub input: Input,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionEvent {
    pub round: u64,
    #[serde(default)]
    pub step: usize,
    pub party: usize,
}

/// Scripted adversary behaviour for corrupted parties. `nth` counts the
/// party's broadcast-like inputs from zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Substitute { party: usize, nth: usize, msg: Bytes },
    Drop { party: usize, nth: usize },
    Inject { party: usize, msg: Bytes },
    InjectRaw { party: usize, payload: Bytes },
    Replay { party: usize, source: usize, nth: usize },
    Equivocate { party: usize, msgs: Vec<Bytes>, split: Vec<usize> },
}

impl Action {
    pub fn party(&self) -> usize {
        match self {
            Action::Substitute { party, .. }
            | Action::Drop { party, .. }
            | Action::Inject { party, .. }
            | Action::InjectRaw { party, .. }
            | Action::Replay { party, .. }
            | Action::Equivocate { party, .. } => *party,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Directive {
    pub round: u64,
    #[serde(default)]
    pub step: usize,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub seed: u64,
    pub n: usize,
    pub stack: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub oracle_mode: OracleMode,
    #[serde(default)]
    pub corruptions: Vec<CorruptionEvent>,
    #[serde(default)]
    pub activations: Vec<Activation>,
    #[serde(default)]
    pub adversary: Vec<Directive>,
}

impl ScenarioScript {
    pub fn new(stack: &str, n: usize, seed: u64) -> Self {
        Self {
            name: String::new(),
            description: String::new(),
            seed,
            n,
            stack: stack.to_string(),
            params: Params::default(),
            oracle_mode: OracleMode::Concrete,
            corruptions: Vec::new(),
            activations: Vec::new(),
            adversary: Vec::new(),
        }
    }

    pub fn act(mut self, round: u64, party: usize, input: Input) -> Self {
        self.activations.push(Activation { round, party, input });
        self
    }

    pub fn corrupt_at(mut self, round: u64, step: usize, party: usize) -> Self {
        self.corruptions.push(CorruptionEvent { round, step, party });
        self
    }

    pub fn direct(mut self, round: u64, step: usize, action: Action) -> Self {
        self.adversary.push(Directive { round, step, action });
        self
    }

    /// Latest round mentioned anywhere in the script.
    pub fn last_round(&self) -> u64 {
        let a = self.activations.iter().map(|a| a.round);
        let c = self.corruptions.iter().map(|c| c.round);
        let d = self.adversary.iter().map(|d| d.round);
        a.chain(c).chain(d).max().unwrap_or(0)
    }

    /// Structural checks that do not depend on the stack.
    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 {
            return Err("n must be at least 1".into());
        }
        let mut prev = 0;
        for (i, a) in self.activations.iter().enumerate() {
            if a.round < prev {
                return Err(format!("activation {i} goes back to round {}", a.round));
            }
            prev = a.round;
            if a.party >= self.n {
                return Err(format!("activation {i} names party {} but n = {}", a.party, self.n));
            }
            if let Input::Dec {
                cipher: CipherRef::Retrieved { party, .. },
                ..
            } = &a.input
            {
                if *party >= self.n {
                    return Err(format!("activation {i} refers to ciphertext of unknown party {party}"));
                }
            }
        }
        for (i, c) in self.corruptions.iter().enumerate() {
            if c.party >= self.n {
                return Err(format!("corruption {i} names party {} but n = {}", c.party, self.n));
            }
        }
        for (i, d) in self.adversary.iter().enumerate() {
            if d.action.party() >= self.n {
                return Err(format!("directive {i} names party {} but n = {}", d.action.party(), self.n));
            }
            match &d.action {
                Action::Replay { source, .. } if *source >= self.n => {
                    return Err(format!("directive {i} replays unknown party {source}"));
                }
                Action::Equivocate { split, msgs, .. } if msgs.len() != 2 || split.iter().any(|p| *p >= self.n) => {
                    return Err(format!("directive {i}: equivocation needs two messages and known parties"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
