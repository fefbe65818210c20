use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::broadcast::IdealUbc;
use crate::error::SimError;
use crate::kernel::{hx, Action, Ctx, Input, Stack};
use crate::sbc::IdealSbc;

const OPEN: &[u8] = b"\x00OPEN";

/// Rejects parameters outside `delta > phi > 0` and `delta >= alpha`.
pub fn vote_gate(phi: u64, delta: u64, alpha: u64, candidates: u32) -> Result<(), SimError> {
    if phi == 0 || delta <= phi {
        return Err(SimError::Gate(format!("need delta > phi > 0, got phi = {phi}, delta = {delta}")));
    }
    if delta < alpha {
        return Err(SimError::Gate(format!("need delta >= alpha, got {delta} < {alpha}")));
    }
    if candidates == 0 || candidates > 256 {
        return Err(SimError::Gate(format!("candidate count {candidates} outside 1..=256")));
    }
    Ok(())
}

/// Ballot bytes: the candidate index, then the voter and its ballot counter
/// (both big-endian `u32`).
pub fn encode_ballot(candidate: u8, voter: u32, seq: u32) -> Vec<u8> {
    let mut b = vec![candidate];
    b.extend_from_slice(&voter.to_be_bytes());
    b.extend_from_slice(&seq.to_be_bytes());
    b
}

pub fn decode_ballot(b: &[u8]) -> Option<(u8, u32, u32)> {
    if b.len() != 9 {
        return None;
    }
    Some((b[0], u32::from_be_bytes(b[1..5].try_into().ok()?), u32::from_be_bytes(b[5..9].try_into().ok()?)))
}

/// Plurality count over `candidates` after keeping each voter's `quota` most
/// recent votes. `votes` lists `(voter, order, candidate)`.
pub fn tally(votes: &[(u32, u64, u32)], candidates: u32, quota: usize) -> Vec<u64> {
    let mut by_voter: BTreeMap<u32, Vec<(u64, u32)>> = BTreeMap::new();
    for &(v, order, c) in votes {
        if c < candidates {
            by_voter.entry(v).or_default().push((order, c));
        }
    }
    let mut res = vec![0u64; candidates as usize];
    for mut vs in by_voter.into_values() {
        vs.sort();
        for (_, c) in vs.iter().rev().take(quota) {
            res[*c as usize] += 1;
        }
    }
    res
}

fn result_output(res: &[u64]) -> Value {
    json!({ "kind": "result", "res": res })
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Cast {
    tag: String,
    vote: u32,
    voter: usize,
    cl: u64,
    bit: bool,
}

/// The voting functionality with a plurality tally and a per-voter quota.
#[derive(Clone, Debug)]
pub struct IdealVs {
    phi: u64,
    delta: u64,
    alpha: u64,
    candidates: u32,
    quota: usize,
    authority: usize,
    t_start: Option<u64>,
    cast: Vec<Cast>,
    res: Option<Vec<u64>>,
    last_round: Option<u64>,
    signalled: Vec<(usize, u64)>,
}

impl IdealVs {
    pub fn new(phi: u64, delta: u64, alpha: u64, candidates: u32, quota: usize, authority: usize) -> Self {
        Self {
            phi,
            delta,
            alpha,
            candidates,
            quota,
            authority,
            t_start: None,
            cast: Vec::new(),
            res: None,
            last_round: None,
            signalled: Vec::new(),
        }
    }

    /// `(t_cast_start, t_cast_end, t_tally)`.
    pub fn times(&self) -> Option<(u64, u64, u64)> {
        self.t_start.map(|s| (s, s + self.phi, s + self.phi + self.delta))
    }

    fn in_window(&self, cl: u64) -> bool {
        self.times().is_some_and(|(s, e, _)| s <= cl && cl < e)
    }

    pub fn init(&mut self, ctx: &mut Ctx, from: usize) -> bool {
        if from != self.authority || self.t_start.is_some() {
            return false;
        }
        self.t_start = Some(ctx.round());
        ctx.leak("F_VS", json!({ "event": "init", "party": from }));
        true
    }

    pub fn vote(&mut self, ctx: &mut Ctx, voter: usize, vote: u32) -> Option<String> {
        let cl = ctx.round();
        if !self.in_window(cl) || vote >= self.candidates {
            return None;
        }
        let corrupted = ctx.is_corrupted(voter);
        let tag = ctx.tag();
        self.cast.push(Cast {
            tag: tag.clone(),
            vote,
            voter,
            cl,
            bit: corrupted,
        });
        let mut leak = json!({ "event": "vote", "tag": tag, "party": voter });
        if corrupted {
            leak["vote"] = json!(vote);
        }
        ctx.leak("F_VS", leak);
        Some(tag)
    }

    pub fn allow(&mut self, ctx: &mut Ctx, tag: &str, vote: u32) -> bool {
        if !self.in_window(ctx.round()) || vote >= self.candidates {
            return false;
        }
        let Some(c) = self.cast.iter_mut().find(|c| c.tag == tag) else {
            return false;
        };
        if c.bit || !ctx.is_corrupted(c.voter) {
            return false;
        }
        c.vote = vote;
        c.bit = true;
        true
    }

    /// Marks the ballots of still-honest voters as final. Called when the
    /// casting period closes.
    pub fn seal_honest(&mut self, ctx: &Ctx) {
        for c in self.cast.iter_mut().filter(|c| !ctx.is_corrupted(c.voter)) {
            c.bit = true;
        }
    }

    pub fn vote_of(&self, tag: &str) -> Option<u32> {
        self.cast.iter().find(|c| c.tag == tag).map(|c| c.vote)
    }

    pub fn advance_clock(&mut self, ctx: &mut Ctx, from: usize) -> Option<Vec<u64>> {
        if ctx.is_corrupted(from) {
            return None;
        }
        let cl = ctx.round();
        if self.signalled.contains(&(from, cl)) {
            return None;
        }
        self.signalled.retain(|(_, r)| *r == cl);
        self.signalled.push((from, cl));
        let (_, _, t_tally) = self.times()?;
        if self.last_round != Some(cl) {
            self.last_round = Some(cl);
            if cl + self.alpha == t_tally && self.res.is_none() {
                for c in self.cast.iter_mut().filter(|c| !ctx.is_corrupted(c.voter)) {
                    c.bit = true;
                }
                let votes: Vec<(u32, u64, u32)> = self
                    .cast
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.bit)
                    .map(|(i, c)| (c.voter as u32, i as u64, c.vote))
                    .collect();
                let res = tally(&votes, self.candidates, self.quota);
                ctx.leak("F_VS", json!({ "event": "result", "res": res }));
                self.res = Some(res);
            }
        }
        if cl == t_tally {
            return self.res.clone();
        }
        None
    }
}

/// Whether the authority's opening notice has reached the voters, or is
/// waiting for the authority's clock signal.
#[derive(Clone, Debug)]
struct Notice {
    open: bool,
    pending: bool,
}

/// The voting functionality behind a simulator that delivers the opening
/// notice when the protocol would.
pub struct VoteIdealStack {
    f: IdealVs,
    notice: Notice,
    tags: Vec<Vec<Option<String>>>,
    settled: Vec<Vec<bool>>,
    adv: Vec<(usize, Option<usize>, u32)>,
    overrides: BTreeMap<(usize, usize), Option<u32>>,
    leaked: bool,
    latency: u64,
}

impl VoteIdealStack {
    pub fn new(n: usize, phi: u64, delta: u64, alpha: u64, candidates: u32, quota: usize, authority: usize) -> Self {
        Self {
            f: IdealVs::new(phi, delta, alpha, candidates, quota, authority),
            notice: Notice { open: false, pending: false },
            tags: vec![Vec::new(); n],
            settled: vec![Vec::new(); n],
            adv: Vec::new(),
            overrides: BTreeMap::new(),
            leaked: false,
            latency: phi + delta + 1,
        }
    }
}

impl Stack for VoteIdealStack {
    fn functionalities(&self) -> Vec<String> {
        vec!["F_VS".into()]
    }

    fn latency(&self) -> u64 {
        self.latency
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        match input {
            Input::Init => {
                if ctx.is_corrupted(party) {
                    ctx.warn(Some(party), "initialization by a corrupted authority is not supported");
                } else if self.f.init(ctx, party) {
                    self.notice.pending = true;
                } else {
                    ctx.party_event(party, "init_ignored", json!({}));
                }
            }
            Input::Vote { candidate } => {
                let nth = self.tags[party].len();
                self.tags[party].push(None);
                self.settled[party].push(false);
                if ctx.is_corrupted(party) {
                    self.adv.push((party, Some(nth), *candidate));
                } else if !self.notice.open {
                    ctx.party_event(party, "vote_not_open", json!({ "nth": nth }));
                } else {
                    self.tags[party][nth] = self.f.vote(ctx, party, *candidate);
                }
            }
            other => ctx.warn(Some(party), &format!("input `{}` not understood by this stack", other.name())),
        }
        Ok(())
    }

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError> {
        if let Some(res) = self.f.advance_clock(ctx, party) {
            ctx.output(party, result_output(&res));
        }
        if party == self.f.authority && std::mem::take(&mut self.notice.pending) {
            self.notice.open = true;
        }
        Ok(())
    }

    fn corrupt(&mut self, _ctx: &mut Ctx, party: usize) -> Value {
        if party == self.f.authority && self.notice.pending {
            self.notice.pending = false;
        }
        json!({ "votes": self.tags[party].iter().flatten().filter_map(|t| self.f.vote_of(t)).collect::<Vec<_>>() })
    }

    fn directive(&mut self, ctx: &mut Ctx, action: &Action) -> Result<(), SimError> {
        let p = action.party();
        if !ctx.is_corrupted(p) {
            ctx.warn(Some(p), "directive for an honest party ignored");
            return Ok(());
        }
        match action {
            Action::Substitute { nth, msg, .. } => {
                self.overrides.insert((p, *nth), msg.0.first().map(|&b| b as u32));
            }
            Action::Drop { nth, .. } => {
                self.overrides.insert((p, *nth), None);
            }
            Action::Inject { msg, .. } | Action::InjectRaw { payload: msg, .. } => {
                if let Some((c, _, _)) = decode_ballot(&msg.0) {
                    self.adv.push((p, None, c as u32));
                }
            }
            Action::Replay { .. } | Action::Equivocate { .. } => {}
        }
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        for p in ctx.corrupted().clone() {
            for k in 0..self.tags[p].len() {
                let Some(tag) = self.tags[p][k].clone() else { continue };
                if self.settled[p][k] {
                    continue;
                }
                self.settled[p][k] = true;
                let vote = match self.overrides.remove(&(p, k)) {
                    Some(v) => v,
                    None => self.f.vote_of(&tag),
                };
                if let Some(v) = vote {
                    self.f.allow(ctx, &tag, v);
                }
            }
        }
        for (p, nth, c) in std::mem::take(&mut self.adv) {
            let c = match nth.and_then(|k| self.overrides.remove(&(p, k))) {
                Some(None) => continue,
                Some(Some(x)) => x,
                None => c,
            };
            self.f.vote(ctx, p, c);
        }
        if self.f.times().is_some_and(|(_, end, _)| ctx.round() + 1 == end) {
            self.f.seal_honest(ctx);
        }
        if !self.leaked {
            if let Some(res) = &self.f.res {
                self.leaked = true;
                ctx.adversary_event("result", json!({ "res": res }));
            }
        }
        Ok(())
    }
}

/// Plain-ballot voting over simultaneous broadcast: the authority opens the
/// period with an empty marker broadcast and announces it over unfair
/// broadcast; voters broadcast tagged ballots and tally the batch locally.
pub struct VoteProtocol {
    sbc: IdealSbc,
    ubc: IdealUbc,
    candidates: u32,
    quota: usize,
    authority: usize,
    open: Vec<bool>,
    tags: Vec<Vec<Option<String>>>,
    settled: Vec<Vec<bool>>,
    adv: Vec<(usize, Option<usize>, Vec<u8>)>,
    overrides: BTreeMap<(usize, usize), Option<u8>>,
    leaked: bool,
    delta: u64,
    alpha: u64,
    latency: u64,
}

impl VoteProtocol {
    pub fn new(n: usize, phi: u64, delta: u64, alpha: u64, candidates: u32, quota: usize, authority: usize) -> Self {
        Self {
            sbc: IdealSbc::new(phi, delta, alpha),
            ubc: IdealUbc::new(),
            candidates,
            quota,
            authority,
            open: vec![false; n],
            tags: vec![Vec::new(); n],
            settled: vec![Vec::new(); n],
            adv: Vec::new(),
            overrides: BTreeMap::new(),
            leaked: false,
            delta,
            alpha,
            latency: phi + delta + 1,
        }
    }

    fn tally_batch(&self, batch: &[Vec<u8>]) -> Vec<u64> {
        let votes: Vec<(u32, u64, u32)> = batch
            .iter()
            .filter_map(|b| decode_ballot(b))
            .map(|(c, v, seq)| (v, seq as u64, c as u32))
            .collect();
        tally(&votes, self.candidates, self.quota)
    }

    fn ballot_of(&self, tag: &str) -> Option<Vec<u8>> {
        self.sbc.tuples().iter().find(|t| t.tag == tag).map(|t| t.msg.clone())
    }
}

impl Stack for VoteProtocol {
    fn functionalities(&self) -> Vec<String> {
        vec!["F_UBC".into(), "F_SBC".into()]
    }

    fn latency(&self) -> u64 {
        self.latency
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        match input {
            Input::Init => {
                if ctx.is_corrupted(party) {
                    ctx.warn(Some(party), "initialization by a corrupted authority is not supported");
                } else if party == self.authority && self.sbc.window().is_none() {
                    self.sbc.broadcast(ctx, party, b"");
                    let _ = self.ubc.broadcast(ctx, party, OPEN);
                } else {
                    ctx.party_event(party, "init_ignored", json!({}));
                }
            }
            Input::Vote { candidate } => {
                let nth = self.tags[party].len();
                self.tags[party].push(None);
                self.settled[party].push(false);
                let ballot = encode_ballot(*candidate as u8, party as u32, nth as u32);
                if ctx.is_corrupted(party) {
                    self.adv.push((party, Some(nth), ballot));
                } else if !self.open[party] {
                    ctx.party_event(party, "vote_not_open", json!({ "nth": nth }));
                } else if *candidate >= self.candidates {
                    ctx.party_event(party, "vote_invalid", json!({ "nth": nth }));
                } else {
                    self.tags[party][nth] = self.sbc.broadcast(ctx, party, &ballot);
                }
            }
            other => ctx.warn(Some(party), &format!("input `{}` not understood by this stack", other.name())),
        }
        Ok(())
    }

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError> {
        if let Some(batch) = self.sbc.advance_clock(ctx, party) {
            ctx.party_event(party, "vote_batch", json!({ "ballots": batch.iter().map(|b| hx(b)).collect::<Vec<_>>() }));
            let res = self.tally_batch(&batch);
            ctx.output(party, result_output(&res));
        }
        for m in self.ubc.advance_clock(ctx, party) {
            if m == OPEN {
                for p in ctx.honest() {
                    self.open[p] = true;
                }
            }
        }
        Ok(())
    }

    fn corrupt(&mut self, _ctx: &mut Ctx, party: usize) -> Value {
        let ballots: Vec<String> = self.tags[party].iter().flatten().filter_map(|t| self.ballot_of(t)).map(|b| hx(&b)).collect();
        json!({ "ballots": ballots })
    }

    fn directive(&mut self, ctx: &mut Ctx, action: &Action) -> Result<(), SimError> {
        let p = action.party();
        if !ctx.is_corrupted(p) {
            ctx.warn(Some(p), "directive for an honest party ignored");
            return Ok(());
        }
        match action {
            Action::Substitute { nth, msg, .. } => {
                self.overrides.insert((p, *nth), msg.0.first().copied());
            }
            Action::Drop { nth, .. } => {
                self.overrides.insert((p, *nth), None);
            }
            Action::Inject { msg, .. } | Action::InjectRaw { payload: msg, .. } => self.adv.push((p, None, msg.0.clone())),
            Action::Replay { .. } | Action::Equivocate { .. } => {
                ctx.warn(Some(p), "directive not expressible for the vote")
            }
        }
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        for p in ctx.corrupted().clone() {
            for k in 0..self.tags[p].len() {
                let Some(tag) = self.tags[p][k].clone() else { continue };
                if self.settled[p][k] {
                    continue;
                }
                self.settled[p][k] = true;
                let Some(orig) = self.ballot_of(&tag) else { continue };
                let ballot = match self.overrides.remove(&(p, k)) {
                    Some(None) => continue,
                    Some(Some(c)) if (c as u32) < self.candidates => [&[c], &orig[1..]].concat(),
                    Some(Some(_)) => continue,
                    None => orig,
                };
                self.sbc.allow(ctx, &tag, &ballot);
            }
        }
        let queued = std::mem::take(&mut self.adv);
        if self.sbc.window().is_some() {
            for (p, nth, ballot) in queued {
                let ballot = match nth.and_then(|k| self.overrides.remove(&(p, k))) {
                    Some(None) => continue,
                    Some(Some(c)) => [&[c], &ballot[1..]].concat(),
                    None => ballot,
                };
                if decode_ballot(&ballot).is_some_and(|(c, _, _)| (c as u32) < self.candidates) {
                    self.sbc.broadcast(ctx, p, &ballot);
                }
            }
        }
        if !self.leaked {
            if let Some((_, t_end)) = self.sbc.window() {
                let batch: Vec<Vec<u8>> = self.sbc.tuples().iter().filter(|t| t.bit).map(|t| t.msg.clone()).collect();
                if ctx.round() + self.alpha >= t_end + self.delta {
                    self.leaked = true;
                    let res = self.tally_batch(&batch);
                    ctx.adversary_event("result", json!({ "res": res }));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::OracleMode;
    use crate::kernel::{run_stack, ScenarioScript, Trace};

    fn results(tr: &Trace) -> Vec<(u64, String, Value)> {
        tr.with_label("output").map(|e| (e.round, e.actor.to_string(), e.payload["res"].clone())).collect()
    }

    fn both(s: &ScenarioScript, quota: usize) -> (Trace, Trace) {
        let mut ctx = Ctx::new("t", s.n, s.seed, 1, OracleMode::Concrete);
        let real = run_stack(s, &mut VoteProtocol::new(s.n, 2, 3, 1, 3, quota, 0), &mut ctx, 7).unwrap();
        let mut ctx = Ctx::new("t", s.n, s.seed, 1, OracleMode::Concrete);
        let ideal = run_stack(s, &mut VoteIdealStack::new(s.n, 2, 3, 1, 3, quota, 0), &mut ctx, 7).unwrap();
        (real, ideal)
    }

    #[test]
    fn quota_keeps_most_recent() {
        assert_eq!(tally(&[(0, 0, 0), (0, 1, 2), (1, 0, 1)], 3, 1), vec![0, 1, 1]);
        assert_eq!(tally(&[(0, 0, 0), (0, 1, 2), (1, 0, 1)], 3, 2), vec![1, 1, 1]);
        assert_eq!(tally(&[], 2, 1), vec![0, 0]);
        assert_eq!(tally(&[(0, 0, 7)], 2, 1), vec![0, 0]);
    }

    #[test]
    fn ballot_roundtrip() {
        assert_eq!(decode_ballot(&encode_ballot(2, 5, 9)), Some((2, 5, 9)));
        assert_eq!(decode_ballot(b"\x01"), None);
    }

    #[test]
    fn double_vote_counts_once_and_window_is_enforced() {
        let s = ScenarioScript::new("vote", 3, 3)
            .act(0, 0, Input::Init)
            .act(0, 1, Input::Vote { candidate: 2 })
            .act(1, 0, Input::Vote { candidate: 0 })
            .act(1, 1, Input::Vote { candidate: 0 })
            .act(1, 1, Input::Vote { candidate: 1 })
            .act(2, 2, Input::Vote { candidate: 2 });
        let (real, ideal) = both(&s, 1);
        let r = results(&real);
        assert_eq!(r.len(), 3);
        for (round, _, res) in &r {
            assert_eq!(*round, 5);
            assert_eq!(res, &json!([1, 1, 0]));
        }
        assert_eq!(r, results(&ideal));
        assert_eq!(real.with_label("vote_not_open").count(), 1);
    }
}
