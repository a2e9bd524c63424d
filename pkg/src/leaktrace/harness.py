"""Scripted multi-party scenarios and adversary experiments.

A scenario is a JSON object::

    {
      "name": "osn",
      "documents": {"photo": {"owner": "user", "width": 256, "height": 256}},
      "parties": [{"id": "user", "role": "owner"}, {"id": "osn", "role": "consumer"}, ...],
      "steps": [
        {"op": "transfer", "from": "user", "to": "osn", "protocol": "trusted", "document": "photo"},
        {"op": "transfer", "from": "osn", "to": "app", "protocol": "untrusted", "parts": 16},
        {"op": "compose", "party": "c1", "inputs": ["A", "B"], "output": "AB"}
      ],
      "leak": {"party": "app", "document": "photo", "version": "held"},
      "audits": [{"owner": "user", "component": "photo"}],
      "expected_verdict": "app"
    }

``protocol`` is ``trusted`` (owner senders only), ``untrusted`` or ``plain``
(owner to owner, no fingerprint).  ``document`` may be omitted when the sender
holds exactly one.  Leak ``version`` is ``held`` (the party's copy), ``marked``
(D' of the party's last fingerprinted send) or ``guess`` (a join of randomly
chosen part versions from that send).  ``audits`` defaults to one audit by the
owner of the leaked document; ``component`` selects a slice of a composed leak.
The harness alone knows who leaked; the auditor only sees the responses.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np
from scipy import stats

from .audit import HonestResponder, Lineage, TolerancePolicy, audit_composed, generate_lineage
from .crypto import TEST, GroupParams, SeededRandomness
from .document import Document, concat, join, random_document, read_pgm, split, SplitGeometry
from .protocol import (
    Party,
    ProtocolAbort,
    Role,
    SenderCheat,
    SenderRecord,
    TransferResult,
    trusted_transfer,
    untrusted_transfer,
)
from .watermark import (
    DEFAULT_SETTINGS,
    WatermarkDescriptor,
    WatermarkSettings,
    classify,
    correlation,
    embed,
    part_scores,
    wm_keygen,
)


class ScenarioError(ValueError):
    pass


def _seed_bytes(seed: int | str, *labels: str) -> bytes:
    return hashlib.sha256("/".join([str(seed), *labels]).encode()).digest()


def _np_rng(seed: int | str, *labels: str) -> np.random.Generator:
    return np.random.default_rng(int.from_bytes(_seed_bytes(seed, *labels)[:8], "big"))


# --- scenario execution ---------------------------------------------------

@dataclass
class World:
    """Parties plus the harness-side bookkeeping of who holds which version."""

    parties: dict[str, Party]
    held: dict[str, dict[str, Document]] = field(default_factory=dict)
    sends: dict[tuple[str, str], TransferResult] = field(default_factory=dict)  # (party, doc label)
    regions: dict[str, dict[str, tuple[int, int, int, int]]] = field(default_factory=dict)  # composite label
    owners: dict[str, str] = field(default_factory=dict)
    transcripts: list = field(default_factory=list)

    def holding(self, party: str, label: str | None) -> tuple[str, Document]:
        docs = self.held.get(party, {})
        if label is None:
            if len(docs) != 1:
                raise ScenarioError(f"{party} holds {len(docs)} documents; name one")
            label = next(iter(docs))
        if label not in docs:
            raise ScenarioError(f"{party} does not hold {label!r}")
        return label, docs[label]


@dataclass
class ScenarioResult:
    name: str
    expected: str | None
    lineages: list[Lineage]
    abort: str | None = None

    @property
    def verdicts(self) -> list[str]:
        return [lin.verdict.id for lin in self.lineages]

    @property
    def ok(self) -> bool:
        if self.abort is not None:
            return self.expected == "abort"
        return bool(self.lineages) and all(v == self.expected for v in self.verdicts)

    def to_dict(self) -> dict:
        return {"name": self.name, "expected_verdict": self.expected, "verdicts": self.verdicts,
                "ok": self.ok, "abort": self.abort, "lineages": [lin.to_dict() for lin in self.lineages]}


def _check_scenario(s: dict) -> None:
    ids = [p["id"] for p in s.get("parties", [])]
    if len(set(ids)) != len(ids):
        raise ScenarioError("party ids must be unique")
    roles = {p["id"]: p.get("role", "consumer") for p in s["parties"]}
    for step in _steps(s):
        if step.get("op", "transfer") != "transfer":
            continue
        a, b, proto = step["from"], step["to"], step.get("protocol", "untrusted")
        if a not in roles or b not in roles:
            raise ScenarioError(f"unknown party in step {step}")
        if proto == "plain" and not (roles[a] == roles[b] == "owner"):
            raise ScenarioError("unfingerprinted transfers are only allowed between owners")
        if proto == "trusted" and roles[a] != "owner":
            raise ScenarioError("only owners may use the trusted protocol")
        if proto not in ("plain", "trusted", "untrusted"):
            raise ScenarioError(f"unknown protocol {proto!r}")
    # transfer graph must be acyclic
    graph: dict[str, set[str]] = {}
    for step in _steps(s):
        if step.get("op", "transfer") == "transfer":
            graph.setdefault(step["from"], set()).add(step["to"])
    state: dict[str, int] = {}

    def visit(u):
        state[u] = 1
        for v in graph.get(u, ()):
            if state.get(v) == 1 or (v not in state and visit(v)):
                return True
        state[u] = 2
        return False

    if any(u not in state and visit(u) for u in list(graph)):
        raise ScenarioError("transfer graph has a cycle")


def _steps(s: dict) -> list[dict]:
    return list(s.get("steps", s.get("edges", [])))


def build_world(s: dict, seed: int | str = 0, group: GroupParams = TEST,
                settings: WatermarkSettings = DEFAULT_SETTINGS, base: Path | None = None) -> World:
    """Create parties and owner documents, then run every step."""
    _check_scenario(s)
    rand = SeededRandomness(_seed_bytes(seed, "crypto"))
    parties = {p["id"]: Party(p["id"], Role(p.get("role", "consumer")), rand.child(f"party/{p['id']}"))
               for p in s["parties"]}
    world = World(parties)
    docs = s.get("documents") or {"doc": {"owner": next(p for p in parties.values() if p.ident.trusted).name}}
    for label, info in docs.items():
        if "path" in info:
            path = Path(info["path"])
            doc = read_pgm(path if path.is_absolute() or base is None else base / path)
        else:
            doc = random_document(_np_rng(seed, "doc", label), info.get("width", 256), info.get("height", 256))
        world.held.setdefault(info["owner"], {})[label] = doc
        world.owners[label] = info["owner"]
        parties[info["owner"]].holding = doc

    for k, step in enumerate(_steps(s)):
        op = step.get("op", "transfer")
        if op == "compose":
            _compose(world, step)
            continue
        label, doc = world.holding(step["from"], step.get("document"))
        sender, recipient = parties[step["from"]], parties[step["to"]]
        proto = step.get("protocol", "untrusted")
        step_rand = rand.child(f"step/{k}")
        if proto == "plain":
            res = None
            received = doc
        elif proto == "trusted":
            res = trusted_transfer(sender, recipient, doc, settings=settings, rng=step_rand)
            received = res.document
        else:
            res = untrusted_transfer(sender, recipient, step.get("parts", 16), document=doc, params=group,
                                     settings=settings, rng=step_rand)
            received = res.document
        if res is not None:
            world.sends[(sender.name, label)] = res
            world.transcripts.append(res.transcript)
        world.held.setdefault(recipient.name, {})[label] = received
    return world


def _compose(world: World, step: dict) -> None:
    party, out = step["party"], step["output"]
    docs = [world.holding(party, lbl)[1] for lbl in step["inputs"]]
    composed, regions = concat(docs)
    world.held[party][out] = composed
    world.regions[out] = dict(zip(step["inputs"], regions))
    world.owners[out] = party


def _leaked(world: World, leak: dict, seed) -> tuple[str, Document]:
    party = leak["party"]
    label, held = world.holding(party, leak.get("document"))
    version = leak.get("version", "held")
    if version == "held":
        return label, held
    res = world.sends.get((party, label))
    if res is None or res.marked is None:
        raise ScenarioError(f"{party} never fingerprinted {label!r}")
    if version == "marked":
        return label, res.marked
    if version == "guess":
        rng = _np_rng(seed, "guess")
        parts = [pair[int(rng.integers(2))] for pair in res.versions]
        return label, join(parts, res.sender_record.geometry)
    raise ScenarioError(f"unknown leak version {version!r}")


def run_scenario(s: dict, seed: int | str = 0, group: GroupParams = TEST,
                 settings: WatermarkSettings = DEFAULT_SETTINGS, policy: TolerancePolicy | None = None,
                 base: Path | None = None) -> ScenarioResult:
    """Execute transfers, perform the leak and audit it; aborts become outcomes."""
    name = s.get("name", "scenario")
    policy = policy or TolerancePolicy(**s.get("policy", {}))
    try:
        world = build_world(s, seed, group, settings, base)
    except ProtocolAbort as exc:
        return ScenarioResult(name, s.get("expected_verdict"), [], abort=str(exc))
    label, leaked = _leaked(world, s["leak"], seed)
    responder = HonestResponder(world.parties, settings)
    audits = s.get("audits") or [{"owner": world.owners[label]}]
    lineages = []
    for a in audits:
        comp = a.get("component")
        if comp is None:
            lineages.append(generate_lineage(leaked, a["owner"], responder, policy, settings))
        else:
            region = world.regions.get(label, {}).get(comp)
            if region is None:
                raise ScenarioError(f"leaked document has no component {comp!r}")
            lineages.append(audit_composed(leaked, region, a["owner"], responder, policy, settings))
    return ScenarioResult(name, s.get("expected_verdict"), lineages)


def load_scenario(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


# --- built-in scenarios ---------------------------------------------------

def outsourcing_scenario(size: int = 256, parts: int = 16, leaker: str = "companyB") -> dict:
    chain = ["owner", "companyA", "companyB", "companyC"]
    return {
        "name": "outsourcing",
        "documents": {"records": {"owner": "owner", "width": size, "height": size}},
        "parties": [{"id": "owner", "role": "owner"}] + [{"id": c, "role": "consumer"} for c in chain[1:]],
        "steps": [{"op": "transfer", "from": a, "to": b, "protocol": "untrusted", "parts": parts}
                  for a, b in zip(chain, chain[1:])],
        "leak": {"party": leaker, "version": "held"},
        "expected_verdict": leaker,
    }


def osn_scenario(size: int = 256, parts: int = 16) -> dict:
    return {
        "name": "osn",
        "documents": {"photo": {"owner": "user", "width": size, "height": size}},
        "parties": [{"id": "user", "role": "owner"}, {"id": "osn", "role": "consumer"},
                    {"id": "app", "role": "consumer"}],
        "steps": [{"op": "transfer", "from": "user", "to": "osn", "protocol": "trusted"},
                  {"op": "transfer", "from": "osn", "to": "app", "protocol": "untrusted", "parts": parts}],
        "leak": {"party": "app", "version": "held"},
        "expected_verdict": "app",
    }


def owner_leak_scenario(size: int = 256) -> dict:
    return {
        "name": "owner-leak",
        "documents": {"doc": {"owner": "owner", "width": size, "height": size}},
        "parties": [{"id": "owner", "role": "owner"}, {"id": "c1", "role": "consumer"}],
        "steps": [{"op": "transfer", "from": "owner", "to": "c1", "protocol": "trusted"}],
        "leak": {"party": "owner", "version": "held"},
        "expected_verdict": "owner",
    }


def composition_scenario(size: int = 256, parts: int = 16) -> dict:
    return {
        "name": "composition",
        "documents": {"A": {"owner": "ownerA", "width": size, "height": size},
                      "B": {"owner": "ownerB", "width": size, "height": size}},
        "parties": [{"id": "ownerA", "role": "owner"}, {"id": "ownerB", "role": "owner"},
                    {"id": "consumer1", "role": "consumer"}, {"id": "consumer2", "role": "consumer"}],
        "steps": [
            {"op": "transfer", "from": "ownerA", "to": "consumer1", "protocol": "untrusted", "parts": parts,
             "document": "A"},
            {"op": "transfer", "from": "ownerB", "to": "consumer1", "protocol": "untrusted", "parts": parts,
             "document": "B"},
            {"op": "compose", "party": "consumer1", "inputs": ["A", "B"], "output": "AB"},
            {"op": "transfer", "from": "consumer1", "to": "consumer2", "protocol": "untrusted",
             "parts": parts, "document": "AB"},
        ],
        "leak": {"party": "consumer2", "document": "AB", "version": "held"},
        "audits": [{"owner": "ownerA", "component": "A"}, {"owner": "ownerB", "component": "B"}],
        "expected_verdict": "consumer2",
    }


BUILTIN_SCENARIOS = {
    "outsourcing": outsourcing_scenario,
    "osn": osn_scenario,
    "owner-leak": owner_leak_scenario,
    "composition": composition_scenario,
}


# --- adversary experiments ------------------------------------------------

STRATEGIES = ("honest", "framing_guess", "version_swap", "statement_replay",
              "bit_removal_noise", "two_party_average")


@dataclass
class TrialReport:
    strategy: str
    n: int
    trials: int
    successes: int  # wrong verdicts: innocent framed or leaker escaped
    verdicts: dict[str, int] = field(default_factory=dict)

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "n": self.n, "trials": self.trials,
                "successes": self.successes, "rate": self.rate, "verdicts": self.verdicts}


def binomial_interval(p: float, trials: int, level: float = 0.99) -> tuple[float, float]:
    """Central interval for the success rate of ``trials`` Bernoulli(p) draws."""
    tail = (1 - level) / 2
    lo, hi = stats.binom.ppf([tail, 1 - tail], trials, p)
    return lo / trials, hi / trials


def _chain(n: int, seed, trial: int, size: int, group: GroupParams, settings: WatermarkSettings,
           cheat: SenderCheat | None = None, extra_recipients: int = 0):
    """owner --trusted--> S --untrusted(n)--> R (and optionally R2, R3 ...)."""
    rand = SeededRandomness(_seed_bytes(seed, "trial", str(trial)))
    owner = Party("owner", Role.OWNER, rand.child("owner"))
    s = Party("S", Role.CONSUMER, rand.child("S"))
    rs = [Party(f"R{k + 1}" if extra_recipients else "R", Role.CONSUMER, rand.child(f"R{k}"))
          for k in range(1 + extra_recipients)]
    owner.holding = random_document(_np_rng(seed, "trial-doc", str(trial)), size, size)
    trusted_transfer(owner, s, rng=rand.child("t1"), settings=settings)
    geom = SplitGeometry.near_square(size, size, n)
    results = [untrusted_transfer(s, r, geom, params=group, settings=settings, rng=rand.child(f"t2/{r.name}"),
                                  cheat=cheat) for r in rs]
    return rand, owner, s, rs, results


def _adversary_trial(strategy: str, n: int, seed, trial: int, size: int, group: GroupParams,
                     settings: WatermarkSettings, policy: TolerancePolicy,
                     guesses: int = 1) -> list[tuple[bool, str]]:
    """One transfer and its leak(s); returns (adversary succeeded, verdict) per audit.

    For ``framing_guess`` the sender may publish ``guesses`` independent
    guesses against the same transfer: each guess is uniform and independent
    of the recipient's choice, so every audit is its own Bernoulli(2^-n) trial.
    """
    rng = _np_rng(seed, "adv", str(trial))
    cheat = SenderCheat(version_swap=frozenset(range(1, n + 1))) if strategy == "version_swap" else None
    extra = 1 if strategy == "two_party_average" else 0
    rand, owner, s, rs, results = _chain(n, seed, trial, size, group, settings, cheat, extra)
    r, res = rs[0], results[0]
    responder = HonestResponder([owner, s, *rs], settings)
    geom = res.sender_record.geometry

    leaks: list[tuple[str, Document]] = []
    if strategy == "honest":
        leaks.append((r.name, res.document) if trial % 2 == 0 else (s.name, res.marked))
    elif strategy == "framing_guess":
        for _ in range(guesses):
            guess = rng.integers(0, 2, n)
            leaks.append((s.name, join([res.versions[i][int(b)] for i, b in enumerate(guess)], geom)))
    elif strategy == "version_swap":
        # every slot carries D_{i,0}, so the sender knows D_w exactly
        leaks.append((s.name, join([pair[0] for pair in res.versions], geom)))
    elif strategy == "statement_replay":
        leaks.append((s.name, _replay_forgery(s, res, rng, rand, settings)))
    elif strategy == "bit_removal_noise":
        noisy = res.document.as_float() + rng.normal(0.0, 2.0, res.document.shape)
        leaks.append((r.name, Document(np.clip(np.rint(noisy), 0, 255).astype(np.uint8))))
    elif strategy == "two_party_average":
        avg = (results[0].document.as_float() + results[1].document.as_float()) / 2
        leaks.append((r.name, Document(np.clip(np.rint(avg), 0, 255).astype(np.uint8))))
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    out = []
    for leaker, leaked in leaks:
        verdict = generate_lineage(leaked, owner.ident, responder, policy, settings).verdict.id
        if strategy in ("framing_guess", "version_swap", "statement_replay"):
            out.append((verdict == r.name, verdict))  # innocent recipient framed
        elif strategy == "two_party_average":
            out.append((verdict not in {p.name for p in rs}, verdict))  # colluders escaped
        else:
            out.append((verdict != leaker, verdict))
    return out


def _replay_forgery(s: Party, res: TransferResult, rng, rand, settings) -> Document:
    """Re-embed the recipient's old signed statement under fresh keys and guessed bits."""
    old: SenderRecord = res.sender_record
    k1, k2 = wm_keygen(rand.token_bytes(32)), wm_keygen(rand.token_bytes(32))
    geom = old.geometry
    marked = embed(old.original, WatermarkDescriptor(old.sigma.payload(), k1), settings.document)
    cfg = settings.part_config(geom.part_width, geom.part_height)
    parts = [embed(p, WatermarkDescriptor.bit(int(rng.integers(2)), k2, i), cfg)
             for i, p in enumerate(split(marked, geom), start=1)]
    forged = SenderRecord(old.tau, old.recipient, k1, k2, old.sigma, old.n, old.original, geom)
    s.sent.append(forged)
    return join(parts, geom)


def run_adversary_trials(strategy: str, n: int, trials: int, seed: int | str = 0, size: int = 128,
                         group: GroupParams = TEST, settings: WatermarkSettings = DEFAULT_SETTINGS,
                         policy: TolerancePolicy | None = None, guesses_per_transfer: int = 1) -> TrialReport:
    """Repeat one strategy and count how often the auditor's verdict is wrong."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if trials < 1:
        raise ValueError("trials must be positive")
    if guesses_per_transfer < 1 or (guesses_per_transfer > 1 and strategy != "framing_guess"):
        raise ValueError("only framing_guess may reuse a transfer")
    policy = policy or TolerancePolicy()
    report = TrialReport(strategy, n, trials, 0)
    done, t = 0, 0
    while done < trials:
        batch = min(guesses_per_transfer, trials - done)
        for won, verdict in _adversary_trial(strategy, n, seed, t, size, group, settings, policy, batch):
            report.successes += won
            report.verdicts[verdict] = report.verdicts.get(verdict, 0) + 1
        done += batch
        t += 1
    return report


@dataclass
class CollusionReport:
    colluders: int
    trials: int
    n: int
    sigma_detected: list[list[bool]]  # per trial, per colluder
    sigma_scores: list[list[float]]
    part_outcomes: list[dict[str, int]]  # per trial, histogram of zero/one/none/both over all colluders
    verdicts: list[str]

    def sigma_rate(self) -> float:
        flat = [d for row in self.sigma_detected for d in row]
        return sum(flat) / len(flat)

    def to_dict(self) -> dict:
        hist: dict[str, int] = {}
        for h in self.part_outcomes:
            for k, v in h.items():
                hist[k] = hist.get(k, 0) + v
        caught = {}
        for v in self.verdicts:
            caught[v] = caught.get(v, 0) + 1
        return {"colluders": self.colluders, "trials": self.trials, "n": self.n,
                "sigma_detection_rate": self.sigma_rate(), "part_outcomes": hist, "verdicts": caught}


def run_collusion(colluders: int = 2, trials: int = 50, n: int = 16, seed: int | str = 0, size: int = 128,
                  group: GroupParams = TEST, settings: WatermarkSettings = DEFAULT_SETTINGS) -> CollusionReport:
    """Recipients of independent transfers average their copies; record what survives."""
    if colluders < 1:
        raise ValueError("need at least one colluder")
    det, scores, outcomes, verdicts = [], [], [], []
    for t in range(trials):
        _, owner, s, rs, results = _chain(n, seed, t, size, group, settings, extra_recipients=colluders - 1)
        avg = sum(res.document.as_float() for res in results) / colluders
        leaked = Document(np.clip(np.rint(avg), 0, 255).astype(np.uint8))
        row_d, row_s, hist = [], [], {}
        for res in results:
            rec = res.sender_record
            c = correlation(leaked, WatermarkDescriptor(rec.sigma.payload(), rec.k1), rec.original,
                            settings.document)
            row_s.append(c)
            row_d.append(c >= settings.document.threshold)
            geom = rec.geometry
            cfg = settings.part_config(geom.part_width, geom.part_height)
            for i, (p, o) in enumerate(zip(split(leaked, geom), split(res.marked, geom)), start=1):
                key = classify(part_scores(p, rec.k2, i, o, cfg), cfg.threshold).value
                hist[key] = hist.get(key, 0) + 1
        det.append(row_d)
        scores.append(row_s)
        outcomes.append(hist)
        lin = generate_lineage(leaked, owner.ident, HonestResponder([owner, s, *rs], settings),
                               settings=settings)
        verdicts.append(lin.verdict.id)
    return CollusionReport(colluders, trials, n, det, scores, outcomes, verdicts)
