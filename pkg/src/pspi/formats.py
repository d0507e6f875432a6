"""Model documents (JSON) and trace files (CSV or JSON lines)."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .errors import InvalidModelError, PspiError
from .mdp import MdpModel, encode_policy, validate_model
from .offline import IterationTrace
from .online import LocalMdpReport, Trajectory

TRACE_SCHEMA_VERSION = 1
TRACE_HEADER = ("run", "k", "state", "action", "policy", "changed", "v_at_state")
DOCUMENT_FIELDS = ("actions", "gamma", "rewards", "states", "transitions")


class DocumentError(PspiError, ValueError):
    pass


def _num(v) -> str:
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"cannot serialize non-finite number {v}")
    return format(v, ".17g")


def _dump(obj) -> str:
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_dump(obj[k])}" for k in sorted(obj)) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, str):
        return json.dumps(obj)
    return _num(obj)


def model_to_document(model: MdpModel) -> dict:
    return {
        "gamma": model.gamma,
        "states": list(model.state_names),
        "actions": [list(a) for a in model.action_names],
        "rewards": [r.tolist() for r in model.rewards],
        "transitions": [p.tolist() for p in model.transitions],
    }


def dumps_model(model: MdpModel) -> str:
    """Canonical text: sorted keys, one top-level field per line, 17 significant digits."""
    doc = model_to_document(model)
    body = ",\n".join(f"  {json.dumps(k)}: {_dump(doc[k])}" for k in sorted(doc))
    return "{\n" + body + "\n}\n"


def save_model(model: MdpModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def _field(doc, name, kind):
    if name not in doc:
        raise DocumentError(f"missing field {name!r}")
    val = doc[name]
    if not isinstance(val, kind):
        raise DocumentError(f"field {name!r} must be a {kind.__name__ if isinstance(kind, type) else 'number'}")
    return val


def document_to_model(doc) -> MdpModel:
    if not isinstance(doc, dict):
        raise DocumentError("model document must be a JSON object")
    unknown = set(doc) - set(DOCUMENT_FIELDS)
    if unknown:
        raise DocumentError(f"unknown field(s) {sorted(unknown)}")
    gamma = _field(doc, "gamma", (int, float))
    states = _field(doc, "states", list)
    actions = _field(doc, "actions", list)
    rewards = _field(doc, "rewards", list)
    transitions = _field(doc, "transitions", list)
    n = len(states)
    for name, val in (("actions", actions), ("rewards", rewards), ("transitions", transitions)):
        if len(val) != n:
            raise DocumentError(f"field {name!r} has {len(val)} entries for {n} states")
    for x in range(n):
        k = len(actions[x]) if isinstance(actions[x], list) else -1
        if k < 1:
            raise DocumentError(f"actions[{x}] must be a nonempty list")
        if not isinstance(rewards[x], list) or len(rewards[x]) != k:
            raise DocumentError(f"rewards[{x}] must list one reward per action ({k})")
        if not isinstance(transitions[x], list) or len(transitions[x]) != k:
            raise DocumentError(f"transitions[{x}] must list one row per action ({k})")
        for a, row in enumerate(transitions[x]):
            if not isinstance(row, list) or len(row) != n:
                raise DocumentError(f"transitions[{x}][{a}] must be a row of {n} probabilities")
            if not all(isinstance(p, (int, float)) for p in row):
                raise DocumentError(f"transitions[{x}][{a}] has non-numeric entries")
        if not all(isinstance(r, (int, float)) for r in rewards[x]):
            raise DocumentError(f"rewards[{x}] has non-numeric entries")
    try:
        model = MdpModel(rewards, transitions, gamma, states, actions)
    except (TypeError, ValueError) as exc:
        raise DocumentError(f"cannot build model: {exc}") from exc
    found = validate_model(model)
    if found:
        raise InvalidModelError(found)
    return model


def loads_model(text: str, source: str = "<string>") -> MdpModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return document_to_model(doc)
    except DocumentError as exc:
        raise DocumentError(f"{source}: {exc}") from exc


def load_model(path) -> MdpModel:
    path = Path(path)
    return loads_model(path.read_text(encoding="utf-8"), str(path))


def _fmt(v) -> str:
    return "" if v is None else _num(v)


def trace_rows(trace, run: str = "run", full_values: bool = False) -> list[dict]:
    """Flat rows for an off-line IterationTrace or an on-line Trajectory."""
    rows = []
    if isinstance(trace, Trajectory):
        for s in trace.steps:
            row = dict(run=run, k=s.k, state=str(s.state), action=str(s.action),
                       policy=encode_policy(s.policy), changed=s.changed, v_at_state=s.estimate)
            if full_values:
                row["values"] = None if s.values is None else [float(v) for v in s.values]
            rows.append(row)
    elif isinstance(trace, IterationTrace):
        for s in trace.steps:
            row = dict(run=run, k=s.iteration,
                       state="-".join(str(x) for x in s.switched),
                       action="-".join(str(s.policy[x]) for x in s.switched),
                       policy=encode_policy(s.policy), changed=bool(s.switched),
                       v_at_state=float(s.values[s.switched[0]]) if s.switched else None)
            if full_values:
                row["values"] = [float(v) for v in s.values]
            rows.append(row)
    else:
        raise TypeError(f"cannot emit {type(trace).__name__}")
    return rows


def format_trace(trace, fmt: str = "csv", run: str = "run", full_values: bool = False,
                 num_states: int | None = None) -> str:
    if trace is None:
        items = []
    elif isinstance(trace, (list, tuple)):
        items = list(trace)
    else:
        items = [(run, trace)]
    rows = [r for name, t in items for r in trace_rows(t, name, full_values)]
    if fmt == "jsonl":
        return "".join(json.dumps(r, sort_keys=False) + "\n" for r in rows)
    if fmt != "csv":
        raise ValueError(f"unknown trace format {fmt!r}")
    if num_states is None:
        num_states = next((len(r["values"]) for r in rows if r.get("values")), 0)
    header = list(TRACE_HEADER) + ([f"v{i}" for i in range(num_states)] if full_values else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        line = [r["run"], r["k"], r["state"], r["action"], r["policy"],
                "true" if r["changed"] else "false", _fmt(r["v_at_state"])]
        if full_values:
            vals = r.get("values") or [None] * num_states
            line += [_fmt(v) for v in vals]
        w.writerow(line)
    return buf.getvalue()


def emit_trace(trace, path, fmt: str = "csv", run: str = "run", full_values: bool = False,
               num_states: int | None = None) -> None:
    """Write a trace, trajectory, or list of ``(run, trace)`` pairs to ``path``."""
    text = format_trace(trace, fmt, run, full_values, num_states)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def report_to_dict(report: LocalMdpReport, trajectory: Trajectory | None = None) -> dict:
    out = {
        "chi": sorted(report.chi),
        "closed": report.closed,
        "locally_optimal": report.locally_optimal,
        "globally_optimal": report.globally_optimal,
        "final_policy": encode_policy(report.final_policy),
        "exits": [list(e) for e in report.exits],
    }
    if trajectory is not None and trajectory.stabilization is not None:
        st = trajectory.stabilization
        out.update(k_prime=st.k_prime, settled=st.settled, settle_window=st.window,
                   changes=trajectory.num_changes, steps=len(trajectory.steps))
    return out
