"""Declarative experiment definitions and their text file format.

A scenario file is line oriented. Top-level ``key = value`` pairs come
first, followed by ``[section]`` blocks::

    name = discrete_case
    horizon = 15
    eval_weights = 0.15 0.25 0.35 0.25
    initial_state = 0 0 0 0
    assessment = dina J=16 slip_guess_range=[0.1,0.3]

    [knowledge_points]
    count = 4
    labels = addition | multiplication | exponentiation | logarithm

    [prerequisites]
    1 2 1.0                 # parent child threshold (1-based points)

    [actions]
    d1 : 1 : 1.0            # name : trained points : training weights

    [transition]
    kind = discrete         # or: kind = continuous / noise_df = 2
    d1 : 0.5 0.5 0 0 0      # one matrix row per line, in order

Comments start with ``#``. Knowledge points are 1-based in files and
0-based everywhere in code.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

KnowledgeState = np.ndarray

BUNDLED = ("discrete_case", "continuous_case_1", "continuous_case_2")
NORMALIZATION_TOL = 1e-9
DEFAULT_SLIP_GUESS_RANGE = (0.1, 0.3)


class ScenarioError(Exception):
    pass


class ScenarioParseError(ScenarioError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class ScenarioValidationError(ScenarioError):
    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("invalid scenario:\n  " + "\n  ".join(report.violations))


@dataclass(frozen=True, eq=False)
class LearningMaterial:
    id: int
    trained_points: tuple[int, ...]
    training_weights: np.ndarray
    name: str = ""


@dataclass(frozen=True)
class Prerequisite:
    parent: int
    child: int
    threshold: float = 1.0


@dataclass(frozen=True)
class PrerequisiteGraph:
    n_points: int
    edges: tuple[Prerequisite, ...] = ()

    def parents(self, child: int) -> list[Prerequisite]:
        return [e for e in self.edges if e.child == child]

    def roots(self) -> list[int]:
        children = {e.child for e in self.edges}
        return [k for k in range(self.n_points) if k not in children]

    def find_cycle(self) -> list[int] | None:
        """Return one cycle as a list of points, or None if acyclic."""
        succ: dict[int, list[int]] = {}
        for e in self.edges:
            succ.setdefault(e.parent, []).append(e.child)
        color = dict.fromkeys(range(self.n_points), 0)
        stack_path: list[int] = []

        def visit(u):
            color[u] = 1
            stack_path.append(u)
            for w in succ.get(u, []):
                if color.get(w, 0) == 1:
                    return stack_path[stack_path.index(w):] + [w]
                if color.get(w, 0) == 0:
                    found = visit(w)
                    if found:
                        return found
            stack_path.pop()
            color[u] = 2
            return None

        for k in range(self.n_points):
            if color[k] == 0:
                cyc = visit(k)
                if cyc:
                    return cyc
        return None

    def gate_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edges as parallel (parent, child, threshold) arrays."""
        cached = self.__dict__.get("_arrays")
        if cached is None:
            par = np.array([e.parent for e in self.edges], dtype=np.int64)
            chi = np.array([e.child for e in self.edges], dtype=np.int64)
            thr = np.array([e.threshold for e in self.edges], dtype=np.float64)
            cached = (par, chi, thr)
            object.__setattr__(self, "_arrays", cached)
        return cached

    def ancestors(self, point: int) -> list[int]:
        """All direct and indirect prerequisites of ``point``, sorted."""
        seen: set[int] = set()
        stack = [e.parent for e in self.parents(point)]
        while stack:
            p = stack.pop()
            if p not in seen:
                seen.add(p)
                stack.extend(e.parent for e in self.parents(p))
        return sorted(seen)

    def closure_states(self) -> np.ndarray:
        """Binary mastery profiles where every mastered point has its parents mastered.

        Rows are ordered by number of mastered points, then by point order,
        so for a chain the rows are the chain states from empty to full.
        """
        k = self.n_points
        if k > 20:
            raise ScenarioError("closure enumeration limited to 20 knowledge points")
        par, chi, _ = self.gate_arrays()
        keep = []
        for bits in itertools.product((0, 1), repeat=k):
            arr = np.array(bits)
            if np.all(arr[chi] <= arr[par]):
                keep.append(bits)
        keep.sort(key=lambda b: (sum(b), tuple(-x for x in b)))
        return np.array(keep, dtype=np.float64).reshape(len(keep), k)


@dataclass(frozen=True, eq=False)
class DiscreteTransitionSpec:
    matrices: np.ndarray  # (n_actions, n_states, n_states)
    kind: str = field(default="discrete", init=False)


@dataclass(frozen=True)
class ContinuousTransitionSpec:
    noise_df: float = 2.0
    kind: str = field(default="continuous", init=False)


@dataclass(frozen=True)
class AssessmentSpec:
    kind: str = "none"  # none | dina | m3pl
    n_items: int = 0
    slip_guess_range: tuple[float, float] = DEFAULT_SLIP_GUESS_RANGE

    def __str__(self):
        if self.kind == "none":
            return "none"
        if self.kind == "dina":
            lo, hi = self.slip_guess_range
            return f"dina J={self.n_items} slip_guess_range=[{_fmt(lo)},{_fmt(hi)}]"
        return f"m3pl J={self.n_items}"


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    n_points: int
    horizon: int
    actions: tuple[LearningMaterial, ...]
    graph: PrerequisiteGraph
    eval_weights: np.ndarray
    transition: DiscreteTransitionSpec | ContinuousTransitionSpec
    assessment: AssessmentSpec
    initial_state: np.ndarray
    labels: tuple[str, ...] = ()

    @property
    def mode(self) -> str:
        return self.transition.kind

    @property
    def is_discrete(self) -> bool:
        return self.transition.kind == "discrete"

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def K(self) -> int:
        return self.n_points

    @property
    def T(self) -> int:
        return self.horizon

    @property
    def admissible_states(self) -> np.ndarray:
        """Binary profiles reachable under the hierarchy (discrete mode)."""
        cached = self.__dict__.get("_admissible")
        if cached is None:
            cached = self.graph.closure_states()
            object.__setattr__(self, "_admissible", cached)
        return cached

    def state_index(self, state: np.ndarray) -> int:
        hits = np.flatnonzero(np.all(self.admissible_states == np.asarray(state), axis=1))
        if hits.size == 0:
            raise ValueError(f"state {np.asarray(state).tolist()} is not admissible")
        return int(hits[0])

    @property
    def weight_matrix(self) -> np.ndarray:
        """Training weights stacked as ``(n_actions, K)``."""
        cached = self.__dict__.get("_wmat")
        if cached is None:
            cached = np.stack([a.training_weights for a in self.actions])
            object.__setattr__(self, "_wmat", cached)
        return cached

    def with_assessment(self, spec: AssessmentSpec) -> "Scenario":
        return Scenario(self.name, self.n_points, self.horizon, self.actions, self.graph,
                        self.eval_weights, self.transition, spec, self.initial_state, self.labels)

    def with_horizon(self, horizon: int) -> "Scenario":
        return Scenario(self.name, self.n_points, horizon, self.actions, self.graph,
                        self.eval_weights, self.transition, self.assessment,
                        self.initial_state, self.labels)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str) -> None:
        self.violations.append(msg)

    def __bool__(self):
        return self.ok


def state_violations(scenario: Scenario, state) -> list[str]:
    """Problems with a knowledge state for this scenario (empty if valid)."""
    s = np.asarray(state, dtype=float)
    out = []
    if s.shape != (scenario.n_points,):
        return [f"state length {s.size} != K={scenario.n_points}"]
    if scenario.is_discrete:
        if not np.all((s == 0.0) | (s == 1.0)):
            out.append("discrete state entries must be 0 or 1")
    elif np.any(~np.isfinite(s)) or np.any(s < 0.0) or np.any(s > 1.0):
        out.append("continuous state entries must lie in [0, 1]")
    return out


def validate_scenario(s: Scenario) -> ValidationReport:
    rep = ValidationReport()
    K = s.n_points
    if K < 1:
        rep.add("K must be >= 1")
    if s.horizon < 1:
        rep.add("horizon T must be >= 1")
    if len(s.actions) < 1:
        rep.add("at least one action is required")
    if s.labels and len(s.labels) != K:
        rep.add(f"{len(s.labels)} labels for {K} knowledge points")
    if K < 1:
        return rep

    for i, a in enumerate(s.actions):
        w = np.asarray(a.training_weights, dtype=float)
        tag = a.name or f"action {i}"
        if a.id != i:
            rep.add(f"{tag}: id {a.id} out of order (expected {i})")
        if not a.trained_points:
            rep.add(f"{tag}: trained_points is empty")
        if any(p < 0 or p >= K for p in a.trained_points):
            rep.add(f"{tag}: trained point out of range")
            continue
        if w.shape != (K,):
            rep.add(f"{tag}: training weights must have length K")
            continue
        if np.any(w < 0):
            rep.add(f"{tag}: negative training weight")
        mask = np.zeros(K, bool)
        mask[list(a.trained_points)] = True
        if np.any((w > 0) != mask):
            rep.add(f"{tag}: training weights must be positive exactly on trained points")

    g = s.graph
    if g.n_points != K:
        rep.add("prerequisite graph size differs from K")
    for e in g.edges:
        if not (0 <= e.parent < K and 0 <= e.child < K):
            rep.add(f"edge {e.parent + 1}->{e.child + 1}: point out of range")
        elif e.parent == e.child:
            rep.add(f"edge {e.parent + 1}->{e.child + 1}: self loop")
        if not (0.0 < e.threshold <= 1.0):
            rep.add(f"edge {e.parent + 1}->{e.child + 1}: threshold {e.threshold} outside (0, 1]")
        elif s.is_discrete and e.threshold != 1.0:
            rep.add(f"edge {e.parent + 1}->{e.child + 1}: discrete thresholds must be 1")
    cycle = g.find_cycle()
    if cycle:
        rep.add("cycle detected: " + "->".join(str(k + 1) for k in cycle))

    w = np.asarray(s.eval_weights, dtype=float)
    if w.shape != (K,):
        rep.add("eval_weights must have length K")
    else:
        if np.any(w < 0):
            rep.add("eval_weights must be nonnegative")
        if abs(w.sum() - 1.0) > NORMALIZATION_TOL:
            rep.add(f"weights not normalized (sum {w.sum():.12g})")

    for msg in state_violations(s, s.initial_state):
        rep.add(f"initial_state: {msg}")

    tr = s.transition
    if isinstance(tr, DiscreteTransitionSpec):
        if cycle:
            return rep
        states = s.admissible_states
        n = states.shape[0]
        if not np.any(np.all(states == np.asarray(s.initial_state), axis=1)):
            rep.add("initial_state is not an admissible state")
        mats = np.asarray(tr.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[0] != len(s.actions) or mats.shape[1:] != (n, n):
            rep.add(f"transition needs {len(s.actions)} matrices of shape {n}x{n}, "
                    f"got {mats.shape}")
        else:
            if np.any(mats < 0):
                rep.add("transition matrices must be nonnegative")
            rows = mats.sum(axis=2)
            if np.any(np.abs(rows - 1.0) > NORMALIZATION_TOL):
                rep.add("transition matrices are not row-stochastic")
            superset = np.all(states[None, :, :] >= states[:, None, :], axis=2)
            if np.any((mats > 0) & ~superset[None]):
                rep.add("transition matrices allow retrograde moves")
    elif isinstance(tr, ContinuousTransitionSpec):
        if not tr.noise_df > 0:
            rep.add("noise_df must be > 0")
    else:
        rep.add("unknown transition kind")

    a = s.assessment
    if a.kind not in ("none", "dina", "m3pl"):
        rep.add(f"unknown assessment {a.kind!r}")
    else:
        if a.n_items < 0:
            rep.add("assessment J must be >= 0")
        if a.kind == "dina":
            if not s.is_discrete:
                rep.add("dina assessment requires discrete mode")
            lo, hi = a.slip_guess_range
            if not (0.0 < lo <= hi < 0.5):
                rep.add("slip_guess_range must satisfy 0 < lo <= hi < 0.5")
        if a.kind == "m3pl" and s.is_discrete:
            rep.add("m3pl assessment requires continuous mode")
    return rep


# ---------------------------------------------------------------- parsing

_SECTIONS = ("knowledge_points", "prerequisites", "actions", "transition")
_TOP_KEYS = ("name", "horizon", "eval_weights", "initial_state", "assessment")


def _floats(text: str, line: int, fld: str) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ScenarioParseError(f"expected numbers, got {text!r}", line, fld) from exc


def _int(text: str, line: int, fld: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ScenarioParseError(f"expected an integer, got {text!r}", line, fld) from exc


def parse_assessment(text: str, line: int | None = None) -> AssessmentSpec:
    toks = text.split()
    if not toks:
        raise ScenarioParseError("empty assessment", line, "assessment")
    kind = toks[0].lower()
    if kind == "none":
        if len(toks) > 1:
            raise ScenarioParseError("'none' takes no options", line, "assessment")
        return AssessmentSpec()
    if kind not in ("dina", "m3pl"):
        raise ScenarioParseError(f"unknown assessment model {toks[0]!r}", line, "assessment")
    opts = {}
    for tok in toks[1:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise ScenarioParseError(f"malformed option {tok!r}", line, "assessment")
        opts[key] = val
    if "J" not in opts:
        raise ScenarioParseError("missing J=<n>", line, "assessment")
    n_items = _int(opts.pop("J"), line, "assessment.J")
    rng_ = DEFAULT_SLIP_GUESS_RANGE
    if "slip_guess_range" in opts:
        if kind != "dina":
            raise ScenarioParseError("slip_guess_range only applies to dina", line, "assessment")
        m = re.fullmatch(r"\[([^,\]]+),([^\]]+)\]", opts.pop("slip_guess_range"))
        if not m:
            raise ScenarioParseError("slip_guess_range must look like [lo,hi]", line, "assessment")
        rng_ = (float(m.group(1)), float(m.group(2)))
    if opts:
        raise ScenarioParseError(f"unknown options {sorted(opts)}", line, "assessment")
    return AssessmentSpec(kind, n_items, rng_)


def loads(text: str) -> Scenario:
    """Parse scenario text without validating it."""
    top: dict[str, tuple[str, int]] = {}
    kp: dict[str, tuple[str, int]] = {}
    edges: list[Prerequisite] = []
    actions_raw: list[tuple[str, str, str, int]] = []
    trans_kv: dict[str, tuple[str, int]] = {}
    rows: dict[str, list[list[float]]] = {}
    section = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioParseError("unterminated section header", lineno)
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ScenarioParseError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            key, sep, val = line.partition("=")
            key = key.strip()
            if not sep or key not in _TOP_KEYS:
                raise ScenarioParseError(f"unexpected top-level line {line!r}", lineno, key or None)
            top[key] = (val.strip(), lineno)
        elif section == "knowledge_points":
            key, sep, val = line.partition("=")
            if not sep or key.strip() not in ("count", "labels"):
                raise ScenarioParseError(f"unexpected line {line!r}", lineno, "knowledge_points")
            kp[key.strip()] = (val.strip(), lineno)
        elif section == "prerequisites":
            toks = line.split()
            if len(toks) not in (2, 3):
                raise ScenarioParseError("expected 'parent child [threshold]'", lineno, "prerequisites")
            par = _int(toks[0], lineno, "prerequisites") - 1
            chi = _int(toks[1], lineno, "prerequisites") - 1
            thr = _floats(toks[2], lineno, "prerequisites")[0] if len(toks) == 3 else 1.0
            edges.append(Prerequisite(par, chi, thr))
        elif section == "actions":
            parts = [p.strip() for p in line.split(":")]
            if len(parts) != 3:
                raise ScenarioParseError("expected 'name : points : weights'", lineno, "actions")
            actions_raw.append((parts[0], parts[1], parts[2], lineno))
        elif section == "transition":
            if "=" in line:
                key, _, val = line.partition("=")
                trans_kv[key.strip()] = (val.strip(), lineno)
            else:
                name, sep, vals = line.partition(":")
                if not sep:
                    raise ScenarioParseError(f"unexpected line {line!r}", lineno, "transition")
                rows.setdefault(name.strip(), []).append(_floats(vals, lineno, "transition"))

    for key in ("horizon", "eval_weights", "initial_state"):
        if key not in top:
            raise ScenarioParseError(f"missing top-level key {key!r}", None, key)
    if "count" not in kp:
        raise ScenarioParseError("missing knowledge_points count", None, "knowledge_points.count")
    K = _int(kp["count"][0], kp["count"][1], "knowledge_points.count")
    labels: tuple[str, ...] = ()
    if "labels" in kp:
        labels = tuple(p.strip() for p in kp["labels"][0].split("|"))

    actions = []
    names = []
    for i, (name, pts, wts, lineno) in enumerate(actions_raw):
        points = tuple(_int(p, lineno, "actions") - 1 for p in pts.replace(",", " ").split())
        weights = _floats(wts, lineno, "actions")
        if len(weights) == 1 and len(points) > 1:
            weights = weights * len(points)
        if len(weights) != len(points):
            raise ScenarioParseError("one weight per trained point (or one shared weight)",
                                     lineno, "actions")
        vec = np.zeros(max(K, 0))
        for p, w in zip(points, weights):
            if 0 <= p < K:
                vec[p] = w
        actions.append(LearningMaterial(i, points, vec, name))
        names.append(name)

    kind, kline = trans_kv.get("kind", ("", None))
    if kind == "discrete":
        unknown = set(rows) - set(names)
        if unknown:
            raise ScenarioParseError(f"rows for unknown actions {sorted(unknown)}", kline, "transition")
        try:
            mats = np.array([rows.get(n, []) for n in names], dtype=float)
        except ValueError as exc:
            raise ScenarioParseError("ragged transition matrices", kline, "transition") from exc
        transition = DiscreteTransitionSpec(mats)
    elif kind == "continuous":
        if rows:
            raise ScenarioParseError("continuous transition takes no matrix rows", kline, "transition")
        df_txt, df_line = trans_kv.get("noise_df", ("2", kline))
        transition = ContinuousTransitionSpec(_floats(df_txt, df_line, "transition.noise_df")[0])
    else:
        raise ScenarioParseError("transition kind must be 'discrete' or 'continuous'",
                                 kline, "transition.kind")

    assessment = AssessmentSpec()
    if "assessment" in top:
        assessment = parse_assessment(*top["assessment"])

    return Scenario(
        name=top.get("name", ("unnamed", 0))[0],
        n_points=K,
        horizon=_int(top["horizon"][0], top["horizon"][1], "horizon"),
        actions=tuple(actions),
        graph=PrerequisiteGraph(K, tuple(edges)),
        eval_weights=np.array(_floats(*top["eval_weights"], "eval_weights")),
        transition=transition,
        assessment=assessment,
        initial_state=np.array(_floats(*top["initial_state"], "initial_state")),
        labels=labels,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps(s: Scenario) -> str:
    """Serialise a scenario; ``loads(dumps(s))`` reproduces it exactly."""
    out = [f"name = {s.name}", f"horizon = {s.horizon}",
           "eval_weights = " + " ".join(_fmt(x) for x in s.eval_weights),
           "initial_state = " + " ".join(_fmt(x) for x in s.initial_state),
           f"assessment = {s.assessment}", "", "[knowledge_points]", f"count = {s.n_points}"]
    if s.labels:
        out.append("labels = " + " | ".join(s.labels))
    out += ["", "[prerequisites]"]
    out += [f"{e.parent + 1} {e.child + 1} {_fmt(e.threshold)}" for e in s.graph.edges]
    out += ["", "[actions]"]
    for a in s.actions:
        pts = " ".join(str(p + 1) for p in a.trained_points)
        wts = " ".join(_fmt(a.training_weights[p]) for p in a.trained_points)
        out.append(f"{a.name or f'd{a.id + 1}'} : {pts} : {wts}")
    out += ["", "[transition]", f"kind = {s.transition.kind}"]
    if isinstance(s.transition, DiscreteTransitionSpec):
        for a, mat in zip(s.actions, s.transition.matrices):
            for row in mat:
                out.append(f"{a.name or f'd{a.id + 1}'} : " + " ".join(_fmt(x) for x in row))
    else:
        out.append(f"noise_df = {_fmt(s.transition.noise_df)}")
    return "\n".join(out) + "\n"


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file.

    ``path`` may also be the bare name of a bundled scenario
    (``discrete_case``, ``continuous_case_1``, ``continuous_case_2``).
    """
    p = Path(path)
    if not p.exists() and str(path).removesuffix(".scn") in BUNDLED:
        text = bundled_text(str(path).removesuffix(".scn"))
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read {path}: {exc}") from exc
    scen = loads(text)
    report = validate_scenario(scen)
    if not report.ok:
        raise ScenarioValidationError(report)
    return scen


def bundled_text(name: str) -> str:
    return resources.files("curiopath.data").joinpath(f"{name}.scn").read_text()


def bundled_path(name: str):
    return resources.files("curiopath.data").joinpath(f"{name}.scn")
