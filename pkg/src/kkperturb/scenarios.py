"""Scenario definitions: named presets, random inclusions and the YAML encoding.

A scenario fixes ``C ⊆ A ⊆ D`` by generator lists together with a
perturbation ``B = u0 A u0*``, where ``u0`` is a seeded unitary of the
relative commutant ``C' ∩ D`` with ``||u0 - 1|| = epsilon``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np
import yaml

from .algebra import (
    ConcreteAlgebra,
    algebra_from_generators,
    conjugate_algebra,
    is_subalgebra,
    random_unitary_near_identity,
    relative_commutant,
)
from .errors import InvalidConfig
from .metrics import MetricConfig

ALL_CHECKS = (
    "watlem",
    "watlem2",
    "projest",
    "homo",
    "intertwine",
    "variant",
    "rm-inequality",
    "rowbound",
    "factorization",
)


def matrix_unit(n, i, j):
    e = np.zeros((n, n), dtype=complex)
    e[i, j] = 1.0
    return e


def _full_generators(n):
    return [matrix_unit(n, i, i + 1) for i in range(n - 1)] + [np.diag(np.arange(1.0, n + 1)).astype(complex)]


def _diag_generators(n):
    return [np.diag(np.arange(1.0, n + 1)).astype(complex)]


def _block_generators(offsets_sizes, n):
    gens = []
    for off, s in offsets_sizes:
        for i in range(s):
            for j in range(s):
                gens.append(matrix_unit(n, off + i, off + j))
    return gens


def _block_units(offsets_sizes, n):
    gens = []
    for off, s in offsets_sizes:
        p = np.zeros((n, n), dtype=complex)
        p[off:off + s, off:off + s] = np.eye(s)
        gens.append(p)
    return gens


SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)


@dataclass(frozen=True)
class Preset:
    name: str
    ambient_dim: int
    C: tuple
    A: tuple
    D: tuple
    index: float
    description: str


def _preset_table():
    blocks = [(0, 2), (2, 2)]
    return {
        p.name: p
        for p in (
            Preset("scalar-in-M2", 2, (), tuple(_diag_generators(2)), tuple(_full_generators(2)), 2.0,
                   "C = C1, A = diagonal 2x2, D = M_2; index of C in A is 2I"),
            Preset("diag-in-M3", 3, (), tuple(_diag_generators(3)), tuple(_full_generators(3)), 3.0,
                   "C = C1, A = diagonal 3x3, D = M_3; index of C in A is 3I"),
            # with C the centre of A, C' ∩ D = A and every admissible u0 would fix A
            Preset("block-M2-in-M4", 4, (), tuple(_block_generators(blocks, 4)), tuple(_full_generators(4)), 8.0,
                   "C = C1, A = M_2 + M_2 block diagonal, D = M_4; index of C in A is 8I "
                   "(4I over the centre of A)"),
            Preset("group-algebra-Z2-in-M2", 2, (), (SIGMA_X,), tuple(_full_generators(2)), 2.0,
                   "C = C1, A = span{1, sigma_x}, D = M_2; index of C in A is 2I"),
        )
    }


PRESETS = _preset_table()


@dataclass(frozen=True)
class Scenario:
    id: str
    ambient_dim: int
    C: tuple
    A: tuple
    D: tuple
    epsilon: float = 0.0
    seed: int = 0
    B: tuple | None = None
    preset: str | None = None
    metric: dict = field(default_factory=dict)
    checks: tuple = ALL_CHECKS
    rowbound_conditions: tuple = (1.1, 1.5, 2.0)
    factor_rows: int = 2

    def metric_config(self, **overrides) -> MetricConfig:
        opts = {"seed": self.seed, **self.metric, **overrides}
        return MetricConfig(**opts)


@dataclass(frozen=True, eq=False)
class Instance:
    """The algebras of a scenario, materialised."""

    C: ConcreteAlgebra
    A: ConcreteAlgebra
    B: ConcreteAlgebra
    D: ConcreteAlgebra
    u0: np.ndarray | None


def preset_scenario(name: str, epsilon: float = 0.0, seed: int = 0, **kw) -> Scenario:
    try:
        p = PRESETS[name]
    except KeyError:
        raise InvalidConfig(f"unknown preset {name!r}; known: {', '.join(PRESETS)}", field="preset") from None
    sid = kw.pop("id", None) or f"{name}-e{epsilon:g}-s{seed}"
    return Scenario(sid, p.ambient_dim, p.C, p.A, p.D, epsilon=epsilon, seed=seed, preset=name, **kw)


def perturbing_unitary(C: ConcreteAlgebra, D: ConcreteAlgebra, epsilon: float, seed: int):
    """Seeded unitary of ``C' ∩ D`` with ``||u0 - 1|| = epsilon`` (for ``epsilon <= 2``)."""
    angle = 2.0 * np.arcsin(min(epsilon, 2.0) / 2.0)
    return random_unitary_near_identity(C.ambient_dim, angle, seed, algebra=relative_commutant(C, D))


def build_instance(scn: Scenario) -> Instance:
    """Generate the algebras and check the nesting ``C ⊆ A ⊆ D``, ``B ⊆ D``.

    Raises
    ------
    InvalidConfig
        On inconsistent dimensions or nesting.
    """
    n = scn.ambient_dim
    algs = {}
    for name in ("C", "A", "D") + (("B",) if scn.B is not None else ()):
        gens = getattr(scn, name)
        for g in gens:
            if np.shape(g) != (n, n):
                raise InvalidConfig(f"generator of shape {np.shape(g)} in an ambient dimension {n} scenario",
                                    field=name)
        algs[name] = algebra_from_generators(n, gens)
    C, A, D = algs["C"], algs["A"], algs["D"]
    if not is_subalgebra(C, A):
        raise InvalidConfig("C is not contained in A", field="C")
    if not is_subalgebra(A, D):
        raise InvalidConfig("A is not contained in D", field="A")
    if scn.B is not None:
        B, u0 = algs["B"], None
        if not is_subalgebra(B, D):
            raise InvalidConfig("B is not contained in D", field="B")
        if not is_subalgebra(C, B):
            raise InvalidConfig("C is not contained in B", field="B")
    else:
        u0 = perturbing_unitary(C, D, scn.epsilon, scn.seed)
        B = conjugate_algebra(A, u0)
    return Instance(C, A, B, D, u0)


def random_inclusion(seed: int, max_dim: int = 6):
    """Seeded pair ``B ⊆ D`` of multi-matrix algebras in a random position.

    ``D`` is block diagonal for a random partition of ``N``; ``B`` refines each
    block of ``D`` into sub-blocks, some of them repeated along the diagonal
    (non-trivial multiplicity), and the pair is rotated by a random unitary.
    """
    rng = np.random.default_rng([seed, 101])
    n = int(rng.integers(2, max_dim + 1))
    d_sizes = _partition(n, rng)
    d_gens, b_gens = [], []
    off = 0
    for s in d_sizes:
        d_gens += _block_generators([(off, s)], n)
        # split the block as M_k x 1_m (+ remainder), giving multiplicity m
        m = int(rng.integers(1, s + 1))
        k = s // m
        for i in range(k):
            for j in range(k):
                g = np.zeros((n, n), dtype=complex)
                g[off:off + k * m, off:off + k * m] = np.kron(matrix_unit(k, i, j), np.eye(m))
                b_gens.append(g)
        rest = s - k * m
        if rest:
            b_gens += _block_units([(off + k * m, rest)], n)
        off += s
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    rot = [q @ g @ q.conj().T for g in d_gens]
    rot_b = [q @ g @ q.conj().T for g in b_gens]
    return algebra_from_generators(n, rot_b), algebra_from_generators(n, rot)


def _partition(n, rng):
    sizes = []
    left = n
    while left:
        s = int(rng.integers(1, left + 1))
        sizes.append(s)
        left -= s
    return sizes


# -- YAML encoding -------------------------------------------------------------

def encode_matrix(m):
    m = np.asarray(m, dtype=complex)
    if np.all(m.imag == 0):
        return [[float(v) for v in row] for row in m.real]
    return {"re": [[float(v) for v in row] for row in m.real], "im": [[float(v) for v in row] for row in m.imag]}


def decode_matrix(obj, field_name=None):
    try:
        if isinstance(obj, dict):
            if set(obj) != {"re", "im"}:
                raise ValueError("matrix mappings need exactly the keys 're' and 'im'")
            m = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
        else:
            m = np.asarray(obj, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"malformed matrix: {exc}", field=field_name) from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidConfig(f"matrix must be square, got shape {m.shape}", field=field_name)
    return m


def scenario_to_dict(scn: Scenario) -> dict:
    out = {
        "id": scn.id,
        "ambient_dim": scn.ambient_dim,
        "preset": scn.preset,
        "algebras": {name: [encode_matrix(g) for g in getattr(scn, name)] for name in ("C", "A", "D")},
        "perturbation": {"epsilon": float(scn.epsilon), "seed": int(scn.seed)},
        "metric": dict(scn.metric),
        "checks": list(scn.checks),
        "rowbound_conditions": [float(c) for c in scn.rowbound_conditions],
        "factor_rows": int(scn.factor_rows),
    }
    if scn.B is not None:
        out["algebras"]["B"] = [encode_matrix(g) for g in scn.B]
    return out


_METRIC_FIELDS = {f.name for f in fields(MetricConfig)}


def scenario_from_dict(doc: dict, where: str = "") -> Scenario:
    """Parse one scenario mapping; ``where`` prefixes field names in diagnostics."""
    def need(key, kind):
        if key not in doc:
            raise InvalidConfig(f"missing required field {key!r}", field=where + key)
        val = doc[key]
        if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
            raise InvalidConfig(f"wrong type {type(val).__name__}", field=where + key)
        return val

    if not isinstance(doc, dict):
        raise InvalidConfig("a scenario must be a mapping", field=where.rstrip(".") or None)
    known = {"id", "ambient_dim", "preset", "algebras", "perturbation", "metric", "checks", "rowbound_conditions",
             "factor_rows"}
    extra = set(doc) - known
    if extra:
        raise InvalidConfig(f"unknown field {sorted(extra)[0]!r}", field=where + sorted(extra)[0])
    sid = str(need("id", (str, int)))
    n = need("ambient_dim", int)
    algs = need("algebras", dict)
    mats = {}
    for name in ("C", "A", "D", "B"):
        if name not in algs:
            if name == "B":
                continue
            raise InvalidConfig(f"missing algebra {name!r}", field=f"{where}algebras.{name}")
        gens = algs[name] or []
        if not isinstance(gens, list):
            raise InvalidConfig("generators must be a list", field=f"{where}algebras.{name}")
        mats[name] = tuple(decode_matrix(g, f"{where}algebras.{name}[{i}]") for i, g in enumerate(gens))
    pert = doc.get("perturbation") or {}
    try:
        eps = float(pert.get("epsilon", 0.0))
        seed = int(pert.get("seed", 0))
    except (TypeError, ValueError):
        raise InvalidConfig("perturbation needs numeric epsilon and integer seed",
                            field=where + "perturbation") from None
    if not 0.0 <= eps <= 2.0:
        raise InvalidConfig("epsilon must lie in [0, 2]", field=where + "perturbation.epsilon")
    metric = doc.get("metric") or {}
    bad = set(metric) - _METRIC_FIELDS
    if bad:
        raise InvalidConfig(f"unknown metric option {sorted(bad)[0]!r}", field=f"{where}metric.{sorted(bad)[0]}")
    try:
        MetricConfig(**metric)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc), field=where + "metric") from None
    checks = tuple(doc.get("checks", ALL_CHECKS))
    unknown = [c for c in checks if c not in ALL_CHECKS]
    if unknown:
        raise InvalidConfig(f"unknown check {unknown[0]!r}", field=where + "checks")
    return Scenario(
        id=sid,
        ambient_dim=n,
        C=mats["C"],
        A=mats["A"],
        D=mats["D"],
        B=mats.get("B"),
        epsilon=eps,
        seed=seed,
        preset=doc.get("preset"),
        metric=dict(metric),
        checks=checks,
        rowbound_conditions=tuple(float(c) for c in doc.get("rowbound_conditions", (1.1, 1.5, 2.0))),
        factor_rows=int(doc.get("factor_rows", 2)),
    )


def _line_of(node, path):
    """1-based line of the YAML node at ``path`` (keys and list indices)."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            hit = next(((k, v) for k, v in node.value if k.value == key), None)
            if hit is None:
                break
            node = hit[1]
            line = hit[0].start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def _split_field(name):
    path = []
    for part in name.split("."):
        while "[" in part:
            head, rest = part.split("[", 1)
            if head:
                path.append(head)
            idx, part = rest.split("]", 1)
            path.append(int(idx))
        if part:
            path.append(part)
    return path


def load_yaml(text: str):
    """Parse YAML, turning syntax errors into :class:`InvalidConfig` with a line number."""
    try:
        return yaml.safe_load(text), yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise InvalidConfig(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                            line=mark.line + 1 if mark else None) from None


def parse_scenarios(text: str) -> list[Scenario]:
    """Scenarios from a document ``{scenarios: [...]}`` (or a single mapping)."""
    doc, root = load_yaml(text)
    try:
        if isinstance(doc, dict) and "scenarios" in doc:
            items = doc["scenarios"]
            if not isinstance(items, list):
                raise InvalidConfig("'scenarios' must be a list", field="scenarios")
            out = [scenario_from_dict(s, f"scenarios[{i}].") for i, s in enumerate(items)]
        else:
            out = [scenario_from_dict(doc)]
    except InvalidConfig as exc:
        if exc.field is not None and exc.line is None:
            raise InvalidConfig(exc.message, field=exc.field, line=_line_of(root, _split_field(exc.field))) from None
        raise
    ids = [s.id for s in out]
    if len(set(ids)) != len(ids):
        raise InvalidConfig("scenario ids must be unique", field="scenarios")
    return out


def dump_scenarios(scenarios) -> str:
    return yaml.safe_dump({"scenarios": [scenario_to_dict(s) for s in scenarios]}, sort_keys=False,
                          default_flow_style=None, width=120)


def expand_generation_config(doc: dict) -> list[Scenario]:
    """Scenarios from a generation config.

    Each entry of ``generate`` names a ``preset`` and lists ``epsilons`` and
    ``seeds``; every combination becomes one scenario.  ``metric`` and
    ``checks`` apply to all of them.
    """
    if not isinstance(doc, dict) or not isinstance(doc.get("generate"), list):
        raise InvalidConfig("a generation config needs a 'generate' list", field="generate")
    metric = doc.get("metric") or {}
    bad = set(metric) - _METRIC_FIELDS
    if bad:
        raise InvalidConfig(f"unknown metric option {sorted(bad)[0]!r}", field=f"metric.{sorted(bad)[0]}")
    checks = tuple(doc.get("checks", ALL_CHECKS))
    for c in checks:
        if c not in ALL_CHECKS:
            raise InvalidConfig(f"unknown check {c!r}", field="checks")
    out = []
    for i, entry in enumerate(doc["generate"]):
        if not isinstance(entry, dict) or "preset" not in entry:
            raise InvalidConfig("each entry needs a 'preset'", field=f"generate[{i}]")
        eps_list = entry.get("epsilons", [entry.get("epsilon", 0.0)])
        seeds = entry.get("seeds", [entry.get("seed", 0)])
        for eps in eps_list:
            for seed in seeds:
                if not isinstance(seed, int) or isinstance(seed, bool):
                    raise InvalidConfig("seeds must be integers", field=f"generate[{i}].seeds")
                try:
                    eps = float(eps)
                except (TypeError, ValueError):
                    raise InvalidConfig("epsilons must be numbers", field=f"generate[{i}].epsilons") from None
                if not 0.0 <= eps <= 2.0:
                    raise InvalidConfig("epsilon must lie in [0, 2]", field=f"generate[{i}].epsilons")
                out.append(preset_scenario(entry["preset"], eps, seed, metric=dict(metric), checks=checks))
    return out


def with_overrides(scn: Scenario, **kw) -> Scenario:
    return replace(scn, **kw)
