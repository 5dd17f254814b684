"""Scenario configuration, the shift worked example, and report emission.

Scenarios are TOML files; reports are JSON plus CSV norm curves, written
deterministically (sorted keys, fixed float formatting, no timestamps) so
that reruns with identical seeds produce byte-identical files.  Exit-code
contract: 0 = pass, 1 = input/config error, 2 = mathematical assertion
failure.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .admissibility import (
    input_norm,
    output_norm,
    semivariation_chain_check,
    windowed_output_norm,
    zero_class_classify,
)
from .duality import check_c_adm_duality, check_control_duality, check_observation_duality
from .errors import ConfigError, InvalidInputError
from .measures import BVFunction, derivative_measure, detect_atoms
from .semigroups import (
    ControlOperator,
    ObservationOperator,
    bounded_control,
    control_from_bv,
    matrix_model,
    random_nilpotent_model,
    shift_left_sun,
    shift_right_l1,
    sun_dual,
)

__all__ = [
    "Scenario",
    "ShiftExampleConfig",
    "ShiftExampleReport",
    "parse_tau_grid",
    "load_scenario",
    "run_shift_example",
    "run_scenario",
    "corpus_dir",
    "corpus_index",
]

EXIT_PASS = 0
EXIT_INPUT_ERROR = 1
EXIT_ASSERTION = 2


def corpus_dir() -> str:
    return os.path.join(os.path.dirname(__file__), "corpus")


def corpus_index() -> list:
    with open(os.path.join(corpus_dir(), "index.json")) as fh:
        return json.load(fh)


def parse_tau_grid(spec: str) -> np.ndarray:
    """Parse ``<min>:<max>:geom=<k>`` into k descending horizons."""
    try:
        lo_s, hi_s, geom_s = spec.split(":")
        lo, hi = float(lo_s), float(hi_s)
        if not geom_s.startswith("geom="):
            raise ValueError("expected geom=<k>")
        k = int(geom_s.split("=", 1)[1])
    except (ValueError, AttributeError) as exc:
        raise ConfigError(f"bad tau grid {spec!r}: expected min:max:geom=k") from exc
    if not (0 < lo < hi and k >= 2):
        raise ConfigError(f"bad tau grid {spec!r}: need 0 < min < max and k >= 2")
    return np.geomspace(hi, lo, k)


# ---------------------------------------------------------------------------
# scenario loading
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    mode: str
    seed: int
    semigroup: dict
    operator: dict
    run: dict
    output: dict
    raw: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"name": self.name, "mode": self.mode, "seed": self.seed,
                "semigroup": self.semigroup, "operator": self.operator,
                "run": self.run, "output": self.output}


_MODES = ("norms", "sv-chain", "zero-class", "duality-control",
          "duality-observation", "shift-example")


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        # TOMLDecodeError messages carry line/column information already
        raise ConfigError(f"{path}: {exc}") from exc
    mode = raw.get("mode")
    if mode not in _MODES:
        raise ConfigError(f"{path}: mode must be one of {_MODES}, got {mode!r}")
    return Scenario(
        name=raw.get("name", os.path.splitext(os.path.basename(path))[0]),
        mode=mode,
        seed=int(raw.get("seed", 0)),
        semigroup=dict(raw.get("semigroup", {})),
        operator=dict(raw.get("operator", {})),
        run=dict(raw.get("run", {})),
        output=dict(raw.get("output", {})),
        raw=raw,
    )


def _build_model(spec: dict, rng: np.random.Generator):
    kind = spec.get("kind")
    if kind == "shift-right-l1":
        return shift_right_l1(int(spec.get("n", 1024)))
    if kind == "shift-left-sun":
        return shift_left_sun(int(spec.get("n", 1024)))
    if kind == "matrix":
        if "A" not in spec:
            raise ConfigError("matrix semigroup needs A = [[...]]")
        return matrix_model(np.asarray(spec["A"], dtype=float))
    if kind == "random-nilpotent":
        return random_nilpotent_model(int(spec.get("d", 4)), rng)
    raise ConfigError(f"unknown semigroup kind {kind!r}")


def _parse_p(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infty", "infinity"):
            return math.inf
        return float(value)
    return float(value)


def _build_operator(spec: dict, S, rng: np.random.Generator, base_dir: str):
    """Returns a dict with whichever of control/observation ops apply."""
    lam = float(spec.get("lam", 1.0))
    typ = spec.get("type")
    if typ == "bv-file":
        path = spec.get("path")
        if not path:
            raise ConfigError("bv-file operator needs path")
        if not os.path.isabs(path):
            cand = os.path.join(base_dir, path)
            path = cand if os.path.exists(cand) else os.path.join(corpus_dir(), path)
        c = BVFunction.load(path)
        mu = derivative_measure(c)
        if spec.get("boundary_atom", "keep") == "drop":
            mu = mu.drop_atom_at(1.0)
        return {"kind": "bv", "bv": c, "mu": mu, "lam": lam,
                "observation": ObservationOperator(kind="measure", mu=mu)}
    if typ == "vector":
        b = np.asarray(spec["values"], dtype=float)
        return {"kind": "vector", "lam": lam, "control": bounded_control(S, b, lam=lam)}
    if typ == "random-vector":
        b = rng.standard_normal(S.dim)
        b = b / max(S.norm(b), 1e-300)
        return {"kind": "vector", "lam": lam, "control": bounded_control(S, b, lam=lam)}
    if typ == "matrix-row":
        row = np.asarray(spec["values"], dtype=float).reshape(-1)
        return {"kind": "row", "lam": lam,
                "observation": ObservationOperator(kind="matrix_row", row=row),
                "control": bounded_control(S, row, lam=lam)}
    if typ == "random-row":
        row = rng.standard_normal(S.dim)
        row = row / max(np.linalg.norm(row), 1e-300)
        return {"kind": "row", "lam": lam,
                "observation": ObservationOperator(kind="matrix_row", row=row),
                "control": bounded_control(S, row, lam=lam)}
    raise ConfigError(f"unknown operator type {typ!r}")


# ---------------------------------------------------------------------------
# deterministic report writing
# ---------------------------------------------------------------------------

def write_json_report(path: str, payload: dict):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    buf = io.StringIO()
    json.dump(payload, buf, indent=2, sort_keys=True)
    buf.write("\n")
    with open(path, "w", newline="\n") as fh:
        fh.write(buf.getvalue())


def write_norm_curve_csv(path: str, curve):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "lower", "upper", "converged"])
        for tau, br in sorted(curve, key=lambda e: -e[0]):
            writer.writerow([f"{tau:.17g}", f"{br.lower:.17g}", f"{br.upper:.17g}",
                             str(bool(br.converged)).lower()])


# ---------------------------------------------------------------------------
# the shift worked example
# ---------------------------------------------------------------------------

@dataclass
class ShiftExampleConfig:
    n: int = 1024
    tau_grid: str = "1e-3:0.5:geom=8"
    boundary_atom: str = "keep"
    atom_tol: float = 1e-2
    rel_threshold: float = 1e-2
    lam: float = 1.0
    seed: int = 0


@dataclass
class ShiftExampleReport:
    c_descriptor: dict
    decomposition: dict
    admissibility_bracket: dict
    zero_class: dict
    atoms: list
    windowed_norms: list
    agreement: bool
    membership: dict
    config: dict
    curve: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "c": self.c_descriptor,
            "derivative_decomposition": self.decomposition,
            "l1_admissibility": self.admissibility_bracket,
            "zero_class": self.zero_class,
            "atoms": [[float(a), float(w)] for a, w in self.atoms],
            "windowed_norms": self.windowed_norms,
            "agreement": bool(self.agreement),
            "membership": self.membership,
            "config": self.config,
        }


def run_shift_example(c: BVFunction, cfg: ShiftExampleConfig) -> ShiftExampleReport:
    """Full zero-class analysis of the observation functional built from c.

    Runs the norm route (output norms over the horizon grid, classified)
    and the measure route (atom detection on the distributional derivative)
    independently, cross-checks the verdicts, and evaluates membership in
    the representable sun-dual control set.
    """
    S = shift_right_l1(cfg.n)
    mu_full = derivative_measure(c)
    mu = mu_full.drop_atom_at(1.0) if cfg.boundary_atom == "drop" else mu_full
    C = ObservationOperator(kind="measure", mu=mu)
    taus = parse_tau_grid(cfg.tau_grid)

    curve = [(float(tau), output_norm(C, 1.0, tau, S)) for tau in taus]
    verdict = zero_class_classify(curve, rel_threshold=cfg.rel_threshold)
    atoms = detect_atoms(mu, tol=cfg.atom_tol)
    agreement = (verdict.verdict != "inconclusive") and (
        (verdict.verdict == "zero_class") == (len(atoms) == 0))

    windowed = []
    tau_min = float(taus[-1])
    for loc, weight in atoms:
        xi = min(max(loc, 0.0), 1.0 - tau_min)
        br = windowed_output_norm(C, xi, tau_min, S)
        windowed.append({"location": float(loc), "weight": float(weight),
                         "xi": float(xi), "tau": tau_min,
                         "lower": br.lower, "upper": br.upper})

    S_sun = shift_left_sun(cfg.n)
    _, membership = control_from_bv(c, S_sun, lam=cfg.lam, mu=mu)

    boundary_weight = mu_full.atom_weight_at(1.0)
    decomposition = {
        "interior_atoms": [[float(a), float(w)] for a, w in mu.atoms if a < 1.0],
        "boundary_atom": float(boundary_weight),
        "boundary_atom_dropped": cfg.boundary_atom == "drop",
        "ac_mass": mu.ac_norm(),
        "sc_scale": float(mu.sc_scale),
        "total_variation": mu.total_variation_norm(),
    }
    return ShiftExampleReport(
        c_descriptor=c.describe(),
        decomposition=decomposition,
        admissibility_bracket=curve[0][1].to_json_dict(),
        zero_class=verdict.to_json_dict(),
        atoms=[(a, w) for a, w in atoms],
        windowed_norms=windowed,
        agreement=agreement,
        membership=membership,
        config={"n": cfg.n, "tau_grid": cfg.tau_grid,
                "boundary_atom": cfg.boundary_atom, "atom_tol": cfg.atom_tol,
                "rel_threshold": cfg.rel_threshold, "lam": cfg.lam, "seed": cfg.seed},
        curve=curve,
    )


# ---------------------------------------------------------------------------
# scenario dispatch
# ---------------------------------------------------------------------------

def run_scenario(path: str, out_dir: str | None = None, jobs: int = 1) -> int:
    """Execute a scenario file; writes reports, returns the exit code."""
    try:
        scenario = load_scenario(path)
        return _dispatch(scenario, os.path.dirname(os.path.abspath(path)), out_dir)
    except (ConfigError, InvalidInputError, OSError) as exc:
        print(f"error: {exc}")
        return EXIT_INPUT_ERROR


def _dispatch(sc: Scenario, base_dir: str, out_dir: str | None) -> int:
    rng = np.random.default_rng(sc.seed)
    out = out_dir or sc.output.get("dir") or "."
    prefix = os.path.join(out, sc.name)
    S = _build_model(sc.semigroup, rng)
    run = sc.run

    if sc.mode == "shift-example":
        op = _build_operator(sc.operator, S, rng, base_dir)
        if op["kind"] != "bv":
            raise ConfigError("shift-example needs a bv-file operator")
        cfg = ShiftExampleConfig(
            n=S.n, tau_grid=run.get("tau_grid", "1e-3:0.5:geom=8"),
            boundary_atom=sc.operator.get("boundary_atom", "keep"),
            atom_tol=float(run.get("atom_tol", 1e-2)),
            rel_threshold=float(run.get("rel_threshold", 1e-2)),
            lam=float(sc.operator.get("lam", 1.0)), seed=sc.seed)
        report = run_shift_example(op["bv"], cfg)
        payload = report.to_json_dict()
        payload["scenario"] = sc.to_json_dict()
        write_json_report(prefix + ".report.json", payload)
        write_norm_curve_csv(prefix + ".norms.csv", report.curve)
        print(f"{sc.name}: agreement={report.agreement} "
              f"verdict={report.zero_class['verdict']} atoms={len(report.atoms)}")
        return EXIT_PASS if report.agreement else EXIT_ASSERTION

    if sc.mode == "sv-chain":
        op = _build_operator(sc.operator, S, rng, base_dir)
        B = op.get("control")
        if B is None:
            raise ConfigError("sv-chain needs a control operator (vector/matrix-row)")
        tau = float(run.get("tau", 1.0))
        lam = float(run.get("lam", op["lam"]))
        report = semivariation_chain_check(B, lam, tau, S, rng=rng,
                              tol=float(run.get("tolerance", 1e-6)))
        payload = report.to_json_dict()
        payload["scenario"] = sc.to_json_dict()
        write_json_report(prefix + ".report.json", payload)
        print(f"{sc.name}: sv-chain passed={report.passed} SV={report.semivariation:.6g}")
        return EXIT_PASS if report.passed else EXIT_ASSERTION

    if sc.mode == "norms":
        op = _build_operator(sc.operator, S, rng, base_dir)
        p = _parse_p(run.get("p", 2.0))
        taus = parse_tau_grid(run.get("tau_grid", "1e-2:1.0:geom=6"))
        curve = []
        if "control" in op:
            for tau in sorted(taus):
                curve.append((float(tau), input_norm(op["control"], p, tau, S, rng=rng)))
        else:
            for tau in sorted(taus):
                curve.append((float(tau), output_norm(op["observation"], p, tau, S, rng=rng)))
        write_norm_curve_csv(prefix + ".norms.csv", curve)
        payload = {"scenario": sc.to_json_dict(),
                   "curve": [{"tau": t, **br.to_json_dict()} for t, br in
                             sorted(curve, key=lambda e: -e[0])]}
        write_json_report(prefix + ".report.json", payload)
        print(f"{sc.name}: wrote {len(curve)} norm brackets")
        return EXIT_PASS

    if sc.mode == "zero-class":
        op = _build_operator(sc.operator, S, rng, base_dir)
        taus = parse_tau_grid(run.get("tau_grid", "1e-3:0.5:geom=8"))
        if "observation" in op:
            curve = [(float(t), output_norm(op["observation"], 1.0, t, S, rng=rng))
                     for t in taus]
        else:
            curve = [(float(t), input_norm(op["control"], math.inf, t, S, rng=rng))
                     for t in taus]
        verdict = zero_class_classify(curve,
                                      rel_threshold=float(run.get("rel_threshold", 1e-2)))
        write_norm_curve_csv(prefix + ".norms.csv", curve)
        payload = verdict.to_json_dict()
        payload["scenario"] = sc.to_json_dict()
        write_json_report(prefix + ".verdict.json", payload)
        print(f"{sc.name}: verdict={verdict.verdict}")
        return EXIT_PASS

    if sc.mode in ("duality-control", "duality-observation"):
        op = _build_operator(sc.operator, S, rng, base_dir)
        taus = parse_tau_grid(run.get("tau_grid", "0.25:1.0:geom=3")
                              if S.kind == "matrix" else run.get("tau_grid", "0.125:0.5:geom=3"))
        p = _parse_p(run.get("p", 2.0))
        kwargs = dict(rng=rng, samples=int(run.get("samples", 32)),
                      resolution=int(run.get("resolution", 64)))
        if sc.mode == "duality-control":
            B = op.get("control")
            if B is None:
                raise ConfigError("duality-control needs a control operator")
            report = check_control_duality(B, p, taus, S, **kwargs)
        else:
            C = op.get("observation")
            if C is None:
                raise ConfigError("duality-observation needs an observation operator")
            report = check_observation_duality(C, p, taus, S, **kwargs)
        payload = report.to_json_dict()
        payload["scenario"] = sc.to_json_dict()
        write_json_report(prefix + ".report.json", payload)
        print(f"{sc.name}: duality passed={report.passed}")
        return EXIT_PASS if report.passed else EXIT_ASSERTION

    raise ConfigError(f"unhandled mode {sc.mode!r}")
