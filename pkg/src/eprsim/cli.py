"""Command-line interface.

Every run is a pure function of (command, effective config, seed). With
``--out DIR`` the result artifacts and a ``manifest.json`` are written there;
passing that manifest back via ``--config`` reproduces the artifacts byte for
byte. Nothing is written unless the whole computation succeeded.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .composite import (DEFAULT_SWEEP_DIMS, NO_SIGNALING_TOL, build_joint_refinement,
                        epr_assignment_report, no_signaling_check, no_signaling_sweep,
                        refinement_via, schmidt_decompose, selective_shift)
from .errors import EprSimError, InvalidConfig, InvariantViolation
from .experiment import ExperimentConfig, event_log_csv, run_experiment
from .linalg import (SIGMA_X, SIGMA_Z, Operator, PureState, from_json, maximally_entangled,
                     singlet, state_distance, to_json)
from .measurement import (AmbiguousPostState, born_probabilities, luders_update,
                          make_canonical_pair, nonselective_update, sample_outcome,
                          von_neumann_update)
from .spectral import apply_function, lift, spectral_decompose

COMMANDS = ("measure", "schmidt", "epr-report", "refine", "nosignal", "chsh", "demo")
U64_MAX = 2**64 - 1


class CommandOutput:
    def __init__(self, result: dict, text: str, extra: dict | None = None):
        self.result = result
        self.text = text
        self.extra = extra or {}


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# --- config helpers ---------------------------------------------------------

def _load_json(path: str, field: str) -> dict:
    try:
        if path.startswith("pkg:"):
            text = resources.files("eprsim").joinpath("data", path[4:]).read_text()
        else:
            text = Path(path).read_text()
    except (OSError, FileNotFoundError) as exc:
        raise InvalidConfig(field, f"cannot read {path!r}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(field, f"invalid JSON in {path!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfig(field, "top-level JSON value must be an object")
    return data


def _decode(cfg: dict, key: str, kind: str | None = None):
    if key not in cfg:
        raise InvalidConfig(key, "missing")
    try:
        return from_json(cfg[key], field=key, kind=kind)
    except ValueError as exc:
        path, _, msg = str(exc).partition(": ")
        if not path.startswith(key):
            path, msg = key, str(exc)
        raise InvalidConfig(path, msg) from exc


def _dims(cfg: dict, total: int | None = None) -> tuple[int, int]:
    dims = cfg.get("dims")
    if dims is None and total is not None:
        d = int(round(math.sqrt(total)))
        if d * d == total:
            return d, d
    if (not isinstance(dims, list) or len(dims) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 1 for x in dims)):
        raise InvalidConfig("dims", f"expected [d1, d2] with positive integers, got {dims!r}")
    if total is not None and dims[0] * dims[1] != total:
        raise InvalidConfig("dims", f"{dims[0]} x {dims[1]} does not match state dimension {total}")
    return dims[0], dims[1]


def _observable(cfg: dict, key: str):
    op = _decode(cfg, key, kind="operator")
    if not isinstance(op, Operator):
        raise InvalidConfig(key, "expected an operator (matrix)")
    if not op.is_hermitian():
        raise InvalidConfig(key, "operator is not Hermitian")
    return op


def _state(cfg: dict, key: str = "state", pure: bool = False):
    st = _decode(cfg, key)
    if pure and not isinstance(st, PureState):
        raise InvalidConfig(key, "expected a pure state vector")
    return st


def _fmt(x: float, digits: int = 6) -> str:
    return f"{x:.{digits}f}".rstrip("0").rstrip(".") if x == x else "nan"


def _vec_text(v) -> str:
    parts = []
    for z in np.asarray(v):
        z = complex(z)
        if abs(z.imag) < 5e-7:
            parts.append(f"{z.real:+.4f}")
        else:
            parts.append(f"{z.real:+.4f}{z.imag:+.4f}i")
    return "[" + ", ".join(parts) + "]"


# --- commands ---------------------------------------------------------------

def cmd_measure(cfg: dict, seed: int) -> CommandOutput:
    state = _state(cfg)
    obs = _observable(cfg, "observable")
    if obs.dim != state.dim:
        raise InvalidConfig("observable", f"dimension {obs.dim} does not match state dimension {state.dim}")
    d = spectral_decompose(obs, label=cfg.get("label", "observable"))
    refinement = None
    if "refinement" in cfg:
        refinement = spectral_decompose(_observable(cfg, "refinement"), label="refinement")
    probs = born_probabilities(state, d)
    outcomes, lines = [], []
    lines.append(f"observable spectrum: {[_fmt(x) for x in d.eigenvalues]}, "
                 f"multiplicities {list(d.multiplicities)}")
    for i, (lam, p) in enumerate(probs):
        entry = {"eigenvalue": lam, "probability": p, "multiplicity": d.multiplicities[i]}
        lines.append(f"outcome {_fmt(lam)}: probability {_fmt(p)} (multiplicity {d.multiplicities[i]})")
        if p > 1e-12:
            lud = luders_update(state, d, i)
            vn = von_neumann_update(state, d, i)
            entry["luders"] = lud.to_json()
            entry["von_neumann"] = vn.to_json()
            lines.append(f"  Lüders post-state: rank-{d.multiplicities[i]} projection")
            if isinstance(vn, AmbiguousPostState):
                lines.append(f"  von Neumann: AMBIGUOUS (eigenspace dim {vn.eigenspace_dim}); "
                             "a refinement is required")
            else:
                lines.append("  von Neumann: determined (nondegenerate), equals Lüders")
            if refinement is not None and d.multiplicities[i] > 1:
                try:
                    ref = von_neumann_update(state, d, i, refinement=refinement)
                except EprSimError as exc:
                    raise InvalidConfig("refinement", str(exc)) from exc
                entry["von_neumann_refined"] = ref.to_json()
                line = f"  von Neumann with refinement: refined outcome {_fmt(ref.outcome)}"
                if isinstance(ref.post_state, PureState):
                    line += f", post-state {_vec_text(ref.post_state.amplitudes)}"
                lines.append(line)
        outcomes.append(entry)
    sample = sample_outcome(state, d, rng_for(seed))
    lines.append(f"sampled outcome (seed {seed}): {_fmt(sample.outcome)}")
    result = {
        "spectrum": d.to_json(),
        "outcomes": outcomes,
        "nonselective_state": to_json(nonselective_update(state, d)),
        "sample": sample.to_json(),
    }
    return CommandOutput(result, "\n".join(lines))


def cmd_schmidt(cfg: dict, seed: int) -> CommandOutput:
    psi = _state(cfg, pure=True)
    d1, d2 = _dims(cfg, psi.dim)
    sd = schmidt_decompose(psi, d1, d2)
    err = float(np.max(np.abs(sd.reconstruct() - psi.amplitudes)))
    if err > 1e-9:
        raise InvariantViolation(f"Schmidt reconstruction error {err:.3e}")
    lines = [f"Schmidt coefficients: {[round(float(c), 4) for c in sd.coefficients]}",
             f"Schmidt rank: {sd.rank} ({'entangled' if sd.rank > 1 else 'product'})",
             f"reconstruction error: {err:.2e}"]
    for k, (c, u, v) in enumerate(zip(sd.coefficients, sd.basis_1, sd.basis_2)):
        lines.append(f"  {k}: {_fmt(float(c))}  u={_vec_text(u.amplitudes)}  v={_vec_text(v.amplitudes)}")
    result = sd.to_json()
    result["reconstruction_error"] = err
    return CommandOutput(result, "\n".join(lines))


def render_report(report, names=("A", "B")) -> str:
    lines = []
    for name, fam, flags in (
            (names[0], report.family_a, report.ambiguity_flags_a),
            (names[1], report.family_b, report.ambiguity_flags_b)):
        lines.append(f"measuring {name} on S1 (Lüders conditional states on S2):")
        for lam, p, st in zip(fam.outcomes, fam.probabilities, fam.states):
            lines.append(f"  outcome {_fmt(lam)} (p={_fmt(p)}): {_vec_text(st.amplitudes)}")
        lines.append(f"  family orthonormal: {fam.orthonormal}; partner observable "
                     f"{'constructed' if fam.observable is not None else 'not constructible'}")
        amb = sum(isinstance(f, AmbiguousPostState) for f in flags)
        lines.append(f"  von Neumann verdict for {name}(x)I: {amb}/{len(flags)} outcomes ambiguous")
    lines.append(f"||[A, B]|| = {_fmt(report.commutator_norm_ab)}")
    if report.commutator_norm_pq is None:
        lines.append("||[P, Q]||: undefined (partner observables not both constructible)")
    else:
        lines.append(f"||[P, Q]|| = {_fmt(report.commutator_norm_pq)} (P, Q noncommuting: "
                     f"{report.commutator_norm_pq > 1e-8})")
    lines.append("EPR (Lüders) assigns both families to S2; von Neumann assigns none "
                 "without a refinement." if report.all_ambiguous else
                 "some outcomes are nondegenerate on the composite system")
    return "\n".join(lines)


def cmd_epr_report(cfg: dict, seed: int) -> CommandOutput:
    preset = cfg.get("preset", "qubit" if "state" not in cfg else None)
    if preset == "qubit":
        psi = PureState(np.array([1, 0, 0, 1]) / np.sqrt(2))
        a = spectral_decompose(SIGMA_Z, label="sigma_z")
        b = spectral_decompose(SIGMA_X, label="sigma_x")
        d2 = 2
    elif preset == "qudit":
        dim = cfg.get("dim", 8)
        if not isinstance(dim, int) or isinstance(dim, bool) or not 2 <= dim <= 8:
            raise InvalidConfig("dim", f"must be an integer in [2, 8], got {dim!r}")
        pair = make_canonical_pair(dim)
        psi = maximally_entangled(dim)
        a, b = pair.position_spectrum(), pair.momentum_spectrum()
        d2 = dim
    elif preset is None:
        psi = _state(cfg, pure=True)
        a = spectral_decompose(_observable(cfg, "a"), label="A")
        b = spectral_decompose(_observable(cfg, "b"), label="B")
        d1, d2 = _dims(cfg, psi.dim)
        if a.dim != d1 or b.dim != d1:
            raise InvalidConfig("a", f"observables must act on S1 of dimension {d1}")
    else:
        raise InvalidConfig("preset", f"must be 'qubit' or 'qudit', got {preset!r}")
    try:
        report = epr_assignment_report(psi, a, b, d2)
    except EprSimError as exc:
        raise InvalidConfig("a", str(exc)) from exc
    result = report.to_json()
    result["preset"] = preset
    return CommandOutput(result, render_report(report))


def cmd_refine(cfg: dict, seed: int) -> CommandOutput:
    a_op = _observable(cfg, "a") if "a" in cfg else SIGMA_Z
    c_op = _observable(cfg, "c") if "c" in cfg else SIGMA_X
    a = spectral_decompose(a_op, label="A")
    c = spectral_decompose(c_op, label="C")
    if not a.is_nondegenerate:
        raise InvalidConfig("a", "must have a nondegenerate spectrum")
    if not c.is_nondegenerate:
        raise InvalidConfig("c", "must have a nondegenerate spectrum")
    jr = build_joint_refinement(a, c)
    d1, d2 = a.dim, c.dim
    err_f = float(np.max(np.abs(apply_function(jr.decomposition, jr.f).entries
                                - np.kron(a_op.entries, np.eye(d2)))))
    err_g = float(np.max(np.abs(apply_function(jr.decomposition, jr.g).entries
                                - np.kron(np.eye(d1), c_op.entries))))
    psi = _state(cfg) if "state" in cfg else (singlet() if (d1, d2) == (2, 2) else None)
    result = jr.to_json()
    result.update({"f_error": err_f, "g_error": err_g})
    lines = [f"joint refinement D on {d1}x{d2}: {len(jr.decomposition)} distinct eigenvalues",
             f"A(x)I = f(D) error {err_f:.2e}; I(x)C = g(D) error {err_g:.2e}"]
    for lab, (la, lc) in zip(jr.decomposition.eigenvalues, jr.pairs):
        lines.append(f"  D={int(lab)} -> (A={_fmt(la)}, C={_fmt(lc)})")
    if psi is not None:
        if psi.dim != d1 * d2:
            raise InvalidConfig("state", f"dimension {psi.dim} does not match {d1}x{d2}")
        fine = born_probabilities(psi, jr.decomposition)
        coarse: dict = {}
        for lab, p in fine:
            coarse[jr.f(lab)] = coarse.get(jr.f(lab), 0.0) + p
        direct = dict(born_probabilities(psi, lift(a, d2)))
        diff = max(abs(coarse[k] - direct[k]) for k in direct)
        if diff > 1e-10:
            raise InvariantViolation(f"coarse-grained statistics differ from A(x)I by {diff:.3e}")
        result["coarse_grained_probabilities"] = [[k, coarse[k]] for k in sorted(coarse)]
        result["direct_probabilities"] = [[k, direct[k]] for k in sorted(direct)]
        lines.append("coarse-grained D statistics vs A(x)I: "
                     + ", ".join(f"{_fmt(k)}: {_fmt(coarse[k])}/{_fmt(direct[k])}" for k in sorted(direct)))
    return CommandOutput(result, "\n".join(lines))


def cmd_nosignal(cfg: dict, seed: int) -> CommandOutput:
    n = cfg.get("n_instances", 1000)
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise InvalidConfig("n_instances", f"must be a positive integer, got {n!r}")
    dims = cfg.get("dims", [list(d) for d in DEFAULT_SWEEP_DIMS])
    if (not isinstance(dims, list) or not dims or not all(
            isinstance(d, list) and len(d) == 2 and all(isinstance(x, int) and 1 < x <= 8 for x in d)
            for d in dims)):
        raise InvalidConfig("dims", "expected a list of [d1, d2] pairs with 2 <= d <= 8")
    sweep = no_signaling_sweep(n, rng_for(seed), dims)
    if not sweep.passed:
        raise InvariantViolation(f"no-signaling violated: {sweep.max_distance:.3e}")
    text = (f"{n} random (rho, A) instances over dims {[list(d) for d in sweep.dims]}\n"
            f"max trace distance of S2 marginal under non-selective A(x)I: {sweep.max_distance:.2e} "
            f"(tolerance {NO_SIGNALING_TOL:.0e}) -> {'PASS' if sweep.passed else 'FAIL'}\n"
            f"max shift of S2 state under selective (conditioned) update: {sweep.max_selective_shift:.3f}")
    return CommandOutput(sweep.to_json(), text)


CLI_ONLY_KEYS = ("workers", "write_events")


def cmd_chsh(cfg: dict, seed: int) -> CommandOutput:
    workers = cfg.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        raise InvalidConfig("workers", f"must be a positive integer, got {workers!r}")
    write_events = cfg.get("write_events", True)
    if not isinstance(write_events, bool):
        raise InvalidConfig("write_events", "must be true or false")
    exp_cfg = {k: v for k, v in cfg.items() if k not in CLI_ONLY_KEYS}
    exp_cfg["seed"] = seed
    ec = ExperimentConfig.from_dict(exp_cfg)
    res = run_experiment(ec, workers=workers)
    dt = res.coincidences.dt
    if len(dt) and float(np.max(np.abs(dt))) >= ec.window:
        raise InvariantViolation("a coincidence pair violates |dt| < window")
    lines = [f"pairs emitted {ec.n_pairs}, detections A={len(res.coincidences.events_a)} "
             f"B={len(res.coincidences.events_b)}, coincidences {res.coincidences.n_pairs} "
             f"(fraction {_fmt(res.coincidence_fraction, 4)}, window {ec.window:g})"]
    for e in res.correlations:
        lines.append(f"  E({_fmt(e.setting_a, 4)}, {_fmt(e.setting_b, 4)}) = {e.value:+.4f} "
                     f"± {e.stderr:.4f}  (n={e.n})")
    if res.chsh is not None:
        lines.append(f"S = {res.chsh.s:.4f} ± {res.chsh.stderr:.4f}  (local bound 2, "
                     f"quantum bound {2 * math.sqrt(2):.4f})")
    extra = {"events.csv": event_log_csv(res.coincidences.events_a, res.coincidences.events_b)} \
        if write_events else {}
    return CommandOutput(res.to_json(), "\n".join(lines), extra)


def cmd_demo(cfg: dict, seed: int) -> CommandOutput:
    lines = ["== singlet, A = sigma_z on S1, measured as A(x)I =="]
    psi = singlet()
    a = spectral_decompose(SIGMA_Z, label="sigma_z")
    ai = lift(a, 2, label="sigma_z(x)I")
    lines.append(f"A(x)I spectrum {[_fmt(x) for x in ai.eigenvalues]} with multiplicities {list(ai.multiplicities)}")
    verdicts, luders = [], []
    for i in range(len(ai)):
        vn = von_neumann_update(psi, ai, i)
        lu = luders_update(psi, ai, i)
        verdicts.append(vn.to_json())
        luders.append(lu.to_json())
        lines.append(f"outcome {_fmt(ai.eigenvalues[i])}: von Neumann -> "
                     + (f"AMBIGUOUS (eigenspace dim {vn.eigenspace_dim})"
                        if isinstance(vn, AmbiguousPostState) else "determined")
                     + f"; Lüders -> {_vec_text(lu.post_state.amplitudes)} (p={_fmt(lu.probability)})")
    if not all(v["kind"] == "ambiguous" for v in verdicts):
        raise InvariantViolation("degenerate outcome not flagged ambiguous")

    lines.append("== two refinements of A(x)I, same coarse outcome +1 ==")
    posts = {}
    for name, c in (("I(x)sigma_z", SIGMA_Z), ("I(x)sigma_x", SIGMA_X)):
        rec = von_neumann_update(psi, ai, 1, refinement=refinement_via(a, c))
        posts[name] = rec
        lines.append(f"refinement {name}: post-state {_vec_text(rec.post_state.amplitudes)}")
    dist = state_distance(posts["I(x)sigma_z"].post_state, posts["I(x)sigma_x"].post_state)
    lines.append(f"trace distance between the two refined post-states: {dist:.4f}")

    lines.append("== no action at a distance ==")
    ns = no_signaling_check(psi, a)
    shift = selective_shift(psi, a)
    if ns > 1e-12:
        raise InvariantViolation(f"no-signaling distance {ns:.3e}")
    lines.append(f"S2 marginal change under non-selective A(x)I: {ns:.1e}")
    lines.append(f"S2 change when conditioning on an outcome (selection): {max(shift):.4f}")

    lines.append("== sampled run ==")
    rng = rng_for(seed)
    samples = [sample_outcome(psi, ai, rng).outcome for _ in range(10)]
    lines.append(f"10 outcomes of A(x)I (seed {seed}): {[int(s) for s in samples]}")

    lines.append("== qudit EPR analog (dim 8): A = position, B = momentum on S1 ==")
    pair = make_canonical_pair(8)
    rep = epr_assignment_report(maximally_entangled(8), pair.position_spectrum(),
                                pair.momentum_spectrum())
    lines.append(f"partner families orthonormal: {rep.family_a.orthonormal}, {rep.family_b.orthonormal}; "
                 f"||[P, Q]|| = {_fmt(rep.commutator_norm_pq)}; every outcome ambiguous: {rep.all_ambiguous}")

    result = {
        "singlet": {
            "von_neumann": verdicts,
            "luders": luders,
            "refined_post_states": {k: v.to_json() for k, v in posts.items()},
            "refinement_trace_distance": dist,
            "no_signaling_distance": ns,
            "selective_shift": shift,
            "samples": samples,
        },
        "qudit": {"dim": 8, "commutator_norm_pq": rep.commutator_norm_pq,
                  "all_ambiguous": rep.all_ambiguous},
    }
    return CommandOutput(result, "\n".join(lines))


HANDLERS = {
    "measure": cmd_measure,
    "schmidt": cmd_schmidt,
    "epr-report": cmd_epr_report,
    "refine": cmd_refine,
    "nosignal": cmd_nosignal,
    "chsh": cmd_chsh,
    "demo": cmd_demo,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eprsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"eprsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("input", nargs="?", help="JSON input (same as --config); 'pkg:NAME' for packaged files")
        p.add_argument("--config", help="JSON config or a manifest.json from a previous run")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
        p.add_argument("--out", help="directory for JSON/CSV artifacts and manifest.json")
        p.add_argument("--format", choices=("text", "json"), default="text")
        if name == "chsh":
            p.add_argument("--n-pairs", type=int, dest="n_pairs")
            p.add_argument("--window", type=float)
            p.add_argument("--workers", type=int)
    return parser


def resolve(args) -> tuple[dict, int]:
    """Effective (config, seed) from files, manifests and flag overrides."""
    if args.input and args.config:
        raise InvalidConfig("config", "give either a positional input or --config, not both")
    path = args.input or args.config
    cfg: dict = {}
    seed = None
    if path:
        cfg = _load_json(path, "config")
        if {"command", "config", "seed"} <= set(cfg):
            if cfg["command"] != args.command:
                raise InvalidConfig("command", f"manifest is for {cfg['command']!r}, not {args.command!r}")
            seed = cfg["seed"]
            cfg = cfg["config"]
            if not isinstance(cfg, dict):
                raise InvalidConfig("config", "manifest config must be an object")
    if "seed" in cfg:
        cfg_seed = cfg.pop("seed")
        if seed is None:
            seed = cfg_seed
    for key in ("n_pairs", "window", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.seed is not None:
        seed = args.seed
    seed = 0 if seed is None else seed
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= U64_MAX:
        raise InvalidConfig("seed", f"must be an unsigned 64-bit integer, got {seed!r}")
    return cfg, seed


def write_artifacts(out_dir: str, files: dict) -> None:
    """Write all files atomically-per-file after everything has been computed."""
    os.makedirs(out_dir, exist_ok=True)
    for name, content in files.items():
        fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(content)
        os.chmod(tmp, 0o644)
        os.replace(tmp, os.path.join(out_dir, name))


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        cfg, seed = resolve(args)
        effective = json.loads(json.dumps(cfg))
        output = HANDLERS[args.command](cfg, seed)
        result_name = f"{args.command}.json"
        files = {result_name: dumps(output.result)}
        files.update(output.extra)
        manifest = {
            "command": args.command,
            "config": effective,
            "seed": seed,
            "artifact_paths": sorted(files),
            "version": __version__,
        }
        files["manifest.json"] = dumps(manifest)
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except InvalidConfig as exc:
        print(f"error: invalid input field '{exc.field}': {exc.message}", file=sys.stderr)
        return 1
    except (EprSimError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        write_artifacts(args.out, files)
    stdout.write(dumps(output.result) if args.format == "json" else output.text + "\n")
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
