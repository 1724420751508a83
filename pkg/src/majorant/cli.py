"""Command-line entry point.

Every subcommand writes its CSV/JSON artifacts plus ``manifest.json`` into the
output directory (``--out-dir``, else ``$MAJORANT_OUT_DIR``, else ``./out``).
Failures exit with a category-specific status and a one-line JSON error on
stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .cascade import ContinuousProblem, LatticeProblem, estimate_solution, leray_project
from .errors import MajorantError
from .kernels import (default_probes, estimate_exponents, l1_plus_l2_report, self_convolve,
                      sharp_constant)
from .lattice import PRESETS, LatticeField, LatticeGeometry
from .picard import contraction_report, fht_norm, fh_norm, interpolate_trajectory, picard_iterate, site_of
from .probe import blowup_certificate, chain_sequence
from .spaces import besov_heat_norm, bmo_minus1_norm, pm_norm

OUT_DIR_ENV = "MAJORANT_OUT_DIR"

EXIT_CODES = {
    "error": 1,
    "schema": 2,
    "kernel_validation": 3,
    "resource_budget": 4,
    "precondition": 5,
    "geometry": 5,
    "domain": 5,
    "overflow": 6,
}


def _version() -> str:
    try:
        return metadata.version("majorant")
    except metadata.PackageNotFoundError:
        return "unknown"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps_json(obj) -> bytes:
    return (json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def dumps_csv(rows: list, columns: list | None = None) -> bytes:
    columns = columns or (list(rows[0].keys()) if rows else [])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else repr(r[k]) if isinstance(r.get(k), float) else r[k])
                    for k in columns})
    return buf.getvalue().encode("utf-8")


class Artifacts:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.digests: dict[str, str] = {}

    def write(self, name: str, data: bytes) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_bytes(data)
        self.digests[name] = hashlib.sha256(data).hexdigest()
        return path


# ---------------------------------------------------------------------------
# helpers shared by subcommands

def _geometry(kernel, lat: dict) -> LatticeGeometry:
    dim = lat.get("dim", kernel.dim)
    if dim != kernel.dim:
        raise cfgmod.ConfigurationError("lattice dim must match the kernel dimension")
    return LatticeGeometry(dim, lat["dxi"], lat["xi_max"], tuple(lat.get("offset", ())))


def _lattice_datum(kernel, g: LatticeGeometry, datum: dict, seed: int) -> LatticeField:
    if "file" in datum:
        f = LatticeField.load(datum["file"])
        return f
    preset = datum.get("preset", "single-mode")
    if preset not in PRESETS:
        raise cfgmod.ConfigurationError(f"preset {preset!r} needs a lattice-free solver")
    amp = datum.get("amplitude", 0.05)
    if preset == "single-mode":
        return PRESETS[preset](g, kernel, datum.get("k0", [0] * (g.dim - 1) + [g.dxi]), amp,
                               datum.get("direction"))
    if preset == "random-small":
        return PRESETS[preset](g, kernel, amp, datum.get("seed", seed))
    return PRESETS[preset](g, kernel, amp, datum.get("direction"))


# ---------------------------------------------------------------------------
# subcommands

def cmd_verify_kernel(cfg: dict, art: Artifacts) -> dict:
    kernel = cfgmod.kernel_from_config(cfg["kernel"])
    sec = cfg["verify-kernel"]
    theta = sec.get("theta", kernel.theta)
    if kernel.validated and theta != kernel.theta:
        # re-checking a validated kernel at another exponent is a new validity claim
        kernel = replace(kernel, theta=theta)
    probes = default_probes(kernel, sec["n_radii"], sec["n_directions"], sec["r_min"], sec["r_max"])
    rep = sharp_constant(kernel, theta, probes)
    pts = np.array(sec["convolution_points"], dtype=float)
    dirs = np.eye(kernel.dim)[: max(1, min(sec["n_directions"], kernel.dim))]
    rows = []
    for di, d in enumerate(dirs):
        conv = self_convolve(kernel, pts[:, None] * d[None])
        for r, v in zip(pts, conv.values):
            rows.append({"xi_norm": float(r), "direction": di, "value": float(v),
                         "tail_bound": float(conv.tail_bound)})
    art.write("convolution.csv", dumps_csv(rows, ["xi_norm", "direction", "value", "tail_bound"]))
    summary = {"B": rep.B, "theta": theta, "standardized": rep.standardized,
               "probe_count": len(probes), "certificate": rep.certificate,
               "kernel": kernel.to_config()}
    if sec["exponents"]:
        summary["exponents"] = estimate_exponents(kernel).to_dict()
    if sec["split_integrals"]:
        summary["l1_plus_l2"] = l1_plus_l2_report(kernel).to_dict()
    art.write("summary.json", dumps_json(summary))
    return summary


def cmd_nonexistence_trace(cfg: dict, art: Artifacts) -> dict:
    sec = cfg["nonexistence-trace"]
    cand = cfgmod.kernel_from_config(sec.get("candidate", cfg["kernel"]))
    theta = sec.get("theta", cand.theta)
    n = cand.dim
    verdict = {"theta": theta, "dim": n, "K": sec["K"]}
    rows = []
    if n / 2 <= theta < n:
        try:
            trace = chain_sequence(n, theta, cand, max(1, sec["K"]))
            rows = [{"k": e.k, "x_k": str(e.x), "rho_k": e.rho, "lambda_k": e.lam,
                     "lower_bound_k": e.lower_bound} for e in trace.entries]
            verdict["chain"] = trace.to_dict()
        except MajorantError as exc:
            verdict["chain"] = {"verdict": "premise_fails", "note": str(exc)}
    art.write("trace.csv", dumps_csv(rows, ["k", "x_k", "rho_k", "lambda_k", "lower_bound_k"]))
    if sec["certificate"]:
        xi0 = sec.get("xi0", [1.0] + [0.0] * (n - 1))
        verdict["certificate"] = blowup_certificate(cand, theta, np.array(xi0, dtype=float),
                                                    K=sec["K"]).to_dict()
    art.write("verdict.json", dumps_json(verdict))
    return verdict


def _cascade_problem(cfg: dict, kernel, sec: dict):
    datum = sec["datum"]
    if datum.get("preset") == "heat-mode":
        e = np.asarray(datum.get("direction", [1.0] + [0.0] * (kernel.dim - 1)), dtype=float)
        amp = datum.get("amplitude", 1.0)

        def chi0(types):
            return amp * leray_project(types, np.broadcast_to(e, types.shape))

        return ContinuousProblem(kernel, sec["nu"], chi0, None, branching=sec["branching"])
    lat = sec.get("lattice", cfg["picard-solve"]["lattice"])
    g = _geometry(kernel, lat)
    u0 = _lattice_datum(kernel, g, datum, cfg["seed"])
    return LatticeProblem(kernel, sec["nu"], u0, None, branching=sec["branching"])


def cmd_cascade_solve(cfg: dict, art: Artifacts) -> dict:
    kernel = cfgmod.kernel_from_config(cfg["kernel"])
    sec = cfg["cascade-solve"]
    prob = _cascade_problem(cfg, kernel, sec)
    rows = []
    for p in sec["points"]:
        if len(p) != kernel.dim + 1:
            raise cfgmod.ConfigurationError("cascade points are rows [xi_1..xi_n, t]")
        est = estimate_solution(prob, p[:-1], p[-1], sec["N"], cfg["seed"], sec["depth_cap"],
                                cfg["workers"], node_budget=sec.get("node_budget"))
        rows.append(est.row())
    art.write("estimates.csv", dumps_csv(rows))
    summary = {"points": len(rows), "unreliable": [r["unreliable"] for r in rows]}
    art.write("summary.json", dumps_json(summary))
    return summary


def _run_picard(cfg: dict):
    kernel = cfgmod.kernel_from_config(cfg["kernel"])
    sec = cfg["picard-solve"]
    g = _geometry(kernel, sec["lattice"])
    u0 = _lattice_datum(kernel, g, sec["datum"], cfg["seed"])
    kw = {"overflow_guard": sec["overflow_guard"]} if "overflow_guard" in sec else {}
    res = picard_iterate(u0, None, nu=sec["nu"], T=sec["T"], K=sec["K"], kernel=kernel,
                         n_steps=sec["n_steps"], **kw)
    return kernel, g, u0, res


def cmd_picard_solve(cfg: dict, art: Artifacts) -> dict:
    kernel, g, u0, res = _run_picard(cfg)
    rows = []
    for k, it in enumerate(res.iterates):
        rows.append({"k": k, "fht_norm": fht_norm(it, kernel),
                     "difference": float(res.differences[k - 1]) if k > 0 else None})
    art.write("iterates.csv", dumps_csv(rows, ["k", "fht_norm", "difference"]))
    final = res.iterates[-1].field(len(res.iterates[-1].times) - 1)
    art.write("final_field.bin", final.to_bytes())
    summary = {"residual": res.residual, "high_mode_fraction": res.high_mode_fraction,
               "contraction": contraction_report(res.iterates, kernel, cfg["picard-solve"]["nu"]).to_dict(),
               "datum_fh_norm": fh_norm(u0, kernel), "sites": g.site_count}
    art.write("summary.json", dumps_json(summary))
    return summary


def cmd_norms(cfg: dict, art: Artifacts) -> dict:
    kernel = cfgmod.kernel_from_config(cfg["kernel"])
    sec = cfg["norms"]
    datum = sec.get("field", cfg["picard-solve"]["datum"])
    if "file" in datum:
        f = LatticeField.load(datum["file"])
    else:
        g = _geometry(kernel, sec.get("lattice", cfg["picard-solve"]["lattice"]))
        f = _lattice_datum(kernel, g, datum, cfg["seed"])
    rows = []
    for item in sec["norms"]:
        kind = item["kind"]
        if kind == "PM":
            rep = pm_norm(f, item.get("a", f.dim - kernel.theta))
        elif kind == "Fh":
            rows.append({"norm": "Fh", "parameters": json.dumps({"kernel": kernel.form}),
                         "value": fh_norm(f, kernel), "truncation_radius": f.geometry.xi_max,
                         "error_estimate": None})
            continue
        elif kind == "Besov":
            rep = besov_heat_norm(f, item["alpha"], item["p"])
        else:
            rep = bmo_minus1_norm(f, item.get("T"))
        rows.append(rep.row())
    cols = ["norm", "parameters", "value", "truncation_radius", "error_estimate"]
    art.write("norms.csv", dumps_csv(rows, cols))
    return {"norms": len(rows)}


def cmd_cross_check(cfg: dict, art: Artifacts) -> dict:
    kernel, g, u0, res = _run_picard(cfg)
    sec = cfg["cross-check"]
    t = sec.get("t", cfg["picard-solve"]["T"])
    prob = LatticeProblem(kernel, cfg["picard-solve"]["nu"], u0)
    rows = []
    worst = 0.0
    for site in sec["sites"]:
        s = site_of(g, site)
        for k in sec["depths"]:
            if k >= len(res.iterates):
                raise cfgmod.ConfigurationError(f"depth {k} exceeds the Picard K")
            pic = interpolate_trajectory(res.iterates[k], s, t)
            est = estimate_solution(prob, site, t, sec["N"], cfg["seed"], k, cfg["workers"])
            for c in range(g.dim):
                se = float(est.stderr[c])
                diff = abs(est.mean[c] - pic[c])
                scale = max(se, 1e-12 * max(1.0, abs(pic[c])))
                z = diff / scale
                worst = max(worst, z)
                rows.append({"site": json.dumps(list(site)), "k": k, "component": c,
                             "picard_re": float(pic[c].real), "picard_im": float(pic[c].imag),
                             "cascade_re": float(est.mean[c].real), "cascade_im": float(est.mean[c].imag),
                             "stderr": se, "z": float(z)})
    art.write("comparison.csv", dumps_csv(rows))
    summary = {"max_z": worst, "within_3_se": bool(worst <= 3), "picard_residual": res.residual}
    art.write("summary.json", dumps_json(summary))
    return summary


COMMANDS = {
    "verify-kernel": cmd_verify_kernel,
    "nonexistence-trace": cmd_nonexistence_trace,
    "cascade-solve": cmd_cascade_solve,
    "picard-solve": cmd_picard_solve,
    "norms": cmd_norms,
    "cross-check": cmd_cross_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="majorant", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=_version())
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML or JSON run configuration")
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--out-dir")
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "out")
    art = Artifacts(out_dir)
    try:
        cfg = cfgmod.resolve(args.config, args.override, args.seed, args.workers)
        start = time.perf_counter()
        result = COMMANDS[args.command](cfg, art)
        wall = time.perf_counter() - start
    except MajorantError as exc:
        sys.stderr.write(json.dumps({"error": exc.category, "message": str(exc)}) + "\n")
        return EXIT_CODES.get(exc.category, 1)
    manifest = {"subcommand": args.command, "config": cfg, "seed": cfg["seed"], "workers": cfg["workers"],
                "version": _version(), "wall_clock_seconds": wall, "outputs": dict(sorted(art.digests.items()))}
    (out_dir / "manifest.json").write_bytes(dumps_json(manifest))
    sys.stdout.write(dumps_json(result).decode("utf-8"))
    return 0


def replay(manifest_path, out_dir) -> int:
    """Re-run the subcommand recorded in a manifest with its resolved config."""
    m = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    cfg_path = Path(out_dir) / "replay_config.json"
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    cfg_path.write_bytes(dumps_json(m["config"]))
    return run([m["subcommand"], "--config", str(cfg_path), "--out-dir", str(out_dir)])


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
