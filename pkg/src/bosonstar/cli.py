"""``bosonstar`` command-line front end.

Every command writes ``<out>/<command>.csv``, a JSON summary, a
two-column ``.dat`` file for plotting and ``manifest.json``.  Exit status
is 0 on success, 1 on configuration errors and 2 when a checked physical
invariant fails.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import time
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import cutoff, dynamics, fock, groundstate, inequalities
from .errors import BosonStarError, CapacityError, CollapseSuspected, ConfigurationError, InvariantViolation, ParameterError
from .spectral import CoulombKernel, Grid3, SpectralField, save_field, smooth_kappa

log = logging.getLogger("bosonstar")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue().encode()


def dat_bytes(rows, comment="") -> bytes:
    lines = [f"# {comment}"] if comment else []
    for row in rows:
        lines.append("" if row is None else " ".join(fmt(v) for v in row))
    return ("\n".join(lines) + "\n").encode()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def json_bytes(obj) -> bytes:
    return (json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode()


def _package_version():
    try:
        return version("artifact")
    except PackageNotFoundError:  # running from a source tree
        return "0+unknown"


class Artifacts:
    """Collects output files and commits them atomically after the manifest."""

    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.files = {}

    def add(self, name: str, data: bytes):
        self.files[name] = data

    def add_field(self, name: str, phi):
        fd, tmp = tempfile.mkstemp(suffix=".bin")
        os.close(fd)
        try:
            save_field(tmp, phi)
            self.files[f"fields/{name}.bin"] = Path(tmp).read_bytes()
        finally:
            os.unlink(tmp)

    def commit(self, command, cfg, started, status, checks):
        self.out.mkdir(parents=True, exist_ok=True)
        staged = []
        for name, data in sorted(self.files.items()):
            dest = self.out / name
            dest.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=f".{dest.name}.")
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            staged.append((tmp, dest))
        manifest = {
            "command": command,
            "config": cfg,
            "seed": cfg["seed"],
            "version": _package_version(),
            "wall_time_s": time.time() - started,
            "exit_status": status,
            "checks": checks,
            "outputs": {name: hashlib.sha256(data).hexdigest() for name, data in sorted(self.files.items())},
        }
        _atomic_write(self.out / "manifest.json", json_bytes(manifest))
        for tmp, dest in staged:
            os.replace(tmp, dest)


def _atomic_write(path: Path, data: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


class Checks:
    """Named pass/fail records; any failure maps to exit status 2."""

    def __init__(self):
        self.items = {}

    def __call__(self, name, ok, **detail):
        self.items[name] = {"ok": bool(ok), **_jsonable(detail)}
        if not ok:
            log.error("invariant %s violated: %s", name, detail)

    @property
    def ok(self):
        return all(v["ok"] for v in self.items.values())


# helpers


def _grid(cfg):
    return Grid3(cfg["grid"]["n"], float(cfg["grid"]["L"]))


def _kernel(cfg, grid):
    ph = cfg["physics"]
    if ph["kernel"] == "exact":
        return CoulombKernel.exact(grid)
    return CoulombKernel.regularized(grid, ph["epsilon"] / ph["N"])


def _initial_field(cfg, grid):
    ini, ph = cfg["initial"], cfg["physics"]
    phi = SpectralField.gaussian(grid, sigma=ini["sigma"], momentum=tuple(ini["momentum"]))
    if ph["kappa"] > 0:
        phi = smooth_kappa(phi, ph["kappa"], ph["N"]).normalized()
    return phi


def _modes(cfg):
    fk = cfg["fock"]
    if fk["modes"] is not None:
        return fock.ModeSet(np.array(fk["modes"], dtype=np.int64), float(fk["L"]))
    return fock.build_modes(fk["radius"], float(fk["L"]))


def _amplitudes(cfg, modes):
    given = cfg["fock"]["amplitudes"]
    if given is None:
        return fock.default_amplitudes(modes)
    c = np.array([complex(*v) if isinstance(v, (list, tuple)) else complex(v) for v in given])
    if len(c) != modes.M:
        raise ConfigurationError(f"need {modes.M} amplitudes, got {len(c)}", key="fock.amplitudes")
    return c / np.linalg.norm(c)


# commands


def cmd_evolve(cfg, art, checks, stem):
    grid = _grid(cfg)
    lam = cfg["physics"]["lambda"]
    it = cfg["integrator"]
    state = dynamics.HartreeState(_initial_field(cfg, grid), 0.0, lam, _kernel(cfg, grid))
    try:
        traj = dynamics.evolve(state, it["T"], it["dt"], it["sample_every"])
        collapsed = None
    except CollapseSuspected as exc:
        collapsed = exc
        traj = None
    if collapsed is not None:
        art.add(f"{stem}.json", json_bytes({"collapse_suspected": True, "t": collapsed.t, "Hhalf": collapsed.hhalf}))
        checks("bounded_orbit", lam <= cfgmod.LAMBDA_CRIT, t=collapsed.t)
        return
    art.add(f"{stem}.csv", csv_bytes(["t", "norm", "E", "K", "D", "Hhalf"], traj.rows()))
    art.add(f"{stem}.dat", dat_bytes(((t, e.E) for t, e in zip(traj.times, traj.energies)), "t E"))
    summary = traj.summary()
    summary["collapse_suspected"] = False
    art.add(f"{stem}.json", json_bytes(summary))
    if cfg["output"]["fields"]:
        art.add_field("final", traj.final.phi)
    checks("norm_drift", traj.norm_drift() <= it["norm_tol"], value=traj.norm_drift(), tol=it["norm_tol"])
    checks("energy_drift", traj.energy_drift() <= it["energy_tol"], value=traj.energy_drift(), tol=it["energy_tol"])
    if cfgmod.LAMBDA_CRIT < lam <= 0:
        checks("apriori_bound", dynamics.apriori_bound_holds(traj))


def cmd_ground_state(cfg, art, checks, stem):
    grid = _grid(cfg)
    lam = cfg["physics"]["lambda"]
    so = cfg["solver"]
    res = groundstate.gradient_flow(_initial_field(cfg, grid), lam, _kernel(cfg, grid), so["tau"], so["tol"], so["max_iter"], record_every=1)
    rows = res.history_rows()
    art.add(f"{stem}.csv", csv_bytes(["iter", "E", "residual"], rows))
    art.add(f"{stem}.dat", dat_bytes(((r[0], r[1]) for r in rows), "iter E"))
    art.add(
        f"{stem}.json",
        json_bytes({**res.energy.as_dict(), "mu": res.mu, "residual": res.residual, "iterations": res.iterations, "converged": res.converged}),
    )
    if cfg["output"]["fields"]:
        art.add_field("ground_state", res.phi)
    if cfgmod.LAMBDA_CRIT < lam <= 0:
        floor = 1 + lam * np.pi / 4
        checks("energy_floor", all(r[1] >= floor * (1 - 1e-12) for r in rows), floor=floor)
    energies = [r[1] for r in rows]
    checks("energy_monotone", all(b <= a + 1e-12 * abs(a) for a, b in zip(energies, energies[1:])))


def _ascent(cfg):
    so = cfg["solver"]
    return groundstate.estimate_lambda_crit(_grid(cfg), so["ascent_iters"], so["restarts"], seed=cfg["seed"])


def cmd_lambda_crit(cfg, art, checks, stem):
    est = _ascent(cfg)
    rows = [(i, r, -1.0 / r) for i, r in enumerate(est.restart_ratios)]
    art.add(f"{stem}.csv", csv_bytes(["restart", "ratio", "lambda_hat"], rows))
    art.add(f"{stem}.dat", dat_bytes(((i, lh) for i, _, lh in rows), "restart lambda_hat"))
    art.add(
        f"{stem}.json",
        json_bytes({"lambda_crit_hat": est.lambda_crit, "best_ratio": est.best_ratio, "target": cfgmod.LAMBDA_CRIT, "n": cfg["grid"]["n"], "L": cfg["grid"]["L"]}),
    )
    bound = np.pi / 4 * 1.02
    checks("ratio_below_sharp_constant", est.best_ratio <= bound, value=est.best_ratio, bound=bound)


def cmd_collapse_scan(cfg, art, checks, stem):
    est = _ascent(cfg)
    scan = groundstate.collapse_scan(est.best_field, cfg["scan"]["lambdas"], cfg["scan"]["mus"], CoulombKernel.exact(_grid(cfg)))
    rows = [(r.lam, r.verdict, r.slope, est.lambda_crit) for r in scan.rows]
    art.add(f"{stem}.csv", csv_bytes(["lambda", "verdict", "slope", "lambda_crit_hat"], rows))
    curves = []
    for r in scan.rows:
        curves.extend((mu, e) for mu, e in zip(r.mus, r.energies))
        curves.extend([None, None])
    art.add(f"{stem}.dat", dat_bytes(curves, "mu E(phi_mu), one block per lambda in csv order"))
    art.add(
        f"{stem}.json",
        json_bytes({"verdicts": scan.verdicts, "bracket": scan.lambda_crit, "lambda_crit_hat": est.lambda_crit, "rejected_mu": {r.lam: r.rejected for r in scan.rows}}),
    )
    checks("verdict_monotone", scan.monotone())


def cmd_nbody_compare(cfg, art, checks, stem):
    modes = _modes(cfg)
    fk = cfg["fock"]
    tab = fock.mean_field_convergence(modes, cfg["physics"]["lambda"], _amplitudes(cfg, modes), fk["t"], fk["N_list"], fk["dt"], fk["krylov_dt"])
    art.add(f"{stem}.csv", csv_bytes(["N", "t", "d"], tab.rows()))
    art.add(f"{stem}.dat", dat_bytes(zip(tab.N, tab.d), "N d"))
    art.add(f"{stem}.json", json_bytes({"slope": tab.slope, "strictly_decreasing": tab.strictly_decreasing(), "M": modes.M, "lambda": tab.lam, "t": tab.t}))


def _residual_series(cfg, modes, dt):
    fk = cfg["fock"]
    lam = cfg["physics"]["lambda"]
    c0 = _amplitudes(cfg, modes)
    if fk["hierarchy"] == "infinite":
        traj = fock.mode_hartree_evolve(c0, modes, lam, fk["t"], dt)
        return fock.bbgky_residual(traj.amplitudes, dt, modes, lam, "infinite"), None
    basis = fock.FockBasis(modes.M, cfg["physics"]["N"])
    H = fock.build_hamiltonian(basis, modes, lam)
    samples = fock.fock_trajectory(H, fock.condensate_state(c0, basis), fk["t"], dt)
    return fock.bbgky_residual(samples, dt, modes, lam, "finite", basis=basis), basis.dim


def cmd_bbgky(cfg, art, checks, stem):
    modes = _modes(cfg)
    dt = cfg["fock"]["dt"]
    res, dim = _residual_series(cfg, modes, dt)
    half, _ = _residual_series(cfg, modes, dt / 2)
    times = dt * np.arange(1, len(res) + 1)
    art.add(f"{stem}.csv", csv_bytes(["t", "residual"], zip(times, res)))
    art.add(f"{stem}.dat", dat_bytes(zip(times, res), "t residual"))
    order = float(np.log2(res.max() / half.max())) if half.max() > 0 else float("nan")
    art.add(
        f"{stem}.json",
        json_bytes({"hierarchy": cfg["fock"]["hierarchy"], "max_residual": res.max(), "max_residual_half_dt": half.max(), "refinement_order": order, "M": modes.M, "N": cfg["physics"]["N"], "dimension": dim}),
    )
    if cfg["fock"]["hierarchy"] == "finite":
        tol = cfg["fock"]["residual_tol"]
        checks("residual_below_tol", res.max() <= tol, value=res.max(), tol=tol)


def cmd_cutoff_epsilon(cfg, art, checks, stem):
    modes = _modes(cfg)
    ph, cu = cfg["physics"], cfg["cutoff"]
    study = cutoff.epsilon_compare(modes, _amplitudes(cfg, modes), ph["lambda"], ph["N"], cu["epsilons"], cfg["fock"]["t"], cu["rate"])
    art.add(f"{stem}.csv", csv_bytes(["epsilon", "discrepancy", "bound"], study.rows()))
    art.add(f"{stem}.dat", dat_bytes(zip(study.grid, study.discrepancy), "epsilon discrepancy"))
    art.add(f"{stem}.json", json_bytes(study.summary()))
    checks("bound_holds", study.bound_holds())
    checks("monotone", study.monotone())


def cmd_cutoff_kappa(cfg, art, checks, stem):
    grid = _grid(cfg)
    cu = cfg["cutoff"]
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    for i in range(cu["fields"]):
        phi = SpectralField.random_smooth(grid, rng, kcut=grid.k_nyquist / 8)
        rows.extend((i, *r) for r in cutoff.kappa_bound_check(phi, cu["kappas"], cu["N_list"]).rows)
    art.add(f"{stem}.csv", csv_bytes(["field", "kappa", "N", "lhs", "rhs", "margin"], rows))
    art.add(f"{stem}.dat", dat_bytes(((r[1], r[5]) for r in rows), "kappa margin"))
    violations = sum(1 for r in rows if r[3] > r[4])
    art.add(f"{stem}.json", json_bytes({"checks": len(rows), "violations": violations, "min_margin": min(r[5] for r in rows)}))
    checks("kappa_bound", violations == 0, violations=violations)


def cmd_apriori(cfg, art, checks, stem):
    modes = _modes(cfg)
    ph, fk = cfg["physics"], cfg["fock"]
    N = ph["N"]
    c0 = cutoff.smoothed_amplitudes(_amplitudes(cfg, modes), modes, ph["kappa"], N)
    basis = fock.FockBasis(modes.M, N)
    H = fock.build_hamiltonian(basis, modes, ph["lambda"])
    dt = fk["dt"] * cfg["integrator"]["sample_every"]
    samples = fock.fock_trajectory(H, fock.condensate_state(c0, basis), fk["t"], dt)
    tr = cutoff.apriori_trace(samples, basis, modes, dt)
    art.add(f"{stem}.csv", csv_bytes(["t", "kinetic_trace"], tr.rows()))
    art.add(f"{stem}.dat", dat_bytes(tr.rows(), "t kinetic_trace"))
    art.add(f"{stem}.json", json_bytes({"envelope": tr.envelope, "flagged": int(tr.flagged.sum()), "N": N, "kappa": ph["kappa"]}))
    checks("running_max_growth", tr.ok, flagged=int(tr.flagged.sum()))


def cmd_ineq(cfg, art, checks, stem):
    iq = cfg["ineq"]
    if iq["mode"] == "herbst":
        rep = inequalities.herbst_check(iq["samples"], cfg["seed"])
        art.add(f"{stem}.csv", csv_bytes(["sample", "ratio"], enumerate(rep.ratios)))
        art.add(f"{stem}.dat", dat_bytes(enumerate(rep.ratios), "sample ratio"))
        art.add(f"{stem}.json", json_bytes(rep.summary()))
        checks("herbst_bound", rep.ok, max_ratio=rep.max_ratio, bound=rep.bound)
        return
    rep = inequalities.mixed_power_check(iq["a"], iq["alpha"], iq["beta"], iq["samples"], cfg["seed"], iq["n"], refine_n=iq["refine_n"])
    fine = rep.refined if len(rep.refined) else np.full(len(rep.ratios), np.nan)
    art.add(f"{stem}.csv", csv_bytes(["sample", "ratio", "ratio_refined"], ((i, r, f) for i, (r, f) in enumerate(zip(rep.ratios, fine)))))
    art.add(f"{stem}.dat", dat_bytes(enumerate(rep.ratios), "sample ratio"))
    art.add(f"{stem}.json", json_bytes(rep.summary()))


HANDLERS = {
    "evolve": cmd_evolve,
    "ground-state": cmd_ground_state,
    "collapse-scan": cmd_collapse_scan,
    "lambda-crit": cmd_lambda_crit,
    "nbody-compare": cmd_nbody_compare,
    "bbgky-residual": cmd_bbgky,
    "cutoff-epsilon": cmd_cutoff_epsilon,
    "cutoff-kappa": cmd_cutoff_kappa,
    "apriori": cmd_apriori,
    "ineq": cmd_ineq,
}


def run(command: str, cfg: dict) -> int:
    """Execute ``command`` with a resolved config; returns the exit status."""
    started = time.time()
    art = Artifacts(cfg["output"]["dir"])
    checks = Checks()
    HANDLERS[command](cfg, art, checks, command)
    status = EXIT_OK if checks.ok else EXIT_INVARIANT
    art.commit(command, cfg, started, status, checks.items)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bosonstar", description="Relativistic Hartree and N-boson mean-field experiments.")
    p.add_argument("command", choices=cfgmod.COMMANDS)
    p.add_argument("mode", nargs="?", choices=("herbst", "mixed"), help="inequality family for the ineq command")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config leaf by dotted path")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--samples", type=int, help="shorthand for ineq.samples")
    p.add_argument("--allow-supercritical", action="store_true", help="permit lambda <= -4/pi")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.mode:
        if args.command != "ineq":
            print(f"error: '{args.mode}' only applies to the ineq command", file=sys.stderr)
            return EXIT_CONFIG
        overrides.insert(0, f"ineq.mode={args.mode}")
    if args.samples is not None:
        overrides.append(f"ineq.samples={args.samples}")
    allow = args.allow_supercritical or args.command == "collapse-scan"
    try:
        cfg = cfgmod.parse_config(args.command, args.config, overrides, args.seed, args.out, allow)
        status = run(args.command, cfg)
    except (ConfigurationError, CapacityError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except BosonStarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if status == EXIT_INVARIANT:
        print("invariant check failed; see manifest.json", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
