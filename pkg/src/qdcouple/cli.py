"""Command-line front end.

Every command writes into its output directory a ``manifest.json`` (config
echo, package versions, seed, stage timings and the list of files written)
and a ``summary.json``. Failures write ``error.json`` and exit with

    2  configuration error (unknown preset, bad arguments)
    3  numerical failure (solver, far field, coupling chain)
    4  budget exceeded (grid size, evaluation budget)
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

log = logging.getLogger("qdcouple")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4
FAMILY_ORDER = ["micromesa", "microlens", "cbg", "micropillar"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# run bookkeeping


class Run:
    """Output directory with a manifest that lists every file written."""

    def __init__(self, out: Path, command: str, config: dict, seed: int | None):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.seed = seed
        self.files: list[str] = []
        self.timings: dict[str, float] = {}
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.out / name

    @contextmanager
    def stage(self, name: str):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t

    def write_json(self, name: str, data) -> None:
        self.path(name).write_text(json.dumps(_jsonable(data), indent=1, sort_keys=True))

    def finish(self, summary: dict, status: str = "ok") -> None:
        self.write_json("summary.json", {"command": self.command, "status": status, **summary})
        self.timings["total"] = time.perf_counter() - self.t0
        manifest = {"command": self.command, "config": self.config, "seed": self.seed,
                    "versions": versions(), "timings": self.timings,
                    "files": self.files + ["manifest.json"]}
        (self.out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=1,
                                                           sort_keys=True))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, Path):
        return str(x)
    return x


def versions() -> dict:
    import scipy
    import sklearn

    from . import __version__
    from .linsolve import pardiso_available
    return {"qdcouple": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__,
            "pardiso": pardiso_available(), "threads": os.environ.get("QDCOUPLE_THREADS")}


def _limit_threads() -> None:
    n = os.environ.get("QDCOUPLE_THREADS")
    if not n:
        return
    try:
        n = int(n)
    except ValueError as exc:
        raise ConfigError(f"QDCOUPLE_THREADS must be an integer, got {n!r}") from exc
    from threadpoolctl import threadpool_limits
    threadpool_limits(n)
    from .linsolve import _load_mkl
    lib = _load_mkl()
    if lib is not None:
        try:
            import ctypes
            lib.MKL_Set_Num_Threads(ctypes.c_int(n))
        except AttributeError:
            pass


# ---------------------------------------------------------------------------
# config helpers


def _materials(args):
    from .materials import MaterialTable
    table = MaterialTable.default()
    if getattr(args, "materials", None):
        table = table.merged(json.loads(Path(args.materials).read_text()))
    return table


def _device(args):
    from . import geometry
    if args.device:
        d = json.loads(Path(args.device).read_text()) if Path(args.device).exists() \
            else json.loads(args.device)
        try:
            return geometry.params_from_dict(d)
        except (KeyError, TypeError, geometry.GeometryError) as exc:
            raise ConfigError(f"invalid device parameters: {exc}") from exc
    if not args.preset:
        raise ConfigError("one of --preset or --device is required")
    try:
        return geometry.preset(args.preset)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), key="preset") from exc


def _solver_opts(args):
    from .solver import SolverOptions
    return SolverOptions(backend=args.backend)


def _lens(args, materials, summary):
    from . import beam
    name = args.lens or summary.get("preset")
    if not name:
        raise ConfigError("--lens is required when the device is not a preset")
    overrides = {}
    if getattr(args, "distance", None) is not None:
        overrides["distance_to_source"] = args.distance * 1e-3
    try:
        return name, beam.load_lens(name, materials, **overrides)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), key="lens") from exc


def _fiber_name(name):
    from .materials import FIBER_ALIASES, FIBERS
    if name is None:
        return None
    key = FIBER_ALIASES.get(name, name)
    if key not in FIBERS:
        raise ConfigError(f"unknown fiber preset {name!r}; known: {sorted(FIBERS)}", key="fiber")
    return key


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, (float, np.floating)) else v for v in r])


def _load_emission(run_dir: Path):
    from .farfield import load_npz
    from .pipeline import Emission
    f = Path(run_dir) / "farfield.npz"
    if not f.exists():
        raise ConfigError(f"{run_dir} holds no farfield.npz; run `solve` there first")
    ff, meta = load_npz(f)
    summary = json.loads((Path(run_dir) / "summary.json").read_text())
    return Emission(ff, float(meta["z_dipole_um"]), float(meta["design_wavelength"])), summary


def _solve_device(run: Run, args, materials):
    from . import farfield, pipeline, solver
    params = _device(args)
    with run.stage("solve"):
        res = pipeline.evaluate_device(params, materials, args.resolution, args.wavelength,
                                       _solver_opts(args),
                                       track_resonance=False if args.no_track else None)
    summary = res.summary()
    summary["params"] = params.to_dict()
    summary["preset"] = args.preset if not args.device else None
    with run.stage("write"):
        farfield.save_npz(res.far, run.path("farfield.npz"), z_dipole_um=res.z_dipole_um,
                          design_wavelength=params.wavelength)
        farfield.write_cuts_csv(res.far, run.path("farfield_cuts.csv"))
        nas = np.round(np.arange(0.05, 1.0001, 0.05), 2)
        _write_rows(run.path("extraction_vs_na.csv"), ["na", "eta_ext"],
                    [(na, farfield.extraction_efficiency(res.far, na)) for na in nas])
        if res.resonance is not None:
            _write_rows(run.path("resonance_samples.csv"), ["wavelength_nm", "purcell"],
                        res.resonance.samples)
            w, status = solver.fwhm(*zip(*res.resonance.samples))
            summary["purcell_fwhm_samples_nm"] = w
            summary["purcell_fwhm_samples_status"] = status
    return res, summary


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args, run: Run) -> dict:
    _, summary = _solve_device(run, args, _materials(args))
    return summary


def cmd_farfield(args, run: Run) -> dict:
    res, summary = _solve_device(run, args, _materials(args))
    return {k: summary[k] for k in summary if k.startswith(("half_angle", "eta_ext", "family",
                                                            "wavelength", "purcell"))}


def cmd_sweep(args, run: Run) -> dict:
    from . import pipeline, solver
    params = _device(args)
    lo, hi = args.band
    if not lo < hi or args.points < 2:
        raise ConfigError("sweep needs --band LO HI with LO < HI and --points >= 2")
    wls = np.linspace(lo, hi, args.points)
    with run.stage("sweep"):
        pts = pipeline.sweep(params, wls, _materials(args), args.resolution, _solver_opts(args),
                             args.na)
    _write_rows(run.path("sweep.csv"), ["wavelength_nm", "purcell", f"eta_ext_na{args.na:g}"],
                [(p.wavelength, p.purcell, p.eta) for p in pts])
    w, status = solver.fwhm(wls, [p.purcell for p in pts])
    best = max(pts, key=lambda p: p.purcell)
    return {"family": params.family, "design_wavelength": params.wavelength,
            "peak_wavelength": best.wavelength, "peak_purcell": best.purcell,
            "purcell_fwhm_nm": w, "purcell_fwhm_status": status}


def cmd_fiber_modes(args, run: Run) -> dict:
    from . import fiber
    from .materials import fiber_spec
    name = _fiber_name(args.fiber)
    spec = fiber_spec(name, args.wavelength, _materials(args), na_model=args.na_model)
    with run.stage("modes"):
        modes = fiber.solve_modes(spec, args.wavelength)
    rows = [(m.label, m.polarization, m.parity, m.n_eff, m.u, m.w) for m in modes]
    _write_rows(run.path("modes.csv"), ["label", "polarization", "parity", "n_eff", "u", "w"], rows)
    for m in modes:
        if m.polarization == "x" and m.parity == "cos":
            fiber.write_profile_csv(m, run.path(f"profile_{m.label}.csv"))
    return {"fiber": name, "wavelength": args.wavelength, "na": spec.na, "na_model": spec.na_model,
            "n_core": spec.n_core, "n_cladding": spec.n_cladding,
            "core_radius_um": spec.core_radius, "v_number": spec.v_number(args.wavelength),
            "labels": sorted({m.label for m in modes}),
            "mode_field_radius_um": fiber.marcuse_radius(spec, args.wavelength)}


def _emission_for(args, run: Run, materials):
    if args.from_run:
        em, summary = _load_emission(Path(args.from_run))
        return em, {k: v for k, v in summary.items() if k not in ("command", "status")}
    res, summary = _solve_device(run, args, materials)
    return res.emission, summary


def _distances(spec) -> np.ndarray:
    start, stop, step = spec
    if step <= 0 or stop < start:
        raise ConfigError("distance range needs STEP > 0 and STOP >= START", key="distances")
    d = np.arange(start, stop + 0.5 * step, step)
    if d.size < 3:
        raise ConfigError("a distance scan needs at least three distances", key="distances")
    return d


def cmd_couple(args, run: Run) -> dict:
    from dataclasses import replace

    from . import beam, pipeline
    materials = _materials(args)
    em, summary = _emission_for(args, run, materials)
    lens_name, lens = _lens(args, materials, summary)
    fiber_name = _fiber_name(args.fiber)
    summary["table_distance_um"] = lens.distance_to_source * 1e3
    if args.scan:
        with run.stage("scan"):
            rows = pipeline.scan(em, lens, _distances(args.scan), fiber_name, materials,
                                 args.na_model)
        beam.write_scan_csv(rows, run.path("scan.csv"))
        best = max(rows, key=lambda r: r.eta_total)
        lens = replace(lens, distance_to_source=best.distance * 1e-3)
    with run.stage("chain"):
        chain = pipeline.couple(em, lens, fiber_name, materials, args.na_model, keep_field=True)
    beam.write_facet_csv(chain.facet_field, run.path("facet_field.csv"))
    _write_rows(run.path("chain_stages.csv"), ["stage", "transmission"], list(chain.stages.items()))
    summary.update({"lens": lens_name, "fiber": fiber_name or "default",
                    "distance_um": chain.distance, "distance_source": "scan" if args.scan
                    else "lens table", "eta_total": chain.eta_total,
                    "facet_overlap": chain.facet_overlap, "facet_power": chain.facet_power,
                    "stages": chain.stages})
    return summary


def cmd_scan(args, run: Run) -> dict:
    from . import beam, pipeline
    materials = _materials(args)
    em, summary = _emission_for(args, run, materials)
    lens_name, lens = _lens(args, materials, summary)
    d = _distances(args.distances)
    with run.stage("scan"):
        rows = pipeline.scan(em, lens, d, _fiber_name(args.fiber), materials, args.na_model)
    beam.write_scan_csv(rows, run.path("scan.csv"))
    best = max(rows, key=lambda r: r.eta_total)
    summary.update({"lens": lens_name, "best_distance_um": best.distance,
                    "eta_total": best.eta_total})
    return summary


def _device_objective(args, materials, box):
    from . import geometry, pipeline
    base = _device(args)
    names = set(box.names)
    fields = set(base.to_dict()) - {"family"}
    if not names <= fields:
        raise ConfigError(f"box dimensions {sorted(names - fields)} are not parameters of "
                          f"{base.family}")

    def ev(x):
        p = base.replace(**dict(zip(box.names, map(float, x))))
        r = pipeline.evaluate_device(p, materials, args.resolution, track_resonance=False,
                                     nas=(args.na,), opts=_solver_opts(args))
        return r.eta[args.na], r.purcell

    del geometry
    return ev


def cmd_optimize(args, run: Run) -> dict:
    from . import optimize as O
    materials = _materials(args)
    if args.problem == "branin":
        box, obj = O.BRANIN_BOX, O.Objective(w_eta=0.0, w_f=1.0)

        def ev(x):
            return 0.0, -O.branin(x)
    elif args.problem == "pillar-surrogate":
        box, obj = O.PILLAR_BOX, O.Objective(na=args.na, purcell_floor=args.purcell_floor)
        ev = O.PillarSurrogate().evaluator()
    else:
        if not args.box:
            raise ConfigError("--box is required for device optimization")
        box = O.ParameterBox.from_dict(json.loads(Path(args.box).read_text())
                                       if Path(args.box).exists() else json.loads(args.box))
        obj = O.Objective(args.w_eta, args.w_f, args.na, args.purcell_floor)
        ev = _device_objective(args, materials, box)
    if args.budget < 1:
        raise ConfigError("--budget must be >= 1")
    if args.max_budget is not None and args.budget > args.max_budget:
        raise O.BudgetExceeded(f"requested {args.budget} evaluations, limit {args.max_budget}")
    ckpt = run.out / "run.json"
    if args.resume and ckpt.exists():
        opt = O.OptimizationRun.load(ckpt)
    else:
        opt = O.OptimizationRun(box, obj, seed=args.seed, xi=args.xi)
        hist = run.out / "history.csv"
        if hist.exists():
            hist.unlink()
    run.path("history.csv")
    run.path("run.json")

    def save(e):
        opt.save(ckpt)

    with run.stage("optimize"):
        inc = opt.run(ev, args.budget, callback=save, history_csv=run.out / "history.csv")
    opt.save(ckpt)
    return {"problem": args.problem, "evaluations": len(opt.history), "seed": args.seed,
            "incumbent": None if inc is None else {"point": dict(zip(box.names, inc.point)),
                                                   "eta_ext": inc.eta, "purcell": inc.purcell,
                                                   "f": inc.f, "iteration": inc.iteration},
            "kernel": opt.kernel_params}


def cmd_stopband(args, run: Run) -> dict:
    from . import tmm
    materials = _materials(args)
    nh = materials.lookup("GaAs", args.wavelength).real
    nl = materials.lookup("AlAs", args.wavelength).real
    idx, th = tmm.quarter_wave_stack(nh, nl, args.pairs, args.wavelength)
    stack = tmm.LayerStack(tuple(idx), tuple(th), 1.0, nh, args.wavelength)
    lo, hi = args.band
    wls = np.linspace(lo, hi, args.points)
    R = tmm.stopband(stack, wls)
    _write_rows(run.path("stopband.csv"), ["wavelength_nm", "reflectance"], zip(wls, R))
    return {"pairs": args.pairs, "wavelength": args.wavelength,
            "peak_reflectance": tmm.reflectivity(stack)[0],
            "quarter_wave_formula": tmm.quarter_wave_peak(1.0, nh, nh, nl, args.pairs)}


REPORT_COLUMNS = ["family", "design_wavelength", "wavelength", "eta_ext_na04", "eta_ext_na08",
                  "purcell", "half_angle_phi0", "half_angle_phi90", "resonance_fwhm_nm",
                  "facet_overlap", "eta_total", "distance_um", "run"]
COUPLING_COLUMNS = ("facet_overlap", "eta_total", "distance_um")


def report_table(root: Path) -> tuple[list[dict], list[str]]:
    """Merge run summaries below ``root`` into one row per (family, wavelength)."""
    rows: dict[tuple, dict] = {}
    problems = []
    for f in sorted(Path(root).rglob("summary.json")):
        try:
            s = json.loads(f.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            problems.append(f"{f.parent}: unreadable summary ({exc})")
            continue
        if s.get("status") != "ok":
            problems.append(f"{f.parent}: run did not complete")
            continue
        if "family" not in s or "design_wavelength" not in s:
            continue
        key = (s["family"], float(s["design_wavelength"]))
        row = rows.setdefault(key, {c: None for c in REPORT_COLUMNS})
        is_couple = s.get("command") == "couple"
        for c in REPORT_COLUMNS[:-1]:
            if s.get(c) is not None and (is_couple or c not in COUPLING_COLUMNS):
                row[c] = s[c]
        if is_couple or row["run"] is None:
            row["run"] = str(f.parent.relative_to(root))
    for key, row in rows.items():
        if row["eta_total"] is None:
            problems.append(f"{key[0]} at {key[1]:g} nm: no coupling result")
    order = sorted(rows, key=lambda k: (k[1], FAMILY_ORDER.index(k[0])
                                        if k[0] in FAMILY_ORDER else 99))
    return [rows[k] for k in order], problems


def cmd_report(args, run: Run) -> dict:
    root = Path(args.run_dir)
    if not root.is_dir():
        raise ConfigError(f"{root} is not a directory")
    table, problems = report_table(root)
    for p in problems:
        log.warning(p)
    if not table:
        log.warning("no completed runs found below %s", root)
    _write_rows(run.path("report.csv"), REPORT_COLUMNS,
                [[r[c] if r[c] is not None else "" for c in REPORT_COLUMNS] for r in table])
    return {"rows": len(table), "problems": problems}


# ---------------------------------------------------------------------------
# parser


def _add_device(p, wavelength=True):
    p.add_argument("--preset", help="device preset name, e.g. micropillar-930")
    p.add_argument("--device", help="inline JSON or JSON file with DeviceParams")
    p.add_argument("--resolution", type=float, help="cells per wavelength in the densest material")
    if wavelength:
        p.add_argument("--wavelength", type=float, help="solve at this wavelength (nm)")
        p.add_argument("--no-track", action="store_true",
                       help="do not track the cavity resonance")


def _add_chain(p):
    p.add_argument("--from-run", help="reuse the far field of a previous solve run")
    p.add_argument("--lens", help="lens preset; defaults to the one designed for the device")
    p.add_argument("--fiber", help="fiber preset (780HP or SMF28); default by wavelength")
    p.add_argument("--na-model", default="cutoff-matched", choices=["datasheet", "cutoff-matched"])


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qdcouple", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--materials", help="JSON file of material overrides")
        sp.add_argument("--backend", default="auto", choices=["auto", "pardiso", "superlu",
                                                              "iterative"])
        sp.add_argument("--config", help="JSON file whose keys provide defaults for the flags")
        return sp

    s = common(sub.add_parser("solve", help="Purcell factor, extraction and far field"))
    _add_device(s)
    s = common(sub.add_parser("farfield", help="far-field cuts and extraction against NA"))
    _add_device(s)
    s = common(sub.add_parser("sweep", help="Purcell factor and extraction across a band"))
    _add_device(s, wavelength=False)
    s.add_argument("--band", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    s.add_argument("--points", type=int, default=11)
    s.add_argument("--na", type=float, default=0.4)
    s = common(sub.add_parser("fiber-modes", help="guided LP modes of a fiber preset"))
    s.add_argument("--fiber", required=True)
    s.add_argument("--wavelength", type=float, required=True)
    s.add_argument("--na-model", default="cutoff-matched", choices=["datasheet", "cutoff-matched"])
    s = common(sub.add_parser("couple", help="total efficiency into the fiber mode"))
    _add_device(s)
    _add_chain(s)
    s.add_argument("--distance", type=float, help="lens-to-emitter distance override (um)")
    s.add_argument("--scan", type=float, nargs=3, metavar=("START", "STOP", "STEP"),
                   help="couple at the best distance of this scan (um)")
    s = common(sub.add_parser("scan", help="total efficiency against lens distance"))
    _add_device(s)
    _add_chain(s)
    s.add_argument("--distances", type=float, nargs=3, required=True,
                   metavar=("START", "STOP", "STEP"), help="um")
    s = common(sub.add_parser("optimize", help="Bayesian optimization"))
    _add_device(s, wavelength=False)
    s.add_argument("--problem", default="device", choices=["device", "branin", "pillar-surrogate"])
    s.add_argument("--box", help="JSON {name: [lo, hi]} or file")
    s.add_argument("--budget", type=int, default=100)
    s.add_argument("--max-budget", type=int, help="refuse budgets above this")
    s.add_argument("--w-eta", type=float, default=1 / 85)
    s.add_argument("--w-f", type=float, default=1 / 200)
    s.add_argument("--na", type=float, default=0.4)
    s.add_argument("--purcell-floor", type=float)
    s.add_argument("--xi", type=float, default=0.01)
    s.add_argument("--resume", action="store_true")
    s = common(sub.add_parser("stopband", help="DBR reflectance spectrum"))
    s.add_argument("--pairs", type=int, default=25)
    s.add_argument("--wavelength", type=float, default=930.0)
    s.add_argument("--band", type=float, nargs=2, default=(800.0, 1060.0))
    s.add_argument("--points", type=int, default=261)
    s = common(sub.add_parser("report", help="merge run summaries into one table"))
    s.add_argument("run_dir")
    return p


COMMANDS = {"solve": cmd_solve, "farfield": cmd_farfield, "sweep": cmd_sweep,
            "fiber-modes": cmd_fiber_modes, "couple": cmd_couple, "scan": cmd_scan,
            "optimize": cmd_optimize, "stopband": cmd_stopband, "report": cmd_report}


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = json.loads(Path(args.config).read_text())
        known = vars(args)
        unknown = [k for k in cfg if k.replace("-", "_") not in known]
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        defaults = {k.replace("-", "_"): v for k, v in cfg.items()}
        sp = parser._subparsers._group_actions[0].choices[args.command]
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _classify(exc: BaseException) -> int:
    from .beam import AliasingError, ChainError
    from .farfield import FarFieldError
    from .fiber import FiberError
    from .geometry import GeometryError
    from .linsolve import LinearSolverError
    from .materials import MaterialError
    from .optimize import BudgetExceeded
    from .solver import SolverError, SourceError
    if isinstance(exc, BudgetExceeded):
        return EXIT_BUDGET
    if isinstance(exc, GeometryError) and "exceeds the configured maximum" in str(exc):
        return EXIT_BUDGET
    if isinstance(exc, (ConfigError, MaterialError, GeometryError, KeyError, FileNotFoundError,
                        json.JSONDecodeError, SourceError)):
        return EXIT_CONFIG
    if isinstance(exc, (SolverError, LinearSolverError, FarFieldError, ChainError, AliasingError,
                        FiberError, FloatingPointError, np.linalg.LinAlgError, MemoryError)):
        return EXIT_NUMERIC
    return EXIT_NUMERIC


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = None
    try:
        args = _parse(argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        _limit_threads()
        default = f"runs/{args.command}" + (f"-{args.preset}" if getattr(args, "preset", None)
                                            else "")
        out = Path(args.out or default)
        config = {k: v for k, v in vars(args).items() if k not in ("log_level",)}
        run = Run(out, args.command, config, getattr(args, "seed", None))
        summary = COMMANDS[args.command](args, run)
        run.finish(summary)
        print(json.dumps(_jsonable({"status": "ok", "out": str(out)})))
        return EXIT_OK
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        code = _classify(exc)
        err = {"status": "error", "exit_code": code, "error": type(exc).__name__,
               "message": str(exc).strip("'\""), "key": getattr(exc, "key", None), "argv": argv}
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(err, indent=1))
        print(json.dumps(err), file=sys.stderr)
        log.debug("failure", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())
