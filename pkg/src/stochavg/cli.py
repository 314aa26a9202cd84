"""Experiment orchestration command line.

Subcommands: check | average | simulate | compare | couple-demo | mixing |
acceptance, plus check-hamiltonian (residual scan) and plot-data (re-emit
plot-ready CSV from a finished run directory).

Every run writes a ``manifest.json`` capturing the resolved system text, a
content hash, the package version, seed and all numeric parameters;
``run_from_manifest`` reruns a manifest and reproduces all numeric artifacts
bit-exactly in single-threaded reference mode.

Exit codes: 0 success, 2 configuration or schema violation (including
missing artifacts), 3 a simulated path left the finite range, 4 an
assertion-style acceptance failure under ``--strict``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, acceptance as acceptance_mod
from . import averaging, coupling, sde, stats
from .config import parse_system_text, system_to_text
from .errors import ConfigError, NonFiniteError, StochavgError
from .hamiltonian import HamiltonianSpec, orthogonality_residual
from .model import check_ellipticity, check_nonresonance, estimate_growth, random_states
from .systems import ACCEPTANCE_V0, acceptance_system

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONFINITE = 3
EXIT_STRICT = 4


def _resolve_system(args):
    """Load the system named by --config (a path or the bundled name)."""
    name = getattr(args, "config", None)
    if name is None:
        raise ConfigError("--config is required (path or 'acceptance')")
    if name == "acceptance":
        spec = acceptance_system()
        return spec, ACCEPTANCE_V0.copy(), system_to_text(spec, ACCEPTANCE_V0)
    path = Path(name)
    if not path.exists():
        raise ConfigError(f"config file {name!r} does not exist")
    text = path.read_text(encoding="utf-8")
    cfg = parse_system_text(text)
    return cfg.spec, cfg.v0, text


def _parse_v0(arg, n):
    try:
        v0 = np.array([complex(x.strip()) for x in arg.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad --v0 value {arg!r}") from exc
    if v0.shape != (n,):
        raise ConfigError(f"--v0 needs {n} comma-separated complex entries")
    return v0


def _want_v0(args, spec, cfg_v0):
    if getattr(args, "v0", None):
        return _parse_v0(args.v0, spec.n)
    if cfg_v0 is not None:
        return cfg_v0
    raise ConfigError("no initial state: give --v0 or a v0 line in [system]")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _out_dir(args):
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, command, config_text, args, params):
    manifest = {
        "format": 1,
        "package_version": __version__,
        "command": command,
        "config_text": config_text,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "master_seed": args.seed,
        "threads": args.threads,
        "strict": bool(getattr(args, "strict", False)),
        "params": params,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def _write_plotdata(out, series_rows):
    with open(out / "plotdata.csv", "w", encoding="utf-8") as fh:
        fh.write("series,x,y,lo,hi\n")
        for s, x, y, lo, hi in series_rows:
            fh.write(f"{s},{x!r},{y!r},{lo!r},{hi!r}\n")


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def cmd_check(args):
    spec, _, text = _resolve_system(args)
    out = _out_dir(args)
    nonres = check_nonresonance(spec.freqs, args.order_bound, args.tol)
    ellip = check_ellipticity(spec, args.samples, args.seed)
    growth = [
        estimate_growth(p, spec.m0, [1.0, 4.0, 10.0], args.seed + k).c_m0_estimate
        for k, p in enumerate(spec.p1)
    ]
    report = {
        "nonresonance": {
            "resonant": nonres.resonant,
            "witness": list(nonres.witness) if nonres.witness else None,
            "min_abs": nonres.min_abs,
            "order_bound": nonres.order_bound,
            "tol": nonres.tol,
        },
        "ellipticity": {
            "lambda_lower": ellip.lambda_lower,
            "lambda_upper": ellip.lambda_upper,
            "passed": ellip.passed,
            "sample_count": ellip.sample_count,
        },
        "growth_c_estimates": growth,
    }
    if spec.h is not None:
        ham = HamiltonianSpec(h=spec.h, n=spec.n)
        rng = np.random.default_rng(args.seed)
        pts = random_states(spec.n, 64, 3.0, rng)
        worst = max(float(np.abs(orthogonality_residual(ham, v)).max()) for v in pts)
        report["hamiltonian_max_orthogonality_residual"] = worst
    _write_manifest(out, "check", text, args,
                    {"order_bound": args.order_bound, "tol": args.tol,
                     "samples": args.samples})
    _write_json(out / "check_report.json", report)
    flag = "RESONANT" if nonres.resonant else "non-resonant"
    wit = f" witness={nonres.witness}" if nonres.resonant else ""
    print(f"frequencies: {flag} up to order {nonres.order_bound} "
          f"(min |m.lambda| = {nonres.min_abs:.3e}){wit}")
    print(f"dispersion eigenvalues: [{ellip.lambda_lower:.6g}, {ellip.lambda_upper:.6g}] "
          f"{'PASS' if ellip.passed else 'FAIL'} (sampled)")
    if "hamiltonian_max_orthogonality_residual" in report:
        print(f"hamiltonian orthogonality residual: "
              f"{report['hamiltonian_max_orthogonality_residual']:.3e}")
    return EXIT_OK


def cmd_check_hamiltonian(args):
    spec, _, _ = _resolve_system(args)
    if spec.h is None:
        raise ConfigError("the system has no hamiltonian section")
    ham = HamiltonianSpec(h=spec.h, n=spec.n)
    rng = np.random.default_rng(args.seed)
    pts = random_states(spec.n, args.samples, 3.0, rng)
    worst = max(float(np.abs(orthogonality_residual(ham, v)).max()) for v in pts)
    print(f"max orthogonality residual over {args.samples} states: {worst:.3e}")
    return EXIT_OK


def _format_avg_monomials(poly, kind="field", component=None):
    """Render an averaged polynomial in a-variables; resonant field monomials
    read c * a_k * prod_j abs2(a_j)^(beta_j)."""
    bits = []
    for (alpha, beta), c in poly.sorted_terms():
        factors = []
        if kind == "field":
            rest = list(beta)
        else:
            rest = list(alpha)
        if kind == "field" and component is not None:
            factors.append(f"a{component}")
        for j, e in enumerate(rest):
            if e == 1:
                factors.append(f"abs2(a{j+1})")
            elif e > 1:
                factors.append(f"abs2(a{j+1})^{e}")
        cval = complex(c)
        if cval.imag == 0:
            coef = f"{cval.real:g}"
        elif cval.real == 0:
            coef = f"{cval.imag:g}i"
        else:
            coef = f"({cval.real:g}{cval.imag:+g}i)"
        bits.append("*".join([coef] + factors) if factors else coef)
    return " + ".join(bits) if bits else "0"


def cmd_average(args):
    spec, cfg_v0, text = _resolve_system(args)
    out = _out_dir(args)
    polys = averaging.averaged_field_polys(spec.drift_polys, spec.n)
    lines = [f"component {k} = {_format_avg_monomials(p, 'field', k)}"
             for k, p in enumerate(polys, start=1)]
    payload = {"averaged_drift": list(lines)}
    if args.at:
        a = _parse_v0(args.at, spec.n)
        vals = np.array([p.evaluate(a) for p in polys], dtype=complex)
        payload["at"] = args.at
        payload["values"] = [[v.real, v.imag] for v in vals]
        for k, v in enumerate(vals, start=1):
            lines.append(f"component {k} at a = {complex(v):.12g}")
    for line in lines:
        print(line)
    _write_manifest(out, "average", text, args, {"at": args.at})
    _write_json(out / "average.json", payload)
    return EXIT_OK


def cmd_simulate(args):
    spec, cfg_v0, text = _resolve_system(args)
    out = _out_dir(args)
    record = _floats(args.record_times) if args.record_times else None
    if args.system == "action":
        I0 = np.array(_floats(args.i0)) if args.i0 else averaging.actions_of(
            _want_v0(args, spec, cfg_v0))
        ens = sde.simulate_action_sde(spec, I0, args.T, args.dtau, args.paths,
                                      args.seed, record_times=record,
                                      threads=args.threads)
    else:
        v0 = _want_v0(args, spec, cfg_v0)
        if args.system == "perturbed":
            ens = sde.simulate_perturbed(spec, v0, args.T, args.dtau, args.paths,
                                         args.seed, record_times=record,
                                         threads=args.threads).a
        else:
            variant = "full" if args.system == "effective" else "modified"
            ens = sde.simulate_effective(spec, variant, v0, args.T, args.dtau,
                                         args.paths, args.seed,
                                         record_times=record, threads=args.threads)
    sde.export_ensemble_csv(ens, out / "paths.csv")
    _write_manifest(out, "simulate", text, args, {
        "system": args.system, "T": args.T, "dtau": args.dtau,
        "paths": args.paths, "record_times": record,
        "v0": args.v0, "i0": args.i0,
    })
    print(f"wrote {out / 'paths.csv'} ({ens.n_paths} paths, {ens.times.size} nodes)")
    return EXIT_OK


def cmd_compare(args):
    spec, cfg_v0, text = _resolve_system(args)
    v0 = _want_v0(args, spec, cfg_v0)
    out = _out_dir(args)
    eps_list = _floats(args.eps_list)
    times = _floats(args.times)
    rows = stats.convergence_table(spec, v0, eps_list, args.T, args.paths, times,
                                   args.seed, threads=args.threads)
    stats.write_distance_csv(rows, out / "convergence.csv")
    _write_json(out / "convergence.json", stats.distance_rows_json(rows))
    series = [(f"tau={r.time:g}", r.eps, r.estimate, r.ci_lo, r.ci_hi) for r in rows]
    _write_plotdata(out, series)
    _write_manifest(out, "compare", text, args, {
        "eps_list": eps_list, "times": times, "T": args.T, "paths": args.paths,
        "v0": args.v0,
    })
    for r in rows:
        print(f"eps={r.eps:g} tau={r.time:g}: distance={r.estimate:.5f} "
              f"ci=({r.ci_lo:.5f},{r.ci_hi:.5f}) floor={r.noise_floor:.5f}")
    if args.strict:
        for t in times:
            sub = [r for r in rows if r.time == t]
            decreasing = all(a.estimate > b.estimate for a, b in zip(sub, sub[1:]))
            final_ok = sub[-1].estimate <= 2.0 * sub[-1].noise_floor
            if not (decreasing and final_ok):
                print(f"strict check failed at tau={t:g}: decreasing={decreasing} "
                      f"final_below_2floor={final_ok}")
                return EXIT_STRICT
    return EXIT_OK


def cmd_couple_demo(args):
    spec, cfg_v0, text = _resolve_system(args)
    v0 = _want_v0(args, spec, cfg_v0)
    out = _out_dir(args)
    delta_list = _floats(args.delta_list)
    result = coupling.build_coupled(spec, v0, args.T, args.dtau, args.delta,
                                    args.R, args.paths, args.seed,
                                    threads=args.threads)
    coupling.export_segments_csv(result, out / "segments.csv")
    cut = sde.simulate_cutoff_effective(spec, "full", v0, args.T, args.dtau,
                                        args.paths, args.seed, args.R,
                                        threads=args.threads)
    acts = cut.actions()
    occ_rows = []
    for d in delta_list:
        for k in range(spec.n):
            occ_rows.append((d, k + 1, coupling.occupation_time(acts, d, k, cut.tau_R)))
    with open(out / "occupation.csv", "w", encoding="utf-8") as fh:
        fh.write("delta,k,estimate\n")
        for d, k, est in occ_rows:
            fh.write(f"{d!r},{k},{est!r}\n")
    series = [(f"occupation_k{k}", d, est, est, est) for d, k, est in occ_rows]
    series += [
        (f"segments/path{p}", result.times[s.start], 1.0 if s.kind == coupling.DELTA else 0.0,
         result.times[s.start], result.times[s.end])
        for p, segs in enumerate(result.schedules) for s in segs
    ]
    _write_plotdata(out, series)
    _write_manifest(out, "couple-demo", text, args, {
        "T": args.T, "dtau": args.dtau, "paths": args.paths, "delta": args.delta,
        "delta_list": delta_list, "R": args.R, "v0": args.v0,
    })
    print(f"coupled {result.n_paths} paths: {result.segment_count()} segments, "
          f"{result.overshoots} boundary overshoots")
    for d, k, est in occ_rows:
        print(f"occupation(delta={d:g}, k={k}) = {est:.5f}")
    return EXIT_OK


def cmd_mixing(args):
    spec, cfg_v0, text = _resolve_system(args)
    out = _out_dir(args)
    v1 = _parse_v0(args.v0_a, spec.n)
    v2 = _parse_v0(args.v0_b, spec.n)
    times = _floats(args.times)
    reps = stats.mixing_profile(spec, args.variant, v1, v2, args.T, args.dtau,
                                args.paths, args.seed, times, threads=args.threads)
    with open(out / "mixing.csv", "w", encoding="utf-8") as fh:
        fh.write("eps,time,metric,estimate,ci_lo,ci_hi,noise_floor\n")
        for t, rep in zip(times, reps):
            fh.write(f"{spec.epsilon!r},{t!r},bl_state_distance,{rep.estimate!r},"
                     f"{rep.bootstrap_ci[0]!r},{rep.bootstrap_ci[1]!r},"
                     f"{rep.noise_floor!r}\n")
    _write_json(out / "mixing.json", [
        {"eps": spec.epsilon, "time": t, "metric": "bl_state_distance",
         "estimate": rep.estimate, "ci_lo": rep.bootstrap_ci[0],
         "ci_hi": rep.bootstrap_ci[1], "noise_floor": rep.noise_floor}
        for t, rep in zip(times, reps)
    ])
    _write_plotdata(out, [("mixing", t, rep.estimate, rep.bootstrap_ci[0],
                           rep.bootstrap_ci[1]) for t, rep in zip(times, reps)])
    _write_manifest(out, "mixing", text, args, {
        "v0_a": args.v0_a, "v0_b": args.v0_b, "times": times, "T": args.T,
        "dtau": args.dtau, "paths": args.paths, "variant": args.variant,
    })
    for t, rep in zip(times, reps):
        print(f"tau={t:g}: distance={rep.estimate:.5f} floor={rep.noise_floor:.5f}")
    return EXIT_OK


def cmd_acceptance(args):
    out = _out_dir(args)
    wanted = None
    if args.criteria:
        wanted = {int(x) for x in args.criteria.split(",")}
    results = acceptance_mod.run_criteria(
        wanted=wanted, n_paths=args.paths, seed=args.seed, threads=args.threads)
    payload = []
    all_pass = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] criterion {r.index}: {r.name} -- {r.detail}")
        all_pass &= r.passed
        payload.append({"index": r.index, "name": r.name, "passed": r.passed,
                        "detail": r.detail})
    _write_manifest(out, "acceptance", system_to_text(acceptance_system()), args,
                    {"criteria": sorted(wanted) if wanted else "all",
                     "paths": args.paths})
    _write_json(out / "acceptance_report.json", payload)
    if args.strict and not all_pass:
        return EXIT_STRICT
    return EXIT_OK


def cmd_plot_data(args):
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"{run_dir} is not a directory")
    emitted = emit_plot_data(run_dir)
    print(f"wrote {emitted}")
    return EXIT_OK


def emit_plot_data(run_dir):
    """Rebuild plotdata.csv from a finished run directory's artifacts."""
    run_dir = Path(run_dir)
    series = []
    conv = run_dir / "convergence.json"
    if conv.exists():
        for row in json.loads(conv.read_text()):
            series.append((f"tau={row['time']:g}", row["eps"], row["estimate"],
                           row["ci_lo"], row["ci_hi"]))
    mixing = run_dir / "mixing.json"
    if mixing.exists():
        for row in json.loads(mixing.read_text()):
            series.append(("mixing", row["time"], row["estimate"],
                           row["ci_lo"], row["ci_hi"]))
    occ = run_dir / "occupation.csv"
    if occ.exists():
        lines = occ.read_text().splitlines()[1:]
        for line in lines:
            d, k, est = line.split(",")
            series.append((f"occupation_k{k}", float(d), float(est),
                           float(est), float(est)))
    seg = run_dir / "segments.csv"
    if seg.exists():
        for line in seg.read_text().splitlines()[1:]:
            p, i, kind, start, end = line.split(",")
            series.append((f"segments/path{p}", float(start),
                           1.0 if kind == coupling.DELTA else 0.0,
                           float(start), float(end)))
    if not series:
        raise ConfigError(f"no plottable artifacts in {run_dir}")
    _write_plotdata(run_dir, series)
    return run_dir / "plotdata.csv"


def run_from_manifest(manifest_path, out_dir):
    """Re-run a recorded experiment; reference mode reproduces artifacts
    bit-exactly."""
    manifest = json.loads(Path(manifest_path).read_text())
    command = manifest["command"]
    params = manifest["params"]
    cfg_path = Path(out_dir) / "_manifest_system.cfg"
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    cfg_path.write_text(manifest["config_text"])
    argv = [command, "--config", str(cfg_path), "--out", str(out_dir),
            "--seed", str(manifest["master_seed"]),
            "--threads", str(manifest["threads"])]
    if command == "compare":
        argv += ["--eps-list", ",".join(repr(e) for e in params["eps_list"]),
                 "--times", ",".join(repr(t) for t in params["times"]),
                 "--T", repr(params["T"]), "--paths", str(params["paths"])]
        if params.get("v0"):
            argv += ["--v0", params["v0"]]
    elif command == "simulate":
        argv += ["--system", params["system"], "--T", repr(params["T"]),
                 "--dtau", repr(params["dtau"]), "--paths", str(params["paths"])]
        if params.get("record_times"):
            argv += ["--record-times", ",".join(repr(t) for t in params["record_times"])]
        if params.get("v0"):
            argv += ["--v0", params["v0"]]
        if params.get("i0"):
            argv += ["--i0", params["i0"]]
    elif command == "couple-demo":
        argv += ["--T", repr(params["T"]), "--dtau", repr(params["dtau"]),
                 "--paths", str(params["paths"]), "--delta", repr(params["delta"]),
                 "--delta-list", ",".join(repr(d) for d in params["delta_list"]),
                 "--R", repr(params["R"])]
        if params.get("v0"):
            argv += ["--v0", params["v0"]]
    elif command == "mixing":
        argv += ["--v0-a", params["v0_a"], "--v0-b", params["v0_b"],
                 "--times", ",".join(repr(t) for t in params["times"]),
                 "--T", repr(params["T"]), "--dtau", repr(params["dtau"]),
                 "--paths", str(params["paths"]), "--variant", params["variant"]]
    else:
        raise ConfigError(f"manifest replay not supported for {command!r}")
    return main(argv)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(p, config=True):
    if config:
        p.add_argument("--config", help="system config path, or 'acceptance'")
    p.add_argument("--out", help="output directory (default: current)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--strict", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="stochavg",
        description="stochastic averaging experiments for perturbed oscillator systems",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="non-resonance, ellipticity and growth diagnostics")
    _add_common(p)
    p.add_argument("--order-bound", type=int, default=8)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--samples", type=int, default=128)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("check-hamiltonian", help="max orthogonality residual over sampled states")
    _add_common(p)
    p.add_argument("--samples", type=int, default=64)
    p.set_defaults(func=cmd_check_hamiltonian)

    p = sub.add_parser("average", help="print the averaged drift, symbolically or at a point")
    _add_common(p)
    p.add_argument("--at", help="evaluation point, comma-separated complex entries")
    p.set_defaults(func=cmd_average)

    p = sub.add_parser("simulate", help="simulate one system and export the ensemble CSV")
    _add_common(p)
    p.add_argument("--system", choices=["perturbed", "effective", "modified", "action"],
                   default="perturbed")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--dtau", type=float, default=1e-3)
    p.add_argument("--paths", type=int, default=100)
    p.add_argument("--v0")
    p.add_argument("--i0", help="initial actions for --system action")
    p.add_argument("--record-times", dest="record_times")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="action-law convergence table over an epsilon sweep")
    _add_common(p)
    p.add_argument("--eps-list", default="0.2,0.05,0.0125")
    p.add_argument("--times", default="1.0")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=4000)
    p.add_argument("--v0")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("couple-demo", help="coupled construction plus occupation-time curve")
    _add_common(p)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--dtau", type=float, default=1e-3)
    p.add_argument("--paths", type=int, default=400)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--delta-list", default="0.2,0.1,0.05,0.025")
    p.add_argument("--R", type=float, default=16.0)
    p.add_argument("--v0")
    p.set_defaults(func=cmd_couple_demo)

    p = sub.add_parser("mixing", help="distance profile between two initial states")
    _add_common(p)
    p.add_argument("--v0-a", required=True)
    p.add_argument("--v0-b", required=True)
    p.add_argument("--times", default="0.5,1,2,4,8")
    p.add_argument("--T", type=float, default=8.0)
    p.add_argument("--dtau", type=float, default=2e-3)
    p.add_argument("--paths", type=int, default=2000)
    p.add_argument("--variant", choices=["full", "modified"], default="full")
    p.set_defaults(func=cmd_mixing)

    p = sub.add_parser("acceptance", help="run the acceptance criteria suite")
    _add_common(p, config=False)
    p.add_argument("--criteria", help="comma-separated subset, e.g. 1,2,3")
    p.add_argument("--paths", type=int, default=4000)
    p.set_defaults(func=cmd_acceptance)

    p = sub.add_parser("plot-data", help="re-emit plot-ready CSV from a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_plot_data)

    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteError as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except StochavgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
