"""Command-line interface: problem files in, JSON reports and CSV/figures out.

Commands: solve-game, check-minimax, smooth, ci-deriv, compare, refine.
Exit codes: 0 success/pass, 1 verdict failure, 2 configuration error,
3 resource exhaustion.

Reports embed the resolved configuration and seed; everything except the
wall-clock ``timings`` block is deterministic, and ``canonical_sha256``
hashes exactly that deterministic content.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import figures
from .ci import hj_residual, make_fd_grads
from .dynamics import gronwall_bound, sample_bundle
from .errors import ConfigurationError, DomainError, ResourceError
from .games import refinement_study, solve_tree
from .hamiltonians import game_hamiltonian, l1_distance, steklov_smooth
from .lyapunov import comparison_check
from .minimax import CheckConfig, classify, default_s_set, default_tolerance
from .problem import ProblemFile, build_game, build_phi, initial_path, parse_problem
from .regularize import good_set_from_discontinuities, time_regularize

BUDGET_ENV = "HJLAB_BUDGET"


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_report(out_dir: str, command: str, payload: dict, timings: dict,
                 threads: int = 1) -> str:
    """Deterministic payload plus a volatile ``execution`` block.

    Wall-clock timings and the scan-parallelism knob cannot influence any
    computed value, so they live outside the canonical content that
    ``canonical_sha256`` certifies and that determinism checks compare.
    """
    os.makedirs(out_dir, exist_ok=True)
    body = dict(payload)
    body["canonical_sha256"] = hashlib.sha256(_canonical(payload).encode()).hexdigest()
    body["execution"] = {
        "threads": threads,
        "timings": {k: round(v, 6) for k, v in timings.items()},
    }
    path = os.path.join(out_dir, f"{command}.report.json")
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_csv(out_dir: str, stem: str, header, rows) -> str:
    path = os.path.join(out_dir, f"{stem}.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _load(args) -> ProblemFile:
    with open(args.problem) as fh:
        return parse_problem(fh.read())


def _resolve_budget(args, problem: ProblemFile) -> int | None:
    if args.budget is not None:
        return args.budget
    if problem.budget is not None:
        return problem.budget
    env = os.environ.get(BUDGET_ENV)
    return int(env) if env else None


def _echo(problem: ProblemFile, args, extra=None) -> dict:
    out = {
        "problem": problem.to_json_dict(),
        "flags": {
            "seed": args.seed,
            "steps": getattr(args, "steps", None),
            "tol": getattr(args, "tol", None),
            "budget": getattr(args, "budget", None),
        },
    }
    if extra:
        out["flags"].update(extra)
    return out


def cmd_solve_game(args) -> int:
    problem = _load(args)
    game = build_game(problem)
    x = initial_path(problem)
    t = problem.start_time
    start = time.perf_counter()
    report = solve_tree(game, t, x, args.steps, _resolve_budget(args, problem))
    wall = time.perf_counter() - start
    payload = _echo(problem, args)
    payload["command"] = "solve-game"
    payload["results"] = report.to_json_dict()
    path = write_report(args.out_dir, "solve-game", payload, {"solve": wall}, args.threads)
    print(f"solve-game: rho_lower={report.rho_lower:.12g} rho_upper={report.rho_upper:.12g} "
          f"gap={report.gap:.3g} -> {path}")
    return 0


def cmd_check_minimax(args) -> int:
    problem = _load(args)
    game = build_game(problem)
    phi = build_phi(problem)
    if phi is None:
        raise ConfigurationError("check-minimax needs a 'phi' expression in the problem file")
    if args.shift:
        phi = phi.shifted(args.shift)
    H = game_hamiltonian(game, "lower")
    x = initial_path(problem)
    t = problem.start_time
    start = time.perf_counter()
    verdicts = classify(
        phi, H, game.sigma, t, x, game.c_f,
        CheckConfig(s_seed=args.seed, bundle_seed=args.seed, tol=args.tol,
                    bundle_count=args.bundle_count),
    )
    # no finite bundle exhausts the extension set: report how the margins
    # move as the bundle grows so the sampling density can be judged
    sensitivity = {}
    for count in (args.bundle_count, 2 * args.bundle_count, 4 * args.bundle_count):
        vs = classify(
            phi, H, game.sigma, t, x, game.c_f,
            CheckConfig(s_seed=args.seed, bundle_seed=args.seed, tol=args.tol,
                        bundle_count=count),
        )
        sensitivity[str(count)] = {
            "upper_margin": vs["upper"].margin,
            "lower_margin": vs["lower"].margin,
        }
    wall = time.perf_counter() - start
    all_pass = all(v.passed for v in verdicts.values())
    payload = _echo(problem, args, {"shift": args.shift, "bundle_count": args.bundle_count})
    payload["command"] = "check-minimax"
    payload["verdicts"] = {k: v.to_json_dict() for k, v in verdicts.items()}
    payload["margin_vs_bundle_size"] = sensitivity
    payload["minimax"] = all_pass
    path = write_report(args.out_dir, "check-minimax", payload, {"check": wall}, args.threads)
    for name, v in verdicts.items():
        print(f"check-minimax[{name}]: {'pass' if v.passed else 'FAIL'} margin={v.margin:.3e}")
    print(f"-> {path}")
    return 0 if all_pass else 1


def cmd_smooth(args) -> int:
    problem = _load(args)
    game = build_game(problem)
    H = game_hamiltonian(game, "lower")
    x = initial_path(problem)
    ks = [int(k) for k in args.k_list.split(",")]
    s = np.zeros(problem.n)
    s[0] = 1.0
    start = time.perf_counter()
    distances = []
    for k in ks:
        Hk = steklov_smooth(H, k, quad_cells=args.quad_cells)
        distances.append(l1_distance(H, Hk, [x], s))
    wall = time.perf_counter() - start
    payload = _echo(problem, args, {"k_list": ks})
    payload["command"] = "smooth"
    payload["results"] = {"k": ks, "l1_distance": distances}
    path = write_report(args.out_dir, "smooth", payload, {"smooth": wall}, args.threads)
    csv_path = write_csv(args.out_dir, "smooth", ["k", "l1_distance"], zip(ks, distances))
    artifacts = [path, csv_path]
    if not args.no_figures:
        artifacts.append(figures.smoothing_figure(ks, distances, args.out_dir, "smooth"))
    print("smooth: " + " ".join(f"k={k}:{d:.6g}" for k, d in zip(ks, distances)))
    print("-> " + " ".join(artifacts))
    return 0


def cmd_ci_deriv(args) -> int:
    problem = _load(args)
    phi = build_phi(problem)
    if phi is None:
        raise ConfigurationError("ci-deriv needs a 'phi' expression in the problem file")
    x = initial_path(problem)
    grid = problem.grid()
    t = problem.start_time
    grads = make_fd_grads(phi, args.probe)
    H = game_hamiltonian(build_game(problem), "lower")
    start = time.perf_counter()
    g = grads(t, x)
    residual = hj_residual(phi, grads, H, t, x)
    wall = time.perf_counter() - start
    payload = _echo(problem, args, {"probe": args.probe})
    payload["command"] = "ci-deriv"
    payload["results"] = {
        "t": t,
        "dt_phi": g.dt_phi,
        "grad_phi": g.grad_phi.tolist(),
        "probe_step": g.probe_step,
        "fd_residual_estimate": g.residual_estimate,
        "hj_residual": residual,
    }
    path = write_report(args.out_dir, "ci-deriv", payload, {"ci": wall}, args.threads)
    print(f"ci-deriv: dt_phi={g.dt_phi:.6g} grad={g.grad_phi} hj_residual={residual:.3e} -> {path}")
    return 0


def cmd_compare(args) -> int:
    problem = _load(args)
    with open(args.against) as fh:
        other = parse_problem(fh.read())
    phi1 = build_phi(problem)
    phi2 = build_phi(other)
    if phi1 is None or phi2 is None:
        raise ConfigurationError("compare needs 'phi' in both problem files")
    g1 = build_game(problem)
    g2 = build_game(other)
    H1 = game_hamiltonian(g1, "lower")
    H2 = game_hamiltonian(g2, "lower")
    x = initial_path(problem)
    grid = problem.grid()
    rng = np.random.default_rng(args.seed)
    points = [(problem.start_time, x)]
    for _ in range(args.samples - 1):
        vals = x.values + rng.normal(scale=0.3, size=x.values.shape).cumsum(axis=0) * grid.dt
        j = int(rng.integers(grid.lag_cells, grid.n_nodes - 1))
        points.append((float(grid.node_times[j]), x.with_values(vals)))
    start = time.perf_counter()
    verdict = comparison_check(phi1, H1, phi2, H2, points, tol=args.tol or 1e-9,
                               bundle_seed=args.seed)
    wall = time.perf_counter() - start
    payload = _echo(problem, args, {"against": os.path.basename(args.against), "samples": args.samples})
    payload["command"] = "compare"
    payload["verdicts"] = {"comparison": verdict.to_json_dict()}
    path = write_report(args.out_dir, "compare", payload, {"compare": wall}, args.threads)
    print(f"compare: {'pass' if verdict.passed else 'FAIL'} margin={verdict.margin:.3e} -> {path}")
    return 0 if verdict.passed else 1


def cmd_refine(args) -> int:
    problem = _load(args)
    game = build_game(problem)
    x = initial_path(problem)
    t = problem.start_time
    steps_list = [int(s) for s in args.steps_list.split(",")]
    closed = build_phi(problem)
    start = time.perf_counter()
    rows = refinement_study(game, t, x, steps_list, closed_form=closed,
                            budget=_resolve_budget(args, problem))
    wall = time.perf_counter() - start
    payload = _echo(problem, args, {"steps_list": steps_list})
    payload["command"] = "refine"
    payload["results"] = {"rows": [r.to_json_dict() for r in rows]}
    path = write_report(args.out_dir, "refine", payload, {"refine": wall}, args.threads)
    header = ["steps", "dt", "rho_lower", "rho_upper", "gap", "wall_time"]
    if closed is not None:
        header += ["closed_form", "err_lower", "err_upper"]
    csv_rows = []
    for r in rows:
        row = [r.steps, r.dt, r.rho_lower, r.rho_upper, r.gap, round(r.wall_time, 6)]
        if closed is not None:
            row += [r.closed_form, r.err_lower, r.err_upper]
        csv_rows.append(row)
    csv_path = write_csv(args.out_dir, "refine", header, csv_rows)
    artifacts = [path, csv_path]
    if not args.no_figures:
        artifacts.append(figures.refinement_figure(rows, args.out_dir, "refine"))
    for r in rows:
        extra = f" err_lower={r.err_lower:.3e}" if r.err_lower is not None else ""
        print(f"refine steps={r.steps}: lower={r.rho_lower:.9g} upper={r.rho_upper:.9g}"
              f" gap={r.gap:.3g}{extra}")
    print("-> " + " ".join(artifacts))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hjlab",
        description="Desk-scale experiments for path-dependent HJ equations and delay games",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("problem", help="problem file (JSON)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--budget", type=int, default=None,
                       help=f"node budget (default from {BUDGET_ENV} or built-in)")
        p.add_argument("--out-dir", default="reports")
        p.add_argument("--threads", type=int, default=1, choices=(1, 2, 4, 8),
                       help="reserved for scan parallelism; results are schedule-independent")
        p.add_argument("--dt", type=float, default=None,
                       help="override the problem grid step")
        p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("solve-game", help="tree values and policies")
    common(p)
    p.add_argument("--steps", type=int, default=4)
    p.set_defaults(fn=cmd_solve_game)

    p = sub.add_parser("check-minimax", help="(U)/(L)/boundary verdicts for phi")
    common(p)
    p.add_argument("--shift", type=float, default=0.0,
                   help="perturb phi by this amount at interior times")
    p.add_argument("--bundle-count", type=int, default=8,
                   help="random extensions per bundle (margins are also "
                        "reported at 2x and 4x this size)")
    p.set_defaults(fn=cmd_check_minimax)

    p = sub.add_parser("smooth", help="Steklov smoothing L1 curve")
    common(p)
    p.add_argument("--k-list", default="2,4,8")
    p.add_argument("--quad-cells", type=int, default=64)
    p.set_defaults(fn=cmd_smooth)

    p = sub.add_parser("ci-deriv", help="finite-difference ci-derivatives of phi")
    common(p)
    p.add_argument("--probe", type=float, default=1e-4)
    p.set_defaults(fn=cmd_ci_deriv)

    p = sub.add_parser("compare", help="phi1 <= phi2 comparison harness")
    common(p)
    p.add_argument("--against", required=True, help="second problem file")
    p.add_argument("--samples", type=int, default=50)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("refine", help="tree-value refinement study")
    common(p)
    p.add_argument("--steps-list", default="2,4,8")
    p.set_defaults(fn=cmd_refine)

    return parser


def _apply_dt_override(args):
    if getattr(args, "dt", None) is None:
        return
    with open(args.problem) as fh:
        raw = json.load(fh)
    raw["dt"] = args.dt
    import tempfile

    tmp = tempfile.NamedTemporaryFile("w", suffix=".json", delete=False)
    json.dump(raw, tmp)
    tmp.close()
    args.problem = tmp.name


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_dt_override(args)
        return args.fn(args)
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 3
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
