"""Command-line entry point: ``gmrf-mtl run|graph|estimate|theory``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import estimation, harness, theory
from .config import load_config
from .datagen import AgentDataModel
from .exceptions import (ConfigError, DivergenceError, IllConditionedEstimateError,
                         UnstableStepsizeError, ValidationError)
from .gmrf import TaskMatrix
from .graph import (WeightMixture, build_laplacian, format_edge_list, random_topology,
                    read_edge_list, write_edge_list)

log = logging.getLogger("gmrf_mtl")


def _cmd_run(args):
    cfg = load_config(args.config)
    changes = {}
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.out_dir is not None:
        changes["out_dir"] = args.out_dir
    if args.plot:
        changes["plot"] = True
    if changes:
        cfg = cfg.replace(**changes)
        cfg.validate()
    paths = harness.run_experiment(cfg)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def _cmd_graph_gen(args):
    mix = WeightMixture(args.p_high, tuple(args.high), tuple(args.low))
    topo = random_topology(args.K, args.max_degree, mix, np.random.default_rng(args.seed))
    if args.output:
        write_edge_list(topo, args.output)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(format_edge_list(topo))
    return 0


def _cmd_graph_show(args):
    topo = read_edge_list(args.file)
    L = build_laplacian(topo)
    print(f"agents: {topo.num_agents}")
    print(f"edges: {len(topo.edges)}")
    print("degrees: " + " ".join(str(int(d)) for d in np.count_nonzero(topo.adjacency(), axis=1)))
    print("laplacian eigenvalues: " + " ".join(f"{x:.6g}" for x in L.eigenvalues))
    print(f"algebraic connectivity: {L.algebraic_connectivity:.6g}")
    print(f"spectral norm: {L.spectral_norm():.6g}")
    if args.laplacian:
        np.savetxt(sys.stdout, L.entries, fmt="%.10g", delimiter=",")
    return 0


def _cmd_estimate(args):
    W = TaskMatrix.from_csv(args.states).values
    est = estimation.estimate_from_states(W, rel_floor=args.rel_floor)
    if args.output:
        estimation.save_matrix_csv(args.output, est.L_hat)
    if args.json:
        print(est.diagnostics_json())
        return 0
    K, M = W.shape
    print(f"states: K={K}, M={M}")
    print(f"rank: {est.rank} (floor {est.floor:.3g})")
    print("projected covariance eigenvalues: " + " ".join(f"{x:.6g}" for x in est.eigenvalues))
    print(f"positive off-diagonal mass: {est.positive_offdiagonal_mass():.6g}")
    print("L_hat:")
    np.savetxt(sys.stdout, est.L_hat, fmt="%.10g", delimiter=",")
    return 0


def _cmd_theory_pi(args):
    cfg = load_config(args.config)
    setup = harness.build_setup(cfg)
    L = setup.laplacian
    print(f"K={cfg.K}, lambda_2={L.algebraic_connectivity:.6g}, tr(L^dagger)={np.trace(L.pinv):.6g}")
    print("sigma_u^2: " + " ".join(f"{x:.4g}" for x in setup.sigma_u2))
    print("sigma_v^2: " + " ".join(f"{x:.4g}" for x in setup.sigma_v2))
    for M in cfg.M_list:
        models = [AgentDataModel(float(u), float(v), np.zeros(M)) for u, v in zip(setup.sigma_u2, setup.sigma_v2)]
        print(f"M={M}: mean-square stepsize limit {theory.lms_mean_square_limit(models):.6g}")
        for mu in cfg.mu_list:
            try:
                gauss = float(np.sum(M * theory.lms_gaussian_steady_variance(
                    setup.sigma_u2, setup.sigma_v2, mu, M)))
            except UnstableStepsizeError as exc:
                print(f"  mu={mu:g}: unstable ({exc})")
                continue
            ss = theory.SteadyStateModel.from_models(models, mu)
            ref = theory.bias_floor_reference(L.pinv, ss.Pi, cfg.K, M)
            print(f"  mu={mu:g}: tr(Pi)={ss.trace:.6g} residual={ss.residual():.2e} "
                  f"fourth-moment tr={gauss:.6g} bias-floor ref={ref:.6g}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="gmrf-mtl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config and write CSV outputs")
    r.add_argument("config")
    r.add_argument("--workers", type=int)
    r.add_argument("--out-dir")
    r.add_argument("--plot", action="store_true", help="also write SVG charts")
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("graph", help="topology tooling")
    gsub = g.add_subparsers(dest="graph_command", required=True)
    gg = gsub.add_parser("gen", help="generate a random connected topology")
    gg.add_argument("--K", type=int, default=10)
    gg.add_argument("--max-degree", type=int, default=8)
    gg.add_argument("--seed", type=int, default=273)
    gg.add_argument("--p-high", type=float, default=0.3)
    gg.add_argument("--high", type=float, nargs=2, default=(1.0, 20.0))
    gg.add_argument("--low", type=float, nargs=2, default=(0.0, 0.5))
    gg.add_argument("-o", "--output")
    gg.set_defaults(func=_cmd_graph_gen)
    gs = gsub.add_parser("show", help="print a topology's degrees and spectrum")
    gs.add_argument("file")
    gs.add_argument("--laplacian", action="store_true", help="also print L")
    gs.set_defaults(func=_cmd_graph_show)

    e = sub.add_parser("estimate", help="estimate a Laplacian from a K x M states CSV")
    e.add_argument("states")
    e.add_argument("--rel-floor", type=float, default=estimation.EIG_FLOOR_REL)
    e.add_argument("-o", "--output", help="write L_hat to this CSV")
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=_cmd_estimate)

    t = sub.add_parser("theory", help="steady-state theory")
    tsub = t.add_subparsers(dest="theory_command", required=True)
    tp = tsub.add_parser("pi", help="Lyapunov solution diagnostics for a config")
    tp.add_argument("config")
    tp.set_defaults(func=_cmd_theory_pi)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, IllConditionedEstimateError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
