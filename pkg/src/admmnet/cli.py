"""Command-line front end: training runs, synthetic data generation, self-check.

Exit codes: 0 success, 1 usage error, 2 divergence abort, 3 failed self-check.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import objective
from .baselines import BaselineConfig, run_baseline
from .errors import BacktrackError, DataError, DivergenceError, FormatError
from .gcn import GcnConfig, gcn_train
from .linalg import Rng
from .objective import MlpArchitecture, Regularizer, NO_REG
from .synth import make_image_classes, make_sbm_graph, make_separable
from .training import TrainConfig, train

CSV_HEADER = "iter,objective,lagrangian,residual_l2,train_acc,test_acc,descent_ok,ck,wall_time_s"


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _write_rows(path: str, rows: list, timing: bool) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            wt = r["wall_time"] if timing else 0.0
            fh.write(
                f"{r['iter']},{repr(float(r['objective']))},{repr(float(r['lagrangian']))},"
                f"{repr(float(r['residual_l2']))},{repr(float(r['train_acc']))},"
                f"{repr(float(r['test_acc']))},{int(r['descent_ok'])},"
                f"{repr(float(r['ck']))},{repr(float(wt))}\n"
            )


def _load_config_defaults(path: str) -> dict:
    """One key=value per line; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}: expected key=value, got {line!r}")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _parse_layers(text: str):
    try:
        dims = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise SystemExit(_usage_error("--layers must be a comma-separated integer list"))
    return dims


def _usage_error(msg: str) -> int:
    sys.stderr.write(f"error: {msg}\n")
    return 1


def _cmd_train(args) -> int:
    if args.data is None:
        return _usage_error("--data is required")
    if args.out is None:
        return _usage_error("--out is required")
    if args.epochs < 1:
        return _usage_error("--epochs must be >= 1")
    rows = []

    if args.model == "mlp":
        from .data_io import load_idx_dataset, subsample

        try:
            train_data, test_data = load_idx_dataset(args.data)
        except (FormatError, DataError, OSError) as exc:
            return _usage_error(str(exc))
        if args.subsample:
            train_data = subsample(train_data, args.subsample, Rng(args.seed))
        dims = _parse_layers(args.layers)
        arch = MlpArchitecture(
            layer_dims=dims,
            regularizer=Regularizer("l2", args.lam) if args.lam else NO_REG,
        )

        if args.optimizer == "admm":
            cfg = TrainConfig(rho=args.rho, nu=args.nu, epochs=args.epochs, seed=args.seed)
            try:
                result = train(arch, train_data, cfg, eval_data=test_data)
                traces = result.traces
            except DivergenceError as exc:
                _dump_mlp_traces(exc.traces or [], rows)
                _write_rows(args.out, rows, args.timing)
                sys.stderr.write(f"divergence: {exc}\n")
                return 2
            _dump_mlp_traces(traces, rows)
        else:
            bcfg = BaselineConfig(
                optimizer=args.optimizer,
                learning_rate=args.lr,
                epochs=args.epochs,
                seed=args.seed,
            )
            try:
                _, traces = run_baseline(bcfg, arch, train_data, eval_data=test_data)
            except DivergenceError as exc:
                _dump_baseline_traces(exc.traces or [], rows)
                _write_rows(args.out, rows, args.timing)
                sys.stderr.write(f"divergence: {exc}\n")
                return 2
            _dump_baseline_traces(traces, rows)

    else:  # gcn
        from .data_io import load_graph

        try:
            graph = load_graph(args.data)
        except (FormatError, DataError, OSError) as exc:
            return _usage_error(str(exc))
        hidden = _parse_layers(args.layers) if args.layers else (32,)
        cfg = GcnConfig(hidden_dims=hidden, rho=args.rho, mu=args.mu,
                        epochs=args.epochs, seed=args.seed)
        try:
            _, traces = gcn_train(graph, cfg)
        except DivergenceError as exc:
            _dump_gcn_traces(exc.traces or [], rows)
            _write_rows(args.out, rows, args.timing)
            sys.stderr.write(f"divergence: {exc}\n")
            return 2
        _dump_gcn_traces(traces, rows)

    _write_rows(args.out, rows, args.timing)
    return 0


def _dump_mlp_traces(traces, rows):
    for t in traces:
        rows.append(dict(
            iter=t.iter, objective=t.objective_F, lagrangian=t.lagrangian,
            residual_l2=t.residual_l2, train_acc=t.train_acc, test_acc=t.test_acc,
            descent_ok=t.descent_ok, ck=t.ck, wall_time=t.wall_time,
        ))


def _dump_baseline_traces(traces, rows):
    for t in traces:
        rows.append(dict(
            iter=t.iter, objective=t.loss, lagrangian=t.loss, residual_l2=0.0,
            train_acc=t.train_acc, test_acc=t.test_acc, descent_ok=True,
            ck=0.0, wall_time=t.wall_time,
        ))


def _dump_gcn_traces(traces, rows):
    for t in traces:
        rows.append(dict(
            iter=t.iter, objective=t.risk, lagrangian=t.lagrangian,
            residual_l2=t.residual_fro, train_acc=t.train_acc, test_acc=t.test_acc,
            descent_ok=True, ck=t.ck, wall_time=t.wall_time,
        ))


def _cmd_make_data(args) -> int:
    from . import data_io

    if args.kind == "images":
        import os

        os.makedirs(args.out, exist_ok=True)
        train, test = make_image_classes(args.n, rng=Rng(args.seed))
        data_io.write_idx_images(os.path.join(args.out, "train-images-idx3-ubyte"), train.x)
        data_io.write_idx_labels(os.path.join(args.out, "train-labels-idx1-ubyte"), train.y)
        data_io.write_idx_images(os.path.join(args.out, "t10k-images-idx3-ubyte"), test.x)
        data_io.write_idx_labels(os.path.join(args.out, "t10k-labels-idx1-ubyte"), test.y)
    else:
        graph = make_sbm_graph(args.n, rng=Rng(args.seed))
        data_io.save_graph(args.out, graph)
    return 0


def _cmd_selfcheck(args) -> int:
    """Gradient checks, subproblem oracles, and a short descent run."""
    from . import solvers
    from .objective import Dataset, forward_init, grad_phi_block, phi

    failures = []

    def check(name, ok):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures.append(name)

    rng = Rng(7)
    arch = MlpArchitecture(layer_dims=(3, 4, 2))
    x = rng.normal(0.0, 1.0, (3, 6))
    y = np.zeros((2, 6))
    y[rng.integers(0, 2, 6), np.arange(6)] = 1.0
    data = Dataset(x, y)
    state = forward_init(arch, data, Rng(1), rho=1.0, nu=1.0)
    for l, p in enumerate(state.z):
        state.z[l] = p + 0.1 * rng.normal(0.0, 1.0, p.shape)
    for l, p in enumerate(state.a):
        state.a[l] = p + 0.1 * rng.normal(0.0, 1.0, p.shape)
    state.u = rng.normal(0.0, 1.0, state.u.shape)

    # finite-difference check on every W gradient (the fault-injection hook
    # adds objective.GRADIENT_BUG to these)
    h = 1e-6
    worst = 0.0
    for l in range(arch.n_layers):
        grad = grad_phi_block(state, data, "W", l, arch.activation) + objective.GRADIENT_BUG
        num = np.zeros_like(grad)
        for idx in np.ndindex(*grad.shape):
            w0 = state.W[l][idx]
            state.W[l][idx] = w0 + h
            fp = phi(state, data, arch.activation)
            state.W[l][idx] = w0 - h
            fm = phi(state, data, arch.activation)
            state.W[l][idx] = w0
            num[idx] = (fp - fm) / (2 * h)
        denom = max(1.0, float(np.max(np.abs(num))))
        worst = max(worst, float(np.max(np.abs(grad - num))) / denom)
    check("gradient W vs finite differences", worst < 1e-5)

    # scalar z-subproblem vs a fine grid
    rng2 = Rng(11)
    ok = True
    grid = np.linspace(-5, 5, 10001)
    for _ in range(20 if args.quick else 200):
        m_in = float(rng2.normal(0.0, 2.0, ()))
        tgt = float(rng2.normal(0.0, 2.0, ()))
        z = solvers.solve_z_relu(np.array([[m_in]]), np.array([[tgt]]), 0.5, 0.5)[0, 0]

        def obj(v):
            return 0.5 * (v - m_in) ** 2 + 0.5 * (np.maximum(v, 0.0) - tgt) ** 2

        if obj(z) > np.min(obj(grid)) + 1e-4:
            ok = False
    check("relu z-subproblem vs grid", ok)

    # short run: certificate + monotone Lagrangian
    sep = make_separable(40, rng=Rng(3))
    arch2 = MlpArchitecture(layer_dims=(4, 8, 2))
    cfg = TrainConfig(rho=4.0, nu=1.0, epochs=5 if args.quick else 25, seed=0)
    try:
        result = train(arch2, sep, cfg)
        cert_ok = max(t.max_cert_violation for t in result.traces) <= 1e-10
        lagr = [t.lagrangian for t in result.traces]
        mono = all(b <= a + 1e-9 for a, b in zip(lagr, lagr[1:]))
        check("backtracking certificate", cert_ok)
        check("Lagrangian monotone (rho=4, nu=1)", mono)
    except (DivergenceError, BacktrackError):
        check("training run completes", False)

    if failures:
        print(f"{len(failures)} check(s) failed: {', '.join(failures)}")
        return 3
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="admmnet")
    sub = p.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train a model and write a metrics CSV")
    tr.add_argument("model", choices=["mlp", "gcn"])
    tr.add_argument("--data", default=None, help="dataset directory")
    tr.add_argument("--layers", default="", help="mlp: full dims; gcn: hidden dims")
    tr.add_argument("--optimizer", default="admm",
                    choices=["admm", "gd", "adagrad", "adadelta", "adam"])
    tr.add_argument("--rho", type=float, default=1.0)
    tr.add_argument("--nu", type=float, default=1e-6)
    tr.add_argument("--mu", type=float, default=1.0)
    tr.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.0)
    tr.add_argument("--lr", type=float, default=1e-3, help="baseline learning rate")
    tr.add_argument("--epochs", type=int, default=200)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--subsample", type=int, default=0)
    tr.add_argument("--out", default=None, help="output CSV path")
    tr.add_argument("--timing", action="store_true",
                    help="record wall-clock times (off by default so CSVs are reproducible)")
    tr.add_argument("--config", default=None, help="key=value defaults file")
    tr.set_defaults(func=_cmd_train)

    mk = sub.add_parser("make-data", help="generate a synthetic dataset on disk")
    mk.add_argument("kind", choices=["images", "graph"])
    mk.add_argument("--n", type=int, default=1000, help="samples (images) or nodes (graph)")
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--out", required=True, help="output directory")
    mk.set_defaults(func=_cmd_make_data)

    sc = sub.add_parser("selfcheck", help="run built-in correctness checks")
    sc.add_argument("--quick", action="store_true", help="sub-second subset only")
    sc.set_defaults(func=_cmd_selfcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    # a --config file supplies defaults; explicit flags still win
    if "--config" in argv:
        path = argv[argv.index("--config") + 1] if argv.index("--config") + 1 < len(argv) else None
        if path is None:
            return _usage_error("--config requires a path")
        try:
            raw = _load_config_defaults(path)
        except (FormatError, OSError) as exc:
            return _usage_error(str(exc))
        defaults = {}
        for k, v in raw.items():
            if k in ("timing",):
                defaults[k] = v.lower() in ("1", "true", "yes")
            elif k in ("rho", "nu", "mu", "lam", "lr"):
                defaults[k] = float(v)
            elif k in ("epochs", "seed", "subsample"):
                defaults[k] = int(v)
            elif k in ("data", "layers", "optimizer", "out", "model"):
                defaults[k] = v
            else:
                return _usage_error(f"unknown config key {k!r}")
        for sp in parser._subparsers._group_actions[0].choices.values():
            sp.set_defaults(**{k: v for k, v in defaults.items()
                               if any(a.dest == k for a in sp._actions)})
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
