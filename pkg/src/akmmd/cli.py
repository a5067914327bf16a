"""Command-line surface: one subcommand per pipeline artifact.

Subcommands: gen, refs, test, witness, pairwise, power, simulate, compare.
Every randomized subcommand requires --seed; outputs are byte-identical
across runs and across --threads settings for a fixed seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data_model import (
    PointCloud,
    derive_stream,
    load_point_cloud,
    load_reference_set,
    save_matrix_csv,
    save_point_cloud,
    save_reference_set,
    save_result,
)
from .kernel import build_affinity_matrix
from .ksample import affinity_graph, pairwise_distances, spectral_embedding
from .mmd import (
    L2Statistic,
    SpecStatistic,
    gaussian_two_sample_test,
    test_from_affinity,
)
from .refset import LocalPcaConfig, RefSamplingConfig, build_reference_set, default_k_neighbors, estimate_covariance_field, sample_reference_points
from .spectral import SpectralFilter, bandpass_filter, diffusion_filter, load_filter, truncated_svd
from .synthetic import (
    CurvePairConfig,
    MixturePairConfig,
    curve_reference_set,
    curve_sampler,
    gen_curve_pair,
    gen_mixture_pair,
    gen_tensor_grid,
    mixture_sampler,
)
from .theory import (
    CriticalRegime,
    GaussianKernelSpec,
    estimate_centered_spectrum,
    kernel_comparison,
    limit_distribution,
    power_lower_bound,
    statistic_for_kind,
)
from .witness import witness_for_kind

__all__ = ["run", "main"]


def _add_common_io(p: argparse.ArgumentParser) -> None:
    p.add_argument("--header", action="store_true", help="skip one header line in input CSVs")
    p.add_argument("--threads", type=int, default=None, help="cap worker threads (AKMMD_THREADS fallback)")


def _add_stat_flags(p: argparse.ArgumentParser, with_gauss: bool = False) -> None:
    choices = ["l2", "spec"] + (["gauss"] if with_gauss else [])
    p.add_argument("--stat", choices=choices, default="l2")
    p.add_argument("--rank", type=int, default=None, help="SVD rank r_f (required with --stat spec)")
    p.add_argument(
        "--filter",
        default=None,
        help="spectral filter: bandpass:a,b | diffusion:m | file:path (default diffusion:0)",
    )
    if with_gauss:
        p.add_argument("--sigma", type=float, default=None, help="Gaussian kernel bandwidth (with --stat gauss)")


def _check_spec_flags(parser: argparse.ArgumentParser, args) -> None:
    if args.stat == "spec" and args.rank is None:
        parser.error("--stat spec requires --rank")
    if args.stat != "spec" and (args.rank is not None or args.filter is not None):
        parser.error("--rank/--filter are only valid with --stat spec")
    if getattr(args, "sigma", None) is not None and args.stat != "gauss":
        parser.error("--sigma is only valid with --stat gauss")
    if args.stat == "gauss" and getattr(args, "sigma", None) is None:
        parser.error("--stat gauss requires --sigma")


def _resolve_filter(filter_arg: str | None, rank: int, n_r: int, singular_values) -> SpectralFilter:
    spec = filter_arg or "diffusion:0"
    name, _, rest = spec.partition(":")
    if name == "bandpass":
        try:
            a, b = (int(v) for v in rest.split(","))
        except ValueError:
            raise ValueError(f"bad bandpass filter spec: {spec!r}") from None
        filt = bandpass_filter(a, b)
    elif name == "diffusion":
        try:
            m = int(rest or "0")
        except ValueError:
            raise ValueError(f"bad diffusion filter spec: {spec!r}") from None
        filt = diffusion_filter(singular_values, m, n_r)
    elif name == "file":
        filt = load_filter(rest)
    else:
        raise ValueError(f"unknown filter spec: {spec!r}")
    if len(filt) > rank:
        filt = SpectralFilter(filt.f[:rank])
    return filt


def _load_refset(args):
    return load_reference_set(args.refs, args.covs)


# ---------------------------------------------------------------------------
# handlers
# ---------------------------------------------------------------------------

def _cmd_gen(args) -> int:
    rng = derive_stream(args.seed, 0)
    if args.shape == "curve":
        x, y = gen_curve_pair(CurvePairConfig(args.n1, args.n2, args.delta, args.eps_x), rng)
        save_point_cloud(x, args.out_x)
        save_point_cloud(y, args.out_y)
    elif args.shape == "mixture":
        x, y = gen_mixture_pair(MixturePairConfig(args.n1, args.n2, args.delta, args.eps_x), rng)
        save_point_cloud(x, args.out_x)
        save_point_cloud(y, args.out_y)
    else:
        box = None
        if args.anomaly:
            box = tuple(int(v) for v in args.anomaly.split(","))
            if len(box) != 4:
                raise ValueError("--anomaly must be row0,row1,col0,col1")
        pixels = gen_tensor_grid(args.side, box, args.noise_sigma, rng)
        rows = []
        for px in pixels:
            t = px.tensor
            rows.append(
                [px.location[0], px.location[1], t[0, 0], t[1, 1], t[2, 2], t[0, 1], t[0, 2], t[1, 2]]
            )
        save_matrix_csv(np.asarray(rows), args.out)
    return 0


def _cmd_refs(args) -> int:
    pool = load_point_cloud(args.pool, skip_header=args.header)
    rng = derive_stream(args.seed, 0)
    sampling = RefSamplingConfig(
        n_r=args.nr,
        batch_size=args.batch_size,
        kde_bandwidth=args.kde_bandwidth,
        jitter_scale=args.jitter,
        min_neighbors=args.min_neighbors,
        radius=args.radius,
    )
    k = args.k_neighbors if args.k_neighbors is not None else default_k_neighbors(pool.n)
    refs = sample_reference_points(pool, sampling, rng)
    save_matrix_csv(refs, args.out_refs)
    sigmas = [args.sigma_tilde]
    if args.sigma_grid:
        sigmas = [float(v) for v in args.sigma_grid.split(",")]
    for sig in sigmas:
        refset = estimate_covariance_field(
            pool, refs, LocalPcaConfig(k_neighbors=k, scale_sigma_tilde=sig, reg_floor=args.reg_floor)
        )
        covs_path = args.out_covs
        if len(sigmas) > 1:
            root, ext = os.path.splitext(args.out_covs)
            covs_path = f"{root}_sigma{sig:g}{ext}"
        flat = np.stack([c.matrix().reshape(-1) for c in refset.covariances])
        save_matrix_csv(flat, covs_path)
    return 0


def _statistic_kind_for(args, A):
    if args.stat == "l2":
        return L2Statistic()
    svd = truncated_svd(A, args.rank)
    filt = _resolve_filter(args.filter, svd.rank, A.n_r, svd.S)
    return SpecStatistic(filter=filt, r_f=args.rank)


def _cmd_test(args) -> int:
    X = load_point_cloud(args.x, skip_header=args.header)
    Y = load_point_cloud(args.y, skip_header=args.header)
    refset = _load_refset(args)
    rng = derive_stream(args.seed, 0)
    A = build_affinity_matrix(refset, X, Y, threads=args.threads)
    kind = _statistic_kind_for(args, A)
    result = test_from_affinity(A, kind, args.alpha, args.nboot, rng, weights=refset.weights)
    save_result(result, args.out)
    return 0


def _cmd_witness(args) -> int:
    X = load_point_cloud(args.x, skip_header=args.header)
    Y = load_point_cloud(args.y, skip_header=args.header)
    Z = load_point_cloud(args.query, skip_header=args.header)
    refset = _load_refset(args)
    A = build_affinity_matrix(refset, X, Y, threads=args.threads)
    kind = _statistic_kind_for(args, A)
    ev = witness_for_kind(kind, A.x_block, A.y_block, refset, Z)
    save_matrix_csv(np.column_stack([ev.query_points, ev.values]), args.out)
    return 0


def _cmd_pairwise(args) -> int:
    samples = [load_point_cloud(p, skip_header=args.header) for p in args.samples]
    refset = _load_refset(args)
    if args.stat == "spec":
        from .kernel import affinity_block

        blocks = np.hstack([affinity_block(refset, s) for s in samples])
        svd = truncated_svd(blocks, args.rank)
        filt = _resolve_filter(args.filter, svd.rank, refset.n_r, svd.S)
        kind = SpecStatistic(filter=filt, r_f=args.rank)
    else:
        kind = L2Statistic()
    D = pairwise_distances(samples, refset, kind)
    save_matrix_csv(D.d2, args.out_d2)
    if args.out_graph or args.out_embed:
        W = affinity_graph(D, args.scale)
        if args.out_graph:
            k = D.k
            rows = [[i, j, W[i, j]] for i in range(k) for j in range(i + 1, k)]
            save_matrix_csv(np.asarray(rows), args.out_graph)
        if args.out_embed:
            coords = spectral_embedding(W, args.embed_dim)
            save_matrix_csv(coords, args.out_embed)
    return 0


def _cmd_power(args) -> int:
    deltas = [float(v) for v in args.deltas.split(",")]
    stream = derive_stream(args.seed, 0)
    rows = []
    for di, delta in enumerate(deltas):
        rejects = 0
        for t in range(args.trials):
            trial = stream.child(di).child(t)
            if args.example == "curve":
                X, Y = gen_curve_pair(CurvePairConfig(args.n1, args.n2, delta, args.eps_x), trial.child(0))
            else:
                X, Y = gen_mixture_pair(MixturePairConfig(args.n1, args.n2, delta, args.eps_x), trial.child(0))
            if args.stat == "gauss":
                res = gaussian_two_sample_test(X, Y, args.sigma, args.alpha, args.nboot, trial.child(1))
            else:
                pool = PointCloud(np.vstack([X.points, Y.points]))
                k = args.k_neighbors if args.k_neighbors is not None else default_k_neighbors(pool.n)
                refset = build_reference_set(
                    pool,
                    RefSamplingConfig(n_r=args.nr, min_neighbors=args.min_neighbors),
                    LocalPcaConfig(k_neighbors=k, scale_sigma_tilde=args.sigma_tilde),
                    trial.child(2),
                )
                A = build_affinity_matrix(refset, X, Y, threads=args.threads)
                kind = _statistic_kind_for(args, A)
                res = test_from_affinity(A, kind, args.alpha, args.nboot, trial.child(1), weights=refset.weights)
            rejects += bool(res.reject)
        rows.append([delta, rejects / args.trials, args.trials])
    save_matrix_csv(np.asarray(rows), args.out)
    return 0


def _theory_kind(args, refset):
    if args.kind == "gauss":
        return GaussianKernelSpec(bandwidth=args.sigma if args.sigma is not None else args.eps_x)
    if args.kind == "l2":
        return L2Statistic()
    rank = args.rank if args.rank is not None else 20
    if args.filter and args.filter.startswith("diffusion"):
        raise ValueError("diffusion filters are data-dependent; use bandpass:a,b or file:path here")
    filt = bandpass_filter(10, min(20, rank)) if args.filter is None else _resolve_filter(args.filter, rank, refset.n_r, None)
    return SpecStatistic(filter=filt, r_f=rank)


def _cmd_simulate(args) -> int:
    refset = (
        load_reference_set(args.refs, args.covs)
        if args.refs
        else curve_reference_set(args.curve_refs, normal_sigma=args.eps_x)
    )
    p = curve_sampler(0.0, args.eps_x)
    q = curve_sampler(args.delta, args.eps_x)
    rng = derive_stream(args.seed, 0)
    n_total = args.n1 + args.n2
    kind = _theory_kind(args, refset)
    spectrum = estimate_centered_spectrum(
        kind, refset, p, q, args.m_points, args.n1 / n_total, args.K, rng.child(0)
    )
    null_draws = limit_distribution(spectrum, CriticalRegime(0.0), args.draws, rng.child(1))
    save_matrix_csv(null_draws[:, None], args.out_limit)
    if args.out_limit_alt:
        a = args.tau * np.sqrt(n_total)
        alt = limit_distribution(spectrum, CriticalRegime(float(a)), args.draws, rng.child(2))
        save_matrix_csv(alt[:, None], args.out_limit_alt)
    if args.out_empirical:
        mult = spectrum.statistic_multiplier(n_total)
        gen_stream = rng.child(3)
        vals = np.empty(args.trials)
        for t in range(args.trials):
            g = gen_stream.child(t).generator()
            X = PointCloud(p(args.n1, g))
            Y = PointCloud(p(args.n2, g))
            vals[t] = n_total * mult * statistic_for_kind(kind, X, Y, refset)
        save_matrix_csv(vals[:, None], args.out_empirical)
    return 0


def _cmd_compare(args) -> int:
    refset = (
        load_reference_set(args.refs, args.covs)
        if args.refs
        else curve_reference_set(args.curve_refs, normal_sigma=args.eps_x)
    )
    p = curve_sampler(0.0, args.eps_x)
    q = curve_sampler(args.delta, args.eps_x)
    rng = derive_stream(args.seed, 0)
    kinds = []
    for name in args.kinds.split(","):
        name = name.strip()
        if name == "gauss":
            kinds.append(GaussianKernelSpec(bandwidth=args.sigma if args.sigma is not None else args.eps_x))
        elif name == "l2":
            kinds.append(L2Statistic())
        elif name == "spec":
            kinds.append(SpecStatistic(filter=bandpass_filter(10, 20), r_f=20))
        else:
            raise ValueError(f"unknown kind {name!r} (choose gauss, l2, spec)")
    reports = kernel_comparison(
        kinds, refset, p, q, args.n, args.tau, args.mc, rng,
        m_points=args.m_points, K=args.K, n_limit_draws=args.draws,
    )
    doc = {
        "n": args.n,
        "tau": args.tau,
        "delta": args.delta,
        "mc_runs": args.mc,
        "reports": [vars(r) for r in reports],
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _cmd_bound(args) -> int:
    refset = (
        load_reference_set(args.refs, args.covs)
        if args.refs
        else curve_reference_set(args.curve_refs, normal_sigma=args.eps_x)
    )
    p = curve_sampler(0.0, args.eps_x)
    q = curve_sampler(args.delta, args.eps_x)
    rng = derive_stream(args.seed, 0)
    kind = _theory_kind(args, refset)
    spectrum = estimate_centered_spectrum(
        kind, refset, p, q, args.m_points, 0.5, args.K, rng.child(0), normalize="native"
    )
    report = power_lower_bound(spectrum, args.tau, args.n, args.alpha)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(vars(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="akmmd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic datasets")
    gsub = p.add_subparsers(dest="shape", required=True)
    for shape in ("curve", "mixture"):
        g = gsub.add_parser(shape)
        g.add_argument("--n1", type=int, required=True)
        g.add_argument("--n2", type=int, required=True)
        g.add_argument("--delta", type=float, required=True)
        g.add_argument("--eps-x", type=float, default=0.02)
        g.add_argument("--seed", type=int, required=True)
        g.add_argument("--out-x", required=True)
        g.add_argument("--out-y", required=True)
        g.set_defaults(handler=_cmd_gen, shape=shape)
    g = gsub.add_parser("tensor")
    g.add_argument("--side", type=int, required=True)
    g.add_argument("--noise-sigma", type=float, default=0.05)
    g.add_argument("--anomaly", default=None, help="row0,row1,col0,col1 (half-open)")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(handler=_cmd_gen, shape="tensor")

    p = sub.add_parser("refs", help="build a reference set from a data pool")
    p.add_argument("--pool", required=True)
    p.add_argument("--nr", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-refs", required=True)
    p.add_argument("--out-covs", required=True)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--kde-bandwidth", type=float, default=None)
    p.add_argument("--jitter", type=float, default=1.0)
    p.add_argument("--min-neighbors", type=int, default=5)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--k-neighbors", type=int, default=None)
    p.add_argument("--sigma-tilde", type=float, default=1.0)
    p.add_argument("--sigma-grid", default=None, help="comma list of sigma_tilde values to sweep")
    p.add_argument("--reg-floor", type=float, default=None)
    _add_common_io(p)
    p.set_defaults(handler=_cmd_refs)

    p = sub.add_parser("test", help="two-sample test")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--covs", required=True)
    _add_stat_flags(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--nboot", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_common_io(p)
    p.set_defaults(handler=_cmd_test)

    p = sub.add_parser("witness", help="evaluate the witness function on query points")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--covs", required=True)
    p.add_argument("--query", required=True)
    _add_stat_flags(p)
    p.add_argument("--out", required=True)
    _add_common_io(p)
    p.set_defaults(handler=_cmd_witness)

    p = sub.add_parser("pairwise", help="k-sample distance matrix, graph and embedding")
    p.add_argument("--samples", nargs="+", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--covs", required=True)
    _add_stat_flags(p)
    p.add_argument("--scale", type=float, default=None)
    p.add_argument("--embed-dim", type=int, default=1)
    p.add_argument("--out-d2", required=True)
    p.add_argument("--out-graph", default=None)
    p.add_argument("--out-embed", default=None)
    _add_common_io(p)
    p.set_defaults(handler=_cmd_pairwise)

    p = sub.add_parser("power", help="rejection-rate sweep over departure sizes")
    p.add_argument("--example", choices=["curve", "mixture"], default="curve")
    p.add_argument("--deltas", required=True, help="comma list")
    p.add_argument("--n1", type=int, required=True)
    p.add_argument("--n2", type=int, required=True)
    p.add_argument("--eps-x", type=float, default=0.02)
    _add_stat_flags(p, with_gauss=True)
    p.add_argument("--nr", type=int, default=50)
    p.add_argument("--k-neighbors", type=int, default=None)
    p.add_argument("--min-neighbors", type=int, default=5)
    p.add_argument("--sigma-tilde", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--nboot", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_common_io(p)
    p.set_defaults(handler=_cmd_power)

    def add_theory_common(p):
        p.add_argument("--kind", choices=["gauss", "l2", "spec"], required=True)
        p.add_argument("--sigma", type=float, default=None, help="Gaussian bandwidth (kind=gauss)")
        p.add_argument("--rank", type=int, default=None)
        p.add_argument("--filter", default=None)
        p.add_argument("--eps-x", type=float, default=0.02)
        p.add_argument("--delta", type=float, default=0.02)
        p.add_argument("--m-points", type=int, default=10000)
        p.add_argument("--K", type=int, default=500)
        p.add_argument("--refs", default=None)
        p.add_argument("--covs", default=None)
        p.add_argument("--curve-refs", type=int, default=256)
        p.add_argument("--seed", type=int, required=True)
        _add_common_io(p)

    p = sub.add_parser("simulate", help="limiting-distribution draws and empirical null overlay")
    add_theory_common(p)
    p.add_argument("--n1", type=int, default=200)
    p.add_argument("--n2", type=int, default=200)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--draws", type=int, default=20000)
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--out-limit", required=True)
    p.add_argument("--out-limit-alt", default=None)
    p.add_argument("--out-empirical", default=None)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("compare", help="mean/std comparison of kernels under both hypotheses")
    p.add_argument("--kinds", default="gauss,l2,spec")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--eps-x", type=float, default=0.02)
    p.add_argument("--delta", type=float, default=0.02)
    p.add_argument("--n", type=int, required=True, help="pooled size, split evenly")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--mc", type=int, default=2000)
    p.add_argument("--draws", type=int, default=20000)
    p.add_argument("--m-points", type=int, default=4000)
    p.add_argument("--K", type=int, default=500)
    p.add_argument("--refs", default=None)
    p.add_argument("--covs", default=None)
    p.add_argument("--curve-refs", type=int, default=256)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_common_io(p)
    p.set_defaults(handler=_cmd_compare)

    p = sub.add_parser("bound", help="non-asymptotic power lower bound report")
    add_theory_common(p)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_bound)

    return parser


def run(argv=None) -> int:
    """Parse argv and execute; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if hasattr(args, "stat"):
        try:
            _check_spec_flags(parser, args)
        except SystemExit as exc:
            return int(exc.code) if exc.code is not None else 0
    if getattr(args, "threads", None) is not None:
        os.environ["AKMMD_THREADS"] = str(args.threads)
    try:
        return int(args.handler(args))
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
