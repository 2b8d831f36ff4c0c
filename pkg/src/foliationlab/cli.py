"""Command-line front end.

One command per process; every command writes a run manifest next to its
outputs.  Configuration comes from an optional key=value file plus flag
overrides (flags win); rational quantities are given as p/q strings so
interval endpoints stay exact.

Exit codes: 0 pass, 1 certificate fail, 2 parameter error, 3 precision
error.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .core import (Foliation, HolderClass, builtin, parse_manifest)
from .errors import (DomainError, FoliationLabError, ParameterError,
                     PrecisionError)
from .metric import DEFAULT_SCHEME, SampleScheme, d_alpha
from .numerics import DEFAULT_SETTINGS
from .perturbation import IntervalQ
from .report import RunManifest, render_rows

EXIT_PASS = 0
EXIT_CERT_FAIL = 1
EXIT_PARAMETER = 2
EXIT_PRECISION = 3


def _frac(text: str) -> float:
    return float(Fraction(text))


def load_foliation(spec: str) -> Foliation:
    """A builtin spec ('identity', 'shear:kappa=1/25') or a manifest path."""
    path = Path(spec)
    if path.exists():
        return parse_manifest(path.read_text())
    name, _, rest = spec.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            if not val:
                raise ParameterError(f"malformed foliation parameter {item!r}")
            params[key.strip()] = _frac(val)
    return builtin(name.strip(), **params)


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _merged(args: argparse.Namespace, config: dict, required: tuple) -> dict:
    """Flags override config; missing required keys are a usage error."""
    merged = dict(config)
    for key, val in vars(args).items():
        if val is not None and key not in ("func", "config"):
            merged[key] = val
    missing = [k for k in required if merged.get(k) in (None, "")]
    if missing:
        raise ParameterError(
            "missing required configuration keys: " + ", ".join(missing))
    return merged


def _holder(merged: dict) -> HolderClass:
    return HolderClass(_frac(str(merged["C"])), _frac(str(merged["beta"])),
                       _frac(str(merged["alpha"])))


def _outdir(merged: dict) -> Path:
    out = Path(merged.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scheme(merged: dict) -> SampleScheme:
    seed = int(merged.get("seed", DEFAULT_SCHEME.seed))
    from .constructor import CERT_SCHEME
    return SampleScheme(x_res=CERT_SCHEME.x_res, y_res=CERT_SCHEME.y_res,
                        anchors=CERT_SCHEME.anchors, k_max=CERT_SCHEME.k_max,
                        n_random=CERT_SCHEME.n_random, seed=seed,
                        inverse_grid=CERT_SCHEME.inverse_grid)


def cmd_perturb(args) -> int:
    from .constructor import construct_in_B
    merged = _merged(args, _read_config(args.config),
                     ("foliation", "C", "beta", "alpha", "xi", "m",
                      "interval"))
    f = load_foliation(str(merged["foliation"]))
    hc = _holder(merged)
    interval = IntervalQ.parse(str(merged["interval"]))
    xi = _frac(str(merged["xi"]))
    m = int(merged["m"])
    out = _outdir(merged)
    scheme = _scheme(merged)
    result, cert = construct_in_B(f, hc, xi, m, interval, scheme=scheme)
    manifest = RunManifest("perturb", {
        "foliation": merged["foliation"], "C": hc.C, "beta": hc.beta,
        "alpha": hc.alpha, "xi": xi, "m": m, "interval": str(interval),
        "seed": scheme.seed}, settings_digest=scheme.digest())
    fol_path = out / "foliation.manifest"
    fol_path.write_text(result.manifest())
    cert_path = out / "certificate.txt"
    cert_path.write_text(cert.to_text())
    table_path = out / "strip_ratios.tsv"
    table_path.write_text("index\tratio\n" + "".join(
        f"{i}\t{r:.12g}\n" for i, r in cert.strip_rows))
    for p in (fol_path, cert_path, table_path):
        manifest.add_output(p)
    manifest.write(out)
    if not cert.passed:
        print("certificate FAILED rows: " + ", ".join(cert.failing_rows()))
        return EXIT_CERT_FAIL
    print(f"pass: level n={cert.params['n']}, outputs in {out}")
    return EXIT_PASS


def cmd_disintegrate(args) -> int:
    from . import disintegration as dz
    merged = _merged(args, _read_config(args.config),
                     ("foliation", "interval"))
    f = load_foliation(str(merged["foliation"]))
    interval = IntervalQ.parse(str(merged["interval"]))
    n_max = int(merged.get("n_max", 12))
    depth = int(merged.get("depth", 8))
    out = _outdir(merged)
    leaves: list[float] = []
    if merged.get("leaves"):
        leaves.extend(float(Fraction(t)) for t in
                      str(merged["leaves"]).split(","))
    k_rand = int(merged.get("leaves_random", 0))
    if k_rand:
        rng = np.random.default_rng(int(merged.get("seed", 2026)))
        leaves.extend(float(v) for v in rng.uniform(0.02, 0.98, k_rand))
    if not leaves:
        raise ParameterError("no leaves given: use --leaves or "
                             "--leaves-random")
    manifest = RunManifest("disintegrate", {
        "foliation": merged["foliation"], "interval": str(interval),
        "n_max": n_max, "depth": depth,
        "leaves": ",".join(f"{v:.12g}" for v in leaves)})
    atom_lines = []
    for idx, leaf in enumerate(leaves):
        series = dz.ratio_sequence(f, leaf, interval, n_max)
        path = out / f"ratio_series_{idx}.tsv"
        path.write_text(series.to_text() + "\n")
        manifest.add_output(path)
        report = dz.atom_locate(f, leaf, depth)
        atom_lines.append(
            f"leaf {leaf:.12g}: level={report.level} "
            f"x_P={report.x_point:.10g} "
            f"atom=({report.x_point:.10g},{report.atom_value:.10g}) "
            f"final_mass={report.profile[-1][1]:.6g} "
            f"flat={report.flat_like}")
        atom_lines.append("  width\tmass")
        atom_lines.extend(f"  {w:.10g}\t{mass:.10g}"
                          for w, mass in report.profile)
    atom_path = out / "atom_report.txt"
    atom_path.write_text("\n".join(atom_lines) + "\n")
    manifest.add_output(atom_path)
    manifest.write(out)
    print(f"wrote ratio series and atom reports for {len(leaves)} leaves "
          f"to {out}")
    return EXIT_PASS


def _parse_schedule(text: str):
    from .disintegration import ResidualStep
    steps = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        m_txt, _, ival = part.partition("@")
        if not ival:
            raise ParameterError(
                "schedule steps look like 'm@b1:b2', separated by ';'")
        steps.append(ResidualStep(int(m_txt), IntervalQ.parse(ival)))
    if not steps:
        raise ParameterError("empty schedule")
    return steps


def cmd_residual(args) -> int:
    from . import disintegration as dz
    merged = _merged(args, _read_config(args.config),
                     ("foliation", "C", "beta", "alpha", "xi", "schedule"))
    f = load_foliation(str(merged["foliation"]))
    hc = _holder(merged)
    xi0 = _frac(str(merged["xi"]))
    steps = _parse_schedule(str(merged["schedule"]))
    out = _outdir(merged)
    scheme = _scheme(merged)
    run = dz.residual_iterate(f, steps, xi0, hc, scheme=scheme)
    manifest = RunManifest("residual", {
        "foliation": merged["foliation"], "xi0": xi0,
        "schedule": merged["schedule"], "C": hc.C, "beta": hc.beta,
        "alpha": hc.alpha}, settings_digest=scheme.digest())
    for k, (fol, cert) in enumerate(zip(run.iterates[1:], run.certificates)):
        fp = out / f"iterate_{k}.manifest"
        fp.write_text(fol.manifest())
        cp = out / f"certificate_{k}.txt"
        cp.write_text(cert.to_text())
        manifest.add_output(fp)
        manifest.add_output(cp)
    cauchy_path = out / "cauchy.tsv"
    cauchy_path.write_text(run.cauchy.table() + "\n")
    manifest.add_output(cauchy_path)
    ret_path = out / "retention.tsv"
    ret_path.write_text("step\tn\tm\tinterval\tmargin\tmethod\tok\n" + "".join(
        f"{r.step}\t{r.n}\t{r.m}\t{r.interval}\t{r.margin:.6g}\t"
        f"{r.method}\t{r.passed}\n" for r in run.retention))
    manifest.add_output(ret_path)
    manifest.write(out)
    ok = (run.cauchy.passed and all(c.passed for c in run.certificates)
          and all(r.passed for r in run.retention))
    print(f"residual run: {len(run.certificates)} steps, cauchy "
          f"{'pass' if run.cauchy.passed else 'FAIL'}, outputs in {out}")
    return EXIT_PASS if ok else EXIT_CERT_FAIL


def cmd_distance(args) -> int:
    merged = _merged(args, _read_config(args.config),
                     ("foliation_a", "foliation_b", "C", "beta", "alpha"))
    fa = load_foliation(str(merged["foliation_a"]))
    fb = load_foliation(str(merged["foliation_b"]))
    hc = _holder(merged)
    est = d_alpha(fa, fb, hc, _scheme(merged))
    print(f"d_alpha = {est.value:.12g}")
    for key, val in est.parts.items():
        print(f"  {key} = {val:.12g}")
    if merged.get("out"):
        out = _outdir(merged)
        (out / "distance.txt").write_text(
            f"d_alpha = {est.value:.12g}\n" + "".join(
                f"{k} = {v:.12g}\n" for k, v in est.parts.items()))
        RunManifest("distance", {"a": merged["foliation_a"],
                                 "b": merged["foliation_b"]}).write(out)
    return EXIT_PASS


def cmd_ac_report(args) -> int:
    from .disintegration import ac_report
    merged = _merged(args, _read_config(args.config), ("foliation",))
    f = load_foliation(str(merged["foliation"]))
    k = int(merged.get("scale_k", 10))
    x_res = int(merged.get("x_res", 33))
    rep = ac_report(f, np.linspace(0.0, 1.0, x_res), 2.0 ** -k)
    out = _outdir(merged)
    path = out / "ac_report.tsv"
    lines = ["x\tmin\tmax\tratio"]
    lines.extend(f"{x:.10g}\t{lo:.10g}\t{hi:.10g}\t{ratio:.10g}"
                 for x, lo, hi, ratio in rep.to_rows())
    lines.append(f"# global\t{rep.global_min:.10g}\t{rep.global_max:.10g}\t"
                 f"{rep.global_ratio:.10g}")
    path.write_text("\n".join(lines) + "\n")
    man = RunManifest("ac-report", {"foliation": merged["foliation"],
                                    "scale_k": k, "x_res": x_res})
    man.add_output(path)
    man.write(out)
    print(f"global density ratio at scale 2^-{k}: {rep.global_ratio:.6g}")
    return EXIT_PASS


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "foliationlab"
    import matplotlib.pyplot as plt
    from .core import GridSampledFoliation

    merged = _merged(args, _read_config(args.config), ("foliation", "what"))
    f = load_foliation(str(merged["foliation"]))
    what = str(merged["what"])
    out = _outdir(merged)
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    if what == "leaves":
        # plotting may memoize on a grid; certificates never do
        proxy = GridSampledFoliation.sample(f, 257, 257)
        xs = np.linspace(0.0, 1.0, 257)
        for y in np.linspace(0.0, 1.0, 33):
            ax.plot(xs, proxy.value(xs, np.full(xs.shape, y)),
                    lw=0.7, color="tab:blue")
        ax.set_xlabel("x")
        ax.set_ylabel("f(x, y)")
        ax.set_title("leaf family")
    elif what == "ratios":
        from .disintegration import ratio_sequence
        interval = IntervalQ.parse(str(merged["interval"]))
        leaf = float(Fraction(str(merged.get("leaf", "1/3"))))
        n_max = int(merged.get("n_max", 12))
        series = ratio_sequence(f, leaf, interval, n_max)
        ns = [n for n, _ in series.entries]
        rs = [r for _, r in series.entries]
        ax.plot(ns, rs, marker="o")
        ax.set_xlabel("level n")
        ax.set_ylabel("strip ratio")
        ax.set_ylim(-0.05, 1.05)
        ax.set_title(f"ratio sequence, leaf y={leaf:g}")
    elif what == "profile":
        from .disintegration import atom_locate
        leaf = float(Fraction(str(merged.get("leaf", "1/3"))))
        depth = int(merged.get("depth", 8))
        rep = atom_locate(f, leaf, depth)
        widths = [w for w, _ in rep.profile]
        masses = [mass for _, mass in rep.profile]
        ax.loglog(widths, masses, marker="o", label="kept window mass")
        ax.loglog(widths, widths, ls="--", label="flat reference")
        ax.set_xlabel("window width")
        ax.set_ylabel("conditional mass")
        ax.legend()
        ax.set_title(f"concentration profile, leaf y={leaf:g}")
    else:
        raise ParameterError(f"unknown plot kind {what!r}")
    path = out / f"plot_{what}.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    man = RunManifest("plot", {"foliation": merged["foliation"],
                               "what": what})
    man.add_output(path)
    man.write(out)
    print(f"wrote {path}")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foliationlab",
        description="certified perturbations and disintegration "
                    "diagnostics for foliations of the unit square")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("perturb", help="run the density constructor")
    common(p)
    p.add_argument("--foliation")
    p.add_argument("--C")
    p.add_argument("--beta")
    p.add_argument("--alpha")
    p.add_argument("--xi")
    p.add_argument("--m", type=int)
    p.add_argument("--interval", help="rational interval p/q:r/s")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("disintegrate",
                       help="ratio sequences and atom localization")
    common(p)
    p.add_argument("--foliation")
    p.add_argument("--interval")
    p.add_argument("--leaves", help="comma-separated leaf parameters")
    p.add_argument("--leaves-random", dest="leaves_random", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--depth", type=int)
    p.set_defaults(func=cmd_disintegrate)

    p = sub.add_parser("residual", help="iterate the constructor")
    common(p)
    p.add_argument("--foliation")
    p.add_argument("--C")
    p.add_argument("--beta")
    p.add_argument("--alpha")
    p.add_argument("--xi")
    p.add_argument("--schedule", help="steps 'm@b1:b2;m@b1:b2;...'")
    p.set_defaults(func=cmd_residual)

    p = sub.add_parser("distance", help="metric between two generators")
    common(p)
    p.add_argument("--foliation-a", dest="foliation_a")
    p.add_argument("--foliation-b", dest="foliation_b")
    p.add_argument("--C")
    p.add_argument("--beta")
    p.add_argument("--alpha")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("ac-report", help="holonomy density diagnostics")
    common(p)
    p.add_argument("--foliation")
    p.add_argument("--scale-k", dest="scale_k", type=int)
    p.add_argument("--x-res", dest="x_res", type=int)
    p.set_defaults(func=cmd_ac_report)

    p = sub.add_parser("plot", help="render leaves, ratios, or profiles")
    common(p)
    p.add_argument("--foliation")
    p.add_argument("--what", choices=("leaves", "ratios", "profile"))
    p.add_argument("--interval")
    p.add_argument("--leaf")
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--depth", type=int)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, DomainError) as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER
    except PrecisionError as exc:
        print(f"precision error: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except FoliationLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER


if __name__ == "__main__":
    sys.exit(main())
