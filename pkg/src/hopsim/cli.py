"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 I/O or file-format error,
4 numerical error. Human-readable text goes to stderr; data goes to files.

Every artifact carries the resolved configuration (minus the output
directory), seed, RNG identity and package version. JSON files embed them
under ``provenance``; CSV files start with one ``# provenance: {...}``
comment line. No timestamps are written, so
identical invocations produce byte-identical files.
"""

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__, designspace, dsp, imaging, nn
from .channel import ChannelSpec
from .errors import ConfigError, FormatError, NumericalError
from .metrics import confusion_matrix
from .rng import RNG_IDENTITY

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

# Channel keys accepted in config files, mapped onto flags.
_CHANNEL_ALIASES = {"snr_db": "snr", "osnr_db": "osnr", "isi_taps": "isi"}


def _log(msg):
    print(msg, file=sys.stderr)


def _floats(text):
    try:
        return tuple(float(t) for t in str(text).replace(" ", "").split(",") if t)
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _bool(text):
    t = str(text).strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {text}")
    return v


# --- provenance and writers -------------------------------------------------

def _resolved(args):
    # The output directory is where files go, not what they contain.
    d = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def _provenance(args):
    return {"config": _resolved(args), "seed": args.seed, "rng": RNG_IDENTITY, "version": __version__}


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, payload, args):
    body = dict(payload)
    body["provenance"] = _provenance(args)
    with open(path, "w") as f:
        f.write(json.dumps(_clean(body), indent=2, sort_keys=True, default=_json_default) + "\n")


def write_csv(path, header, rows, args):
    with open(path, "w", newline="") as f:
        f.write("# provenance: " + json.dumps(_clean(_provenance(args)), sort_keys=True) + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


# --- channel and workload helpers ---------------------------------------------

def channel_from_args(args):
    chosen = [name for name, on in (("noise-free", args.noise_free), ("snr", args.snr is not None),
                                    ("osnr", args.osnr is not None)) if on]
    if len(chosen) > 1:
        raise ConfigError(f"choose one of --noise-free, --snr, --osnr (got {', '.join(chosen)})")
    isi = _floats(args.isi) if args.isi else ()
    if args.osnr is not None:
        return ChannelSpec.optical(args.osnr, seed=args.seed, isi_taps=isi)
    if args.snr is not None:
        make = ChannelSpec.electrical if args.snr_mode == "electrical" else ChannelSpec.weight
        return make(args.snr, seed=args.seed, isi_taps=isi)
    return ChannelSpec(mode="noise-free", seed=args.seed, isi_taps=isi)


def _workload_image(args):
    if args.image:
        return imaging.load_image(args.image)
    return imaging.synthetic_image(args.height, args.width, depth=args.depth, seed=args.image_seed)


# --- commands -----------------------------------------------------------------

def cmd_convolve(args):
    out = _outdir(args.out)
    img = _workload_image(args)
    kern = imaging.kernel(args.kernel)
    res = imaging.convolve_sim(img, kern, channel_from_args(args), args.scheme, args.split_groups, args.bins)
    values = np.rint(res.output).astype(np.int64)
    sidecar = imaging.export_signed_map(values, os.path.join(out, "output.pgm"),
                                        os.path.join(out, "output.json"))
    write_json(os.path.join(out, "output.json"), {"map": sidecar}, args)
    write_json(os.path.join(out, "report.json"), {"report": res.report.to_dict(), "run": res.meta}, args)
    if res.report.histogram is not None:
        h = res.report.histogram
        write_csv(os.path.join(out, "histogram.csv"), ["bin_left", "bin_right", "count"],
                  zip(h.edges[:-1], h.edges[1:], h.counts.tolist()), args)
    r = res.report
    per = "n/a" if r.per is None else f"{r.per:.3g}"
    _log(f"{args.scheme} {kern.name}: n={r.n} per={per} rmse={r.rmse:.3g} -> {out}")
    return 0


def sweep_points(start, stop, step):
    if not step > 0:
        raise ConfigError(f"step must be positive, got {step}")
    if start > stop:
        raise ConfigError(f"empty range: from {start} > to {stop}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def _stderr(metric, report):
    n = max(report.n, 1)
    if metric == "per":
        p = report.per or 0.0
        return math.sqrt(p * (1 - p) / n)
    return report.rmse / math.sqrt(2 * n)


def monotonicity_warnings(points, metric):
    """Points are ``(db, value, stderr)`` in increasing dB; the metric should
    not increase with dB. Returns human-readable warnings, never raises."""
    warnings = []
    for (d0, v0, s0), (d1, v1, s1) in zip(points, points[1:]):
        if v1 > v0:
            bound = 2 * math.hypot(s0, s1)
            kind = "within 2 standard errors" if v1 - v0 <= bound else "exceeds 2 standard errors"
            warnings.append(f"{metric} rises from {v0:.4g} at {d0} dB to {v1:.4g} at {d1} dB ({kind})")
    return warnings


def cmd_sweep(args):
    out = _outdir(args.out)
    points = sweep_points(args.start, args.stop, args.step)
    img = _workload_image(args)
    kern = imaging.kernel(args.kernel)
    schemes = ("hybrid", "analog") if args.scheme == "both" else (args.scheme,)
    if args.metric == "per" and "analog" in schemes:
        if args.scheme == "analog":
            raise ConfigError("PER is defined for the hybrid scheme only")
        schemes = ("hybrid",)
    isi = _floats(args.isi) if args.isi else ()
    rows, series = [], {s: [] for s in schemes}
    for db in points:
        if args.vs == "osnr":
            ch = ChannelSpec.optical(db, seed=args.seed, isi_taps=isi)
        elif args.snr_mode == "electrical":
            ch = ChannelSpec.electrical(db, seed=args.seed, isi_taps=isi)
        else:
            ch = ChannelSpec.weight(db, seed=args.seed, isi_taps=isi)
        for scheme in schemes:
            r = imaging.convolve_sim(img, kern, ch, scheme, args.split_groups, args.bins).report
            value = r.per if args.metric == "per" else r.rmse
            se = _stderr(args.metric, r)
            rows.append((db, scheme, value, r.rmse, "" if r.per is None else r.per, r.sigma, r.n, se))
            series[scheme].append((db, value, se))
            _log(f"{args.vs} {db} dB {scheme}: {args.metric}={value:.4g}")
    write_csv(os.path.join(out, "sweep.csv"),
              ["db", "scheme", "value", "rmse", "per", "sigma", "n", "stderr"], rows, args)
    warnings = [f"{s}: {w}" for s, pts in series.items() for w in monotonicity_warnings(pts, args.metric)]
    for w in warnings:
        _log(f"warning: {w}")
    write_json(os.path.join(out, "sweep.json"), {"monotonicity_warnings": warnings}, args)
    return 0


def cmd_design_space(args):
    out = _outdir(args.out)
    rates = _floats(args.io_rate)
    if not rates:
        raise ConfigError("at least one io rate is required")
    precisions = range(1, args.max_precision + 1)
    meta = designspace.convention_metadata(args.l, args.c, args.include_zero, args.p_data)
    summary = []
    for rate in rates:
        rows = designspace.generate_tables(rate, precisions, args.l, args.c, args.include_zero, args.p_data)
        stem = os.path.join(out, f"design_space_io{rate:g}")
        write_csv(stem + ".csv", designspace.CSV_FIELDS, [[r[k] for k in designspace.CSV_FIELDS] for r in rows],
                  args)
        write_json(stem + ".json", {"conventions": meta, "rows": rows}, args)
        cross = designspace.tops_crossing(rows)
        summary.append({"io_rate_hz": rate, "crossing_precision_bits": cross})
        _log(f"io {rate:g} Hz: TOPS crossing at precision {cross}")
    write_json(os.path.join(out, "crossing.json"), {"conventions": meta, "crossings": summary}, args)
    return 0


def _mnist_data(args):
    if args.images or args.labels:
        if not (args.images and args.labels):
            raise ConfigError("--images and --labels must be given together")
        data = nn.load_mnist(args.images, args.labels)
        source = "idx"
    else:
        data = nn.synthetic_digits(args.synthetic, seed=args.data_seed)
        source = "synthetic"
    if args.limit is not None:
        if args.limit < 1:
            raise ConfigError(f"--limit must be positive, got {args.limit}")
        data = data.subset(args.limit)
    return data, source


def _mnist_weights(args):
    if args.weights:
        return nn.load_weights(args.weights)
    return nn.CnnWeights.random(args.seed)


def cmd_mnist_infer(args):
    out = _outdir(args.out)
    data, source = _mnist_data(args)
    weights = _mnist_weights(args)
    ch = channel_from_args(args)
    modes = ("oracle", "sim") if args.conv_mode == "both" else (args.conv_mode,)
    preds, raws = {}, {}
    for mode in modes:
        p, r = [], []
        for s in range(0, len(data), args.batch):
            _, pred, raw = nn.forward_batch(data.images[s:s + args.batch], weights, mode, ch, start_index=s)
            p.append(pred)
            r.append(raw)
        preds[mode], raws[mode] = np.concatenate(p), np.concatenate(r)
    payload = {"n_images": len(data), "source": source, "channel": ch.describe()}
    for mode in modes:
        cm = confusion_matrix(preds[mode], data.labels, 10)
        payload[f"accuracy_{mode}"] = cm.accuracy
        write_csv(os.path.join(out, f"confusion_{mode}.csv"), ["label"] + [f"pred_{k}" for k in range(10)],
                  [[k] + cm.counts[k].tolist() for k in range(10)], args)
    if len(modes) == 2:
        payload["agreement"] = float(np.mean(preds["oracle"] == preds["sim"]))
        payload["conv_feature_per"] = float(np.mean(raws["oracle"] != raws["sim"]))
    blank = np.full(len(data), "", dtype=object)
    write_csv(os.path.join(out, "predictions.csv"), ["index", "label", "prediction_oracle", "prediction_sim"],
              zip(range(len(data)), data.labels.tolist(), preds.get("oracle", blank).tolist(),
                  preds.get("sim", blank).tolist()), args)
    write_json(os.path.join(out, "mnist_report.json"), payload, args)
    msg = ", ".join(f"{k}={payload[k]:.4f}" for k in sorted(payload) if k.startswith(("acc", "agree", "conv")))
    _log(f"mnist {len(data)} images ({source}): {msg}")
    return 0


def cmd_mnist_train(args):
    out = _outdir(args.out)
    data, source = _mnist_data(args)
    init = nn.CnnWeights.random(args.seed)
    features = nn.oracle_features(data.images, init)
    weights, acc = nn.train_dense(features, data.labels, args.epochs, args.lr, args.seed, args.batch_size, init)
    path = args.weights or os.path.join(out, "weights.bin")
    nn.save_weights(weights, path)
    write_json(os.path.join(out, "train_report.json"),
               {"n_images": len(data), "source": source, "train_accuracy": acc, "weights_path": path}, args)
    _log(f"trained on {len(data)} images ({source}): train accuracy {acc:.4f} -> {path}")
    return 0


def cmd_eq_demo(args):
    out = _outdir(args.out)
    res = dsp.eq_demo(_floats(args.isi), args.snr, args.taps, args.mu, args.train, args.test, args.levels,
                      args.seed, args.lowpass)
    write_csv(os.path.join(out, "mse_curve.csv"), ["symbol", "mse"], dsp.mse_curve_rows(res.state.mse_curve),
              args)
    write_json(os.path.join(out, "eq_report.json"), {
        "pre_mse": res.pre_mse, "post_mse": res.post_mse, "mse_ratio": res.mse_ratio,
        "pre_ser": res.pre_ser, "post_ser": res.post_ser, "n_test_symbols": res.n_test,
        "taps": res.state.taps,
    }, args)
    _log(f"equalizer: mse {res.pre_mse:.3g} -> {res.post_mse:.3g} (x{res.mse_ratio:.3g}), "
         f"ser {res.pre_ser:.3g} -> {res.post_ser:.3g}")
    return 0


# --- parser -------------------------------------------------------------------

def _common(p, seed=True):
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--config", help="key = value file; flags given on the command line win")
    if seed:
        p.add_argument("--seed", type=_seed, default=0, help="64-bit RNG seed (recorded in every report)")


def _noise(p):
    p.add_argument("--snr", type=float, help="SNR in dB")
    p.add_argument("--snr-mode", choices=("electrical", "weight"), default="electrical",
                   help="where --snr noise enters (default: electrical)")
    p.add_argument("--osnr", type=float, help="OSNR in dB (12.5 GHz reference bandwidth)")
    p.add_argument("--noise-free", action="store_true")
    p.add_argument("--isi", help="comma-separated causal ISI taps applied to each detected frame")


def _workload(p):
    p.add_argument("--image", help="P5/P6 Netpbm input; a synthetic image is used when omitted")
    p.add_argument("--kernel", default="prewitt_v", choices=sorted(imaging.KERNELS))
    p.add_argument("--depth", type=int, choices=(8, 16), default=8, help="bit depth of the synthetic image")
    p.add_argument("--height", type=int, default=300)
    p.add_argument("--width", type=int, default=451)
    p.add_argument("--image-seed", type=_seed, default=2024)
    p.add_argument("--split-groups", type=int, choices=(1, 3, 9), default=1)
    p.add_argument("--bins", type=int, default=101)


def _mnist_inputs(p):
    p.add_argument("--images", help="IDX image file (uncompressed)")
    p.add_argument("--labels", help="IDX label file (uncompressed)")
    p.add_argument("--synthetic", type=int, default=1000, help="synthetic digit count when no IDX files")
    p.add_argument("--data-seed", type=_seed, default=0)
    p.add_argument("--limit", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="hopsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hopsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convolve", help="convolve an image on the simulated core")
    _common(p)
    _workload(p)
    _noise(p)
    p.add_argument("--scheme", choices=("hybrid", "analog"), default="hybrid")
    p.set_defaults(func=cmd_convolve)

    p = sub.add_parser("sweep", help="error metric against SNR or OSNR")
    _common(p)
    _workload(p)
    p.add_argument("--metric", choices=("per", "rmse"), default="rmse")
    p.add_argument("--vs", choices=("snr", "osnr"), default="snr")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--scheme", choices=("hybrid", "analog", "both"), default="both")
    p.add_argument("--snr-mode", choices=("electrical", "weight"), default="weight")
    p.add_argument("--isi")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("design-space", help="ADC resolution, speed and TOPS tables")
    _common(p, seed=False)
    p.add_argument("--io-rate", default="40e9", help="comma-separated I/O rates in Hz")
    p.add_argument("--l", type=int, default=designspace.DEFAULT_LANES)
    p.add_argument("--c", type=float, default=designspace.DEFAULT_C)
    p.add_argument("--include-zero", type=_bool, default=True)
    p.add_argument("--p-data", type=int, default=designspace.DEFAULT_P_DATA)
    p.add_argument("--max-precision", type=int, default=8)
    p.set_defaults(func=cmd_design_space, seed=None)

    p = sub.add_parser("mnist", help="CNN inference or dense-layer training")
    msub = p.add_subparsers(dest="action", required=True)
    q = msub.add_parser("infer")
    _common(q)
    _mnist_inputs(q)
    _noise(q)
    q.set_defaults(snr_mode="weight")
    q.add_argument("--weights", help="HOPCNN01 weight file; random dense weights when omitted")
    q.add_argument("--conv-mode", choices=("oracle", "sim", "both"), default="both")
    q.add_argument("--batch", type=int, default=500)
    q.set_defaults(func=cmd_mnist_infer)
    q = msub.add_parser("train")
    _common(q)
    _mnist_inputs(q)
    q.add_argument("--weights", help="output weight file (default OUT/weights.bin)")
    q.add_argument("--epochs", type=int, default=10)
    q.add_argument("--lr", type=float, default=0.05)
    q.add_argument("--batch-size", type=int, default=32)
    q.set_defaults(func=cmd_mnist_train)

    p = sub.add_parser("eq-demo", help="LMS equalizer on an oversampled PAM link")
    _common(p)
    p.add_argument("--isi", default="1,0.4,0.2")
    p.add_argument("--snr", type=float, default=30.0)
    p.add_argument("--taps", type=int, default=dsp.DEFAULT_TAPS)
    p.add_argument("--mu", type=float, default=dsp.DEFAULT_MU)
    p.add_argument("--train", type=int, default=dsp.DEFAULT_TRAINING_SYMBOLS)
    p.add_argument("--test", type=int, default=20_000)
    p.add_argument("--levels", type=int, default=7)
    p.add_argument("--lowpass", type=float, help="low-pass cutoff as a fraction of the symbol rate")
    p.set_defaults(func=cmd_eq_demo)
    return parser


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    entries = []
    with open(path) as f:
        for n, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            entries.append((key.replace("-", "_"), value))
    return entries


def _config_argv(entries, subparser):
    """Translate config entries into flags placed ahead of the real ones."""
    actions = {a.dest: a for a in subparser._actions if a.option_strings}
    argv = []
    for key, value in entries:
        if key == "mode":
            if value == "noise-free":
                argv.append("--noise-free")
            elif value in ("electrical-snr", "weight-snr"):
                argv += ["--snr-mode", value.split("-")[0]]
            elif value != "optical-osnr":
                raise ConfigError(f"unknown channel mode {value!r} in config")
            continue
        key = _CHANNEL_ALIASES.get(key, key)
        if key not in actions:
            raise ConfigError(f"unknown config key {key!r}")
        act = actions[key]
        flag = act.option_strings[-1]
        if act.nargs == 0:
            if _bool(value):
                argv.append(flag)
        else:
            argv += [flag, value]
    return argv


def _subparser_for(parser, argv):
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    node, depth = action.choices[argv[0]], 1
    nested = [a for a in node._actions if isinstance(a, argparse._SubParsersAction)]
    if nested and len(argv) > 1 and argv[1] in nested[0].choices:
        node, depth = nested[0].choices[argv[1]], 2
    return node, depth


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        node, depth = _subparser_for(parser, argv)
        extra = _config_argv(read_config(args.config), node)
        args = parser.parse_args(argv[:depth] + extra + argv[depth:])
    return args


def main(argv=None):
    try:
        args = parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_IO
    except (NumericalError, FloatingPointError) as exc:
        _log(f"error: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
