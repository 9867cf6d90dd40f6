"""Command-line interface.

Subcommands: train, keygen, embed, extract, analyze, bench. Exit status is
0 on success, 1 on an operational error and 2 on a usage error.
"""

import argparse
import logging
import math
from pathlib import Path
import sys
import zlib

from . import __version__
from .evaluation import (
    CAPACITY_COLUMNS,
    RMSE_COLUMNS,
    benchmark,
    export_uncertainty_image,
    predicted_image,
    write_csv,
)
from .exceptions import StegoError
from .grid import DEFAULT_MARGIN, DEFAULT_RADIUS, POLARITIES, read_pgm, write_pgm
from .metrics import psnr, ssim
from .patches import extract_patches, load_pgm_dir
from .pipeline import StegoKey, analyze, embed, extract, read_key, write_key
from .predictor import TrainConfig, init_model, model_hash, read_model, train, write_model
from .validation import SCORES, bits_to_bytes, bytes_to_bits

log = logging.getLogger("bayestego")

DEFAULT_RATES = (0.0, 0.025, 0.05, 0.075, 0.1, 0.15, 0.2, 0.25, 0.3)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser():
    parser = _Parser(prog="bayestego", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bayestego {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train the pixel predictor on a directory of PGM images")
    p.add_argument("--data", required=True, help="directory of .pgm training images")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--weight-decay", type=float, default=1e-5)
    p.add_argument("--warmup-epochs", type=int, default=None,
                   help="epochs fitting the mean path only (default: two thirds of --epochs)")
    p.add_argument("--joint-lr", type=float, default=1e-4,
                   help="learning rate once the variance head is trained")
    p.add_argument("--patches", type=int, default=50_000,
                   help="number of training patches sampled from the images (0 = all)")
    p.add_argument("--hidden", type=_int_list, default=(64, 64), help="hidden sizes, e.g. 64,64")
    p.add_argument("--radius", type=int, default=DEFAULT_RADIUS)
    p.add_argument("--margin", type=int, default=DEFAULT_MARGIN)
    p.add_argument("--polarity", choices=POLARITIES, default="even")
    p.add_argument("--key-out", help="also write a stego key for the trained model")
    p.add_argument("--samples", type=int, default=64, help="T recorded in --key-out")

    p = sub.add_parser("keygen", help="write a stego key for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=64, help="Monte Carlo passes T")
    p.add_argument("--score", choices=SCORES, default="hybrid")
    p.add_argument("--polarity", choices=POLARITIES, default="even")
    p.add_argument("--radius", type=int, default=DEFAULT_RADIUS)
    p.add_argument("--margin", type=int, default=DEFAULT_MARGIN)

    p = sub.add_parser("embed", help="hide a message file in a cover image")
    p.add_argument("--cover", required=True)
    p.add_argument("--message", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract", help="recover the message and the exact cover")
    p.add_argument("--stego", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-cover", required=True)
    p.add_argument("--out-message", required=True)

    p = sub.add_parser("analyze", help="write uncertainty maps and prediction quality")
    p.add_argument("--image", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("bench", help="RMSE and capacity-distortion curves for a directory")
    p.add_argument("--images", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--rates", type=_float_list, default=DEFAULT_RATES)
    p.add_argument("--seeds", type=int, default=20, help="random seeds per ordering")
    return parser


def _load(args):
    key = read_key(args.key)
    model = read_model(args.model)
    return key, model


def cmd_train(args):
    try:
        images = load_pgm_dir(args.data)
    except FileNotFoundError:
        raise UsageError(f"training directory {args.data!r} does not exist") from None
    if not images:
        raise UsageError("no training data")
    n_patches = args.patches or None
    X, y = extract_patches([g for _, g in images], n_patches, args.seed,
                           args.polarity, args.radius, args.margin)
    log.info("training on %d patches from %d images", len(y), len(images))
    config = TrainConfig(lam=args.lam, learning_rate=args.lr, batch_size=args.batch_size,
                         epochs=args.epochs, weight_decay=args.weight_decay, seed=args.seed,
                         warmup_epochs=args.warmup_epochs, joint_learning_rate=args.joint_lr)
    model = init_model((X.shape[1],) + tuple(args.hidden), args.dropout, args.seed)
    model, trace = train((X, y), config, model, verbose=args.verbose)
    write_model(args.out, model)
    print(f"epochs={len(trace)} final_loss={trace[-1]:.6g} model_hash={model_hash(model)}")
    if args.key_out:
        write_key(args.key_out, StegoKey(model_hash(model), seed=args.seed, T=args.samples,
                                         polarity=args.polarity, window_radius=args.radius,
                                         border_margin=args.margin))
    return 0


def cmd_keygen(args):
    model = read_model(args.model)
    key = StegoKey(model_hash(model), seed=args.seed, T=args.samples, polarity=args.polarity,
                   window_radius=args.radius, border_margin=args.margin, score=args.score)
    write_key(args.out, key)
    return 0


def message_to_bits(data):
    """Message bytes followed by their CRC-32, most significant bit first."""
    crc = zlib.crc32(data).to_bytes(4, "big")
    return bytes_to_bits(data + crc)


def bits_to_message(bits):
    if len(bits) < 32 or len(bits) % 8:
        raise StegoError(f"extracted payload of {len(bits)} bits is not a checksummed byte message")
    raw = bits_to_bytes(bits)
    data, crc = raw[:-4], raw[-4:]
    if zlib.crc32(data).to_bytes(4, "big") != crc:
        raise StegoError("message checksum mismatch (wrong key or model, or corrupted stego)")
    return data


def cmd_embed(args):
    key, model = _load(args)
    cover = read_pgm(args.cover)
    data = Path(args.message).read_bytes()
    stego, report = embed(cover, message_to_bits(data), key, model)
    write_pgm(args.out, stego)
    print(f"format={report.format} message_bytes={len(data)} modulated={report.n_modulated} "
          f"bpp={report.bpp:.6g} psnr={report.psnr:.6g}")
    return 0


def cmd_extract(args):
    key, model = _load(args)
    stego = read_pgm(args.stego)
    cover, bits = extract(stego, key, model)
    data = bits_to_message(bits)
    write_pgm(args.out_cover, cover)
    Path(args.out_message).write_bytes(data)
    print(f"message_bytes={len(data)}")
    return 0


def cmd_analyze(args):
    key, model = _load(args)
    image = read_pgm(args.image)
    analysis = analyze(image, key, model)
    for name in SCORES:
        img = export_uncertainty_image(analysis.uncertainty.scores(name), analysis.partition)
        write_pgm(f"{args.out_prefix}_{name}.pgm", img)
    pred = predicted_image(analysis, image)
    write_pgm(f"{args.out_prefix}_prediction.pgm", pred)
    print(f"psnr={psnr(image, pred):.6g} ssim={ssim(image, pred):.6g}")
    return 0


def cmd_bench(args):
    key, model = _load(args)
    images = load_pgm_dir(args.images)
    if not images:
        raise UsageError(f"no .pgm images in {args.images!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, grid in images:
        stem = Path(name).stem
        rmse_rows, cap_rows = benchmark(grid, key, model, args.rates, range(args.seeds))
        write_csv(out / f"{stem}_rmse.csv", RMSE_COLUMNS, rmse_rows)
        write_csv(out / f"{stem}_capacity.csv", CAPACITY_COLUMNS, cap_rows)
        unreachable = sorted({r[0] for r in cap_rows if math.isnan(r[1])})
        if unreachable:
            log.warning("%s: rates %s exceed capacity for some orderings", name, unreachable)
        half = [r for r in rmse_rows if r[0] == 50.0]
        print(stem + " " + " ".join(f"rmse50_{o}={v:.6g}" for _, v, o in half))
    return 0


COMMANDS = {
    "train": cmd_train,
    "keygen": cmd_keygen,
    "embed": cmd_embed,
    "extract": cmd_extract,
    "analyze": cmd_analyze,
    "bench": cmd_bench,
}


def dispatch(argv=None):
    """Run one subcommand and return its exit status."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"bayestego {args.command}: {exc}", file=sys.stderr)
        return 2
    except (StegoError, OSError) as exc:
        print(f"bayestego {args.command}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
