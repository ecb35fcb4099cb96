"""Command line: export a saved torch module to an interchange directory.

    modelexport export --weights model.pt --classes names.txt \
                       --out exported/ [--probe image.png]

``--weights`` is a pickled module (``torch.save(model, path)``); a bare
state dict has no layer structure to walk and is rejected. ``--classes``
lists one class name per line. The probe image, when given, is resized to
the model input and recorded with the expected probability vector.
"""

from __future__ import annotations

import argparse
import sys

import torch

from .export import ExportError, export_model
from .probe import load_rgb, record_probe


def read_class_names(path):
    with open(path, encoding="utf-8") as fh:
        names = [ln.strip() for ln in fh if ln.strip()]
    if not names:
        raise ValueError(f"class file {path} is empty")
    return names


def cmd_export(args):
    module = torch.load(args.weights, map_location="cpu",
                        weights_only=False)
    if isinstance(module, dict):
        raise ValueError(
            f"{args.weights} holds a state dict; save the full module "
            "(torch.save(model, path)) so layer structure is available")
    names = read_class_names(args.classes)
    input_size = int(getattr(module, "input_size", 64))
    bundle = export_model(module, names, input_size, args.out)
    print(f"exported {len(bundle.spec.blocks)} blocks, "
          f"{len(names)} classes -> {args.out}")
    if args.probe:
        record = record_probe(module, load_rgb(args.probe), input_size,
                              args.out)
        top = record.expected.argmax()
        print(f"probe recorded; top class {names[top]} "
              f"({record.expected[top]:.4f})")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="modelexport",
        description="Export torch block classifiers to the interchange "
                    "directory format.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export")
    p.add_argument("--weights", required=True)
    p.add_argument("--classes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--probe")
    p.set_defaults(fn=cmd_export)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ExportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
