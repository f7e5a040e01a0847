#!/usr/bin/env python3
"""Reference classifier for the external evaluator protocol.

Reads the request manifest, decodes both tensor containers, checks that they
agree, and answers with the mean pixel value of the image batch as the
"accuracy". Because the answer is a pure function of the exchanged bytes, a
caller can recompute it and confirm the round trip is lossless.

Usage: echo_classifier.py MANIFEST [--fixed VALUE] [--garbage]
"""

import argparse
import json
import struct
import sys

DTYPES = {1: ("<f", 4), 2: ("<d", 8)}


def read_container(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != b"TNSR":
        raise ValueError(f"{path}: bad magic")
    version, dtype, ndim = struct.unpack_from("<IBB", blob, 4)
    if version != 1 or dtype not in DTYPES or ndim == 0:
        raise ValueError(f"{path}: unsupported header")
    dims = struct.unpack_from(f"<{ndim}Q", blob, 10)
    fmt, width = DTYPES[dtype]
    count = 1
    for d in dims:
        count *= d
    offset = 10 + 8 * ndim
    if len(blob) != offset + count * width:
        raise ValueError(f"{path}: payload length mismatch")
    values = struct.unpack_from(f"<{count}{fmt[1]}", blob, offset)
    return list(dims), values


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("manifest")
    parser.add_argument("--fixed", type=float, help="answer this accuracy instead of the echo value")
    parser.add_argument("--garbage", action="store_true", help="violate the protocol on purpose")
    args = parser.parse_args()

    if args.garbage:
        print("not json")
        return 0

    with open(args.manifest) as f:
        manifest = json.load(f)
    dims, images = read_container(manifest["images"])
    label_dims, labels = read_container(manifest["labels"])
    num_classes = int(manifest["num_classes"])
    if len(dims) != 4 or label_dims != [dims[0]]:
        print(f"shape mismatch: images {dims}, labels {label_dims}", file=sys.stderr)
        return 1
    if any(l < 0 or l >= num_classes or l != int(l) for l in labels):
        print("label out of range", file=sys.stderr)
        return 1

    accuracy = args.fixed if args.fixed is not None else sum(images) / len(images)
    print(json.dumps({"accuracy": accuracy}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
