"""Standalone line-protocol oracle for subprocess-transport tests.

Usage: line_oracle.py linear <seed> <classes>
       line_oracle.py constant <p1,p2,...>
       line_oracle.py badsum          (replies with probabilities summing to 0.8)
       line_oracle.py badid           (replies with a wrong request id)

Reads one request line per reply from stdin, as produced by
pixattack.oracle.wire_encode_request.
"""

import sys

import numpy as np

from pixattack.oracle import (
    LinearSoftmaxOracle,
    wire_decode_request,
    wire_encode_response,
)


def main() -> int:
    mode = sys.argv[1]
    oracle = None
    constant = None
    if mode == "linear":
        seed, classes = int(sys.argv[2]), int(sys.argv[3])
    elif mode == "constant":
        constant = np.array([float(v) for v in sys.argv[2].split(",")])
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req_id, image = wire_decode_request(line)
        if mode == "constant":
            probs = constant
        elif mode == "badsum":
            probs = np.array([0.5, 0.3])
        elif mode == "badid":
            req_id = req_id + 1000
            probs = np.array([0.5, 0.5])
        else:
            if oracle is None:
                oracle = LinearSoftmaxOracle.from_seed(seed, image.shape, classes)
            probs = oracle.classify(image).probabilities
        sys.stdout.write(wire_encode_response(req_id, probs) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
