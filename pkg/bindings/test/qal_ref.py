"""Reference oracle for the binding equivalence test.

Reads a JSON file of instances, evaluates the core library in-process on the
exact float64 values, and prints full-precision results. JSON numbers use
shortest round-trip decimals in both directions, so nothing is lost in
transport and the binding's CLI route can be compared at 1e-12.
"""
import json
import sys

from pcqal.losses import QalParams, qal


def main(path):
    with open(path) as fh:
        instances = json.load(fh)
    out = []
    for inst in instances:
        params = QalParams(inst["eps"], inst["omega"], inst["lambda"])
        v = qal(inst["pred"], inst["gt"], params, want_grad=True)
        out.append({
            "total": v.total,
            "cov_term": v.cov_term,
            "attr_term": v.attr_term,
            "grad": v.grad.tolist(),
        })
    json.dump(out, sys.stdout)


if __name__ == "__main__":
    main(sys.argv[1])
