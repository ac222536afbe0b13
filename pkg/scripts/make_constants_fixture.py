#!/usr/bin/env python3
"""Regenerate tests/fixtures/stability_constants.json.

Evaluates the closed-form recovery constants symbolically (sympy, 50 digits)
at a few (gamma, p, s, t) points, independently of the float implementation
in the package.  The committed fixture is the regression reference.
"""

import json
import os

import sympy as sp


def constants_symbolic(gamma, p, s, t):
    gamma, p, s, t = sp.nsimplify(gamma), sp.nsimplify(p), sp.Integer(s), sp.Integer(t)
    sqrt2 = sp.sqrt(2)
    lam = (1 + sqrt2) * gamma
    mu = sp.Rational(1, 4) * (1 + sqrt2) * (gamma - 1) * (sp.Rational(s, t)) ** (1 / p - sp.Rational(1, 2))
    nu = (lam + 1 - sqrt2) / 2
    denom = (1 - mu**p) ** (1 / p)
    c1 = 2 ** (2 / p - 1) * (1 + mu**p) ** (1 / p) / denom
    d1 = 2 ** (2 / p - 1) * lam / denom
    c2 = 2 ** (2 / p - 2) * (lam + 1 - sqrt2) / denom
    d2 = 2 ** (1 / p - 2) * lam * (lam + 1 - sqrt2) / denom + 2 * lam
    vals = {"lam": lam, "mu": mu, "nu": nu, "c1": c1, "d1": d1, "c2": c2, "d2": d2}
    return {k: float(sp.N(v, 50)) for k, v in vals.items()}


CASES = [
    {"gamma_2t": 2.0, "p": 1.0, "s": 1, "t": 1},
    {"gamma_2t": 1.0, "p": 1.0, "s": 1, "t": 1},
    {"gamma_2t": 1.0, "p": 0.5, "s": 1, "t": 1},
    {"gamma_2t": 1.5, "p": 0.5, "s": 1, "t": 4},
    {"gamma_2t": 2.5, "p": 1.0, "s": 2, "t": 3},
]


def main():
    out = []
    for case in CASES:
        entry = dict(case)
        entry["expected"] = constants_symbolic(case["gamma_2t"], case["p"], case["s"], case["t"])
        out.append(entry)
    here = os.path.dirname(os.path.abspath(__file__))
    path = os.path.join(here, "..", "tests", "fixtures", "stability_constants.json")
    with open(path, "w") as f:
        json.dump(out, f, indent=2)
    print(f"wrote {len(out)} cases to {os.path.normpath(path)}")


if __name__ == "__main__":
    main()
