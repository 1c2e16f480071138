#!/usr/bin/env python3
"""Builds the test systems in data/ from the stock MATPOWER cases.

    python3 scripts/make_cases.py --matpower path/to/matpower/data --out data

Changes applied to every case:
  * quadratic costs are replaced by their secant over [0, Pmax], written as a
    linear model-2 gencost row (c1 + c2 * Pmax, c0);

and to case118, which ships without line ratings:
  * rateA is synthesized from a reference dispatch (the least-cost dispatch
    that can ride through every single generator outage with 5 % response,
    ignoring the network): each line gets 5 % headroom over the largest of its
    pre- and post-outage flows, rounded up to 5 MW, at least 25 MW; the
    TIGHT_LINES most loaded lines are then cut to TIGHT_FACTOR of their
    post-outage peak so that the network binds.
"""

import argparse
import math
import re
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import lil_matrix

GAMMA = 0.05
TIGHT_LINES = 2
TIGHT_FACTOR = 0.9


def block(text, name):
    m = re.search(r"(mpc\.%s\s*=\s*\[)(.*?)(\];)" % name, text, re.S)
    rows = []
    for line in m.group(2).split("\n"):
        line = line.split("%")[0].strip().rstrip(";").strip()
        if line:
            rows.append([float(v) for v in line.split()])
    return m, rows


def fmt(v):
    return ("%d" % v) if float(v).is_integer() else ("%.10g" % v)


def replace_block(text, name, rows):
    m, _ = block(text, name)
    body = "\n" + "".join("\t" + "\t".join(fmt(v) for v in r) + ";\n" for r in rows)
    return text[: m.start(2)] + body + text[m.end(2):]


def linear_costs(text):
    _, gencost = block(text, "gencost")
    _, gen = block(text, "gen")
    rows = []
    for c, g in zip(gencost, gen):
        assert int(c[0]) == 2
        n = int(c[3])
        coeffs = c[4:4 + n]
        c2 = coeffs[-3] if n >= 3 else 0.0
        c1 = coeffs[-2] if n >= 2 else 0.0
        c0 = coeffs[-1]
        rows.append([2, c[1], c[2], 2, round(c1 + c2 * g[8], 6), c0])
    return replace_block(text, "gencost", rows)


def ptdf(bus, branch):
    idx = {int(b[0]): k for k, b in enumerate(bus)}
    nb, nl = len(bus), len(branch)
    a = np.zeros((nl, nb))
    for l, br in enumerate(branch):
        a[l, idx[int(br[0])]] = 1
        a[l, idx[int(br[1])]] = -1
    tap = np.array([br[8] if br[8] != 0 else 1.0 for br in branch])
    s = (1.0 / (np.array([br[3] for br in branch]) * tap))[:, None] * a
    slack = next(k for k, b in enumerate(bus) if int(b[1]) == 3)
    keep = [k for k in range(nb) if k != slack]
    k0 = np.zeros((nl, nb))
    k0[:, keep] = s[:, keep] @ np.linalg.inv((a.T @ s)[np.ix_(keep, keep)])
    return k0, idx


def respond(g, pmax, r, out, load):
    lo, hi = 0.0, 1.0
    for _ in range(200):
        n = 0.5 * (lo + hi)
        gs = np.minimum(g + n * r, pmax)
        gs[out] = 0
        e = gs.sum() - load
        if abs(e) < 1e-9:
            break
        lo, hi = (n, hi) if e < 0 else (lo, n)
    return gs


def synthesize_ratings(text, tight_lines, tight_factor):
    _, bus = block(text, "bus")
    _, gen = block(text, "gen")
    _, branch = block(text, "branch")
    _, gencost = block(text, "gencost")
    gen = np.array(gen)
    cost = np.array([c[4] for c in gencost])
    pmin, pmax = gen[:, 9], gen[:, 8]
    ng = len(gen)
    load = sum(b[2] for b in bus)
    r = GAMMA * pmax

    # g, then one relaxed post-outage vector per generator
    nv = ng + ng * ng
    c = np.zeros(nv)
    c[:ng] = cost
    a = lil_matrix((1 + ng + ng * ng, nv))
    lo, hi = [load], [load]
    a[0, :ng] = 1
    for o in range(ng):
        for i in range(ng):
            a[1 + o, ng + o * ng + i] = 1
        lo.append(load)
        hi.append(load)
    row = 1 + ng
    for o in range(ng):
        for i in range(ng):
            a[row, ng + o * ng + i] = 1
            a[row, i] = -1
            lo.append(-np.inf)
            hi.append(r[i])
            row += 1
    ub = np.concatenate([pmax, np.tile(pmax, ng)])
    for o in range(ng):
        ub[ng + o * ng + o] = 0
    res = milp(c, constraints=LinearConstraint(a.tocsr(), lo, hi),
               bounds=Bounds(np.concatenate([pmin, np.zeros(ng * ng)]), ub))
    assert res.status == 0, res.message
    g = res.x[:ng]

    k0, idx = ptdf(bus, branch)
    d = np.array([b[2] for b in bus])
    gbus = [idx[int(x)] for x in gen[:, 0]]

    def flows(p):
        inj = -d.copy()
        np.add.at(inj, gbus, p)
        return k0 @ inj

    f0 = flows(g)
    peak = np.abs(np.array([flows(respond(g, pmax, r, o, load)) for o in range(ng)])).max(0)
    rate = np.maximum(25, np.ceil(1.05 * np.maximum(np.abs(f0), peak) / 5) * 5)
    top = np.argsort(-peak, kind="stable")[:tight_lines]
    rate[top] = np.maximum(np.ceil(1.05 * np.abs(f0[top])), np.floor(tight_factor * peak[top]))
    rows = [br[:5] + [rate[l], rate[l], rate[l]] + br[8:] for l, br in enumerate(branch)]
    return replace_block(text, "branch", rows)


def header(text, name, note):
    text = re.sub(r"function mpc = \w+", "function mpc = %s" % name, text, count=1)
    lines = "".join("%%   %s\n" % n for n in note)
    return text.replace("\n", "\n%   Derived test system, see scripts/make_cases.py:\n" + lines, 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--matpower", type=Path, required=True)
    ap.add_argument("--out", type=Path, default=Path("data"))
    ap.add_argument("--tight-lines", type=int, default=TIGHT_LINES)
    ap.add_argument("--tight-factor", type=float, default=TIGHT_FACTOR)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    text = linear_costs((args.matpower / "case30.m").read_text())
    text = header(text, "case30_scopf", ["costs linearized (secant over [0, Pmax])"])
    (args.out / "case30_scopf.m").write_text(text)

    text = linear_costs((args.matpower / "case118.m").read_text())
    text = synthesize_ratings(text, args.tight_lines, args.tight_factor)
    text = header(text, "case118_scopf", [
        "costs linearized (secant over [0, Pmax])",
        "rateA synthesized, %d lines tightened to %g of their post-outage peak"
        % (args.tight_lines, args.tight_factor),
    ])
    (args.out / "case118_scopf.m").write_text(text)


if __name__ == "__main__":
    main()
