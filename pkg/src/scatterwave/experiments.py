"""Named experiments, one per acceptance check.

Each experiment maps an ExperimentConfig to an Outcome holding tables
(written as CSV by the runner), a JSON-able summary and a pass flag.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad as spquad

from . import amplitude as amp
from . import radial1d as r1
from . import resolvent as res
from . import waveprop as wp
from .fields import BoxGrid, SphereQuadrature, interpolate, sample
from .potentials import from_config, make_sharpness_radial, make_zero, mollifier


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)
    plot: dict | None = None

    def add(self, *vals):
        self.rows.append(list(vals))


@dataclass
class Outcome:
    tables: dict
    summary: dict
    passed: bool


def pmap(fn, items, jobs=1):
    """Ordered map, in worker processes when jobs > 1."""
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


def _grid(cfg):
    return BoxGrid(float(cfg.grid["L"]), int(cfg.grid["N"]))


def _quad(cfg, default=12):
    return SphereQuadrature.gauss_product(int(cfg.params.get("n_theta", default)))


def _family(spec, grid=None):
    V = from_config(spec)
    return res.fit_to_grid(V, grid) if grid is not None else V


def _families(cfg, grid):
    fams = cfg.params.get("families") or [cfg.potential]
    return [(f.get("label", f["family"]), _family(f, grid)) for f in fams]


def _monotone(xs):
    return all(b < a for a, b in zip(xs[:-1], xs[1:]))


# ------------------------------------------------------------- resolvent

def _radial_convolution(fr, r, k, rmax):
    """(R0 f)(r) for radial f: int_0^inf f(p) p (e^{ik(r+p)} - e^{ik|r-p|}) / (2ik r) dp."""
    def part(p, j):
        v = fr(p) * p * (np.exp(1j * k * (r + p)) - np.exp(1j * k * abs(r - p))) / (2j * k * r)
        return v.real if j == 0 else v.imag
    tot = 0j
    for a, b in ((0, r), (r, rmax)):
        tot += spquad(part, a, b, args=(0,), epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        tot += 1j * spquad(part, a, b, args=(1,), epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return tot


def free_resolvent_oracle(cfg, jobs=1):
    g = _grid(cfg)
    s = float(cfg.params.get("width", 0.75))
    fr = lambda r: np.exp(-r * r / (2 * s * s))
    f = sample(g, lambda x: fr(np.linalg.norm(x, axis=-1)))
    rng = np.random.default_rng(int(cfg.params.get("seed", 1)))
    n = int(cfg.params.get("n_probes", 20))
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    rr = rng.uniform(1.0, 3.0, n)
    P = d * rr[:, None]
    tab = Table(["k", "probe", "r", "numeric", "oracle", "rel_err"])
    worst = 0.0
    for k in cfg.k:
        u = res.apply_free_resolvent(f, k, margin_tol=cfg.tolerances.get("margin", 1e-2))
        num = interpolate(u, P)
        for i, r in enumerate(rr):
            ex = _radial_convolution(fr, r, k, g.L / 2)
            e = abs(num[i] - ex) / abs(ex)
            worst = max(worst, e)
            tab.add(k, i, r, num[i], ex, e)
    tol = cfg.tolerances.get("rel", 1e-6)
    return Outcome({"probes": tab}, {"max_rel_err": worst, "threshold": tol}, worst < tol)


def symmetry_suite(cfg, jobs=1):
    g = _grid(cfg)
    V = _family(cfg.potential, g)
    k = cfg.k[0]
    pairs = [np.array(p, float) for p in cfg.params["pairs"]]
    ops = cfg.params.get("operators", ["H", "D"])
    q = _quad(cfg, 8)
    r = float(cfg.params.get("radius", 3.0))
    tab = Table(["operator", "check", "pair", "value"])
    worst = 0.0
    for op in ops:
        Vop = V.scaled(float(cfg.params.get("d_coupling", 0.5))) if op == "D" else V
        for ip in range(0, len(pairs), 2):
            y1, y2 = pairs[ip], pairs[ip + 1]
            s1 = amp.solve_green(op, y1, k, Vop, g)
            s2 = amp.solve_green(op, y2, k, Vop, g)
            a = s1.evaluate(y2[None], "direct")[0]
            b = s2.evaluate(y1[None], "direct")[0]
            e1 = abs(a - b) / abs(a)
            s3 = amp.solve_green(op, y1, -np.conj(k), Vop, g)
            c = s3.evaluate(y2[None], "direct")[0]
            e2 = abs(c - np.conj(a)) / abs(a)
            A1 = amp.amplitude_trace(s1, r, q).values
            A3 = amp.amplitude_trace(s3, r, q).values
            e3 = float(np.max(np.abs(A3 - np.conj(A1))) / np.max(np.abs(A1)))
            for name, v in (("swap", e1), ("conjugate_z", e2), ("reflect_k", e3)):
                tab.add(op, name, ip // 2, v)
                worst = max(worst, v)
    tol = cfg.tolerances.get("rel", 1e-6)
    return Outcome({"symmetry": tab}, {"max_violation": worst, "threshold": tol}, worst < tol)


# ------------------------------------------------------------- amplitude

def amplitude_free(cfg, jobs=1):
    g = _grid(cfg)
    q = _quad(cfg)
    tab = Table(["k", "quantity", "radius", "max_abs_dev"])
    worst = 0.0
    for k in cfg.k:
        sol = res.solve_schrodinger_green(np.zeros(3), k, make_zero(), g)
        for r in cfg.r_ladder:
            d = float(np.max(np.abs(amp.amplitude_trace(sol, r, q).values - 1)))
            tab.add(k, "A", r, d)
            worst = max(worst, d)
        for m in ("integral", "sphere"):
            d = float(np.max(np.abs(amp.extract_limit(sol, q, m).values - 1)))
            tab.add(k, "A_inf_" + m, math.inf, d)
            worst = max(worst, d)
    tol = cfg.tolerances.get("abs", 1e-8)
    return Outcome({"free_amplitude": tab}, {"max_dev": worst, "threshold": tol}, worst < tol)


def amplitude_r_ladder(cfg, jobs=1):
    g = _grid(cfg)
    q = _quad(cfg)
    k = cfg.k[0]
    ratio = float(cfg.params.get("ratio", 1.35))
    rungs = int(cfg.params.get("rungs", 8))
    r0 = cfg.params.get("r0")
    r0 = res.truncation_radius(g) if r0 is None else float(r0)
    rs = amp.r_ladder(r0, ratio, rungs)
    tab = Table(["family", "r", "distance"], plot={"x": "r", "y": ["distance"], "xscale": "log", "yscale": "log"})
    summ, ok = {"r0": r0}, True
    for label, V in _families(cfg, g):
        sol = res.solve_schrodinger_green(np.zeros(3), k, V, g)
        lim = amp.extract_limit(sol, q, "integral")
        d = [amp.amplitude_trace(sol, r, q).distance(lim.values) for r in rs]
        for r, v in zip(rs, d):
            tab.add(label, r, v)
        mono, rat = _monotone(d), d[-1] / d[0]
        summ[label] = {"monotone": mono, "last_over_first": rat}
        ok &= mono and rat < cfg.tolerances.get("ratio", 0.1)
    return Outcome({"ladder": tab}, summ, ok)


def high_energy_scan(cfg, jobs=1):
    g = _grid(cfg)
    q = _quad(cfg)
    tab = Table(["family", "k", "norm", "iterations"])
    summ, ok = {}, True
    for label, V in _families(cfg, g):
        rows = amp.high_energy_scan(V, np.zeros(3), q, cfg.k, g)
        n = [r["norm"] for r in rows]
        for r in rows:
            tab.add(label, r["k"], r["norm"], r["iterations"])
        mono, rat = _monotone(n), n[-1] / n[0]
        summ[label] = {"monotone": mono, "last_over_first": rat}
        ok &= mono and rat < cfg.tolerances.get("ratio", 0.1)
    return Outcome({"scan": tab}, summ, ok)


def sup_bound_growth(cfg, jobs=1):
    g = _grid(cfg)
    q = _quad(cfg)
    re_k = float(cfg.params.get("re_k", 1.0))
    ims = [float(v) for v in cfg.params.get("im_k", [0.8, 0.4, 0.2])]
    rs = amp.r_ladder(float(cfg.params.get("r0", 0.5)), 1.35, int(cfg.params.get("rungs", 12)))
    tab = Table(["family", "im_k", "sup_norm", "argmax_r"])
    summ, ok = {}, True
    for label, V in _families(cfg, g):
        sups = []
        for b in ims:
            sol = res.solve_schrodinger_green(np.zeros(3), complex(re_k, b), V, g)
            ns = [amp.amplitude_trace(sol, r, q).norm() for r in rs]
            i = int(np.argmax(ns))
            sups.append(ns[i])
            tab.add(label, b, ns[i], rs[i])
        expo = -float(np.polyfit(np.log(ims), np.log(sups), 1)[0])
        summ[label] = {"exponent": expo}
        ok &= expo <= cfg.tolerances.get("exponent", 4.3)
    return Outcome({"sup_growth": tab}, summ, ok)


def _gauss_vector(g, c, s):
    c = np.asarray(c, float)

    def fv(x):
        d = np.asarray(x) - c
        b = np.exp(-np.sum(d * d, -1) / (2 * s * s))
        return np.stack([b * (1 + d[..., 1]), b * d[..., 0], b * np.cos(d[..., 2])], -1)
    return sample(g, fv)


def _gauss_scalar(g, c, s):
    c = np.asarray(c, float)

    def fs(x):
        d = np.asarray(x) - c
        return np.exp(-np.sum(d * d, -1) / (2 * s * s)) * (1 + 0.5 * np.sin(2 * x[..., 1]))
    return sample(g, fs)


def _b_identity_task(args):
    L, N, c, s, k, radii, n_theta = args
    g = BoxGrid(L, N)
    f = _gauss_vector(g, c, s)
    q = SphereQuadrature.gauss_product(n_theta)
    return [amp.b_identity_residual(f, k, q, r) for r in radii]


def model_operator_suite(cfg, jobs=1):
    g = _grid(cfg)
    p = cfg.params
    c, s = p.get("center", [4.0, 2.5, -1.5]), float(p.get("width", 0.8))
    nt = int(p.get("n_theta", 12))
    q = SphereQuadrature.gauss_product(nt)
    radii = [float(r) for r in p.get("radii", [10.0, 14.0, 30.0])]
    tabs = {}
    # integration-by-parts identity
    t1 = Table(["k", "r", "residual"])
    out = pmap(_b_identity_task, [(g.L, g.N, c, s, k, radii, nt) for k in cfg.k], jobs)
    worst = 0.0
    for k, rr in zip(cfg.k, out):
        for r, v in zip(radii, rr):
            t1.add(k, r, v)
            worst = max(worst, v)
    tabs["identity"] = t1
    # convergence of B_r to B_inf outside supp f
    k0 = cfg.k[0]
    f_vec = _gauss_vector(g, c, s)
    f_sc = _gauss_scalar(g, c, s)
    r0 = float(np.linalg.norm(c)) + 4 * s
    rs = amp.r_ladder(r0, 1.35, int(p.get("rungs", 8)))
    t2 = Table(["j", "r", "distance"], plot={"x": "r", "y": ["distance"], "xscale": "log", "yscale": "log"})
    mono_all = True
    trend = {}
    for j, ff in (("2", f_sc), ("4", f_vec), ("1", f_vec)):
        inf = amp.model_operator(j, "limit", ff, k0, q)
        d = [amp.model_operator(j, "finite", ff, k0, q, r).distance(inf.values) for r in rs]
        for r, v in zip(rs, d):
            t2.add(j, r, v)
        trend[j] = _monotone(d)
        mono_all &= trend[j]
    tabs["convergence"] = t2
    # bound audit under refinement
    ba = p.get("audit", {})
    La = float(ba.get("L", 12.0))
    Ns = [int(n) for n in ba.get("N", [32, 64])]
    qa = SphereQuadrature.gauss_product(int(ba.get("n_theta", 8)))
    ka = [complex(*v) for v in ba.get("k", [[1.0, 0.7], [2.0, 0.3]])]
    ra = [float(r) for r in ba.get("radii", [3.0, 5.0, 8.0])]
    Va = from_config(ba.get("potential", {"family": "oscillating", "gamma": 0.3, "truncate": 2.5}))
    ca, sa = ba.get("center", [0.8, -0.4, 0.3]), float(ba.get("width", 0.7))
    t3 = Table(["j", "N", "k", "ratio"])
    stab = {}
    for j in ("1", "2", "3", "4"):
        ratios = []
        for N in Ns:
            ga = BoxGrid(La, N)
            ff = _gauss_vector(ga, ca, sa) if j in ("1", "4") else _gauss_scalar(ga, ca, sa)
            rep = amp.bound_audit(j, ka, [ff], qa, ra, Va)
            ratios.append([row["ratio"] for row in rep["rows"]])
            for kk, v in zip(ka, ratios[-1]):
                t3.add(j, N, kk, v)
        stab[j] = float(np.max(np.abs(np.array(ratios[-1]) / np.array(ratios[0]) - 1)))
    tabs["bound_audit"] = t3
    tol = cfg.tolerances.get("identity", 1e-6)
    stol = cfg.tolerances.get("refinement", 0.1)
    ok = worst < tol and mono_all and max(stab.values()) <= stol
    return Outcome(tabs, {"identity_max": worst, "convergence_monotone": trend,
                          "refinement_change": stab}, ok)


def _energy_task(args):
    L, N, spec, k, r1, r2, n_theta, n_r = args
    g = BoxGrid(L, N)
    V = res.fit_to_grid(from_config(spec), g)
    sol = res.solve_schrodinger_green(np.zeros(3), k, V, g)
    au = amp.energy_identity_audit(amp.AmplitudeField(sol), V, r1, r2,
                                   SphereQuadrature.gauss_product(n_theta), n_r=n_r)
    return {key: au[key] for key in ("dirichlet", "cross", "potential", "I1", "I2", "lhs", "rhs", "residual")}


def energy_identity(cfg, jobs=1):
    g = _grid(cfg)
    p = cfg.params
    r1, r2 = (float(v) for v in p.get("annulus", [0.5, 5.0]))
    fams = p["families"]
    tasks = [(g.L, g.N, f, k, r1, r2, int(p.get("n_theta", 16)), int(p.get("n_r", 64)))
             for f in fams for k in cfg.k]
    out = pmap(_energy_task, tasks, jobs)
    tab = Table(["family", "k", "dirichlet", "cross", "potential", "I1", "I2", "lhs", "rhs", "residual"])
    worst = 0.0
    for t, o in zip(tasks, out):
        tab.add(t[2].get("label", t[2]["family"]), t[3], o["dirichlet"], o["cross"], o["potential"],
                o["I1"], o["I2"], o["lhs"], o["rhs"], o["residual"])
        worst = max(worst, o["residual"])
    tol = cfg.tolerances.get("rel", 1e-3)
    return Outcome({"energy": tab}, {"max_residual": worst, "threshold": tol}, worst < tol)


# ---------------------------------------------------------------- waves

def _filter(cfg):
    fc = cfg.filter
    return wp.ContourFilter(float(fc["a"]), float(fc["b"]), int(fc.get("n", 3)),
                            fc.get("height"), int(fc.get("nodes_per_panel", 8)), int(fc.get("grading", 3)))


def contour_vs_multiplier(cfg, jobs=1):
    g = _grid(cfg)
    filt = _filter(cfg)
    lo, hi = cfg.params.get("band", [1.0, 3.0])
    st = wp.band_limited_state(g, lo, hi)
    tol = cfg.tolerances.get("quadrature", 1e-8)
    tab = Table(["t", "rel_err", "level", "nodes", "doubling_change"])
    worst_e, worst_c = 0.0, 0.0
    for t in cfg.t_ladder:
        u, rep = wp.contour_propagate(st, t, filt, "H0", tol=tol, return_report=True)
        ex = wp.filtered_free(st, t, filt)
        e = float(np.linalg.norm(u.data - ex.data) / np.linalg.norm(ex.data))
        tab.add(t, e, rep.level, rep.n_nodes, rep.change)
        worst_e, worst_c = max(worst_e, e), max(worst_c, rep.change)
    olo, ohi = cfg.params.get("out_band", [3.5, 5.0])
    out = wp.band_limited_state(g, olo, ohi)
    ann = 0.0
    t2 = Table(["t", "annihilation"])
    for t in cfg.t_ladder:
        u = wp.contour_propagate(out, t, filt, "H0", tol=tol)
        a = float(np.linalg.norm(u.data) / np.linalg.norm(out.f.data))
        t2.add(t, a)
        ann = max(ann, a)
    th = cfg.tolerances
    ok = worst_e < th.get("rel", 1e-4) and ann < th.get("annihilation", 1e-6) and worst_c < th.get("doubling", 1e-6)
    return Outcome({"contour": tab, "annihilation": t2},
                   {"max_rel_err": worst_e, "max_annihilation": ann, "max_doubling_change": worst_c}, ok)


def kirchhoff_radon(cfg, jobs=1):
    g = _grid(cfg)
    lo, hi = cfg.params.get("band", [1.0, 4.0])
    st = wp.band_limited_state(g, lo, hi)
    sig = np.asarray(cfg.params.get("direction", [1.0, 2.0, 2.0]), float)
    sig /= np.linalg.norm(sig)
    offs = np.linspace(-1.5, 1.5, int(cfg.params.get("n_probes", 7)))
    tab = Table(["t", "offset", "exact", "asymptotic"])
    errs = []
    for t in cfg.t_ladder:
        X = (t + offs)[:, None] * sig
        ex = interpolate(wp.free_evolve(st, t), X)
        ap = wp.kirchhoff_asymptotic(st, t, X)
        for o, a, b in zip(offs, ex, ap):
            tab.add(t, o, a, b)
        errs.append(float(np.max(np.abs(ex - ap)) / np.max(np.abs(ex))))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    ok = all(r >= cfg.tolerances.get("ratio", 1.5) for r in ratios)
    return Outcome({"probes": tab}, {"rel_errors": errs, "ratios": ratios}, ok)


def waveop_cauchy(cfg, jobs=1):
    g = _grid(cfg)
    filt = _filter(cfg)
    lo, hi = cfg.params.get("band", [1.0, 3.0])
    st = wp.band_limited_state(g, lo, hi)
    tol, stol = cfg.tolerances.get("quadrature", 1e-6), cfg.tolerances.get("solve", 1e-8)
    tab = Table(["model", "coupling", "t", "delta", "norm", "outside"])
    V = from_config(cfg.potential)
    rows = wp.wave_operator_cauchy(st, V, filt, cfg.t_ladder, tol=tol, solve_tol=stol)
    for r in rows:
        tab.add("realization", 1.0, r["t"], r["delta"], r["norm"], r["outside"])
    deltas = [r["delta"] for r in rows[:-1]]
    mono = _monotone(deltas)
    base = from_config(cfg.params["scan_potential"])
    scan_t = cfg.params.get("scan_t", [1.0, 3.0, 5.0])
    mx = []
    for e in cfg.eps_ladder:
        rr = wp.wave_operator_cauchy(st, base.scaled(e), filt, scan_t, tol=tol, solve_tol=stol)
        for r in rr:
            tab.add("scan", e, r["t"], r["delta"], r["norm"], r["outside"])
        mx.append(max(r["delta"] for r in rr[:-1]))
    slope = float(np.polyfit(np.log(cfg.eps_ladder), np.log(mx), 1)[0])
    ok = mono and abs(slope - 1) <= cfg.tolerances.get("slope", 0.3)
    return Outcome({"cauchy": tab}, {"deltas": deltas, "monotone": mono, "max_delta": mx,
                                     "slope": slope}, ok)


def stationary_free_inversion(cfg, jobs=1):
    g = _grid(cfg)
    lo, hi = cfg.params.get("band", [0.5, 3.5])
    st = wp.band_limited_state(g, lo, hi)
    x, w = np.polynomial.legendre.leggauss(int(cfg.params.get("n_kappa", 32)))
    kap = lo + (hi - lo) * (x + 1) / 2
    w = w * (hi - lo) / 2
    q = _quad(cfg, 32)
    u = wp.stationary_wave_operator(st, None, q, (kap, w))
    e = float(np.linalg.norm(u.data - st.f.data) / np.linalg.norm(st.f.data))
    tab = Table(["n_kappa", "n_theta", "rel_err"])
    tab.add(len(kap), int(cfg.params.get("n_theta", 32)), e)
    tol = cfg.tolerances.get("rel", 1e-3)
    return Outcome({"inversion": tab}, {"rel_err": e, "threshold": tol}, e < tol)


def ballistic_projection(cfg, jobs=1):
    g = _grid(cfg)
    q = _quad(cfg)
    c = np.asarray(cfg.params.get("center", [0.5, 0.0, 0.0]), float)
    R = float(cfg.params.get("radius", 1.5))
    f = sample(g, lambda x: mollifier(np.linalg.norm(np.asarray(x) - c, axis=-1) / R) + 0j)
    op = cfg.params.get("operator", "D")
    d_vals = [float(v) for v in cfg.params.get("d", [1.0])]
    near = [complex(*v) for v in cfg.params.get("near_real", [])]
    tab = Table(["family", "d", "node", "F"])
    summ, ok = {}, True
    for label, V in _families(cfg, g):
        rep = wp.ballistic_projection(f, V, q, d_vals, near, op)
        for d, vals in rep["imag_axis"].items():
            for i, v in enumerate(vals):
                tab.add(label, d, i, v)
        summ[label] = {"min_F": rep["min_F"], "near_real_norm": rep["near_real_norm"]}
        ok &= rep["positive"]
    return Outcome({"F": tab}, summ, ok)


# --------------------------------------------------------------- radial

def _radial_task(args):
    gamma, n_max, E = args
    op = r1.HalfLineOperator.from_profile(0, make_sharpness_radial(gamma, n_max).profile)
    s = r1.integrate_solution(op, E)
    return {"gamma": gamma, "E": E, "det": float(np.max(np.abs(s.determinants - 1))),
            "wronskian": r1.wronskian_drift(op, E), "bumps": r1.bump_log_norms(op, E).tolist(),
            "cum": s.cumulative_log_norm.tolist()}


def radial_invariants(cfg, jobs=1):
    p = cfg.params
    tol = cfg.tolerances
    tab = Table(["check", "l", "E", "value"])
    worst = {}

    def rec(name, l, E, v):
        tab.add(name, l, E, v)
        worst[name] = max(worst.get(name, 0.0), v)

    free = r1.HalfLineOperator(0, r_max=30.0)
    s = r1.integrate_solution(free, 1.0)
    rec("free_sine", 0, 1.0, float(np.max(np.abs(s.u - np.sin(s.r - 1)))))
    for l in p.get("bessel_l", [1, 2]):
        for E in p.get("bessel_E", [2.0]):
            s = r1.integrate_solution(r1.HalfLineOperator(int(l), r_max=30.0), E)
            u, du = r1.riccati_bessel_solution(int(l), E, s.r)
            rec("riccati_bessel", l, E, float(max(np.max(np.abs(s.u - u)), np.max(np.abs(s.du - du)))))
    gam = p.get("gammas", [0.3, 0.6])
    Es = p.get("energies", [0.5, 1.0, 2.0])
    out = pmap(_radial_task, [(gm, int(p.get("n_max", 4)), E) for gm in gam for E in Es], jobs)
    growth = Table(["gamma", "E", "bump", "log_norm"])
    for o in out:
        rec("determinant", 0, o["E"], o["det"])
        rec("wronskian", 0, o["E"], o["wronskian"])
        for i, b in enumerate(o["bumps"]):
            growth.add(o["gamma"], o["E"], i, b)
    E_cmp = float(p.get("compare_E", 1.0))
    b = {o["gamma"]: o["bumps"] for o in out if o["E"] == E_cmp}
    smaller = all(x < y for x, y in zip(b[max(gam)], b[min(gam)])) if len(gam) > 1 else True
    g = BoxGrid(*p.get("decomposition_grid", [16.0, 64]))
    g = BoxGrid(float(g.L), int(g.N))
    rep0 = r1.decomposition_consistency(None, 0, 0, g)
    rec("decomposition_free", 0, math.nan, rep0.residual)
    amp_v, gm = p.get("radial_potential", [0.5, 0.3])
    Vr = lambda r: amp_v * np.cos(2 * r) / (1 + r * r) ** gm
    rep1 = r1.decomposition_consistency(Vr, 1, 0, g)
    rec("decomposition", 1, math.nan, rep1.residual)
    rec("cross_projection", 1, math.nan, max(max(rep0.cross.values()), max(rep1.cross.values())))
    th = {"free_sine": tol.get("oracle", 1e-8), "riccati_bessel": tol.get("oracle", 1e-8),
          "determinant": tol.get("invariant", 1e-8), "wronskian": tol.get("invariant", 1e-8),
          "decomposition_free": tol.get("decomposition_free", 1e-8),
          "decomposition": tol.get("decomposition", 1e-5), "cross_projection": tol.get("cross", 1e-8)}
    ok = all(worst[k] < th[k] for k in th) and smaller
    return Outcome({"invariants": tab, "growth": growth},
                   {"worst": worst, "thresholds": th, "smaller_increments_for_larger_gamma": smaller}, ok)


# ----------------------------------------------------------- determinism

def determinism(cfg, jobs=1):
    from .cli import ExperimentConfig, run_config
    inner = dict(cfg.params["inner"])
    bodies = []
    for i in (1, 2):
        sub = ExperimentConfig.from_dict({**inner, "output_dir": os.path.join(cfg.output_dir, f"run{i}")})
        run_config(sub, jobs=1)
        files = sorted(fn for fn in os.listdir(sub.output_dir) if fn.endswith(".csv"))
        bodies.append({fn: open(os.path.join(sub.output_dir, fn), "rb").read() for fn in files})
    same = bodies[0] == bodies[1] and len(bodies[0]) > 0
    tab = Table(["file", "identical"])
    for fn in sorted(bodies[0]):
        tab.add(fn, bodies[0][fn] == bodies[1].get(fn))
    return Outcome({"files": tab}, {"identical": same, "files": sorted(bodies[0])}, same)


# --------------------------------------------------------------- catalog

CATALOG = {
    "free_resolvent_oracle": (free_resolvent_oracle, "free resolvent against radial quadrature of the kernel"),
    "amplitude_free": (amplitude_free, "A = 1 and A_inf = 1 for the free operator"),
    "symmetry_suite": (symmetry_suite, "swap, conjugation and k-reflection symmetries of G and A"),
    "amplitude_r_ladder": (amplitude_r_ladder, "L2(S^2) convergence of A(y + r sigma) to A_inf as r grows"),
    "high_energy_scan": (high_energy_scan, "decay of ||A_inf - 1|| as |k| grows in a sector"),
    "sup_bound_growth": (sup_bound_growth, "growth exponent of sup_r ||A|| as Im k tends to 0"),
    "model_operator_suite": (model_operator_suite, "model operators: integration by parts identity, "
                             "B_r -> B_inf and norm bounds under refinement"),
    "energy_identity": (energy_identity, "energy identity for the amplitude over a spherical shell"),
    "contour_vs_multiplier": (contour_vs_multiplier, "contour-filtered propagator against the exact multiplier"),
    "kirchhoff_radon": (kirchhoff_radon, "large-time Radon transform profile of free waves"),
    "waveop_cauchy": (waveop_cauchy, "Cauchy trend of the time-dependent wave operator and coupling scan"),
    "stationary_free_inversion": (stationary_free_inversion, "stationary wave-operator formula reduces to "
                                  "Fourier inversion for V = 0"),
    "ballistic_projection": (ballistic_projection, "positivity of F(sigma, i d) for nonnegative data"),
    "radial_invariants": (radial_invariants, "half-line reduction: oracles, invariants, growth data"),
    "determinism": (determinism, "identical configs give byte-identical CSV bodies"),
}


def list_experiments() -> list:
    return [{"name": n, "target": d} for n, (_, d) in CATALOG.items()]


def _c(z):
    return [z.real, z.imag]


_OSC = {"family": "oscillating", "gamma": 0.3, "label": "oscillating"}
_RAND = {"family": "random", "epsilon": 0.5, "seed": 7, "box_radius": 5, "label": "random"}

DEFAULTS = {
    "free_resolvent_oracle": {"grid": {"L": 24.0, "N": 64}, "k": [_c(1j), _c(1 + 1j)],
                              "tolerances": {"rel": 1e-6, "margin": 1e-2},
                              "params": {"width": 0.75, "seed": 1, "n_probes": 20}},
    "amplitude_free": {"grid": {"L": 24.0, "N": 64}, "k": [_c(1 + 0.7j), _c(0.5 + 1j)],
                       "r_ladder": [1.0, 3.0, 8.0, 30.0], "tolerances": {"abs": 1e-8},
                       "params": {"n_theta": 12}},
    "symmetry_suite": {"grid": {"L": 24.0, "N": 64}, "potential": _OSC, "k": [_c(1 + 0.7j)],
                       "tolerances": {"rel": 1e-6},
                       "params": {"pairs": [[0, 0, 0], [1.5, 0.375, -0.75], [-0.75, 1.125, 0.375],
                                            [0.75, 0.0, 1.5]],
                                  "operators": ["H", "D"], "d_coupling": 0.5, "radius": 3.0, "n_theta": 8}},
    "amplitude_r_ladder": {"grid": {"L": 24.0, "N": 64}, "k": [_c(1 + 0.7j)],
                           "tolerances": {"ratio": 0.1},
                           "params": {"families": [_OSC, _RAND], "ratio": 1.35, "rungs": 8, "n_theta": 12}},
    "high_energy_scan": {"grid": {"L": 24.0, "N": 64}, "k": [_c(1j), _c(2j), _c(4j), _c(8j)],
                         "tolerances": {"ratio": 0.1}, "params": {"families": [_OSC, _RAND], "n_theta": 12}},
    "sup_bound_growth": {"grid": {"L": 24.0, "N": 64}, "tolerances": {"exponent": 4.3},
                         "params": {"families": [_OSC, _RAND], "re_k": 1.0, "im_k": [0.8, 0.4, 0.2],
                                    "r0": 0.5, "rungs": 12, "n_theta": 12}},
    "model_operator_suite": {"grid": {"L": 24.0, "N": 64}, "k": [_c(1 + 0.7j), _c(0.5 + 0.5j), _c(2 + 0.3j)],
                             "tolerances": {"identity": 1e-6, "refinement": 0.1},
                             "params": {"center": [4.0, 2.5, -1.5], "width": 0.8, "radii": [10.0, 14.0, 30.0],
                                        "n_theta": 12, "rungs": 8,
                                        "audit": {"L": 12.0, "N": [32, 64], "n_theta": 8,
                                                  "k": [[1.0, 0.7], [2.0, 0.3]], "radii": [3.0, 5.0, 8.0],
                                                  "potential": {"family": "oscillating", "gamma": 0.3,
                                                                "truncate": 2.5},
                                                  "center": [0.8, -0.4, 0.3], "width": 0.7}}},
    "energy_identity": {"grid": {"L": 12.0, "N": 128}, "k": [_c(1 + 0.7j), _c(0.5 + 1j)],
                        "tolerances": {"rel": 1e-3},
                        "params": {"families": [_OSC, {"family": "random", "epsilon": 0.5, "seed": 7,
                                                       "box_radius": 3, "label": "random"}],
                                   "annulus": [0.5, 5.0], "n_theta": 16, "n_r": 64}},
    "contour_vs_multiplier": {"grid": {"L": 16.0, "N": 32}, "filter": {"a": 0.8, "b": 3.2, "n": 3, "height": 1.0},
                              "t_ladder": [0.0, 1.0, 5.0],
                              "tolerances": {"rel": 1e-4, "annihilation": 1e-6, "doubling": 1e-6,
                                             "quadrature": 1e-8},
                              "params": {"band": [1.0, 3.0], "out_band": [3.5, 5.0]}},
    "kirchhoff_radon": {"grid": {"L": 48.0, "N": 96}, "t_ladder": [8.0, 16.0], "tolerances": {"ratio": 1.5},
                        "params": {"band": [1.0, 4.0], "direction": [1.0, 2.0, 2.0], "n_probes": 7}},
    "waveop_cauchy": {"grid": {"L": 16.0, "N": 32},
                      "filter": {"a": 0.8, "b": 3.2, "n": 3, "height": 1.0, "nodes_per_panel": 4, "grading": 2},
                      "potential": {"family": "random", "epsilon": 0.5, "seed": 7, "box_radius": 3,
                                    "coupling": 0.25},
                      "t_ladder": [1.0, 2.0, 3.0, 4.0, 5.0], "eps_ladder": [0.05, 0.1, 0.2],
                      "tolerances": {"quadrature": 1e-6, "solve": 1e-8, "slope": 0.3},
                      "params": {"band": [1.0, 3.0], "scan_t": [1.0, 3.0, 5.0],
                                 "scan_potential": {"family": "oscillating", "gamma": 0.3, "truncate": 4.0}}},
    "stationary_free_inversion": {"grid": {"L": 24.0, "N": 48}, "tolerances": {"rel": 1e-3},
                                  "params": {"band": [0.5, 3.5], "n_kappa": 32, "n_theta": 32}},
    "ballistic_projection": {"grid": {"L": 24.0, "N": 64}, "tolerances": {},
                             "params": {"families": [{"family": "zero", "label": "free"},
                                                     {"family": "oscillating", "gamma": 0.3, "coupling": 0.5,
                                                      "label": "oscillating"}],
                                        "center": [0.5, 0.0, 0.0], "radius": 1.5, "operator": "D",
                                        "d": [1.0], "near_real": [[1.0, 0.1]], "n_theta": 12}},
    "radial_invariants": {"tolerances": {"oracle": 1e-8, "invariant": 1e-8, "decomposition_free": 1e-8,
                                         "decomposition": 1e-5, "cross": 1e-8},
                          "params": {"gammas": [0.3, 0.6], "n_max": 4, "energies": [0.5, 1.0, 2.0],
                                     "compare_E": 1.0, "bessel_l": [1, 2], "bessel_E": [2.0],
                                     "decomposition_grid": [16.0, 64], "radial_potential": [0.5, 0.3]}},
    "determinism": {"params": {"inner": {"experiment": "contour_vs_multiplier", "grid": {"L": 16.0, "N": 32},
                                         "filter": {"a": 0.8, "b": 3.2, "n": 3, "height": 1.0},
                                         "t_ladder": [0.0, 1.0],
                                         "params": {"band": [1.0, 3.0], "out_band": [3.5, 5.0]}}}},
}
