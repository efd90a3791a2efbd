"""Run-directory emission and verification from serialized data.

Writers are deterministic: fixed column order, sorted JSON keys and floats
printed with 17 significant digits.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .diagnostics import CertificateEntry, CertificateReport, energy_ledger_certificate
from .two_speed import (JumpResolution, JumpTransient, Measures, Slide, TwoSpeedSolution,
                        build_stretching, certify, detect_parabolic_points, verify_energy_equality)
from .viscous_solver import TRAJ_COLUMNS, ViscousParams, ViscousTrajectory

FILES = ("config.ini", "manifest.json", "trajectory.csv", "slow.csv", "jumps.json",
         "measures.csv", "certificates.json", "summary.json")


class CorruptRun(ValueError):
    """A run directory is missing files or holds unreadable data."""


# ------------------------------------------------------------------ formatting

def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def dumps(obj, indent: int = 2) -> str:
    """JSON with sorted keys; finite floats as .17g, non-finite as null."""
    def enc(o, level):
        pad, inner = " " * (indent * level), " " * (indent * (level + 1))
        if o is None or isinstance(o, (bool, np.bool_)):
            return json.dumps(None if o is None else bool(o))
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return format(float(o), ".17g") if math.isfinite(o) else "null"
        if isinstance(o, str):
            return json.dumps(o, ensure_ascii=False)
        if isinstance(o, np.ndarray):
            return enc(o.tolist(), level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{inner}{json.dumps(str(k))}: {enc(o[k], level + 1)}"
                     for k in sorted(o, key=str)]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            if all(not isinstance(x, (dict, list, tuple, np.ndarray)) for x in o):
                return "[" + ", ".join(enc(x, level + 1) for x in o) + "]"
            return "[\n" + ",\n".join(inner + enc(x, level + 1) for x in o) + "\n" + pad + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")
    return enc(obj, 0) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def read_csv(path) -> tuple[list, list]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as e:
        raise CorruptRun(f"{Path(path).name}: {e}") from None
    if not rows:
        raise CorruptRun(f"{Path(path).name}: empty file")
    header, body = rows[0], rows[1:]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise CorruptRun(f"{Path(path).name}: row {i + 2} has {len(r)} fields, expected {len(header)}")
    return header, body


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptRun(f"{Path(path).name}: {e}") from None


def _floats(path, rows, cols) -> np.ndarray:
    try:
        return np.array([[float(r[c]) for c in cols] for r in rows], dtype=float).reshape(len(rows), len(cols))
    except ValueError as e:
        raise CorruptRun(f"{Path(path).name}: {e}") from None


# ------------------------------------------------------------------ SVG

def write_svg(path, series: dict, *, title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 640, height: int = 400):
    """Minimal SVG 1.1 line plot of named (x, y) series."""
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
    pts = [(np.asarray(x, float), np.asarray(y, float)) for x, y in series.values()]
    allx = np.concatenate([x for x, _ in pts]) if pts else np.zeros(1)
    ally = np.concatenate([y for _, y in pts]) if pts else np.zeros(1)
    ok = np.isfinite(allx) & np.isfinite(ally)
    allx, ally = (allx[ok], ally[ok]) if ok.any() else (np.zeros(1), np.zeros(1))
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def X(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def Y(y):
        return mt + (1.0 - (y - y0) / (y1 - y0)) * ph

    def esc(s):
        return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{ml + pw / 2:.2f}" y="24" text-anchor="middle" font-size="14">{esc(title)}</text>',
           f'<text x="{ml + pw / 2:.2f}" y="{height - 10}" text-anchor="middle" font-size="12">{esc(xlabel)}</text>',
           f'<text x="16" y="{mt + ph / 2:.2f}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 16 {mt + ph / 2:.2f})">{esc(ylabel)}</text>']
    for k in range(5):
        xv = x0 + k * (x1 - x0) / 4
        yv = y0 + k * (y1 - y0) / 4
        out.append(f'<text x="{X(xv):.2f}" y="{mt + ph + 16}" text-anchor="middle" font-size="10">{xv:.4g}</text>')
        out.append(f'<text x="{ml - 6}" y="{Y(yv) + 3:.2f}" text-anchor="end" font-size="10">{yv:.4g}</text>')
    for i, (name, (x, y)) in enumerate(zip(series, pts)):
        c = colors[i % len(colors)]
        good = np.isfinite(x) & np.isfinite(y)
        coords = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(x[good], y[good]))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{coords}"/>')
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly + 4}" font-size="11">{esc(str(name))}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def _thin(n: int, cap: int = 2000) -> np.ndarray:
    return np.unique(np.linspace(0, n - 1, min(n, cap)).astype(int))


def _probe(states) -> np.ndarray:
    """Scalar series for plots: component 0 at the middle node."""
    s = np.asarray(states)
    return s[:, s.shape[1] // 2, 0]


# ------------------------------------------------------------------ writing

def _traj_rows(r: ViscousTrajectory):
    for k, t in enumerate(r.times):
        led = (0.0, 0.0, 0.0) if k == 0 else (r.ri[k - 1], r.rd[k - 1], r.force_work[k - 1])
        yield ([t] + list(r.states[k].ravel()) + [r.energies[k], *led, int(r.newton_iters[k]),
                                                   r.residuals[k]])


def _state_header(grid, prefix="u"):
    n, m = grid.shape
    return [f"{prefix}_{i}_{j}" for i in range(n) for j in range(m)]


def write_run(sol: TwoSpeedSolution, rc: RunConfig, out) -> dict:
    """Write every artifact of a solved run; returns the summary."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    p, g = sol.problem, sol.problem.grid
    formats = set(rc.formats)
    (out / "config.ini").write_text(rc.to_ini(), encoding="utf-8")

    header = ["t"] + _state_header(g) + list(TRAJ_COLUMNS)
    runs = []
    for r in sol.runs:
        name = "trajectory.csv" if r is sol.runs[-1] else f"trajectory_lam={fmt(r.lam)}.csv"
        write_csv(out / name, header, _traj_rows(r))
        runs.append({"lam": r.lam, "tau": r.params.tau, "delta": r.params.delta,
                     "balance_tol": r.balance_tol, "file": name, "rows": len(r.times)})

    slow_rows = []
    for k in range(len(sol.s)):
        if k == 0:
            row = [sol.s[0], sol.t[0], "start", sol.energies[0], 0.0, 0.0, 0.0]
        else:
            row = [sol.s[k], sol.t[k], sol.kinds[k - 1], sol.energies[k], sol.int_ri[k - 1],
                   sol.int_rd[k - 1], sol.int_load_work[k - 1]]
        slow_rows.append(row + list(sol.states[k].ravel()))
    write_csv(out / "slow.csv", ["s", "t", "kind", "energy", "ri", "rd", "load_work"] + _state_header(g),
              slow_rows)

    jumps = [j.to_dict(g, p.dissipation) for j in sol.jumps]
    for j, d in zip(sol.jumps, jumps):
        d["segments"] = [{"kind": x.kind, "index": i} for i, x in enumerate(j.segments)]
    write_json(out / "jumps.json", {"jumps": jumps, "atoms": sol.measures.atoms,
                                    "jump_set_s": sol.jump_set, "jump_times": sol.jump_times})

    m = sol.measures
    mrows = [["ac", a, b, ri, rd] for a, b, ri, rd in zip(m.ac_t0, m.ac_t1, m.ac_ri, m.ac_rd)]
    mrows += [["atom", a["t_k"], a["t_k"], a["mu_ri"], a["mu_rd"]] for a in m.atoms]
    # slow-time coordinates of each AC interval and atom
    s_of = _slow_coordinates(sol)
    mrows = [[r[0], s0, s1] + r[1:] for r, (s0, s1) in zip(mrows, s_of)]
    write_csv(out / "measures.csv", ["kind", "s0", "s1", "t0", "t1", "mu_ri", "mu_rd"], mrows)

    write_json(out / "certificates.json", sol.certificates.to_dict())
    summary = sol.summary()
    summary.update(_extra_summary(sol))
    write_json(out / "summary.json", summary)
    write_json(out / "manifest.json", {"runs": runs, "files": list(FILES),
                                       "grid": {"dim": g.dim, "n_nodes": g.n_nodes, "m": g.m},
                                       "formats": sorted(formats)})
    _write_plots(sol, out / "plots", svg="svg" in formats)
    return summary


def _slow_coordinates(sol) -> list:
    kinds = list(sol.kinds)
    out = [(sol.s[k], sol.s[k + 1]) for k, kind in enumerate(kinds) if kind in ("slow", "hold")]
    out += [(j.s_k, j.s_k) for j in sol.jumps]
    return out


def _extra_summary(sol) -> dict:
    m = sol.measures
    out = {"final_state": sol.states[-1].ravel().tolist(), "ac_ri_total": float(np.sum(m.ac_ri)),
           "certificate_failures": [e.name for e in sol.certificates.failures]}
    if sol.jumps:
        main = max(sol.jumps, key=lambda j: j.energy_gap)
        prev = [j.t_k for j in sol.jumps if j.t_k < main.t_k]
        start = max(prev) if prev else 0.0
        out["ac_ri_before_jump"] = m.ac_ri_mass(start, main.t_k)
    return out


def _write_plots(sol, d: Path, svg: bool):
    d.mkdir(parents=True, exist_ok=True)
    p = sol.problem
    rows, series = [], {}
    for r in sol.runs:
        idx = _thin(len(r.times))
        y = _probe(r.states)[idx]
        rows += [[f"lam={fmt(r.lam)}", t, v] for t, v in zip(r.times[idx], y)]
        series[f"lambda={r.lam:g}"] = (r.times[idx], y)
    y = _probe(sol.states)
    rows += [["two_speed", t, v] for t, v in zip(sol.t, y)]
    series["two-speed"] = (sol.t, y)
    write_csv(d / "u_vs_t.csv", ["series", "t", "u"], rows)
    if svg:
        write_svg(d / "u_vs_t.svg", series, title="state against original time", xlabel="t", ylabel="u")

    write_csv(d / "u_vs_s.csv", ["s", "t", "u"], [[a, b, c] for a, b, c in zip(sol.s, sol.t, y)])
    if svg:
        write_svg(d / "u_vs_s.svg", {"u(s)": (sol.s, y), "t(s)": (sol.s, sol.t)},
                  title="slow time parametrization", xlabel="s", ylabel="value")

    if p.grid.dim == 0 and p.grid.m == 1:
        lo = float(np.min(sol.states)) - 1.0
        hi = float(np.max(sol.states)) + 1.0
        z = np.linspace(lo, hi, 401)
        times = sorted({0.0, *sol.jump_times, float(sol.t[-1])})
        rows, series = [], {}
        for t in times:
            f = float(np.asarray(p.loading.value(t)).ravel()[0])
            w = p.density.value(z[:, None]) - f * z
            rows += [[t, a, b] for a, b in zip(z, w)]
            series[f"t={t:.4g}"] = (z, w)
        write_csv(d / "effective_potential.csv", ["t", "z", "W0_minus_fz"], rows)
        if svg:
            write_svg(d / "effective_potential.svg", series, title="effective potential W0(z) - f(t) z",
                      xlabel="z", ylabel="energy")

    rows, series = [], {}
    for a, j in enumerate(sol.jumps):
        for b, x in enumerate(j.transients):
            idx = _thin(len(x.theta_grid))
            flat = x.states.reshape(len(x.states), -1)[idx]
            for c in range(flat.shape[1]):
                rows += [[a, b, c, th, v] for th, v in zip(x.theta_grid[idx], flat[:, c])]
            if flat.shape[1] <= 4:
                for c in range(flat.shape[1]):
                    series[f"jump {a} transient {b} comp {c}"] = (x.theta_grid[idx], flat[:, c])
            else:
                series[f"jump {a} transient {b} mid node"] = (x.theta_grid[idx], _probe(x.states[idx]))
    write_csv(d / "transients.csv", ["jump", "transient", "component", "theta", "value"], rows)
    if svg and series:
        write_svg(d / "transients.svg", series, title="fast transients", xlabel="theta", ylabel="v")


# ------------------------------------------------------------------ verification

def _load_trajectory(path, problem, info) -> ViscousTrajectory:
    header, body = read_csv(path)
    n, m = problem.grid.shape
    if len(header) != 1 + n * m + len(TRAJ_COLUMNS) or header[0] != "t":
        raise CorruptRun(f"{Path(path).name}: header does not match the grid")
    if len(body) != int(info["rows"]):
        raise CorruptRun(f"{Path(path).name}: {len(body)} rows, manifest lists {info['rows']}")
    data = _floats(path, body, range(len(header)))
    times = data[:, 0]
    states = data[:, 1:1 + n * m].reshape(-1, n, m)
    cols = {c: data[:, 1 + n * m + i] for i, c in enumerate(TRAJ_COLUMNS)}
    if len(times) < 2 or abs(times[-1] - problem.horizon) > 1e-9 * max(1.0, problem.horizon):
        raise CorruptRun(f"{Path(path).name}: trajectory does not reach the horizon")
    lw = np.array([problem.energy.load_work(a, b, u, v) for a, b, u, v in
                   zip(times[:-1], times[1:], states[:-1], states[1:])])
    params = ViscousParams(lam=float(info["lam"]), tau=float(info["tau"]), delta=float(info["delta"]),
                           balance_tol=float(info["balance_tol"]))
    return ViscousTrajectory(params=params, problem=problem, times=times, states=states,
                             energies=cols["energy"], ri=cols["ri_increment"][1:],
                             rd=cols["rd_increment"][1:], force_work=cols["force_work"][1:],
                             load_work=lw, newton_iters=cols["newton_iters"].astype(int),
                             residuals=cols["residual"])


def _arr(d, key, path):
    try:
        return np.asarray(d[key], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptRun(f"{path}: bad field {key!r} ({e})") from None


def _rebuild_jumps(data, problem) -> list:
    shape = problem.grid.shape
    out = []
    try:
        for jd in data["jumps"]:
            tr = iter(jd["transients"])
            sl = iter(jd["slides"])
            segs = []
            for kind in jd["order"]:
                if kind == "transient":
                    x = next(tr)
                    segs.append(JumpTransient(
                        t_k=float(x["t_k"]), anchor_slow_time=float(x["s_k"]),
                        anchor_fast_offset=float(x["theta_offset"]),
                        theta_grid=_arr(x, "theta", "jumps.json"),
                        states=_arr(x, "states", "jumps.json").reshape((-1,) + shape),
                        energies=_arr(x, "energies", "jumps.json"),
                        ri_steps=np.array([float(x["d_ri"])]), rd_steps=np.array([float(x["d_rd"])]),
                        end_reason=str(x["end_reason"]), end_speed=float(x["end_speed"]),
                        end_slack=float(x["end_slack"])))
                else:
                    x = next(sl)
                    segs.append(Slide(
                        t_k=float(x["t_k"]), anchor_slow_time=float(x["s_start"]),
                        states=_arr(x, "states", "jumps.json").reshape((-1,) + shape),
                        energies=_arr(x, "energies", "jumps.json"),
                        increments=np.array([float(x["var"])]), tilt=float(x["tilt"]),
                        tilt_work=float(x["tilt_work"]), end_reason=str(x["end_reason"])))
            entry = np.asarray(jd["entry_state"], dtype=float).reshape(shape)
            out.append(JumpResolution(t_k=float(jd["t_k"]), s_k=float(jd["s_k"]), entry_state=entry,
                                      entry_energy=float(jd["entry_energy"]), segments=segs))
    except (KeyError, TypeError, ValueError, StopIteration) as e:
        raise CorruptRun(f"jumps.json: malformed ({e!r})") from None
    return out


def load_solution(run_dir) -> tuple[TwoSpeedSolution, RunConfig, dict]:
    """Rebuild a solution from serialized files only (trajectories are not recomputed)."""
    d = Path(run_dir)
    missing = [f for f in FILES if not (d / f).is_file()]
    if missing:
        raise CorruptRun(f"missing files: {', '.join(missing)}")
    try:
        rc = load_config((d / "config.ini").read_text(encoding="utf-8"), env={})
    except (OSError, UnicodeDecodeError) as e:
        raise CorruptRun(f"config.ini: {e}") from None
    except ValueError as e:
        raise CorruptRun(f"config.ini: {e}") from None
    problem = rc.build_problem()
    manifest = read_json(d / "manifest.json")
    try:
        runs = [_load_trajectory(d / info["file"], problem, info) for info in manifest["runs"]]
    except (KeyError, TypeError) as e:
        raise CorruptRun(f"manifest.json: malformed ({e!r})") from None
    runs.sort(key=lambda r: -r.lam)

    header, body = read_csv(d / "slow.csv")
    n, m = problem.grid.shape
    if header[:7] != ["s", "t", "kind", "energy", "ri", "rd", "load_work"] or len(header) != 7 + n * m:
        raise CorruptRun("slow.csv: header does not match the grid")
    if not body:
        raise CorruptRun("slow.csv: no rows")
    num = _floats(d / "slow.csv", body, [0, 1, 3, 4, 5, 6] + list(range(7, 7 + n * m)))
    s, t, E = num[:, 0], num[:, 1], num[:, 2]
    kinds = [r[2] for r in body[1:]]
    states = num[:, 6:].reshape(-1, n, m)
    if abs(t[-1] - problem.horizon) > 1e-9 * max(1.0, problem.horizon):
        raise CorruptRun("slow.csv: slow motion does not reach the horizon")

    jdata = read_json(d / "jumps.json")
    jumps = _rebuild_jumps(jdata, problem)

    mh, mb = read_csv(d / "measures.csv")
    if mh != ["kind", "s0", "s1", "t0", "t1", "mu_ri", "mu_rd"]:
        raise CorruptRun("measures.csv: unexpected header")
    mnum = _floats(d / "measures.csv", mb, range(1, 7))
    ac = np.array([r[0] == "ac" for r in mb], dtype=bool)
    atoms = [{"t_k": float(a[2]), "mu_ri": float(a[4]), "mu_rd": float(a[5])} for a in mnum[~ac]]
    measures = Measures(atoms, mnum[ac, 2], mnum[ac, 3], mnum[ac, 4], mnum[ac, 5])

    cert_t, cert_sl = [], []
    for k, kind in enumerate(kinds):
        if kind == "slow":
            tm = 0.5 * (t[k] + t[k + 1])
            cert_t.append(tm)
            cert_sl.append(problem.slack(tm, 0.5 * (states[k] + states[k + 1])))
    node_sl = np.array([problem.slack(a, u) for a, u in zip(t, states)])

    cfg = rc.two_speed
    windows, stretchings = {}, {}
    for r in runs:
        ws = detect_parabolic_points(r, cfg.m_max, cfg.window, cfg.window_merge)
        windows[r.lam] = ws
        stretchings[r.lam] = build_stretching(r, ws)
    sol = TwoSpeedSolution(problem=problem, config=cfg, s=s, t=t, states=states, energies=E,
                           kinds=kinds, int_ri=num[1:, 3], int_rd=num[1:, 4], int_load_work=num[1:, 5],
                           jumps=jumps, measures=measures, cert_times=np.asarray(cert_t),
                           cert_slack=np.asarray(cert_sl), node_slack=node_sl, runs=runs,
                           windows=windows, stretchings=stretchings)
    return sol, rc, {"summary": read_json(d / "summary.json"), "jumps": jdata,
                     "certificates": read_json(d / "certificates.json")}


def verify_solution(sol: TwoSpeedSolution, stored: dict) -> CertificateReport:
    """All solution certificates plus consistency of the stored derived data."""
    p = sol.problem
    rep = certify(sol)
    rep.add(energy_ledger_certificate(sol.t, sol.states, sol.energies, p, name="energy_ledger[slow]"))
    lw = [p.energy.load_work(a, b, u, v) for a, b, u, v in
          zip(sol.t[:-1], sol.t[1:], sol.states[:-1], sol.states[1:])]
    err = float(np.max(np.abs(np.asarray(lw) - sol.int_load_work), initial=0.0))
    rep.add(CertificateEntry("load_work[slow]", (sol.s[0], sol.s[-1]), err, 0.0, 1e-9))
    for j in sol.jumps:
        fp = p.frozen(j.t_k)
        for x in j.segments:
            seg_t = np.full(len(x.states), j.t_k)
            rep.add(energy_ledger_certificate(seg_t, x.states, x.energies, fp,
                                              name=f"energy_ledger[{x.kind} t={j.t_k:.6g}]"))
        rep.add(energy_ledger_certificate([j.t_k], [j.entry_state], [j.entry_energy], fp,
                                          name=f"energy_ledger[entry t={j.t_k:.6g}]"))
    # RI/RD totals of the measures agree with the slow ledger and the jump atoms
    kinds = np.array(sol.kinds)
    cont = (kinds == "slow") | (kinds == "hold")
    want_ri = float(np.sum(sol.int_ri[cont])) + sum(j.mu_ri for j in sol.jumps)
    want_rd = float(np.sum(sol.int_rd[cont])) + sum(j.mu_rd for j in sol.jumps)
    m = sol.measures
    scale = 1.0 + abs(want_ri) + abs(want_rd)
    rep.add(CertificateEntry("measures_consistency", (sol.s[0], sol.s[-1]),
                             abs(m.total_ri - want_ri) + abs(m.total_rd - want_rd), 0.0, 1e-9 * scale))
    summ = stored["summary"]
    fresh = sol.summary()
    worst = 0.0
    for key in ("S0", "mu_ri_total", "mu_rd_total", "n_jumps", "mu_ri", "mu_rd", "energy_gap"):
        if key in fresh:
            try:
                a, b = float(summ[key]), float(fresh[key])
            except (KeyError, TypeError, ValueError):
                worst = np.inf
                continue
            worst = max(worst, abs(a - b) / (1.0 + abs(b)))
    res = verify_energy_equality(sol)
    try:
        worst = max(worst, abs(float(summ["energy_residual"]) - res))
    except (KeyError, TypeError, ValueError):
        worst = np.inf
    rep.add(CertificateEntry("summary_consistency", (sol.s[0], sol.s[-1]), worst, 0.0, 1e-9))
    return rep


def verify_directory(run_dir) -> CertificateReport:
    sol, _, stored = load_solution(run_dir)
    return verify_solution(sol, stored)
