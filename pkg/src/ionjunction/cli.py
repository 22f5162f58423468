"""Command-line driver: config -> bases (cached) -> tables, manifest and optional figures.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure,
4 a result failed one of its validation checks.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import threading
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import doublewell as dw
from . import output, radial, scales, sequence, spinchannels, twomode
from .cache import BasisCache, BasisSpec, default_cache_dir
from .config import ConfigError, default_config_text, load_config

logger = logging.getLogger("ionjunction")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4
NUMERIC_ERRORS = (radial.RadialError, dw.DoubleWellError, sequence.SequenceError, np.linalg.LinAlgError)


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# shared run state


class Run:
    """Resolved configuration plus the basis provider shared by all commands."""

    def __init__(self, cfg, out: Path, fmt: str, threads: int, figures: bool, cache: BasisCache,
                 command: str):
        self.cfg = cfg
        self.out = out
        self.fmt = fmt
        self.threads = threads
        self.figures = figures
        self.cache = cache
        sp = cfg["species"]
        self.scales = scales.derive_scales(sp["atom_mass_u"] * scales.AMU, sp["ion_mass_u"] * scales.AMU,
                                           scales.c4_au_to_si(sp["c4_au"]))
        self.A = self.scales.mass_ratio
        tr = cfg["trap"]
        if tr["omega_hz"] is not None:
            self.alpha = self.scales.alpha_from_omega(2 * math.pi * tr["omega_hz"])
        else:
            self.alpha = tr["alpha"]
        self.manifest = output.Manifest(command, cfg.hash())
        self._memo: dict[str, tuple] = {}
        self._lock = threading.Lock()

    # physical inputs
    def branches(self) -> dict[str, float | None]:
        if self.cfg["trap"]["no_ion"]:
            return {"none": None}
        ph = self.cfg["phases"]
        out = {}
        for label in ("up", "down"):
            a = ph[f"a_ia_{label}"]
            out[label] = scales.phase_from_scattering_length(a) if a is not None else scales.wrap_phase(ph[f"phi_{label}"])
        return out

    @property
    def a_aa_rstar(self) -> float:
        return self.cfg["scattering"]["a_aa_bohr"] * scales.BOHR / self.scales.R_star

    def hz(self, x):
        return self.scales.frequency_from_dimensionless(x)

    def spec(self, phi, K=None, E_min=None) -> BasisSpec:
        b = self.cfg["basis"]
        return BasisSpec(self.alpha, phi, self.A, b["l_max"], K or b["K"], E_min or b["E_min"],
                         b["points_per_wavelength"])

    def provider(self, phi, K=None, E_min=None):
        spec = self.spec(phi, K, E_min)
        if spec.key not in self._memo:
            t = time.time()
            basis = self.cache.get(spec, workers=self.threads)
            moments = dw.moment_matrices(basis)
            hit = next(e["hit"] for e in reversed(self.cache.events) if e["key"] == spec.key)
            with self._lock:
                self.manifest.basis.append({"key": spec.key, "phi": phi, "K": spec.K, "E_min": spec.E_min,
                                            "cache_hit": hit, "seconds": round(time.time() - t, 3),
                                            "n_bound": int(np.count_nonzero(basis.energies < 0)),
                                            "quad_error": moments.quad_error})
                self._memo[spec.key] = (basis, moments)
        return self._memo[spec.key]

    # output
    def metadata(self, **extra) -> dict:
        d = {"code_version": __version__, "command": self.manifest.command,
             "config_hash": self.cfg.hash(), "alpha": self.alpha,
             "R_star_m": self.scales.R_star, "E_star_over_h_hz": self.hz(1.0),
             "mass_ratio": self.A}
        d.update(extra)
        return d

    def table(self, name: str, columns, rows, **meta) -> Path:
        p = output.write_table(self.out / name, columns, rows, self.metadata(**meta), self.fmt)
        self.manifest.add(p)
        return p

    def json(self, name: str, obj) -> Path:
        p = output.write_json(self.out / name, obj)
        self.manifest.add(p)
        return p

    def figure(self, fn, *args, name: str, **kw):
        if not self.figures:
            return
        from . import plotting

        p = getattr(plotting, fn)(*args, self.out / name, **kw)
        self.manifest.add(p)


# --------------------------------------------------------------------------
# commands


def cmd_spectrum(run: Run) -> None:
    tr = run.cfg["trap"]
    if tr["q_points"] < 1 or tr["q_min"] > tr["q_max"]:
        raise UsageError("empty q range")
    qs = np.linspace(tr["q_min"], tr["q_max"], tr["q_points"])
    plots = {}
    for label, phi in run.branches().items():
        basis, moments = run.provider(phi)
        sweep = dw.spectrum_sweep(basis, moments, qs, n_levels=tr["levels"])
        rows, drows = [], []
        for q, E, P, res in sweep:
            if isinstance(res, Exception):
                run.manifest.failures.append({"branch": label, "q": q, "error": str(res)})
                continue
            rows += [[q, i, float(e), int(p)] for i, (e, p) in enumerate(zip(E, P))]
            drows.append([q, res.J, float(run.hz(res.J)), res.gap_ratio, res.ground_parity, len(res.flags)])
        run.table(f"spectrum_{label}", ["q_rstar", "level_index", "energy_estar", "parity"], rows,
                  branch=label, phi=phi, basis=basis.content_hash())
        run.table(f"doublet_{label}", ["q_rstar", "J_dimensionless", "J_hz", "gap_ratio", "ground_parity",
                                       "n_flags"], drows, branch=label, phi=phi, basis=basis.content_hash())
        plots[label] = ([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows])
    run.manifest.check("sweep_points", not run.manifest.failures, failed=len(run.manifest.failures))
    run.figure("spectrum", plots, name="spectrum")


def _scan_phases(ph) -> list[float]:
    extra = list(ph["scan"] or [])
    n = ph["scan_points"]
    extra += [-math.pi / 2 + math.pi * (k + 1) / n for k in range(n)]
    return [scales.wrap_phase(p) for p in extra]


def cmd_coupling(run: Run) -> None:
    q = run.cfg["trap"]["q"]
    named = run.branches()
    scan = [] if run.cfg["trap"]["no_ion"] else _scan_phases(run.cfg["phases"])
    phis = list(named.values())
    for p in scan:
        if all(x is None or abs(p - x) > 1e-9 for x in phis):
            phis.append(p)
    t = time.time()
    rows = dw.coupling_vs_phase(q, phis, run.provider, run.a_aa_rstar, workers=run.threads)
    run.manifest.timings["coupling"] = round(time.time() - t, 3)
    by_phi = {r.phi: r for r in rows}
    table = sorted(rows, key=lambda r: -math.inf if r.phi is None else r.phi)
    run.table("coupling", ["phi_rad", "a_ia_rstar", "J_dimensionless", "J_hz", "U_hz", "epsilon", "gap_ratio"],
              [[math.nan if r.phi is None else r.phi, r.a_ia, r.J, float(run.hz(r.J)),
                math.nan if r.U is None else float(run.hz(r.U)), r.epsilon, r.gap_ratio] for r in table],
              q=q, a_aa_rstar=run.a_aa_rstar)
    summary = {"q": q, "alpha": run.alpha, "a_aa_rstar": run.a_aa_rstar, "branches": {}}
    for label, phi in named.items():
        basis, moments = run.provider(phi)
        res = dw.solve_at(basis, moments, q, a_aa_rstar=run.a_aa_rstar)
        entry = {"phi": phi, "J": res.J, "J_hz": float(run.hz(res.J)), "U_hz": float(run.hz(res.U)),
                 "U_cross_hz": float(run.hz(res.U_cross)), "epsilon": res.epsilon,
                 "gap_ratio": res.gap_ratio, "ground_parity": res.ground_parity, "flags": res.flags,
                 "basis": basis.content_hash()}
        if run.cfg["basis"]["convergence_check"]:
            K2 = int(round(1.25 * run.cfg["basis"]["K"]))
            b2, m2 = run.provider(phi, K=K2)
            J2 = dw.solve_at(b2, m2, q).J
            entry["J_K125"] = J2
            entry["K_convergence_delta"] = abs(J2 - res.J) / res.J
            run.manifest.check(f"basis_convergence_{label}", entry["K_convergence_delta"] < 0.02,
                               delta=entry["K_convergence_delta"])
        summary["branches"][label] = entry
    if set(named) == {"up", "down"}:
        u, d = summary["branches"]["up"], summary["branches"]["down"]
        summary["spin_coupling_hz"] = {"J_up": u["J_hz"], "J_down": d["J_hz"], "U_up": u["U_hz"],
                                       "U_down": d["U_hz"]}
        summary["rabi_period_ratio_up_over_down"] = d["J_hz"] / u["J_hz"]
    run.json("coupling_summary.json", summary)
    run.figure("coupling", [r.phi for r in table if r.phi is not None],
               [float(run.hz(r.J)) for r in table if r.phi is not None], name="coupling",
               marks={k: (by_phi[p].phi, float(run.hz(by_phi[p].J))) for k, p in named.items() if p is not None})


def cmd_sequence(run: Run) -> None:
    sq = run.cfg["sequence"]
    br = run.branches()
    if set(br) != {"up", "down"}:
        raise UsageError("the sequence needs both ion states (no_ion must be false)")
    ctx = {}
    for label, phi in br.items():
        basis, moments = run.provider(phi)
        ctx[label] = sequence.build_context(basis, moments, sq["q_far"], sq["q_near"], M=sq["subspace"])
    kw = {"n_samples": sq["samples"], "max_phase_step": sq["max_phase_step"]}
    t = time.time()
    if sq["auto_tune"]:
        rep = sequence.auto_tune(ctx["up"], ctx["down"], min_ramp=sq["min_ramp"],
                                 target=max(sq["target"], 0.99), **kw)
    else:
        sched = sequence.make_schedule(sq["q_far"], sq["q_near"], sq["ramp_time"], sq["hold_time"])
        rep = sequence.entangle_report(ctx["up"], ctx["down"], sched, **kw)
    run.manifest.timings["propagation"] = round(time.time() - t, 3)
    sched_meta = rep.schedule.describe()
    plots = {}
    for b in (rep.up, rep.down):
        tr = b.trajectory
        tt = tr.column("t")
        rows = [[s.t, float(run.scales.time_to_ms(s.t)), s.q, s.P_L, s.P_R, s.norm, s.doublet_overlap]
                for s in tr.samples]
        run.table(f"trajectory_{b.label}", ["t_hbar_over_estar", "t_ms", "q_rstar", "P_L", "P_R", "norm",
                                            "doublet_overlap"], rows,
                  branch=b.label, phi=b.phi, schedule=sched_meta, dt=tr.dt)
        plots[b.label] = {"t_ms": run.scales.time_to_ms(tt), "q": tr.column("q"), "P_R": tr.column("P_R")}
        n_snap = sq["snapshots"]
        if n_snap:
            basis = ctx[b.label].basis
            z = np.linspace(-2.5 * sq["q_far"], 2.5 * sq["q_far"], 201)
            pick = np.unique(np.linspace(0, len(tr.samples) - 1, n_snap).round().astype(int))
            drows, dens, times = [], [], []
            for i in pick:
                s = tr.samples[i]
                d = dw.z_density(basis, s.coefficients, z)
                tm = float(run.scales.time_to_ms(s.t))
                drows += [[tm, float(zz), float(v)] for zz, v in zip(z, d)]
                dens.append(d)
                times.append(tm)
            run.table(f"density_{b.label}", ["t_ms", "z_rstar", "density"], drows, branch=b.label)
            run.figure("density_snapshots", z, times, dens, name=f"density_{b.label}", label=b.label)
        run.manifest.check(f"target_{b.label}", b.target_population >= sq["target"],
                           population=b.target_population, target=sq["target"])
        run.manifest.check(f"norm_{b.label}", tr.norm_drift < 1e-8, drift=tr.norm_drift)
    summ = rep.summary()
    summ["total_ms"] = float(run.scales.time_to_ms(rep.schedule.duration))
    run.json("sequence_summary.json", summ)
    run.figure("sequence", plots, name="sequence")


def _twomode_params(run: Run) -> dict[str, tuple[float, float]]:
    tm = run.cfg["twomode"]
    src = tm["from_coupling"]
    if src:
        import json

        d = json.loads(Path(src).read_text())["spin_coupling_hz"]
        return {"up": (d["J_up"], d["U_up"]), "down": (d["J_down"], d["U_down"])}
    return {"up": (tm["J_up_hz"], tm["U_up_hz"]), "down": (tm["J_down_hz"], tm["U_down_hz"])}


def cmd_twomode(run: Run) -> None:
    tm = run.cfg["twomode"]
    pars = _twomode_params(run)
    t_ms = np.arange(0.0, tm["t_max_ms"] + 0.5 * tm["dt_ms"], tm["dt_ms"])
    classes = {}
    for N in tm["N"]:
        rows, curves = [], {}
        classes[str(N)] = {}
        for label, (J_hz, U_hz) in pars.items():
            # frequencies in rad/ms so that t is in ms
            p = twomode.TwoModeParams(N, 2 * math.pi * J_hz * 1e-3, 2 * math.pi * U_hz * 1e-3, label)
            tr = twomode.evolve(twomode.fock_state(N, N), p, t_ms)
            rows += [[float(t), float(pl), float(1 - pl), float(z), label]
                     for t, pl, z in zip(t_ms, tr.p_left, tr.imbalance)]
            c = twomode.classify(p, tm["rabi_below"], tm["fock_above"])
            classes[str(N)][label] = {"lambda": c.lam, "self_trapped": c.self_trapped, "regime": c.regime,
                                      "t_rabi_ms": twomode.rabi_period(p.J), "J_hz": J_hz, "U_hz": U_hz,
                                      "min_p_left": float(tr.p_left.min()),
                                      "oscillation_period_ms": twomode.oscillation_period(t_ms, tr.p_left)}
            curves[f"{label} N={N}"] = (t_ms, tr.p_left)
            run.manifest.check(f"norm_N{N}_{label}", np.abs(tr.norm - 1).max() < 1e-10)
        run.table(f"twomode_N{N}", ["t_ms", "p_left", "p_right", "imbalance", "spin_label"], rows,
                  N=N, params_hz={k: {"J": v[0], "U": v[1]} for k, v in pars.items()})
        run.figure("twomode", curves, name=f"twomode_N{N}")
    classes["rabi_period_ratio_up_over_down"] = pars["down"][0] / pars["up"][0]
    run.json("twomode_classification.json", classes)


def cmd_channels(run: Run) -> None:
    sp = run.cfg["species"]
    ion = spinchannels.SpeciesSpins.of(sp["ion_nuclear_spin"], sp["ion_electron_spin"])
    atom = spinchannels.SpeciesSpins.of(sp["atom_nuclear_spin"], sp["atom_electron_spin"])
    rows, mixing = [], {}
    lines = []
    for st in run.cfg["channels"]["states"]:
        try:
            state = spinchannels.HyperfineState.of(*st)
            amps = spinchannels.frame_transform(state, ion, atom)
        except spinchannels.SpinError as exc:
            raise UsageError(str(exc)) from None
        lab = state.label()
        lines.append(f"{lab}  (F_i m_Fi F_a m_Fa)")
        for a in amps:
            rows.append([lab, a.F, a.M_F, a.I, a.S, a.amplitude, a.probability])
            lines.append(f"   F={a.F:g} M_F={a.M_F:g} I={a.I:g} S={a.S:g}   {str(a.exact):>14}   {a.probability:.6f}")
        norm = spinchannels.norm_squared(amps)
        run.manifest.check(f"norm_{lab}", norm == 1, norm=str(norm))
        mixing[lab] = [s.label() for s in spinchannels.mf_conservation_check(state, ion, atom)]
    run.table("channels", ["state", "F", "M_F", "I", "S", "amplitude", "amplitude_squared"], rows)
    run.json("channels_mixing.json", mixing)
    print("\n".join(lines))


def cmd_cache(run: Run) -> None:
    for label, phi in run.branches().items():
        run.provider(phi)
        e = run.manifest.basis[-1]
        print(f"{label:5s} phi={phi!s:>22} key={e['key']} {'hit' if e['cache_hit'] else 'built'}"
              f" ({e['seconds']} s)")


COMMANDS = {"spectrum": cmd_spectrum, "coupling": cmd_coupling, "sequence": cmd_sequence,
            "twomode": cmd_twomode, "channels": cmd_channels, "cache": cmd_cache}


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", help="INI configuration file")
    g.add_argument("--out", metavar="DIR", help="output directory (overrides [output] directory)")
    g.add_argument("--threads", type=int, metavar="N", help="worker threads")
    g.add_argument("--format", choices=("csv", "json"), help="table format")
    g.add_argument("--seed", type=int, help="reserved; every computation is deterministic")
    g.add_argument("--set", action="append", default=None, metavar="SECTION.KEY=VALUE",
                   help="override a config key (repeatable)")
    g.add_argument("--figures", action="store_true", default=None, help="also render PNG figures")
    g.add_argument("--no-cache", action="store_true", default=None, help="do not read or write the basis cache")
    g.add_argument("-v", "--verbose", action="count", default=None)
    p = argparse.ArgumentParser(prog="ionjunction", parents=[common],
                                description="Ion-controlled bosonic Josephson junction: spectra, couplings, "
                                            "entangling sequence, two-mode dynamics, spin channels.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--emit-default-config", action="store_true", help="print the default config and exit")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    helps = {"spectrum": "low-lying levels along a q sweep", "coupling": "J, U and leakage versus phase",
             "sequence": "approach-hold-retreat propagation for both ion states",
             "twomode": "Bose-Hubbard population dynamics", "channels": "spin-channel decompositions",
             "cache": "build or look up the radial bases"}
    for name, h in helps.items():
        sp = sub.add_parser(name, help=h, parents=[common], argument_default=argparse.SUPPRESS)
        sp.set_defaults(command=name)
    return p


def _get(ns, name, default=None):
    v = getattr(ns, name, None)
    return default if v is None else v


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if ns.emit_default_config:
        sys.stdout.write(default_config_text())
        return EXIT_OK
    if not ns.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(_get(ns, "verbose", 0), 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(_get(ns, "config"), _get(ns, "set", []))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(_get(ns, "out", cfg["output"]["directory"]))
    cache = BasisCache(None if _get(ns, "no_cache") else default_cache_dir())
    run = None
    try:
        run = Run(cfg, out, _get(ns, "format", cfg["output"]["format"]), _get(ns, "threads", cfg["run"]["threads"]),
                  bool(_get(ns, "figures", cfg["output"]["figures"])), cache, ns.command)
        if run.threads < 1:
            raise UsageError("--threads must be positive")
        t0 = time.time()
        COMMANDS[ns.command](run)
        run.manifest.timings["total"] = round(time.time() - t0, 3)
    except (UsageError, scales.ScalesError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if run is not None:
            run.manifest.failures.append({"error": repr(exc)})
            run.manifest.write(out)
        return EXIT_NUMERIC
    path = run.manifest.write(out)
    logger.info("manifest written to %s", path)
    if run.manifest.failures:
        return EXIT_NUMERIC
    if not run.manifest.ok:
        bad = [k for k, v in run.manifest.checks.items() if not v["ok"]]
        print(f"validation failed: {', '.join(bad)}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
