"""Property suite behind ``nonauto verify``.

Each property returns ``(worst, limit, ok)``: the worst observed value of
its defect measure, the threshold it is held to, and the verdict. The
report prints one line per property and is byte-identical for a fixed seed.
"""
import io
import math

import numpy as np

from .analysis import (apriori_report, convergence_study, energy_identity_residual,
                       h_norm_rule_residual, mr_norms)
from .approx import Kind, Subdivision, average, eval_linear, eval_scalar_linear
from .forms import (EvolutionProblem, FormFamily, preset_rhs, preset_vector, scenario,
                    shift_omega, shift_rhs, verify_form_axioms)
from .solver import Trajectory, oracle_for, solve_approximate, solve_theta
from .triple import (build_fem_triple, embedding_constant, embedding_maximizer, norm,
                     operator_norm)

DIM = 15
BV_SCENARIOS = ("constant", "linear_coeff", "jump_coeff", "staircase_bv", "separable_spectral")


def _ctx(seed):
    triple = build_fem_triple(DIM)
    fams = {name: scenario(name, None, triple) for name in BV_SCENARIOS}
    fams["jump_offgrid"] = scenario("jump_coeff", {"times": [1.0 / 3.0]}, triple)
    return {"rng": np.random.default_rng(seed), "triple": triple, "families": fams, "seed": seed}


def _le(worst, limit):
    return worst, limit, bool(worst <= limit)


# ---------------------------------------------------------------------------
# triple


def p_gram_validity(ctx):
    tr = ctx["triple"]
    worst = 0.0
    for G in (tr.gram_V, tr.gram_H):
        worst = max(worst, np.abs(G - G.conj().T).max() / np.abs(G).max())
        if np.linalg.eigvalsh(G).min() <= 0:
            worst = math.inf
    return _le(worst, 1e-12)


def p_dual_norm_duality(ctx):
    tr, rng = ctx["triple"], ctx["rng"]
    worst = 0.0
    for f in rng.standard_normal((32, tr.dim)):
        x = tr.solve_V(f)
        dual = norm(tr, f, "Vdual")
        worst = max(worst, abs(abs(f @ x) / norm(tr, x, "V") - dual) / dual)
        for y in rng.standard_normal((4, tr.dim)):
            excess = abs(f @ y) - dual * norm(tr, y, "V")
            worst = max(worst, excess / (dual * norm(tr, y, "V")))
    return _le(worst, 1e-10)


def p_norm_axioms(ctx):
    tr, rng = ctx["triple"], ctx["rng"]
    worst = 0.0
    for which in ("V", "H", "Vdual"):
        x, y = rng.standard_normal((2, 16, tr.dim))
        s = rng.uniform(-3, 3, 16)
        nx, ny = norm(tr, x, which), norm(tr, y, which)
        homo = np.abs(norm(tr, s[:, None] * x, which) - np.abs(s) * nx) / (np.abs(s) * nx)
        tri = (norm(tr, x + y, which) - nx - ny) / (nx + ny)
        worst = max(worst, homo.max(), tri.max())
    return _le(worst, 1e-12)


def p_embedding(ctx):
    tr, rng = ctx["triple"], ctx["rng"]
    c = embedding_constant(tr)
    u = embedding_maximizer(tr)
    worst = abs(norm(tr, u, "H") / norm(tr, u, "V") - c) / c
    x = rng.standard_normal((64, tr.dim))
    worst = max(worst, float((norm(tr, x, "H") / norm(tr, x, "V") - c).max() / c))
    return _le(worst, 1e-10)


# ---------------------------------------------------------------------------
# forms


def _axiom_families(ctx):
    fams = dict(ctx["families"])
    if ctx.get("fault") == "symmetry":
        tr = ctx["triple"]
        skew = np.triu(np.ones((tr.dim, tr.dim)), 1)
        A = tr.gram_V + 1e-3 * (skew - skew.T)
        fams["injected_asymmetric"] = FormFamily(lambda t: A, 1.0, 1.0, operator_norm(tr, A),
                                                 symmetric=True, name="injected_asymmetric")
    return fams


def _axiom_property(field, limit_of):
    def prop(ctx):
        worst, ok = -math.inf, True
        for i, fam in enumerate(_axiom_families(ctx).values()):
            rep = verify_form_axioms(fam, ctx["triple"], 32, 16, seed=ctx["seed"] + i)
            val = field(rep)
            if val is None:
                continue
            worst = max(worst, val)
            ok &= val <= limit_of(rep)
        return worst, limit_of(None), ok
    return prop


p_continuity = _axiom_property(lambda r: r.worst_continuity_ratio / r.bound_M - 1.0,
                               lambda r: 1e-12)
p_coercivity = _axiom_property(lambda r: -r.worst_coercivity_margin / max(1.0, r.bound_M),
                               lambda r: 1e-12)
p_symmetry = _axiom_property(lambda r: r.worst_symmetry_defect if r.symmetric else None,
                             lambda r: 1e-12)
p_bv_dominance = _axiom_property(lambda r: r.worst_bv_defect, lambda r: 1e-10)


def p_shift_round_trip(ctx):
    tr = ctx["triple"]
    f = preset_rhs("constant", tr)
    u0 = preset_vector("mode_1", tr)
    worst = 0.0
    for name, params in (("linear_coeff", {}), ("jump_coeff", {"times": [1.0 / 3.0]}),
                         ("separable_spectral", {"coeffs": [1.0, 0.5, 0.5]})):
        fam = scenario(name, {**params, "omega": 1.0}, tr)
        direct = solve_theta(EvolutionProblem(fam, f, u0, tr), 256)
        shifted, back = shift_omega(fam, tr)
        v = solve_theta(EvolutionProblem(shifted, shift_rhs(f, fam.omega), u0, tr), 256)
        gap = Trajectory(direct.grid, back(v).states - direct.states)
        worst = max(worst, mr_norms(gap, tr).l2_H)
    return _le(worst, 2e-5)


# ---------------------------------------------------------------------------
# approx


def _averaged(ctx, ns=(4, 16, 64)):
    for name, fam in ctx["families"].items():
        for n in ns:
            yield name, fam, average(fam, Subdivision(fam.horizon, n))


def p_averages_keep_axioms(ctx):
    worst, ok = -math.inf, True
    for i, (_, fam, av) in enumerate(_averaged(ctx, (4, 7))):
        for kind in Kind:
            rep = verify_form_axioms(av.as_family(kind), ctx["triple"], 24, 8, seed=ctx["seed"] + i)
            worst = max(worst, rep.worst_continuity_ratio / rep.bound_M - 1.0,
                        -rep.worst_coercivity_margin, rep.worst_symmetry_defect,
                        rep.worst_bv_defect)
            ok &= rep.passed
    return worst, 1e-10, ok


def p_linear_continuity(ctx):
    worst = 0.0
    for _, _, av in _averaged(ctx):
        for k in range(1, av.n):
            left = 0.0 * av.averages[k - 1] + 1.0 * av.averages[k]
            worst = max(worst, float(np.abs(left - eval_linear(av, av.subdivision.nodes[k])).max()))
    return _le(worst, 0.0)


def p_linear_lipschitz(ctx):
    tr, worst = ctx["triple"], 0.0
    for _, fam, av in _averaged(ctx):
        h, nodes = av.subdivision.mesh, av.subdivision.nodes
        for k in range(av.n):
            a, b = nodes[k] + 0.25 * h, nodes[k] + 0.75 * h
            slope = operator_norm(tr, eval_linear(av, b) - eval_linear(av, a)) / (b - a)
            worst = max(worst, slope / (2 * fam.bound_M / h))
    return _le(worst, 1.0)


def bv_transfer_defect(av, triple, rng, n_samples=1000):
    """Worst relative defect of |a_L(t;u,v) - a_L(s;u,v)| <= (g_L(t) - g_L(s)) |u|_V |v|_V."""
    T = av.subdivision.horizon
    st = np.sort(rng.uniform(0.0, T, (n_samples, 2)), axis=1)
    U, W = rng.standard_normal((2, n_samples, triple.dim))
    scale = norm(triple, U, "V") * norm(triple, W, "V")
    worst = -math.inf
    for (s, t), u, w, sc in zip(st, U, W, scale):
        inc = abs(np.vdot(w, (eval_linear(av, t) - eval_linear(av, s)) @ u))
        budget = (eval_scalar_linear(av, t) - eval_scalar_linear(av, s)) * sc
        worst = max(worst, (inc - budget) / sc)
    return float(worst)


def p_bv_transfer(ctx):
    worst = -math.inf
    for _, _, av in _averaged(ctx):
        worst = max(worst, bv_transfer_defect(av, ctx["triple"], ctx["rng"], 200))
    return _le(worst, 1e-10)


def p_quadrature_consistency(ctx):
    worst, ok = 0.0, True
    for name, fam in ctx["families"].items():
        sub = Subdivision(fam.horizon, 8)
        a, b = average(fam, sub, 32), average(fam, sub, 64)
        d = max(float(np.abs(x - y).max()) for x, y in zip(a.averages, b.averages))
        worst = max(worst, d)
        if fam.piecewise_constant:
            ok &= d == 0.0
    return worst, 1e-10, ok and worst <= 1e-10


# ---------------------------------------------------------------------------
# solver


def p_dissipativity(ctx):
    tr, worst = ctx["triple"], -math.inf
    u0 = preset_vector("random_seeded", tr, ctx["seed"])
    for theta in (0.5, 1.0):
        for name in ("linear_coeff", "jump_offgrid", "staircase_bv"):
            fam = ctx["families"][name]
            for kind in Kind:
                traj = solve_approximate(fam, Subdivision(1.0, 8), kind, None, u0, tr, 16, theta)
                nh = norm(tr, traj.states, "H")
                worst = max(worst, float((np.diff(nh) / nh[0]).max()))
    return _le(worst, 1e-13)


def _oracle_gap(fam, tr, u0, f, n_steps, theta):
    traj = solve_theta(EvolutionProblem(fam, f, u0, tr), n_steps, theta)
    ref = oracle_for(fam, tr, f, u0, traj.grid)
    return float(norm(tr, traj.states - ref.states, "H").max())


def p_richardson(ctx):
    tr = ctx["triple"]
    fam = ctx["families"]["separable_spectral"]
    # smooth data: rough initial states put Crank-Nicolson outside its asymptotic regime
    u0 = preset_vector("mode_1", tr)
    f = preset_rhs("constant", tr)
    worst_margin, ok = math.inf, True
    for theta, need in ((0.5, 1.8), (1.0, 1.4)):
        ratio = _oracle_gap(fam, tr, u0, f, 64, theta) / _oracle_gap(fam, tr, u0, f, 128, theta)
        worst_margin = min(worst_margin, ratio / need)
        ok &= ratio >= need
    # reported as shortfall below the required reduction factor
    return 1.0 - worst_margin, 0.0, ok


def p_grid_alignment(ctx):
    tr, missing = ctx["triple"], 0
    u0 = preset_vector("mode_1", tr)
    for n in (3, 7, 10):
        for kind in Kind:
            traj = solve_approximate(ctx["families"]["jump_offgrid"], Subdivision(1.0, n), kind,
                                     None, u0, tr, 4)
            missing += int((~np.isin(Subdivision(1.0, n).nodes, traj.grid)).sum())
            missing += int(not np.array_equal(traj.states[0], u0))
    return _le(float(missing), 0.0)


# ---------------------------------------------------------------------------
# analysis


def _linear_runs(ctx, steps=64):
    tr = ctx["triple"]
    u0 = preset_vector("mode_1", tr)
    for name in ("linear_coeff", "separable_spectral"):
        fam = ctx["families"][name]
        for n in (4, 16):
            yield fam, solve_approximate(fam, Subdivision(1.0, n), Kind.LINEAR, None, u0, tr, steps)


def p_energy_identity_exact(ctx):
    tr, worst = ctx["triple"], 0.0
    for _, traj in _linear_runs(ctx):
        worst = max(worst, energy_identity_residual(traj, traj.meta["averaged"], tr, "simpson"))
    return _le(worst, 1e-6)


def p_energy_quadrature_order(ctx):
    tr, worst = ctx["triple"], math.inf
    coarse = [energy_identity_residual(t, t.meta["averaged"], tr) for _, t in _linear_runs(ctx, 32)]
    fine = [energy_identity_residual(t, t.meta["averaged"], tr) for _, t in _linear_runs(ctx, 64)]
    for c, f in zip(coarse, fine):
        worst = min(worst, c / f)
    return 1.8 - worst, 0.0, worst >= 1.8


def p_h_norm_rule(ctx):
    tr, worst = ctx["triple"], 0.0
    for _, traj in _linear_runs(ctx):
        worst = max(worst, h_norm_rule_residual(traj, tr))
    return _le(worst, 1e-12)


def p_mr_embedding(ctx):
    tr, rng = ctx["triple"], ctx["rng"]
    c, worst = embedding_constant(tr), -math.inf
    for _ in range(8):
        grid = np.sort(np.r_[0.0, rng.uniform(0, 1, 30), 1.0])
        m = mr_norms(Trajectory(grid, rng.standard_normal((len(grid), tr.dim))), tr)
        worst = max(worst, m.l2_H / (c * m.l2_V) - 1, m.l2_Vdual_deriv / (c * m.l2_H_deriv) - 1)
    return _le(worst, 1e-12)


def p_apriori(ctx):
    tr = ctx["triple"]
    u0 = preset_vector("random_seeded", tr, ctx["seed"])
    f = preset_rhs("constant", tr, ctx["seed"])
    worst, ok = -math.inf, True
    for name, fam in ctx["families"].items():
        for n in (4, 16, 64):
            traj = solve_approximate(fam, Subdivision(1.0, n), Kind.LINEAR, f, u0, tr, 8)
            rep = apriori_report(traj, traj.meta["averaged"], fam, f, tr)
            worst = max(worst, rep.sup_V_sq / rep.sup_V_bound - 1, rep.h1_sq / rep.h1_bound - 1,
                        rep.rate_integral - rep.gT)
            ok &= rep.passed
    return worst, 0.0, ok


def p_weak_convergence_proxy(ctx):
    tr = ctx["triple"]
    fam = ctx["families"]["jump_offgrid"]
    rows = convergence_study(fam, preset_rhs("constant", tr), preset_vector("mode_1", tr),
                             Kind.STEP, [4, 8, 16, 32], tr, steps_per_interval=16)
    errs = [r.mrVVdual_error for r in rows]
    growth = max(b / a for a, b in zip(errs, errs[1:]))
    ok = growth <= 1.05 and all(r.apriori_h1_ok for r in rows)
    return growth, 1.05, ok


# ---------------------------------------------------------------------------
# cli


def p_csv_schema(ctx):
    from .cli import CSV_COLUMNS, ExperimentConfig, write_csv
    from .analysis import convergence_study as study

    tr = ctx["triple"]
    fam = ctx["families"]["constant"]
    texts = []
    for _ in range(2):
        rows = study(fam, None, preset_vector("mode_1", tr), Kind.LINEAR, [2, 4], tr,
                     steps_per_interval=8, clock=lambda: 0.0)
        buf = io.StringIO()
        write_csv(buf, rows)
        texts.append(buf.getvalue())
    header = texts[0].split("\n", 1)[0].split(",")
    bad = int(header != CSV_COLUMNS) + int(texts[0] != texts[1])
    bad += int(ExperimentConfig("constant").validate() is None)
    return _le(float(bad), 0.0)


PROPERTIES = [
    ("triple.gram_validity", p_gram_validity),
    ("triple.dual_norm_duality", p_dual_norm_duality),
    ("triple.norm_axioms", p_norm_axioms),
    ("triple.embedding_sharpness", p_embedding),
    ("forms.continuity", p_continuity),
    ("forms.coercivity", p_coercivity),
    ("forms.symmetry", p_symmetry),
    ("forms.bv_dominance", p_bv_dominance),
    ("forms.omega_shift_round_trip", p_shift_round_trip),
    ("approx.averages_keep_axioms", p_averages_keep_axioms),
    ("approx.linear_continuity", p_linear_continuity),
    ("approx.linear_lipschitz", p_linear_lipschitz),
    ("approx.bv_transfer", p_bv_transfer),
    ("approx.quadrature_consistency", p_quadrature_consistency),
    ("solver.dissipativity", p_dissipativity),
    ("solver.richardson_order", p_richardson),
    ("solver.grid_alignment", p_grid_alignment),
    ("analysis.energy_identity_exact", p_energy_identity_exact),
    ("analysis.energy_quadrature_order", p_energy_quadrature_order),
    ("analysis.h_norm_rule", p_h_norm_rule),
    ("analysis.mr_embedding", p_mr_embedding),
    ("analysis.apriori_bounds", p_apriori),
    ("analysis.weak_convergence_proxy", p_weak_convergence_proxy),
    ("cli.csv_schema", p_csv_schema),
]


def run_verify(seed=0, inject_fault=None, properties=None):
    """Run every property; returns ``(report_text, all_passed)``."""
    lines = [f"nonauto verify seed={seed}" + (f" fault={inject_fault}" if inject_fault else "")]
    all_ok = True
    for name, prop in properties or PROPERTIES:
        ctx = _ctx(seed)
        ctx["fault"] = inject_fault
        try:
            worst, limit, ok = prop(ctx)
        except Exception as exc:  # a crashing property is a failing property
            lines.append(f"FAIL {name:36s} error={type(exc).__name__}: {exc}")
            all_ok = False
            continue
        all_ok &= bool(ok)
        lines.append(f"{'PASS' if ok else 'FAIL'} {name:36s} worst={worst:.6e} limit={limit:.1e}")
    lines.append(f"{'ALL PASS' if all_ok else 'FAILURES PRESENT'}")
    return "\n".join(lines) + "\n", all_ok
