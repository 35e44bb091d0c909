import math

import numpy as np
import pytest

from rodjunction import post, scenarios, so3
from rodjunction.model import LoadProfile, Network, RodSpec
from rodjunction.solver import (
    Discretization,
    RotationField,
    SolverOptions,
    energy,
    field_distance,
    gradient,
    hessian_min_eig,
    init_field,
    rod_energies,
    solve,
    strains,
)


def twisted_rod(t, N=16, H=np.diag([1.5, 2.0, 3.0]), L=1.0):
    net = Network((RodSpec(L, np.eye(3), H),))
    x = np.linspace(0, L, N + 1)[1:]
    nodes = so3.quat_from_rotvec(np.outer(x * t, [1.0, 0.0, 0.0]))
    return net, RotationField(np.array([1.0, 0, 0, 0]), [nodes])


def fd_gradient(disc, fld, eps=1e-5):
    g = np.zeros(disc.size)
    for k in range(disc.size):
        v = np.zeros(disc.size)
        v[k] = eps
        g[k] = (disc.energy(disc.retract(fld, v)) - disc.energy(disc.retract(fld, -v))) / (2 * eps)
    return g


# ------------------------------------------------------------------ init


def test_straight_init_has_zero_strain(tee):
    fld = init_field(tee, SolverOptions(segments=8))
    assert all(np.abs(s).max() < 1e-14 for s in strains(fld, tee))


def test_straight_energy_is_load_work(star):
    # p is linear along each rod, so the midpoint rule is exact
    fld = init_field(star, SolverOptions(segments=8))
    work = 0.0
    for r in star.rods:
        x = np.linspace(0, r.length, 2001)
        work += np.trapezoid(r.cumulative_load(x) @ r.tangent, x) if hasattr(np, "trapezoid") else np.trapz(r.cumulative_load(x) @ r.tangent, x)
    assert energy(fld, star) == pytest.approx(-work, abs=1e-12)


def test_zero_amplitude_perturbation_is_straight(tee):
    a = init_field(tee, SolverOptions(segments=8))
    b = init_field(tee, SolverOptions(segments=8, init="perturbed", seed=7, amplitude=0.0))
    assert field_distance(a, b, tee) < 1e-15


def test_perturbed_init_deterministic(tee):
    o = SolverOptions(segments=8, init="perturbed", seed=11, amplitude=0.2)
    a, b = init_field(tee, o), init_field(tee, o)
    assert all(np.array_equal(p, q) for p, q in zip(a.nodes, b.nodes))


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(armijo_c1=0.6)
    with pytest.raises(ValueError):
        SolverOptions(backtrack=1.0)
    with pytest.raises(ValueError):
        SolverOptions(g_tol=0.0)
    with pytest.raises(ValueError):
        SolverOptions(segments=1).segments_for(scenarios.single_rod())


# ---------------------------------------------------------------- energy


def test_unloaded_straight_energy_zero():
    net = scenarios.symmetric_star(pull=0.0, lift=0.0)
    assert energy(init_field(net, SolverOptions(segments=8)), net) == 0.0


@pytest.mark.parametrize("t", [0.3, 1.7, -2.2])
def test_uniform_twist_energy(t):
    net, fld = twisted_rod(t)
    assert energy(fld, net) == pytest.approx(0.5 * 1.5 * t * t, rel=1e-12)


def test_energy_frame_invariance(tee, rng):
    fld = init_field(tee, SolverOptions(segments=12, init="perturbed", seed=2, amplitude=0.4))
    G = so3.exp(rng.standard_normal(3))
    assert energy(fld.rotated(G), tee.rotated(G)) == pytest.approx(energy(fld, tee), rel=1e-13)


def test_shape_mismatch(tee):
    fld = init_field(tee, SolverOptions(segments=8))
    with pytest.raises(ValueError):
        Discretization(tee, [8, 8, 9]).energy(fld)


# -------------------------------------------------------------- gradient


def test_gradient_zero_for_unloaded_straight():
    net = scenarios.symmetric_star(pull=0.0, lift=0.0)
    assert np.abs(gradient(init_field(net, SolverOptions(segments=8)), net)).max() == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(tee, seed):
    fld = init_field(tee, SolverOptions(segments=16, init="perturbed", seed=seed, amplitude=0.5))
    disc = Discretization(tee, fld.segments)
    g = disc.gradient(fld)
    assert np.linalg.norm(fd_gradient(disc, fld) - g) <= 1e-6 * np.linalg.norm(g)


def test_pinned_gradient_drops_junction(tee):
    fld = init_field(tee, SolverOptions(segments=8, init="perturbed", seed=1, amplitude=0.3))
    free = gradient(fld, tee)
    pinned = gradient(fld, tee, pin_junction=True)
    assert np.all(pinned[:3] == 0.0)
    assert np.array_equal(pinned[3:], free[3:])


def test_uniform_twist_gradient():
    t = 0.8
    net, fld = twisted_rod(t, N=10)
    disc = Discretization(net, fld.segments)
    g = disc.gradient(fld).reshape(-1, 3)
    fd = fd_gradient(disc, fld).reshape(-1, 3)
    assert np.abs(g[1:-1]).max() < 1e-12  # interior nodes
    assert np.linalg.norm(g[0]) == pytest.approx(1.5 * t, rel=1e-12)  # junction end
    assert np.linalg.norm(g[-1]) == pytest.approx(1.5 * t, rel=1e-12)  # free end
    assert np.allclose(g, fd, atol=1e-8)


# ----------------------------------------------------------------- solve


def test_unloaded_solve_takes_no_iterations():
    net = scenarios.symmetric_star(pull=0.0, lift=0.0)
    fld, trace = solve(net, SolverOptions(segments=8))
    assert trace.converged and len(trace.iterations) == 1
    assert field_distance(fld, init_field(net, SolverOptions(segments=8)), net) == 0.0


def _assert_monotone(trace):
    E = trace.energies
    assert np.all(np.diff(E) <= 1e-13 * np.abs(E[:-1]).clip(1.0))


def test_trace_monotone_and_converged(tee):
    fld, trace = solve(tee, SolverOptions(segments=24, init="perturbed", seed=5, amplitude=0.2))
    assert trace.converged
    _assert_monotone(trace)
    assert trace.to_csv().startswith("iteration,energy,grad_norm,step\n")


def test_gradient_descent_reaches_same_state(star):
    o = SolverOptions(segments=8, g_tol=1e-9)
    a, _ = solve(star, o)
    b, tb = solve(star, SolverOptions(segments=8, g_tol=1e-9, optimizer="gd"))
    assert tb.converged
    _assert_monotone(tb)
    assert field_distance(a, b, star) < 1e-6


def test_subcritical_strut_returns_straight():
    net = scenarios.euler_strut(0.5 * scenarios.euler_critical_load(1.0, 1.0))
    o = SolverOptions(segments=32, pin_junction=True, init="perturbed", seed=4, amplitude=0.05, g_tol=1e-10)
    fld, trace = solve(net, o)
    straight = init_field(net, SolverOptions(segments=32))
    assert trace.converged
    assert energy(fld, net) == pytest.approx(energy(straight, net), abs=1e-10)
    assert field_distance(fld, straight, net) < 1e-6


def test_symmetric_star_rods_share_energy(star):
    fld, trace = solve(star, SolverOptions(segments=32, g_tol=1e-11))
    assert trace.converged
    e = rod_energies(fld, star)
    assert max(e) - min(e) <= 1e-8 * max(abs(v) for v in e)


def test_frame_indifference(tee, rng):
    G = so3.exp(np.array([0.4, -1.2, 2.0]))
    o = SolverOptions(segments=16, g_tol=1e-11)
    a, _ = solve(tee, o)
    start = init_field(tee, o).rotated(G)
    b, _ = solve(tee.rotated(G), SolverOptions(segments=16, g_tol=1e-11, init="provided", initial_field=start))
    assert field_distance(a.rotated(G), b, tee.rotated(G)) < 1e-8
    assert energy(b, tee.rotated(G)) == pytest.approx(energy(a, tee), abs=1e-10)


def test_threads_bitwise_identical(tee):
    a, ta = solve(tee, SolverOptions(segments=16, threads=1))
    b, tb = solve(tee, SolverOptions(segments=16, threads=4))
    assert np.array_equal(a.junction, b.junction)
    assert all(np.array_equal(p, q) for p, q in zip(a.nodes, b.nodes))
    assert ta.iterations == tb.iterations


def test_quaternion_file_round_trip(tee, tmp_path):
    fld, _ = solve(tee, SolverOptions(segments=16))
    post.write_report(post.residuals(fld, tee), tmp_path)
    back = post.read_solution(tmp_path, len(tee))
    e0, e1 = energy(fld, tee), energy(back, tee)
    assert abs(e1 - e0) <= 1e-12 * abs(e0)


def test_refinement_trend(tee):
    E = [energy(solve(tee, SolverOptions(segments=n, g_tol=1e-12))[0], tee) for n in (16, 32, 64)]
    assert abs(E[0] - E[1]) >= 3.0 * abs(E[1] - E[2])


# --------------------------------------------------------------- hessian


def test_unloaded_hessian_positive_after_deflation():
    net = scenarios.symmetric_star(pull=0.0, lift=0.0)
    lam, ok = hessian_min_eig(init_field(net, SolverOptions(segments=8)), net)
    assert ok and lam > 1e-3


@pytest.mark.parametrize("factor,sign", [(0.5, 1), (1.5, -1)])
def test_strut_stability_sign(factor, sign):
    net = scenarios.euler_strut(factor * scenarios.euler_critical_load(1.0, 1.0))
    lam, ok = hessian_min_eig(init_field(net, SolverOptions(segments=32)), net, pin_junction=True)
    assert ok and np.sign(lam) == sign


def test_free_strut_is_rigidly_unstable():
    # without a gauge on the junction, a dead compressive pair rotates the whole strut
    net = scenarios.euler_strut(0.1)
    lam, _ = hessian_min_eig(init_field(net, SolverOptions(segments=16)), net)
    assert lam < 0


def test_hessian_matches_dense_assembly():
    net = Network((RodSpec(1.0, np.eye(3), np.diag([1.0, 2.0, 0.7]), LoadProfile("constant", [-1.0, 0, 0]), np.array([1.0, 0, 0])),))
    fld = init_field(net, SolverOptions(segments=4))
    disc = Discretization(net, [4], pin_junction=True)
    n, eps = disc.size, 1e-6
    Hd = np.zeros((n, n))
    for j in range(n):
        v = np.zeros(n)
        v[j] = eps
        Hd[:, j] = (disc.gradient(disc.retract(fld, v)) - disc.gradient(disc.retract(fld, -v))) / (2 * eps)
    Hd = Hd[3:, 3:]
    dense = np.linalg.eigvalsh(0.5 * (Hd + Hd.T))[0]
    lam, ok = hessian_min_eig(fld, net, pin_junction=True)
    assert ok
    assert lam == pytest.approx(dense, rel=1e-4)
