"""Independent reference evaluators used only by the tests.

Nothing here imports the package: the formulas are re-typed from their
definitions with plain loops, exact fractions or quadrature.
"""

from fractions import Fraction as F
import math

from scipy import integrate

TIE = 1e-12  # index ties are decided with this absolute tolerance


def _tie(a, b):
    return abs(a - b) <= TIE


def indices_exact(N, m, n, p, q):
    """Derived indices in exact rational arithmetic (inputs are Fractions)."""
    lam = [m[i] * (p[i] - 1) for i in range(N)]
    Lam = [n[i] * (q[i] - 1) for i in range(N)]
    Lmax = max(Lam)
    mm = min(min(m), min(n))
    hp = F(N) / sum(1 / pi for pi in p)
    lop = sum(lam[i] / p[i] for i in range(N)) / N
    alpha_i = [(lam[i] + mm) / (mm * p[i]) for i in range(N)]
    alpha = sum(alpha_i) / N
    p_star = alpha * hp + (1 + 1 / mm) * hp / N
    L = max(F(1), Lmax)
    M = hp * lop + (mm + 1) * hp / N
    return dict(lam=lam, Lam=Lam, Lambda=Lmax, m=mm, p=hp, lop=lop, alpha_i=alpha_i,
                alpha=alpha, p_star=p_star, L=L, M=M)


def kappa_generic(idx, N, s):
    return idx["p"] * (s + 1 - idx["L"]) + N * (idx["p"] * idx["lop"] - idx["L"])


def radius_oracle(lam, Lam, p, q, rho, theta):
    """The three-branch geometric lower bound for the level, summed term by term."""
    N = len(lam)
    Lmax = max(Lam)
    total = 0.0
    if Lmax < 1 and not _tie(Lmax, 1):
        for i in range(N):
            total += (theta / rho[i] ** p[i]) ** (1 / (1 - lam[i]))
            total += (theta / rho[i] ** q[i]) ** (1 / (1 - Lam[i]))
    elif _tie(Lmax, 1):
        for i in range(N):
            if lam[i] < 1 and not _tie(lam[i], 1):
                total += (theta / rho[i] ** p[i]) ** (1 / (1 - lam[i]))
            if Lam[i] < 1 and not _tie(Lam[i], 1):
                total += (theta / rho[i] ** q[i]) ** (1 / (1 - Lam[i]))
    else:
        sp = sum(rho[l] ** p[l] for l in range(N) if _tie(lam[l], Lmax))
        sq = sum(rho[l] ** q[l] for l in range(N) if _tie(Lam[l], Lmax))
        for i in range(N):
            if _tie(lam[i], Lmax):
                total += (rho[i] ** p[i] / theta) ** (1 / (Lmax - 1))
            elif sp > 0:
                total += (sp / rho[i] ** p[i]) ** (1 / (Lmax - lam[i]))
            if _tie(Lam[i], Lmax):
                total += (rho[i] ** q[i] / theta) ** (1 / (Lmax - 1))
            elif sq > 0:
                total += (sq / rho[i] ** q[i]) ** (1 / (Lmax - Lam[i]))
    return total


def h_oracle(lam, Lam, p, q, rho, theta):
    N = len(lam)
    Lmax = max(Lam)
    limiting = _tie(Lmax, 1)
    if Lmax < 1 and not limiting:
        return 1 / theta
    level = 1 if limiting else Lmax
    total = 1 / theta if limiting else 0.0
    for i in range(N):
        if _tie(lam[i], level):
            total += rho[i] ** -p[i]
        if _tie(Lam[i], level):
            total += rho[i] ** -q[i]
    return total


def g_plus_quad(a, b, m):
    """``(1/m) int_b^a z^(1/m - 1) (z - b) dz`` by adaptive quadrature."""
    if a <= b:
        return 0.0
    f = lambda z: z ** (1.0 / m - 1.0) * (z - b)
    # substitute z = b + (a-b) w^2 near an integrable endpoint singularity at z = 0
    if b == 0 and m > 1:
        val, _ = integrate.quad(lambda w: 2 * a * w * f(a * w * w), 0.0, 1.0,
                                epsabs=0, epsrel=1e-13, limit=200)
    else:
        val, _ = integrate.quad(f, b, a, epsabs=0, epsrel=1e-13, limit=200)
    return val / m


def ladder_exact(k, m, J):
    """Ladder levels as exact m-th powers for rational ``k^m``."""
    km = F(k) ** m if isinstance(m, int) else None
    kj = [km - km / 2 ** (j + 1) for j in range(J + 1)]
    kbar = [(kj[j] + kj[j + 1]) / 2 for j in range(J)]
    kprime = [(kbar[j] + kj[j + 1]) / 2 for j in range(J)]
    return kj, kbar, kprime


def heat_kernel_1d_periodic(x, t, sigma, period, images=6):
    s2 = sigma * sigma + 2 * t
    return math.sqrt(sigma * sigma / s2) * sum(
        math.exp(-(x - k * period) ** 2 / (2 * s2)) for k in range(-images, images + 1))



def separable_embedding_ratio(profiles, derivs, support, kinks=None):
    """Embedding ratio (N=3, alpha_i=1, p_i=2) of ``prod_i f_i(x_i)`` by 1-d quadrature.

    ``(int u^6)^(1/3) / prod_i (int |D_i u|^2)^(1/3)`` factorises into 1-d integrals.
    """
    kinks = kinks or [None] * 3

    def q(f, ab, pts):
        return integrate.quad(f, *ab, epsabs=0, epsrel=1e-12, limit=200, points=pts)[0]

    six, two, grad = [], [], []
    for f, d, ab, pts in zip(profiles, derivs, support, kinks):
        six.append(q(lambda x: f(x) ** 6, ab, pts))
        two.append(q(lambda x: f(x) ** 2, ab, pts))
        grad.append(q(lambda x: d(x) ** 2, ab, pts))
    num = math.prod(six) ** (1 / 3)
    den = 1.0
    for i in range(3):
        den *= (grad[i] * math.prod(two[j] for j in range(3) if j != i)) ** (1 / 3)
    return num / den
