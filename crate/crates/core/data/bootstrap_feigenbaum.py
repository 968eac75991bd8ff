"""Offline damped-Newton bootstrap for the Feigenbaum-like collocation data.

Solves g(s) = g(g(lam*s))/lam, lam = g(1), g(s) = 1 + sum_j c_j s^(2j)
at n Chebyshev points of [0,1] in 50-digit arithmetic, continuing in n from
the quadratic guess c_1 = -1.5. Writes feigenbaum_n{n}.txt, one coefficient
per line.
"""
import mpmath as mp

mp.mp.dps = 50


def nodes(n):
    return [(1 + mp.cos((2 * i - 1) * mp.pi / (2 * n))) / 2 for i in range(1, n + 1)]


def g(c, z):
    return 1 + sum(c[j] * z ** (2 * (j + 1)) for j in range(len(c)))


def residual(c, n):
    lam = g(c, 1)
    return mp.matrix([g(c, s) - g(c, g(c, lam * s)) / lam for s in nodes(n)])


def newton(c, n):
    c = mp.matrix(c)
    h = mp.mpf(10) ** -25
    for _ in range(200):
        r = residual(list(c), n)
        if mp.norm(r) < mp.mpf(10) ** -40:
            break
        jac = mp.matrix(n, n)
        for j in range(n):
            cp = c.copy()
            cp[j] += h
            cm = c.copy()
            cm[j] -= h
            d = (residual(list(cp), n) - residual(list(cm), n)) / (2 * h)
            for i in range(n):
                jac[i, j] = d[i]
        dx = mp.lu_solve(jac, -r)
        t = mp.mpf(1)
        while t > 1e-6:
            cn = c + t * dx
            if mp.norm(residual(list(cn), n)) < mp.norm(r):
                break
            t /= 2
        c = cn
    return list(c)


if __name__ == "__main__":
    prev = [mp.mpf(-1.5)]
    for n in range(1, 11):
        prev = newton(prev + [0] * (n - len(prev)), n)
        if n in (4, 6, 8, 10):
            with open(f"feigenbaum_n{n}.txt", "w") as f:
                for x in prev:
                    f.write("%.17e\n" % float(x))
