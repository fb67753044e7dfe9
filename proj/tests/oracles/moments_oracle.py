"""Closed-form oracles for skew-t moments, mixture variances and t-density ratios.

Run: python3 tests/oracles/moments_oracle.py
"""
import mpmath as mp

mp.mp.dps = 30


def skew_t_moments(mu, s2, lam, nu):
    delta = lam / mp.sqrt(1 + lam * lam)
    b = mp.sqrt(nu / mp.pi) * mp.gamma((nu - 1) / 2) / mp.gamma(nu / 2)
    mean = mu + mp.sqrt(s2) * delta * b
    var = s2 * (nu / (nu - 2) - delta ** 2 * b ** 2)
    return mean, var


def mixture_variance(ws, comps):
    means = [m for m, _ in comps]
    lm = sum(w * m for w, m in zip(ws, means))
    return sum(w * ((m - lm) ** 2 + v) for w, (m, v) in zip(ws, comps))


def t_logpdf(y, mu, s2, nu):
    return (mp.loggamma((nu + 1) / 2) - mp.loggamma(nu / 2)
            - mp.log(mp.sqrt(nu * mp.pi * s2)) - (nu + 1) / 2 * mp.log(1 + (y - mu) ** 2 / (nu * s2)))


def kld_t_normal_closed(nu):
    # KLD(t_nu || N(0,1)) = -H(t) + 0.5 log(2 pi) + 0.5 nu/(nu-2)
    h = ((nu + 1) / 2 * (mp.digamma((nu + 1) / 2) - mp.digamma(nu / 2))
         + mp.log(mp.sqrt(nu) * mp.beta(nu / 2, mp.mpf(1) / 2)))
    return -h + mp.log(2 * mp.pi) / 2 + nu / (2 * (nu - 2))


if __name__ == "__main__":
    c1 = skew_t_moments(mp.mpf(-0.8), mp.mpf(1), mp.mpf(-1.5), mp.mpf(2.8))
    c2 = skew_t_moments(mp.mpf(1.2), mp.mpf(0.75), mp.mpf(0.8), mp.mpf(4))
    print("study2 comp1", mp.nstr(c1[0], 17), mp.nstr(c1[1], 17))
    print("study2 comp2", mp.nstr(c2[0], 17), mp.nstr(c2[1], 17))
    print("study2 mixture var", mp.nstr(mixture_variance([0.6, 0.4], [c1, c2]), 17))
    # study 1
    t = lambda s2, nus: s2 * sum(0.5 * n / (n - 2) for n in nus)
    print("study1 var", mp.nstr(mixture_variance([0.6, 0.4], [(-1, t(1, [2.8, 4])), (1.5, t(0.75, [2.8, 4]))]), 17))
    for nu in (2.8, 4, 14.4):
        print("closed KLD(t||N)", nu, mp.nstr(kld_t_normal_closed(mp.mpf(nu)), 17))
    # tail label probability: |y-mu| = 10 sigma, nu=(2.8,14.4), wdot=(.5,.5), sigma2=1
    l1 = t_logpdf(10, 0, 1, mp.mpf(2.8)); l2 = t_logpdf(10, 0, 1, mp.mpf(14.4))
    print("tail P(k=1)", mp.nstr(mp.exp(l1) / (mp.exp(l1) + mp.exp(l2)), 17))
