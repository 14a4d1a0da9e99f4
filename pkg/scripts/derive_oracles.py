"""Independent high-precision evaluation of the closed-form model.

Written directly from the formulas with mpmath (30 digits) and no imports from
the package, so the frozen numbers in ``tests/test_physics.py`` do not share
code with the implementation under test. Run::

    python scripts/derive_oracles.py
"""
from mpmath import mp, mpf, pi, exp, log10

mp.dps = 30

# Reference operating point: P = 2.5 mW, n = 2.4e12 cm^-3, B = 5.6 uT.
G = mpf("1e6")
Q = mpf("0.87")
E_PH = mpf("2.49e-19")
QE = mpf("1.6e-19")
R_E = mpf("2.82e-13")
F_OSC = mpf("0.34")
C = mpf("2.99792458e10")
FWHM_GHZ = mpf("2.4")
A_EFF = mpf("0.0544")
L = mpf(3)
P = mpf("2.5e-3")
N = mpf("2.4e12")
DET = mpf(20)
OD_SCALE = mpf("1.03214058")

resp = Q * QE / E_PH
s_ph = 2 * G**2 * QE * resp * P
sigma0 = C * R_E * F_OSC / (FWHM_GHZ * mpf("1e9") / 2)


def d_factor(delta):
    h = FWHM_GHZ / 2
    return delta * h / (delta**2 + h**2)


def kappa2(i_spin, offsets):
    total = 0
    for f, off in zip((i_spin - mpf("0.5"), i_spin + mpf("0.5")), offsets):
        total += d_factor(DET - off) ** 2 * f * (f + 1) * (2 * f + 1) / 6
    return total / (2 * i_spin + 1) ** 3


k85_theory = kappa2(mpf("2.5"), (mpf("1.518"), mpf("1.518")))
k87_theory = kappa2(mpf("1.5"), (mpf("2.2"), mpf("2.2")))
rate = 2 * pi * (501 + mpf("57.8") * N / mpf("1e12") + 63 * P / mpf("1e-3"))
fwhm = rate / pi


def var_theta(abundance, k2, n=N):
    return n * abundance * A_EFF * L * (sigma0 / A_EFF) ** 2 * k2


def eta(abundance, k2, xi2=1, n=N, r=rate):
    return (P / E_PH) * (4 * Q / xi2) * (sigma0 / A_EFF) ** 2 * k2 * n * abundance * L * A_EFF / r


var85 = var_theta(mpf("0.72"), mpf("5e-4"))
s_at85 = 4 * G**2 * resp**2 * P**2 * var85 / (pi * fwhm / 2)


def od(n):
    h = FWHM_GHZ / 2
    total = 0
    for ab, i_spin, offs in ((mpf("0.72"), mpf("2.5"), (mpf("1.518"),) * 2),
                             (mpf("0.28"), mpf("1.5"), (mpf("2.2"),) * 2)):
        for f, off in zip((i_spin - mpf("0.5"), i_spin + mpf("0.5")), offs):
            sig = sigma0 * h**2 / ((DET - off) ** 2 + h**2)
            total += n * ab * (2 * f + 1) / (2 * (2 * i_spin + 1)) * sig
    return OD_SCALE * total * L


def xi2_after(n):
    return 1 - (1 - mpf("0.55")) * exp(-od(n))


if __name__ == "__main__":
    rows = {
        "responsivity": resp,
        "s_ph": s_ph,
        "sigma0": sigma0,
        "kappa2_85_theory": k85_theory,
        "kappa2_87_theory": k87_theory,
        "fwhm_hz": fwhm,
        "fwhm_at_zero_hz": 2 * 501,
        "alpha_n_13e13_hz": mpf("57.8") * 13,
        "var_theta_85": var85,
        "s_at85": s_at85,
        "eta85": eta(mpf("0.72"), mpf("5e-4")),
        "eta87": eta(mpf("0.28"), k87_theory),
        "od_1.5e12": od(mpf("1.5e12")),
        "od_1.3e13": od(mpf("1.3e13")),
        "xi2_db_1.5e12": -10 * log10(xi2_after(mpf("1.5e12"))),
        "xi2_db_1.3e13": -10 * log10(xi2_after(mpf("1.3e13"))),
        "larmor85": mpf(4667) * mpf("5.6"),
        "larmor87": mpf(6996) * mpf("5.6"),
    }
    for k, v in rows.items():
        print(f"{k:<20s} {mp.nstr(v, 15)}")
