"""Unit conversions used at the configuration and output boundary."""

import math

KTS = 0.514444  # m/s per knot
FT = 0.3048  # m per foot


def kts_to_ms(v: float) -> float:
    return v * KTS


def ms_to_kts(v):
    return v / KTS


def ft_to_m(h: float) -> float:
    return h * FT


def deg_to_rad(a):
    return a * (math.pi / 180.0)


def rad_to_deg(a):
    return a * (180.0 / math.pi)
