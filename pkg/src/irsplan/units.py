"""dB / linear conversions. Core modules work in linear units only."""

import math


def to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watts_to_dbm(x_watts: float) -> float:
    return 10.0 * math.log10(x_watts) + 30.0
