"""
Skin conductance decomposition and SCR event detection.

The signal is split into a phasic part (Bateman impulse response driven by a
sparse non-negative driver), a smooth tonic part (cubic B-spline plus linear
trend) and a residual, by solving the convex quadratic program

    0.5 * |M q + B l + C d - y|^2 + alpha * sum(A q) + 0.5 * gamma * |l|^2
    subject to A q >= 0

with cvxopt.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import cvxopt as cv
import cvxopt.solvers
import numpy as np
import pandas as pd
from scipy import signal

from .data import ChannelStream
from .error_handler import (
    ErrorHandler,
    EdaSolverError,
    SamplingRateError,
    FileWriteError,
    MissingFileError,
)

# Initialize Error Handling
error_handler = ErrorHandler()

MIN_FS = 4.0
MAX_FS = 128.0
EVENT_COLUMNS = ["onset_s", "peak_s", "half_recovery_s", "amplitude_us"]


@dataclass(frozen=True)
class EdaParams:
    tau0: float = 2.0  # slow Bateman time constant (s)
    tau1: float = 0.7  # fast Bateman time constant (s)
    knot_spacing_s: float = 10.0
    alpha: float = 8e-4
    gamma: float = 1e-2
    reltol: float = 1e-9
    max_iter: int = 10_000
    tonic_slope_bound: float = 0.5  # µS per second
    amp_threshold_us: float = 0.01
    onset_fraction: float = 0.1


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    objective: float
    converged: bool
    status: str


@dataclass(frozen=True)
class EdaDecomposition:
    phasic: ChannelStream
    tonic: ChannelStream
    residual: ChannelStream
    report: SolverReport

    def reconstruction(self) -> np.ndarray:
        return self.phasic.samples + self.tonic.samples + self.residual.samples


@dataclass(frozen=True)
class ScrEvent:
    onset_s: float
    peak_s: float
    half_recovery_s: Optional[float]
    amplitude_us: float


def _bateman_arma(n: int, fs: float, tau0: float, tau1: float):
    delta = 1.0 / fs
    a1 = 1.0 / min(tau1, tau0)
    a0 = 1.0 / max(tau1, tau0)
    ar = np.array(
        [
            (a1 * delta + 2.0) * (a0 * delta + 2.0),
            2.0 * a1 * a0 * delta**2 - 8.0,
            (a1 * delta - 2.0) * (a0 * delta - 2.0),
        ]
    ) / ((a1 - a0) * delta**2)
    ma = np.array([1.0, 2.0, 1.0])

    i = np.arange(2, n)
    A = cv.spmatrix(np.tile(ar, (n - 2, 1)), np.c_[i, i, i], np.c_[i, i - 1, i - 2], (n, n))
    M = cv.spmatrix(np.tile(ma, (n - 2, 1)), np.c_[i, i, i], np.c_[i, i - 1, i - 2], (n, n))
    return A, M


def _spline_basis(n: int, fs: float, knot_spacing_s: float):
    knot = max(int(round(knot_spacing_s * fs)), 2)
    spl = np.r_[np.arange(1.0, knot), np.arange(knot, 0.0, -1.0)]
    spl = np.convolve(spl, spl, "full")
    spl /= spl.max()

    i = np.c_[np.arange(-(len(spl) // 2), (len(spl) + 1) // 2)] + np.r_[np.arange(0, n, knot)]
    n_basis = i.shape[1]
    j = np.tile(np.arange(n_basis), (len(spl), 1))
    p = np.tile(spl, (n_basis, 1)).T
    valid = (i >= 0) & (i < n)
    return cv.spmatrix(p[valid], i[valid], j[valid], (n, n_basis)), n_basis


def decompose_eda(sc: ChannelStream, params: EdaParams = EdaParams()) -> EdaDecomposition:
    """
    Convex decomposition of a band-passed skin conductance stream.

    The input is divided by its standard deviation before solving and the
    parts are scaled back, so scaling the input scales every part alike.

    Raises:
        SamplingRateError: If fs is outside [4, 128] Hz.
        EdaSolverError: If the QP does not reach an optimal solution.
    """
    if not MIN_FS <= sc.fs <= MAX_FS:
        raise SamplingRateError(
            f"EDA decomposition supports {MIN_FS}-{MAX_FS} Hz, '{sc.name}' is at {sc.fs} Hz"
        )
    y = np.asarray(sc.samples, dtype=float)
    n = y.size
    if n < 3:
        raise EdaSolverError(f"'{sc.name}' has only {n} samples")

    scale = float(np.std(y))
    if scale <= 0:
        scale = 1.0
    eda = cv.matrix(y / scale)

    A, M = _bateman_arma(n, sc.fs, params.tau0, params.tau1)
    B, n_basis = _spline_basis(n, sc.fs, params.knot_spacing_s)
    C = cv.matrix(np.c_[np.ones(n), np.arange(1.0, n + 1.0) / n])
    n_trend = C.size[1]

    Mt, Ct, Bt = M.T, C.T, B.T
    H = cv.sparse(
        [
            [Mt * M, Ct * M, Bt * M],
            [Mt * C, Ct * C, Bt * C],
            [Mt * B, Ct * B, Bt * B + params.gamma * cv.spmatrix(1.0, range(n_basis), range(n_basis))],
        ]
    )
    f = cv.matrix([(cv.matrix(params.alpha, (1, n)) * A).T - Mt * eda, -(Ct * eda), -(Bt * eda)])
    G = cv.spmatrix(-A.V, A.I, A.J, (n, len(f)))
    h = cv.matrix(0.0, (n, 1))

    old_options = cv.solvers.options.copy()
    cv.solvers.options.clear()
    cv.solvers.options.update(
        {"reltol": params.reltol, "maxiters": params.max_iter, "show_progress": False}
    )
    try:
        res = cv.solvers.qp(H, f, G, h)
    except (ArithmeticError, ValueError) as e:
        raise EdaSolverError(f"EDA solver failed on '{sc.name}': {e}")
    finally:
        cv.solvers.options.clear()
        cv.solvers.options.update(old_options)

    if res["status"] != "optimal":
        raise EdaSolverError(
            f"EDA solver stopped with status '{res['status']}' after {res['iterations']} iterations"
        )

    x = res["x"]
    q = x[:n]
    tonic = np.array(B * x[-n_basis:] + C * x[n : n + n_trend])[:, 0] * scale
    phasic = np.maximum(np.array(M * q)[:, 0] * scale, 0.0)
    residual = y - phasic - tonic
    objective = (res["primal objective"] + 0.5 * float((eda.T * eda)[0])) * scale**2

    slope = np.max(np.abs(np.diff(tonic))) * sc.fs if n > 1 else 0.0
    if slope > params.tonic_slope_bound:
        error_handler.warning(
            f"'{sc.name}': tonic slope {slope:.3f} µS/s exceeds bound {params.tonic_slope_bound}"
        )

    report = SolverReport(
        iterations=int(res["iterations"]),
        objective=float(objective),
        converged=True,
        status=res["status"],
    )
    error_handler.debug(f"EDA decomposition of '{sc.name}': {report.iterations} iterations")
    return EdaDecomposition(
        phasic=sc.with_samples(phasic),
        tonic=sc.with_samples(tonic),
        residual=sc.with_samples(residual),
        report=report,
    )


def detect_scr_events(
    d: EdaDecomposition,
    amp_threshold_us: float = 0.01,
    onset_fraction: float = 0.1,
) -> List[ScrEvent]:
    """
    Peaks of the phasic component with their onsets and half recoveries.

    The onset is the latest sample before the peak at or below the trough
    level plus onset_fraction of the rise. Half recovery is the first sample
    after the peak at or below onset level plus half the amplitude.
    """
    stream = d.phasic
    p = stream.samples
    if p.size < 3 or not np.any(p > 0):
        return []

    peaks, props = signal.find_peaks(p, prominence=amp_threshold_us)
    events: List[ScrEvent] = []
    previous_peak = 0
    for peak, left_base in zip(peaks, props["left_bases"]):
        floor = max(int(left_base), previous_peak)
        trough = p[floor : peak + 1].min()
        level = trough + onset_fraction * (p[peak] - trough)
        below = np.flatnonzero(p[floor:peak] <= level)
        onset = floor + int(below[-1]) if below.size else floor + int(np.argmin(p[floor:peak]))
        amplitude = float(p[peak] - p[onset])
        previous_peak = int(peak)
        if amplitude < amp_threshold_us:
            continue

        half_level = p[onset] + amplitude / 2.0
        after = np.flatnonzero(p[peak + 1 :] <= half_level)
        half = int(peak + 1 + after[0]) if after.size else None

        events.append(
            ScrEvent(
                onset_s=stream.t0 + onset / stream.fs,
                peak_s=stream.t0 + peak / stream.fs,
                half_recovery_s=None if half is None else stream.t0 + half / stream.fs,
                amplitude_us=amplitude,
            )
        )

    error_handler.debug(f"Detected {len(events)} SCR events on '{stream.name}'")
    return sorted(events, key=lambda e: e.onset_s)


def write_scr_events(events: List[ScrEvent], path: str) -> None:
    frame = pd.DataFrame(
        [[e.onset_s, e.peak_s, e.half_recovery_s, e.amplitude_us] for e in events],
        columns=EVENT_COLUMNS,
    )
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise FileWriteError(f"Cannot write SCR events to '{path}': {e}")


def read_scr_events(path: str) -> List[ScrEvent]:
    if not Path(path).exists():
        raise MissingFileError(f"SCR event file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    return [
        ScrEvent(
            onset_s=float(row.onset_s),
            peak_s=float(row.peak_s),
            half_recovery_s=None if pd.isna(row.half_recovery_s) else float(row.half_recovery_s),
            amplitude_us=float(row.amplitude_us),
        )
        for row in frame.itertuples(index=False)
    ]
