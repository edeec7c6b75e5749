"""Monte Carlo simulation of one observer's traversal of a highway segment.

An encounter is the trajectory-crossing event: a partner entering at time t
meets the observer (who enters at time 0 at speed v_i > 0) iff t falls in
the open interval where both are inside the segment when their positions
cross. The transmit range enters packet counts and connection times only,
never the encounter decision itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InternalInconsistencyError,
    InvalidParameterError,
    NoProgressError,
)
from .fountain import DecoderState, FileSpec, VectorScheme, encode, vector_sampler
from .traffic import ArrivalRecord, Scenario, sample_velocities

# Lookback margin beyond the longest partner dwell time, in units of
# r / min|v|; arrivals earlier than that can never cross the observer.
ARRIVAL_MARGIN_FACTOR = 10.0


@dataclass(frozen=True)
class EncounterEvent:
    partner_velocity: float
    meeting_time: float
    connection_time: float
    packets_received: float


@dataclass(frozen=True)
class TripResult:
    """Totals for one observer traversal.

    ``encounters_per_class`` is empty for continuous velocity distributions.
    Exchange packet totals are split by partner direction so forward and
    reverse contributions can be compared.
    """

    observer_velocity: float
    travel_time: float
    encounters_per_class: tuple[int, ...]
    n_encounters: int
    infostation_packets: float
    total_packets: float
    throughput: float
    forward_exchange_packets: float
    reverse_exchange_packets: float


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    std_error: float
    trials: int


def packets_per_encounter(v: float, v_prime: float, packet_rate: float, r: float) -> float:
    """Packets transferred in one direction while two nodes stay in range."""
    if v == v_prime:
        raise InvalidParameterError("equal velocities never yield an encounter")
    return packet_rate * r / (2.0 * abs(v - v_prime))


def infostation_download(v: float, packet_rate: float, r: float) -> float:
    """Packets downloadable from a roadside station in one pass."""
    if v == 0:
        raise InvalidParameterError("speed must be nonzero")
    return packet_rate * r / abs(v)


def encounter_of(
    observer_velocity: float,
    arrival: ArrivalRecord,
    d: float,
    r: float,
    packet_rate: float,
) -> EncounterEvent | None:
    """Test whether one background arrival meets the observer.

    The observer enters at time 0 and position 0 moving forward. Returns the
    populated event, or None when the trajectories do not cross inside the
    segment. Same-velocity pairs never meet.
    """
    vi = observer_velocity
    if vi <= 0:
        raise InvalidParameterError("observer must travel forward")
    vp = arrival.v
    t = arrival.entry_time
    ti = d / vi
    if vp > 0:
        if vp == vi:
            return None
        diff = ti - d / vp
        lo, hi = min(0.0, diff), max(0.0, diff)
        if not lo < t < hi:
            return None
        meet = vp * t / (vp - vi)
    else:
        if not -d / abs(vp) < t < ti:
            return None
        meet = (d - vp * t) / (vi - vp)
    rel = abs(vi - vp)
    return EncounterEvent(
        partner_velocity=vp,
        meeting_time=meet,
        connection_time=r / rel,
        packets_received=packet_rate * r / (2.0 * rel),
    )


def _trip_window(scenario: Scenario) -> tuple[float, float]:
    vmin = scenario.min_speed()
    lookback = scenario.d / vmin + ARRIVAL_MARGIN_FACTOR * scenario.r / vmin
    return -lookback, 0.0  # upper bound is extended per observer


def _encounter_mask(
    entry: np.ndarray, vel: np.ndarray, d: float, ti: float
) -> np.ndarray:
    """Vectorized crossing test for arrays of background arrivals."""
    dwell = d / vel
    diff = ti - dwell
    fwd_hit = (entry > np.minimum(0.0, diff)) & (entry < np.maximum(0.0, diff))
    rev_hit = (entry > -np.abs(dwell)) & (entry < ti)
    return np.where(vel > 0, fwd_hit, rev_hit)


def simulate_trip(
    scenario: Scenario, observer_velocity: float, rng: np.random.Generator
) -> TripResult:
    """Simulate one traversal: draw background traffic, count crossings.

    Background arrivals are generated on a window long enough to contain
    every entry time that could satisfy the crossing condition.
    """
    vi = float(observer_velocity)
    if vi <= 0:
        raise InvalidParameterError("observer must travel forward")
    d, r = scenario.d, scenario.r
    packet_rate = scenario.packet_rate
    ti = d / vi
    w0, _ = _trip_window(scenario)
    w1 = ti
    n = rng.poisson(scenario.lam * (w1 - w0)) if scenario.lam > 0 else 0
    if n:
        entry = rng.uniform(w0, w1, n)
        vel, cls = sample_velocities(scenario.velocity, n, rng)
        mask = _encounter_mask(entry, vel, d, ti)
        enc_vel = vel[mask]
    else:
        enc_vel = np.empty(0)
        cls = None
    packets = packet_rate * r / (2.0 * np.abs(vi - enc_vel))
    info = packet_rate * r / vi
    total = info + float(packets.sum())
    if scenario.is_discrete:
        m = scenario.velocity.m
        counts = (
            np.bincount(cls[mask], minlength=m) if n else np.zeros(m, dtype=int)
        )
        per_class = tuple(int(c) for c in counts)
    else:
        per_class = ()
    return TripResult(
        observer_velocity=vi,
        travel_time=ti,
        encounters_per_class=per_class,
        n_encounters=int(enc_vel.size),
        infostation_packets=info,
        total_packets=total,
        throughput=total / ti,
        forward_exchange_packets=float(packets[enc_vel > 0].sum()),
        reverse_exchange_packets=float(packets[enc_vel < 0].sum()),
    )


def monte_carlo_throughput(
    scenario: Scenario,
    observer_velocity: float,
    trials: int,
    rng: np.random.Generator,
) -> MonteCarloEstimate:
    """Mean and standard error of the trip throughput over independent trips.

    Trials are consumed sequentially from ``rng``; callers wanting parallel
    execution should hand each worker its own spawned substream and reduce
    the per-trial results in index order.
    """
    if trials < 2:
        raise InvalidParameterError("need at least 2 trials")
    vals = np.empty(trials)
    for i in range(trials):
        vals[i] = simulate_trip(scenario, observer_velocity, rng).throughput
    return MonteCarloEstimate(
        mean=float(vals.mean()),
        std_error=float(vals.std(ddof=1) / math.sqrt(trials)),
        trials=trials,
    )


def _segment_events(
    scenario: Scenario, vi: float, rng: np.random.Generator
) -> list[tuple[float, int]]:
    """Packet batches for one segment: (time offset, whole packets)."""
    d, r = scenario.d, scenario.r
    packet_rate = scenario.packet_rate
    ti = d / vi
    events = [(0.0, math.floor(packet_rate * r / vi))]
    if scenario.lam > 0:
        w0, _ = _trip_window(scenario)
        n = rng.poisson(scenario.lam * (ti - w0))
        if n:
            entry = rng.uniform(w0, ti, n)
            vel, _ = sample_velocities(scenario.velocity, n, rng)
            mask = _encounter_mask(entry, vel, d, ti)
            enc_vel = vel[mask]
            enc_t = entry[mask]
            meet = np.where(
                enc_vel > 0,
                enc_vel * enc_t / (enc_vel - vi),
                (d - enc_vel * enc_t) / (vi - enc_vel),
            )
            counts = np.floor(packet_rate * r / (2.0 * np.abs(vi - enc_vel)))
            events.extend(
                (float(t), int(c)) for t, c in zip(meet, counts) if c > 0
            )
    events.sort()
    return events


def simulate_download_time(
    scenario: Scenario,
    observer_velocity: float,
    file: FileSpec,
    scheme: VectorScheme,
    rng: np.random.Generator,
    segment_cap: int = 1000,
) -> tuple[float, int, int]:
    """Event-level download of one file across consecutive segments.

    Each segment starts with a roadside-station batch of
    floor(packet_rate*r/v) packets; each encounter delivers its whole-packet
    count at the crossing time. Every packet carries an independently
    sampled encoding vector. Returns (travel time consumed, packets
    received, segments fully or partially traversed) at the moment the
    decoder reaches full rank.

    Raises :class:`NoProgressError` if the decode is still incomplete after
    ``segment_cap`` segments (for example with no traffic and a station
    batch of zero packets).
    """
    vi = float(observer_velocity)
    if vi <= 0:
        raise InvalidParameterError("observer must travel forward")
    if segment_cap < 1:
        raise InvalidParameterError("segment cap must be >= 1")
    sampler = vector_sampler(scheme, file.k)
    arr_rng, vec_rng, file_rng = rng.spawn(3)
    blocks = [file_rng.bytes(file.block_bytes) for _ in range(file.k)]
    decoder = DecoderState(file.k)
    ti = scenario.d / vi
    received = 0
    for segment in range(segment_cap):
        for offset, count in _segment_events(scenario, vi, arr_rng):
            for _ in range(count):
                packet = encode(blocks, sampler(vec_rng))
                received += 1
                decoder.receive(packet)
                if decoder.rank == file.k:
                    decoded = decoder.try_decode()
                    if decoded != blocks:
                        raise InternalInconsistencyError(
                            "decoded blocks disagree with the encoded file"
                        )
                    return segment * ti + offset, received, segment + 1
    raise NoProgressError(
        f"decode rank {decoder.rank}/{file.k} after {segment_cap} segments"
    )
