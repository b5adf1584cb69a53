"""Frequency-selective MIMO channel generation for all five links of the testbed.

Each link (Alice-Bob, Alice-IRS, IRS-Bob, Alice-Eve, IRS-Eve) is a tapped delay
line with i.i.d. Rayleigh taps scaled by a distance path-loss law.  Taps are
quantized to the system sampling grid and converted to per-subcarrier frequency
responses; the reflecting surface enters through the composed effective channel
H_eff = H + R diag(phi) T on every subcarrier.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

SPEED_OF_LIGHT = 299792458.0

# 3GPP TS 36.104 Extended Typical Urban power-delay profile.
ETU_DELAYS_S = np.array([0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0]) * 1e-9
ETU_POWERS_DB = np.array([-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0])


class ChannelModelError(ValueError):
    """Raised when channel-model inputs violate a model assumption."""


@dataclass(frozen=True)
class Geometry:
    """Node positions (meters, 2-D) and large-scale propagation constants."""

    alice: tuple[float, float] = (0.0, 0.0)
    irs: tuple[float, float] = (8.0, 4.0)
    bob: tuple[float, float] = (10.0, 0.0)
    eve: tuple[float, float] = (8.0, 0.0)
    exponent_ab: float = 3.2
    exponent_ai: float = 2.2
    exponent_ib: float = 2.2
    exponent_ae: float = 3.2
    exponent_ie: float = 2.8
    wavelength: float = SPEED_OF_LIGHT / 750e6
    ref_distance: float = 1.0

    def __post_init__(self):
        for name in ("exponent_ab", "exponent_ai", "exponent_ib", "exponent_ae", "exponent_ie"):
            if getattr(self, name) < 2.0:
                raise ValueError(f"path-loss exponent {name} must be >= 2, got {getattr(self, name)}")
        if self.wavelength <= 0 or self.ref_distance <= 0:
            raise ValueError("wavelength and reference distance must be positive")
        for a, b in (("alice", "irs"), ("alice", "bob"), ("alice", "eve"),
                     ("irs", "bob"), ("irs", "eve"), ("bob", "eve")):
            if self.distance(a, b) <= 0:
                raise ValueError(f"nodes {a} and {b} must not coincide")

    def distance(self, node_a: str, node_b: str) -> float:
        pa = np.asarray(getattr(self, node_a), dtype=float)
        pb = np.asarray(getattr(self, node_b), dtype=float)
        return float(np.linalg.norm(pa - pb))

    def link_gain(self, link: str) -> float:
        """Large-scale power gain of one of the links 'ab', 'ai', 'ib', 'ae', 'ie'."""
        ends = {"ab": ("alice", "bob"), "ai": ("alice", "irs"), "ib": ("irs", "bob"),
                "ae": ("alice", "eve"), "ie": ("irs", "eve")}[link]
        d = self.distance(*ends)
        return pathloss(d, getattr(self, f"exponent_{link}"), self.wavelength, self.ref_distance)


@dataclass(frozen=True)
class DelayProfile:
    """Multipath power-delay profile: tap delays in seconds, linear powers summing to 1."""

    delays: np.ndarray
    powers: np.ndarray

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        powers = np.asarray(self.powers, dtype=float)
        if delays.ndim != 1 or powers.shape != delays.shape or delays.size == 0:
            raise ValueError("delays and powers must be matching non-empty 1-D arrays")
        if np.any(np.diff(delays) <= 0):
            raise ValueError("tap delays must be strictly increasing")
        if np.any(powers < 0):
            raise ValueError("tap powers must be non-negative")
        if abs(powers.sum() - 1.0) > 1e-12:
            raise ValueError("tap powers must sum to 1 (within 1e-12)")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "powers", powers)

    @property
    def n_taps(self) -> int:
        return self.delays.size

    @classmethod
    def from_db(cls, delays_s, powers_db) -> "DelayProfile":
        lin = 10.0 ** (np.asarray(powers_db, dtype=float) / 10.0)
        return cls(np.asarray(delays_s, dtype=float), lin / lin.sum())

    @classmethod
    def etu(cls) -> "DelayProfile":
        return cls.from_db(ETU_DELAYS_S, ETU_POWERS_DB)

    @classmethod
    def single_tap(cls) -> "DelayProfile":
        return cls(np.array([0.0]), np.array([1.0]))

    def quantize(self, sample_rate: float, max_taps: int) -> "DelayProfile":
        """Snap delays to the sampling grid, merge collisions, truncate to max_taps slots.

        Powers are renormalized to sum 1 after truncation so that the large-scale
        gain keeps controlling the mean channel power.
        """
        if sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        idx = np.rint(self.delays * sample_rate).astype(int)
        acc: dict[int, float] = {}
        for i, p in zip(idx, self.powers):
            if i < max_taps:
                acc[i] = acc.get(i, 0.0) + p
        if not acc:
            raise ChannelModelError(
                f"no taps left after truncation to {max_taps} samples at fs={sample_rate:g}")
        slots = np.array(sorted(acc), dtype=float)
        powers = np.array([acc[int(s)] for s in slots])
        return DelayProfile(slots / sample_rate, powers / powers.sum())


@dataclass(frozen=True)
class ChannelSet:
    """Per-subcarrier frequency responses of the five links plus generation metadata.

    Array shapes: alice_bob (N, N_B, N_A), alice_irs (N, M, N_A), irs_bob (N, N_B, M),
    alice_eve (N, N_E, N_A), irs_eve (N, N_E, M).
    """

    alice_bob: np.ndarray
    alice_irs: np.ndarray
    irs_bob: np.ndarray
    alice_eve: np.ndarray
    irs_eve: np.ndarray
    geometry: Geometry | None = None
    seed: int | None = None

    def __post_init__(self):
        n = self.alice_bob.shape[0]
        for name in ("alice_irs", "irs_bob", "alice_eve", "irs_eve"):
            if getattr(self, name).shape[0] != n:
                raise ValueError("all five CFR stacks must cover the same subcarrier count")
        n_b, n_a = self.alice_bob.shape[1:]
        m = self.alice_irs.shape[1]
        if self.alice_irs.shape[2] != n_a or self.irs_bob.shape[1:] != (n_b, m):
            raise ValueError("inconsistent Bob-side channel dimensions")
        n_e = self.alice_eve.shape[1]
        if self.alice_eve.shape[2] != n_a or self.irs_eve.shape[1:] != (n_e, m):
            raise ValueError("inconsistent Eve-side channel dimensions")

    @property
    def n_sub(self) -> int:
        return self.alice_bob.shape[0]

    @property
    def n_elem(self) -> int:
        return self.alice_irs.shape[1]

    def zero_eve(self) -> "ChannelSet":
        """Copy with the eavesdropper's links nulled (rate-maximization baseline input)."""
        return replace(self, alice_eve=np.zeros_like(self.alice_eve),
                       irs_eve=np.zeros_like(self.irs_eve))


@dataclass(frozen=True)
class EffectiveChannels:
    """IRS-composed effective frequency responses toward Bob and Eve."""

    bob: np.ndarray  # (N, N_B, N_A)
    eve: np.ndarray  # (N, N_E, N_A)


def pathloss(distance: float, exponent: float, wavelength: float, ref_distance: float = 1.0) -> float:
    """Distance path-loss power gain (lambda / 4 pi)^2 (d / d0)^(-eta)."""
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    if ref_distance <= 0:
        raise ValueError("reference distance must be positive")
    return (wavelength / (4.0 * np.pi)) ** 2 * (distance / ref_distance) ** (-exponent)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def gen_tapped_channel(profile: DelayProfile, rows: int, cols: int, largescale: float, rng) -> np.ndarray:
    """Draw one i.i.d. complex Gaussian matrix per profile tap.

    Returns an (n_taps, rows, cols) array; tap i has per-entry variance
    largescale * profile.powers[i], so the summed per-entry power equals largescale.
    """
    if rows < 1 or cols < 1:
        raise ValueError("matrix dimensions must be at least 1")
    if largescale < 0:
        raise ValueError("large-scale gain must be non-negative")
    gen = _as_rng(rng)
    shape = (profile.n_taps, rows, cols)
    re = gen.standard_normal(shape)
    im = gen.standard_normal(shape)
    scale = np.sqrt(largescale * profile.powers / 2.0)[:, None, None]
    return scale * (re + 1j * im)


def taps_to_cfr(taps: np.ndarray, n_sub: int) -> np.ndarray:
    """Per-subcarrier frequency response of a tap sequence.

    taps[l] is the impulse-response matrix at delay l samples; the output stacks
    sum_l taps[l] exp(-2j pi k l / n_sub) for k = 0..n_sub-1.  Requires the tap
    count not to exceed the subcarrier count (cyclic-prefix sufficiency).
    """
    taps = np.asarray(taps)
    n_taps = taps.shape[0]
    if n_taps > n_sub:
        raise ChannelModelError(f"tap count {n_taps} exceeds subcarrier count {n_sub}")
    k = np.arange(n_sub)
    l = np.arange(n_taps)
    phases = np.exp(-2j * np.pi * np.outer(k, l) / n_sub)  # (N, L)
    return np.einsum("kl,lrc->krc", phases, taps)


def _dense_taps(profile_q: DelayProfile, taps: np.ndarray, sample_rate: float) -> np.ndarray:
    """Embed per-tap matrices into a dense per-sample tap array."""
    idx = np.rint(profile_q.delays * sample_rate).astype(int)
    length = int(idx.max()) + 1
    dense = np.zeros((length,) + taps.shape[1:], dtype=complex)
    for i, t in zip(idx, taps):
        dense[i] += t
    return dense


def build_channel_set(geometry: Geometry, profiles, params, seed: int,
                      sample_rate: float = 30.72e6) -> ChannelSet:
    """Generate the full five-link channel set.

    profiles may be a single DelayProfile applied to every link or a mapping with
    keys 'ab', 'ai', 'ib', 'ae', 'ie'.  Per-link RNG streams are spawned from the
    master seed so links are independent but reproducible.
    """
    links = [("ab", params.n_rx, params.n_tx),
             ("ai", params.n_elem, params.n_tx),
             ("ib", params.n_rx, params.n_elem),
             ("ae", params.n_eve, params.n_tx),
             ("ie", params.n_eve, params.n_elem)]
    if isinstance(profiles, DelayProfile):
        profiles = {name: profiles for name, _, _ in links}
    children = np.random.SeedSequence(seed).spawn(len(links))
    cfrs = {}
    for (name, rows, cols), ss in zip(links, children):
        prof_q = profiles[name].quantize(sample_rate, params.n_sub)
        taps = gen_tapped_channel(prof_q, rows, cols, geometry.link_gain(name),
                                  np.random.default_rng(ss))
        dense = _dense_taps(prof_q, taps, sample_rate)
        cfrs[name] = taps_to_cfr(dense, params.n_sub)
    return ChannelSet(alice_bob=cfrs["ab"], alice_irs=cfrs["ai"], irs_bob=cfrs["ib"],
                      alice_eve=cfrs["ae"], irs_eve=cfrs["ie"],
                      geometry=geometry, seed=seed)


def effective_cfr(ch: ChannelSet, reflect: np.ndarray) -> EffectiveChannels:
    """Compose the IRS into effective responses H + R diag(phi) T per subcarrier."""
    reflect = np.asarray(reflect)
    if reflect.shape != (ch.n_elem,):
        raise ValueError(f"reflect vector must have shape ({ch.n_elem},), got {reflect.shape}")
    scaled_in = reflect[None, :, None] * ch.alice_irs
    bob = ch.alice_bob + ch.irs_bob @ scaled_in
    eve = ch.alice_eve + ch.irs_eve @ scaled_in
    return EffectiveChannels(bob=bob, eve=eve)


def save_channel_set(ch: ChannelSet, path) -> None:
    """Dump a channel set to a self-describing JSON file (re/im interleaved)."""
    def pack(a):
        return {"shape": list(a.shape), "re": a.real.ravel().tolist(), "im": a.imag.ravel().tolist()}

    doc = {"format": "swiptsec-channelset", "version": 1,
           "seed": ch.seed,
           "links": {name: pack(getattr(ch, name))
                     for name in ("alice_bob", "alice_irs", "irs_bob", "alice_eve", "irs_eve")}}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_channel_set(path) -> ChannelSet:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "swiptsec-channelset":
        raise ValueError(f"{path} is not a channel-set dump")

    def unpack(blob):
        shape = tuple(blob["shape"])
        re = np.asarray(blob["re"], dtype=float).reshape(shape)
        im = np.asarray(blob["im"], dtype=float).reshape(shape)
        return re + 1j * im

    links = {name: unpack(doc["links"][name])
             for name in ("alice_bob", "alice_irs", "irs_bob", "alice_eve", "irs_eve")}
    return ChannelSet(**links, geometry=None, seed=doc.get("seed"))
