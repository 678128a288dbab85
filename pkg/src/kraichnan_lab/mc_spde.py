"""Monte Carlo transport SPDE on a truncated 2D Fourier lattice.

The scalar is advected by a divergence-free Gaussian field built from
lattice modes k with weights sigma_k^2 = (1+|k|^2)^{-(d/2+alpha)} and
polarization k_perp/|k|.  The state lives on the mode band |k|_inf <= n_max;
convolutions are evaluated exactly (zero-padded FFT, no aliasing into the
band), and modes generated outside the band are dropped, which acts as an
absorbing spectral boundary.  The Ito drift uses the exact per-mode
corrector c_{Lam,xi} = xi^T Q_Lam(0) xi.

Randomness comes from counter-based Philox streams keyed by (seed, step
index), so results are bit-identical for a fixed (seed, n_samples)
regardless of how the work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, InvalidSampleRate

__all__ = [
    "LatticeConfig", "NoiseModes", "FieldSample", "EnsembleStats",
    "build_noise_modes", "default_dt", "em_step", "run_ensemble",
    "sobolev_estimate", "lattice_master_rate",
]


@dataclass(frozen=True)
class LatticeConfig:
    """Truncated-lattice run configuration (d = 2 only)."""
    n_max: int
    alpha: float
    dt: float
    n_samples: int
    seed: int = 0
    d: int = 2

    def __post_init__(self):
        if self.d != 2:
            raise DomainError("Monte Carlo lattice runs are 2-d only")
        if self.n_max < 4:
            raise DomainError("n_max must be >= 4")
        if self.dt <= 0:
            raise DomainError("dt must be positive")
        if self.n_samples < 1:
            raise DomainError("n_samples must be >= 1")
        if self.alpha <= 0:
            raise DomainError("alpha must be positive")


@dataclass
class NoiseModes:
    """Half-lattice noise description plus the FFT scatter plan."""
    cfg: LatticeConfig
    k_half: np.ndarray        # (n_half, 2) int, kx>0 or (kx=0, ky>0)
    sigma: np.ndarray         # (n_half,)
    e_pol: np.ndarray         # (n_half, 2) unit polarizations, e . k = 0
    fft_size: int
    covariance_matrix: np.ndarray   # 2x2: sum over full lattice sigma^2 e e^T
    corrector_grid: np.ndarray      # c_{Lam,xi} on the rfft2 layout
    band_mask: np.ndarray           # rfft2 layout bool, |k|_inf <= n_max
    kx_grid: np.ndarray
    ky_grid: np.ndarray

    @property
    def n_half(self) -> int:
        return len(self.sigma)


def build_noise_modes(cfg: LatticeConfig) -> NoiseModes:
    """Weights, polarizations and the exact per-mode Ito corrector."""
    n = cfg.n_max
    reps = []
    for kx in range(0, n + 1):
        for ky in range(-n, n + 1):
            if kx == 0 and ky <= 0:
                continue
            reps.append((kx, ky))
    k_half = np.array(reps, dtype=int)
    k2 = (k_half ** 2).sum(axis=1).astype(float)
    sigma = (1.0 + k2) ** (-(cfg.d / 2.0 + cfg.alpha) / 2.0)
    norm = np.sqrt(k2)
    e_pol = np.stack([-k_half[:, 1] / norm, k_half[:, 0] / norm], axis=1)

    # full lattice covariance at zero separation: the +-k pair doubles e x e
    cov = 2.0 * np.einsum("m,mi,mj->ij", sigma ** 2, e_pol, e_pol)

    # FFT size: >= 3 n + 2 keeps the quadratic product alias-free inside the
    # band; even size for the rfft layout
    fft_size = 3 * n + 2
    if fft_size % 2:
        fft_size += 1

    N = fft_size
    ky_grid = ((np.arange(N) + N // 2) % N) - N // 2
    kx_grid = np.arange(N // 2 + 1)
    KY = ky_grid[:, None].astype(float)
    KX = kx_grid[None, :].astype(float)
    corrector = (cov[0, 0] * KX ** 2 + 2.0 * cov[0, 1] * KX * KY
                 + cov[1, 1] * KY ** 2)
    band = (np.abs(KX) <= n) & (np.abs(KY) <= n)
    corrector = np.where(band, corrector, 0.0)

    return NoiseModes(cfg=cfg, k_half=k_half, sigma=sigma, e_pol=e_pol,
                      fft_size=N, covariance_matrix=cov,
                      corrector_grid=corrector, band_mask=band,
                      kx_grid=kx_grid, ky_grid=ky_grid)


def default_dt(noise: NoiseModes) -> float:
    """Default time step 0.1 / max_xi c_{Lam,xi}."""
    return 0.1 / float(noise.corrector_grid.max())


@dataclass
class FieldSample:
    """One realization of the scalar, stored as the rfft2 half-spectrum of a
    real field on the padded grid; the reality constraint is structural for
    kx > 0 and re-imposed exactly on the kx = 0 column after each step."""
    spec: np.ndarray   # (N, N//2+1) complex
    n_max: int
    fft_size: int
    real_field: bool = True

    @staticmethod
    def zeros(noise: NoiseModes) -> "FieldSample":
        N = noise.fft_size
        return FieldSample(spec=np.zeros((N, N // 2 + 1), dtype=complex),
                           n_max=noise.cfg.n_max, fft_size=N)

    @staticmethod
    def from_modes(noise: NoiseModes, modes: Dict[Tuple[int, int], complex]) -> "FieldSample":
        """Build a sample from mode amplitudes; the conjugate partner of every
        supplied mode is set automatically so the field is real."""
        out = FieldSample.zeros(noise)
        for (kx, ky), val in modes.items():
            if max(abs(kx), abs(ky)) > out.n_max:
                raise DomainError(f"mode {(kx, ky)} outside the lattice")
            out._set_pair(kx, ky, complex(val))
        _enforce_reality(out.spec[None, :, :])
        return out

    def _set_pair(self, kx, ky, val):
        N = self.fft_size
        if kx > 0 or (kx == 0 and ky >= 0):
            self.spec[ky % N, kx] = val
        if kx == 0:
            self.spec[(-ky) % N, 0] = np.conj(val)
        # kx < 0 representatives live implicitly at (-kx, -ky)
        if kx < 0:
            self.spec[(-ky) % N, -kx] = np.conj(val)

    def amplitude(self, k: Tuple[int, int]) -> complex:
        kx, ky = k
        if max(abs(kx), abs(ky)) > self.n_max:
            raise DomainError(f"mode {k} outside the lattice")
        N = self.fft_size
        if kx >= 0:
            return complex(self.spec[ky % N, kx])
        return complex(np.conj(self.spec[(-ky) % N, -kx]))

    def as_dict(self) -> Dict[Tuple[int, int], complex]:
        n = self.n_max
        return {(kx, ky): self.amplitude((kx, ky))
                for kx in range(-n, n + 1) for ky in range(-n, n + 1)}


def _enforce_reality(batch: np.ndarray) -> None:
    """Make the kx = 0 column exactly Hermitian (in place, batched)."""
    col = batch[:, :, 0]
    flipped = np.conj(col[:, (-np.arange(col.shape[1])) % col.shape[1]])
    batch[:, :, 0] = 0.5 * (col + flipped)
    batch[:, 0, 0] = batch[:, 0, 0].real


def _scatter_velocity(noise: NoiseModes, dbeta: np.ndarray):
    """Velocity-increment spectra (two components) from half-lattice complex
    increments dbeta of shape (S, n_half)."""
    N = noise.fft_size
    S = dbeta.shape[0]
    kx = noise.k_half[:, 0]
    ky = noise.k_half[:, 1]
    vs = []
    for c in range(2):
        V = np.zeros((S, N, N // 2 + 1), dtype=complex)
        amp = noise.sigma * noise.e_pol[:, c]
        vals = amp[None, :] * dbeta
        pos = kx > 0
        V[:, ky[pos] % N, kx[pos]] = vals[:, pos]
        zc = ~pos  # kx == 0, ky > 0 representatives
        V[:, ky[zc] % N, 0] = vals[:, zc]
        V[:, (-ky[zc]) % N, 0] = np.conj(vals[:, zc])
        vs.append(V)
    return vs


def _em_step_batch(batch: np.ndarray, noise: NoiseModes, dt: float,
                   dbeta: np.ndarray) -> np.ndarray:
    """One Euler-Maruyama step on a batch (S, N, N//2+1) of spectra."""
    N = noise.fft_size
    with np.errstate(over="ignore", invalid="ignore"):
        Vx, Vy = _scatter_velocity(noise, dbeta)
        ux = np.fft.irfft2(Vx, s=(N, N)) * (N * N)
        uy = np.fft.irfft2(Vy, s=(N, N)) * (N * N)
        KX = noise.kx_grid[None, None, :]
        KY = noise.ky_grid[None, :, None]
        gx = np.fft.irfft2(1j * KX * batch, s=(N, N)) * (N * N)
        gy = np.fft.irfft2(1j * KY * batch, s=(N, N)) * (N * N)
        adv = np.fft.rfft2(ux * gx + uy * gy) / (N * N)
        out = batch - adv - 0.5 * noise.corrector_grid[None, :, :] * dt * batch
        out *= noise.band_mask[None, :, :]
        _enforce_reality(out)
    return out


def em_step(sample: FieldSample, noise: NoiseModes, dt: float,
            rng: Optional[np.random.Generator] = None,
            dbeta: Optional[np.ndarray] = None) -> FieldSample:
    """Single-sample Euler-Maruyama step.  Complex mode increments dbeta
    (E|dbeta|^2 = dt) may be passed explicitly; otherwise they are drawn from
    rng."""
    if dbeta is None:
        if rng is None:
            raise DomainError("em_step needs either rng or explicit dbeta")
        z = rng.standard_normal((noise.n_half, 2))
        dbeta = math.sqrt(dt / 2.0) * (z[:, 0] + 1j * z[:, 1])
    out = _em_step_batch(sample.spec[None, :, :], noise, dt,
                         np.asarray(dbeta)[None, :])
    return FieldSample(spec=out[0], n_max=sample.n_max,
                       fft_size=sample.fft_size)


def _step_noise(cfg: LatticeConfig, n_half: int, step_index: int) -> np.ndarray:
    """Counter-based stream for one global step: Philox keyed by
    (seed, step index); sample i reads block i of the stream."""
    key = np.array([np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(step_index)], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    z = gen.standard_normal((cfg.n_samples, n_half, 2))
    return math.sqrt(cfg.dt / 2.0) * (z[..., 0] + 1j * z[..., 1])


def _band_modes(n_max: int):
    """Distinct representatives covering the full band: kx = 0 column in full
    plus kx >= 1 half; with multiplicity 2 for the implicit (-kx, -ky)."""
    reps = []
    mult = []
    for ky in range(-n_max, n_max + 1):
        reps.append((0, ky))
        mult.append(1)
    for kx in range(1, n_max + 1):
        for ky in range(-n_max, n_max + 1):
            reps.append((kx, ky))
            mult.append(2)
    return np.array(reps, dtype=int), np.array(mult, dtype=float)


@dataclass
class EnsembleStats:
    """Per-mode spectrum estimates at one record time.  mode list covers the
    half band (kx >= 0); |rho(-k)|^2 = |rho(k)|^2 by reality."""
    time: float
    n_samples: int
    modes: np.ndarray            # (M, 2) int
    multiplicity: np.ndarray     # 1 for kx = 0, else 2
    mean_spectrum: np.ndarray    # (M,)
    std_err: np.ndarray          # (M,)
    l2_mean: float
    l2_std_err: float
    diff_mean: Optional[np.ndarray] = None      # per-mode mean of the power
    diff_std_err: Optional[np.ndarray] = None   # increment since last record
    diff_dt: Optional[float] = None
    n_invalid: int = 0

    def spectrum_map(self) -> Dict[Tuple[int, int], float]:
        out = {}
        for (kx, ky), v in zip(self.modes, self.mean_spectrum):
            out[(int(kx), int(ky))] = float(v)
            if kx > 0:
                out[(-int(kx), -int(ky))] = float(v)
        return out

    def to_csv(self) -> str:
        lines = ["t,kx,ky,mean_sq,std_err"]
        for (kx, ky), m, s in zip(self.modes, self.mean_spectrum, self.std_err):
            lines.append(f"{self.time!r},{kx},{ky},{m!r},{s!r}")
        return "\n".join(lines) + "\n"


def _collect_stats(batch, noise, t, prev_powers, prev_time, valid):
    N = noise.fft_size
    modes, mult = _band_modes(noise.cfg.n_max)
    iy = modes[:, 1] % N
    ix = modes[:, 0]
    powers = np.abs(batch[:, iy, ix]) ** 2          # (S, M)
    pw = powers[valid]
    nv = pw.shape[0]
    mean = pw.mean(axis=0)
    serr = pw.std(axis=0, ddof=1) / math.sqrt(nv) if nv > 1 else np.zeros_like(mean)
    l2 = (pw * mult[None, :]).sum(axis=1)
    stats = EnsembleStats(
        time=t, n_samples=nv, modes=modes, multiplicity=mult,
        mean_spectrum=mean, std_err=serr,
        l2_mean=float(l2.mean()),
        l2_std_err=float(l2.std(ddof=1) / math.sqrt(nv)) if nv > 1 else 0.0,
        n_invalid=int((~valid).sum()))
    if prev_powers is not None:
        diff = (powers - prev_powers)[valid]
        stats.diff_mean = diff.mean(axis=0)
        stats.diff_std_err = diff.std(axis=0, ddof=1) / math.sqrt(nv) if nv > 1 else np.zeros_like(mean)
        stats.diff_dt = t - prev_time
    return stats, powers


def run_ensemble(cfg: LatticeConfig, initial: FieldSample, t_final: float,
                 record_times: Sequence[float]) -> List[EnsembleStats]:
    """Evolve n_samples independent copies of `initial` and return spectrum
    statistics at the requested times (snapped to the step grid).

    Bit-identical output for identical cfg; samples that overflow are
    dropped from the statistics, and more than 1% of them is an error.
    """
    record_times = sorted(set(float(t) for t in record_times))
    if any(t < 0 or t > t_final + 1e-12 for t in record_times):
        raise DomainError("record times must lie in [0, t_final]")
    noise = build_noise_modes(cfg)
    if initial.fft_size != noise.fft_size or initial.n_max != cfg.n_max:
        raise DomainError("initial sample does not match the lattice config")
    n_steps = int(round(t_final / cfg.dt))
    record_steps = sorted(set(min(int(round(t / cfg.dt)), n_steps)
                              for t in record_times))

    batch = np.repeat(initial.spec[None, :, :], cfg.n_samples, axis=0)
    valid = np.ones(cfg.n_samples, dtype=bool)
    out: List[EnsembleStats] = []
    prev_powers = None
    prev_time = None

    def record(step_index):
        nonlocal prev_powers, prev_time
        t = step_index * cfg.dt
        stats, prev_powers = _collect_stats(batch, noise, t, prev_powers,
                                            prev_time, valid)
        prev_time = t
        out.append(stats)

    if 0 in record_steps:
        record(0)
    for step_index in range(1, n_steps + 1):
        dbeta = _step_noise(cfg, noise.n_half, step_index - 1)
        batch = _em_step_batch(batch, noise, cfg.dt, dbeta)
        bad = ~np.isfinite(batch).all(axis=(1, 2))
        if bad.any():
            valid &= ~bad
            batch[bad] = 0.0
            frac_bad = 1.0 - valid.sum() / cfg.n_samples
            if frac_bad > 0.01:
                raise InvalidSampleRate(
                    f"{frac_bad:.1%} of samples overflowed by t = "
                    f"{step_index * cfg.dt:.4g}")
        if step_index in record_steps:
            record(step_index)
    return out


def lattice_master_rate(noise: NoiseModes, spectrum: Dict[Tuple[int, int], float]):
    """Exact master-equation rate of the truncated lattice model,

        d/dt E|rho(k)|^2 = sum_j kappa(k, k-j) [a(k-j)] - c_k a(k),

    with gains only from in-band modes (dropped modes act as absorbers).
    Returns a map over the half band, like EnsembleStats."""
    cfg = noise.cfg
    n = cfg.n_max
    size = 2 * n + 1
    a = np.zeros((size, size))
    for (kx, ky), v in spectrum.items():
        a[kx + n, ky + n] = v
    rates = np.zeros_like(a)
    KX, KY = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1),
                         indexing="ij")
    for (kx, ky), sig, e in zip(noise.k_half, noise.sigma, noise.e_pol):
        for sx, sy in ((kx, ky), (-kx, -ky)):
            w = sig ** 2 * (e[0] * KX + e[1] * KY) ** 2
            shifted = np.zeros_like(a)
            x0, x1 = max(0, sx), min(size, size + sx)
            y0, y1 = max(0, sy), min(size, size + sy)
            shifted[x0:x1, y0:y1] = a[x0 - sx:x1 - sx, y0 - sy:y1 - sy]
            rates += w * (shifted - a)
    out = {}
    for kx in range(0, n + 1):
        for ky in range(-n, n + 1):
            out[(kx, ky)] = float(rates[kx + n, ky + n])
    return out


def sobolev_estimate(stats: EnsembleStats, s_query: float):
    """(value, std_err) of sum_{k != 0} |k|^{-2s} E|rho(k)|^2; the k = 0 mode
    is excluded (homogeneous norm).  Standard errors are combined assuming
    independent modes, which overstates nothing at the 3-sigma level used in
    the acceptance checks."""
    k2 = (stats.modes.astype(float) ** 2).sum(axis=1)
    keep = k2 > 0
    w = stats.multiplicity[keep] * k2[keep] ** (-s_query)
    value = float((w * stats.mean_spectrum[keep]).sum())
    err = float(math.sqrt(((w * stats.std_err[keep]) ** 2).sum()))
    return value, err
