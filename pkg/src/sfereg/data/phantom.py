from concurrent.futures import ThreadPoolExecutor

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field
from scipy.ndimage import gaussian_filter

from sfereg.errors import ConfigError
from sfereg.geometry.volume import Modality, Volume
from sfereg.util import derive_seed, model_digest

Vec3 = tuple[float, float, float]

MAX_JITTER_ATTEMPTS = 100


class PhantomConfig(BaseModel):
    """
    Geometry and tracer settings for one torso phantom.

    Positions are voxel offsets from the volume center along (x, y, z);
    +y is anterior, z is axial.
    """

    dims: tuple[int, int, int] = Field((64, 64, 64), description="(nx, ny, nz) voxels")
    spacing_mm: float = Field(6.8, description="Isotropic voxel size in mm")
    torso_half_axes: Vec3 = Field((26.0, 18.0, 28.0), description="Torso ellipsoid half-axes")
    lung_half_axes: Vec3 = Field((7.0, 9.0, 14.0), description="Half-axes of each lung")
    lung_offset: Vec3 = Field((11.0, 0.0, 2.0), description="Right lung offset; the left lung mirrors x")
    spine_radius: float = Field(3.0, description="Radius of the axial spine cylinder")
    spine_offset_y: float = Field(-13.0, description="Posterior offset of the spine axis")
    heart_center: Vec3 = Field((-4.0, 8.0, 0.0), description="Center of the myocardial shell")
    heart_radii: Vec3 = Field((9.0, 7.0, 7.0), description="Outer half-axes of the myocardial shell")
    heart_thickness: float = Field(2.5, description="Wall thickness of the myocardial shell")
    mu_soft_tissue: float = Field(0.15, description="Soft tissue attenuation (cm^-1)")
    mu_lung: float = Field(0.04, description="Lung attenuation (cm^-1)")
    mu_bone: float = Field(0.25, description="Bone attenuation (cm^-1)")
    mu_myocardium: float = Field(0.16, description="Myocardial wall attenuation (cm^-1)")
    myocardium_uptake: float = Field(1.0, description="Tracer uptake of the myocardium before normalization")
    background_uptake: float = Field(0.05, description="Tracer uptake of the rest of the torso")
    blur_sigma: float = Field(1.0, description="Gaussian blur sigma in voxels (SPECT resolution)")
    noise_level: float = Field(0.05, description="Relative Poisson noise at unit uptake; 0 disables noise")
    seed: int = Field(0, description="Seed of the noise realization")

    def center(self) -> np.ndarray:
        return (np.asarray(self.dims, dtype=np.float64) - 1.0) / 2.0

    def scaled(self, factor: float, dims: tuple[int, int, int]) -> "PhantomConfig":
        """Same anatomy on a grid scaled by `factor` (e.g. 0.5 for 64^3 -> 32^3)."""

        def vec(v: Vec3) -> Vec3:
            return (v[0] * factor, v[1] * factor, v[2] * factor)

        return self.model_copy(
            update={
                "dims": dims,
                "spacing_mm": self.spacing_mm / factor,
                "torso_half_axes": vec(self.torso_half_axes),
                "lung_half_axes": vec(self.lung_half_axes),
                "lung_offset": vec(self.lung_offset),
                "spine_radius": self.spine_radius * factor,
                "spine_offset_y": self.spine_offset_y * factor,
                "heart_center": vec(self.heart_center),
                "heart_radii": vec(self.heart_radii),
                "heart_thickness": self.heart_thickness * factor,
            }
        )

    def validate_geometry(self) -> None:
        n = np.asarray(self.dims, dtype=np.float64)
        c = self.center()
        bodies = {
            "torso": (c, np.asarray(self.torso_half_axes)),
            "right lung": (c + self.lung_offset, np.asarray(self.lung_half_axes)),
            "left lung": (c + np.multiply(self.lung_offset, (-1, 1, 1)), np.asarray(self.lung_half_axes)),
            "heart": (c + self.heart_center, np.asarray(self.heart_radii)),
            "spine": (
                c + (0.0, self.spine_offset_y, 0.0),
                np.array([self.spine_radius, self.spine_radius, 0.0]),
            ),
        }
        for name, (center, half) in bodies.items():
            if np.any(half < 0) or np.any(center - half < 0) or np.any(center + half > n - 1):
                raise ConfigError(f"Phantom {name} does not fit inside dims {self.dims}")
        if min(self.heart_radii) <= self.heart_thickness:
            raise ConfigError("Heart wall thickness must be smaller than every heart radius")
        coefficients = (self.mu_soft_tissue, self.mu_lung, self.mu_bone, self.mu_myocardium)
        if min(coefficients) <= 0:
            raise ConfigError("Attenuation coefficients must be positive")


class PhantomJitter(BaseModel):
    """Fractional perturbation ranges; each value v becomes v * (1 + U(-f, f))."""

    torso_half_axes: float = Field(0.1, ge=0, lt=1)
    lung_half_axes: float = Field(0.1, ge=0, lt=1)
    spine_radius: float = Field(0.1, ge=0, lt=1)
    heart_center: float = Field(0.1, ge=0, lt=1)
    heart_radii: float = Field(0.1, ge=0, lt=1)
    heart_thickness: float = Field(0.1, ge=0, lt=1)
    myocardium_uptake: float = Field(0.1, ge=0, lt=1)
    background_uptake: float = Field(0.1, ge=0, lt=1)

    @classmethod
    def none(cls) -> "PhantomJitter":
        return cls(**{name: 0.0 for name in cls.model_fields})


def _ellipsoid(grid: tuple[np.ndarray, ...], center, half_axes) -> np.ndarray:
    z, y, x = grid
    return (
        ((x - center[0]) / half_axes[0]) ** 2
        + ((y - center[1]) / half_axes[1]) ** 2
        + ((z - center[2]) / half_axes[2]) ** 2
    ) <= 1.0


def _masks(cfg: PhantomConfig) -> dict[str, np.ndarray]:
    nx, ny, nz = cfg.dims
    grid = np.meshgrid(
        np.arange(nz, dtype=np.float64),
        np.arange(ny, dtype=np.float64),
        np.arange(nx, dtype=np.float64),
        indexing="ij",
    )
    z, y, x = grid
    c = cfg.center()

    torso = _ellipsoid(grid, c, cfg.torso_half_axes)
    lungs = _ellipsoid(grid, c + cfg.lung_offset, cfg.lung_half_axes) | _ellipsoid(
        grid, c + np.multiply(cfg.lung_offset, (-1, 1, 1)), cfg.lung_half_axes
    )
    spine_axis = c + (0.0, cfg.spine_offset_y, 0.0)
    spine = ((x - spine_axis[0]) ** 2 + (y - spine_axis[1]) ** 2 <= cfg.spine_radius**2) & torso

    heart_center = c + cfg.heart_center
    inner = np.asarray(cfg.heart_radii) - cfg.heart_thickness
    shell = _ellipsoid(grid, heart_center, cfg.heart_radii) & ~_ellipsoid(grid, heart_center, inner)
    # half shell: the base is open toward +x
    myocardium = shell & (x <= heart_center[0])
    return {"torso": torso, "lungs": lungs & torso, "spine": spine, "myocardium": myocardium}


def mean_normalize(data: np.ndarray) -> np.ndarray:
    mean = data.mean()
    if mean <= 0:
        return data
    return data / mean


def generate_phantom(cfg: PhantomConfig) -> tuple[Volume, Volume]:
    """Registered (mu-map, SPECT) pair; the SPECT is blurred, noisy and mean-normalized."""
    cfg.validate_geometry()
    masks = _masks(cfg)

    mu = np.zeros(masks["torso"].shape, dtype=np.float64)
    mu[masks["torso"]] = cfg.mu_soft_tissue
    mu[masks["lungs"]] = cfg.mu_lung
    mu[masks["spine"]] = cfg.mu_bone
    mu[masks["myocardium"]] = cfg.mu_myocardium

    activity = np.zeros_like(mu)
    activity[masks["torso"]] = cfg.background_uptake
    activity[masks["myocardium"]] = cfg.myocardium_uptake
    if cfg.blur_sigma > 0:
        activity = gaussian_filter(activity, sigma=cfg.blur_sigma, mode="constant")
    if cfg.noise_level > 0:
        counts_per_unit = 1.0 / cfg.noise_level**2
        rng = np.random.default_rng(cfg.seed)
        activity = rng.poisson(np.clip(activity, 0, None) * counts_per_unit) / counts_per_unit
    activity = mean_normalize(np.clip(activity, 0, None))

    spacing = (cfg.spacing_mm,) * 3
    return (
        Volume(mu.astype(np.float32), spacing, Modality.MU_MAP),
        Volume(activity.astype(np.float32), spacing, Modality.SPECT),
    )


def jitter_config(base: PhantomConfig, jitter: PhantomJitter, rng: np.random.Generator) -> PhantomConfig:
    update = {}
    for name, fraction in jitter.model_dump().items():
        value = getattr(base, name)
        if isinstance(value, tuple):
            factors = 1.0 + rng.uniform(-fraction, fraction, size=len(value))
            update[name] = tuple(float(v * f) for v, f in zip(value, factors))
        else:
            update[name] = float(value * (1.0 + rng.uniform(-fraction, fraction)))
    member = base.model_copy(update=update)
    # identical anatomy keeps the identical noise realization
    return member.model_copy(update={"seed": derive_seed(base.seed, model_digest(member))})


def cohort_configs(
    n: int, base: PhantomConfig, jitter: PhantomJitter, master_seed: int
) -> list[PhantomConfig]:
    if n < 1:
        raise ConfigError(f"Cohort size must be at least 1, got {n}")
    configs = []
    for index in range(n):
        rng = np.random.default_rng(derive_seed(master_seed, f"phantom-{index}"))
        for _ in range(MAX_JITTER_ATTEMPTS):
            member = jitter_config(base, jitter, rng)
            try:
                member.validate_geometry()
            except ConfigError:
                continue
            configs.append(member)
            break
        else:
            raise ConfigError(
                f"Phantom {index}: no valid geometry after {MAX_JITTER_ATTEMPTS} jitter draws"
            )
    return configs


def generate_cohort(
    n: int,
    base: PhantomConfig,
    jitter: PhantomJitter,
    master_seed: int,
    jobs: int = 1,
) -> list[tuple[Volume, Volume]]:
    configs = cohort_configs(n, base, jitter, master_seed)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        cohort = list(pool.map(generate_phantom, configs))
    logger.info(f"Generated {len(cohort)} phantoms at {base.dims}")
    return cohort
