"""Labelled game-image corpora: synthetic generation, manifests, game-disjoint
splits, resizing and training-time augmentation.

Every image carries two factors. The *genre* fixes the content layout (which
geometric primitives appear where); the *game* fixes the rendering style
(palette, background texture, noise, pixelation). Games of the same genre
therefore share content and differ only in style.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ConfigError, DataError


class ManifestError(DataError):
    code = "manifest_invalid"


class DuplicateGameError(ManifestError):
    code = "duplicate_game"


class InsufficientGamesError(ManifestError):
    code = "insufficient_games"


class InfeasibleSplitError(DataError):
    code = "infeasible_split"


REAL_STYLES = ("retro", "modern", "photoreal")
SYNTHETIC_STYLES = ("pixelated", "flat", "textured")

GENRE_NAMES = (
    "discs", "pitch", "track", "ring", "court",
    "cross", "pyramid", "blocks", "frames", "ladder",
)


@dataclass(frozen=True)
class GenreLabel:
    id: int
    name: str


@dataclass(frozen=True)
class StyleCategory:
    id: int
    name: str


@dataclass
class ImageSample:
    pixels: np.ndarray
    genre: int
    game: str
    style: int

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3:
            raise DataError(f"expected h x w x 3 pixels, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
            raise DataError("pixel values must be finite and within [0, 1]")


@dataclass(frozen=True)
class GameEntry:
    id: str
    genre_id: int
    style_id: int
    images: tuple[str, ...] = ()
    generator_ref: dict | None = None

    @property
    def n_images(self) -> int:
        if self.generator_ref is not None:
            return int(self.generator_ref["n_images"])
        return len(self.images)


@dataclass
class DatasetManifest:
    genres: list[GenreLabel]
    styles: list[StyleCategory]
    games: list[GameEntry]
    image_size: tuple[int, int]
    generator: dict | None = None
    root: Path | None = None

    def __post_init__(self):
        validate_manifest(self)

    @property
    def n_genres(self) -> int:
        return len(self.genres)

    def game(self, game_id: str) -> GameEntry:
        for g in self.games:
            if g.id == game_id:
                return g
        raise KeyError(game_id)

    def games_by_genre(self) -> dict[int, list[GameEntry]]:
        out: dict[int, list[GameEntry]] = {g.id: [] for g in self.genres}
        for game in self.games:
            out[game.genre_id].append(game)
        return out

    def count_table(self) -> dict[int, dict[int, int]]:
        """Games per genre per style, the layout of a corpus summary table."""
        table = {g.id: {s.id: 0 for s in self.styles} for g in self.genres}
        for game in self.games:
            table[game.genre_id][game.style_id] += 1
        return table

    def to_json(self) -> dict:
        games = []
        for g in self.games:
            entry = {"id": g.id, "genre_id": g.genre_id, "style_id": g.style_id}
            if g.generator_ref is not None:
                entry["generator_ref"] = dict(g.generator_ref)
            else:
                entry["images"] = list(g.images)
            games.append(entry)
        doc = {
            "genres": [{"id": g.id, "name": g.name} for g in self.genres],
            "styles": [{"id": s.id, "name": s.name} for s in self.styles],
            "games": games,
            "image_size": list(self.image_size),
        }
        if self.generator is not None:
            doc["generator"] = dict(self.generator)
        return doc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))


def validate_manifest(m: DatasetManifest) -> None:
    if not m.games:
        raise ManifestError("manifest has no games")
    genre_ids = [g.id for g in m.genres]
    if len(genre_ids) < 2:
        raise ManifestError("at least two genres are required")
    if sorted(genre_ids) != list(range(len(genre_ids))):
        raise ManifestError("genre ids must be dense and unique, starting at 0")
    style_ids = {s.id for s in m.styles}
    if len(style_ids) != len(m.styles):
        raise ManifestError("duplicate style id")
    h, w = m.image_size
    if h < 8 or w < 8:
        raise ManifestError(f"image size {m.image_size} below 8x8")
    seen: set[str] = set()
    for game in m.games:
        if game.id in seen:
            raise DuplicateGameError(f"game {game.id!r} listed more than once")
        seen.add(game.id)
        if game.genre_id not in genre_ids:
            raise ManifestError(f"game {game.id!r} has unknown genre {game.genre_id}")
        if game.style_id not in style_ids:
            raise ManifestError(f"game {game.id!r} has unknown style {game.style_id}")
        if game.n_images < 1:
            raise ManifestError(f"game {game.id!r} has no images")
    counts = {gid: 0 for gid in genre_ids}
    for game in m.games:
        counts[game.genre_id] += 1
    thin = [gid for gid, c in counts.items() if c < 2]
    if thin:
        raise InsufficientGamesError(f"genres {thin} have fewer than 2 games")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest is not valid JSON: {e}") from e
    return manifest_from_json(doc, root=path.parent)


def manifest_from_json(doc: dict, root=None) -> DatasetManifest:
    try:
        genres = [GenreLabel(int(g["id"]), str(g["name"])) for g in doc["genres"]]
        styles = [StyleCategory(int(s["id"]), str(s["name"])) for s in doc["styles"]]
        games = []
        for g in doc["games"]:
            ref = g.get("generator_ref")
            images = tuple(str(p) for p in g.get("images", ()))
            if ref is None and not images:
                raise ManifestError(f"game {g.get('id')!r} has neither images nor generator_ref")
            games.append(GameEntry(str(g["id"]), int(g["genre_id"]), int(g["style_id"]),
                                   images, dict(ref) if ref is not None else None))
        h, w = (int(v) for v in doc["image_size"])
    except (KeyError, TypeError, ValueError) as e:
        raise ManifestError(f"manifest schema violation: {e!r}") from e
    # duplicate ids must be reported before the per-genre count check
    ids = [g.id for g in games]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise DuplicateGameError(f"games listed more than once: {dup}")
    return DatasetManifest(genres, styles, games, (h, w), doc.get("generator"),
                           Path(root) if root is not None else None)


# ---------------------------------------------------------------------------
# synthetic corpus

@dataclass
class SyntheticConfig:
    n_genres: int = 10
    games_per_genre: int = 6
    images_per_game: int = 50
    image_size: tuple[int, int] = (32, 32)
    n_styles: int = 3
    noise_range: tuple[float, float] = (0.02, 0.08)
    n_archetypes: int | None = None
    image_jitter: float = 0.12
    fixed_polarity: bool = True
    jitter: int = 2
    style_jitter: float = 0.08
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_genres", "games_per_genre", "images_per_game", "n_styles"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.games_per_genre < 2:
            raise ConfigError("games_per_genre must be >= 2 so every genre can be split")
        if self.n_genres < 2:
            raise ConfigError("at least two genres are required")
        if self.n_genres > len(GENRE_NAMES):
            raise ConfigError(f"at most {len(GENRE_NAMES)} genres are supported")
        if self.n_styles > len(SYNTHETIC_STYLES):
            raise ConfigError(f"at most {len(SYNTHETIC_STYLES)} style categories are supported")
        h, w = self.image_size
        if h < 8 or w < 8:
            raise ConfigError("image size must be at least 8x8")
        if self.n_archetypes is not None and self.n_archetypes < self.games_per_genre:
            raise ConfigError("n_archetypes must be >= games_per_genre")
        if self.style_jitter < 0:
            raise ConfigError("style_jitter must be non-negative")
        lo, hi = self.noise_range
        if not 0 <= lo <= hi:
            raise ConfigError("noise range must satisfy 0 <= lo <= hi")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for key in ("image_size", "noise_range"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)

    def to_dict(self) -> dict:
        return {
            "n_genres": self.n_genres,
            "games_per_genre": self.games_per_genre,
            "images_per_game": self.images_per_game,
            "image_size": list(self.image_size),
            "n_styles": self.n_styles,
            "noise_range": list(self.noise_range),
            "jitter": self.jitter,
            "style_jitter": self.style_jitter,
            "n_archetypes": self.n_archetypes,
            "image_jitter": self.image_jitter,
            "fixed_polarity": self.fixed_polarity,
            "seed": self.seed,
        }


def _disc(yy, xx, cy, cx, r):
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _box(yy, xx, y0, x0, y1, x1):
    return (yy >= y0) & (yy < y1) & (xx >= x0) & (xx < x1)


def motif_mask(genre: int, h: int, w: int, dy: float = 0.0, dx: float = 0.0) -> np.ndarray:
    """Foreground mask of a genre's content layout, shifted by (dy, dx) pixels.

    Coordinates are expressed in units of the image size so every motif
    scales to any resolution.
    """
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    yy = (yy + 0.5 - dy) / h
    xx = (xx + 0.5 - dx) / w
    if genre == 0:  # grid of discs
        m = np.zeros((h, w), bool)
        for cy in (0.25, 0.5, 0.75):
            for cx in (0.25, 0.5, 0.75):
                m |= _disc(yy, xx, cy, cx, 0.09)
        return m
    if genre == 1:  # horizontal stripes + two goal boxes
        m = np.zeros((h, w), bool)
        for cy in (0.2, 0.5, 0.8):
            m |= np.abs(yy - cy) < 0.05
        m |= _box(yy, xx, 0.35, 0.02, 0.65, 0.14)
        m |= _box(yy, xx, 0.35, 0.86, 0.65, 0.98)
        return m
    if genre == 2:  # oval track
        r = ((yy - 0.5) / 0.38) ** 2 + ((xx - 0.5) / 0.46) ** 2
        return (r <= 1.0) & (r >= 0.45)
    if genre == 3:  # centered ring with a hub
        r = np.sqrt((yy - 0.5) ** 2 + (xx - 0.5) ** 2)
        return ((r >= 0.25) & (r <= 0.36)) | (r <= 0.08)
    if genre == 4:  # vertical court lines
        m = np.zeros((h, w), bool)
        for cx in (0.15, 0.5, 0.85):
            m |= np.abs(xx - cx) < 0.05
        return m & (yy > 0.1) & (yy < 0.9)
    if genre == 5:  # diagonal cross
        return (np.abs(yy - xx) < 0.08) | (np.abs(yy + xx - 1.0) < 0.08)
    if genre == 6:  # pyramid
        return (yy > 0.2) & (yy < 0.85) & (np.abs(xx - 0.5) < (yy - 0.2) * 0.65)
    if genre == 7:  # two large blocks on a diagonal
        return _box(yy, xx, 0.1, 0.1, 0.45, 0.45) | _box(yy, xx, 0.55, 0.55, 0.9, 0.9)
    if genre == 8:  # concentric square frames
        cheb = np.maximum(np.abs(yy - 0.5), np.abs(xx - 0.5))
        return ((cheb >= 0.36) & (cheb <= 0.44)) | ((cheb >= 0.16) & (cheb <= 0.24))
    if genre == 9:  # ladder: two rails and rungs
        rails = (np.abs(xx - 0.3) < 0.04) | (np.abs(xx - 0.7) < 0.04)
        rungs = (xx > 0.3) & (xx < 0.7) & (np.abs(((yy * 5.0) % 1.0) - 0.5) < 0.12)
        return (rails | rungs) & (yy > 0.05) & (yy < 0.95)
    raise ConfigError(f"no motif defined for genre {genre}")


@dataclass(frozen=True)
class GameStyle:
    category: int
    background: np.ndarray
    foreground: np.ndarray
    texture_color: np.ndarray
    texture_freq: float
    texture_angle: float
    texture_amp: float
    noise: float
    block: int


MIN_CONTRAST = 0.35


def luminance(rgb) -> float:
    return float(np.dot(rgb, (0.299, 0.587, 0.114)))


def draw_style(rng: np.random.Generator, category: int, noise_range,
               fixed_polarity: bool = False) -> GameStyle:
    """One game's style: palette, background texture, noise and pixelation."""
    # keep the foreground visibly distinct from the background in luminance
    while True:
        bg = rng.uniform(0.0, 1.0, 3)
        fg = rng.uniform(0.0, 1.0, 3)
        if abs(luminance(fg) - luminance(bg)) > MIN_CONTRAST:
            break
    if fixed_polarity and luminance(fg) < luminance(bg):
        fg, bg = bg, fg
    return GameStyle(
        category=category,
        background=bg,
        foreground=fg,
        texture_color=rng.uniform(0.0, 1.0, 3),
        texture_freq=float(rng.uniform(2.0, 6.0)),
        texture_angle=float(rng.uniform(0.0, math.pi)),
        texture_amp=float(rng.uniform(0.25, 0.5)) if category == 2 else float(rng.uniform(0.0, 0.1)),
        noise=float(rng.uniform(*noise_range)),
        block=2 if category == 0 else 1,
    )


def perturb_style(style: GameStyle, rng: np.random.Generator, amount: float) -> GameStyle:
    def shift(c):
        return np.clip(c + rng.uniform(-amount, amount, 3), 0.0, 1.0)

    return GameStyle(
        category=style.category,
        background=shift(style.background),
        foreground=shift(style.foreground),
        texture_color=shift(style.texture_color),
        texture_freq=style.texture_freq * float(1.0 + rng.uniform(-amount, amount)),
        texture_angle=style.texture_angle + float(rng.uniform(-amount, amount)),
        texture_amp=style.texture_amp,
        noise=style.noise,
        block=style.block,
    )


def render(mask: np.ndarray, style: GameStyle, rng: np.random.Generator) -> np.ndarray:
    h, w = mask.shape
    yy, xx = np.mgrid[0:h, 0:w] / float(max(h, w))
    phase = xx * math.cos(style.texture_angle) + yy * math.sin(style.texture_angle)
    wave = 0.5 + 0.5 * np.sin(2 * math.pi * style.texture_freq * phase)
    t = (style.texture_amp * wave)[..., None]
    bg = (1 - t) * style.background + t * style.texture_color
    if style.category == 1:  # flat shading: vertical gradient on the background
        bg = bg * (0.85 + 0.3 * yy[..., None])
    img = np.where(mask[..., None], style.foreground, bg)
    if style.block > 1:
        b = style.block
        hb, wb = h // b * b, w // b * b
        coarse = img[:hb, :wb].reshape(hb // b, b, wb // b, b, 3).mean(axis=(1, 3))
        img[:hb, :wb] = np.repeat(np.repeat(coarse, b, axis=0), b, axis=1)
        img = np.round(img * 4) / 4  # retro palettes are posterized
    img = img + rng.normal(0.0, style.noise, img.shape)
    return np.clip(img, 0.0, 1.0)


def _game_id(genre: int, k: int) -> str:
    return f"{GENRE_NAMES[genre]}-{k:02d}"


def synthetic_manifest(config: SyntheticConfig) -> DatasetManifest:
    config.validate()
    genres = [GenreLabel(i, GENRE_NAMES[i]) for i in range(config.n_genres)]
    styles = [StyleCategory(i, SYNTHETIC_STYLES[i]) for i in range(config.n_styles)]
    games = []
    for g in range(config.n_genres):
        for k in range(config.games_per_genre):
            games.append(GameEntry(
                _game_id(g, k), g, archetype_of(config, g, k) % config.n_styles,
                generator_ref={"genre": g, "game": k, "n_images": config.images_per_game},
            ))
    return DatasetManifest(genres, styles, games, tuple(config.image_size), config.to_dict())


def _game_style(config: SyntheticConfig, genre: int, k: int, category: int) -> GameStyle:
    # archetypes are shared across genres, so style alone carries no genre
    # information; each game then perturbs its archetype
    a = archetype_of(config, genre, k)
    base = draw_style(np.random.default_rng([config.seed, 1, a]), category, config.noise_range,
                      config.fixed_polarity)
    return perturb_style(base, np.random.default_rng([config.seed, 4, genre, k]),
                         config.style_jitter)


def archetype_of(config: SyntheticConfig, genre: int, k: int) -> int:
    """Style archetype of game ``k`` of ``genre``; games within a genre never share one."""
    n = config.n_archetypes or config.games_per_genre
    stride = max(1, n // config.n_genres)
    return (k + genre * stride) % n


def _layout_shift(config: SyntheticConfig, genre: int, index: int) -> tuple[int, int]:
    # content jitter depends on genre and image index only, never on the game
    rng = np.random.default_rng([config.seed, 2, genre, index])
    j = config.jitter
    return tuple(int(v) for v in rng.integers(-j, j + 1, 2))


def render_game_images(config: SyntheticConfig, genre: int, k: int, category: int,
                       indices=None) -> np.ndarray:
    h, w = config.image_size
    style = _game_style(config, genre, k, category)
    idx = range(config.images_per_game) if indices is None else indices
    out = np.empty((len(idx), h, w, 3), dtype=np.float32)
    for row, i in enumerate(idx):
        dy, dx = _layout_shift(config, genre, i)
        noise_rng = np.random.default_rng([config.seed, 3, genre, k, i])
        st = perturb_style(style, noise_rng, config.image_jitter) if config.image_jitter else style
        out[row] = render(motif_mask(genre, h, w, dy, dx), st, noise_rng)
    return out


def generate_synthetic(config: SyntheticConfig) -> tuple[DatasetManifest, Iterator[ImageSample]]:
    """Build a synthetic manifest and a lazy, deterministic stream of its samples."""
    manifest = synthetic_manifest(config)

    def stream():
        for game in manifest.games:
            ref = game.generator_ref
            pixels = render_game_images(config, ref["genre"], ref["game"], game.style_id)
            for p in pixels:
                yield ImageSample(p, game.genre_id, game.id, game.style_id)

    return manifest, stream()


# ---------------------------------------------------------------------------
# arrays for training and evaluation

@dataclass
class Corpus:
    """Images of a set of games stacked into arrays, aligned by row."""
    images: np.ndarray
    genres: np.ndarray
    games: np.ndarray
    styles: np.ndarray

    def __len__(self):
        return len(self.genres)

    def subset(self, game_ids) -> "Corpus":
        keep = np.isin(self.games, list(game_ids))
        return Corpus(self.images[keep], self.genres[keep], self.games[keep], self.styles[keep])


def read_png(path, size: tuple[int, int] | None = None) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    if size is not None and arr.shape[:2] != tuple(size):
        arr = resize_pixels(arr, *size).astype(np.float32)
    return arr


def write_png(path, pixels: np.ndarray) -> None:
    arr = np.round(np.clip(pixels, 0, 1) * 255).astype(np.uint8)
    Image.fromarray(arr, "RGB").save(path)


def load_corpus(manifest: DatasetManifest, game_ids=None) -> Corpus:
    """Materialize the images of ``game_ids`` (all games by default)."""
    wanted = None if game_ids is None else set(game_ids)
    config = SyntheticConfig.from_dict(manifest.generator) if manifest.generator else None
    imgs, genres, games, styles = [], [], [], []
    for game in manifest.games:
        if wanted is not None and game.id not in wanted:
            continue
        if game.generator_ref is not None:
            if config is None:
                raise ManifestError(f"game {game.id!r} references a generator but none is configured")
            ref = game.generator_ref
            px = render_game_images(config, ref["genre"], ref["game"], game.style_id)
        else:
            root = manifest.root or Path(".")
            px = np.stack([read_png(root / p, manifest.image_size) for p in game.images])
        imgs.append(px)
        genres += [game.genre_id] * len(px)
        games += [game.id] * len(px)
        styles += [game.style_id] * len(px)
    if not imgs:
        raise DataError("no images selected")
    return Corpus(np.concatenate(imgs), np.asarray(genres), np.asarray(games), np.asarray(styles))


# ---------------------------------------------------------------------------
# resizing

def resize_pixels(pixels: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centres and edge clamping."""
    H, W = pixels.shape[:2]
    if (H, W) == (h, w):
        return pixels.copy()

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = axis(H, h)
    x0, x1, fx = axis(W, w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = pixels[y0][:, x0] * (1 - fx) + pixels[y0][:, x1] * fx
    bot = pixels[y1][:, x0] * (1 - fx) + pixels[y1][:, x1] * fx
    return np.clip(top * (1 - fy) + bot * fy, 0.0, 1.0)


def resize(sample: ImageSample, h: int, w: int) -> ImageSample:
    if h < 8 or w < 8:
        raise ConfigError(f"target size must be at least 8x8, got {h}x{w}")
    return ImageSample(resize_pixels(sample.pixels, h, w), sample.genre, sample.game, sample.style)


# ---------------------------------------------------------------------------
# game-disjoint split

@dataclass
class SplitSpec:
    train_games: list[str]
    val_games: list[str]
    ratio: float
    seed: int

    def to_json(self) -> dict:
        return {"train_games": list(self.train_games), "val_games": list(self.val_games),
                "ratio": self.ratio, "seed": self.seed}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "SplitSpec":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"split file not found: {path}")
        try:
            d = json.loads(path.read_text())
            spec = cls([str(g) for g in d["train_games"]], [str(g) for g in d["val_games"]],
                       float(d["ratio"]), int(d["seed"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed split file {path}: {e!r}") from e
        if set(spec.train_games) & set(spec.val_games):
            raise DataError("split file lists a game on both sides")
        return spec


def train_count(n_games: int, ratio: float) -> int:
    return min(max(round(ratio * n_games), 1), n_games - 1)


def _apportion(total: int, sizes: list[int], rng: np.random.Generator) -> list[int]:
    """Largest-remainder allocation of ``total`` across buckets of ``sizes``."""
    n = sum(sizes)
    quotas = [total * s / n for s in sizes]
    alloc = [math.floor(q) for q in quotas]
    order = rng.permutation(len(sizes))  # seeded tie-break among equal remainders
    order = sorted(order, key=lambda i: -(quotas[i] - alloc[i]))
    left = total - sum(alloc)
    for i in order:
        if left == 0:
            break
        if alloc[i] < sizes[i]:
            alloc[i] += 1
            left -= 1
    return alloc


def stratified_game_split(manifest: DatasetManifest, ratio: float, seed: int) -> SplitSpec:
    """Partition games into train/validation sides, per genre and style-balanced."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    train, val = [], []
    for genre, games in sorted(manifest.games_by_genre().items()):
        if len(games) < 2:
            raise InfeasibleSplitError(f"genre {genre} has {len(games)} game(s); need at least 2")
        k = train_count(len(games), ratio)
        buckets: dict[int, list[str]] = {}
        for g in sorted(games, key=lambda g: g.id):
            buckets.setdefault(g.style_id, []).append(g.id)
        styles = sorted(buckets)
        alloc = _apportion(k, [len(buckets[s]) for s in styles], rng)
        for s, n_train in zip(styles, alloc):
            ids = buckets[s]
            perm = rng.permutation(len(ids))
            shuffled = [ids[i] for i in perm]
            train += shuffled[:n_train]
            val += shuffled[n_train:]
    return SplitSpec(sorted(train), sorted(val), float(ratio), int(seed))


# ---------------------------------------------------------------------------
# augmentation

@dataclass
class AugmentationConfig:
    flip_p: float = 0.5
    zoom_p: float = 0.3
    zoom_range: tuple[float, float] = (0.85, 1.15)
    brightness_p: float = 0.3
    brightness_range: tuple[float, float] = (0.7, 1.3)
    rescale_p: float = 0.2
    rescale_range: tuple[float, float] = (0.9, 1.1)
    rotation_p: float = 0.2
    rotation_range: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        for name in ("flip_p", "zoom_p", "brightness_p", "rescale_p", "rotation_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {p}")
        for name in ("zoom_range", "brightness_range", "rescale_range", "rotation_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} is empty: {lo} > {hi}")
        if self.zoom_range[0] <= 0 or self.rescale_range[0] <= 0:
            raise ConfigError("scale factors must be positive")

    @classmethod
    def identity(cls) -> "AugmentationConfig":
        return cls(flip_p=0.0, zoom_p=0.0, brightness_p=0.0, rescale_p=0.0, rotation_p=0.0)


def hflip(pixels: np.ndarray) -> np.ndarray:
    return pixels[:, ::-1].copy()


def augment_pixels(pixels: np.ndarray, config: AugmentationConfig,
                   rng: np.random.Generator) -> np.ndarray:
    # every draw happens unconditionally so the rng advances identically per sample
    u = rng.random(5)
    zoom = rng.uniform(*config.zoom_range)
    bright = rng.uniform(*config.brightness_range)
    sy, sx = rng.uniform(*config.rescale_range, size=2)
    angle = rng.uniform(*config.rotation_range)

    out = pixels
    if u[0] < config.flip_p:
        out = hflip(out)
    scale_y = scale_x = 1.0
    if u[1] < config.zoom_p:
        scale_y *= zoom
        scale_x *= zoom
    if u[3] < config.rescale_p:
        scale_y *= sy
        scale_x *= sx
    theta = math.radians(angle) if u[4] < config.rotation_p else 0.0
    if scale_y != 1.0 or scale_x != 1.0 or theta != 0.0:
        out = _warp(out, scale_y, scale_x, theta)
    if u[2] < config.brightness_p and bright != 1.0:
        out = out * bright
    if out is pixels:
        return pixels.copy()
    return np.clip(out, 0.0, 1.0).astype(pixels.dtype, copy=False)


def _warp(pixels, scale_y, scale_x, theta):
    """Scale about the image centre, then rotate; edges replicate outward."""
    h, w = pixels.shape[:2]
    c, s = math.cos(theta), math.sin(theta)
    # output coordinate -> input coordinate
    inv = np.array([[c / scale_y, s / scale_y], [-s / scale_x, c / scale_x]])
    centre = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = centre - inv @ centre
    out = np.empty_like(pixels)
    for ch in range(pixels.shape[2]):
        out[..., ch] = ndimage.affine_transform(pixels[..., ch], inv, offset=offset,
                                                order=1, mode="nearest")
    return out


def augment(sample: ImageSample, config: AugmentationConfig,
            rng: np.random.Generator) -> ImageSample:
    return ImageSample(augment_pixels(sample.pixels, config, rng),
                       sample.genre, sample.game, sample.style)


def augment_batch(images: np.ndarray, config: AugmentationConfig,
                  rng: np.random.Generator) -> np.ndarray:
    return np.stack([augment_pixels(img, config, rng) for img in images])
