"""Path-attention network scoring reasoning paths option by option.

A path becomes a unit sequence: one unit per atom function symbol and
one per variable occurrence.  Variable units carry fixed hashed clause
embeddings; symbol, negation, and position embeddings are learned.
Each block mixes three attention signals per head (raw similarity,
in-atom symbol-variable scores, cross-atom same-variable scores), the
latter two spread over multi-hop neighborhoods by taking weighted
matrix powers, then adds a path-level summary back into every unit and
finishes with a feed-forward sublayer under post-layer-norm residuals.
The final score fuses the text embedding, the unit mean, and the path
summary; four option scores softmax into probabilities.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from . import tensor as T
from .atoms import Category, ReasoningPath, Sample
from .extraction import extract_sample, tokenize
from .lexicon import Lexicon
from .tensor import Tensor

UNKNOWN_SURFACE = "<unk>"


class ModelError(ValueError):
    """Configuration or input outside what the model supports."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters and ablation switches."""

    d: int = 64
    n_layers: int = 3
    n_heads: int = 4
    diffusion_steps: int = 2
    alpha: tuple[float, ...] = (0.2, 0.8)
    beta: tuple[float, ...] = (0.0, 1.0)
    leaky_slope: float = 0.02
    ffn_mult: int = 4
    hash_dim: int = 4096
    max_units: int = 64
    seed: int = 0
    strict_mask: bool = False
    use_path_attention: bool = True
    use_in_atom: bool = True
    use_cross_atom: bool = True
    use_diffusion: bool = True

    def __post_init__(self) -> None:
        if self.d < 1 or self.n_layers < 1 or self.n_heads < 1:
            raise ModelError("d, n_layers, and n_heads must be positive")
        if self.d % self.n_heads != 0:
            raise ModelError(
                f"width {self.d} not divisible by {self.n_heads} heads"
            )
        if self.diffusion_steps < 1:
            raise ModelError("diffusion_steps must be >= 1")
        for name, coeffs in (("alpha", self.alpha), ("beta", self.beta)):
            if len(coeffs) != self.diffusion_steps:
                raise ModelError(
                    f"{name} needs {self.diffusion_steps} coefficients, "
                    f"got {len(coeffs)}"
                )
            if abs(sum(coeffs) - 1.0) > 1e-9:
                raise ModelError(f"{name} coefficients must sum to 1")
            if any(c < 0 for c in coeffs):
                raise ModelError(f"{name} coefficients must be non-negative")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ModelError("leaky_slope must be in (0, 1)")
        if self.hash_dim < 2 or self.max_units < 2 or self.ffn_mult < 1:
            raise ModelError("hash_dim, max_units, and ffn_mult too small")

    def to_dict(self) -> dict[str, Any]:
        return {
            "d": self.d,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "diffusion_steps": self.diffusion_steps,
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "leaky_slope": self.leaky_slope,
            "ffn_mult": self.ffn_mult,
            "hash_dim": self.hash_dim,
            "max_units": self.max_units,
            "seed": self.seed,
            "strict_mask": self.strict_mask,
            "use_path_attention": self.use_path_attention,
            "use_in_atom": self.use_in_atom,
            "use_cross_atom": self.use_cross_atom,
            "use_diffusion": self.use_diffusion,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelConfig:
        kwargs = dict(data)
        kwargs["alpha"] = tuple(kwargs.get("alpha", (0.2, 0.8)))
        kwargs["beta"] = tuple(kwargs.get("beta", (0.0, 1.0)))
        return cls(**kwargs)

    def without_diffusion(self) -> ModelConfig:
        return replace(
            self,
            use_diffusion=False,
            diffusion_steps=1,
            alpha=(1.0,),
            beta=(1.0,),
        )


@dataclass(frozen=True)
class SymbolVocab:
    """Deterministic id per (category, connective surface) pair."""

    index: dict[tuple[str, str], int]

    @classmethod
    def from_lexicon(cls, lexicon: Lexicon) -> SymbolVocab:
        keys = [(c.value, UNKNOWN_SURFACE) for c in Category]
        keys.append((Category.FACT.value, "fact"))
        keys.extend(
            sorted((e.category.value, e.surface) for e in lexicon.entries)
        )
        return cls({key: i for i, key in enumerate(keys)})

    def __len__(self) -> int:
        return len(self.index)

    def id_of(self, category: Category, surface: str) -> int:
        key = (category.value, surface)
        if key in self.index:
            return self.index[key]
        return self.index[(category.value, UNKNOWN_SURFACE)]

    def to_list(self) -> list[list[Any]]:
        return [
            [cat, surf, i] for (cat, surf), i in sorted(
                self.index.items(), key=lambda kv: kv[1]
            )
        ]

    @classmethod
    def from_list(cls, rows: Sequence[Sequence[Any]]) -> SymbolVocab:
        return cls({(r[0], r[1]): int(r[2]) for r in rows})


class HashEmbedder:
    """Fixed token embeddings drawn per hash bucket from a seeded RNG."""

    def __init__(self, d: int, hash_dim: int, seed: int) -> None:
        self.d = d
        self.hash_dim = hash_dim
        self.seed = seed
        self._bucket_vecs: dict[int, np.ndarray] = {}

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode(), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.hash_dim

    def token_vector(self, token: str) -> np.ndarray:
        bucket = self._bucket(token)
        vec = self._bucket_vecs.get(bucket)
        if vec is None:
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([self.seed, bucket]))
            )
            vec = rng.standard_normal(self.d) / np.sqrt(self.d)
            self._bucket_vecs[bucket] = vec
        return vec

    def text_vector(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            return np.zeros(self.d)
        return np.mean([self.token_vector(t) for t in tokens], axis=0)


@dataclass
class PreparedPath:
    """Constant per-path features; everything forward needs besides params."""

    n_units: int
    n_atoms: int
    n_var_units: int
    sym_rows: np.ndarray  # (M,) unit index of each atom's symbol
    sym_ids: np.ndarray  # (M,) vocab ids
    var_matrix: np.ndarray  # (U, d) hashed clause vectors, zero at symbol rows
    neg_mask: np.ndarray  # (U, 1) 1.0 at negated variable units
    pos_ids: np.ndarray  # (U,)
    atom_avg: np.ndarray  # (M, U) mean weights over each atom's units
    var_avg: np.ndarray  # (M, U) mean weights over each atom's variable units
    sym_sel: np.ndarray  # (M, U) one-hot rows selecting symbol units
    in_cells: tuple[tuple[tuple[int, int], ...], ...]
    cross_pairs: tuple[tuple[int, int], ...]
    crs_cells: tuple[tuple[tuple[int, int], ...], ...]
    cls_vec: np.ndarray  # (d,)
    _masks: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def strict_mask(self, n_steps: int) -> np.ndarray:
        """Additive -1e9 mask outside the n-step structural neighborhood."""
        cached = self._masks.get(n_steps)
        if cached is not None:
            return cached
        n = self.n_units
        adj = np.eye(n, dtype=bool)
        for groups in (self.in_cells, self.crs_cells):
            for group in groups:
                for r, c in group:
                    adj[r, c] = True
        allowed = np.eye(n, dtype=bool)
        power = np.eye(n, dtype=bool)
        for _ in range(n_steps):
            power = power @ adj
            allowed |= power
        mask = np.where(allowed, 0.0, -1e9)
        self._masks[n_steps] = mask
        return mask


def prepare_path(
    path: ReasoningPath,
    cfg: ModelConfig,
    vocab: SymbolVocab,
    embedder: HashEmbedder,
    cls_text: str,
) -> PreparedPath:
    """Lay out a path as units and precompute its constant features."""
    atoms = path.body + path.head
    units: list[tuple[str, Any]] = []  # ("sym", atom) or ("var", literal)
    sym_rows: list[int] = []
    atom_units: list[tuple[int, list[int]]] = []
    for atom in atoms:
        sym_row = len(units)
        units.append(("sym", atom))
        var_rows = []
        for lit in atom.literals:
            var_rows.append(len(units))
            units.append(("var", lit))
        sym_rows.append(sym_row)
        atom_units.append((sym_row, var_rows))

    n_units = len(units)
    if n_units > cfg.max_units:
        raise ModelError(
            f"path needs {n_units} units "
            f"({len(atoms)} atoms), max_units is {cfg.max_units}"
        )

    n_atoms = len(atoms)
    var_matrix = np.zeros((n_units, cfg.d))
    neg_mask = np.zeros((n_units, 1))
    var_names: list[str | None] = [None] * n_units
    for row, (kind, payload) in enumerate(units):
        if kind != "var":
            continue
        var_matrix[row] = embedder.text_vector(path.bindings[payload.var])
        var_names[row] = payload.var
        if not payload.positive:
            neg_mask[row, 0] = 1.0

    atom_avg = np.zeros((n_atoms, n_units))
    var_avg = np.zeros((n_atoms, n_units))
    sym_sel = np.zeros((n_atoms, n_units))
    in_cells: list[tuple[tuple[int, int], ...]] = []
    for i, (sym_row, var_rows) in enumerate(atom_units):
        member = [sym_row, *var_rows]
        atom_avg[i, member] = 1.0 / len(member)
        var_avg[i, var_rows] = 1.0 / len(var_rows)
        sym_sel[i, sym_row] = 1.0
        cells: list[tuple[int, int]] = []
        for v in var_rows:
            cells.extend([(sym_row, v), (v, sym_row)])
        in_cells.append(tuple(cells))

    cross_pairs: list[tuple[int, int]] = []
    crs_cells: list[tuple[tuple[int, int], ...]] = []
    for p in range(n_units):
        if var_names[p] is None:
            continue
        for q in range(p + 1, n_units):
            if var_names[q] == var_names[p]:
                cross_pairs.append((p, q))
                crs_cells.append(((p, q), (q, p)))

    return PreparedPath(
        n_units=n_units,
        n_atoms=n_atoms,
        n_var_units=n_units - n_atoms,
        sym_rows=np.asarray(sym_rows, dtype=np.intp),
        sym_ids=np.asarray(
            [vocab.id_of(a.category, a.surface) for a in atoms], dtype=np.intp
        ),
        var_matrix=var_matrix,
        neg_mask=neg_mask,
        pos_ids=np.arange(n_units, dtype=np.intp),
        atom_avg=atom_avg,
        var_avg=var_avg,
        sym_sel=sym_sel,
        in_cells=tuple(in_cells),
        cross_pairs=tuple(cross_pairs),
        crs_cells=tuple(crs_cells),
        cls_vec=embedder.text_vector(cls_text),
    )


def prepare_sample(
    sample: Sample,
    lexicon: Lexicon,
    cfg: ModelConfig,
    vocab: SymbolVocab,
    embedder: HashEmbedder,
) -> list[PreparedPath]:
    """One prepared path per option, sharing the extraction pass."""
    extracted = extract_sample(sample, lexicon)
    preps = []
    for i, path in enumerate(extracted.paths):
        cls_text = " ".join(
            (sample.context, sample.question, sample.options[i])
        )
        preps.append(prepare_path(path, cfg, vocab, embedder, cls_text))
    return preps


def init_params(cfg: ModelConfig, vocab: SymbolVocab) -> dict[str, Tensor]:
    """Seeded Gaussian initialization.

    Learned embeddings start at the same unit norm as the hashed clause
    constants they are summed with; nothing renormalizes the mix, so a
    smaller scale would bury the category and polarity signals.
    """
    d = cfg.d
    hidden = cfg.ffn_mult * d
    # (name, shape, kind, value); kind "gauss" -> std, "eye" -> gain on
    # identity plus noise, "fill" -> constant
    spec: list[tuple[str, tuple[int, ...], str, float]] = [
        ("sym_emb", (len(vocab), d), "gauss", 0.02),
        # polarity and argument order must stay visible against unit-norm
        # clause constants; nothing renormalizes the embedding sum, and a
        # rule is unreadable without knowing which side is which
        ("neg_emb", (d,), "gauss", d**-0.5),
        ("pos_emb", (cfg.max_units, d), "gauss", d**-0.5),
    ]
    # attention projections start near the identity: raw clause vectors
    # already carry match structure, so attention opens content-aware
    # instead of having to align two random maps first.  The query/key
    # gain sharpens softmax enough that matched units actually exchange
    # state: unit-norm inputs give match logits near gain^2 / sqrt(d_h)
    for layer in range(cfg.n_layers):
        p = f"l{layer}."
        spec.extend(
            [
                (p + "attn_wq", (d, d), "eye", 2.5),
                (p + "attn_wk", (d, d), "eye", 2.5),
                (p + "attn_wv", (d, d), "eye", 1.0),
                (p + "attn_wo", (d, d), "eye", 1.0),
                (p + "in_w", (2 * d,), "gauss", (2 * d) ** -0.5),
                (p + "crs_w", (d,), "gauss", d**-0.5),
                (p + "ln1_g", (d,), "fill", 1.0),
                (p + "ln1_b", (d,), "fill", 0.0),
                (p + "ffn_w1", (d, hidden), "gauss", d**-0.5),
                (p + "ffn_b1", (hidden,), "fill", 0.0),
                (p + "ffn_w2", (hidden, d), "gauss", hidden**-0.5),
                (p + "ffn_b2", (d,), "fill", 0.0),
                (p + "ln2_g", (d,), "fill", 1.0),
                (p + "ln2_b", (d,), "fill", 0.0),
            ]
        )
    spec.append(("out_w", (3 * d,), "gauss", (3 * d) ** -0.5))
    spec.append(("out_b", (), "fill", 0.0))

    params: dict[str, Tensor] = {}
    for k, (name, shape, kind, value) in enumerate(spec):
        if kind == "fill":
            data = np.full(shape, value)
        else:
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([cfg.seed, k]))
            )
            if kind == "eye":
                data = value * np.eye(shape[0]) + rng.standard_normal(
                    shape
                ) * (0.25 * shape[0] ** -0.5)
            else:
                data = rng.standard_normal(shape) * value
        params[name] = T.param(data)
    return params


def encode(prep: PreparedPath, params: dict[str, Tensor]) -> Tensor:
    """Initial unit matrix: clause constants + learned embeddings."""
    sym_vectors = T.embedding_lookup(params["sym_emb"], prep.sym_ids)
    sym_full = T.scatter_rows(sym_vectors, prep.sym_rows, prep.n_units)
    neg_term = T.matmul(
        T.const(prep.neg_mask), T.reshape(params["neg_emb"], (1, -1))
    )
    pos_term = T.gather_rows(params["pos_emb"], prep.pos_ids)
    return T.add_n([T.const(prep.var_matrix), sym_full, neg_term, pos_term])


def in_atom_scores(
    prep: PreparedPath, H: Tensor, w: Tensor, slope: float
) -> Tensor:
    """Symmetric symbol-variable affinity within each atom."""
    var_mean = T.matmul(T.const(prep.var_avg), H)
    sym_rows = T.matmul(T.const(prep.sym_sel), H)
    squashed = T.tanh(T.concat([var_mean, sym_rows], axis=1))
    scores = T.leaky_relu(T.matvec(squashed, w), slope)
    return T.scatter_cells(scores, prep.in_cells, prep.n_units)


def cross_atom_scores(
    prep: PreparedPath, H: Tensor, w: Tensor, slope: float
) -> Tensor | None:
    """Affinity between unit pairs bound to the same variable."""
    if not prep.cross_pairs:
        return None
    p_idx = [p for p, _ in prep.cross_pairs]
    q_idx = [q for _, q in prep.cross_pairs]
    mean = T.scale(T.add(T.gather_rows(H, p_idx), T.gather_rows(H, q_idx)), 0.5)
    scores = T.leaky_relu(T.matvec(mean, w), slope)
    return T.scatter_cells(scores, prep.crs_cells, prep.n_units)


def diffuse(M: Tensor, coeffs: Sequence[float]) -> Tensor:
    """Weighted sum of matrix powers: sum_i coeffs[i-1] * M^i."""
    terms = []
    for i, c in enumerate(coeffs, start=1):
        if c == 0.0:
            continue
        term = T.matrix_power(M, i)
        terms.append(term if c == 1.0 else T.scale(term, c))
    if not terms:
        return T.const(np.zeros(M.shape))
    return terms[0] if len(terms) == 1 else T.add_n(terms)


def block(
    prep: PreparedPath,
    H: Tensor,
    layer: int,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    trace: dict[str, Any] | None = None,
) -> tuple[Tensor, Tensor]:
    """One attention + feed-forward block; returns (units, path summary)."""
    p = f"l{layer}."

    extras: list[Tensor] = []
    M_in = (
        in_atom_scores(prep, H, params[p + "in_w"], cfg.leaky_slope)
        if cfg.use_in_atom
        else None
    )
    M_crs = (
        cross_atom_scores(prep, H, params[p + "crs_w"], cfg.leaky_slope)
        if cfg.use_cross_atom
        else None
    )
    for M in (M_in, M_crs):
        if M is None:
            continue
        coeffs = cfg.alpha if M is M_in else cfg.beta
        extras.append(diffuse(M, coeffs) if cfg.use_diffusion else M)

    if cfg.strict_mask:
        extras.append(T.const(prep.strict_mask(cfg.diffusion_steps)))
    extra = None
    if len(extras) == 1:
        extra = extras[0]
    elif extras:
        extra = T.add_n(extras)

    sa_rows: list[np.ndarray] = []
    H_sa = T.qkv_attention(
        H,
        params[p + "attn_wq"],
        params[p + "attn_wk"],
        params[p + "attn_wv"],
        params[p + "attn_wo"],
        cfg.n_heads,
        capture=sa_rows if trace is not None else None,
    )

    sublayer = [H, H_sa]
    attn_rows: list[np.ndarray] = []
    if cfg.use_path_attention:
        H_seq = T.multihead_attention(
            H, extra, cfg.n_heads,
            capture=attn_rows if trace is not None else None,
        )
        atom_emb = T.matmul(T.const(prep.atom_avg), H_seq)
        H_path = T.mean_rows(atom_emb)
        H_pa = T.repeat_rows(H_path, prep.n_units)
        sublayer.append(H_pa)
    H1 = T.layer_norm(
        T.add_n(sublayer), params[p + "ln1_g"], params[p + "ln1_b"]
    )

    hidden = T.leaky_relu(
        T.add(T.matmul(H1, params[p + "ffn_w1"]), params[p + "ffn_b1"]),
        cfg.leaky_slope,
    )
    ffn = T.add(T.matmul(hidden, params[p + "ffn_w2"]), params[p + "ffn_b2"])
    H2 = T.layer_norm(
        T.add(H1, ffn), params[p + "ln2_g"], params[p + "ln2_b"]
    )
    if not cfg.use_path_attention:
        # ablated path branch: summarize atoms from the block output instead
        H_path = T.mean_rows(T.matmul(T.const(prep.atom_avg), H2))

    if trace is not None:
        trace[f"l{layer}.M_in"] = None if M_in is None else M_in.data
        trace[f"l{layer}.M_crs"] = None if M_crs is None else M_crs.data
        trace[f"l{layer}.self_attn"] = sa_rows
        trace[f"l{layer}.attn"] = attn_rows
        trace[f"l{layer}.H_path"] = H_path.data
        if cfg.use_path_attention:
            trace[f"l{layer}.H_pa"] = H_pa.data
    return H2, H_path


def score_path(
    prep: PreparedPath,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    trace: dict[str, Any] | None = None,
) -> Tensor:
    """Scalar score for one option's path."""
    H = encode(prep, params)
    H_path = None
    for layer in range(cfg.n_layers):
        H, H_path = block(prep, H, layer, params, cfg, trace)
    features = T.concat([T.const(prep.cls_vec), T.mean_rows(H), H_path])
    return T.add(T.dot(params["out_w"], features), params["out_b"])


def forward_prepared(
    preps: Sequence[PreparedPath],
    params: dict[str, Tensor],
    cfg: ModelConfig,
    trace: list[dict[str, Any]] | None = None,
) -> Tensor:
    """Logits over the four options."""
    scores = []
    for prep in preps:
        t = None
        if trace is not None:
            t = {}
            trace.append(t)
        scores.append(T.reshape(score_path(prep, params, cfg, t), (1,)))
    return T.concat(scores)


def probabilities(logits: Tensor) -> np.ndarray:
    z = logits.data - logits.data.max()
    e = np.exp(z)
    return e / e.sum()


def forward(
    sample: Sample,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    lexicon: Lexicon,
    vocab: SymbolVocab,
    embedder: HashEmbedder,
) -> np.ndarray:
    """Option probabilities for one raw sample."""
    preps = prepare_sample(sample, lexicon, cfg, vocab, embedder)
    return probabilities(forward_prepared(preps, params, cfg))


class ModelScorer:
    """Confidence scorer backed by a trained model."""

    def __init__(
        self,
        params: dict[str, Tensor],
        cfg: ModelConfig,
        lexicon: Lexicon,
        vocab: SymbolVocab,
    ) -> None:
        self.params = params
        self.cfg = cfg
        self.lexicon = lexicon
        self.vocab = vocab
        self.embedder = HashEmbedder(cfg.d, cfg.hash_dim, cfg.seed)

    def score(self, sample: Sample) -> list[float]:
        probs = forward(
            sample, self.params, self.cfg, self.lexicon, self.vocab,
            self.embedder,
        )
        return [float(p) for p in probs]
