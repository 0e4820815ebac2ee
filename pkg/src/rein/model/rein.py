"""Recurrent partitioned network.

Every neuron at every level owns a recurrent state.  At each time step a
neuron reads three channels (upward ``z_u``, downward ``z_d``, peer ``z_c``),
runs its level's posterior GRU, and emits a Gaussian latent.  Bottom-level
latents are decoded into the next observation.  A second GRU per level,
fed only with the previous step's channels, gives the learned prior.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn

from ..tensorcore.stochastic import gaussian_reparameterize, gumbel_softmax_sample, kl_diag_gaussian
from .channels import ConfigError, ControlEmbed, DownwardPass, ObservationEmbed, PeerPass, UpwardPass
from .edges import EdgeBelief, EdgeInference
from .hierarchy import HierarchySpec
from .layers import MLP

ABLATIONS = ("full", "upward", "downward", "p_random", "p_learned")


@dataclass
class ModelConfig:
    n_objects: int = 5
    state_dim: int = 4
    neuron_dim: int = 64
    heads: int = 4
    edge_types: int = 2
    control_dim: int = 0
    context_len: int = 49
    ablation: str = "full"
    per_step_edges: bool = False
    teacher_every: int = 10
    groups: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.neuron_dim % self.heads:
            raise ConfigError(f"heads={self.heads} must divide neuron_dim={self.neuron_dim}")
        if self.context_len < 2:
            raise ConfigError("context_len must be >= 2")
        if self.groups is not None:
            self.groups = tuple(int(g) for g in self.groups)

    def hierarchy(self) -> HierarchySpec:
        if self.groups is None:
            return HierarchySpec.physical(self.n_objects, self.neuron_dim)
        if len(self.groups) != self.n_objects:
            raise ConfigError("groups must assign every object")
        return HierarchySpec.grouped(list(self.groups), self.neuron_dim)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["groups"] = list(self.groups) if self.groups is not None else None
        return d


@dataclass
class ELBOTerms:
    recon: torch.Tensor  # (T-1,) per-step squared error
    kl: torch.Tensor  # (T-1,) per-step KL summed over levels
    kl_weight: float
    total: torch.Tensor
    trace: dict = field(default_factory=dict)

    @property
    def recon_total(self) -> torch.Tensor:
        return self.recon.sum()

    @property
    def kl_total(self) -> torch.Tensor:
        return self.kl.sum()


@dataclass
class LatentSample:
    mu: torch.Tensor
    logvar: torch.Tensor
    z: torch.Tensor


@dataclass
class RecurrentState:
    r: list
    prior: list
    hprev: list
    dec: torch.Tensor


class LatentCell(nn.Module):
    """GRU over the concatenated channels, projected to a diagonal Gaussian."""

    def __init__(self, dim: int):
        super().__init__()
        self.gru = nn.GRUCell(3 * dim, dim)
        self.head = nn.Linear(dim, 2 * dim)

    def zero_head(self) -> None:
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, h, state):
        b, n, _ = h.shape
        new = self.gru(h.reshape(b * n, -1), state.reshape(b * n, -1)).view(b, n, -1)
        mu, logvar = self.head(new).chunk(2, dim=-1)
        return mu, logvar, new


def cell_step(cell: LatentCell, z_u, z_d, z_c, state, gen=None, sample: bool = True):
    """One posterior update; returns ``(LatentSample, new_state)``."""
    if not z_u.shape == z_d.shape == z_c.shape:
        raise ValueError(f"channel widths differ: {tuple(z_u.shape)}, {tuple(z_d.shape)}, {tuple(z_c.shape)}")
    mu, logvar, new = cell(torch.cat([z_u, z_d, z_c], dim=-1), state)
    z = gaussian_reparameterize(mu, logvar, gen) if sample else mu
    return LatentSample(mu, logvar, z), new


class Decoder(nn.Module):
    """Fuse (z_r, a, h_t), run the decoder GRU, emit a state delta."""

    def __init__(self, dim: int, control_dim: int, state_dim: int):
        super().__init__()
        self.fuse = MLP(dim + control_dim + 3 * dim, dim, dim)
        self.gru = nn.GRUCell(dim, dim)
        self.out = nn.Linear(dim, state_dim)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, z_r, a, h, obs, state):
        b, n, _ = z_r.shape
        g = self.fuse(torch.cat([z_r, a[:, None, :].expand(b, n, -1), h], dim=-1))
        new = self.gru(g.reshape(b * n, -1), state.reshape(b * n, -1)).view(b, n, -1)
        return obs + self.out(new), new


class REIN(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        spec = cfg.hierarchy()
        if spec.n_levels < 2:
            raise ConfigError("REIN needs at least two levels")
        self.spec = spec
        dims = spec.dims
        top = spec.n_levels - 1
        self.obs_embed = ObservationEmbed(cfg.state_dim, dims[0])
        self.up = nn.ModuleList(
            UpwardPass(spec.membership(m), dims[m - 1], dims[m]) for m in range(1, spec.n_levels))
        self.ctrl = ControlEmbed(cfg.control_dim, dims[top])
        self.down = nn.ModuleList(
            DownwardPass(2 * dims[m], 2 * dims[m + 1], dims[m], cfg.heads) for m in range(top))
        self.peer_levels = [m for m in range(top) if spec.sizes[m] > 1]
        self.peer = nn.ModuleDict({
            str(m): PeerPass(spec.sizes[m], dims[m], dims[m], cfg.edge_types) for m in self.peer_levels})
        self.edge_inf = nn.ModuleDict({
            str(m): EdgeInference(spec.sizes[m], cfg.context_len, cfg.state_dim, dims[m], cfg.edge_types)
            for m in self.peer_levels})
        self.cells = nn.ModuleList(LatentCell(d) for d in dims)
        self.priors = nn.ModuleList(LatentCell(d) for d in dims)
        self.decoder = Decoder(dims[0], cfg.control_dim, cfg.state_dim)
        self.beta = nn.ParameterList()  # auxiliary group, intentionally empty
        self.register_buffer("scale", torch.ones(cfg.state_dim))
        for m in range(spec.n_levels):
            if m:
                self.register_buffer(f"desc{m}", spec.descendants(m).float(), persistent=False)

    # -- bookkeeping -----------------------------------------------------

    @property
    def hparams(self) -> dict:
        return self.cfg.to_dict()

    def param_groups(self) -> dict[str, str]:
        groups = {}
        for name, _ in self.named_parameters():
            root = name.split(".")[0]
            if root in ("peer", "priors"):
                groups[name] = "psi"
            elif root == "decoder":
                groups[name] = "theta"
            elif root == "beta":
                groups[name] = "beta"
            else:
                groups[name] = "phi"
        return groups

    def set_normalization(self, data) -> None:
        """Per-coordinate-kind scale: position std and velocity std."""
        data = torch.as_tensor(data, dtype=torch.float64)
        half = self.cfg.state_dim // 2
        pos = data[..., :half].std().item()
        vel = data[..., half:].std().item()
        scale = [pos] * half + [vel] * (self.cfg.state_dim - half)
        self.scale.copy_(torch.tensor(scale))

    @property
    def dtype(self) -> torch.dtype:
        return self.scale.dtype

    def normalize(self, obs):
        return obs.to(self.dtype) / self.scale

    def denormalize(self, obs):
        return obs * self.scale

    def init_state(self, batch: int) -> RecurrentState:
        zeros = [torch.zeros(batch, n, d, dtype=self.dtype) for n, d in zip(self.spec.sizes, self.spec.dims)]
        hprev = [torch.zeros(batch, n, 3 * d, dtype=self.dtype) for n, d in zip(self.spec.sizes, self.spec.dims)]
        return RecurrentState(zeros, [z.clone() for z in zeros], hprev,
                              torch.zeros(batch, self.spec.sizes[0], self.spec.dims[0], dtype=self.dtype))

    def _control(self, a, batch):
        if a is None:
            return torch.zeros(batch, self.cfg.control_dim, dtype=self.dtype)
        return a.to(self.dtype)

    # -- edges -----------------------------------------------------------

    def node_series(self, obs_norm, level: int):
        """(B, N_level, T, D) series; higher levels use descendant centroids."""
        series = obs_norm.transpose(1, 2)
        if level == 0:
            return series
        desc = getattr(self, f"desc{level}").to(series.dtype)
        return torch.einsum("ij,bjtd->bitd", desc, series)

    def infer_edges(self, obs_norm, tau: float = 0.5, hard: bool = True, gen=None,
                    mode: str = "sample") -> dict[int, EdgeBelief]:
        """Edge beliefs for every peer level from the last ``context_len`` frames.

        ``mode='sample'`` draws a Gumbel-softmax sample; ``mode='mean'`` uses
        the deterministic argmax one-hot (or softmax when ``hard`` is False).
        """
        window = obs_norm[:, -self.cfg.context_len:]
        if window.shape[1] != self.cfg.context_len:
            raise ValueError(f"need at least {self.cfg.context_len} context frames, got {obs_norm.shape[1]}")
        beliefs = {}
        for m in self.peer_levels:
            if self.cfg.ablation == "p_random":
                n_edges = self.peer[str(m)].send.numel()
                draw = torch.randint(self.cfg.edge_types, (obs_norm.shape[0], n_edges), generator=gen)
                sample = nn.functional.one_hot(draw, self.cfg.edge_types).to(self.dtype)
                logits = torch.log(sample.clamp_min(1e-6))
                beliefs[m] = EdgeBelief(logits, sample, self.spec.sizes[m])
                continue
            logits = self.edge_inf[str(m)](self.node_series(window, m))
            if mode == "sample":
                sample = gumbel_softmax_sample(logits, tau, hard=hard, gen=gen)
            elif hard:
                sample = nn.functional.one_hot(logits.argmax(-1), self.cfg.edge_types).to(logits.dtype)
            else:
                sample = torch.softmax(logits, dim=-1)
            beliefs[m] = EdgeBelief(logits, sample, self.spec.sizes[m])
        return beliefs

    # -- one time step ---------------------------------------------------

    def step(self, state: RecurrentState, obs_t, edges: dict[int, EdgeBelief], a=None, gen=None,
             sample: bool = True, keep_channels: bool = False):
        """Advance every level by one step.

        Returns ``(prediction of next normalized observation, new state,
        per-level list of (posterior LatentSample, prior mu, prior logvar))``.
        """
        spec, ablation = self.spec, self.cfg.ablation
        top = spec.n_levels - 1
        batch = obs_t.shape[0]
        a = self._control(a, batch)

        z_u = [self.obs_embed(obs_t)]
        for m in range(1, spec.n_levels):
            z_u.append(self.up[m - 1](z_u[m - 1], state.r[m - 1]))
        channel_u = [torch.zeros_like(z) for z in z_u] if ablation == "downward" else z_u

        prior_out, prior_state = [], []
        for m in range(spec.n_levels):
            pmu, plogvar, ps = self.priors[m](state.hprev[m], state.prior[m])
            prior_out.append((pmu, plogvar))
            prior_state.append(ps)

        new_r = [None] * spec.n_levels
        latents = [None] * spec.n_levels
        hcat = [None] * spec.n_levels
        for m in range(top, -1, -1):
            if m == top:
                z_d = self.ctrl(a, batch, spec.sizes[m])
            else:
                query = torch.cat([channel_u[m], state.r[m]], dim=-1)
                parent = torch.cat([latents[m + 1].z, new_r[m + 1]], dim=-1)
                z_d = self.down[m](query, parent)
            if ablation == "upward":
                z_d = torch.zeros_like(z_d)
            if m in edges:
                z_c = self.peer[str(m)](z_u[m], edges[m].sample)
            else:
                z_c = torch.zeros_like(z_u[m])
            latents[m], new_r[m] = cell_step(self.cells[m], channel_u[m], z_d, z_c, state.r[m], gen, sample)
            hcat[m] = torch.cat([channel_u[m], z_d, z_c], dim=-1)

        pred, dec = self.decoder(latents[0].z, a, hcat[0], obs_t, state.dec)
        new_state = RecurrentState(new_r, prior_state, hcat, dec)
        terms = [(latents[m], *prior_out[m]) for m in range(spec.n_levels)]
        if keep_channels:
            return pred, new_state, terms, {"z_u": z_u, "h": hcat}
        return pred, new_state, terms

    # -- sequences -------------------------------------------------------

    def elbo(self, obs, kl_weight: float = 1.0, tau: float = 0.5, hard: bool = True, gen=None,
             edges: dict[int, EdgeBelief] | None = None, keep_trace: bool = False) -> ELBOTerms:
        """Negative ELBO of a raw batch ``obs`` (B, T, N, D).

        Inputs follow the teacher-forcing period ``teacher_every``: ground
        truth every ``teacher_every`` steps, the model's own prediction in
        between.
        """
        b, t_len = obs.shape[:2]
        if t_len < 2:
            raise ValueError("elbo needs at least two frames")
        x = self.normalize(obs)
        if edges is None and not self.cfg.per_step_edges:
            edges = self.infer_edges(x, tau, hard, gen)
        state = self.init_state(b)
        recon, kl = [], []
        trace = {"pred": [], "mu": [], "logvar": [], "pmu": [], "plogvar": [], "edges": edges}
        inputs = []
        pred = None
        period = max(self.cfg.teacher_every, 1)
        for t in range(t_len - 1):
            inp = x[:, t] if t % period == 0 else pred
            inputs.append(inp)
            step_edges = edges
            if self.cfg.per_step_edges:
                step_edges = self.infer_edges(self._window(inputs), tau, hard, gen)
            pred, state, terms = self.step(state, inp, step_edges, gen=gen, sample=True)
            recon.append(((pred - x[:, t + 1]) ** 2).sum(dim=(1, 2)).mean())
            kl_t = 0
            for lat, pmu, plogvar in terms:
                kl_t = kl_t + kl_diag_gaussian(lat.mu, lat.logvar, pmu, plogvar, dim=(1, 2)).mean()
            kl.append(kl_t)
            if keep_trace:
                trace["pred"].append(pred.detach())
                trace["mu"].append([lat.mu.detach() for lat, _, _ in terms])
                trace["logvar"].append([lat.logvar.detach() for lat, _, _ in terms])
                trace["pmu"].append([p.detach() for _, p, _ in terms])
                trace["plogvar"].append([p.detach() for _, _, p in terms])
        recon = torch.stack(recon)
        kl = torch.stack(kl)
        total = recon.sum() + kl_weight * kl.sum()
        return ELBOTerms(recon, kl, kl_weight, total, trace if keep_trace else {})

    def _window(self, frames):
        """Most recent ``context_len`` frames, front-padded with the first one."""
        seq = torch.stack(frames, dim=1)
        need = self.cfg.context_len - seq.shape[1]
        if need > 0:
            seq = torch.cat([seq[:, :1].expand(-1, need, -1, -1), seq], dim=1)
        return seq[:, -self.cfg.context_len:]

    @torch.no_grad()
    def rollout(self, context, horizon: int, mode: str = "mean", a=None, gen=None, tau: float = 0.5,
                return_edges: bool = False):
        """Closed-loop prediction of ``horizon`` frames after raw ``context``."""
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        if mode not in ("mean", "sample"):
            raise ValueError(f"mode must be 'mean' or 'sample', got {mode!r}")
        b, t0 = context.shape[:2]
        if t0 < 2:
            raise ValueError("rollout needs at least two context frames")
        x = self.normalize(context)
        sample = mode == "sample"
        edges = self.infer_edges(x, tau, hard=True, gen=gen, mode=mode)
        out = []
        if horizon:
            state = self.init_state(b)
            inputs = []
            pred = None
            for t in range(t0 + horizon - 1):
                inp = x[:, t] if t < t0 else pred
                inputs.append(inp)
                step_edges = self.infer_edges(self._window(inputs), tau, True, gen, mode) \
                    if self.cfg.per_step_edges else edges
                pred, state, _ = self.step(state, inp, step_edges, a=a, gen=gen, sample=sample)
                if t >= t0 - 1:
                    out.append(pred)
            preds = self.denormalize(torch.stack(out, dim=1))
        else:
            preds = context.new_zeros((b, 0) + tuple(context.shape[2:])).to(self.dtype)
        return (preds, edges) if return_edges else preds

    def training_loss(self, batch: dict, tau: float, kl_weight: float, gen=None):
        terms = self.elbo(batch["obs"], kl_weight=kl_weight, tau=tau, hard=True, gen=gen)
        return terms.total, {"recon": terms.recon_total.detach(), "kl": terms.kl_total.detach()}
