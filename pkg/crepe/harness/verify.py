"""Self-checks of the path estimators and samplers against exact oracles.

Each suite runs a small, fully enumerable or closed-form problem and compares what
the library computes with the exact answer.
"""

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from rich.console import Console
from rich.padding import Padding
from rich.table import Table
from scipy import special
from structlog import get_logger

from crepe.control.acceptance import swap_log_accept
from crepe.control.proposals import pretrained_pair
from crepe.control.tasks import CfgDebias, ControlTask, Tempering, exact_log_target
from crepe.core.grid import TimeGrid, build_level_grid, build_uniform_grid
from crepe.core.paths import Direction, PathSegment
from crepe.core.rng import StreamPurpose, stream
from crepe.diffusion.discrete import KernelOptions, kernel_probs
from crepe.diffusion.gaussian import rne_discrete, rne_stabilized, simulate_path
from crepe.diffusion.reference import ReferenceProcess
from crepe.errors import UnknownSuiteError
from crepe.models.discrete import ExactDiscreteModel
from crepe.models.mixture import GaussianMixtureModel, bimodal_mixture
from crepe.pt.config import CtmcProposal, EngineConfig
from crepe.pt.engine import Ladder, run
from crepe.pt.local import mh_position_probs
from crepe.smc.engine import SmcConfig, smc_run
from crepe.smc.particles import ess

logger = get_logger("harness.verify")

console = Console()

RATE_FACTOR = 1.25
"""The smallest error reduction accepted when the step size halves."""

BALANCE_TOLERANCE = 1e-10


@dataclass
class SuiteResult:
    name: str
    passed: bool = True
    rows: list[tuple[str, str]] = field(default_factory=list)

    def check(self, ok: bool, message: str):
        self.passed &= bool(ok)
        self.rows.append(("[green]PASS[/green]" if ok else "[red]FAIL[/red]", message))

    def note(self, message: str):
        self.rows.append(("", message))


Suite = Callable[[int], SuiteResult]

SUITES: dict[str, Suite] = {}


def suite(name: str):
    def register(func: Suite) -> Suite:
        SUITES[name] = func
        return func

    return register


def discrete_cfg_task(num_tokens: int, w: float = 1.2) -> CfgDebias:
    """CFG debiasing over three tokens and the mask."""
    unconditional = ExactDiscreteModel.from_factorized(
        4,
        np.tile([0.5, 0.3, 0.2], (num_tokens, 1)),
        "unconditional",
    )
    conditional = ExactDiscreteModel.from_factorized(
        4,
        np.tile([0.2, 0.3, 0.5], (num_tokens, 1)),
        "conditional",
    )

    return CfgDebias(unconditional, conditional, w, w)


def _marginal_errors(model, x0, t, t_prime, dt, rng, reference=None) -> np.ndarray:
    """``|log R + log p_t' - log p_t|`` along forward paths of the pretrained pair."""
    times = np.linspace(t, t_prime, int(round((t_prime - t) / dt)) + 1)
    pair = pretrained_pair(model)
    path = simulate_path(x0, times, pair.forward, rng)

    if reference is None:
        log_r = rne_discrete(path, pair.forward, pair.backward).value
    else:
        log_r = rne_stabilized(path, pair.forward, pair.backward, reference).value

    exact = model.log_prob(path.start, path.times[:, 0]) - model.log_prob(
        path.end,
        path.times[:, -1],
    )

    return np.abs(log_r - exact)


@suite("rne-identity")
def rne_identity(seed: int) -> SuiteResult:
    """Path estimators converge to marginal density ratios as the step shrinks."""
    result = SuiteResult("rne-identity")
    model = bimodal_mixture()
    errors = []

    for dt in (4e-3, 2e-3, 1e-3):
        rng = stream(seed, 0, 0, StreamPurpose.ORACLE)
        x0 = model.sample(10_000, rng, 0.1)
        errors.append(float(np.mean(_marginal_errors(model, x0, 0.1, 1.0, dt, rng))))
        result.note(f"dt={dt:g}  mean error={errors[-1]:.3e}")

    for coarse, fine in zip(errors, errors[1:]):
        result.check(
            coarse >= RATE_FACTOR * fine,
            f"error reduced by {coarse / fine:.2f} (at least {RATE_FACTOR})",
        )

    return result


@suite("ctmc-detailed-balance")
def ctmc_detailed_balance(seed: int) -> SuiteResult:
    """The enumerated swap kernel of a CFG task balances ``pi_t x pi_t'``."""
    result = SuiteResult("ctmc-detailed-balance")
    task = discrete_cfg_task(1)
    t, t_prime = 0.4, 0.7
    options = KernelOptions(strict=True)
    ladder = Ladder.build(task, build_level_grid(np.array([t, t_prime])), kernel=options)

    vocab = np.arange(4)
    dt = np.full(4, t_prime - t)

    forward = kernel_probs(vocab[:, None], np.full(4, t), dt, ladder.proposal.forward, options)
    backward = kernel_probs(
        vocab[:, None],
        np.full(4, t_prime),
        dt,
        ladder.proposal.backward,
        options,
    )

    # a, b are the lower and upper states; c, d their replacements.
    a, b, c, d = (g.ravel() for g in np.meshgrid(vocab, vocab, vocab, vocab, indexing="ij"))
    times = np.tile([t, t_prime], (a.size, 1))

    forward_path = PathSegment(times, np.stack([a, d], axis=1)[..., None], Direction.FORWARD)
    backward_path = PathSegment(times, np.stack([c, b], axis=1)[..., None], Direction.BACKWARD)

    log_alpha = swap_log_accept(
        task,
        forward_path,
        backward_path,
        ladder.rnes(forward_path),
        ladder.rnes(backward_path),
    )

    lower = special.softmax(exact_log_target(task, vocab[:, None], t))
    upper = special.softmax(exact_log_target(task, vocab[:, None], t_prime))

    flux = (
        lower[a] * upper[b] * forward[a, 0, d] * backward[b, 0, c] * np.exp(log_alpha)
    ).reshape(4, 4, 4, 4)
    violation = float(np.max(np.abs(flux - flux.transpose(2, 3, 0, 1))))

    result.check(
        violation <= BALANCE_TOLERANCE,
        f"max violation {violation:.2e} (at most {BALANCE_TOLERANCE:g})",
    )

    return result


@suite("local-detailed-balance")
def local_detailed_balance(seed: int) -> SuiteResult:
    """Discrete Metropolis-Hastings moves balance the level target."""
    result = SuiteResult("local-detailed-balance")
    task = discrete_cfg_task(2)
    model = task.models[0]
    states = model.enumerate_states()
    size = states.shape[0]
    t = 0.5

    shape = (model.vocab_size,) * model.num_tokens
    target = special.softmax(exact_log_target(task, states, t))

    for proposal in CtmcProposal:
        for pos in range(model.num_tokens):
            probs = mh_position_probs(
                task,
                states,
                pos,
                np.full(size, t),
                np.full(size, 0.3),
                proposal,
            )

            kernel = np.zeros((size, size))

            for v in range(model.vocab_size):
                moved = states.copy()
                moved[:, pos] = v
                kernel[np.arange(size), np.ravel_multi_index(moved.T, shape)] += probs[:, v]

            flux = target[:, None] * kernel
            violation = float(np.max(np.abs(flux - flux.T)))

            result.check(
                violation <= BALANCE_TOLERANCE and np.allclose(kernel.sum(axis=1), 1.0),
                f"{proposal} proposal, position {pos}: max violation {violation:.2e}",
            )

    return result


def _unit_task() -> tuple[ControlTask, TimeGrid]:
    return Tempering(bimodal_mixture(), 1.0), build_uniform_grid(0.5, 0.6, 100, 5)


@suite("unit-acceptance")
def unit_acceptance(seed: int) -> SuiteResult:
    """Tempering at ``beta = 1`` with exact proposals accepts every swap."""
    result = SuiteResult("unit-acceptance")
    task, grid = _unit_task()

    pt = run(task, EngineConfig(grid, 2000, burn_in=0, seed=seed, log_every=1000))
    rates = pt.diagnostics.acceptance_rates

    result.note(f"levels={grid.num_levels}  lowest acceptance={rates.min():.4f}")
    result.check(rates.mean() >= 0.9, f"mean acceptance {rates.mean():.4f} (at least 0.9)")

    return result


@suite("nfe-parity")
def nfe_parity(seed: int) -> SuiteResult:
    """Matched replica exchange and SMC runs spend the same score evaluations."""
    result = SuiteResult("nfe-parity")
    task = Tempering(bimodal_mixture(), 2.0)
    grid = build_uniform_grid(0.1, 2.0, 8, 2)
    n = 16

    pt = run(task, EngineConfig(grid, n, burn_in=0, seed=seed, log_every=1000))
    smc = smc_run(task, SmcConfig(grid, n, seed=seed))

    expected = grid.num_levels * grid.substeps_per_level * n

    result.note(f"M={grid.num_levels}  K={grid.substeps_per_level}  N={n}")
    result.check(
        pt.diagnostics.nfe == smc.diagnostics.nfe == expected,
        f"PT {pt.diagnostics.nfe}, SMC {smc.diagnostics.nfe}, expected {expected}",
    )

    return result


@suite("score-fd")
def score_fd(seed: int) -> SuiteResult:
    """Mixture scores match central differences of the log-density."""
    result = SuiteResult("score-fd")
    model = GaussianMixtureModel(
        [0.3, 0.7],
        [[-1.0, 0.5], [2.0, -1.0]],
        [0.2, 0.5],
        label="fd",
    )

    rng = stream(seed, 0, 0, StreamPurpose.ORACLE)
    x = rng.uniform(-4.0, 4.0, (100, 2))
    t = rng.uniform(0.05, 2.0, 100)
    eps = 1e-5

    fd = np.stack(
        [
            (model.log_prob(x + eps * e, t) - model.log_prob(x - eps * e, t)) / (2 * eps)
            for e in np.eye(2)
        ],
        axis=1,
    )
    error = float(np.max(np.abs(model.score(x, t) - fd)))

    result.check(error < 1e-5, f"max abs error {error:.2e} (below 1e-05)")

    return result


@suite("smc-weights")
def smc_weights(seed: int) -> SuiteResult:
    """Exact proposals leave SMC weights constant."""
    result = SuiteResult("smc-weights")
    task, grid = _unit_task()

    smc = smc_run(task, SmcConfig(grid, 1000, ess_threshold=1e-6, seed=seed))
    spread = float(np.std(smc.log_weights))
    _, fraction = ess(smc.log_weights)

    result.check(spread < 0.05, f"log-weight std {spread:.2e} (below 0.05)")
    result.check(fraction > 0.95, f"normalized ESS {fraction:.4f} (above 0.95)")

    return result


@suite("stabilized-rne")
def stabilized_rne(seed: int) -> SuiteResult:
    """Reference-stabilized estimators are exact when the reference is the model."""
    result = SuiteResult("stabilized-rne")
    gaussian = GaussianMixtureModel([1.0], [0.5], 0.3, label="gaussian")
    reference = ReferenceProcess(np.array([0.5]), 0.3, gaussian.drift, gaussian.schedule)

    rng = stream(seed, 0, 0, StreamPurpose.ORACLE)
    x0 = gaussian.sample(1000, rng, 0.1)
    error = float(np.max(_marginal_errors(gaussian, x0, 0.1, 1.0, 1e-2, rng, reference)))

    result.check(error < 1e-8, f"Gaussian target: max error {error:.2e} (below 1e-08)")

    mixture = bimodal_mixture()
    mean, var = mixture.moments()
    reference = ReferenceProcess(mean, var, mixture.drift, mixture.schedule)

    for label, ref in (("plain", None), ("stabilized", reference)):
        rng = stream(seed, 0, 0, StreamPurpose.ORACLE)
        x0 = mixture.sample(2000, rng, 0.1)
        error = float(np.mean(_marginal_errors(mixture, x0, 0.1, 1.0, 1e-3, rng, ref)))
        result.note(f"bimodal target, {label}: mean error {error:.3e}")

    return result


def run_suites(names: list[str], seed: int = 0) -> list[SuiteResult]:
    """Run the named suites in order. Every name is checked before any suite runs."""
    for name in names:
        if name not in SUITES:
            raise UnknownSuiteError(name, sorted(SUITES))

    results = []

    for name in names:
        logger.info("Running verification suite", suite=name)
        results.append(SUITES[name](seed))

    return results


def print_result(result: SuiteResult):
    marker = "[green]PASS[/green]" if result.passed else "[red]FAIL[/red]"

    console.rule(f"[bold]{result.name}[/bold] {marker}", align="left", style="grey")
    console.line()

    table = Table.grid(padding=(0, 1, 0, 1))
    table.add_column()
    table.add_column()

    for label, message in result.rows:
        table.add_row(f"‣ [bold]{label}[/bold]" if label else "‣", message)

    console.print(Padding(table, (0, 0, 0, 2)))
    console.line()
