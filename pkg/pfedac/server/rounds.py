"""
The federation round loop.

Each round every agent (concurrently, owning only its own state) samples a
critic block and an actor block, updates its head and policy, and proposes a
local subspace B + Delta B^k. The server averages the proposals in agent order,
re-orthonormalizes by QR and broadcasts the result. Metrics are measured
against exact fixed points recomputed at each agent's current policy.

The same loop runs the two comparison arms: `local_only` (full d-dimensional
critic per agent, no communication) and `fedavg_full` (full critic averaged
across agents each round). Both fix B = I_d so the head is the full critic,
stepped without projection onto the U_omega ball.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from pfedac.agents.actor import actor_step, run_actor
from pfedac.agents.chains import ActorChain, CriticChain, Trajectory, sample_actor_block, sample_critic_block
from pfedac.agents.critic import (
    CriticParams,
    TdSample,
    delta_bound,
    head_update,
    local_subspace_update,
    markov_drift,
    reference_td_target,
    td_feature_decomposition_check,
    td_l_error,
)
from pfedac.agents.policy import SCORE_BOUND, SoftmaxPolicy
from pfedac.environments.mdp import Federation, FiniteMdp
from pfedac.oracle.diagnostics import lambda_plus_min, numerical_rank
from pfedac.oracle.td import TdSystem, td_system
from pfedac.oracle.values import StationaryQuantities, exact_value_and_gradient
from pfedac.server.aggregation import (
    aggregate_and_qr,
    orthonormality_error,
    principal_angle_distance,
    proxy_subspace,
    qr_perturbation,
    random_orthonormal,
)
from pfedac.utils.config import check_stepsize_conditions
from pfedac.utils.error_handler import InvalidValue
from pfedac.utils.invariants import InvariantMonitor
from pfedac.utils.seeding import stream

logger = logging.getLogger(__name__)

MODES = ("pfedac", "local_only", "fedavg_full")
DECOMPOSITION_TOL = 1e-12
ORTHONORMAL_TOL = 1e-10
SPAN_TOL = 1e-8


@dataclass
class Hyperparams:
    L: int
    zeta: float
    beta: float
    alpha: float
    radius: float
    reward_bound: float
    workers: int = 1
    metrics_stride: int = 1
    debug_invariants: bool = False
    record_wallclock: bool = False
    log_every: int = 0

    @property
    def U_delta(self) -> float:
        return delta_bound(self.reward_bound, self.radius)

    @classmethod
    def from_config(cls, config, radius: float) -> "Hyperparams":
        return cls(
            L=config.L,
            zeta=config.zeta,
            beta=config.beta,
            alpha=config.alpha,
            radius=radius,
            reward_bound=config.U_r,
            workers=config.workers,
            metrics_stride=config.metrics_stride,
            debug_invariants=config.debug_invariants,
            record_wallclock=config.record_wallclock,
            log_every=config.log_every,
        )


@dataclass
class AgentState:
    index: int
    mdp: FiniteMdp
    omega: np.ndarray
    policy: SoftmaxPolicy
    critic_chain: CriticChain
    actor_chain: ActorChain


@dataclass
class AgentOracle:
    system: TdSystem
    quantities: StationaryQuantities


@dataclass
class AgentRoundResult:
    omega: np.ndarray
    clamped: bool
    policy: SoftmaxPolicy
    increment: Optional[np.ndarray]
    sample: TdSample
    actor_trajectory: Trajectory
    actor_deltas: List[float]
    gradient_estimate: np.ndarray


@dataclass
class RoundMetrics:
    round: int
    x_bar: Optional[float] = None
    pad: Optional[float] = None
    g_bar: Optional[float] = None
    q_frob: float = 0.0
    r_dev: float = 0.0
    clamp_count: int = 0
    wallclock_ms: float = 0.0
    pad_proxy: bool = False

    @property
    def measured(self) -> bool:
        return self.x_bar is not None


@dataclass
class ServerState:
    B: np.ndarray
    round: int = 0
    mode: str = "pfedac"
    metrics_history: List[RoundMetrics] = field(default_factory=list)
    # Oracle evaluations at the agents' current policies, valid for `oracle_round`
    oracle: Optional[List[AgentOracle]] = None
    oracle_round: int = -1


def evaluate_agent(agent: AgentState, federation: Federation, L: int) -> AgentOracle:
    """Exact TD system and value quantities at the agent's current policy"""
    quantities = exact_value_and_gradient(agent.mdp, agent.policy, federation.initial_dist)
    system = td_system(agent.mdp, agent.policy, federation.features, L, mu=quantities.mu)
    return AgentOracle(system=system, quantities=quantities)


def initial_radius(federation: Federation, policies: Sequence[SoftmaxPolicy], L: int) -> float:
    """U_omega = 2 max_k ||omega^{k,*}(theta_0)||, falling back to 1 when every fixed point is zero"""
    norms = []
    for mdp, policy in zip(federation.agents, policies):
        z_star = td_system(mdp, policy, federation.features, L).z_star
        if federation.B_star is not None:
            norms.append(float(np.linalg.norm(federation.B_star.T @ z_star)))
        else:
            norms.append(float(np.linalg.norm(z_star)))
    largest = max(norms)
    return 2.0 * largest if largest > 0 else 1.0


def resolve_radius(config, federation: Federation) -> float:
    """
    U_omega from the config, or auto-sized from the fixed points at the initial policies

    Raises:
        StepsizeConditionViolated: zeta breaks a safety condition for the resolved U_omega
    """
    if config.U_omega == "auto":
        policies = initial_policies(federation, config.tie_policy_to_groups)
        radius = initial_radius(federation, policies, config.L)
        logger.info(f"Resolved U_omega=auto to {radius:.6g}")
    else:
        radius = float(config.U_omega)
    check_stepsize_conditions(config.zeta, config.L, config.gamma, config.U_r, radius)
    return radius


def initial_policies(federation: Federation, tie_to_groups: bool) -> List[SoftmaxPolicy]:
    groups = federation.state_groups if tie_to_groups else None
    return [
        SoftmaxPolicy.uniform(federation.num_states, federation.num_actions, groups)
        for _ in range(federation.num_agents)
    ]


def make_agent(index: int, mdp: FiniteMdp, eta: np.ndarray, head_dim: int, policy: SoftmaxPolicy,
               critic_rng: np.random.Generator, actor_rng: np.random.Generator) -> AgentState:
    """omega_0 = 0, both chains started from eta"""
    return AgentState(
        index=index,
        mdp=mdp,
        omega=np.zeros(head_dim),
        policy=policy,
        critic_chain=CriticChain.start(eta, critic_rng),
        actor_chain=ActorChain.start(eta, actor_rng),
    )


def initialize(federation: Federation, r: int, seed: int, mode: str = "pfedac",
               tie_to_groups: bool = False,
               policies: Optional[Sequence[SoftmaxPolicy]] = None):
    """
    Server and agents before round 0

    Args:
        federation: Federation to train on
        r: Subspace rank (ignored by the full-critic baselines, which use d)
        seed: Root seed; agent k draws from stream(seed, critic|actor, k)
        mode: pfedac, local_only or fedavg_full
        tie_to_groups: Tie policy logits within the federation's state groups
        policies: Optional initial policies, uniform by default

    Returns:
        (ServerState, list of AgentState)
    """
    if mode not in MODES:
        raise InvalidValue(f"unknown mode {mode}")
    d = federation.features.dim
    if mode == "pfedac":
        B = random_orthonormal(stream(seed, "subspace_init"), d, r)
        head_dim = r
    else:
        B = np.eye(d)
        head_dim = d
    if policies is None:
        policies = initial_policies(federation, tie_to_groups)

    agents = [
        make_agent(k, mdp, federation.initial_dist, head_dim, policies[k],
                   stream(seed, "critic", k), stream(seed, "actor", k))
        for k, mdp in enumerate(federation.agents)
    ]
    return ServerState(B=B, mode=mode), agents


def agent_round(agent: AgentState, B: np.ndarray, federation: Federation, hp: Hyperparams,
                propose_subspace: bool) -> AgentRoundResult:
    """One agent's local work for a round; reads B and the federation, touches only its own chains"""
    gamma = federation.discount
    features = federation.features

    trajectory = sample_critic_block(agent.critic_chain, agent.mdp, agent.policy, hp.L)
    sample = td_l_error(trajectory, features, B, agent.omega, gamma)
    # the full-critic baselines step without projection
    radius = hp.radius if propose_subspace else None
    params = CriticParams(omega=agent.omega, radius=radius, head_step=hp.beta, subspace_step=hp.zeta)
    head = head_update(params, sample, B)
    increment = local_subspace_update(B, sample, agent.omega, hp.zeta) if propose_subspace else None

    actor_trajectory = sample_actor_block(agent.actor_chain, agent.mdp, agent.policy, hp.L)
    update = run_actor(actor_trajectory, features, B, agent.omega, agent.policy, gamma, hp.alpha)
    policy = actor_step(agent.policy, update.gradient_estimate, hp.alpha)

    return AgentRoundResult(
        omega=head.omega,
        clamped=head.clamped,
        policy=policy,
        increment=increment,
        sample=sample,
        actor_trajectory=actor_trajectory,
        actor_deltas=update.deltas,
        gradient_estimate=update.gradient_estimate,
    )


def _map(executor: Optional[ThreadPoolExecutor], fn: Callable, items: Sequence) -> list:
    if executor is None:
        return [fn(item) for item in items]
    return list(executor.map(fn, items))


def current_oracle(server: ServerState, agents: List[AgentState], federation: Federation, hp: Hyperparams,
                   executor: Optional[ThreadPoolExecutor] = None) -> List[AgentOracle]:
    """Oracle evaluations at the current round, computed once per round"""
    if server.oracle is None or server.oracle_round != server.round:
        server.oracle = _map(executor, lambda agent: evaluate_agent(agent, federation, hp.L), agents)
        server.oracle_round = server.round
    return server.oracle


def _check_samples(results: List[AgentRoundResult], agents: List[AgentState], oracle: List[AgentOracle],
                   B: np.ndarray, federation: Federation, hp: Hyperparams, monitor: InvariantMonitor,
                   t: int, trace: Optional[list], bounded: bool = True):
    # bounded: heads are projected, so the U_delta bounds apply
    gamma = federation.discount
    features = federation.features
    U_delta = hp.U_delta
    for agent, result, evaluation in zip(agents, results, oracle):
        k = agent.index
        sample = result.sample
        system = evaluation.system
        if bounded:
            monitor.check_upper("abs_delta_L", abs(sample.delta_L), U_delta / (1.0 - gamma), round_index=t, agent=k)
            for delta in result.actor_deltas:
                monitor.check_upper("abs_delta_act", abs(delta), U_delta, round_index=t, agent=k)
        drift = markov_drift(sample.trajectory, features, gamma)
        monitor.check_upper("A_tilde_norm", float(np.linalg.norm(drift, 2)), 2.0, round_index=t, agent=k)
        if np.linalg.norm(system.z_star) <= hp.radius:
            b_t = reference_td_target(sample.trajectory, features, system.z_star, gamma)
            monitor.check_upper("b_tL_norm", float(np.linalg.norm(b_t)), U_delta / (1.0 - gamma), round_index=t, agent=k)
        residual = td_feature_decomposition_check(
            sample, features, B, agent.omega, system.z_star, system.A_L, system.b_bar, gamma
        )
        monitor.check_upper("td_feature_fixed_point_form", residual.fixed_point_form, 0.0,
                            slack=DECOMPOSITION_TOL, round_index=t, agent=k)
        monitor.check_upper("td_feature_markov_noise_form", residual.markov_noise_form, 0.0,
                            slack=DECOMPOSITION_TOL + system.residual, round_index=t, agent=k)
        if bounded:
            monitor.check_upper("policy_step", float(np.linalg.norm(result.policy.logits - agent.policy.logits)),
                                hp.alpha * SCORE_BOUND * U_delta, round_index=t, agent=k)

        if trace is not None:
            x = B @ agent.omega - system.z_star
            trace.append({
                "round": t,
                "agent": k,
                "x_norm": float(np.linalg.norm(x)),
                "abs_delta": abs(sample.delta_L),
                "clamped": int(result.clamped),
                "grad_norm": float(np.sqrt(evaluation.quantities.grad_norm_sq)),
                "g_norm": float(np.linalg.norm(result.gradient_estimate)),
                "reset_count": result.actor_trajectory.reset_count,
            })


def run_round(server: ServerState, agents: List[AgentState], federation: Federation, hyperparams: Hyperparams,
              executor: Optional[ThreadPoolExecutor] = None, monitor: Optional[InvariantMonitor] = None,
              measure: bool = True, trace: Optional[list] = None) -> RoundMetrics:
    """
    Run one round and return the metrics of the resulting state

    Args:
        server: Server state, updated in place (B, round)
        agents: Agent states, updated in place (omega, policy, chains)
        federation: Federation
        hyperparams: Stepsizes and run knobs
        executor: Optional thread pool for the agents' local work
        monitor: Invariant monitor, checks run only when it is enabled
        measure: Compute the oracle-based metrics of the new state
        trace: Optional list receiving per-agent debug rows

    Returns:
        RoundMetrics for round t + 1; oracle fields are None when measure is False

    Raises:
        RankDeficientAggregate, SingularChain
    """
    hp = hyperparams
    started = time.perf_counter()
    t = server.round
    B = server.B
    debug = monitor is not None and monitor.enabled
    propose = server.mode == "pfedac"

    results = _map(executor, lambda agent: agent_round(agent, B, federation, hp, propose), agents)

    if debug:
        oracle = current_oracle(server, agents, federation, hp, executor)
        _check_samples(results, agents, oracle, B, federation, hp, monitor, t, trace, bounded=propose)

    q_frob, r_dev = 0.0, 0.0
    if propose:
        aggregate = aggregate_and_qr(B, [B + result.increment for result in results])
        perturbation = qr_perturbation(aggregate.R)
        q_frob, r_dev = aggregate.q_frob, perturbation["r_dev"]
        server.B = aggregate.B_next
        if debug:
            _check_aggregate(aggregate.q_frob, perturbation, server.B, federation, hp, monitor, t)

    for agent, result in zip(agents, results):
        agent.omega = result.omega
        agent.policy = result.policy
    if server.mode == "fedavg_full":
        average = np.zeros_like(agents[0].omega)
        for agent in agents:
            average = average + agent.omega
        average = average / len(agents)
        for agent in agents:
            agent.omega = average.copy()

    server.round = t + 1
    clamp_count = sum(int(result.clamped) for result in results)
    if clamp_count:
        logger.debug(f"round {t}: {clamp_count} head projection(s) clamped")

    metrics = RoundMetrics(round=server.round, q_frob=q_frob, r_dev=r_dev, clamp_count=clamp_count)
    if measure or debug:
        measure_state(server, agents, federation, hp, metrics, executor, monitor)
    if hp.record_wallclock:
        metrics.wallclock_ms = (time.perf_counter() - started) * 1000.0
    return metrics


def _check_aggregate(q_frob: float, perturbation: Dict[str, float], B_next: np.ndarray, federation: Federation,
                     hp: Hyperparams, monitor: InvariantMonitor, t: int):
    gamma = federation.discount
    scale = hp.U_delta * hp.radius / (hp.L * (1.0 - gamma))
    monitor.check_upper("Q_frob", q_frob, hp.zeta * scale, round_index=t)
    if scale * hp.zeta <= 0.5:
        q_sq = q_frob ** 2
        monitor.check_upper("R_minus_I", perturbation["r_dev"], 2.0 * q_sq, round_index=t)
        monitor.check_upper("R_inv_minus_I", perturbation["r_inv_dev"], 4.0 * q_sq, round_index=t)
        if 2.0 * q_sq < 1.0:
            monitor.check_upper("R_inv_norm", perturbation["r_inv_norm"], 1.0 / (1.0 - 2.0 * q_sq), round_index=t)
    monitor.check_upper("BtB_minus_I", orthonormality_error(B_next), 0.0, slack=ORTHONORMAL_TOL, round_index=t)


def _lower_bound_applies(Z: np.ndarray, B_star: np.ndarray, r: int) -> bool:
    """The head-error lower bound needs d >= 2r, rank(Z*) = r and every z* inside span(B*)"""
    if Z.shape[0] < 2 * r or numerical_rank(Z) != r:
        return False
    outside = Z - B_star @ (B_star.T @ Z)
    return float(np.linalg.norm(outside)) <= SPAN_TOL * max(1.0, float(np.linalg.norm(Z)))


def measure_state(server: ServerState, agents: List[AgentState], federation: Federation, hp: Hyperparams,
                  metrics: RoundMetrics, executor: Optional[ThreadPoolExecutor] = None,
                  monitor: Optional[InvariantMonitor] = None) -> RoundMetrics:
    """
    Fill x_bar, pad and g_bar for the current state from oracle fixed points

    x^k = B omega^k - z^{k,*}(theta^k); pad is ||(I - B* B*^T) B||_F^2, or the
    distance to the top-r singular subspace of Z* (flagged as proxy) when B* is unknown.
    """
    oracle = current_oracle(server, agents, federation, hp, executor)
    K = len(agents)
    B = server.B
    Z = np.column_stack([evaluation.system.z_star for evaluation in oracle])
    x_sq = [float(np.sum((B @ agent.omega - evaluation.system.z_star) ** 2)) for agent, evaluation in zip(agents, oracle)]

    metrics.x_bar = float(np.mean(x_sq))
    metrics.g_bar = float(np.mean([evaluation.quantities.grad_norm_sq for evaluation in oracle]))

    if server.mode == "pfedac":
        r = B.shape[1]
        if federation.B_star is not None:
            metrics.pad = principal_angle_distance(B, federation.B_star)[0]
            if monitor is not None and monitor.enabled and _lower_bound_applies(Z, federation.B_star, r):
                bound = lambda_plus_min(Z) * metrics.pad / (r * K)
                monitor.check_lower("head_error_lower_bound", metrics.x_bar, bound, round_index=server.round)
        elif np.any(Z):
            metrics.pad = principal_angle_distance(B, proxy_subspace(Z, r))[0]
            metrics.pad_proxy = True
    return metrics


def run_federation(federation: Federation, hp: Hyperparams, r: int, T: int, seed: int, mode: str = "pfedac",
                   tie_to_groups: bool = False, monitor: Optional[InvariantMonitor] = None,
                   on_metrics: Optional[Callable[[RoundMetrics], None]] = None,
                   trace: Optional[list] = None) -> ServerState:
    """
    T rounds of the chosen algorithm, recording metrics at rounds 0, stride, 2*stride, ... and T

    Args:
        federation: Federation
        hp: Hyperparameters (radius already resolved)
        r: Subspace rank
        T: Number of rounds
        seed: Root seed
        mode: pfedac, local_only or fedavg_full
        tie_to_groups: Tie policies within state groups
        monitor: Optional invariant monitor
        on_metrics: Callback for every recorded row (e.g. a CSV writer)
        trace: Optional list receiving debug trace rows

    Returns:
        Final ServerState with its metrics history
    """
    server, agents = initialize(federation, r, seed, mode, tie_to_groups)
    executor = ThreadPoolExecutor(max_workers=hp.workers) if hp.workers > 1 else None
    log_every = hp.log_every or max(1, T // 10)

    def record(metrics: RoundMetrics):
        server.metrics_history.append(metrics)
        if on_metrics is not None:
            on_metrics(metrics)

    try:
        record(measure_state(server, agents, federation, hp, RoundMetrics(round=0), executor, monitor))
        for t in range(T):
            due = (t + 1) % hp.metrics_stride == 0 or t + 1 == T
            metrics = run_round(server, agents, federation, hp, executor, monitor, measure=due, trace=trace)
            if due:
                record(metrics)
            if (t + 1) % log_every == 0 and metrics.measured:
                logger.info(
                    f"[{mode}] round {t + 1}/{T}: x_bar={metrics.x_bar:.4e} "
                    f"pad={_fmt(metrics.pad)} "
                    f"g_bar={metrics.g_bar:.4e}"
                )
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    return server


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4e}"
