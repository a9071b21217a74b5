"""Main pfedac flow logic: runs, sweeps, assumption diagnostics and the verify suite"""
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from pfedac.agents.chains import CriticChain, sample_critic_block
from pfedac.agents.critic import td_feature_decomposition_check, td_l_error, td_l_error_telescoped
from pfedac.agents.policy import SoftmaxPolicy
from pfedac.environments.generators import generate_federation, make_lumpable_federation, make_random_federation
from pfedac.environments.mdp import Federation, companion_kernel, save_federation
from pfedac.oracle.diagnostics import AssumptionReport, check_assumptions
from pfedac.oracle.stationary import discounted_visitation, stationary_distribution
from pfedac.oracle.td import td_system
from pfedac.oracle.values import exact_value_and_gradient, exact_values, expected_return
from pfedac.server.aggregation import aggregate_and_qr, orthonormality_error, qr_perturbation, random_orthonormal
from pfedac.server.baselines import run_baseline
from pfedac.server.rounds import Hyperparams, initial_policies, resolve_radius, run_federation
from pfedac.server.sweep import speedup_sweep
from pfedac.utils.config import RunConfig, dump_config, max_safe_zeta
from pfedac.utils.error_handler import MissingKey
from pfedac.utils.invariants import InvariantMonitor
from pfedac.utils.reporting import MetricsWriter, time_averages, write_summary, write_trace
from pfedac.utils.seeding import stream

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
LOG_FILE = "pfedac.log"


def configure_logging(output_dir: Optional[str] = None, verbose: bool = False) -> None:
    """Console logging plus a pfedac.log file inside the output directory"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if output_dir is not None:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(Path(output_dir) / LOG_FILE, mode="w"))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def prepare_output(config: RunConfig, config_path: Optional[str]) -> Path:
    """Create output_dir and echo the config into it: verbatim copy plus resolved defaults"""
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if config_path is not None:
        shutil.copyfile(config_path, output_dir / "config.yaml")
    dump_config(config, str(output_dir / "config.resolved.yaml"))
    return output_dir


def run_experiment(config: RunConfig, config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Run pfedac or one of the baselines as configured and write every result file

    Args:
        config: Resolved configuration
        config_path: Original config file, copied verbatim into output_dir

    Returns:
        The summary written to summary.json
    """
    if config.mode == "sweep":
        return run_sweep(config, config_path)

    output_dir = prepare_output(config, config_path)
    federation = generate_federation(config)
    save_federation(federation, str(output_dir / "federation.json"))

    radius = resolve_radius(config, federation)
    hp = Hyperparams.from_config(config, radius)
    monitor = InvariantMonitor(enabled=config.debug_invariants)
    trace: Optional[list] = [] if config.debug_invariants else None

    logger.info(
        f"Starting {config.mode}: env={config.env} K={config.K} r={config.r} L={config.L} "
        f"T={config.T} zeta={config.zeta} U_omega={radius:.6g}"
    )
    with MetricsWriter(output_dir / "metrics.csv") as writer:
        if config.mode == "pfedac":
            server = run_federation(
                federation, hp, config.r, config.T, config.seed, mode="pfedac",
                tie_to_groups=config.tie_policy_to_groups, monitor=monitor,
                on_metrics=writer.write, trace=trace,
            )
        else:
            server = run_baseline(
                config.mode, federation, hp, config.T, config.seed,
                tie_to_groups=config.tie_policy_to_groups, monitor=monitor, on_metrics=writer.write,
            )
        rows = writer.rows

    if trace is not None:
        write_trace(trace, output_dir / "trace.csv")

    summary = {
        "mode": config.mode,
        "time_averages": time_averages(server.metrics_history, config.burn_in, config.T),
        "burn_in": config.burn_in,
        "metrics_rows": rows,
        "pad_proxy": any(m.pad_proxy for m in server.metrics_history),
        "U_omega": radius,
        "federation_hash": federation.content_hash(),
        "config": config.to_dict(),
        "invariants": monitor.report() if monitor.enabled else None,
    }
    write_summary(summary, output_dir / "summary.json")
    if monitor.enabled and monitor.total_violations:
        logger.warning(f"{monitor.total_violations} invariant violation(s) out of {monitor.total_checks} checks")
    logger.info(f"Run complete, results in {output_dir}")
    return summary


def run_sweep(config: RunConfig, config_path: Optional[str] = None) -> Dict[str, Any]:
    """Linear-speedup sweep over config.K_list; writes summary.json with the monotonicity verdict"""
    if not config.K_list:
        raise MissingKey("sweep requires K_list")
    output_dir = prepare_output(config, config_path)
    result = speedup_sweep(config.K_list, config.T, config)
    summary = result.to_dict()
    summary["burn_in"] = config.burn_in
    summary["config"] = config.to_dict()
    write_summary(summary, output_dir / "summary.json")
    return summary


def run_assumption_check(config: RunConfig, config_path: Optional[str] = None) -> AssumptionReport:
    """Diagnostics at the initial policies, written to assumptions.json"""
    output_dir = prepare_output(config, config_path)
    federation = generate_federation(config)
    policies = initial_policies(federation, config.tie_policy_to_groups)
    report = check_assumptions(federation, policies, None, config.L, config.r)
    with open(output_dir / "assumptions.json", "w") as f:
        f.write(report.to_json() + "\n")
    return report


@dataclass
class VerifyReport:
    monitor: InvariantMonitor = field(default_factory=lambda: InvariantMonitor(enabled=True))

    @property
    def passed(self) -> bool:
        return self.monitor.total_violations == 0

    def lines(self) -> List[Dict[str, Any]]:
        return [
            {"check": name, "count": count, "failures": self.monitor.violations.get(name, 0)}
            for name, count in sorted(self.monitor.checks.items())
        ]


def _random_policy(rng: np.random.Generator, federation: Federation, tied: bool) -> SoftmaxPolicy:
    base = SoftmaxPolicy.uniform(federation.num_states, federation.num_actions,
                                 federation.state_groups if tied else None)
    return base.with_logits(rng.standard_normal(base.logits.shape))


def _verify_td_identities(federation: Federation, rng: np.random.Generator, monitor: InvariantMonitor,
                          tied: bool, samples: int) -> None:
    features = federation.features
    gamma = federation.discount
    r = min(2, features.dim)
    for mdp in federation.agents:
        policy = _random_policy(rng, federation, tied)
        for L in (1, 3):
            system = td_system(mdp, policy, features, L)
            monitor.check_upper("td_fixed_point_residual", system.residual, 0.0, slack=1e-10)
            chain = CriticChain.start(federation.initial_dist, rng)
            for _ in range(samples):
                B = random_orthonormal(rng, features.dim, r)
                omega = rng.standard_normal(r)
                trajectory = sample_critic_block(chain, mdp, policy, L)
                sample = td_l_error(trajectory, features, B, omega, gamma)
                residual = td_feature_decomposition_check(
                    sample, features, B, omega, system.z_star, system.A_L, system.b_bar, gamma
                )
                monitor.check_upper("td_feature_fixed_point_form", residual.fixed_point_form, 0.0, slack=1e-12)
                monitor.check_upper("td_feature_markov_noise_form", residual.markov_noise_form, 0.0,
                                    slack=1e-12 + system.residual)
                telescoped = td_l_error_telescoped(trajectory, features, B, omega, gamma)
                monitor.check_upper("td_error_telescoped", abs(telescoped - sample.delta_L), 0.0, slack=1e-12)


def _verify_oracle(federation: Federation, rng: np.random.Generator, monitor: InvariantMonitor,
                   tied: bool, step: float = 1e-5) -> None:
    eta = federation.initial_dist
    for mdp in federation.agents:
        policy = _random_policy(rng, federation, tied)
        quantities = exact_value_and_gradient(mdp, policy, eta)
        grad = quantities.param_grad
        finite_diff = np.zeros_like(policy.logits)
        for index in np.ndindex(*policy.logits.shape):
            bump = np.zeros_like(policy.logits)
            bump[index] = step
            upper = expected_return(mdp, policy.with_logits(policy.logits + bump), eta)
            lower = expected_return(mdp, policy.with_logits(policy.logits - bump), eta)
            finite_diff[index] = (upper - lower) / (2.0 * step)
        monitor.check_upper("gradient_finite_difference", float(np.max(np.abs(grad - finite_diff))), 0.0, slack=1e-6)

        companion = stationary_distribution(companion_kernel(mdp, eta), policy)
        visitation = discounted_visitation(mdp, policy, eta)
        monitor.check_upper("visitation_is_companion_stationary", float(np.max(np.abs(companion - visitation))),
                            0.0, slack=1e-10)

        if federation.features.dim == federation.num_states and np.allclose(
                federation.features.matrix, np.eye(federation.num_states)):
            V, _ = exact_values(mdp, policy)
            z_star = td_system(mdp, policy, federation.features, 2).z_star
            monitor.check_upper("identity_feature_fixed_point_is_value", float(np.max(np.abs(z_star - V))),
                                0.0, slack=1e-9)


def _verify_qr_bounds(rng: np.random.Generator, monitor: InvariantMonitor, trials: int) -> None:
    d, r, K = 8, 3, 4
    for _ in range(trials):
        B = random_orthonormal(rng, d, r)
        scale = rng.uniform(0.01, 0.3)
        proposals = []
        for _ in range(K):
            G = rng.standard_normal((d, r))
            increment = G - B @ (B.T @ G)
            proposals.append(B + scale * increment / np.linalg.norm(increment))
        aggregate = aggregate_and_qr(B, proposals)
        bounds = qr_perturbation(aggregate.R)
        q_sq = aggregate.q_frob ** 2
        monitor.check_upper("R_minus_I", bounds["r_dev"], 2.0 * q_sq)
        monitor.check_upper("R_inv_minus_I", bounds["r_inv_dev"], 4.0 * q_sq)
        monitor.check_upper("R_inv_norm", bounds["r_inv_norm"], 1.0 / (1.0 - 2.0 * q_sq))
        monitor.check_upper("BtB_minus_I", orthonormality_error(aggregate.B_next), 0.0, slack=1e-10)
        monitor.check_upper("QR_reconstruction",
                            float(np.max(np.abs(aggregate.B_next @ aggregate.R - (B + aggregate.Q)))), 0.0,
                            slack=1e-12)


def verify(seed: int = 0, rounds: int = 60, samples: int = 50) -> VerifyReport:
    """
    Identity and invariant suite on seeded fixtures

    Covers the TD feature decomposition, QR perturbation bounds, the head-error
    lower bound, gradient finite differences and the oracle cross-checks, plus
    every per-round bound of a short debug run.

    Args:
        seed: Root seed of the fixtures
        rounds: Rounds of the debug run
        samples: TD samples per agent and block length

    Returns:
        VerifyReport with per-check counts
    """
    report = VerifyReport()
    monitor = report.monitor
    rng = stream(seed, "oracle_check")

    lumpable = make_lumpable_federation(2, 3, 2, 3, 0.9, 1.0, seed)
    random_fed = make_random_federation(5, 2, 2, 0.9, 1.0, seed, feature_dim=4)

    _verify_td_identities(lumpable, rng, monitor, tied=True, samples=samples)
    _verify_td_identities(random_fed, rng, monitor, tied=False, samples=samples)
    _verify_oracle(lumpable, rng, monitor, tied=True)
    _verify_oracle(random_fed, rng, monitor, tied=False)
    _verify_qr_bounds(rng, monitor, trials=samples)

    debug_config = RunConfig(version=1, env="lumpable", K=3, r=2, L=4, T=rounds, gamma=0.9, zeta=0.0,
                             seed=seed, num_groups=2, states_per_group=3, log_every=rounds,
                             tie_policy_to_groups=True)
    radius = resolve_radius(debug_config, lumpable)
    zeta = 0.5 * max_safe_zeta(debug_config.L, debug_config.gamma, debug_config.U_r, radius)
    debug_config = debug_config.with_overrides(zeta=zeta)
    hp = Hyperparams.from_config(debug_config, radius)
    run_federation(lumpable, hp, 2, rounds, seed, mode="pfedac", tie_to_groups=True, monitor=monitor)

    logger.info(f"verify: {monitor.total_checks} checks, {monitor.total_violations} failures")
    return report
