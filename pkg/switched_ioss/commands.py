"""Sub-command implementations.

Each ``cmd_*`` loads a family, runs one stage of the pipeline, writes its
artifacts into ``out`` and returns a process exit code: 0 on success, 1 when
a certificate is infeasible or a check fails. Load and parse errors are
raised and mapped to exit code 2 by ``__main__``.
"""
from __future__ import annotations
import datetime as _dt
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .analytics import envelope_curves_frame, estimator_curves_frame, generate_statistics, run_row, summarize_runs
from .conditions import (
    DwellCertificate,
    EstimatorParams,
    certify,
    eval_estimator_conditions,
    find_estimator_params,
)
from .config import (
    BUILTIN_TAG,
    DEFAULT_HORIZON,
    DEFAULT_SIGNAL_RESOLUTION,
    DEFAULT_STEP,
    EXAMPLE_ESTIMATOR_PARAMS,
    EXAMPLE_INPUT_RANGE,
    EXAMPLE_SEEDS,
    EXAMPLE_STATE_BOUND,
    EXAMPLE_X0_RANGE,
    EXAMPLE_Z0,
    PROBE_SAMPLES,
)
from .envelope import (
    SlackReport,
    build_estimation_envelope,
    build_ioss_envelope,
    check_estimator_bounds,
    check_estimator_iss,
    check_ioss_inequality,
    check_lyapunov_chain,
    check_psi_bounds,
)
from .errors import DivergenceError, EmptyTrajectoryError, SignalDomainError, SignalError
from .family import SystemFamily, sample_lyapunov_conditions
from .inputs import UniformPiecewiseInput, parse_input_spec
from .loader import resolve_family
from .signals import SwitchingSignal, generate_signal, validate_admissible, validate_stabilizing
from .sim import co_simulate, integrate_switched
from .utils import ensure_dir, save_json, to_csv, write_text_log

log = logging.getLogger("switched_ioss")


# ------------------------------ helpers ------------------------------


def parse_floats(text: str, n: Optional[int] = None, what: str = "value") -> List[float]:
    """Comma-separated floats, e.g. ``"0.5,-1"``."""
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise SignalError(f"bad {what} list {text!r}") from None
    if n is not None and len(vals) != n:
        raise SignalError(f"{what} needs {n} entries, got {len(vals)}")
    return vals


def _source(builtin: Optional[str], config: Optional[os.PathLike | str]) -> Dict:
    return {"builtin": builtin, "config": str(config) if config is not None else None}


def _write_run_log(out: Path, command: str, params: Dict) -> None:
    stamp = _dt.datetime.now().isoformat(timespec="seconds")
    save_json({"timestamp": stamp, "command": command, "params": params}, out / "run_log.json")
    lines = [f"[{stamp}] {command}"] + [f"  {k}: {v}" for k, v in sorted(params.items())]
    write_text_log(lines, out / "run_log.txt")


def _write_manifest(out: Path, command: str, params: Dict, artifacts: Iterable[Path]) -> Path:
    manifest = {
        "command": command,
        "params": params,
        "artifacts": sorted(Path(a).name for a in artifacts),
    }
    return save_json(manifest, out / "manifest.json")


def _seed_streams(seed: int) -> Tuple[int, int, int]:
    """Independent seeds for the signal, the initial state and the input."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(int(c.generate_state(1)[0]) for c in children)  # type: ignore[return-value]


def _resolve_params(
    family: SystemFamily, cert: DwellCertificate, params: str | Sequence[float], margin: float
) -> Optional[EstimatorParams]:
    if isinstance(params, str):
        if params == "auto":
            return find_estimator_params(family, cert, margin=margin)
        params = parse_floats(params, 4, "--params")
    return eval_estimator_conditions(family, cert, *params, margin=margin)


def _print_certificate(cert: DwellCertificate) -> None:
    print(f"dwell condition at (delta_check={cert.delta_check:g}, Delta_hat={cert.Delta_hat:g}): {cert.lhs9:.4f}")
    print(f"verdict: {'feasible' if cert.feasible else 'infeasible'}")
    if cert.reason:
        print(f"reason: {cert.reason}")
    print(f"Delta >= 2*delta (Prop. 1 necessary condition fails): {cert.prop1_violated}")
    for name, flag in cert.sufficient_flags.items():
        print(f"sufficient condition ({name}): {flag}")


# ------------------------------ check ------------------------------


def cmd_check(
    *,
    builtin: Optional[str] = None,
    config: Optional[os.PathLike | str] = None,
    out: Optional[os.PathLike | str] = None,
    delta_check: Optional[float] = None,
    Delta_hat: Optional[float] = None,
    margin: float = 0.0,
    probe_samples: int = PROBE_SAMPLES,
    seed: int = 0,
) -> int:
    """Certify a family; exit 0 iff the dwell condition holds."""
    family = resolve_family(builtin, config)
    cert = certify(family, delta_check, Delta_hat, margin)
    _print_certificate(cert)
    probe = sample_lyapunov_conditions(family, n=probe_samples, seed=seed) if probe_samples > 0 else None
    if probe is not None:
        print(f"sampled Lyapunov conditions on {probe.samples} points: {'ok' if probe.passed else 'VIOLATED'}")

    if out is not None:
        out_dir = ensure_dir(out)
        params = {**_source(builtin, config), "margin": margin, "delta_check": delta_check, "Delta_hat": Delta_hat}
        payload = cert.to_dict()
        payload["family"] = family.name
        if probe is not None:
            payload["lyapunov_probe"] = probe.to_dict()
        artifacts = [save_json(payload, out_dir / "certificate.json")]
        artifacts.append(_write_manifest(out_dir, "check", params, artifacts))
        _write_run_log(out_dir, "check", params)
    return 0 if cert.feasible else 1


# ------------------------------ gen ------------------------------


def cmd_gen(
    *,
    builtin: Optional[str] = None,
    config: Optional[os.PathLike | str] = None,
    out: os.PathLike | str = ".",
    n: int = 1,
    horizon: float = DEFAULT_HORIZON,
    seed: int = 0,
    delta_check: Optional[float] = None,
    Delta_hat: Optional[float] = None,
    margin: float = 0.0,
) -> int:
    """Write ``n`` random stabilizing signals ``signal_<k>.json`` drawn from seeds ``seed + k``."""
    family = resolve_family(builtin, config)
    cert = certify(family, delta_check, Delta_hat, margin)
    out_dir = ensure_dir(out)
    artifacts = [save_json(cert.to_dict(), out_dir / "certificate.json")]
    if not cert.feasible:
        log.error("Certificate infeasible: %s", cert.reason)
        return 1

    failed: List[int] = []
    for k in range(n):
        signal = generate_signal(family, cert, horizon, seed + k)
        report = validate_stabilizing(signal, family, cert)
        if not report.passed:
            failed.append(k)
            log.warning("signal_%d fails validation: %s", k, report.reasons())
        artifacts.append(save_json(signal.to_dict(), out_dir / f"signal_{k}.json"))

    params = {**_source(builtin, config), "n": n, "horizon": horizon, "seed": seed, "margin": margin}
    artifacts.append(_write_manifest(out_dir, "gen", params, artifacts))
    _write_run_log(out_dir, "gen", params)
    return 1 if failed else 0


# ------------------------------ sim ------------------------------


def _load_or_generate_signal(
    family: SystemFamily, cert: DwellCertificate, signal_path, horizon: Optional[float], seed: int,
    resolution: float = DEFAULT_SIGNAL_RESOLUTION,
) -> Optional[SwitchingSignal]:
    if signal_path is not None:
        signal = SwitchingSignal.from_json(Path(signal_path).read_text())
        if horizon is None or horizon == signal.horizon:
            return signal
        if horizon > signal.horizon:
            raise SignalDomainError(f"horizon {horizon} exceeds the signal horizon {signal.horizon}")
        return signal.truncate(horizon)
    if not cert.feasible:
        log.error("Certificate infeasible (%s): cannot draw a signal; pass --signal", cert.reason)
        return None
    return generate_signal(family, cert, DEFAULT_HORIZON if horizon is None else horizon, seed, resolution)


def _initial_state(x0: Optional[str], family: SystemFamily, seed: int) -> np.ndarray:
    if x0 is not None:
        return np.array(parse_floats(x0, family.state_dim, "--x0"))
    return np.random.default_rng(seed).uniform(*EXAMPLE_X0_RANGE, size=family.state_dim)


def cmd_sim(
    *,
    builtin: Optional[str] = None,
    config: Optional[os.PathLike | str] = None,
    out: os.PathLike | str = ".",
    signal: Optional[os.PathLike | str] = None,
    x0: Optional[str] = None,
    input_spec: Optional[str] = None,
    horizon: Optional[float] = None,
    step: float = DEFAULT_STEP,
    seed: int = 0,
    delta_check: Optional[float] = None,
    Delta_hat: Optional[float] = None,
    margin: float = 0.0,
) -> int:
    """Simulate one run to ``run_0.csv``; the stability inequality is checked when the signal is stabilizing."""
    family = resolve_family(builtin, config)
    cert = certify(family, delta_check, Delta_hat, margin)
    sig_seed, x_seed, v_seed = _seed_streams(seed)
    sig = _load_or_generate_signal(family, cert, signal, horizon, sig_seed, step)
    if sig is None:
        return 1
    admissible = validate_admissible(sig, family)
    if not admissible.passed:
        log.warning("Signal is not admissible: %s", admissible.reasons())
    if input_spec:
        inp = parse_input_spec(input_spec, seed=v_seed)
    else:
        inp = UniformPiecewiseInput(*EXAMPLE_INPUT_RANGE, seed=v_seed)
    x_init = _initial_state(x0, family, x_seed)

    out_dir = ensure_dir(out)
    try:
        traj = integrate_switched(family, sig, inp, x_init, step, sig.horizon)
    except DivergenceError as e:
        log.error("Run diverged: %s", e)
        return 1

    artifacts = [
        save_json(sig.to_dict(), out_dir / "signal_0.json"),
        to_csv(traj.to_frame(), out_dir / "run_0.csv"),
    ]
    summary: Dict = {"admissible": admissible.to_dict(), "x0": x_init, "input": inp.to_dict()}
    passed = True
    if cert.feasible and validate_stabilizing(sig, family, cert).passed:
        env = build_ioss_envelope(family, cert)
        rep = check_ioss_inequality(traj, family, env)
        summary["envelope"] = env.to_dict()
        summary["ioss"] = rep.to_dict()
        passed = rep.passed
        artifacts.append(to_csv(envelope_curves_frame(traj, env), out_dir / "envelope_0.csv"))
    else:
        log.info("Signal is not in the stabilizing class; skipping the stability check")
    summary["passed"] = passed
    artifacts.append(save_json(summary, out_dir / "summary.json"))

    params = {
        **_source(builtin, config), "signal": str(signal) if signal else None, "x0": x0,
        "input": input_spec, "horizon": sig.horizon, "step": step, "seed": seed,
    }
    artifacts.append(_write_manifest(out_dir, "sim", params, artifacts))
    _write_run_log(out_dir, "sim", params)
    return 0 if passed else 1


# ------------------------------ estimate ------------------------------


def cmd_estimate(
    *,
    builtin: Optional[str] = None,
    config: Optional[os.PathLike | str] = None,
    out: os.PathLike | str = ".",
    params: str | Sequence[float] = "auto",
    signal: Optional[os.PathLike | str] = None,
    x0: Optional[str] = None,
    z0: float = EXAMPLE_Z0,
    w0: Optional[float] = None,
    input_spec: Optional[str] = None,
    horizon: Optional[float] = None,
    step: float = DEFAULT_STEP,
    seed: int = 0,
    delta_check: Optional[float] = None,
    Delta_hat: Optional[float] = None,
    margin: float = 0.0,
) -> int:
    """Select estimator parameters, co-simulate plant and estimators, and check the estimation bounds."""
    family = resolve_family(builtin, config)
    cert = certify(family, delta_check, Delta_hat, margin)
    out_dir = ensure_dir(out)
    artifacts = [save_json(cert.to_dict(), out_dir / "certificate.json")]
    if not cert.feasible:
        log.error("Certificate infeasible: %s", cert.reason)
        return 1
    est = _resolve_params(family, cert, params, margin)
    if est is None:
        log.error("No estimator parameters found")
        return 1
    artifacts.append(save_json(est.to_dict(), out_dir / "params.json"))
    if not est.accepted:
        log.error("Estimator parameters rejected: %s", [str(v) for v in est.violations])
        return 1
    print("estimator conditions (11), (12), (14), (15): " + ", ".join(f"{v:.4f}" for v in est.scalar_values()))

    sig_seed, x_seed, v_seed = _seed_streams(seed)
    sig = _load_or_generate_signal(family, cert, signal, horizon, sig_seed, step)
    if input_spec:
        inp = parse_input_spec(input_spec, seed=v_seed)
    else:
        inp = UniformPiecewiseInput(*EXAMPLE_INPUT_RANGE, seed=v_seed)
    x_init = _initial_state(x0, family, x_seed)
    try:
        traj = co_simulate(family, cert, est, sig, inp, x_init, z0, w0, step, sig.horizon)
    except DivergenceError as e:
        log.error("Run diverged: %s", e)
        return 1

    env = build_estimation_envelope(family, cert, est)
    bounds = check_estimator_bounds(traj, env)
    iss = check_estimator_iss(traj.times, traj.z, traj.inputs, traj.outputs, est, family.lyapunov)
    artifacts += [
        save_json(sig.to_dict(), out_dir / "signal_0.json"),
        to_csv(traj.to_frame(), out_dir / "run_0.csv"),
        to_csv(estimator_curves_frame(traj, env), out_dir / "estimator_0.csv"),
    ]
    passed = bounds.passed and iss.passed
    summary = {
        "passed": passed,
        "envelope": env.to_dict(),
        "params": est.to_dict(),
        "bounds": bounds.to_dict(),
        "estimator_iss": iss.to_dict(),
    }
    artifacts.append(save_json(summary, out_dir / "summary.json"))
    run_params = {
        **_source(builtin, config), "params": params if isinstance(params, str) else list(params),
        "signal": str(signal) if signal else None, "x0": x0, "z0": z0, "w0": w0,
        "input": input_spec, "horizon": sig.horizon, "step": step, "seed": seed, "margin": margin,
    }
    artifacts.append(_write_manifest(out_dir, "estimate", run_params, artifacts))
    _write_run_log(out_dir, "estimate", run_params)
    return 0 if passed else 1


# ------------------------------ repro ------------------------------


def _experiment_run(job: Dict) -> Dict:
    """One seeded run of the numerical experiment; executed in worker processes."""
    family = resolve_family(job["builtin"], job["config"])
    cert = DwellCertificate.from_dict(job["certificate"])
    est = eval_estimator_conditions(family, cert, *job["params"])
    sig_seed, x_seed, v_seed = _seed_streams(job["seed"])
    signal = generate_signal(family, cert, job["horizon"], sig_seed, job["step"])
    x0 = np.random.default_rng(x_seed).uniform(*EXAMPLE_X0_RANGE, size=family.state_dim)
    inp = UniformPiecewiseInput(*EXAMPLE_INPUT_RANGE, seed=v_seed)
    result: Dict = {"run": job["run"], "seed": job["seed"], "signal": signal.to_dict()}
    try:
        traj = co_simulate(family, cert, est, signal, inp, x0, job["z0"], None, job["step"], job["horizon"])
    except DivergenceError as e:
        result.update(diverged=str(e), passed=False, row={"run": job["run"], "seed": job["seed"], "diverged": True})
        return result

    env = build_estimation_envelope(family, cert, est)
    psi = check_psi_bounds(signal, family, env, traj.times)
    bounds = check_estimator_bounds(traj, env)
    reports: List[SlackReport] = [
        check_ioss_inequality(traj, family, env),
        check_ioss_inequality(traj, family, env, include_outputs=False),
        check_lyapunov_chain(traj, signal, family),
        psi.psi1,
        psi.psi2,
        *bounds.checks.values(),
        check_estimator_iss(traj.times, traj.z, traj.inputs, traj.outputs, est, family.lyapunov),
    ]
    # the output-free form is reported only
    gating = [r for r in reports if r.name != "iss"]
    bounded = bool(traj.state_norm().max() < EXAMPLE_STATE_BOUND)
    row = run_row(job["run"], traj, reports, job["seed"])
    row["bounded"] = bounded
    row["diverged"] = False
    result.update(
        row=row,
        passed=bounded and all(r.passed for r in gating),
        failed_checks=[r.name for r in gating if not r.passed] + ([] if bounded else ["bounded"]),
        frame=traj.to_frame(),
        curves=envelope_curves_frame(traj, env),
    )
    return result


def cmd_repro_example(
    *,
    out: os.PathLike | str = ".",
    seeds: Sequence[int] = tuple(EXAMPLE_SEEDS),
    horizon: float = DEFAULT_HORIZON,
    step: float = DEFAULT_STEP,
    z0: float = EXAMPLE_Z0,
    params: Sequence[float] = EXAMPLE_ESTIMATOR_PARAMS,
    jobs: int = 1,
) -> int:
    """
    Numerical experiment on the builtin family: one stabilizing signal,
    initial state in ``[-1, 1]^2`` and input in ``[-0.5, 0.5]`` per seed, each
    co-simulated with both estimators from ``z0`` and checked against every
    envelope.

    Writes ``run_<k>.csv``, ``signal_<k>.json``, ``envelope_<k>.csv``,
    ``summary.csv``, ``summary.json``, ``stats.json`` and ``certificate.json``.
    """
    if not horizon > 0:
        raise EmptyTrajectoryError(f"horizon must be positive, got {horizon}")
    family = resolve_family(BUILTIN_TAG, None)
    cert = certify(family)
    out_dir = ensure_dir(out)
    artifacts = [save_json(cert.to_dict(), out_dir / "certificate.json")]
    if not cert.feasible:
        log.error("Certificate infeasible: %s", cert.reason)
        return 1
    est = eval_estimator_conditions(family, cert, *params)
    if not est.accepted:
        log.error("Estimator parameters rejected: %s", [str(v) for v in est.violations])
        return 1

    jobs_list = [
        {
            "run": k, "seed": int(s), "builtin": BUILTIN_TAG, "config": None,
            "certificate": cert.to_dict(), "params": list(params),
            "horizon": horizon, "step": step, "z0": z0,
        }
        for k, s in enumerate(seeds)
    ]
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(tqdm(pool.map(_experiment_run, jobs_list), total=len(jobs_list), desc="Runs"))
    else:
        results = [_experiment_run(j) for j in tqdm(jobs_list, desc="Runs", disable=len(jobs_list) < 2)]

    failed: List[Dict] = []
    for res in results:
        k = res["run"]
        artifacts.append(save_json(res["signal"], out_dir / f"signal_{k}.json"))
        if "frame" in res:
            artifacts.append(to_csv(res["frame"], out_dir / f"run_{k}.csv"))
            artifacts.append(to_csv(res["curves"], out_dir / f"envelope_{k}.csv"))
        if not res["passed"]:
            failed.append({"run": k, "seed": res["seed"], "checks": res.get("failed_checks", ["diverged"])})
            log.error("Run %d (seed %d) failed: %s", k, res["seed"], failed[-1]["checks"])

    summary_df = summarize_runs([r["row"] for r in results])
    artifacts.append(to_csv(summary_df, out_dir / "summary.csv"))
    artifacts.append(generate_statistics(summary_df, out_dir))
    env = build_estimation_envelope(family, cert, est)
    summary = {
        "passed": not failed,
        "failed_runs": failed,
        "n_runs": len(results),
        "certificate": cert.to_dict(),
        "params": est.to_dict(),
        "envelope": env.to_dict(),
    }
    artifacts.append(save_json(summary, out_dir / "summary.json"))
    run_params = {
        "builtin": BUILTIN_TAG, "seeds": [int(s) for s in seeds], "horizon": horizon,
        "step": step, "z0": z0, "params": list(params), "jobs": jobs,
    }
    artifacts.append(_write_manifest(out_dir, "repro-example", run_params, artifacts))
    _write_run_log(out_dir, "repro-example", run_params)
    log.info("Experiment: %d/%d runs passed", len(results) - len(failed), len(results))
    return 0 if not failed else 1
