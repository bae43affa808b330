"""Single-binary CLI over the toolkit.

Exit codes are uniform across subcommands: 0 for success (or PASS),
1 for a domain failure (FAIL verdict, findings present, assertion of an
empty diff violated, loop rejected), 2 for usage or configuration
errors. All subcommand output is machine-parseable JSON except the
`serve` log stream; optional figures land in files, never on stdout.

Option values resolve flag > GYMSMITH_* env var > --config file > default.
"""

from __future__ import annotations

import json
import logging
import shlex
import sys
import tempfile
from pathlib import Path

import click

from . import __version__
from .agreement_verifier import CandidateTuple, VerifierConfig, render_review, verify
from .diff_engine import DEFAULT_MASK_PATTERNS, VolatileMask, compute_diff
from .gspo_kernel import (
    GroupConfig,
    GspoError,
    RolloutStat,
    gradient_check,
    gradient_sweep,
    gspo_objective,
)
from .loop_orchestrator import (
    DEFAULT_MAX_ROUNDS,
    Accepted,
    AgentInvocation,
    LocalSandboxFactory,
    TaskSpec,
    emit_bundle,
    run_loop,
)
from .pattern_scanner import scan
from .reward_harness import EnvironmentHandle
from .session_store import DEFAULT_TTL_SECONDS, SessionStore
from .state_api import DEFAULT_HOST, DEFAULT_PORT, GC_INTERVAL_SECONDS
from .state_document import StateValidationError, parse_state
from .traj_slicer import (
    DEFAULT_SLICE_INTERVAL,
    default_token_counter,
    slice_to_wire,
    slice_trajectory,
    trajectory_from_wire,
)

CONTEXT_SETTINGS = {"auto_envvar_prefix": "GYMSMITH"}


def _echo_json(payload) -> None:
    click.echo(json.dumps(payload, ensure_ascii=False))


def _load_state_file(path: str):
    try:
        return parse_state(Path(path).read_bytes())
    except (OSError, StateValidationError) as exc:
        raise click.UsageError(f"cannot load state from {path}: {exc}")


@click.group(context_settings=CONTEXT_SETTINGS)
@click.version_option(__version__)
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON file supplying option defaults per subcommand.",
)
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Verifiable-environment substrate and verification toolkit."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    if config_path:
        try:
            defaults = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"bad config file {config_path}: {exc}")
        if not isinstance(defaults, dict):
            raise click.UsageError("config file must hold a JSON object")
        ctx.default_map = defaults


@main.command()
@click.option("--host", default=DEFAULT_HOST, show_default=True)
@click.option("--port", default=DEFAULT_PORT, show_default=True, type=int)
@click.option("--ttl", default=DEFAULT_TTL_SECONDS, show_default=True, type=float,
              help="Session idle lifetime in seconds.")
@click.option("--mask", "masks", multiple=True,
              help="Volatile key-path pattern (repeatable); defaults to *.lastViewedAt.")
@click.option("--seed-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with the default seed state (default: empty object).")
@click.option("--upload-quota", default=64 * 1024 * 1024, show_default=True, type=int)
@click.option("--gc-interval", default=GC_INTERVAL_SECONDS, show_default=True, type=float)
def serve(host, port, ttl, masks, seed_file, upload_quota, gc_interval):
    """Run the four-endpoint state service until interrupted."""
    from .state_api import serve as run_server

    seed = _load_state_file(seed_file) if seed_file else {}
    try:
        mask = VolatileMask.from_texts(list(masks) or list(DEFAULT_MASK_PATTERNS))
    except ValueError as exc:
        raise click.UsageError(f"bad mask pattern: {exc}")
    store = SessionStore(seed_state=seed, ttl=ttl, upload_quota=upload_quota)
    run_server(store, mask, host=host, port=port, gc_interval=gc_interval)


@main.command()
@click.argument("initial_setup", type=click.Path(exists=True, dir_okay=False))
@click.argument("golden_patch", type=click.Path(exists=True, dir_okay=False))
@click.argument("reward", type=click.Path(exists=True, dir_okay=False))
@click.option("--task-ref", default="adhoc_tuple_000", show_default=True)
@click.option("--workdir", type=click.Path(file_okay=False), default=None,
              help="Base directory for the two sandbox environments.")
@click.option("--timeout-setup", default=600.0, show_default=True, type=float)
@click.option("--timeout-reward", default=300.0, show_default=True, type=float)
@click.option("--init-epsilon", default=0.0, show_default=True, type=float)
@click.option("--golden-tolerance", default=1e-9, show_default=True, type=float)
def verify_cmd(initial_setup, golden_patch, reward, task_ref, workdir,
               timeout_setup, timeout_reward, init_epsilon, golden_tolerance):
    """Evaluate the five agreement conditions; print the REVIEW document."""
    base = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="gymsmith-verify-"))
    env_init_root = base / "env_init"
    env_gold_root = base / "env_gold"
    env_init_root.mkdir(parents=True, exist_ok=True)
    env_gold_root.mkdir(parents=True, exist_ok=True)
    config = VerifierConfig(
        golden_tolerance=golden_tolerance,
        init_epsilon=init_epsilon,
        setup_timeout=timeout_setup,
        reward_timeout=timeout_reward,
    )
    candidate = CandidateTuple(
        task_ref, Path(initial_setup), Path(golden_patch), Path(reward)
    )
    report = verify(
        candidate,
        EnvironmentHandle(root=env_init_root),
        EnvironmentHandle(root=env_gold_root),
        config,
    )
    click.echo(render_review(report), nl=False)
    sys.exit(0 if report.passed else 1)


main.add_command(verify_cmd, name="verify")


@main.command(name="scan")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def scan_cmd(path):
    """Scan a reward script; one JSON line per finding; exit 1 if any."""
    findings = scan(Path(path).read_text())
    for finding in findings:
        _echo_json(finding.to_wire())
    sys.exit(1 if findings else 0)


@main.command(name="diff")
@click.argument("file_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("file_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--mask", "masks", multiple=True,
              help="Volatile key-path pattern (repeatable).")
@click.option("--assert-empty", is_flag=True,
              help="Exit 1 when the diff is non-empty.")
def diff_cmd(file_a, file_b, masks, assert_empty):
    """Structural diff of two JSON state files as a flat key-path map."""
    state_a = _load_state_file(file_a)
    state_b = _load_state_file(file_b)
    try:
        mask = VolatileMask.from_texts(list(masks))
    except ValueError as exc:
        raise click.UsageError(f"bad mask pattern: {exc}")
    report = compute_diff(state_a, state_b, mask)
    _echo_json(report.to_wire())
    sys.exit(1 if assert_empty and not report.is_empty() else 0)


@main.command(name="orchestrate")
@click.option("--task-file", type=click.Path(exists=True, dir_okay=False), required=True,
              help="JSON task spec: task_id, instruction, context, difficulty, metadata.")
@click.option("--gen-cmd", required=True,
              help="Generator command template ({workdir}, {round} substituted).")
@click.option("--disc-cmd", required=True,
              help="Discriminator command template ({workdir}, {round} substituted).")
@click.option("--rounds", default=DEFAULT_MAX_ROUNDS, show_default=True, type=int)
@click.option("--out", "out_root", type=click.Path(file_okay=False), default="output",
              show_default=True)
@click.option("--agent-timeout", default=300.0, show_default=True, type=float)
@click.option("--timeout-setup", default=600.0, show_default=True, type=float)
@click.option("--timeout-reward", default=300.0, show_default=True, type=float)
def orchestrate_cmd(task_file, gen_cmd, disc_cmd, rounds, out_root,
                    agent_timeout, timeout_setup, timeout_reward):
    """Drive the generator/discriminator loop; emit a bundle on acceptance."""
    try:
        task = TaskSpec.from_config(json.loads(Path(task_file).read_text()))
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"bad task file: {exc}")
    out_root = Path(out_root)
    generator = AgentInvocation("generator", tuple(shlex.split(gen_cmd)), agent_timeout)
    discriminator = AgentInvocation(
        "discriminator", tuple(shlex.split(disc_cmd)), agent_timeout
    )
    outcome = run_loop(
        task,
        generator,
        discriminator,
        LocalSandboxFactory(out_root / "envs"),
        max_rounds=rounds,
        out_root=out_root,
        verifier_config=VerifierConfig(
            setup_timeout=timeout_setup, reward_timeout=timeout_reward
        ),
    )
    if isinstance(outcome, Accepted):
        bundle = emit_bundle(outcome, out_root / "final")
        _echo_json(
            {
                "outcome": "accepted",
                "task_id": task.task_id,
                "rounds_used": outcome.rounds_used,
                "bundle": str(bundle),
            }
        )
        sys.exit(0)
    _echo_json(
        {
            "outcome": "rejected",
            "task_id": task.task_id,
            "rounds_used": outcome.rounds_used,
            "reason": outcome.reason,
        }
    )
    sys.exit(1)


@main.command(name="slice")
@click.argument("trajectory_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--interval", default=DEFAULT_SLICE_INTERVAL, show_default=True, type=int)
@click.option("--budget", default=144_000, show_default=True, type=int,
              help="Context token budget per slice.")
@click.option("--image-tokens", default=1024, show_default=True, type=int,
              help="Token cost charged per image by the built-in counter.")
@click.option("--figure-dir", type=click.Path(file_okay=False), default=None,
              help="Also render a slice-occupancy figure into this directory.")
def slice_cmd(trajectory_file, interval, budget, image_tokens, figure_dir):
    """Slice a rollout into training samples; one JSON line per slice."""
    try:
        doc = json.loads(Path(trajectory_file).read_text())
        trajectory = trajectory_from_wire(doc)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"bad trajectory file: {exc}")
    counter = default_token_counter(image_tokens=image_tokens)
    try:
        slices = slice_trajectory(trajectory, interval=interval, budget=budget,
                                  counter=counter)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    for s in slices:
        _echo_json(slice_to_wire(s))
    if figure_dir:
        from .figures import save_slice_budget_figure

        out = Path(figure_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_slice_budget_figure(slices, counter, budget, out / "slice_budget.png")
    sys.exit(0)


def _parse_group(doc: dict, line_no: int) -> list[RolloutStat]:
    rollouts = doc.get("rollouts")
    if not isinstance(rollouts, list) or len(rollouts) < 2:
        raise click.UsageError(f"line {line_no}: 'rollouts' must list >= 2 entries")
    stats = []
    for entry in rollouts:
        stats.append(
            RolloutStat(
                reward=float(entry["reward"]),
                length=int(entry["length"]),
                logprob_new=float(entry["logprob_new"]),
                logprob_old=float(entry["logprob_old"]),
                kl_estimate=(
                    float(entry["kl_estimate"]) if "kl_estimate" in entry else None
                ),
            )
        )
    return stats


@main.command(name="gspo-check")
@click.argument("groups_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--clip", default=0.2, show_default=True, type=float)
@click.option("--beta", default=0.0, show_default=True, type=float,
              help="KL penalty coefficient.")
@click.option("--divide-by-std", is_flag=True)
@click.option("--delta", default=1e-5, show_default=True, type=float,
              help="Finite-difference perturbation for the gradient check.")
@click.option("--figure-dir", type=click.Path(file_okay=False), default=None,
              help="Also render diagnostics figures into this directory.")
def gspo_check_cmd(groups_file, clip, beta, divide_by_std, delta, figure_dir):
    """Evaluate rollout groups (JSON lines) and verify gradients."""
    lines = Path(groups_file).read_text().splitlines()
    results = []
    sweeps: dict[str, list[tuple[float, float]]] = {}
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            group = _parse_group(doc, line_no)
            cfg = GroupConfig(
                group_size=len(group),
                clip=clip,
                kl_coefficient=beta,
                divide_by_std=divide_by_std,
            )
            result = gspo_objective(group, cfg)
            error = gradient_check(group, cfg, delta=delta)
        except (GspoError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"line {line_no}: {exc}")
        results.append(result)
        if figure_dir:
            sweeps[f"group {line_no}"] = gradient_sweep(
                group, cfg, [1e-3, 1e-4, 1e-5, 1e-6, 1e-7]
            )
        _echo_json(
            {
                "group": line_no,
                "value": result.value,
                "per_rollout": [
                    {
                        "advantage": d.advantage,
                        "ratio": d.ratio,
                        "clipped": d.clipped,
                    }
                    for d in result.per_rollout
                ],
                "gradient_check_max_rel_error": error,
            }
        )
    if figure_dir and results:
        from .figures import save_gradient_sweep_figure, save_group_diagnostics_figure

        out = Path(figure_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_group_diagnostics_figure(results, clip, out / "gspo_diagnostics.png")
        save_gradient_sweep_figure(sweeps, out / "gspo_gradient_sweep.png")
    sys.exit(0)


@main.command(name="gc")
@click.option("--sessions-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON list of {sid, idle_seconds} records to load before collecting.")
@click.option("--ttl", default=DEFAULT_TTL_SECONDS, show_default=True, type=float)
def gc_cmd(sessions_file, ttl):
    """Collect expired sessions from a session fixture (the live service
    collects automatically; this exercises the policy standalone)."""
    now = 1_000_000.0
    store = SessionStore(ttl=ttl, clock=lambda: now)
    if sessions_file:
        try:
            records = json.loads(Path(sessions_file).read_text())
            for record in records:
                store.get_or_create(
                    record["sid"], now=now - float(record["idle_seconds"])
                )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"bad sessions file: {exc}")
    removed = store.gc_expired(now=now)
    _echo_json({"removed": removed, "remaining": len(store)})
    sys.exit(0)


if __name__ == "__main__":
    main()
